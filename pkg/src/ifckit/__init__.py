"""Floating-label information-flow control: runtime, analyzer, erasure-based
noninterference checking and case-study workbench."""

__version__ = "0.1.0"
