"""Case studies (event-data-recorder bus, MMU, paper database), their host
drivers and the benchmark harness."""

from .bench import BenchReport, run_bench
from .box import Box, BoxError, unbox
from .cases import (
    MMUFault,
    bus_read,
    bus_write,
    corpus_names,
    corpus_text,
    get_case,
    load,
    mmu_translate,
)

__all__ = [
    "BenchReport", "run_bench", "Box", "BoxError", "unbox", "MMUFault", "bus_read", "bus_write",
    "corpus_names", "corpus_text", "get_case", "load", "mmu_translate",
]
