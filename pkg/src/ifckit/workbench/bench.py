"""Wall-clock comparison of the enforcement modes on one case study.

Modes run sequentially on one thread.  The iterations are split into
blocks and the modes take turns block by block, so slow drift of the host
(frequency scaling, neighbours) is spread evenly over the modes.  The mode
that goes first rotates every round.  The garbage collector is paused while
a block runs.
"""

from __future__ import annotations

import csv
import gc
import io
import json
import platform
import sys
import time
from dataclasses import dataclass, field

from .. import interp
from ..ifc_runtime import DYNAMIC, Ghost, GhostRefused, IfcViolation, StaticResidual
from ..values import strip_tags
from .cases import get_case

MODE_NAMES = {"d": "dynamic", "s": "static", "g": "ghost"}
DEFAULT_BLOCK = 2000
MIN_ROUNDS = 50


class BenchUsageError(ValueError):
    pass


@dataclass
class ModeTiming:
    mode: str
    iterations: int
    total_ns: int
    errors: int = 0

    @property
    def ns_per_op(self) -> float:
        return self.total_ns / self.iterations


@dataclass
class BenchReport:
    case: str
    seed: int
    timings: dict[str, ModeTiming]
    environment: dict = field(default_factory=dict)

    def speedup(self, mode: str) -> float | None:
        """``1 - time(mode) / time(dynamic)``; None without a dynamic run."""
        d = self.timings.get("dynamic")
        m = self.timings.get(mode)
        if d is None or m is None:
            return None
        return 1 - m.total_ns / d.total_ns

    def rows(self) -> list[dict]:
        out = []
        for name, t in self.timings.items():
            s = self.speedup(name)
            out.append({
                "case": self.case,
                "mode": name,
                "iters": t.iterations,
                "total_ns": t.total_ns,
                "ns_per_op": round(t.ns_per_op, 1),
                "speedup_vs_dynamic": None if s is None else round(s, 4),
            })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["case", "mode", "iters", "total_ns", "ns_per_op", "speedup_vs_dynamic"],
                           lineterminator="\n")
        w.writeheader()
        for row in self.rows():
            w.writerow({k: "" if v is None else v for k, v in row.items()})
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"case": self.case, "seed": self.seed, "results": self.rows(), "environment": self.environment}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def parse_modes(text: str) -> list[str]:
    modes = []
    for part in text.split(","):
        part = part.strip().lower()
        key = part[:1] if part else ""
        if key not in MODE_NAMES or part not in (key, MODE_NAMES[key]):
            raise BenchUsageError(f"unknown mode {part!r}; use d, s, g")
        if MODE_NAMES[key] not in modes:
            modes.append(MODE_NAMES[key])
    return modes


def _mode_object(name: str, cert):
    if name == "dynamic":
        return DYNAMIC
    if name == "static":
        return StaticResidual(cert)
    return Ghost(cert)


def run_bench(case: str, modes=("dynamic", "static", "ghost"), iterations: int | None = None, seed: int = 0,
              *, warmup: int | None = None, block: int | None = None) -> BenchReport:
    """Time ``iterations`` runs of the case entry under each mode.

    ``block`` defaults to :data:`DEFAULT_BLOCK`, shrunk so that short runs
    still alternate modes at least :data:`MIN_ROUNDS` times.

    Raises :class:`GhostRefused` (naming the sites) when ghost is requested
    for a program whose certificate is not fully proved.
    """
    if isinstance(modes, str):
        modes = parse_modes(modes)
    modes = [MODE_NAMES.get(m, m) for m in modes]
    for m in modes:
        if m not in MODE_NAMES.values():
            raise BenchUsageError(f"unknown mode {m!r}")
    if not modes:
        raise BenchUsageError("no modes requested")
    c = get_case(case)
    if iterations is None:
        iterations = c.default_iterations
    if iterations < 1:
        raise BenchUsageError("iterations must be at least 1")
    if block is None:
        block = max(1, min(DEFAULT_BLOCK, iterations // MIN_ROUNDS))
    if block < 1:
        raise BenchUsageError("block must be at least 1")
    cert = c.certificate()
    mode_objs = {m: _mode_object(m, cert) for m in modes}  # ghost refusal happens here
    items = c.workload(c.program, seed)
    runners, inputs = {}, {}
    for m, obj in mode_objs.items():
        runners[m] = interp.Runner(c.program, c.entry, obj)
        ghost = isinstance(obj, Ghost)
        inputs[m] = [([strip_tags(a) for a in args] if ghost else args, ctx) for args, ctx in items]
    n = len(items)
    if warmup is None:
        warmup = min(iterations, max(n, iterations // 20))

    def run_block(m: str, start: int, count: int) -> tuple[int, int]:
        call = runners[m]
        data = inputs[m]
        errors = 0
        t0 = time.perf_counter_ns()
        for i in range(start, start + count):
            args, ctx = data[i % n]
            try:
                call(args, ctx)
            except IfcViolation:
                errors += 1
        return time.perf_counter_ns() - t0, errors

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, interp.RECURSION_LIMIT))
    gc_was = gc.isenabled()
    totals = {m: 0 for m in modes}
    errors = {m: 0 for m in modes}
    try:
        for m in modes:
            run_block(m, 0, warmup)
        done = rnd = 0
        while done < iterations:
            count = min(block, iterations - done)
            k = rnd % len(modes)
            for m in modes[k:] + modes[:k]:
                gc.disable()
                try:
                    dt, err = run_block(m, done, count)
                finally:
                    if gc_was:
                        gc.enable()
                totals[m] += dt
                errors[m] += err
            done += count
            rnd += 1
    finally:
        sys.setrecursionlimit(old_limit)
    timings = {m: ModeTiming(m, iterations, totals[m], errors[m]) for m in modes}
    env = {
        "host": platform.node(),
        "python": platform.python_version(),
        "implementation": platform.python_implementation(),
        "machine": platform.machine(),
        "seed": seed,
        "block": block,
        "warmup": warmup,
        "workload_items": n,
        "entry": c.entry,
    }
    return BenchReport(case, seed, timings, env)


__all__ = ["BenchReport", "ModeTiming", "run_bench", "parse_modes", "BenchUsageError", "GhostRefused"]
