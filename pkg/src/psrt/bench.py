"""Timing harness for the three normal-operator variants."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .fileio import write_csv
from .operators import build_phi, normal_exchanged, normal_naive, normal_reduced

__all__ = ["BenchSize", "BenchRow", "BenchReport", "EquivalenceError", "parse_sizes", "bench_normal_ops"]

BENCH_HEADER = ["variant", "N", "T", "L", "J", "repetitions", "median_seconds", "speedup"]
VARIANTS = ("naive", "exchanged", "reduced")


class EquivalenceError(ArithmeticError):
    """Operator variants disagree, so their timings would be meaningless."""


@dataclass(frozen=True)
class BenchSize:
    nx: int
    ny: int
    T: int
    L: int
    J: int

    @property
    def N(self) -> int:
        return self.nx * self.ny

    def __post_init__(self):
        if min(self.nx, self.ny, self.T, self.L, self.J) < 1:
            raise ValueError(f"benchmark sizes must be positive: {self}")
        if self.L > self.T:
            raise ValueError(f"L={self.L} exceeds T={self.T}")


@dataclass(frozen=True)
class BenchRow:
    variant: str
    N: int
    T: int
    L: int
    J: int
    repetitions: int
    median_seconds: float
    speedup: float

    def row(self):
        return [self.variant, self.N, self.T, self.L, self.J, self.repetitions,
                repr(self.median_seconds), repr(self.speedup)]


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)

    def speedup(self, variant: str, size: BenchSize) -> float:
        for r in self.rows:
            if r.variant == variant and (r.N, r.T, r.L, r.J) == (size.N, size.T, size.L, size.J):
                return r.speedup
        raise KeyError((variant, size))

    def to_csv(self, path):
        return write_csv(path, BENCH_HEADER, [r.row() for r in self.rows])


def parse_sizes(spec: str) -> list[BenchSize]:
    """Parse ``"128x128:512:20:6;64x64:64:20:6"`` into sizes (``;`` or ``,`` separated)."""
    sizes = []
    for item in spec.replace(",", ";").split(";"):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 4 or "x" not in parts[0]:
            raise ValueError(f"bad size {item!r}; expected NXxNY:T:L:J")
        try:
            nx, ny = (int(v) for v in parts[0].split("x"))
            T, L, J = (int(v) for v in parts[1:])
        except ValueError as exc:
            raise ValueError(f"bad size {item!r}; expected integers in NXxNY:T:L:J") from exc
        sizes.append(BenchSize(nx, ny, T, L, J))
    if not sizes:
        raise ValueError("no benchmark sizes given")
    return sizes


def random_problem(size: BenchSize, seed: int = 0, lines_per_frame: int = 3):
    """Random ``(U, V, S, M)`` with orthonormal ``V`` and an interleaved-style mask."""
    rng = np.random.default_rng(seed)
    nx, ny, T, L, J = size.nx, size.ny, size.T, size.L, size.J
    U = rng.standard_normal((size.N, L)) + 1j * rng.standard_normal((size.N, L))
    V = np.linalg.qr(rng.standard_normal((T, L)) + 1j * rng.standard_normal((T, L)))[0].conj().T
    S = rng.standard_normal((J, nx, ny)) + 1j * rng.standard_normal((J, nx, ny))
    S /= np.sqrt(np.sum(np.abs(S) ** 2, axis=0))
    M = np.zeros((ny, T), dtype=bool)
    for t in range(T):
        M[rng.choice(ny, size=min(lines_per_frame, ny), replace=False), t] = True
    M[ny // 2] = True
    return U, V, S, M


def _median_time(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_normal_ops(sizes, reps: int = 5, seed: int = 0, rtol: float = 1e-10) -> BenchReport:
    """Median wall time of each normal-operator variant per size.

    Outputs are checked against the naive operator before any timing; a
    relative mismatch above ``rtol`` raises :class:`EquivalenceError`.
    The merged kernel is built once outside the timed region, as it is in
    a solver.
    """
    if reps < 5:
        raise ValueError(f"repetitions must be at least 5, got {reps}")
    report = BenchReport()
    for size in sizes:
        U, V, S, M = random_problem(size, seed)
        phi = build_phi(V, M)
        ops = {
            "naive": lambda: normal_naive(U, V, S, M),
            "exchanged": lambda: normal_exchanged(U, V, S, M),
            "reduced": lambda: normal_reduced(U, phi, S),
        }
        ref = ops["naive"]()
        scale = np.linalg.norm(ref)
        for name in ("exchanged", "reduced"):
            err = np.linalg.norm(ops[name]() - ref) / scale
            if not err <= rtol:
                raise EquivalenceError(f"{name} differs from naive by {err:.3e} at {size}")
        medians = {name: _median_time(ops[name], reps) for name in VARIANTS}
        for name in VARIANTS:
            report.rows.append(
                BenchRow(name, size.N, size.T, size.L, size.J, reps, medians[name], medians["naive"] / medians[name])
            )
    return report
