"""Brute-force grid over lambda, Nkspc and algorithm."""

from __future__ import annotations

import logging
import math

from .config import GridConfig
from .fileio import write_csv
from .metrics import METRICS_HEADER, MetricsRecord
from .pipeline import run_recon

__all__ = ["SWEEP_HEADER", "SweepRow", "sweep", "write_sweep_csv"]

log = logging.getLogger(__name__)

SWEEP_HEADER = METRICS_HEADER + ["status"]


class SweepRow:
    __slots__ = ("record", "status")

    def __init__(self, record: MetricsRecord, status: str = "ok"):
        self.record = record
        self.status = status

    def row(self):
        return self.record.row() + [self.status]


def _failed(algorithm, lam, nkspc, L, exc) -> SweepRow:
    nan = math.nan
    rec = MetricsRecord(nan, nan, nan, nan, algorithm=algorithm, lam=lam, nkspc=nkspc, L=L)
    msg = " ".join(f"{type(exc).__name__}: {exc}".split())
    return SweepRow(rec, f"error: {msg}")


def sweep(grid: GridConfig) -> list[SweepRow]:
    """One row per grid cell, on data simulated afresh for each Nkspc.

    ``lsqr`` ignores lambda, so it runs once per Nkspc and is reported with
    lambda 0. A failing cell (simulation or reconstruction) is recorded
    with NaN metrics and an ``error: ...`` status; the sweep carries on.
    """
    rows: list[SweepRow] = []
    for nkspc in grid.nkspc:
        try:
            ds = grid.simulation.with_nkspc(nkspc).run()
        except Exception as exc:  # noqa: BLE001 - recorded per cell
            log.warning("simulation failed for nkspc=%s: %s", nkspc, exc)
            for algo in grid.algorithms:
                for lam in [0.0] if algo == "lsqr" else grid.lambdas:
                    rows.append(_failed(algo, lam, nkspc, grid.L, exc))
            continue
        for algo in grid.algorithms:
            for lam in [0.0] if algo == "lsqr" else grid.lambdas:
                try:
                    res = run_recon(ds, grid.pipeline(algo, lam))
                    rows.append(SweepRow(res.metrics))
                except Exception as exc:  # noqa: BLE001 - recorded per cell
                    log.warning("cell %s lam=%s nkspc=%s failed: %s", algo, lam, nkspc, exc)
                    rows.append(_failed(algo, lam, nkspc, grid.L, exc))
    return rows


def write_sweep_csv(path, rows) -> None:
    write_csv(path, SWEEP_HEADER, [r.row() for r in rows])
