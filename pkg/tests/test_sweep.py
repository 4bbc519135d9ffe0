import csv

import numpy as np

from psrt.config import load_grid_config
from psrt.sweep import SWEEP_HEADER, sweep, write_sweep_csv

BASE = "nx = 24\nny = 24\ncoils = 4\nsigma2 = 1e-3\nL = 8\niters = 30\ncoils_out = 4\n"


def test_single_cell_single_row(tmp_path):
    g = load_grid_config(BASE + "lambdas = 0.03\nnkspc_list = 6\nalgorithms = tikhonov", is_text=True)
    rows = sweep(g)
    assert len(rows) == 1 and rows[0].status == "ok"
    write_sweep_csv(tmp_path / "s.csv", rows)
    table = list(csv.reader(open(tmp_path / "s.csv")))
    assert table[0] == SWEEP_HEADER and len(table) == 2


def test_failed_cell_is_recorded_and_sweep_continues():
    # L = 60 exceeds the 8 frames simulated at nkspc = 1 but fits nkspc = 9
    text = BASE.replace("L = 8", "L = 60") + "lambdas = 0.03\nnkspc_list = 9,1\nalgorithms = lsqr"
    rows = sweep(load_grid_config(text, is_text=True))
    assert len(rows) == 2
    assert rows[0].status == "ok"
    assert rows[1].status.startswith("error:") and np.isnan(rows[1].record.nrmse)


def test_deterministic_metrics_and_lsqr_once():
    text = BASE + "lambdas = 0.01,0.1\nnkspc_list = 6\nalgorithms = lsqr,tikhonov"
    a = sweep(load_grid_config(text, is_text=True))
    b = sweep(load_grid_config(text, is_text=True))
    assert [r.record.algorithm for r in a] == ["lsqr", "tikhonov", "tikhonov"]
    assert [r.record.nrmse for r in a] == [r.record.nrmse for r in b]


def test_lsqr_degrades_with_fewer_kspaces():
    text = BASE + "lambdas = 0\nnkspc_list = 9,6,3\nalgorithms = lsqr"
    errs = [r.record.nrmse for r in sweep(load_grid_config(text, is_text=True))]
    assert errs[0] < errs[1] < errs[2]
