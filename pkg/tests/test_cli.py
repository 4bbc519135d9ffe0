import csv

import numpy as np
import pytest

from psrt.cli import EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main
from psrt.container import read_container, write_container

SIM = "nx = 24\nny = 24\nnkspc = 6\ncoils = 4\nsigma2 = 1e-4\n"


@pytest.fixture()
def dataset(tmp_path):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text(SIM)
    out = tmp_path / "d.psrc"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    return out


def _recon(tmp_path, dataset, name, *extra):
    out = tmp_path / name
    argv = ["recon", "--algo", "tikhonov", "--lambda", "0.03", "--L", "8", "--iters", "20",
            "--tol", "1e-8", "--input", str(dataset), "--out", str(out), "--coils-out", "4", *extra]
    return main(argv), out


def test_simulate_is_deterministic(tmp_path, dataset):
    cfg = tmp_path / "sim.cfg"
    again = tmp_path / "d2.psrc"
    assert main(["simulate", "--config", str(cfg), "--out", str(again)]) == EXIT_OK
    assert again.read_bytes() == dataset.read_bytes()


def test_recon_outputs(tmp_path, dataset):
    code, out = _recon(tmp_path, dataset, "r.psrc", "--metrics", str(tmp_path / "m.csv"),
                       "--report", str(tmp_path / "rep.csv"))
    assert code == EXIT_OK
    c = read_container(out)
    assert c["image"].shape == (24 * 24, read_container(dataset)["kspace"].shape[3])
    assert c.metadata["algorithm"] == "tikhonov"
    rows = list(csv.reader(open(tmp_path / "m.csv")))
    assert rows[0][:5] == ["algorithm", "lambda", "nkspc", "L", "nrmse"] and len(rows) == 2
    assert float(rows[1][4]) < 0.5
    rep = list(csv.reader(open(tmp_path / "rep.csv")))
    assert rep[0] == ["iter", "residual", "objective", "seconds"]
    code, out2 = _recon(tmp_path, dataset, "r2.psrc")
    assert out2.read_bytes() == out.read_bytes()


def test_recon_with_ref(tmp_path, dataset):
    code, out = _recon(tmp_path, dataset, "r.psrc", "--ref", str(dataset), "--metrics", str(tmp_path / "m.csv"))
    assert code == EXIT_OK


def test_model_order(tmp_path, dataset):
    out = tmp_path / "mo.csv"
    assert main(["model-order", "--input", str(dataset), "--l-min", "1", "--l-max", "5",
                 "--sigmas", "0,1e-3", "--out", str(out)]) == EXIT_OK
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["L", "sigma2", "e_pix"] and len(rows) == 11
    assert main(["model-order", "--input", str(dataset), "--l-min", "5", "--l-max", "1",
                 "--sigmas", "0", "--out", str(out)]) == EXIT_USAGE


def test_export(tmp_path, dataset):
    code, out = _recon(tmp_path, dataset, "r.psrc")
    d = tmp_path / "frames"
    assert main(["export", "--input", str(out), "--dir", str(d), "--format", "pgm", "--mmode-col", "3"]) == EXIT_OK
    T = read_container(out)["image"].shape[1]
    assert len(list(d.iterdir())) == T + 1


def test_sweep_and_bench(tmp_path):
    grid = tmp_path / "g.cfg"
    grid.write_text(SIM + "L = 6\niters = 10\ncoils_out = 4\nlambdas = 0.03\nnkspc_list = 6\nalgorithms = tikhonov\n")
    assert main(["sweep", "--grid", str(grid), "--out", str(tmp_path / "s.csv")]) == EXIT_OK
    assert len(list(csv.reader(open(tmp_path / "s.csv")))) == 2
    assert main(["bench", "--sizes", "8x8:16:4:2", "--reps", "5", "--out", str(tmp_path / "b.csv")]) == EXIT_OK
    assert len(list(csv.reader(open(tmp_path / "b.csv")))) == 4
    assert main(["bench", "--sizes", "8x8:16:4:2", "--reps", "3", "--out", str(tmp_path / "b.csv")]) == EXIT_USAGE


def test_usage_errors(tmp_path, capsys):
    assert main([]) == EXIT_USAGE
    assert main(["recon", "--algo", "admm", "--input", "a", "--out", "b"]) == EXIT_USAGE
    assert main(["simulate", "--config", "x"]) == EXIT_USAGE
    assert main(["model-order", "--input", "a", "--l-min", "0", "--l-max", "2", "--sigmas", "0", "--out", "o"]) == EXIT_USAGE
    assert main(["--version"]) == EXIT_OK


def test_data_errors(tmp_path, dataset):
    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("colour = red\n")
    assert main(["simulate", "--config", str(bad_cfg), "--out", str(tmp_path / "x")]) == EXIT_DATA
    trunc = tmp_path / "t.psrc"
    trunc.write_bytes(dataset.read_bytes()[:100])
    assert main(["export", "--input", str(trunc), "--dir", str(tmp_path / "f"), "--format", "pgm"]) == EXIT_DATA
    assert main(["recon", "--algo", "lsqr", "--input", str(tmp_path / "missing"), "--out", "o"]) == EXIT_DATA
    code, _ = _recon(tmp_path, dataset, "r.psrc", "--L", "500")
    assert code == EXIT_DATA


def test_numerical_failure_exit_code(tmp_path, dataset):
    c = read_container(dataset)
    arrays = dict(c.arrays)
    k = arrays["kspace"].copy()
    k[0, 0, np.flatnonzero(arrays["mask"][:, 0])[0], 0] = np.nan
    arrays["kspace"] = k
    bad = tmp_path / "nan.psrc"
    write_container(bad, arrays, c.metadata)
    code, _ = _recon(tmp_path, bad, "r.psrc")
    assert code == EXIT_NUMERICAL
