import csv
import json

import numpy as np
import pytest
import yaml

from conftest import REFERENCE
from weylsys.cli import main
from weylsys.config import load_config
from weylsys.pipeline import emit, load_result, persist, run_pipeline

SMALL = ["--rho-min", "0.5", "--rho-max", "2.0", "--rho-count", "2"]


def _write(tmp_path, name, mutate=None):
    d = yaml.safe_load(REFERENCE.read_text())
    if mutate:
        mutate(d)
    p = tmp_path / name
    p.write_text(yaml.safe_dump(d))
    return p


@pytest.fixture
def zero_cfg(tmp_path):
    return _write(tmp_path, "zero.yaml", lambda d: d.update(q={"kind": "zero"}))


def _header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def _run_dir(out):
    (d,) = [p for p in out.iterdir() if p.is_dir()]
    return d


def test_sectors_stage(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["sectors", "--config", str(REFERENCE), "--out", str(out)]) == 0
    res = load_result(_run_dir(out) / "result.json")
    assert len(res.sectors) == 6 and res.passed


def test_unperturbed_stage_reports_delta0(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["unperturbed", "--config", str(REFERENCE), "--out", str(out)]) == 0
    assert "min |Delta0_k|" in capsys.readouterr().out
    res = load_result(_run_dir(out) / "result.json")
    assert all(abs(complex(*z)) > 0 for r in res.delta0 for z in r["delta0"])


def test_tensors_with_q_zero(zero_cfg, tmp_path):
    cfg = load_config(zero_cfg)
    res = run_pipeline(cfg, "tensors")
    assert res.passed
    assert all(r["iterations"] == 0 and r["distance_to_unperturbed"] == 0.0
               for r in res.tensors)


def test_parse_and_validation_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("n: 3\nA: [\n")
    assert main(["sectors", "--config", str(bad)]) == 2
    shifted = _write(tmp_path, "shift.yaml", lambda d: d["b"].__setitem__(2, [-1, -0.99]))
    assert main(["sectors", "--config", str(shifted)]) == 2
    assert "sum of B diagonal" in capsys.readouterr().err
    assert main(["compare", "--config", str(REFERENCE)]) == 2
    assert main(["sectors", "--config", str(REFERENCE), "--rho-min", "-1"]) == 2
    assert main(["sectors", "--config", str(REFERENCE), "--tol", "0"]) == 2
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_io_errors_exit_4(tmp_path):
    assert main(["sectors", "--config", str(tmp_path / "missing.yaml")]) == 4
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["sectors", "--config", str(REFERENCE), "--out", str(blocker)]) == 4


def test_numerical_failure_exit_3(tmp_path, capsys):
    # a heavy tail the F iteration cannot integrate on the grid
    slow = _write(tmp_path, "slow.yaml", lambda d: d["q"].update(d=0.2))
    assert main(["tensors", "--config", str(slow), *SMALL,
                 "--out", str(tmp_path / "o")]) == 3
    assert "error" in capsys.readouterr().err


def test_env_default_output(tmp_path, monkeypatch):
    monkeypatch.setenv("WEYLSYS_OUT", str(tmp_path / "env"))
    assert main(["sectors", "--config", str(REFERENCE)]) == 0
    assert (_run_dir(tmp_path / "env") / "result.json").exists()


@pytest.fixture(scope="module")
def weyl_result():
    cfg = load_config(REFERENCE)
    cfg.rho = type(cfg.rho)(min=0.5, max=2.0, count=2)
    return run_pipeline(cfg, "weyl")


def test_weyl_stage_checks(weyl_result):
    res = weyl_result
    assert res.passed
    assert len(res.deltas) == 6 * 2 * 3
    assert max(r["spread"] for r in res.deltas) <= 1e-5
    names = {c["name"]: c for c in res.checks}
    assert not names["psi ODE residual (reported)"]["hard"]


def test_result_roundtrip_and_hash(weyl_result, tmp_path):
    d = persist(weyl_result, tmp_path)
    again = load_result(d / "result.json")
    assert again.to_dict() == weyl_result.to_dict()
    assert again.result_hash() == weyl_result.result_hash()
    echoed = yaml.safe_load((d / "config.yaml").read_text())
    assert set(echoed) >= {"n", "A", "b", "q", "grid", "rho", "tol", "output"}
    assert set(echoed["tol"]) >= {"picard", "wronskian", "mapping"}


def test_tables(weyl_result, tmp_path):
    paths = {p.stem: p for p in emit(weyl_result, "csv", "all", tmp_path)}
    assert _header(paths["deltas"]) == ["sector", "k", "rho_re", "rho_im", "delta_re",
                                        "delta_im", "spread"]
    assert _header(paths["solutions"])[:5] == ["sector", "k", "rho_re", "rho_im", "x"]
    assert "abs_3" in _header(paths["solutions"])
    with open(paths["deltas"]) as fh:
        assert sum(1 for _ in fh) == 1 + 36
    (j,) = emit(weyl_result, "json", "deltas", tmp_path)
    assert json.loads(j.read_text())["deltas"] == weyl_result.deltas


def test_emit_subcommand(weyl_result, tmp_path, capsys):
    d = persist(weyl_result, tmp_path)
    assert main(["emit", "--result", str(d / "result.json"), "--what", "deltas",
                 "--out", str(tmp_path / "e")]) == 0
    assert (tmp_path / "e" / "deltas.csv").exists()
    assert main(["emit", "--result", str(tmp_path / "none.json")]) == 4


def test_determinism(weyl_result):
    cfg = load_config(REFERENCE)
    cfg.rho = type(cfg.rho)(min=0.5, max=2.0, count=2)
    assert run_pipeline(cfg, "weyl").result_hash() == weyl_result.result_hash()


@pytest.mark.slow
def test_jobs_do_not_change_results(weyl_result):
    cfg = load_config(REFERENCE)
    cfg.rho = type(cfg.rho)(min=0.5, max=2.0, count=2)
    assert run_pipeline(cfg, "weyl", jobs=2).result_hash() == weyl_result.result_hash()


def test_scatter_stage_and_table(tmp_path):
    out = tmp_path / "out"
    assert main(["scatter", "--config", str(REFERENCE), *SMALL, "--out", str(out)]) == 0
    d = _run_dir(out)
    h = _header(d / "scattering.csv")
    assert sum(c.startswith("v") and c.endswith("_re") for c in h) == 9
    res = load_result(d / "result.json")
    assert len(res.scattering) == 6 * 2
    assert np.all([abs(complex(*r["det"])) > 0.5 for r in res.scattering])


def test_compare_stage_small(zero_cfg, tmp_path):
    out = tmp_path / "out"
    assert main(["compare", "--config", str(REFERENCE), "--config", str(REFERENCE),
                 *SMALL, "--out", str(out)]) == 0
    res = load_result(_run_dir(out) / "result.json")
    assert res.compare["max_P_minus_I"] <= 1e-5 and not res.compare["witness"]
    out2 = tmp_path / "out2"
    assert main(["compare", "--config", str(REFERENCE), "--config", str(zero_cfg),
                 *SMALL, "--out", str(out2)]) == 0
    res = load_result(_run_dir(out2) / "result.json")
    assert res.compare["witness"]
