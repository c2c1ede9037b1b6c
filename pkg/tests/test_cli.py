import csv
import json

import numpy as np
import pytest

from nhsquare import cli
from nhsquare.config import ConfigError, RunConfig, apply_override, build_setup
from nhsquare.dyadic import ShiftSequence


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_gen_measure(tmp_path):
    assert run("gen-measure", "lebesgue-surrogate", "k=3", "n=1", "--out", tmp_path) == 0
    data = json.loads((tmp_path / "lebesgue-surrogate.json").read_text())
    masses = np.array(data["atoms"])[:, -1]
    assert len(masses) == 64 and np.allclose(masses, 1 / 64)
    assert data["lambda"]["form"] == "power_law"


@pytest.mark.parametrize("argv", [["gen-measure", "nope"], ["gen-measure", "cantor", "depth"],
                                  ["gen-measure", "cantor", "sides=3"]])
def test_gen_measure_usage_errors(argv, tmp_path):
    assert run(*argv, "--out", tmp_path) == 2


def test_generated_measure_feeds_a_run(tmp_path):
    run("gen-measure", "cantor", "depth=5", "--out", tmp_path)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"measure": {"file": str(tmp_path / "cantor.json")},
                               "experiments": ["hypotheses"]}))
    assert run("verify-all", "--config", cfg, "--out", tmp_path / "r") == 0
    rep = json.loads((tmp_path / "r" / "hypotheses.json").read_text())
    assert rep["params"]["atoms"] == 32


def test_missing_measure_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"measure": {"file": "/no/such/measure.json"}}))
    assert run("verify-all", "--config", cfg, "--out", tmp_path) == 2
    assert "/no/such/measure.json" in capsys.readouterr().err


def test_bad_config_inputs(tmp_path):
    assert run("verify-all", "--config", tmp_path / "absent.json") == 2
    (tmp_path / "junk.json").write_text("{not json")
    assert run("verify-all", "--config", tmp_path / "junk.json") == 2
    (tmp_path / "extra.json").write_text(json.dumps({"atoms": []}))
    assert run("verify-all", "--config", tmp_path / "extra.json") == 2
    assert run("verify-all", "--override", "schema_version=7", "--out", tmp_path) == 2
    assert run("verify-all", "--only", "bogus", "--out", tmp_path) == 2


def test_empty_experiment_list(tmp_path):
    assert run("verify-all", "--override", "experiments=[]", "--out", tmp_path) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["experiments"] == [] and summary["pass"] is True


def test_failed_experiment_exit_code(tmp_path):
    status = run("verify-all", "--only", "quadrature", "--override",
                 "thresholds.quadrature_rel=1e-15", "--out", tmp_path)
    assert status == 1
    assert json.loads((tmp_path / "quadrature.json").read_text())["pass"] is False


def test_internal_assertion_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise AssertionError("broken invariant")
    monkeypatch.setattr(cli, "run_experiment", boom)
    assert run("verify-all", "--only", "hypotheses", "--out", tmp_path) == 3


def test_reports_are_deterministic_and_self_describing(tmp_path):
    for d in ("a", "b"):
        assert run("verify-all", "--only", "hypotheses", "quadrature", "--seed", "4",
                   "--out", tmp_path / d) == 0
    for name in ("hypotheses.json", "quadrature.json", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rep = json.loads((tmp_path / "a" / "quadrature.json").read_text())
    assert rep["config"]["seed"] == 4 and "out" not in rep["config"]
    assert set(rep) >= {"name", "params", "trials", "summary", "pass", "thresholds", "schema_version"}


def test_classify_zero_shift_marks_boundary_cubes_bad(tmp_path):
    setup = build_setup(RunConfig.load())
    zeros = ShiftSequence.zeros(setup.params, 1).to_dict()
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"grid": {"shifts": zeros}}))
    assert run("classify", "--config", cfg, "--out", tmp_path) == 0
    rows = list(csv.DictReader((tmp_path / "classify.csv").open()))
    p = setup.params
    touching = [r for r in rows if float(r["lo"]) == 0.0 and int(r["generation"]) >= p.r - p.s]
    assert touching and all(r["good"] == "False" for r in touching)


def test_decompose_and_sqfn_outputs(tmp_path):
    assert run("decompose", "--function", "random", "--out", tmp_path) == 0
    dec = json.loads((tmp_path / "decompose.json").read_text())
    assert dec["residual_norm"] < 1e-10
    assert dec["energy"] == pytest.approx(dec["f_norm_sq"], rel=1e-10)
    assert run("sqfn", "--function", "b", "--good-only", "--out", tmp_path) == 0
    sq = json.loads((tmp_path / "sqfn.json").read_text())
    assert sq["params"]["good_only"] is True
    assert sq["total"] == pytest.approx(sum(r["value"] for r in sq["regions"]))
    assert run("sqfn", "--function", "wavelet", "--out", tmp_path) == 2


def test_report_flattens_to_csv(tmp_path):
    run("verify-all", "--only", "necessity", "--out", tmp_path)
    assert run("report", tmp_path) == 0
    rows = list(csv.DictReader((tmp_path / "necessity.csv").open()))
    assert len(rows) == 50
    assert {"name", "trial", "pass", "decay_constant", "summary.model_rel_error"} <= set(rows[0])
    assert run("report", tmp_path / "missing") == 2


def test_override_parsing():
    cfg = apply_override({"grid": {"s": 8}}, "grid.g_max=10")
    assert cfg["grid"] == {"s": 8, "g_max": 10}
    assert apply_override({}, "b.type=block")["b"]["type"] == "block"
    with pytest.raises(ConfigError):
        apply_override({}, "novalue")


def test_flag_beats_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 3, "grid": {"s": 6}}))
    loaded = RunConfig.load(cfg, ["grid.s=7"], seed=9)
    assert loaded.seed == 9 and loaded.data["grid"]["s"] == 7


def test_non_accretive_b_is_a_config_error(tmp_path):
    b = [1.0, -1.0] * 32
    assert run("decompose", "--override", json.dumps({"type": "values", "values": b}).join(["b=", ""]),
               "--out", tmp_path) == 2
