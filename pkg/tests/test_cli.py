import json

import numpy as np
import pytest

from causalbounds.cli import main
from causalbounds.data import load_csv


def _read(path):
    with open(path) as fh:
        return json.load(fh)


def test_simulate_writes_csv(tmp_path):
    out = tmp_path / "sim.csv"
    assert main(["simulate", "--n", "50", "--d", "4", "--seed", "3", "--out", str(out)]) == 0
    data = load_csv(out)
    assert data.n == 50 and data.d == 4


def test_simulate_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["simulate", "--n", "30", "--seed", "5", "--out", str(a)])
    main(["simulate", "--n", "30", "--seed", "5", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_bounds_marginal_report(tmp_path):
    sim = tmp_path / "sim.csv"
    main(["simulate", "--n", "400", "--seed", "1", "--out", str(sim)])
    out = tmp_path / "rep.json"
    assert main(["bounds", str(sim), "--mode", "marginal", "--out", str(out)]) == 0
    rep = _read(out)
    assert rep["format"] == "causalbounds-report/1"
    assert rep["kind"] == "bounds/marginal"
    assert set(rep["results"]) == {"KL", "Hellinger", "ChiSq", "TV", "JS"}
    for name, per_arm in rep["results"].items():
        for a in ("0", "1"):
            assert per_arm[a]["lo"] <= per_arm[a]["up"], (name, a)
    assert set(rep["tight_kth"]) == {"0", "1"}
    assert rep["tight_kth"]["1"]["k_used"] >= 1

    # byte-identical rerun, different output path, same config hash
    out2 = tmp_path / "rep2.json"
    main(["bounds", str(sim), "--mode", "marginal", "--out", str(out2)])
    r1, r2 = _read(out), _read(out2)
    r1["config"].pop("out"), r2["config"].pop("out")
    assert r1 == r2


def test_bounds_conditional_report_and_plot_csv(tmp_path):
    sim = tmp_path / "sim.csv"
    main(["simulate", "--n", "300", "--seed", "2", "--out", str(sim)])
    out = tmp_path / "rep.json"
    plot = tmp_path / "plot.csv"
    code = main(
        [
            "bounds", str(sim),
            "--mode", "conditional",
            "--divergences", "ChiSq,TV",
            "--eval-points", "5",
            "--epochs", "3",
            "--patience", "2",
            "--out", str(out),
            "--plot-csv", str(plot),
        ]
    )
    assert code == 0
    rep = _read(out)
    assert rep["kind"] == "bounds/conditional"
    assert len(rep["points"]) == 5
    for p in rep["points"]:
        assert 0.0 < p["e1"] < 1.0
        assert set(p["bounds"]) == {"ChiSq", "TV"}
        assert {"lo", "up", "k_used", "crossed"} <= set(p["tight_kth"])
    assert "fold_diagnostics" in rep

    lines = plot.read_text().strip().splitlines()
    assert lines[0] == "divergence,e1,lo,up"
    body = [ln.split(",") for ln in lines[1:]]
    assert len(body) == 3 * 5  # two divergences + tight_kth, five points each
    for name in ("ChiSq", "TV", "tight_kth"):
        e1s = [float(r[1]) for r in body if r[0] == name]
        assert e1s == sorted(e1s)


def test_config_file_overrides_and_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 25}))
    out = tmp_path / "sim.csv"
    main(["simulate", "--n", "99", "--config", str(cfg), "--out", str(out)])
    assert load_csv(out).n == 25

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"sample_size": 25}))
    with pytest.raises(SystemExit, match="unknown config keys"):
        main(["simulate", "--config", str(bad), "--out", str(out)])


def test_bounds_argument_validation(tmp_path):
    sim = tmp_path / "sim.csv"
    main(["simulate", "--n", "60", "--out", str(sim)])
    out = tmp_path / "rep.json"
    with pytest.raises(SystemExit, match="unknown divergence"):
        main(["bounds", str(sim), "--divergences", "Renyi", "--out", str(out)])
    with pytest.raises(SystemExit, match="unknown phi"):
        main(["bounds", str(sim), "--phi", "cubic", "--out", str(out)])


def test_audit_passes_and_tamper_fails(tmp_path):
    out = tmp_path / "audit.json"
    code = main(["audit", "--grid", "0.25,0.75", "--instances", "10", "--out", str(out)])
    assert code == 0
    rep = _read(out)
    assert rep["pass"] is True
    assert rep["divergence_bound"]["max_violation"] <= 1e-9
    assert rep["duality"]["max_gap"] < 1e-4

    tampered = tmp_path / "tampered.json"
    code = main(
        ["audit", "--grid", "0.05,0.5,0.95", "--instances", "10", "--tamper", "--out", str(tampered)]
    )
    assert code == 1
    assert _read(tampered)["pass"] is False
    assert len(_read(tampered)["divergence_bound"]["violations"]) > 0


def test_figure_fig2a(tmp_path):
    out_dir = tmp_path / "figs"
    code = main(
        [
            "figure", "fig2a",
            "--out-dir", str(out_dir),
            "--n", "300",
            "--eval-points", "4",
            "--epochs", "2",
            "--patience", "1",
            "--divergences", "TV",
        ]
    )
    assert code == 0
    manifest = _read(out_dir / "fig2a.json")
    assert manifest["files"] == ["fig2a.csv"]
    lines = (out_dir / "fig2a.csv").read_text().strip().splitlines()
    assert lines[0] == "divergence,e1,lo,up,truth,truth_se"
    rows = [ln.split(",") for ln in lines[1:]]
    assert len(rows) == 2 * 4  # TV + tight_kth rows at four points
    assert {r[0] for r in rows} == {"TV", "tight_kth"}


def test_figure_fig2c(tmp_path):
    out_dir = tmp_path / "figs"
    code = main(
        [
            "figure", "fig2c",
            "--out-dir", str(out_dir),
            "--ns", "300",
            "--reps", "1",
            "--eval-points", "3",
            "--epochs", "2",
            "--patience", "1",
            "--divergences", "TV",
        ]
    )
    assert code == 0
    lines = (out_dir / "fig2c.csv").read_text().strip().splitlines()
    assert lines[0] == "n,estimator,seed,error"
    labels = {ln.split(",")[1] for ln in lines[1:]}
    assert labels == {"debiased", "plain", "oracle"}
    assert all(float(ln.split(",")[3]) >= 0.0 for ln in lines[1:])
