import json

import numpy as np

import spikescan as sk
from spikescan import io as sio
from spikescan.cli import main
from spikescan.rng import RngStream


def test_trains_text_roundtrip(tmp_path):
    rng = RngStream(80)
    rec = sk.MultiTrain([sk.simulate_poisson(0.05, 300.0, rng.child(i))
                         for i in range(3)]
                        + [sk.SpikeTrain(np.empty(0), (0.0, 300.0))])
    path = tmp_path / "trains.txt"
    sio.write_trains_text(rec, path)
    back = sio.read_trains_text(path)
    assert back.dimension == 4
    for a, b in zip(rec.trains, back.trains):
        assert np.array_equal(a.times, b.times)
        assert a.horizon == b.horizon


def test_trains_json_roundtrip(tmp_path):
    rng = RngStream(81)
    rec = sk.MultiTrain([sk.simulate_poisson(0.05, 100.0, rng.child(i))
                         for i in range(2)], rates=[0.05, 0.05])
    path = tmp_path / "trains.json"
    sio.write_trains_json(rec, path)
    back = sio.read_trains_json(path)
    assert np.allclose(back.rates, [0.05, 0.05])
    assert np.array_equal(back.trains[1].times, rec.trains[1].times)


def test_model_json_roundtrip(tmp_path):
    m = sk.IntensityPair(sk.SmoothNonneg.constant(0.4, 15.0),
                         sk.SmoothNonneg.constant(1.0, 15.0), deadtime=1.0)
    path = tmp_path / "model.json"
    sio.write_model_json(m, path)
    back = sio.read_model_json(path)
    assert back.deadtime == 1.0
    assert np.allclose(back.free_rate_at(np.array([3.0])), 0.4)


def _write_inputs(tmp_path, window=100.0, kind="box"):
    rng = RngStream(82)
    tpl = sk.MultiTrain([sk.simulate_renewal_deadtime(24.0, 1.0, window,
                                                      rng.child(i))
                         for i in range(4)])
    tpl_path = tmp_path / "template.txt"
    sio.write_trains_text(tpl, tpl_path)
    spec = {"kind": "hamming", "epsilon_ms": 5.0, "beta": 0.4} if kind == "hamming" \
        else {"kind": "box", "epsilon_ms": 4.0, "beta": "0.3"}
    k_path = tmp_path / "kernel.json"
    k_path.write_text(json.dumps(spec))
    return tpl_path, k_path


def test_cli_simulate_deterministic(tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    args = ["simulate", "--kind", "renewal", "--length", "200", "--trains", "2",
            "--seed", "5"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert (out1 / "trains.txt").read_bytes() == (out2 / "trains.txt").read_bytes()
    assert (out1 / "trains.json").read_bytes() == (out2 / "trains.json").read_bytes()
    rec = sio.read_trains_text(out1 / "trains.txt")
    assert rec.dimension == 2


def test_cli_kernel_info(tmp_path):
    tpl_path, k_path = _write_inputs(tmp_path)
    out = tmp_path / "out"
    rc = main(["kernel-info", "--kernel", str(k_path), "--template",
               str(tpl_path), "--out", str(out), "--seed", "1"])
    assert rc == 0
    report = json.loads((out / "span_report.json").read_text())
    assert report["value_span"] == "1/10"
    assert report["jump_span"] == "13/10"
    assert (out / "kernel_pieces.csv").exists()


def test_cli_tilt_and_pvalue(tmp_path, capsys):
    tpl_path, k_path = _write_inputs(tmp_path)
    out = tmp_path / "out"
    rc = main(["tilt", "--kernel", str(k_path), "--template", str(tpl_path),
               "--rate", "0.04", "--threshold", "0.12", "--out", str(out),
               "--seed", "2"])
    assert rc == 0
    tilt = json.loads((out / "tilt.json").read_text())
    assert tilt["branch"] == "discontinuous"
    assert tilt["overshoot"] == 1.0

    rc = main(["pvalue", "--method", "analytic", "--kernel", str(k_path),
               "--template", str(tpl_path), "--rate", "0.04", "--threshold",
               "0.12", "--horizon", "400", "--out", str(out), "--seed", "2"])
    assert rc == 0
    payload = json.loads((out / "pvalue.json").read_text())
    assert 0.0 <= payload["p"] <= 1.0
    capsys.readouterr()


def test_cli_pvalue_subcritical_errors(tmp_path, capsys):
    tpl_path, k_path = _write_inputs(tmp_path)
    rc = main(["pvalue", "--method", "analytic", "--kernel", str(k_path),
               "--template", str(tpl_path), "--rate", "0.04", "--threshold",
               "-5.0", "--horizon", "400", "--out", str(tmp_path / "e"),
               "--seed", "2"])
    assert rc == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "SubcriticalThresholdError"


def test_cli_pvalue_mc_and_is(tmp_path, capsys):
    tpl_path, k_path = _write_inputs(tmp_path)
    for method in ("mc", "is"):
        out = tmp_path / method
        rc = main(["pvalue", "--method", method, "--kernel", str(k_path),
                   "--template", str(tpl_path), "--rate", "0.04",
                   "--threshold", "0.12", "--horizon", "400",
                   "--runs", "60", "--out", str(out), "--seed", "3"])
        assert rc == 0
        payload = json.loads((out / "pvalue.json").read_text())
        assert payload["runs"] == 60 and payload["se"] >= 0
    capsys.readouterr()


def test_cli_match_count(tmp_path, capsys):
    tpl_path, k_path = _write_inputs(tmp_path)
    out = tmp_path / "out"
    rc = main(["match-count", "--kernel", str(k_path), "--template",
               str(tpl_path), "--rate", "0.04", "--threshold", "0.1",
               "--horizon", "400", "--overlap-alpha", "0.8", "--runs", "50",
               "--out", str(out), "--seed", "4"])
    assert rc == 0
    payload = json.loads((out / "match_count.json").read_text())
    assert sum(payload["counts"]) == 50
    assert (out / "match_count.csv").exists()
    capsys.readouterr()


def test_cli_mle_fit_and_rate_study(tmp_path, capsys):
    T = 20.0
    truth = sk.IntensityPair(sk.SmoothNonneg.constant(0.3, T, bounds=(3.0,)),
                             sk.SmoothNonneg.constant(1.0, T, bounds=(3.0,)),
                             deadtime=2.0)
    rng = RngStream(83)
    data = sk.MultiTrain([sk.simulate_modulated(truth, T, rng.child(i))
                          for i in range(40)])
    data_path = tmp_path / "data.txt"
    sio.write_trains_text(data, data_path)
    out = tmp_path / "fit"
    rc = main(["mle-fit", "--data", str(data_path), "--deadtime", "2.0",
               "--starts", "2", "--out", str(out), "--seed", "5"])
    assert rc == 0
    model = sio.read_model_json(out / "model.json")
    assert model.deadtime == 2.0
    report = json.loads((out / "fit_report.json").read_text())
    assert report["achieved"] >= report["initial"] - 1e-9

    truth_path = tmp_path / "truth.json"
    sio.write_model_json(truth, truth_path)
    out2 = tmp_path / "study"
    rc = main(["rate-study", "--truth", str(truth_path), "--ns", "8,16,32",
               "--replicates", "2", "--starts", "1", "--out", str(out2),
               "--seed", "6"])
    assert rc == 0
    summary = json.loads((out2 / "rate_study.json").read_text())
    assert len(summary["medians_free_rate"]) == 3
    lines = (out2 / "rate_study.csv").read_text().splitlines()
    assert lines[0].startswith("# spikescan")
    capsys.readouterr()


def test_cli_reproduce_table2_layout_and_idempotence(tmp_path, capsys):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    args = ["reproduce", "--table", "2", "--runs", "24", "--templates", "1",
            "--seed", "7"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    b1 = (out1 / "table2.csv").read_bytes()
    assert b1 == (out2 / "table2.csv").read_bytes()
    rows = [l for l in b1.decode().splitlines() if not l.startswith("#")]
    assert rows[0] == "template,c,mc,mc_se,is,is_se,analytic"
    assert len(rows) == 1 + 6
    capsys.readouterr()


def test_cli_unknown_kernel_kind(tmp_path, capsys):
    tpl_path, _ = _write_inputs(tmp_path)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "triangle", "epsilon_ms": 1.0, "beta": 1}))
    rc = main(["kernel-info", "--kernel", str(bad), "--template", str(tpl_path),
               "--out", str(tmp_path / "o"), "--seed", "1"])
    assert rc == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ConfigError"
