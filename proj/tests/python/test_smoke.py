import os
import subprocess

import numpy as np
import pytest

import swinvrnn


def test_latitude_weights_have_unit_mean():
    w = np.array(swinvrnn.latitude_weights(32, 64))
    assert w.shape == (32,)
    assert abs(w.mean() - 1.0) < 1e-12
    lat = np.deg2rad(np.linspace(-90 + 180 / 64, 90 - 180 / 64, 32))
    np.testing.assert_allclose(w, np.cos(lat) / np.cos(lat).mean(), rtol=1e-12)


def test_rmse_and_crps_against_numpy():
    rng = np.random.default_rng(0)
    w = swinvrnn.latitude_weights(4, 8)
    f = rng.normal(size=(3, 4, 8))
    t = rng.normal(size=(3, 4, 8))
    wc = np.array(w)[None, :, None]
    rmse = np.mean(np.sqrt(np.mean(wc * (f - t) ** 2, axis=(1, 2))))
    assert swinvrnn.lat_weighted_rmse(f, t, w) == pytest.approx(rmse, rel=1e-12)
    mae = np.mean(wc * np.abs(f - t))
    assert swinvrnn.crps_ensemble(f[None], t, w) == pytest.approx(mae, rel=1e-12)
    assert swinvrnn.crps_cells(np.array([[0.0], [1.0]]), np.array([0.5]))[0] == 0.25

    members = rng.normal(size=(6, 4, 8))
    truth = rng.normal(size=(4, 8))
    pair = np.abs(members[:, None] - members[None]).sum(axis=(0, 1)) / (2 * 36)
    cells = np.abs(members - truth).mean(axis=0) - pair
    np.testing.assert_allclose(swinvrnn.crps_cells(members, truth), cells, rtol=1e-12)


def test_rank_histogram_counts():
    rng = np.random.default_rng(1)
    counts = swinvrnn.rank_histogram(rng.normal(size=(4, 500)), rng.normal(size=500), seed=3)
    assert len(counts) == 5 and sum(counts) == 500
    assert swinvrnn.rank_chi_square([10, 10, 10]) == 0.0


def test_kl_matches_closed_form():
    rng = np.random.default_rng(2)
    k = 3
    mq, mp = rng.normal(size=(1, k)), rng.normal(size=(1, k))
    lq = np.tril(rng.normal(size=(k, k)), -1) * 0.3 + np.diag(rng.uniform(0.5, 1.5, k))
    lp = np.tril(rng.normal(size=(k, k)), -1) * 0.3 + np.diag(rng.uniform(0.5, 1.5, k))
    sq, sp = lq @ lq.T, lp @ lp.T
    d = (mp - mq)[0]
    inv = np.linalg.inv(sp)
    oracle = 0.5 * (np.trace(inv @ sq) + d @ inv @ d - k + np.log(np.linalg.det(sp) / np.linalg.det(sq)))
    kl = swinvrnn.kl_divergence(mq, lq[None], mp, lp[None])
    assert float(kl) == pytest.approx(oracle, rel=1e-10)
    assert abs(float(swinvrnn.kl_divergence(mq, lq[None], mq, lq[None]))) < 1e-12
    z = swinvrnn.sample_latent(mq, lq[None], np.ones((1, k)))
    np.testing.assert_allclose(z[0], mq[0] + lq @ np.ones(k), rtol=1e-12)


def test_errors_map_to_python_exceptions():
    with pytest.raises(swinvrnn.ShapeError):
        swinvrnn.lat_weighted_rmse(np.zeros((2, 4, 8)), np.zeros((1, 4, 8)), swinvrnn.latitude_weights(4, 8))
    bad = np.zeros((1, 2, 2))
    with pytest.raises(swinvrnn.InvalidDistribution):
        swinvrnn.kl_divergence(np.zeros((1, 2)), bad, np.zeros((1, 2)), bad)
    assert issubclass(swinvrnn.ConfigError, swinvrnn.Error)


def test_cli_pipeline_in_process(tmp_path):
    common = ["--set", f"data.cache={tmp_path / 'cache'}", "--set", "data.toy_steps=400",
              "--set", "phase1.max_steps=3", "--set", "forecast.n_inits=2", "--set", "ensemble.n_inits=2"]
    code, _, err = swinvrnn.run_cli(["train", "--set", "nope.key=1"])
    assert code == 2 and err.startswith("error[configuration]") and "nope.key" in err

    for args in (["prepare-data"], ["train", "--phase", "1"]):
        code, _, err = swinvrnn.run_cli(args + ["--out", str(tmp_path / args[0])] + common)
        assert code == 0, err
    ckpt = str(tmp_path / "train" / "checkpoint")
    code, _, err = swinvrnn.run_cli(["forecast", "--checkpoint", ckpt, "--out", str(tmp_path / "fc")] + common)
    assert code == 0, err
    code, _, err = swinvrnn.run_cli(["ensemble", "--method", "fixed", "--members", "4", "--checkpoints", ckpt,
                                     "--out", str(tmp_path / "ens")] + common)
    assert code == 0, err
    ens = swinvrnn.read_ensemble(tmp_path / "ens" / "init_000")
    assert ens["method"] == "fixed-distribution"
    assert ens["members"].shape == (4, 2, 6, 8, 16)
    np.testing.assert_allclose(ens["mean"], ens["members"].astype(np.float64).mean(axis=0), atol=1e-6)

    code, _, err = swinvrnn.run_cli(["evaluate", "--forecast", str(tmp_path / "ens"),
                                     "--out", str(tmp_path / "ev")] + common)
    assert code == 0, err
    rows = swinvrnn.read_scores(tmp_path / "ev" / "scores.csv")
    assert {r["field"] for r in rows} == {"tracer_a", "tracer_b"}
    assert all(r["n_members"] == 4 and r["crps"] > 0 for r in rows)


@pytest.mark.skipif("SWINVRNN_CLI" not in os.environ, reason="CLI binary path not provided")
def test_cli_binary_exit_codes(tmp_path):
    exe = os.environ["SWINVRNN_CLI"]
    assert subprocess.run([exe, "--help"], capture_output=True).returncode == 0
    r = subprocess.run([exe, "train", "--set", f"data.cache={tmp_path / 'missing'}"], capture_output=True,
                       text=True)
    assert r.returncode == 3
    assert r.stderr.startswith("error[precondition]")
