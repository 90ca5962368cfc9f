import json

import numpy as np
import pytest

from tcsdp import bench
from tcsdp import robots as rb
from tcsdp.errors import InvalidInput


def test_pnp_noise_levels():
    assert bench.PNP_NOISE_PX == {"none": 0.0, "low": 2.0, "medium": 3.0, "high": 5.0}
    assert bench.DUALCAL_NOISE["low"] == (0.1, 1e-4)
    assert bench.DUALCAL_NOISE["medium"] == (0.3, 3e-4)
    assert bench.DUALCAL_NOISE["high"] == (0.8, 8e-4)


def test_gen_pnp_deterministic_and_consistent():
    a = bench.gen_pnp_scenario(8, 0.0, seed=42)
    b = bench.gen_pnp_scenario(8, 0.0, seed=42)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.pixels, b.pixels)
    c = bench.gen_pnp_scenario(8, 0.0, seed=43)
    assert not np.array_equal(a.points, c.points)
    # noiseless pixels are exactly the projections
    R, t = a.truth_rotation, a.truth_translation
    for q, p in zip(a.points, a.pixels):
        x = R.T @ (q - t)
        assert x[2] > 0
        assert np.allclose(p, [a.f_cam * x[0] / x[2], a.f_cam * x[1] / x[2]], atol=1e-12)


def test_gen_pnp_noise_bounded():
    clean = bench.gen_pnp_scenario(8, 0.0, seed=7)
    noisy = bench.gen_pnp_scenario(8, 2.0, seed=7)
    assert np.array_equal(clean.points, noisy.points)
    delta = np.abs(noisy.pixels - clean.pixels)
    assert delta.max() <= 2.0
    assert delta.max() > 0


def test_gen_handeye_consistent():
    sc = bench.gen_handeye_scenario(3, 6, 0.0, seed=5)
    assert sc.ee_poses.shape == (3, 4, 4)
    # camera poses satisfy T_c = T_e X
    for i in range(3):
        assert np.allclose(sc.ee_poses[i] @ sc.truth_x, sc.truth_cameras[i], atol=1e-12)
    again = bench.gen_handeye_scenario(3, 6, 0.0, seed=5)
    assert np.array_equal(sc.pixels, again.pixels)


def test_gen_dualcal_consistent():
    sc = bench.gen_dualcal_scenario(4, (0.0, 0.0), seed=9)
    for i in range(4):
        lhs = sc.A[i] @ sc.truth_x @ sc.B[i]
        rhs = sc.truth_y @ sc.C[i] @ sc.truth_z
        assert np.allclose(lhs, rhs, atol=1e-10)
    noisy = bench.gen_dualcal_scenario(4, (0.3, 3e-4), seed=9)
    assert not np.allclose(noisy.A, sc.A)
    # rotation parts stay rotations after perturbation
    for i in range(4):
        R = noisy.A[i, :3, :3]
        assert np.linalg.norm(R.T @ R - np.eye(3)) <= 1e-10


def test_pose_errors():
    rng = np.random.default_rng(0)
    R = bench.random_rotation(rng)
    t = rng.normal(size=3)
    T = rb.make_transform(R, t)
    rot, tra = bench.pose_errors([T], [T])
    assert rot[0] <= 1e-15 and tra[0] == 0.0
    # rotation off by alpha about z: frobenius error is 2*sqrt(2)*|sin(alpha/2)|
    alpha = 0.3
    Rz = bench.axis_angle(np.array([0, 0, 1.0]), alpha)
    rot, _ = bench.pose_errors([rb.make_transform(R @ Rz, t)], [T])
    assert rot[0] == pytest.approx(2 * np.sqrt(2) * abs(np.sin(alpha / 2)), abs=1e-12)
    _, tra = bench.pose_errors([rb.make_transform(R, t + np.array([0.01, 0, 0]))], [T])
    assert tra[0] == pytest.approx(0.01, abs=1e-15)
    with pytest.raises(InvalidInput):
        bench.pose_errors([T], [T, T])


def test_scenario_config_validation():
    with pytest.raises(InvalidInput):
        bench.ScenarioConfig(kind="nope", seed=0)
    with pytest.raises(InvalidInput):
        bench.ScenarioConfig(kind="pnp", seed=0, n=3)
    with pytest.raises(InvalidInput):
        bench.ScenarioConfig(kind="pnp", seed=0, n=6, noise="extreme")
    cfg = bench.ScenarioConfig(kind="pnp", seed=0, n=6, sched_limit=50, channel_limit=10)
    opts = cfg.refine_options()
    assert opts.sched_limit == 50 and opts.channel_limit == 10


def test_run_batch_empty(tmp_path):
    reports, summary = bench.run_batch([], out_dir=tmp_path)
    assert reports == []
    assert summary == {"runs": 0}
    assert (tmp_path / "results.csv").exists()
    assert (tmp_path / "results.json").exists()


def test_run_batch_single_pnp(tmp_path):
    cfg = bench.ScenarioConfig(
        kind="pnp", seed=0, n=6, noise="none", sched_limit=120, channel_limit=20
    )
    reports, summary = bench.run_batch([cfg], out_dir=tmp_path, progress=True)
    assert summary["runs"] == 1
    r = reports[0]
    assert r.success == (max(r.rotation_errors) < 0.1)
    assert r.success
    assert r.eg <= 1e-4
    # output files exist and round-trip
    rows = (tmp_path / "results.csv").read_text().strip().splitlines()
    assert len(rows) == 2
    payload = json.loads((tmp_path / "results.json").read_text())
    assert payload["summary"]["successes"] == 1
    stream = (tmp_path / "progress" / "pnp_0.ndjson").read_text().strip().splitlines()
    recs = [json.loads(line) for line in stream]
    assert all({"k", "phase", "cost", "lam1", "eg"} <= set(rec) for rec in recs)
