import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcsdp.blocks import BlockLayout, PsdBlockSpec
from tcsdp.errors import InvalidBinding, InvalidBlock, InvalidInput
from tcsdp.linexpr import LinExpr
from tcsdp import manifolds as mf


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def test_lift_rotation_identity():
    Y = mf.lift_rotation(np.eye(3))
    v = np.array([1, 0, 0, 0, 1, 0, 1.0])
    assert np.allclose(Y, np.outer(v, v))
    assert abs(np.trace(Y) - 3.0) < 1e-12


def test_lift_rotation_quarter_turn():
    c, s = 0.0, 1.0
    R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    Y = mf.lift_rotation(R)
    stacked = np.array([0, 1, 0, -1, 0, 0, 1.0])
    assert np.allclose(Y, np.outer(stacked, stacked))


def test_lift_rotation_rejects_non_rotation():
    with pytest.raises(InvalidInput):
        mf.lift_rotation(np.eye(3) * 2.0)
    with pytest.raises(InvalidInput):
        mf.lift_rotation(np.diag([1.0, 1.0, -1.0]))  # reflection


def test_rotation_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(300):
        R = random_rotation(rng)
        Y = mf.lift_rotation(R)
        assert mf.check_rotation_block(Y) <= 1e-12
        assert np.max(np.abs(mf.recover_rotation(Y) - R)) <= 1e-12


def test_rotation_mixture_not_so3():
    rng = np.random.default_rng(1)
    for _ in range(50):
        w = rng.dirichlet([1.0, 1.0, 1.0])
        while w.max() > 0.9:
            w = rng.dirichlet([1.0, 1.0, 1.0])
        Y = sum(wi * mf.lift_rotation(random_rotation(rng)) for wi in w)
        # feasible for the constraint set but not rank-1
        assert mf.check_rotation_block(Y) <= 1e-9
        assert not mf.rank1_check([Y], 3.0, tol=1e-6)
        R = mf.recover_rotation(Y)
        assert np.linalg.norm(R.T @ R - np.eye(3)) > 1e-3


def test_rotation_rows_residuals():
    rng = np.random.default_rng(2)
    rows = mf.rotation_constraint_rows("r")
    assert len(rows) == 4
    for _ in range(10):
        Y = mf.lift_rotation(random_rotation(rng))
        for row in rows:
            assert abs(row.residual({"r": Y})) <= 1e-12
    bad = np.eye(7) * (3.0 / 7.0)
    corner = [r for r in rows if r.label.endswith("corner")][0]
    assert abs(corner.residual({"r": bad}) - (3.0 / 7.0 - 1.0)) <= 1e-12


def test_lift_translation_example():
    blocks = mf.lift_translation(0.25, np.array([0.6, 0.8, 0.0]))
    u = np.array([0.3, np.sqrt(0.75) * 0.6, 0.5, np.sqrt(0.75)])
    assert np.allclose(blocks[0], np.outer(u, u))
    assert abs(sum(np.trace(b) for b in blocks) - 4.0) <= 1e-12


def test_lift_translation_boundary():
    blocks = mf.lift_translation(1.0, np.array([0.0, 0.0, 1.0]))
    assert mf.check_translation_blocks(blocks) <= 1e-12
    tau, v = mf.recover_translation(blocks)
    assert tau == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(v, [0, 0, 1])
    blocks0 = mf.lift_translation(0.0, np.array([0.0, 1.0, 0.0]))
    tau0, v0 = mf.recover_translation(blocks0)
    assert tau0 == pytest.approx(0.0, abs=1e-12)
    assert abs(np.linalg.norm(v0) - 1.0) <= 1e-12


def test_translation_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(300):
        tau = rng.uniform(0.0, 1.0)
        v = random_unit(rng)
        blocks = mf.lift_translation(tau, v)
        t2, v2 = mf.recover_translation(blocks)
        assert abs(t2 - tau) <= 1e-12
        assert np.max(np.abs(v2 - v)) <= 1e-12
        sv = mf.recover_scaled_direction(blocks)
        assert np.max(np.abs(sv - tau * v)) <= 1e-12


def test_scaled_direction_example():
    blocks = mf.lift_translation(0.25, np.array([0.6, 0.8, 0.0]))
    assert np.allclose(mf.recover_scaled_direction(blocks), [0.15, 0.2, 0.0])


def test_translation_rows_residuals():
    rng = np.random.default_rng(4)
    triple = ("t0", "t1", "t2")
    eqs, ineqs = mf.translation_constraint_rows(triple)
    tau_links = [r for r in eqs if "tau_link" in r.label or "geo_link" in r.label]
    assert len(tau_links) == 4  # item linking tau entries across the three blocks
    for _ in range(10):
        blocks = dict(zip(triple, mf.lift_translation(rng.uniform(0, 1), random_unit(rng))))
        for row in eqs:
            assert abs(row.residual(blocks)) <= 1e-12
        for row in ineqs:
            assert row.residual(blocks) >= -1e-12
    # breaking the off-diagonal equality makes its residual nonzero
    blocks = dict(zip(triple, mf.lift_translation(0.5, np.array([1.0, 0.0, 0.0]))))
    blocks["t0"] = blocks["t0"].copy()
    blocks["t0"][0, 3] += 0.1
    blocks["t0"][3, 0] += 0.1
    bad = [r for r in eqs if r.label == "tr3:t0:offdiag_eq"][0]
    assert abs(bad.residual(blocks)) == pytest.approx(0.1, abs=1e-12)


def test_invalid_block_rejected():
    Y = np.eye(7)
    with pytest.raises(InvalidBlock):
        mf.recover_rotation(Y)
    with pytest.raises(InvalidBlock):
        mf.recover_translation([np.eye(4)] * 3)


def test_rank1_check():
    Y = mf.lift_rotation(np.eye(3))
    assert mf.rank1_check([Y], 3.0, tol=1e-12)
    assert not mf.rank1_check([(3.0 / 7.0) * np.eye(7)], 3.0, tol=1e-6)
    blocks = mf.lift_translation(0.3, np.array([0, 0, 1.0]))
    assert mf.rank1_check(blocks, 4.0, tol=1e-12)


def _exprs_eval(exprs, blocks):
    return np.array([e.evaluate(blocks) for e in exprs])


def test_read_exprs_match_lift():
    rng = np.random.default_rng(5)
    R = random_rotation(rng)
    Y = {"r": mf.lift_rotation(R)}
    cols = mf.rot_col_exprs("r")
    for l in range(3):
        assert np.allclose(_exprs_eval(cols[l], Y), R[:, l])
    w = rng.normal(size=3)
    assert np.allclose(_exprs_eval(mf.rot_apply_known("r", w), Y), R @ w)
    tau, v = rng.uniform(0, 1), random_unit(rng)
    triple = ("a", "b", "c")
    blocks = dict(zip(triple, mf.lift_translation(tau, v)))
    assert abs(mf.tau_expr(triple).evaluate(blocks) - tau) < 1e-12
    assert np.allclose(_exprs_eval(mf.v_exprs(triple), blocks), v)
    assert np.allclose(_exprs_eval(mf.tauv_exprs(triple), blocks), tau * v)
    scaled = mf.scaled_v_exprs(triple)
    assert np.allclose(_exprs_eval(scaled["comp_v"], blocks), (1 - tau) * v)
    assert np.allclose(_exprs_eval(scaled["geo_v"], blocks), np.sqrt(tau * (1 - tau)) * v)


def _frame_pair(rng, constant_rel=True):
    """Two configurations of a frame pair with a constant relative transform."""
    R_rel = random_rotation(rng)
    t_rel = rng.normal(size=3) * 0.5
    sides = []
    for _ in range(2):
        R1 = random_rotation(rng)
        t1 = rng.normal(size=3)
        R2 = R1 @ R_rel
        t2 = t1 + R1 @ t_rel
        sides.append((R1, t1, R2, t2))
    if not constant_rel:
        R1, t1, R2, t2 = sides[1]
        sides[1] = (R1, t1, R2 @ random_rotation(rng), t2 + rng.normal(size=3))
    return sides


def _bind_side(prefix, R1, t1, R2, t2, tau_u, blocks):
    d = np.linalg.norm(t2 - t1)
    v = (t2 - t1) / d
    triple = tuple(f"{prefix}_t{l}" for l in range(3))
    blocks.update(dict(zip(triple, mf.lift_translation(d / tau_u, v))))
    blocks[f"{prefix}_r2"] = mf.lift_rotation(R2)
    return mf.FrameBinding(
        triple=triple,
        base_rotation=R1,
        target_cols=mf.rot_col_exprs(f"{prefix}_r2"),
    )


def test_transform_equality_known_base():
    rng = np.random.default_rng(6)
    tau_u = 10.0
    sides = _frame_pair(rng, constant_rel=True)
    blocks = {}
    a = _bind_side("a", *sides[0], tau_u, blocks)
    b = _bind_side("b", *sides[1], tau_u, blocks)
    rows = mf.transform_equality_rows(a, b)
    assert len(rows) == 28  # 1 extension + 9 direction + 18 rotation rows
    for row in rows:
        assert abs(row.residual(blocks)) <= 1e-12
    # non-constant transform violates at least one row
    sides = _frame_pair(rng, constant_rel=False)
    blocks = {}
    a = _bind_side("a", *sides[0], tau_u, blocks)
    b = _bind_side("b", *sides[1], tau_u, blocks)
    rows = mf.transform_equality_rows(a, b)
    assert max(abs(r.residual(blocks)) for r in rows) > 1e-3


def _bind_pair_side(prefix, R1, t1, R2, t2, tau_u, blocks):
    d = np.linalg.norm(t2 - t1)
    v = (t2 - t1) / d
    triple = tuple(f"{prefix}_t{l}" for l in range(3))
    blocks.update(dict(zip(triple, mf.lift_translation(d / tau_u, v))))
    lifted = mf.lift_pair_blocks(R1, R2, v)
    rv = tuple(f"{prefix}_rv{l}" for l in range(3))
    rr = tuple(tuple(f"{prefix}_rr{l1}{l2}" for l2 in range(2)) for l1 in range(3))
    for l in range(3):
        blocks[rv[l]] = lifted[f"rv{l}"]
        for l2 in range(2):
            blocks[rr[l][l2]] = lifted[f"rr{l}{l2}"]
    return mf.FrameBinding(triple=triple, pair=mf.PairBlockSet(rv, rr))


def test_transform_equality_pair_mode():
    rng = np.random.default_rng(7)
    tau_u = 10.0
    sides = _frame_pair(rng, constant_rel=True)
    blocks = {}
    a = _bind_pair_side("a", *sides[0], tau_u, blocks)
    b = _bind_pair_side("b", *sides[1], tau_u, blocks)
    rows = mf.transform_equality_rows(a, b)
    assert len(rows) == 10  # 1 extension + 3 direction + 6 rotation-pair rows
    for row in rows:
        assert abs(row.residual(blocks)) <= 1e-12


def test_transform_equality_binding_errors():
    t = ("x", "y", "z")
    with pytest.raises(InvalidBinding):
        mf.transform_equality_rows(
            mf.FrameBinding(triple=t, base_rotation=np.eye(3)),
            mf.FrameBinding(triple=t, base_rotation=np.eye(3)),
        )
    with pytest.raises(InvalidBinding):
        mf.transform_equality_rows(mf.FrameBinding(triple=t), mf.FrameBinding(triple=t))


def test_pair_product_rows_ground_truth():
    rng = np.random.default_rng(8)
    R1, R2, v = random_rotation(rng), random_rotation(rng), random_unit(rng)
    blocks = {"r1": mf.lift_rotation(R1), "r2": mf.lift_rotation(R2)}
    tau = 0.4
    triple = ("t0", "t1", "t2")
    blocks.update(dict(zip(triple, mf.lift_translation(tau, v))))
    lifted = mf.lift_pair_blocks(R1, R2, v)
    rv = ("pv0", "pv1", "pv2")
    rr = (("p00", "p01"), ("p10", "p11"), ("p20", "p21"))
    for l in range(3):
        blocks[rv[l]] = lifted[f"rv{l}"]
        for l2 in range(2):
            blocks[rr[l][l2]] = lifted[f"rr{l}{l2}"]
    pair = mf.PairBlockSet(rv, rr)
    rows = mf.pair_product_rows(
        pair, mf.rot_col_exprs("r1"), mf.rot_col_exprs("r2"), mf.v_exprs(triple)
    )
    for row in rows:
        assert abs(row.residual(blocks)) <= 1e-12
    # every pair block has trace 3 (unit stacking plus homogeneous corner)
    for bid in pair.all_blocks():
        assert abs(np.trace(blocks[bid]) - 3.0) <= 1e-12
    # perturbing the direction copy breaks exactly the linking row
    blocks["pv1"] = blocks["pv1"].copy()
    blocks["pv1"][3, 6] += 0.05
    blocks["pv1"][6, 3] += 0.05
    bad = [r for r in rows if r.label == "cav:rv1:dir:0"][0]
    assert abs(bad.residual(blocks)) == pytest.approx(0.05, abs=1e-12)
    # cross trace equals the bilinear product on ground truth
    val = mf.pair_cross_trace_expr("pv0").evaluate(blocks)
    assert abs(val - R1[:, 0] @ v) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_round_trip_property(seed):
    rng = np.random.default_rng(seed)
    R = random_rotation(rng)
    assert np.max(np.abs(mf.recover_rotation(mf.lift_rotation(R)) - R)) <= 1e-12
    tau, v = rng.uniform(0, 1), random_unit(rng)
    t2, v2 = mf.recover_translation(mf.lift_translation(tau, v))
    assert abs(t2 - tau) <= 1e-12 and np.max(np.abs(v2 - v)) <= 1e-12
