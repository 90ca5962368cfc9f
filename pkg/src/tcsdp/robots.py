"""Virtual-robot builders: compile estimation and calibration tasks into
trace-constrained SDPs and extract transforms back out.

Every bounded rigid translation is modeled by an SP robot (spherical
joint then capped prismatic joint): end-effector position
p(t, tau, v) = t + tau_u * tau * v with tau in [0, 1] and unit v.  The
pose (tau, v) lifts to a translation triple; unknown rotations lift to
rotation blocks; bilinear products of unknown rotations with directions
or other rotations route through pair-product blocks.

The objective of each task is a sum of squared linear reads of the
lifted variables, so the compiled problem is a convex TCSDP whose rank-1
solutions correspond exactly to solutions of the original task.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .blocks import PsdBlockSpec, TraceGroup
from .errors import DegenerateScenario, ExtractionFailed, InvalidInput, NotRankOne
from .linexpr import LinearRow, LinExpr, eq
from .problem import TcsdpProblem, assemble_problem, objective_from_residuals
from . import manifolds as mf

ROT_TRACE = mf.ROTATION_TRACE
TRA_TRACE = mf.TRANSLATION_TRACE


# ---------------------------------------------------------------------------
# rigid-transform helpers


def make_transform(R: np.ndarray, t: np.ndarray) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = np.asarray(t, dtype=float)
    return T


def transform_inverse(T: np.ndarray) -> np.ndarray:
    R = T[:3, :3]
    return make_transform(R.T, -R.T @ T[:3, 3])


def sp_forward(t_base: np.ndarray, tau: float, v: np.ndarray, tau_u: float) -> np.ndarray:
    """SP-robot forward kinematics: base + tau_u * tau * v."""
    return np.asarray(t_base, dtype=float) + float(tau_u) * float(tau) * np.asarray(v, dtype=float)


def sp_pose_for(t_base: np.ndarray, target: np.ndarray, tau_u: float) -> tuple[float, np.ndarray]:
    """(tau, v) reproducing `target` from `t_base`; needs tau_u >= distance."""
    delta = np.asarray(target, dtype=float) - np.asarray(t_base, dtype=float)
    d = float(np.linalg.norm(delta))
    if d > tau_u * (1.0 + 1e-12):
        raise InvalidInput(f"distance {d:.4f} exceeds extension cap {tau_u:.4f}")
    if d < 1e-12:
        return 0.0, np.array([0.0, 0.0, 1.0])
    return d / tau_u, delta / d


def bearing_from_pixel(p: np.ndarray, f_cam: float) -> np.ndarray:
    """Unit bearing through pixel p for focal length f_cam (principal point 0)."""
    if f_cam <= 0:
        raise InvalidInput("focal length must be positive")
    ray = np.array([p[0], p[1], f_cam], dtype=float)
    return ray / np.linalg.norm(ray)


def bounding_diameter(points: np.ndarray) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 2:
        return 1.0
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


# ---------------------------------------------------------------------------
# scenarios


@dataclass
class PnpScenario:
    points: np.ndarray  # (n, 3) world coordinates
    pixels: np.ndarray  # (n, 2)
    f_cam: float
    truth_rotation: np.ndarray | None = None
    truth_translation: np.ndarray | None = None
    noise_px: float = 0.0
    seed: int | None = None

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def bearings(self) -> np.ndarray:
        return np.stack([bearing_from_pixel(p, self.f_cam) for p in self.pixels])


@dataclass
class HandEyeScenario:
    ee_poses: np.ndarray  # (m, 4, 4) known world poses of the end effector
    features_body: np.ndarray  # (n, 3) feature coordinates in the target frame
    pixels: np.ndarray  # (m, n, 2)
    f_cam: float
    truth_x: np.ndarray | None = None  # (4, 4) hand-eye transform
    truth_target: np.ndarray | None = None  # (4, 4) target world pose
    truth_cameras: np.ndarray | None = None  # (m, 4, 4)
    noise_px: float = 0.0
    seed: int | None = None

    @property
    def m(self) -> int:
        return self.ee_poses.shape[0]

    @property
    def n(self) -> int:
        return self.features_body.shape[0]


@dataclass
class DualCalScenario:
    A: np.ndarray  # (m, 4, 4) measured robot-1 end-effector poses
    B: np.ndarray  # (m, 4, 4) measured camera-to-target transforms
    C: np.ndarray  # (m, 4, 4) measured robot-2 base-to-end-effector transforms
    truth_x: np.ndarray | None = None
    truth_y: np.ndarray | None = None
    truth_z: np.ndarray | None = None
    noise_rot_deg: float = 0.0
    noise_trans: float = 0.0
    seed: int | None = None

    @property
    def m(self) -> int:
        return self.A.shape[0]


# ---------------------------------------------------------------------------
# index maps


@dataclass
class PnpIndexMap:
    cam: str
    triples: list[mf.Triple]
    tc: tuple[str, str, str]
    tau_u: float


@dataclass
class HandEyeIndexMap:
    cams: list[str]
    target: str
    ec_triples: list[mf.Triple]  # end-effector -> camera, per configuration
    cf_triples: list[list[mf.Triple]]  # camera -> feature, [config][feature]
    tau_u: float
    ee_poses: np.ndarray  # known (m, 4, 4) end-effector poses
    features_body: np.ndarray  # (n, 3) feature coordinates in the target frame


@dataclass
class DualCalIndexMap:
    rc: list[str]
    reb: list[str]
    rt: list[str]
    eac_triples: list[mf.Triple]
    wb_triples: list[mf.Triple]
    ebt_triples: list[mf.Triple]
    pairs: list[mf.PairBlockSet]
    tau_u: float
    gamma_w: float
    a_measure: np.ndarray  # (m, 4, 4)
    c_measure: np.ndarray  # (m, 4, 4)


def _triple(name: str) -> mf.Triple:
    return (f"{name}_0", f"{name}_1", f"{name}_2")


def _coplanarity_warning(points: np.ndarray) -> None:
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] < 4:
        return
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[-1] <= 1e-9 * max(1.0, sv[0]):
        warnings.warn("scene points are (near-)coplanar; pose may be ambiguous", stacklevel=3)


# ---------------------------------------------------------------------------
# PnP


def build_pnp(scenario: PnpScenario, tau_u: float | None = None) -> tuple[TcsdpProblem, PnpIndexMap]:
    """Compile a PnP task: one camera rotation block, one translation triple
    per scene point, and a free camera position tied by closure rows
    p(t_c, tau_i, v_i) = q_i.  The objective stacks the bearing residuals
    v_i - R p_hat_i, which vanish exactly at the true pose."""
    n = scenario.n
    if n < 4:
        raise DegenerateScenario(f"PnP needs at least 4 points, got {n}")
    if n < 6:
        warnings.warn(f"PnP with n={n} < 6: uniqueness is not guaranteed", stacklevel=2)
    _coplanarity_warning(scenario.points)
    if tau_u is None:
        anchor = [scenario.points]
        if scenario.truth_translation is not None:
            anchor.append(scenario.truth_translation[None, :])
        tau_u = 2.0 * bounding_diameter(np.concatenate(anchor, axis=0))

    cam = "cam"
    blocks = [PsdBlockSpec(cam, 7, "g_cam")]
    groups = [TraceGroup("g_cam", ROT_TRACE, (cam,))]
    eqs: list[LinearRow] = mf.rotation_constraint_rows(cam)
    ineqs: list[LinearRow] = []
    triples: list[mf.Triple] = []
    for i in range(n):
        triple = _triple(f"p{i}")
        triples.append(triple)
        for bid in triple:
            blocks.append(PsdBlockSpec(bid, 4, f"g_p{i}"))
        groups.append(TraceGroup(f"g_p{i}", TRA_TRACE, triple))
        t_eqs, t_ineqs = mf.translation_constraint_rows(triple)
        eqs += t_eqs
        ineqs += t_ineqs

    tc = ("tc_0", "tc_1", "tc_2")
    bearings = scenario.bearings()
    residuals: list[LinExpr] = []
    for i, triple in enumerate(triples):
        tauv = mf.tauv_exprs(triple)
        for a in range(3):
            expr = LinExpr.free_var(tc[a]) + tau_u * tauv[a]
            eqs.append(eq(expr, float(scenario.points[i, a]), label=f"close:p{i}:{a}"))
        v = mf.v_exprs(triple)
        rp = mf.rot_apply_known(cam, bearings[i])
        residuals += [v[a] - rp[a] for a in range(3)]

    from .blocks import BlockLayout

    layout = BlockLayout(blocks, list(tc))
    Q, c, G = objective_from_residuals(residuals, layout)
    problem = assemble_problem(
        blocks, Q, c, eqs, groups, ineqs, free_names=list(tc), gram_factor=G,
        meta={"kind": "pnp", "tau_u": tau_u},
    )
    return problem, PnpIndexMap(cam=cam, triples=triples, tc=tc, tau_u=tau_u)


def lift_pnp_truth(scenario: PnpScenario, index: PnpIndexMap) -> tuple[dict, dict]:
    """Ground-truth lifting of a synthetic scenario (feasible, zero cost when
    noiseless)."""
    if scenario.truth_rotation is None or scenario.truth_translation is None:
        raise InvalidInput("scenario carries no ground truth")
    R, t = scenario.truth_rotation, scenario.truth_translation
    blocks = {index.cam: mf.lift_rotation(R)}
    for i, triple in enumerate(index.triples):
        tau, v = sp_pose_for(t, scenario.points[i], index.tau_u)
        blocks.update(dict(zip(triple, mf.lift_translation(tau, v))))
    frees = {name: float(t[a]) for a, name in enumerate(index.tc)}
    return blocks, frees


# ---------------------------------------------------------------------------
# hand-eye


def build_handeye(
    scenario: HandEyeScenario, tau_u: float | None = None
) -> tuple[TcsdpProblem, HandEyeIndexMap]:
    """Compile an eye-in-hand calibration: per-configuration camera rotation
    blocks, one target rotation block, SP robots end-effector -> camera and
    camera -> feature.  Closure rows equate the forward kinematics minus the
    rotated feature offset across all (configuration, feature) pairs against
    the reference pair; the mount equality rows are linear because the
    end-effector poses are known."""
    m, n = scenario.m, scenario.n
    if m < 2:
        raise DegenerateScenario(f"hand-eye needs at least 2 configurations, got {m}")
    if n < 4:
        raise DegenerateScenario(f"hand-eye needs at least 4 features, got {n}")
    if n < 6:
        warnings.warn(f"hand-eye with n={n} < 6 features: uniqueness is not guaranteed", stacklevel=2)
    _coplanarity_warning(scenario.features_body)
    if tau_u is None:
        anchor = [scenario.ee_poses[:, :3, 3]]
        if scenario.truth_cameras is not None:
            anchor.append(scenario.truth_cameras[:, :3, 3])
        if scenario.truth_target is not None:
            T = scenario.truth_target
            world_feats = (T[:3, :3] @ scenario.features_body.T).T + T[:3, 3]
            anchor.append(world_feats)
        tau_u = 2.0 * bounding_diameter(np.concatenate(anchor, axis=0))

    cams = [f"cam{i}" for i in range(m)]
    tgt = "tgt"
    blocks = [PsdBlockSpec(c, 7, f"g_{c}") for c in cams] + [PsdBlockSpec(tgt, 7, "g_tgt")]
    groups = [TraceGroup(f"g_{c}", ROT_TRACE, (c,)) for c in cams] + [
        TraceGroup("g_tgt", ROT_TRACE, (tgt,))
    ]
    eqs: list[LinearRow] = []
    ineqs: list[LinearRow] = []
    for c in cams + [tgt]:
        eqs += mf.rotation_constraint_rows(c)

    ec_triples: list[mf.Triple] = []
    cf_triples: list[list[mf.Triple]] = []
    for i in range(m):
        triple = _triple(f"ec{i}")
        ec_triples.append(triple)
        for bid in triple:
            blocks.append(PsdBlockSpec(bid, 4, f"g_ec{i}"))
        groups.append(TraceGroup(f"g_ec{i}", TRA_TRACE, triple))
        t_eqs, t_ineqs = mf.translation_constraint_rows(triple)
        eqs += t_eqs
        ineqs += t_ineqs
        row = []
        for j in range(n):
            tj = _triple(f"cf{i}_{j}")
            row.append(tj)
            for bid in tj:
                blocks.append(PsdBlockSpec(bid, 4, f"g_cf{i}_{j}"))
            groups.append(TraceGroup(f"g_cf{i}_{j}", TRA_TRACE, tj))
            t_eqs, t_ineqs = mf.translation_constraint_rows(tj)
            eqs += t_eqs
            ineqs += t_ineqs
        cf_triples.append(row)

    # kinematic closure: FK(i, j) - R_f f_j is the (constant) target origin
    def fk_exprs(i: int, j: int) -> list[LinExpr]:
        ec = mf.tauv_exprs(ec_triples[i])
        cf = mf.tauv_exprs(cf_triples[i][j])
        rf = mf.rot_apply_known(tgt, scenario.features_body[j])
        return [tau_u * ec[a] + tau_u * cf[a] - rf[a] for a in range(3)]

    ref = fk_exprs(0, 0)
    t_e = scenario.ee_poses[:, :3, 3]
    for i in range(m):
        for j in range(n):
            if i == 0 and j == 0:
                continue
            cur = fk_exprs(i, j)
            for a in range(3):
                rhs = float(t_e[0, a] - t_e[i, a])
                eqs.append(eq(cur[a] - ref[a], rhs, label=f"close:{i}_{j}:{a}"))

    # mount equality: the end-effector -> camera transform is the same X
    sides = [
        mf.FrameBinding(
            triple=ec_triples[i],
            base_rotation=scenario.ee_poses[i, :3, :3],
            target_cols=mf.rot_col_exprs(cams[i]),
        )
        for i in range(m)
    ]
    for i in range(1, m):
        eqs += mf.transform_equality_rows(sides[0], sides[i], label=f"xeq:{i}")

    residuals: list[LinExpr] = []
    for i in range(m):
        for j in range(n):
            bearing = bearing_from_pixel(scenario.pixels[i, j], scenario.f_cam)
            v = mf.v_exprs(cf_triples[i][j])
            rp = mf.rot_apply_known(cams[i], bearing)
            residuals += [v[a] - rp[a] for a in range(3)]

    from .blocks import BlockLayout

    layout = BlockLayout(blocks, [])
    Q, c, G = objective_from_residuals(residuals, layout)
    problem = assemble_problem(
        blocks, Q, c, eqs, groups, ineqs, gram_factor=G,
        meta={"kind": "handeye", "tau_u": tau_u},
    )
    index = HandEyeIndexMap(
        cams=cams, target=tgt, ec_triples=ec_triples, cf_triples=cf_triples, tau_u=tau_u,
        ee_poses=np.array(scenario.ee_poses, dtype=float),
        features_body=np.array(scenario.features_body, dtype=float),
    )
    return problem, index


def lift_handeye_truth(scenario: HandEyeScenario, index: HandEyeIndexMap) -> tuple[dict, dict]:
    if scenario.truth_cameras is None or scenario.truth_target is None:
        raise InvalidInput("scenario carries no ground truth")
    blocks: dict[str, np.ndarray] = {}
    T_f = scenario.truth_target
    world_feats = (T_f[:3, :3] @ scenario.features_body.T).T + T_f[:3, 3]
    for i in range(scenario.m):
        cam_T = scenario.truth_cameras[i]
        blocks[index.cams[i]] = mf.lift_rotation(cam_T[:3, :3])
        tau, v = sp_pose_for(scenario.ee_poses[i, :3, 3], cam_T[:3, 3], index.tau_u)
        blocks.update(dict(zip(index.ec_triples[i], mf.lift_translation(tau, v))))
        for j in range(scenario.n):
            tau, v = sp_pose_for(cam_T[:3, 3], world_feats[j], index.tau_u)
            blocks.update(dict(zip(index.cf_triples[i][j], mf.lift_translation(tau, v))))
    blocks[index.target] = mf.lift_rotation(T_f[:3, :3])
    return blocks, {}


# ---------------------------------------------------------------------------
# dual-robot calibration


def build_dualcal(
    scenario: DualCalScenario, tau_u: float | None = None, gamma_w: float = 1.0
) -> tuple[TcsdpProblem, DualCalIndexMap]:
    """Compile the simultaneous dual-robot calibration A X B = Y C Z.

    Per configuration: camera, robot-2 end-effector, and target rotation
    blocks; SP robots for the three unknown translations; pair-product
    blocks carrying the bilinear reads of the Z equality (both of its
    frames have unknown rotations).  The X and Y equalities are linear
    because the base rotations (measured A_i, world identity) are known.
    The objective penalizes the rotation mismatch of the two kinematic
    chains plus gamma_w times their translation mismatch."""
    m = scenario.m
    if m < 2:
        raise DegenerateScenario(f"dual calibration needs at least 2 measurements, got {m}")
    for name, stack in (("A", scenario.A), ("B", scenario.B), ("C", scenario.C)):
        for i in range(m):
            R = stack[i, :3, :3]
            if abs(np.linalg.det(R) - 1.0) > 1e-6 or np.linalg.norm(R.T @ R - np.eye(3)) > 1e-6:
                raise DegenerateScenario(f"measurement {name}[{i}] has an invalid rotation part")
    if tau_u is None:
        if scenario.truth_x is None:
            raise InvalidInput("tau_u is required when the scenario has no ground truth")
        origins = [np.zeros((1, 3)), scenario.A[:, :3, 3]]
        for i in range(m):
            T_c = scenario.A[i] @ scenario.truth_x
            T_eb = scenario.truth_y @ scenario.C[i]
            T_t = T_eb @ scenario.truth_z
            origins += [T_c[None, :3, 3], T_eb[None, :3, 3], T_t[None, :3, 3], scenario.truth_y[None, :3, 3]]
        tau_u = 2.0 * bounding_diameter(np.concatenate(origins, axis=0))

    rc = [f"rc{i}" for i in range(m)]
    reb = [f"reb{i}" for i in range(m)]
    rt = [f"rt{i}" for i in range(m)]
    blocks: list[PsdBlockSpec] = []
    groups: list[TraceGroup] = []
    eqs: list[LinearRow] = []
    ineqs: list[LinearRow] = []
    for name in rc + reb + rt:
        blocks.append(PsdBlockSpec(name, 7, f"g_{name}"))
        groups.append(TraceGroup(f"g_{name}", ROT_TRACE, (name,)))
        eqs += mf.rotation_constraint_rows(name)

    eac, wb, ebt = [], [], []
    for i in range(m):
        for store, stem in ((eac, f"eac{i}"), (wb, f"wb{i}"), (ebt, f"ebt{i}")):
            triple = _triple(stem)
            store.append(triple)
            for bid in triple:
                blocks.append(PsdBlockSpec(bid, 4, f"g_{stem}"))
            groups.append(TraceGroup(f"g_{stem}", TRA_TRACE, triple))
            t_eqs, t_ineqs = mf.translation_constraint_rows(triple)
            eqs += t_eqs
            ineqs += t_ineqs

    pairs: list[mf.PairBlockSet] = []
    for i in range(m):
        rv = tuple(f"pv{i}_{l}" for l in range(3))
        rr = tuple(tuple(f"pr{i}_{l1}{l2}" for l2 in range(2)) for l1 in range(3))
        pair = mf.PairBlockSet(rv, rr)
        pairs.append(pair)
        for bid in pair.all_blocks():
            blocks.append(PsdBlockSpec(bid, 7, f"g_{bid}"))
            groups.append(TraceGroup(f"g_{bid}", ROT_TRACE, (bid,)))
        eqs += mf.pair_product_rows(
            pair,
            mf.rot_col_exprs(reb[i]),
            mf.rot_col_exprs(rt[i]),
            mf.v_exprs(ebt[i]),
            label=f"cav{i}",
        )

    # transformation equalities on a spanning set of configuration pairs
    def x_side(i: int) -> mf.FrameBinding:
        return mf.FrameBinding(
            triple=eac[i],
            base_rotation=scenario.A[i, :3, :3],
            target_cols=mf.rot_col_exprs(rc[i]),
        )

    def y_side(i: int) -> mf.FrameBinding:
        R_C = scenario.C[i, :3, :3]
        cols = [mf.rot_apply_known(reb[i], R_C[l2, :]) for l2 in range(3)]
        return mf.FrameBinding(triple=wb[i], base_rotation=np.eye(3), target_cols=cols)

    def z_side(i: int) -> mf.FrameBinding:
        return mf.FrameBinding(triple=ebt[i], pair=pairs[i])

    for i in range(1, m):
        eqs += mf.transform_equality_rows(x_side(0), x_side(i), label=f"xeq:{i}")
        eqs += mf.transform_equality_rows(y_side(0), y_side(i), label=f"yeq:{i}")
        eqs += mf.transform_equality_rows(z_side(0), z_side(i), label=f"zeq:{i}")

    residuals: list[LinExpr] = []
    weights: list[float] = []
    for i in range(m):
        R_B, t_B = scenario.B[i, :3, :3], scenario.B[i, :3, 3]
        R_C, t_C = scenario.C[i, :3, :3], scenario.C[i, :3, 3]
        t_A = scenario.A[i, :3, 3]
        rt_entries = mf.rot_entry_exprs(rt[i])
        for b in range(3):
            rc_col = mf.rot_apply_known(rc[i], R_B[:, b])
            for a in range(3):
                residuals.append(rc_col[a] - rt_entries[a][b])
                weights.append(1.0)
        fk1_tauv = mf.tauv_exprs(eac[i])
        rc_tb = mf.rot_apply_known(rc[i], t_B)
        fk2_wb = mf.tauv_exprs(wb[i])
        reb_tc = mf.rot_apply_known(reb[i], R_C.T @ t_C)
        fk2_ebt = mf.tauv_exprs(ebt[i])
        corner = LinExpr.entry(rc[i], 6, 6)
        for a in range(3):
            fk1 = float(t_A[a]) * corner + tau_u * fk1_tauv[a] + rc_tb[a]
            fk2 = tau_u * fk2_wb[a] + reb_tc[a] + tau_u * fk2_ebt[a]
            residuals.append(fk1 - fk2)
            weights.append(gamma_w)

    from .blocks import BlockLayout

    layout = BlockLayout(blocks, [])
    Q, c, G = objective_from_residuals(residuals, layout, weights=weights)
    problem = assemble_problem(
        blocks, Q, c, eqs, groups, ineqs, gram_factor=G,
        meta={"kind": "dualcal", "tau_u": tau_u, "gamma_w": gamma_w},
    )
    index = DualCalIndexMap(
        rc=rc, reb=reb, rt=rt, eac_triples=eac, wb_triples=wb, ebt_triples=ebt,
        pairs=pairs, tau_u=tau_u, gamma_w=gamma_w,
        a_measure=np.array(scenario.A, dtype=float),
        c_measure=np.array(scenario.C, dtype=float),
    )
    return problem, index


def lift_dualcal_truth(scenario: DualCalScenario, index: DualCalIndexMap) -> tuple[dict, dict]:
    if scenario.truth_x is None:
        raise InvalidInput("scenario carries no ground truth")
    X, Y, Z = scenario.truth_x, scenario.truth_y, scenario.truth_z
    blocks: dict[str, np.ndarray] = {}
    for i in range(scenario.m):
        T_c = scenario.A[i] @ X
        T_eb = Y @ scenario.C[i]
        T_t = T_eb @ Z
        blocks[index.rc[i]] = mf.lift_rotation(T_c[:3, :3])
        blocks[index.reb[i]] = mf.lift_rotation(T_eb[:3, :3])
        blocks[index.rt[i]] = mf.lift_rotation(T_t[:3, :3])
        tau, v = sp_pose_for(scenario.A[i, :3, 3], T_c[:3, 3], index.tau_u)
        blocks.update(dict(zip(index.eac_triples[i], mf.lift_translation(tau, v))))
        tau, v = sp_pose_for(np.zeros(3), Y[:3, 3], index.tau_u)
        blocks.update(dict(zip(index.wb_triples[i], mf.lift_translation(tau, v))))
        tau, v_dir = sp_pose_for(T_eb[:3, 3], T_t[:3, 3], index.tau_u)
        blocks.update(dict(zip(index.ebt_triples[i], mf.lift_translation(tau, v_dir))))
        lifted = mf.lift_pair_blocks(T_eb[:3, :3], T_t[:3, :3], v_dir)
        pair = index.pairs[i]
        for l1 in range(3):
            blocks[pair.rv_blocks[l1]] = lifted[f"rv{l1}"]
            for l2 in range(2):
                blocks[pair.rr_blocks[l1][l2]] = lifted[f"rr{l1}{l2}"]
    return blocks, {}


# ---------------------------------------------------------------------------
# extraction


@dataclass
class PnpSolution:
    rotation: np.ndarray
    translation: np.ndarray
    taus: list[float]
    directions: list[np.ndarray]


@dataclass
class HandEyeSolution:
    x: np.ndarray  # (4, 4) hand-eye transform
    camera_poses: list[np.ndarray]
    target_pose: np.ndarray
    x_spread: float  # max deviation of per-configuration X estimates


@dataclass
class DualCalSolution:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    spread: float


POLAR_LOWER = 1e-9
POLAR_UPPER = 1e-4


def _orthogonality_defect(R: np.ndarray) -> float:
    return float(np.linalg.norm(R.T @ R - np.eye(3)))


def _polar_project(R: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(R)
    S = np.diag([1.0, 1.0, float(np.sign(np.linalg.det(U @ Vt)))])
    return U @ S @ Vt


def _extract_rotation(Y: np.ndarray, feas_tol: float, defect_limit: float) -> np.ndarray:
    R = mf.recover_rotation(Y, tol=feas_tol)
    defect = _orthogonality_defect(R)
    if defect <= POLAR_LOWER:
        return R
    if defect > defect_limit:
        raise ExtractionFailed(f"orthogonality defect {defect:.3e} exceeds {defect_limit:.0e}")
    return _polar_project(R)


def _check_rank1(problem_groups, blocks, rank_tol: float) -> None:
    for group in problem_groups:
        mats = [blocks[b] for b in group.members]
        if not mf.rank1_check(mats, group.trace_value, tol=rank_tol):
            raise NotRankOne(f"trace group {group.group_id} fails the rank-1 check at {rank_tol:.0e}")


def extract_solution(
    problem: TcsdpProblem,
    blocks: dict[str, np.ndarray],
    frees: dict[str, float],
    index,
    rank_tol: float = 1e-4,
    feas_tol: float = 1e-4,
    defect_limit: float = POLAR_UPPER,
):
    """Read transforms out of (near-)rank-1 blocks.

    Gate: every trace group must pass the rank-1 check at `rank_tol`
    (NotRankOne otherwise).  Rotations with orthogonality defect in
    (1e-9, defect_limit] are re-projected onto SO(3) by polar
    decomposition; larger defects raise ExtractionFailed."""
    _check_rank1(problem.trace_groups, blocks, rank_tol)
    kind = problem.meta.get("kind")
    if kind == "pnp":
        R = _extract_rotation(blocks[index.cam], feas_tol, defect_limit)
        t = np.array([frees[name] for name in index.tc])
        taus, dirs = [], []
        for triple in index.triples:
            tau, v = mf.recover_translation([blocks[b] for b in triple], tol=feas_tol)
            taus.append(tau)
            dirs.append(v)
        return PnpSolution(rotation=R, translation=t, taus=taus, directions=dirs)
    if kind == "handeye":
        tau_u = index.tau_u
        cams = []
        xs = []
        for i, cam in enumerate(index.cams):
            R_c = _extract_rotation(blocks[cam], feas_tol, defect_limit)
            sd = mf.recover_scaled_direction([blocks[b] for b in index.ec_triples[i]], tol=feas_tol)
            ee = index.ee_poses[i]
            t_c = ee[:3, 3] + tau_u * sd
            cams.append(make_transform(R_c, t_c))
            xs.append(transform_inverse(ee) @ cams[-1])
        spread = max(float(np.max(np.abs(x - xs[0]))) for x in xs)
        R_f = _extract_rotation(blocks[index.target], feas_tol, defect_limit)
        sd0 = mf.recover_scaled_direction([blocks[b] for b in index.cf_triples[0][0]], tol=feas_tol)
        f0_world = cams[0][:3, 3] + tau_u * sd0
        t_f = f0_world - R_f @ index.features_body[0]
        return HandEyeSolution(
            x=xs[0], camera_poses=cams, target_pose=make_transform(R_f, t_f), x_spread=spread
        )
    if kind == "dualcal":
        tau_u = index.tau_u
        xs, ys, zs = [], [], []
        for i in range(len(index.rc)):
            R_c = _extract_rotation(blocks[index.rc[i]], feas_tol, defect_limit)
            R_eb = _extract_rotation(blocks[index.reb[i]], feas_tol, defect_limit)
            R_t = _extract_rotation(blocks[index.rt[i]], feas_tol, defect_limit)
            A_i = index.a_measure[i]
            C_i = index.c_measure[i]
            sd_eac = mf.recover_scaled_direction([blocks[b] for b in index.eac_triples[i]], tol=feas_tol)
            sd_wb = mf.recover_scaled_direction([blocks[b] for b in index.wb_triples[i]], tol=feas_tol)
            sd_ebt = mf.recover_scaled_direction([blocks[b] for b in index.ebt_triples[i]], tol=feas_tol)
            R_A = A_i[:3, :3]
            xs.append(make_transform(R_A.T @ R_c, R_A.T @ (tau_u * sd_eac)))
            R_y = R_eb @ C_i[:3, :3].T
            ys.append(make_transform(R_y, tau_u * sd_wb))
            zs.append(make_transform(R_eb.T @ R_t, R_eb.T @ (tau_u * sd_ebt)))
        spread = 0.0
        for stack in (xs, ys, zs):
            for mat in stack[1:]:
                spread = max(spread, float(np.max(np.abs(mat - stack[0]))))
        return DualCalSolution(x=xs[0], y=ys[0], z=zs[0], spread=spread)
    raise InvalidInput(f"unknown problem kind {kind!r}")
