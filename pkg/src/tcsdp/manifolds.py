"""Fixed-trace PSD liftings of rotations and bounded translations.

A rotation R lifts to the 7x7 outer product of (R[:,0]; R[:,1]; 1); its
structural constraint set pins the two unit column norms, their
orthogonality, and the homogeneous corner, which also fixes trace = 3.
A pair (tau, v) with tau in [0,1] and unit v lifts to three 4x4 outer
products of (sqrt(tau) v_l, sqrt(1-tau) v_l, sqrt(tau), sqrt(1-tau)); the
triple has a fixed trace sum of 4.  Recovery maps are linear and exact on
rank-1 blocks.

Pair-product blocks carry bilinear terms between an unknown rotation and
either a direction or a second unknown rotation; they reuse the rotation
block structure minus the orthogonality row (their cross trace IS the
carried product).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidBinding, InvalidBlock, InvalidInput
from .linexpr import LinearRow, LinExpr, eq, ge, le

ROTATION_DIM = 7
TRANSLATION_DIM = 4
ROTATION_TRACE = 3.0
TRANSLATION_TRACE = 4.0
DEFAULT_FEAS_TOL = 1e-6

Triple = tuple[str, str, str]


# ---------------------------------------------------------------------------
# lifts


def lift_rotation(R: np.ndarray) -> np.ndarray:
    """7x7 rank-1 lifting of a rotation matrix."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise InvalidInput(f"expected 3x3 rotation, got {R.shape}")
    if np.linalg.norm(R.T @ R - np.eye(3)) > 1e-9 or np.linalg.det(R) <= 0:
        raise InvalidInput("input is not a rotation matrix")
    stacked = np.concatenate([R[:, 0], R[:, 1], [1.0]])
    return np.outer(stacked, stacked)


def lift_translation(tau: float, v: np.ndarray) -> list[np.ndarray]:
    """Three 4x4 rank-1 blocks encoding (tau, v) with tau in [0,1], |v| = 1."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (3,):
        raise InvalidInput("direction must be a 3-vector")
    if not (-1e-12 <= tau <= 1.0 + 1e-12):
        raise InvalidInput(f"tau = {tau} outside [0, 1]")
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise InvalidInput(f"|v| = {np.linalg.norm(v)} is not 1")
    tau = min(max(float(tau), 0.0), 1.0)
    st, sc = np.sqrt(tau), np.sqrt(1.0 - tau)
    out = []
    for l in range(3):
        u = np.array([st * v[l], sc * v[l], st, sc])
        out.append(np.outer(u, u))
    return out


# ---------------------------------------------------------------------------
# linear reads (LinExpr views into lifted blocks)


def rot_col_exprs(block_id: str) -> list[list[LinExpr]]:
    """Three columns of the rotation as linear reads: corner column for the
    first two, cross-product expansion of the bilinear submatrix for the third."""
    col0 = [LinExpr.entry(block_id, a, 6) for a in range(3)]
    col1 = [LinExpr.entry(block_id, a + 3, 6) for a in range(3)]
    col2 = [
        LinExpr.entry(block_id, 1, 5) - LinExpr.entry(block_id, 2, 4),
        LinExpr.entry(block_id, 2, 3) - LinExpr.entry(block_id, 0, 5),
        LinExpr.entry(block_id, 0, 4) - LinExpr.entry(block_id, 1, 3),
    ]
    return [col0, col1, col2]


def rot_entry_exprs(block_id: str) -> list[list[LinExpr]]:
    """R[a][b] as linear reads (3x3 nested list)."""
    cols = rot_col_exprs(block_id)
    return [[cols[b][a] for b in range(3)] for a in range(3)]


def rot_apply_known(block_id: str, w: np.ndarray) -> list[LinExpr]:
    """Reads of R @ w for a known 3-vector w."""
    cols = rot_col_exprs(block_id)
    return [sum((cols[b][a] * float(w[b]) for b in range(3)), LinExpr()) for a in range(3)]


def tau_expr(triple: Triple) -> LinExpr:
    return LinExpr.entry(triple[0], 2, 2)


def v_exprs(triple: Triple) -> list[LinExpr]:
    return [
        LinExpr.entry(triple[l], 0, 2) + LinExpr.entry(triple[l], 1, 3) for l in range(3)
    ]


def tauv_exprs(triple: Triple) -> list[LinExpr]:
    return [LinExpr.entry(triple[l], 0, 2) for l in range(3)]


def scaled_v_exprs(triple: Triple) -> dict[str, list[LinExpr]]:
    """The three v-scaled linear reads available in a translation triple."""
    return {
        "tau_v": [LinExpr.entry(triple[l], 0, 2) for l in range(3)],
        "comp_v": [LinExpr.entry(triple[l], 1, 3) for l in range(3)],
        "geo_v": [LinExpr.entry(triple[l], 0, 3) for l in range(3)],
    }


def pair_cross_trace_expr(block_id: str) -> LinExpr:
    """Inner product carried by a pair block: trace of its (0:3, 3:6) submatrix."""
    out = LinExpr()
    for a in range(3):
        out = out + LinExpr.entry(block_id, a, a + 3)
    return out


# ---------------------------------------------------------------------------
# structural constraint rows


def rotation_constraint_rows(block_id: str, include_cross_trace: bool = True) -> list[LinearRow]:
    """Equality rows of the rotation block set: two unit traces, zero cross
    trace, unit corner.  PSD-ness and the trace group are registered at
    problem assembly."""
    rows = []
    upper = LinExpr()
    lower = LinExpr()
    cross = LinExpr()
    for a in range(3):
        upper.add_entry(block_id, a, a, 1.0)
        lower.add_entry(block_id, a + 3, a + 3, 1.0)
        cross.add_entry(block_id, a, a + 3, 1.0)
    rows.append(eq(upper, 1.0, label=f"rot:{block_id}:trace_c1"))
    rows.append(eq(lower, 1.0, label=f"rot:{block_id}:trace_c2"))
    if include_cross_trace:
        rows.append(eq(cross, 0.0, label=f"rot:{block_id}:ortho"))
    rows.append(eq(LinExpr.entry(block_id, 6, 6), 1.0, label=f"rot:{block_id}:corner"))
    return rows


def pair_structure_rows(block_id: str) -> list[LinearRow]:
    """Rotation-block structure minus the orthogonality row: a pair block's
    cross trace holds the bilinear product it exists to carry."""
    return rotation_constraint_rows(block_id, include_cross_trace=False)


def translation_constraint_rows(triple: Triple) -> tuple[list[LinearRow], list[LinearRow]]:
    """Equality and inequality rows of the translation triple constraint set.

    Families (per defining item): per-block 2x2 diagonal sums, the
    off-diagonal equality, entry boxes, the tau boxes, cross-matrix
    consistency of the tau entries, and the three unit-norm coupling rows.
    The fixed trace sum is registered as this triple's trace group.
    """
    eqs: list[LinearRow] = []
    ineqs: list[LinearRow] = []
    b0 = triple[0]
    for l, bid in enumerate(triple):
        diag = LinExpr.entry(bid, 2, 2) + LinExpr.entry(bid, 3, 3)
        eqs.append(eq(diag, 1.0, label=f"tr3:{bid}:diag_unit"))
        eqs.append(
            eq(
                LinExpr.entry(bid, 0, 3) - LinExpr.entry(bid, 1, 2),
                0.0,
                label=f"tr3:{bid}:offdiag_eq",
            )
        )
        for (i, j) in ((0, 2), (0, 3), (1, 2), (1, 3)):
            ineqs.append(ge(LinExpr.entry(bid, i, j), -1.0, label=f"tr3:{bid}:lo_{i}{j}"))
            ineqs.append(le(LinExpr.entry(bid, i, j), 1.0, label=f"tr3:{bid}:hi_{i}{j}"))
        ineqs.append(ge(LinExpr.entry(bid, 2, 2), 0.0, label=f"tr3:{bid}:tau_lo"))
        ineqs.append(le(LinExpr.entry(bid, 2, 2), 1.0, label=f"tr3:{bid}:tau_hi"))
        ineqs.append(ge(LinExpr.entry(bid, 2, 3), 0.0, label=f"tr3:{bid}:geo_lo"))
        ineqs.append(le(LinExpr.entry(bid, 2, 3), 1.0, label=f"tr3:{bid}:geo_hi"))
        if l > 0:
            eqs.append(
                eq(
                    LinExpr.entry(b0, 2, 2) - LinExpr.entry(bid, 2, 2),
                    0.0,
                    label=f"tr3:{bid}:tau_link",
                )
            )
            eqs.append(
                eq(
                    LinExpr.entry(b0, 2, 3) - LinExpr.entry(bid, 2, 3),
                    0.0,
                    label=f"tr3:{bid}:geo_link",
                )
            )
    sum12 = sum((LinExpr.entry(bid, 0, 1) for bid in triple), LinExpr())
    eqs.append(eq(sum12 - LinExpr.entry(b0, 2, 3), 0.0, label=f"tr3:{b0}:unit_cross"))
    sum11 = sum((LinExpr.entry(bid, 0, 0) for bid in triple), LinExpr())
    eqs.append(eq(sum11 - LinExpr.entry(b0, 2, 2), 0.0, label=f"tr3:{b0}:unit_tau"))
    sum22 = sum((LinExpr.entry(bid, 1, 1) for bid in triple), LinExpr())
    eqs.append(eq(sum22 - LinExpr.entry(b0, 3, 3), 0.0, label=f"tr3:{b0}:unit_comp"))
    return eqs, ineqs


# ---------------------------------------------------------------------------
# recovery


def check_rotation_block(Y: np.ndarray, tol: float = DEFAULT_FEAS_TOL) -> float:
    """Largest violation of the rotation block constraint set (PSD included)."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (7, 7):
        raise InvalidInput(f"expected 7x7 block, got {Y.shape}")
    viol = max(
        abs(np.trace(Y[:3, :3]) - 1.0),
        abs(np.trace(Y[3:6, 3:6]) - 1.0),
        abs(np.trace(Y[:3, 3:6])),
        abs(Y[6, 6] - 1.0),
        float(np.max(np.abs(Y - Y.T))),
    )
    min_eig = float(np.linalg.eigvalsh(0.5 * (Y + Y.T)).min())
    return max(viol, -min_eig, 0.0)


def recover_rotation(Y: np.ndarray, tol: float = DEFAULT_FEAS_TOL) -> np.ndarray:
    """Linear recovery of the rotation: first two columns from the corner
    column, third from the cross-product expansion of the bilinear
    submatrix.  Exact (and in SO(3)) when the block is rank-1."""
    viol = check_rotation_block(Y, tol)
    if viol > tol:
        raise InvalidBlock(f"rotation block violates constraints by {viol:.3e}")
    R = np.empty((3, 3))
    R[:, 0] = Y[:3, 6]
    R[:, 1] = Y[3:6, 6]
    R[:, 2] = [Y[1, 5] - Y[2, 4], Y[2, 3] - Y[0, 5], Y[0, 4] - Y[1, 3]]
    return R


def check_translation_blocks(blocks: list[np.ndarray], tol: float = DEFAULT_FEAS_TOL) -> float:
    """Largest violation of the translation triple constraint set."""
    if len(blocks) != 3:
        raise InvalidInput("translation lifting consists of three blocks")
    viol = 0.0
    b0 = blocks[0]
    trace_sum = 0.0
    s11 = s22 = s12 = 0.0
    for Y in blocks:
        Y = np.asarray(Y, dtype=float)
        if Y.shape != (4, 4):
            raise InvalidInput(f"expected 4x4 block, got {Y.shape}")
        viol = max(viol, float(np.max(np.abs(Y - Y.T))))
        viol = max(viol, abs(Y[2, 2] + Y[3, 3] - 1.0))
        viol = max(viol, abs(Y[0, 3] - Y[1, 2]))
        for (i, j) in ((0, 2), (0, 3), (1, 2), (1, 3)):
            viol = max(viol, abs(Y[i, j]) - 1.0)
        viol = max(viol, -Y[2, 2], Y[2, 2] - 1.0, -Y[2, 3], Y[2, 3] - 1.0)
        viol = max(viol, abs(Y[2, 2] - b0[2, 2]), abs(Y[2, 3] - b0[2, 3]))
        viol = max(viol, -float(np.linalg.eigvalsh(0.5 * (Y + Y.T)).min()))
        trace_sum += np.trace(Y)
        s11 += Y[0, 0]
        s22 += Y[1, 1]
        s12 += Y[0, 1]
    viol = max(viol, abs(trace_sum - TRANSLATION_TRACE))
    viol = max(viol, abs(s11 - b0[2, 2]), abs(s22 - b0[3, 3]), abs(s12 - b0[2, 3]))
    return max(viol, 0.0)


def recover_translation(blocks: list[np.ndarray], tol: float = DEFAULT_FEAS_TOL) -> tuple[float, np.ndarray]:
    """(tau, v) from the triple: tau from the (2,2) entry, components of v
    from the (0,2) + (1,3) sums.  |v| = 1 when all three blocks are rank-1."""
    viol = check_translation_blocks(blocks, tol)
    if viol > tol:
        raise InvalidBlock(f"translation triple violates constraints by {viol:.3e}")
    tau = float(blocks[0][2, 2])
    v = np.array([b[0, 2] + b[1, 3] for b in blocks])
    return tau, v


def recover_scaled_direction(blocks: list[np.ndarray], tol: float = DEFAULT_FEAS_TOL) -> np.ndarray:
    """tau * v read linearly from the (0, 2) entries (valid at rank 1)."""
    viol = check_translation_blocks(blocks, tol)
    if viol > tol:
        raise InvalidBlock(f"translation triple violates constraints by {viol:.3e}")
    return np.array([b[0, 2] for b in blocks])


def rank1_check(blocks: list[np.ndarray], trace_value: float, tol: float = 1e-9) -> bool:
    """True iff the group's fixed trace minus the sum of top eigenvalues is
    within tolerance (equivalently: every block in the group is rank-1)."""
    lam = 0.0
    for Y in blocks:
        Y = np.asarray(Y, dtype=float)
        lam += float(np.linalg.eigvalsh(0.5 * (Y + Y.T)).max())
    return float(trace_value) - lam <= tol


# ---------------------------------------------------------------------------
# constant-transform (C_ft) rows


@dataclass
class FrameBinding:
    """One configuration side of a constant-transform constraint.

    The SP robot between the two frames supplies `triple`; the base
    rotation is either a known constant or handled through pair blocks;
    the second frame's rotation enters as linear column reads.
    """

    triple: Triple
    base_rotation: np.ndarray | None = None
    target_cols: list[list[LinExpr]] | None = None
    pair: "PairBlockSet | None" = None


@dataclass(frozen=True)
class PairBlockSet:
    """Pair-product blocks of one configuration: three rotation-direction
    blocks (one per base column) and six rotation-rotation blocks indexed
    [l1][l2] for base column l1 and target column l2 in {0, 1}."""

    rv_blocks: tuple[str, str, str]
    rr_blocks: tuple[tuple[str, str], tuple[str, str], tuple[str, str]]

    def all_blocks(self) -> list[str]:
        out = list(self.rv_blocks)
        for pair in self.rr_blocks:
            out.extend(pair)
        return out


def _vec_eq_rows(lhs: list[LinExpr], rhs: list[LinExpr], label: str) -> list[LinearRow]:
    return [eq(lhs[a] - rhs[a], 0.0, label=f"{label}:{a}") for a in range(len(lhs))]


def transform_equality_rows(side_a: FrameBinding, side_b: FrameBinding, label: str = "cft") -> list[LinearRow]:
    """Rows forcing the relative transform between two frames to agree
    across two configurations.

    With known base rotations the rows are linear in translation/rotation
    block entries: one extension row, nine direction rows (the three
    v-scaled reads expressed in the base frame), and eighteen rotation rows
    (all three target columns in both the base frame and the world frame).
    With unknown base rotations the bilinear terms are read from pair
    blocks: one extension row, three direction rows, six rotation rows.
    """
    rows = [
        eq(tau_expr(side_a.triple) - tau_expr(side_b.triple), 0.0, label=f"{label}:tau")
    ]
    if side_a.base_rotation is not None and side_b.base_rotation is not None:
        if side_a.target_cols is None or side_b.target_cols is None:
            raise InvalidBinding("known-base constraint requires target rotation reads")
        Ra, Rb = np.asarray(side_a.base_rotation), np.asarray(side_b.base_rotation)
        scaled_a, scaled_b = scaled_v_exprs(side_a.triple), scaled_v_exprs(side_b.triple)
        for family in ("tau_v", "comp_v", "geo_v"):
            lhs = _apply_known_T(Ra, scaled_a[family])
            rhs = _apply_known_T(Rb, scaled_b[family])
            rows += _vec_eq_rows(lhs, rhs, f"{label}:dir_{family}")
        world = Ra @ Rb.T
        for l2 in range(3):
            lhs = _apply_known_T(Ra, side_a.target_cols[l2])
            rhs = _apply_known_T(Rb, side_b.target_cols[l2])
            rows += _vec_eq_rows(lhs, rhs, f"{label}:rot_base_c{l2}")
            rhs_world = _apply_known(world, side_b.target_cols[l2])
            rows += _vec_eq_rows(side_a.target_cols[l2], rhs_world, f"{label}:rot_world_c{l2}")
        return rows
    if side_a.pair is not None and side_b.pair is not None:
        for l1 in range(3):
            expr = pair_cross_trace_expr(side_a.pair.rv_blocks[l1]) - pair_cross_trace_expr(
                side_b.pair.rv_blocks[l1]
            )
            rows.append(eq(expr, 0.0, label=f"{label}:dir_l{l1}"))
        for l1 in range(3):
            for l2 in range(2):
                expr = pair_cross_trace_expr(side_a.pair.rr_blocks[l1][l2]) - pair_cross_trace_expr(
                    side_b.pair.rr_blocks[l1][l2]
                )
                rows.append(eq(expr, 0.0, label=f"{label}:rot_l{l1}{l2}"))
        return rows
    raise InvalidBinding("bindings must both be known-base or both carry pair blocks")


def _apply_known(M: np.ndarray, vec_exprs: list[LinExpr]) -> list[LinExpr]:
    """Reads of M @ e for known M and expression vector e."""
    return [
        sum((vec_exprs[b] * float(M[a, b]) for b in range(3)), LinExpr()) for a in range(3)
    ]


def _apply_known_T(M: np.ndarray, vec_exprs: list[LinExpr]) -> list[LinExpr]:
    """Reads of M' @ e for known M and expression vector e."""
    return [
        sum((vec_exprs[b] * float(M[b, a]) for b in range(3)), LinExpr()) for a in range(3)
    ]


def pair_product_rows(
    pair: PairBlockSet,
    base_cols: list[list[LinExpr]],
    target_cols: list[list[LinExpr]],
    direction: list[LinExpr],
    label: str = "cav",
) -> list[LinearRow]:
    """Structural rows for the nine pair blocks plus linking rows equating
    their corner-column copies of the base rotation columns, the direction,
    and the target rotation columns with the primary block reads."""
    if len(base_cols) != 3 or len(target_cols) < 2 or len(direction) != 3:
        raise InvalidBinding("pair product rows need 3 base columns, 2 target columns, a direction")
    rows: list[LinearRow] = []
    for l1 in range(3):
        bid = pair.rv_blocks[l1]
        rows += pair_structure_rows(bid)
        top = [LinExpr.entry(bid, a, 6) for a in range(3)]
        bottom = [LinExpr.entry(bid, a + 3, 6) for a in range(3)]
        rows += _vec_eq_rows(top, base_cols[l1], f"{label}:rv{l1}:base")
        rows += _vec_eq_rows(bottom, direction, f"{label}:rv{l1}:dir")
    for l1 in range(3):
        for l2 in range(2):
            bid = pair.rr_blocks[l1][l2]
            rows += pair_structure_rows(bid)
            top = [LinExpr.entry(bid, a, 6) for a in range(3)]
            bottom = [LinExpr.entry(bid, a + 3, 6) for a in range(3)]
            rows += _vec_eq_rows(top, base_cols[l1], f"{label}:rr{l1}{l2}:base")
            rows += _vec_eq_rows(bottom, target_cols[l2], f"{label}:rr{l1}{l2}:target")
    return rows


def lift_pair_blocks(R1: np.ndarray, R2: np.ndarray, v: np.ndarray) -> dict[str, np.ndarray]:
    """Ground-truth values of a pair block set, keyed 'rv{l1}' / 'rr{l1}{l2}'."""
    out = {}
    for l1 in range(3):
        u = np.concatenate([R1[:, l1], v, [1.0]])
        out[f"rv{l1}"] = np.outer(u, u)
        for l2 in range(2):
            w = np.concatenate([R1[:, l1], R2[:, l2], [1.0]])
            out[f"rr{l1}{l2}"] = np.outer(w, w)
    return out
