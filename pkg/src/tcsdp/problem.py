"""Trace-constrained SDP problems: PSD blocks with fixed group traces, a
convex quadratic objective over the flat vector, and sparse linear rows.

The quadratic objective is y' Q y + c' y with Q PSD.  Builders produce it
from a stack of linear residual expressions (Q = A'A), in which case the
Gram factor is kept so the epigraph conversion can reuse it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .blocks import BlockLayout, CompiledRows, PsdBlockSpec, TraceGroup
from .errors import InvalidInput, InvalidObjective
from .linexpr import LinearRow, LinExpr, eq

PSD_CHECK_TOL = 1e-9


@dataclass
class TcsdpProblem:
    blocks: list[PsdBlockSpec]
    trace_groups: list[TraceGroup]
    free_names: list[str]
    Q: sp.csr_matrix
    c: np.ndarray
    eq_rows: CompiledRows
    ineq_rows: CompiledRows  # canonical sense: matrix @ y >= rhs
    layout: BlockLayout
    gram_factor: np.ndarray | None = None  # G with Q = G'G when built from residuals
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.layout.size

    @property
    def trace_sum(self) -> float:
        """Sum of fixed trace values over all groups (lambda_bar_s)."""
        return float(sum(g.trace_value for g in self.trace_groups))

    def group_of(self, block_id: str) -> TraceGroup:
        for g in self.trace_groups:
            if block_id in g.members:
                return g
        raise InvalidInput(f"block {block_id} not in any trace group")

    def cost(self, y: np.ndarray) -> float:
        return float(y @ (self.Q @ y) + self.c @ y)

    def cost_of(self, block_values: dict[str, np.ndarray], frees: dict[str, float] | None = None) -> float:
        return self.cost(self.layout.vec(block_values, frees))

    def eq_residual(self, y: np.ndarray) -> float:
        r = self.eq_rows.residuals(y)
        return float(np.max(np.abs(r))) if r.size else 0.0

    def ineq_violation(self, y: np.ndarray) -> float:
        """Largest violation of the >= rows (0 when all satisfied)."""
        r = self.ineq_rows.residuals(y)
        return float(max(0.0, -np.min(r))) if r.size else 0.0

    def group_blocks(self, block_values: dict[str, np.ndarray]):
        """Blocks grouped per trace group, plus the group trace values."""
        groups = [[block_values[b] for b in g.members] for g in self.trace_groups]
        traces = [g.trace_value for g in self.trace_groups]
        return groups, traces


def _validate_psd(Q: sp.csr_matrix) -> None:
    n = Q.shape[0]
    if n == 0:
        return
    dense = Q.toarray()
    scale = float(np.max(np.abs(dense))) if dense.size else 0.0
    if scale == 0.0:
        return
    min_eig = float(np.linalg.eigvalsh(0.5 * (dense + dense.T)).min())
    if min_eig < -PSD_CHECK_TOL * scale:
        raise InvalidObjective(f"Q has eigenvalue {min_eig:.3e} below -{PSD_CHECK_TOL:.0e}*||Q||")


def assemble_problem(
    blocks: list[PsdBlockSpec],
    Q: sp.spmatrix | np.ndarray,
    c: np.ndarray,
    equalities: list[LinearRow],
    trace_groups: list[TraceGroup],
    inequalities: list[LinearRow] | None = None,
    free_names: list[str] | None = None,
    gram_factor: np.ndarray | None = None,
    meta: dict | None = None,
) -> TcsdpProblem:
    """Validate and compile a trace-constrained SDP.

    A trace row (sum of member traces == group value) is appended per
    group, so the equality operator carries both user rows and trace rows.
    Rejects indefinite Q; when a Gram factor is supplied, Q = G'G holds by
    construction and the dense eigenvalue check is skipped.
    """
    free_names = list(free_names or [])
    layout = BlockLayout(blocks, free_names)
    Q = sp.csr_matrix(Q)
    c = np.asarray(c, dtype=float).reshape(-1)
    if Q.shape != (layout.size, layout.size):
        raise InvalidInput(f"Q shape {Q.shape} does not match layout size {layout.size}")
    if c.shape[0] != layout.size:
        raise InvalidInput(f"c length {c.shape[0]} does not match layout size {layout.size}")

    by_id = {b.block_id: b for b in blocks}
    grouped: set[str] = set()
    trace_rows: list[LinearRow] = []
    for g in trace_groups:
        expr = LinExpr()
        for member in g.members:
            if member not in by_id:
                raise InvalidInput(f"trace group {g.group_id}: unknown block {member}")
            if member in grouped:
                raise InvalidInput(f"block {member} appears in two trace groups")
            grouped.add(member)
            for i in range(by_id[member].dim):
                expr.add_entry(member, i, i, 1.0)
        trace_rows.append(eq(expr, g.trace_value, label=f"trace:{g.group_id}"))
    missing = set(by_id) - grouped
    if missing:
        raise InvalidInput(f"blocks outside any trace group: {sorted(missing)}")

    for row in equalities + (inequalities or []):
        if row.sense not in ("==", ">="):
            raise InvalidInput(f"row {row.label!r} has unsupported sense")

    if gram_factor is not None:
        gram_factor = np.asarray(gram_factor, dtype=float)
        if gram_factor.shape[1] != layout.size:
            raise InvalidInput("gram factor column count does not match layout size")
    else:
        _validate_psd(Q)

    eq_compiled = CompiledRows.from_rows(list(equalities) + trace_rows, layout)
    ineq_compiled = CompiledRows.from_rows(list(inequalities or []), layout)
    return TcsdpProblem(
        blocks=list(blocks),
        trace_groups=list(trace_groups),
        free_names=free_names,
        Q=Q,
        c=c,
        eq_rows=eq_compiled,
        ineq_rows=ineq_compiled,
        layout=layout,
        gram_factor=gram_factor,
        meta=dict(meta or {}),
    )


def objective_from_residuals(
    residuals: list[LinExpr], layout: BlockLayout, weights: list[float] | None = None
) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
    """Quadratic form of sum_k w_k * residual_k(y)^2.

    Residual expressions must be homogeneous (zero constant part): builders
    route constants through block entries that are pinned to 1, so the
    evaluated cost equals the raw squared residual at every feasible point.
    Returns (Q, c, G) with Q = G'G and c = 0.
    """
    mat, consts = layout.compile_exprs(residuals)
    if np.any(np.abs(consts) > 0):
        bad = int(np.argmax(np.abs(consts)))
        raise InvalidInput(
            f"residual {bad} has constant part {consts[bad]:.3e}; "
            "route constants through a homogenizing block entry"
        )
    G = mat.toarray()
    if weights is not None:
        G = G * np.sqrt(np.asarray(weights, dtype=float))[:, None]
    Q = sp.csr_matrix(G.T @ G)
    return Q, np.zeros(layout.size), G
