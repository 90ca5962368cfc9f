"""Epigraph standard form of a trace-constrained SDP.

The quadratic objective y'Qy + c'y becomes t + c'y with the Schur
complement LMI [[t, (Ly)'], [Ly, I]] where Q = L'L.  Inequality rows
turn into equality rows with nonnegative 1x1 slack blocks, so the
standard form carries only equalities plus PSD cones and maps one-to-one
onto the dual certificate structure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .backend import ConicProgram, LmiRow, SolverSettings, lmi_from_entries, solve_conic
from .certify import DualCertificate
from .errors import InvalidObjective
from .problem import TcsdpProblem

RANK_DROP_TOL = 1e-11
RECONSTRUCT_TOL = 1e-9


def factor_objective(Q: sp.spmatrix | np.ndarray, gram_factor: np.ndarray | None = None) -> np.ndarray:
    """Factor Q = L'L with rows of L for (numerically) zero eigenvalues dropped.

    Uses a symmetric eigendecomposition rather than Cholesky because Q from
    least-squares objectives is routinely rank deficient.  When the Gram
    factor G (Q = G'G) is available, the spectrum is taken from the small
    G G' matrix instead of the full Q.
    """
    if gram_factor is not None:
        G = np.asarray(gram_factor, dtype=float)
        if G.shape[0] == 0:
            return np.zeros((0, G.shape[1]))
        gram = G @ G.T
        vals, vecs = np.linalg.eigh(0.5 * (gram + gram.T))
        keep = vals > RANK_DROP_TOL * max(1.0, float(vals.max(initial=0.0)))
        return vecs[:, keep].T @ G

    dense = Q.toarray() if sp.issparse(Q) else np.asarray(Q, dtype=float)
    dense = 0.5 * (dense + dense.T)
    if dense.size == 0:
        return np.zeros((0, dense.shape[0]))
    vals, vecs = np.linalg.eigh(dense)
    scale = max(1.0, float(np.abs(vals).max(initial=0.0)))
    if vals.min(initial=0.0) < -RECONSTRUCT_TOL * scale:
        raise InvalidObjective(f"Q has eigenvalue {vals.min():.3e}; not PSD")
    keep = vals > RANK_DROP_TOL * scale
    return (np.sqrt(vals[keep])[:, None] * vecs[:, keep].T)


@dataclass
class StandardFormSdp:
    problem: TcsdpProblem
    L: np.ndarray  # r x N over the problem layout
    program: ConicProgram
    b: np.ndarray  # right-hand side of all equality rows (user + trace + slacked)
    row_labels: list[str]
    n_slack: int
    y_index: np.ndarray  # problem-layout coords inside the program layout
    t_index: int

    @property
    def epigraph_dim(self) -> int:
        return self.L.shape[0] + 1

    def embed(self, y: np.ndarray, t: float) -> np.ndarray:
        """Lift a problem-layout point into the program layout (slacks derived)."""
        x = np.zeros(self.program.size)
        x[self.y_index] = y
        if self.n_slack:
            slack_vals = self.problem.ineq_rows.residuals(y)
            n_block = self.problem.layout.n_block
            x[n_block : n_block + self.n_slack] = slack_vals
        x[self.t_index] = t
        return x

    def lmi_value(self, y: np.ndarray, t: float) -> np.ndarray:
        r = self.L.shape[0]
        m = np.eye(r + 1)
        m[0, 0] = t
        ly = self.L @ y
        m[0, 1:] = ly
        m[1:, 0] = ly
        return m


def to_standard_form(problem: TcsdpProblem) -> StandardFormSdp:
    """Convert Problem-1 data to the epigraph standard form program."""
    L = factor_objective(problem.Q, gram_factor=problem.gram_factor)
    r = L.shape[0]
    n_blocks = problem.layout.n_block
    n_free = len(problem.free_names)
    n_slack = problem.ineq_rows.n

    psd_dims = [b.dim for b in problem.blocks] + [1] * n_slack
    program_free = n_free + 1  # problem frees then the epigraph scalar t
    prog_size = n_blocks + n_slack + n_free + 1
    t_index = prog_size - 1

    y_index = np.concatenate(
        [np.arange(n_blocks), n_blocks + n_slack + np.arange(n_free)]
    ).astype(int)

    def pad(mat: sp.spmatrix) -> sp.csr_matrix:
        mat = sp.csr_matrix(mat)
        out = sp.lil_matrix((mat.shape[0], prog_size))
        out[:, y_index] = mat
        return sp.csr_matrix(out)

    a_parts = [pad(problem.eq_rows.matrix)]
    b_parts = [problem.eq_rows.rhs]
    labels = list(problem.eq_rows.labels)
    if n_slack:
        slacked = pad(problem.ineq_rows.matrix).tolil()
        for k in range(n_slack):
            slacked[k, n_blocks + k] = -1.0
        a_parts.append(sp.csr_matrix(slacked))
        b_parts.append(problem.ineq_rows.rhs)
        labels.extend(f"slack:{lbl}" for lbl in problem.ineq_rows.labels)
    A = sp.vstack(a_parts).tocsr()
    b = np.concatenate(b_parts)

    q = np.zeros(prog_size)
    q[y_index] = problem.c
    q[t_index] = 1.0

    entry_coefs: dict[tuple[int, int], np.ndarray] = {}
    t_row = np.zeros(prog_size)
    t_row[t_index] = 1.0
    entry_coefs[(0, 0)] = t_row
    for k in range(r):
        row = np.zeros(prog_size)
        row[y_index] = L[k]
        entry_coefs[(0, k + 1)] = row
    entry_consts = {(k + 1, k + 1): 1.0 for k in range(r)}
    lmi = lmi_from_entries(r + 1, prog_size, entry_coefs, entry_consts)

    program = ConicProgram(
        psd_dims=psd_dims,
        n_free=program_free,
        Q=None,
        q=q,
        A_eq=A,
        b_eq=b,
        lmis=[lmi],
    )
    return StandardFormSdp(
        problem=problem,
        L=L,
        program=program,
        b=b,
        row_labels=labels,
        n_slack=n_slack,
        y_index=y_index,
        t_index=t_index,
    )


@dataclass
class RelaxedSolution:
    blocks: dict[str, np.ndarray]
    frees: dict[str, float]
    t: float
    objective: float  # t + c'y as reported by the solver
    cost: float  # y'Qy + c'y evaluated on the returned point
    certificate: DualCertificate
    status: str
    iterations: int


def solve_relaxation(
    sf: StandardFormSdp, settings: SolverSettings | None = None, backend=None
) -> RelaxedSolution:
    """Solve the standard form and package primal blocks plus the dual certificate."""
    problem = sf.problem
    result = solve_conic(sf.program, settings=settings, backend=backend)
    n_real = len(problem.blocks)
    blocks = {spec.block_id: result.blocks[k] for k, spec in enumerate(problem.blocks)}
    frees = {name: float(result.frees[k]) for k, name in enumerate(problem.free_names)}
    t = float(result.frees[-1])
    y = problem.layout.vec(blocks, frees)

    S = {spec.block_id: result.psd_duals[k] for k, spec in enumerate(problem.blocks)}
    for k in range(sf.n_slack):
        S[f"__slack_{k}"] = result.psd_duals[n_real + k]
    certificate = DualCertificate(
        rho=result.eq_dual,
        S=S,
        Z=result.lmi_duals[0],
        b=sf.b.copy(),
        row_labels=list(sf.row_labels),
    )
    return RelaxedSolution(
        blocks=blocks,
        frees=frees,
        t=t,
        objective=result.objective,
        cost=problem.cost(y),
        certificate=certificate,
        status=result.status,
        iterations=result.iterations,
    )
