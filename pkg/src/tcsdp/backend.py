"""Pluggable conic-solver adapter.

The contract is a single entry point `solve_conic` over `ConicProgram`:
PSD variable blocks plus free scalars, a convex quadratic objective,
sparse equality / inequality rows, second-order-cone rows, and affine
LMI constraints.  One in-process backend ships (Clarabel, interior
point); results are deterministic for identical inputs and settings.

Coefficient data uses the same flat layout as the rest of the package
(full row-major d*d vectorization per block, then free scalars); the
adapter converts to the solver's scaled-triangle convention internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInput, NumericalFailure

# ---------------------------------------------------------------------------
# scaled svec helpers (upper triangle, column-major, off-diagonals * sqrt(2))

_SQRT2 = float(np.sqrt(2.0))


def svec_dim(n: int) -> int:
    return n * (n + 1) // 2


def svec_entries(n: int):
    """(i, j) pairs in svec order: (0,0), (0,1), (1,1), (0,2), ..."""
    for j in range(n):
        for i in range(j + 1):
            yield i, j


def svec(mat: np.ndarray) -> np.ndarray:
    n = mat.shape[0]
    out = np.empty(svec_dim(n))
    for k, (i, j) in enumerate(svec_entries(n)):
        out[k] = mat[i, j] if i == j else _SQRT2 * mat[i, j]
    return out


def smat(vec: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, n))
    for k, (i, j) in enumerate(svec_entries(n)):
        if i == j:
            out[i, i] = vec[k]
        else:
            out[i, j] = out[j, i] = vec[k] / _SQRT2
    return out


# ---------------------------------------------------------------------------
# program definition


@dataclass
class SocRow:
    """|| A x + b ||_2 <= c' x + d"""

    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    d: float


@dataclass
class LmiRow:
    """C0 + mat(coef @ x) >= 0, with `coef` mapping x to scaled-svec entries."""

    dim: int
    coef: sp.csr_matrix
    const: np.ndarray  # scaled svec of C0


def lmi_from_entries(
    dim: int,
    n_x: int,
    entry_coefs: dict[tuple[int, int], np.ndarray | sp.spmatrix],
    entry_consts: dict[tuple[int, int], float] | None = None,
) -> LmiRow:
    """Build an LmiRow from per-entry coefficient rows over x (upper triangle)."""
    m = svec_dim(dim)
    coef = sp.lil_matrix((m, n_x))
    const = np.zeros(m)
    consts = entry_consts or {}
    for k, (i, j) in enumerate(svec_entries(dim)):
        scale = 1.0 if i == j else _SQRT2
        if (i, j) in entry_coefs:
            row = entry_coefs[(i, j)]
            row = row.toarray().ravel() if sp.issparse(row) else np.asarray(row, dtype=float)
            coef[k, :] = scale * row
        if (i, j) in consts:
            const[k] = scale * consts[(i, j)]
    return LmiRow(dim=dim, coef=sp.csr_matrix(coef), const=const)


@dataclass
class ConicProgram:
    """min y'Qy + q'y over PSD blocks + free scalars, subject to linear rows."""

    psd_dims: list[int]
    n_free: int = 0
    Q: sp.spmatrix | None = None
    q: np.ndarray | None = None
    A_eq: sp.spmatrix | None = None
    b_eq: np.ndarray | None = None
    G_ineq: sp.spmatrix | None = None  # G y >= h
    h_ineq: np.ndarray | None = None
    socs: list[SocRow] = field(default_factory=list)
    lmis: list[LmiRow] = field(default_factory=list)

    @property
    def size(self) -> int:
        return int(sum(d * d for d in self.psd_dims)) + self.n_free

    def validate(self) -> None:
        n = self.size
        for name, mat in (("Q", self.Q), ("A_eq", self.A_eq), ("G_ineq", self.G_ineq)):
            if mat is not None and mat.shape[1] != n:
                raise InvalidInput(f"{name} has {mat.shape[1]} columns, expected {n}")
        if self.q is not None and len(self.q) != n:
            raise InvalidInput(f"q has length {len(self.q)}, expected {n}")
        for lmi in self.lmis:
            if lmi.coef.shape != (svec_dim(lmi.dim), n):
                raise InvalidInput("LMI coefficient shape mismatch")
        for soc in self.socs:
            if soc.A.shape[1] != n or len(soc.c) != n:
                raise InvalidInput("SOC coefficient shape mismatch")


@dataclass
class SolverSettings:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 200
    verbose: bool = False
    static_reg: float | None = None  # KKT static regularization override

    def __post_init__(self) -> None:
        if self.feas_tol <= 0 or self.gap_tol <= 0:
            raise InvalidInput("solver tolerances must be > 0")


@dataclass
class SolveResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    blocks: list[np.ndarray]
    frees: np.ndarray
    x: np.ndarray  # full flat layout
    objective: float
    eq_dual: np.ndarray  # rho: multipliers of A_eq y = b_eq
    ineq_dual: np.ndarray  # mu >= 0: multipliers of G y >= h
    psd_duals: list[np.ndarray]  # S_i per PSD variable block
    lmi_duals: list[np.ndarray]  # Z per LMI row
    iterations: int
    solve_time: float
    raw_status: str = ""

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


def _expansion(psd_dims: list[int], n_free: int) -> sp.csr_matrix:
    """Map internal [svec blocks; frees] coordinates to the flat layout."""
    rows, cols, vals = [], [], []
    full_off, tri_off = 0, 0
    for d in psd_dims:
        for k, (i, j) in enumerate(svec_entries(d)):
            if i == j:
                rows.append(full_off + i * d + j)
                cols.append(tri_off + k)
                vals.append(1.0)
            else:
                rows.append(full_off + i * d + j)
                cols.append(tri_off + k)
                vals.append(1.0 / _SQRT2)
                rows.append(full_off + j * d + i)
                cols.append(tri_off + k)
                vals.append(1.0 / _SQRT2)
        full_off += d * d
        tri_off += svec_dim(d)
    n_full = full_off + n_free
    n_int = tri_off + n_free
    for k in range(n_free):
        rows.append(full_off + k)
        cols.append(tri_off + k)
        vals.append(1.0)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_full, n_int))


class ClarabelBackend:
    """Interior-point backend (Clarabel)."""

    name = "clarabel"

    def solve(self, program: ConicProgram, settings: SolverSettings, warm_start=None) -> SolveResult:
        import clarabel

        program.validate()
        T = _expansion(program.psd_dims, program.n_free)
        n_int = T.shape[1]

        q = T.T @ (program.q if program.q is not None else np.zeros(program.size))
        if program.Q is not None and program.Q.nnz > 0:
            P = sp.triu(2.0 * (T.T @ sp.csr_matrix(program.Q) @ T)).tocsc()
        else:
            P = sp.csc_matrix((n_int, n_int))

        a_parts, b_parts, cones = [], [], []
        n_eq = program.A_eq.shape[0] if program.A_eq is not None else 0
        if n_eq:
            a_parts.append(sp.csr_matrix(program.A_eq) @ T)
            b_parts.append(np.asarray(program.b_eq, dtype=float))
            cones.append(clarabel.ZeroConeT(n_eq))
        n_ineq = program.G_ineq.shape[0] if program.G_ineq is not None else 0
        if n_ineq:
            a_parts.append(-(sp.csr_matrix(program.G_ineq) @ T))
            b_parts.append(-np.asarray(program.h_ineq, dtype=float))
            cones.append(clarabel.NonnegativeConeT(n_ineq))
        for soc in program.socs:
            top = sp.csr_matrix(-np.asarray(soc.c, dtype=float)[None, :])
            a_parts.append(sp.vstack([top, -sp.csr_matrix(soc.A)]) @ T)
            b_parts.append(np.concatenate([[soc.d], np.asarray(soc.b, dtype=float)]))
            cones.append(clarabel.SecondOrderConeT(soc.A.shape[0] + 1))
        tri_off = 0
        for d in program.psd_dims:
            m = svec_dim(d)
            sel = sp.lil_matrix((m, n_int))
            for k in range(m):
                sel[k, tri_off + k] = 1.0
            a_parts.append(sp.csr_matrix(-sel))
            b_parts.append(np.zeros(m))
            cones.append(clarabel.PSDTriangleConeT(d))
            tri_off += m
        for lmi in program.lmis:
            a_parts.append(-(sp.csr_matrix(lmi.coef) @ T))
            b_parts.append(lmi.const.copy())
            cones.append(clarabel.PSDTriangleConeT(lmi.dim))

        if not a_parts:
            a_parts.append(sp.csr_matrix((0, n_int)))
            b_parts.append(np.zeros(0))
        A = sp.vstack(a_parts).tocsc()
        b = np.concatenate(b_parts)

        cfg = clarabel.DefaultSettings()
        cfg.verbose = settings.verbose
        cfg.max_iter = settings.max_iter
        cfg.tol_feas = settings.feas_tol
        cfg.tol_gap_abs = settings.gap_tol
        cfg.tol_gap_rel = settings.gap_tol
        if settings.static_reg is not None:
            cfg.static_regularization_constant = settings.static_reg
        try:
            solver = clarabel.DefaultSolver(P, q, A, b, cones, cfg)
            sol = solver.solve()
        except BaseException as exc:  # pyo3 panics subclass BaseException
            if type(exc).__name__ == "PanicException":
                raise NumericalFailure(f"solver panicked: {exc}") from None
            raise

        status = self._map_status(sol.status, clarabel)
        if status == "numerical_failure":
            raise NumericalFailure(f"clarabel reported {sol.status}")

        x_int = np.asarray(sol.x, dtype=float)
        z = np.asarray(sol.z, dtype=float)
        x_full = T @ x_int
        blocks, off = [], 0
        for d in program.psd_dims:
            blocks.append(smat(x_int[off : off + svec_dim(d)], d))
            off += svec_dim(d)
        frees = x_int[off : off + program.n_free]

        pos = 0
        eq_dual = -z[pos : pos + n_eq]
        pos += n_eq
        ineq_dual = z[pos : pos + n_ineq]
        pos += n_ineq
        for soc in program.socs:
            pos += soc.A.shape[0] + 1
        psd_duals = []
        for d in program.psd_dims:
            psd_duals.append(smat(z[pos : pos + svec_dim(d)], d))
            pos += svec_dim(d)
        lmi_duals = []
        for lmi in program.lmis:
            lmi_duals.append(smat(z[pos : pos + svec_dim(lmi.dim)], lmi.dim))
            pos += svec_dim(lmi.dim)

        return SolveResult(
            status=status,
            blocks=blocks,
            frees=frees,
            x=x_full,
            objective=float(sol.obj_val),
            eq_dual=eq_dual,
            ineq_dual=ineq_dual,
            psd_duals=psd_duals,
            lmi_duals=lmi_duals,
            iterations=int(sol.iterations),
            solve_time=float(sol.solve_time),
            raw_status=str(sol.status),
        )

    @staticmethod
    def _map_status(status, clarabel) -> str:
        S = clarabel.SolverStatus
        if status in (S.Solved, S.AlmostSolved):
            return "optimal"
        if status in (S.PrimalInfeasible, S.AlmostPrimalInfeasible):
            return "infeasible"
        if status in (S.DualInfeasible, S.AlmostDualInfeasible):
            return "unbounded"
        if status in (S.MaxIterations, S.MaxTime):
            return "iteration_limit"
        return "numerical_failure"


_DEFAULT_BACKEND: ClarabelBackend | None = None


def default_backend() -> ClarabelBackend:
    global _DEFAULT_BACKEND
    if _DEFAULT_BACKEND is None:
        _DEFAULT_BACKEND = ClarabelBackend()
    return _DEFAULT_BACKEND


def solve_conic(
    program: ConicProgram,
    settings: SolverSettings | None = None,
    backend=None,
    warm_start=None,
) -> SolveResult:
    """Solve a conic program with the given (or default) backend.

    Raises NumericalFailure when the solver stalls; other terminations are
    reported through `SolveResult.status`.  `warm_start` is a hint that
    backends may ignore.
    """
    backend = backend or default_backend()
    return backend.solve(program, settings or SolverSettings(), warm_start=warm_start)
