"""Dual certificates and KKT-based optimality checks.

The dual of the epigraph standard form carries multipliers rho for the
equality rows, one PSD matrix S_i per primal block (slacks included),
and a PSD matrix Z for the epigraph LMI with Z[0, 0] = 1.  Strong
duality holds when complementary slackness, dual feasibility, and
stationarity all hold; the report below measures each residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidCertificate

CORNER_TOL = 1e-8


@dataclass
class DualCertificate:
    rho: np.ndarray
    S: dict[str, np.ndarray]
    Z: np.ndarray
    b: np.ndarray
    row_labels: list[str] = field(default_factory=list)

    @property
    def z_vector(self) -> np.ndarray:
        return self.Z[1:, 0]

    def dual_value(self) -> float:
        return dual_objective_value(self.rho, self.Z, self.b)


def dual_objective_value(rho: np.ndarray, Z: np.ndarray, b: np.ndarray) -> float:
    """rho' b - trace(Z) + 1, requiring the normalized corner Z[0,0] = 1."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != Z.shape[1]:
        raise InvalidCertificate(f"Z must be square, got shape {Z.shape}")
    if abs(Z[0, 0] - 1.0) > CORNER_TOL:
        raise InvalidCertificate(f"Z[0,0] = {Z[0, 0]:.12f} deviates from 1 beyond {CORNER_TOL:.0e}")
    return float(np.dot(rho, b) - np.trace(Z) + 1.0)


def duality_gap(f_value: float, d_value: float) -> float:
    """Primal minus dual value, reported raw (may be slightly negative)."""
    if not (np.isfinite(f_value) and np.isfinite(d_value)):
        raise InvalidCertificate("duality gap requires finite primal and dual values")
    return float(f_value) - float(d_value)


@dataclass
class CertificateReport:
    certified: bool
    residuals: dict[str, float]
    f_value: float
    d_value: float
    gap: float
    tol: float
    reason: str = ""


def _min_eig(mat: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (mat + mat.T)).min())


def kkt_certify(primal, dual: DualCertificate, sf, tol: float = 1e-6) -> CertificateReport:
    """Check the KKT conditions of the standard form at a primal/dual pair.

    `primal` is (blocks, frees, t) in problem coordinates.  Residuals:
      - stationarity of V*(c - 2 L'z) = A*(rho) + S over all coordinates,
      - complementary slackness <Z, LMI(t,y)> and <S_i, Y_i>,
      - dual feasibility (min eigenvalues of S_i and Z, corner Z[0,0]),
      - primal feasibility (equality rows, block PSD-ness, LMI PSD-ness),
      - the duality gap scaled by 1 + |f|.
    Certified iff every residual is within `tol`.
    """
    blocks, frees, t = primal
    problem = sf.problem
    y = problem.layout.vec(blocks, frees)
    x = sf.embed(y, t)
    A = sf.program.A_eq
    n_real_coords = problem.layout.n_block

    if dual.rho.shape[0] != A.shape[0]:
        raise InvalidCertificate(
            f"rho has {dual.rho.shape[0]} entries, expected {A.shape[0]} rows"
        )

    # stationarity: q - 2 L_ext' z - A' rho - vec(S) = 0
    z = dual.z_vector
    grad = np.array(sf.program.q, dtype=float)
    L_ext = np.zeros((sf.L.shape[0], sf.program.size))
    L_ext[:, sf.y_index] = sf.L
    grad = grad - 2.0 * (L_ext.T @ z) - A.T @ dual.rho
    s_vec = np.zeros(sf.program.size)
    for k, spec in enumerate(problem.blocks):
        d = spec.dim
        off = problem.layout.block_offset[spec.block_id]
        s_vec[off : off + d * d] = dual.S[spec.block_id].reshape(-1)
    for k in range(sf.n_slack):
        s_vec[n_real_coords + k] = float(dual.S[f"__slack_{k}"][0, 0])
    grad[: n_real_coords + sf.n_slack] -= s_vec[: n_real_coords + sf.n_slack]
    grad[sf.t_index] -= dual.Z[0, 0]  # d/dt <Z, LMI> = Z[0,0]; residual is 1 - Z[0,0]
    stationarity = float(np.max(np.abs(grad)))

    lmi = sf.lmi_value(y, t)
    comp_lmi = abs(float(np.sum(dual.Z * lmi)))
    comp_blocks = 0.0
    for spec in problem.blocks:
        comp_blocks = max(comp_blocks, abs(float(np.sum(dual.S[spec.block_id] * blocks[spec.block_id]))))
    if sf.n_slack:
        slack_vals = problem.ineq_rows.residuals(y)
        for k in range(sf.n_slack):
            comp_blocks = max(comp_blocks, abs(float(dual.S[f"__slack_{k}"][0, 0]) * slack_vals[k]))

    dual_feas = 0.0
    for mat in dual.S.values():
        dual_feas = max(dual_feas, -_min_eig(mat))
    dual_feas = max(dual_feas, -_min_eig(dual.Z), 0.0)
    corner = abs(float(dual.Z[0, 0]) - 1.0)

    primal_eq = float(np.max(np.abs(A @ x - sf.b))) if A.shape[0] else 0.0
    primal_psd = 0.0
    for spec in problem.blocks:
        primal_psd = max(primal_psd, -_min_eig(blocks[spec.block_id]))
    primal_psd = max(primal_psd, -_min_eig(lmi), 0.0)

    f_value = problem.cost(y)
    try:
        d_value = dual.dual_value()
    except InvalidCertificate:
        d_value = float("nan")
    gap = float(f_value - d_value) if np.isfinite(d_value) else float("inf")
    scale = 1.0 + abs(f_value)

    residuals = {
        "stationarity": stationarity,
        "complementarity_lmi": comp_lmi,
        "complementarity_blocks": comp_blocks,
        "dual_feasibility": dual_feas,
        "corner": corner,
        "primal_equality": primal_eq,
        "primal_psd": primal_psd,
        "gap_scaled": abs(gap) / scale if np.isfinite(gap) else float("inf"),
    }
    reason = ""
    for name, value in residuals.items():
        if not (value <= tol):
            reason = name
            break
    return CertificateReport(
        certified=(reason == ""),
        residuals=residuals,
        f_value=f_value,
        d_value=d_value,
        gap=gap,
        tol=tol,
        reason=reason,
    )
