"""Symmetric eigendecomposition helpers and the gradient of the largest eigenvalue.

All refinement steps share these: the rank-1 push direction is the outer
product of the top eigenvector, and the eigenvalue gap measures distance
from the rank-1 set per trace group.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateSpectrum, InvalidInput

MAX_DENSE_DIM = 64


@dataclass(frozen=True)
class EigenPair:
    """Eigenvalues in descending order with matching orthonormal eigenvectors."""

    values: np.ndarray
    vectors: np.ndarray


def _check_symmetric(mat: np.ndarray) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {mat.shape}")
    if mat.shape[0] > MAX_DENSE_DIM:
        raise InvalidInput(f"dense eigensolver limited to dim <= {MAX_DENSE_DIM}")
    if not np.all(np.isfinite(mat)):
        raise InvalidInput("matrix has non-finite entries")
    return 0.5 * (mat + mat.T)


def sym_eig(mat: np.ndarray) -> EigenPair:
    """Eigendecomposition of a symmetric matrix, eigenvalues sorted descending."""
    sym = _check_symmetric(mat)
    values, vectors = np.linalg.eigh(sym)
    order = np.argsort(values)[::-1]
    return EigenPair(values=values[order], vectors=vectors[:, order])


def default_mult_tol(lambda1: float) -> float:
    """Default multiplicity tolerance; scales with the top eigenvalue."""
    return 1e-8 * max(1.0, abs(lambda1))


def grad_lambda1(mat: np.ndarray, mult_tol: float | None = None) -> np.ndarray:
    """Gradient of the largest eigenvalue: u1 u1^T for the unit top eigenvector.

    Requires a simple top eigenvalue; raises DegenerateSpectrum when
    lambda1 - lambda2 <= mult_tol so the caller can perturb or abort.
    """
    pair = sym_eig(mat)
    lam = pair.values
    tol = default_mult_tol(lam[0]) if mult_tol is None else mult_tol
    if lam.shape[0] > 1 and lam[0] - lam[1] <= tol:
        raise DegenerateSpectrum(
            f"top eigenvalue gap {lam[0] - lam[1]:.3e} within tolerance {tol:.3e}"
        )
    u1 = pair.vectors[:, 0]
    return np.outer(u1, u1)


def eigenvalue_gap(
    groups: Sequence[Sequence[np.ndarray]], group_traces: Sequence[float]
) -> float:
    """Max over trace groups of (fixed group trace - sum of largest eigenvalues).

    Zero iff every group is rank-1; small negatives can appear at solver
    precision on near-feasible iterates.
    """
    if len(groups) == 0:
        raise InvalidInput("empty block list")
    if len(groups) != len(group_traces):
        raise InvalidInput("groups and group_traces must have equal length")
    gaps = []
    for blocks, trace_value in zip(groups, group_traces):
        if len(blocks) == 0:
            raise InvalidInput("empty trace group")
        lam_sum = sum(sym_eig(b).values[0] for b in blocks)
        gaps.append(float(trace_value) - lam_sum)
    return float(max(gaps))
