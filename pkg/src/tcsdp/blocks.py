"""PSD block declarations, trace groups, and the flat variable layout.

The flat vector `y` concatenates the full d*d row-major vectorization of
every block (symmetric entries stored twice) followed by free scalars.
Coefficient vectors built from LinExpr split off-diagonal weight evenly
between (i, j) and (j, i), so a row's matrix part is always symmetric and
`a @ y` equals the intended sum of coeff * Y[i, j].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInput
from .linexpr import LinearRow, LinExpr


@dataclass(frozen=True)
class PsdBlockSpec:
    block_id: str
    dim: int
    trace_group: str | None = None

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise InvalidInput(f"block {self.block_id}: dim must be >= 1")


@dataclass(frozen=True)
class TraceGroup:
    group_id: str
    trace_value: float
    members: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.trace_value <= 0:
            raise InvalidInput(f"trace group {self.group_id}: trace must be > 0")
        if not self.members:
            raise InvalidInput(f"trace group {self.group_id}: no members")


class BlockLayout:
    """Offsets of blocks and free scalars inside the flat vector."""

    def __init__(self, blocks: list[PsdBlockSpec], free_names: list[str]):
        seen: set[str] = set()
        for b in blocks:
            if b.block_id in seen:
                raise InvalidInput(f"duplicate block id {b.block_id}")
            seen.add(b.block_id)
        if len(set(free_names)) != len(free_names):
            raise InvalidInput("duplicate free variable name")
        self.blocks = list(blocks)
        self.free_names = list(free_names)
        self.block_offset: dict[str, int] = {}
        self.block_dim: dict[str, int] = {}
        off = 0
        for b in blocks:
            self.block_offset[b.block_id] = off
            self.block_dim[b.block_id] = b.dim
            off += b.dim * b.dim
        self.n_block = off
        self.free_offset = {name: off + k for k, name in enumerate(free_names)}
        self.size = off + len(free_names)

    def vec(self, block_values: dict[str, np.ndarray], frees: dict[str, float] | None = None) -> np.ndarray:
        y = np.zeros(self.size)
        for bid, off in self.block_offset.items():
            d = self.block_dim[bid]
            mat = np.asarray(block_values[bid], dtype=float)
            if mat.shape != (d, d):
                raise InvalidInput(f"block {bid}: expected shape {(d, d)}, got {mat.shape}")
            y[off : off + d * d] = mat.reshape(-1)
        for name, idx in self.free_offset.items():
            y[idx] = float((frees or {})[name])
        return y

    def unvec(self, y: np.ndarray) -> tuple[dict[str, np.ndarray], dict[str, float]]:
        blocks = {}
        for bid, off in self.block_offset.items():
            d = self.block_dim[bid]
            mat = y[off : off + d * d].reshape(d, d)
            blocks[bid] = 0.5 * (mat + mat.T)
        frees = {name: float(y[idx]) for name, idx in self.free_offset.items()}
        return blocks, frees

    def expr_vector(self, expr: LinExpr) -> np.ndarray:
        """Dense coefficient vector of a LinExpr over this layout."""
        a = np.zeros(self.size)
        self._fill(expr, a)
        return a

    def _fill(self, expr: LinExpr, a: np.ndarray) -> None:
        for (bid, i, j), coeff in expr.coeffs.items():
            if bid not in self.block_offset:
                raise InvalidInput(f"unknown block id {bid}")
            d = self.block_dim[bid]
            if not (0 <= i < d and 0 <= j < d):
                raise InvalidInput(f"entry ({i},{j}) out of range for block {bid} (dim {d})")
            off = self.block_offset[bid]
            if i == j:
                a[off + i * d + j] += coeff
            else:
                a[off + i * d + j] += 0.5 * coeff
                a[off + j * d + i] += 0.5 * coeff
        for name, coeff in expr.free.items():
            if name not in self.free_offset:
                raise InvalidInput(f"unknown free variable {name}")
            a[self.free_offset[name]] += coeff

    def compile_exprs(self, exprs: list[LinExpr]) -> tuple[sp.csr_matrix, np.ndarray]:
        """Sparse coefficient matrix (one row per expr) and the constants."""
        rows, cols, vals = [], [], []
        consts = np.zeros(len(exprs))
        for r, expr in enumerate(exprs):
            a = np.zeros(self.size)
            self._fill(expr, a)
            nz = np.nonzero(a)[0]
            rows.extend([r] * len(nz))
            cols.extend(nz.tolist())
            vals.extend(a[nz].tolist())
            consts[r] = expr.const
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(len(exprs), self.size))
        return mat, consts


@dataclass
class CompiledRows:
    """Sparse form of a list of rows: matrix @ y (sense) rhs."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    labels: list[str] = field(default_factory=list)

    @staticmethod
    def from_rows(rows: list[LinearRow], layout: BlockLayout) -> "CompiledRows":
        mat, consts = layout.compile_exprs([r.expr for r in rows])
        rhs = np.array([r.rhs for r in rows]) - consts
        return CompiledRows(mat, rhs, [r.label for r in rows])

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def residuals(self, y: np.ndarray) -> np.ndarray:
        if self.n == 0:
            return np.zeros(0)
        return self.matrix @ y - self.rhs
