"""Linear functionals over block entries and free scalars.

Builders express objectives and constraint rows as LinExpr objects
referencing matrix entries by (block_id, i, j); compilation to sparse
vectors over a concrete variable layout happens in `problem`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

BlockEntry = tuple[str, int, int]


def _canon(block_id: str, i: int, j: int) -> BlockEntry:
    return (block_id, i, j) if i <= j else (block_id, j, i)


@dataclass
class LinExpr:
    """const + sum(coeff * Y[block][i, j]) + sum(coeff * free scalar)."""

    coeffs: dict[BlockEntry, float] = field(default_factory=dict)
    free: dict[str, float] = field(default_factory=dict)
    const: float = 0.0

    @staticmethod
    def entry(block_id: str, i: int, j: int, coeff: float = 1.0) -> "LinExpr":
        e = LinExpr()
        e.add_entry(block_id, i, j, coeff)
        return e

    @staticmethod
    def free_var(name: str, coeff: float = 1.0) -> "LinExpr":
        return LinExpr(free={name: coeff})

    @staticmethod
    def constant(value: float) -> "LinExpr":
        return LinExpr(const=float(value))

    def add_entry(self, block_id: str, i: int, j: int, coeff: float) -> "LinExpr":
        key = _canon(block_id, i, j)
        self.coeffs[key] = self.coeffs.get(key, 0.0) + float(coeff)
        return self

    def add_free(self, name: str, coeff: float) -> "LinExpr":
        self.free[name] = self.free.get(name, 0.0) + float(coeff)
        return self

    def __add__(self, other: "LinExpr | float") -> "LinExpr":
        out = LinExpr(dict(self.coeffs), dict(self.free), self.const)
        if isinstance(other, LinExpr):
            for key, val in other.coeffs.items():
                out.coeffs[key] = out.coeffs.get(key, 0.0) + val
            for name, val in other.free.items():
                out.free[name] = out.free.get(name, 0.0) + val
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __sub__(self, other: "LinExpr | float") -> "LinExpr":
        return self + (other * -1.0 if isinstance(other, LinExpr) else -float(other))

    def __mul__(self, scalar: float) -> "LinExpr":
        return LinExpr(
            {k: v * scalar for k, v in self.coeffs.items()},
            {k: v * scalar for k, v in self.free.items()},
            self.const * scalar,
        )

    __rmul__ = __mul__

    def __neg__(self) -> "LinExpr":
        return self * -1.0

    def evaluate(self, blocks: dict[str, "object"], frees: dict[str, float] | None = None) -> float:
        total = self.const
        for (bid, i, j), coeff in self.coeffs.items():
            total += coeff * float(blocks[bid][i, j])
        for name, coeff in self.free.items():
            total += coeff * float((frees or {})[name])
        return total


@dataclass
class LinearRow:
    """expr (sense) rhs, with sense one of '==', '>='."""

    expr: LinExpr
    rhs: float
    sense: str = "=="
    label: str = ""

    def __post_init__(self) -> None:
        if self.sense not in ("==", ">="):
            raise ValueError(f"unsupported row sense {self.sense!r}")
        # fold any constant part of the expression into the right-hand side
        if self.expr.const != 0.0:
            self.rhs = self.rhs - self.expr.const
            self.expr = LinExpr(dict(self.expr.coeffs), dict(self.expr.free), 0.0)

    def residual(self, blocks, frees=None) -> float:
        """Signed residual: expr - rhs (>= rows are satisfied when >= 0)."""
        return self.expr.evaluate(blocks, frees) - self.rhs


def eq(expr: LinExpr, rhs: float = 0.0, label: str = "") -> LinearRow:
    return LinearRow(expr, rhs, "==", label)


def ge(expr: LinExpr, rhs: float = 0.0, label: str = "") -> LinearRow:
    return LinearRow(expr, rhs, ">=", label)


def le(expr: LinExpr, rhs: float = 0.0, label: str = "") -> LinearRow:
    # a <= b  encoded as  -a >= -b
    return LinearRow(expr * -1.0, -rhs, ">=", label)
