"""Matrix-free tensor operators over the product space ``[q]^n``.

Vectors indexed by ``[q]^n`` are stored flat in row-major order, so the first
coordinate is the most significant digit.  An operator term is a coefficient
times a Kronecker product of small factors, each factor acting jointly on a
group of coordinates (its *placement*).  Applying a term permutes the input
axes into factor order, applies the factors one axis group at a time, and
leaves the output in factor order.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DENSE_CAP_ENV = "KSUM_ADV_DENSE_CAP"
DEFAULT_DENSE_CAP = 2**26


class InvalidParameterError(ValueError):
    """A construction parameter is outside its admissible range."""


class TooLargeError(ValueError):
    """A dense materialization or enumeration would exceed its cap."""


def dense_cap() -> int:
    """Entry cap for dense materialization, overridable from the environment."""
    raw = os.environ.get(DENSE_CAP_ENV)
    if raw is None:
        return DEFAULT_DENSE_CAP
    try:
        cap = int(float(raw))
    except ValueError as exc:
        raise InvalidParameterError(f"{DENSE_CAP_ENV}={raw!r} is not a number") from exc
    if cap <= 0:
        raise InvalidParameterError(f"{DENSE_CAP_ENV} must be positive")
    return cap


def all_tuples(q: int, p: int) -> np.ndarray:
    """All of ``[q]^p`` as a ``(q**p, p)`` integer array in lexicographic order."""
    if p == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((q,) * p).reshape(p, -1)
    return grids.T.astype(np.int64)


# Mixing matrices for Hadamard masks on one coordinate, in the {E_0, E_1}
# pattern basis: row c gives the expansion of E_c ∘ mask.
def _mask_mixing(q: int, differ: bool) -> np.ndarray:
    if differ:
        return np.array([[1 - 1 / q, -1 / q], [-(1 - 1 / q), 1 / q]])
    return np.array([[1 / q, 1 / q], [1 - 1 / q, 1 - 1 / q]])


class DenseFactor:
    """A small explicit matrix acting jointly on ``p`` coordinates.

    ``row_symbols[r]`` holds the symbols the output row ``r`` carries on those
    coordinates; it is what Hadamard masks compare against.
    """

    def __init__(self, matrix: np.ndarray, q: int, row_symbols: np.ndarray):
        matrix = np.asarray(matrix, dtype=float)
        p = int(round(math.log(matrix.shape[1], q))) if matrix.shape[1] > 1 else 0
        if q**p != matrix.shape[1]:
            raise InvalidParameterError("dense factor width must be a power of q")
        row_symbols = np.asarray(row_symbols, dtype=np.int64).reshape(matrix.shape[0], p)
        self.matrix = matrix
        self.matrix.setflags(write=False)
        self.q = q
        self.n_axes = p
        self.row_symbols = row_symbols
        self.in_dim = matrix.shape[1]
        self.out_dim = matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix

    def apply_along(self, x: np.ndarray, axis: int, adjoint: bool = False) -> np.ndarray:
        m = self.matrix.T if adjoint else self.matrix
        return np.moveaxis(np.tensordot(m, x, axes=(1, axis)), 0, axis)

    def mask_coordinate(self, local_axis: int, differ: bool) -> "DenseFactor":
        cols = all_tuples(self.q, self.n_axes)[:, local_axis]
        same = self.row_symbols[:, local_axis][:, None] == cols[None, :]
        keep = ~same if differ else same
        return DenseFactor(self.matrix * keep, self.q, self.row_symbols)


class PatternFactor:
    """``sum_b table[b] * (E_{b_1} ⊗ ... ⊗ E_{b_p})`` over ``b`` in ``{0,1}^p``.

    ``E_0`` is the projector onto constants and ``E_1 = I - E_0``.  The operator
    is diagonal in the tensor eigenbasis: the basis tensor with index ``v`` is
    scaled by ``table[v != 0]``.  It is applied by a change into that basis,
    a pointwise scaling, and the inverse change.
    """

    def __init__(self, table: np.ndarray, basis: np.ndarray):
        table = np.asarray(table, dtype=float)
        p = table.ndim
        if table.shape != (2,) * p:
            raise InvalidParameterError("pattern table must have shape (2,)*p")
        q = basis.shape[0]
        self.table = table
        self.basis = basis
        self.q = q
        self.n_axes = p
        self.in_dim = self.out_dim = q**p
        nonzero = (np.arange(q) != 0).astype(np.intp)
        self.coefficients = table[np.ix_(*([nonzero] * p))] if p else table.copy()

    @property
    def row_symbols(self) -> np.ndarray:
        return all_tuples(self.q, self.n_axes)

    def dense(self) -> np.ndarray:
        eye = np.eye(self.in_dim)
        return self.apply_along(eye, axis=0)

    def apply_along(self, x: np.ndarray, axis: int, adjoint: bool = False) -> np.ndarray:
        # symmetric, so the adjoint is the operator itself
        p, q = self.n_axes, self.q
        x = np.moveaxis(x, axis, 0)
        rest = x.shape[1:]
        t = x.reshape((q,) * p + (-1,))
        for a in range(p):
            t = np.moveaxis(np.tensordot(self.basis.T, t, axes=(1, a)), 0, a)
        t = t * self.coefficients[..., None]
        for a in range(p):
            t = np.moveaxis(np.tensordot(self.basis, t, axes=(1, a)), 0, a)
        return np.moveaxis(t.reshape((self.out_dim,) + rest), 0, axis)

    def mask_coordinate(self, local_axis: int, differ: bool) -> "PatternFactor":
        mix = _mask_mixing(self.q, differ)
        table = np.moveaxis(np.tensordot(mix.T, self.table, axes=(1, local_axis)), 0, local_axis)
        return PatternFactor(table, self.basis)


Factor = DenseFactor | PatternFactor


def _shrinking_first(factors, adjoint: bool) -> list[int]:
    """Factor order that keeps intermediate tensors small.

    Factors act on separate axes and commute, so the ones that reduce their
    axis are applied before the ones that enlarge it.
    """
    def growth(j):
        f = factors[j]
        return f.in_dim / f.out_dim if adjoint else f.out_dim / f.in_dim

    return sorted(range(len(factors)), key=growth)


@dataclass(frozen=True)
class TensorTerm:
    """``coefficient * (factor_1 ⊗ ... ⊗ factor_F)`` with factor ``j`` on ``placement[j]``."""

    coefficient: float
    factors: tuple
    placement: tuple

    @property
    def out_dim(self) -> int:
        return math.prod(f.out_dim for f in self.factors)


class LinearOp:
    """Shared surface: shape, matvec, adjoint matvec, dense materialization."""

    shape: tuple[int, int]

    @property
    def row_dim(self) -> int:
        return self.shape[0]

    @property
    def col_dim(self) -> int:
        return self.shape[1]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def rmatvec(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dense(self, cap: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def _check_cap(self, cap: int | None) -> None:
        cap = dense_cap() if cap is None else cap
        if self.shape[0] * self.shape[1] > cap:
            raise TooLargeError(
                f"dense form needs {self.shape[0]}x{self.shape[1]} entries, cap is {cap}"
            )

    def _check_len(self, v: np.ndarray, n: int) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (n,):
            raise ValueError(f"expected a vector of length {n}, got shape {v.shape}")
        return v


class StructuredOperator(LinearOp):
    """Sum of tensor terms mapping ``R^{[q]^n}`` to a common row space."""

    def __init__(self, q: int, n: int, terms: Sequence[TensorTerm], row_dim: int | None = None):
        self.q = q
        self.n = n
        self.terms = tuple(terms)
        for term in self.terms:
            axes = sorted(a for group in term.placement for a in group)
            if axes != list(range(n)):
                raise InvalidParameterError("term placement must partition the coordinates")
            for f, group in zip(term.factors, term.placement):
                if f.n_axes != len(group):
                    raise InvalidParameterError("factor arity does not match its placement")
        dims = {t.out_dim for t in self.terms}
        if row_dim is None:
            if len(dims) != 1:
                raise InvalidParameterError("row_dim required for empty or ragged operators")
            row_dim = dims.pop()
        elif dims - {row_dim}:
            raise InvalidParameterError("term output sizes disagree with row_dim")
        self.shape = (row_dim, q**n)

    def _perm(self, term: TensorTerm) -> list[int]:
        return [a for group in term.placement for a in group]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = self._check_len(v, self.col_dim)
        out = np.zeros(self.row_dim)
        cube = v.reshape((self.q,) * self.n) if self.n else v.reshape(())
        for term in self.terms:
            x = cube.transpose(self._perm(term)).reshape([f.in_dim for f in term.factors])
            for j in _shrinking_first(term.factors, adjoint=False):
                x = term.factors[j].apply_along(x, j)
            out += term.coefficient * x.ravel()
        return out

    def rmatvec(self, u: np.ndarray) -> np.ndarray:
        u = self._check_len(u, self.row_dim)
        out = np.zeros((self.q,) * self.n)
        for term in self.terms:
            x = u.reshape([f.out_dim for f in term.factors])
            for j in _shrinking_first(term.factors, adjoint=True):
                x = term.factors[j].apply_along(x, j, adjoint=True)
            perm = self._perm(term)
            x = x.reshape((self.q,) * self.n).transpose(np.argsort(perm))
            out += term.coefficient * x
        return out.ravel()

    def dense(self, cap: int | None = None) -> np.ndarray:
        self._check_cap(cap)
        out = np.zeros(self.shape)
        index = np.arange(self.col_dim).reshape((self.q,) * self.n)
        for term in self.terms:
            kron = np.ones((1, 1))
            for f in term.factors:
                kron = np.kron(kron, f.dense())
            cols = index.transpose(self._perm(term)).ravel()
            out[:, cols] += term.coefficient * kron
        return out

    def row_symbols(self) -> np.ndarray:
        """Symbols of each row label on all ``n`` coordinates, shape ``(rows, n)``."""
        if not self.terms:
            raise InvalidParameterError("an operator without terms has no row labels")
        term = self.terms[0]
        labels = np.zeros((self.row_dim, self.n), dtype=np.int64)
        sizes = [f.out_dim for f in term.factors]
        idx = np.indices(sizes).reshape(len(sizes), -1)
        for j, (f, group) in enumerate(zip(term.factors, term.placement)):
            labels[:, list(group)] = f.row_symbols[idx[j]]
        return labels

    def hadamard_coordinate(self, i: int, differ: bool = True) -> "StructuredOperator":
        """Entrywise product with the mask ``[x_i != y_i]`` (or ``[x_i == y_i]``).

        ``i`` is a zero-based coordinate.  The mask touches only the factor
        that owns coordinate ``i``, so the result stays structured.
        """
        if not 0 <= i < self.n:
            raise InvalidParameterError(f"coordinate {i} outside [0, {self.n})")
        terms = []
        for term in self.terms:
            factors = list(term.factors)
            for j, group in enumerate(term.placement):
                if i in group:
                    factors[j] = factors[j].mask_coordinate(group.index(i), differ)
            terms.append(TensorTerm(term.coefficient, tuple(factors), term.placement))
        return StructuredOperator(self.q, self.n, terms, row_dim=self.row_dim)


class StackedOperator(LinearOp):
    """Row blocks stacked one on another, all sharing the column space."""

    def __init__(self, blocks: Sequence[LinearOp]):
        self.blocks = tuple(blocks)
        cols = {b.col_dim for b in self.blocks}
        if len(cols) != 1:
            raise InvalidParameterError("stacked blocks must share a column dimension")
        self.offsets = np.cumsum([0] + [b.row_dim for b in self.blocks])
        self.shape = (int(self.offsets[-1]), cols.pop())

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = self._check_len(v, self.col_dim)
        return np.concatenate([b.matvec(v) for b in self.blocks])

    def rmatvec(self, u: np.ndarray) -> np.ndarray:
        u = self._check_len(u, self.row_dim)
        out = np.zeros(self.col_dim)
        # fixed block order keeps the reduction deterministic
        for b, lo, hi in zip(self.blocks, self.offsets[:-1], self.offsets[1:]):
            out += b.rmatvec(u[lo:hi])
        return out

    def dense(self, cap: int | None = None) -> np.ndarray:
        self._check_cap(cap)
        return np.vstack([b.dense(cap) for b in self.blocks])

    def row_symbols(self) -> np.ndarray:
        return np.vstack([b.row_symbols() for b in self.blocks])

    def hadamard_coordinate(self, i: int, differ: bool = True) -> "StackedOperator":
        return StackedOperator([b.hadamard_coordinate(i, differ) for b in self.blocks])


class ColumnRestrictedOperator(LinearOp):
    """The submatrix of ``base`` keeping only the columns flagged in ``keep``."""

    def __init__(self, base: LinearOp, keep: np.ndarray):
        keep = np.asarray(keep, dtype=bool)
        if keep.shape != (base.col_dim,):
            raise ValueError("column mask length does not match the operator")
        if not keep.any():
            raise InvalidParameterError("restriction removes every column")
        self.base = base
        self.keep = keep
        self.columns = np.flatnonzero(keep)
        self.shape = (base.row_dim, len(self.columns))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = self._check_len(v, self.col_dim)
        full = np.zeros(self.base.col_dim)
        full[self.columns] = v
        return self.base.matvec(full)

    def rmatvec(self, u: np.ndarray) -> np.ndarray:
        return self.base.rmatvec(u)[self.columns]

    def dense(self, cap: int | None = None) -> np.ndarray:
        self._check_cap(cap)
        self.base._check_cap(cap)
        return self.base.dense(cap)[:, self.columns]

    def row_symbols(self) -> np.ndarray:
        return self.base.row_symbols()

    def hadamard_coordinate(self, i: int, differ: bool = True) -> "ColumnRestrictedOperator":
        return ColumnRestrictedOperator(self.base.hadamard_coordinate(i, differ), self.keep)


def apply(op: LinearOp, v: np.ndarray) -> np.ndarray:
    """``op @ v`` without materializing ``op``."""
    return op.matvec(v)


def dense(op: LinearOp, cap: int | None = None) -> np.ndarray:
    """Entry-exact dense matrix of ``op``; raises :class:`TooLargeError` above ``cap``."""
    return op.dense(cap)
