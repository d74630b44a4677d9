"""Assembly of the stacked adversary matrix and its coordinate-remapped variant.

Row labels: block ``S`` (subsets in lexicographic order) has rows ``(t, z)``
where ``t`` runs over the array members on ``S`` and ``z`` over ``[q]^{n-k}``
on the remaining coordinates, ``t`` being the more significant index.
Column labels are all of ``[q]^n``.  Coordinates are zero-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arrays import ArrayAssignment, OrthogonalArray, ksum_array, subsets, verify_oa
from .hamming import make_eigenbasis, weight_table
from .operators import (
    ColumnRestrictedOperator,
    DenseFactor,
    InvalidParameterError,
    LinearOp,
    PatternFactor,
    StackedOperator,
    StructuredOperator,
    TensorTerm,
    TooLargeError,
    all_tuples,
)

DEFAULT_COLUMN_CAP = 2**24


@dataclass(frozen=True, eq=False)
class AlphaSchedule:
    """Coefficients ``alpha_0 .. alpha_{n-k}``; every later one is zero."""

    n: int
    k: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.n - self.k + 1,):
            raise InvalidParameterError(f"need {self.n - self.k + 1} coefficients, got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __getitem__(self, m: int) -> float:
        return float(self.values[m]) if 0 <= m < len(self.values) else 0.0

    def padded(self, length: int) -> np.ndarray:
        out = np.zeros(max(length, len(self.values)))
        out[: len(self.values)] = self.values
        return out

    def differences(self) -> np.ndarray:
        """``alpha_m - alpha_{m+1}`` for ``m = 0 .. n-k``."""
        ext = self.padded(len(self.values) + 1)
        return ext[:-1] - ext[1:]


def alpha_closed_form(m, n: int, k: int):
    """``max(2 - m / n^{k/(k+1)}, 0) * n^{k(1-k)/(2(k+1))}``, vectorized over ``m``."""
    r = n ** (k / (k + 1))
    scale = n ** (k * (1 - k) / (2 * (k + 1)))
    return np.maximum(2.0 - np.asarray(m, dtype=float) / r, 0.0) * scale


def build_alphas(n: int, k: int) -> AlphaSchedule:
    if not n >= k >= 1:
        raise InvalidParameterError(f"need n >= k >= 1, got n={n}, k={k}")
    return AlphaSchedule(n, k, alpha_closed_form(np.arange(n - k + 1), n, k))


def constant_alphas(n: int, k: int, c: float = 1.0) -> AlphaSchedule:
    return AlphaSchedule(n, k, np.full(n - k + 1, float(c)))


@dataclass(frozen=True, eq=False)
class AdversaryInstance:
    n: int
    k: int
    q: int
    assignment: ArrayAssignment
    alphas: AlphaSchedule
    basis: np.ndarray = field(repr=False)

    @property
    def subsets(self) -> list[tuple[int, ...]]:
        return subsets(self.n, self.k)

    @property
    def block_rows(self) -> int:
        return self.q ** (self.n - 1)

    @property
    def row_count(self) -> int:
        return math.comb(self.n, self.k) * self.block_rows

    @property
    def col_count(self) -> int:
        return self.q**self.n


def make_instance(
    n: int,
    k: int,
    q: int,
    assignment: ArrayAssignment | None = None,
    alphas: AlphaSchedule | None = None,
) -> AdversaryInstance:
    """Instance with the optimized schedule and, by default, the uniform 0-sum array."""
    if not n >= k >= 1:
        raise InvalidParameterError(f"need n >= k >= 1, got n={n}, k={k}")
    if q < 2:
        raise InvalidParameterError(f"need q >= 2, got {q}")
    if assignment is None:
        assignment = ArrayAssignment(uniform=ksum_array(q, k, 0))
    if (assignment.k, assignment.q) != (k, q):
        raise InvalidParameterError("assignment arrays do not match (k, q)")
    assignment.check_covers(n)
    alphas = build_alphas(n, k) if alphas is None else alphas
    if (alphas.n, alphas.k) != (n, k):
        raise InvalidParameterError("alpha schedule built for a different (n, k)")
    return AdversaryInstance(n, k, q, assignment, alphas, make_eigenbasis(q).vectors)


def build_F(T: OrthogonalArray) -> np.ndarray:
    """``sqrt(q)`` times the rows of ``I - E_1^{⊗k}`` indexed by the members of ``T``."""
    if not verify_oa(T.members, T.k, T.q):
        raise InvalidParameterError("build_F needs a valid orthogonal array")
    q, k = T.q, T.k
    rows = T.as_array()
    cols = all_tuples(q, k)
    same = rows[:, None, :] == cols[None, :, :]
    top = np.prod(same - 1.0 / q, axis=2)
    return math.sqrt(q) * (np.all(same, axis=2) - top)


def build_F_remapped(T: OrthogonalArray, position: int) -> np.ndarray:
    """Image of ``F`` when coordinate ``position`` of the block is remapped.

    ``sqrt(q) * (E_0 at position ⊗ E_1 elsewhere)`` restricted to the rows of ``T``;
    agrees with ``F`` wherever the row and column differ at ``position``.
    """
    q, k = T.q, T.k
    rows = T.as_array()
    cols = all_tuples(q, k)
    factors = (rows[:, None, :] == cols[None, :, :]) - 1.0 / q
    factors[:, :, position] = 1.0 / q
    return math.sqrt(q) * np.prod(factors, axis=2)


def _complement(n: int, s: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(j for j in range(n) if j not in s)


def _block(inst: AdversaryInstance, s: tuple[int, ...], f_matrix: np.ndarray, table) -> StructuredOperator:
    T = inst.assignment.array_for(s)
    f = DenseFactor(f_matrix, inst.q, T.as_array())
    rest = _complement(inst.n, s)
    if not rest:
        term = TensorTerm(float(table), (f,), (s,))
    else:
        term = TensorTerm(1.0, (f, PatternFactor(table, inst.basis)), (s, rest))
    return StructuredOperator(inst.q, inst.n, [term])


def build_gtilde(s, inst: AdversaryInstance) -> StructuredOperator:
    """Block ``sum_m alpha_m F_S ⊗ E_m^{(n-k)}`` with ``F_S`` on ``S``."""
    s = tuple(sorted(s))
    if len(s) != inst.k or len(set(s)) != inst.k or not all(0 <= j < inst.n for j in s):
        raise InvalidParameterError(f"{s} is not a {inst.k}-subset of range({inst.n})")
    table = weight_table(inst.n - inst.k, lambda w: inst.alphas[w])
    return _block(inst, s, build_F(inst.assignment.array_for(s)), table)


def build_gamma_tilde(inst: AdversaryInstance) -> StackedOperator:
    return StackedOperator([build_gtilde(s, inst) for s in inst.subsets])


def build_gamma_tilde_1(inst: AdversaryInstance, i: int = 0) -> StackedOperator:
    """Remapped matrix agreeing with the stacked matrix wherever ``x_i != y_i``.

    On coordinate ``i`` the maps ``E_0 -> E_0``, ``E_1 -> -E_0`` are applied.
    Blocks containing ``i`` get the remapped ``F``; the others get the
    telescoped coefficients ``alpha_m - alpha_{m+1}`` and ``E_0`` on ``i``.
    """
    if not 0 <= i < inst.n:
        raise InvalidParameterError(f"coordinate {i} outside range({inst.n})")
    p = inst.n - inst.k
    diffs = inst.alphas.differences()
    blocks = []
    for s in inst.subsets:
        T = inst.assignment.array_for(s)
        if i in s:
            table = weight_table(p, lambda w: inst.alphas[w])
            blocks.append(_block(inst, s, build_F_remapped(T, s.index(i)), table))
        else:
            local = _complement(inst.n, s).index(i)
            weights = np.indices((2,) * p).sum(axis=0)
            bits = np.indices((2,) * p)[local]
            table = np.where(bits == 0, diffs[weights], 0.0)
            blocks.append(_block(inst, s, build_F(T), table))
    return StackedOperator(blocks)


@dataclass(frozen=True, eq=False)
class LegalColumnMask:
    legal: np.ndarray

    @property
    def legal_count(self) -> int:
        return int(self.legal.sum())

    @property
    def fraction(self) -> float:
        return self.legal_count / self.legal.size


def legal_mask(inst: AdversaryInstance, cap: int = DEFAULT_COLUMN_CAP) -> LegalColumnMask:
    """Columns ``y`` with no array member on any k-subset."""
    if inst.col_count > cap:
        raise TooLargeError(f"{inst.col_count} columns exceed the enumeration cap {cap}")
    cols = all_tuples(inst.q, inst.n)
    illegal = np.zeros(len(cols), dtype=bool)
    for s in inst.subsets:
        illegal |= inst.assignment.array_for(s).contains_rows(cols[:, list(s)])
    legal = ~illegal
    legal.setflags(write=False)
    return LegalColumnMask(legal)


def restrict_columns(op: LinearOp, mask: LegalColumnMask) -> ColumnRestrictedOperator:
    """Drop the illegal columns; refuses masks that leave nothing."""
    return ColumnRestrictedOperator(op, mask.legal)


def column_symbols(n: int, q: int) -> np.ndarray:
    return all_tuples(q, n)


def delta_hadamard(M: np.ndarray, row_labels: np.ndarray, col_labels: np.ndarray, i: int) -> np.ndarray:
    """Zero every entry whose row and column labels agree on coordinate ``i``."""
    if row_labels is None or col_labels is None:
        raise InvalidParameterError("row and column labels are required")
    M = np.asarray(M)
    row_labels = np.asarray(row_labels)
    col_labels = np.asarray(col_labels)
    if row_labels.shape[0] != M.shape[0] or col_labels.shape[0] != M.shape[1]:
        raise InvalidParameterError("label counts do not match the matrix")
    if not 0 <= i < row_labels.shape[1]:
        raise InvalidParameterError(f"coordinate {i} outside range({row_labels.shape[1]})")
    differ = row_labels[:, i][:, None] != col_labels[:, i][None, :]
    return M * differ
