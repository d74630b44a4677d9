"""Eigenbasis of the all-ones matrix and the Hamming scheme projectors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .operators import (
    InvalidParameterError,
    PatternFactor,
    StructuredOperator,
    TensorTerm,
)


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Orthonormal ``q x q`` basis whose first column is the uniform vector."""

    q: int
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors.setflags(write=False)


def make_eigenbasis(q: int) -> EigenBasis:
    """Deterministic eigenbasis of ``J_q`` with ``e_0 = (1, ..., 1) / sqrt(q)``.

    Uses the Householder reflection that swaps the uniform unit vector with the
    first standard vector; its columns are the basis.
    """
    if not isinstance(q, (int, np.integer)) or q < 2:
        raise InvalidParameterError(f"alphabet size must be an integer >= 2, got {q!r}")
    q = int(q)
    uniform = np.full(q, 1 / math.sqrt(q))
    w = uniform.copy()
    w[0] -= 1.0
    h = np.eye(q) - 2.0 * np.outer(w, w) / (w @ w)
    # the reflection maps the first standard vector onto the uniform vector up to rounding
    h[:, 0] = uniform
    return EigenBasis(q, h)


def elementary_projectors(q: int) -> tuple[np.ndarray, np.ndarray]:
    """The ``q x q`` projectors ``E_0 = J/q`` and ``E_1 = I - J/q``."""
    if not isinstance(q, (int, np.integer)) or q < 2:
        raise InvalidParameterError(f"alphabet size must be an integer >= 2, got {q!r}")
    e0 = np.full((q, q), 1 / q)
    return e0, np.eye(q) - e0


class WeightProjector(StructuredOperator):
    """Projector onto the span of basis tensors of Hamming weight ``m`` in ``[q]^n``."""

    def __init__(self, n: int, m: int, q: int, basis: np.ndarray | None = None):
        if n < 1 or not 0 <= m <= n:
            raise InvalidParameterError(f"weight {m} outside [0, {n}]")
        basis = make_eigenbasis(q).vectors if basis is None else np.asarray(basis, dtype=float)
        self.m = m
        table = weight_table(n, lambda w: 1.0 if w == m else 0.0)
        term = TensorTerm(1.0, (PatternFactor(table, basis),), (tuple(range(n)),))
        super().__init__(q, n, [term])

    @property
    def rank(self) -> int:
        return math.comb(self.n, self.m) * (self.q - 1) ** self.m


def weight_table(p: int, coefficient) -> np.ndarray:
    """Pattern table of shape ``(2,)*p`` whose entry at ``b`` is ``coefficient(|b|)``."""
    if p == 0:
        return np.array(float(coefficient(0)))
    weights = np.indices((2,) * p).sum(axis=0)
    return np.vectorize(lambda w: float(coefficient(int(w))), otypes=[float])(weights)


def weight_projector(n: int, m: int, q: int, basis: np.ndarray | None = None) -> WeightProjector:
    """``E_m^{(n)}`` as a matrix-free operator; ``basis`` overrides the default completion."""
    return WeightProjector(n, m, q, basis)
