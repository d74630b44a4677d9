"""Rectangular-to-symmetric adversary reduction.

A matrix with (possibly repeated) positive-input row labels and negative-input
column labels is folded into a symmetric matrix over distinct inputs, weighted
by the top singular pair, so that its norm does not drop and none of its
coordinate-masked norms grow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .construction import delta_hadamard
from .operators import InvalidParameterError

DEGENERACY_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class SymmetricAdversary:
    """``matrix`` is indexed by ``labels`` (negative inputs first, then positive)."""

    labels: np.ndarray
    f_values: np.ndarray
    matrix: np.ndarray
    delta: np.ndarray
    delta_prime: np.ndarray
    top_singular_value: float
    degenerate: bool
    zeroed_labels: int = 0


def symmetrize(gamma: np.ndarray, row_labels: np.ndarray, col_labels: np.ndarray) -> SymmetricAdversary:
    """Fold ``gamma`` into a symmetric matrix over distinct inputs.

    ``row_labels`` may repeat (one input appearing in several rows);
    ``col_labels`` must be distinct.  Inputs whose weight in the top singular
    pair is zero get a zero row and column.
    """
    gamma = np.asarray(gamma, dtype=float)
    row_labels = np.asarray(row_labels)
    col_labels = np.asarray(col_labels)
    if gamma.shape != (len(row_labels), len(col_labels)):
        raise InvalidParameterError("labels do not match the matrix")
    if not np.any(gamma):
        raise InvalidParameterError("the adversary matrix must be non-zero")
    if len(np.unique(col_labels, axis=0)) != len(col_labels):
        raise InvalidParameterError("column labels must be distinct")

    u, s, vt = scipy.linalg.svd(gamma, full_matrices=False)
    sigma = float(s[0])
    degenerate = len(s) > 1 and s[1] >= sigma * (1 - DEGENERACY_RTOL)
    # eigenvector of the dilation [[0, G^T], [G, 0]] for eigenvalue sigma
    delta_cols = vt[0] / math.sqrt(2)
    delta_rows = u[:, 0] / math.sqrt(2)

    inputs, owner = np.unique(row_labels, axis=0, return_inverse=True)
    owner = owner.ravel()
    weight_rows = np.sqrt(np.bincount(owner, weights=delta_rows**2, minlength=len(inputs)))
    weight_cols = np.abs(delta_cols)

    with np.errstate(divide="ignore", invalid="ignore"):
        scale_rows = np.where(weight_rows[owner] > 0, delta_rows / weight_rows[owner], 0.0)
        scale_cols = np.where(weight_cols > 0, delta_cols / weight_cols, 0.0)
    fold = np.zeros((len(inputs), len(row_labels)))
    fold[owner, np.arange(len(row_labels))] = scale_rows
    cross = fold @ gamma * scale_cols[None, :]

    m0, m1 = len(col_labels), len(inputs)
    matrix = np.zeros((m0 + m1, m0 + m1))
    matrix[m0:, :m0] = cross
    matrix[:m0, m0:] = cross.T
    labels = np.vstack([col_labels, inputs])
    f_values = np.concatenate([np.zeros(m0, dtype=int), np.ones(m1, dtype=int)])
    delta = np.concatenate([delta_cols, delta_rows])
    delta_prime = np.concatenate([weight_cols, weight_rows])
    zeroed = int(np.sum(weight_cols == 0) + np.sum(weight_rows == 0))
    return SymmetricAdversary(labels, f_values, matrix, delta, delta_prime, sigma, bool(degenerate), zeroed)


def symmetric_delta(sym: SymmetricAdversary, i: int) -> np.ndarray:
    """``matrix`` with entries zeroed where the two labels agree on coordinate ``i``."""
    return delta_hadamard(sym.matrix, sym.labels, sym.labels, i)


def extreme_eigenvalue(a: np.ndarray) -> tuple[float, int]:
    """Largest absolute eigenvalue of a symmetric matrix and its sign."""
    w = scipy.linalg.eigvalsh(a)
    j = int(np.argmax(np.abs(w)))
    return float(abs(w[j])), 1 if w[j] >= 0 else -1


def quadratic_form_transfer(sym: SymmetricAdversary) -> float:
    """``delta'^T Gamma' delta'``, which equals the original norm."""
    return float(sym.delta_prime @ sym.matrix @ sym.delta_prime)


@dataclass
class ReductionCertificate:
    norm_gamma: float
    norm_gamma_prime: float
    quadratic_form: float
    delta_norms: list[float]
    delta_prime_norms: list[float]
    delta_prime_signs: list[int]
    zero_pattern_ok: bool
    degenerate: bool
    tolerance: float
    flags: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())


def certify_reduction(
    gamma: np.ndarray,
    row_labels: np.ndarray,
    col_labels: np.ndarray,
    f_values: np.ndarray | None = None,
    tol: float = 1e-8,
) -> ReductionCertificate:
    """Build the symmetric matrix and compare its norms with the original ones.

    ``f_values`` optionally gives the function value of every label of the
    symmetric matrix (in its label order); the zero pattern is then checked
    against those instead of the row/column split.
    """
    sym = symmetrize(gamma, row_labels, col_labels)
    n = np.asarray(row_labels).shape[1]
    norm_gamma = sym.top_singular_value
    norm_prime, _ = extreme_eigenvalue(sym.matrix)
    fv = sym.f_values if f_values is None else np.asarray(f_values)
    same = fv[:, None] == fv[None, :]
    zero_ok = bool(np.all(sym.matrix[same] == 0.0))

    d_norms, dp_norms, signs = [], [], []
    for i in range(n):
        d_norms.append(float(scipy.linalg.svdvals(delta_hadamard(gamma, row_labels, col_labels, i))[0]))
        val, sign = extreme_eigenvalue(symmetric_delta(sym, i))
        dp_norms.append(val)
        signs.append(sign)

    qf = quadratic_form_transfer(sym)
    flags = {
        "norm_not_smaller": norm_prime >= norm_gamma - tol,
        "delta_not_larger": all(dp <= d + tol for dp, d in zip(dp_norms, d_norms)),
        "zero_pattern": zero_ok,
        "quadratic_form": abs(qf - norm_gamma) <= tol * max(1.0, norm_gamma),
    }
    return ReductionCertificate(
        norm_gamma, norm_prime, qf, d_norms, dp_norms, signs, zero_ok, sym.degenerate, tol, flags
    )
