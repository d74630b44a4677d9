"""Spectral norms and the certified inequality checks built on them."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .construction import (
    AdversaryInstance,
    LegalColumnMask,
    alpha_closed_form,
    build_gamma_tilde,
    build_gamma_tilde_1,
    column_symbols,
    delta_hadamard,
    legal_mask,
    restrict_columns,
)
from .operators import InvalidParameterError, LinearOp, TooLargeError, dense_cap

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000
DEFAULT_SEED = 42
# relative slack for inequality flags, by how the compared norms were obtained
DENSE_SLACK = 1e-9
ITERATIVE_SLACK = 1e-5
# above this smaller dimension the dense norm goes through the Gram matrix
_GRAM_THRESHOLD = 600
# memory budget for the Lanczos basis
_LANCZOS_BYTES = 2**30
_LANCZOS_MAX_BASIS = 20


@dataclass
class NormResult:
    value: float
    method: str
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True


class DenseOp(LinearOp):
    """Adapter so plain arrays can be fed to the iterative solver."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=float)
        self.shape = self.matrix.shape

    def matvec(self, v):
        return self.matrix @ v

    def rmatvec(self, u):
        return self.matrix.T @ u

    def dense(self, cap=None):
        return self.matrix


class _Adjoint(LinearOp):
    def __init__(self, op: LinearOp):
        self.op = op
        self.shape = (op.col_dim, op.row_dim)

    def matvec(self, v):
        return self.op.rmatvec(v)

    def rmatvec(self, u):
        return self.op.matvec(u)


def spectral_norm_dense(M: np.ndarray, cap: int | None = None) -> NormResult:
    """Largest singular value from an exact decomposition."""
    M = np.asarray(M, dtype=float)
    cap = dense_cap() if cap is None else cap
    if M.size > cap:
        raise TooLargeError(f"{M.shape} matrix exceeds the dense cap {cap}")
    if M.size == 0:
        return NormResult(0.0, "dense-exact")
    if min(M.shape) <= _GRAM_THRESHOLD:
        value = float(scipy.linalg.svdvals(M)[0])
    else:
        gram = M @ M.T if M.shape[0] <= M.shape[1] else M.T @ M
        top = scipy.linalg.eigh(
            gram, eigvals_only=True, subset_by_index=[gram.shape[0] - 1] * 2
        )
        value = math.sqrt(max(float(top[0]), 0.0))
    return NormResult(value, "dense-exact")


def _power(op: LinearOp, x: np.ndarray, tol: float, max_iter: int) -> tuple[float, int, float, bool, np.ndarray]:
    nrm = np.linalg.norm(x)
    if nrm == 0:
        return 0.0, 0, 0.0, False, x
    x = x / nrm
    lam = 0.0
    residual = math.inf
    for it in range(1, max_iter + 1):
        z = op.rmatvec(op.matvec(x))
        new = float(x @ z)
        zn = np.linalg.norm(z)
        if zn == 0:
            return 0.0, it, 0.0, True, x
        residual = float(np.linalg.norm(z - new * x) / max(new, 1e-300))
        x = z / zn
        if it > 1 and abs(new - lam) <= tol * abs(new):
            return new, it, residual, True, x
        lam = new
    return lam, max_iter, residual, False, x


def _lanczos(op: LinearOp, x: np.ndarray, tol: float, max_iter: int) -> tuple[float, int, float, bool, np.ndarray]:
    """Explicitly restarted Lanczos for the top eigenpair of ``op^T op``.

    Each cycle builds a fully reorthogonalised Krylov basis and restarts from
    its top Ritz vector, until the Ritz residual is below ``tol`` relative to
    the Ritz value.  A breakdown means the basis spans an invariant
    subspace, so the Ritz pair is exact.  The returned value is ``||op x||^2``
    for the final unit vector, a lower estimate whether or not it converged.
    """
    dim = op.col_dim
    nrm = np.linalg.norm(x)
    if nrm == 0:
        return 0.0, 0, 0.0, False, x
    size = min(dim, max(3, min(_LANCZOS_MAX_BASIS, _LANCZOS_BYTES // (8 * dim))))
    vec = x / nrm
    count = 0
    ok = False
    while count < max_iter:
        basis = np.empty((size, dim))
        basis[0] = vec
        diag, off = [], []
        tail = 0.0
        for j in range(size):
            w = op.rmatvec(op.matvec(basis[j]))
            count += 1
            diag.append(float(basis[j] @ w))
            for _ in range(2):
                w -= basis[: j + 1].T @ (basis[: j + 1] @ w)
            b = float(np.linalg.norm(w))
            if j == size - 1 or count >= max_iter:
                tail = b
                break
            if b <= 1e-13 * max(abs(diag[0]), 1e-300):
                break
            off.append(b)
            basis[j + 1] = w / b
        used = len(diag)
        theta, y = scipy.linalg.eigh_tridiagonal(
            np.array(diag), np.array(off), select="i", select_range=(used - 1, used - 1)
        )
        y = y[:, 0]
        vec = y @ basis[:used]
        vec /= np.linalg.norm(vec)
        if theta[0] <= 0 or abs(tail * y[-1]) <= tol * theta[0]:
            ok = True
            break
    image = op.matvec(vec)
    lam = float(image @ image)
    back = op.rmatvec(image)
    residual = float(np.linalg.norm(back - lam * vec) / lam) if lam > 0 else 0.0
    return lam, count + 1, residual, ok, vec


_SOLVERS = {"lanczos": _lanczos, "power": _power}


def spectral_norm_iter(
    op,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = DEFAULT_SEED,
    v0: np.ndarray | None = None,
    method: str = "lanczos",
) -> NormResult:
    """Largest singular value from ``op^T op`` and a seeded start vector.

    ``method`` is ``"lanczos"`` (the default) or ``"power"``.  Without ``v0``
    the iteration runs on whichever of ``op^T op`` and ``op op^T`` is smaller.
    The value is ``||op x||`` for a unit ``x``, so it never exceeds the true norm.
    A second run from a perturbed seed follows a caller-supplied start vector
    or a first run that stalled (no convergence, or a zero estimate); the
    larger estimate wins.  ``iterations`` counts Gram products.
    """
    if method not in _SOLVERS:
        raise InvalidParameterError(f"unknown method {method!r}")
    if isinstance(op, np.ndarray):
        op = DenseOp(op)
    if v0 is None and op.row_dim < op.col_dim:
        # same top eigenvalue, shorter vectors
        op = _Adjoint(op)
    solve = _SOLVERS[method]
    rng = np.random.default_rng(seed)
    start = rng.standard_normal(op.col_dim) if v0 is None else np.asarray(v0, dtype=float)
    lam, its, res, ok, _ = solve(op, start, tol, max_iter)
    if v0 is not None or not ok or lam <= 0:
        retry = np.random.default_rng(seed + 1).standard_normal(op.col_dim)
        if v0 is not None:
            retry = retry + v0
        lam2, its2, res2, ok2, _ = solve(op, retry, tol, max_iter)
        its += its2
        if lam2 > lam * (1 + tol) or not ok:
            lam, res, ok = lam2, res2, ok2
    return NormResult(math.sqrt(max(lam, 0.0)), method, its, res, ok)


def witness_lower_bound(op: LinearOp, mask: LegalColumnMask | None = None) -> float:
    """``w^T op w'`` for uniform unit ``w`` and ``w'``.

    With a mask, ``w'`` lives on the legal columns: ``op`` may be the full
    stacked matrix or the one already restricted to those columns.
    """
    rows, cols = op.shape
    if mask is None or cols == mask.legal_count:
        w_right = np.full(cols, 1 / math.sqrt(cols))
    elif mask.legal.shape == (cols,):
        w_right = mask.legal / math.sqrt(mask.legal_count)
    else:
        raise ValueError("mask does not match the operator's columns")
    w_left = np.full(rows, 1 / math.sqrt(rows))
    return float(w_left @ op.matvec(w_right))


def _leq(lhs: float, rhs: float, slack: float) -> bool:
    return bool(lhs <= rhs + slack * abs(rhs))


@dataclass
class Check:
    name: str
    lhs: float
    rhs: float
    slack: float
    strict: bool = False
    passed: bool = field(init=False)

    def __post_init__(self):
        if self.strict:
            self.passed = bool(self.lhs < self.rhs)
        else:
            self.passed = _leq(self.lhs, self.rhs, self.slack)


@dataclass
class LemmaReport:
    n: int
    k: int
    q: int
    mode: str
    alpha_0: float
    legal_fraction: float
    legal_fraction_union_bound: float
    witness_gamma_tilde: float
    witness_value: float
    norm_gamma_tilde: float
    norm_gamma: float
    norm_gamma_tilde_1: float
    norm_gamma_tilde_delta_1: float
    norm_gamma_delta_1: float
    max_norm_gamma_delta: float
    delta_coordinates: list[int]
    upper_bound_i: float
    measured_constant_i: float
    bound_ii_s1: float
    bound_ii_s2: float
    bound_ii: float
    certified_ratio_lower_bound: float
    ratio: float | None
    norms: dict[str, NormResult]
    checks: list[Check]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.norms.values())

    @property
    def flags(self) -> dict[str, bool]:
        return {c.name: c.passed for c in self.checks}

    def to_dict(self) -> dict:
        return asdict(self)


def lemma_ii_terms(alphas: np.ndarray, n: int, k: int) -> tuple[float, float]:
    """The two contributions to the squared norm bound of the remapped matrix.

    ``alphas`` holds ``alpha_0 .. alpha_{n-k}``.  Returns
    ``max_m alpha_m^2 C(m+k-1, k-1)`` and ``k^2 C(n-1, k) max_m (alpha_m - alpha_{m+1})^2``
    with ``m < n-k`` in the second maximum.
    """
    alphas = np.asarray(alphas, dtype=float)
    m = np.arange(len(alphas))
    counts = np.array([float(math.comb(int(j) + k - 1, k - 1)) for j in m])
    s1 = float(np.max(alphas**2 * counts))
    if n - k >= 1:
        diffs = alphas[:-1] - alphas[1:]
        s2 = k**2 * float(math.comb(n - 1, k)) * float(np.max(diffs**2))
    else:
        s2 = 0.0
    return s1, s2


def certified_bound_closed_form(n: int, k: int, legal_fraction: float | None = None) -> float:
    """Certified ratio lower bound from the closed-form inequalities alone.

    Without ``legal_fraction`` the union bound ``1 - C(n,k)/q`` at ``q = n^k`` is used.
    Only the support of the schedule (``m <= 2 n^{k/(k+1)}``) is evaluated.
    """
    if legal_fraction is None:
        legal_fraction = 1.0 - math.comb(n, k) / float(n) ** k
    top = min(n - k, int(math.ceil(2 * n ** (k / (k + 1)))) + 1)
    alphas = alpha_closed_form(np.arange(top + 1), n, k)
    s1, s2 = lemma_ii_terms(alphas, n, k)
    witness = alphas[0] * math.sqrt(math.comb(n, k) * legal_fraction)
    return witness / (2 * math.sqrt(s1 + s2))


def choose_mode(inst: AdversaryInstance, mode: str = "auto", cap: int | None = None) -> str:
    cap = dense_cap() if cap is None else cap
    entries = inst.row_count * inst.col_count
    if mode == "auto":
        return "dense" if entries <= cap else "structured"
    if mode == "dense" and entries > cap:
        raise TooLargeError(f"dense mode needs {entries} entries, cap is {cap}")
    if mode not in ("dense", "structured"):
        raise InvalidParameterError(f"unknown mode {mode!r}")
    return mode


def _norm(M, mode: str, tol: float, max_iter: int, seed: int) -> NormResult:
    if mode == "dense":
        return spectral_norm_dense(M)
    return spectral_norm_iter(M, tol=tol, max_iter=max_iter, seed=seed)


def lemma_bounds(
    inst: AdversaryInstance,
    mode: str = "auto",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = DEFAULT_SEED,
) -> LemmaReport:
    """Compute every norm of the lower-bound argument and check the inequalities.

    Checks, with ``C = C(n,k)``:
    ``witness <= ||G~|| <= k sqrt(C) max alpha``;
    ``||G~_1||^2 <= s1 + s2``;
    ``||G o D_1|| <= ||G~ o D_1|| <= 2 ||G~_1||``;
    ``legal_fraction >= 1 - C/q`` and ``||G|| >= alpha_0 sqrt(C legal_fraction)``;
    and a positive certified ratio, which in dense mode must not exceed the
    measured ratio.
    """
    mode = choose_mode(inst, mode)
    n, k, q = inst.n, inst.k, inst.q
    comb = math.comb(n, k)
    mask = legal_mask(inst)
    gt_op = build_gamma_tilde(inst)
    gt1_op = build_gamma_tilde_1(inst, 0)
    slack = DENSE_SLACK if mode == "dense" else ITERATIVE_SLACK
    uniform = inst.assignment.mode == "uniform"
    if mode == "dense":
        coords = list(range(n))
    else:
        # uniform arrays make the construction symmetric under coordinate swaps
        coords = [0] if uniform else list(range(n))

    witness_tilde = witness_lower_bound(gt_op)
    witness = witness_lower_bound(restrict_columns(gt_op, mask), mask)

    norms: dict[str, NormResult] = {}
    gamma_delta: dict[int, float] = {}
    norm = lambda M: _norm(M, mode, tol, max_iter, seed)  # noqa: E731
    if mode == "dense":
        gt = gt_op.dense()
        g = gt[:, mask.legal]
        rows = gt_op.row_symbols()
        cols = column_symbols(n, q)
        legal_cols = cols[mask.legal]
        norms["gamma_tilde"] = norm(gt)
        norms["gamma"] = norm(g)
        norms["gamma_tilde_1"] = norm(gt1_op.dense())
        norms["gamma_tilde_delta_1"] = norm(delta_hadamard(gt, rows, cols, 0))
        del gt
        for i in coords:
            r = norm(delta_hadamard(g, rows, legal_cols, i))
            norms[f"gamma_delta_{i + 1}"] = r
            gamma_delta[i] = r.value
    else:
        g_op = restrict_columns(gt_op, mask)
        norms["gamma_tilde"] = norm(gt_op)
        norms["gamma"] = norm(g_op)
        norms["gamma_tilde_1"] = norm(gt1_op)
        norms["gamma_tilde_delta_1"] = norm(gt_op.hadamard_coordinate(0))
        for i in coords:
            r = norm(g_op.hadamard_coordinate(i))
            norms[f"gamma_delta_{i + 1}"] = r
            gamma_delta[i] = r.value

    alphas = inst.alphas.values
    alpha_0 = float(alphas[0])
    max_alpha = float(np.max(np.abs(alphas)))
    upper_i = k * math.sqrt(comb) * max_alpha
    s1, s2 = lemma_ii_terms(alphas, n, k)
    bound_ii = s1 + s2
    union = 1.0 - comb / q
    witness_closed = alpha_0 * math.sqrt(comb * mask.fraction)
    certified = witness_closed / (2 * math.sqrt(bound_ii)) if bound_ii > 0 else math.inf
    nv = {name: r.value for name, r in norms.items()}
    max_delta = max(gamma_delta.values())
    ratio = nv["gamma"] / max_delta if mode == "dense" and max_delta > 0 else None

    checks = [
        Check("i_lower", witness_tilde, nv["gamma_tilde"], slack),
        Check("i_upper", nv["gamma_tilde"], upper_i, slack),
        Check("ii", nv["gamma_tilde_1"] ** 2, bound_ii, slack),
        Check("iii_submatrix", nv["gamma_delta_1"], nv["gamma_tilde_delta_1"], slack),
        Check("iii_remap", nv["gamma_tilde_delta_1"], 2 * nv["gamma_tilde_1"], slack),
        Check("iv_union_bound", union, mask.fraction, DENSE_SLACK),
        Check("iv_witness", witness_closed, nv["gamma"], slack),
        Check("v_positive", 0.0, certified, 0.0, strict=True),
    ]
    if ratio is not None:
        checks.append(Check("v_ratio", certified, ratio, slack))

    return LemmaReport(
        n=n, k=k, q=q, mode=mode,
        alpha_0=alpha_0,
        legal_fraction=mask.fraction,
        legal_fraction_union_bound=union,
        witness_gamma_tilde=witness_tilde,
        witness_value=witness,
        norm_gamma_tilde=nv["gamma_tilde"],
        norm_gamma=nv["gamma"],
        norm_gamma_tilde_1=nv["gamma_tilde_1"],
        norm_gamma_tilde_delta_1=nv["gamma_tilde_delta_1"],
        norm_gamma_delta_1=nv["gamma_delta_1"],
        max_norm_gamma_delta=max_delta,
        delta_coordinates=[i + 1 for i in coords],
        upper_bound_i=upper_i,
        measured_constant_i=nv["gamma_tilde"] / (math.sqrt(comb) * max_alpha),
        bound_ii_s1=s1,
        bound_ii_s2=s2,
        bound_ii=bound_ii,
        certified_ratio_lower_bound=certified,
        ratio=ratio,
        norms=norms,
        checks=checks,
    )


def adversary_value(inst: AdversaryInstance) -> tuple[float, float, float]:
    """``(||G||, max_i ||G o D_i||, ratio)`` for the legal-column matrix, dense only."""
    choose_mode(inst, "dense")
    mask = legal_mask(inst)
    gt_op = build_gamma_tilde(inst)
    g = gt_op.dense()[:, mask.legal]
    rows = gt_op.row_symbols()
    cols = column_symbols(inst.n, inst.q)[mask.legal]
    norm = spectral_norm_dense(g).value
    max_delta = max(
        spectral_norm_dense(delta_hadamard(g, rows, cols, i)).value for i in range(inst.n)
    )
    return norm, max_delta, norm / max_delta
