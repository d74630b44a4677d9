"""Orthogonal arrays of length k and the k-orthogonal-array function.

Symbols are ``0, ..., q-1``.  Members are kept in lexicographic order; that
order fixes the row labels of every block built from an array.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .operators import InvalidParameterError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OrthogonalArray:
    k: int
    q: int
    members: tuple[tuple[int, ...], ...]
    _lookup: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        table = np.zeros((self.q,) * self.k, dtype=bool)
        for t in self.members:
            table[t] = True
        table.setflags(write=False)
        object.__setattr__(self, "_lookup", table)

    def __contains__(self, x) -> bool:
        return bool(self._lookup[tuple(x)])

    def __len__(self) -> int:
        return len(self.members)

    def contains_rows(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized membership for an ``(N, k)`` array of tuples."""
        xs = np.asarray(xs)
        return self._lookup[tuple(xs.T)]

    def as_array(self) -> np.ndarray:
        return np.array(self.members, dtype=np.int64).reshape(len(self.members), self.k)


def _make(k: int, q: int, members: Iterable[Sequence[int]]) -> OrthogonalArray:
    return OrthogonalArray(k, q, tuple(sorted({tuple(int(s) for s in t) for t in members})))


def ksum_array(q: int, k: int, t: int) -> OrthogonalArray:
    """Tuples in ``Z_q^k`` whose sum is ``t`` modulo ``q``."""
    if q < 2 or k < 1:
        raise InvalidParameterError(f"need q >= 2 and k >= 1, got q={q}, k={k}")
    if not 0 <= t < q:
        raise InvalidParameterError(f"target {t} outside Z_{q}")
    # the first k-1 symbols are free, the last one is forced
    members = []
    for head in itertools.product(range(q), repeat=k - 1):
        members.append(head + ((t - sum(head)) % q,))
    return _make(k, q, members)


def distinctness_array(q: int) -> OrthogonalArray:
    """The diagonal ``{(a, a)}`` of ``[q]^2``."""
    if q < 2:
        raise InvalidParameterError(f"need q >= 2, got {q}")
    return _make(2, q, [(a, a) for a in range(q)])


def find_violation(members: Iterable[Sequence[int]], k: int, q: int) -> str | None:
    """Describe the first way ``members`` fails to be an orthogonal array, or ``None``."""
    members = [tuple(int(s) for s in t) for t in members]
    for t in members:
        if len(t) != k:
            return f"tuple {t} has length {len(t)}, expected {k}"
        if any(not 0 <= s < q for s in t):
            return f"tuple {t} has a symbol outside [0, {q})"
    if len(set(members)) != len(members):
        dup = next(t for t in members if members.count(t) > 1)
        return f"duplicate tuple {dup}"
    if len(members) != q ** (k - 1):
        return f"size {len(members)} != q^(k-1) = {q ** (k - 1)}"
    for i in range(k):
        counts: dict[tuple[int, ...], int] = {}
        for t in members:
            rest = t[:i] + t[i + 1:]
            counts[rest] = counts.get(rest, 0) + 1
        for rest in itertools.product(range(q), repeat=k - 1):
            c = counts.get(rest, 0)
            if c != 1:
                return (
                    f"coordinate {i + 1}: partial tuple {rest} has {c} completions"
                )
    return None


def verify_oa(members: Iterable[Sequence[int]], k: int, q: int) -> bool:
    """Exhaustive check of the unique-completion property."""
    problem = find_violation(members, k, q)
    if problem is not None:
        log.debug("not an orthogonal array: %s", problem)
    return problem is None


def array_from_tuples(members: Iterable[Sequence[int]], k: int, q: int) -> OrthogonalArray:
    members = list(members)
    problem = find_violation(members, k, q)
    if problem is not None:
        raise InvalidParameterError(f"not an orthogonal array: {problem}")
    return _make(k, q, members)


class ArrayAssignment:
    """Which orthogonal array sits on each k-subset of coordinates.

    Subsets are zero-based sorted tuples.  ``uniform`` uses one array
    everywhere; otherwise ``per_subset`` must cover every k-subset.
    """

    def __init__(
        self,
        uniform: OrthogonalArray | None = None,
        per_subset: Mapping[tuple[int, ...], OrthogonalArray] | None = None,
    ):
        if (uniform is None) == (per_subset is None):
            raise InvalidParameterError("give exactly one of uniform or per_subset")
        self.uniform = uniform
        self.per_subset = dict(per_subset) if per_subset is not None else None
        arrays = [uniform] if uniform is not None else list(self.per_subset.values())
        shapes = {(a.k, a.q) for a in arrays}
        if len(shapes) != 1:
            raise InvalidParameterError("all arrays must share k and q")
        self.k, self.q = shapes.pop()
        for a in arrays:
            if not verify_oa(a.members, a.k, a.q):
                raise InvalidParameterError("assignment references an invalid array")

    @property
    def mode(self) -> str:
        return "uniform" if self.uniform is not None else "per-subset"

    def array_for(self, subset: Sequence[int]) -> OrthogonalArray:
        if self.uniform is not None:
            return self.uniform
        try:
            return self.per_subset[tuple(subset)]
        except KeyError:
            raise InvalidParameterError(f"no array assigned to subset {tuple(subset)}") from None

    def check_covers(self, n: int) -> None:
        if self.per_subset is None:
            return
        missing = [s for s in itertools.combinations(range(n), self.k) if s not in self.per_subset]
        if missing:
            raise InvalidParameterError(f"no array assigned to subset {missing[0]}")


def subsets(n: int, k: int) -> list[tuple[int, ...]]:
    """k-subsets of ``range(n)`` in lexicographic order."""
    return list(itertools.combinations(range(n), k))


def evaluate_f(x: Sequence[int], assignment: ArrayAssignment, n: int, k: int) -> int:
    """1 iff some k-subset projection of ``x`` is a member of its array."""
    if len(x) != n:
        raise InvalidParameterError(f"input has length {len(x)}, expected {n}")
    if n < k:
        raise InvalidParameterError(f"need n >= k, got n={n}, k={k}")
    for s in subsets(n, k):
        if tuple(x[j] for j in s) in assignment.array_for(s):
            return 1
    return 0


def read_array_file(path, q: int, k: int) -> list[tuple[int, ...]]:
    """Parse one whitespace-separated k-tuple per line; blank lines and ``#`` comments skipped.

    Raises :class:`InvalidParameterError` on malformed lines or symbols outside ``[0, q)``.
    """
    tuples = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                t = tuple(int(s) for s in line.split())
            except ValueError:
                raise InvalidParameterError(f"line {lineno}: not integers: {line!r}") from None
            if len(t) != k:
                raise InvalidParameterError(f"line {lineno}: expected {k} symbols, got {len(t)}")
            if any(not 0 <= s < q for s in t):
                raise InvalidParameterError(f"line {lineno}: symbol outside [0, {q})")
            tuples.append(t)
    return tuples
