"""Exact Gram-matrix machinery for positive-definite integral quadratic forms.

A form is stored as its symmetric integer Gram matrix A, with
Q(x) = xᵀAx.  All arithmetic is exact: Python integers for the matrices
and ``fractions.Fraction`` for Gram-Schmidt data.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from sympy import Matrix as SympyMatrix
from sympy.polys.domains import ZZ
from sympy.polys.matrices import DomainMatrix

from genuslab.errors import DimensionOutOfRange, NotPositiveDefinite, NotSymmetric

logger = logging.getLogger(__name__)

MIN_DIM = 2
MAX_DIM = 8
CANONICAL_MAX_DIM = 6
LLL_DELTA = Fraction(99, 100)

Gram = Tuple[Tuple[int, ...], ...]
Vector = Tuple[int, ...]


def _as_gram(rows: Sequence[Sequence[int]]) -> Gram:
    return tuple(tuple(int(x) for x in row) for row in rows)


def int_det(rows: Sequence[Sequence[int]]) -> int:
    n = len(rows)
    if n == 0:
        return 1
    dm = DomainMatrix([[ZZ(int(x)) for x in row] for row in rows], (n, n), ZZ)
    return int(dm.det())


def _mat(rows: Sequence[Sequence[int]]) -> np.ndarray:
    return np.array([[int(x) for x in row] for row in rows], dtype=object).reshape(
        len(rows), len(rows[0]) if rows else 0
    )


def _congruent(gram: Gram, entries: Sequence[Sequence[int]]) -> Gram:
    """Return Uᵀ·gram·U."""
    u = _mat(entries)
    return _as_gram((u.T @ _mat(gram) @ u).tolist())


@dataclass(frozen=True)
class QuadraticForm:
    """A validated positive-definite integral Gram matrix.

    Build instances with :func:`validate_form`; the constructor trusts its
    input.
    """

    gram: Gram
    det_cache: Optional[int] = field(default=None, compare=False, repr=False)

    @property
    def n(self) -> int:
        return len(self.gram)

    def value(self, v: Sequence[int]) -> int:
        return self.inner(v, v)

    def inner(self, u: Sequence[int], v: Sequence[int]) -> int:
        g = self.gram
        return sum(u[i] * g[i][j] * v[j] for i in range(len(g)) for j in range(len(g)) if u[i] and v[j])

    def apply(self, u: "Unimodular") -> "QuadraticForm":
        """The form in the basis given by the columns of ``u``."""
        return QuadraticForm(_congruent(self.gram, u.entries), self.det_cache)

    def diagonal(self) -> Tuple[int, ...]:
        return tuple(self.gram[i][i] for i in range(self.n))

    def to_text(self) -> str:
        lines = [str(self.n)]
        lines.extend(" ".join(str(x) for x in row) for row in self.gram)
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Unimodular:
    """An integer matrix of determinant ±1 (columns are basis vectors)."""

    entries: Gram

    def __post_init__(self) -> None:
        d = int_det(self.entries)
        if d not in (1, -1):
            raise ValueError(f"matrix has determinant {d}, not ±1")

    @property
    def n(self) -> int:
        return len(self.entries)

    @classmethod
    def identity(cls, n: int) -> "Unimodular":
        return cls(tuple(tuple(int(i == j) for j in range(n)) for i in range(n)))

    @classmethod
    def from_columns(cls, columns: Sequence[Sequence[int]]) -> "Unimodular":
        n = len(columns)
        return cls(tuple(tuple(int(columns[c][r]) for c in range(n)) for r in range(n)))

    def columns(self) -> List[Vector]:
        return [tuple(row[c] for row in self.entries) for c in range(self.n)]

    def __matmul__(self, other: "Unimodular") -> "Unimodular":
        return Unimodular(_as_gram((_mat(self.entries) @ _mat(other.entries)).tolist()))

    def apply(self, v: Sequence[int]) -> Vector:
        return tuple(sum(row[j] * v[j] for j in range(len(v))) for row in self.entries)

    def inverse(self) -> "Unimodular":
        m = SympyMatrix(self.entries)
        inv = m.adjugate() * m.det()
        return Unimodular(_as_gram(inv.tolist()))


@dataclass(frozen=True)
class CanonicalCertificate:
    """``witnessᵀ · original · witness == canonical``, checked on construction."""

    canonical: QuadraticForm
    witness: Unimodular
    original: QuadraticForm = field(compare=False, repr=False)

    def __post_init__(self) -> None:
        if _congruent(self.original.gram, self.witness.entries) != self.canonical.gram:
            raise AssertionError("canonical witness does not transform the original form")


class Reduction(NamedTuple):
    form: QuadraticForm
    witness: Unimodular


def validate_form(raw: Sequence[Sequence[int]]) -> QuadraticForm:
    """Check a raw integer matrix and return it as a :class:`QuadraticForm`."""
    n = len(raw)
    if any(len(row) != n for row in raw):
        raise NotSymmetric(f"matrix is not square ({n} rows)")
    if not MIN_DIM <= n <= MAX_DIM:
        raise DimensionOutOfRange(f"dimension {n} outside [{MIN_DIM}, {MAX_DIM}]")
    for row in raw:
        for x in row:
            if isinstance(x, bool) or int(x) != x:
                raise NotSymmetric(f"entry {x!r} is not an integer")
    gram = _as_gram(raw)
    for i in range(n):
        for j in range(i):
            if gram[i][j] != gram[j][i]:
                raise NotSymmetric(f"entries ({i},{j}) and ({j},{i}) differ")
    det = 1
    for k in range(1, n + 1):
        det = int_det([row[:k] for row in gram[:k]])
        if det <= 0:
            raise NotPositiveDefinite(f"leading minor of size {k} is {det}")
    return QuadraticForm(gram, det)


def determinant(form: QuadraticForm) -> int:
    if form.det_cache is not None:
        return form.det_cache
    return int_det(form.gram)


def gram_schmidt(gram: Sequence[Sequence[int]]) -> Tuple[List[List[Fraction]], List[Fraction]]:
    """Exact Gram-Schmidt data (mu, squared lengths) of a Gram matrix."""
    n = len(gram)
    mu = [[Fraction(0)] * n for _ in range(n)]
    bstar = [Fraction(0)] * n
    for i in range(n):
        for j in range(i):
            s = Fraction(gram[i][j]) - sum((mu[j][k] * mu[i][k] * bstar[k] for k in range(j)), Fraction(0))
            mu[i][j] = s / bstar[j]
        bstar[i] = gram[i][i] - sum((mu[i][k] ** 2 * bstar[k] for k in range(i)), Fraction(0))
        mu[i][i] = Fraction(1)
    return mu, bstar


def lll_reduce(form: QuadraticForm) -> Reduction:
    """LLL-reduce the form with δ = 99/100 in exact rational arithmetic."""
    n = form.n
    a = _mat(form.gram)
    basis = [[int(i == j) for j in range(n)] for i in range(n)]

    def gram_of() -> List[List[int]]:
        b = np.array(basis, dtype=object)
        return (b @ a @ b.T).tolist()

    g = gram_of()
    mu, bstar = gram_schmidt(g)
    k = 1
    while k < n:
        for j in range(k - 1, -1, -1):
            q = math.floor(mu[k][j] + Fraction(1, 2))
            if q:
                basis[k] = [x - q * y for x, y in zip(basis[k], basis[j])]
                for i in range(j):
                    mu[k][i] -= q * mu[j][i]
                mu[k][j] -= q
        if bstar[k] >= (LLL_DELTA - mu[k][k - 1] ** 2) * bstar[k - 1]:
            k += 1
        else:
            basis[k], basis[k - 1] = basis[k - 1], basis[k]
            k = max(k - 1, 1)
            g = gram_of()
            mu, bstar = gram_schmidt(g)
    witness = Unimodular.from_columns(basis)
    return Reduction(QuadraticForm(_as_gram(gram_of()), form.det_cache), witness)


def integer_interval(center: Fraction, radius_sq: Fraction) -> Tuple[int, int]:
    """Integers t with (t - center)² ≤ radius_sq, as an inclusive range."""
    if radius_sq < 0:
        return 1, 0
    s = math.isqrt(math.floor(radius_sq)) + 1
    lo = math.floor(center) - s
    hi = math.ceil(center) + s
    while lo <= hi and (lo - center) ** 2 > radius_sq:
        lo += 1
    while hi >= lo and (hi - center) ** 2 > radius_sq:
        hi -= 1
    return lo, hi


def _fincke_pohst(mu: List[List[Fraction]], bstar: List[Fraction], bound: int) -> Iterator[Vector]:
    """All x (zero included) with Σ bstar_j (x_j + Σ_{i>j} mu_ij x_i)² ≤ bound."""
    n = len(bstar)
    x = [0] * n

    def rec(j: int, remaining: Fraction) -> Iterator[Vector]:
        center = -sum((mu[i][j] * x[i] for i in range(j + 1, n) if x[i]), Fraction(0))
        lo, hi = integer_interval(center, remaining / bstar[j])
        for t in range(lo, hi + 1):
            x[j] = t
            if j == 0:
                yield tuple(x)
            else:
                yield from rec(j - 1, remaining - bstar[j] * (t - center) ** 2)
        x[j] = 0

    yield from rec(n - 1, Fraction(bound))


def count_points(form: QuadraticForm, bound: int, cap: Optional[int] = None) -> int:
    """Number of nonzero x with Q(x) ≤ bound.

    The innermost coordinate is counted by interval length instead of being
    enumerated.  ``cap`` aborts with ``OverflowError`` once exceeded.
    """
    if bound < 1:
        return 0
    red = lll_reduce(form)
    mu, bstar = gram_schmidt(red.form.gram)
    n = len(bstar)
    x = [0] * n
    total = 0

    def rec(j: int, remaining: Fraction) -> None:
        nonlocal total
        center = -sum((mu[i][j] * x[i] for i in range(j + 1, n) if x[i]), Fraction(0))
        lo, hi = integer_interval(center, remaining / bstar[j])
        if j == 0:
            total += max(0, hi - lo + 1)
            if cap is not None and total > cap + 1:
                raise OverflowError(total)
            return
        for t in range(lo, hi + 1):
            x[j] = t
            rec(j - 1, remaining - bstar[j] * (t - center) ** 2)
        x[j] = 0

    rec(n - 1, Fraction(bound))
    return total - 1


def short_vectors(form: QuadraticForm, bound: int, dedup: bool = False) -> List[Tuple[Vector, int]]:
    """All nonzero v with Q(v) ≤ bound, sorted by (value, v).

    With ``dedup`` only the member of each ± pair whose first nonzero
    coordinate is positive is kept.
    """
    if bound < 1:
        return []
    red = lll_reduce(form)
    mu, bstar = gram_schmidt(red.form.gram)
    out = []
    for x in _fincke_pohst(mu, bstar, bound):
        if not any(x):
            continue
        v = red.witness.apply(x)
        if dedup and next(c for c in v if c) < 0:
            continue
        out.append((v, form.value(v)))
    out.sort(key=lambda item: (item[1], item[0]))
    return out


def minimum(form: QuadraticForm) -> int:
    red = lll_reduce(form)
    return min(value for _, value in short_vectors(form, min(red.form.diagonal())))


def theta_prefix(form: QuadraticForm, length: int) -> Tuple[int, ...]:
    """Representation numbers r(1), ..., r(length)."""
    counts = [0] * length
    for _, value in short_vectors(form, length):
        counts[value - 1] += 1
    return tuple(counts)


def _isometry_columns(source: QuadraticForm, target: Gram) -> Iterator[Tuple[Vector, ...]]:
    """Backtrack over column images v_j with vᵢᵀ·A·vⱼ = target[i][j]."""
    n = len(target)
    by_norm: Dict[int, List[Tuple[Vector, Vector]]] = {}
    a = source.gram
    for v, value in short_vectors(source, max(target[i][i] for i in range(n))):
        av = tuple(sum(a[r][c] * v[c] for c in range(n)) for r in range(n))
        by_norm.setdefault(value, []).append((v, av))
    cols: List[Tuple[Vector, Vector]] = []

    def extend(j: int) -> Iterator[Tuple[Vector, ...]]:
        if j == n:
            yield tuple(v for v, _ in cols)
            return
        for v, av in by_norm.get(target[j][j], ()):
            if all(sum(x * y for x, y in zip(cols[i][0], av)) == target[i][j] for i in range(j)):
                cols.append((v, av))
                yield from extend(j + 1)
                cols.pop()

    yield from extend(0)


def _theta_length(form: QuadraticForm) -> int:
    return min(form.diagonal()) + 2


def is_isometric(first: QuadraticForm, second: QuadraticForm) -> Optional[Unimodular]:
    """A witness U with Uᵀ·first·U = second, or ``None`` when none exists."""
    if first.n != second.n or determinant(first) != determinant(second):
        return None
    if first.gram == second.gram:
        return Unimodular.identity(first.n)
    if minimum(first) != minimum(second):
        return None
    length = _theta_length(second)
    if theta_prefix(first, length) != theta_prefix(second, length):
        return None
    red = lll_reduce(second)
    for cols in _isometry_columns(first, red.form.gram):
        witness = Unimodular.from_columns(cols) @ red.witness.inverse()
        if _congruent(first.gram, witness.entries) != second.gram:
            raise AssertionError("isometry witness failed verification")
        return witness
    return None


def automorphisms(form: QuadraticForm) -> List[Unimodular]:
    """All U with Uᵀ·A·U = A, in the form's own coordinates."""
    red = lll_reduce(form)
    w, w_inv = red.witness, red.witness.inverse()
    return [w @ Unimodular.from_columns(cols) @ w_inv for cols in _isometry_columns(red.form, red.form.gram)]


def automorphism_order(form: QuadraticForm) -> int:
    red = lll_reduce(form)
    return sum(1 for _ in _isometry_columns(red.form, red.form.gram))


def canonical_key(gram: Sequence[Sequence[int]]) -> Tuple:
    """Ordering key: column by column over the upper triangle, diagonal first,
    then off-diagonal entries by absolute value with nonnegative preferred."""
    n = len(gram)
    key: List = []
    for k in range(n):
        key.append(gram[k][k])
        key.extend((abs(gram[i][k]), gram[i][k] < 0) for i in range(k))
    return tuple(key)


class _Partial(NamedTuple):
    cols: Tuple[Vector, ...]
    images: Tuple[Vector, ...]  # A·v for each chosen column
    kinv: Tuple[Vector, ...]  # rows of the inverse of a unimodular completion


def _extend_completion(kinv: Tuple[Vector, ...], k: int, v: Vector) -> Tuple[Vector, ...]:
    """Update the completion inverse so that its row k maps v to 1 and every
    other row maps v to 0; earlier columns keep their images."""
    n = len(kinv)
    rows = [list(r) for r in kinv]
    head = [sum(a * b for a, b in zip(kinv[r], v)) for r in range(k)]
    tail = [sum(a * b for a, b in zip(kinv[r], v)) for r in range(k, n)]
    while True:
        nz = [i for i, t in enumerate(tail) if t]
        if len(nz) == 1:
            break
        piv = min(nz, key=lambda i: abs(tail[i]))
        for i in nz:
            if i != piv:
                q = tail[i] // tail[piv]
                tail[i] -= q * tail[piv]
                rows[k + i] = [x - q * y for x, y in zip(rows[k + i], rows[k + piv])]
    piv = nz[0]
    tail[0], tail[piv] = tail[piv], tail[0]
    rows[k], rows[k + piv] = rows[k + piv], rows[k]
    if tail[0] < 0:
        rows[k] = [-x for x in rows[k]]
    for r in range(k):
        rows[r] = [x - head[r] * y for x, y in zip(rows[r], rows[k])]
    return tuple(tuple(r) for r in rows)


def _canonical_search(reduced: QuadraticForm, bound: int) -> Optional[Tuple[Vector, ...]]:
    n = reduced.n
    cands = []
    for v, value in short_vectors(reduced, bound, dedup=True):
        av = tuple(sum(reduced.gram[r][c] * v[c] for c in range(n)) for r in range(n))
        cands.append((value, v, av))
    identity = tuple(tuple(int(i == j) for j in range(n)) for i in range(n))
    survivors = [_Partial((), (), identity)]
    for k in range(n):
        best: Optional[Tuple] = None
        chosen: List[Tuple[_Partial, Vector, Vector]] = []
        for s in survivors:
            found: Optional[int] = None
            for value, v, av in cands:
                if found is not None and value > found:
                    break
                tail = [sum(a * b for a, b in zip(s.kinv[r], v)) for r in range(k, n)]
                if math.gcd(*tail) != 1:
                    continue
                found = value
                row = (value,) + tuple(abs(sum(x * y for x, y in zip(c, av))) for c in s.cols)
                if best is None or row < best:
                    best, chosen = row, [(s, v, av)]
                elif row == best:
                    chosen.append((s, v, av))
            if found is None:
                return None
        survivors = [
            _Partial(s.cols + (v,), s.images + (av,), _extend_completion(s.kinv, k, v)) for s, v, av in chosen
        ]
    best_key: Optional[Tuple] = None
    best_cols: Tuple[Vector, ...] = ()
    for s in survivors:
        for signs in product((1, -1), repeat=n - 1):
            eps = (1,) + signs
            cols = tuple(tuple(e * x for x in c) for e, c in zip(eps, s.cols))
            gram = [[eps[i] * eps[j] * sum(x * y for x, y in zip(s.cols[i], s.images[j])) for j in range(n)] for i in range(n)]
            key = canonical_key(gram)
            if best_key is None or key < best_key:
                best_key, best_cols = key, cols
    return best_cols


def canonical_form(form: QuadraticForm) -> CanonicalCertificate:
    """Canonical representative of the Z-equivalence class of ``form``.

    Bases are assembled greedily: each new vector has minimal norm among the
    vectors extending the partial basis to a primitive set, and ties are
    broken by absolute inner products, then by signs.
    """
    if form.n > CANONICAL_MAX_DIM:
        raise DimensionOutOfRange(f"canonical form supports n <= {CANONICAL_MAX_DIM}, got {form.n}")
    red = lll_reduce(form)
    bound = max(red.form.diagonal())
    while True:
        cols = _canonical_search(red.form, bound)
        if cols is not None:
            break
        bound *= 2
        logger.debug("canonical search bound raised to %d", bound)
    witness = red.witness @ Unimodular.from_columns(cols)
    canonical = QuadraticForm(_congruent(form.gram, witness.entries), form.det_cache)
    return CanonicalCertificate(canonical, witness, form)
