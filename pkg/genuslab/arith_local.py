"""Local invariants of integral forms at the primes and at the real place.

Places are integers: a prime p, or :data:`REAL` for the real place.
Rationals enter the symbol routines as ``int`` or ``Fraction``; a rational
a/b is replaced by the integer a·b, which lies in the same square class.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, product
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

from sympy import factorint, isprime, legendre_symbol, nextprime

from genuslab.qform_core import QuadraticForm, determinant, gram_schmidt, lll_reduce, short_vectors

logger = logging.getLogger(__name__)

REAL = -1

Rational = Union[int, Fraction]
SquareClassVector = Tuple[int, ...]


def valuation(x: int, p: int) -> int:
    if x == 0:
        raise ValueError("valuation of zero")
    v = 0
    while x % p == 0:
        x //= p
        v += 1
    return v


def _rational_valuation(x: Fraction, p: int) -> int:
    return valuation(x.numerator, p) - valuation(x.denominator, p)


def _unit_residue(x: Fraction, p: int, modulus: int) -> int:
    """The unit part of x reduced modulo ``modulus`` (a power of p)."""
    num = x.numerator // p ** valuation(x.numerator, p)
    den = x.denominator // p ** valuation(x.denominator, p)
    return num * pow(den, -1, modulus) % modulus


def _integral(a: Rational) -> int:
    a = Fraction(a)
    if a == 0:
        raise ValueError("Hilbert symbol of zero")
    return a.numerator * a.denominator


def squarefree_kernel(x: int) -> int:
    """The squarefree integer in the square class of x (sign kept)."""
    sign = -1 if x < 0 else 1
    out = 1
    for q, e in factorint(abs(x)).items():
        if e % 2:
            out *= q
    return sign * out


def hilbert_symbol(a: Rational, b: Rational, place: int) -> int:
    a, b = _integral(a), _integral(b)
    if place == REAL:
        return -1 if a < 0 and b < 0 else 1
    p = place
    alpha, beta = valuation(a, p), valuation(b, p)
    u, v = a // p**alpha, b // p**beta
    if p != 2:
        sign = -1 if (alpha * beta * ((p - 1) // 2)) % 2 else 1
        return sign * legendre_symbol(u % p, p) ** beta * legendre_symbol(v % p, p) ** alpha

    def eps(t: int) -> int:
        return ((t % 8 - 1) // 2) % 2

    def omega(t: int) -> int:
        return (((t % 8) ** 2 - 1) // 8) % 2

    e = eps(u) * eps(v) + alpha * omega(v) + beta * omega(u)
    return -1 if e % 2 else 1


def diagonalize(form: QuadraticForm, order: Optional[Sequence[int]] = None) -> List[Fraction]:
    """Rational diagonal entries of the form, basis taken in ``order``."""
    idx = list(order) if order is not None else list(range(form.n))
    gram = [[form.gram[i][j] for j in idx] for i in idx]
    _, bstar = gram_schmidt(gram)
    return bstar


def hasse_invariant(form: QuadraticForm, place: int, order: Optional[Sequence[int]] = None) -> int:
    d = diagonalize(form, order)
    out = 1
    for i, j in combinations(range(len(d)), 2):
        out *= hilbert_symbol(d[i], d[j], place)
    return out


@dataclass(frozen=True)
class JordanConstituent:
    """One scale of a Jordan splitting.

    ``unit_class`` is the Legendre symbol of the determinant unit for odd p
    and the determinant unit mod 8 for p = 2.  ``odd`` and ``oddity`` only
    carry information at p = 2.
    """

    scale: int
    dim: int
    unit_class: int
    odd: bool = False
    oddity: int = 0


@dataclass(frozen=True)
class JordanSplitting:
    prime: int
    constituents: Tuple[JordanConstituent, ...]

    @property
    def dimension(self) -> int:
        return sum(c.dim for c in self.constituents)

    @property
    def det_valuation(self) -> int:
        return sum(c.scale * c.dim for c in self.constituents)


def _jordan_blocks(form: QuadraticForm, p: int) -> List[Tuple[int, ...]]:
    """Block-diagonalize over Z_p; 1×1 blocks as (entry,), 2×2 as (a, b, d)."""
    n = form.n
    m = [[Fraction(x) for x in row] for row in form.gram]
    active = list(range(n))
    blocks: List[Tuple[Fraction, ...]] = []

    def val(x: Fraction) -> int:
        return _rational_valuation(x, p)

    while active:
        low = min(val(m[i][j]) for i in active for j in active if m[i][j] != 0)
        diag = [i for i in active if m[i][i] != 0 and val(m[i][i]) == low]
        if diag:
            block = [diag[0]]
        else:
            i, j = next((i, j) for i, j in combinations(active, 2) if m[i][j] != 0 and val(m[i][j]) == low)
            if p == 2:
                block = [i, j]
            else:
                for k in range(n):
                    m[i][k] += m[j][k]
                for k in range(n):
                    m[k][i] += m[k][j]
                block = [i]
        rest = [k for k in active if k not in block]
        if len(block) == 1:
            i = block[0]
            for k in rest:
                if m[k][i] == 0:
                    continue
                c = m[k][i] / m[i][i]
                m[k] = [x - c * y for x, y in zip(m[k], m[i])]
                for r in range(n):
                    m[r][k] -= c * m[r][i]
            blocks.append((m[i][i],))
        else:
            i, j = block
            a, b, d = m[i][i], m[i][j], m[j][j]
            det = a * d - b * b
            for k in rest:
                s, t = m[i][k], m[j][k]
                x = (d * s - b * t) / det
                y = (a * t - b * s) / det
                m[k] = [z - x * u - y * w for z, u, w in zip(m[k], m[i], m[j])]
                for r in range(n):
                    m[r][k] -= x * m[r][i] + y * m[r][j]
            blocks.append((a, b, d))
        active = rest
    return blocks


def jordan_decomposition(form: QuadraticForm, p: int) -> JordanSplitting:
    modulus = 8 if p == 2 else p
    grouped: Dict[int, List[Tuple[Fraction, ...]]] = {}
    for block in _jordan_blocks(form, p):
        if len(block) == 1:
            scale = _rational_valuation(block[0], p)
        else:
            scale = _rational_valuation(block[1], p)
        grouped.setdefault(scale, []).append(block)
    constituents = []
    for scale in sorted(grouped):
        dim, unit, odd, oddity = 0, 1, False, 0
        for block in grouped[scale]:
            if len(block) == 1:
                u = _unit_residue(block[0], p, modulus)
                dim += 1
                odd = True
                oddity += u
            else:
                a, b, d = block
                u = _unit_residue(a * d - b * b, p, modulus)
                dim += 2
            unit = unit * u % modulus
        if p == 2:
            constituents.append(JordanConstituent(scale, dim, unit, odd, oddity % 8))
        else:
            constituents.append(JordanConstituent(scale, dim, legendre_symbol(unit, p)))
    return JordanSplitting(p, tuple(constituents))


def two_adic_symbol(form: QuadraticForm) -> Tuple[Tuple[int, int, int, bool, int], ...]:
    """Canonical 2-adic genus symbol as (scale, dim, sign, odd, oddity) rows.

    Oddities are fused per compartment and signs are walked to the front of
    each train, so equal symbols mean Z_2-equivalent forms.
    """
    splitting = jordan_decomposition(form, 2)
    by_scale = {c.scale: c for c in splitting.constituents}
    top = max(by_scale)
    dense = []
    for s in range(top + 1):
        c = by_scale.get(s)
        if c is None:
            dense.append([s, 0, 1, False, 0])
        else:
            dense.append([s, c.dim, 1 if c.unit_class in (1, 7) else -1, c.odd, c.oddity])

    compartments: List[List[int]] = []
    for i, row in enumerate(dense):
        if row[3]:
            if compartments and compartments[-1][-1] == i - 1:
                compartments[-1].append(i)
            else:
                compartments.append([i])
    for comp in compartments:
        total = sum(dense[i][4] for i in comp) % 8
        for i in comp:
            dense[i][4] = 0
        dense[comp[0]][4] = total

    trains: List[List[int]] = [[0]]
    for i in range(1, len(dense)):
        if dense[i - 1][3] or dense[i][3]:
            trains[-1].append(i)
        else:
            trains.append([i])
    for train in trains:
        while train and dense[train[0]][1] == 0:
            train.pop(0)
        while train and dense[train[-1]][1] == 0:
            train.pop()
        for pos in range(len(train) - 1, 0, -1):
            idx = train[pos]
            if dense[idx][2] == -1:
                dense[idx][2] = 1
                dense[idx - 1][2] *= -1
                for comp in compartments:
                    if idx in comp or idx - 1 in comp:
                        dense[comp[0]][4] = (dense[comp[0]][4] + 4) % 8
    return tuple((r[0], r[1], r[2], r[3], r[4]) for r in dense if r[1] > 0)


def locally_equivalent(first: QuadraticForm, second: QuadraticForm, place: int) -> bool:
    if first.n != second.n:
        return False
    if place == REAL:
        return True
    if place == 2:
        return two_adic_symbol(first) == two_adic_symbol(second)
    return jordan_decomposition(first, place) == jordan_decomposition(second, place)


def same_genus(first: QuadraticForm, second: QuadraticForm) -> bool:
    if first.n != second.n:
        return False
    det = determinant(first)
    if det != determinant(second):
        return False
    primes = sorted(set(factorint(2 * det)))
    return all(locally_equivalent(first, second, p) for p in primes)


def det_square_class(form: QuadraticForm, p: int) -> int:
    """Representative of det(Q) in Q_p^×/(Q_p^×)².

    Odd p: one of 1, u, p, u·p with u the least non-residue.
    p = 2: one of ±1, ±2, ±5, ±10.
    """
    det = determinant(form)
    v = valuation(det, p)
    unit = det // p**v
    if p == 2:
        rep = {1: 1, 3: -5, 5: 5, 7: -1}[unit % 8]
    else:
        rep = 1 if legendre_symbol(unit % p, p) == 1 else least_nonresidue(p)
    return rep * p ** (v % 2)


def least_nonresidue(p: int) -> int:
    return next(u for u in range(2, p) if legendre_symbol(u, p) == -1)


@dataclass(frozen=True)
class LocalInvariants:
    prime: int
    hasse: int
    det_square_class: int
    jordan: JordanSplitting


def local_invariants(form: QuadraticForm, p: int) -> LocalInvariants:
    return LocalInvariants(p, hasse_invariant(form, p), det_square_class(form, p), jordan_decomposition(form, p))


@dataclass(frozen=True)
class DiscriminantField:
    kind: str  # "trivial" or "quadratic"
    d: Optional[int] = None
    field_disc: int = 1


def discriminant_field(form: QuadraticForm) -> DiscriminantField:
    if form.n % 2:
        return DiscriminantField("trivial")
    d = squarefree_kernel((-1) ** (form.n // 2) * determinant(form))
    if d == 1:
        return DiscriminantField("trivial")
    return DiscriminantField("quadratic", d, d if d % 4 == 1 else 4 * d)


class GoodPlace(NamedTuple):
    prime: int
    ratio: float
    log2_disc: float


def good_place(form: QuadraticForm, floor: int = 3) -> GoodPlace:
    """Smallest prime p ≥ floor with p ∤ 2·det(Q) and p unramified in L.

    ``ratio`` is p / (log₂ disc + 2)², tracked against the logarithmic
    bound on good places.
    """
    from genuslab.volume_disc import disc_homogeneous

    if floor < 3:
        raise ValueError("floor must be at least 3")
    bad = 2 * determinant(form) * discriminant_field(form).field_disc
    p = floor if isprime(floor) else nextprime(floor)
    while bad % p == 0:
        p = nextprime(p)
    log2_disc = math.log2(disc_homogeneous(form, with_pluecker=False).disc)
    return GoodPlace(int(p), p / (log2_disc + 2) ** 2, log2_disc)


def square_class_vector(x: Rational, p: int) -> SquareClassVector:
    """Coordinates of x in Q_p^×/(Q_p^×)² over F₂.

    Odd p: (valuation, non-residue bit).  p = 2: (valuation, u ≡ 3 mod 4,
    u ≡ ±3 mod 8).
    """
    x = _integral(x)
    v = valuation(x, p)
    u = x // p**v
    if p == 2:
        return (v % 2, int(u % 4 == 3), int(u % 8 in (3, 5)))
    return (v % 2, int(legendre_symbol(u % p, p) == -1))


def _class_from_vector(vec: SquareClassVector, p: int) -> int:
    if p == 2:
        unit = {(0, 0): 1, (1, 0): -1, (0, 1): 5, (1, 1): -5}[(vec[1], vec[2])]
    else:
        unit = least_nonresidue(p) if vec[1] else 1
    return unit * p ** vec[0]


def f2_span(vectors: Sequence[SquareClassVector]) -> List[Tuple[int, ...]]:
    """Reduced row echelon basis of the F₂-span of ``vectors``."""
    rows: List[List[int]] = [list(v) for v in vectors if any(v)]
    basis: List[List[int]] = []
    pivots: List[int] = []
    for row in rows:
        row = row[:]
        for b, piv in zip(basis, pivots):
            if row[piv]:
                row = [x ^ y for x, y in zip(row, b)]
        if not any(row):
            continue
        piv = row.index(1)
        for b in basis:
            if b[piv]:
                b[:] = [x ^ y for x, y in zip(b, row)]
        basis.append(row)
        pivots.append(piv)
    order = sorted(range(len(basis)), key=lambda i: pivots[i])
    return [tuple(basis[i]) for i in order]


@dataclass(frozen=True)
class SpinorNormGroup:
    """Spinor norms of proper automorphisms of L ⊗ Z_p, as square classes."""

    prime: int
    generators: Tuple[SquareClassVector, ...]
    classes: FrozenSet[int]

    @property
    def rank(self) -> int:
        return len(self.generators)


def _reflection_norms_odd(splitting: JordanSplitting) -> List[int]:
    p = splitting.prime
    u = least_nonresidue(p)
    norms = []
    for c in splitting.constituents:
        if c.dim >= 2:
            norms.extend([p**c.scale, u * p**c.scale])
        else:
            norms.append((1 if c.unit_class == 1 else u) * p**c.scale)
    return norms


def reflects_at(form: QuadraticForm, w: Sequence[int], p: int) -> bool:
    """Whether the reflection in w maps L ⊗ Z_p to itself."""
    n = form.n
    aw = [sum(form.gram[r][c] * w[c] for c in range(n)) for r in range(n)]
    q = sum(x * y for x, y in zip(w, aw))
    if q == 0:
        return False
    low = min(valuation(x, p) for x in aw if x)
    return valuation(q, p) <= low + (1 if p == 2 else 0)


def _residue(x: Fraction, modulus: int) -> int:
    """x mod ``modulus`` for a 2-adic integer x (odd denominator)."""
    return x.numerator * pow(x.denominator, -1, modulus) % modulus


def _block_values(block: Tuple[Fraction, ...], scale: int, t: int, modulus: int) -> Set[Tuple[int, bool]]:
    """(Q contribution mod ``modulus``, reaches t) over block coordinates mod 8.

    A block of scale s ≤ t contributes through coordinates 2^(t-s)·z, and
    reaches t exactly when z is not divisible by 2.  Mod 2^(t+4) the
    contribution depends on z mod 8 only.
    """
    shift = 2 * t - scale if scale <= t else scale
    coeffs = [_residue(c / 2**scale, 16) for c in block]
    out = set()
    for z in product(range(8), repeat=1 if len(block) == 1 else 2):
        if len(block) == 1:
            q = coeffs[0] * z[0] ** 2
        else:
            a, b, d = coeffs
            q = a * z[0] ** 2 + 2 * b * z[0] * z[1] + d * z[1] ** 2
        reaches = scale <= t and any(x % 2 for x in z)
        out.add((q * 2**shift % modulus, reaches))
    return out


def _reflection_norms_two(form: QuadraticForm) -> List[int]:
    """One norm per square class of Q(w) over all w with s_w ∈ O(L ⊗ Z_2).

    With t the least valuation of B(w, L), the reflection in w is integral
    iff v(Q(w)) ≤ t + 1, and Q(w) mod 2^(t+4) fixes its square class.
    """
    blocks = _jordan_blocks(form, 2)
    scales = [_rational_valuation(b[0] if len(b) == 1 else b[1], 2) for b in blocks]
    seen: Dict[SquareClassVector, int] = {}
    for t in range(min(scales), max(scales) + 1):
        modulus = 2 ** (t + 4)
        sums: Set[Tuple[int, bool]] = {(0, False)}
        for block, scale in zip(blocks, scales):
            values = _block_values(block, scale, t, modulus)
            sums = {((x + y) % modulus, r or s) for x, r in sums for y, s in values}
        for value, reaches in sums:
            if not reaches or value % 2 ** (t + 2) == 0:
                continue
            seen.setdefault(square_class_vector(value, 2), value)
    return [seen[k] for k in sorted(seen)]


def local_spinor_norms(form: QuadraticForm, p: int) -> SpinorNormGroup:
    """θ(O⁺(L_p)), generated by products of pairs of reflection norms.

    At odd p the reflection norms come from the Jordan constituents; at
    p = 2 every integral reflection is accounted for through the 2-adic
    Jordan blocks.
    """
    if p == 2:
        norms = _reflection_norms_two(form)
    else:
        norms = _reflection_norms_odd(jordan_decomposition(form, p))
    vecs = [square_class_vector(q, p) for q in norms]
    if not vecs:
        vecs = [(0, 0, 0) if p == 2 else (0, 0)]
    pairs = [tuple(x ^ y for x, y in zip(vecs[0], v)) for v in vecs[1:]]
    gens = tuple(f2_span(pairs))
    width = 3 if p == 2 else 2
    classes = set()
    for bits in product((0, 1), repeat=len(gens)):
        v = [0] * width
        for b, g in zip(bits, gens):
            if b:
                v = [x ^ y for x, y in zip(v, g)]
        classes.add(_class_from_vector(tuple(v), p))
    return SpinorNormGroup(p, gens, frozenset(classes))


def improper_reflection_norm(form: QuadraticForm, primes: Sequence[int], bound_cap: int = 64) -> Optional[int]:
    """Norm Q(w) of a lattice vector whose reflection preserves L ⊗ Z_p for
    every p in ``primes``; ``None`` if no such short vector exists."""
    start = max(lll_reduce(form).form.diagonal())
    bound = start
    while bound <= start * bound_cap:
        for w, value in short_vectors(form, bound, dedup=True):
            if all(reflects_at(form, w, p) for p in primes):
                return value
        bound *= 2
    return None
