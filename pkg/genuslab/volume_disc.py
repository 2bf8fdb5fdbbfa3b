"""Discriminant of the homogeneous set attached to a form.

The Lie algebra so(Q) = {X : XᵀA + AX = 0} is solved over Z, its basis is
saturated, and the primitive multivector of that basis is measured.  At the
real place the multivector is measured in a frame where Q is the sum of
squares, which turns the squared norm into the Gram determinant of the
positive form -tr(XY) on the saturated basis.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from genuslab.errors import DegenerateBasis
from genuslab.intlinalg import elementary_divisors, kernel_basis
from genuslab.qform_core import Gram, QuadraticForm, int_det

logger = logging.getLogger(__name__)

PLUECKER_MAX_DIM = 4
OMITTED_FACTOR_NOTE = (
    "global factors D(H) and E(H) omitted; disc is the norm of the primitive "
    "integral multivector of so(Q) only"
)

Pluecker = Dict[Tuple[int, ...], int]


@dataclass(frozen=True)
class LieBasis:
    """Saturated Z-basis of so(Q).

    ``elementary_divisors`` are the invariant factors of the r × n²
    coordinate matrix (all 1 for a saturated basis).
    """

    n: int
    basis: Tuple[Gram, ...]
    elementary_divisors: Tuple[int, ...]
    gram: Gram

    @property
    def r(self) -> int:
        return len(self.basis)

    def coordinates(self) -> List[Tuple[int, ...]]:
        return [tuple(x for row in m for x in row) for m in self.basis]

    @cached_property
    def adjugate_index(self) -> int:
        """Index of the sublattice spanned by adj(A)·(E_ij − E_ji)."""
        n = self.n
        a = np.array(self.gram, dtype=object)
        adj = np.array(
            [[(-1) ** (i + j) * int_det(np.delete(np.delete(a, j, 0), i, 1).tolist()) for j in range(n)] for i in range(n)],
            dtype=object,
        )
        naive = []
        for i, j in combinations(range(n), 2):
            y = np.zeros((n, n), dtype=object)
            y[i, j], y[j, i] = 1, -1
            naive.append(tuple((adj @ y).flatten().tolist()))
        return math.isqrt(_euclid_gram_det(naive) // _euclid_gram_det(self.coordinates()))


def _constraints(gram: Gram) -> List[List[int]]:
    n = len(gram)
    rows = []
    for a in range(n):
        for b in range(a, n):
            row = [0] * (n * n)
            for k in range(n):
                row[k * n + a] += gram[k][b]
                row[k * n + b] += gram[a][k]
            rows.append(row)
    return rows


def _euclid_gram_det(coords: Sequence[Sequence[int]]) -> int:
    m = np.array(coords, dtype=object)
    return int_det((m @ m.T).tolist())


def so_lie_basis(form: QuadraticForm) -> LieBasis:
    n = form.n
    kernel = kernel_basis(_constraints(form.gram))
    r = n * (n - 1) // 2
    if len(kernel) != r:
        raise DegenerateBasis(f"so(Q) solved to dimension {len(kernel)}, expected {r}")
    basis = tuple(tuple(tuple(v[i * n + j] for j in range(n)) for i in range(n)) for v in kernel)
    divisors = elementary_divisors(kernel)
    if any(d != 1 for d in divisors):
        raise DegenerateBasis(f"kernel basis is not saturated: {divisors}")

    return LieBasis(n, basis, divisors, form.gram)


def pluecker_primitive(lie: LieBasis) -> Pluecker:
    """Nonzero r×r minors of the coordinate matrix, divided by their gcd and
    signed so the first nonzero coordinate is positive."""
    coords = np.array(lie.coordinates(), dtype=object)
    support = [c for c in range(coords.shape[1]) if any(coords[:, c])]
    minors: Pluecker = {}
    for cols in combinations(support, lie.r):
        d = int_det(coords[:, list(cols)].tolist())
        if d:
            minors[cols] = d
    g = math.gcd(*minors.values()) if minors else 0
    if g == 0:
        raise DegenerateBasis("all maximal minors vanish")
    first = minors[min(minors)]
    sign = 1 if first > 0 else -1
    return {k: sign * v // g for k, v in sorted(minors.items())}


def trace_gram(lie: LieBasis) -> List[List[int]]:
    """Gram matrix of the positive form (X, Y) ↦ -tr(XY) on the basis."""
    mats = [np.array(m, dtype=object) for m in lie.basis]
    return [[-int(np.trace(x @ y)) for y in mats] for x in mats]


@dataclass(frozen=True)
class DiscReport:
    n: int
    norm_sq: int
    disc: float
    plain_norm_sq: int
    pluecker: Optional[Pluecker]
    omitted_factor_note: str = OMITTED_FACTOR_NOTE

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "norm_sq": str(self.norm_sq),
            "disc": self.disc,
            "plain_norm_sq": str(self.plain_norm_sq),
            "omitted_factor_note": self.omitted_factor_note,
        }
        if self.pluecker is not None:
            out["pluecker"] = [[list(k), v] for k, v in self.pluecker.items()]
        return out


def disc_homogeneous(form: QuadraticForm, with_pluecker: bool = True) -> DiscReport:
    """Discriminant report; the sparse Plücker vector is attached for n <= 4."""
    lie = so_lie_basis(form)
    norm_sq = int_det(trace_gram(lie))
    pluecker = None
    if with_pluecker and form.n <= PLUECKER_MAX_DIM:
        pluecker = pluecker_primitive(lie)
    plain = _euclid_gram_det(lie.coordinates())
    logger.debug("disc norm_sq=%d plain=%d for n=%d", norm_sq, plain, form.n)
    return DiscReport(form.n, norm_sq, math.sqrt(norm_sq), plain, pluecker)


def killing_unit_check(form: QuadraticForm, p: int) -> bool:
    """Whether the trace form on the saturated basis is nondegenerate mod p.

    The Killing form restricted from sl_n is 2n·tr(XY); its constant factor
    is divided out, so this tests p ∤ det(-tr(XᵢXⱼ)).
    """
    return int_det(trace_gram(so_lie_basis(form))) % p != 0
