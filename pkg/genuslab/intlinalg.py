"""Integer matrix reductions on numpy object arrays.

Column operations are 2×2 unimodular blocks built from the extended
Euclidean algorithm, so every transform stays exact and invertible over Z.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np
from sympy.polys.domains import ZZ
from sympy.polys.matrices import DomainMatrix
from sympy.polys.matrices.normalforms import invariant_factors


def exgcd_block(a: int, b: int) -> np.ndarray:
    """A determinant-1 matrix N with [a, b] @ N = [g, 0], g = gcd(a, b) ≥ 0."""
    x0, y0, x1, y1 = 1, 0, 0, 1
    r0, r1 = a, b
    while r1:
        q = r0 // r1
        r0, r1 = r1, r0 - q * r1
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    # a*x0 + b*y0 = r0 and a*x1 + b*y1 = 0
    if r0 < 0:
        r0, x0, y0 = -r0, -x0, -y0
    block = np.array([[x0, x1], [y0, y1]], dtype=object)
    if x0 * y1 - x1 * y0 == -1:
        block[:, 1] = -block[:, 1]
    return block


def column_echelon(matrix: Sequence[Sequence[int]]) -> Tuple[np.ndarray, np.ndarray]:
    """Return (E, V) with E = matrix @ V, V unimodular and E in column
    echelon form: nonzero columns first, each with a lower pivot row than
    the one before."""
    e = np.array(matrix, dtype=object)
    rows, cols = e.shape
    v = np.eye(cols, dtype=object)
    c = 0
    for r in range(rows):
        if c == cols:
            break
        for j in range(c + 1, cols):
            if e[r, j] == 0:
                continue
            block = exgcd_block(e[r, c], e[r, j])
            e[:, [c, j]] = e[:, [c, j]] @ block
            v[:, [c, j]] = v[:, [c, j]] @ block
        if e[r, c] != 0:
            c += 1
    return e, v


def kernel_basis(matrix: Sequence[Sequence[int]]) -> List[Tuple[int, ...]]:
    """A basis of {x ∈ Zᵐ : matrix @ x = 0}.

    The vectors are columns of a unimodular matrix, so their span is
    saturated in Zᵐ.
    """
    e, v = column_echelon(matrix)
    cols = e.shape[1]
    zero = [j for j in range(cols) if not any(e[:, j])]
    return [tuple(int(x) for x in v[:, j]) for j in zero]


def elementary_divisors(rows: Sequence[Sequence[int]]) -> Tuple[int, ...]:
    """Invariant factors of an integer matrix (Smith normal form diagonal)."""
    m, n = len(rows), len(rows[0])
    dm = DomainMatrix([[ZZ(int(x)) for x in row] for row in rows], (m, n), ZZ)
    return tuple(int(d) for d in invariant_factors(dm))
