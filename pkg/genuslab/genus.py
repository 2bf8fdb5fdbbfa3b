"""Genus and spinor-genus enumeration by Kneser p-neighbors.

Classes are discovered breadth-first from the seed, deduplicated through an
invariant-keyed registry plus exact isometry tests, stored in canonical
form, and sorted canonically once the closure finishes.
"""

from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from itertools import product
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from sympy import factorint, nextprime

from genuslab.arith_local import (
    f2_span,
    improper_reflection_norm,
    local_spinor_norms,
    same_genus,
    square_class_vector,
    squarefree_kernel,
)
from genuslab.errors import (
    BadPrime,
    BudgetExhausted,
    GenuslabError,
    InconsistentSpinorData,
    OracleOutOfRange,
    Unsupported,
)
from genuslab.formio import parse_form
from genuslab.intlinalg import column_echelon
from genuslab.qform_core import (
    Gram,
    QuadraticForm,
    automorphism_order,
    canonical_form,
    canonical_key,
    determinant,
    is_isometric,
    lll_reduce,
    theta_prefix,
    validate_form,
)

logger = logging.getLogger(__name__)

CLOSED = "closed"
BUDGET_EXHAUSTED = "budget_exhausted"
ORACLE_MAX_DET = 200


@dataclass(frozen=True)
class Policy:
    prime_budget: int = 50
    class_budget: int = 500
    neighbor_cap: int = 400
    workers: int = 1
    descending: bool = False

    def to_dict(self) -> dict:
        # worker count never changes results, so it stays out of cache keys
        out = asdict(self)
        del out["workers"]
        return out


def isotropic_points(form: QuadraticForm, p: int) -> Iterator[Tuple[int, ...]]:
    """Projective isotropic points mod p, first nonzero coordinate 1, in
    lexicographic order."""
    n = form.n
    for lead in range(n - 1, -1, -1):
        for tail in product(range(p), repeat=n - lead - 1):
            x = (0,) * lead + (1,) + tail
            if form.value(x) % p == 0:
                yield x


def _lift(form: QuadraticForm, x: Sequence[int], p: int) -> List[int]:
    """Adjust x by p·c·e_i so that Q(x) ≡ 0 mod p²."""
    n = form.n
    ax = [sum(form.gram[r][c] * x[c] for c in range(n)) for r in range(n)]
    i = next(r for r in range(n) if ax[r] % p)
    c = (-(form.value(x) // p) * pow(2 * ax[i], -1, p)) % p
    lifted = list(x)
    lifted[i] += p * c
    return lifted


def _neighbor_gram(form: QuadraticForm, x: Sequence[int], p: int) -> Gram:
    n = form.n
    x = _lift(form, x, p)
    w = [sum(form.gram[r][c] * x[c] for c in range(n)) % p for r in range(n)]
    i = next(r for r in range(n) if w[r])
    w_inv = pow(w[i], -1, p)
    gens: List[List[int]] = []
    for j in range(n):
        if j == i:
            continue
        g = [0] * n
        g[j] = p
        g[i] = -p * (w[j] * w_inv % p)
        gens.append(g)
    g = [0] * n
    g[i] = p * p
    gens.append(g)
    gens.append(list(x))
    # columns of the n × (n+1) generator matrix span p·L'
    matrix = [[gen[r] for gen in gens] for r in range(n)]
    echelon, _ = column_echelon(matrix)
    cols = [[int(echelon[r, c]) for r in range(n)] for c in range(n)]
    gram = []
    for u in cols:
        row = []
        for v in cols:
            value = form.inner(u, v)
            if value % (p * p):
                raise AssertionError("neighbor Gram is not integral")
            row.append(value // (p * p))
        gram.append(tuple(row))
    return tuple(gram)


def p_neighbors(form: QuadraticForm, p: int) -> List[QuadraticForm]:
    """One LLL-reduced neighbor per projective isotropic point of Q mod p."""
    det = determinant(form)
    if p == 2 or det % p == 0:
        raise BadPrime(f"p={p} is 2 or divides det={det}")
    out = []
    for x in isotropic_points(form, p):
        neighbor = QuadraticForm(_neighbor_gram(form, x, p), det)
        out.append(lll_reduce(neighbor).form)
    return out


def neighbor_primes(form: QuadraticForm, policy: Policy) -> List[int]:
    """Odd primes p ≤ P_max, p ∤ det, with at most ~neighbor_cap isotropic points.

    The smallest such prime is always included.
    """
    det = determinant(form)
    primes: List[int] = []
    p = 3
    while p <= policy.prime_budget:
        if det % p and (not primes or p ** (form.n - 2) <= policy.neighbor_cap):
            primes.append(p)
        p = nextprime(p)
    if not primes:
        p = nextprime(policy.prime_budget)
        while det % p == 0:
            p = nextprime(p)
        primes.append(int(p))
    primes = [int(q) for q in primes]
    return sorted(primes, reverse=policy.descending)


def _expand(gram: Gram, det: int, primes: Sequence[int]) -> List[Tuple[int, Gram]]:
    form = QuadraticForm(gram, det)
    return [(p, nb.gram) for p in primes for nb in p_neighbors(form, p)]


@dataclass
class GenusEnumeration:
    seed: QuadraticForm
    classes: List[QuadraticForm]
    aut_orders: List[int]
    neighbor_edges: List[Tuple[int, int, int]]
    primes_used: List[int]
    complete_flag: str
    seed_index: int = 0
    policy: Policy = field(default_factory=Policy)

    @property
    def closed(self) -> bool:
        return self.complete_flag == CLOSED

    def to_dict(self) -> dict:
        return {
            "seed": self.seed.to_text(),
            "classes": [c.to_text() for c in self.classes],
            "aut_orders": list(self.aut_orders),
            "neighbor_edges": [list(e) for e in self.neighbor_edges],
            "primes_used": list(self.primes_used),
            "complete_flag": self.complete_flag,
            "seed_index": self.seed_index,
            "policy": asdict(self.policy),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GenusEnumeration":
        return cls(
            seed=parse_form(data["seed"]),
            classes=[parse_form(t) for t in data["classes"]],
            aut_orders=[int(a) for a in data["aut_orders"]],
            neighbor_edges=[(int(i), int(j), int(p)) for i, j, p in data["neighbor_edges"]],
            primes_used=[int(p) for p in data["primes_used"]],
            complete_flag=data["complete_flag"],
            seed_index=int(data["seed_index"]),
            policy=Policy(**data["policy"]),
        )


def _iroot(x: int, k: int) -> int:
    r = int(round(x ** (1.0 / k)))
    while r**k > x:
        r -= 1
    while (r + 1) ** k <= x:
        r += 1
    return r


class _Registry:
    """Insert-if-absent store of classes keyed by theta prefixes."""

    def __init__(self, det: int, n: int) -> None:
        self.det = det
        self.length = _iroot(det, n) + 2
        self.classes: List[QuadraticForm] = []
        self.aut_orders: List[int] = []
        self.by_key: Dict[Tuple[int, ...], List[int]] = {}
        self.memo: Dict[Gram, int] = {}

    def locate(self, form: QuadraticForm) -> Tuple[Optional[int], Tuple[int, ...]]:
        hit = self.memo.get(form.gram)
        if hit is not None:
            return hit, ()
        key = theta_prefix(form, self.length)
        for idx in self.by_key.get(key, ()):
            if is_isometric(self.classes[idx], form) is not None:
                self.memo[form.gram] = idx
                return idx, key
        return None, key

    def insert(self, form: QuadraticForm, key: Tuple[int, ...]) -> int:
        canonical = canonical_form(form).canonical
        idx = len(self.classes)
        self.classes.append(canonical)
        self.aut_orders.append(automorphism_order(canonical))
        self.by_key.setdefault(key, []).append(idx)
        self.memo[form.gram] = idx
        self.memo[canonical.gram] = idx
        return idx


def genus_enumerate(form: QuadraticForm, policy: Optional[Policy] = None, strict: bool = False) -> GenusEnumeration:
    """Breadth-first p-neighbor closure of the genus of ``form``.

    The class budget caps the number of stored classes; reaching it with
    undiscovered neighbors left flags the result ``budget_exhausted`` (or
    raises :class:`BudgetExhausted` when ``strict``).
    """
    policy = policy or Policy()
    det = determinant(form)
    primes = neighbor_primes(form, policy)
    registry = _Registry(det, form.n)
    seed_reduced = lll_reduce(form).form
    _, key = registry.locate(seed_reduced)
    registry.insert(seed_reduced, key)
    edges = set()
    frontier = [0]
    exhausted = False
    executor = ProcessPoolExecutor(policy.workers) if policy.workers > 1 else None
    try:
        while frontier and not exhausted:
            grams = [registry.classes[i].gram for i in frontier]
            if executor is not None:
                results = list(executor.map(_expand, grams, [det] * len(grams), [primes] * len(grams)))
            else:
                results = [_expand(g, det, primes) for g in grams]
            nxt = []
            for idx, found in zip(frontier, results):
                for p, gram in found:
                    neighbor = QuadraticForm(gram, det)
                    j, key = registry.locate(neighbor)
                    if j is None:
                        if len(registry.classes) >= policy.class_budget:
                            exhausted = True
                            break
                        j = registry.insert(neighbor, key)
                        nxt.append(j)
                    edges.add((min(idx, j), max(idx, j), p))
                if exhausted:
                    break
            logger.debug("frontier of %d expanded, %d new classes", len(frontier), len(nxt))
            frontier = nxt
    finally:
        if executor is not None:
            executor.shutdown()

    order = sorted(range(len(registry.classes)), key=lambda i: canonical_key(registry.classes[i].gram))
    position = {old: new for new, old in enumerate(order)}
    result = GenusEnumeration(
        seed=form,
        classes=[registry.classes[i] for i in order],
        aut_orders=[registry.aut_orders[i] for i in order],
        neighbor_edges=sorted(
            {(min(position[i], position[j]), max(position[i], position[j]), p) for i, j, p in edges}
        ),
        primes_used=primes,
        complete_flag=BUDGET_EXHAUSTED if exhausted else CLOSED,
        seed_index=position[0],
        policy=policy,
    )
    logger.info(
        "genus of det %d: %d classes, primes %s, %s", det, len(result.classes), primes, result.complete_flag
    )
    if exhausted and strict:
        raise BudgetExhausted(f"class budget {policy.class_budget} reached", result)
    return result


@dataclass(frozen=True)
class SpinorPartition:
    """Per-class labels in the spinor class group, an F₂-vector space.

    Labels are reduced coordinates over ⊕_{p | 2·det} Q_p^×/(Q_p^×)².
    """

    labels: Tuple[Tuple[int, ...], ...]
    group_order: int
    primes: Tuple[int, ...] = ()

    @property
    def count(self) -> int:
        return len(set(self.labels))


def _require_closed(enum: GenusEnumeration) -> None:
    if not enum.closed:
        raise BudgetExhausted("operation needs a closed genus enumeration", enum)


def _reduce(vec: Sequence[int], basis: Sequence[Tuple[int, ...]]) -> Tuple[int, ...]:
    out = list(vec)
    for row in basis:
        piv = row.index(1)
        if out[piv]:
            out = [x ^ y for x, y in zip(out, row)]
    return tuple(out)


def spin_genus_partition(enum: GenusEnumeration) -> SpinorPartition:
    _require_closed(enum)
    seed = enum.seed
    h = len(enum.classes)
    if seed.n == 2:
        if h == 1:
            return SpinorPartition(((),), 1)
        raise Unsupported("spinor genera of binary genera with several classes are not implemented")

    det = determinant(seed)
    primes = tuple(sorted(int(p) for p in factorint(2 * det)))

    def vec(x: int) -> Tuple[int, ...]:
        return tuple(bit for p in primes for bit in square_class_vector(x, p))

    offsets = {}
    width = 0
    for p in primes:
        offsets[p] = width
        width += 3 if p == 2 else 2

    relations: List[Tuple[int, ...]] = []
    for p in primes:
        group = local_spinor_norms(seed, p)
        for g in group.generators:
            v = [0] * width
            v[offsets[p] : offsets[p] + len(g)] = g
            relations.append(tuple(v))
    relations.extend(vec(p) for p in primes)
    m = improper_reflection_norm(seed, primes)
    if m is None:
        raise Unsupported("no short lattice vector reflects at every prime dividing 2·det")
    for p in primes:
        while m % p == 0:
            m //= p
    relations.append(vec(squarefree_kernel(m)))
    basis = f2_span(relations)
    logger.debug("spinor relations rank %d of %d", len(basis), width)

    adjacency: Dict[int, List[Tuple[int, int]]] = {i: [] for i in range(h)}
    for i, j, p in enum.neighbor_edges:
        adjacency[i].append((j, p))
        if i != j:
            adjacency[j].append((i, p))
    labels: Dict[int, Tuple[int, ...]] = {enum.seed_index: (0,) * width}
    queue = deque([enum.seed_index])
    while queue:
        i = queue.popleft()
        for j, p in adjacency[i]:
            expected = _reduce([x ^ y for x, y in zip(labels[i], vec(p))], basis)
            if j not in labels:
                labels[j] = expected
                queue.append(j)
            elif labels[j] != expected:
                raise InconsistentSpinorData(f"edge ({i}, {j}) at p={p} disagrees with propagated labels")
    if len(labels) != h:
        raise InconsistentSpinorData("neighbor graph does not connect every class")
    return SpinorPartition(tuple(labels[i] for i in range(h)), 2 ** (width - len(basis)), primes)


def spinor_genera(partition: SpinorPartition) -> Dict[Tuple[int, ...], List[int]]:
    """Class indices grouped by spinor label, labels in sorted order."""
    groups: Dict[Tuple[int, ...], List[int]] = {}
    for idx, label in enumerate(partition.labels):
        groups.setdefault(label, []).append(idx)
    return dict(sorted(groups.items()))


@dataclass(frozen=True)
class MassValue:
    total: Fraction
    per_spinor: Optional[Dict[Tuple[int, ...], Fraction]] = None


def genus_mass(
    enum: GenusEnumeration, weighting: str = "full", partition: Optional[SpinorPartition] = None
) -> MassValue:
    """Σ 1/|Aut| over the genus, or per spinor genus."""
    _require_closed(enum)
    total = sum((Fraction(1, a) for a in enum.aut_orders), Fraction(0))
    if weighting == "full":
        return MassValue(total)
    if weighting != "per_spinor":
        raise ValueError(f"unknown weighting {weighting!r}")
    partition = partition or spin_genus_partition(enum)
    per = {
        label: sum((Fraction(1, enum.aut_orders[i]) for i in idx), Fraction(0))
        for label, idx in spinor_genera(partition).items()
    }
    return MassValue(total, per)


def oracle_classes(det: int) -> List[QuadraticForm]:
    """Canonical forms of every class of positive ternary forms of ``det``.

    Enumerates Minkowski-reduced Gram matrices [[a, f, e], [f, b, d],
    [e, d, c]] with a ≤ b ≤ c, 2|f|, 2|e| ≤ a, 2|d| ≤ b and abc ≤ 2·det.
    """
    if det < 1 or det > ORACLE_MAX_DET:
        raise OracleOutOfRange(f"oracle covers ternary det in [1, {ORACLE_MAX_DET}], got {det}")
    found: Dict[Gram, QuadraticForm] = {}
    a = 1
    while a**3 <= 2 * det:
        b = a
        while a * b * b <= 2 * det:
            for f in range(-(a // 2), a // 2 + 1):
                if a * b - f * f <= 0:
                    continue
                for e in range(-(a // 2), a // 2 + 1):
                    for d in range(-(b // 2), b // 2 + 1):
                        num = det + a * d * d - 2 * d * e * f + b * e * e
                        c, rem = divmod(num, a * b - f * f)
                        if rem or c < b or a * b * c > 2 * det:
                            continue
                        gram = [[a, f, e], [f, b, d], [e, d, c]]
                        try:
                            form = validate_form(gram)
                        except GenuslabError:
                            continue
                        canonical = canonical_form(form).canonical
                        found.setdefault(canonical.gram, canonical)
            b += 1
        a += 1
    return [found[g] for g in sorted(found, key=canonical_key)]


@dataclass(frozen=True)
class CompletenessReport:
    match: bool
    oracle_count: int
    enumerated_count: int
    missing: Tuple[Gram, ...]
    extra: Tuple[Gram, ...]


def completeness_check(enum: GenusEnumeration) -> CompletenessReport:
    seed = enum.seed
    if seed.n != 3:
        raise OracleOutOfRange(f"oracle covers ternary forms only, got n={seed.n}")
    oracle = [c for c in oracle_classes(determinant(seed)) if same_genus(c, seed)]
    oracle_set = {c.gram for c in oracle}
    enumerated = {c.gram for c in enum.classes}
    missing = tuple(sorted(oracle_set - enumerated, key=canonical_key))
    extra = tuple(sorted(enumerated - oracle_set, key=canonical_key))
    return CompletenessReport(not missing and not extra, len(oracle_set), len(enumerated), missing, extra)
