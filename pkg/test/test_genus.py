"""Tests for p-neighbors, genus enumeration, spinor genera, masses and the
reduced-form oracle."""

from fractions import Fraction

import pytest

from genuslab.arith_local import same_genus
from genuslab.errors import BadPrime, BudgetExhausted, OracleOutOfRange, Unsupported
from genuslab.genus import (
    BUDGET_EXHAUSTED,
    CLOSED,
    GenusEnumeration,
    Policy,
    completeness_check,
    genus_enumerate,
    genus_mass,
    isotropic_points,
    neighbor_primes,
    oracle_classes,
    p_neighbors,
    spin_genus_partition,
    spinor_genera,
)
from genuslab.qform_core import determinant, is_isometric, validate_form


def multi_class_ternary(diag):
    """First diag(1,1,k) whose genus holds at least two classes."""
    for k in range(2, 40):
        seed = diag(1, 1, k)
        mates = [c for c in oracle_classes(k) if same_genus(c, seed)]
        if len(mates) >= 2:
            return seed
    pytest.skip("no multi-class genus among diag(1,1,k), k < 40")


class TestNeighbors:
    """Test Kneser p-neighbor construction."""

    @pytest.mark.parametrize("p,count", [(3, 4), (5, 6), (7, 8)])
    def test_ternary_identity(self, I3, p, count):
        """Neighbors of I3 are all isometric to it."""
        neighbors = p_neighbors(I3, p)
        assert len(neighbors) == count
        assert all(is_isometric(I3, nb) is not None for nb in neighbors)

    @pytest.mark.parametrize("p,count", [(3, 0), (5, 2), (13, 2), (7, 0)])
    def test_binary_identity(self, I2, p, count):
        """Neighbor counts of I2 follow p mod 4."""
        assert len(p_neighbors(I2, p)) == count

    def test_isotropic_points_are_normalized(self, I3):
        """Isotropic points are normalized and in order."""
        points = list(isotropic_points(I3, 5))
        assert points == sorted(points, key=lambda x: [-x.index(1)] + list(x))
        for x in points:
            assert next(c for c in x if c) == 1
            assert I3.value(x) % 5 == 0

    @pytest.mark.parametrize("p", [2, 3])
    def test_bad_prime(self, diag, p):
        """Primes dividing 2·det are rejected."""
        with pytest.raises(BadPrime):
            p_neighbors(diag(1, 1, 3), p)

    def test_randomized_invariants(self, random_form, rng):
        """200 random neighbors keep determinant and genus."""
        checked = 0
        while checked < 200:
            form = random_form(3, spread=3)
            p = rng.choice([3, 5, 7, 11])
            if determinant(form) % p == 0:
                continue
            for nb in p_neighbors(form, p):
                assert determinant(nb) == determinant(form)
                assert same_genus(nb, form)
            checked += 1

    def test_neighbor_primes(self, diag):
        """Primes outside 2·det up to the budget and the cap."""
        policy = Policy(prime_budget=20, neighbor_cap=10)
        assert neighbor_primes(diag(1, 1, 3), policy) == [5, 7]
        assert neighbor_primes(diag(1, 1, 1, 1, 1), policy) == [3]
        assert neighbor_primes(diag(1, 1, 3), Policy(prime_budget=20, neighbor_cap=10, descending=True)) == [7, 5]

    def test_neighbor_primes_beyond_budget(self, diag):
        """The budget is extended until one prime is usable."""
        assert neighbor_primes(diag(1, 1, 15), Policy(prime_budget=5)) == [7]


class TestEnumeration:
    """Test breadth-first genus closure."""

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_identity_forms_have_one_class(self, diag, n):
        """Identity forms of rank 2 to 5 are alone in their genus."""
        enum = genus_enumerate(diag(*([1] * n)))
        assert len(enum.classes) == 1
        assert enum.complete_flag == CLOSED

    @pytest.mark.slow
    def test_six_dimensional_identity(self, diag):
        """I6 is alone in its genus."""
        assert len(genus_enumerate(diag(*([1] * 6))).classes) == 1

    def test_binary_genus_of_two_classes(self, diag):
        """diag(1,14) has the classes diag(1,14) and diag(2,7)."""
        enum = genus_enumerate(diag(1, 14))
        assert enum.closed
        assert sorted(c.gram for c in enum.classes) == [((1, 0), (0, 14)), ((2, 0), (0, 7))]
        assert enum.classes[enum.seed_index].gram == ((1, 0), (0, 14))

    def test_classes_are_distinct_and_in_genus(self, diag):
        """Classes are pairwise non-isometric genus mates."""
        enum = genus_enumerate(diag(1, 14))
        for i, first in enumerate(enum.classes):
            assert same_genus(first, enum.seed)
            for second in enum.classes[i + 1 :]:
                assert is_isometric(first, second) is None

    def test_edges_join_classes_of_the_genus(self, diag):
        """Edges join enumerated classes by primes that were used."""
        enum = genus_enumerate(diag(1, 14))
        assert enum.neighbor_edges
        for i, j, p in enum.neighbor_edges:
            assert i <= j
            assert p in enum.primes_used

    def test_budget_exhausted(self, diag):
        """Budget 1 stops early with one class."""
        enum = genus_enumerate(diag(1, 14), Policy(class_budget=1))
        assert enum.complete_flag == BUDGET_EXHAUSTED
        assert len(enum.classes) == 1
        assert same_genus(enum.classes[0], diag(1, 14))

    def test_single_class_budget_one_is_closed(self, I3):
        """Budget 1 is enough for a one-class genus."""
        assert genus_enumerate(I3, Policy(class_budget=1)).complete_flag == CLOSED

    def test_strict_raises_with_partial(self, diag):
        """Strict mode raises with the partial enumeration."""
        with pytest.raises(BudgetExhausted) as info:
            genus_enumerate(diag(1, 14), Policy(class_budget=1), strict=True)
        assert isinstance(info.value.partial, GenusEnumeration)
        assert len(info.value.partial.classes) == 1

    def test_prime_order_does_not_matter(self, diag):
        """Ascending and descending prime order give the same classes."""
        seed = diag(1, 14)
        up = genus_enumerate(seed, Policy(prime_budget=30))
        down = genus_enumerate(seed, Policy(prime_budget=30, descending=True))
        assert up.classes == down.classes
        assert up.aut_orders == down.aut_orders

    def test_equivalent_seeds_give_same_classes(self, diag, random_unimodular):
        """An equivalent seed gives the same classes."""
        seed = diag(1, 14)
        moved = seed.apply(random_unimodular(2))
        assert genus_enumerate(moved).classes == genus_enumerate(seed).classes

    def test_round_trip(self, diag):
        """An enumeration survives to_dict and from_dict."""
        enum = genus_enumerate(diag(1, 14))
        assert GenusEnumeration.from_dict(enum.to_dict()) == enum

    @pytest.mark.slow
    def test_parallel_workers_match(self, diag):
        """Two workers find the same classes."""
        seed = diag(1, 14)
        assert genus_enumerate(seed, Policy(workers=2)).classes == genus_enumerate(seed).classes


class TestMass:
    """Test exact masses."""

    def test_identity_masses(self, I2, I3):
        """I2 and I3 have masses 1/8 and 1/48."""
        assert genus_mass(genus_enumerate(I2)).total == Fraction(1, 8)
        assert genus_mass(genus_enumerate(I3)).total == Fraction(1, 48)

    def test_mass_lower_bound(self, diag):
        """Mass is Σ 1/|Aut| over the classes."""
        enum = genus_enumerate(diag(1, 14))
        mass = genus_mass(enum).total
        assert mass >= Fraction(len(enum.classes), max(enum.aut_orders))
        assert mass == sum(Fraction(1, a) for a in enum.aut_orders)

    def test_requires_closed(self, diag):
        """A truncated genus has no mass."""
        with pytest.raises(BudgetExhausted):
            genus_mass(genus_enumerate(diag(1, 14), Policy(class_budget=1)))

    @pytest.mark.parametrize("k", list(range(1, 17)))
    def test_per_spinor_sums_to_total(self, diag, k):
        """Spinor genus masses of diag(1,1,k) add up to the genus mass."""
        value = genus_mass(genus_enumerate(diag(1, 1, k)), "per_spinor")
        assert sum(value.per_spinor.values()) == value.total

    @pytest.mark.slow
    @pytest.mark.parametrize(
        "entries", [(1, 1, 32), (1, 1, 64), (1, 1, 144), (1, 3, 36), (1, 3, 108), (1, 3, 324), (1, 3, 972)]
    )
    def test_per_spinor_on_deep_two_adic_forms(self, diag, entries):
        """High powers of 2 and 3 in det still give exact spinor masses."""
        enum = genus_enumerate(diag(*entries))
        value = genus_mass(enum, "per_spinor")
        assert sum(value.per_spinor.values()) == value.total
        sizes = [len(v) for v in spinor_genera(spin_genus_partition(enum)).values()]
        assert sum(sizes) == len(enum.classes)

    def test_split_of_diag_1_7_49(self, diag):
        """Five classes split three and two with equal spinor masses."""
        enum = genus_enumerate(diag(1, 7, 49))
        assert len(enum.classes) == 5
        partition = spin_genus_partition(enum)
        groups = spinor_genera(partition)
        assert sorted(len(v) for v in groups.values()) == [2, 3]
        value = genus_mass(enum, "per_spinor", partition)
        assert list(value.per_spinor.values()) == [Fraction(3, 8), Fraction(3, 8)]
        assert value.total == Fraction(3, 4)

    @pytest.mark.slow
    def test_split_of_diag_1_7_343(self, diag):
        """Twenty classes split twelve and eight."""
        enum = genus_enumerate(diag(1, 7, 343), Policy(class_budget=100))
        assert enum.closed
        assert len(enum.classes) == 20
        groups = spinor_genera(spin_genus_partition(enum))
        assert sorted(len(v) for v in groups.values()) == [8, 12]


class TestSpinorGenera:
    """Test spinor genus partitions."""

    def test_identity_is_one_spinor_genus(self, I3):
        """I3 has trivial spinor data."""
        partition = spin_genus_partition(genus_enumerate(I3))
        assert partition.group_order == 1
        assert partition.labels == ((0, 0, 0),)
        assert partition.count == 1

    def test_single_binary_class(self, I2):
        """A one-class binary genus is one spinor genus."""
        partition = spin_genus_partition(genus_enumerate(I2))
        assert partition.count == 1

    def test_diag_1_1_16_has_two_spinor_genera(self, diag):
        """The two classes of diag(1,1,16) sit in different spinor genera."""
        enum = genus_enumerate(diag(1, 1, 16))
        assert len(enum.classes) == 2
        partition = spin_genus_partition(enum)
        assert partition.count == 2
        assert partition.group_order == 2
        other = validate_form([[2, 0, 1], [0, 2, 1], [1, 1, 5]])
        mate = next(i for i, c in enumerate(enum.classes) if is_isometric(c, other) is not None)
        assert mate != enum.seed_index
        assert partition.labels[mate] != partition.labels[enum.seed_index]

    def test_binary_with_several_classes_unsupported(self, diag):
        """Binary genera with several classes are unsupported."""
        with pytest.raises(Unsupported):
            spin_genus_partition(genus_enumerate(diag(1, 14)))

    def test_requires_closed(self, diag):
        """A truncated genus has no partition."""
        with pytest.raises(BudgetExhausted):
            spin_genus_partition(genus_enumerate(diag(1, 14), Policy(class_budget=1)))

    def test_partition_sizes(self, diag):
        """Spinor genera cover the genus and divide the group order."""
        for k in range(1, 17):
            enum = genus_enumerate(diag(1, 1, k))
            partition = spin_genus_partition(enum)
            groups = spinor_genera(partition)
            assert sum(len(v) for v in groups.values()) == len(enum.classes)
            assert partition.group_order % len(groups) == 0
            assert partition.labels[enum.seed_index] == (0,) * len(partition.labels[0])


class TestOracle:
    """Test the reduced ternary oracle and completeness check."""

    def test_unimodular_ternary(self, I3):
        """The only ternary class of det 1 is I3."""
        assert oracle_classes(1) == [I3]

    def test_oracle_classes_are_valid(self):
        """Oracle forms have the requested determinant."""
        for form in oracle_classes(12):
            assert determinant(form) == 12

    def test_out_of_range(self, I2, diag):
        """Determinants above the oracle range are refused."""
        with pytest.raises(OracleOutOfRange):
            oracle_classes(201)
        with pytest.raises(OracleOutOfRange):
            completeness_check(genus_enumerate(I2))

    @pytest.mark.parametrize("entries", [(1, 1, 1), (1, 1, 9)])
    def test_match(self, diag, entries):
        """Enumeration and oracle agree on small diagonal genera."""
        report = completeness_check(genus_enumerate(diag(*entries)))
        assert report.match
        assert not report.missing and not report.extra

    @pytest.mark.slow
    @pytest.mark.parametrize("k", list(range(2, 17)))
    def test_diagonal_family_matches_oracle(self, diag, k):
        """diag(1,1,k) for k = 2..16 matches the oracle."""
        assert completeness_check(genus_enumerate(diag(1, 1, k))).match

    @pytest.mark.slow
    def test_same_genus_is_an_equivalence_relation(self):
        """On every oracle class set with det <= 50 same_genus partitions the classes."""
        for det in range(1, 51):
            forms = oracle_classes(det)
            related = [[same_genus(f, g) for g in forms] for f in forms]
            for i in range(len(forms)):
                assert related[i][i]
                for j in range(len(forms)):
                    assert related[i][j] == related[j][i]
                    if related[i][j]:
                        assert related[i] == related[j], (det, i, j)

    @pytest.mark.slow
    def test_truncated_enumeration_reports_missing(self, diag):
        """A budget-1 enumeration misses oracle classes."""
        seed = multi_class_ternary(diag)
        report = completeness_check(genus_enumerate(seed, Policy(class_budget=1)))
        assert not report.match
        assert report.missing
        assert report.enumerated_count == 1
