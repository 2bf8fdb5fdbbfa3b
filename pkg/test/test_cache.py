"""Tests for the content-addressed artifact cache."""

import json

import pytest

from genuslab.cache import FORMAT_VERSION, LOCK_NAME, ArtifactCache, cache_key, cached_enumeration, digest
from genuslab.errors import CacheBusy
from genuslab.genus import GenusEnumeration, Policy, genus_enumerate
from genuslab.qform_core import validate_form


class TestCacheKeys:
    """Test digests of canonical seeds."""

    def test_equivalent_forms_share_digest(self, I2):
        """Z-equivalent seeds hash to the same digest."""
        other = validate_form([[1, 1], [1, 2]])
        params = Policy().to_dict()
        assert digest(cache_key("genus", I2, params)) == digest(cache_key("genus", other, params))

    def test_policy_changes_digest(self, I2):
        """Different budgets give different digests."""
        first = digest(cache_key("genus", I2, Policy().to_dict()))
        second = digest(cache_key("genus", I2, Policy(class_budget=3).to_dict()))
        assert first != second

    def test_kind_changes_digest(self, I2):
        """The artifact kind is part of the digest."""
        assert digest(cache_key("genus", I2, {})) != digest(cache_key("equid", I2, {}))


class TestArtifactCache:
    """Test storing, loading, locking and garbage collection."""

    def test_fetch_computes_once(self, cache_dir, I3, mocker):
        """A second fetch reads the artifact back."""
        compute = mocker.Mock(return_value={"value": 1})
        key = cache_key("genus", I3, {})
        with ArtifactCache(cache_dir) as cache:
            assert cache.fetch(key, compute) == {"value": 1}
            assert cache.fetch(key, compute) == {"value": 1}
            assert (cache.hits, cache.misses) == (1, 1)
        compute.assert_called_once()

    def test_record_layout(self, cache_dir, I3):
        """Stored records carry version, kind and the artifact under the digest name."""
        key = cache_key("genus", I3, {"a": 1})
        with ArtifactCache(cache_dir) as cache:
            path = cache.store(key, [1, 2])
        record = json.loads(path.read_text())
        assert record["format_version"] == FORMAT_VERSION
        assert record["kind"] == "genus"
        assert record["artifact"] == [1, 2]
        assert path.name == f"{digest(key)}.json"

    def test_version_mismatch_forces_recompute(self, cache_dir, I3):
        """A newer format version is treated as a miss."""
        key = cache_key("genus", I3, {})
        with ArtifactCache(cache_dir) as cache:
            path = cache.store(key, "old")
            record = json.loads(path.read_text())
            record["format_version"] = FORMAT_VERSION + 1
            path.write_text(json.dumps(record))
            assert cache.load(key) is None

    def test_enumeration_round_trip(self, cache_dir, random_form):
        """Enumerations read back from the cache equal fresh ones."""
        with ArtifactCache(cache_dir) as cache:
            for _ in range(5):
                form = random_form(3)
                policy = Policy(class_budget=20)
                key = cache_key("genus", form, policy.to_dict())
                cache.fetch(key, lambda: genus_enumerate(form, policy).to_dict())
                cached = GenusEnumeration.from_dict(cache.load(key))
                fresh = genus_enumerate(form, policy)
                assert cached.classes == fresh.classes
                assert cached.aut_orders == fresh.aut_orders
                assert cached.neighbor_edges == fresh.neighbor_edges
                assert cached.complete_flag == fresh.complete_flag

    def test_equivalent_seed_keeps_its_own_seed(self, cache_dir, diag, random_unimodular):
        """A hit stored for another basis and worker count reports the caller's."""
        seed = diag(1, 14)
        moved = seed.apply(random_unimodular(2))
        with ArtifactCache(cache_dir) as cache:
            first = cached_enumeration(cache, seed, Policy(workers=1))
            second = cached_enumeration(cache, moved, Policy(workers=3))
            assert (cache.hits, cache.misses) == (1, 1)
        assert first.seed == seed
        assert second.seed == moved
        assert second.policy.workers == 3
        assert second.classes == first.classes
        assert second.seed_index == first.seed_index

    def test_lock_is_exclusive(self, cache_dir):
        """A second holder of the lock fails with CacheBusy."""
        with ArtifactCache(cache_dir):
            assert (cache_dir / LOCK_NAME).exists()
            with pytest.raises(CacheBusy):
                with ArtifactCache(cache_dir):
                    pass
        with ArtifactCache(cache_dir):
            pass

    def test_gc(self, cache_dir, I3):
        """Garbage collection drops broken and stale records only."""
        with ArtifactCache(cache_dir) as cache:
            good = cache.store(cache_key("genus", I3, {}), 1)
            (cache_dir / "broken.json").write_text("{not json")
            (cache_dir / "stale.json").write_text(json.dumps({"format_version": 0}))
            assert cache.gc() == 2
            assert cache.gc() == 0
        assert good.exists()
        assert not (cache_dir / "broken.json").exists()
