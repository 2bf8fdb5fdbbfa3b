"""End-to-end tests of the genuslab command."""

import json

import pytest

from genuslab.cache import ArtifactCache

pytestmark = pytest.mark.integration

I3_TEXT = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
TWO_CLASS_BINARY = [[1, 0], [0, 14]]


class TestGenusCommands:
    """Test genus, spin-genus and mass."""

    def test_unimodular_ternary(self, run_genuslab, write_form):
        """I3 has one class of mass 1/48."""
        result = run_genuslab("genus", write_form("i3.txt", I3_TEXT))
        assert result.returncode == 0, result.stderr
        assert result.stdout.strip() == "classes=1 mass=1/48 closed"

    def test_two_class_binary(self, run_genuslab, write_form):
        """diag(1,14) has a closed genus of two classes."""
        result = run_genuslab("genus", write_form("b.txt", TWO_CLASS_BINARY))
        assert result.returncode == 0, result.stderr
        assert result.stdout.startswith("classes=2 ")
        assert result.stdout.strip().endswith("closed")

    def test_budget_exhausted(self, run_genuslab, write_form):
        """Budget 1 reports the flag, or exits 4 with --strict."""
        path = write_form("b.txt", TWO_CLASS_BINARY)
        result = run_genuslab("genus", path, "--class-budget", "1")
        assert result.returncode == 0, result.stderr
        assert result.stdout.strip() == "classes=1 mass=- budget_exhausted"

        strict = run_genuslab("genus", path, "--class-budget", "1", "--strict")
        assert strict.returncode == 4
        assert strict.stderr.startswith("error:")

    def test_json_artifact(self, run_genuslab, write_form, temp_workspace):
        """--json writes the enumeration artifact."""
        result = run_genuslab("genus", write_form("i3.txt", I3_TEXT), "--json", "out.json")
        assert result.returncode == 0, result.stderr
        data = json.loads((temp_workspace / "out.json").read_text())
        assert data["complete_flag"] == "closed"
        assert len(data["classes"]) == 1

    def test_spin_genus(self, run_genuslab, write_form):
        """I3 is one spinor genus of one class."""
        result = run_genuslab("spin-genus", write_form("i3.txt", I3_TEXT))
        assert result.returncode == 0, result.stderr
        lines = result.stdout.splitlines()
        assert lines[0] == "classes=1 spinor_genera=1 group_order=1"
        assert lines[1] == "spinor 000 size=1 classes=0"

    def test_spin_genus_unsupported(self, run_genuslab, write_form):
        """A binary genus with several classes exits 3."""
        result = run_genuslab("spin-genus", write_form("b.txt", TWO_CLASS_BINARY))
        assert result.returncode == 3

    def test_mass_per_spinor(self, run_genuslab, write_form):
        """Spinor masses of I3 add up to the total."""
        result = run_genuslab("mass", write_form("i3.txt", I3_TEXT), "--per-spinor")
        assert result.returncode == 0, result.stderr
        assert result.stdout.splitlines() == ["mass=1/48", "spinor 000 mass=1/48", "sum=1/48 matches"]

    def test_second_run_hits_cache(self, run_genuslab, write_form):
        """The second run is served from the cache."""
        path = write_form("i3.txt", I3_TEXT)
        run_genuslab("genus", path)
        result = run_genuslab("genus", path, "-v")
        assert result.returncode == 0
        assert "cache hit" in result.stderr


class TestInputErrors:
    """Test exit codes for bad input."""

    @pytest.mark.parametrize(
        "content",
        ["2\n1 0\n", "2\n1 x\n0 1\n", "2\n1 1\n0 1\n", "2\n1 0\n0 -1\n", "[[1, 0], [0, 1.5]]\n"],
    )
    def test_malformed_forms(self, run_genuslab, temp_workspace, content):
        """Unparseable or invalid forms exit 2."""
        path = temp_workspace / "bad.txt"
        path.write_text(content)
        result = run_genuslab("genus", path)
        assert result.returncode == 2
        assert result.stderr.startswith("error:")

    def test_missing_file(self, run_genuslab):
        """A missing form file exits 2."""
        assert run_genuslab("disc", "absent.txt").returncode == 2

    def test_bad_config(self, run_genuslab, write_form, temp_workspace):
        """An unknown config key exits 2 and names the line."""
        (temp_workspace / "genuslab.conf").write_text("colour = blue\n")
        result = run_genuslab("genus", write_form("i3.txt", I3_TEXT))
        assert result.returncode == 2
        assert "genuslab.conf:1" in result.stderr


class TestArithmeticCommands:
    """Test disc and good-place."""

    def test_disc(self, run_genuslab, write_form):
        """disc prints norm_sq as an exact string."""
        result = run_genuslab("disc", write_form("i2.txt", [[1, 0], [0, 1]]))
        assert result.returncode == 0, result.stderr
        assert json.loads(result.stdout)["norm_sq"] == "2"

    def test_good_place(self, run_genuslab, write_form):
        """good-place reports the prime and the unit check."""
        result = run_genuslab("good-place", write_form("f.txt", [[1, 0, 0], [0, 1, 0], [0, 0, 9]]))
        assert result.returncode == 0, result.stderr
        data = json.loads(result.stdout)
        assert data["prime"] == 5
        assert data["killing_unit"] is True


class TestEquidCommand:
    """Test the equidistribution CSV."""

    def test_deterministic_csv(self, run_genuslab, write_form):
        """Two runs print the same CSV."""
        path = write_form("i3.txt", I3_TEXT)
        first = run_genuslab("equid", path, "--radii", "2,3")
        second = run_genuslab("equid", path, "--radii", "2,3")
        assert first.returncode == 0, first.stderr
        assert first.stdout == second.stdout
        lines = first.stdout.splitlines()
        assert lines[0] == "R,empirical,expected,discrepancy"
        assert len(lines) == 3

    def test_count_cap(self, run_genuslab, write_form):
        """A tiny count cap exits 4."""
        result = run_genuslab("equid", write_form("i3.txt", I3_TEXT), "--count-cap", "10")
        assert result.returncode == 4


class TestScanCommand:
    """Test family scans."""

    def test_template_scan(self, run_genuslab, temp_workspace):
        """An arithmetic scan prints one row per k and writes the fits."""
        result = run_genuslab("scan", "diag(1,1,k)", "--k", "1..5", "--no-genus", "--fits", "fits.json")
        assert result.returncode == 0, result.stderr
        lines = result.stdout.splitlines()
        assert lines[0].startswith("label,det,")
        assert len(lines) == 6
        assert json.loads((temp_workspace / "fits.json").read_text())["rows"] == 5

    @pytest.mark.slow
    def test_reruns_are_byte_identical(self, run_genuslab, temp_workspace):
        """Cold, cold and warm reruns print the same CSV and write the same fits."""
        args = ["scan", "diag(1,1,k)", "--k", "1..8", "--radii", "2,3", "--seed", "7"]
        outputs = []
        for name, env in [("a", None), ("b", {"GENUSLAB_CACHE": str(temp_workspace / "other-cache")}), ("c", None)]:
            result = run_genuslab(*args, "--fits", f"{name}.json", env=env)
            assert result.returncode == 0, result.stderr
            outputs.append((result.stdout, (temp_workspace / f"{name}.json").read_bytes()))
        assert outputs[0] == outputs[1] == outputs[2]

    def test_bad_member_is_flagged_not_fatal(self, run_genuslab, temp_workspace):
        """A non-positive member shows up as a flagged CSV row."""
        result = run_genuslab("scan", "diag(1,1,k)", "--k=-1..3", "--no-genus")
        assert result.returncode == 0, result.stderr
        lines = result.stdout.splitlines()
        assert len(lines) == 6
        assert lines[-1].startswith("k=0,") and lines[-1].endswith(",NotPositiveDefinite")

    def test_empty_directory(self, run_genuslab, temp_workspace):
        """A directory without forms exits 2."""
        (temp_workspace / "family").mkdir()
        assert run_genuslab("scan", "family").returncode == 2


class TestMaintenance:
    """Test config and cache commands."""

    def test_config_show(self, run_genuslab, cache_dir):
        """config show prints every setting with overrides applied."""
        result = run_genuslab("config", "show", "--seed", "42")
        assert result.returncode == 0, result.stderr
        assert "class_budget = 500" in result.stdout
        assert "seed = 42" in result.stdout
        assert f"cache_dir = {cache_dir}" in result.stdout

    def test_cache_gc(self, run_genuslab, cache_dir):
        """cache gc removes unreadable artifacts."""
        (cache_dir / "junk.json").write_text("nope")
        result = run_genuslab("cache", "gc")
        assert result.returncode == 0, result.stderr
        assert result.stdout.strip() == "removed=1"

    def test_cache_busy(self, run_genuslab, cache_dir):
        """A held cache lock exits 4."""
        with ArtifactCache(cache_dir):
            result = run_genuslab("cache", "gc")
        assert result.returncode == 4
