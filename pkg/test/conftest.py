"""Pytest fixtures for testing genuslab."""

import os
import random
import subprocess
import sys
from pathlib import Path
from typing import Callable, Generator, List, Sequence

import pytest

from genuslab.qform_core import QuadraticForm, Unimodular, validate_form

REPO_ROOT = Path(__file__).parent.parent


@pytest.fixture
def temp_workspace(tmp_path: Path) -> Generator[Path, None, None]:
    """Create a temporary working directory and chdir into it."""
    workspace_dir = tmp_path / "test_workspace"
    workspace_dir.mkdir(exist_ok=True)

    # Save current directory
    original_dir = os.getcwd()

    try:
        os.chdir(workspace_dir)
        yield workspace_dir
    finally:
        # Restore original directory
        os.chdir(original_dir)


@pytest.fixture
def cache_dir(tmp_path: Path) -> Path:
    """An empty cache directory outside the working directory."""
    path = tmp_path / "cache"
    path.mkdir()
    return path


@pytest.fixture
def write_form(temp_workspace: Path) -> Callable[..., Path]:
    """Write a Gram matrix as a text form file in the workspace."""

    def _write(name: str, gram: Sequence[Sequence[int]]) -> Path:
        lines = [f"# {name}", str(len(gram))]
        lines.extend(" ".join(str(x) for x in row) for row in gram)
        path = temp_workspace / name
        path.write_text("\n".join(lines) + "\n")
        return path

    return _write


@pytest.fixture
def run_genuslab(temp_workspace: Path, cache_dir: Path):
    """Helper function to run genuslab commands as a subprocess."""

    def _run(*args, check=False, env=None, input=None):
        """Run ``python -m genuslab`` with the given arguments."""
        cmd = [sys.executable, "-m", "genuslab"] + [str(a) for a in args]

        run_env = os.environ.copy()
        run_env["GENUSLAB_CACHE"] = str(cache_dir)
        run_env["PYTHONPATH"] = os.pathsep.join(
            p for p in (str(REPO_ROOT), run_env.get("PYTHONPATH", "")) if p
        )
        if env:
            run_env.update(env)

        return subprocess.run(
            cmd,
            check=check,
            capture_output=True,
            text=True,
            input=input,
            env=run_env,
            cwd=os.getcwd(),  # Run from current test directory
        )

    return _run


@pytest.fixture
def rng() -> random.Random:
    """Seeded generator so randomized properties repeat exactly."""
    return random.Random(20240611)


def _random_form(rng: random.Random, n: int, spread: int = 2) -> QuadraticForm:
    """A random positive definite form L·Lᵀ with L lower triangular."""
    lower = [[0] * n for _ in range(n)]
    for i in range(n):
        lower[i][i] = rng.randint(1, 3)
        for j in range(i):
            lower[i][j] = rng.randint(-spread, spread)
    gram = [[sum(lower[i][k] * lower[j][k] for k in range(n)) for j in range(n)] for i in range(n)]
    return validate_form(gram)


def _random_unimodular(rng: random.Random, n: int, steps: int = 6) -> Unimodular:
    """Product of random elementary column operations and a signed permutation."""
    m = [[int(i == j) for j in range(n)] for i in range(n)]
    for _ in range(steps):
        i, j = rng.sample(range(n), 2)
        c = rng.choice([-2, -1, 1, 2])
        for r in range(n):
            m[r][j] += c * m[r][i]
    perm = list(range(n))
    rng.shuffle(perm)
    signs = [rng.choice([-1, 1]) for _ in range(n)]
    cols: List[List[int]] = [[signs[k] * m[r][perm[k]] for r in range(n)] for k in range(n)]
    return Unimodular.from_columns(cols)


@pytest.fixture
def I2() -> QuadraticForm:
    return validate_form([[1, 0], [0, 1]])


@pytest.fixture
def I3() -> QuadraticForm:
    return validate_form([[1, 0, 0], [0, 1, 0], [0, 0, 1]])


def _diag(*entries: int) -> QuadraticForm:
    n = len(entries)
    return validate_form([[entries[i] if i == j else 0 for j in range(n)] for i in range(n)])


@pytest.fixture
def diag() -> Callable[..., QuadraticForm]:
    """Build diag(a, b, ...) as a validated form."""
    return _diag


@pytest.fixture
def random_form(rng: random.Random) -> Callable[..., QuadraticForm]:
    return lambda n, spread=2: _random_form(rng, n, spread)


@pytest.fixture
def random_unimodular(rng: random.Random) -> Callable[..., Unimodular]:
    return lambda n, steps=6: _random_unimodular(rng, n, steps)
