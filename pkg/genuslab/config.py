"""Run configuration: defaults, ``genuslab.conf`` files, environment and flags.

Config files are flat ``key = value`` lines.  ``#`` starts a comment and
blank lines are ignored.  Later layers override earlier ones: defaults,
then the file, then ``GENUSLAB_CACHE``, then command-line flags.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Tuple, Union

from genuslab.errors import ConfigError
from genuslab.genus import Policy

logger = logging.getLogger(__name__)

CONFIG_FILENAME = "genuslab.conf"
CACHE_ENV = "GENUSLAB_CACHE"


def parse_radii(text: str) -> Tuple[float, ...]:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _format_value(value: Any) -> str:
    if isinstance(value, tuple):
        return ",".join(format(r, "g") for r in value)
    return str(value)


@dataclass(frozen=True)
class Config:
    prime_budget: int = 50
    class_budget: int = 500
    neighbor_cap: int = 400
    good_place_floor: int = 3
    radii: Tuple[float, ...] = (5.0, 8.0, 12.0)
    weighting: str = "mass"
    cache_dir: str = "~/.cache/genuslab"
    workers: int = 1
    seed: int = 0
    count_cap: int = 2_000_000
    bootstrap: int = 1000

    @property
    def cache_path(self) -> Path:
        return Path(self.cache_dir).expanduser()

    def policy(self) -> Policy:
        return Policy(
            prime_budget=self.prime_budget,
            class_budget=self.class_budget,
            neighbor_cap=self.neighbor_cap,
            workers=self.workers,
        )

    def validate(self) -> "Config":
        for name in ("prime_budget", "class_budget", "neighbor_cap", "workers", "count_cap", "bootstrap"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.good_place_floor < 3:
            raise ConfigError(f"good_place_floor must be at least 3, got {self.good_place_floor}")
        if not self.radii or any(r <= 0 for r in self.radii):
            raise ConfigError("radii must be positive")
        if any(a >= b for a, b in zip(self.radii, self.radii[1:])):
            raise ConfigError("radii must be strictly ascending")
        if self.weighting not in ("mass", "uniform"):
            raise ConfigError(f"weighting must be mass or uniform, got {self.weighting!r}")
        return self

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_format_value(getattr(self, f.name))}\n" for f in fields(self))


_PARSERS: Dict[str, Callable[[str], Any]] = {
    "prime_budget": int,
    "class_budget": int,
    "neighbor_cap": int,
    "good_place_floor": int,
    "radii": parse_radii,
    "weighting": str,
    "cache_dir": str,
    "workers": int,
    "seed": int,
    "count_cap": int,
    "bootstrap": int,
}


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        parser = _PARSERS.get(key)
        if parser is None:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {value!r}") from exc
    return values


def find_config_file(explicit: Optional[Union[str, Path]] = None) -> Optional[Path]:
    if explicit is not None:
        path = Path(explicit)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        return path
    local = Path.cwd() / CONFIG_FILENAME
    return local if local.is_file() else None


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> Config:
    """Build the effective configuration from every layer and validate it."""
    environ = os.environ if environ is None else environ
    config = Config()
    found = find_config_file(path)
    if found is not None:
        logger.debug("reading config from %s", found)
        config = replace(config, **parse_config_text(found.read_text(encoding="utf-8"), str(found)))
    if environ.get(CACHE_ENV):
        config = replace(config, cache_dir=environ[CACHE_ENV])
    if overrides:
        config = replace(config, **{k: v for k, v in overrides.items() if v is not None})
    return config.validate()
