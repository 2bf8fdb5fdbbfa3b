"""Content-addressed artifact cache.

Artifacts live in ``<cache>/<digest>.json`` where the digest covers the
seed's canonical Gram text, the artifact kind and its parameters, so
equivalent inputs share one entry.  A process holds ``<cache>/.lock``
exclusively while it works; a second process fails fast with
:class:`CacheBusy`.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import logging
import os
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Union

from genuslab.errors import CacheBusy
from genuslab.genus import GenusEnumeration, Policy, genus_enumerate
from genuslab.qform_core import QuadraticForm, canonical_form

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
LOCK_NAME = ".lock"


def cache_key(kind: str, form: QuadraticForm, params: Mapping[str, Any]) -> Dict[str, Any]:
    return {"kind": kind, "seed": canonical_form(form).canonical.to_text(), "params": dict(params)}


def digest(key: Mapping[str, Any]) -> str:
    blob = key["seed"] + json.dumps({"kind": key["kind"], "params": key["params"]}, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ArtifactCache:
    """Locked view of a cache directory; use as a context manager."""

    def __init__(self, root: Union[str, Path]) -> None:
        self.root = Path(root)
        self._lock_fd: Optional[int] = None
        self.hits = 0
        self.misses = 0

    def __enter__(self) -> "ArtifactCache":
        self.root.mkdir(parents=True, exist_ok=True)
        fd = os.open(self.root / LOCK_NAME, os.O_RDWR | os.O_CREAT, 0o644)
        try:
            fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError as exc:
            os.close(fd)
            raise CacheBusy(f"cache {self.root} is locked by another process") from exc
        self._lock_fd = fd
        return self

    def __exit__(self, *exc: object) -> None:
        if self._lock_fd is not None:
            fcntl.flock(self._lock_fd, fcntl.LOCK_UN)
            os.close(self._lock_fd)
            self._lock_fd = None

    def path_for(self, key: Mapping[str, Any]) -> Path:
        return self.root / f"{digest(key)}.json"

    def load(self, key: Mapping[str, Any]) -> Optional[Any]:
        path = self.path_for(key)
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except (OSError, ValueError):
            logger.warning("unreadable cache artifact %s, recomputing", path.name)
            return None
        if record.get("format_version") != FORMAT_VERSION or record.get("key") != dict(key):
            logger.info("stale cache artifact %s, recomputing", path.name)
            return None
        return record["artifact"]

    def store(self, key: Mapping[str, Any], artifact: Any) -> Path:
        path = self.path_for(key)
        record = {"format_version": FORMAT_VERSION, "kind": key["kind"], "key": dict(key), "artifact": artifact}
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(record, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(path)
        return path

    def fetch(self, key: Mapping[str, Any], compute: Callable[[], Any]) -> Any:
        """Return the cached artifact for ``key``, computing and storing it on a miss."""
        artifact = self.load(key)
        short = self.path_for(key).stem[:12]
        if artifact is not None:
            self.hits += 1
            logger.info("cache hit %s (%s)", short, key["kind"])
            return artifact
        self.misses += 1
        logger.info("cache miss %s (%s)", short, key["kind"])
        artifact = compute()
        self.store(key, artifact)
        return artifact

    def gc(self) -> int:
        """Delete unreadable or wrong-version artifacts; return how many went."""
        removed = 0
        for path in sorted(self.root.glob("*.json")):
            try:
                record = json.loads(path.read_text(encoding="utf-8"))
                ok = isinstance(record, dict) and record.get("format_version") == FORMAT_VERSION
            except (OSError, ValueError):
                ok = False
            if not ok:
                path.unlink()
                removed += 1
        for path in self.root.glob("*.tmp"):
            path.unlink()
        logger.info("cache gc removed %d artifacts", removed)
        return removed


def cached_enumeration(cache: ArtifactCache, form: QuadraticForm, policy: Policy) -> GenusEnumeration:
    """Genus of ``form`` through the cache.

    An artifact may have been stored for an equivalent seed or another
    worker count; the returned enumeration carries the caller's seed and
    policy.
    """
    data = cache.fetch(cache_key("genus", form, policy.to_dict()), lambda: genus_enumerate(form, policy).to_dict())
    return replace(GenusEnumeration.from_dict(data), seed=form, policy=policy)
