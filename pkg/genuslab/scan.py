"""Batch scans over families of forms.

A family is either a Gram template in one integer parameter ``k``
(``diag(1,1,k)`` or ``[[2,1,0],[1,2,0],[0,0,k]]``) with a range of ``k``,
or a directory of form files.  Every row is computed through the artifact
cache, so reruns only read results back.  A member that fails to load
or compute still gets a row, with the error class as its status.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import re
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from scipy.stats import linregress
from sympy import Integer, Symbol
from sympy.parsing.sympy_parser import parse_expr

from genuslab.arith_local import good_place
from genuslab.cache import ArtifactCache, cache_key, cached_enumeration
from genuslab.config import Config
from genuslab.equid import EquidReport, RateFit, equid_experiment, power_fit
from genuslab.errors import EmptyFamily, FormParseError, GenuslabError, InsufficientData
from genuslab.formio import read_form
from genuslab.genus import genus_mass, spin_genus_partition, spinor_genera
from genuslab.qform_core import QuadraticForm, determinant, validate_form
from genuslab.volume_disc import disc_homogeneous

logger = logging.getLogger(__name__)

K = Symbol("k")
CENSUS_THRESHOLDS = (2, 4, 8, 16)
MIN_LINE_POINTS = 3
ROW_COLUMNS = (
    "label",
    "det",
    "classes",
    "spinor_genera",
    "seed_spinor_size",
    "mass",
    "norm_sq",
    "disc",
    "good_prime",
    "ratio",
    "sup_discrepancy",
    "status",
)


def parse_k_range(text: str) -> List[int]:
    """``a..b`` (inclusive) or a comma list of integers."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = (int(part) for part in text.split("..", 1))
            return list(range(lo, hi + 1))
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise FormParseError(f"bad k range {text!r}") from exc


def _entry(expr: str, k: int) -> int:
    try:
        value = parse_expr(expr, local_dict={"k": K}).subs(K, k)
    except Exception as exc:  # sympy raises a variety of parse errors
        raise FormParseError(f"cannot parse template entry {expr!r}") from exc
    if not isinstance(value, Integer):
        raise FormParseError(f"template entry {expr!r} is not an integer at k={k}")
    return int(value)


def expand_template(template: str, k: int) -> List[List[int]]:
    template = template.strip()
    match = re.fullmatch(r"diag\((.*)\)", template)
    if match:
        diag = [_entry(tok, k) for tok in match.group(1).split(",")]
        return [[diag[i] if i == j else 0 for j in range(len(diag))] for i in range(len(diag))]
    rows = re.findall(r"\[([^\[\]]*)\]", template)
    if not rows:
        raise FormParseError(f"unrecognized family template {template!r}")
    return [[_entry(tok, k) for tok in row.split(",")] for row in rows]


@dataclass(frozen=True)
class FamilyMember:
    """One form of a family, read or expanded only when its row is computed."""

    label: str
    source: Union[str, Path]
    k: Optional[int] = None

    def load(self) -> QuadraticForm:
        if self.k is None:
            return read_form(self.source)
        return validate_form(expand_template(str(self.source), self.k))


def family_members(family: str, k_range: Optional[str] = None) -> List[FamilyMember]:
    """Members of a template family or a directory of form files."""
    path = Path(family)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.is_file() and not p.name.startswith("."))
        members = [FamilyMember(p.name, p) for p in files]
    else:
        if k_range is None:
            raise FormParseError("a template family needs a k range")
        members = [FamilyMember(f"k={k}", family, k) for k in parse_k_range(k_range)]
    if not members:
        raise EmptyFamily(f"family {family!r} has no members")
    return members


@dataclass
class ScanRow:
    label: str
    det: Optional[int] = None
    norm_sq: Optional[int] = None
    disc: Optional[float] = None
    good_prime: Optional[int] = None
    ratio: Optional[float] = None
    classes: Optional[int] = None
    spinor_genera: Optional[int] = None
    seed_spinor_size: Optional[int] = None
    mass: Optional[Fraction] = None
    sup_discrepancy: Optional[float] = None
    status: str = "ok"
    report: Optional[EquidReport] = field(default=None, repr=False)

    def cells(self) -> List[str]:
        def fmt(x: object) -> str:
            if x is None:
                return ""
            if isinstance(x, float):
                return format(x, ".17g")
            return str(x)

        return [fmt(getattr(self, name)) for name in ROW_COLUMNS]


@dataclass(frozen=True)
class LineFit:
    """Least-squares line through log-log points with its Pearson r."""

    count: int
    slope: float
    intercept: float
    r: float

    @property
    def r2(self) -> float:
        return self.r * self.r

    def to_dict(self) -> dict:
        return {"count": self.count, "slope": self.slope, "intercept": self.intercept, "r": self.r, "r2": self.r2}


def loglog_line(xs: Sequence[float], ys: Sequence[float]) -> Optional[LineFit]:
    pts = [(math.log(x), math.log(y)) for x, y in zip(xs, ys) if x > 0 and y > 0]
    if len(pts) < MIN_LINE_POINTS or len({p[0] for p in pts}) < 2 or len({p[1] for p in pts}) < 2:
        return None
    res = linregress([p[0] for p in pts], [p[1] for p in pts])
    return LineFit(len(pts), float(res.slope), float(res.intercept), float(res.rvalue))


@dataclass
class ScanResult:
    family: str
    rows: List[ScanRow]
    fits: Dict[str, Optional[LineFit]] = field(default_factory=dict)
    rate: Optional[RateFit] = None
    census: Dict[int, int] = field(default_factory=dict)
    max_ratio: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(ROW_COLUMNS)
        for row in self.rows:
            writer.writerow(row.cells())
        return buf.getvalue()

    def fits_dict(self) -> dict:
        return {
            "family": self.family,
            "rows": len(self.rows),
            "failed_rows": sum(1 for r in self.rows if r.status != "ok"),
            "max_ratio": self.max_ratio,
            "fits": {name: (fit.to_dict() if fit else None) for name, fit in self.fits.items()},
            "discrepancy_vs_genus": self.rate.to_dict() if self.rate else None,
            "small_spinor_census": {str(t): c for t, c in self.census.items()},
        }


def _arith_row(label: str, form: QuadraticForm, config: Config) -> ScanRow:
    report = disc_homogeneous(form, with_pluecker=False)
    place = good_place(form, config.good_place_floor)
    return ScanRow(label, determinant(form), report.norm_sq, report.disc, place.prime, place.ratio)


def _genus_columns(row: ScanRow, form: QuadraticForm, config: Config, cache: ArtifactCache) -> None:
    policy = config.policy()
    enum = cached_enumeration(cache, form, policy)
    row.classes = len(enum.classes)
    if not enum.closed:
        row.status = "budget_exhausted"
        return
    row.mass = genus_mass(enum).total
    try:
        partition = spin_genus_partition(enum)
    except GenuslabError as exc:
        row.status = f"spin: {type(exc).__name__}"
    else:
        groups = spinor_genera(partition)
        row.spinor_genera = len(groups)
        row.seed_spinor_size = len(groups[partition.labels[enum.seed_index]])

    params = {
        "policy": policy.to_dict(),
        "radii": list(config.radii),
        "weighting": config.weighting,
        "count_cap": config.count_cap,
    }
    try:
        rep = cache.fetch(
            cache_key("equid", form, params),
            lambda: equid_experiment(enum, config.radii, config.weighting, config.workers, config.count_cap).to_dict(),
        )
    except GenuslabError as exc:
        row.status = f"equid: {type(exc).__name__}"
        return
    row.report = EquidReport(
        genus_id=rep["genus_id"],
        weighting=rep["weighting"],
        radii=tuple(rep["radii"]),
        empirical=tuple(rep["empirical"]),
        expected=tuple(rep["expected"]),
        discrepancy=tuple(rep["discrepancy"]),
        sup_discrepancy=rep["sup_discrepancy"],
        class_count=rep["class_count"],
    )
    row.sup_discrepancy = row.report.sup_discrepancy


def _rate_fit(rows: Sequence[ScanRow], config: Config) -> Optional[RateFit]:
    # one genus per class count, the smallest determinant first
    chosen: Dict[int, EquidReport] = {}
    for row in rows:
        if row.report is not None and row.report.class_count >= 2:
            chosen.setdefault(row.report.class_count, row.report)
    try:
        return power_fit([chosen[c] for c in sorted(chosen)], seed=config.seed, bootstrap=config.bootstrap)
    except InsufficientData as exc:
        logger.info("no discrepancy fit: %s", exc)
        return None


def run_scan(
    family: str,
    config: Config,
    cache: ArtifactCache,
    k_range: Optional[str] = None,
    with_genus: bool = True,
) -> ScanResult:
    rows: List[ScanRow] = []
    for member in family_members(family, k_range):
        label = member.label
        start = time.perf_counter()
        try:
            form = member.load()
        except GenuslabError as exc:
            logger.warning("%s: %s", label, exc)
            rows.append(ScanRow(label, status=type(exc).__name__))
            continue
        try:
            row = _arith_row(label, form, config)
        except GenuslabError as exc:
            logger.warning("%s: %s", label, exc)
            rows.append(ScanRow(label, determinant(form), status=type(exc).__name__))
            continue
        if with_genus:
            try:
                _genus_columns(row, form, config, cache)
            except GenuslabError as exc:
                logger.warning("%s: %s", label, exc)
                row.status = type(exc).__name__
        rows.append(row)
        logger.info("%s done in %.2fs", label, time.perf_counter() - start)
    rows.sort(key=lambda r: (r.det is None, r.det or 0, r.label))

    result = ScanResult(family, rows)
    ok = [r for r in rows if r.disc is not None]
    result.max_ratio = max((r.ratio for r in ok), default=0.0)
    if with_genus:
        multi = [r for r in ok if r.classes and r.classes >= 2]
        result.fits["genus_vs_disc"] = loglog_line([r.disc for r in multi], [r.classes for r in multi])
        spin = [r for r in ok if r.spinor_genera]
        result.fits["spinor_genera_vs_disc"] = loglog_line([r.disc for r in spin], [r.spinor_genera for r in spin])
        massed = [r for r in ok if r.mass]
        result.fits["mass_vs_disc"] = loglog_line([r.disc for r in massed], [float(r.mass) for r in massed])
        result.rate = _rate_fit(rows, config)
        sized = [r.seed_spinor_size for r in rows if r.seed_spinor_size]
        result.census = {t: sum(1 for s in sized if s < t) for t in CENSUS_THRESHOLDS}
    logger.info("scan of %s: %d rows, %d cache hits", family, len(rows), cache.hits)
    return result
