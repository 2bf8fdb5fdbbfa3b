"""Genus-averaged lattice point counts against their Haar expectation.

Each class of a genus is scaled to determinant one and the number of
nonzero lattice vectors in the ball of radius R is compared with the
ball volume, which is the mean of that count over all unimodular lattices.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gamma

from genuslab.errors import BudgetExhausted, InsufficientData, RadiusTooLarge
from genuslab.genus import GenusEnumeration
from genuslab.qform_core import QuadraticForm, count_points, determinant

logger = logging.getLogger(__name__)

WEIGHTINGS = ("mass", "uniform")
DEFAULT_COUNT_CAP = 2_000_000
MIN_FIT_REPORTS = 5
CSV_COLUMNS = ("R", "empirical", "expected", "discrepancy")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class UnitDetForm:
    """A class scaled to determinant one, with the integer form it came from."""

    n: int
    matrix: np.ndarray = field(compare=False)
    provenance: QuadraticForm


def normalize_unit_det(form: QuadraticForm) -> UnitDetForm:
    det = determinant(form)
    scale = float(det) ** (1.0 / form.n)
    matrix = np.array(form.gram, dtype=float) / scale
    return UnitDetForm(form.n, matrix, form)


def _threshold(det: int, n: int, radius: float) -> int:
    """Largest integer k with k ≤ R²·det^{1/n}, decided exactly from kⁿ ≤ R²ⁿ·det."""
    bound = Fraction(radius) ** (2 * n) * det
    k = int(float(radius) ** 2 * float(det) ** (1.0 / n))
    while k > 0 and Fraction(k) ** n > bound:
        k -= 1
    while Fraction(k + 1) ** n <= bound:
        k += 1
    return k


def siegel_count(form: UnitDetForm, radius: float, cap: Optional[int] = DEFAULT_COUNT_CAP) -> int:
    """#{x ∈ Zⁿ \\ 0 : xᵀÂx ≤ R²}, counted on the integer form."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    source = form.provenance
    k = _threshold(determinant(source), form.n, radius)
    try:
        return count_points(source, k, cap)
    except OverflowError as exc:
        raise RadiusTooLarge(f"more than {cap} lattice points within radius {radius}") from exc


def ball_volume(n: int, radius: float) -> float:
    return float(math.pi ** (n / 2) * radius**n / gamma(n / 2 + 1))


@dataclass(frozen=True)
class EquidReport:
    genus_id: str
    weighting: str
    radii: Tuple[float, ...]
    empirical: Tuple[float, ...]
    expected: Tuple[float, ...]
    discrepancy: Tuple[float, ...]
    sup_discrepancy: float
    class_count: int

    def to_dict(self) -> dict:
        return {
            "genus_id": self.genus_id,
            "weighting": self.weighting,
            "radii": list(self.radii),
            "empirical": list(self.empirical),
            "expected": list(self.expected),
            "discrepancy": list(self.discrepancy),
            "sup_discrepancy": self.sup_discrepancy,
            "class_count": self.class_count,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in zip(self.radii, self.empirical, self.expected, self.discrepancy):
            writer.writerow([_fmt(x) for x in row])
        return buf.getvalue()


def genus_id(enum: GenusEnumeration) -> str:
    """Compact identifier: dimension, determinant and the first class."""
    first = enum.classes[0]
    return f"n{first.n}-det{determinant(first)}-" + json.dumps([list(r) for r in first.gram], separators=(",", ":"))


def _class_counts(form: QuadraticForm, radii: Sequence[float], cap: Optional[int]) -> List[int]:
    unit = normalize_unit_det(form)
    return [siegel_count(unit, r, cap) for r in radii]


def class_weights(enum: GenusEnumeration, weighting: str) -> List[Fraction]:
    if weighting == "uniform":
        raw = [Fraction(1)] * len(enum.classes)
    elif weighting == "mass":
        raw = [Fraction(1, a) for a in enum.aut_orders]
    else:
        raise ValueError(f"unknown weighting {weighting!r}; expected one of {WEIGHTINGS}")
    total = sum(raw, Fraction(0))
    return [w / total for w in raw]


def equid_experiment(
    enum: GenusEnumeration,
    radii: Sequence[float],
    weighting: str = "mass",
    workers: int = 1,
    cap: Optional[int] = DEFAULT_COUNT_CAP,
) -> EquidReport:
    if not enum.closed:
        raise BudgetExhausted("equidistribution needs a closed genus enumeration", enum)
    radii = tuple(float(r) for r in radii)
    if not radii or any(r <= 0 for r in radii) or any(a >= b for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be positive and strictly ascending")
    weights = class_weights(enum, weighting)
    n = enum.seed.n

    if workers > 1 and len(enum.classes) > 1:
        with ProcessPoolExecutor(workers) as pool:
            counts = list(
                pool.map(_class_counts, enum.classes, [radii] * len(enum.classes), [cap] * len(enum.classes))
            )
    else:
        counts = [_class_counts(c, radii, cap) for c in enum.classes]

    empirical, expected, discrepancy = [], [], []
    for k, radius in enumerate(radii):
        mean = float(sum((w * c[k] for w, c in zip(weights, counts)), Fraction(0)))
        vol = ball_volume(n, radius)
        empirical.append(mean)
        expected.append(vol)
        discrepancy.append(abs(mean - vol) / vol)
    report = EquidReport(
        genus_id=genus_id(enum),
        weighting=weighting,
        radii=radii,
        empirical=tuple(empirical),
        expected=tuple(expected),
        discrepancy=tuple(discrepancy),
        sup_discrepancy=max(discrepancy),
        class_count=len(enum.classes),
    )
    logger.info("%s: sup discrepancy %.6g over %d classes", report.genus_id, report.sup_discrepancy, report.class_count)
    return report


@dataclass(frozen=True)
class RateFit:
    points: Tuple[Tuple[float, float], ...]
    slope: float
    intercept: float
    r2: float
    interval: Tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "points": [list(p) for p in self.points],
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "interval": list(self.interval),
        }


def _line_fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-300:
        r2 = 1.0 if ss_res <= 1e-20 else 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return float(slope), float(intercept), r2


def fit_loglog(
    x: Sequence[float], y: Sequence[float], seed: int = 0, bootstrap: int = 1000
) -> RateFit:
    """Least-squares line through (log x, log y) with a bootstrap 95% slope interval."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    slope, intercept, r2 = _line_fit(lx, ly)
    rng = np.random.default_rng(seed)
    slopes = []
    for _ in range(bootstrap):
        idx = rng.integers(0, len(lx), len(lx))
        if len(np.unique(lx[idx])) < 2:
            continue
        slopes.append(np.polyfit(lx[idx], ly[idx], 1)[0])
    if slopes:
        lo, hi = np.percentile(slopes, [2.5, 97.5])
        interval = (float(lo), float(hi))
    else:
        interval = (slope, slope)
    points = tuple((float(a), float(b)) for a, b in zip(lx, ly))
    return RateFit(points, slope, intercept, r2, interval)


def power_fit(reports: Sequence[EquidReport], seed: int = 0, bootstrap: int = 1000) -> RateFit:
    """Fit sup_discrepancy ≈ C·|genus|^slope across genera."""
    if len(reports) < MIN_FIT_REPORTS:
        raise InsufficientData(f"need at least {MIN_FIT_REPORTS} reports, got {len(reports)}")
    counts = [r.class_count for r in reports]
    if min(counts) < 2:
        raise InsufficientData("every report needs at least 2 classes")
    if len(set(counts)) != len(counts):
        raise InsufficientData("class counts must be pairwise distinct")
    sups = [r.sup_discrepancy for r in reports]
    if min(sups) <= 0:
        raise InsufficientData("discrepancies must be positive for a log-log fit")
    fit = fit_loglog(counts, sups, seed=seed, bootstrap=bootstrap)
    logger.info("power fit slope %.4f (95%% %.4f..%.4f), r2=%.4f", fit.slope, *fit.interval, fit.r2)
    return fit
