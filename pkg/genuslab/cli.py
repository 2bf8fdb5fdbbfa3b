"""Command-line entry point: ``genuslab <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from genuslab import __version__
from genuslab.arith_local import good_place
from genuslab.cache import ArtifactCache, cached_enumeration
from genuslab.config import Config, load_config, parse_radii
from genuslab.equid import equid_experiment
from genuslab.errors import BudgetExhausted, GenuslabError
from genuslab.formio import read_form
from genuslab.genus import GenusEnumeration, genus_mass, spin_genus_partition, spinor_genera
from genuslab.qform_core import QuadraticForm
from genuslab.scan import run_scan
from genuslab.volume_disc import disc_homogeneous, killing_unit_check

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"

# flag name -> Config field
_OVERRIDES = {
    "prime_budget": "prime_budget",
    "class_budget": "class_budget",
    "neighbor_cap": "neighbor_cap",
    "floor": "good_place_floor",
    "radii": "radii",
    "weighting": "weighting",
    "cache_dir": "cache_dir",
    "workers": "workers",
    "seed": "seed",
    "count_cap": "count_cap",
    "bootstrap": "bootstrap",
}


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    common.add_argument("-q", "--quiet", action="store_true", help="only log errors")
    common.add_argument("--config", metavar="PATH", help="config file (default: ./genuslab.conf)")
    opts = common.add_argument_group("configuration overrides")
    opts.add_argument("--prime-budget", type=int, metavar="P")
    opts.add_argument("--class-budget", type=int, metavar="N")
    opts.add_argument("--neighbor-cap", type=int, metavar="N")
    opts.add_argument("--floor", type=int, metavar="P", help="good-place floor")
    opts.add_argument("--radii", type=parse_radii, metavar="R1,R2,...")
    opts.add_argument("--weighting", choices=("mass", "uniform"))
    opts.add_argument("--cache-dir", metavar="DIR")
    opts.add_argument("--workers", type=int, metavar="N")
    opts.add_argument("--seed", type=int)
    opts.add_argument("--count-cap", type=int, metavar="N")
    opts.add_argument("--bootstrap", type=int, metavar="N")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="genuslab",
        description="Genus enumeration and equidistribution experiments for positive definite integral forms.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("genus", parents=[common], help="enumerate the genus of a form")
    p.add_argument("form")
    p.add_argument("--strict", action="store_true", help="fail with exit 4 when the class budget runs out")
    p.add_argument("--json", metavar="PATH", help="also write the enumeration artifact here")
    p.set_defaults(func=cmd_genus)

    p = sub.add_parser("spin-genus", parents=[common], help="partition the genus into spinor genera")
    p.add_argument("form")
    p.set_defaults(func=cmd_spin_genus)

    p = sub.add_parser("mass", parents=[common], help="mass of the genus and of each spinor genus")
    p.add_argument("form")
    p.add_argument("--per-spinor", action="store_true")
    p.set_defaults(func=cmd_mass)

    p = sub.add_parser("disc", parents=[common], help="discriminant report as JSON")
    p.add_argument("form")
    p.set_defaults(func=cmd_disc)

    p = sub.add_parser("good-place", parents=[common], help="smallest good prime and bound diagnostic")
    p.add_argument("form")
    p.set_defaults(func=cmd_good_place)

    p = sub.add_parser("equid", parents=[common], help="genus-averaged lattice point counts (CSV)")
    p.add_argument("form")
    p.add_argument("--json", metavar="PATH", help="also write the report as JSON")
    p.set_defaults(func=cmd_equid)

    p = sub.add_parser("scan", parents=[common], help="scan a family of forms (CSV)")
    p.add_argument("family", help="template such as 'diag(1,1,k)' or a directory of form files")
    p.add_argument("--k", dest="k_range", metavar="RANGE", help="k values: a..b or a comma list")
    p.add_argument("--no-genus", action="store_true", help="arithmetic columns only")
    p.add_argument("--fits", metavar="PATH", help="write fitted exponents as JSON")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("config", parents=[common], help="configuration commands")
    p.add_argument("action", choices=("show",))
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("cache", parents=[common], help="cache maintenance")
    p.add_argument("action", choices=("gc",))
    p.set_defaults(func=cmd_cache)
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    if args.quiet:
        level = logging.ERROR
    else:
        level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def _config_from_args(args: argparse.Namespace) -> Config:
    overrides: Dict[str, Any] = {field: getattr(args, flag) for flag, field in _OVERRIDES.items()}
    return load_config(args.config, overrides)


def _enumeration(form: QuadraticForm, config: Config, cache: ArtifactCache) -> GenusEnumeration:
    return cached_enumeration(cache, form, config.policy())


def _write_json(path: str, data: Any) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_genus(args: argparse.Namespace, config: Config) -> int:
    form = read_form(args.form)
    with ArtifactCache(config.cache_path) as cache:
        enum = _enumeration(form, config, cache)
    if args.json:
        _write_json(args.json, enum.to_dict())
    if not enum.closed:
        if args.strict:
            raise BudgetExhausted(f"class budget {config.class_budget} reached with {len(enum.classes)} classes", enum)
        print(f"classes={len(enum.classes)} mass=- {enum.complete_flag}")
        return 0
    print(f"classes={len(enum.classes)} mass={genus_mass(enum).total} {enum.complete_flag}")
    return 0


def _label(bits: tuple) -> str:
    return "".join(str(b) for b in bits) or "0"


def cmd_spin_genus(args: argparse.Namespace, config: Config) -> int:
    form = read_form(args.form)
    with ArtifactCache(config.cache_path) as cache:
        enum = _enumeration(form, config, cache)
    partition = spin_genus_partition(enum)
    groups = spinor_genera(partition)
    print(f"classes={len(enum.classes)} spinor_genera={len(groups)} group_order={partition.group_order}")
    for label, members in groups.items():
        print(f"spinor {_label(label)} size={len(members)} classes={','.join(str(i) for i in members)}")
    return 0


def cmd_mass(args: argparse.Namespace, config: Config) -> int:
    form = read_form(args.form)
    with ArtifactCache(config.cache_path) as cache:
        enum = _enumeration(form, config, cache)
    if not args.per_spinor:
        print(f"mass={genus_mass(enum).total}")
        return 0
    value = genus_mass(enum, "per_spinor")
    print(f"mass={value.total}")
    for label, mass in value.per_spinor.items():
        print(f"spinor {_label(label)} mass={mass}")
    total = sum(value.per_spinor.values())
    print(f"sum={total} {'matches' if total == value.total else 'MISMATCH'}")
    return 0


def cmd_disc(args: argparse.Namespace, config: Config) -> int:
    report = disc_homogeneous(read_form(args.form))
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_good_place(args: argparse.Namespace, config: Config) -> int:
    form = read_form(args.form)
    place = good_place(form, config.good_place_floor)
    out = {
        "prime": place.prime,
        "ratio": place.ratio,
        "log2_disc": place.log2_disc,
        "killing_unit": killing_unit_check(form, place.prime),
    }
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_equid(args: argparse.Namespace, config: Config) -> int:
    form = read_form(args.form)
    with ArtifactCache(config.cache_path) as cache:
        enum = _enumeration(form, config, cache)
    report = equid_experiment(enum, config.radii, config.weighting, config.workers, config.count_cap)
    if args.json:
        _write_json(args.json, report.to_dict())
    sys.stdout.write(report.to_csv())
    return 0


def cmd_scan(args: argparse.Namespace, config: Config) -> int:
    with ArtifactCache(config.cache_path) as cache:
        result = run_scan(args.family, config, cache, args.k_range, with_genus=not args.no_genus)
    sys.stdout.write(result.to_csv())
    if args.fits:
        _write_json(args.fits, result.fits_dict())
    return 0


def cmd_config(args: argparse.Namespace, config: Config) -> int:
    sys.stdout.write(config.to_text())
    return 0


def cmd_cache(args: argparse.Namespace, config: Config) -> int:
    with ArtifactCache(config.cache_path) as cache:
        removed = cache.gc()
    print(f"removed={removed}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        config = _config_from_args(args)
        return args.func(args, config)
    except GenuslabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
