"""Command-line entry point: ``billiard-orbits {solve,betti,ring-check,shoot}``.

Exit codes: 0 success, 1 bound not met under --assert-bound, 2 config or
usage error, 3 surface is not strictly convex.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import cohomology
from .errors import DomainError, IdentityError, InvalidSpecError, NotStrictlyConvexError
from .solver import Tolerances, find_critical, report_bound, shoot, shoot_batch
from .surface import SurfaceSpec, point_at, validate

EXIT_OK, EXIT_BOUND, EXIT_CONFIG, EXIT_CONVEXITY = 0, 1, 2, 3

log = logging.getLogger("billiard_orbits")

_TOLERANCE_KEYS = {"grad_tol", "dedup_pos", "dedup_val", "nullity_scale"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    surface: SurfaceSpec
    n: int
    budget: int = 2000
    rng_seed: int = 0
    tolerances: Tolerances = field(default_factory=Tolerances)
    output_dir: Path = Path("out")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "surface" not in data or "n" not in data:
            raise ConfigError("config needs 'surface' and 'n'")
        tol = data.get("tolerances") or {}
        if set(tol) - _TOLERANCE_KEYS:
            raise ConfigError(f"unknown tolerance keys: {sorted(set(tol) - _TOLERANCE_KEYS)}")
        try:
            cfg = cls(
                surface=SurfaceSpec.from_dict(data["surface"]),
                n=_int(data["n"], "n"),
                budget=_int(data.get("budget", 2000), "budget"),
                rng_seed=_int(data.get("rng_seed", 0), "rng_seed"),
                tolerances=Tolerances(**{k: float(v) for k, v in tol.items()}),
                output_dir=Path(data.get("output_dir", "out")),
            )
        except (InvalidSpecError, DomainError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        cfg.check()
        return cfg

    def check(self) -> None:
        if self.n < 3:
            raise ConfigError(f"n must be >= 3, got {self.n}")
        if self.budget < 1:
            raise ConfigError(f"budget must be >= 1, got {self.budget}")


def _int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return value


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def _trajectory_rows(spec: SurfaceSpec, report) -> list[tuple]:
    rows = []
    if not report.orbits:
        return rows
    us = np.stack([o.rep.us for o in report.orbits])
    xs = np.stack([o.rep.xs for o in report.orbits])
    d = xs[:, 1] - xs[:, 0]
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    points, _ = shoot_batch(spec, xs[:, 0], d, us.shape[1])
    for orbit_id, poly in enumerate(points):
        for k, p in enumerate(poly):
            rows.append((orbit_id, k, *(float(v) for v in p)))
    return rows


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_solve(args) -> int:
    data = _load_json(args.config)
    for key in ("n", "budget", "rng_seed", "output_dir"):
        value = getattr(args, key)
        if value is not None:
            data[key] = str(value) if key == "output_dir" else value
    cfg = RunConfig.from_dict(data)

    spec = validate(cfg.surface)
    report = find_critical(spec, cfg.n, cfg.budget, cfg.rng_seed, cfg.tolerances, threads=args.threads)

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    with (out / "orbits.jsonl").open("w") as fh:
        for i, o in enumerate(report.orbits):
            fh.write(json.dumps(dict(orbit_id=i, **o.to_dict()), sort_keys=True) + "\n")
    _write_csv(out / "trajectories.csv", ("orbit_id", "bounce_index", "x", "y", "z"), _trajectory_rows(spec, report))

    print(report_bound(report))
    if args.assert_bound and not report.bound_met:
        return EXIT_BOUND
    return EXIT_OK


def betti_csv(n_max: int) -> str:
    rows = cohomology.betti_table(n_max)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n"] + [f"b_{k}" for k in range(n_max + 1)] + ["sum", "bound"])
    for n, betti, total, bound in rows:
        padded = list(betti) + [""] * (n_max - n)
        w.writerow([n] + padded + [total, bound])
    return buf.getvalue()


def cmd_betti(args) -> int:
    if args.n_max < 3 or args.n_max % 2 == 0:
        raise ConfigError(f"n_max must be an odd integer >= 3, got {args.n_max}")
    text = betti_csv(args.n_max)
    if args.output:
        Path(args.output).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_ring_check(args) -> int:
    if args.n < 3 or args.n % 2 == 0:
        raise ConfigError(f"n must be an odd integer >= 3, got {args.n}")
    try:
        cohomology.ring_consistency_check(args.n, args.degree_cap)
    except IdentityError as exc:
        print(f"FAIL: {exc}")
        return EXIT_BOUND
    print(f"PASS: ring relations consistent for n={args.n} up to degree {args.degree_cap}")
    return EXIT_OK


def cmd_shoot(args) -> int:
    data = _load_json(args.config)
    try:
        spec = SurfaceSpec.from_dict(data["surface"])
        start = point_at(spec, np.asarray(data["start"], dtype=float) / np.linalg.norm(data["start"]))
        direction = np.asarray(data["dir"], dtype=float)
        direction = direction / np.linalg.norm(direction)
        bounces = _int(data.get("bounces", 3), "bounces")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed shoot config: {exc}") from exc
    spec = validate(spec)
    shot = shoot(spec, start, direction, bounces)
    rows = [(0, k, *(float(v) for v in p)) for k, p in enumerate(shot.points)]
    if args.output:
        _write_csv(Path(args.output), ("orbit_id", "bounce_index", "x", "y", "z"), rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(("orbit_id", "bounce_index", "x", "y", "z"))
        w.writerows(rows)
    print(f"closure_gap {shot.closure_gap:.3e}")
    print(f"direction_gap {shot.direction_gap:.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="billiard-orbits", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="search for critical D_n-orbits of the perimeter")
    p.add_argument("config", help="JSON run config")
    p.add_argument("--n", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--rng-seed", dest="rng_seed", type=int)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $BILLIARD_THREADS or 1)")
    p.add_argument("--assert-bound", action="store_true", help="exit 1 when the orbit count is below 2(n-1)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("betti", help="equivariant Betti table as CSV")
    p.add_argument("n_max", type=int)
    p.add_argument("--output", help="also write the table to this file")
    p.set_defaults(func=cmd_betti)

    p = sub.add_parser("ring-check", help="consistency of the H*(G'_A; Z) relations")
    p.add_argument("n", type=int)
    p.add_argument("degree_cap", type=int)
    p.set_defaults(func=cmd_ring_check)

    p = sub.add_parser("shoot", help="forward billiard shooting from a surface point")
    p.add_argument("config", help="JSON with surface, start (direction), dir, bounces")
    p.add_argument("--output", help="write the polyline CSV here instead of stdout")
    p.set_defaults(func=cmd_shoot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidSpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotStrictlyConvexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVEXITY
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
