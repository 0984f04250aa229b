"""Multistart search for critical D_n-orbits of the perimeter on G(X, n).

Seeds are refined by a batched Newton / Levenberg iteration on the gradient
system in chart coordinates, deduplicated modulo the dihedral action, then
classified by Hessian signature and cross-checked by forward shooting.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import cohomology
from .configspace import (
    SEPARATION_FLOOR,
    Configuration,
    grad_batch,
    hessian_batch,
    orbit_distance,
    perimeter_batch,
    reflection_residuals_batch,
    stabilizer_size,
    star_polygon,
)
from .errors import DomainError
from .surface import SurfacePoint, SurfaceSpec, chord_exit_batch, geometry, retract

log = logging.getLogger(__name__)

CHUNK_SIZE = 512
STALL_WINDOW = 25
STALL_RATIO = 0.9


@dataclass(frozen=True)
class Tolerances:
    grad_tol: float = 1e-10
    accept_grad: float = 1e-8
    dedup_pos: float = 1e-5
    dedup_val: float = 1e-8
    nullity_scale: float = 1e-6
    reflect_tol: float = 1e-6
    shoot_tol: float = 1e-6
    max_iter: int = 500

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise DomainError(f"tolerance {name} must be positive, got {value}")


@dataclass
class CriticalOrbit:
    rep: Configuration
    value: float
    grad_norm: float
    index: int
    nullity: int
    stabilizer: int
    reflect_residual: float
    closed_by_shooting: bool
    shooting_gap: float
    seed_id: int
    min_eig_ratio: float

    @property
    def degenerate(self) -> bool:
        return self.nullity > 0

    def to_dict(self) -> dict:
        return {
            "seed_id": self.seed_id,
            "value": self.value,
            "grad_norm": self.grad_norm,
            "index": self.index,
            "nullity": self.nullity,
            "degenerate": self.degenerate,
            "stabilizer": self.stabilizer,
            "reflect_residual": self.reflect_residual,
            "closed_by_shooting": self.closed_by_shooting,
            "shooting_gap": self.shooting_gap,
            "min_eig_ratio": self.min_eig_ratio,
            "us": self.rep.us.tolist(),
            "xs": self.rep.xs.tolist(),
        }


@dataclass
class SolveReport:
    n: int
    surface: dict
    surface_digest: str
    orbits: list[CriticalOrbit]
    distinct_count: int
    degenerate_count: int
    bound: int | None
    bound_met: bool
    per_index_counts: dict[int, int]
    seeds_used: int
    seeds_converged: int
    rng_seed: int
    diagnostics: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "surface": self.surface,
            "surface_digest": self.surface_digest,
            "distinct_count": self.distinct_count,
            "degenerate_count": self.degenerate_count,
            "bound": self.bound,
            "bound_met": self.bound_met,
            "per_index_counts": {str(k): v for k, v in sorted(self.per_index_counts.items())},
            "seeds_used": self.seeds_used,
            "seeds_converged": self.seeds_converged,
            "rng_seed": self.rng_seed,
            "diagnostics": self.diagnostics,
            "orbits": [dict(orbit_id=i, **o.to_dict()) for i, o in enumerate(self.orbits)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def morse_index(H: np.ndarray, scale_tol: float = 1e-6) -> tuple[int, int]:
    lam = np.linalg.eigvalsh(H)
    tau = scale_tol * np.abs(lam).max() if lam.size else 0.0
    return int((lam < -tau).sum()), int((np.abs(lam) <= tau).sum())


# -- seeds -------------------------------------------------------------------


def structured_seeds(spec: SurfaceSpec, n: int) -> list[Configuration]:
    """Star polygons {n/k}, k = 1..(n-1)//2, in each coordinate-plane section."""
    return [star_polygon(spec, n, k, plane) for k in range(1, (n - 1) // 2 + 1) for plane in (2, 0, 1)]


def seed_portfolio(spec: SurfaceSpec, n: int, budget: int, rng_seed: int = 0) -> list[Configuration]:
    """Deterministic seed list whose first ``m`` entries do not depend on the budget.

    Structured star polygons come first; after them every fourth seed is a
    random perturbation of a structured one and the rest are uniform random
    n-gons.  Each seed draws from its own generator keyed by (rng_seed, j).
    """
    if n < 2:
        raise DomainError("n must be at least 2")
    base = structured_seeds(spec, n)
    seeds = base[:budget]
    floor = 10 * SEPARATION_FLOOR * spec.diameter
    for j in range(len(seeds), budget):
        rng = np.random.default_rng([rng_seed, j])
        perturb = bool(base) and (j - len(base)) % 4 == 0
        while True:
            if perturb:
                sigma = rng.uniform(0.02, 0.3)
                us = base[j % len(base)].us + sigma * rng.normal(size=(n, 3))
            else:
                us = rng.normal(size=(n, 3))
            c = Configuration(spec, us)
            if c.min_separation() > floor:
                break
        seeds.append(c)
    return seeds


# -- batched Newton / Levenberg ----------------------------------------------


def _refine(spec: SurfaceSpec, us: np.ndarray, tol: Tolerances) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Drive the chart gradient to zero for a batch of seeds.

    Steps come from the eigendecomposition of the symmetrised Hessian:
    s = -Q diag(lam / (lam^2 + mu)) Q^T g, i.e. Newton when mu = 0 and a
    Levenberg step on the gradient system otherwise.  A step is accepted only
    if it lowers |g|, stays inside the trust radius and keeps consecutive
    vertices above the collision barrier.
    """
    us = us.copy()
    batch, n = us.shape[0], us.shape[1]
    diam = spec.diameter
    barrier = 10 * SEPARATION_FLOOR * diam
    max_radius = 0.25 * diam

    gn = np.linalg.norm(grad_batch(spec, us).reshape(batch, -1), axis=1)
    converged = gn <= tol.grad_tol
    failed = ~np.isfinite(gn)
    mu = np.zeros(batch)
    radius = np.full(batch, max_radius)
    checkpoint = gn.copy()

    for it in range(tol.max_iter):
        live = np.flatnonzero(~converged & ~failed)
        if live.size == 0:
            break
        u = us[live]
        geo = geometry(spec, u)
        g = grad_batch(spec, u).reshape(live.size, -1)
        H = hessian_batch(spec, u, pullback=geo.pullback)
        lam, Q = np.linalg.eigh(0.5 * (H + np.swapaxes(H, -1, -2)))
        scale = np.abs(lam).max(axis=1)
        gq = (Q * g[:, :, None]).sum(axis=1)  # Q^T g

        pending = np.ones(live.size, dtype=bool)
        for _trial in range(8):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            m = mu[live[idx]]
            tiny = (1e-14 * scale[idx]) ** 2
            coef = lam[idx] / (lam[idx] ** 2 + m[:, None] + tiny[:, None])
            step = -(Q[idx] * (coef * gq[idx])[:, None, :]).sum(axis=2).reshape(idx.size, n, 2)
            vmax = np.linalg.norm(step, axis=2).max(axis=1)
            shrink = np.minimum(1.0, radius[live[idx]] / np.maximum(vmax, 1e-300))
            step *= shrink[:, None, None]

            trial = retract(u[idx], geo.pullback[idx], step)
            xs = geometry(spec, trial).x
            sep = np.linalg.norm(xs - np.roll(xs, -1, axis=1), axis=2).min(axis=1)
            gn_new = np.linalg.norm(grad_batch(spec, trial).reshape(idx.size, -1), axis=1)
            ok = (sep > barrier) & np.isfinite(gn_new) & (gn_new < gn[live[idx]])

            acc = idx[ok]
            us[live[acc]] = trial[ok]
            gn[live[acc]] = gn_new[ok]
            mu[live[acc]] = np.where(mu[live[acc]] * 0.1 < 1e-12 * scale[acc] ** 2, 0.0, mu[live[acc]] * 0.1)
            radius[live[acc]] = np.minimum(2 * radius[live[acc]], max_radius)
            pending[acc] = False

            rej = idx[~ok]
            mu[live[rej]] = np.maximum(10 * mu[live[rej]], 1e-8 * scale[rej] ** 2)
            radius[live[rej]] *= 0.5

        converged[live] = gn[live] <= tol.grad_tol
        stalled = live[(radius[live] < 1e-12 * diam) | (mu[live] > 1e12 * scale**2)]
        failed[stalled] = True
        if it % STALL_WINDOW == STALL_WINDOW - 1:
            # stuck at a nonzero local minimum of |g|
            stuck = (gn > STALL_RATIO * checkpoint) & ~converged
            failed |= stuck
            checkpoint = gn.copy()

    return us, gn, converged


def _run_chunks(spec: SurfaceSpec, us: np.ndarray, tol: Tolerances, threads: int):
    chunks = [us[i : i + CHUNK_SIZE] for i in range(0, len(us), CHUNK_SIZE)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: _refine(spec, c, tol), chunks))
    else:
        results = [_refine(spec, c, tol) for c in chunks]
    return (np.concatenate([r[k] for r in results]) for k in range(3))


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("BILLIARD_THREADS", "1")))
    except ValueError:
        return 1


# -- shooting ----------------------------------------------------------------


@dataclass
class ShotResult:
    points: np.ndarray
    closure_gap: float
    direction_gap: float
    final_direction: np.ndarray


def reflect(direction: np.ndarray, normal: np.ndarray) -> np.ndarray:
    return direction - 2.0 * (direction * normal).sum(axis=-1, keepdims=True) * normal


def shoot_batch(spec: SurfaceSpec, starts: np.ndarray, dirs: np.ndarray, bounces: int) -> tuple[np.ndarray, np.ndarray]:
    """Billiard flow from boundary points; returns impacts (B, bounces + 1, 3) and final directions."""
    x = np.asarray(starts, dtype=float)
    d = np.asarray(dirs, dtype=float)
    points = [x]
    for _ in range(bounces):
        t = chord_exit_batch(spec, x, d, on_boundary=True)
        x = x + t[:, None] * d
        nu = geometry(spec, x / np.linalg.norm(x, axis=1, keepdims=True)).nu
        d = reflect(d, nu)
        points.append(x)
    return np.stack(points, axis=1), d


def shoot(spec: SurfaceSpec, start: SurfacePoint, direction, bounces: int) -> ShotResult:
    """Follow the billiard flow from a boundary point for ``bounces`` reflections.

    ``points[0]`` is the start and ``points[k]`` the k-th impact.
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    cos_in = float(np.dot(d, start.nu))
    if abs(cos_in) < 1e-9:
        raise DomainError("initial direction is tangent to the surface")
    if cos_in > 0:
        raise DomainError("initial direction must point into the body")
    if bounces < 1:
        raise DomainError("need at least one bounce")
    points, final = shoot_batch(spec, np.asarray(start.x, dtype=float)[None], d[None], bounces)
    points, final = points[0], final[0]
    return ShotResult(
        points=points,
        closure_gap=float(np.linalg.norm(points[-1] - points[0])),
        direction_gap=float(np.linalg.norm(final - d)),
        final_direction=final,
    )


def shooting_gaps(spec: SurfaceSpec, us: np.ndarray) -> np.ndarray:
    """For each n-gon, the largest distance between the polygon shot from x_1
    toward x_2 and the vertices x_2, ..., x_n, x_1."""
    xs = geometry(spec, us).x
    d = xs[:, 1] - xs[:, 0]
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    points, _ = shoot_batch(spec, xs[:, 0], d, us.shape[1])
    return np.linalg.norm(points[:, 1:] - np.roll(xs, -1, axis=1), axis=2).max(axis=1)


# -- driver ------------------------------------------------------------------


def _dedup(spec: SurfaceSpec, candidates, tol: Tolerances):
    """Keep the first candidate of every orbit class, in candidate order.

    The vertex centroid is D_n-invariant and 1-Lipschitz in orbit_distance,
    so only reps in neighbouring centroid cells need the exact comparison.
    """
    pos_tol = tol.dedup_pos * spec.diameter
    cells: dict[tuple[int, int, int], list[int]] = {}
    reps = []
    for cand in candidates:
        _, c, value, _ = cand
        key = tuple(np.floor(c.xs.mean(axis=0) / pos_tol).astype(int))
        dup = False
        for off in itertools.product((-1, 0, 1), repeat=3):
            for k in cells.get((key[0] + off[0], key[1] + off[1], key[2] + off[2]), ()):
                rep_c, rep_v = reps[k][1], reps[k][2]
                if abs(rep_v - value) <= tol.dedup_val * value and orbit_distance(rep_c, c) <= pos_tol:
                    dup = True
                    break
            if dup:
                break
        if not dup:
            cells.setdefault(key, []).append(len(reps))
            reps.append(cand)
    return reps


def _classify(spec: SurfaceSpec, us: np.ndarray, tol: Tolerances):
    lam = []
    for i in range(0, len(us), CHUNK_SIZE):
        H = hessian_batch(spec, us[i : i + CHUNK_SIZE])
        lam.append(np.linalg.eigvalsh(0.5 * (H + np.swapaxes(H, -1, -2))))
    lam = np.concatenate(lam)
    scale = np.abs(lam).max(axis=1)
    tau = tol.nullity_scale * scale
    index = (lam < -tau[:, None]).sum(axis=1)
    nullity = (np.abs(lam) <= tau[:, None]).sum(axis=1)
    ratio = np.abs(lam).min(axis=1) / scale
    return index, nullity, ratio


def find_critical(
    spec: SurfaceSpec,
    n: int,
    budget: int,
    rng_seed: int = 0,
    tolerances: Tolerances | None = None,
    threads: int | None = None,
) -> SolveReport:
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 3:
        raise DomainError(f"n must be an integer >= 3, got {n!r}")
    if budget < 1:
        raise DomainError("budget must be at least 1")
    tol = tolerances or Tolerances()
    threads = default_threads() if threads is None else threads
    diam = spec.diameter

    seeds = seed_portfolio(spec, n, budget, rng_seed)
    us0 = np.stack([c.us for c in seeds])
    us, gn, conv = _run_chunks(spec, us0, tol, threads)
    log.info("n=%d: %d of %d seeds converged", n, int(conv.sum()), budget)

    diagnostics: list[str] = []
    barrier = 10 * SEPARATION_FLOOR * diam
    candidates = []
    near_floor = 0
    for j in np.flatnonzero(conv):
        c = Configuration(spec, us[j])
        if c.min_separation() <= barrier:
            near_floor += 1
            continue
        candidates.append((int(j), c, float(perimeter_batch(c.xs)), float(gn[j])))
    if near_floor:
        diagnostics.append(f"{near_floor} converged seeds rejected near the collision floor")

    reps = _dedup(spec, candidates, tol)
    orbits: list[CriticalOrbit] = []
    rejected = 0
    if reps:
        rep_us = np.stack([r[1].us for r in reps])
        index, nullity, ratio = _classify(spec, rep_us, tol)
        residual = reflection_residuals_batch(spec, rep_us).max(axis=1)
        gaps = shooting_gaps(spec, rep_us)
        for k, (seed_id, c, value, gnorm) in enumerate(reps):
            orbit = CriticalOrbit(
                rep=c,
                value=value,
                grad_norm=gnorm,
                index=int(index[k]),
                nullity=int(nullity[k]),
                stabilizer=stabilizer_size(c, 1e-6 * diam),
                reflect_residual=float(residual[k]),
                closed_by_shooting=bool(gaps[k] <= tol.shoot_tol * diam),
                shooting_gap=float(gaps[k]),
                seed_id=seed_id,
                min_eig_ratio=float(ratio[k]),
            )
            if gnorm > tol.accept_grad or orbit.reflect_residual > tol.reflect_tol or not orbit.closed_by_shooting:
                rejected += 1
                continue
            orbits.append(orbit)
    if rejected:
        diagnostics.append(f"{rejected} critical orbits failed the reflection or shooting check")

    orbits.sort(key=lambda o: (-o.value, o.seed_id))
    generic = [o for o in orbits if not o.degenerate]
    degenerate = len(orbits) - len(generic)
    if degenerate:
        diagnostics.append(
            f"{degenerate} degenerate orbits (Hessian nullity > 0) excluded; surface looks non-generic"
        )
    if not candidates:
        diagnostics.append("no seed converged to a critical point")

    per_index: dict[int, int] = {}
    for o in generic:
        per_index[o.index] = per_index.get(o.index, 0) + 1

    bound = 2 * (n - 1) if n % 2 else None
    return SolveReport(
        n=n,
        surface=spec.to_dict(),
        surface_digest=spec.digest(),
        orbits=orbits,
        distinct_count=len(generic),
        degenerate_count=degenerate,
        bound=bound,
        bound_met=bound is not None and len(generic) >= bound,
        per_index_counts=per_index,
        seeds_used=budget,
        seeds_converged=int(conv.sum()),
        rng_seed=rng_seed,
        diagnostics=diagnostics,
    )


def _is_prime(n: int) -> bool:
    return n >= 2 and all(n % p for p in range(2, math.isqrt(n) + 1))


def report_bound(report: SolveReport) -> str:
    n = report.n
    lines = [
        f"n={n}  surface={report.surface_digest}  seeds {report.seeds_converged}/{report.seeds_used} converged",
        f"distinct nondegenerate D_{n}-orbits: {report.distinct_count}"
        + (f" (+{report.degenerate_count} degenerate)" if report.degenerate_count else ""),
    ]
    if report.bound is None:
        lines.append("bound: n/a (even n)")
    else:
        lines.append(f"bound {report.bound}: {'MET' if report.bound_met else 'NOT MET'}")
        if _is_prime(n):
            lines.append(f"weaker bound for prime n, (n+1)/2 = {(n + 1) // 2}")
        betti = cohomology.equivariant_poincare(n).coeffs
        for i in range(2 * n + 1):
            c_i = report.per_index_counts.get(i, 0)
            b_i = betti[i] if i < len(betti) else 0
            if c_i or b_i:
                lines.append(f"  index {i}: c={c_i} b={b_i} {'c>=b' if c_i >= b_i else 'c<b'}")
    lines.extend(f"note: {d}" for d in report.diagnostics)
    return "\n".join(lines)
