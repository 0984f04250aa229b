"""Smooth strictly convex surfaces given as radial graphs x = rho(u) u over S^2.

Two families are supported: ellipsoids (optionally with a small harmonic
perturbation of the radial function) and harmonically perturbed spheres.
Every routine here works on arrays of unit directions of shape (..., 3) so the
solver can evaluate thousands of polygons at once.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import harmonics
from .errors import DomainError, InvalidSpecError, NotStrictlyConvexError, NumericError

ELLIPSOID = "ellipsoid"
RADIAL_HARMONIC = "radial_harmonic"
_KIND_ALIASES = {"ellipsoid": ELLIPSOID, "radial_harmonic": RADIAL_HARMONIC, "radial-harmonic": RADIAL_HARMONIC}

AMPLITUDE_BUDGET = 0.5
FD_RELATIVE_STEP = 1e-5


@dataclass(frozen=True)
class SurfaceSpec:
    kind: str
    semi_axes: tuple[float, float, float] | None = None
    base_radius: float | None = None
    radial_coeffs: tuple[tuple[int, int, float], ...] = ()
    convexity_margin: float | None = field(default=None, compare=False)

    def __post_init__(self):
        kind = _KIND_ALIASES.get(self.kind)
        if kind is None:
            raise InvalidSpecError(f"unknown surface kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)

        if kind == ELLIPSOID:
            if self.semi_axes is None or len(self.semi_axes) != 3:
                raise InvalidSpecError("ellipsoid needs three semi-axes")
            axes = tuple(float(a) for a in self.semi_axes)
            if not all(math.isfinite(a) for a in axes):
                raise InvalidSpecError("non-finite semi-axis")
            if min(axes) <= 0:
                raise InvalidSpecError(f"semi-axes must be positive, got {axes}")
            object.__setattr__(self, "semi_axes", axes)
            scale = min(axes)
        else:
            if self.base_radius is None:
                raise InvalidSpecError("radial_harmonic needs base_radius")
            r = float(self.base_radius)
            if not math.isfinite(r) or r <= 0:
                raise InvalidSpecError(f"base radius must be positive and finite, got {r}")
            object.__setattr__(self, "base_radius", r)
            scale = r

        coeffs = []
        for term in self.radial_coeffs:
            if len(term) != 3:
                raise InvalidSpecError(f"harmonic term must be (degree, order, amplitude), got {term!r}")
            l, m, amp = int(term[0]), int(term[1]), float(term[2])
            if l != term[0] or m != term[1] or l < 0 or abs(m) > l:
                raise InvalidSpecError(f"invalid harmonic index (l={term[0]}, m={term[1]})")
            if not math.isfinite(amp):
                raise InvalidSpecError("non-finite harmonic amplitude")
            coeffs.append((l, m, amp))
        object.__setattr__(self, "radial_coeffs", tuple(coeffs))
        if sum(abs(c[2]) for c in coeffs) >= AMPLITUDE_BUDGET * scale:
            raise InvalidSpecError("harmonic amplitudes exceed the positivity budget")

    @classmethod
    def ellipsoid(cls, a: float, b: float, c: float, coeffs=()) -> "SurfaceSpec":
        return cls(ELLIPSOID, semi_axes=(a, b, c), radial_coeffs=tuple(tuple(t) for t in coeffs))

    @classmethod
    def sphere(cls, radius: float = 1.0) -> "SurfaceSpec":
        return cls(RADIAL_HARMONIC, base_radius=radius)

    @classmethod
    def radial_harmonic(cls, base_radius: float, coeffs) -> "SurfaceSpec":
        return cls(RADIAL_HARMONIC, base_radius=base_radius, radial_coeffs=tuple(tuple(t) for t in coeffs))

    @classmethod
    def from_dict(cls, data: dict) -> "SurfaceSpec":
        if not isinstance(data, dict) or "kind" not in data:
            raise InvalidSpecError("surface must be an object with a 'kind' field")
        kind = _KIND_ALIASES.get(data["kind"])
        try:
            coeffs = tuple(tuple(t) for t in data.get("coeffs", ()))
            if kind == ELLIPSOID:
                return cls(ELLIPSOID, semi_axes=tuple(data["axes"]), radial_coeffs=coeffs)
            if kind == RADIAL_HARMONIC:
                return cls(RADIAL_HARMONIC, base_radius=data["base_radius"], radial_coeffs=coeffs)
        except (KeyError, TypeError) as exc:
            raise InvalidSpecError(f"malformed surface entry: {exc}") from exc
        raise InvalidSpecError(f"unknown surface kind {data['kind']!r}")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == ELLIPSOID:
            out["axes"] = list(self.semi_axes)
        else:
            out["base_radius"] = self.base_radius
        if self.radial_coeffs or self.kind == RADIAL_HARMONIC:
            out["coeffs"] = [list(t) for t in self.radial_coeffs]
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def is_pure_ellipsoid(self) -> bool:
        return self.kind == ELLIPSOID and not self.radial_coeffs

    @property
    def diameter(self) -> float:
        """Bounding diameter 2 * max(rho); exact for unperturbed bodies."""
        base = max(self.semi_axes) if self.kind == ELLIPSOID else self.base_radius
        return 2.0 * (base + sum(abs(c[2]) for c in self.radial_coeffs))


@dataclass(frozen=True, eq=False)
class SurfacePoint:
    u: np.ndarray
    x: np.ndarray
    nu: np.ndarray
    frame: tuple[np.ndarray, np.ndarray]


class Geometry(NamedTuple):
    """Batched surface data at directions u; tangent frames are (..., 2, 3)."""

    rho: np.ndarray
    x: np.ndarray
    nu: np.ndarray
    frame: np.ndarray
    pullback: np.ndarray


def _dot(a, b):
    return (a * b).sum(axis=-1)


def _normalize(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def radial(spec: SurfaceSpec, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """rho(u) and its tangential gradient on the unit sphere."""
    if spec.kind == ELLIPSOID:
        inv2 = 1.0 / np.square(spec.semi_axes)
        q = _dot(u * u, inv2)
        rho = q ** -0.5
        cart = -(q ** -1.5)[..., None] * (u * inv2)
    else:
        rho = np.full(u.shape[:-1], spec.base_radius)
        cart = np.zeros(u.shape)
    if spec.radial_coeffs:
        val, g = harmonics.evaluate_sum(harmonics.compile_sum(spec.radial_coeffs), u)
        rho = rho + val
        cart = cart + g
    tangential = cart - _dot(cart, u)[..., None] * u
    return rho, tangential


def _frame_from_normal(nu: np.ndarray) -> np.ndarray:
    # seed with the global axis least aligned with nu (first index wins ties)
    axis = np.argmin(np.abs(nu), axis=-1)
    seed = np.zeros(nu.shape)
    np.put_along_axis(seed, axis[..., None], 1.0, axis=-1)
    e1 = _normalize(seed - _dot(seed, nu)[..., None] * nu)
    e2 = np.cross(nu, e1)
    return np.stack([e1, e2], axis=-2)


def geometry(spec: SurfaceSpec, u: np.ndarray) -> Geometry:
    u = np.asarray(u, dtype=float)
    rho, grad_t = radial(spec, u)
    x = rho[..., None] * u
    if spec.is_pure_ellipsoid:
        nu = _normalize(x / np.square(spec.semi_axes))
    else:
        nu = _normalize(u - grad_t / rho[..., None])
    frame = _frame_from_normal(nu)
    # sphere-parameter vectors whose image under dx/du is exactly the frame
    uu = u[..., None, :]
    pullback = (frame - _dot(frame, uu)[..., None] * uu) / rho[..., None, None]
    return Geometry(rho, x, nu, frame, pullback)


def point_at(spec: SurfaceSpec, u) -> SurfacePoint:
    u = np.asarray(u, dtype=float)
    if u.shape != (3,) or not np.all(np.isfinite(u)):
        raise DomainError(f"direction must be a finite 3-vector, got {u!r}")
    norm = np.linalg.norm(u)
    if abs(norm - 1.0) > 1e-9:
        raise DomainError(f"direction is not unit length (|u| = {norm})")
    u = u / norm
    g = geometry(spec, u)
    return SurfacePoint(u=u, x=g.x, nu=g.nu, frame=(g.frame[0], g.frame[1]))


def level(spec: SurfaceSpec, p: np.ndarray) -> np.ndarray:
    """Zero on the surface, negative inside, positive outside.

    Pure ellipsoids use the implicit form sum p_i^2 / a_i^2 - 1; other bodies
    use the radial residual |p| / rho(p / |p|) - 1.
    """
    p = np.asarray(p, dtype=float)
    if spec.is_pure_ellipsoid:
        return _dot(p * p, 1.0 / np.square(spec.semi_axes)) - 1.0
    r = np.linalg.norm(p, axis=-1)
    safe = np.where(r > 0, r, 1.0)
    rho, _ = radial(spec, p / safe[..., None])
    return np.where(r > 0, r / rho - 1.0, -1.0)


def sphere_sample(count: int) -> np.ndarray:
    """Fibonacci lattice of ``count`` quasi-uniform unit vectors."""
    k = np.arange(count) + 0.5
    z = 1.0 - 2.0 * k / count
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k
    s = np.sqrt(1.0 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)


def retract(u: np.ndarray, pullback: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Chart map u <- normalize(u + delta_1 e~1 + delta_2 e~2)."""
    return _normalize(u + (delta[..., :, None] * pullback).sum(axis=-2))


def curvature_proxy(spec: SurfaceSpec, u: np.ndarray, step: float | None = None) -> np.ndarray:
    """Smallest shape-operator eigenvalue from second differences of x in the chart."""
    u = _normalize(np.asarray(u, dtype=float))
    h = FD_RELATIVE_STEP * spec.diameter if step is None else step
    g = geometry(spec, u)

    def x_at(d1, d2):
        d = np.zeros(u.shape[:-1] + (2,))
        d[..., 0], d[..., 1] = d1, d2
        return geometry(spec, retract(u, g.pullback, d)).x

    x0 = g.x
    xp0, xm0, x0p, x0m = x_at(h, 0), x_at(-h, 0), x_at(0, h), x_at(0, -h)
    xpp, xpm, xmp, xmm = x_at(h, h), x_at(h, -h), x_at(-h, h), x_at(-h, -h)

    first = np.stack([(xp0 - xm0) / (2 * h), (x0p - x0m) / (2 * h)], axis=-2)
    x11 = (xp0 - 2 * x0 + xm0) / h**2
    x22 = (x0p - 2 * x0 + x0m) / h**2
    x12 = (xpp - xpm - xmp + xmm) / (4 * h**2)

    nu = g.nu
    second = -np.stack(
        [np.stack([_dot(x11, nu), _dot(x12, nu)], -1), np.stack([_dot(x12, nu), _dot(x22, nu)], -1)], -2
    )
    metric = first @ np.swapaxes(first, -1, -2)
    shape = np.linalg.solve(metric, second)
    return np.linalg.eigvals(shape).real.min(axis=-1)


def convexity_check(spec: SurfaceSpec, sample_count: int = 2000, step: float | None = None) -> float:
    if sample_count < 100:
        raise DomainError("convexity_check needs at least 100 samples")
    margin = float(curvature_proxy(spec, sphere_sample(sample_count), step).min())
    if not margin > 0:
        raise NotStrictlyConvexError(f"curvature proxy reaches {margin:.3e}; surface is not strictly convex")
    return margin


def validate(spec: SurfaceSpec, sample_count: int = 2000) -> SurfaceSpec:
    """Return ``spec`` with convexity_margin filled in, or raise."""
    return replace(spec, convexity_margin=convexity_check(spec, sample_count))


MARCH_STEPS = 64
MARCH_FRACTION = 1 / 16


def _safeguarded_root(f, lo, hi, flo, fhi, max_iter: int = 200):
    """Illinois regula falsi on brackets f(lo) < 0 < f(hi), batched; every fourth step bisects."""
    lo, hi, flo, fhi = lo.copy(), hi.copy(), flo.copy(), fhi.copy()
    side = np.zeros(lo.shape, dtype=int)
    eps = np.finfo(float).eps
    live = np.ones(lo.shape, dtype=bool)
    for it in range(max_iter):
        live &= (hi - lo) > 4 * eps * np.maximum(hi, 1.0)
        idx = np.flatnonzero(live)
        if idx.size == 0:
            break
        a, b, fa, fb = lo[idx], hi[idx], flo[idx], fhi[idx]
        c = (a * fb - b * fa) / (fb - fa)
        if it % 4 == 3:
            c = 0.5 * (a + b)
        c = np.where((c > a) & (c < b), c, 0.5 * (a + b))
        fc = f(idx, c)

        neg = fc < 0
        i_lo, i_hi = idx[neg], idx[fc > 0]
        # Illinois: halve the retained endpoint's value when the same side moves twice
        fhi[i_lo[side[i_lo] == -1]] *= 0.5
        flo[i_hi[side[i_hi] == 1]] *= 0.5
        lo[i_lo], flo[i_lo], side[i_lo] = c[neg], fc[neg], -1
        hi[i_hi], fhi[i_hi], side[i_hi] = c[fc > 0], fc[fc > 0], 1
        exact = idx[fc == 0]
        lo[exact] = hi[exact] = c[fc == 0]
        live[exact] = False
    else:
        if live.any():
            raise NumericError("root refinement did not converge")
    return np.where(np.abs(flo) <= np.abs(fhi), lo, hi)


def chord_exit_batch(spec: SurfaceSpec, origins: np.ndarray, dirs: np.ndarray, on_boundary: bool) -> np.ndarray:
    """Exit parameters t > 0 of the rays origin + t dir, shape (B,).

    Marches outward in steps of diameter / 16 to bracket the crossing, then
    refines with a safeguarded root finder on the level function.  For
    origins on the surface the inner end of the bracket is found by halving
    toward the start, which resolves short chords.
    """
    origins = np.asarray(origins, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    h = spec.diameter * MARCH_FRACTION
    ts = h * np.arange(1, MARCH_STEPS + 1)
    grid = level(spec, origins[:, None, :] + ts[None, :, None] * dirs[:, None, :])
    outside = grid > 0
    if not outside.any(axis=1).all():
        raise NumericError("could not bracket the boundary crossing")
    rows = np.arange(len(origins))
    k = outside.argmax(axis=1)
    hi, fhi = ts[k], grid[rows, k]
    lo = np.where(k > 0, ts[k - 1], 0.0)
    flo = np.where(k > 0, grid[rows, k - 1], level(spec, origins))

    shrink = np.flatnonzero(~(flo < 0) | ((k == 0) & on_boundary))
    if shrink.size:
        fracs = 0.5 ** np.arange(1, 61)
        cand = hi[shrink, None] * fracs[None, :]
        vals = level(spec, origins[shrink, None, :] + cand[..., None] * dirs[shrink, None, :])
        inside = vals < 0
        if not inside.any(axis=1).all():
            raise NumericError("chord is too short to resolve")
        j = inside.argmax(axis=1)
        r = np.arange(shrink.size)
        lo[shrink], flo[shrink] = cand[r, j], vals[r, j]
        # the crossing lies between the inside point and the next sample out
        hi[shrink] = np.where(j > 0, cand[r, np.maximum(j - 1, 0)], hi[shrink])
        fhi[shrink] = np.where(j > 0, vals[r, np.maximum(j - 1, 0)], fhi[shrink])
        bad = fhi[shrink] <= 0
        hi[shrink[bad]], fhi[shrink[bad]] = ts[k[shrink[bad]]], grid[shrink[bad], k[shrink[bad]]]

    def f(idx, t):
        return level(spec, origins[idx] + t[:, None] * dirs[idx])

    return _safeguarded_root(f, lo, hi, flo, fhi)


def ray_exit(spec: SurfaceSpec, origin, direction) -> SurfacePoint:
    """First boundary point hit by the ray origin + t dir, t > 0, from an interior origin."""
    origin = np.asarray(origin, dtype=float)
    direction = _unit_direction(direction)
    if float(level(spec, origin)) > -1e-9:
        raise DomainError("ray origin must lie strictly inside the body")
    t = chord_exit_batch(spec, origin[None], direction[None], on_boundary=False)[0]
    return _project_hit(spec, origin + t * direction)


def chord_exit(spec: SurfaceSpec, start, direction) -> SurfacePoint:
    """Other endpoint of the chord leaving the boundary point ``start`` along ``direction``."""
    start = np.asarray(start, dtype=float)
    direction = _unit_direction(direction)
    t = chord_exit_batch(spec, start[None], direction[None], on_boundary=True)[0]
    return _project_hit(spec, start + t * direction)


def _unit_direction(direction) -> np.ndarray:
    d = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(d)
    if not np.isfinite(norm) or abs(norm - 1.0) > 1e-9:
        raise DomainError(f"direction is not unit length (|d| = {norm})")
    return d / norm


def _project_hit(spec: SurfaceSpec, p: np.ndarray) -> SurfacePoint:
    # keep the root-found position; attach normal and frame from its direction
    u = p / np.linalg.norm(p)
    g = geometry(spec, u)
    return SurfacePoint(u=u, x=p, nu=g.nu, frame=(g.frame[0], g.frame[1]))
