"""Inscribed n-gons, the perimeter functional and the dihedral action on them.

Calculus is done in chart coordinates: two per vertex, given by the
retraction u <- normalize(u + d1 e~1 + d2 e~2), where e~ are the sphere
vectors mapped onto the orthonormal surface frame.  At d = 0 a chart
coordinate moves the vertex with unit speed along e1 or e2, so the chart
gradient of the perimeter at vertex i is simply (w_i . e1, w_i . e2).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateConfigurationError, DomainError, NumericError
from .surface import SurfaceSpec, geometry, radial

SEPARATION_FLOOR = 1e-7
HESSIAN_STEP = 1e-5


def _dot(a, b):
    return (a * b).sum(axis=-1)


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


class Configuration:
    """A point (x_1, ..., x_n) of the cyclic configuration space G(X, n).

    Stored through the sphere directions u_i with x_i = rho(u_i) u_i.
    Instances are immutable; the group action returns new ones.
    """

    __slots__ = ("spec", "us", "xs")

    def __init__(self, spec: SurfaceSpec, us):
        us = np.array(us, dtype=float)
        if us.ndim != 2 or us.shape[1] != 3 or us.shape[0] < 2:
            raise DomainError(f"expected an (n, 3) array of directions with n >= 2, got shape {us.shape}")
        if not np.all(np.isfinite(us)):
            raise DomainError("non-finite direction")
        us /= np.linalg.norm(us, axis=1, keepdims=True)
        us.flags.writeable = False
        xs = geometry(spec, us).x
        xs.flags.writeable = False
        self.spec, self.us, self.xs = spec, us, xs

    def __setattr__(self, name, value):
        if hasattr(self, "xs"):
            raise AttributeError("Configuration is immutable")
        object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.us.shape[0]

    def __repr__(self):
        return f"Configuration(n={self.n}, surface={self.spec.digest()})"

    def min_separation(self) -> float:
        return float(np.linalg.norm(self.xs - np.roll(self.xs, -1, axis=0), axis=1).min())

    def check(self, floor: float = SEPARATION_FLOOR) -> "Configuration":
        if self.min_separation() <= floor * self.spec.diameter:
            raise DegenerateConfigurationError(
                f"consecutive vertices closer than {floor:g} x diameter"
            )
        return self

    def to_dict(self) -> dict:
        return {"n": self.n, "surface": self.spec.digest(), "us": self.us.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def _permuted(cls, other: "Configuration", perm) -> "Configuration":
        # exact relabelling: no renormalisation, no geometry recomputation
        c = object.__new__(cls)
        us, xs = other.us[perm], other.xs[perm]
        us.flags.writeable = False
        xs.flags.writeable = False
        object.__setattr__(c, "spec", other.spec)
        object.__setattr__(c, "us", us)
        object.__setattr__(c, "xs", xs)
        return c

    @classmethod
    def from_dict(cls, spec: SurfaceSpec, data: dict) -> "Configuration":
        c = cls(spec, data["us"])
        if "n" in data and data["n"] != c.n:
            raise DomainError("stored n disagrees with the number of directions")
        return c


def star_polygon(spec: SurfaceSpec, n: int, k: int = 1, plane: int = 2, phase: float = 0.0) -> Configuration:
    """The star polygon {n/k} in the coordinate plane orthogonal to axis ``plane``."""
    ang = phase + 2 * np.pi * k * np.arange(n) / n
    us = np.zeros((n, 3))
    a, b = [ax for ax in range(3) if ax != plane]
    us[:, a], us[:, b] = np.cos(ang), np.sin(ang)
    return Configuration(spec, us)


# -- perimeter and derivatives (batched over leading axes) -------------------


def perimeter_batch(xs: np.ndarray) -> np.ndarray:
    return np.linalg.norm(xs - np.roll(xs, -1, axis=-2), axis=-1).sum(axis=-1)


def _edge_force(xs: np.ndarray) -> np.ndarray:
    # dL/dx_i = unit(x_i - x_{i-1}) + unit(x_i - x_{i+1})
    return _unit(xs - np.roll(xs, 1, axis=-2)) + _unit(xs - np.roll(xs, -1, axis=-2))


def grad_batch(spec: SurfaceSpec, us: np.ndarray) -> np.ndarray:
    """Chart gradient at d = 0, shape (..., n, 2)."""
    g = geometry(spec, us)
    return _dot(_edge_force(g.x)[..., None, :], g.frame)


def chart_grad_batch(spec: SurfaceSpec, base: np.ndarray, pullback: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Gradient of d -> L(chart(d)) at arbitrary chart coordinates ``delta``."""
    v = base + (delta[..., None] * pullback).sum(axis=-2)
    r = np.linalg.norm(v, axis=-1)
    u = v / r[..., None]
    rho, grad_t = radial(spec, u)
    xs = rho[..., None] * u
    w = _edge_force(xs)
    uu = u[..., None, :]
    du = (pullback - _dot(pullback, uu)[..., None] * uu) / r[..., None, None]
    dx = rho[..., None, None] * du + _dot(grad_t[..., None, :], du)[..., None] * uu
    return _dot(w[..., None, :], dx)


def hessian_batch(spec: SurfaceSpec, us: np.ndarray, step: float = HESSIAN_STEP, pullback=None) -> np.ndarray:
    """Unsymmetrised central-difference Hessian in chart coordinates, (..., 2n, 2n)."""
    if pullback is None:
        pullback = geometry(spec, us).pullback
    n = us.shape[-2]
    lead = us.shape[:-2]
    H = np.empty(lead + (2 * n, 2 * n))
    delta = np.zeros(lead + (n, 2))
    for i in range(n):
        for j in range(2):
            delta[..., i, j] = step
            gp = chart_grad_batch(spec, us, pullback, delta)
            delta[..., i, j] = -step
            gm = chart_grad_batch(spec, us, pullback, delta)
            delta[..., i, j] = 0.0
            H[..., :, 2 * i + j] = ((gp - gm) / (2 * step)).reshape(lead + (2 * n,))
    return H


def perimeter(spec: SurfaceSpec, c: Configuration) -> float:
    c.check()
    return float(perimeter_batch(c.xs))


def grad(spec: SurfaceSpec, c: Configuration) -> np.ndarray:
    """Tangential gradient as a flat array of 2n numbers ordered (vertex, frame axis)."""
    c.check()
    return grad_batch(spec, np.asarray(c.us)).reshape(-1)


def hessian(spec: SurfaceSpec, c: Configuration, step: float = HESSIAN_STEP, symmetrize: bool = True) -> np.ndarray:
    c.check()
    H = hessian_batch(spec, np.asarray(c.us), step)
    return 0.5 * (H + H.T) if symmetrize else H


def reflection_residuals_batch(spec: SurfaceSpec, us: np.ndarray) -> np.ndarray:
    """Per-vertex violation of the reflection law, shape (..., n).

    The maximum of |sin(incidence) - sin(reflection)|, the coplanarity
    determinant det(d_in, d_out, nu), and the tangential part of d_out - d_in.
    """
    g = geometry(spec, us)
    xs, nu = g.x, g.nu
    d_in = _unit(xs - np.roll(xs, 1, axis=-2))
    d_out = _unit(np.roll(xs, -1, axis=-2) - xs)
    sin_in = np.linalg.norm(np.cross(d_in, nu), axis=-1)
    sin_out = np.linalg.norm(np.cross(d_out, nu), axis=-1)
    coplanar = np.abs(_dot(np.cross(d_in, d_out), nu))
    turn = d_out - d_in
    tangential = np.linalg.norm(turn - _dot(turn, nu)[..., None] * nu, axis=-1)
    return np.maximum.reduce([np.abs(sin_in - sin_out), coplanar, tangential])


def reflection_residuals(spec: SurfaceSpec, c: Configuration) -> np.ndarray:
    return reflection_residuals_batch(spec, np.asarray(c.us))


# -- dihedral group ----------------------------------------------------------


@dataclass(frozen=True)
class DihedralElement:
    """Rotation i -> i + k or reflection i -> k - i of vertex labels (mod n).

    Reflection with k = 0 is the involution (x_1, x_2, ..., x_n) -> (x_1, x_n, ..., x_2).
    """

    kind: str
    k: int
    n: int

    def __post_init__(self):
        if self.kind not in ("rotation", "reflection"):
            raise DomainError(f"unknown dihedral element kind {self.kind!r}")
        if self.n < 1:
            raise DomainError("n must be positive")
        object.__setattr__(self, "k", self.k % self.n)

    @cached_property
    def perm(self) -> np.ndarray:
        i = np.arange(self.n)
        if self.kind == "rotation":
            return (i + self.k) % self.n
        return (self.k - i) % self.n

    def __mul__(self, other: "DihedralElement") -> "DihedralElement":
        """``g * h`` acts as h first, then g: act(g * h, c) == act(g, act(h, c))."""
        if other.n != self.n:
            raise DomainError("cannot compose elements of different dihedral groups")
        return from_perm(other.perm[self.perm])


def identity(n: int) -> DihedralElement:
    return DihedralElement("rotation", 0, n)


def dihedral_group(n: int) -> list[DihedralElement]:
    return [DihedralElement("rotation", k, n) for k in range(n)] + [
        DihedralElement("reflection", k, n) for k in range(n)
    ]


def from_perm(perm) -> DihedralElement:
    perm = np.asarray(perm)
    n = len(perm)
    k = int(perm[0])
    for kind in ("rotation", "reflection"):
        g = DihedralElement(kind, k, n)
        if np.array_equal(g.perm, perm):
            return g
    raise DomainError(f"{perm.tolist()} is not a dihedral permutation")


def _perms(n: int) -> np.ndarray:
    return np.array([g.perm for g in dihedral_group(n)])


def act(g: DihedralElement, c: Configuration) -> Configuration:
    if g.n != c.n:
        raise DomainError(f"element of D_{g.n} cannot act on {c.n}-gons")
    return Configuration._permuted(c, g.perm)


def orbit_distance(c1: Configuration, c2: Configuration) -> float:
    """min over g of max_i |x_i(g c1) - x_i(c2)|."""
    if c1.n != c2.n:
        raise DomainError(f"cannot compare {c1.n}-gons with {c2.n}-gons")
    moved = c1.xs[_perms(c1.n)]
    return float(np.linalg.norm(moved - c2.xs, axis=-1).max(axis=-1).min())


def stabilizer_size(c: Configuration, tol: float = 1e-9) -> int:
    moved = c.xs[_perms(c.n)]
    size = int((np.linalg.norm(moved - c.xs, axis=-1).max(axis=-1) <= tol).sum())
    if (2 * c.n) % size:
        raise NumericError(f"stabilizer size {size} does not divide {2 * c.n}; tolerance {tol:g} is ambiguous")
    return size
