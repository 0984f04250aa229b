"""Real spherical harmonics as homogeneous harmonic polynomials in (x, y, z).

Storing each harmonic as a polynomial makes both the value and the exact
Cartesian gradient cheap to evaluate on batches of unit vectors.  The
normalisation is the Racah one (|Y| <= 1 on the sphere); order m > 0 selects
the cosine-type harmonic, m < 0 the sine-type one.
"""
from __future__ import annotations

from functools import lru_cache
from math import comb, cos, factorial, pi, sin, sqrt

import numpy as np

Monomials = dict[tuple[int, int, int], float]


def _add(poly: Monomials, key: tuple[int, int, int], value: float) -> None:
    poly[key] = poly.get(key, 0.0) + value


def _r2_power(k: int) -> Monomials:
    # (x^2 + y^2 + z^2)^k by the multinomial theorem
    out: Monomials = {}
    for i in range(k + 1):
        for j in range(k + 1 - i):
            m = k - i - j
            coef = factorial(k) / (factorial(i) * factorial(j) * factorial(m))
            _add(out, (2 * i, 2 * j, 2 * m), coef)
    return out


@lru_cache(maxsize=None)
def solid_harmonic(degree: int, order: int) -> tuple[tuple[tuple[int, int, int], float], ...]:
    """Monomial expansion of the real solid harmonic r^l Y_lm."""
    l, m = degree, abs(order)
    if l < 0 or m > l:
        raise ValueError(f"invalid harmonic (l={degree}, m={order})")

    norm = sqrt(factorial(l - m) / factorial(l + m))
    zpart: Monomials = {}
    for k in range((l - m) // 2 + 1):
        c = ((-1) ** k) * 2.0 ** (-l) * comb(l, k) * comb(2 * l - 2 * k, l)
        c *= factorial(l - 2 * k) / factorial(l - 2 * k - m)
        for (px, py, pz), rc in _r2_power(k).items():
            _add(zpart, (px, py, pz + l - 2 * k - m), norm * c * rc)

    xypart: Monomials = {}
    phase = cos if order >= 0 else sin
    for p in range(m + 1):
        c = comb(m, p) * phase((m - p) * pi / 2)
        if abs(c) > 1e-12:
            _add(xypart, (p, m - p, 0), round(c))

    out: Monomials = {}
    for (a1, b1, c1), v1 in zpart.items():
        for (a2, b2, c2), v2 in xypart.items():
            _add(out, (a1 + a2, b1 + b2, c1 + c2), v1 * v2)
    return tuple(sorted((k, v) for k, v in out.items() if v != 0.0))


def evaluate(degree: int, order: int, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value and Cartesian gradient of the solid harmonic at points ``u`` (..., 3)."""
    terms = solid_harmonic(degree, order)
    top = degree + 1
    pw = [np.ones(u.shape[:-1] + (top,)) for _ in range(3)]
    for axis in range(3):
        for p in range(1, top):
            pw[axis][..., p] = pw[axis][..., p - 1] * u[..., axis]

    val = np.zeros(u.shape[:-1])
    grad = np.zeros(u.shape)
    for (a, b, c), coef in terms:
        px, py, pz = pw[0][..., a], pw[1][..., b], pw[2][..., c]
        val += coef * px * py * pz
        if a:
            grad[..., 0] += coef * a * pw[0][..., a - 1] * py * pz
        if b:
            grad[..., 1] += coef * b * px * pw[1][..., b - 1] * pz
        if c:
            grad[..., 2] += coef * c * px * py * pw[2][..., c - 1]
    return val, grad


@lru_cache(maxsize=64)
def compile_sum(coeffs: tuple[tuple[int, int, float], ...]) -> tuple[np.ndarray, np.ndarray]:
    """Merge sum(amp * Y_lm) into one monomial table (exponents (T, 3), coefficients (T,))."""
    merged: Monomials = {}
    for l, m, amp in coeffs:
        for key, c in solid_harmonic(l, m):
            _add(merged, key, amp * c)
    keys = sorted(k for k, v in merged.items() if v != 0.0)
    if not keys:
        return np.zeros((0, 3), dtype=int), np.zeros(0)
    return np.array(keys, dtype=int), np.array([merged[k] for k in keys])


def evaluate_sum(compiled: tuple[np.ndarray, np.ndarray], u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value and Cartesian gradient of a compiled harmonic sum at ``u`` (..., 3)."""
    exps, coef = compiled
    if coef.size == 0:
        return np.zeros(u.shape[:-1]), np.zeros(u.shape)
    top = int(exps.max()) + 1
    pw = np.empty(u.shape + (top,))
    pw[..., 0] = 1.0
    for p in range(1, top):
        pw[..., p] = pw[..., p - 1] * u
    terms = [pw[..., axis, :][..., exps[:, axis]] for axis in range(3)]
    lower = [pw[..., axis, :][..., np.maximum(exps[:, axis] - 1, 0)] * exps[:, axis] for axis in range(3)]
    # elementwise sums, not BLAS, so results do not depend on the batch shape
    val = (terms[0] * terms[1] * terms[2] * coef).sum(axis=-1)
    grad = np.stack(
        [
            (lower[0] * terms[1] * terms[2] * coef).sum(axis=-1),
            (terms[0] * lower[1] * terms[2] * coef).sum(axis=-1),
            (terms[0] * terms[1] * lower[2] * coef).sum(axis=-1),
        ],
        axis=-1,
    )
    return val, grad
