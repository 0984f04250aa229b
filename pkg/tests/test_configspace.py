import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from billiard_orbits.configspace import (
    Configuration,
    DihedralElement,
    act,
    dihedral_group,
    grad,
    hessian,
    identity,
    orbit_distance,
    perimeter,
    reflection_residuals,
    stabilizer_size,
    star_polygon,
)
from billiard_orbits.errors import DegenerateConfigurationError, DomainError
from billiard_orbits.solver import morse_index
from billiard_orbits.surface import SurfaceSpec, geometry, retract
from surfaces import PERTURBED, PURE, SPHERE


def random_config(spec, n, rng):
    while True:
        c = Configuration(spec, rng.normal(size=(n, 3)))
        if c.min_separation() > 0.05:
            return c


def random_spec(rng):
    axes = rng.uniform(0.8, 1.6, size=3)
    if rng.random() < 0.5:
        return SurfaceSpec.ellipsoid(*axes)
    terms = [(int(l), int(rng.integers(-l, l + 1)), float(rng.uniform(-0.02, 0.02))) for l in rng.integers(2, 6, size=3)]
    return SurfaceSpec.ellipsoid(*axes, coeffs=terms)


def fd_chart_gradient(spec, c, h=1e-6):
    """Central differences of the perimeter along each vertex's frame directions."""
    us = np.array(c.us)
    g = geometry(spec, us)
    out = np.zeros((c.n, 2))
    for i in range(c.n):
        for j in range(2):
            vals = []
            for s in (h, -h):
                moved = us.copy()
                delta = np.zeros(2)
                delta[j] = s
                moved[i] = retract(us[i], g.pullback[i], delta)
                xs = Configuration(spec, moved).xs
                vals.append(np.linalg.norm(xs - np.roll(xs, -1, axis=0), axis=1).sum())
            out[i, j] = (vals[0] - vals[1]) / (2 * h)
    return out.reshape(-1)


# -- perimeter ---------------------------------------------------------------


def test_perimeter_examples():
    assert perimeter(SPHERE, star_polygon(SPHERE, 3)) == pytest.approx(3 * math.sqrt(3), abs=1e-12)
    assert perimeter(SPHERE, star_polygon(SPHERE, 5, 2)) == pytest.approx(10 * math.sin(math.radians(72)), abs=1e-12)


def test_perimeter_extended_precision(rng):
    mpmath.mp.dps = 40
    for _ in range(20):
        c = random_config(PURE, int(rng.integers(3, 9)), rng)
        xs = [[mpmath.mpf(float(v)) for v in x] for x in c.xs]
        ref = sum(
            mpmath.sqrt(sum((xs[i][k] - xs[(i + 1) % c.n][k]) ** 2 for k in range(3))) for i in range(c.n)
        )
        assert abs(perimeter(PURE, c) - float(ref)) <= 1e-12


def test_separation_violation():
    us = np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]])
    with pytest.raises(DegenerateConfigurationError):
        perimeter(SPHERE, Configuration(SPHERE, us))


def test_configuration_is_immutable_and_serialisable():
    c = star_polygon(PURE, 5, 2)
    with pytest.raises(AttributeError):
        c.us = None
    with pytest.raises(ValueError):
        c.us[0, 0] = 1.0
    again = Configuration.from_dict(PURE, c.to_dict())
    assert np.array_equal(again.us, c.us)


# -- gradient and Hessian ----------------------------------------------------


@pytest.mark.parametrize("n", range(3, 9))
def test_gradient_vanishes_on_regular_polygon(n):
    assert np.abs(grad(SPHERE, star_polygon(SPHERE, n))).max() <= 1e-10


def test_gradient_matches_finite_differences(rng):
    worst = 0.0
    for _ in range(100):
        spec = random_spec(rng)
        c = random_config(spec, int(rng.integers(3, 9)), rng)
        g, ref = grad(spec, c), fd_chart_gradient(spec, c)
        worst = max(worst, np.linalg.norm(g - ref) / np.linalg.norm(ref))
    assert worst <= 1e-6


def test_sphere_triangle_hessian_is_degenerate():
    H = hessian(SPHERE, star_polygon(SPHERE, 3))
    lam = np.linalg.eigvalsh(H)
    assert np.abs(lam).min() <= 1e-6 * np.abs(lam).max()
    assert morse_index(H)[1] >= 1


def test_hessian_nearly_symmetric(rng):
    for _ in range(10):
        c = random_config(PERTURBED, 5, rng)
        H = hessian(PERTURBED, c, symmetrize=False)
        assert np.abs(H - H.T).max() <= 1e-4 * np.abs(H).max()


def test_hessian_matches_perimeter_second_differences(rng):
    c = random_config(PERTURBED, 4, rng)
    H = hessian(PERTURBED, c)
    us = np.array(c.us)
    pull = geometry(PERTURBED, us).pullback
    h = 1e-4

    def L(delta):
        moved = retract(us, pull, delta.reshape(c.n, 2))
        xs = Configuration(PERTURBED, moved).xs
        return np.linalg.norm(xs - np.roll(xs, -1, axis=0), axis=1).sum()

    E = np.eye(2 * c.n) * h
    ref = np.array(
        [[(L(E[k] + E[l]) - L(E[k] - E[l]) - L(E[l] - E[k]) + L(-E[k] - E[l])) / (4 * h * h) for l in range(2 * c.n)] for k in range(2 * c.n)]
    )
    assert np.abs(H - ref).max() <= 1e-5 * np.abs(ref).max()


# -- dihedral action -----------------------------------------------------------


def labelled(n):
    return Configuration(SPHERE, np.array([[math.cos(t), math.sin(t), 0.3 * k] for k, t in enumerate(np.linspace(0, 5, n))]))


def test_identity_and_reflection_examples():
    c = labelled(5)
    assert np.array_equal(act(identity(5), c).us, c.us)
    T = DihedralElement("reflection", 0, 5)
    assert np.array_equal(act(T, c).us, c.us[[0, 4, 3, 2, 1]])


def test_rotation_example():
    n = 6
    c = labelled(n)
    r = DihedralElement("rotation", 1, n)
    assert np.array_equal(act(r, c).us, c.us[[1, 2, 3, 4, 5, 0]])
    moved = c
    for _ in range(n):
        moved = act(r, moved)
    assert np.array_equal(moved.us, c.us)


@pytest.mark.parametrize("n", [3, 4, 5, 7])
def test_group_structure(n):
    group = dihedral_group(n)
    assert len({(g.kind, g.k) for g in group}) == 2 * n
    c = labelled(n)
    for g in group:
        assert any(np.array_equal((g * h).perm, identity(n).perm) for h in group)
        for h in group:
            assert g * h in group
            assert np.array_equal(act(g * h, c).us, act(g, act(h, c)).us)


def test_act_rejects_wrong_size():
    with pytest.raises(DomainError):
        act(identity(4), labelled(5))


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 9), st.integers(0, 2**32 - 1))
def test_perimeter_and_gradient_norm_invariant(n, seed):
    rng = np.random.default_rng(seed)
    c = random_config(PERTURBED, n, rng)
    L, gn = perimeter(PERTURBED, c), np.linalg.norm(grad(PERTURBED, c))
    for g in dihedral_group(n):
        moved = act(g, c)
        assert perimeter(PERTURBED, moved) == pytest.approx(L, abs=1e-12)
        assert np.linalg.norm(grad(PERTURBED, moved)) == pytest.approx(gn, abs=1e-12)
        assert orbit_distance(moved, c) <= 1e-12


# -- orbit distance and stabilizers ----------------------------------------------


def test_orbit_distance_orthogonal_triangles():
    a = star_polygon(SPHERE, 3, plane=2)
    b = star_polygon(SPHERE, 3, plane=0)
    assert orbit_distance(a, b) >= math.sqrt(2) - 1e-12


def test_orbit_distance_perturbed_copy(rng):
    c = random_config(PURE, 5, rng)
    for g in dihedral_group(5):
        moved = act(g, c)
        noisy = Configuration(PURE, moved.us + 1e-3 * rng.uniform(-1, 1, size=(5, 3)) / math.sqrt(3))
        assert orbit_distance(c, noisy) <= 2e-3


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_orbit_distance_is_pseudometric(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_config(PURE, 5, rng) for _ in range(3))
    assert orbit_distance(a, b) == pytest.approx(orbit_distance(b, a), abs=1e-15)
    assert orbit_distance(a, c) <= orbit_distance(a, b) + orbit_distance(b, c) + 1e-15


def test_orbit_distance_mismatched_n():
    with pytest.raises(DomainError):
        orbit_distance(labelled(4), labelled(5))


def test_stabilizer_generic_and_prime(rng):
    for n in (3, 5, 7, 6):
        assert stabilizer_size(random_config(PURE, n, rng)) == 1


def test_stabilizer_regular_polygon_is_free():
    # relabelling distinct points always moves the tuple
    assert stabilizer_size(star_polygon(SPHERE, 5)) == 1


def test_stabilizer_doubled_triangle():
    # {6/2} visits a triangle twice; rotation by 3 fixes it
    c = star_polygon(SPHERE, 6, 2)
    assert stabilizer_size(c) == 2
    assert stabilizer_size(star_polygon(SPHERE, 4, 2, phase=0.3)) in (2, 4, 8)


# -- reflection law --------------------------------------------------------------


def test_reflection_residual_zero_on_regular_polygon():
    assert reflection_residuals(SPHERE, star_polygon(SPHERE, 5, 2)).max() <= 1e-12


def test_reflection_residual_positive_off_critical(rng):
    assert reflection_residuals(PURE, random_config(PURE, 5, rng)).max() > 1e-3
