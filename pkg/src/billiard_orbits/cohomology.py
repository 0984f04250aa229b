"""Exact arithmetic for the equivariant Betti count of G(S^2, n), n odd.

Poincare polynomials are integer coefficient lists.  The ring H*(G'_A; Z) is
modelled on the additive basis delta_i (degree 4i), delta_i a (4i + 1) and the
2-torsion classes delta_i b (4i + 3), with delta_0 = 1 adjoined as the unit.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

from .errors import DomainError, IdentityError


@dataclass(frozen=True)
class GradedPoly:
    """Polynomial in t with integer coefficients, lowest degree first."""

    coeffs: tuple[int, ...] = ()

    def __post_init__(self):
        c = [int(v) for v in self.coeffs]
        if any(v != w for v, w in zip(c, self.coeffs)):
            raise TypeError("coefficients must be integers")
        while c and c[-1] == 0:
            c.pop()
        object.__setattr__(self, "coeffs", tuple(c))

    @classmethod
    def monomial(cls, degree: int, coeff: int = 1) -> "GradedPoly":
        return cls((0,) * degree + (coeff,))

    @classmethod
    def geometric(cls, count: int, step: int = 1) -> "GradedPoly":
        """1 + t^step + ... + t^(step * (count - 1)); zero when count <= 0."""
        c = [0] * (step * (count - 1) + 1) if count > 0 else []
        for j in range(max(count, 0)):
            c[step * j] = 1
        return cls(tuple(c))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __getitem__(self, k: int) -> int:
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else 0

    def __add__(self, other: "GradedPoly") -> "GradedPoly":
        size = max(len(self.coeffs), len(other.coeffs))
        return GradedPoly(tuple(self[k] + other[k] for k in range(size)))

    def __sub__(self, other: "GradedPoly") -> "GradedPoly":
        size = max(len(self.coeffs), len(other.coeffs))
        return GradedPoly(tuple(self[k] - other[k] for k in range(size)))

    def __mul__(self, other: "GradedPoly") -> "GradedPoly":
        if not self.coeffs or not other.coeffs:
            return GradedPoly()
        out = [0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a:
                for j, b in enumerate(other.coeffs):
                    out[i + j] += a * b
        return GradedPoly(tuple(out))

    def __divmod__(self, divisor: "GradedPoly") -> tuple["GradedPoly", "GradedPoly"]:
        if not divisor.coeffs:
            raise ZeroDivisionError("division by the zero polynomial")
        lead = divisor.coeffs[-1]
        rem = list(self.coeffs)
        quot = [0] * max(len(rem) - len(divisor.coeffs) + 1, 0)
        for k in range(len(quot) - 1, -1, -1):
            top = rem[k + divisor.degree]
            if top % lead:
                raise ArithmeticError("divisor's leading coefficient does not divide; no exact integer quotient")
            q = top // lead
            quot[k] = q
            if q:
                for i, d in enumerate(divisor.coeffs):
                    rem[k + i] -= q * d
        return GradedPoly(tuple(quot)), GradedPoly(tuple(rem))

    def total(self) -> int:
        return sum(self.coeffs)

    def is_palindromic(self) -> bool:
        return self.coeffs == self.coeffs[::-1]

    def __str__(self):
        terms = []
        for k, c in enumerate(self.coeffs):
            if c:
                mono = "1" if k == 0 else ("t" if k == 1 else f"t^{k}")
                terms.append(mono if c == 1 and k else f"{c}" if k == 0 else f"{c}*{mono}")
        return " + ".join(terms) or "0"


ONE_PLUS_T = GradedPoly((1, 1))
SO3_MOD2 = GradedPoly((1, 1, 1, 1))  # H*(SO(3); Z_2) = Z_2[v]/(v^4)


def _require_odd(n: int) -> None:
    if not isinstance(n, int) or n < 3 or n % 2 == 0:
        raise DomainError(f"n must be an odd integer >= 3, got {n!r}")


def equivariant_poincare(n: int) -> GradedPoly:
    """(1 + t^2)(1 + t + ... + t^(n-2)); Betti numbers sum to 2(n - 1)."""
    _require_odd(n)
    p = GradedPoly((1, 0, 1)) * GradedPoly.geometric(n - 1)
    if p.total() != 2 * (n - 1):
        raise IdentityError(f"Betti sum {p.total()} != {2 * (n - 1)} at n={n}")
    return p


def ga_poincare_mod2(n: int) -> GradedPoly:
    """Mod-2 Poincare polynomial of G'_A assembled from the n = 4k+1 / 4k+3 split."""
    _require_odd(n)
    k = n // 4
    free_terms = k + 1 if n % 4 == 3 else k
    p = ONE_PLUS_T * GradedPoly.geometric(free_terms, 4) + GradedPoly((0, 0, 1, 1)) * GradedPoly.geometric(k, 4)
    if p != GradedPoly.geometric(n - 1):
        raise IdentityError(f"case analysis gives {p} instead of 1 + t + ... + t^{n - 2} at n={n}")
    return p


def division_identity_check(n: int) -> bool:
    quot, rem = divmod(SO3_MOD2 * ga_poincare_mod2(n), ONE_PLUS_T)
    if rem.coeffs:
        raise IdentityError(f"nonzero remainder {rem} at n={n}")
    if quot != equivariant_poincare(n):
        raise IdentityError(f"quotient {quot} differs from the equivariant polynomial at n={n}")
    return True


def betti_table(n_max: int) -> list[tuple[int, tuple[int, ...], int, int]]:
    """Rows (n, (b_0, ..., b_n), sum, 2(n-1)) for odd n in [3, n_max]."""
    if n_max < 3:
        raise DomainError("n_max must be at least 3")
    rows = []
    for n in range(3, n_max + 1, 2):
        p = equivariant_poincare(n)
        rows.append((n, tuple(p[k] for k in range(n + 1)), p.total(), 2 * (n - 1)))
    return rows


# -- the ring H*(G'_A; Z) ----------------------------------------------------

FREE_KINDS = ("d", "da")  # delta_i, delta_i a
TORSION_KIND = "db"  # delta_i b, order 2
_DEGREE_OFFSET = {"d": 0, "da": 1, "db": 3}


def delta_bound(n: int) -> int:
    """delta_i vanishes for i >= floor((n+1)/4)."""
    return (n + 1) // 4


def torsion_bound(n: int) -> int:
    """delta_i b vanishes for i >= this; n = 4k+3 adds delta_k b = 0."""
    return n // 4 if n % 4 == 3 else delta_bound(n)


def basis_degree(symbol: tuple[str, int]) -> int:
    kind, i = symbol
    return 4 * i + _DEGREE_OFFSET[kind]


def symbol_name(symbol: tuple[str, int]) -> str:
    kind, i = symbol
    head = "1" if i == 0 else f"δ{i}"
    if kind == "d":
        return head
    tail = "a" if kind == "da" else "b"
    return tail if i == 0 else f"{head}·{tail}"


def _alive(symbol: tuple[str, int], n: int) -> bool:
    kind, i = symbol
    return i < (torsion_bound(n) if kind == TORSION_KIND else delta_bound(n))


def integral_basis(n: int, degree_cap: int | None = None) -> list[tuple[str, int]]:
    _require_odd(n)
    out = [
        (kind, i)
        for i in range(delta_bound(n))
        for kind in ("d", "da", "db")
        if _alive((kind, i), n)
    ]
    if degree_cap is not None:
        out = [s for s in out if basis_degree(s) <= degree_cap]
    return sorted(out, key=lambda s: (basis_degree(s), s))


@dataclass(frozen=True)
class RingElement:
    """Integer combination of delta_i, delta_i a plus a Z_2 combination of delta_i b."""

    n: int
    free: dict = field(default_factory=dict)
    torsion: dict = field(default_factory=dict)

    def __post_init__(self):
        _require_odd(self.n)
        free = {}
        for s, c in self.free.items():
            if s[0] not in FREE_KINDS:
                raise DomainError(f"{s!r} is not a free basis symbol")
            if c and _alive(s, self.n):
                free[s] = int(c)
        torsion = {}
        for s, c in self.torsion.items():
            if s[0] != TORSION_KIND:
                raise DomainError(f"{s!r} is not a torsion basis symbol")
            if int(c) % 2 and _alive(s, self.n):
                torsion[s] = 1
        object.__setattr__(self, "free", dict(sorted(free.items())))
        object.__setattr__(self, "torsion", dict(sorted(torsion.items())))

    @classmethod
    def basis(cls, symbol: tuple[str, int], n: int, coeff: int = 1) -> "RingElement":
        if symbol[0] == TORSION_KIND:
            return cls(n, torsion={symbol: coeff})
        return cls(n, free={symbol: coeff})

    @classmethod
    def one(cls, n: int) -> "RingElement":
        return cls.basis(("d", 0), n)

    def is_zero(self) -> bool:
        return not self.free and not self.torsion

    def __add__(self, other: "RingElement") -> "RingElement":
        _same_n(self, other)
        free = dict(self.free)
        for s, c in other.free.items():
            free[s] = free.get(s, 0) + c
        torsion = dict(self.torsion)
        for s, c in other.torsion.items():
            torsion[s] = torsion.get(s, 0) + c
        return RingElement(self.n, free, torsion)

    def __mul__(self, other: "RingElement") -> "RingElement":
        return ring_mul(self, other, self.n)

    def __str__(self):
        parts = [f"{c}·{symbol_name(s)}" if c != 1 else symbol_name(s) for s, c in self.free.items()]
        parts += [symbol_name(s) for s in self.torsion]
        return " + ".join(parts) or "0"


def _same_n(x: RingElement, y: RingElement) -> None:
    if x.n != y.n:
        raise DomainError(f"operands live in different rings (n={x.n} vs n={y.n})")


def _basis_product(s: tuple[str, int], t: tuple[str, int]) -> tuple[int, tuple[str, int]] | None:
    """Product of two basis symbols as coeff * symbol, before truncation; None for zero."""
    (ks, i), (kt, j) = s, t
    if ks != "d" and kt != "d":
        return None  # a^2 = ab = b^2 = 0
    kind = kt if ks == "d" else ks
    return comb(2 * i + 2 * j, 2 * i), (kind, i + j)


def ring_mul(x: RingElement, y: RingElement, n: int) -> RingElement:
    _same_n(x, y)
    if x.n != n:
        raise DomainError(f"operands belong to n={x.n}, not n={n}")
    free: dict = {}
    torsion: dict = {}
    xs = list(x.free.items()) + list(x.torsion.items())
    ys = list(y.free.items()) + list(y.torsion.items())
    for s, a in xs:
        for t, b in ys:
            prod = _basis_product(s, t)
            if prod is None:
                continue
            c, sym = prod
            target = torsion if sym[0] == TORSION_KIND else free
            target[sym] = target.get(sym, 0) + a * b * c
    return RingElement(n, free, torsion)


def mod2_basis(n: int) -> list[tuple[str, int]]:
    """Additive basis of H*(G'_A; Z_2) as (symbol name, degree) pairs.

    Free classes reduce to one class each; every delta_i b of order 2 yields
    two classes, in degrees 4i + 2 and 4i + 3.
    """
    _require_odd(n)
    out = []
    for s in integral_basis(n):
        name, deg = symbol_name(s), basis_degree(s)
        if s[0] == TORSION_KIND:
            out.append((f"{name}'", deg - 1))
        out.append((name, deg))
    out.sort(key=lambda e: (e[1], e[0]))
    hist = [0] * (max(d for _, d in out) + 1)
    for _, d in out:
        hist[d] += 1
    if GradedPoly(tuple(hist)) != ga_poincare_mod2(n):
        raise IdentityError(f"basis histogram {hist} disagrees with the mod-2 Poincare polynomial at n={n}")
    return out


def ring_consistency_check(n: int, degree_cap: int) -> bool:
    """Associativity, commutativity, unit and torsion checks over the basis up to ``degree_cap``."""
    basis = [RingElement.basis(s, n) for s in integral_basis(n, degree_cap)]
    one = RingElement.one(n)
    for x in basis:
        if one * x != x or x * one != x:
            raise IdentityError(f"unit fails on {x}")
        for y in basis:
            xy = x * y
            if xy != y * x:
                raise IdentityError(f"commutativity fails on ({x}, {y})")
            if any(c % 2 == 0 for c in xy.torsion.values()):
                raise IdentityError(f"torsion coefficient not reduced mod 2 in {x}·{y}")
            for z in basis:
                if xy * z != x * (y * z):
                    raise IdentityError(f"associativity fails on ({x}, {y}, {z})")

    # the binomial identity behind associativity of delta products
    top = degree_cap // 4 + 1
    for i, j, k in itertools.product(range(top), repeat=3):
        left = comb(2 * i + 2 * j, 2 * i) * comb(2 * (i + j) + 2 * k, 2 * (i + j))
        right = comb(2 * j + 2 * k, 2 * j) * comb(2 * i + 2 * (j + k), 2 * i)
        if left != right:
            raise IdentityError(f"binomial identity fails at (i, j, k) = {(i, j, k)}")
    return True
