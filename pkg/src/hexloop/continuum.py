"""Closed-form continuum kernels and Ising-CFT correlation functions.

Everything is built from holomorphic solutions of Riemann boundary value
problems in a simply connected domain, expressed through a uniformizing map
phi onto the upper half-plane H:

    f(a, z)    = (phi'(a) phi'(z))^(1/2) / (phi(z) - phi(a))
    fdag(a, z) = (conj(phi'(a)) phi'(z))^(1/2) / (phi(z) - conj(phi(a)))

with one-point functions <T> = S(phi)/24, <eps> = |phi'|/(2 Im phi),
<sigma> = (2|phi'|)^(1/8) (Im phi)^(-1/8), and the two-point combinations

    <T T'>  = <T><T'> + (1/4)(df da' f - f d da' f)
    <T eps> = <T><eps> + (i/2)(f d fdag - fdag d f)

Square roots of phi' are taken as a continuous branch continued from a base
point, never principal-branch pointwise.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from .errors import (BranchInconsistency, CoincidentPoints, CriticalPoint,
                     RingTooLarge, WNearBoundaryPoint)

__all__ = [
    "ConformalMap", "mobius", "identity_map", "exp_strip", "joukowski_half_disc",
    "disc_to_h", "schwarzian", "Kernels", "one_point", "dobrushin_t",
    "two_point", "spinor_g", "spinor_kernels", "t_sigma_ratio",
    "ope_coefficients", "covariance_residual",
]


class ConformalMap:
    """Holomorphic map with derivatives to third order and a branch base point.

    ``kind`` is one of mobius, exp_strip, joukowski_half_disc, disc_to_H or
    composition; arbitrary maps can be supplied through callables obeying the
    same contract (d1 nonzero on the domain).
    """

    def __init__(self, eval_, d1, d2, d3, kind="custom", base=None, contains=None):
        self.eval = eval_
        self.d1 = d1
        self.d2 = d2
        self.d3 = d3
        self.kind = kind
        self.base = base if base is not None else 0.5j
        self.contains = contains or (lambda z: True)
        self._sqrt_base = None

    def __call__(self, z: complex) -> complex:
        return self.eval(z)

    # -- branch-tracked square root of the derivative ------------------------

    def sqrt_d1(self, z: complex, steps: int = 64) -> complex:
        """sqrt(phi'(z)) continued continuously from the base point."""
        if self._sqrt_base is None:
            self._sqrt_base = cmath.sqrt(self.d1(self.base))
        s = self._sqrt_base
        prev = self.d1(self.base)
        for k in range(1, steps + 1):
            zz = self.base + (z - self.base) * k / steps
            cur = self.d1(zz)
            if cur == 0:
                raise CriticalPoint(f"phi' = 0 on the branch path at {zz}")
            s = s * cmath.sqrt(cur / prev)
            prev = cur
        return s

    def check_derivatives(self, points, h: float = 1e-5, rtol: float = 1e-8) -> float:
        """Max relative finite-difference inconsistency of d1, d2, d3."""
        worst = 0.0
        for z in points:
            for f, df in ((self.eval, self.d1), (self.d1, self.d2), (self.d2, self.d3)):
                num = (f(z + h) - f(z - h)) / (2 * h)
                num2 = (f(z + h / 2) - f(z - h / 2)) / h
                rich = (4 * num2 - num) / 3
                scale = max(1.0, abs(df(z)))
                worst = max(worst, abs(rich - df(z)) / scale)
        if worst > rtol:
            raise CriticalPoint(f"derivative tables inconsistent: {worst:.2e}")
        return worst


def mobius(a: complex, b: complex, c: complex, d: complex,
           base=0.5j, contains=None) -> ConformalMap:
    det = a * d - b * c
    if det == 0:
        raise CriticalPoint("degenerate Mobius map")
    return ConformalMap(
        lambda z: (a * z + b) / (c * z + d),
        lambda z: det / (c * z + d) ** 2,
        lambda z: -2 * c * det / (c * z + d) ** 3,
        lambda z: 6 * c * c * det / (c * z + d) ** 4,
        kind="mobius", base=base, contains=contains)


def identity_map() -> ConformalMap:
    return ConformalMap(lambda z: z, lambda z: 1.0 + 0j, lambda z: 0.0j,
                        lambda z: 0.0j, kind="mobius",
                        contains=lambda z: z.imag > 0)


def exp_strip() -> ConformalMap:
    """The strip 0 < Im z < 1 onto H, phi(z) = exp(pi z)."""
    pi = math.pi
    return ConformalMap(
        lambda z: cmath.exp(pi * z),
        lambda z: pi * cmath.exp(pi * z),
        lambda z: pi**2 * cmath.exp(pi * z),
        lambda z: pi**3 * cmath.exp(pi * z),
        kind="exp_strip", base=0.5j, contains=lambda z: 0 < z.imag < 1)


def joukowski_half_disc() -> ConformalMap:
    """The upper half-disc |z| < 1, Im z > 0 onto H, phi(z) = -(z + 1/z)/2."""
    return ConformalMap(
        lambda z: -(z + 1 / z) / 2,
        lambda z: -(1 - 1 / z**2) / 2,
        lambda z: -1 / z**3,
        lambda z: 3 / z**4,
        kind="joukowski_half_disc", base=0.6j,
        contains=lambda z: abs(z) < 1 and z.imag > 0)


def disc_to_h(b: complex = -1.0, b2: complex = 1.0) -> ConformalMap:
    """The unit disc onto H sending the boundary point b to 0 and b2 to infinity."""
    # w = c (z - b)/(b2 - z): rotate c so a third boundary point lands on R,
    # then orient so the center maps into the upper half-plane
    z3 = -(b + b2) / abs(b + b2) if abs(b + b2) > 1e-12 else 1j * b / abs(b)
    w3 = (z3 - b) / (b2 - z3)
    c0 = abs(w3) / w3
    m = mobius(c0, -c0 * b, -1.0, complex(b2), base=0.0,
               contains=lambda z: abs(z) < 1)
    if m(0.0).imag < 0:
        m = mobius(-c0, c0 * b, -1.0, complex(b2), base=0.0,
                   contains=lambda z: abs(z) < 1)
    return m


def power_map(c: float, contains=None, base=1.0 + 1.0j) -> ConformalMap:
    """w -> w^c on a sector avoiding the negative real axis (principal branch)."""
    return ConformalMap(
        lambda z: z**c,
        lambda z: c * z ** (c - 1),
        lambda z: c * (c - 1) * z ** (c - 2),
        lambda z: c * (c - 1) * (c - 2) * z ** (c - 3),
        kind="power", base=base, contains=contains)


def lune_to_h(radius: float, y0: float) -> ConformalMap:
    """The lune |z| < radius, Im z > y0 onto H.

    The corners map to 0 and infinity by a Mobius map, turning the lune into
    the sector 0 < arg w < beta with beta = arccos(y0/radius); the power
    pi/beta opens the sector onto the upper half-plane.
    """
    x0 = math.sqrt(radius**2 - y0**2)
    p_minus, p_plus = complex(-x0, y0), complex(x0, y0)
    beta = math.acos(y0 / radius)
    inside = lambda z: abs(z) < radius and z.imag > y0
    m = mobius(1.0, -p_minus, -1.0, p_plus, base=complex(0, (y0 + radius) / 2),
               contains=inside)
    pw = power_map(math.pi / beta)
    out = compose(pw, m)
    out.kind = "joukowski_half_disc" if abs(y0) < 1e-12 else "composition"
    return out


def compose(outer: ConformalMap, inner: ConformalMap) -> ConformalMap:
    e = lambda z: outer.eval(inner.eval(z))
    d1 = lambda z: outer.d1(inner.eval(z)) * inner.d1(z)
    d2 = lambda z: (outer.d2(inner.eval(z)) * inner.d1(z) ** 2
                    + outer.d1(inner.eval(z)) * inner.d2(z))
    d3 = lambda z: (outer.d3(inner.eval(z)) * inner.d1(z) ** 3
                    + 3 * outer.d2(inner.eval(z)) * inner.d1(z) * inner.d2(z)
                    + outer.d1(inner.eval(z)) * inner.d3(z))
    return ConformalMap(e, d1, d2, d3, kind="composition", base=inner.base,
                        contains=inner.contains)


def schwarzian(phi: ConformalMap, w: complex) -> complex:
    """phi'''/phi' - (3/2)(phi''/phi')^2."""
    d1 = phi.d1(w)
    if abs(d1) < 1e-12:
        raise CriticalPoint(f"phi'({w}) ~ 0")
    return phi.d3(w) / d1 - 1.5 * (phi.d2(w) / d1) ** 2


# -- fermionic kernels -----------------------------------------------------------


class Kernels:
    """f, fdag and their derivatives for one uniformizing map phi: Omega -> H."""

    def __init__(self, phi: ConformalMap):
        self.phi = phi

    def _s(self, z):
        return self.phi.sqrt_d1(z)

    def f(self, a, z):
        if a == z:
            raise CoincidentPoints("f(a, a) is singular")
        return self._s(a) * self._s(z) / (self.phi(z) - self.phi(a))

    def fdag(self, a, z):
        return self._s(a).conjugate() * self._s(z) / (self.phi(z) - self.phi(a).conjugate())

    def f_eta(self, eta, a, z):
        return eta * self.f(a, z) + 1j * eta.conjugate() * self.fdag(a, z)

    # closed-form derivatives (sqrt(phi')' = phi''/(2 sqrt(phi')))

    def df_dz(self, a, z):
        sa, sz = self._s(a), self._s(z)
        dz = self.phi.d1(z)
        delta = self.phi(z) - self.phi(a)
        return sa * (self.phi.d2(z) / (2 * sz) / delta - sz * dz / delta**2)

    def df_da(self, a, z):
        sa, sz = self._s(a), self._s(z)
        da = self.phi.d1(a)
        delta = self.phi(z) - self.phi(a)
        return sz * (self.phi.d2(a) / (2 * sa) / delta + sa * da / delta**2)

    def d2f_dadz(self, a, z):
        """d^2 f / (da dz) in closed form."""
        sa, sz = self._s(a), self._s(z)
        da, dz = self.phi.d1(a), self.phi.d1(z)
        spa = self.phi.d2(a) / (2 * sa)
        spz = self.phi.d2(z) / (2 * sz)
        delta = self.phi(z) - self.phi(a)
        return (spz * spa / delta - sz * spa * dz / delta**2
                + spz * sa * da / delta**2 - 2 * sz * sa * da * dz / delta**3)

    def dfdag_dz(self, a, z):
        sa, sz = self._s(a).conjugate(), self._s(z)
        dz = self.phi.d1(z)
        delta = self.phi(z) - self.phi(a).conjugate()
        return sa * (self.phi.d2(z) / (2 * sz) / delta - sz * dz / delta**2)

    def f_sharp_dz_at(self, w):
        """(1/2) d_z f#(w, z)|_{z=w} = <T(w)>, evaluated in closed form."""
        return schwarzian(self.phi, w) / 24.0


def one_point(phi: ConformalMap, kind: str, w: complex):
    """<T(w)> (complex), <eps(w)> or <sigma(w)> (real) with + boundary."""
    if kind == "T":
        return schwarzian(phi, w) / 24.0
    d1 = phi.d1(w)
    if abs(d1) < 1e-12:
        raise CriticalPoint(f"phi'({w}) ~ 0")
    im = phi(w).imag
    if kind == "eps":
        return abs(d1) / (2 * im)
    if kind == "sigma":
        return (2 * abs(d1)) ** 0.125 * im ** -0.125
    raise ValueError(kind)


def dobrushin_t(phi: ConformalMap, w: complex) -> complex:
    """<T(w)> with Dobrushin boundary points at phi = 0 and infinity."""
    val = phi(w)
    if val == 0:
        raise WNearBoundaryPoint("phi(w) = 0")
    d1 = phi.d1(w)
    if abs(d1) < 1e-12:
        raise CriticalPoint(f"phi'({w}) ~ 0")
    return 0.5 * (d1 / val) ** 2 + schwarzian(phi, w) / 24.0


def two_point(phi: ConformalMap, kind: str, w: complex, second: complex):
    """<T(w) T(w')>, <T(w) eps(a)> or <T(w) sigma(u)> with + boundary."""
    if w == second:
        raise CoincidentPoints("coincident insertion points")
    ker = Kernels(phi)
    if kind == "TT":
        w2 = second
        t1, t2 = one_point(phi, "T", w), one_point(phi, "T", w2)
        f = ker.f(w, w2)
        dfw = ker.df_da(w, w2)      # d/dw f(w, w2)
        dfw2 = ker.df_dz(w, w2)     # d/dw2
        d2 = ker.d2f_dadz(w, w2)
        return t1 * t2 + 0.25 * (dfw * dfw2 - f * d2)
    if kind == "Teps":
        a = second
        te = one_point(phi, "T", w) * one_point(phi, "eps", a)
        f = ker.f(a, w)
        fd = ker.fdag(a, w)
        df = ker.df_dz(a, w)
        dfd = ker.dfdag_dz(a, w)
        return te + 0.5j * (f * dfd - fd * df)
    if kind == "Tsigma":
        u = second
        return t_sigma_ratio(phi, w, u) * one_point(phi, "sigma", u)
    raise ValueError(kind)


def fd_cross_check(ker: Kernels, a, z, h: float = 1e-6) -> float:
    """Central-difference (with one Richardson step) check of the closed-form
    kernel derivatives; returns the worst absolute mismatch."""
    def rich(f, x, g):
        d1 = (f(x + h) - f(x - h)) / (2 * h)
        d2 = (f(x + h / 2) - f(x - h / 2)) / h
        return abs((4 * d2 - d1) / 3 - g)
    worst = rich(lambda t: ker.f(a, t), z, ker.df_dz(a, z))
    worst = max(worst, rich(lambda t: ker.f(t, z), a, ker.df_da(a, z)))
    worst = max(worst, rich(lambda t: ker.df_dz(t, z), a, ker.d2f_dadz(a, z)))
    worst = max(worst, rich(lambda t: ker.fdag(a, t), z, ker.dfdag_dz(a, z)))
    return worst


# -- spinors ---------------------------------------------------------------------


def _sqrt_pair(u: complex, z: complex, sheet: int = 0) -> complex:
    """((z - u)(z - conj u))^(1/2) on the principal-per-factor branch."""
    val = cmath.sqrt(z - u) * cmath.sqrt(z - u.conjugate())
    return -val if sheet else val


def spinor_g(phi: ConformalMap, u: complex, z: complex, sheet: int = 0) -> complex:
    """The holomorphic spinor g with singularity (z - u)^(-1/2), via pullback."""
    uh, zh = phi(u), phi(z)
    g_h = cmath.sqrt(2j * uh.imag) / _sqrt_pair(uh, zh, sheet)
    return g_h * phi.sqrt_d1(z)


def spinor_kernels(phi: ConformalMap, u: complex, a: complex, z: complex,
                   sheet_a: int = 0, sheet_z: int = 0) -> dict:
    """g(z), fU(a, z), fUdag(a, z) through the half-plane formulas."""
    if a in (u, z):
        raise CoincidentPoints("spinor kernel arguments must be distinct")
    uh, ah, zh = phi(u), phi(a), phi(z)
    ra = _sqrt_pair(uh, ah, sheet_a)
    rz = _sqrt_pair(uh, zh, sheet_z)
    fu_h = (ra / rz) * (1 / (zh - ah) + 0.5 / (ah - uh) + 0.5 / (ah - uh.conjugate()))
    rad = _sqrt_pair(uh, ah.conjugate(), 0) * (1 if sheet_a == 0 else -1)
    fud_h = (rad / rz) * (1 / (zh - ah.conjugate()) + 0.5 / (ah.conjugate() - uh)
                          + 0.5 / (ah.conjugate() - uh.conjugate()))
    sa, sz = phi.sqrt_d1(a), phi.sqrt_d1(z)
    return {
        "g": spinor_g(phi, u, z, sheet_z),
        "fU": fu_h * sa * sz,
        "fUdag": fud_h * sa.conjugate() * sz,
    }


def branch_roundtrip(phi: ConformalMap, u: complex, loop_pts) -> int:
    """Continue the spinor square root around a closed polygonal loop.

    Returns +1 when the branch returns to itself, -1 when it flips (the loop
    crosses the cover an odd number of times); raises BranchInconsistency if
    continuation fails to land back on either value.
    """
    uh = phi(u)
    val = lambda z: (phi(z) - uh) * (phi(z) - uh.conjugate())
    pts = list(loop_pts) + [loop_pts[0]]
    s0 = cmath.sqrt(val(pts[0]))
    s = s0
    prev = val(pts[0])
    for z1, z2 in zip(pts, pts[1:]):
        for k in range(1, 33):
            zz = z1 + (z2 - z1) * k / 32
            cur = val(zz)
            s = s * cmath.sqrt(cur / prev)
            prev = cur
    if abs(s - s0) < 1e-9 * abs(s0):
        return 1
    if abs(s + s0) < 1e-9 * abs(s0):
        return -1
    raise BranchInconsistency(f"round trip landed on {s / s0}")


def t_sigma_ratio(phi: ConformalMap, w: complex, u: complex) -> complex:
    """<T(w) sigma(u)> / <sigma(u)>: Schwarzian pullback of the half-plane value."""
    wh, uh = phi(w), phi(u)
    ratio_h = (uh - uh.conjugate()) ** 2 / (16 * (wh - uh) ** 2 * (wh - uh.conjugate()) ** 2)
    return ratio_h * phi.d1(w) ** 2 + schwarzian(phi, w) / 24.0


def ope_coefficients(phi: ConformalMap, kind: str, center: complex,
                     ring_radius: float, n_samples: int = 64) -> dict:
    """Laurent coefficients of w -> <T(w) X(center)> around the insertion.

    Returns coefficients of (w - center)^k for k = -4..-1 from discrete
    Cauchy integrals over the sampling ring.
    """
    ks = range(-4, 0)
    vals = []
    for j in range(n_samples):
        w = center + ring_radius * cmath.exp(2j * math.pi * j / n_samples)
        if not phi.contains(w) or phi(w).imag <= 0:
            raise RingTooLarge(f"sample {w} leaves the domain")
        vals.append(two_point(phi, kind, w, center))
    out = {}
    for k in ks:
        s = 0.0 + 0.0j
        for j, v in enumerate(vals):
            rot = cmath.exp(2j * math.pi * j / n_samples)
            s += v * (ring_radius * rot) ** (-k)
        out[k] = s / n_samples
    return out


def covariance_residual(phi: ConformalMap, kind: str, w: complex,
                        unif_src: ConformalMap, unif_dst: ConformalMap,
                        site_src: complex | None = None) -> float:
    """|F_src(w) - F_dst(phi(w)) phi'(w)^2 - S(phi)(w)/24| for the four
    Schwarzian-covariant stress-tensor functions."""
    if kind == "T":
        fs = one_point(unif_src, "T", w)
        fd = one_point(unif_dst, "T", phi(w))
    elif kind == "T_dob":
        fs = dobrushin_t(unif_src, w)
        fd = dobrushin_t(unif_dst, phi(w))
    elif kind == "Teps_ratio":
        fs = two_point(unif_src, "Teps", w, site_src) / one_point(unif_src, "eps", site_src)
        fd = two_point(unif_dst, "Teps", phi(w), phi(site_src)) \
            / one_point(unif_dst, "eps", phi(site_src))
    elif kind == "Tsigma_ratio":
        fs = t_sigma_ratio(unif_src, w, site_src)
        fd = t_sigma_ratio(unif_dst, phi(w), phi(site_src))
    else:
        raise ValueError(kind)
    return abs(fs - fd * phi.d1(w) ** 2 - schwarzian(phi, w) / 24.0)
