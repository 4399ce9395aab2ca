"""Desk-scale convergence studies: discrete observables against their
continuum limits.

The lattice constants are 3/pi for the stress tensor (per delta^2), sqrt3/pi
for the energy density (per delta) and 9/pi^2 for stress-tensor pairs (per
delta^4).  Discrete expectations at small mesh are evaluated through the
fermionic-observable formulas fed by the boundary value solver.
"""

from __future__ import annotations

import math

import numpy as np

from . import continuum as C
from . import ising as I
from .lattice import HoneycombDomain, SQRT3, WP, build_domain
from .sholo import solve_fermion_bvp


def closest_half_edge(domain: HoneycombDomain, z: complex, even_dir=True):
    """Half-edge (eid, o) with midpoint nearest z; even_dir picks the
    orientation whose direction index is even (eta in {1, rho, rho^2})."""
    eid = min(range(domain.n_edges), key=lambda e: abs(domain.edges[e].z - z))
    if not even_dir:
        return (eid, 0)
    o = 0 if domain.edges[eid].k0 % 2 == 0 else 1
    return (eid, o)


def face_containing(domain: HoneycombDomain, w: complex) -> tuple:
    return min(domain.faces, key=lambda f: abs(domain.face_center(f) - w))


class SolvedFermions:
    """F(a, .) fields from the solver for a set of sources on one domain."""

    def __init__(self, domain: HoneycombDomain):
        self.domain = domain
        self.fields = {}

    def field(self, a):
        a = tuple(a)
        if a not in self.fields:
            self.fields[a] = solve_fermion_bvp(self.domain, a)
        return self.fields[a]

    def f_real(self, a, e) -> float:
        """F(a, e); sources are solved lazily and reused."""
        a, e = tuple(a), tuple(e)
        if a == e:
            return 0.0
        if a in self.fields or e not in self.fields:
            return self.field(a).real_part(e)
        return -self.field(e).real_part(a)


def _stub_half(domain: HoneycombDomain, sid: int):
    return ("stub", sid)


def energy_density_discrete(domain: HoneycombDomain, a) -> float:
    """E+[eps(a)] = 2 Re[eta F#(a, z_a)] from one solve."""
    fld = solve_fermion_bvp(domain, a)
    eta = domain.half_edge_eta(a[0], a[1])
    f_at_source = fld.values[a[0]]
    f_sharp = f_at_source + eta.conjugate() / 6.0
    return 2.0 * (eta * f_sharp).real


def t_mid_discrete(domain: HoneycombDomain, fkey: tuple, h: int, bc=()) -> float:
    """T_mid(w^[eta]) = E[T^eta + T^ieta + R^eta] via solver-fed fermions."""
    sf = SolvedFermions(domain)
    f = sf.f_real
    mh = I.midline_halves(domain, fkey, h)
    mih = I.midline_halves(domain, fkey, h + 3)
    t1 = I.C_T + (SQRT3 / 2) * I.op12(f, "s", "d", mh, mh)
    t2 = I.C_T + (SQRT3 / 2) * I.op12(f, "s", "d", mih, mih)
    r = I.C_R + SQRT3 * I.op12(f, "d", "d", mh, mih)
    total = t1 + t2 + r
    if bc:
        sb, sb2 = sorted(bc)
        bh, bh2 = _stub_half(domain, sb), _stub_half(domain, sb2)
        fbb = f(bh, bh2)
        for halves, pref in ((mh, 1.0), (mih, 1.0)):
            d1b = I.d1_s1_apply(f, "d", halves, bh)
            s1b = I.d1_s1_apply(f, "s", halves, bh)
            d1b2 = I.d1_s1_apply(f, "d", halves, bh2)
            s1b2 = I.d1_s1_apply(f, "s", halves, bh2)
            total += pref * (SQRT3 / 2) / fbb * (d1b * s1b2 - s1b * d1b2)
        dr1b = I.d1_s1_apply(f, "d", mh, bh)
        dr1b2 = I.d1_s1_apply(f, "d", mh, bh2)
        di1b = I.d1_s1_apply(f, "d", mih, bh)
        di1b2 = I.d1_s1_apply(f, "d", mih, bh2)
        total += -SQRT3 / fbb * (dr1b * di1b2 - di1b * dr1b2)
    return total


def t_field_expectations(domain: HoneycombDomain, fkey: tuple, sf: SolvedFermions) -> dict:
    """E+[T^eta], E+[R^eta] for all eta at one face, from solver fermions."""
    out = {}
    f = sf.f_real
    for h in range(6):
        mh = I.midline_halves(domain, fkey, h)
        out[("T", h)] = I.C_T + (SQRT3 / 2) * I.op12(f, "s", "d", mh, mh)
    for h in range(3):
        mh = I.midline_halves(domain, fkey, h)
        mih = I.midline_halves(domain, fkey, h + 3)
        out[("R", h)] = I.C_R + SQRT3 * I.op12(f, "d", "d", mh, mih)
    return out


def complex_t_expectation(domain: HoneycombDomain, fkey: tuple,
                          sf: SolvedFermions | None = None) -> complex:
    sf = sf or SolvedFermions(domain)
    vals = t_field_expectations(domain, fkey, sf)
    rho4 = [WP[1] ** (4 * k) for k in range(3)]  # rho^(4k) conj powers via WP[1]=rho
    tot = 0j
    for k in range(3):
        tot += (WP[1] ** (-4 * k)) * (vals[("T", k)] + vals[("T", k + 3)] + vals[("R", k)])
    return -2.0 / 3.0 * tot


def tt_expectation(domain: HoneycombDomain, f1: tuple, f2: tuple) -> complex:
    """E+[T(w) T(w')] including all T/R cross terms via the Pfaffian structure."""
    sf = SolvedFermions(domain)
    # solve all sources at face f1 once; cross values evaluated from them
    singles1 = t_field_expectations(domain, f1, sf)
    singles2 = t_field_expectations(domain, f2, sf)
    f = sf.f_real

    def pairs(fk, which, h):
        return I.field_pairs(domain, which, fk, h)

    def e_single(table, which, h):
        return table[(which, h if which == "T" else h % 3)]

    tot = 0j
    for k1 in range(3):
        for k2 in range(3):
            pref = (WP[1] ** (-4 * k1)) * (WP[1] ** (-4 * k2))
            for wh1, hh1 in (("T", k1), ("T", k1 + 3), ("R", k1)):
                for wh2, hh2 in (("T", k2), ("T", k2 + 3), ("R", k2)):
                    e1 = e_single(singles1, wh1, hh1)
                    e2 = e_single(singles2, wh2, hh2)
                    conn = I.connected_two_point(
                        f, pairs(f1, wh1, hh1), pairs(f2, wh2, hh2))
                    tot += pref * (e1 * e2 + conn)
    return (2.0 / 3.0) ** 2 * tot


def t_eps_ratio(domain: HoneycombDomain, fkey: tuple, a) -> complex:
    """E+[T(w) eps(a)] / E+[eps(a)] via solver fermions."""
    sf = SolvedFermions(domain)
    singles = t_field_expectations(domain, fkey, sf)
    eps = energy_density_discrete(domain, a)
    f = sf.f_real
    eid = a[0]
    o = 0 if domain.edges[eid].k0 % 2 == 0 else 1
    eps_pairs = I.field_pairs(domain, "epsilon", eid)
    tot = 0j
    for k in range(3):
        pref = WP[1] ** (-4 * k)
        for wh, hh in (("T", k), ("T", k + 3), ("R", k)):
            e1 = singles[(wh, hh if wh == "T" else hh % 3)]
            conn = I.connected_two_point(f, I.field_pairs(domain, wh, fkey, hh), eps_pairs)
            tot += pref * (e1 * eps + conn)
    return (-2.0 / 3.0) * tot / eps


# -- study drivers -----------------------------------------------------------


def disc_uniformizer(r_eff: float = 1.0) -> C.ConformalMap:
    """The disc of radius r_eff onto H (boundary data lives on stub midpoints,
    so the effective continuum disc passes through them)."""
    scale = C.mobius(1.0 / r_eff, 0.0, 0.0, 1.0, base=0.0,
                     contains=lambda z: abs(z) < r_eff)
    return C.compose(C.mobius(1j, 1j, -1.0, 1.0, base=0.0), scale)


def effective_radius(domain: HoneycombDomain) -> float:
    return float(np.mean([abs(s.z) for s in domain.stubs]))


def energy_study(deltas, a_point=0.3 + 0.2j, shape="disc(1)") -> list:
    """Rows (delta, site, discrete, target, ratio, abs_err) for eps on a disc."""
    rows = []
    for d in deltas:
        dom = build_domain(shape, d)
        phi = disc_uniformizer(effective_radius(dom))
        a = closest_half_edge(dom, a_point)
        val = energy_density_discrete(dom, a) / d
        z = dom.edges[a[0]].z
        tgt = (SQRT3 / math.pi) * C.one_point(phi, "eps", z)
        rows.append((d, z, val, tgt, val / tgt, abs(val - tgt)))
    return rows


def effective_lune(domain: HoneycombDomain) -> C.ConformalMap:
    """Uniformizer of the effective half-disc region through the stub midpoints."""
    d = domain.mesh
    rmax = max(abs(s.z) for s in domain.stubs)
    flat = [s.z.imag for s in domain.stubs
            if s.z.imag < 1.2 * d and abs(s.z.real) < 0.8 * rmax]
    curved = [abs(s.z) for s in domain.stubs if s.z.imag > 0.25 * rmax]
    y0 = float(np.mean(flat)) if flat else 0.0
    r = float(np.mean(curved))
    return C.lune_to_h(r, y0)


def tensor_study_plus(deltas, w_point=0.25 + 0.45j, h: int = 0) -> list:
    """delta^-2 T_mid with + boundary on the half disc vs the Schwarzian target."""
    rows = []
    for d in deltas:
        dom = build_domain("half_disc(1)", d)
        phi = effective_lune(dom)
        fkey = face_containing(dom, w_point)
        w = dom.face_center(fkey)
        val = t_mid_discrete(dom, fkey, h) / d**2
        tau = WP[[0, 2, 4, 3, 5, 1][h]]
        tgt = (3 / math.pi) * ((1j * tau) ** 2 * C.one_point(phi, "T", w)).real
        rows.append((d, w, val, tgt, val / tgt if tgt else float("nan"), abs(val - tgt)))
    return rows


def tensor_study_dobrushin(deltas, w_point=0.3 + 0.2j, h: int = 0) -> list:
    """delta^-2 T_mid with Dobrushin boundary on the disc vs the explicit target."""
    rows = []
    for d in deltas:
        dom = build_domain("disc(1)", d)
        r_eff = effective_radius(dom)
        fkey = face_containing(dom, w_point)
        w = dom.face_center(fkey)
        # marked stubs: nearest to the boundary points -1 and +1
        sb = min(range(dom.n_stubs), key=lambda s: abs(dom.stubs[s].z + 1.0))
        sb2 = min(range(dom.n_stubs), key=lambda s: abs(dom.stubs[s].z - 1.0))
        scale = C.mobius(1.0 / r_eff, 0.0, 0.0, 1.0, base=0.0,
                         contains=lambda z: abs(z) < r_eff)
        bu = dom.stubs[sb].z / abs(dom.stubs[sb].z)
        bu2 = dom.stubs[sb2].z / abs(dom.stubs[sb2].z)
        phi = C.compose(C.disc_to_h(b=bu, b2=bu2), scale)
        val = t_mid_discrete(dom, fkey, h, bc=(sb, sb2)) / d**2
        tau = WP[[0, 2, 4, 3, 5, 1][h]]
        tgt = (3 / math.pi) * ((1j * tau) ** 2 * C.dobrushin_t(phi, w)).real
        rows.append((d, w, val, tgt, val / tgt if tgt else float("nan"), abs(val - tgt)))
    return rows


def tt_study(delta: float, w1=-0.35 + 0.1j, w2=0.4 - 0.15j, shape="disc(1)"):
    """delta^-4 E+[T T'] vs (9/pi^2) <T T'> at one point pair."""
    dom = build_domain(shape, delta)
    fa, fb = face_containing(dom, w1), face_containing(dom, w2)
    za, zb = dom.face_center(fa), dom.face_center(fb)
    val = tt_expectation(dom, fa, fb) / delta**4
    phi = disc_uniformizer(effective_radius(dom))
    tgt = (9 / math.pi**2) * C.two_point(phi, "TT", za, zb)
    return val, tgt


def teps_study(delta: float, w=-0.35 + 0.1j, a_point=0.4 - 0.15j, shape="disc(1)"):
    """delta^-2 E+[T eps]/E+[eps] vs (3/pi) <T eps>/<eps> at one pair."""
    dom = build_domain(shape, delta)
    fa = face_containing(dom, w)
    a = closest_half_edge(dom, a_point)
    za, zb = dom.face_center(fa), dom.edges[a[0]].z
    val = t_eps_ratio(dom, fa, a) / delta**2
    phi = disc_uniformizer(effective_radius(dom))
    tgt = (3 / math.pi) * C.two_point(phi, "Teps", za, zb) / C.one_point(phi, "eps", zb)
    return val, tgt
