"""Discrete stress-energy tensor of the loop O(n) model.

``T_edge`` and ``T_mid`` are logarithmic derivatives of the partition function
under the rhombus deformations at an edge (at theta = pi/3) or a midline (at
theta = 0), plus infinite-volume constants.  They admit an equivalent
combinatorial form as weighted sums over defect configurations with
coefficients given by derivatives of the rhombus weights:

    c1 = u1'/u1, c2 = u2'/u2, c3 = v'/v, c4 = w1'/w1  (at pi/3), c5 = w2'(pi/3)
    d1 = u1'(0), d2 = u2'(0), d3 = v'(0), d4 = w1'(0), d5 = w2'(0)

i.e. the logarithmic derivative of the local weight for classes alive in the
undeformed lattice and the plain derivative for classes that appear only
under the deformation.  The complex combinations are

    T(face)  = -(2/3) (T_mid(m) + rho_bar^2 T_mid(m') + rho_bar^4 T_mid(m''))
    T_CR(e)  = (4/3) tau_bar^2 [T_edge(e) + (rho_bar/4)(T_edge(e_tr) + T_edge(e_-tr))
                                + (rho/4)(T_edge(e_trb) + T_edge(e_-trb))]

whose discrete contour integral around every hexagon vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import loop_model as lm
from .configs import EnumGraph, bit_column, components, units
from .errors import InconsistentField, NotInner, SiteConsumed
from .lattice import DIR, HoneycombDomain, Midline, RHO
from .weights import WeightSystem, rhombus_weights, rhombus_weight_derivatives

__all__ = [
    "Coefficients", "TensorConstants", "coefficients", "constants",
    "tensor_value", "complex_tensor", "t_cr", "contour_integral_tcr",
    "h_potential", "relation_residuals", "martingale_check",
]


@dataclass(frozen=True)
class Coefficients:
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    d1: float
    d2: float
    d3: float
    d4: float
    d5: float


@dataclass(frozen=True)
class TensorConstants:
    c_edge: float
    c_mid: float
    c_t: float
    c_r: float


def coefficients(ws: WeightSystem) -> Coefficients:
    w3 = rhombus_weights(math.pi / 3, ws)
    dw3 = rhombus_weight_derivatives(math.pi / 3, ws)
    dw0 = rhombus_weight_derivatives(0.0, ws)
    return Coefficients(
        c1=dw3[0] / w3.u1, c2=dw3[1] / w3.u2, c3=dw3[2] / w3.v,
        c4=dw3[3] / w3.w1, c5=dw3[4],
        d1=dw0[0], d2=dw0[1], d3=dw0[2], d4=dw0[3], d5=dw0[4],
    )


def constants(ws: WeightSystem) -> TensorConstants:
    """Infinite-volume constants; explicit for n = 1, difference-pinned otherwise."""
    if abs(ws.n - 1.0) < 1e-12:
        c_t = 3 / (2 * math.pi) - 1 / math.sqrt(3)
        c_r = 7 / (3 * math.sqrt(3)) - 4 / math.pi
        c_edge = -1 / (2 * math.pi) + 1 / (4 * math.sqrt(3))
        c_mid = 2 * c_t + c_r
        return TensorConstants(c_edge, c_mid, c_t, c_r)
    u2p0 = rhombus_weight_derivatives(0.0, ws)[1]
    c_mid = -ws.n * ws.x**3 * u2p0
    return TensorConstants(0.0, c_mid, float("nan"), float("nan"))


# -- T_edge / T_mid ----------------------------------------------------------


def tensor_value(domain: HoneycombDomain, b, ws: WeightSystem, site,
                 mode: str = "combinatorial", fd_step: float = 1e-4) -> float:
    """T_edge(e) or T_mid(m) for an edge id or :class:`Midline` site.

    ``combinatorial`` evaluates the coefficient formula; ``geometric`` takes a
    Richardson-refined central finite difference of log Z(theta) at the
    undeformed angle.
    """
    cs = coefficients(ws)
    cn = constants(ws)
    if isinstance(site, Midline):
        theta0, const = 0.0, cn.c_mid
        if mode == "combinatorial":
            s = lm.midline_class_sums(domain, b, ws, site)
            num = (s.d1 * cs.d1 + s.d2 * cs.d2 + s.d3 * cs.d3
                   + s.d4 * cs.d4 + s.d5 * cs.d5)
            return const + num / s.z
    else:
        theta0, const = math.pi / 3, cn.c_edge
        if mode == "combinatorial":
            s = lm.edge_class_sums(domain, b, ws, int(site))
            num = (s.c1 * cs.c1 + s.c2 * cs.c2 + s.c3 * cs.c3
                   + s.c4 * cs.c4 + s.c5 * cs.c5)
            return const + num / s.z
    if mode != "geometric":
        raise ValueError(f"unknown mode {mode!r}")

    def dlog(h):
        zp = lm.deformed_partition(domain, b, ws, site, theta0 + h)
        zm = lm.deformed_partition(domain, b, ws, site, theta0 - h)
        return (math.log(zp) - math.log(zm)) / (2 * h)

    d1, d2 = dlog(fd_step), dlog(fd_step / 2)
    return const + (4 * d2 - d1) / 3


def complex_tensor(domain: HoneycombDomain, b, ws: WeightSystem, fkey: tuple,
                   values: dict | None = None) -> complex:
    """T(face) = -(2/3) sum_eta rho_bar^(2k) T_mid(w^[eta_k])."""
    tot = 0.0 + 0.0j
    for k in range(3):
        m = domain.midline(fkey, k)
        v = values[("mid", fkey, k)] if values else tensor_value(domain, b, ws, m)
        tot += RHO ** (-2 * k) * v
    return -2.0 / 3.0 * tot


def t_cr(domain: HoneycombDomain, b, ws: WeightSystem, eid: int, o: int,
         tvals: dict | None = None) -> complex:
    """T_CR on the oriented edge (eid, o); independent of the orientation."""
    e = domain.edges[eid]
    tau_k = domain.half_edge_dir_k(eid, o)
    tau = DIR[tau_k]

    def tval(j):
        if tvals is not None:
            return tvals[j]
        return tensor_value(domain, b, ws, j)

    neigh = {}
    for vtx, out_ks in ((domain.half_edge_head(eid, o), (tau_k + 1, tau_k - 1)),
                        (domain.half_edge_head(eid, 1 - o), (tau_k + 2, tau_k + 4))):
        for eo in domain.vertex_edges[vtx]:
            if eo == eid:
                continue
            oo = 0 if domain.edges[eo].v1 != vtx else 1   # orientation pointing away
            k_out = domain.half_edge_dir_k(eo, oo)
            neigh[k_out % 6] = eo
    # out-directions at the head are tau*rho, tau*rho_bar; at the tail -tau*rho, -tau*rho_bar
    e_tr = neigh[(tau_k + 1) % 6]
    e_trb = neigh[(tau_k - 1) % 6]
    e_mtr = neigh[(tau_k + 4) % 6]
    e_mtrb = neigh[(tau_k + 2) % 6]
    val = (tval(eid)
           + (RHO ** -1 / 4) * (tval(e_tr) + tval(e_mtr))
           + (RHO / 4) * (tval(e_trb) + tval(e_mtrb)))
    return (4.0 / 3.0) * tau.conjugate() ** 2 * val


def contour_integral_tcr(domain: HoneycombDomain, b, ws: WeightSystem, fkey: tuple,
                         tvals: dict | None = None) -> complex:
    """Discrete contour integral sum_tau tau * T_CR(a_tau) around a hexagon."""
    tot = 0.0 + 0.0j
    for pos, eid in enumerate(domain.face_edge_ids(fkey)):
        # counterclockwise orientation: at boundary position m (edge midpoint at
        # angle 30 + 60 m) the CCW direction is 120 + 60 m
        k_ccw = (2 + pos) % 6
        o = 0 if domain.edges[eid].k0 == k_ccw else 1
        tot += DIR[k_ccw] * t_cr(domain, b, ws, eid, o, tvals)
    return tot


# -- H potential --------------------------------------------------------------


def _dual_vertex_classes(domain: HoneycombDomain):
    """Union-find classes of (vertex, adjacent lattice face) pairs.

    Corners of neighboring dual triangles pointing at the same face are glued
    whenever the lattice edge between the two vertices belongs to the domain.
    """
    keys = {}
    for vi, vk in enumerate(domain.vertices):
        for fk in domain._faces_at_vertex(vk):
            keys[(vi, fk)] = len(keys)
    parent = list(range(len(keys)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for e in domain.edges:
        for fk in e.faces:
            a, b = find(keys[(e.v1, fk)]), find(keys[(e.v2, fk)])
            if a != b:
                parent[a] = b
    classes = {}
    for key, i in keys.items():
        classes[key] = find(i)
    remap = {}
    for key in sorted(classes):
        r = classes[key]
        if r not in remap:
            remap[r] = len(remap)
        classes[key] = remap[r]
    return classes, len(remap)


def h_potential(domain: HoneycombDomain, t_edge: dict, t_mid: dict,
                rtol: float = 1e-6):
    """Potential H on dual vertices with second differences T_edge and T_mid.

    ``t_edge`` maps edge id -> value, ``t_mid`` maps (face, h) -> value.
    Returns (H dict on dual classes, residual).  H is fixed by pinning the
    three classes around one inner vertex to zero.
    """
    classes, nclass = _dual_vertex_classes(domain)
    rows, rhs = [], []

    def row(pairs, value):
        r = np.zeros(nclass)
        for coef, cls in pairs:
            r[cls] += coef
        rows.append(r)
        rhs.append(value)

    for eid, val in t_edge.items():
        e = domain.edges[eid]
        fa, fb = e.faces
        ends = []
        for vi in (e.v1, e.v2):
            third = [f for f in domain._faces_at_vertex(domain.vertices[vi])
                     if f not in (fa, fb)][0]
            ends.append(classes[(vi, third)])
        row([(1.0, classes[(e.v1, fa)]), (1.0, classes[(e.v1, fb)]),
             (-1.0, ends[0]), (-1.0, ends[1])], val)

    # T_mid(m) = 2 H(A) - H(B) - H(C): A the face of m, B and C across its
    # end edges (the sign convention consistent with the edge rule above)
    for (fkey, h), val in t_mid.items():
        m = domain.midline(fkey, h)
        eu, ev = domain.edges[m.u_edge], domain.edges[m.v_edge]
        fb = [f for f in eu.faces if f != fkey][0]
        fc = [f for f in ev.faces if f != fkey][0]
        row([(-1.0, classes[(eu.v1, fb)]), (-1.0, classes[(ev.v1, fc)]),
             (2.0, classes[(eu.v1, fkey)])], val)

    # pin the three classes around the first inner vertex
    pinned = None
    for vi, vk in enumerate(domain.vertices):
        if len(domain.vertex_edges[vi]) == 3:
            pinned = [classes[(vi, fk)] for fk in domain._faces_at_vertex(vk)]
            break
    for cls in pinned:
        row([(1.0, cls)], 0.0)

    A = np.array(rows)
    y = np.array(rhs)
    sol, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.max(np.abs(A @ sol - y))) if len(rows) else 0.0
    if resid > rtol:
        raise InconsistentField(f"H potential residual {resid:.3e} exceeds {rtol:.1e}")
    return {key: sol[cls] for key, cls in classes.items()}, resid


# -- relation suite ------------------------------------------------------------


def relation_residuals(domain: HoneycombDomain, b, ws: WeightSystem) -> dict:
    """Residuals of the local linear relations between T_edge and T_mid.

    Returns max residuals: ``te_tm`` (midline = sum of two adjacent edges),
    ``hexagon`` (equal differences of opposite edges), ``midline6`` (the
    six-midline relation around an edge), ``tcr_contour`` (discrete contour
    integral of T_CR), ``h_resid`` (potential reconstruction) and
    ``uniqueness11`` (spread of the eleven coefficient expressions).
    """
    t_edge = {}
    for eid in range(domain.n_edges):
        if domain.edge_degree_inner(eid):
            t_edge[eid] = tensor_value(domain, b, ws, eid)
    t_mid = {}
    for fkey in domain.faces:
        for h in range(3):
            t_mid[(fkey, h)] = tensor_value(domain, b, ws, domain.midline(fkey, h))

    te_tm = 0.0
    for fkey in domain.faces:
        eids = domain.face_edge_ids(fkey)
        for h in range(3):
            m = domain.midline(fkey, h)
            mu = eids.index(m.u_edge)
            for pair in ((mu + 1, mu + 2), (mu + 4, mu + 5)):
                a, c = eids[pair[0] % 6], eids[pair[1] % 6]
                if a in t_edge and c in t_edge:
                    te_tm = max(te_tm, abs(t_mid[(fkey, h)] - t_edge[a] - t_edge[c]))

    hexagon = 0.0
    for fkey in domain.faces:
        eids = domain.face_edge_ids(fkey)
        if all(e in t_edge for e in eids):
            diffs = [t_edge[eids[(k + 3) % 6]] - t_edge[eids[k]] for k in range(3)]
            hexagon = max(hexagon, abs(diffs[0] + diffs[1]), abs(diffs[1] + diffs[2]))

    # six midlines around an edge: at each endpoint vertex take, in each of the
    # three faces there, the midline avoiding that vertex; the two midlines of
    # the faces sharing e minus the third equal 2 T_edge(e)
    def _midline_avoiding(fk, vi):
        at_v = [e for e in domain.face_edge_ids(fk)
                if vi in (domain.edges[e].v1, domain.edges[e].v2)]
        for h in range(3):
            m = domain.midline(fk, h)
            if m.u_edge not in at_v and m.v_edge not in at_v:
                return (fk, h)
        raise AssertionError

    midline6 = 0.0
    for eid, te in t_edge.items():
        fa, fb = domain.edges[eid].faces
        if not (domain.has_face(fa) and domain.has_face(fb)):
            continue
        sides = []
        for vi in (domain.edges[eid].v1, domain.edges[eid].v2):
            vk = domain.vertices[vi]
            third = [f for f in domain._faces_at_vertex(vk) if f not in (fa, fb)][0]
            if not domain.has_face(third):
                continue
            val = (t_mid[_midline_avoiding(fa, vi)] + t_mid[_midline_avoiding(fb, vi)]
                   - t_mid[_midline_avoiding(third, vi)])
            sides.append(val)
            midline6 = max(midline6, abs(val - 2 * te))
        if len(sides) == 2:
            midline6 = max(midline6, abs(sides[0] - sides[1]))

    tcr = 0.0
    for fkey in domain.faces:
        ring = domain.face_edge_ids(fkey)
        need = set(ring)
        for eid in ring:
            for vtx in (domain.edges[eid].v1, domain.edges[eid].v2):
                need.update(domain.vertex_edges[vtx])
        if all(e in t_edge for e in need):
            val = contour_integral_tcr(domain, b, ws, fkey, t_edge)
            tcr = max(tcr, abs(val))

    _, h_resid = h_potential(domain, t_edge, t_mid)
    return {
        "te_tm": te_tm, "hexagon": hexagon, "midline6": midline6,
        "tcr_contour": tcr, "h_resid": h_resid,
        "uniqueness11": uniqueness_spread(ws),
    }


def uniqueness_spread(ws: WeightSystem) -> float:
    """Spread of the coefficient identities fixing c_i, d_i and x uniquely.

    Grouping the defect configurations of the relation T_mid(m) = T_edge(a) +
    T_edge(b) by their restriction outside the contour through a, b and the
    midline endpoints yields one linear identity per group type.  All of them
    must equal the common constant -n x^3 d2 (the theta-derivative of the
    pentagonal factor).  Degree-3 coefficients c5 enter with the modified
    weight x^-2; groups whose surgery changes the loop count carry n or 1/n.
    """
    c = coefficients(ws)
    n, x = ws.n, ws.x
    exprs = [
        -n * x**3 * c.d2,
        c.c1 - c.d1 - x**2 * c.d3,
        c.c1 + c.c2 - x * c.d2,
        c.c1 + c.c3 - c.d1 - c.d3,
        2 * c.c3 - c.d2 / x,
        c.c2 + c.c3 - c.d1 - c.d3 / x**2,
        2 * c.c1 - c.d4 - n * c.d5 - x * n * c.d2,
        2 * c.c2 - c.d4 - n * c.d5 - c.d2 / x**3,
        c.c2 + c.c4 + (n / x**2) * c.c5 - c.d1 - n * c.d3,
        c.c3 + c.c4 + (n / x**2) * c.c5 - c.d4 - n * c.d5 - n * c.d2 / x,
    ]
    if n != 0:
        inv = 1.0 / n
        exprs += [
            2 * c.c1 - c.d4 - inv * c.d5 - x * inv * c.d2,
            c.c2 + c.c4 + inv * c.c5 / x**2 - c.d1 - inv * c.d3,
            c.c3 + c.c4 + inv * c.c5 / x**2 - c.d4 - inv * c.d5 - inv * c.d2 / x,
        ]
    return max(exprs) - min(exprs)


# -- martingale ----------------------------------------------------------------


def martingale_check(domain: HoneycombDomain, b, ws: WeightSystem, site) -> float:
    """|T(site) - sum over first interface steps P(step) T_slit(site)|.

    ``b = (s, s')`` are stub indices (Dobrushin boundary conditions); the
    interface grows from the first stub.
    """
    sb, sb2 = b
    stub = domain.stubs[sb]
    vb = stub.vertex
    g0 = EnumGraph(domain)

    site_bits = _site_bits(domain, site)
    z_full = lm.partition_function(domain, b, ws)
    t_full = tensor_value(domain, b, ws, site)

    total_p = 0.0
    acc = 0.0
    for ei in domain.vertex_edges[vb]:
        ej = [e for e in domain.vertex_edges[vb] if e != ei]
        o_near = 0 if domain.edges[ei].v1 == vb else 1
        drop = {g0.stub_bit(sb), g0.half_bit(ei, o_near)}
        for e in ej:
            drop.update((g0.half_bit(e, 0), g0.half_bit(e, 1)))
        if drop & site_bits or vb in _site_vertices(domain, site):
            raise SiteConsumed("first interface step can reach the site")
        sp = lm._SlitSpace(domain, drop, (g0.mid_node(ei), g0.stub_node(sb2)))
        z_i = float(np.sum(sp.weights(ws)))
        p_i = ws.x * z_i / z_full
        total_p += p_i
        acc += p_i * _tensor_value_space(sp, ws, site)
    if abs(total_p - 1.0) > 1e-9:
        raise SiteConsumed(f"first-step probabilities sum to {total_p}, not 1")
    return abs(t_full - acc)


def _site_bits(domain: HoneycombDomain, site) -> set:
    g = EnumGraph.__new__(EnumGraph)  # only for bit arithmetic
    if isinstance(site, Midline):
        return {2 * site.u_edge, 2 * site.u_edge + 1, 2 * site.v_edge, 2 * site.v_edge + 1}
    eid = int(site)
    bits = {2 * eid, 2 * eid + 1}
    for vtx in (domain.edges[eid].v1, domain.edges[eid].v2):
        for eo in domain.vertex_edges[vtx]:
            bits.update((2 * eo, 2 * eo + 1))
    return bits


def _site_vertices(domain: HoneycombDomain, site) -> set:
    if isinstance(site, Midline):
        es = (site.u_edge, site.v_edge)
    else:
        es = (int(site),)
    out = set()
    for e in es:
        out.update((domain.edges[e].v1, domain.edges[e].v2))
    return out


def _tensor_value_space(sp, ws: WeightSystem, site) -> float:
    cs = coefficients(ws)
    cn = constants(ws)
    if isinstance(site, Midline):
        s = lm.midline_class_sums_space(sp, ws, site)
        num = s.d1 * cs.d1 + s.d2 * cs.d2 + s.d3 * cs.d3 + s.d4 * cs.d4 + s.d5 * cs.d5
        return cn.c_mid + num / s.z
    s = lm.edge_class_sums_space(sp, ws, int(site))
    num = s.c1 * cs.c1 + s.c2 * cs.c2 + s.c3 * cs.c3 + s.c4 * cs.c4 + s.c5 * cs.c5
    return cn.c_edge + num / s.z
