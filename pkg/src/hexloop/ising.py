"""Ising (n = 1) machinery: spins, fermionic and spinor observables.

The loop O(1) model is the low-temperature expansion of the Ising model on
faces: spins differ across an edge exactly when the edge is a domain wall.
With boundary set ``b`` boundary spins are +1 except along alternate arcs
between consecutive marked stubs.

The real fermionic observable is

    F(a, e) = (i conj(eta_a) eta_e / Z) sum over configurations with a path
              from half-edge a to half-edge e of exp(-i/2 wind) x^#edges

and the complex one F(a, z_e) = -i [conj(eta_e) F(a, e) + conj(eta_ebar) F(a, ebar)].
Spinor observables live on a double cover branching at a face u and weigh
configurations by (-1)^(# loops around u), with a 2 pi winding correction on
paths that change sheet.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .configs import EnumGraph, bit_column, parity_column, trace_paths, units
from .errors import AdjacentSites, DuplicateHalfEdge, ZeroDenominator, ZeroSpinExpectation
from .lattice import DIR, DoubleCover, HoneycombDomain, SQRT3, WP
from .loop_model import enum_space
from .weights import WeightSystem, weight_params

WS1 = weight_params(1.0)

C_T = 3 / (2 * math.pi) - 1 / math.sqrt(3)
C_R = 7 / (3 * math.sqrt(3)) - 4 / math.pi


# -- spin model ---------------------------------------------------------------


class SpinModel:
    """Spins on faces (domain and corona) determined per configuration.

    The spin of a cell is the reference spin times (-1)^(number of walls
    crossed along a fixed dual path), where walls are configuration bits:
    one half-edge bit per domain edge, the stub bit across a boundary stub,
    nothing across outer-outer contacts.  The reference cell is a corona
    face; for Dobrushin sets it is the corona cell on the clockwise side of
    the first marked stub, which fixes the +1 arc.
    """

    def __init__(self, domain: HoneycombDomain, b=()):
        self.domain = domain
        self.b = tuple(sorted(b))
        g = EnumGraph(domain)
        nwords = g.n_words
        corona = {}
        for e in domain.edges:
            for fk in e.faces:
                if not domain.has_face(fk):
                    corona.setdefault(fk, None)
        for s in domain.stubs:
            for fk in domain._edge_faces(s.edge_key):
                corona.setdefault(fk, None)
        self.cells = list(domain.faces) + sorted(corona)
        idx = {fk: i for i, fk in enumerate(self.cells)}

        stub_by_key = {s.edge_key: si for si, s in enumerate(domain.stubs)}
        links = []  # (cell1, cell2, wall mask)
        for eid, e in enumerate(domain.edges):
            fa, fb = e.faces
            if fa in idx and fb in idx:
                w = np.zeros(nwords, np.uint64)
                bbit = g.half_bit(eid, 0)
                w[bbit >> 6] ^= np.uint64(1) << np.uint64(bbit & 63)
                links.append((idx[fa], idx[fb], w))
        seen_outer = set()
        for fk in corona:
            for ek in domain._face_edge_keys(fk):
                if ek in domain.edge_index:
                    continue
                pair = domain._edge_faces(ek)
                if all(p in corona for p in pair) and ek not in seen_outer:
                    seen_outer.add(ek)
                    w = np.zeros(nwords, np.uint64)
                    if ek in stub_by_key:
                        bbit = g.stub_bit(stub_by_key[ek])
                        w[bbit >> 6] ^= np.uint64(1) << np.uint64(bbit & 63)
                    links.append((idx[pair[0]], idx[pair[1]], w))

        ref = self._reference_cell(idx)
        masks = [None] * len(self.cells)
        masks[ref] = np.zeros(nwords, np.uint64)
        adj = [[] for _ in self.cells]
        for i1, i2, w in links:
            adj[i1].append((i2, w))
            adj[i2].append((i1, w))
        stack = [ref]
        while stack:
            i = stack.pop()
            for j, w in adj[i]:
                if masks[j] is None:
                    masks[j] = masks[i] ^ w
                    stack.append(j)
        if any(m is None for m in masks):
            raise ZeroSpinExpectation("cell graph is disconnected")
        self.mask = {fk: masks[idx[fk]] for fk in self.cells}

    def _reference_cell(self, idx) -> int:
        dom = self.domain
        if not self.b:
            return len(dom.faces)  # first corona cell
        s = dom.stubs[self.b[0]]
        w_out = DIR[(s.k_in + 3) % 6]
        target = s.z - (SQRT3 * dom.mesh / 2) * 1j * w_out
        best = min((fk for fk in idx if not dom.has_face(fk)),
                   key=lambda fk: abs(dom.face_center(fk) - target))
        return idx[best]

    def spin_column(self, masks: np.ndarray, fkey: tuple) -> np.ndarray:
        """Spins (+-1) of one cell over a configuration array."""
        return 1.0 - 2.0 * parity_column(masks, self.mask[fkey])

    def pair_column(self, masks: np.ndarray, f1: tuple, f2: tuple) -> np.ndarray:
        """sigma(f1) sigma(f2) over a configuration array."""
        return 1.0 - 2.0 * parity_column(masks, self.mask[f1] ^ self.mask[f2])


def _spin_model(domain: HoneycombDomain, b) -> SpinModel:
    cache = getattr(domain, "_spin_cache", None)
    if cache is None:
        cache = domain._spin_cache = {}
    key = tuple(sorted(b))
    if key not in cache:
        cache[key] = SpinModel(domain, key)
    return cache[key]


def _neighbor(domain: HoneycombDomain, fkey: tuple, k_nu: int) -> tuple:
    return domain.neighbor_face(fkey, k_nu)


def local_field_t(domain, sm: SpinModel, masks, fkey: tuple, h: int) -> np.ndarray:
    """T^[eta](w) per configuration, eta = WP[h].

    Uses the spins of w and of its neighbors across the directions
    +-eta^2 (the midline end edges) and rho eta^2, rho^2 eta^2 (the
    semi-hexagon on the starting side of w^[eta]).
    """
    k2 = [0, 2, 4, 3, 5, 1][h]
    s = lambda k: sm.pair_column(masks, fkey, _neighbor(domain, fkey, k % 6))
    return C_T + (1.0 / (24 * SQRT3)) * (1 + s(k2)) * (1 + s(k2 + 3)) * \
        (2 - s(k2 + 1)) * (2 - s(k2 + 2))


def local_field_r(domain, sm: SpinModel, masks, fkey: tuple, h: int) -> np.ndarray:
    """R^[eta](w) per configuration; R^[eta] = R^[i eta]."""
    k2 = [0, 2, 4, 3, 5, 1][h]
    s = lambda k: sm.pair_column(masks, fkey, _neighbor(domain, fkey, k % 6))
    snn = sm.pair_column(masks, _neighbor(domain, fkey, k2),
                         _neighbor(domain, fkey, (k2 + 3) % 6))
    # the linear term carries 1/(2 sqrt 3): each wall event contributes one
    # path-weight unit, matching -(1/sqrt3) W(...)/Z per end edge
    return C_R - (1.0 / (2 * SQRT3)) * ((1 - s(k2)) + (1 - s(k2 + 3))) \
        + (1.0 / (12 * SQRT3)) * (1 - snn) * (
            (2 - s(k2 + 1)) * (2 - s(k2 + 2)) + (2 - s(k2 + 4)) * (2 - s(k2 + 5)))


def spin_field_expectations(domain: HoneycombDomain, b, which: str, site, h: int = 0) -> float:
    """Expectation of sigma(u), epsilon(a), T^[eta](w) or R^[eta](w) at n = 1.

    ``which`` is one of "sigma", "epsilon", "T", "R"; ``site`` is a face key
    (sigma, T, R) or an edge id (epsilon); ``h`` indexes eta in WP.
    """
    sp = enum_space(domain, b)
    sm = _spin_model(domain, b)
    w = sp.weights(WS1)
    z = float(w.sum())
    if which == "sigma":
        col = sm.spin_column(sp.masks, tuple(site))
    elif which == "epsilon":
        e = domain.edges[int(site)]
        col = sm.pair_column(sp.masks, e.faces[0], e.faces[1]) - 2.0 / 3.0
    elif which == "T":
        col = local_field_t(domain, sm, sp.masks, tuple(site), h)
    elif which == "R":
        col = local_field_r(domain, sm, sp.masks, tuple(site), h)
    else:
        raise ValueError(which)
    return float((w * col).sum()) / z


def spin_product_expectation(domain: HoneycombDomain, b, factors) -> float:
    """Expectation of a product of local fields, each ("sigma"|"epsilon"|"T"|"R", site, h)."""
    sp = enum_space(domain, b)
    sm = _spin_model(domain, b)
    w = sp.weights(WS1)
    col = np.ones(len(w))
    for which, site, h in factors:
        if which == "sigma":
            col = col * sm.spin_column(sp.masks, tuple(site))
        elif which == "epsilon":
            e = domain.edges[int(site)]
            col = col * (sm.pair_column(sp.masks, e.faces[0], e.faces[1]) - 2.0 / 3.0)
        elif which == "T":
            col = col * local_field_t(domain, sm, sp.masks, tuple(site), h)
        elif which == "R":
            col = col * local_field_r(domain, sm, sp.masks, tuple(site), h)
        else:
            raise ValueError(which)
    return float((w * col).sum()) / float(w.sum())


# -- fermionic observables -----------------------------------------------------


@dataclass
class FermionTable:
    """Real two-point values F(a, e) keyed by oriented half-edges.

    Half-edges are (edge_id, o) pairs or ("stub", s) for boundary stubs.
    """

    domain: HoneycombDomain
    values: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["a_id,e_id,value"]
        for (a, e), v in sorted(self.values.items()):
            lines.append("%s,%s,%.17g" % (_half_id(self.domain, a), _half_id(self.domain, e), v))
        return "\n".join(lines) + "\n"


def _half_id(domain: HoneycombDomain, half) -> int:
    if half[0] == "stub":
        return 2 * domain.n_edges + half[1]
    return 2 * half[0] + half[1]


def _half_bit(g: EnumGraph, half) -> int:
    if half[0] == "stub":
        return g.stub_bit(half[1])
    return g.half_bit(half[0], half[1])


def _half_node(g: EnumGraph, half) -> int:
    if half[0] == "stub":
        return g.stub_node(half[1])
    return g.mid_node(half[0])


def _half_eta(domain: HoneycombDomain, half) -> complex:
    if half[0] == "stub":
        return WP[[0, 5, 1, 3, 2, 4][domain.stubs[half[1]].k_in]]
    return domain.half_edge_eta(half[0], half[1])


class FermionEngine:
    """Brute-force fermionic sums for one domain at n = 1."""

    def __init__(self, domain: HoneycombDomain):
        self.domain = domain
        self.graph = EnumGraph(domain)
        self.z = float(np.sum(enum_space(domain, ()).weights(WS1)))
        self._two_cache: dict = {}

    # raw phase sums ---------------------------------------------------------

    def _pair_sums(self, node_a: int, node_e: int) -> dict:
        """sum of phi * w over Conf(alpha, eps) for the four half combinations.

        Returns {(bit_start, bit_end): complex phase sum}; the path is traced
        from node_a, so bit_start identifies the half at node_a.
        """
        key = (node_a, node_e)
        if key in self._two_cache:
            return self._two_cache[key]
        g = self.graph
        masks = g.masks([node_a, node_e])
        x = WS1.x ** (units(masks) / 2.0)
        wind, endnode, startbit, endbit, _, _, _ = trace_paths(g, masks, [node_a])
        phases = np.exp(-1j * (math.pi / 6) * wind[:, 0]) * x
        ok = endnode[:, 0] == node_e
        out: dict = {}
        for bs in np.unique(startbit[ok]):
            for be in np.unique(endbit[ok]):
                sel = ok & (startbit[:, 0] == bs) & (endbit[:, 0] == be)
                if sel.any():
                    out[(int(bs), int(be))] = complex(phases[sel].sum())
        self._two_cache[key] = out
        return out

    def _loop_sums(self, eid: int) -> dict:
        """sum of phi * w over Conf(a, abar): loops through the edge, cut at z."""
        key = ("loop", eid)
        if key in self._two_cache:
            return self._two_cache[key]
        g = self.graph
        masks = enum_space(self.domain, ()).masks
        contains = bit_column(masks, g.half_bit(eid, 0)).astype(bool)
        sub = masks[contains]
        gs, extra = _split_graph(g, eid)
        wind, endnode, startbit, endbit, _, _, _ = trace_paths_arrays(gs, sub, [g.mid_node(eid)])
        x = WS1.x ** (units(sub) / 2.0)
        phases = np.exp(-1j * (math.pi / 6) * wind[:, 0]) * x
        # the split midpoint keeps the o = 0 half, so every loop is traced from
        # there; starting from the opposite half reverses the loop orientation
        s0 = complex(phases.sum())
        out = {g.half_bit(eid, 0): s0, g.half_bit(eid, 1): s0.conjugate()}
        self._two_cache[key] = out
        return out

    # public values ------------------------------------------------------------

    def f_real(self, a, e) -> float:
        """F(a, e) for distinct half-edges (same-edge pairs allowed)."""
        if a == e:
            return 0.0
        dom, g = self.domain, self.graph
        eta_a, eta_e = _half_eta(dom, a), _half_eta(dom, e)
        pref = 1j * eta_a.conjugate() * eta_e / self.z
        if a[0] != "stub" and e[0] != "stub" and a[0] == e[0]:
            sums = self._loop_sums(a[0])
            s = sums.get(_half_bit(g, a), 0.0)
            val = pref * s
        else:
            na, ne = _half_node(g, a), _half_node(g, e)
            if na < ne:
                sums = self._pair_sums(na, ne)
                s = sums.get((_half_bit(g, a), _half_bit(g, e)), 0.0)
                val = pref * s
            else:
                return -self.f_real(e, a)
        if abs(val.imag) > 1e-9 * (1 + abs(val)):
            raise AssertionError(f"F(a,e) not real: {val}")
        return val.real

    def w_sum(self, a, e, b=()) -> float:
        """W^b(a, e): the weighted count of configurations whose path ends are
        b plus the half-edges a and e, with any pairing of the ends."""
        dom, g = self.domain, self.graph
        if a[0] != "stub" and e[0] != "stub" and a[0] == e[0] and a[1] != e[1]:
            sp = enum_space(dom, b)
            contains = bit_column(sp.masks, g.half_bit(a[0], 0)).astype(bool)
            return float(sp.weights(WS1)[contains].sum())
        odd = [_half_node(g, a), _half_node(g, e)] + [g.stub_node(s) for s in b]
        masks = g.masks(odd)
        x = WS1.x ** (units(masks) / 2.0)
        sel = bit_column(masks, _half_bit(g, a)).astype(bool) \
            & bit_column(masks, _half_bit(g, e)).astype(bool)
        return float(x[sel].sum())

    def f_complex(self, a, eid: int) -> complex:
        """F(a, z_e) for the midedge of edge eid (eid may equal a's edge)."""
        dom = self.domain
        e0, e1 = (eid, 0), (eid, 1)
        eta0, eta1 = _half_eta(dom, e0), _half_eta(dom, e1)
        if a[0] == eid:
            # F(a, z_a) = -i conj(eta_abar) F(a, abar)
            abar = (eid, 1 - a[1])
            return -1j * _half_eta(dom, abar).conjugate() * self.f_real(a, abar)
        return -1j * (eta0.conjugate() * self.f_real(a, e0)
                      + eta1.conjugate() * self.f_real(a, e1))

    def f_complex_stub(self, a, sid: int) -> complex:
        """F(a, z_b) at a boundary stub: the single-configuration-set form."""
        bhalf = ("stub", sid)
        return -1j * _half_eta(self.domain, bhalf).conjugate() * self.f_real(a, bhalf)


def _split_graph(g: EnumGraph, eid: int):
    """Trace arrays with the o=1 half of edge eid re-homed to a fresh node."""
    end0 = g.end0.copy()
    extra = g.n_nodes
    b1 = g.half_bit(eid, 1)
    end0[b1] = extra
    node_ptr = np.append(g.node_ptr, g.node_ptr[-1])
    # rebuild CSR minus b1 at the midpoint, plus at the extra node
    counts = np.zeros(extra + 1, np.int64)
    for b in range(g.n_bits):
        if g.alive[b]:
            counts[end0[b]] += 1
            counts[g.end1[b]] += 1
    ptr = np.zeros(extra + 2, np.int64)
    np.cumsum(counts, out=ptr[1:])
    bits = np.empty(ptr[-1], np.int64)
    fill = ptr[:-1].copy()
    for b in range(g.n_bits):
        if g.alive[b]:
            for v in (end0[b], g.end1[b]):
                bits[fill[v]] = b
                fill[v] += 1
    return (end0, g.end1, ptr, bits, g.dir_from, g.cut), extra


def trace_paths_arrays(arrays, masks, src_nodes):
    from .configs import _trace_paths
    end0, end1, ptr, bits, dir_from, cut = arrays
    src = np.asarray(src_nodes, np.int64)
    nc = masks.shape[0]
    wind = np.empty((nc, src.size), np.int32)
    endnode = np.empty((nc, src.size), np.int64)
    startbit = np.empty((nc, src.size), np.int64)
    endbit = np.empty((nc, src.size), np.int64)
    cutpar = np.empty((nc, src.size), np.uint8)
    nloops = np.empty(nc, np.int16)
    oddpar = np.empty(nc, np.uint8)
    _trace_paths(masks, end0, end1, ptr, bits, dir_from, cut, src,
                 wind, endnode, startbit, endbit, cutpar, nloops, oddpar)
    return wind, endnode, startbit, endbit, cutpar, nloops, oddpar


def _engine(domain: HoneycombDomain) -> FermionEngine:
    eng = getattr(domain, "_fermion_engine", None)
    if eng is None:
        eng = domain._fermion_engine = FermionEngine(domain)
    return eng


def fermion_two_point(domain: HoneycombDomain, a, target):
    """F(a, e) (real, target a half-edge) or F(a, z_e) (complex, target ("z", eid))."""
    eng = _engine(domain)
    if isinstance(target, tuple) and target[0] == "z":
        return eng.f_complex(a, target[1])
    return eng.f_real(a, target)


def fermion_four_point(domain: HoneycombDomain, a1, a2, a3, a4) -> dict:
    """Four-point observable and its Pfaffian residual.

    Works for distinct half-edges; pairs of opposite half-edges (a, abar) are
    allowed and handled through the loop-through-the-edge configurations.
    """
    halves = [a1, a2, a3, a4]
    if len(set(halves)) != 4:
        raise DuplicateHalfEdge(str(halves))
    eng = _engine(domain)
    dom, g = eng.domain, eng.graph

    value = _four_point_direct(eng, halves)
    f = lambda p, q: eng.f_real(p, q)
    pf = (f(a1, a2) * f(a3, a4) - f(a1, a3) * f(a2, a4) + f(a1, a4) * f(a2, a3))
    return {"value": value, "pfaffian_residual": abs(value - pf)}


def _four_point_direct(eng: FermionEngine, halves) -> float:
    """F(a1,a2|a3,a4) - F(a1,a3|a2,a4) + F(a1,a4|a2,a3) by one enumeration."""
    dom, g = eng.domain, eng.graph
    nodes = [_half_node(g, h) for h in halves]
    bits = [_half_bit(g, h) for h in halves]
    etas = [_half_eta(dom, h) for h in halves]

    # pairs of opposite half-edges share a midpoint: trace them through a
    # split graph where the o=1 half is re-homed to a fresh node
    from collections import Counter
    cnt = Counter(nodes)
    if any(cnt[nodes[i]] == 2 and halves[i][0] == "stub" for i in range(4)):
        raise DuplicateHalfEdge("opposite stub halves do not exist")
    split_edges = sorted({halves[i][0] for i in range(4) if cnt[nodes[i]] == 2})

    end0 = g.end0.copy()
    extra_of_edge = {}
    nextnode = g.n_nodes
    for eid in split_edges:
        end0[2 * eid + 1] = nextnode
        extra_of_edge[eid] = nextnode
        nextnode += 1
    counts = np.zeros(nextnode, np.int64)
    for bb in range(g.n_bits):
        if g.alive[bb]:
            counts[end0[bb]] += 1
            counts[g.end1[bb]] += 1
    ptr = np.zeros(nextnode + 1, np.int64)
    np.cumsum(counts, out=ptr[1:])
    nb = np.empty(ptr[-1], np.int64)
    fill = ptr[:-1].copy()
    for bb in range(g.n_bits):
        if g.alive[bb]:
            for v in (end0[bb], g.end1[bb]):
                nb[fill[v]] = bb
                fill[v] += 1
    arrays = (end0, g.end1, ptr, nb, g.dir_from, g.cut)

    def node_of(i):
        h = halves[i]
        if h[0] != "stub" and h[0] in extra_of_edge and h[1] == 1:
            return extra_of_edge[h[0]]
        return nodes[i]

    odd = [nodes[i] for i in range(4) if halves[i][0] not in extra_of_edge]
    masks = g.masks(odd)
    if split_edges:
        sel = np.ones(len(masks), bool)
        for eid in split_edges:
            sel &= bit_column(masks, g.half_bit(eid, 0)).astype(bool) \
                & bit_column(masks, g.half_bit(eid, 1)).astype(bool)
        masks = masks[sel]
    x = WS1.x ** (units(masks) / 2.0)
    srcs = sorted({node_of(i) for i in range(4)})
    wind, endnode, startbit, endbit, _, _, _ = trace_paths_arrays(arrays, masks, srcs)

    total = 0.0 + 0.0j
    for c in range(len(masks)):
        assign = {}
        winds = {}
        good = True
        for si, n in enumerate(srcs):
            en = endnode[c, si]
            if en < 0:
                continue
            i_from = [i for i in range(4) if node_of(i) == n and bits[i] == startbit[c, si]]
            i_to = [i for i in range(4) if node_of(i) == en and bits[i] == endbit[c, si]]
            if len(i_from) != 1 or len(i_to) != 1 or i_to[0] == i_from[0]:
                good = False
                break
            assign[i_from[0]] = i_to[0]
            winds[i_from[0]] = wind[c, si]
        if not good or len(assign) != 2:
            continue
        pairs = sorted((min(i, j), max(i, j)) for i, j in assign.items())
        sign = {((0, 1), (2, 3)): 1, ((0, 2), (1, 3)): -1, ((0, 3), (1, 2)): 1}.get(tuple(pairs))
        if sign is None:
            continue
        phases = 1.0 + 0.0j
        for p, q in pairs:   # the formula orients each path from its lower index
            w = winds[p] if p in winds else -winds[q]
            phases *= cmath.exp(-1j * (math.pi / 6) * w)
        (p1, q1), (p2, q2) = pairs
        pref = (1j * etas[p1].conjugate() * etas[q1]) * (1j * etas[p2].conjugate() * etas[q2])
        total += sign * pref * phases * x[c]
    val = total / eng.z
    if abs(val.imag) > 1e-9 * (1 + abs(val)):
        raise AssertionError(f"four-point not real: {val}")
    return val.real


# -- spinors -------------------------------------------------------------------


def spinor_two_point(cover: DoubleCover, a_lift, e_lift) -> float:
    """Real spinor observable F_[Omega,u]((a, sa), (e, se)).

    Lifts are (half_edge, sheet) with sheets in the reference field of the
    cover; values flip sign under either sheet flip.
    """
    dom = cover.base
    a, sa = a_lift
    e, se = e_lift
    if a == e:
        return 0.0   # F(a, a) = F(a, a*) = 0
    if a[0] == e[0] and a[0] != "stub":
        raise DuplicateHalfEdge("spinor arguments must sit on distinct edges")
    g = EnumGraph(dom)
    g.set_cut_flags(cover._crosses)
    sigma_u = _sigma_plus(dom, cover)
    if abs(sigma_u) < 1e-14:
        raise ZeroSpinExpectation("E[sigma(u)] = 0")
    z = _engine(dom).z
    na, ne = _half_node(g, a), _half_node(g, e)
    masks = g.masks([na, ne])
    x = WS1.x ** (units(masks) / 2.0)
    wind, endnode, startbit, endbit, cutpar, nloops, oddpar = trace_paths(g, masks, [na])
    sel = (endnode[:, 0] == ne) & (startbit[:, 0] == _half_bit(g, a)) \
        & (endbit[:, 0] == _half_bit(g, e))
    sheet_flip = (cutpar[:, 0] ^ ((sa ^ se) & 1)).astype(bool)
    sign = np.where(sheet_flip, -1.0, 1.0) * np.where(oddpar.astype(bool), -1.0, 1.0)
    phases = np.exp(-1j * (math.pi / 6) * wind[:, 0])
    total = complex((phases * sign * x)[sel].sum())
    eta_a, eta_e = _half_eta(dom, a), _half_eta(dom, e)
    val = 1j * eta_a.conjugate() * eta_e * total / (sigma_u * z)
    if abs(val.imag) > 1e-9 * (1 + abs(val)):
        raise AssertionError(f"spinor not real: {val}")
    return val.real


def _sigma_plus(dom: HoneycombDomain, cover: DoubleCover) -> float:
    """E+[sigma(u)] = (1/Z) sum (-1)^(loops around u) w."""
    sp = enum_space(dom, ())
    g = EnumGraph(dom)
    g.set_cut_flags(cover._crosses)
    from .configs import components
    _, oddpar, _ = components(g, sp.masks)
    w = sp.weights(WS1)
    return float((w * np.where(oddpar.astype(bool), -1.0, 1.0)).sum()) / float(w.sum())


# -- discrete calculus and the observable identities ----------------------------


def midline_halves(domain: HoneycombDomain, fkey: tuple, h: int):
    """(down, up) half-edges of the midline w^[eta], eta = WP[h]."""
    m = domain.midline(fkey, h) if h < 3 else domain.midline(fkey, h - 3).reversed()
    return m.down, m.up


def d1_s1_apply(fvals, which1: str, m_halves, second) -> float:
    """[op_1 F](w^[eta], second) for op in {partial, mean}."""
    down, up = m_halves
    if which1 == "d":
        return (fvals(up, second) - fvals(down, second)) / SQRT3
    return (fvals(up, second) + fvals(down, second)) / 2.0


def op12(fvals, op1: str, op2: str, m1_halves, m2_halves) -> float:
    """[op1_1 op2_2 F](w^[eta], w^[mu]) for ops in {"d", "s"}."""
    d1, u1 = m1_halves
    d2, u2 = m2_halves
    comb = {"d": (-1.0, 1.0, SQRT3), "s": (0.5, 0.5, 1.0)}
    a1, b1, n1 = comb[op1]
    a2, b2, n2 = comb[op2]
    tot = (a1 * a2 * fvals(d1, d2) + a1 * b2 * fvals(d1, u2)
           + b1 * a2 * fvals(u1, d2) + b1 * b2 * fvals(u1, u2))
    return tot / (n1 * n2)


def tensor_via_fermions(domain: HoneycombDomain, b, fkey: tuple, h: int) -> dict:
    """E[T^[eta]](w) and E[R^[eta]](w) via fermionic observables.

    Empty b gives the plus-boundary formulas; b = (s, s') adds the Dobrushin
    correction normalized by F(b, b').
    """
    eng = _engine(domain)
    f = eng.f_real
    mh = midline_halves(domain, fkey, h)
    # R^[eta] = R^[i eta]; the derivative formula assumes eta in {1, rho, rho^2}
    mh_r = midline_halves(domain, fkey, h % 3)
    mih_r = midline_halves(domain, fkey, h % 3 + 3)
    t_eta = C_T + (SQRT3 / 2) * op12(f, "s", "d", mh, mh)
    r_eta = C_R + SQRT3 * op12(f, "d", "d", mh_r, mih_r)
    if b:
        sb, sb2 = sorted(b)
        bh, bh2 = ("stub", sb), ("stub", sb2)
        fbb = f(bh, bh2)
        if abs(fbb) < 1e-14:
            raise ZeroDenominator("F(b, b') = 0")
        d1b = d1_s1_apply(f, "d", mh, bh)
        s1b = d1_s1_apply(f, "s", mh, bh)
        d1b2 = d1_s1_apply(f, "d", mh, bh2)
        s1b2 = d1_s1_apply(f, "s", mh, bh2)
        t_eta += (SQRT3 / 2) / fbb * (d1b * s1b2 - s1b * d1b2)
        dr1b = d1_s1_apply(f, "d", mh_r, bh)
        dr1b2 = d1_s1_apply(f, "d", mh_r, bh2)
        di1b = d1_s1_apply(f, "d", mih_r, bh)
        di1b2 = d1_s1_apply(f, "d", mih_r, bh2)
        r_eta += -SQRT3 / fbb * (dr1b * di1b2 - di1b * dr1b2)
    return {"T_eta": t_eta, "R_eta": r_eta}


def connected_two_point(fvals, field1, field2) -> float:
    """Wick-connected part for two local fields given as lists of
    (coefficient, half_a, half_b) with E[X] = const + sum coef F(a, b)."""
    tot = 0.0
    for ca, (pa, qa) in field1:
        for cb, (pb, qb) in field2:
            tot += ca * cb * (fvals(pa, pb) * fvals(qb, qa) - fvals(pa, qb) * fvals(pb, qa))
    return tot


def field_pairs(domain: HoneycombDomain, which: str, site, h: int = 0):
    """The (coefficient, pair) decomposition of a local field at n = 1."""
    if which == "T":
        d, u = midline_halves(domain, site, h)
        return [(0.5, (d, u))]
    if which == "R":
        d, u = midline_halves(domain, site, h)
        di, ui = midline_halves(domain, site, (h + 3) % 6)
        c = 1.0 / SQRT3
        return [(c, (u, ui)), (-c, (u, di)), (-c, (d, ui)), (c, (d, di))]
    if which == "epsilon":
        eid = int(site)
        o = 0 if domain.edges[eid].k0 in (0, 2, 4) else 1  # eta in {1, rho, rho^2}
        return [(-2.0, ((eid, o), (eid, 1 - o)))]
    raise ValueError(which)


def two_point_via_fermions(domain: HoneycombDomain, spec1, spec2) -> float:
    """E+[X Y] for two non-adjacent local fields via the Pfaffian structure.

    ``spec = (which, site, h)`` with which in {"T", "R", "epsilon"}.  The
    sigma-paired correlator is handled by :func:`t_sigma_ratio_via_spinor`.
    """
    e1 = spin_field_expectations(domain, (), spec1[0], spec1[1], spec1[2])
    e2 = spin_field_expectations(domain, (), spec2[0], spec2[1], spec2[2])
    f = _engine(domain).f_real
    conn = connected_two_point(f, field_pairs(domain, *spec1), field_pairs(domain, *spec2))
    return e1 * e2 + conn


def t_sigma_ratio_via_spinor(domain: HoneycombDomain, cover: DoubleCover,
                             fkey: tuple, h: int) -> float:
    """E+[T^[eta](w) sigma(u)] / E+[sigma(u)] via the spinor observable."""
    d, u = midline_halves(domain, fkey, h)
    fvals = lambda p, q: spinor_two_point(cover, (p, 0), (q, 0))
    return C_T + (SQRT3 / 2) * op12(fvals, "s", "d", (d, u), (d, u))
