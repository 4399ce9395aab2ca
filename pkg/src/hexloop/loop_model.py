"""Partition functions and deformed partition functions of the loop O(n) model.

A configuration with boundary set ``b`` (an even set of boundary stubs) has
weight ``x**#edges * n**#loops`` with half-edges counted one half.  Deformed
partition functions replace the two dual triangles at an edge by a rhombus of
angle theta (undeformed at pi/3) or insert a sliver rhombus of angle theta at
a midline (undeformed at 0).  Configurations on the deformed surface map to
defect configurations on the honeycomb lattice; the five non-empty local
classes carry the rhombus weights u1, u2, v, w1, w2.

Near an edge e = (u, v) the classes are: c1 (e absent, one endpoint passed),
c2 (e taken, turning path), c3 (e taken, straight path), c4 (e absent, both
endpoints passed) and c5 (degree 3 at both endpoints, a double edge).  The
degree-3 class counts ``#edges(gamma - e) - 2`` edges and its loop count is
that of gamma - e increased by one when u and v lie on a common component of
gamma - e, decreased by one when they lie on distinct components at least one
of which is a loop (side-respecting surgery merges or splits components).

Near a midline m with endpoints on edges e, f the classes are: d1 (one of
e, f fully present), d2/d3 (m taken plus one half of each of e, f, on the
same/different sides), d4 (e and f present, m absent) and d5 (degree 3, the
d4 configuration plus m).  The midline is never counted as an edge and the
halves of e, f count one half each.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .configs import EnumGraph, bit_column, components, units
from .errors import NotInner, OddBoundary
from .lattice import HoneycombDomain, K_OF_ETA_IDX, Midline
from .weights import WeightSystem, rhombus_weights

__all__ = [
    "partition_function", "deformed_partition", "edge_class_sums",
    "midline_class_sums", "EdgeSums", "MidlineSums", "enum_space",
]


@dataclass
class EdgeSums:
    """Weighted sums over the five defect classes at an edge, plus the rest."""

    empty: float
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float   # with the modified (-2 edges, +-1 loops) weights
    z: float    # undeformed partition function = empty + c1 + c2 + c3 + c4


@dataclass
class MidlineSums:
    empty: float
    d1: float
    d2: float
    d3: float
    d4: float
    d5: float   # modified weights
    z: float    # = empty + d1 + d4


class _Space:
    """Cached enumeration of one boundary-condition sector over a graph."""

    def __init__(self, domain: HoneycombDomain, graph: EnumGraph, odd_nodes):
        self.domain = domain
        self.graph = graph
        self.masks = graph.masks(odd_nodes)
        self.units = units(self.masks)
        nl, op, _ = components(graph, self.masks)
        self.nloops = nl.astype(np.int64)
        self.oddpar = op
        self._pair_cache: dict = {}

    def pair_codes(self, pair: tuple) -> np.ndarray:
        if pair not in self._pair_cache:
            # one component pass serves every site: batch the standard pairs
            pairs = {pair}
            g, dom = self.graph, self.domain
            for eid in range(dom.n_edges):
                if dom.edge_degree_inner(eid):
                    e = dom.edges[eid]
                    pairs.add((e.v1, e.v2))
            for fkey in dom.faces:
                for h in range(3):
                    m = dom.midline(fkey, h)
                    pairs.add((g.mid_node(m.u_edge), g.mid_node(m.v_edge)))
            pairs = [p for p in pairs if p not in self._pair_cache]
            _, _, code = components(g, self.masks, pairs)
            for i, p in enumerate(pairs):
                self._pair_cache[p] = code[:, i]
        return self._pair_cache[pair]

    def weights(self, ws: WeightSystem) -> np.ndarray:
        return ws.x ** (self.units / 2.0) * _npow(ws.n, self.nloops)


class _SlitSpace(_Space):
    """Space over a domain with some bits removed (slit domains)."""

    def __init__(self, domain: HoneycombDomain, drop_bits, odd_nodes):
        graph = EnumGraph(domain, drop_bits=drop_bits)
        super().__init__(domain, graph, odd_nodes)


def enum_space(domain: HoneycombDomain, bc=()) -> _Space:
    bc = tuple(sorted(bc))
    if len(bc) % 2:
        raise OddBoundary(f"|b| = {len(bc)} is odd")
    cache = getattr(domain, "_space_cache", None)
    if cache is None:
        cache = domain._space_cache = {}
    if bc not in cache:
        graph = EnumGraph(domain)
        odd = [graph.stub_node(s) for s in bc]
        cache[bc] = _Space(domain, graph, odd)
    return cache[bc]


def partition_function(domain: HoneycombDomain, b, ws: WeightSystem) -> float:
    """Z = sum over configurations of x^#edges n^#loops, by exact enumeration."""
    sp = enum_space(domain, b)
    return float(np.sum(sp.weights(ws)))


def _npow(n: float, exps: np.ndarray) -> np.ndarray:
    """n**exps with the conventions 0**0 = 1 (and negative exponents never
    carrying weight at n = 0)."""
    exps = np.asarray(exps)
    if float(n) == 0.0:
        return (exps == 0).astype(float)
    return float(n) ** exps


_LSHIFT = 6
_LOFF = 4


def _hist(sel, u, l):
    """Sparse (units, loops) histogram of the selected configurations."""
    key = (u[sel] << _LSHIFT) + (l[sel] + _LOFF)
    if key.size == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.unique(key, return_counts=True)


def _hist_eval(hist, ws: WeightSystem) -> float:
    key, cnt = hist
    if key.size == 0:
        return 0.0
    u = (key >> _LSHIFT).astype(np.float64)
    l = (key & ((1 << _LSHIFT) - 1)) - _LOFF
    return float(np.sum(cnt * ws.x ** (u / 2.0) * _npow(ws.n, l)))


def _edge_site_stats(sp: _Space, eid: int) -> dict:
    domain, g = sp.domain, sp.graph
    if not domain.edge_degree_inner(eid):
        raise NotInner(f"edge {eid} touches the boundary")
    edge = domain.edges[eid]
    u, l = sp.units, sp.nloops

    e_in = bit_column(sp.masks, g.half_bit(eid, 0)).astype(bool)
    near = []   # per endpoint: (presence of the two other edges' halves, line classes)
    for vtx in (edge.v1, edge.v2):
        bits, lines = [], []
        for eo in domain.vertex_edges[vtx]:
            if eo == eid:
                continue
            o = 0 if domain.edges[eo].v1 == vtx else 1
            bits.append(bit_column(sp.masks, g.half_bit(eo, o)).astype(bool))
            lines.append(domain.edges[eo].k0 % 3)
        near.append((bits, lines))
    (bu, lu), (bv, lv) = near
    du2, dv2 = bu[0] & bu[1], bv[0] & bv[1]
    du0, dv0 = ~bu[0] & ~bu[1], ~bv[0] & ~bv[1]

    c2_sel = np.zeros(len(u), bool)
    c3_sel = np.zeros(len(u), bool)
    for i in range(2):
        for j in range(2):
            sel = e_in & bu[i] & ~bu[1 - i] & bv[j] & ~bv[1 - j]
            if lu[i] == lv[j]:
                c3_sel |= sel
            else:
                c2_sel |= sel
    c4_sel = ~e_in & du2 & dv2

    code = sp.pair_codes((edge.v1, edge.v2))
    same = (code & 1).astype(bool)
    anyloop = (code & 6) != 0
    dloop = np.where(same, 1, np.where(anyloop, -1, 0))

    return {
        "empty": _hist(~e_in & du0 & dv0, u, l),
        "c1": _hist(~e_in & ((du2 & dv0) | (du0 & dv2)), u, l),
        "c2": _hist(c2_sel, u, l),
        "c3": _hist(c3_sel, u, l),
        "c4": _hist(c4_sel, u, l),
        "c5": _hist(c4_sel, u - 4, l + dloop),
    }


def _midline_site_stats(sp: _Space, m: Midline) -> dict:
    domain, g = sp.domain, sp.graph
    e, f = m.u_edge, m.v_edge
    u, l = sp.units, sp.nloops
    e_in = bit_column(sp.masks, g.half_bit(e, 0)).astype(bool)
    f_in = bit_column(sp.masks, g.half_bit(f, 0)).astype(bool)
    d4_sel = e_in & f_in

    code = sp.pair_codes((g.mid_node(e), g.mid_node(f)))
    same = (code & 1).astype(bool)
    anyloop = (code & 6) != 0
    dloop = np.where(same, 1, np.where(anyloop, -1, 0))

    # joined classes: one half of e and one of f, linked through the midline
    o_plus_e = 0 if domain.edges[e].k0 == K_OF_ETA_IDX[m.h] else 1
    o_plus_f = 0 if domain.edges[f].k0 == K_OF_ETA_IDX[m.h] else 1
    delta = g.tjoin([g.mid_node(e), g.mid_node(f)])
    jmasks = sp.masks ^ delta[None, :]
    ju = units(jmasks)
    jl, _, jcode = components(g, jmasks, [(g.mid_node(e), g.mid_node(f))])
    jle = jl.astype(np.int64) + (jcode[:, 0] & 1)
    se = bit_column(jmasks, g.half_bit(e, o_plus_e)).astype(bool)
    sf = bit_column(jmasks, g.half_bit(f, o_plus_f)).astype(bool)

    return {
        "empty": _hist(~e_in & ~f_in, u, l),
        "d1": _hist(e_in ^ f_in, u, l),
        "d4": _hist(d4_sel, u, l),
        "d5": _hist(d4_sel, u, l + dloop),
        "d2": _hist(se == sf, ju, jle),
        "d3": _hist(se != sf, ju, jle),
    }


def _site_stats(sp: _Space, site) -> dict:
    cache = getattr(sp, "_site_cache", None)
    if cache is None:
        cache = sp._site_cache = {}
    key = ("m", site.face, site.h % 3) if isinstance(site, Midline) else ("e", int(site))
    if key not in cache:
        if isinstance(site, Midline):
            cache[key] = _midline_site_stats(sp, site if site.h < 3 else site.reversed())
        else:
            cache[key] = _edge_site_stats(sp, int(site))
    return cache[key]


def edge_class_sums(domain: HoneycombDomain, b, ws: WeightSystem, eid: int) -> EdgeSums:
    return edge_class_sums_space(enum_space(domain, b), ws, eid)


def edge_class_sums_space(sp: _Space, ws: WeightSystem, eid: int) -> EdgeSums:
    st = _site_stats(sp, int(eid))
    vals = {k: _hist_eval(h, ws) for k, h in st.items()}
    z = vals["empty"] + vals["c1"] + vals["c2"] + vals["c3"] + vals["c4"]
    return EdgeSums(vals["empty"], vals["c1"], vals["c2"], vals["c3"],
                    vals["c4"], vals["c5"], z)


def midline_class_sums(domain: HoneycombDomain, b, ws: WeightSystem, m: Midline) -> MidlineSums:
    return midline_class_sums_space(enum_space(domain, b), ws, m)


def midline_class_sums_space(sp: _Space, ws: WeightSystem, m: Midline) -> MidlineSums:
    st = _site_stats(sp, m)
    vals = {k: _hist_eval(h, ws) for k, h in st.items()}
    z = vals["empty"] + vals["d1"] + vals["d4"]
    return MidlineSums(vals["empty"], vals["d1"], vals["d2"], vals["d3"],
                       vals["d4"], vals["d5"], z)


def deformed_partition(domain: HoneycombDomain, b, ws: WeightSystem, site, theta: float) -> float:
    """Z of the lattice deformed at one edge (theta near pi/3) or midline (near 0).

    ``site`` is an edge id or a :class:`Midline`.
    """
    w = rhombus_weights(theta, ws)
    if isinstance(site, Midline):
        s = midline_class_sums(domain, b, ws, site)
        return (s.empty + s.d1 * w.u1 + s.d4 * w.w1 + s.d5 * w.w2
                + s.d2 * w.u2 + s.d3 * w.v)
    s = edge_class_sums(domain, b, ws, int(site))
    x = ws.x
    return (s.empty + s.c1 * w.u1 / x + s.c2 * w.u2 / x**2 + s.c3 * w.v / x**2
            + s.c4 * w.w1 / x**2 + s.c5 * w.w2)
