"""Exact enumeration of loop configurations.

Configurations are subgraphs of the *split graph*: every lattice edge is cut
at its midpoint into two half-edge bits, boundary stubs are single bits, and
nodes are lattice vertices plus midpoints.  Every configuration space used in
the package (even subgraphs, Dobrushin ensembles, fermionic sources, midline
defects) is an affine space ``gamma0 XOR <cycle space>`` over these bits, with
``gamma0`` a T-join for the prescribed odd nodes.  Spaces are enumerated with
one Gray-code XOR per step and processed in blocks by numba kernels that
label components, count loops and trace path windings.

Edge weights are ``x**(units/2)`` where ``units`` counts present bits (a full
edge contributes two units, a half-edge or stub one).
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import TooLarge
from .lattice import HoneycombDomain

BLOCK = 1 << 16
DEFAULT_BUDGET_LOG2 = 26


class EnumGraph:
    """Split graph over which configurations are enumerated.

    Nodes ``0..V-1`` are the lattice vertices, ``V + e`` the midpoint of edge
    ``e`` and ``V + E + s`` the tip of stub ``s``.  Bit ``2*e + end`` is the
    half of edge ``e`` reaching the head of orientation ``end``; bit
    ``2*E + s`` is the stub segment.
    """

    def __init__(self, domain: HoneycombDomain, drop_bits=()):
        self.domain = domain
        V, E, S = len(domain.vertices), domain.n_edges, domain.n_stubs
        self.V, self.E, self.S = V, E, S
        self.n_nodes = V + E + S
        self.n_bits = 2 * E + S
        self.n_words = (self.n_bits + 63) // 64
        dropped = set(drop_bits)

        end0 = np.empty(self.n_bits, np.int32)
        end1 = np.empty(self.n_bits, np.int32)
        # direction index of motion when traversing the bit away from each endpoint
        dir_from = np.empty((self.n_bits, 2), np.int8)
        cut = np.zeros(self.n_bits, np.uint8)
        alive = np.ones(self.n_bits, np.uint8)
        for e, edge in enumerate(domain.edges):
            for o, head in ((0, edge.v1), (1, edge.v2)):
                b = 2 * e + o
                end0[b], end1[b] = V + e, head
                k = domain.half_edge_dir_k(e, o)
                dir_from[b, 0] = k            # from midpoint toward the head
                dir_from[b, 1] = (k + 3) % 6  # from the head toward the midpoint
                if b in dropped:
                    alive[b] = 0
        for s, stub in enumerate(domain.stubs):
            b = 2 * E + s
            end0[b], end1[b] = V + E + s, stub.vertex
            dir_from[b, 0] = stub.k_in
            dir_from[b, 1] = (stub.k_in + 3) % 6
            if b in dropped:
                alive[b] = 0

        self.end0, self.end1, self.dir_from = end0, end1, dir_from
        self.alive = alive
        self.cut = cut

        # CSR node -> incident alive bits (stubs included; spaces exclude them
        # from the cycle basis automatically since stubs are bridges)
        counts = np.zeros(self.n_nodes, np.int64)
        for b in range(self.n_bits):
            if alive[b]:
                counts[end0[b]] += 1
                counts[end1[b]] += 1
        self.node_ptr = np.zeros(self.n_nodes + 1, np.int64)
        np.cumsum(counts, out=self.node_ptr[1:])
        self.node_bits = np.empty(self.node_ptr[-1], np.int64)
        fill = self.node_ptr[:-1].copy()
        for b in range(self.n_bits):
            if alive[b]:
                for v in (end0[b], end1[b]):
                    self.node_bits[fill[v]] = b
                    fill[v] += 1

        self._build_cycle_basis()

    # node helpers ---------------------------------------------------------

    def mid_node(self, eid: int) -> int:
        return self.V + eid

    def stub_node(self, sid: int) -> int:
        return self.V + self.E + sid

    def half_bit(self, eid: int, o: int) -> int:
        return 2 * eid + o

    def stub_bit(self, sid: int) -> int:
        return 2 * self.E + sid

    def set_cut_flags(self, crosses) -> None:
        """Mark bits crossed by a branch cut; ``crosses(z1, z2) -> bool``."""
        dom = self.domain
        for e, edge in enumerate(dom.edges):
            for o, head in ((0, edge.v1), (1, edge.v2)):
                self.cut[2 * e + o] = crosses(edge.z, dom.vertex_pos[head])
        for s, stub in enumerate(dom.stubs):
            self.cut[2 * self.E + s] = crosses(stub.z, dom.vertex_pos[stub.vertex])

    # cycle space ----------------------------------------------------------

    def _build_cycle_basis(self) -> None:
        """Fundamental cycles of a spanning forest, as bit masks."""
        parent_bit = np.full(self.n_nodes, -1, np.int64)
        order = []
        seen = np.zeros(self.n_nodes, bool)
        for root in range(self.n_nodes):
            if seen[root]:
                continue
            seen[root] = True
            stack = [root]
            while stack:
                v = stack.pop()
                order.append(v)
                for i in range(self.node_ptr[v], self.node_ptr[v + 1]):
                    b = self.node_bits[i]
                    w = self.end1[b] if self.end0[b] == v else self.end0[b]
                    if not seen[w]:
                        seen[w] = True
                        parent_bit[w] = b
                        stack.append(w)
        tree_bits = set(int(b) for b in parent_bit if b >= 0)
        basis = []
        for b in range(self.n_bits):
            if not self.alive[b] or b in tree_bits:
                continue
            mask = np.zeros(self.n_words, np.uint64)
            _mask_set(mask, b)
            for v in (int(self.end0[b]), int(self.end1[b])):
                while parent_bit[v] >= 0:
                    pb = int(parent_bit[v])
                    _mask_flip(mask, pb)
                    v = int(self.end1[pb]) if int(self.end0[pb]) == v else int(self.end0[pb])
            # the two tree paths share a tail; shared bits cancelled by XOR
            basis.append(mask)
        self.basis = np.array(basis, np.uint64).reshape(len(basis), self.n_words)
        self.rank = len(basis)
        self._parent_bit = parent_bit

    def tjoin(self, odd_nodes) -> np.ndarray:
        """A subgraph with odd degree exactly at ``odd_nodes`` (tree paths)."""
        mask = np.zeros(self.n_words, np.uint64)
        for v in odd_nodes:
            v = int(v)
            while self._parent_bit[v] >= 0:
                pb = int(self._parent_bit[v])
                _mask_flip(mask, pb)
                v = int(self.end1[pb]) if int(self.end0[pb]) == v else int(self.end0[pb])
        return mask

    def masks(self, odd_nodes=(), budget_log2: int = DEFAULT_BUDGET_LOG2) -> np.ndarray:
        """All configurations with the given odd nodes, as a mask array."""
        if self.rank > budget_log2:
            raise TooLarge(f"2^{self.rank} configurations exceed the budget 2^{budget_log2}")
        gamma0 = self.tjoin(odd_nodes)
        out = np.empty((1 << self.rank, self.n_words), np.uint64)
        _gray_fill(self.basis, gamma0, out)
        return out


def _mask_set(mask: np.ndarray, b: int) -> None:
    mask[b >> 6] |= np.uint64(1 << (b & 63))


def _mask_flip(mask: np.ndarray, b: int) -> None:
    mask[b >> 6] ^= np.uint64(1 << (b & 63))


def bit_column(masks: np.ndarray, b: int) -> np.ndarray:
    """Presence of bit ``b`` in every configuration (0/1 uint8)."""
    return ((masks[:, b >> 6] >> np.uint64(b & 63)) & np.uint64(1)).astype(np.uint8)


def units(masks: np.ndarray) -> np.ndarray:
    """Number of present bits (half-edge units) per configuration."""
    return np.bitwise_count(masks).sum(axis=1).astype(np.int64)


def parity_column(masks: np.ndarray, pmask: np.ndarray) -> np.ndarray:
    """Parity of |config AND pmask| per configuration (0/1 uint8)."""
    return (np.bitwise_count(masks & pmask[None, :]).sum(axis=1) & 1).astype(np.uint8)


@njit(cache=True)
def _gray_fill(basis, gamma0, out):
    n, W = out.shape
    cur = gamma0.copy()
    for w in range(W):
        out[0, w] = cur[w]
    for i in range(1, n):
        x = i
        b = 0
        while x & 1 == 0:
            x >>= 1
            b += 1
        for w in range(W):
            cur[w] ^= basis[b, w]
            out[i, w] = cur[w]


@njit(cache=True)
def _components(masks, end0, end1, node_ptr, node_bits, cut, pair_nodes,
                out_nloops, out_oddpar, out_code):
    """Label components of every configuration.

    out_code[c, p] for a node pair (n1, n2): bit0 same component, bit1/bit2
    component of n1/n2 is a cycle, bit3/bit4 node has degree > 0.
    """
    nc, W = masks.shape
    nbits = end0.shape[0]
    nnodes = node_ptr.shape[0] - 1
    bit_stamp = np.full(nbits, -1, np.int64)
    node_stamp = np.full(nnodes, -1, np.int64)
    node_comp = np.zeros(nnodes, np.int64)
    comp_cycle = np.zeros(nbits, np.uint8)

    for c in range(nc):
        ncomp = 0
        nloops = 0
        oddpar = 0
        for b0 in range(nbits):
            if bit_stamp[b0] == c or ((masks[c, b0 >> 6] >> np.uint64(b0 & 63)) & np.uint64(1)) == np.uint64(0):
                continue
            # walk forward from end1, backward from end0 if needed
            cid = ncomp
            ncomp += 1
            is_cycle = False
            par = 0
            for direction in range(2):
                v = end1[b0] if direction == 0 else end0[b0]
                pb = b0
                if direction == 0:
                    bit_stamp[b0] = c
                    par ^= cut[b0]
                    node_stamp[end0[b0]] = c
                    node_comp[end0[b0]] = cid
                while True:
                    node_stamp[v] = c
                    node_comp[v] = cid
                    nxt = -1
                    for i in range(node_ptr[v], node_ptr[v + 1]):
                        bb = node_bits[i]
                        if bb != pb and ((masks[c, bb >> 6] >> np.uint64(bb & 63)) & np.uint64(1)) != np.uint64(0):
                            nxt = bb
                            break
                    if nxt < 0:
                        break
                    if bit_stamp[nxt] == c:
                        is_cycle = True   # closed back onto the start
                        break
                    bit_stamp[nxt] = c
                    par ^= cut[nxt]
                    v = end1[nxt] if end0[nxt] == v else end0[nxt]
                    pb = nxt
                if is_cycle:
                    break
            comp_cycle[cid] = 1 if is_cycle else 0
            if is_cycle:
                nloops += 1
                oddpar ^= par
        out_nloops[c] = nloops
        out_oddpar[c] = oddpar
        for p in range(pair_nodes.shape[0]):
            n1, n2 = pair_nodes[p, 0], pair_nodes[p, 1]
            code = 0
            if node_stamp[n1] == c:
                code |= 8
            if node_stamp[n2] == c:
                code |= 16
            if (code & 24) == 24:
                c1, c2 = node_comp[n1], node_comp[n2]
                if c1 == c2:
                    code |= 1
                if comp_cycle[c1]:
                    code |= 2
                if comp_cycle[c2]:
                    code |= 4
            out_code[c, p] = code


@njit(cache=True)
def _trace_paths(masks, end0, end1, node_ptr, node_bits, dir_from, cut,
                 src_nodes, out_wind, out_endnode, out_startbit, out_endbit,
                 out_cutpar, out_nloops, out_oddpar):
    """Trace the open path leaving each source node; count leftover loops.

    Winding is reported in units of pi/3.  A source of degree 0 (or 2) gets
    endnode = -1 (no open path starts there); degree-2 sources occur when a
    configuration runs straight through a midpoint that is not a path end.
    """
    nc = masks.shape[0]
    nbits = end0.shape[0]
    bit_stamp = np.full(nbits, -1, np.int64)
    nsrc = src_nodes.shape[0]

    for c in range(nc):
        for si in range(nsrc):
            out_endnode[c, si] = -1
            out_wind[c, si] = 0
            out_startbit[c, si] = -1
            out_endbit[c, si] = -1
            out_cutpar[c, si] = 0
        for si in range(nsrc):
            v0 = src_nodes[si]
            deg = 0
            first = -1
            for i in range(node_ptr[v0], node_ptr[v0 + 1]):
                bb = node_bits[i]
                if ((masks[c, bb >> 6] >> np.uint64(bb & 63)) & np.uint64(1)) != np.uint64(0):
                    deg += 1
                    if first < 0:
                        first = bb
            if deg != 1 or bit_stamp[first] == c:
                continue
            b = first
            bit_stamp[b] = c
            par = cut[b]
            wind = 0
            kprev = dir_from[b, 0] if end0[b] == v0 else dir_from[b, 1]
            v = end1[b] if end0[b] == v0 else end0[b]
            pb = b
            while True:
                nxt = -1
                for i in range(node_ptr[v], node_ptr[v + 1]):
                    bb = node_bits[i]
                    if bb != pb and ((masks[c, bb >> 6] >> np.uint64(bb & 63)) & np.uint64(1)) != np.uint64(0):
                        nxt = bb
                        break
                if nxt < 0:
                    break
                bit_stamp[nxt] = c
                par ^= cut[nxt]
                k = dir_from[nxt, 0] if end0[nxt] == v else dir_from[nxt, 1]
                turn = ((k - kprev + 3) % 6) - 3
                wind += turn
                kprev = k
                v = end1[nxt] if end0[nxt] == v else end0[nxt]
                pb = nxt
            out_wind[c, si] = wind
            out_endnode[c, si] = v
            out_startbit[c, si] = first
            out_endbit[c, si] = pb
            out_cutpar[c, si] = par
        # leftover components are loops (path ends are all in src_nodes)
        nloops = 0
        oddpar = 0
        for b0 in range(nbits):
            if bit_stamp[b0] == c or ((masks[c, b0 >> 6] >> np.uint64(b0 & 63)) & np.uint64(1)) == np.uint64(0):
                continue
            bit_stamp[b0] = c
            par = cut[b0]
            v = end1[b0]
            pb = b0
            closed = False
            while True:
                nxt = -1
                for i in range(node_ptr[v], node_ptr[v + 1]):
                    bb = node_bits[i]
                    if bb != pb and ((masks[c, bb >> 6] >> np.uint64(bb & 63)) & np.uint64(1)) != np.uint64(0):
                        nxt = bb
                        break
                if nxt < 0:
                    break
                if bit_stamp[nxt] == c:
                    closed = True
                    break
                bit_stamp[nxt] = c
                par ^= cut[nxt]
                v = end1[nxt] if end0[nxt] == v else end0[nxt]
                pb = nxt
            if closed:
                nloops += 1
                oddpar ^= par
        out_nloops[c] = nloops
        out_oddpar[c] = oddpar


def components(graph: EnumGraph, masks: np.ndarray, pair_nodes=None):
    """Run the component kernel; returns (nloops, oddpar, paircode)."""
    nc = masks.shape[0]
    pairs = np.zeros((0, 2), np.int64) if pair_nodes is None else np.asarray(pair_nodes, np.int64).reshape(-1, 2)
    nloops = np.empty(nc, np.int16)
    oddpar = np.empty(nc, np.uint8)
    code = np.empty((nc, pairs.shape[0]), np.uint8)
    _components(masks, graph.end0, graph.end1, graph.node_ptr, graph.node_bits,
                graph.cut, pairs, nloops, oddpar, code)
    return nloops, oddpar, code


def trace_paths(graph: EnumGraph, masks: np.ndarray, src_nodes):
    src = np.asarray(src_nodes, np.int64)
    nc = masks.shape[0]
    wind = np.empty((nc, src.size), np.int32)
    endnode = np.empty((nc, src.size), np.int64)
    startbit = np.empty((nc, src.size), np.int64)
    endbit = np.empty((nc, src.size), np.int64)
    cutpar = np.empty((nc, src.size), np.uint8)
    nloops = np.empty(nc, np.int16)
    oddpar = np.empty(nc, np.uint8)
    _trace_paths(masks, graph.end0, graph.end1, graph.node_ptr, graph.node_bits,
                 graph.dir_from, graph.cut, src, wind, endnode, startbit, endbit,
                 cutpar, nloops, oddpar)
    return wind, endnode, startbit, endbit, cutpar, nloops, oddpar
