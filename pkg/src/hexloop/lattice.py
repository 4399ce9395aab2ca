"""Honeycomb lattice geometry: discrete domains, half-edges, corners, midlines,
double covers and path winding.

Conventions (mesh delta):

* face centers sit on the triangular lattice ``c(p, q) = sqrt(3)*delta*(p*i + q*lam)``
  with ``lam = exp(i*pi/6)``;
* every face has six vertices at offsets ``delta*exp(i*k*pi/3)``; vertices split
  into two classes, R at offset 0 and L at offset 60 degrees, and every vertex
  has a unique canonical key ``(p, q, cls)``;
* edges are keyed ``(p, q, j)`` by the face owning their midpoint, with
  midpoints at angles 30/90/150 degrees (j = 0, 1, 2) from that center;
* oriented half-edges are ``(edge_id, o)``; ``o = 0`` is the orientation whose
  direction index lies in {0, 1, 2} (angles 0/60/120).

Direction index k means the unit vector ``exp(i*k*pi/3)``.  The fixed square
root of each direction is ``sqrt(rho^(2j)) = rho^j`` and
``sqrt(-rho^(2j)) = i*rho^j`` where ``rho = exp(i*pi/3)``.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import BoundaryFace, DisconnectedPath, EmptyDomain, HexloopError

RHO = cmath.exp(1j * math.pi / 3)
LAM = cmath.exp(1j * math.pi / 6)  # face-lattice step, |LAM| = 1
SQRT3 = math.sqrt(3.0)

#: unit direction for every direction index k
DIR = [cmath.exp(1j * k * math.pi / 3) for k in range(6)]

#: the set of admissible square roots, in the order [1, rho, rho^2, i, i*rho, i*rho^2]
WP = [1, RHO, RHO**2, 1j, 1j * RHO, 1j * RHO**2]

#: sqrt(direction k) as an index into WP: k=0,2,4 -> rho^(k/2); k=3,5,1 -> i*rho^((k-3)/2)
ETA_IDX_OF_K = [0, 5, 1, 3, 2, 4]

#: direction index of eta^2 for eta = WP[h]
K_OF_ETA_IDX = [0, 2, 4, 3, 5, 1]

# face-lattice steps (dp, dq), step m points at angle 30 + 60*m degrees
FACE_STEPS = [(0, 1), (1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1)]


def eta_of_k(k: int) -> complex:
    """Fixed square root of the direction exp(i*k*pi/3)."""
    return WP[ETA_IDX_OF_K[k % 6]]


@dataclass(frozen=True)
class Direction:
    """One of the six edge directions together with its fixed square root."""

    k: int

    @property
    def value(self) -> complex:
        return DIR[self.k % 6]

    @property
    def sqrt(self) -> complex:
        return eta_of_k(self.k)


@dataclass
class Edge:
    key: tuple        # (p, q, j)
    v1: int           # head of orientation o=0
    v2: int           # head of orientation o=1
    z: complex        # midpoint
    k0: int           # direction index of orientation o=0 (in {0,1,2})
    faces: tuple      # the two adjacent face keys (either may be absent from the domain)


@dataclass
class Stub:
    """Boundary half-edge attached to a degree-2 boundary vertex.

    The segment runs from the vertex outward to the midpoint ``z`` of the
    missing edge; ``k_in`` is the direction index pointing from ``z`` back
    into the domain (the orientation used by observables and boundary
    conditions).
    """

    vertex: int
    edge_key: tuple
    z: complex
    k_in: int


@dataclass
class Corner:
    """Pair of adjacent (half-)edges sharing a vertex and a lattice face."""

    vertex: int
    face_key: tuple   # key of the face between the two edges (may be outside the domain)
    sides: tuple      # two midedge ids (edge ids or stub ids offset by n_edges)
    eta_idx: int      # projection line is WP[eta_idx] * R


class HoneycombDomain:
    """A finite, simply connected piece of the honeycomb lattice.

    Built from a list of face keys ``(p, q)``.  Exposes faces, vertices,
    edges, boundary half-edges (stubs), corners and midlines, all indexed by
    small integers; midedge ids run over edges first, then stubs.
    """

    def __init__(self, faces: Sequence[tuple], mesh: float = 1.0, origin: complex = 0.0):
        if not faces:
            raise EmptyDomain("no faces")
        self.mesh = float(mesh)
        self.origin = complex(origin)
        self.faces = sorted(set(map(tuple, faces)))
        self.face_index = {f: i for i, f in enumerate(self.faces)}
        self._build()

    # -- construction -----------------------------------------------------

    def face_center(self, fkey: tuple) -> complex:
        p, q = fkey
        return self.origin + SQRT3 * self.mesh * (p * 1j + q * LAM)

    def _vertex_pos(self, vkey: tuple) -> complex:
        p, q, cls = vkey
        off = self.mesh if cls == 0 else self.mesh * RHO
        return self.face_center((p, q)) + off

    @staticmethod
    def _face_edge_keys(f: tuple):
        p, q = f
        return [(p, q, 0), (p, q, 1), (p, q, 2), (p, q - 1, 0), (p - 1, q, 1), (p - 1, q + 1, 2)]

    @staticmethod
    def _edge_vertices(ekey: tuple):
        # canonical endpoint keys; first entry is the head of orientation o=0
        p, q, j = ekey
        if j == 0:
            return (p, q, 1), (p, q, 0)          # L(p,q), R(p,q)
        if j == 1:
            return (p, q, 1), (p + 1, q - 1, 0)  # L(p,q), R(p+1,q-1)
        return (p + 1, q - 1, 0), (p, q - 1, 1)  # R(p+1,q-1), L(p,q-1)

    @staticmethod
    def _edge_faces(ekey: tuple):
        p, q, j = ekey
        if j == 0:
            return (p, q), (p, q + 1)
        if j == 1:
            return (p, q), (p + 1, q)
        return (p, q), (p + 1, q - 1)

    def _build(self) -> None:
        d = self.mesh
        edge_keys: dict[tuple, None] = {}
        for f in self.faces:
            for ek in self._face_edge_keys(f):
                edge_keys.setdefault(ek)
        self.edge_index: dict[tuple, int] = {}
        self.edges: list[Edge] = []
        vkeys: dict[tuple, int] = {}
        self.vertices: list[tuple] = []
        self.vertex_pos: list[complex] = []

        def vid(vk: tuple) -> int:
            if vk not in vkeys:
                vkeys[vk] = len(self.vertices)
                self.vertices.append(vk)
                self.vertex_pos.append(self._vertex_pos(vk))
            return vkeys[vk]

        for ek in edge_keys:
            p, q, j = ek
            vk1, vk2 = self._edge_vertices(ek)
            mid = self.face_center((p, q)) + (SQRT3 * d / 2) * cmath.exp(1j * (math.pi / 6 + j * math.pi / 3))
            k0 = (2, 0, 1)[j]
            self.edge_index[ek] = len(self.edges)
            self.edges.append(Edge(ek, vid(vk1), vid(vk2), mid, k0, self._edge_faces(ek)))

        self.n_edges = len(self.edges)
        self.vertex_edges: list[list[int]] = [[] for _ in self.vertices]
        for ei, e in enumerate(self.edges):
            self.vertex_edges[e.v1].append(ei)
            self.vertex_edges[e.v2].append(ei)

        # boundary stubs at degree-2 vertices: the missing third edge slot
        self.stubs: list[Stub] = []
        self.vertex_stub: list[int | None] = [None] * len(self.vertices)
        for vi, incident in enumerate(self.vertex_edges):
            if len(incident) == 2:
                present = set(self.edges[ei].key for ei in incident)
                vk = self.vertices[vi]
                # candidate edge keys at this vertex: all edges of the faces around it
                cands = set()
                for fk in self._faces_at_vertex(vk):
                    for ek in self._face_edge_keys(fk):
                        if vk in self._edge_vertices(ek):
                            cands.add(ek)
                missing = [ek for ek in cands if ek not in present]
                if len(missing) != 1:
                    raise HexloopError(f"vertex {vk}: expected one missing edge, got {missing}")
                ek = missing[0]
                p, q, j = ek
                mid = self.face_center((p, q)) + (SQRT3 * d / 2) * cmath.exp(1j * (math.pi / 6 + j * math.pi / 3))
                k0 = (2, 0, 1)[j]
                head0 = self._edge_vertices(ek)[0]
                # inward direction points from the missing-edge midpoint to the
                # vertex; orientation o=0 points at head0 with direction k0
                k_in = k0 if head0 == vk else (k0 + 3) % 6
                self.vertex_stub[vi] = len(self.stubs)
                self.stubs.append(Stub(vi, ek, mid, k_in))
            elif len(incident) != 3:
                raise HexloopError(f"vertex {self.vertices[vi]} has degree {len(incident)}")

        self.n_stubs = len(self.stubs)
        self.n_mid = self.n_edges + self.n_stubs   # midedge ids: edges then stubs

        # simple connectivity: F - E + V = 1 for a disc-like complex
        if len(self.faces) - self.n_edges + len(self.vertices) != 1:
            raise HexloopError("domain is not simply connected")

        self._build_corners()

    @staticmethod
    def _faces_at_vertex(vk: tuple):
        p, q, cls = vk
        if cls == 0:   # R(p,q)
            return [(p, q), (p, q + 1), (p - 1, q + 1)]
        return [(p, q), (p, q + 1), (p + 1, q)]

    # corner type of (vertex class, adjacent face), as an index into WP
    _R_TYPES = {0: 3, 1: 4, 2: 5}   # faces (p,q), (p,q+1), (p-1,q+1) -> i, i*rho, i*rho^2
    _L_TYPES = {0: 1, 1: 0, 2: 2}   # faces (p,q), (p,q+1), (p+1,q)  -> rho, 1, rho^2

    def corner_type(self, vi: int, fkey: tuple) -> int:
        p, q, cls = self.vertices[vi]
        rel = self._faces_at_vertex((p, q, cls)).index(fkey)
        return (self._R_TYPES if cls == 0 else self._L_TYPES)[rel]

    def _build_corners(self) -> None:
        self.corners: list[Corner] = []
        for vi in range(len(self.vertices)):
            sides = list(self.vertex_edges[vi])
            if self.vertex_stub[vi] is not None:
                sides.append(self.n_edges + self.vertex_stub[vi])
            byface: dict[tuple, list[int]] = {}
            for mid_id in sides:
                ekey = self.edges[mid_id].key if mid_id < self.n_edges else self.stubs[mid_id - self.n_edges].edge_key
                for fk in self._edge_faces(ekey):
                    if self.vertices[vi] in map(tuple, self._edge_vertices(ekey)) and fk in self._faces_at_vertex(self.vertices[vi]):
                        byface.setdefault(fk, []).append(mid_id)
            for fk, pair in sorted(byface.items()):
                if len(pair) == 2:
                    self.corners.append(Corner(vi, fk, tuple(pair), self.corner_type(vi, fk)))

    # -- lookups -----------------------------------------------------------

    def midedge_z(self, mid_id: int) -> complex:
        if mid_id < self.n_edges:
            return self.edges[mid_id].z
        return self.stubs[mid_id - self.n_edges].z

    def half_edge_dir_k(self, mid_id: int, o: int) -> int:
        """Direction index of the half-edge (mid_id, o); for stubs o=0 is inward."""
        if mid_id < self.n_edges:
            k0 = self.edges[mid_id].k0
            return k0 if o == 0 else (k0 + 3) % 6
        k_in = self.stubs[mid_id - self.n_edges].k_in
        return k_in if o == 0 else (k_in + 3) % 6

    def half_edge_eta(self, mid_id: int, o: int) -> complex:
        return eta_of_k(self.half_edge_dir_k(mid_id, o))

    def half_edge_head(self, eid: int, o: int) -> int:
        e = self.edges[eid]
        return e.v1 if o == 0 else e.v2

    def edge_degree_inner(self, eid: int) -> bool:
        e = self.edges[eid]
        return len(self.vertex_edges[e.v1]) == 3 and len(self.vertex_edges[e.v2]) == 3

    def face_edge_ids(self, fkey: tuple) -> list[int]:
        """Edge ids of a face, listed counterclockwise starting from the 30-degree edge."""
        return [self.edge_index[ek] for ek in self._face_edge_keys(fkey)]

    def neighbor_face(self, fkey: tuple, k_nu: int) -> tuple:
        """Face adjacent to ``fkey`` across the edge orthogonal to direction i*nu, nu = DIR[k_nu]."""
        m = (k_nu - 2) % 6
        dp, dq = FACE_STEPS[m]
        return (fkey[0] + dp, fkey[1] + dq)

    def shared_edge(self, fkey: tuple, k_nu: int) -> int:
        m = (k_nu - 2) % 6
        return self.face_edge_ids(fkey)[m]

    def has_face(self, fkey: tuple) -> bool:
        return tuple(fkey) in self.face_index

    # -- midlines ----------------------------------------------------------

    def midline(self, fkey: tuple, h: int) -> "Midline":
        """Oriented midline w^[eta] of face ``fkey`` with eta = WP[h].

        The midline points in the direction i*eta^2; its endpoints are the
        midpoints of the two edges of the face oriented along eta^2.  The
        half-edges ``down`` (at the start) and ``up`` (at the end) both point
        in the direction eta^2.
        """
        k2 = K_OF_ETA_IDX[h]
        e_down = self.shared_edge(fkey, k2)          # edge containing the start
        e_up = self.shared_edge(fkey, (k2 + 3) % 6)  # opposite edge
        o = 0 if k2 in (0, 1, 2) else 1
        return Midline(fkey, h, e_down, e_up, (e_down, o), (e_up, o))

    def midlines(self, fkey: tuple) -> list["Midline"]:
        return [self.midline(fkey, h) for h in range(3)]

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "mesh": self.mesh,
            "faces": [
                {"id": i, "cx": self.face_center(f).real, "cy": self.face_center(f).imag}
                for i, f in enumerate(self.faces)
            ],
            "edges": [{"id": i, "v1": e.v1, "v2": e.v2} for i, e in enumerate(self.edges)],
            "boundary": [2 * self.n_edges + s for s in range(self.n_stubs)],
        }
        return json.dumps(doc, indent=1)


@dataclass
class Midline:
    face: tuple
    h: int                 # eta = WP[h]
    u_edge: int
    v_edge: int
    down: tuple            # half-edge (edge_id, o) at the start, direction eta^2
    up: tuple              # half-edge (edge_id, o) at the end, direction eta^2

    def reversed(self) -> "Midline":
        """The same segment oriented oppositely, w^[i*eta]."""
        flip = {0: 3, 1: 4, 2: 5, 3: 0, 4: 1, 5: 2}
        return Midline(self.face, flip[self.h], self.v_edge, self.u_edge,
                       (self.v_edge, 1 - self.down[1]), (self.u_edge, 1 - self.up[1]))


# -- shape builders ---------------------------------------------------------


def _hex_distance(p: int, q: int) -> int:
    return (abs(p) + abs(q) + abs(p + q)) // 2


def build_domain(shape: str, mesh: float) -> HoneycombDomain:
    """Build a discrete domain from a named shape spec.

    Supported specs: ``hex_flower(k)``, ``disc(r)``, ``half_disc(r)``,
    ``rectangle(a,b)``.  A face belongs to the domain when its closed hexagon
    lies inside the open continuous region; the result is the largest
    connected component of those faces.
    """
    if mesh <= 0:
        raise EmptyDomain("mesh must be positive")
    name, args = _parse_shape(shape)
    if name == "hex_flower":
        k = int(args[0])
        faces = [(p, q) for p in range(-k, k + 1) for q in range(-k, k + 1)
                 if _hex_distance(p, q) <= k]
        return HoneycombDomain(faces, mesh)

    if name == "disc":
        r = args[0]
        inside = lambda z: abs(z) < r
        bound = r
    elif name == "half_disc":
        r = args[0]
        inside = lambda z: abs(z) < r and z.imag > 1e-12 * mesh
        bound = r
    elif name == "rectangle":
        a, b = args[0], args[1]
        inside = lambda z: abs(z.real) < a / 2 and abs(z.imag) < b / 2
        bound = math.hypot(a, b)
    else:
        raise EmptyDomain(f"unknown shape {shape!r}")

    dom0 = HoneycombDomain([(0, 0)], mesh)  # throwaway, for geometry helpers
    lim = int(bound / (SQRT3 * mesh)) + 2
    faces = []
    for p in range(-lim, lim + 1):
        for q in range(-lim, lim + 1):
            c = dom0.face_center((p, q))
            if abs(c) > bound + 2 * mesh:
                continue
            if all(inside(c + mesh * DIR[k]) for k in range(6)):
                faces.append((p, q))
    if not faces:
        raise EmptyDomain(f"no hexagon of mesh {mesh} fits in {shape}")
    faces = _largest_component(faces)
    return HoneycombDomain(faces, mesh)


def domain_from_faces(faces: Iterable[tuple], mesh: float = 1.0) -> HoneycombDomain:
    return HoneycombDomain(list(faces), mesh)


def _parse_shape(shape: str):
    shape = shape.strip()
    if "(" not in shape or not shape.endswith(")"):
        raise EmptyDomain(f"malformed shape spec {shape!r}")
    name, rest = shape.split("(", 1)
    args = [float(tok) for tok in rest[:-1].split(",") if tok.strip()]
    return name.strip(), args


def _largest_component(faces: list[tuple]) -> list[tuple]:
    faceset = set(faces)
    seen: set[tuple] = set()
    best: list[tuple] = []
    for start in faces:
        if start in seen:
            continue
        comp, stack = [], [start]
        seen.add(start)
        while stack:
            f = stack.pop()
            comp.append(f)
            for dp, dq in FACE_STEPS:
                g = (f[0] + dp, f[1] + dq)
                if g in faceset and g not in seen:
                    seen.add(g)
                    stack.append(g)
        if len(comp) > len(best):
            best = comp
    return best


# -- winding ----------------------------------------------------------------


def winding(steps: Sequence[tuple], domain: HoneycombDomain) -> float:
    """Total rotation angle along a chain of oriented (half-)edge traversals.

    ``steps`` is a sequence of (mid_id, o) pairs; consecutive traversals must
    share the vertex in which the previous one ends.  Turn angles at honeycomb
    vertices are multiples of pi/3, counterclockwise positive.
    """
    if not steps:
        return 0.0
    total = 0.0
    for (m1, o1), (m2, o2) in zip(steps, steps[1:]):
        if m1 < domain.n_edges and m2 < domain.n_edges:
            if domain.half_edge_head(m1, o1) != domain.half_edge_head(m2, 1 - o2):
                raise DisconnectedPath("consecutive steps do not share a vertex")
        k1 = domain.half_edge_dir_k(m1, o1)
        k2 = domain.half_edge_dir_k(m2, o2)
        turn = ((k2 - k1 + 3) % 6) - 3  # in {-3,...,2}; +-3 cannot occur on a walk
        total += turn * (math.pi / 3)
    return total


# -- double cover ------------------------------------------------------------


class DoubleCover:
    """Double cover of a domain branching around one inner face.

    The branch cut is the horizontal ray from slightly above the face center
    going left (direction -1), realized by exact segment/ray crossing tests.
    ``edge_cut[e]`` flags edges crossed by the ray (used for loop parity);
    ``sigma[mid]`` is a reference sheet bit per midedge obtained by crossing
    counts along straight segments between adjacent midedges.  Lifted elements
    are pairs (base element, sheet bit); the involution * flips the bit.
    """

    def __init__(self, base: HoneycombDomain, u_face: tuple):
        u_face = tuple(u_face)
        if not base.has_face(u_face):
            raise BoundaryFace(f"{u_face} is not a face of the domain")
        if any(len(base.vertex_edges[vi]) != 3
               for eid in base.face_edge_ids(u_face)
               for vi in (base.edges[eid].v1, base.edges[eid].v2)):
            raise BoundaryFace(f"{u_face} touches the boundary")
        self.base = base
        self.branch_face = u_face
        c = base.face_center(u_face)
        self._ray_y = c.imag + SQRT3 * base.mesh / 8
        self._ray_x = c.real

        self.edge_cut = [self._crosses(base.vertex_pos[e.v1], base.vertex_pos[e.v2])
                         for e in base.edges]
        for s in base.stubs:
            v = base.vertex_pos[s.vertex]
            self.edge_cut.append(self._crosses(v, s.z))
        self.sigma = self._midedge_sheets()

    def _crosses(self, z1: complex, z2: complex) -> bool:
        """Does the open segment (z1, z2) cross the leftward ray?"""
        y1, y2 = z1.imag - self._ray_y, z2.imag - self._ray_y
        if y1 * y2 >= 0:
            return False
        x = z1.real + (z2.real - z1.real) * (-y1) / (y2 - y1)
        return x < self._ray_x

    def hop_cross(self, mid1: int, mid2: int) -> bool:
        return self._crosses(self.base.midedge_z(mid1), self.base.midedge_z(mid2))

    def _midedge_sheets(self) -> list[int]:
        base = self.base
        sigma = [-1] * base.n_mid
        adj: list[list[int]] = [[] for _ in range(base.n_mid)]
        for c in base.corners:
            a, b = c.sides
            adj[a].append(b)
            adj[b].append(a)
        sigma[0] = 0
        stack = [0]
        while stack:
            m = stack.pop()
            for m2 in adj[m]:
                if sigma[m2] < 0:
                    sigma[m2] = sigma[m] ^ int(self.hop_cross(m, m2))
                    stack.append(m2)
        if any(s < 0 for s in sigma):
            raise HexloopError("midedge corner graph is disconnected")
        return sigma

    def loop_parity(self, edge_ids: Iterable[int]) -> int:
        """Sheet-flip parity of a closed loop given by its edge set."""
        return sum(int(self.edge_cut[e]) for e in edge_ids) % 2


def double_cover(domain: HoneycombDomain, u_face: tuple) -> DoubleCover:
    return DoubleCover(domain, u_face)
