"""S-holomorphicity, the triangular-lattice Green's function, the full-plane
fermionic observable and polynomial-time boundary value solvers.

A midedge function F is s-holomorphic when its orthogonal projections onto
the corner lines eta(c) R agree across every corner.  The brute-force
observable F(a, .) is s-holomorphic except at the two corners at the head of
a, where F(a, z_a) + conj(eta_a) satisfies the relation instead (defect of
modulus one).

The full-plane observable is built from its six corner projections, each a
finite combination of triangular-lattice Green's function values around the
source; midedge values are recovered from two flanking projections.  The
boundary value solvers assemble one real projection equation per corner and
one boundary-phase equation per stub into a square sparse system.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import MissingValue, NotSHolomorphic, OutOfRange, SingularSystem
from .lattice import DIR, DoubleCover, HoneycombDomain, SQRT3, WP, eta_of_k

EULER_GAMMA = 0.5772156649015328606
#: additive constant in G ~ log|v|/(2 pi sqrt3) + const (the exact value for
#: the triangular lattice; verified against the lattice Fourier integral)
GREEN_ASYMPTOTIC_CONST = (EULER_GAMMA + 0.5 * math.log(12.0)) / (2 * math.pi * math.sqrt(3.0))


def proj(value: complex, line: complex) -> complex:
    """Orthogonal projection of a complex number onto the line tau R."""
    t = line / abs(line)
    return 0.5 * (value + t * t * value.conjugate())


# -- Green's function ---------------------------------------------------------


class GreenTriangular:
    """Potential kernel of the triangular lattice, Delta G = delta_0, G(0) = 0.

    Points are integer pairs (m, n) meaning the vertex m*lam + n*i with
    lam = exp(i pi/6); |v|^2 = m^2 + m n + n^2.  Values come from the exact
    one-dimensional reduction of the lattice Fourier integral

        G = (1/pi) int_0^pi [1 - rho(phi)^p cos((q + p/2) phi)] / (2 S) dphi

    with S = sqrt((1 - cos)(7 - cos)), rho = 4 cos(phi/2)/(A + 2S),
    A = 6 - 2 cos phi, where p >= 0 steps in the i direction and q in lam.
    """

    def __init__(self):
        self._cache: dict = {}

    def _quad(self, pts: np.ndarray) -> np.ndarray:
        p = pts[:, 1].astype(float)
        q = pts[:, 0].astype(float)
        flip = p < 0
        p = np.where(flip, -p, p)
        q = np.where(flip, -q, q)
        m = q + p / 2
        mmax = float(np.max(np.abs(m))) if len(m) else 1.0
        panels = max(24, int(1.5 * mmax) + 8)
        xg, wg = np.polynomial.legendre.leggauss(12)
        edges = np.linspace(0.0, math.pi, panels + 1)
        centers = (edges[:-1] + edges[1:]) / 2
        half = (edges[1:] - edges[:-1]) / 2
        phi = (centers[:, None] + half[:, None] * xg[None, :]).ravel()
        w = (half[:, None] * wg[None, :]).ravel()

        cosphi = np.cos(phi)
        A = 6.0 - 2.0 * cosphi
        S = np.sqrt(np.maximum((1.0 - cosphi) * (7.0 - cosphi), 0.0))
        rho = 4.0 * np.cos(phi / 2) / (A + 2.0 * S)
        out = np.empty(len(pts))
        logrho = np.log(np.maximum(rho, 1e-300))
        for i in range(len(pts)):
            integrand = (1.0 - np.exp(p[i] * logrho) * np.cos(m[i] * phi)) / (2.0 * S)
            out[i] = float(np.dot(w, integrand)) / math.pi
        return out

    def value(self, m: int, n: int) -> float:
        key = (int(m), int(n))
        if key not in self._cache:
            self._cache[key] = float(self._quad(np.array([key])))
        return self._cache[key]

    def prefetch(self, points) -> None:
        todo = [tuple(map(int, pt)) for pt in points if tuple(map(int, pt)) not in self._cache]
        if todo:
            vals = self._quad(np.array(sorted(set(todo))))
            for pt, v in zip(sorted(set(todo)), vals):
                self._cache[pt] = float(v)


_GREEN = GreenTriangular()


def green_triangular(v, radius: float | None = None, method: str = "integral") -> float:
    """G(v) for v = (m, n) integer coordinates (m lam + n i).

    ``integral`` evaluates the exact one-dimensional quadrature; ``box``
    solves the discrete Dirichlet problem on a square index box of side
    ~8 radius with boundary data from the log asymptotics.
    """
    m, n = int(v[0]), int(v[1])
    if radius is not None and (m * m + m * n + n * n) > (radius / 2) ** 2 + 1e-9:
        raise OutOfRange(f"|v| exceeds radius/2 = {radius / 2}")
    if method == "integral":
        return _GREEN.value(m, n)
    if method == "box":
        if radius is None:
            raise OutOfRange("box method needs a radius")
        sol = _green_box(int(radius))
        return sol(m, n)
    raise OutOfRange(f"unknown method {method}")


_BOX_CACHE: dict = {}


def _green_box(radius: int):
    """Sparse Dirichlet solve on a box of side 8*radius (index coordinates)."""
    L = 4 * radius
    if L in _BOX_CACHE:
        return _BOX_CACHE[L]
    side = 2 * L + 1
    N = side * side

    def pos(m, n):
        return (m + L) * side + (n + L)

    steps = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)]
    rows, cols, vals = [], [], []
    rhs = np.zeros(N)
    interior = lambda m, n: -L < m < L and -L < n < L

    def asym(m, n):
        r2 = m * m + m * n + n * n
        return math.log(r2) / (4 * math.pi * SQRT3) + GREEN_ASYMPTOTIC_CONST

    for m in range(-L, L + 1):
        for n in range(-L, L + 1):
            i = pos(m, n)
            if not interior(m, n):
                rows.append(i), cols.append(i), vals.append(1.0)
                rhs[i] = asym(m, n)
                continue
            rows.append(i), cols.append(i), vals.append(6.0)
            for dm, dn in steps:
                rows.append(i), cols.append(pos(m + dm, n + dn)), vals.append(-1.0)
            if m == 0 and n == 0:
                rhs[i] = -1.0
    A = sps.csr_matrix((vals, (rows, cols)), shape=(N, N))
    try:
        import pyamg
        ml = pyamg.smoothed_aggregation_solver(A, max_coarse=200)
        sol = ml.solve(rhs, tol=1e-12, maxiter=400)
        if np.linalg.norm(A @ sol - rhs) > 1e-8 * max(1.0, np.linalg.norm(rhs)):
            sol = spla.spsolve(A, rhs)
    except Exception:
        sol = spla.spsolve(A, rhs)

    def getter(m, n):
        if abs(m) > L or abs(n) > L:
            raise OutOfRange("outside the box")
        return float(sol[pos(m, n)])

    _BOX_CACHE[L] = getter
    return getter


# -- full-plane observable -----------------------------------------------------


def _reconstruct(t1: complex, p1: float, t2: complex, p2: float) -> complex:
    """The complex number with projections p1*t1 and p2*t2 on the two lines."""
    # F = alpha t1 + beta i t1, Re(conj(t1) F) = p1, Re(conj(t2) F) = p2
    r = (t2.conjugate() * t1)
    beta = (p2 - r.real * p1) / (1j * r).real
    return t1 * (p1 + 1j * beta)


class FullPlane:
    """Full-plane observable for a horizontal source half-edge (eta = 1).

    ``value(delta2)`` takes the doubled displacement (target midedge minus
    source midedge) in the (lam, i) basis, units sqrt(3)/2; the source sits
    at a horizontal edge pointing right.  Values for other source directions
    follow by exact lattice rotations.
    """

    def __init__(self, green: GreenTriangular = _GREEN):
        self.g = green

    def _G(self, z, off_m, off_n):
        return self.g.value(z[0] + off_m, z[1] + off_n)

    def proj_rho(self, z) -> float:
        G = self._G
        return 0.5 * (-5 * G(z, 0, 0) + G(z, 1, -1) + G(z, 1, 0) + 3 * G(z, 0, -1))

    def proj_rho2(self, z) -> float:
        G = self._G
        return 0.5 * (5 * G(z, 0, 0) - G(z, 1, -1) - G(z, 1, 0) - 3 * G(z, 0, 1))

    def proj_irho(self, z) -> float:
        G = self._G
        return (SQRT3 / 2) * (-G(z, 0, 0) + G(z, -1, 0) + G(z, -1, 1) - G(z, 0, 1))

    def proj_irho2(self, z) -> float:
        G = self._G
        return (SQRT3 / 2) * (-G(z, 0, 0) + G(z, -1, 0) + G(z, -1, 1) - G(z, 0, -1))

    def _ftilde(self, z) -> complex:
        G = self._G
        re = (-5 * G(z, 0, 0) + G(z, 1, -1) + G(z, 1, 0)
              + 1.5 * G(z, 0, -1) + 1.5 * G(z, 0, 1))
        im = -(SQRT3 / 2) * (G(z, 0, 1) - G(z, 0, -1))
        return complex(re, im)

    def _ftt(self, z) -> complex:
        G = self._G
        re = (G(z, 0, 0) - G(z, -1, 0) - G(z, -1, 1)
              + 0.5 * G(z, 0, -1) + 0.5 * G(z, 0, 1))
        im = -(SQRT3 / 2) * (G(z, 0, 1) - G(z, 0, -1))
        return complex(re, im)

    def value(self, delta2) -> complex:
        A, B = int(delta2[0]), int(delta2[1])
        if A % 2 == 0 and B % 2 == 0:
            dq, dp = A // 2, B // 2
            if dq == 0 and dp == 0:
                return self._ftt((0, 0))     # the source midedge itself
            return self._ftilde((dq, dp))
        if A % 2 != 0 and B % 2 != 0:
            # 30-degree midedge of the relative face (dp, dq)
            dq, dp = (A - 1) // 2, (B + 1) // 2
            p_l = self.proj_rho((dq, dp))
            p_r = self.proj_irho((dq + 1, dp - 1))
            return _reconstruct(WP[1], p_l, WP[4], p_r)
        if A % 2 != 0 and B % 2 == 0:
            # 150-degree midedge
            dq, dp = (A + 1) // 2, B // 2
            p_l = self.proj_rho2((dq - 1, dp))
            p_r = self.proj_irho2((dq, dp))
            return _reconstruct(WP[2], p_l, WP[5], p_r)
        raise OutOfRange(f"displacement {delta2} is not a midedge offset")


_FULLPLANE = FullPlane()


def _rot_minus60(a: int, b: int) -> tuple:
    """Rotation by -60 degrees in doubled (lam, i) coordinates."""
    return (a + b, -a)


def fullplane_value(k_dir: int, delta2) -> complex:
    """F_C(a, z) in lattice units for a source half-edge of direction k_dir.

    ``delta2`` is the doubled (lam, i) displacement from the source midedge.
    """
    a, b = int(delta2[0]), int(delta2[1])
    for _ in range(k_dir % 6):
        a, b = _rot_minus60(a, b)
    eta = eta_of_k(k_dir)
    return eta.conjugate() * _FULLPLANE.value((a, b))


def _doubled_coords(domain: HoneycombDomain, mid_id: int) -> tuple:
    if mid_id < domain.n_edges:
        p, q, j = domain.edges[mid_id].key
    else:
        p, q, j = domain.stubs[mid_id - domain.n_edges].edge_key
    off = [(1, 0), (0, 1), (-1, 1)][j]
    return (2 * q + off[0], 2 * p + off[1])


def fullplane_observable(domain: HoneycombDomain, a, mid_id: int) -> complex:
    """F_C(a, z_mid) for a half-edge a = (edge_id, o) of the domain."""
    ca = _doubled_coords(domain, a[0])
    cz = _doubled_coords(domain, mid_id)
    k = domain.half_edge_dir_k(a[0], a[1])
    return fullplane_value(k, (cz[0] - ca[0], cz[1] - ca[1]))


# -- s-holomorphicity ----------------------------------------------------------


@dataclass
class ObservableField:
    """Complex values on midedges, optionally tagged with a source half-edge."""

    domain: HoneycombDomain
    values: dict
    source: tuple | None = None
    sharp: bool = False

    def __getitem__(self, mid_id: int) -> complex:
        try:
            return self.values[mid_id]
        except KeyError:
            raise MissingValue(f"no value on midedge {mid_id}")

    def real_part(self, half) -> float:
        """F(a, e)-type real value: -Im[eta_e F(z_e)]."""
        dom = self.domain
        if half[0] == "stub":
            mid = dom.n_edges + half[1]
            eta = WP[[0, 5, 1, 3, 2, 4][dom.stubs[half[1]].k_in]]
        else:
            mid = half[0]
            eta = dom.half_edge_eta(half[0], half[1])
        return -(eta * self[mid]).imag

    def to_csv(self) -> str:
        lines = ["z_re,z_im,F_re,F_im"]
        for mid in sorted(self.values):
            z = self.domain.midedge_z(mid)
            v = self.values[mid]
            lines.append(",".join("%.17g" % t for t in (z.real, z.imag, v.real, v.imag)))
        return "\n".join(lines) + "\n"


def s_hol_residual(field: ObservableField, domain: HoneycombDomain,
                   defects: dict | None = None, per_corner: bool = False):
    """Max projection mismatch over corners; ``defects`` maps corner index ->
    (mid_id, constant) added to that midedge value within the corner relation."""
    res = {}
    for ci, c in enumerate(domain.corners):
        m1, m2 = c.sides
        if m1 not in field.values or m2 not in field.values:
            continue
        v1, v2 = field[m1], field[m2]
        if defects and ci in defects:
            mid, const = defects[ci]
            if mid == m1:
                v1 = v1 + const
            else:
                v2 = v2 + const
        res[ci] = abs(proj(v1 - v2, WP[c.eta_idx]))
    if per_corner:
        return res
    return max(res.values()) if res else 0.0


def source_defects(domain: HoneycombDomain, a) -> dict:
    """The two defective corners at the head of a, with constant conj(eta_a).

    ``a`` is (edge_id, o) or ("stub", sid); stub sources point inward.
    """
    if a[0] == "stub":
        stub = domain.stubs[a[1]]
        head = stub.vertex
        mid = domain.n_edges + a[1]
        eta = WP[[0, 5, 1, 3, 2, 4][stub.k_in]]
    else:
        head = domain.half_edge_head(a[0], a[1])
        mid = a[0]
        eta = domain.half_edge_eta(a[0], a[1])
    out = {}
    for ci, c in enumerate(domain.corners):
        if c.vertex == head and mid in c.sides:
            out[ci] = (mid, eta.conjugate())
    return out


def corner_projections(field: ObservableField, domain: HoneycombDomain,
                       tol: float = 1e-8) -> dict:
    """Six harmonic components: maps eta-type -> {vertex: real value}.

    Raises NotSHolomorphic when adjacent midedges disagree beyond ``tol``.
    """
    out = {h: {} for h in range(6)}
    for c in domain.corners:
        m1, m2 = c.sides
        if m1 not in field.values or m2 not in field.values:
            continue
        line = WP[c.eta_idx]
        p1 = proj(field[m1], line)
        p2 = proj(field[m2], line)
        if abs(p1 - p2) > tol:
            raise NotSHolomorphic(f"corner at vertex {c.vertex}: {abs(p1 - p2):.2e}")
        out[c.eta_idx][c.vertex] = (p1 / (line / abs(line))).real
    return out


def projection_laplacians(domain: HoneycombDomain, projections: dict) -> float:
    """Max discrete Laplacian of the six components over fully interior corners.

    Each type-eta component lives on a triangular sublattice of mesh
    sqrt(3) delta; neighbors are the six nearest same-type corners.
    """
    pos = projections
    worst = 0.0
    d = domain.mesh
    vindex = {}
    for vi, z in enumerate(domain.vertex_pos):
        vindex[(round(z.real / d, 6), round(z.imag / d, 6))] = vi
    steps = [SQRT3 * cmath.exp(1j * (math.pi / 6 + k * math.pi / 3)) for k in range(6)]
    for h, vals in pos.items():
        for vi, p in vals.items():
            z = domain.vertex_pos[vi]
            nb = []
            for s in steps:
                zz = z + s * d
                key = (round(zz.real / d, 6), round(zz.imag / d, 6))
                if key in vindex and vindex[key] in vals:
                    nb.append(vals[vindex[key]])
            if len(nb) == 6:
                worst = max(worst, abs(sum(nb) - 6 * p))
    return worst


# -- boundary value solvers ------------------------------------------------------


def _assemble_rows(domain: HoneycombDomain, defects: dict, signs=None):
    """Rows of the square system: one per corner plus one per stub."""
    n_mid = domain.n_mid
    rows, cols, vals = [], [], []
    rhs = []
    r = 0

    def add(mid, coef: complex):
        rows.append(r), cols.append(2 * mid), vals.append(coef.real)
        rows.append(r), cols.append(2 * mid + 1), vals.append(-coef.imag)

    for ci, c in enumerate(domain.corners):
        m1, m2 = c.sides
        line = WP[c.eta_idx]
        t = line.conjugate()
        s2 = signs[ci][1] if signs else 1.0
        # Re[conj(line) (F(m1) - s2 F(m2) + defect terms)] = 0
        add(m1, t)
        add(m2, -s2 * t)
        b = 0.0
        if ci in defects:
            mid, const = defects[ci]
            b = -(t * const).real if mid == m1 else (t * s2 * const).real
        rhs.append(b)
        r += 1
    for sid, stub in enumerate(domain.stubs):
        mid = domain.n_edges + sid
        eta_b = WP[[0, 5, 1, 3, 2, 4][stub.k_in]]
        # Im[i eta_b F(z_b)] = 0
        coef = 1j * eta_b
        rows.append(r), cols.append(2 * mid), vals.append(coef.imag)
        rows.append(r), cols.append(2 * mid + 1), vals.append(coef.real)
        rhs.append(0.0)
        r += 1
    A = sps.csr_matrix((vals, (rows, cols)), shape=(r, 2 * n_mid))
    return A, np.array(rhs)


class FermionSolver:
    """Factorized boundary value system of one domain, reusable across sources.

    The matrix carries the corner projections and boundary phases; a source
    half-edge only contributes its defect to the right-hand side.
    """

    def __init__(self, domain: HoneycombDomain):
        self.domain = domain
        A, _ = _assemble_rows(domain, {})
        if A.shape[0] != A.shape[1]:
            raise SingularSystem(f"system is {A.shape[0]} x {A.shape[1]}")
        self._A = A.tocsc()
        try:
            self._lu = spla.splu(self._A)
        except Exception as exc:
            raise SingularSystem(str(exc))
        self._defect_rows = {}
        for ci, c in enumerate(domain.corners):
            self._defect_rows[ci] = (c.sides, WP[c.eta_idx].conjugate())

    def solve(self, a) -> ObservableField:
        domain = self.domain
        defects = source_defects(domain, a)
        rhs = np.zeros(self._A.shape[0])
        for ci, (mid, const) in defects.items():
            (m1, m2), t = self._defect_rows[ci]
            rhs[ci] = -(t * const).real if mid == m1 else (t * const).real
        sol = self._lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise SingularSystem("non-finite solution")
        resid = np.max(np.abs(self._A @ sol - rhs))
        if resid > 1e-9:
            raise SingularSystem(f"solver residual {resid:.2e}")
        values = {m: complex(sol[2 * m], sol[2 * m + 1]) for m in range(domain.n_mid)}
        return ObservableField(domain, values, source=tuple(a))


def fermion_solver(domain: HoneycombDomain) -> FermionSolver:
    solver = getattr(domain, "_fermion_solver", None)
    if solver is None:
        solver = domain._fermion_solver = FermionSolver(domain)
    return solver


def solve_fermion_bvp(domain: HoneycombDomain, a) -> ObservableField:
    """The complex fermionic observable F(a, .) as the unique solution of the
    discrete Riemann boundary value problem.

    Unknowns are two reals per midedge; equations are the projection equality
    at every corner (with the defect conj(eta_a) at the two head corners of a)
    and the boundary phase condition at every stub.
    """
    return fermion_solver(domain).solve(a)


def solve_spinor_bvp(cover: DoubleCover, a_lift) -> ObservableField:
    """Spinor observable on the double cover, one unknown per base midedge.

    The unknown is the value on the reference sheet (the cover's sigma field);
    corners whose reference lifts disagree across the branch cut enter with a
    relative sign.  Values on the other sheet are the negatives.
    """
    domain = cover.base
    a, sa = a_lift
    signs = []
    for c in domain.corners:
        m1, m2 = c.sides
        s = -1.0 if (cover.sigma[m1] ^ cover.sigma[m2] ^ int(cover.hop_cross(m1, m2))) else 1.0
        signs.append((1.0, s))
    eta = domain.half_edge_eta(a[0], a[1])
    flip = (sa ^ cover.sigma[a[0]]) & 1
    defects = {}
    head = domain.half_edge_head(a[0], a[1])
    for ci, c in enumerate(domain.corners):
        if c.vertex == head and a[0] in c.sides:
            defects[ci] = (a[0], eta.conjugate() * (-1.0 if flip else 1.0))
    A, rhs = _assemble_rows(domain, defects, signs=signs)
    try:
        sol = spla.spsolve(A.tocsc(), rhs)
    except Exception as exc:
        raise SingularSystem(str(exc))
    if not np.all(np.isfinite(sol)) or np.max(np.abs(A @ sol - rhs)) > 1e-9:
        raise SingularSystem("spinor system did not solve")
    values = {m: complex(sol[2 * m], sol[2 * m + 1]) for m in range(domain.n_mid)}
    return ObservableField(domain, values, source=(tuple(a), sa))


def subtract_fullplane(field: ObservableField, a) -> ObservableField:
    """F# = F - F_C for a solved or brute-force observable with source a."""
    dom = field.domain
    values = {m: field.values[m] - fullplane_observable(dom, a, m)
              for m in field.values}
    return ObservableField(dom, values, source=tuple(a), sharp=True)


def square_contour_residual(field: ObservableField, domain: HoneycombDomain) -> float:
    """Max over faces of |sum Re[F(z_e)^2 tau_e] delta| around the hexagon.

    The closedness of Re[F^2 dz] is the defining property of the potential
    used in the convergence arguments.
    """
    worst = 0.0
    for fkey in domain.faces:
        tot = 0.0
        ok = True
        for pos, eid in enumerate(domain.face_edge_ids(fkey)):
            if eid not in field.values:
                ok = False
                break
            k_ccw = (2 + pos) % 6
            tot += (field[eid] ** 2 * DIR[k_ccw]).real
        if ok:
            worst = max(worst, abs(tot * domain.mesh))
    return worst
