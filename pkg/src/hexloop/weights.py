"""Integrable rhombus weights of the loop O(n) model.

The loop weight ``n`` in [0, 2] fixes a parameter ``s`` through
``n = -2*cos(4*pi*s/3)`` (branch ``s`` in [3/8, 3/4]) and the critical edge
weight ``x = 1/(2*cos(pi*s/3)) = 1/sqrt(2 + sqrt(2 - n))``.  A rhombus with
angles ``theta`` and ``pi - theta`` carries local configuration weights

    u1 = sin((pi-theta) s) sin(2pi s/3) / t         one arc at a theta corner
    u2 = sin(theta s) sin(2pi s/3) / t              one arc at a (pi-theta) corner
    v  = sin(theta s) sin((pi-theta) s) / t         one arc joining opposite sides
    w1 = sin((2pi/3-theta) s) sin((pi-theta) s) / t two arcs at the theta corners
    w2 = sin((theta-pi/3) s) sin(theta s) / t       two arcs at the (pi-theta) corners

with ``t = sin^3(2pi s/3)/sin(pi s/3) + sin((theta-pi/3) s) sin((2pi/3-theta) s)``.
At ``theta = pi/3`` the rhombus splits into two unit triangles: u1 = x,
u2 = v = w1 = x^2 and w2 = 0.  At ``theta = 0`` (degenerate sliver)
u1 = w1 = 1 and u2 = v = w2 = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateT, OutOfRange

NAMES = ("u1", "u2", "v", "w1", "w2")


@dataclass(frozen=True)
class WeightSystem:
    """Loop weight n, spectral parameter s and critical edge weight x."""

    n: float
    s: float
    x: float


def weight_params(n: float) -> WeightSystem:
    if not 0.0 <= n <= 2.0:
        raise OutOfRange(f"n must lie in [0, 2], got {n}")
    s = 3.0 / (4.0 * math.pi) * math.acos(-n / 2.0)
    x = 1.0 / (2.0 * math.cos(math.pi * s / 3.0))
    return WeightSystem(float(n), s, x)


@dataclass(frozen=True)
class RhombusWeights:
    theta: float
    u1: float
    u2: float
    v: float
    w1: float
    w2: float
    t: float

    def as_tuple(self):
        return (self.u1, self.u2, self.v, self.w1, self.w2)


def _t_and_dt(theta: float, s: float):
    a = math.pi * s / 3.0
    const = math.sin(2 * a) ** 3 / math.sin(a)
    t = const + math.sin((theta - math.pi / 3) * s) * math.sin((2 * math.pi / 3 - theta) * s)
    dt = s * (math.cos((theta - math.pi / 3) * s) * math.sin((2 * math.pi / 3 - theta) * s)
              - math.sin((theta - math.pi / 3) * s) * math.cos((2 * math.pi / 3 - theta) * s))
    return t, dt


def _numerators(theta: float, s: float):
    s2a = math.sin(2 * math.pi * s / 3.0)
    return (
        math.sin((math.pi - theta) * s) * s2a,
        math.sin(theta * s) * s2a,
        math.sin(theta * s) * math.sin((math.pi - theta) * s),
        math.sin((2 * math.pi / 3 - theta) * s) * math.sin((math.pi - theta) * s),
        math.sin((theta - math.pi / 3) * s) * math.sin(theta * s),
    )


def _dnumerators(theta: float, s: float):
    s2a = math.sin(2 * math.pi * s / 3.0)
    sp, cp = math.sin((math.pi - theta) * s), math.cos((math.pi - theta) * s)
    st, ct = math.sin(theta * s), math.cos(theta * s)
    sm, cm = math.sin((theta - math.pi / 3) * s), math.cos((theta - math.pi / 3) * s)
    sw, cw = math.sin((2 * math.pi / 3 - theta) * s), math.cos((2 * math.pi / 3 - theta) * s)
    return (
        -s * cp * s2a,
        s * ct * s2a,
        s * (ct * sp - st * cp),
        s * (-cw * sp - sw * cp),
        s * (cm * st + sm * ct),
    )


def rhombus_weights(theta: float, ws: WeightSystem) -> RhombusWeights:
    """The five rhombus weights at angle theta."""
    t, _ = _t_and_dt(theta, ws.s)
    if abs(t) < 1e-12:
        raise DegenerateT(f"t({theta}) ~ 0")
    nums = _numerators(theta, ws.s)
    return RhombusWeights(theta, *(v / t for v in nums), t)


def rhombus_weight_derivatives(theta: float, ws: WeightSystem) -> tuple:
    """Analytic d/dtheta of (u1, u2, v, w1, w2) at angle theta."""
    t, dt = _t_and_dt(theta, ws.s)
    if abs(t) < 1e-12:
        raise DegenerateT(f"t({theta}) ~ 0")
    nums = _numerators(theta, ws.s)
    dnums = _dnumerators(theta, ws.s)
    return tuple((dn * t - n * dt) / t**2 for n, dn in zip(nums, dnums))


def pentagon_factor(theta: float, ws: WeightSystem) -> float:
    """Multiplier c(theta) of the partition function under the pentagonal move."""
    u2a = rhombus_weights(theta, ws).u2
    u2b = rhombus_weights(math.pi / 3 - theta, ws).u2
    return 1.0 + ws.n * u2a * u2b * ws.x


def integrability_check(phi: float, psi: float, ws: WeightSystem) -> dict:
    """Residuals of the Yang-Baxter, pentagonal and rhombus-splitting identities.

    ``yb`` uses the triangle of angles (phi, psi, 2pi - phi - psi); ``pentagon``
    is evaluated at theta = phi; ``split`` compares the pi/3 rhombus weights
    with the corresponding products of triangle weights (1 or x per arc).
    """
    w_phi = rhombus_weights(phi, ws)
    w_psi = rhombus_weights(psi, ws)
    w_3rd = rhombus_weights(2 * math.pi - phi - psi, ws)
    # u2 w2 v = v u2 u1 + u2 v w1, one Yang-Baxter relation on the hexagon
    # tiled by rhombi of angles (phi, psi, 2pi - phi - psi)
    yb = abs(w_phi.u2 * w_psi.w2 * w_3rd.v
             - w_phi.v * w_psi.u2 * w_3rd.u1
             - w_phi.u2 * w_psi.v * w_3rd.w1)

    theta = phi
    lhs = (rhombus_weights(theta, ws).u1 * rhombus_weights(math.pi / 3 - theta, ws).v
           + rhombus_weights(theta, ws).v * rhombus_weights(math.pi / 3 - theta, ws).u1 * ws.x)
    rhs = rhombus_weights(math.pi / 3 + theta, ws).u1 * ws.x * pentagon_factor(theta, ws)
    pentagon = abs(lhs - rhs)

    w3 = rhombus_weights(math.pi / 3, ws)
    split = max(abs(w3.u1 - ws.x), abs(w3.u2 - ws.x**2), abs(w3.v - ws.x**2),
                abs(w3.w1 - ws.x**2), abs(w3.w2))
    return {"yb": yb, "pentagon": pentagon, "split": split}


def weight_table_csv(thetas, ws: WeightSystem) -> str:
    """CSV table (theta, u1, u2, v, w1, w2, t) with 17 significant digits."""
    lines = ["theta,u1,u2,v,w1,w2,t"]
    for th in thetas:
        w = rhombus_weights(th, ws)
        lines.append(",".join("%.17g" % v for v in (th, w.u1, w.u2, w.v, w.w1, w.w2, w.t)))
    return "\n".join(lines) + "\n"
