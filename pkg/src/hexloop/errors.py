"""Exception types shared across the package."""


class HexloopError(Exception):
    """Base class for all package errors."""


class EmptyDomain(HexloopError):
    """No hexagon of the requested mesh fits inside the shape."""


class BoundaryFace(HexloopError):
    """Operation requires an inner face but got a boundary one."""


class DisconnectedPath(HexloopError):
    """Path steps do not chain through shared vertices."""


class OutOfRange(HexloopError):
    """Parameter outside its admissible interval."""


class DegenerateT(HexloopError):
    """Rhombus weight normalization t(theta) is numerically zero."""


class TooLarge(HexloopError):
    """Exact enumeration would exceed the configured budget."""


class OddBoundary(HexloopError):
    """Boundary condition set must contain an even number of half-edges."""


class NotInner(HexloopError):
    """Site lies too close to the boundary for this deformation."""


class InconsistentField(HexloopError):
    """Tensor field violates the local relations; no potential exists."""


class SiteConsumed(HexloopError):
    """First interface step can reach the site under test."""


class DuplicateHalfEdge(HexloopError):
    """Half-edge arguments must be distinct."""


class ZeroSpinExpectation(HexloopError):
    """Spinor normalization E[sigma(u)] vanishes (malformed boundary set)."""


class MissingHalfEdge(HexloopError):
    """Required half-edge is absent from the domain or table."""


class MissingValue(HexloopError):
    """Observable field lacks a value on a required midedge."""


class ZeroDenominator(HexloopError):
    """Normalizing observable F(b, b') vanishes."""


class AdjacentSites(HexloopError):
    """Two-point formula requires non-adjacent sites."""


class NotSHolomorphic(HexloopError):
    """Field fails the s-holomorphicity test beyond tolerance."""


class SingularSystem(HexloopError):
    """Boundary value problem matrix is singular (indexing bug upstream)."""


class CriticalPoint(HexloopError):
    """Conformal map has a vanishing derivative at the evaluation point."""


class CoincidentPoints(HexloopError):
    """Kernel evaluation requires distinct points."""


class WNearBoundaryPoint(HexloopError):
    """Evaluation point maps onto the normalized boundary point."""


class BranchInconsistency(HexloopError):
    """Square-root branch bookkeeping failed a round trip."""


class RingTooLarge(HexloopError):
    """Sampling ring leaves the domain or encloses extra singularities."""


class ConfigError(HexloopError):
    """Malformed run configuration."""
