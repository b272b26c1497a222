"""Exception hierarchy for evansflow.

Every error raised on purpose by the toolkit derives from :class:`EvansflowError`
so callers (and the CLI) can separate precondition failures from bugs.
"""


class EvansflowError(Exception):
    """Base class for all toolkit errors."""


class PreconditionError(EvansflowError):
    """A model or configuration does not satisfy a standing hypothesis."""


# model
class NonSymmetricFlux(PreconditionError):
    """Df or Dg is not symmetric, i.e. the flux is not a gradient field."""


class DegenerateMetric(PreconditionError):
    """Dg(u*) or B fails to be positive definite."""


class EigenvalueCollision(EvansflowError):
    """Two generalized eigenvalues are closer than the gap tolerance."""


class NotDiagonalizable(EvansflowError):
    """The normalizing basis change failed its residual check."""


class GNLViolation(PreconditionError):
    """The genuine nonlinearity coefficient is not strictly negative."""


class SuperluminalSpeed(PreconditionError):
    """Boost speed with |s| >= 1."""


class SplittingInvalid(EvansflowError):
    """Supplied subspaces do not carry the claimed definiteness."""


# shock
class NewtonDivergence(EvansflowError):
    """Newton iteration failed to converge."""


class NonUniqueHugoniotPoint(EvansflowError):
    """A third state on the Hugoniot level set was found near the origin."""


class MarginalShock(EvansflowError):
    """A Lax inequality holds only with a margin below tolerance."""


class FamilyInvariantViolation(EvansflowError):
    """A constructed shock family violates one of its invariants."""


# profile
class SlowManifoldDivergence(EvansflowError):
    """The graph fixed-point iteration for the slow manifold failed."""


class EndpointMiss(EvansflowError):
    """The integrated profile does not reach its end states."""


# spectral
class ScalingMismatch(EvansflowError):
    """Requested scaling is not defined for the given parameters."""


class CenterEigenvalue(EvansflowError):
    """An endpoint matrix has an eigenvalue on the imaginary axis."""


class SKViolation(PreconditionError):
    """A Shizuta-Kawashima condition or its hypotheses fail."""


class GroupAssignmentAmbiguous(EvansflowError):
    """Two predicted eigenvalues were matched to the same computed one."""


# grassmann
class DimensionMismatch(EvansflowError):
    """Subspaces of different ambient or intrinsic dimension."""


class ChartExhaustion(EvansflowError):
    """No admissible Riccati chart could be found."""


class NotInvariant(EvansflowError):
    """The subspace is not invariant under the given matrix."""


class EigenvalueGroupCollision(EvansflowError):
    """A projector contour no longer separates its eigenvalue group."""


# evans
class SplittingLost(EvansflowError):
    """Stable/unstable dimensions changed along a continuation path."""


class BranchCut(EvansflowError):
    """A square-root argument lies on the principal branch cut."""


class ConstantDrift(EvansflowError):
    """The proportionality constant between two Evans functions drifts."""


class ZeroOnContour(EvansflowError):
    """The function being wound vanishes (numerically) on the contour."""


class InstabilityDetected(EvansflowError):
    """An Evans function zero was found in the open right half-plane."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class GapCollapse(EvansflowError):
    """A transported bundle came too close to the complementary bundle."""


class MarginLoss(EvansflowError):
    """Block definiteness margins were lost in the outmost regime."""


class Stiffness(EvansflowError):
    """The ODE integrator could not maintain step control."""


# cli
class ConfigError(PreconditionError):
    """Malformed experiment or model configuration."""
