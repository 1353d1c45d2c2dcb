"""Exception hierarchy shared by all modules."""


class McsError(Exception):
    """Base class for every error raised by the package."""


class ConfigInvalid(McsError):
    """Configuration file or parameter block failed validation."""


class NotApplicable(McsError):
    """Requested quantity is undefined for this input (e.g. trivial profile)."""


# radial profiles
class IntegrationDiverged(McsError):
    """Radial integration left the admissible range (e^w reached 1 or w blew down)."""


class TruncationTooSmall(McsError):
    """Profile is not yet asymptotic on the fit window; enlarge r_max."""


class MethodMismatch(McsError):
    """Quadrature and slope-fit estimates of beta disagree."""


class BracketFailure(McsError):
    """Initial shooting bracket does not straddle the target."""


class IllConditionedFit(McsError):
    """Least-squares design matrix is numerically singular."""


# torus geometry
class PoleCollision(McsError):
    """Evaluation point coincides with a pole modulo the lattice."""


class NoConvergence(McsError):
    """Iteration failed to converge."""


# elliptic solvers
class NonZeroMean(McsError):
    """Right-hand side of a periodic Poisson problem has nonzero mean."""


class NewtonStalled(McsError):
    """Newton residual stopped decreasing before reaching tolerance."""


class MaxIters(McsError):
    """Iteration budget exhausted."""


class InvariantViolation(McsError):
    """A converged state broke a sign bound or conservation identity."""


class PathStuck(McsError):
    """Continuation could not advance; carries the last good state."""

    def __init__(self, message, last_state=None, states=None):
        super().__init__(message)
        self.last_state = last_state
        self.states = states or []


# blow-up construction
class ProfileMismatch(McsError):
    """Radial profile does not carry the required decay rate."""


class MatchFailure(McsError):
    """C^1 gluing of the two-piece ansatz failed."""


class SingularGram(McsError):
    """Kernel Gram matrix is singular."""


class LinearSolveFailure(McsError):
    """Krylov solve did not reach its tolerance."""


class BallExit(McsError):
    """Fixed-point image left the admissible ball."""

    def __init__(self, message, norms=None):
        super().__init__(message)
        self.norms = norms
