"""Exception hierarchy shared by all modules."""


class SoftboltError(Exception):
    """Base class for every error raised by the package."""


# geometry
class NotOnBoundary(SoftboltError):
    pass


class DegenerateGradient(SoftboltError):
    pass


class ZeroSpatialVelocity(SoftboltError):
    pass


class RootNotFound(SoftboltError):
    pass


# weights
class EnvelopeViolated(SoftboltError):
    def __init__(self, t, v_index, margin):
        super().__init__(f"envelope violated at t={t}, node={v_index}, margin={margin:.3e}")
        self.t = t
        self.v_index = v_index
        self.margin = margin


# collision
class NonUnitOmega(SoftboltError):
    pass


class QuadratureNotConverged(SoftboltError):
    pass


class SingularSeparation(SoftboltError):
    pass


# cycles
class GrazingAbort(SoftboltError):
    pass


class DegenerateStep(SoftboltError):
    pass


# solver
class WrongKind(SoftboltError):
    pass


class Diverged(SoftboltError):
    pass


# analysis
class InsufficientData(SoftboltError):
    pass


class NonPositiveNorms(SoftboltError):
    pass


class ZeroDenominator(SoftboltError):
    pass


# cli / config
class ParseError(SoftboltError):
    pass


class ValidationError(SoftboltError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class UnknownSubcommand(SoftboltError):
    pass
