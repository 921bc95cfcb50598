"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`PrethermalError`. Configuration problems derive from
:class:`ConfigError` and numerical breakdowns from :class:`NumericalError`;
the command line maps these onto distinct exit codes.
"""


class PrethermalError(Exception):
    pass


class ConfigError(PrethermalError, ValueError):
    pass


class NumericalError(PrethermalError, ArithmeticError):
    pass


class InvalidConfig(ConfigError):
    pass


class TooManySpins(ConfigError):
    pass


class CoincidentSites(ConfigError):
    pass


class EmptyLattice(ConfigError):
    pass


class DimensionTooLarge(ConfigError):
    pass


class NonPeriodicFlipAngle(ConfigError):
    pass


class DegeneratePulse(ConfigError):
    pass


class SubstepTooCoarse(ConfigError):
    pass


class WindowTooShort(ConfigError):
    pass


class WindowSmallerThanStep(ConfigError):
    pass


class InsufficientData(NumericalError):
    pass


class TooFewPoints(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class DegenerateTrace(NumericalError):
    pass


class NoCrossing(NumericalError):
    pass


class NoCusp(NumericalError):
    pass
