"""Exception hierarchy.

Every error carries a one-line ``reason`` suitable for machine parsing and
belongs to one of three families the CLI maps to exit codes: configuration,
input, and numerical failures.
"""

from __future__ import annotations


class WillmoreLabError(Exception):
    exit_code = 1

    @property
    def reason(self) -> str:
        return " ".join(str(self).split())


class ConfigError(WillmoreLabError):
    exit_code = 2


class InputError(WillmoreLabError):
    exit_code = 3


class NumericalError(WillmoreLabError):
    exit_code = 4


# -- input ------------------------------------------------------------------

class ParseError(InputError):
    pass


class TopologyError(InputError):
    pass


class DegenerateFaceError(InputError):
    def __init__(self, message: str, face: int | None = None):
        super().__init__(message)
        self.face = face


class ConnectivityMismatchError(InputError):
    pass


class UnsupportedGenusError(InputError):
    pass


class PreconditionError(InputError):
    pass


class InversionCenterOnSurfaceError(InputError):
    pass


class ChartMismatchError(InputError):
    pass


class UmbilicPatchError(InputError):
    pass


# -- numerical --------------------------------------------------------------

class SolverDivergenceError(NumericalError):
    pass


class NoEmptyBallError(NumericalError):
    pass


class CoverFailureError(NumericalError):
    pass


class NonConformalChartError(NumericalError):
    pass


class HolonomyError(NumericalError):
    pass


class BeltramiDivergenceError(NumericalError):
    pass


class InsufficientAnnuliError(NumericalError):
    pass


class HomologyError(NumericalError):
    pass


class LineSearchFailureError(NumericalError):
    pass


class RankDeficiencyError(NumericalError):
    """Constraint rows numerically dependent; carries the isothermic residual."""

    def __init__(self, message: str, isothermic_residual: float | None = None,
                 singular_values=None):
        super().__init__(message)
        self.isothermic_residual = isothermic_residual
        self.singular_values = singular_values


class IoError(WillmoreLabError):
    exit_code = 5


class ObtuseAreaWarning(UserWarning):
    pass
