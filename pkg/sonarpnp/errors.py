"""
Exceptions raised by the solvers, the harness and the instance loader.

Every error may carry a stage label. The pipeline fills it in when an
error leaves one of its stages, so callers can tell which step failed.
"""
import typing as t


class SonarPnPError(Exception):
    """Base class for all errors raised by this package."""

    def __init__(self, message: str, *, stage: t.Optional[str] = None) -> None:
        super().__init__(message)
        self.message = message
        self.stage = stage

    def __str__(self) -> str:
        if self.stage is None:
            return self.message
        return f"[{self.stage}] {self.message}"


class DegenerateInput(SonarPnPError):
    """The input has no well-defined answer, e.g. a zero-norm point."""


class InsufficientCorrespondences(DegenerateInput):
    """Too few correspondences for the requested solver path."""

    def __init__(
        self, count: int, required: int, *, stage: t.Optional[str] = None
    ) -> None:
        super().__init__(
            f"{count} correspondences given, at least {required} required.",
            stage=stage,
        )
        self.count = count
        self.required = required


class InvalidPose(SonarPnPError, ValueError):
    """A rotation matrix is not a member of SO(3)."""


class InvalidConfiguration(SonarPnPError, ValueError):
    """A config value or scenario description is out of its domain."""


class InstanceFormatError(SonarPnPError):
    """An instance document is malformed; field names the culprit."""

    def __init__(
        self, field: str, problem: str, *, stage: t.Optional[str] = None
    ) -> None:
        super().__init__(f"'{field}': {problem}", stage=stage)
        self.field = field


class SolverFailure(SonarPnPError):
    """The conic solver did not return an optimal dual point."""

    def __init__(
        self, status: str, *, stage: t.Optional[str] = None
    ) -> None:
        super().__init__(
            f"SDP solver finished with status {status!r}.", stage=stage
        )
        self.status = status


class DegenerateConfiguration(SonarPnPError):
    """The certificate matrix has a kernel larger than two."""


class RecoveryFailure(SonarPnPError):
    """A rotation cannot be read off the kernel of the certificate."""


class NoRealSolution(SonarPnPError):
    """A polynomial system has no real root to work with."""


class NumericalFailure(SonarPnPError):
    """Coefficients are corrupted; e.g. a quartic without a real minimum."""


class GenerationFailure(SonarPnPError):
    """Rejection sampling ran out of its retry budget."""


#: Errors caused by what the user passed in, mapped to exit code 1.
INPUT_ERRORS: tuple[type[SonarPnPError], ...] = (
    DegenerateInput,
    InstanceFormatError,
    InvalidConfiguration,
    InvalidPose,
)
#: Errors raised while solving, mapped to exit code 2.
SOLVER_ERRORS: tuple[type[SonarPnPError], ...] = (
    SolverFailure,
    DegenerateConfiguration,
    RecoveryFailure,
    NoRealSolution,
    NumericalFailure,
    GenerationFailure,
)
