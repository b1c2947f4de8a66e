from typing import Optional

import click

from app.core.logging import get_logger

logger = get_logger("exceptions")

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2


class TeleopError(Exception):
    """Base exception for the toolkit."""

    exit_code = EXIT_NUMERICAL
    label = "Error"

    def __init__(self, message: str, details: Optional[dict] = None):
        self.message = message
        self.details = details or {}
        super().__init__(self.message)


class ValidationError(TeleopError):
    """Exception raised for invalid inputs."""

    exit_code = EXIT_USAGE
    label = "Validation error"


class DimensionError(ValidationError):
    """Exception raised when vector or matrix shapes disagree."""

    label = "Dimension error"


class ConfigurationError(ValidationError):
    """Exception raised for bad configuration files or keys."""

    label = "Configuration error"


class UnsupportedGainsError(ValidationError):
    """Exception raised when gains are not scaled identities."""

    label = "Unsupported gains"

    def __init__(self, details: Optional[dict] = None):
        super().__init__("general matrix gains unsupported", details)


class ScheduleError(ValidationError):
    """Exception raised when a sampling schedule breaks its bounds or ordering."""

    label = "Schedule error"


class NumericalError(TeleopError):
    """Exception raised for numerical failures."""

    label = "Numerical error"


class ModelError(NumericalError):
    """Exception raised when a mass matrix is not positive definite."""

    label = "Model error"


class DivergenceError(NumericalError):
    """Exception raised when the simulated state stops being finite."""

    label = "Divergence"


class InsufficientHistoryError(NumericalError):
    """Exception raised when a functional needs history that was not recorded."""

    label = "Insufficient history"


class MonotonicityError(NumericalError):
    """Exception raised when feasibility is not monotone in the sampling bound."""

    label = "Monotonicity error"


class NotSymmetricError(NumericalError):
    """Exception raised when a definiteness test receives a non-symmetric matrix."""

    label = "Not symmetric"


def exit_code_for(exc: BaseException) -> int:
    """Map an exception onto the exit-code contract."""
    if isinstance(exc, TeleopError):
        return exc.exit_code
    if isinstance(exc, click.UsageError):
        return EXIT_USAGE
    return EXIT_NUMERICAL


def report_error(exc: TeleopError) -> int:
    """Log a toolkit error, echo it to stderr and return its exit code."""
    logger.error(f"{exc.label}: {exc.message}")
    click.echo(f"{exc.label}: {exc.message}", err=True)
    for key, value in exc.details.items():
        click.echo(f"  {key}: {value}", err=True)
    return exit_code_for(exc)


def setup_exception_handlers(group: click.Group) -> None:
    """Set up exception handling for every command of the group."""
    from app.middleware.logging_middleware import LoggingCommand

    for command in group.commands.values():
        if not isinstance(command, LoggingCommand):
            raise TypeError(f"Command {command.name} must use LoggingCommand")
        command.error_handler = report_error
