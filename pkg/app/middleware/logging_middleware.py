import time
from typing import Any, Callable, Optional

import click
from pydantic import ValidationError as PydanticValidationError

from app.core.exceptions import TeleopError, ValidationError
from app.core.logging import get_logger, log_command, log_error, log_result

logger = get_logger("cli")


class LoggingCommand(click.Command):
    """Command that logs each invocation and maps toolkit errors to exit codes."""

    error_handler: Optional[Callable[[TeleopError], int]] = None

    def invoke(self, ctx: click.Context) -> Any:
        start_time = time.time()

        # Log command
        command_info = {"name": ctx.info_name, "params": dict(ctx.params)}
        log_command(logger, command_info)

        try:
            result = super().invoke(ctx)
        except PydanticValidationError as e:
            self._fail(ctx, ValidationError(str(e)), start_time)
        except TeleopError as e:
            self._fail(ctx, e, start_time)
        except (click.exceptions.Exit, click.ClickException):
            raise
        except Exception as e:
            process_time = time.time() - start_time
            log_error(logger, f"Command failed after {process_time:.4f}s: {str(e)}", exc_info=True)
            raise e

        process_time = time.time() - start_time
        log_result(logger, 0, process_time)
        return result

    def _fail(self, ctx: click.Context, error: TeleopError, start_time: float) -> None:
        process_time = time.time() - start_time
        if self.error_handler is None:
            log_error(logger, f"Command failed: {error.message}")
            raise error
        exit_code = self.error_handler(error)
        log_result(logger, exit_code, process_time)
        ctx.exit(exit_code)
