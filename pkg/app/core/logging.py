import logging
import sys
from typing import Dict, Any

# Configure logging format
logging_format = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
logging.basicConfig(
    level=logging.INFO,
    format=logging_format,
    handlers=[logging.StreamHandler(sys.stderr)],
)


def get_logger(name: str) -> logging.Logger:
    """Get a configured logger instance."""
    return logging.getLogger(name)


def set_level(level: int) -> None:
    """Change the level of the root logger."""
    logging.getLogger().setLevel(level)


def log_command(logger: logging.Logger, command_info: Dict[str, Any]) -> None:
    """Log an incoming command invocation."""
    params = ", ".join(
        f"{key}={value}"
        for key, value in sorted(command_info.get("params", {}).items())
        if value is not None
    )
    logger.info(f"Command: {command_info.get('name')} - Params: {params or 'none'}")


def log_result(logger: logging.Logger, exit_code: int, processing_time: float) -> None:
    """Log the outcome of a command."""
    logger.info(f"Result: Exit {exit_code} - Processed in {processing_time:.4f}s")


def log_error(logger: logging.Logger, error_msg: str, exc_info: bool = False) -> None:
    """Log error information."""
    logger.error(error_msg, exc_info=exc_info)
