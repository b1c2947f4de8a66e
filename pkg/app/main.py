import logging
from pathlib import Path
from typing import Optional

import click

from app.commands import analyze, simulate, tables
from app.config import load_config_file
from app.core.exceptions import ConfigurationError, report_error, setup_exception_handlers
from app.core.logging import get_logger, set_level
from app.core.settings import get_settings

settings = get_settings()
logger = get_logger("app")


@click.group(help=settings.APP_DESCRIPTION)
@click.version_option(settings.APP_VERSION, prog_name=settings.APP_TITLE)
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="key=value file with option defaults for the command; flags override it.",
)
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[Path], verbose: bool):
    if verbose:
        set_level(logging.DEBUG)
    if config_path is None or ctx.invoked_subcommand is None:
        return
    command = ctx.command.get_command(ctx, ctx.invoked_subcommand)
    allowed = [param.name for param in command.params]
    try:
        config = load_config_file(config_path, ctx.invoked_subcommand, allowed)
    except ConfigurationError as e:
        ctx.exit(report_error(e))
    ctx.default_map = {ctx.invoked_subcommand: config.values}


# Include commands
cli.add_command(simulate.simulate)
cli.add_command(analyze.analyze)
cli.add_command(tables.tables)

# Set up exception handlers
setup_exception_handlers(cli)


def main() -> None:
    cli(prog_name=settings.APP_TITLE)
