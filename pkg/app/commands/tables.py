from pathlib import Path
from typing import Optional

import click

from app.core.dependencies import get_output_path
from app.middleware.logging_middleware import LoggingCommand
from app.services.tables import format_tables, reproduce_tables, write_tables


@click.command("tables", cls=LoggingCommand)
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), default=None, help="Directory for tables.txt and tables.csv.")
@click.option("--workers", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--tol", type=click.FloatRange(min=0.0, min_open=True), default=None)
def tables(out_dir: Optional[Path], workers: int, tol: Optional[float]):
    """Reproduce the four margin tables."""
    table_set = reproduce_tables(workers=workers, tol=tol)
    text_path, csv_path = write_tables(table_set, get_output_path(out_dir, "tables"))
    click.echo(format_tables(table_set))
    click.echo(f"written: {text_path}, {csv_path}")
