from typing import Optional

import click
import numpy as np

from app.core.dependencies import get_gains
from app.middleware.logging_middleware import LoggingCommand
from app.schemas.network import Protocol
from app.schemas.stability import LmiVariablesTOD, MarginResult, StabilityQuery
from app.services.stability import analyze_margin


def _diagonal(stack: np.ndarray) -> str:
    return ", ".join(f"{float(m[0, 0]):.6g}" for m in stack)


def format_margin(margin: MarginResult) -> str:
    query = margin.query
    lines = [
        f"protocol: {query.protocol.value.upper()}",
        f"slaves: {query.n_slaves}",
        f"MAD: {query.mad:g}",
    ]
    if not margin.feasible:
        lines.append("max MATI: infeasible")
        return "\n".join(lines)
    lines += [
        f"max MATI: {margin.mati:.6f}",
        f"h_M: {margin.h_m:.6f}",
        f"h_S: {margin.h_s:.6f}",
        f"tolerance: {margin.tolerance:g}",
    ]
    witness = margin.result.witness if margin.result is not None else None
    if witness is not None:
        lines.append(f"R_m: {float(witness.r_m[0, 0]):.6g}")
        lines.append(f"R_s: {_diagonal(witness.r_s)}")
        if isinstance(witness, LmiVariablesTOD):
            lines.append(f"Q: {_diagonal(witness.q)}")
            lines.append(f"U: {_diagonal(witness.u)}")
            lines.append(f"G: {_diagonal(witness.g)}")
    return "\n".join(lines)


@click.command("analyze", cls=LoggingCommand)
@click.option("--protocol", type=click.Choice([p.value for p in Protocol]), default="rr", show_default=True)
@click.option("--slaves", type=click.IntRange(min=2), default=3, show_default=True)
@click.option("--mad", type=click.FloatRange(min=0.0), default=0.0, show_default=True)
@click.option("--kp", default="20", show_default=True, help="Scalar or per-slave list; 'a/b' is diag(a, b).")
@click.option("--kd", default="20", show_default=True, help="Scalar or per-slave list; 'a/b' is diag(a, b).")
@click.option("--tol", type=click.FloatRange(min=0.0, min_open=True), default=None, help="Bisection tolerance (s).")
def analyze(protocol: str, slaves: int, mad: float, kp: str, kd: str, tol: Optional[float]):
    """Print the largest stable MATI with its delay horizons and witness."""
    gains = get_gains(kp, kd, slaves)
    query = StabilityQuery(n_slaves=slaves, gains=gains, mad=mad, protocol=Protocol(protocol))
    margin = analyze_margin(query, tol)
    click.echo(format_margin(margin))
