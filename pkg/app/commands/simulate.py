from pathlib import Path
from typing import Optional

import click

from app.core.dependencies import get_gains, get_output_path
from app.core.logging import get_logger
from app.middleware.logging_middleware import LoggingCommand
from app.schemas.network import Protocol, TodWeights
from app.schemas.simulation import ScenarioKind
from app.schemas.stability import LmiVariablesTOD
from app.services.metrics import steady_state_metrics
from app.services.scenarios import build_config, build_scenario, default_step
from app.services.simulator import run_simulation
from app.services.stability import lyapunov_witness
from app.services.trace_writer import write_trace_csv

logger = get_logger("simulate")


@click.command("simulate", cls=LoggingCommand)
@click.option("--scenario", type=click.Choice([k.value for k in ScenarioKind]), default="free", show_default=True)
@click.option("--protocol", type=click.Choice([p.value for p in Protocol]), default="rr", show_default=True)
@click.option("--slaves", type=click.IntRange(min=2), default=3, show_default=True, help="Number of slaves N.")
@click.option("--mati", type=click.FloatRange(min=0.0, min_open=True), default=0.14, show_default=True, help="Sampling interval (s).")
@click.option("--mad", type=click.FloatRange(min=0.0), default=0.1, show_default=True, help="Maximum delay (s).")
@click.option("--duration", type=click.FloatRange(min=0.0, min_open=True), default=None, help="Run length (s); 20, or 34 for contact.")
@click.option("--step", type=click.FloatRange(min=0.0, min_open=True), default=None, help="RK4 step (s); 1e-3, or 1e-4 for contact.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None, help="CSV trace path.")
@click.option("--kp", default="20", show_default=True, help="Scalar or per-slave list.")
@click.option("--kd", default="20", show_default=True, help="Scalar or per-slave list.")
@click.option("--trace-stride", type=click.IntRange(min=1), default=10, show_default=True, help="Steps between trace rows.")
@click.option("--tail", type=click.FloatRange(min=0.0, max=1.0, min_open=True), default=0.1, show_default=True, help="Trace fraction used for the summary.")
def simulate(
    scenario: str,
    protocol: str,
    slaves: int,
    mati: float,
    mad: float,
    duration: Optional[float],
    step: Optional[float],
    out: Optional[Path],
    kp: str,
    kd: str,
    trace_stride: int,
    tail: float,
):
    """Run a scenario and write its CSV trace."""
    kind = ScenarioKind(scenario)
    protocol = Protocol(protocol)
    gains = get_gains(kp, kd, slaves)

    witness = lyapunov_witness(slaves, gains, mati, mad, protocol)
    variables = witness.witness if witness is not None and witness.feasible else None
    if variables is None:
        logger.warning("Stability criterion not satisfied at this MATI/MAD; V column left empty")
    weights = TodWeights(Q=variables.q) if isinstance(variables, LmiVariablesTOD) else None

    config = build_config(
        n_slaves=slaves,
        protocol=protocol,
        sampling_interval=mati,
        mad=mad,
        step=step or default_step(kind),
        gains=gains,
        trace_stride=trace_stride,
        lyapunov_variables=variables,
        tod_weights=weights,
    )
    trace = run_simulation(config, build_scenario(kind, slaves, duration))
    path = write_trace_csv(trace, get_output_path(out, f"trace_{kind.value}_{protocol.value}.csv"))

    metrics = steady_state_metrics(trace, tail_fraction=tail)
    click.echo(f"trace: {path}")
    click.echo(f"rows: {trace.data.shape[0]}")
    for i, error in enumerate(metrics.mean_position_error, start=1):
        click.echo(f"mean position error slave {i}: {error:.6e}")
    click.echo(f"max position error: {metrics.max_position_error:.6e}")
    click.echo(f"formation centre error: {metrics.formation_center_error:.6e}")
    click.echo("mean force residual: " + ", ".join(f"{v:.6e}" for v in metrics.mean_force_residual))
    click.echo(f"max tail velocity: {metrics.max_velocity:.6e}")
