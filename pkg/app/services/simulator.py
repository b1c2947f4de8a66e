from typing import List, Optional

import numpy as np

from app.core.exceptions import DimensionError, DivergenceError
from app.core.logging import get_logger
from app.schemas.network import TIME_TOL, Protocol
from app.schemas.simulation import (
    JumpRecord,
    Scenario,
    ScenarioKind,
    SimConfig,
    SimTrace,
    TodInterval,
)
from app.schemas.stability import LmiVariablesTOD
from app.services.controller import master_control, slave_controls
from app.services.forces import (
    human_force_scenario2,
    human_force_scenario3,
    wall_contact_force,
)
from app.services.integrator import integrate
from app.services.lyapunov import History, lyapunov_v_rr, lyapunov_ve_tod
from app.services.manipulator import accelerations, end_effector, gravity_vector
from app.services.network import NetworkState, delay_horizons

logger = get_logger("simulator")


def trace_columns(n_slaves: int, n_joints: int = 2) -> List[str]:
    """CSV header for a run with N slaves."""
    joints = range(n_joints)
    slaves = range(1, n_slaves + 1)
    columns = ["t"]
    columns += [f"qm{j}" for j in joints] + [f"dqm{j}" for j in joints]
    columns += [f"qs{i}_{j}" for i in slaves for j in joints]
    columns += [f"dqs{i}_{j}" for i in slaves for j in joints]
    columns += ["sched"] + [f"eta{i}" for i in slaves] + ["V"]
    columns += [f"fm{j}" for j in joints] + [f"fs{i}_{j}" for i in slaves for j in joints]
    columns += [f"taum{j}" for j in joints] + [f"taus{i}_{j}" for i in slaves for j in joints]
    columns += ["xm", "ym"]
    for i in slaves:
        columns += [f"xs{i}", f"ys{i}"]
    return columns


class TeleoperationSimulator:
    """Event-aligned RK4 simulation of one master and N slaves."""

    def __init__(self, config: SimConfig, scenario: Scenario):
        if scenario.n_slaves != config.n_slaves:
            raise DimensionError(
                "scenario and config disagree on the slave count",
                {"scenario": scenario.n_slaves, "config": config.n_slaves},
            )
        if scenario.initial_states[0].n_joints != config.n_joints:
            raise DimensionError("scenario and config disagree on the joint count")
        self.config = config
        self.scenario = scenario
        self.params = config.params
        self.schedule = config.schedule

        q0 = np.array([state.q for state in scenario.initial_states])
        dq0 = np.array([state.dq for state in scenario.initial_states])
        self.x = np.stack([q0, dq0])
        self.t = 0.0
        self.k = 0
        self.steps = 0

        self.network = NetworkState(
            q0[0],
            config.formation.corrected(q0[1:]),
            protocol=config.protocol,
            weights=config.weights(),
        )
        self.h_m, self.h_s = delay_horizons(
            config.n_slaves, self.schedule.mati, self.schedule.mad, config.protocol
        )
        self.history = History(0.0, q0, dq0, max(self.h_m, self.h_s))
        self.rows: List[np.ndarray] = []
        self.sched_log: List[int] = []

    # Right-hand side

    def external_forces(self, t: float, q: np.ndarray) -> np.ndarray:
        forces = np.zeros_like(q)
        kind = self.scenario.kind
        if kind == ScenarioKind.BOUNDED_FORCE:
            forces[0] = human_force_scenario2(t, q[0], self.params[0])
        elif kind == ScenarioKind.CONTACT:
            forces[0] = human_force_scenario3(t, q[0], self.params[0], self.scenario.pulse)
            forces[1:] = wall_contact_force(
                self.params[1:], q[1:], self.scenario.wall_height, self.scenario.wall_stiffness
            )
        return forces

    def control_torques(self, q: np.ndarray, dq: np.ndarray) -> np.ndarray:
        config = self.config
        gravity = gravity_vector(self.params, q)
        torques = np.empty_like(q)
        torques[0] = master_control(
            config.gains, config.formation, q[0], dq[0], self.network.slave_registers, gravity[0]
        )
        torques[1:] = slave_controls(
            config.gains, config.formation, q[1:], dq[1:], self.network.master_register, gravity[1:]
        )
        return torques

    def rhs(self, t: float, x: np.ndarray) -> np.ndarray:
        q, dq = x
        ddq = accelerations(self.params, q, dq, self.control_torques(q, dq), self.external_forces(t, q))
        return np.stack([dq, ddq])

    # Events

    def process_events(self) -> None:
        """Arrivals first, then the sample due now; zero-delay samples land immediately."""
        network = self.network
        network.deliver(self.t)
        while self.schedule.sampling_instant(self.k) <= self.t + TIME_TOL:
            q = self.x[0]
            event = network.sample(
                self.schedule, self.k, q[0], self.config.formation.corrected(q[1:])
            )
            self.sched_log.append(event.index)
            self.k += 1
        network.deliver(self.t)

    def next_boundary(self, duration: float) -> float:
        candidates = [self.schedule.sampling_instant(self.k), duration]
        arrival = self.network.next_arrival()
        if arrival is not None:
            candidates.append(arrival)
        if self.scenario.kind == ScenarioKind.CONTACT:
            candidates += [self.scenario.pulse.t_on, self.scenario.pulse.t_off]
        return min(c for c in candidates if c > self.t + TIME_TOL)

    # Recording

    def record_row(self) -> None:
        q, dq = self.x
        forces = self.external_forces(self.t, q)
        torques = self.control_torques(q, dq)
        positions = end_effector(self.params, q)
        sched = self.sched_log[-1] if self.sched_log else 0
        eta_norms = np.linalg.norm(self.network.eta, axis=1)
        self.rows.append(
            np.concatenate(
                [
                    [self.t],
                    q[0],
                    dq[0],
                    q[1:].ravel(),
                    dq[1:].ravel(),
                    [sched],
                    eta_norms,
                    [np.nan],
                    forces[0],
                    forces[1:].ravel(),
                    torques[0],
                    torques[1:].ravel(),
                    positions.ravel(),
                ]
            )
        )

    def run(self) -> SimTrace:
        duration = self.scenario.duration
        stride = self.config.trace_stride
        logger.info(
            f"Simulating {self.scenario.kind.value} under {self.config.protocol.value.upper()}: "
            f"N={self.config.n_slaves}, duration={duration}s, step={self.config.step}s"
        )
        self.process_events()
        self.record_row()

        while self.t < duration - TIME_TOL:
            t_next = self.next_boundary(duration)
            for t_step, x in integrate(self.rhs, self.t, t_next, self.x, self.config.step):
                if not np.all(np.isfinite(x)):
                    raise DivergenceError(
                        "state became non-finite",
                        {"t": round(t_step, 9), "protocol": self.config.protocol.value},
                    )
                self.steps += 1
                self.x = x
                self.t = t_step
                self.history.append(t_step, x[0], x[1])
                if self.steps % stride == 0 and t_step < t_next:
                    self.record_row()
            self.t = t_next
            self.process_events()
            if self.steps % stride == 0 or self.t >= duration - TIME_TOL:
                self.record_row()

        logger.info(f"Finished after {self.steps} steps and {self.k} samples")
        return self.build_trace()

    # Post-processing

    def tod_interval(self, t: float) -> Optional[TodInterval]:
        """Interval [t_k, t_{k+1}) containing t, from the delivered samples."""
        events = self.network.events
        arrivals = np.array([event.arrives_at for event in events])
        j = int(np.searchsorted(arrivals, t + TIME_TOL, side="right")) - 1
        if j < 0:
            return None
        return self._interval_of(j)

    def _interval_of(self, j: int) -> TodInterval:
        event = self.network.events[j]
        return TodInterval(
            sampled_at=event.sampled_at,
            arrives_at=event.arrives_at,
            next_arrival=self.schedule.arrival_instant(event.k + 1),
            index=event.index,
            eta=event.eta,
        )

    def lyapunov_column(self, times: np.ndarray) -> np.ndarray:
        variables = self.config.lyapunov_variables
        values = np.full(times.shape, np.nan)
        if variables is None:
            return values
        events = self.network.events
        if self.config.protocol == Protocol.RR:
            n_slaves = self.config.n_slaves
            if len(events) < n_slaves:
                return values
            start = events[n_slaves - 1].arrives_at + self.h_s
            for r, t in enumerate(times):
                if t >= start - TIME_TOL:
                    values[r] = lyapunov_v_rr(
                        self.config, self.history, t, variables, (self.h_m, self.h_s)
                    )
            return values
        if not isinstance(variables, LmiVariablesTOD):
            logger.warning("TOD run without TOD variables; V_e not evaluated")
            return values
        for r, t in enumerate(times):
            interval = self.tod_interval(t)
            if interval is not None:
                values[r] = lyapunov_ve_tod(self.config, self.history, t, variables, interval, self.h_m)
        return values

    def jump_log(self) -> List[JumpRecord]:
        """V_e just before and at every arrival after the first."""
        variables = self.config.lyapunov_variables
        if self.config.protocol != Protocol.TOD or not isinstance(variables, LmiVariablesTOD):
            return []
        jumps = []
        events = self.network.events
        for j in range(1, len(events)):
            t = events[j].arrives_at
            if events[j - 1].arrives_at >= t - TIME_TOL:
                continue
            before = lyapunov_ve_tod(self.config, self.history, t, variables, self._interval_of(j - 1), self.h_m)
            after = lyapunov_ve_tod(self.config, self.history, t, variables, self._interval_of(j), self.h_m)
            jumps.append(JumpRecord(t=t, before=before, after=after))
        return jumps

    def build_trace(self) -> SimTrace:
        columns = trace_columns(self.config.n_slaves, self.config.n_joints)
        data = np.array(self.rows)
        data[:, columns.index("V")] = self.lyapunov_column(data[:, 0])
        return SimTrace(
            columns=columns,
            data=data,
            events=list(self.network.events),
            jumps=self.jump_log(),
            metadata={
                "scenario": self.scenario.kind.value,
                "protocol": self.config.protocol.value,
                "n_slaves": self.config.n_slaves,
                "n_joints": self.config.n_joints,
                "offsets": self.config.formation.offsets.copy(),
                "sampling_interval": self.schedule.sampling_interval,
                "mati": self.schedule.mati,
                "mad": self.schedule.mad,
                "h_m": self.h_m,
                "h_s": self.h_s,
                "step": self.config.step,
                "steps": self.steps,
                "samples": self.k,
            },
        )


def run_simulation(config: SimConfig, scenario: Scenario) -> SimTrace:
    """Integrate the closed loop over the scenario and return its trace."""
    return TeleoperationSimulator(config, scenario).run()
