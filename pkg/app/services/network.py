from collections import deque
from typing import Deque, List, Optional, Tuple

import numpy as np

from app.core.exceptions import DimensionError, ScheduleError, ValidationError
from app.core.logging import get_logger
from app.schemas.network import (
    TIME_TOL,
    Protocol,
    SamplingSchedule,
    TodWeights,
    TransmissionEvent,
)

logger = get_logger("network")


def rr_next_index(k: int, n_slaves: int) -> int:
    """Round-robin slave for sample k, counting slaves from 1."""
    if n_slaves < 2:
        raise ValidationError("round-robin needs at least two slaves", {"slaves": n_slaves})
    return (k % n_slaves) + 1


def weighted_errors(eta: np.ndarray, weights: TodWeights) -> np.ndarray:
    """η_iᵀ Q_i η_i for every slave."""
    eta = np.asarray(eta, dtype=float)
    if eta.shape[0] != weights.n_slaves or eta.shape[1] != weights.Q.shape[1]:
        raise DimensionError(
            "eta does not match the weights",
            {"eta": eta.shape, "weights": weights.Q.shape},
        )
    return np.einsum("ki,kij,kj->k", eta, weights.Q, eta)


def tod_next_index(eta, weights: TodWeights) -> int:
    """Slave with the largest weighted error; ties go to the smallest index."""
    if weights.n_slaves < 2:
        raise ValidationError("TOD needs at least two slaves", {"slaves": weights.n_slaves})
    # argmax returns the first maximiser
    return int(np.argmax(weighted_errors(eta, weights))) + 1


def delay_horizons(n_slaves: int, mati: float, mad: float, protocol: Protocol) -> Tuple[float, float]:
    """Worst-case delay horizons (h_M, h_S)."""
    if mati <= 0.0 or mad < 0.0:
        raise ValidationError("MATI must be positive and MAD non-negative", {"mati": mati, "mad": mad})
    h_m = mati + mad
    if Protocol(protocol) == Protocol.RR:
        return h_m, n_slaves * mati + mad
    return h_m, h_m


class NetworkState:
    """ZOH registers, TOD errors and in-flight samples of one run.

    Owned by a single driver. Registers change only in ``deliver``.
    """

    def __init__(
        self,
        master_position,
        corrected_slave_positions,
        protocol: Protocol = Protocol.RR,
        weights: Optional[TodWeights] = None,
    ):
        corrected = np.array(corrected_slave_positions, dtype=float)
        if corrected.ndim != 2 or corrected.shape[0] < 2:
            raise DimensionError("need an (N, n) stack of at least two slave positions")
        self.protocol = Protocol(protocol)
        self.n_slaves, self.n_joints = corrected.shape
        self.weights = weights or TodWeights.identity(self.n_slaves, self.n_joints)
        if self.weights.n_slaves != self.n_slaves:
            raise DimensionError("one TOD weight per slave is required")

        self.master_register = np.array(master_position, dtype=float)
        self.slave_registers = corrected.copy()
        # Nothing transmitted yet, so the master-side reference is zero
        self.last_sent = np.zeros_like(corrected)
        self.eta = self.last_sent - corrected
        self.last_scheduled = 0
        self.pending: Deque[TransmissionEvent] = deque()
        self.events: List[TransmissionEvent] = []
        self._last_arrival = -np.inf

    def choose(self, k: int, eta: np.ndarray) -> int:
        if self.protocol == Protocol.RR:
            return rr_next_index(k, self.n_slaves)
        return tod_next_index(eta, self.weights)

    def sample(
        self,
        schedule: SamplingSchedule,
        k: int,
        master_position,
        corrected_slave_positions,
    ) -> TransmissionEvent:
        """Sample at s_k, pick the transmitting slave and queue delivery at t_k."""
        corrected = np.asarray(corrected_slave_positions, dtype=float)
        if corrected.shape != self.slave_registers.shape:
            raise DimensionError(
                "slave sample does not match the registers",
                {"sample": corrected.shape, "registers": self.slave_registers.shape},
            )
        eta = self.last_sent - corrected
        index = self.choose(k, eta)
        self.last_sent[index - 1] = corrected[index - 1]

        s_k = schedule.sampling_instant(k)
        t_k = s_k + schedule.delay(k)
        if t_k < self._last_arrival - TIME_TOL:
            raise ScheduleError(
                "sample would overtake an earlier one",
                {"k": k, "arrival": t_k, "previous_arrival": self._last_arrival},
            )
        self._last_arrival = t_k

        event = TransmissionEvent(
            k=k,
            sampled_at=s_k,
            arrives_at=t_k,
            index=index,
            master_sample=np.array(master_position, dtype=float),
            slave_sample=corrected[index - 1].copy(),
            eta=eta,
            weighted_errors=weighted_errors(eta, self.weights),
        )
        self.pending.append(event)
        logger.debug(f"Sample {k} at s={s_k:.4f}: slave {index} arrives at t={t_k:.4f}")
        return event

    def next_arrival(self) -> Optional[float]:
        return self.pending[0].arrives_at if self.pending else None

    def deliver(self, t: float) -> List[TransmissionEvent]:
        """Apply every queued sample that has arrived by t, oldest first."""
        delivered = []
        while self.pending and self.pending[0].arrives_at <= t + TIME_TOL:
            event = self.pending.popleft()
            self.master_register = event.master_sample.copy()
            self.slave_registers[event.index - 1] = event.slave_sample
            self.eta = event.eta.copy()
            self.last_scheduled = event.index
            self.events.append(event)
            delivered.append(event)
        return delivered


def sample_and_transmit(
    state: NetworkState,
    schedule: SamplingSchedule,
    protocol: Protocol,
    k: int,
    master_pos,
    slave_pos_corrected,
) -> NetworkState:
    """Advance the network by the sample at s_k; delivery happens at t_k."""
    if Protocol(protocol) != state.protocol:
        raise ValidationError(
            "protocol differs from the one the network state was built for",
            {"state": state.protocol.value, "requested": Protocol(protocol).value},
        )
    state.sample(schedule, k, master_pos, slave_pos_corrected)
    return state
