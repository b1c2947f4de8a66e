import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.core.exceptions import DimensionError, ValidationError
from app.schemas.control import FormationGeometry, GainSet
from app.services.controller import master_control, slave_control, slave_controls

TWO_SLAVES = FormationGeometry(offsets=[[0.1, -0.3], [-0.1, 0.3]])
small = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)
vectors = st.tuples(small, small).map(np.array)


def test_master_pulls_towards_held_slaves():
    tau = master_control(
        GainSet.uniform(20, 20, 2), TWO_SLAVES, [1.0, 0.0], [0.0, 0.0], np.zeros((2, 2)), np.zeros(2)
    )
    assert np.allclose(tau, [-20.0, 0.0])


def test_slave_at_its_offset_needs_no_torque():
    tau = slave_control(
        GainSet.uniform(20, 20, 2), TWO_SLAVES, 1, [0.1, -0.3], [0.0, 0.0], [0.0, 0.0], np.zeros(2)
    )
    assert np.allclose(tau, 0.0, atol=1e-15)


def test_master_adds_gravity_compensation():
    gravity = np.array([3.0, -1.0])
    tau = master_control(
        GainSet.uniform(20, 20, 2), TWO_SLAVES, [0.2, 0.2], [0.0, 0.0], np.full((2, 2), 0.2), gravity
    )
    assert np.allclose(tau, gravity)


@settings(max_examples=50, deadline=None)
@given(vectors, vectors, vectors)
def test_master_torque_invariant_under_replicating_slaves(q_m, dq_m, held):
    """Duplicating every slave with the same held sample keeps the 1/N average."""
    gains2 = GainSet.uniform(20, 20, 2)
    gains4 = GainSet.uniform(20, 20, 4)
    held2 = np.stack([held, -held])
    held4 = np.concatenate([held2, held2])
    tau2 = master_control(gains2, TWO_SLAVES, q_m, dq_m, held2, np.zeros(2))
    tau4 = master_control(gains4, FormationGeometry.default(4), q_m, dq_m, held4, np.zeros(2))
    assert np.allclose(tau2, tau4, atol=1e-12)


def test_master_torque_invariant_under_slave_permutation(rng):
    gains = GainSet.from_scalars([10.0, 20.0, 30.0], [20.0, 20.0, 20.0])
    formation = FormationGeometry.default(3)
    held = rng.normal(size=(3, 2))
    q_m, dq_m = rng.normal(size=2), rng.normal(size=2)
    tau = master_control(gains, formation, q_m, dq_m, held, np.zeros(2))
    order = [2, 0, 1]
    permuted = GainSet.from_scalars([30.0, 10.0, 20.0], [20.0, 20.0, 20.0])
    assert np.allclose(tau, master_control(permuted, formation, q_m, dq_m, held[order], np.zeros(2)))


def test_slave_law_is_affine_with_gain_slopes(rng):
    gains = GainSet.from_scalars([5.0, 7.0], [3.0, 4.0])
    q, dq, held = rng.normal(size=2), rng.normal(size=2), rng.normal(size=2)
    base = slave_control(gains, TWO_SLAVES, 2, q, dq, held, np.zeros(2))
    delta = np.array([0.01, -0.02])
    assert np.allclose(slave_control(gains, TWO_SLAVES, 2, q + delta, dq, held, np.zeros(2)) - base, -7.0 * delta)
    assert np.allclose(slave_control(gains, TWO_SLAVES, 2, q, dq + delta, held, np.zeros(2)) - base, -4.0 * delta)


def test_vectorised_slaves_match_single_law(rng, gains3, formation3):
    q_s, dq_s = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    held, gravity = rng.normal(size=2), rng.normal(size=(3, 2))
    together = slave_controls(gains3, formation3, q_s, dq_s, held, gravity)
    for i in range(1, 4):
        single = slave_control(gains3, formation3, i, q_s[i - 1], dq_s[i - 1], held, gravity[i - 1])
        assert np.allclose(together[i - 1], single)


def test_slave_index_out_of_range(gains3, formation3):
    with pytest.raises(ValidationError):
        slave_control(gains3, formation3, 0, [0, 0], [0, 0], [0, 0], [0, 0])
    with pytest.raises(ValidationError):
        slave_control(gains3, formation3, 4, [0, 0], [0, 0], [0, 0], [0, 0])


def test_held_positions_must_cover_every_slave(gains3, formation3):
    with pytest.raises(DimensionError):
        master_control(gains3, formation3, [0, 0], [0, 0], np.zeros((2, 2)), [0, 0])


def test_formation_offsets_must_sum_to_zero():
    with pytest.raises(ValueError):
        FormationGeometry(offsets=[[0.1, 0.0], [0.1, 0.0]])
    with pytest.raises(ValueError):
        FormationGeometry(offsets=[[0.0, 0.0], [0.0, 0.0]])


@pytest.mark.parametrize("n_slaves", [2, 3, 4, 5])
def test_default_formation_is_valid(n_slaves):
    formation = FormationGeometry.default(n_slaves)
    assert formation.offsets.shape == (n_slaves, 2)
    assert np.allclose(formation.offsets.sum(axis=0), 0.0, atol=1e-12)


def test_gains_must_be_positive_definite():
    with pytest.raises(ValueError):
        GainSet(kp=[[[1.0, 0.0], [0.0, -1.0]]] * 2, kd=[np.eye(2)] * 2)
