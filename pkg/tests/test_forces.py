import numpy as np
import pytest

from app.schemas.simulation import RectanglePulse
from app.services.forces import (
    bounded_force,
    human_force_scenario2,
    human_force_scenario3,
    rectangle_force_scenario3,
    wall_contact_force,
)
from app.services.manipulator import end_effector, jacobian


def test_bounded_force():
    assert bounded_force(0.0) == pytest.approx(25.0)
    assert bounded_force(np.pi / 2) == pytest.approx(35.0)


def test_scenario2_torque_is_jacobian_transpose(params):
    q = np.array([0.4, -0.2])
    expected = jacobian(params, q).T @ np.array([0.0, bounded_force(1.0)])
    assert np.allclose(human_force_scenario2(1.0, q, params), expected)


def test_rectangle_pulse_edges():
    pulse = RectanglePulse()
    assert rectangle_force_scenario3(0.49, pulse) == 0.0
    assert rectangle_force_scenario3(0.5, pulse) == 25.0
    assert rectangle_force_scenario3(31.99, pulse) == 25.0
    assert rectangle_force_scenario3(32.0, pulse) == 0.0


def test_scenario3_torque_vanishes_outside_pulse(params):
    assert np.allclose(human_force_scenario3(33.0, [0.3, 0.3], params), 0.0)


def test_pulse_window_must_be_ordered():
    with pytest.raises(ValueError):
        RectanglePulse(t_on=2.0, t_off=1.0)


def test_wall_is_unilateral(params):
    below = np.array([0.0, 0.0])
    assert end_effector(params, below)[1] < 0.3
    assert np.allclose(wall_contact_force(params, below), 0.0)


def test_wall_pushes_down_when_penetrated(params):
    q = np.array([np.pi / 2, 0.0])
    y = end_effector(params, q)[1]
    force = wall_contact_force(params, q)
    expected = -jacobian(params, q).T @ np.array([0.0, 1e4 * (y - 0.3)])
    assert np.allclose(force, expected)


def test_wall_force_batched(params):
    q = np.array([[0.0, 0.0], [np.pi / 2, 0.0]])
    forces = wall_contact_force(params, q)
    assert forces.shape == (2, 2)
    assert np.allclose(forces[0], 0.0)
    assert np.allclose(forces[1], wall_contact_force(params, q[1]))
