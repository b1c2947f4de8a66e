import cvxpy as cp
import numpy as np
import pytest

import app.services.stability as stability
from app.core.exceptions import MonotonicityError, NotSymmetricError, UnsupportedGainsError, ValidationError
from app.schemas.control import GainSet
from app.schemas.network import Protocol
from app.schemas.stability import (
    FeasibilityResult,
    FeasibilityStatus,
    LmiVariablesRR,
    LmiVariablesTOD,
    StabilityQuery,
)
from app.services.stability import (
    analyze_margin,
    assemble_omega,
    assemble_pi,
    assemble_sigma,
    feasible_rr,
    feasible_tod,
    is_negative_definite,
    max_eigenvalue,
    max_mati,
    rr_analytic_max_mati,
    verify_tod_witness,
)

ONE = np.ones((1, 1))


def scalar_vars(n_slaves=2, **values):
    stack = lambda v: np.array([[[v]]] * n_slaves)
    if {"q", "u", "g"} & values.keys():
        return LmiVariablesTOD(
            r_m=values.get("r_m", 1.0) * ONE,
            r_s=stack(values.get("r_s", 1.0)),
            q=stack(values.get("q", 1.0)),
            u=stack(values.get("u", 1.0)),
            g=stack(values.get("g", 1.0)),
        )
    return LmiVariablesRR(r_m=values.get("r_m", 1.0) * ONE, r_s=stack(values.get("r_s", 1.0)))


def query(protocol=Protocol.RR, n_slaves=2, mad=0.0, kp=20.0, kd=20.0):
    kp_list = kp if isinstance(kp, (list, tuple)) else [kp] * n_slaves
    return StabilityQuery(
        n_slaves=n_slaves,
        gains=GainSet.from_scalars(kp_list, [kd] * n_slaves),
        mad=mad,
        protocol=protocol,
    )


def test_assemble_pi_substitution():
    gains = GainSet.uniform(20.0, 20.0, 2, n_joints=1)
    pi = assemble_pi(1, gains, 1.0, 1.0, scalar_vars())
    expected = np.array(
        [
            [-39.0, 0.0, 0.0, -20.0],
            [0.0, -39.0, -20.0, 0.0],
            [0.0, -20.0, -1.0, 0.0],
            [-20.0, 0.0, 0.0, -1.0],
        ]
    )
    assert np.array_equal(pi, expected)
    assert np.array_equal(pi, pi.T)


def test_pi_eigenvalues_match_characteristic_polynomial():
    gains = GainSet.uniform(20.0, 20.0, 2, n_joints=1)
    pi = assemble_pi(1, gains, 1.0, 1.0, scalar_vars())
    # Both 2x2 sub-blocks are [[-39, -20], [-20, -1]]
    expected = (-40.0 + np.sqrt(40.0**2 - 4.0 * (39.0 - 400.0))) / 2.0
    assert max_eigenvalue(pi) == pytest.approx(expected)
    assert not is_negative_definite(pi)


def test_pi_without_coupling_is_block_diagonal():
    gains = GainSet.model_construct(kp=np.zeros((2, 2, 2)), kd=np.array([20.0 * np.eye(2)] * 2))
    variables = LmiVariablesRR(r_m=np.eye(2), r_s=np.array([np.eye(2)] * 2))
    pi = assemble_pi(2, gains, 0.5, 0.8, variables)
    blocks = [pi[k : k + 2, k : k + 2] for k in range(0, 8, 2)]
    assert np.allclose(pi, np.block([[blocks[0], np.zeros((2, 6))], [np.zeros((6, 2)), pi[2:, 2:]]]))
    assert is_negative_definite(pi) == all(is_negative_definite(b) for b in blocks)


def test_pi_rejects_non_positive_horizon():
    with pytest.raises(ValidationError):
        assemble_pi(1, GainSet.uniform(20.0, 20.0, 2), 0.0, 1.0, scalar_vars())


def test_assemble_omega():
    omega = assemble_omega(1, 2, scalar_vars(q=1.0, u=0.1, g=3.0))
    assert np.allclose(omega, [[-0.9, 1.0], [1.0, -2.0]])
    assert is_negative_definite(omega)
    with pytest.raises(ValidationError):
        assemble_omega(1, 1, scalar_vars(n_slaves=1, q=1.0))


def test_omega_small_q_is_feasible():
    assert is_negative_definite(assemble_omega(2, 3, scalar_vars(3, q=1e-4, u=1e-5, g=0.1)))


def test_assemble_sigma_shape_and_decay_block():
    gains = GainSet.uniform(20.0, 20.0, 2, n_joints=1)
    sigma = assemble_sigma(1, 2, gains, 0.4, scalar_vars(q=1.0, u=0.3, g=0.5))
    assert sigma.shape == (5, 5)
    assert np.array_equal(sigma, sigma.T)
    assert sigma[-1, -1] == pytest.approx(-0.3 / 0.4)
    assert sigma[-1, 0] == 20.0
    sigma3 = assemble_sigma(2, 3, GainSet.uniform(20.0, 20.0, 3, n_joints=1), 0.2, scalar_vars(3, q=1.0))
    assert sigma3.shape == (6, 6)


def test_sigma_decouples_without_other_gains():
    kp = np.array([[[20.0]], [[0.0]]])
    gains = GainSet.model_construct(kp=kp, kd=np.array([[[20.0]], [[20.0]]]))
    sigma = assemble_sigma(1, 2, gains, 0.4, scalar_vars(q=1.0, u=0.3, g=0.5))
    assert np.all(sigma[4, :4] == 0.0)
    assert is_negative_definite(sigma) == (
        is_negative_definite(sigma[:4, :4]) and is_negative_definite(sigma[4:, 4:])
    )


def test_is_negative_definite_basics():
    assert is_negative_definite(-np.eye(3))
    assert not is_negative_definite(np.zeros((3, 3)))
    with pytest.raises(NotSymmetricError):
        is_negative_definite(np.array([[-1.0, 0.1], [0.0, -1.0]]))


def test_feasible_rr_examples():
    assert feasible_rr(query(), 0.6).feasible
    result = feasible_rr(query(), 0.7)
    assert not result.feasible
    assert result.status == FeasibilityStatus.INFEASIBLE
    assert result.witness is None


def test_rr_witness_makes_every_block_negative_definite():
    q = query(n_slaves=3, mad=0.2, kp=[10.0, 20.0, 30.0])
    result = feasible_rr(q, 0.2)
    assert result.feasible
    for i in range(1, 4):
        block = assemble_pi(i, q.gains, result.h_m, result.h_s, result.witness)
        assert max_eigenvalue(block) < 0.0


def test_rr_analytic_examples():
    assert rr_analytic_max_mati(query()) == pytest.approx(2.0 / 3.0)
    assert rr_analytic_max_mati(query(n_slaves=3)) == pytest.approx(0.5)
    assert rr_analytic_max_mati(query(n_slaves=3, kp=[10.0, 20.0, 30.0])) == pytest.approx(1.0 / 3.0)


@pytest.mark.parametrize("n_slaves", [2, 3])
def test_rr_matches_closed_form_on_grid(n_slaves):
    q0 = query(n_slaves=n_slaves)
    for mad in np.linspace(0.0, 0.6, 20):
        q = q0.model_copy(update={"mad": float(mad)})
        for mati in np.linspace(0.02, 1.0, 20):
            lhs = 20.0 * ((n_slaves + 1) * mati + 2.0 * mad)
            if abs(lhs - 40.0) < 1e-2:
                continue
            assert feasible_rr(q, float(mati)).feasible == (lhs < 40.0), (mad, mati)


def test_matrix_gains_are_rejected():
    gains = GainSet(kp=[[[20.0, 0.0], [0.0, 10.0]]] * 2, kd=[20.0 * np.eye(2)] * 2)
    q = StabilityQuery(n_slaves=2, gains=gains, mad=0.0, protocol=Protocol.RR)
    with pytest.raises(UnsupportedGainsError, match="general matrix gains unsupported"):
        feasible_rr(q, 0.1)
    with pytest.raises(UnsupportedGainsError):
        feasible_tod(q.model_copy(update={"protocol": Protocol.TOD}), 0.1)


def test_feasible_tod_examples():
    q = query(Protocol.TOD)
    result = feasible_tod(q, 0.40)
    assert result.feasible
    witness = result.witness
    assert np.all(witness.u[:, 0, 0] < witness.q[:, 0, 0] / (q.n_slaves - 1))
    assert verify_tod_witness(q, result.h_m, witness)[0]
    assert not feasible_tod(q, 0.50).feasible


@pytest.mark.parametrize(
    "n_slaves, mad, expected",
    [(2, 0.2, 0.5333), (3, 0.5, 0.25)],
)
def test_max_mati_round_robin(n_slaves, mad, expected):
    assert max_mati(query(n_slaves=n_slaves, mad=mad)) == pytest.approx(expected, abs=1e-4)


def test_max_mati_brackets_the_boundary():
    q = query(n_slaves=3, mad=0.2, kp=[10.0, 20.0, 30.0])
    margin = analyze_margin(q)
    assert margin.feasible
    assert feasible_rr(q, margin.mati - margin.tolerance).feasible
    assert not feasible_rr(q, margin.mati + margin.tolerance).feasible
    assert margin.h_s == pytest.approx(3 * margin.mati + 0.2)


@pytest.mark.slow
@pytest.mark.parametrize(
    "n_slaves, mad, expected",
    [(2, 0.0, 0.4531), (2, 0.2, 0.2431), (3, 0.0, 0.2411), (3, 0.2, 0.0411)],
)
def test_max_mati_tod(n_slaves, mad, expected):
    assert max_mati(query(Protocol.TOD, n_slaves=n_slaves, mad=mad)) == pytest.approx(expected, abs=0.02)


class InaccurateSolve:
    """Stands in for a solve that ends with status optimal_inaccurate."""

    status = cp.OPTIMAL_INACCURATE
    solver_stats = None

    def __init__(self, values):
        self.values = values

    def solve(self, **kwargs):
        for variable, value in self.values:
            variable.value = value


def test_inaccurate_solve_with_verified_witness_is_feasible():
    problem = stability.TodFeasibilityProblem(query(Protocol.TOD))
    assert problem.solve(0.2).feasible
    problem.problem = InaccurateSolve([(v, v.value) for v in problem.problem.variables()])
    result = problem.solve(0.2)
    assert result.status == FeasibilityStatus.FEASIBLE
    assert result.max_block_eigenvalue < 0.0


def test_inaccurate_solve_with_failing_witness_is_undecided():
    problem = stability.TodFeasibilityProblem(query(Protocol.TOD))
    values = [
        (v, np.full(v.shape, -1.0 if v is problem.t else 0.0)) for v in problem.problem.variables()
    ]
    problem.problem = InaccurateSolve(values)
    assert problem.solve(0.2).status == FeasibilityStatus.UNDECIDED


def test_undecided_solve_is_retried_with_scs(monkeypatch):
    solvers = []

    class Problem:
        def __init__(self, q, max_iters=0, solver=None):
            self.solver = solver or cp.CLARABEL

        def solve(self, mati):
            solvers.append(self.solver)
            settled = self.solver == cp.SCS
            return FeasibilityResult(
                feasible=settled,
                status=FeasibilityStatus.FEASIBLE if settled else FeasibilityStatus.UNDECIDED,
                max_block_eigenvalue=-1.0,
                h_m=mati,
                h_s=mati,
            )

    monkeypatch.setattr(stability, "TodFeasibilityProblem", Problem)
    test = stability.feasibility_test(query(Protocol.TOD))
    assert test(0.1).feasible
    assert test(0.2).feasible
    assert solvers == [cp.CLARABEL, cp.SCS, cp.CLARABEL, cp.SCS]


def test_tod_without_feasible_mati():
    margin = analyze_margin(query(Protocol.TOD, mad=0.5))
    assert not margin.feasible
    assert margin.mati == 0.0


def _fake_test(rule):
    def factory(q, max_iters=0):
        def test(mati):
            status = rule(mati)
            return FeasibilityResult(
                feasible=status == FeasibilityStatus.FEASIBLE,
                status=status,
                max_block_eigenvalue=0.0,
                h_m=mati,
                h_s=mati,
            )

        return test

    return factory


def test_non_monotone_feasibility_is_reported(monkeypatch):
    def rule(mati):
        return FeasibilityStatus.FEASIBLE if 0.03 < mati <= 0.1 else FeasibilityStatus.INFEASIBLE

    monkeypatch.setattr(stability, "feasibility_test", _fake_test(rule))
    with pytest.raises(MonotonicityError):
        analyze_margin(query(), tol=1e-3)


@pytest.mark.parametrize("undecided", [0.12, 0.2])
def test_undecided_scan_point_is_skipped(monkeypatch, undecided):
    def rule(mati):
        if abs(mati - undecided) < 1e-9:
            return FeasibilityStatus.UNDECIDED
        return FeasibilityStatus.FEASIBLE if mati < 0.25 else FeasibilityStatus.INFEASIBLE

    monkeypatch.setattr(stability, "feasibility_test", _fake_test(rule))
    margin = analyze_margin(query(), tol=1e-3)
    assert margin.feasible
    assert margin.tolerance == pytest.approx(1e-3)
    assert margin.mati == pytest.approx(0.25, abs=1e-3)


def test_undecided_midpoint_widens_tolerance(monkeypatch):
    def rule(mati):
        if 0.258 < mati < 0.262:
            return FeasibilityStatus.UNDECIDED
        return FeasibilityStatus.FEASIBLE if mati < 0.25 else FeasibilityStatus.INFEASIBLE

    monkeypatch.setattr(stability, "feasibility_test", _fake_test(rule))
    margin = analyze_margin(query(), tol=1e-3)
    assert margin.tolerance == pytest.approx(2e-3)
    assert margin.mati == pytest.approx(0.25, abs=margin.tolerance)


def test_tolerance_must_be_positive():
    with pytest.raises(ValidationError):
        analyze_margin(query(), tol=0.0)
