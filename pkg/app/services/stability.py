"""Stability criteria for the scheduled teleoperation loop.

Both criteria are tested over scaled-identity decision variables. For
scaled-identity gains the blocks are invariant under orthogonal conjugation,
so averaging any matrix witness over that group yields a scaled-identity
witness: the restriction loses nothing.
"""

from typing import Callable, List, Optional, Tuple

import cvxpy as cp
import numpy as np
from scipy.optimize import minimize_scalar

from app.core.exceptions import (
    DimensionError,
    MonotonicityError,
    NotSymmetricError,
    NumericalError,
    ValidationError,
)
from app.core.logging import get_logger
from app.schemas.control import GainSet
from app.schemas.network import Protocol
from app.schemas.stability import (
    FeasibilityResult,
    FeasibilityStatus,
    LmiVariablesRR,
    LmiVariablesTOD,
    MarginResult,
    StabilityQuery,
)
from app.services.network import delay_horizons

logger = get_logger("stability")

SYMMETRY_TOL = 1e-12
EPS_SCALE = 1e-9

RR_TOLERANCE = 1e-4
TOD_TOLERANCE = 5e-3
TOD_MAX_ITERS = 10000

INITIAL_BRACKET = 0.1
MAX_BRACKET = 1e3
SCAN_POINTS = 10
VARIABLE_BOUND = 1e6


def feasibility_epsilon(matrix: np.ndarray) -> float:
    """Scale-free margin ε = 1e-9 (1 + max |entry|)."""
    return EPS_SCALE * (1.0 + float(np.max(np.abs(matrix))))


def max_eigenvalue(matrix: np.ndarray) -> float:
    matrix = np.asarray(matrix, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (matrix + matrix.T))[-1])


def is_negative_definite(matrix, eps: Optional[float] = None) -> bool:
    """True iff λ_max(matrix) < −ε."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionError("definiteness needs a square matrix", {"shape": matrix.shape})
    asymmetry = float(np.max(np.abs(matrix - matrix.T))) if matrix.size else 0.0
    if asymmetry > SYMMETRY_TOL:
        raise NotSymmetricError("matrix is not symmetric", {"asymmetry": asymmetry})
    if eps is None:
        eps = feasibility_epsilon(matrix)
    return max_eigenvalue(matrix) < -eps


def _symmetric(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def _check_horizons(*horizons: float) -> None:
    if any(h <= 0.0 for h in horizons):
        raise ValidationError("delay horizons must be positive", {"horizons": horizons})


def _check_slaves(n_slaves: int) -> None:
    if n_slaves < 2:
        raise ValidationError("at least two slaves are required", {"slaves": n_slaves})


def assemble_pi(i: int, gains: GainSet, h_m: float, h_s: float, variables: LmiVariablesRR) -> np.ndarray:
    """Block matrix Π_i (4n × 4n) of the round-robin criterion, slave index from 1."""
    _check_horizons(h_m, h_s)
    kp = gains.kp[i - 1]
    kd = gains.kd[i - 1]
    r_m = variables.r_m
    r_s = variables.r_s[i - 1]
    zero = np.zeros_like(kp)
    return np.block(
        [
            [_symmetric(-2.0 * kd + h_m * r_m), zero, zero, -kp],
            [zero, _symmetric(-2.0 * kd + h_s * r_s), -kp, zero],
            [zero, -kp.T, _symmetric(-r_m / h_m), zero],
            [-kp.T, zero, zero, _symmetric(-r_s / h_s)],
        ]
    )


def assemble_omega(i: int, n_slaves: int, variables: LmiVariablesTOD) -> np.ndarray:
    """Block matrix Ω_i (2n × 2n) bounding the jumps of the TOD functional."""
    _check_slaves(n_slaves)
    q = variables.q[i - 1]
    u = variables.u[i - 1]
    g = variables.g[i - 1]
    return np.block(
        [
            [_symmetric(-q / (n_slaves - 1) + u), q],
            [q.T, _symmetric(-g + q)],
        ]
    )


def assemble_sigma(
    i: int, n_slaves: int, gains: GainSet, h_m: float, variables: LmiVariablesTOD
) -> np.ndarray:
    """Block matrix Σ_i ((N+3)n square) of the TOD criterion."""
    _check_slaves(n_slaves)
    _check_horizons(h_m)
    n = gains.n_joints
    pi_bar = assemble_pi(i, gains, h_m, h_m, variables)
    pi_bar[n : 2 * n, n : 2 * n] += h_m * _symmetric(variables.g[i - 1])

    others = [j for j in range(1, n_slaves + 1) if j != i]
    coupling = np.zeros(((n_slaves - 1) * n, 4 * n))
    psi = np.zeros(((n_slaves - 1) * n, (n_slaves - 1) * n))
    for row, j in enumerate(others):
        rows = slice(row * n, (row + 1) * n)
        coupling[rows, 0:n] = gains.kp[j - 1]
        psi[rows, rows] = -_symmetric(variables.u[j - 1]) / h_m
    return np.block([[pi_bar, coupling.T], [coupling, psi]])


def _worst_block(blocks: List[np.ndarray]) -> Tuple[bool, float]:
    feasible = all(is_negative_definite(block) for block in blocks)
    return feasible, max(max_eigenvalue(block) for block in blocks)


def rr_analytic_max_mati(query: StabilityQuery) -> float:
    """Largest MATI with max_i k_p,i (h_M + h_S) < 2 min_i k_d,i."""
    kp, kd = query.gains.scalar_gains()
    # h_M + h_S = (N + 1) MATI + 2 MAD
    mati = (2.0 * kd.min() / kp.max() - 2.0 * query.mad) / (query.n_slaves + 1)
    return max(0.0, float(mati))


def _rr_scalar_witness(kp: np.ndarray, kd: np.ndarray, h_m: float, h_s: float) -> Tuple[float, np.ndarray, float]:
    """Best shared a = h_M r_m and per-slave b_i = h_S r_si, with the margin min_i f_i(a)."""
    p_sq = (kp * h_s) ** 2
    q_sq = (kp * h_m) ** 2
    upper = 2.0 * kd.min()

    def margin(a: float) -> float:
        return float(np.min(2.0 * kd - q_sq / a - p_sq / (2.0 * kd - a)))

    # min_i f_i is concave on (0, 2 min k_d)
    res = minimize_scalar(
        lambda a: -margin(a),
        bounds=(upper * 1e-9, upper * (1.0 - 1e-9)),
        method="bounded",
        options={"xatol": upper * 1e-12},
    )
    a = float(res.x)
    lower_b = p_sq / (2.0 * kd - a)
    upper_b = 2.0 * kd - q_sq / a
    b = np.where(upper_b > lower_b, 0.5 * (lower_b + upper_b), lower_b)
    return a, b, margin(a)


def feasible_rr(query: StabilityQuery, mati: float) -> FeasibilityResult:
    """Round-robin criterion at one MATI, with a verified witness when feasible."""
    kp, kd = query.gains.scalar_gains()
    h_m, h_s = delay_horizons(query.n_slaves, mati, query.mad, Protocol.RR)
    a, b, margin = _rr_scalar_witness(kp, kd, h_m, h_s)

    eye = np.eye(query.n_joints)
    witness = LmiVariablesRR(r_m=(a / h_m) * eye, r_s=np.array([(b_i / h_s) * eye for b_i in b]))
    blocks = [assemble_pi(i, query.gains, h_m, h_s, witness) for i in range(1, query.n_slaves + 1)]
    verified, worst = _worst_block(blocks)
    feasible = margin > 0.0 and verified
    logger.debug(f"RR mati={mati:.6f}: margin={margin:.3e}, max eigenvalue={worst:.3e}")
    return FeasibilityResult(
        feasible=feasible,
        status=FeasibilityStatus.FEASIBLE if feasible else FeasibilityStatus.INFEASIBLE,
        max_block_eigenvalue=worst,
        witness=witness if feasible else None,
        h_m=h_m,
        h_s=h_s,
    )


class TodFeasibilityProblem:
    """Convex program for the TOD criterion, built once and re-solved per MATI.

    Scalar variables stand for r_m I, r_si I, q_i I, u_i I, g_i I. The program
    minimises the largest eigenvalue over all Ω_i and Σ_i blocks together
    with −x for every variable x; the criterion holds iff that minimum is
    negative.
    """

    def __init__(self, query: StabilityQuery, max_iters: int = TOD_MAX_ITERS, solver: Optional[str] = None):
        self.query = query
        self.max_iters = max_iters
        self.kp, self.kd = query.gains.scalar_gains()
        self.solver = solver or self._default_solver()
        self.epsilon = EPS_SCALE * (1.0 + 2.0 * float(self.kd.max()) + float(self.kp.max()))
        n_slaves = query.n_slaves

        self.h = cp.Parameter(pos=True, name="h_m")
        self.h_inv = cp.Parameter(pos=True, name="h_m_inv")
        self.r_m = cp.Variable(name="r_m")
        self.r_s = cp.Variable(n_slaves, name="r_s")
        self.q = cp.Variable(n_slaves, name="q")
        self.u = cp.Variable(n_slaves, name="u")
        self.g = cp.Variable(n_slaves, name="g")
        self.t = cp.Variable(name="t")

        constraints = []
        for i in range(n_slaves):
            constraints.append(self._omega(i) << self.t * np.eye(2))
            size = n_slaves + 3
            constraints.append(self._sigma(i) << self.t * np.eye(size))
        for x in (self.r_m, self.r_s, self.q, self.u, self.g):
            constraints += [x >= -self.t, x <= VARIABLE_BOUND]
        self.problem = cp.Problem(cp.Minimize(self.t), constraints)

    @staticmethod
    def _default_solver() -> str:
        return cp.CLARABEL if cp.CLARABEL in cp.installed_solvers() else cp.SCS

    @staticmethod
    def _unit(size: int, row: int, col: int) -> np.ndarray:
        e = np.zeros((size, size))
        e[row, col] = 1.0
        e[col, row] = 1.0
        return e

    def _omega(self, i: int):
        n_slaves = self.query.n_slaves
        unit = self._unit
        return (
            (-self.q[i] / (n_slaves - 1) + self.u[i]) * unit(2, 0, 0)
            + self.q[i] * unit(2, 0, 1)
            + (self.q[i] - self.g[i]) * unit(2, 1, 1)
        )

    def _sigma(self, i: int):
        n_slaves = self.query.n_slaves
        size = n_slaves + 3
        unit = self._unit
        constant = np.zeros((size, size))
        constant[0, 0] = constant[1, 1] = -2.0 * self.kd[i]
        constant[0, 3] = constant[3, 0] = -self.kp[i]
        constant[1, 2] = constant[2, 1] = -self.kp[i]
        others = [j for j in range(n_slaves) if j != i]
        for row, j in enumerate(others, start=4):
            constant[row, 0] = constant[0, row] = self.kp[j]

        growth = self.r_m * unit(size, 0, 0) + (self.r_s[i] + self.g[i]) * unit(size, 1, 1)
        decay = self.r_m * unit(size, 2, 2) + self.r_s[i] * unit(size, 3, 3)
        for row, j in enumerate(others, start=4):
            decay = decay + self.u[j] * unit(size, row, row)
        return constant + self.h * growth - self.h_inv * decay

    def _solver_options(self) -> dict:
        if self.solver == cp.SCS:
            return {"max_iters": self.max_iters}
        return {"max_iter": self.max_iters}

    def witness(self) -> LmiVariablesTOD:
        eye = np.eye(self.query.n_joints)

        def stack(values) -> np.ndarray:
            return np.array([float(v) * eye for v in np.atleast_1d(values)])

        return LmiVariablesTOD(
            r_m=float(self.r_m.value) * eye,
            r_s=stack(self.r_s.value),
            q=stack(self.q.value),
            u=stack(self.u.value),
            g=stack(self.g.value),
        )

    def solve(self, mati: float) -> FeasibilityResult:
        query = self.query
        h_m, h_s = delay_horizons(query.n_slaves, mati, query.mad, Protocol.TOD)
        self.h.value = h_m
        self.h_inv.value = 1.0 / h_m
        try:
            self.problem.solve(solver=self.solver, **self._solver_options())
        except cp.SolverError as e:
            logger.warning(f"TOD solver failed at mati={mati:.6f}: {str(e)}")
            return self._undecided(h_m, h_s)

        iterations = int(getattr(self.problem.solver_stats, "num_iters", 0) or 0)
        status = self.problem.status
        if self.t.value is None:
            logger.warning(f"TOD solver status {status} at mati={mati:.6f}")
            return self._undecided(h_m, h_s, iterations)
        if status != cp.OPTIMAL:
            logger.info(f"TOD solver status {status} at mati={mati:.6f}; re-verifying the witness")

        t_star = float(self.t.value)
        if t_star >= -self.epsilon:
            return FeasibilityResult(
                feasible=False,
                status=FeasibilityStatus.INFEASIBLE,
                max_block_eigenvalue=t_star,
                h_m=h_m,
                h_s=h_s,
                iterations=iterations,
            )

        witness = self.witness()
        verified, worst = verify_tod_witness(query, h_m, witness)
        if not verified:
            logger.warning(f"TOD witness at mati={mati:.6f} failed re-verification (t*={t_star:.3e})")
            return self._undecided(h_m, h_s, iterations, worst)
        return FeasibilityResult(
            feasible=True,
            status=FeasibilityStatus.FEASIBLE,
            max_block_eigenvalue=worst,
            witness=witness,
            h_m=h_m,
            h_s=h_s,
            iterations=iterations,
        )

    @staticmethod
    def _undecided(h_m: float, h_s: float, iterations: int = 0, worst: float = np.nan) -> FeasibilityResult:
        return FeasibilityResult(
            feasible=False,
            status=FeasibilityStatus.UNDECIDED,
            max_block_eigenvalue=worst,
            h_m=h_m,
            h_s=h_s,
            iterations=iterations,
        )


def verify_tod_witness(query: StabilityQuery, h_m: float, witness: LmiVariablesTOD) -> Tuple[bool, float]:
    """Re-check every Ω_i and Σ_i at full dimension, plus positivity of the variables."""
    n_slaves = query.n_slaves
    blocks = []
    for i in range(1, n_slaves + 1):
        blocks.append(assemble_omega(i, n_slaves, witness))
        blocks.append(assemble_sigma(i, n_slaves, query.gains, h_m, witness))
    # Positivity as negative definiteness of −X
    for stack in (witness.r_m[None], witness.r_s, witness.q, witness.u, witness.g):
        blocks.extend(-matrix for matrix in stack)
    return _worst_block(blocks)


def feasible_tod(query: StabilityQuery, mati: float, max_iters: int = TOD_MAX_ITERS) -> FeasibilityResult:
    """TOD criterion at one MATI; undecided solver runs count as infeasible."""
    return TodFeasibilityProblem(query, max_iters=max_iters).solve(mati)


def feasibility_test(query: StabilityQuery, max_iters: int = TOD_MAX_ITERS) -> Callable[[float], FeasibilityResult]:
    """Inner test for the bisection; the TOD program is compiled once per query."""
    if query.protocol == Protocol.RR:
        return lambda mati: feasible_rr(query, mati)
    primary = TodFeasibilityProblem(query, max_iters=max_iters)
    fallback: Optional[TodFeasibilityProblem] = None

    def test(mati: float) -> FeasibilityResult:
        nonlocal fallback
        result = primary.solve(mati)
        if result.status != FeasibilityStatus.UNDECIDED or primary.solver == cp.SCS:
            return result
        if fallback is None:
            fallback = TodFeasibilityProblem(query, max_iters=max_iters, solver=cp.SCS)
        logger.warning(f"Undecided at mati={mati:.6f} with {primary.solver}; retrying with {cp.SCS}")
        return fallback.solve(mati)

    return test


def default_tolerance(protocol: Protocol) -> float:
    return RR_TOLERANCE if Protocol(protocol) == Protocol.RR else TOD_TOLERANCE


def analyze_margin(query: StabilityQuery, tol: Optional[float] = None, max_iters: int = TOD_MAX_ITERS) -> MarginResult:
    """Bisection for the largest feasible MATI of a query."""
    tol = tol if tol is not None else default_tolerance(query.protocol)
    if tol <= 0.0:
        raise ValidationError("tolerance must be positive", {"tol": tol})
    test = feasibility_test(query, max_iters)
    logger.info(
        f"Margin search: {query.protocol.value.upper()} N={query.n_slaves} MAD={query.mad} tol={tol}"
    )

    # Bracket by doubling
    lo, lo_result = 0.0, None
    hi = INITIAL_BRACKET
    hi_result = test(hi)
    while hi_result.status != FeasibilityStatus.INFEASIBLE:
        if hi_result.feasible:
            lo, lo_result = hi, hi_result
        else:
            logger.warning(f"Undecided at mati={hi:.6f} while bracketing; skipped")
        hi *= 2.0
        if hi > MAX_BRACKET:
            raise NumericalError("no infeasible MATI found while bracketing", {"bracket": hi})
        hi_result = test(hi)
    logger.info(f"Bracket [{lo:.4f}, {hi:.4f}]")

    # Coarse monotonicity scan over (0, hi]
    grid = hi * np.arange(1, SCAN_POINTS + 1) / SCAN_POINTS
    scan = [test(float(m)) for m in grid[:-1]] + [hi_result]
    # Undecided points carry no evidence either way
    flags = [None if r.status == FeasibilityStatus.UNDECIDED else r.feasible for r in scan]
    for m, flag in zip(grid, flags):
        if flag is None:
            logger.warning(f"Undecided at mati={m:.6f} in the monotonicity scan; skipped")
    decided = [flag for flag in flags if flag is not None]
    for j in range(1, len(decided)):
        if decided[j] and not decided[j - 1]:
            raise MonotonicityError(
                "feasibility is not monotone in MATI",
                {"grid": [round(float(m), 6) for m in grid], "feasible": flags},
            )
    feasible_idx = [j for j, flag in enumerate(flags) if flag]
    if feasible_idx:
        j = feasible_idx[-1]
        lo, lo_result, hi = float(grid[j]), scan[j], float(grid[j + 1])
    else:
        lo, lo_result, hi = 0.0, None, float(grid[0])

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        result = test(mid)
        if result.status == FeasibilityStatus.UNDECIDED:
            tol *= 2.0
            logger.warning(f"Undecided at mati={mid:.6f}; widening tolerance to {tol:.2e}")
            hi = mid
            continue
        if result.feasible:
            lo, lo_result = mid, result
        else:
            hi = mid

    if lo_result is None:
        logger.info("No feasible MATI found")
        return MarginResult(
            query=query, mati=0.0, h_m=query.mad, h_s=query.mad, feasible=False, tolerance=tol
        )
    logger.info(f"Max MATI {lo:.6f} (h_M={lo_result.h_m:.6f}, h_S={lo_result.h_s:.6f})")
    return MarginResult(
        query=query,
        mati=lo,
        h_m=lo_result.h_m,
        h_s=lo_result.h_s,
        feasible=True,
        tolerance=tol,
        result=lo_result,
    )


def max_mati(query: StabilityQuery, tol: Optional[float] = None) -> float:
    """Largest MATI for which the protocol's criterion holds (0 when none)."""
    return analyze_margin(query, tol).mati


def lyapunov_witness(
    n_slaves: int, gains: GainSet, mati: float, mad: float, protocol: Protocol
) -> Optional[FeasibilityResult]:
    """Feasibility result at the run's own (MATI, MAD), or None for matrix gains."""
    query = StabilityQuery(
        n_slaves=n_slaves, n_joints=gains.n_joints, gains=gains, mad=mad, protocol=protocol
    )
    try:
        if query.protocol == Protocol.RR:
            return feasible_rr(query, mati)
        return feasible_tod(query, mati)
    except ValidationError as e:
        logger.warning(f"No Lyapunov witness: {e.message}")
        return None
