"""Transmit beamformer synthesis: radar illumination under per-user rate floors.

The sensing figure of merit is Tr(V^H M V)/sigma_b^2 with M the sum of the
per-target kernels ``j_approx(theta_hat, sigma_hat)``.  Maximizing it under a
power budget alone is solved by loading all power on the top eigenvector of
M; the implemented program instead pulls V toward the scaled eigenbasis of M
through the weighted least-squares objective

    minimize ||Lambda^(1/2) (V - sqrt(P_b) V_c)||_F^2,

where V_c collects the eigenvectors of M, subject to a per-user second-order
cone for each rate floor and the total power ball.

Conic structure (complex entries are lifted to interleaved real/imaginary
pairs by the modeling layer, so each complex slot contributes two reals):
per user u the cone stacks the N-1 interference terms h_u^H v_u' (u' != u),
the user noise deviation sigma_u, and the scaled useful part
sqrt(1/(2^gamma_u - 1)) Re{h_u^H v_u} as the cone radius - dimension
2(N-1) + 1 + 1 reals.  Restricting the useful term to its real part is lossless
because a per-column phase rotation of V leaves both the objective weights
and every other constraint untouched.  The power budget is one cone of
dimension 2 N^2 + 1.  Rate floors of exactly zero are vacuous (the rate is
nonnegative by definition) and are skipped.

Any interior-point conic solver reaching a primal-dual gap around the
requested tolerance is adequate; CLARABEL is used when available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .scene import DownlinkUser, downlink_channel, _steering_matrix
from .spread_model import j_approx
from .angle_est import AngleEstimate

# tie-breaking regularizer added to the eigenvalue weights so columns aligned
# with the null space of M stay minimum-norm instead of free
_LAMBDA_FLOOR = 1e-9

_PREFERRED_SOLVERS = ("CLARABEL", "ECOS", "SCS")


@dataclass(frozen=True, eq=False)
class RadarObjective:
    """Illumination metric matrix with its eigendecomposition (descending)."""

    m_hat: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray


@dataclass(frozen=True, eq=False)
class BeamformerSolution:
    v: np.ndarray | None
    achieved_rates: np.ndarray
    radar_snr: float
    solver_status: str  # optimal | infeasible | max_iter
    objective_value: float


def radar_objective(angle_estimates: AngleEstimate, n: int) -> RadarObjective:
    """Sum of per-target kernels J_app(theta_hat, sigma_hat), eigendecomposed."""
    if angle_estimates.n_targets < 1:
        raise ValueError("at least one target estimate is required")
    m_hat = np.zeros((n, n), dtype=complex)
    for theta, sigma in zip(
        angle_estimates.theta_rad, angle_estimates.sigma_theta_rad
    ):
        m_hat += j_approx(theta, sigma, n)
    w, v = np.linalg.eigh(m_hat)
    w = w[::-1]
    v = v[:, ::-1]
    return RadarObjective(m_hat=m_hat, eigvecs=v, eigvals=w)


def candidate_beamformer(obj: RadarObjective) -> np.ndarray:
    """Unitary eigenvector matrix of the objective; the power scaling
    sqrt(P_b) enters the least-squares target, not this matrix."""
    return obj.eigvecs


def achieved_sinr(v: np.ndarray, user: DownlinkUser, user_index: int) -> float:
    """Downlink SINR of one user under beamformer ``v``.

    Signal is the user's own column; every other column (user or probing)
    counts as interference.
    """
    h_row = downlink_channel(user, v.shape[0])
    gains = np.abs(h_row @ v) ** 2
    signal = gains[user_index]
    interference = gains.sum() - signal
    return float(signal / (interference + user.noise_var))


def achieved_rate(v: np.ndarray, user: DownlinkUser, user_index: int) -> float:
    """Spectral efficiency log2(1 + SINR) of one user."""
    return math.log2(1.0 + achieved_sinr(v, user, user_index))


def radar_snr(v: np.ndarray, obj: RadarObjective, noise_var: float) -> float:
    """Illumination metric Tr(V^H M V)/sigma^2."""
    return float(np.real(np.trace(v.conj().T @ obj.m_hat @ v)) / noise_var)


def solve_beamformer(
    obj: RadarObjective,
    users,
    p_b: float,
    tolerance: float = 1e-8,
    noise_var: float = 1.0,
    solver: str | None = None,
) -> BeamformerSolution:
    """Solve the rate-constrained illumination program.

    Returns a solution whose status is ``optimal`` when the solver certifies
    optimality, ``infeasible`` when the rate floors cannot be met within the
    power budget, and ``max_iter`` on numerical failure.  ``noise_var`` only
    scales the reported radar SNR of the solution.
    """
    if p_b <= 0:
        raise ValueError("p_b must be positive")
    users = list(users)
    n = obj.m_hat.shape[0]
    weights = np.sqrt(np.maximum(obj.eigvals, 0.0) + _LAMBDA_FLOOR)
    target = math.sqrt(p_b) * obj.eigvecs

    v = cp.Variable((n, n), complex=True)
    objective = cp.Minimize(cp.sum_squares(cp.multiply(weights[:, None], v - target)))
    constraints = [cp.norm(v, "fro") <= math.sqrt(p_b)]
    for u, user in enumerate(users):
        gamma = user.rate_threshold_bps_hz
        if gamma < 0:
            raise ValueError("rate thresholds must be nonnegative")
        if gamma == 0.0:
            continue  # a zero rate floor holds for any beamformer
        h_row = downlink_channel(user, n)
        gains = h_row @ v
        interference = cp.hstack([gains[j] for j in range(n) if j != u])
        radius = math.sqrt(1.0 / (2.0**gamma - 1.0)) * cp.real(gains[u])
        stacked = cp.hstack([interference, math.sqrt(user.noise_var) + 0j])
        constraints.append(cp.SOC(radius, stacked))

    problem = cp.Problem(objective, constraints)
    chosen = solver or next(
        (s for s in _PREFERRED_SOLVERS if s in cp.installed_solvers()), None
    )
    solve_kwargs = {}
    if chosen == "CLARABEL":
        solve_kwargs = dict(
            tol_gap_abs=tolerance,
            tol_gap_rel=tolerance,
            tol_feas=tolerance,
        )
    try:
        problem.solve(solver=chosen, **solve_kwargs)
    except cp.error.SolverError:
        return BeamformerSolution(
            v=None,
            achieved_rates=np.full(len(users), np.nan),
            radar_snr=float("nan"),
            solver_status="max_iter",
            objective_value=float("nan"),
        )

    if problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        status = "infeasible"
    elif problem.status == cp.OPTIMAL:
        status = "optimal"
    else:
        status = "max_iter"

    if v.value is None:
        return BeamformerSolution(
            v=None,
            achieved_rates=np.full(len(users), np.nan),
            radar_snr=float("nan"),
            solver_status=status,
            objective_value=float("nan"),
        )
    v_opt = np.asarray(v.value)
    rates = np.array([achieved_rate(v_opt, user, u) for u, user in enumerate(users)])
    return BeamformerSolution(
        v=v_opt,
        achieved_rates=rates,
        radar_snr=radar_snr(v_opt, obj, noise_var),
        solver_status=status,
        objective_value=float(problem.value),
    )


def beampattern(v: np.ndarray, theta_grid: np.ndarray) -> np.ndarray:
    """Transmit power versus direction: b(theta) = ||a^H(theta) V||^2."""
    theta_grid = np.asarray(theta_grid, dtype=float)
    n = v.shape[0]
    a = _steering_matrix(theta_grid, n)  # n x |grid|
    return np.sum(np.abs(a.conj().T @ v) ** 2, axis=1)
