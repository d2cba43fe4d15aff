"""Closed-loop rollouts used as an independent check on the analytic quantities.

The rollout integrates the plant and the observer-based controller in their
original coordinates (x, xi); nothing here goes through S or Omega.
"""

import math
from dataclasses import dataclass

import numpy as np

from .closedloop import build_augmented, require_stable
from .problem import GainPair, Plant, ProblemInstance

MAX_HORIZON = 10**6


@dataclass(frozen=True)
class Trajectory:
    """States for t = 0..T and inputs, outputs, stage costs for t = 0..T-1."""

    x: np.ndarray
    xi: np.ndarray
    u: np.ndarray
    y: np.ndarray
    stage_costs: np.ndarray

    @property
    def horizon(self):
        return len(self.stage_costs)

    @property
    def total_cost(self):
        return float(np.sum(self.stage_costs))

    @property
    def zbar(self):
        """Transformed states (x_t, x_t - xi_t), shape (T+1, 2n)."""
        return np.hstack([self.x, self.x - self.xi])


def zbar_to_z(zbar):
    """Map (x, x - xi) back to (x, xi); the transformation is its own inverse."""
    zbar = np.asarray(zbar, dtype=float)
    n = zbar.shape[0] // 2
    return np.concatenate([zbar[:n], zbar[:n] - zbar[n:]], axis=0)


def rollout(p: ProblemInstance, g: GainPair, z0, horizon: int) -> Trajectory:
    """Simulate ``horizon`` steps from z0 = (x_0, xi_0)."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    p.check_gains(g)
    A, B, C = p.plant.A, p.plant.B, p.plant.C
    Q, R = p.weights.Q, p.weights.R
    K, L = g.K, g.L
    n = p.plant.n
    z0 = np.asarray(z0, dtype=float).ravel()
    if z0.shape != (2 * n,):
        raise ValueError(f"z0 must have length {2 * n}")
    Acl = A - B @ K - L @ C

    x = np.empty((horizon + 1, n))
    xi = np.empty((horizon + 1, n))
    u = np.empty((horizon, p.plant.m))
    y = np.empty((horizon, p.plant.d))
    costs = np.empty(horizon)
    x[0], xi[0] = z0[:n], z0[n:]
    for t in range(horizon):
        u[t] = -K @ xi[t]
        y[t] = C @ x[t]
        costs[t] = x[t] @ Q @ x[t] + u[t] @ R @ u[t]
        x[t + 1] = A @ x[t] + B @ u[t]
        xi[t + 1] = Acl @ xi[t] + L @ y[t]
    return Trajectory(x, xi, u, y, costs)


def default_horizon(p: ProblemInstance, g: GainPair) -> int:
    """Smallest T with rho(Ahat)^(2T) <= 1e-12, capped at 10^6."""
    rho = build_augmented(p, g).rho
    if rho == 0.0:
        return 1
    if rho >= 1.0:
        return MAX_HORIZON
    return int(min(MAX_HORIZON, max(1, math.ceil(math.log(1e-12) / math.log(rho**2)))))


def sample_initial_states(Y, samples: int, rng: np.random.Generator):
    """Zero-mean Gaussian draws of zbar_0 with second moment Y, shape (samples, 2n)."""
    chol = np.linalg.cholesky(np.asarray(Y, dtype=float))
    return rng.standard_normal((samples, chol.shape[0])) @ chol.T


@dataclass(frozen=True)
class MonteCarloResult:
    mean: float
    stderr: float
    horizon: int
    samples: int
    seed: int
    distribution: str = "gaussian(0, Y)"


def monte_carlo_cost(p: ProblemInstance, g: GainPair, horizon=None, samples=10_000,
                     seed=0, batch=4096) -> MonteCarloResult:
    """Sample mean and standard error of truncated rollout costs.

    Rollouts are vectorised over samples in batches. Each sample's cost is
    accumulated in time order and the sample mean uses numpy's pairwise
    summation, so the result does not depend on the batch size.
    """
    require_stable(build_augmented(p, g))
    T = default_horizon(p, g) if horizon is None else int(horizon)
    rng = np.random.default_rng(seed)
    zbar0 = sample_initial_states(p.correlation.Y, samples, rng)
    A, B, C = p.plant.A, p.plant.B, p.plant.C
    Q, R = p.weights.Q, p.weights.R
    K, L = g.K, g.L
    Acl = A - B @ K - L @ C
    n = p.plant.n
    totals = np.empty(samples)
    for lo in range(0, samples, batch):
        zb = zbar0[lo:lo + batch]
        x = zb[:, :n].copy()
        xi = x - zb[:, n:]
        acc = np.zeros(len(zb))
        for _ in range(T):
            u = -xi @ K.T
            acc += np.einsum("ij,jk,ik->i", x, Q, x) + np.einsum("ij,jk,ik->i", u, R, u)
            y = x @ C.T
            x, xi = x @ A.T + u @ B.T, xi @ Acl.T + y @ L.T
        totals[lo:lo + batch] = acc
    mean = float(np.mean(totals))
    stderr = float(np.std(totals, ddof=1) / math.sqrt(samples)) if samples > 1 else float("nan")
    return MonteCarloResult(mean, stderr, T, samples, seed)


def estimation_variance_sequence(plant: Plant, L, e0, horizon: int):
    """E_t = (A - LC)^t E0 ((A - LC)')^t for t = 0..horizon, shape (horizon+1, n, n)."""
    Al = plant.A - np.atleast_2d(L) @ plant.C
    e0 = np.asarray(e0, dtype=float)
    out = np.empty((horizon + 1,) + e0.shape)
    out[0] = e0
    P = np.eye(plant.n)
    for t in range(1, horizon + 1):
        P = Al @ P
        out[t] = P @ e0 @ P.T
    return out
