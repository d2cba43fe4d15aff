"""Standard controller/observer synthesis (the separation-principle design)."""

from dataclasses import dataclass

import numpy as np

from .mateq import DEFAULT_OPTIONS, pd_inv, solve_dare_control, solve_dare_filter
from .problem import CostWeights, GainPair, Plant, ProblemInstance


@dataclass(frozen=True)
class StandardPair:
    K_star: np.ndarray
    L_star: np.ndarray
    S_hat_star: np.ndarray
    Omega_hat_star: np.ndarray

    @property
    def gains(self):
        return GainPair(self.K_star, self.L_star)


def standard_controller(plant: Plant, weights: CostWeights, opts=DEFAULT_OPTIONS):
    """State-feedback LQR gain K* = (R + B'SB)^{-1} B'SA and its Riccati solution S."""
    A, B = plant.A, plant.B
    S = solve_dare_control(A, B, weights.Q, weights.R, opts)
    K = np.linalg.solve(weights.R + B.T @ S @ B, B.T @ S @ A)
    return K, S


def standard_observer(plant: Plant, e0, opts=DEFAULT_OPTIONS):
    """Observer gain minimising the trace of the accumulated estimation variance.

    Returns ``(L_star, Omega_hat)`` with L* = A W C' (C W C')^{-1}, where W is the
    filter Riccati solution seeded with the initial error correlation ``e0``.
    """
    A, C = plant.A, plant.C
    W = solve_dare_filter(A, C, e0, opts)
    L = A @ W @ C.T @ pd_inv(C @ W @ C.T, "C W C'")
    return L, W


def standard_pair(p: ProblemInstance, e0=None, opts=DEFAULT_OPTIONS) -> StandardPair:
    """(K*, L*) for a problem instance; ``e0`` defaults to the instance's E0 (Y22)."""
    K, S = standard_controller(p.plant, p.weights, opts)
    L, W = standard_observer(p.plant, p.E0 if e0 is None else e0, opts)
    return StandardPair(K, L, S, W)
