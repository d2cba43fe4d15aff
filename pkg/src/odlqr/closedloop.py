"""Augmented closed loop and evaluation of the observer-based LQR cost.

With the transformed state zbar = (x, x - xi) the loop is

    zbar_{t+1} = Ahat zbar_t,   Ahat = [[A - BK, BK], [0, A - LC]]

and for a stabilising pair the cost is J = Tr(S Y) = Tr(Omega Qhat) where

    S     = Qhat + Ahat' S Ahat
    Omega = Y    + Ahat Omega Ahat'
"""

from dataclasses import dataclass

import numpy as np

from .errors import UnstableError
from .mateq import (
    DEFAULT_OPTIONS,
    solve_dlyap,
    solve_dlyap_dual_transpose,
    solve_sylvester_affine,
    spectral_radius,
    sym,
)
from .problem import GainPair, Plant, ProblemInstance

STABILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class AugmentedSystem:
    A_hat: np.ndarray
    Q_hat: np.ndarray
    A_bar: np.ndarray
    B_hat: np.ndarray
    C_hat: np.ndarray
    F_bar: np.ndarray
    F_hat: np.ndarray
    T: np.ndarray
    A_KL: np.ndarray

    @property
    def rho(self):
        return spectral_radius(self.A_hat)


def selectors(plant: Plant):
    """Constant matrices (A_bar, B_hat, C_hat, F_bar, F_hat, T) of the augmentation."""
    n, m, d = plant.n, plant.m, plant.d
    I, Z = np.eye(n), np.zeros((n, n))
    A_bar = np.block([[plant.A, Z], [Z, plant.A]])
    B_hat = np.vstack([plant.B, np.zeros((n, m))])
    C_hat = np.hstack([np.zeros((d, n)), -plant.C])
    F_bar = np.hstack([I, -I])
    F_hat = np.hstack([Z, I])
    T = np.block([[I, Z], [I, -I]])
    return A_bar, B_hat, C_hat, F_bar, F_hat, T


def build_augmented(p: ProblemInstance, g: GainPair) -> AugmentedSystem:
    p.check_gains(g)
    A_bar, B_hat, C_hat, F_bar, F_hat, T = selectors(p.plant)
    K, L = g.K, g.L
    A_hat = A_bar - B_hat @ K @ F_bar + F_hat.T @ L @ C_hat
    n = p.plant.n
    Q_hat = np.zeros((2 * n, 2 * n))
    Q_hat[:n, :n] = p.weights.Q
    Q_hat += F_bar.T @ K.T @ p.weights.R @ K @ F_bar
    A_KL = p.plant.A - p.plant.B @ K - L @ p.plant.C
    return AugmentedSystem(A_hat, Q_hat, A_bar, B_hat, C_hat, F_bar, F_hat, T, A_KL)


def _blocks(X, n):
    return X[:n, :n], X[:n, n:], X[n:, n:]


@dataclass(frozen=True)
class ClosedLoopEvaluation:
    S: np.ndarray
    Omega: np.ndarray
    cost: float
    aug: AugmentedSystem

    @property
    def n(self):
        return self.S.shape[0] // 2

    @property
    def S11(self):
        return _blocks(self.S, self.n)[0]

    @property
    def S12(self):
        return _blocks(self.S, self.n)[1]

    @property
    def S22(self):
        return _blocks(self.S, self.n)[2]

    @property
    def Omega11(self):
        return _blocks(self.Omega, self.n)[0]

    @property
    def Omega12(self):
        return _blocks(self.Omega, self.n)[1]

    @property
    def Omega22(self):
        return _blocks(self.Omega, self.n)[2]

    @property
    def Sigma22(self):
        """Accumulated second moment of the controller state xi."""
        return sym(self.Omega11 - self.Omega12 - self.Omega12.T + self.Omega22)

    @property
    def cost_omega(self):
        """Tr(Omega Qhat); equals ``cost`` up to rounding."""
        return float(np.trace(self.Omega @ self.aug.Q_hat))


def require_stable(aug: AugmentedSystem):
    rho = aug.rho
    if rho >= 1.0 - STABILITY_MARGIN:
        raise UnstableError(
            f"closed loop is not stable (rho = {rho:.6g}); the cost is undefined"
        )


def is_stable(p: ProblemInstance, g: GainPair) -> bool:
    """True when the cost at ``g`` is defined (rho(Ahat) below 1 - margin)."""
    return build_augmented(p, g).rho < 1.0 - STABILITY_MARGIN


def evaluate(p: ProblemInstance, g: GainPair, opts=DEFAULT_OPTIONS) -> ClosedLoopEvaluation:
    """Solve both 2n-dimensional Lyapunov equations and return S, Omega and J."""
    aug = build_augmented(p, g)
    require_stable(aug)
    S = solve_dlyap_dual_transpose(aug.A_hat, aug.Q_hat, opts)
    Omega = solve_dlyap(aug.A_hat, p.correlation.Y, opts)
    cost = float(np.trace(S @ p.correlation.Y))
    return ClosedLoopEvaluation(S, Omega, cost, aug)


def cost(p: ProblemInstance, g: GainPair) -> float:
    return evaluate(p, g).cost


def evaluate_blocks(p: ProblemInstance, g: GainPair, opts=DEFAULT_OPTIONS) -> ClosedLoopEvaluation:
    """Same result as :func:`evaluate`, assembled from n x n block equations.

    S11 depends on K only, S12 is an affine Sylvester equation given S11 and
    S22 follows from both; Omega is solved in the reverse order starting from
    Omega22, which depends on L only.
    """
    aug = build_augmented(p, g)
    require_stable(aug)
    A, B, C = p.plant.A, p.plant.B, p.plant.C
    Q, R = p.weights.Q, p.weights.R
    K, L = g.K, g.L
    corr = p.correlation
    Ak = A - B @ K
    Al = A - L @ C
    BK = B @ K
    KRK = K.T @ R @ K

    S11 = solve_dlyap_dual_transpose(Ak, Q + KRK, opts)
    S12 = solve_sylvester_affine(-KRK + Ak.T @ S11 @ BK, Ak.T, Al, opts)
    cross = BK.T @ S12 @ Al
    S22 = solve_dlyap_dual_transpose(Al, KRK + BK.T @ S11 @ BK + cross + cross.T, opts)

    O22 = solve_dlyap(Al, corr.Y22, opts)
    O12 = solve_sylvester_affine(corr.Y12 + BK @ O22 @ Al.T, Ak, Al.T, opts)
    cross = Ak @ O12 @ BK.T
    O11 = solve_dlyap(Ak, corr.Y11 + cross + cross.T + BK @ O22 @ BK.T, opts)

    S = np.block([[S11, S12], [S12.T, S22]])
    Omega = np.block([[O11, O12], [O12.T, O22]])
    return ClosedLoopEvaluation(S, Omega, float(np.trace(S @ corr.Y)), aug)


def accumulated_estimation_variance(plant: Plant, L, e0, opts=DEFAULT_OPTIONS):
    """Omega_hat_L = sum_t E_t, the solution of W = E0 + (A - LC) W (A - LC)'."""
    Al = plant.A - np.atleast_2d(L) @ plant.C
    rho = spectral_radius(Al)
    if rho >= 1.0:
        raise UnstableError(f"observer gain is not stabilising (rho(A - LC) = {rho:.6g})")
    return solve_dlyap(Al, e0, opts)
