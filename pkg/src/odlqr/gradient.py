"""Exact policy gradients of J(K, L) and a finite-difference check."""

from dataclasses import dataclass

import numpy as np

from .closedloop import (
    ClosedLoopEvaluation,
    build_augmented,
    evaluate,
    require_stable,
    selectors,
)
from .errors import UnstableError
from .mateq import solve_dlyap_dual_transpose
from .problem import GainPair, ProblemInstance


@dataclass(frozen=True)
class GradientPair:
    grad_K: np.ndarray
    grad_L: np.ndarray

    @property
    def norm_K(self):
        return float(np.linalg.norm(self.grad_K))

    @property
    def norm_L(self):
        return float(np.linalg.norm(self.grad_L))


@dataclass(frozen=True)
class GradientKernels:
    """E_K = R K F_bar - B_hat' S A_hat and E_L = F_hat S A_hat."""

    E_K: np.ndarray
    E_L: np.ndarray


def kernels(p: ProblemInstance, g: GainPair, ev: ClosedLoopEvaluation | None = None):
    ev = evaluate(p, g) if ev is None else ev
    a = ev.aug
    E_K = p.weights.R @ g.K @ a.F_bar - a.B_hat.T @ ev.S @ a.A_hat
    E_L = a.F_hat @ ev.S @ a.A_hat
    return GradientKernels(E_K, E_L)


def gradients_compact(p: ProblemInstance, g: GainPair, ev=None) -> GradientPair:
    """grad_K = 2 E_K Omega F_bar',  grad_L = 2 E_L Omega C_hat'."""
    ev = evaluate(p, g) if ev is None else ev
    ker = kernels(p, g, ev)
    a = ev.aug
    return GradientPair(
        2.0 * ker.E_K @ ev.Omega @ a.F_bar.T,
        2.0 * ker.E_L @ ev.Omega @ a.C_hat.T,
    )


def gradients_block(p: ProblemInstance, g: GainPair, ev=None) -> GradientPair:
    """Gradients written with the n x n blocks of S and Omega."""
    ev = evaluate(p, g) if ev is None else ev
    A, B, C = p.plant.A, p.plant.B, p.plant.C
    R = p.weights.R
    K, L = g.K, g.L
    S11, S12, S22 = ev.S11, ev.S12, ev.S22
    O11, O12, O22 = ev.Omega11, ev.Omega12, ev.Omega22
    Al = A - L @ C
    grad_K = (
        2 * (R + B.T @ S11 @ B) @ K @ ev.Sigma22
        - 2 * B.T @ S11 @ A @ (O11 - O12)
        - 2 * B.T @ S12 @ Al @ (O12.T - O22)
    )
    grad_L = (
        -2 * S12.T @ (A - B @ K) @ O12 @ C.T
        - 2 * S12.T @ B @ K @ O22 @ C.T
        - 2 * S22 @ Al @ O22 @ C.T
    )
    return GradientPair(grad_K, grad_L)


def _cost_difference(p, g, which, E):
    """J(g + E) - J(g - E) for a perturbation E of gain ``which``.

    With Ahat(g +/- E) = Ahat0 +/- Delta, the difference D = S+ - S- solves

        D = (Qhat+ - Qhat-) + Ahat+' D Ahat+ + 2 (Delta' S- Ahat0 + Ahat0' S- Delta)

    and J+ - J- = Tr(D Y). The forcing terms are formed without subtracting
    two nearly equal costs, so the difference keeps its relative accuracy
    even when it is many orders smaller than J.
    """
    sel = selectors(p.plant)
    _, B_hat, C_hat, F_bar, F_hat, _ = sel
    aug0 = build_augmented(p, g)
    dQ = np.zeros_like(aug0.Q_hat)
    if which == "K":
        delta = -B_hat @ E @ F_bar
        KRE = g.K.T @ p.weights.R @ E
        dQ = 2.0 * F_bar.T @ (KRE + KRE.T) @ F_bar
    else:
        delta = F_hat.T @ E @ C_hat
    plus = g.replace(**{which: getattr(g, which) + E})
    minus = g.replace(**{which: getattr(g, which) - E})
    for gp in (plus, minus):
        try:
            require_stable(build_augmented(p, gp))
        except UnstableError as exc:
            raise UnstableError(
                f"finite-difference step leaves the stabilising set in {which}"
            ) from exc
    S_minus = evaluate(p, minus).S
    cross = delta.T @ S_minus @ aug0.A_hat
    forcing = dQ + 2.0 * (cross + cross.T)
    D = solve_dlyap_dual_transpose(aug0.A_hat + delta, forcing)
    return float(np.trace(D @ p.correlation.Y))


def _fd(p, g, which, step, direct, order):
    X = getattr(g, which)
    grad = np.zeros_like(X)
    for idx in np.ndindex(*X.shape):
        h = step * (1.0 + abs(X[idx]))
        E = np.zeros_like(X)
        E[idx] = h

        def diff(scale):
            if direct:
                return (_checked_cost(p, g.replace(**{which: X + scale * E}), which, idx)
                        - _checked_cost(p, g.replace(**{which: X - scale * E}), which, idx))
            return _cost_difference(p, g, which, scale * E)

        if order == 2:
            grad[idx] = diff(1.0) / (2 * h)
        else:
            grad[idx] = (8.0 * diff(1.0) - diff(2.0)) / (12 * h)
    return grad


def _checked_cost(p, g, which, idx):
    try:
        return evaluate(p, g).cost
    except UnstableError as exc:
        raise UnstableError(
            f"finite-difference step leaves the stabilising set at {which}{idx}"
        ) from exc


def gradients_fd(p: ProblemInstance, g: GainPair, step: float = 1e-5,
                 direct: bool = False, order: int = 4) -> GradientPair:
    """Central differences of the cost, entry by entry, with h = step * (1 + |entry|).

    ``order=4`` uses the five-point stencil (8 D(h) - D(2h)) / 12h with
    D(s) = J(x + s) - J(x - s); ``order=2`` is the plain D(h) / 2h.
    By default each D is computed from its own Lyapunov equation
    (see :func:`_cost_difference`); ``direct=True`` subtracts two calls to
    :func:`evaluate` instead, which loses about eps * J / h to cancellation.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    require_stable(build_augmented(p, g))
    return GradientPair(_fd(p, g, "K", step, direct, order),
                        _fd(p, g, "L", step, direct, order))


def max_relative_error(analytic, reference, floor=1e-8):
    """Entrywise max |a - r| / max(|r|, floor)."""
    a = np.asarray(analytic)
    r = np.asarray(reference)
    return float(np.max(np.abs(a - r) / np.maximum(np.abs(r), floor)))


def relative_frobenius(analytic: GradientPair, reference: GradientPair, floor=1e-8):
    """||a - r||_F / max(||r||_F, floor) over the stacked pair (grad_K, grad_L)."""
    diff = np.hypot(np.linalg.norm(analytic.grad_K - reference.grad_K),
                    np.linalg.norm(analytic.grad_L - reference.grad_L))
    scale = np.hypot(reference.norm_K, reference.norm_L)
    return float(diff / max(scale, floor))
