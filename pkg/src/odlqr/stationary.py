"""Stationary points of J(K, L) through the coupled Sylvester equations.

At a stationary pair (Kd, Ld) both gains satisfy

    Kd = G_K + R_K^{-1} M Kd N Sigma22^{-1}
    Ld = G_L + S22^{-1} U Ld V (C Omega22 C')^{-1}

where every coefficient is built from the S and Omega blocks at (Kd, Ld).
:func:`solve_stationary` freezes the coefficients at the current gains, solves
both affine Sylvester equations exactly and takes a damped step towards the
solution, halving the step until the closed loop stays stable and the cost
does not increase.

On flat landscapes that fixed point can contract very slowly. When it stops
making progress the solver switches to a damped modified-Newton polish on the
same cost (exact gradient, Hessian from differenced gradients, eigenvalues
floored to keep the step a descent direction).
"""

from dataclasses import dataclass, field

import numpy as np

from .closedloop import ClosedLoopEvaluation, evaluate
from .design import standard_pair
from .errors import ConvergenceError, DimensionError, UnstableError
from .gradient import gradients_compact
from .mateq import pd_inv, solve_sylvester_affine, sylvester_margin
from .problem import GainPair, ProblemInstance, numerical_rank

NEAR_SINGULAR = 1e-8
DEGENERATE_RTOL = 1e-6


@dataclass(frozen=True)
class SylvesterCoefficients:
    R_K: np.ndarray
    M: np.ndarray
    N: np.ndarray
    G_K: np.ndarray
    U: np.ndarray
    V: np.ndarray
    G_L: np.ndarray
    K_circ: np.ndarray
    L_circ: np.ndarray
    # inverses needed to put both equations in X = G + P X Q form
    R_K_inv: np.ndarray
    S22_inv: np.ndarray
    Sigma22_inv: np.ndarray
    W_inv: np.ndarray
    # pieces of the uncoupled (one-gain) stationarity conditions
    coupling_K: np.ndarray = field(repr=False)
    coupling_L: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)

    @property
    def K_left(self):
        return self.R_K_inv @ self.M

    @property
    def K_right(self):
        return self.N @ self.Sigma22_inv

    @property
    def L_left(self):
        return self.S22_inv @ self.U

    @property
    def L_right(self):
        return self.V @ self.W_inv

    def solve_K(self):
        return solve_sylvester_affine(self.G_K, self.K_left, self.K_right)

    def solve_L(self):
        return solve_sylvester_affine(self.G_L, self.L_left, self.L_right)

    def K_given_L(self, L):
        """K making grad_K vanish with L held at the given value."""
        return self.K_circ - self.coupling_K @ L @ self.C @ self.D @ self.Sigma22_inv

    def L_given_K(self, K):
        """L making grad_L vanish with K held at the given value."""
        return self.L_circ - self.coupling_L @ K @ self.D.T @ self.C.T @ self.W_inv

    def residual_K(self, K):
        r = K - self.G_K - self.K_left @ K @ self.K_right
        return float(np.linalg.norm(r) / (1.0 + np.linalg.norm(K)))

    def residual_L(self, L):
        r = L - self.G_L - self.L_left @ L @ self.L_right
        return float(np.linalg.norm(r) / (1.0 + np.linalg.norm(L)))


def assemble_coefficients(p: ProblemInstance, g: GainPair, ev: ClosedLoopEvaluation | None = None):
    """All Sylvester coefficient matrices at the gains ``g``."""
    ev = evaluate(p, g) if ev is None else ev
    A, B, C = p.plant.A, p.plant.B, p.plant.C
    S11, S12, S22 = ev.S11, ev.S12, ev.S22
    O12, O22 = ev.Omega12, ev.Omega22

    R_K = p.weights.R + B.T @ S11 @ B
    R_K_inv = pd_inv(R_K, "R + B' S11 B")
    S22_inv = pd_inv(S22, "S22")
    Sigma22_inv = pd_inv(ev.Sigma22, "Sigma22")
    W_inv = pd_inv(C @ O22 @ C.T, "C Omega22 C'")
    D = O12.T - O22

    M = B.T @ S12 @ S22_inv @ S12.T @ B
    N = D.T @ C.T @ W_inv @ C @ D
    U = S12.T @ B @ R_K_inv @ B.T @ S12
    V = C @ D @ Sigma22_inv @ D.T @ C.T
    K_circ = R_K_inv @ B.T @ S11 @ A + R_K_inv @ B.T @ (S11 + S12) @ A @ D @ Sigma22_inv
    L_circ = A @ O22 @ C.T @ W_inv + S22_inv @ S12.T @ A @ O12 @ C.T @ W_inv
    coupling_K = R_K_inv @ B.T @ S12
    coupling_L = S22_inv @ S12.T @ B
    G_K = K_circ - coupling_K @ L_circ @ C @ D @ Sigma22_inv
    G_L = L_circ - coupling_L @ K_circ @ D.T @ C.T @ W_inv
    return SylvesterCoefficients(
        R_K, M, N, G_K, U, V, G_L, K_circ, L_circ,
        R_K_inv, S22_inv, Sigma22_inv, W_inv,
        coupling_K, coupling_L, D, C,
    )


@dataclass(frozen=True)
class UniquenessReport:
    margin_K: float
    margin_L: float
    near_singular: bool


def check_uniqueness(c: SylvesterCoefficients, threshold=NEAR_SINGULAR) -> UniquenessReport:
    """Distance of every eigenvalue product lambda_i * mu_j from 1, for both equations."""
    mk = sylvester_margin(c.K_left, c.K_right)
    ml = sylvester_margin(c.L_left, c.L_right)
    return UniquenessReport(mk, ml, bool(min(mk, ml) < threshold))


@dataclass(frozen=True)
class StationaryOptions:
    tolerance: float = 1e-7
    step_tolerance: float = 1e-11
    max_iterations: int = 10_000
    min_damping: float = 2.0**-40
    update: str = "both"  # "both", "K" (L held fixed) or "L" (K held fixed)
    # hand over to the Newton polish after this many fixed-point steps
    # without a 10x drop in the gradient norm
    stall_window: int = 100
    max_polish: int = 100

    def __post_init__(self):
        if self.update not in ("both", "K", "L"):
            raise ValueError("update must be 'both', 'K' or 'L'")


@dataclass
class StationaryReport:
    K_dd: np.ndarray
    L_dd: np.ndarray
    iterations: int
    grad_norm_K: float
    grad_norm_L: float
    sylvester_residual_K: float
    sylvester_residual_L: float
    degenerate_to_standard: bool
    cost: float
    cost_standard: float
    uniqueness: UniquenessReport
    history: list = field(default_factory=list, repr=False)
    polish_iterations: int = 0

    @property
    def gains(self):
        return GainPair(self.K_dd, self.L_dd)

    def to_dict(self):
        return {
            "K_dd": self.K_dd.tolist(),
            "L_dd": self.L_dd.tolist(),
            "iterations": self.iterations,
            "polish_iterations": self.polish_iterations,
            "cost": self.cost,
            "cost_standard": self.cost_standard,
            "grad_norm_K": self.grad_norm_K,
            "grad_norm_L": self.grad_norm_L,
            "sylvester_residual_K": self.sylvester_residual_K,
            "sylvester_residual_L": self.sylvester_residual_L,
            "uniqueness_margin_K": self.uniqueness.margin_K,
            "uniqueness_margin_L": self.uniqueness.margin_L,
            "degenerate_to_standard": self.degenerate_to_standard,
        }


def _close(X, Y):
    return np.linalg.norm(X - Y) <= DEGENERATE_RTOL * max(1.0, np.linalg.norm(Y))


def _try_cost(p, g):
    try:
        return evaluate(p, g).cost
    except UnstableError:
        return None


def _grad_norm(p, g, ev, free):
    grads = gradients_compact(p, g, ev)
    return float(np.sqrt(sum(getattr(grads, f"norm_{w}") ** 2 for w in free)))


def solve_stationary(p: ProblemInstance, init: GainPair | None = None,
                     opts: StationaryOptions = StationaryOptions()) -> StationaryReport:
    """Iterate the coupled Sylvester equations from ``init`` (default: the standard pair)."""
    if numerical_rank(p.plant.B) < p.plant.m:
        raise DimensionError("B must have full column rank for the stationary-point equations")
    std = standard_pair(p)
    g = std.gains if init is None else init
    p.check_gains(g)
    ev = evaluate(p, g)
    history = [ev.cost]
    free = {"both": ("K", "L"), "K": ("K",), "L": ("L",)}[opts.update]
    best_grad = _grad_norm(p, g, ev, free)
    since_best = 0
    stalled = False

    it = 0
    for it in range(1, opts.max_iterations + 1):
        c = assemble_coefficients(p, g, ev)
        if opts.update == "both":
            K_new, L_new = c.solve_K(), c.solve_L()
        elif opts.update == "K":
            K_new, L_new = c.K_given_L(g.L), g.L
        else:
            K_new, L_new = g.K, c.L_given_K(g.K)

        alpha = 1.0
        slack = 1e-12 * max(1.0, abs(ev.cost))
        while True:
            trial = GainPair((1 - alpha) * g.K + alpha * K_new, (1 - alpha) * g.L + alpha * L_new)
            J = _try_cost(p, trial)
            if J is not None and J <= ev.cost + slack:
                break
            alpha *= 0.5
            if alpha < opts.min_damping:
                raise ConvergenceError(
                    f"no admissible step at iteration {it}: every damped update "
                    "is destabilising or increases the cost"
                )
        step = np.sqrt(np.linalg.norm(trial.K - g.K) ** 2 + np.linalg.norm(trial.L - g.L) ** 2)
        size = np.sqrt(np.linalg.norm(trial.K) ** 2 + np.linalg.norm(trial.L) ** 2)
        g = trial
        ev = evaluate(p, g)
        history.append(ev.cost)
        if step <= opts.step_tolerance * (1.0 + size):
            break
        gn = _grad_norm(p, g, ev, free)
        if gn < 0.1 * best_grad:
            best_grad, since_best = gn, 0
        else:
            since_best += 1
        if since_best >= opts.stall_window:
            stalled = True
            break

    scale = opts.tolerance * (1.0 + abs(ev.cost))
    polish = 0
    if stalled or it == opts.max_iterations or _grad_norm(p, g, ev, free) > scale:
        g, polish = newton_polish(p, g, free, opts, history)
        ev = evaluate(p, g)

    report = certify(p, g, ev, std, it, history)
    report.polish_iterations = polish
    scale = opts.tolerance * (1.0 + abs(report.cost))
    bad = [w for w in free if getattr(report, f"grad_norm_{w}") > scale]
    if opts.update == "both":
        bad += [w for w in free if getattr(report, f"sylvester_residual_{w}") > opts.tolerance]
    if bad:
        raise ConvergenceError(
            f"iteration settled after {it} + {polish} steps but stationarity of "
            f"{sorted(set(bad))} is not certified "
            f"(grad norms {report.grad_norm_K:.2e}, {report.grad_norm_L:.2e})"
        )
    return report


def _pack(pair, free):
    return np.concatenate([np.ravel(getattr(pair, w)) for w in free])


def _unpack(g, vec, free):
    parts, k = {}, 0
    for w in free:
        X = getattr(g, w)
        parts[w] = vec[k:k + X.size].reshape(X.shape)
        k += X.size
    return g.replace(**parts)


def _packed_gradient(p, g, free):
    grads = gradients_compact(p, g)
    return _pack(GainPair(grads.grad_K, grads.grad_L), free)


def _hessian(p, g, free, rel_step=1e-6):
    x = _pack(g, free)
    H = np.empty((x.size, x.size))
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        H[:, i] = (_packed_gradient(p, _unpack(g, x + e, free), free)
                   - _packed_gradient(p, _unpack(g, x - e, free), free)) / (2 * h)
    return 0.5 * (H + H.T)


def newton_polish(p, g, free, opts, history):
    """Damped modified-Newton steps on J over the ``free`` gains.

    Returns (gains, steps taken). Stops once the gradient (and, when both gains
    move, the Sylvester residuals) are 100x below the certification threshold,
    when the step stalls, or when no damped step decreases the cost.
    """
    target = 1e-2 * opts.tolerance
    for k in range(1, opts.max_polish + 1):
        ev = evaluate(p, g)
        grad = _packed_gradient(p, g, free)
        if np.linalg.norm(grad) <= target * (1.0 + abs(ev.cost)):
            c = assemble_coefficients(p, g, ev)
            if free != ("K", "L") or max(c.residual_K(g.K), c.residual_L(g.L)) <= target:
                return g, k - 1
        try:
            H = _hessian(p, g, free)
        except UnstableError:
            return g, k - 1
        w, V = np.linalg.eigh(H)
        floor = 1e-10 * max(1.0, np.abs(w).max())
        d = -V @ ((V.T @ grad) / np.maximum(np.abs(w), floor))
        x = _pack(g, free)
        alpha, slope = 1.0, float(grad @ d)
        while alpha >= opts.min_damping:
            trial = _unpack(g, x + alpha * d, free)
            J = _try_cost(p, trial)
            if J is not None and J <= ev.cost + 1e-4 * alpha * slope + 1e-13 * abs(ev.cost):
                break
            alpha *= 0.5
        else:
            return g, k - 1
        if alpha * np.linalg.norm(d) <= opts.step_tolerance * (1.0 + np.linalg.norm(x)):
            return trial, k
        g = trial
        history.append(J)
    return g, opts.max_polish


def certify(p, g, ev, std, iterations, history):
    grads = gradients_compact(p, g, ev)
    c = assemble_coefficients(p, g, ev)
    degenerate = _close(g.K, std.K_star) and _close(g.L, std.L_star)
    return StationaryReport(
        K_dd=g.K,
        L_dd=g.L,
        iterations=iterations,
        grad_norm_K=grads.norm_K,
        grad_norm_L=grads.norm_L,
        sylvester_residual_K=c.residual_K(g.K),
        sylvester_residual_L=c.residual_L(g.L),
        degenerate_to_standard=bool(degenerate),
        cost=ev.cost,
        cost_standard=evaluate(p, std.gains).cost,
        uniqueness=check_uniqueness(c),
        history=history,
    )


def standard_pair_coupling(p: ProblemInstance):
    """Norm of K*(Omega22 - Omega12') evaluated at the standard pair.

    A nonzero value together with Y22 != Y12' rules out (K*, L*) as a
    stationary point.
    """
    std = standard_pair(p)
    ev = evaluate(p, std.gains)
    return float(np.linalg.norm(std.K_star @ (ev.Omega22 - ev.Omega12.T)))

