"""Local gradient-dominance constants around a stationary pair.

Near a stationary pair (Kd, Ld), and under the premise ||Ahat(K, L)||_2 <= gamma < 1,

    J(K, L) - J(Kd, Ld) <= |grad_K|_F^2 / (2 (a_K2 - b_K2))
                         + |grad_L|_F^2 / (2 (a_L2 - b_L2))

whenever ||K - Kd||_F <= r_K and ||L - Ld||_F <= r_L, with
r_K = (a_K2 - b_K2) / (2 b_K3) and r_L = (a_L2 - b_L2) / (2 b_L3).

The constants depend on six free splitting parameters eps_1..eps_6 that come
from Young-type inequalities on the mixed terms:

    eps_1   mixed term of the quadratic remainder bound (C_K2, C_L2)
    eps_2   mixed term of the quadratic lower bound (a_K2, a_L2)
    eps_3   |dK||dL| term carrying C_K1
    eps_4   |dK||dL| term carrying C_L1
    eps_5   |dK|^2 |dL| term carrying C_K2
    eps_6   |dK| |dL|^2 term carrying C_L2

Cubic mixed terms are split with the weighted AM-GM bound
a^2 b <= (2/3) eps a^3 + b^3 / (3 eps^2).

Terms involving the correlation Omega(K, L) at the perturbed gains are
replaced by bounds that hold uniformly over the premise set
(``omega_mode="uniform"``, the default): Omega >= Y and
||Omega||_2 <= ||Y||_2 / (1 - gamma^2). With ``omega_mode="stationary"``
they are evaluated at the stationary pair instead, which is tighter but not a
certified bound away from that pair.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .closedloop import build_augmented, evaluate, is_stable
from .errors import OdlqrError
from .gradient import gradients_compact, kernels
from .problem import GainPair, ProblemInstance

DEFAULT_EPS = (1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
EPS_GRID = tuple(np.logspace(-2, 2, 5))


def _n2(X):
    return float(np.linalg.norm(X, 2)) if np.size(X) else 0.0


def _lmin(X):
    return float(np.linalg.eigvalsh(0.5 * (X + X.T))[0])


@dataclass
class DominanceCoefficients:
    applicable: bool
    reason: str
    gamma: float
    gamma_min: float
    eps: tuple = DEFAULT_EPS
    omega_mode: str = "uniform"
    C_K1: float = np.nan
    C_L1: float = np.nan
    C_K2: float = np.nan
    C_L2: float = np.nan
    alpha_K2: float = np.nan
    alpha_L2: float = np.nan
    beta_K2: float = np.nan
    beta_K3: float = np.nan
    beta_L2: float = np.nan
    beta_L3: float = np.nan
    r_K: float = np.nan
    r_L: float = np.nan
    terms: dict = field(default_factory=dict, repr=False)

    @property
    def feasible(self):
        return bool(
            self.applicable
            and self.alpha_K2 > self.beta_K2
            and self.alpha_L2 > self.beta_L2
        )

    @property
    def margin(self):
        """min(a_K2 - b_K2, a_L2 - b_L2); positive iff feasible."""
        return min(self.alpha_K2 - self.beta_K2, self.alpha_L2 - self.beta_L2)

    def to_dict(self):
        out = {k: getattr(self, k) for k in (
            "applicable", "reason", "gamma", "gamma_min", "omega_mode",
            "C_K1", "C_L1", "C_K2", "C_L2", "alpha_K2", "alpha_L2",
            "beta_K2", "beta_K3", "beta_L2", "beta_L3", "r_K", "r_L",
        )}
        out["eps"] = list(self.eps)
        out["feasible"] = self.feasible
        out["terms"] = dict(self.terms)
        return {k: (None if isinstance(v, float) and not np.isfinite(v) else v)
                for k, v in out.items()}


def default_gamma(gamma_min):
    return gamma_min + 0.1 * (1.0 - gamma_min)


def _base_constants(p, stationary, gamma, omega_mode):
    """Everything that does not depend on eps."""
    ev = evaluate(p, stationary)
    a = ev.aug
    ker = kernels(p, stationary, ev)
    S = ev.S
    Y = p.correlation.Y
    nF, nC, nB, nFh = _n2(a.F_bar), _n2(a.C_hat), _n2(a.B_hat), _n2(a.F_hat)
    X = _n2(a.B_hat.T @ S @ a.F_hat.T)
    RB = p.weights.R + a.B_hat.T @ S @ a.B_hat
    FSF = a.F_hat @ S @ a.F_hat.T
    if omega_mode == "uniform":
        lam_F = _lmin(a.F_bar @ Y @ a.F_bar.T)
        lam_C = _lmin(a.C_hat @ Y @ a.C_hat.T)
        cross = nC * nF * _n2(Y) / (1.0 - gamma**2)
    elif omega_mode == "stationary":
        O = ev.Omega
        lam_F = _lmin(a.F_bar @ O @ a.F_bar.T)
        lam_C = _lmin(a.C_hat @ O @ a.C_hat.T)
        cross = _n2(a.C_hat @ O @ a.F_bar.T)
    else:
        raise ValueError("omega_mode must be 'uniform' or 'stationary'")
    return dict(
        nF=nF, nC=nC, nB=nB, nFh=nFh, X=X,
        EK=_n2(ker.E_K), EL=_n2(ker.E_L),
        RB_norm=_n2(RB), RB_min=_lmin(RB), FSF_norm=_n2(FSF), FSF_min=_lmin(FSF),
        lam_F=lam_F, lam_C=lam_C, cross=cross,
        c=2.0 * gamma * _n2(Y) / (1.0 - gamma**2) ** 2,
    )


def _assemble(base, eps, gamma, gamma_min, omega_mode):
    e1, e2, e3, e4, e5, e6 = eps
    b = base
    C_K1 = 2 * b["nF"] * b["EK"]
    C_L1 = 2 * b["nC"] * b["EL"]
    mixed = 2 * b["nF"] * b["nC"] * b["X"]
    C_K2 = b["nF"] ** 2 * b["RB_norm"] + e1 * mixed
    C_L2 = b["nC"] ** 2 * b["FSF_norm"] + mixed / e1
    alpha_K2 = b["RB_min"] * b["lam_F"] - e2 * b["X"] * b["cross"]
    alpha_L2 = b["FSF_min"] * b["lam_C"] - b["X"] * b["cross"] / e2

    c = b["c"]
    bK = b["nB"] * b["nF"]
    bL = b["nFh"] * b["nC"]
    # named products c * C_* * b_*; each is split between the K and L powers below
    terms = {
        "K1_bK (dK^2)": c * C_K1 * bK,
        "L1_bL (dL^2)": c * C_L1 * bL,
        "K1_bL (dK dL)": c * C_K1 * bL,
        "L1_bK (dK dL)": c * C_L1 * bK,
        "K2_bK (dK^3)": c * C_K2 * bK,
        "L2_bL (dL^3)": c * C_L2 * bL,
        "K2_bL (dK^2 dL)": c * C_K2 * bL,
        "L2_bK (dK dL^2)": c * C_L2 * bK,
    }
    t = list(terms.values())
    beta_K2 = t[0] + t[2] * e3 / 2 + t[3] * e4 / 2
    beta_L2 = t[1] + t[2] / (2 * e3) + t[3] / (2 * e4)
    beta_K3 = t[4] + t[6] * 2 * e5 / 3 + t[7] / (3 * e6**2)
    beta_L3 = t[5] + t[6] / (3 * e5**2) + t[7] * 2 * e6 / 3

    coeffs = DominanceCoefficients(
        True, "", gamma, gamma_min, tuple(float(e) for e in eps), omega_mode,
        C_K1, C_L1, C_K2, C_L2, alpha_K2, alpha_L2,
        beta_K2, beta_K3, beta_L2, beta_L3, terms=terms,
    )
    if coeffs.feasible:
        coeffs.r_K = radius(alpha_K2, beta_K2, beta_K3)
        coeffs.r_L = radius(alpha_L2, beta_L2, beta_L3)
    else:
        coeffs.reason = "alpha - beta is not positive for these eps"
    return coeffs


def radius(alpha, beta2, beta3):
    """(alpha - beta2) / (2 beta3), infinite when there is no cubic term."""
    return (alpha - beta2) / (2 * beta3) if beta3 > 0 else np.inf


def _premise(p, stationary, gamma):
    gamma_min = _n2(build_augmented(p, stationary).A_hat)
    if gamma is None:
        gamma = default_gamma(gamma_min) if gamma_min < 1 else gamma_min
    if gamma >= 1.0:
        return gamma, gamma_min, f"spectral-norm premise fails: ||Ahat||_2 = {gamma_min:.4g} >= 1"
    if gamma < gamma_min:
        return gamma, gamma_min, f"gamma = {gamma:.4g} is below ||Ahat||_2 = {gamma_min:.4g}"
    return gamma, gamma_min, ""


def compute_coefficients(p: ProblemInstance, stationary: GainPair, eps=DEFAULT_EPS,
                         gamma=None, omega_mode="uniform") -> DominanceCoefficients:
    """Dominance constants for fixed eps. Returns an N/A report when the premise fails."""
    if len(eps) != 6 or min(eps) <= 0:
        raise ValueError("eps must be six positive numbers")
    gamma, gamma_min, reason = _premise(p, stationary, gamma)
    if reason:
        return DominanceCoefficients(False, reason, gamma, gamma_min, tuple(eps), omega_mode)
    base = _base_constants(p, stationary, gamma, omega_mode)
    return _assemble(base, eps, gamma, gamma_min, omega_mode)


def search_eps(p: ProblemInstance, stationary: GainPair, gamma=None, grid=EPS_GRID,
               omega_mode="uniform") -> DominanceCoefficients:
    """Log-grid search over eps maximising min(a_K2 - b_K2, a_L2 - b_L2).

    Ties (eps_1, eps_5, eps_6 only move the cubic constants) are broken by the
    larger min(r_K, r_L).
    """
    gamma, gamma_min, reason = _premise(p, stationary, gamma)
    if reason:
        return DominanceCoefficients(False, reason, gamma, gamma_min, DEFAULT_EPS, omega_mode)
    base = _base_constants(p, stationary, gamma, omega_mode)
    best, best_key = None, None
    for eps in itertools.product(grid, repeat=6):
        c = _assemble(base, eps, gamma, gamma_min, omega_mode)
        key = (c.margin, min(c.r_K, c.r_L) if c.feasible else -np.inf)
        if best_key is None or key > best_key:
            best, best_key = c, key
    if not best.feasible:
        best.reason = "no eps on the grid makes both alpha - beta positive"
    return best


@dataclass
class DominanceVerification:
    status: str  # "checked" or "N/A"
    reason: str = ""
    admissible: int = 0
    violations: int = 0
    excluded_premise: int = 0
    excluded_unstable: int = 0
    slack_min: float = np.nan
    slack_mean: float = np.nan
    slack_max: float = np.nan

    def to_dict(self):
        return {k: (None if isinstance(v, float) and not np.isfinite(v) else v)
                for k, v in self.__dict__.items()}


def dominance_gap(p, stationary, coeffs, g, J_star=None):
    """(J(g) - J(stationary), bound) for one pair ``g``."""
    if J_star is None:
        J_star = evaluate(p, stationary).cost
    ev = evaluate(p, g)
    grads = gradients_compact(p, g, ev)
    rhs = (grads.norm_K**2 / (2 * (coeffs.alpha_K2 - coeffs.beta_K2))
           + grads.norm_L**2 / (2 * (coeffs.alpha_L2 - coeffs.beta_L2)))
    return ev.cost - J_star, rhs


def _ball(rng, shape, r):
    v = rng.standard_normal(shape)
    nv = np.linalg.norm(v)
    if nv == 0 or r == 0:
        return np.zeros(shape)
    return v / nv * r * rng.uniform() ** (1.0 / v.size)


def verify_dominance(p: ProblemInstance, stationary: GainPair, coeffs: DominanceCoefficients,
                     samples=1000, seed=0, max_draws=None) -> DominanceVerification:
    """Monte Carlo check of the dominance inequality inside the radii.

    Draws uniform perturbations in the Frobenius balls of radius r_K and r_L,
    drops draws that destabilise the loop or violate ||Ahat||_2 <= gamma
    (counted separately), and counts violations among the rest.
    """
    if not coeffs.applicable:
        return DominanceVerification("N/A", coeffs.reason)
    if not coeffs.feasible:
        return DominanceVerification("N/A", coeffs.reason or "coefficients infeasible")
    rng = np.random.default_rng(seed)
    J_star = evaluate(p, stationary).cost
    # finite radii capped so the draws stay meaningful
    rK = min(coeffs.r_K, 1e6)
    rL = min(coeffs.r_L, 1e6)
    max_draws = 50 * samples if max_draws is None else max_draws
    out = DominanceVerification("checked")
    slacks = []
    tol = 1e-9 * max(1.0, abs(J_star))
    for _ in range(max_draws):
        if out.admissible >= samples:
            break
        g = GainPair(stationary.K + _ball(rng, stationary.K.shape, rK),
                     stationary.L + _ball(rng, stationary.L.shape, rL))
        if not is_stable(p, g):
            out.excluded_unstable += 1
            continue
        if _n2(build_augmented(p, g).A_hat) > coeffs.gamma:
            out.excluded_premise += 1
            continue
        lhs, rhs = dominance_gap(p, stationary, coeffs, g, J_star)
        out.admissible += 1
        slacks.append(rhs - lhs)
        if lhs > rhs + tol:
            out.violations += 1
    if out.admissible == 0:
        raise OdlqrError("no admissible perturbation found inside the radii")
    s = np.asarray(slacks)
    out.slack_min, out.slack_mean, out.slack_max = float(s.min()), float(s.mean()), float(s.max())
    return out
