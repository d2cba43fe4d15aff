"""Dense solvers for the small matrix equations used throughout the package.

Everything here works on plain ``numpy`` arrays. Lyapunov and Sylvester
equations are solved by Kronecker vectorisation and one dense linear solve,
which is exact and cheap at the sizes involved (n of order 10 at most). The
two discrete algebraic Riccati equations are solved by iterating the Riccati
recursion to a fixed point.

Conventions
-----------
``solve_dlyap_dual_transpose(a, q)``  ->  P = Q + a' P a   (value / observation form)
``solve_dlyap(a, q)``                 ->  X = Q + a X a'   (correlation / control form)
``solve_sylvester_affine(g, m, n)``   ->  X = G + m X n
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionError, SingularityError, UnstableError

__all__ = [
    "SolverOptions",
    "spectral_radius",
    "solve_dlyap",
    "solve_dlyap_dual_transpose",
    "solve_sylvester_affine",
    "solve_dare_control",
    "solve_dare_filter",
    "pd_inv",
    "sym",
]

SYLVESTER_SINGULARITY = 1e-10
DARE_RELATIVE_CHANGE = 1e-13
PD_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class SolverOptions:
    """Residual tolerance and iteration cap for the solvers in this module."""

    tolerance: float = 1e-10
    max_iterations: int = 10**6

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


DEFAULT_OPTIONS = SolverOptions()


def _as_matrix(x, name):
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def _square(x, name):
    a = _as_matrix(x, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


def sym(x):
    """Symmetric part (X + X') / 2."""
    return 0.5 * (x + x.T)


def spectral_radius(m):
    """Largest eigenvalue modulus of a square matrix."""
    m = _square(m, "m")
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def _vec(x):
    return x.reshape(-1, order="F")


def _unvec(v, shape):
    return v.reshape(shape, order="F")


def _relative_residual(x, g, m, n):
    r = x - g - m @ x @ n
    return np.linalg.norm(r) / max(1.0, np.linalg.norm(x))


def _kron_solve(g, m, n, opts):
    """Solve X = G + M X N through vec(M X N) = (N' kron M) vec(X)."""
    shape = g.shape
    op = np.eye(g.size) - np.kron(n.T, m)
    x = _unvec(np.linalg.solve(op, _vec(g)), shape)
    res = _relative_residual(x, g, m, n)
    if res > opts.tolerance:
        # one step of iterative refinement
        r = g + m @ x @ n - x
        x = x + _unvec(np.linalg.solve(op, _vec(r)), shape)
        res = _relative_residual(x, g, m, n)
    if res > 10 * opts.tolerance:
        raise ConvergenceError(
            f"matrix equation residual {res:.3e} exceeds tolerance {opts.tolerance:.1e}"
        )
    return x


def solve_dlyap_dual_transpose(a, q, opts=DEFAULT_OPTIONS):
    """Solve P = Q + A' P A for Schur-stable A.

    Returns the unique symmetric solution; it is PSD whenever Q is.
    """
    a = _square(a, "a")
    q = _square(q, "q")
    if a.shape != q.shape:
        raise DimensionError(f"a {a.shape} and q {q.shape} differ in shape")
    rho = spectral_radius(a)
    if rho >= 1.0:
        raise UnstableError(f"Lyapunov equation needs rho(a) < 1, got {rho:.6g}")
    return sym(_kron_solve(sym(q), a.T, a, opts))


def solve_dlyap(a, q, opts=DEFAULT_OPTIONS):
    """Solve X = Q + A X A' for Schur-stable A."""
    a = _square(a, "a")
    return solve_dlyap_dual_transpose(a.T, q, opts)


def solve_sylvester_affine(g, m, n, opts=DEFAULT_OPTIONS):
    """Solve the affine discrete Sylvester equation X = G + M X N.

    The solution is unique iff lambda_i(M) * mu_j(N) != 1 for every pair of
    eigenvalues; a pair closer to 1 than ``SYLVESTER_SINGULARITY`` raises
    :class:`SingularityError` instead of returning a best-effort answer.
    """
    g = _as_matrix(g, "g")
    m = _square(m, "m")
    n = _square(n, "n")
    if m.shape[0] != g.shape[0] or n.shape[0] != g.shape[1]:
        raise DimensionError(
            f"incompatible shapes g {g.shape}, m {m.shape}, n {n.shape}"
        )
    margin = sylvester_margin(m, n)
    if margin < SYLVESTER_SINGULARITY:
        raise SingularityError(
            f"Sylvester equation not uniquely solvable: min |lambda*mu - 1| = {margin:.3e}"
        )
    return _kron_solve(g, m, n, opts)


def sylvester_margin(m, n):
    """min over eigenvalue pairs of |lambda_i(M) mu_j(N) - 1|."""
    lam = np.linalg.eigvals(np.atleast_2d(m))
    mu = np.linalg.eigvals(np.atleast_2d(n))
    if lam.size == 0 or mu.size == 0:
        return 1.0
    return float(np.min(np.abs(np.outer(lam, mu) - 1.0)))


def pd_inv(x, name="matrix"):
    """Inverse of a symmetric positive definite matrix.

    Goes through a Cholesky factorisation and refuses matrices whose
    2-norm condition number exceeds ``PD_CONDITION_LIMIT``.
    """
    x = sym(_square(x, name))
    w = np.linalg.eigvalsh(x)
    if w[0] <= 0 or w[-1] / w[0] > PD_CONDITION_LIMIT:
        cond = np.inf if w[0] <= 0 else w[-1] / w[0]
        raise SingularityError(f"{name} is not safely invertible (condition {cond:.3e})")
    try:
        c = np.linalg.cholesky(x)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(f"{name} is not positive definite") from exc
    ci = np.linalg.solve(c, np.eye(x.shape[0]))
    return ci.T @ ci


def _riccati_fixed_point(step, x0, opts, what):
    x = x0
    best = np.inf
    since_best = 0
    for it in range(1, opts.max_iterations + 1):
        x_new = sym(step(x))
        if not np.all(np.isfinite(x_new)):
            raise ConvergenceError(f"{what} iteration diverged after {it} steps")
        change = np.linalg.norm(x_new - x)
        scale = np.linalg.norm(x_new)
        x = x_new
        if change <= DARE_RELATIVE_CHANGE * scale:
            return x
        rel = change / scale if scale > 0 else np.inf
        if rel < best:
            best, since_best = rel, 0
        else:
            since_best += 1
            if since_best > 10_000:
                break
    # stalled at the rounding floor: accept when that floor is within tolerance
    if best <= opts.tolerance:
        return x
    raise ConvergenceError(
        f"{what} iteration stalled (best relative change {best:.3e})"
    )


def solve_dare_control(a, b, q, r, opts=DEFAULT_OPTIONS):
    """Stabilising solution of the control Riccati equation

        S = Q + A' S A - A' S B (R + B' S B)^{-1} B' S A

    by value iteration from S_0 = Q. Raises if the induced gain
    K = (R + B'SB)^{-1} B'SA fails to stabilise A - BK.
    """
    a = _square(a, "a")
    b = _as_matrix(b, "b")
    q = _square(q, "q")
    r = _square(r, "r")
    n, m = b.shape
    if a.shape != (n, n) or q.shape != (n, n) or r.shape != (m, m):
        raise DimensionError(
            f"incompatible shapes a {a.shape}, b {b.shape}, q {q.shape}, r {r.shape}"
        )
    if np.linalg.eigvalsh(sym(r))[0] <= 0:
        raise ValueError("r must be positive definite")

    def step(s):
        bs = b.T @ s
        gain = np.linalg.solve(r + bs @ b, bs @ a)
        return q + a.T @ s @ a - a.T @ s @ b @ gain

    s = _riccati_fixed_point(step, sym(q), opts, "control Riccati")
    gain = np.linalg.solve(r + b.T @ s @ b, b.T @ s @ a)
    rho = spectral_radius(a - b @ gain)
    if rho >= 1.0:
        raise UnstableError(
            f"control Riccati fixed point is not stabilising (rho = {rho:.6g}); "
            "check stabilisability and detectability"
        )
    return s


def solve_dare_filter(a, c, e0, opts=DEFAULT_OPTIONS):
    """Solution of the noise-free filter Riccati equation

        W = E0 + A W A' - A W C' (C W C')^{-1} C W A'

    by iteration from W_0 = E0. The induced gain L = A W C' (C W C')^{-1}
    must stabilise A - LC.
    """
    a = _square(a, "a")
    c = _as_matrix(c, "c")
    e0 = _square(e0, "e0")
    d, n = c.shape
    if a.shape != (n, n) or e0.shape != (n, n):
        raise DimensionError(f"incompatible shapes a {a.shape}, c {c.shape}, e0 {e0.shape}")

    def innovation_inv(w):
        return pd_inv(c @ w @ c.T, "C W C'")

    def step(w):
        awc = a @ w @ c.T
        return e0 + a @ w @ a.T - awc @ innovation_inv(w) @ awc.T

    w = _riccati_fixed_point(step, sym(e0), opts, "filter Riccati")
    gain = a @ w @ c.T @ innovation_inv(w)
    rho = spectral_radius(a - gain @ c)
    if rho >= 1.0:
        raise UnstableError(
            f"filter Riccati fixed point is not stabilising (rho = {rho:.6g})"
        )
    return w
