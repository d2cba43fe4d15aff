"""Problem instances, assumption checks and stability predicates."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .mateq import spectral_radius, sym

RANK_RTOL = 1e-9
PD_TRACE_RTOL = 1e-12
SPECIAL_STRUCTURE_RTOL = 1e-10


def _mat(x, name):
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True)
class Plant:
    """x_{t+1} = A x_t + B u_t,  y_t = C x_t."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A, B, C = _mat(self.A, "A"), _mat(self.B, "B"), _mat(self.C, "C")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise DimensionError(f"C must have {n} columns, got {C.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def d(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class CostWeights:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q, R = _mat(self.Q, "Q"), _mat(self.R, "R")
        if Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise DimensionError("Q and R must be square")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class InitialCorrelation:
    """Second moment Y of the transformed initial state (x_0, x_0 - xi_0)."""

    Y: np.ndarray

    def __post_init__(self):
        Y = _mat(self.Y, "Y")
        if Y.shape[0] != Y.shape[1] or Y.shape[0] % 2:
            raise DimensionError(f"Y must be 2n x 2n, got {Y.shape}")
        object.__setattr__(self, "Y", Y)

    @property
    def n(self):
        return self.Y.shape[0] // 2

    @property
    def Y11(self):
        return self.Y[: self.n, : self.n]

    @property
    def Y12(self):
        return self.Y[: self.n, self.n :]

    @property
    def Y22(self):
        return self.Y[self.n :, self.n :]


@dataclass(frozen=True)
class GainPair:
    """Controller gain K (m x n) and observer gain L (n x d)."""

    K: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K", _mat(self.K, "K"))
        object.__setattr__(self, "L", _mat(self.L, "L"))

    def replace(self, K=None, L=None):
        return GainPair(self.K if K is None else K, self.L if L is None else L)


@dataclass(frozen=True)
class ProblemInstance:
    plant: Plant
    weights: CostWeights
    correlation: InitialCorrelation
    E0_override: np.ndarray | None = field(default=None)

    def __post_init__(self):
        n, m = self.plant.n, self.plant.m
        if self.weights.Q.shape != (n, n):
            raise DimensionError(f"Q must be {n}x{n}, got {self.weights.Q.shape}")
        if self.weights.R.shape != (m, m):
            raise DimensionError(f"R must be {m}x{m}, got {self.weights.R.shape}")
        if self.correlation.n != n:
            raise DimensionError(f"Y must be {2 * n}x{2 * n}, got {self.correlation.Y.shape}")
        if self.E0_override is not None:
            e0 = _mat(self.E0_override, "E0")
            if e0.shape != (n, n):
                raise DimensionError(f"E0 must be {n}x{n}, got {e0.shape}")
            object.__setattr__(self, "E0_override", e0)

    @classmethod
    def from_arrays(cls, A, B, C, Q, R, Y, E0=None):
        return cls(Plant(A, B, C), CostWeights(Q, R), InitialCorrelation(Y), E0)

    @property
    def E0(self):
        """Initial estimation-error correlation; Y22 unless overridden."""
        if self.E0_override is not None:
            return self.E0_override
        return self.correlation.Y22

    def check_gains(self, g):
        p = self.plant
        if g.K.shape != (p.m, p.n):
            raise DimensionError(f"K must be {p.m}x{p.n}, got {g.K.shape}")
        if g.L.shape != (p.n, p.d):
            raise DimensionError(f"L must be {p.n}x{p.d}, got {g.L.shape}")


# -- numerical linear algebra helpers ---------------------------------------

def numerical_rank(m, rtol=RANK_RTOL):
    s = np.linalg.svd(np.atleast_2d(m), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def controllability_matrix(A, B):
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def observability_matrix(C, A):
    return controllability_matrix(A.T, C.T).T


def psd_sqrt(M):
    w, v = np.linalg.eigh(sym(M))
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def is_pd(M, rtol=PD_TRACE_RTOL):
    M = sym(np.atleast_2d(M))
    w = np.linalg.eigvalsh(M)
    return bool(w[0] > rtol * max(np.trace(M), 0.0)) and w[0] > 0


def is_psd(M, rtol=PD_TRACE_RTOL):
    M = sym(np.atleast_2d(M))
    w = np.linalg.eigvalsh(M)
    return bool(w[0] >= -rtol * max(abs(np.trace(M)), 1.0))


# -- assumption report -------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list
    special_structure: bool
    special_structure_gap: float

    @property
    def ok(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c.passed
        raise KeyError(name)

    def to_dict(self):
        return {
            "ok": self.ok,
            "checks": {c.name: {"passed": c.passed, "detail": c.detail} for c in self.checks},
            "special_structure_Y22_eq_Y12T": self.special_structure,
            "special_structure_gap": self.special_structure_gap,
        }


def validate(p: ProblemInstance) -> ValidationReport:
    """Check the standing assumptions of the problem; failures are entries, not errors."""
    A, B, C = p.plant.A, p.plant.B, p.plant.C
    Q, R, Y = p.weights.Q, p.weights.R, p.correlation.Y
    n = p.plant.n

    def symmetric(M):
        return np.linalg.norm(M - M.T) <= 1e-12 * max(1.0, np.linalg.norm(M))

    rc = numerical_rank(controllability_matrix(A, B))
    ro = numerical_rank(observability_matrix(C, A))
    rq = numerical_rank(observability_matrix(psd_sqrt(Q), A))
    rC = numerical_rank(C)
    checks = [
        Check("controllable_AB", rc == n, f"rank {rc} of {n}"),
        Check("observable_CA", ro == n, f"rank {ro} of {n}"),
        Check("observable_Qhalf_A", rq == n, f"rank {rq} of {n}"),
        Check("Q_psd", symmetric(Q) and is_psd(Q)),
        Check("R_pd", symmetric(R) and is_pd(R)),
        Check("Y_pd", symmetric(Y) and is_pd(Y)),
        Check("C_full_row_rank", rC == p.plant.d, f"rank {rC} of {p.plant.d}"),
    ]
    if p.E0_override is not None:
        checks.append(Check("E0_pd", symmetric(p.E0) and is_pd(p.E0)))
    corr = p.correlation
    gap = float(np.linalg.norm(corr.Y22 - corr.Y12.T))
    special = gap <= SPECIAL_STRUCTURE_RTOL * np.linalg.norm(Y)
    return ValidationReport(checks, bool(special), gap)


def is_stabilizing_K(plant: Plant, K) -> bool:
    return spectral_radius(plant.A - plant.B @ np.atleast_2d(K)) < 1.0


def is_stabilizing_L(plant: Plant, L) -> bool:
    return spectral_radius(plant.A - np.atleast_2d(L) @ plant.C) < 1.0


def controller_dynamics(plant: Plant, g: GainPair):
    """A - BK - LC, the state matrix of the dynamic controller."""
    return plant.A - plant.B @ g.K - g.L @ plant.C


def is_observable_dynamic_controller(plant: Plant, g: GainPair) -> bool:
    """Rank test on the observability matrix of (K, A - BK - LC)."""
    if not np.any(g.K):
        return False
    return numerical_rank(observability_matrix(g.K, controller_dynamics(plant, g))) == plant.n


def is_observable_pbh(plant: Plant, g: GainPair) -> bool:
    """Popov-Belevitch-Hautus test for the same property, used as a cross-check."""
    Acl = controller_dynamics(plant, g)
    n = plant.n
    for lam in np.linalg.eigvals(Acl):
        stacked = np.vstack([lam * np.eye(n) - Acl, g.K.astype(complex)])
        if numerical_rank(stacked) < n:
            return False
    return True
