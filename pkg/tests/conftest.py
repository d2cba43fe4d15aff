import numpy as np
import pytest

from odlqr import GainPair, ProblemInstance, build_augmented, standard_pair, validate
from odlqr.problems import Y_GENERAL, Y_SPECIAL, doyle_1d, doyle_2d


def random_plant(rng, n=None, m=None, d=None, rho=None):
    """A validated problem instance with n <= 4 and rho(A) drawn from [0.5, 1.2]."""
    while True:
        nn = int(rng.integers(1, 5)) if n is None else n
        mm = int(rng.integers(1, nn + 1)) if m is None else m
        dd = int(rng.integers(1, nn + 1)) if d is None else d
        A = rng.standard_normal((nn, nn))
        target = rng.uniform(0.5, 1.2) if rho is None else rho
        A *= target / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-3)
        B = rng.standard_normal((nn, mm))
        C = rng.standard_normal((dd, nn))
        G = rng.standard_normal((nn, nn))
        Q = G @ G.T / nn + 0.1 * np.eye(nn)
        H = rng.standard_normal((mm, mm))
        R = H @ H.T / mm + 0.5 * np.eye(mm)
        M = rng.standard_normal((2 * nn, 2 * nn))
        Y = M @ M.T / (2 * nn) + 0.5 * np.eye(2 * nn)
        p = ProblemInstance.from_arrays(A, B, C, Q, R, Y)
        if validate(p).ok:
            return p


def random_stabilizing_pair(rng, p, base=None, rho_max=0.95, scale=0.3):
    """Perturbation of the standard pair (or ``base``) with rho(Ahat) <= rho_max.

    When the base itself is slower than rho_max the bound is relaxed to halfway
    between its spectral radius and 1.
    """
    base = standard_pair(p).gains if base is None else base
    rho_base = build_augmented(p, base).rho
    if rho_base >= rho_max:
        rho_max = 0.5 * (1.0 + rho_base)
    while True:
        g = GainPair(base.K + scale * rng.standard_normal(base.K.shape),
                     base.L + scale * rng.standard_normal(base.L.shape))
        if build_augmented(p, g).rho <= rho_max:
            return g
        scale *= 0.8


def random_corpus(seed=2024, plants=10, pairs_per_plant=10):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(plants):
        p = random_plant(rng)
        for _ in range(pairs_per_plant):
            out.append((p, random_stabilizing_pair(rng, p)))
    return out


@pytest.fixture(scope="session")
def doyle_g():
    return doyle_1d(Y_GENERAL)


@pytest.fixture(scope="session")
def doyle_s():
    return doyle_1d(Y_SPECIAL)


@pytest.fixture(scope="session")
def doyle2_g():
    return doyle_2d(Y_GENERAL)


@pytest.fixture(scope="session")
def doyle2_s():
    return doyle_2d(Y_SPECIAL)


@pytest.fixture(scope="session")
def corpus():
    return random_corpus()


# PASS/FAIL lines from the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
