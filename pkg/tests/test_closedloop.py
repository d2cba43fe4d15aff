import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odlqr import (
    GainPair,
    ProblemInstance,
    accumulated_estimation_variance,
    build_augmented,
    evaluate,
    evaluate_blocks,
    standard_pair,
)
from odlqr.closedloop import STABILITY_MARGIN, is_stable
from odlqr.errors import UnstableError
from odlqr.mateq import solve_dlyap, solve_dlyap_dual_transpose, spectral_radius
from odlqr.simulate import rollout

from conftest import random_plant, random_stabilizing_pair

DOYLE_K_DD = [[4.2598, 3.9482]]
DOYLE_L_DD = [[-2.5604], [4.0196]]


def test_zero_gains_give_block_diagonal(doyle_g):
    aug = build_augmented(doyle_g, GainPair(np.zeros((1, 2)), np.zeros((2, 1))))
    A = doyle_g.plant.A
    np.testing.assert_array_equal(aug.A_hat, np.block([[A, 0 * A], [0 * A, A]]))


def test_block_structure_of_ahat_and_qhat(doyle2_g):
    rng = np.random.default_rng(1)
    p = doyle2_g
    A, B, C = p.plant.A, p.plant.B, p.plant.C
    Q, R = p.weights.Q, p.weights.R
    for _ in range(5):
        K = rng.standard_normal((2, 2))
        L = rng.standard_normal((2, 2))
        aug = build_augmented(p, GainPair(K, L))
        expected = np.block([[A - B @ K, B @ K], [np.zeros((2, 2)), A - L @ C]])
        np.testing.assert_allclose(aug.A_hat, expected, atol=1e-15)
        KRK = K.T @ R @ K
        np.testing.assert_allclose(aug.Q_hat, np.block([[Q + KRK, -KRK], [-KRK, KRK]]), atol=1e-14)
        np.testing.assert_allclose(aug.A_KL, A - B @ K - L @ C, atol=1e-15)
        np.testing.assert_allclose(aug.T @ aug.T, np.eye(4))


def test_spectrum_is_union_of_blocks():
    rng = np.random.default_rng(2)
    for _ in range(20):
        p = random_plant(rng)
        g = GainPair(rng.standard_normal((p.plant.m, p.plant.n)),
                     rng.standard_normal((p.plant.n, p.plant.d)))
        rho = build_augmented(p, g).rho
        rk = spectral_radius(p.plant.A - p.plant.B @ g.K)
        rl = spectral_radius(p.plant.A - g.L @ p.plant.C)
        assert rho == pytest.approx(max(rk, rl), rel=1e-9)


def test_standard_pair_is_stabilizing(doyle_g):
    assert build_augmented(doyle_g, standard_pair(doyle_g).gains).rho < 1


def test_cost_at_published_stationary_pair(doyle_g):
    ev = evaluate(doyle_g, GainPair(DOYLE_K_DD, DOYLE_L_DD))
    # the published gains are rounded to 4 d.p.; the cost is flat there
    assert ev.cost == pytest.approx(102.2875, abs=0.01)


def test_zero_gain_decoupled_case():
    A = np.array([[0.5, 0.2], [0.0, 0.3]])
    Q = np.diag([1.0, 2.0])
    Y = np.diag([1.0, 2.0, 3.0, 4.0])
    p = ProblemInstance.from_arrays(A, [[1.0], [0.0]], [[1.0, 0.0]], Q, [[1.0]], Y)
    ev = evaluate(p, GainPair(np.zeros((1, 2)), np.zeros((2, 1))))
    expected = np.trace(solve_dlyap_dual_transpose(A, Q) @ Y[:2, :2])
    assert ev.cost == pytest.approx(expected, rel=1e-12)


def test_cost_matches_truncated_rollout_sum(doyle_g):
    g = standard_pair(doyle_g).gains
    ev = evaluate(doyle_g, g)
    # J = E[zbar' S zbar] = sum of rollout costs over a basis decomposition of Y
    w, V = np.linalg.eigh(doyle_g.correlation.Y)
    total = 0.0
    for lam, v in zip(w, V.T):
        zbar0 = np.sqrt(lam) * v
        z0 = np.concatenate([zbar0[:2], zbar0[:2] - zbar0[2:]])
        total += rollout(doyle_g, g, z0, 2000).total_cost
    assert total == pytest.approx(ev.cost, rel=1e-6)


def test_unstable_pair_has_no_cost(doyle_g):
    with pytest.raises(UnstableError, match="undefined"):
        evaluate(doyle_g, GainPair(np.zeros((1, 2)), standard_pair(doyle_g).L_star))
    with pytest.raises(UnstableError):
        evaluate_blocks(doyle_g, GainPair(np.zeros((1, 2)), np.zeros((2, 1))))


def test_near_marginal_is_rejected():
    p = ProblemInstance.from_arrays([[1.0 - STABILITY_MARGIN / 2]], [[1.0]], [[1.0]], [[1.0]],
                                    [[1.0]], np.eye(2))
    g = GainPair([[0.0]], [[0.0]])
    assert not is_stable(p, g)
    with pytest.raises(UnstableError):
        evaluate(p, g)


def test_s12_vanishes_at_k_star(doyle_g):
    std = standard_pair(doyle_g)
    rng = np.random.default_rng(3)
    for _ in range(10):
        g = random_stabilizing_pair(rng, doyle_g, scale=1.0)
        ev = evaluate_blocks(doyle_g, GainPair(std.K_star, g.L))
        assert np.abs(ev.S12).max() <= 1e-9 * np.abs(ev.S).max()
        np.testing.assert_allclose(ev.S11, std.S_hat_star, rtol=1e-9)


def test_omega22_is_accumulated_estimation_variance(doyle_g):
    rng = np.random.default_rng(4)
    for _ in range(10):
        g = random_stabilizing_pair(rng, doyle_g, scale=1.0)
        ev = evaluate(doyle_g, g)
        W = accumulated_estimation_variance(doyle_g.plant, g.L, doyle_g.E0)
        np.testing.assert_allclose(ev.Omega22, W, rtol=1e-10)


def test_accumulated_variance_trivial_cases():
    from odlqr import Plant

    A = np.array([[0.5, 0.1], [0.0, 0.4]])
    E0 = np.array([[1.0, 0.2], [0.2, 2.0]])
    np.testing.assert_allclose(
        accumulated_estimation_variance(Plant(A, np.eye(2), np.eye(2)), A, E0), E0)
    np.testing.assert_allclose(
        accumulated_estimation_variance(Plant(A, np.eye(2), np.eye(2)), np.zeros((2, 2)), E0),
        solve_dlyap(A, E0))
    with pytest.raises(UnstableError):
        accumulated_estimation_variance(Plant(2 * np.eye(2), np.eye(2), np.eye(2)),
                                        np.zeros((2, 2)), E0)


def test_standard_observer_minimises_trace_against_random_sampling(doyle_g):
    from odlqr import standard_observer

    plant = doyle_g.plant
    E0 = np.eye(2)
    L_star, W = standard_observer(plant, E0)
    best = np.trace(W)
    rng = np.random.default_rng(5)
    tried = 0
    while tried < 1000:
        L = L_star + rng.standard_normal(L_star.shape) * rng.choice([0.01, 0.1, 1.0])
        if spectral_radius(plant.A - L @ plant.C) >= 1:
            continue
        tried += 1
        assert np.trace(accumulated_estimation_variance(plant, L, E0)) >= best - 1e-9 * best


def test_evaluation_invariants_on_random_plants():
    rng = np.random.default_rng(6)
    for _ in range(10):
        p = random_plant(rng)
        for _ in range(5):
            g = random_stabilizing_pair(rng, p)
            ev = evaluate(p, g)
            assert np.linalg.eigvalsh(ev.S).min() >= -1e-9 * np.abs(ev.S).max()
            assert np.linalg.eigvalsh(ev.Omega - p.correlation.Y).min() >= -1e-9 * np.abs(ev.Omega).max()
            assert np.linalg.eigvalsh(ev.Sigma22).min() > 0
            assert ev.cost >= 0
            ex = ev.Omega[:p.plant.n, :p.plant.n] - ev.Omega12 - ev.Omega12.T + ev.Omega22
            np.testing.assert_allclose(ev.Sigma22, 0.5 * (ex + ex.T))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), a=st.floats(0.0, 5.0), b=st.floats(0.0, 5.0))
def test_cost_is_linear_in_y(seed, a, b):
    rng = np.random.default_rng(seed)
    p = random_plant(rng)
    g = random_stabilizing_pair(rng, p)
    M1 = rng.standard_normal((2 * p.plant.n,) * 2)
    M2 = rng.standard_normal((2 * p.plant.n,) * 2)
    Y1, Y2 = M1 @ M1.T + np.eye(2 * p.plant.n), M2 @ M2.T + np.eye(2 * p.plant.n)

    def J(Y):
        return evaluate(ProblemInstance(p.plant, p.weights, type(p.correlation)(Y)), g).cost

    lhs = J(a * Y1 + b * Y2 + 1e-3 * np.eye(2 * p.plant.n))
    rhs = a * J(Y1) + b * J(Y2) + 1e-3 * J(np.eye(2 * p.plant.n))
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_trace_identity_and_block_equivalence_property(seed):
    rng = np.random.default_rng(seed)
    p = random_plant(rng)
    g = random_stabilizing_pair(rng, p)
    ev = evaluate(p, g)
    eb = evaluate_blocks(p, g)
    assert abs(ev.cost - ev.cost_omega) <= 1e-9 * max(1.0, ev.cost)
    assert np.linalg.norm(eb.S - ev.S) <= 1e-9 * np.linalg.norm(ev.S)
    assert np.linalg.norm(eb.Omega - ev.Omega) <= 1e-9 * np.linalg.norm(ev.Omega)
