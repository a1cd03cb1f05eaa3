import math

import numpy as np
import pytest

from koopbound.errors import NumericalError
from koopbound.lifting import identity_augmented, lift_many, projection_decoder
from koopbound.lifting import LiftedModel
from koopbound.sysid import (IdentificationConfig, TransitionDataset,
                             controllability_loss, controllability_matrix,
                             controllability_sigma_min, fit_edmd,
                             fit_regularized, prediction_loss,
                             regularized_gradient, regularized_loss, residual,
                             spectral_radius)


def make_linear_dataset(A0, B0, T=300, seed=0, episodes=3):
    """Transitions of an exactly linear system observed with identity lifting."""
    rng = np.random.default_rng(seed)
    N, m = A0.shape[0], B0.shape[1]
    xs, us, xns, eps, ks = [], [], [], [], []
    per = T // episodes
    for ep in range(episodes):
        x = rng.normal(size=N)
        for k in range(per):
            u = rng.normal(size=m)
            xn = A0 @ x + B0 @ u
            xs.append(x); us.append(u); xns.append(xn); eps.append(ep); ks.append(k)
            x = xn
    return TransitionDataset(np.array(xs), np.array(us), np.array(xns),
                             np.array(eps), np.array(ks))


@pytest.fixture(scope="module")
def linear_system():
    rng = np.random.default_rng(42)
    A0 = 0.8 * rng.normal(size=(3, 3)) / math.sqrt(3)
    B0 = rng.normal(size=(3, 1))
    return A0, B0, make_linear_dataset(A0, B0)


def test_edmd_recovers_exact_linear_system(linear_system):
    A0, B0, data = linear_system
    dic = identity_augmented(3, include_constant=False)
    A, B = fit_edmd(dic, data, ridge=0.0)
    assert np.linalg.norm(A - A0) < 1e-8
    assert np.linalg.norm(B - B0) < 1e-8


def test_edmd_scalar_autonomous_no_input():
    xs = np.array([[1.0], [0.5], [0.25], [0.125]])
    data = TransitionDataset(xs, np.zeros((4, 0)), 0.5 * xs,
                             np.zeros(4, dtype=int), np.arange(4))
    dic = identity_augmented(1, include_constant=False)
    A, B = fit_edmd(dic, data, ridge=0.0)
    assert A[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert B.shape == (1, 0)


def test_edmd_ridge_shrinks_norm(linear_system):
    _, _, data = linear_system
    dic = identity_augmented(3, include_constant=False)
    A0f, B0f = fit_edmd(dic, data, ridge=0.0)
    A1, B1 = fit_edmd(dic, data, ridge=1e-3 * len(data))
    norm0 = np.linalg.norm(np.concatenate([A0f, B0f], axis=1))
    norm1 = np.linalg.norm(np.concatenate([A1, B1], axis=1))
    assert norm1 < norm0


def test_edmd_singular_gram_zero_ridge():
    # duplicated single state makes the Gram singular
    xs = np.tile(np.array([[1.0, 2.0]]), (5, 1))
    data = TransitionDataset(xs, np.zeros((5, 1)), xs,
                             np.zeros(5, dtype=int), np.arange(5))
    dic = identity_augmented(2)
    with pytest.raises(NumericalError):
        fit_edmd(dic, data, ridge=0.0)


def test_edmd_is_exact_minimizer(linear_system):
    A0, B0, data = linear_system
    dic = identity_augmented(3, include_constant=False)
    A, B = fit_edmd(dic, data, ridge=0.0)
    Z = lift_many(dic, data.states)
    Zn = lift_many(dic, data.next_states)
    base = prediction_loss(A, B, Z, data.inputs, Zn)
    rng = np.random.default_rng(1)
    for _ in range(20):
        dA = rng.normal(size=A.shape); dB = rng.normal(size=B.shape)
        scale = 1e-3 / math.sqrt(np.sum(dA**2) + np.sum(dB**2))
        perturbed = prediction_loss(A + scale * dA, B + scale * dB, Z, data.inputs, Zn)
        assert perturbed >= base - 1e-15


def test_prediction_loss_exact_zero(linear_system):
    A0, B0, data = linear_system
    dic = identity_augmented(3, include_constant=False)
    Z = lift_many(dic, data.states)
    Zn = lift_many(dic, data.next_states)
    assert prediction_loss(A0, B0, Z, data.inputs, Zn) < 1e-25


def test_prediction_loss_scalar_example():
    Z = np.array([[1.0]]); U = np.array([[0.0]]); Zn = np.array([[2.0]])
    assert prediction_loss(np.array([[1.0]]), np.array([[0.0]]), Z, U, Zn) == 1.0


def test_prediction_loss_matches_naive_loop():
    rng = np.random.default_rng(4)
    Z = rng.normal(size=(37, 3)); U = rng.normal(size=(37, 2))
    Zn = rng.normal(size=(37, 3))
    A = rng.normal(size=(3, 3)); B = rng.normal(size=(3, 2))
    total = 0.0
    for i in range(37):
        r = Zn[i] - A @ Z[i] - B @ U[i]
        total += float(r @ r)
    assert prediction_loss(A, B, Z, U, Zn) == pytest.approx(total / 37, abs=1e-12)


def test_spectral_radius_diag():
    assert spectral_radius(np.diag([0.5, -0.9])) == pytest.approx(0.9)


def test_spectral_radius_scaled_rotation():
    th = 0.7
    R = 0.7 * np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    assert spectral_radius(R) == pytest.approx(0.7, abs=1e-12)


def test_spectral_radius_independent_oracle():
    rng = np.random.default_rng(8)
    A = rng.normal(size=(6, 6))
    # characteristic-polynomial roots as the second eigen routine
    roots = np.roots(np.poly(A))
    assert spectral_radius(A) == pytest.approx(max(abs(roots)), abs=1e-7)


def test_spectral_radius_scaling_property():
    rng = np.random.default_rng(9)
    A = rng.normal(size=(4, 4))
    for c in (-2.0, 0.5):
        assert spectral_radius(c * A) == pytest.approx(abs(c) * spectral_radius(A),
                                                       rel=1e-10)


def test_spectral_radius_nonsquare():
    with pytest.raises(ValueError):
        spectral_radius(np.ones((2, 3)))


def test_controllability_loss_trivial_cases():
    A = np.zeros((1, 1)); B = np.ones((1, 1))
    assert controllability_loss(A, B, 0.0, 0.0) == pytest.approx(0.0)
    assert controllability_loss(A, B, 0.0, 1.0) == pytest.approx(1.0)


def test_controllability_loss_matches_svd_oracle():
    rng = np.random.default_rng(10)
    A = rng.normal(size=(4, 4)); B = rng.normal(size=(4, 1))
    eps, lam = 1e-6, 1.0
    C = np.concatenate([np.linalg.matrix_power(A, j) @ B for j in range(4)], axis=1)
    # independent route: singular values via the eigenvalues of C C^T
    ev = np.linalg.eigvalsh(C @ C.T)
    s_min, s_max = math.sqrt(max(ev[0], 0.0)), math.sqrt(ev[-1])
    expected = -math.log(s_min + eps) + lam * s_max / (s_min + eps)
    assert controllability_loss(A, B, eps, lam) == pytest.approx(expected, abs=1e-9)


def test_controllability_loss_monotone_in_sigma_min():
    # family: A = 0, B = diag-ish column so sigma_min(C) = s
    losses = []
    for s in (0.2, 0.5, 1.0, 2.0):
        A = np.zeros((2, 2))
        B = np.array([[s, 0.0], [0.0, s]])
        losses.append(controllability_loss(A, B, 0.0, 0.0))
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_fit_regularized_zero_weights_returns_edmd(linear_system):
    _, _, data = linear_system
    dic = identity_augmented(3, include_constant=False)
    A_ref, B_ref = fit_edmd(dic, data, ridge=1e-6)
    cfg = IdentificationConfig(w_rho=0.0, w_ctrl=0.0, ridge=1e-6,
                               max_iters=50, step_size=1e-3, tol=1e-10)
    A, B = fit_regularized(dic, data, cfg)
    Z = lift_many(dic, data.states)
    Zn = lift_many(dic, data.next_states)
    l_ref = prediction_loss(A_ref, B_ref, Z, data.inputs, Zn)
    l_new = prediction_loss(A, B, Z, data.inputs, Zn)
    assert abs(l_new - l_ref) <= 1e-10
    assert np.allclose(A, A_ref, atol=1e-8)


def test_fit_regularized_rho_penalty_shrinks_spectral_radius():
    # data from an unstable system rho(A0) = 1.1; short episodes keep the
    # trajectories bounded
    A0 = np.array([[1.1, 0.0], [0.0, 0.3]])
    B0 = np.array([[1.0], [0.5]])
    data = make_linear_dataset(A0, B0, T=200, seed=2, episodes=20)
    dic = identity_augmented(2, include_constant=False)
    A_edmd, _ = fit_edmd(dic, data, ridge=0.0)
    cfg = IdentificationConfig(w_rho=0.5, w_ctrl=0.0, max_iters=400,
                               step_size=5e-4, tol=1e-14, patience=400)
    A, _ = fit_regularized(dic, data, cfg)
    assert spectral_radius(A) < spectral_radius(A_edmd)


def test_fit_regularized_ctrl_penalty_raises_sigma_min():
    rng = np.random.default_rng(12)
    A0 = np.array([[0.9, 0.2], [0.0, 0.5]])
    B0 = np.array([[0.05], [0.4]])
    data = make_linear_dataset(A0, B0, T=200, seed=3)
    dic = identity_augmented(2, include_constant=False)
    base = IdentificationConfig(w_rho=0.0, w_ctrl=0.0, max_iters=300,
                                step_size=1e-3, tol=1e-14, patience=300)
    reg = IdentificationConfig(w_rho=0.0, w_ctrl=0.5, epsilon_ctrl=1e-2,
                               max_iters=300, step_size=1e-3, tol=1e-14,
                               patience=300)
    A_b, B_b = fit_regularized(dic, data, base)
    A_r, B_r = fit_regularized(dic, data, reg)
    assert controllability_sigma_min(A_r, B_r) >= controllability_sigma_min(A_b, B_b)


def test_fit_regularized_final_loss_not_above_initial():
    A0 = np.array([[0.7, 0.1], [0.0, 0.6]])
    B0 = np.array([[1.0], [0.2]])
    data = make_linear_dataset(A0, B0, T=150, seed=5)
    dic = identity_augmented(2, include_constant=False)
    cfg = IdentificationConfig(w_rho=0.3, w_ctrl=0.1, epsilon_ctrl=1e-2,
                               max_iters=100, step_size=1e-3, tol=1e-14,
                               patience=100)
    A_e, B_e = fit_edmd(dic, data, cfg.ridge)
    Z = lift_many(dic, data.states)
    Zn = lift_many(dic, data.next_states)
    l0 = regularized_loss(A_e, B_e, Z, data.inputs, Zn, cfg)
    A, B = fit_regularized(dic, data, cfg)
    assert regularized_loss(A, B, Z, data.inputs, Zn, cfg) <= l0 + 1e-15


def test_regularized_gradient_matches_finite_differences():
    rng = np.random.default_rng(13)
    Z = rng.normal(size=(25, 3)); U = rng.normal(size=(25, 1))
    Zn = rng.normal(size=(25, 3))
    A = rng.normal(size=(3, 3)); B = rng.normal(size=(3, 1))
    cfg = IdentificationConfig(w_rho=0.7, w_ctrl=0.4, epsilon_ctrl=1e-2,
                               lambda_cond=1.0)
    gA, gB = regularized_gradient(A, B, Z, U, Zn, cfg)
    rng2 = np.random.default_rng(14)
    h = 1e-6
    flat = np.concatenate([A.ravel(), B.ravel()])
    grad_flat = np.concatenate([gA.ravel(), gB.ravel()])
    for _ in range(10):
        i = int(rng2.integers(0, flat.size))
        ei = np.zeros(flat.size); ei[i] = h
        up = flat + ei; dn = flat - ei
        A_u, B_u = up[:9].reshape(3, 3), up[9:].reshape(3, 1)
        A_d, B_d = dn[:9].reshape(3, 3), dn[9:].reshape(3, 1)
        fd = (regularized_loss(A_u, B_u, Z, U, Zn, cfg)
              - regularized_loss(A_d, B_d, Z, U, Zn, cfg)) / (2 * h)
        denom = max(abs(fd), abs(grad_flat[i]), 1e-8)
        assert abs(fd - grad_flat[i]) / denom < 1e-4


def test_residual_zero_for_exact_model(linear_system):
    A0, B0, data = linear_system
    dic = identity_augmented(3, include_constant=False)
    model = LiftedModel(dic, projection_decoder(3, 3), A0, B0)
    d = residual(model, data.states[0], data.inputs[0], data.next_states[0])
    assert np.linalg.norm(d) < 1e-12


def test_residual_scalar_example():
    dic = identity_augmented(1, include_constant=False)
    model = LiftedModel(dic, projection_decoder(1, 1),
                        np.array([[1.0]]), np.array([[1.0]]))
    d = residual(model, [1.0], [1.0], [3.0])
    assert d[0] == pytest.approx(1.0)


def test_residual_matches_straight_line_recomputation():
    rng = np.random.default_rng(15)
    dic = identity_augmented(4, rng.normal(size=(2, 4)), [1.0, 2.0])
    A = rng.normal(size=(7, 7)); B = rng.normal(size=(7, 1))
    model = LiftedModel(dic, projection_decoder(4, 7), A, B)
    x, xn = rng.normal(size=4), rng.normal(size=4)
    u = rng.normal(size=1)
    d = residual(model, x, u, xn)
    from koopbound.lifting import lift
    expected = lift(dic, xn) - (A @ lift(dic, x) + B @ u)
    assert np.allclose(d, expected, atol=1e-12)


def test_dataset_chaining_and_csv_roundtrip(tmp_path, linear_system):
    _, _, data = linear_system
    assert data.check_chaining(atol=0.0)
    p = tmp_path / "data.csv"
    data.write_csv(p)
    back = TransitionDataset.read_csv(p)
    assert np.array_equal(back.states, data.states)
    assert np.array_equal(back.inputs, data.inputs)
    assert np.array_equal(back.next_states, data.next_states)
    assert np.array_equal(back.episode_ids, data.episode_ids)
    with open(p) as fh:
        header = fh.readline().strip()
    assert header == "episode,k,x0,x1,x2,u0,xn0,xn1,xn2"
