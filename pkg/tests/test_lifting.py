import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from koopbound.errors import NumericalError
from koopbound.lifting import (Decoder, Dictionary, decode, fit_linear_decoder,
                               identity_augmented, lift, lift_jacobian,
                               lift_many, projection_decoder, radial_basis,
                               rbf_width_from_data, round_trip_residual,
                               train_encoder_decoder)


def fd_jacobian(dic, x, step=1e-5):
    n = x.size
    cols = []
    for j in range(n):
        e = np.zeros(n); e[j] = step
        cols.append((lift(dic, x + e) - lift(dic, x - e)) / (2 * step))
    return np.stack(cols, axis=1)


def test_identity_augmented_constant_feature():
    dic = identity_augmented(2)
    out = lift(dic, np.array([1.0, 2.0]))
    assert np.array_equal(out, np.array([1.0, 2.0, 1.0]))


def test_dubins_dimensions():
    # observation dim 4 lifts to a 6-dim latent vector
    centers = np.zeros((1, 4))
    dic = identity_augmented(4, centers, [1.0], include_constant=True)
    assert dic.latent_dim == 6
    assert lift(dic, np.zeros(4)).shape == (6,)


def test_rbf_at_own_center_is_one():
    x = np.array([0.3, -0.7])
    dic = radial_basis(2, x[None, :], [1.0])
    assert lift(dic, x)[0] == pytest.approx(1.0)


def test_lift_deterministic():
    dic = identity_augmented(3, np.array([[0.1, 0.2, 0.3]]), [0.7])
    x = np.array([0.5, -1.0, 2.0])
    a, b = lift(dic, x), lift(dic, x)
    assert np.array_equal(a, b)


def test_lift_dimension_mismatch():
    dic = identity_augmented(2)
    with pytest.raises(ValueError):
        lift(dic, np.array([1.0, 2.0, 3.0]))


def test_rbf_width_positive_required():
    with pytest.raises(ValueError):
        radial_basis(2, np.zeros((1, 2)), [0.0])


def test_decode_projection():
    dec = projection_decoder(2, 3)
    assert np.array_equal(decode(dec, np.array([3.0, 4.0, 9.0])), np.array([3.0, 4.0]))


def test_decode_linear_identity_block_equals_projection():
    W = np.zeros((2, 3)); W[:, :2] = np.eye(2)
    dec = Decoder("linear", 3, 2, W.ravel())
    z = np.array([3.0, 4.0, 9.0])
    assert np.array_equal(decode(dec, z), decode(projection_decoder(2, 3), z))


def test_decode_dimension_mismatch():
    dec = projection_decoder(2, 3)
    with pytest.raises(ValueError):
        decode(dec, np.array([1.0, 2.0]))


def test_linear_decoder_reproduces_exact_linear_map_on_heldout():
    # states are an exact linear function of the features (identity prefix),
    # so the fit must reproduce held-out states; the oracle is an independent
    # normal-equations solve
    rng = np.random.default_rng(3)
    dic = identity_augmented(2, rng.normal(size=(2, 2)), [1.5, 0.9])
    X = rng.normal(size=(40, 2))
    dec = fit_linear_decoder(dic, X, ridge=0.0)
    Z = lift_many(dic, X)
    W_oracle = np.linalg.solve(Z.T @ Z, Z.T @ X).T
    X_test = rng.normal(size=(10, 2))
    Z_test = lift_many(dic, X_test)
    assert np.allclose(Z_test @ dec.weight_matrix.T, X_test, atol=1e-8)
    assert np.allclose(dec.weight_matrix, W_oracle, atol=1e-8)


def test_fit_linear_decoder_recovers_projection():
    rng = np.random.default_rng(0)
    dic = identity_augmented(2, rng.normal(size=(2, 2)), [1.0, 2.0])
    X = rng.normal(size=(50, 2))
    dec = fit_linear_decoder(dic, X, ridge=0.0)
    for x in X[:10]:
        assert round_trip_residual(dic, dec, x) < 1e-9


def test_fit_linear_decoder_hand_solved_normal_equations():
    # 1-D states with features (x, 1): on x in {-1, 0, 1} the normal
    # equations are diag(2, 3), hand-solvable
    dic = identity_augmented(1)
    X = np.array([[-1.0], [0.0], [1.0]])
    dec = fit_linear_decoder(dic, X, ridge=0.0)
    Z = lift_many(dic, X)
    assert np.allclose(Z.T @ Z, np.diag([2.0, 3.0]), atol=1e-15)
    W_hand = np.array([[2.0 / 2.0, 0.0 / 3.0]])
    assert np.allclose(dec.weight_matrix, W_hand, atol=1e-12)


def test_fit_linear_decoder_ridge_handles_few_samples():
    dic = identity_augmented(2, np.zeros((3, 2)), [1.0, 2.0, 3.0])
    X = np.array([[0.1, 0.2], [0.3, -0.1]])  # fewer samples than N=6
    dec = fit_linear_decoder(dic, X, ridge=1e-6)
    assert np.all(np.isfinite(dec.weights))


def test_fit_linear_decoder_rank_deficient_zero_ridge_raises():
    dic = identity_augmented(2, np.zeros((3, 2)), [1.0, 2.0, 3.0])
    X = np.array([[0.1, 0.2], [0.3, -0.1]])
    with pytest.raises(NumericalError):
        fit_linear_decoder(dic, X, ridge=0.0)


def test_jacobian_identity_prefix():
    dic = identity_augmented(3)
    J = lift_jacobian(dic, np.array([0.1, 0.2, 0.3]))
    assert np.array_equal(J[:3], np.eye(3))
    assert np.array_equal(J[3], np.zeros(3))


def test_jacobian_rbf_zero_at_center():
    c = np.array([0.5, -0.5])
    dic = radial_basis(2, c[None, :], [1.3])
    J = lift_jacobian(dic, c)
    assert np.allclose(J, 0.0, atol=1e-14)


@pytest.mark.parametrize("kind", ["identity", "rbf", "trained"])
def test_jacobian_matches_finite_differences(kind):
    rng = np.random.default_rng(11)
    if kind == "identity":
        dic = identity_augmented(3, rng.normal(size=(2, 3)), [0.8, 1.4])
    elif kind == "rbf":
        dic = radial_basis(3, rng.normal(size=(4, 3)), [1.1, 0.9, 1.5, 2.0])
    else:
        X = rng.normal(size=(60, 3))
        U = rng.normal(size=(60, 1))
        Xn = X + 0.1 * U
        dic, _, _ = train_encoder_decoder(X, U, Xn, latent_dim=4, hidden=8,
                                          iters=20, lr=1e-2, seed=1)
    for _ in range(100):
        x = rng.normal(size=3)
        assert np.allclose(lift_jacobian(dic, x), fd_jacobian(dic, x), atol=1e-4)


def test_round_trip_zero_for_exact_inverse():
    dic = identity_augmented(2, np.array([[1.0, 1.0]]), [2.0])
    dec = projection_decoder(2, dic.latent_dim)
    rng = np.random.default_rng(5)
    for _ in range(20):
        assert round_trip_residual(dic, dec, rng.normal(size=2)) == 0.0


def test_round_trip_direct_norm():
    # decode(lift(x)) = (1, 0.3) for x = (1, 0): residual 0.3 exactly
    class _Dec:
        kind = "linear"
        latent_dim = 3
        output_dim = 2

    dic = identity_augmented(2)
    W = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.3]])
    dec = Decoder("linear", 3, 2, W.ravel())
    assert round_trip_residual(dic, dec, np.array([1.0, 0.0])) == pytest.approx(0.3)


def test_round_trip_trained_pair_matches_recomputation():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(80, 2))
    U = rng.normal(size=(80, 1))
    Xn = 0.9 * X + 0.05 * U
    dic, dec, _ = train_encoder_decoder(X, U, Xn, latent_dim=3, hidden=8,
                                        iters=50, lr=1e-2, seed=2)
    for x in rng.normal(size=(10, 2)):
        expected = float(np.linalg.norm(x - decode(dec, lift(dic, x))))
        assert round_trip_residual(dic, dec, x) == pytest.approx(expected, abs=1e-12)


def test_trained_pair_loss_decreases_and_roundtrip_nonzero():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(100, 2))
    U = rng.normal(size=(100, 1))
    Xn = 0.8 * X + 0.1 * U
    dic, dec, trace = train_encoder_decoder(X, U, Xn, latent_dim=3, hidden=8,
                                            iters=80, lr=1e-2, seed=3)
    assert trace[-1] < trace[0]
    r = round_trip_residual(dic, dec, np.array([0.5, -0.5]))
    assert r > 0.0


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2))
@settings(max_examples=50, deadline=None)
def test_projection_inverts_identity_lift(vals):
    x = np.array(vals)
    dic = identity_augmented(2, np.array([[0.0, 0.0]]), [1.0])
    dec = projection_decoder(2, dic.latent_dim)
    assert np.array_equal(decode(dec, lift(dic, x)), x)


def test_width_heuristic_positive_and_scale_free():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(50, 3))
    w = rbf_width_from_data(X)
    assert w > 0
    assert rbf_width_from_data(10 * X) == pytest.approx(10 * w, rel=1e-9)
