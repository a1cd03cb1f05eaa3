import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from koopbound.controller import (ControllerSpec, crdr_reduce, crdr_step,
                                  nfc_input, synthesize_metric, verify_lmi)
from koopbound.errors import SynthesisError


def random_controllable(rng, N, m):
    """Random (A, B) pair, rejection-sampled for controllability."""
    while True:
        A = rng.standard_normal((N, N))
        B = rng.standard_normal((N, m))
        C = np.concatenate([np.linalg.matrix_power(A, j) @ B for j in range(N)], axis=1)
        if np.linalg.svd(C, compute_uv=False)[-1] > 1e-6:
            return A, B


def grid_search_2d(objective, half_range=5.0, coarse=81, fine=81):
    """Two-stage grid minimization of a function of (du, dv implicit)."""
    best_x, best_val = None, np.inf
    lo = np.array([-half_range, -half_range])
    hi = np.array([half_range, half_range])
    for _ in range(3):
        g0 = np.linspace(lo[0], hi[0], coarse)
        g1 = np.linspace(lo[1], hi[1], coarse)
        X0, X1 = np.meshgrid(g0, g1, indexing="ij")
        vals = objective(np.stack([X0.ravel(), X1.ravel()]))
        i = int(np.argmin(vals))
        best_val = float(vals[i])
        best_x = np.array([X0.ravel()[i], X1.ravel()[i]])
        span0 = (hi[0] - lo[0]) / (coarse - 1)
        span1 = (hi[1] - lo[1]) / (coarse - 1)
        lo = best_x - np.array([span0, span1])
        hi = best_x + np.array([span0, span1])
    return best_x, best_val


def grid_search_1d(objective, half_range=5.0, points=2001):
    lo, hi = -half_range, half_range
    best_x, best_val = 0.0, np.inf
    for _ in range(3):
        g = np.linspace(lo, hi, points)
        vals = objective(g[None, :])
        i = int(np.argmin(vals))
        best_x, best_val = float(g[i]), float(vals[i])
        span = (hi - lo) / (points - 1)
        lo, hi = best_x - span, best_x + span
    return np.array([best_x]), best_val


# ------------------------------------------------------------ synthesis

def test_synthesize_zero_dynamics_metric():
    # A = 0 forces A_cl = 0, so -gamma M = -Q gives M = I / gamma
    A = np.zeros((2, 2)); B = np.eye(2)
    spec = synthesize_metric(A, B, gamma=0.9)
    assert np.allclose(spec.M, np.eye(2) / 0.9, atol=1e-10)
    assert spec.certificate <= 1e-8


def test_synthesize_scalar_certificate():
    spec = synthesize_metric(np.array([[1.0]]), np.array([[1.0]]), gamma=0.81)
    k = spec.K[0, 0]
    assert abs(1.0 - k) < 0.9
    assert spec.certificate <= 1e-8


def test_isotropic_metric_ratio_is_one():
    # A_cl = 0 with Q = I gives M proportional to I: sqrt(m_bar/m_under) = 1.00
    spec = synthesize_metric(np.zeros((3, 3)), np.eye(3), gamma=0.9)
    assert math.sqrt(spec.m_bar / spec.m_under) == pytest.approx(1.00, abs=1e-9)


def test_synthesize_gamma_out_of_range():
    with pytest.raises(ValueError):
        synthesize_metric(np.zeros((2, 2)), np.eye(2), gamma=1.5)


def test_synthesize_uncontrollable_unstable_fails():
    # an unstable mode with no input authority can never certify
    A = np.array([[1.2, 0.0], [0.0, 0.5]])
    B = np.array([[0.0], [1.0]])
    with pytest.raises(SynthesisError):
        synthesize_metric(A, B, gamma=0.9)


def test_synthesis_certificates_on_random_systems():
    rng = np.random.default_rng(77)
    for _ in range(50):
        N = int(rng.integers(2, 9))
        m = int(rng.integers(1, 3))
        A, B = random_controllable(rng, N, m)
        spec = synthesize_metric(A, B, gamma=0.9)
        assert spec.certificate <= 1e-8
        assert np.all(spec.closed_loop_moduli < 1.0)
        gap = np.linalg.norm(spec.Theta.T @ spec.Theta - spec.M)
        assert gap <= 1e-9 * np.linalg.norm(spec.M)


# ------------------------------------------------------------ nfc

def test_nfc_input_cases():
    spec = synthesize_metric(np.zeros((2, 2)), np.eye(2), gamma=0.9)
    u_d = np.array([1.0, -1.0])
    assert np.allclose(nfc_input(spec, u_d, np.zeros(2)), u_d)
    K = np.array([[2.0]])
    scalar = ControllerSpec(K=K, M=np.eye(1), Theta=np.eye(1), gamma=0.9,
                            rho=0.0, c_v=1.0, m_bar=1.0, m_under=1.0)
    out = nfc_input(scalar, np.array([1.0]), np.array([0.5]))
    assert out[0] == pytest.approx(0.0)


def test_nfc_zero_gain_passthrough():
    spec = ControllerSpec(K=np.zeros((1, 2)), M=np.eye(2), Theta=np.eye(2),
                          gamma=0.9, rho=0.0, c_v=1.0, m_bar=1.0, m_under=1.0)
    for e in np.random.default_rng(0).normal(size=(5, 2)):
        assert np.allclose(nfc_input(spec, [0.7], e), [0.7])


# ------------------------------------------------------------ verify_lmi

def test_verify_lmi_examples():
    assert verify_lmi(np.zeros((2, 2)), np.eye(2), 0.9) == pytest.approx(-0.9)
    g = 0.73
    assert verify_lmi(math.sqrt(g) * np.eye(3), np.eye(3), g) == pytest.approx(0.0, abs=1e-12)


def test_verify_lmi_requires_symmetric():
    with pytest.raises(ValueError):
        verify_lmi(np.eye(2), np.array([[1.0, 0.5], [0.0, 1.0]]), 0.9)


def test_nominal_loop_contracts_in_theta_norm():
    # v_{k+1} = ||Theta A_cl e|| <= sqrt(gamma) ||Theta e|| follows from the LMI
    rng = np.random.default_rng(5)
    A, B = random_controllable(rng, 4, 2)
    spec = synthesize_metric(A, B, gamma=0.85)
    A_cl = A - B @ spec.K
    for _ in range(50):
        e = rng.standard_normal(4)
        v = np.linalg.norm(spec.Theta @ e)
        v_next = np.linalg.norm(spec.Theta @ (A_cl @ e))
        assert v_next <= math.sqrt(0.85) * v + 1e-9


# ------------------------------------------------------------ crdr

def scalar_spec(gamma=0.5, rho=0.0, c_v=1.0):
    return ControllerSpec(K=np.zeros((1, 1)), M=np.eye(1), Theta=np.eye(1),
                          gamma=gamma, rho=rho, c_v=c_v, m_bar=1.0, m_under=1.0)


def test_crdr_feasible_at_zero():
    spec = scalar_spec(gamma=0.9, rho=0.0, c_v=1.0)
    # ||Theta A e|| = 0.5 <= gamma ||Theta e|| = 0.9: already feasible
    sol = crdr_step(spec, np.array([[0.5]]), np.array([[1.0]]),
                    np.array([1.0]), np.array([0.0]))
    assert sol.delta_u[0] == 0.0
    assert sol.delta_v == 0.0
    assert sol.objective == 0.0


def test_crdr_zero_input_matrix():
    spec = scalar_spec(gamma=0.5, rho=0.2, c_v=2.0)
    A = np.array([[1.0]]); B = np.array([[0.0]])
    e = np.array([1.0])
    sol = crdr_step(spec, A, B, e, np.array([0.0]))
    r0 = 0.5 * 1.0 - 0.2
    assert sol.delta_u[0] == pytest.approx(0.0, abs=1e-12)
    assert sol.delta_v == pytest.approx(max(0.0, 1.0 - r0), abs=1e-9)


def test_crdr_scalar_instance_known_solution():
    # minimize du^2 + dv^2 s.t. |1 + du| <= 0.5 + dv: optimum (-1/4, 1/4)
    spec = scalar_spec(gamma=0.5, rho=0.0, c_v=1.0)
    sol = crdr_step(spec, np.array([[1.0]]), np.array([[1.0]]),
                    np.array([1.0]), np.array([0.0]))
    assert sol.delta_u[0] == pytest.approx(-0.25, abs=1e-7)
    assert sol.delta_v == pytest.approx(0.25, abs=1e-7)
    assert sol.objective == pytest.approx(0.125, abs=1e-7)


def test_crdr_scalar_instance_against_joint_grid():
    # independent oracle: dense grid over (du, dv >= 0) with feasibility check
    spec = scalar_spec(gamma=0.5, rho=0.0, c_v=1.0)
    A = np.array([[1.0]]); B = np.array([[1.0]]); e = np.array([1.0])
    sol = crdr_step(spec, A, B, e, np.array([0.0]))
    lo_u, hi_u, lo_v, hi_v = -2.0, 2.0, 0.0, 2.0
    best = np.inf
    for _ in range(4):
        du = np.linspace(lo_u, hi_u, 201)
        dv = np.linspace(max(lo_v, 0.0), hi_v, 201)
        DU, DV = np.meshgrid(du, dv, indexing="ij")
        feas = np.abs(1.0 + DU) <= 0.5 + DV
        obj = DU**2 + DV**2
        obj[~feas] = np.inf
        i, j = np.unravel_index(np.argmin(obj), obj.shape)
        best = obj[i, j]
        su, sv = du[1] - du[0], dv[1] - dv[0]
        lo_u, hi_u = du[i] - su, du[i] + su
        lo_v, hi_v = dv[j] - sv, dv[j] + sv
    assert sol.objective == pytest.approx(best, abs=1e-6)


def test_crdr_degenerate_deep_violation():
    # r0 < 0 with a in range(F): the exact w = 0 candidate applies when the
    # slack penalty is strong enough
    spec = scalar_spec(gamma=0.5, rho=2.0, c_v=100.0)
    A = np.array([[1.0]]); B = np.array([[1.0]])
    e = np.array([0.5])  # r0 = 0.25 - 2 = -1.75 < 0
    sol = crdr_step(spec, A, B, e, np.array([0.0]))
    sub = crdr_reduce(spec, A, B, e)
    # verify against a fine 1-D grid
    _, best = grid_search_1d(lambda g: np.array([sub.objective(np.array([v]))
                                                 for v in g[0]]))
    assert sol.objective <= best + 1e-6


def test_crdr_reduce_random_probe():
    rng = np.random.default_rng(21)
    A, B = random_controllable(rng, 3, 2)
    spec = synthesize_metric(A, B, gamma=0.9, rho=0.1, c_v=0.7)
    e = rng.standard_normal(3)
    sub = crdr_reduce(spec, A, B, e)
    sol = crdr_step(spec, A, B, e, np.zeros(2))
    for _ in range(10000):
        cand = rng.uniform(-10, 10, size=2)
        assert sub.objective(cand) >= sol.objective - 1e-7


def test_crdr_never_worse_than_passive_feasible_point():
    rng = np.random.default_rng(22)
    for _ in range(1000):
        N = int(rng.integers(1, 4))
        m = int(rng.integers(1, 3))
        Theta = np.eye(N) + 0.3 * np.triu(rng.standard_normal((N, N)))
        M = Theta.T @ Theta
        ev = np.linalg.eigvalsh(M)
        spec = ControllerSpec(K=np.zeros((m, N)), M=M, Theta=Theta,
                              gamma=float(rng.uniform(0.3, 0.95)),
                              rho=float(rng.uniform(0.0, 0.5)),
                              c_v=float(10 ** rng.uniform(-2, 2)),
                              m_bar=float(ev[-1]), m_under=float(ev[0]))
        A = rng.standard_normal((N, N))
        B = rng.standard_normal((N, m))
        e = rng.standard_normal(N)
        sub = crdr_reduce(spec, A, B, e)
        sol = crdr_step(spec, A, B, e, np.zeros(m))
        passive = sub.objective(np.zeros(m))
        assert sol.objective <= passive + 1e-9
        # slack tightness at the optimum
        expected_dv = sub.slack(sol.delta_u)
        assert sol.delta_v == pytest.approx(expected_dv, abs=1e-7)


@given(st.floats(0.25, 4.0))
@settings(max_examples=40, deadline=None)
def test_crdr_positive_homogeneity(c):
    rng = np.random.default_rng(30)
    A, B = random_controllable(rng, 3, 2)
    spec = synthesize_metric(A, B, gamma=0.8, rho=0.0, c_v=0.5)
    e = rng.standard_normal(3)
    sol1 = crdr_step(spec, A, B, e, np.zeros(2))
    sol2 = crdr_step(spec, A, B, c * e, np.zeros(2))
    scale = max(1.0, c * float(np.linalg.norm(sol1.delta_u)), c * sol1.delta_v)
    assert np.allclose(sol2.delta_u, c * sol1.delta_u, atol=1e-7 * scale)
    assert sol2.delta_v == pytest.approx(c * sol1.delta_v, abs=1e-7 * scale)


def test_crdr_2d_grid_search_match():
    rng = np.random.default_rng(23)
    for _ in range(20):
        A, B = random_controllable(rng, 3, 2)
        spec = synthesize_metric(A, B, gamma=0.9,
                                 rho=float(rng.uniform(0, 0.3)),
                                 c_v=float(10 ** rng.uniform(-1, 1)))
        e = 0.5 * rng.standard_normal(3)
        sub = crdr_reduce(spec, A, B, e)
        sol = crdr_step(spec, A, B, e, np.zeros(2))

        def obj(G):
            return np.array([sub.objective(G[:, i]) for i in range(G.shape[1])])

        _, best = grid_search_2d(obj)
        assert sol.objective <= best + 1e-4
        assert abs(sol.objective - best) < 1e-4 or sol.objective < best
