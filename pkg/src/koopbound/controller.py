"""Tracking-gain synthesis with a contraction certificate, and the per-step
robustified input optimization.

The nominal gain K comes from a discrete-time Riccati solve (LQR) and is
accepted only if rho(A - B K) < sqrt(gamma); the base LQR state weight is
escalated geometrically (x10, up to six times) before giving up.  The metric
M then solves the gamma-scaled Lyapunov equation

    A_cl^T M A_cl - gamma M = -Q,

which certifies the decay condition A_cl^T M A_cl <= gamma M.  Theta is the
upper Cholesky factor of M.

The per-step robustified input solves

    min ||du||^2 + c_v dv^2
    s.t. ||Theta (A e + B du)|| <= gamma ||Theta e|| - rho + dv,   dv >= 0.

Eliminating dv (its optimum is the hinge max(0, ||a + F du|| - r0) with
a = Theta A e, F = Theta B, r0 = gamma ||Theta e|| - rho) leaves a smooth
strictly convex problem whose stationary point satisfies
du = -mu F^T w, w = (I + mu F F^T)^{-1} a for a scalar multiplier mu >= 0.
The multiplier is found by a safeguarded Newton/bisection on

    psi(mu) = (mu - c_v) n(mu) + c_v r0,    n(mu) = ||w(mu)||,

which is the 1-D optimality condition linking mu, c_v, and the constraint
residual.  When r0 < 0 and a lies in the range of F, the minimizer may sit at
w = 0 exactly; that subdifferential case is handled in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NumericalError, SolverError, SynthesisError
from .sysid import check_controllability, spectral_radius

LMI_TOL = 1e-8
SLACK_TOL = 1e-7
ROOT_TOL = 1e-9
MAX_ROOT_ITERS = 200
LQR_ESCALATIONS = 6


@dataclass(frozen=True)
class ControllerSpec:
    """Certified gain, metric and the scalars entering the error bounds."""

    K: np.ndarray
    M: np.ndarray
    Theta: np.ndarray
    gamma: float
    rho: float
    c_v: float
    m_bar: float      # largest eigenvalue of M  (= sigma_max(Theta)^2)
    m_under: float    # smallest eigenvalue of M (= sigma_min(Theta)^2)
    certificate: float = 0.0          # max eig of A_cl^T M A_cl - gamma M
    closed_loop_moduli: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        for name in ("K", "M", "Theta", "closed_loop_moduli"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        if self.m_under <= 0:
            raise ValueError("m_under must be positive")
        M = self.M
        if not np.allclose(M, M.T, atol=1e-9 * max(1.0, float(np.abs(M).max()))):
            raise ValueError("M must be symmetric")
        gap = np.linalg.norm(self.Theta.T @ self.Theta - M)
        if gap > 1e-9 * max(np.linalg.norm(M), 1e-30):
            raise ValueError("Theta^T Theta does not reproduce M")

    @property
    def latent_dim(self) -> int:
        return self.M.shape[0]

    @property
    def input_dim(self) -> int:
        return self.K.shape[0]

    def lyapunov_value(self, e) -> float:
        """v = ||Theta e||, the certified Lyapunov function of the error."""
        return float(np.linalg.norm(self.Theta @ np.asarray(e, dtype=float)))


@dataclass(frozen=True)
class CrdrSolution:
    """Solution of one robustified input optimization."""

    u: np.ndarray
    delta_u: np.ndarray
    delta_v: float
    objective: float
    constraint_gap: float   # r0 + dv - ||Theta(Ae + B du)||, >= -SLACK_TOL
    iterations: int


def verify_lmi(A_cl, M, gamma: float) -> float:
    """Largest eigenvalue of the symmetric residual A_cl^T M A_cl - gamma M."""
    A_cl = np.asarray(A_cl, dtype=float)
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, M.T, atol=1e-9 * max(1.0, float(np.abs(M).max()))):
        raise ValueError("M must be symmetric")
    R = A_cl.T @ M @ A_cl - gamma * M
    R = 0.5 * (R + R.T)
    return float(np.max(np.linalg.eigvalsh(R)))


def synthesize_metric(A, B, gamma: float, q_weight: float = 1.0,
                      rho: float = 0.0, c_v: float = 1.0,
                      q_lqr: float = 1.0, r_lqr: float = 1.0,
                      controllability_floor: float = 0.0) -> ControllerSpec:
    """LQR gain accepted against rho(A_cl) < sqrt(gamma), then the Lyapunov metric.

    ``q_weight`` scales the identity right-hand side Q of the Lyapunov
    equation; ``q_lqr``/``r_lqr`` scale the LQR design weights.  Raises
    SynthesisError when no escalation of the LQR state weight certifies.
    """
    A = np.asarray(A, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != A.shape[0]:
        B = B.reshape(A.shape[0], -1)
    N, m = A.shape[0], B.shape[1]
    if not (0.0 < gamma < 1.0):
        raise ValueError("gamma must lie in (0, 1)")
    if q_weight <= 0:
        raise ValueError("q_weight must be positive")
    if controllability_floor > 0:
        check_controllability(A, B, controllability_floor)
    root_gamma = math.sqrt(gamma)
    R = r_lqr * np.eye(m)
    K = None
    for attempt in range(LQR_ESCALATIONS + 1):
        Q_try = q_lqr * (10.0 ** attempt) * np.eye(N)
        try:
            S = sla.solve_discrete_are(A, B, Q_try, R)
        except Exception:
            continue
        K_try = np.linalg.solve(R + B.T @ S @ B, B.T @ S @ A)
        if spectral_radius(A - B @ K_try) < root_gamma:
            K = K_try
            break
    if K is None:
        raise SynthesisError(
            "no stabilizing gain with rho(A-BK) < sqrt(gamma)=%.4f after %d "
            "weight escalations; consider a larger gamma" % (root_gamma, LQR_ESCALATIONS))
    A_cl = A - B @ K
    Q = q_weight * np.eye(N)
    try:
        M = sla.solve_discrete_lyapunov(A_cl.T / root_gamma, Q / gamma)
    except Exception as exc:
        raise NumericalError("Lyapunov solve failed: %s" % exc) from exc
    M = 0.5 * (M + M.T)
    evals = np.linalg.eigvalsh(M)
    if evals[0] <= 0 or not np.all(np.isfinite(M)):
        raise NumericalError("Lyapunov solution not positive definite "
                             "(min eigenvalue %.3e); system too close to the "
                             "sqrt(gamma) boundary" % evals[0])
    Theta = sla.cholesky(M, lower=False)
    cert = verify_lmi(A_cl, M, gamma)
    moduli = np.sort(np.abs(np.linalg.eigvals(A_cl)))[::-1]
    return ControllerSpec(K=K, M=M, Theta=Theta, gamma=gamma, rho=rho, c_v=c_v,
                          m_bar=float(evals[-1]), m_under=float(evals[0]),
                          certificate=cert, closed_loop_moduli=moduli)


def nfc_input(spec: ControllerSpec, u_d, e) -> np.ndarray:
    """Nominal feedback input u = u_d - K e."""
    u_d = np.atleast_1d(np.asarray(u_d, dtype=float))
    e = np.asarray(e, dtype=float)
    if e.shape[0] != spec.K.shape[1]:
        raise ValueError("error vector has dim %d, expected %d" % (e.shape[0], spec.K.shape[1]))
    return u_d - spec.K @ e


@dataclass(frozen=True)
class CrdrSubproblem:
    """Reduced form of the per-step program after slack elimination."""

    a: np.ndarray    # Theta A e
    F: np.ndarray    # Theta B
    r0: float        # gamma ||Theta e|| - rho
    c_v: float

    def slack(self, delta_u) -> float:
        """Optimal slack for a fixed du: the hinge max(0, ||a + F du|| - r0)."""
        w = self.a + self.F @ np.atleast_1d(np.asarray(delta_u, dtype=float))
        return max(0.0, float(np.linalg.norm(w)) - self.r0)

    def objective(self, delta_u) -> float:
        du = np.atleast_1d(np.asarray(delta_u, dtype=float))
        return float(du @ du) + self.c_v * self.slack(du) ** 2


def crdr_reduce(spec: ControllerSpec, A, B, e, u_d=None) -> CrdrSubproblem:
    """Build the reduced convex subproblem g(du) = ||du||^2 + c_v hinge(du)^2."""
    A = np.asarray(A, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    e = np.asarray(e, dtype=float)
    a = spec.Theta @ (A @ e)
    F = spec.Theta @ B
    r0 = spec.gamma * spec.lyapunov_value(e) - spec.rho
    return CrdrSubproblem(a=a, F=F, r0=r0, c_v=spec.c_v)


def _solve_subproblem(sub: CrdrSubproblem):
    """Exact minimizer of the reduced problem; returns (du, dv, iterations)."""
    a, F, r0, c_v = sub.a, sub.F, sub.r0, sub.c_v
    m = F.shape[1]
    norm_a = float(np.linalg.norm(a))
    if norm_a <= r0:
        return np.zeros(m), 0.0, 0

    U, s, Vt = np.linalg.svd(F, full_matrices=False)
    pos = s > 1e-12 * max(float(s[0]) if s.size else 0.0, 1e-300)
    ah = U.T @ a
    ah_pos, s_pos = ah[pos], s[pos]
    # component of a outside the controllable range of F
    n_inf_sq = max(float(a @ a) - float(ah_pos @ ah_pos), 0.0)

    if r0 < 0.0 and n_inf_sq <= 1e-28 * max(1.0, float(a @ a)):
        # candidate with w = a + F du = 0 exactly: du = -F^+ a; optimal iff the
        # subgradient condition c_inf <= c_v |r0| holds
        c_inf = float(np.linalg.norm(ah_pos / s_pos**2)) if ah_pos.size else 0.0
        if c_inf <= c_v * (-r0):
            du = -Vt[pos].T @ (ah_pos / s_pos)
            return du, -r0, 0

    def n_of(mu):
        t = ah_pos / (1.0 + mu * s_pos**2)
        return math.sqrt(float(t @ t) + n_inf_sq)

    def n_prime(mu):
        t2 = ah_pos**2 * s_pos**2 / (1.0 + mu * s_pos**2) ** 3
        n = n_of(mu)
        return -float(np.sum(t2)) / n if n > 0 else 0.0

    def psi(mu):
        return (mu - c_v) * n_of(mu) + c_v * r0

    scale = max(1.0, c_v * norm_a, c_v * abs(r0))
    tol = ROOT_TOL * scale

    lo, hi = 0.0, max(c_v, 1.0)
    iters = 0
    while psi(hi) < 0.0:
        hi *= 2.0
        iters += 1
        if hi > 1e30:
            raise SolverError("failed to bracket the multiplier (r0=%.3e, |a|=%.3e)"
                              % (r0, norm_a))
    mu = min(hi, c_v * (1.0 - r0 / max(norm_a, 1e-300)))
    mu = min(max(mu, lo), hi)
    for it in range(MAX_ROOT_ITERS):
        val = psi(mu)
        iters = it + 1
        if abs(val) <= tol:
            break
        if val < 0.0:
            lo = mu
        else:
            hi = mu
        dval = n_of(mu) + (mu - c_v) * n_prime(mu)
        step_ok = dval > 0.0
        if step_ok:
            nxt = mu - val / dval
            step_ok = lo < nxt < hi and math.isfinite(nxt)
        mu = nxt if step_ok else 0.5 * (lo + hi)
        if hi - lo < 1e-16 * max(1.0, hi):
            break
    else:
        raise SolverError("multiplier search did not converge within %d iterations"
                          % MAX_ROOT_ITERS)
    w_pos = ah_pos / (1.0 + mu * s_pos**2)
    du = -Vt[pos].T @ (mu * s_pos * w_pos)
    dv = max(0.0, n_of(mu) - r0)
    return du, dv, iters


def crdr_step(spec: ControllerSpec, A, B, e, u_d) -> CrdrSolution:
    """Solve the per-step program and return u = u_d + du with diagnostics."""
    if spec.c_v <= 0:
        raise ValueError("c_v must be positive")
    sub = crdr_reduce(spec, A, B, e)
    du, dv, iters = _solve_subproblem(sub)
    u_d = np.atleast_1d(np.asarray(u_d, dtype=float))
    lhs = float(np.linalg.norm(sub.a + sub.F @ du))
    gap = sub.r0 + dv - lhs
    if gap < -SLACK_TOL:
        raise SolverError("solution violates the robust constraint by %.3e" % (-gap))
    obj = float(du @ du) + spec.c_v * dv * dv
    return CrdrSolution(u=u_d + du, delta_u=du, delta_v=dv,
                        objective=obj, constraint_gap=gap, iterations=iters)
