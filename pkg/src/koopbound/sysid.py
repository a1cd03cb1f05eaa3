"""Identification of the latent linear dynamics (A, B) from transition data.

The initial estimate is ridge-regularized least squares over stacked
[z; u] regressors (EDMD with control).  An optional plain gradient-descent
refinement adds a spectral-radius penalty and a controllability barrier,

    L = L_pred + w_rho * rho(A) + w_ctrl * (-log(s_min(C) + eps)
        + lambda * s_max(C) / (s_min(C) + eps)),

where C = [B, AB, ..., A^{N-1}B].  The ridge quadratic of the initializer is
carried into the refinement objective so that zero regularizer weights leave
the least-squares solution fixed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .lifting import Dictionary, LiftedModel, lift, lift_many

# norm cap applied to the regularizer gradients; the spectral penalties have
# unbounded steepness near degenerate eigen/singular values and a fixed-step
# method needs the direction, not the magnitude, there
GRAD_CAP = 1e3


@dataclass
class TransitionDataset:
    """One-step transitions (x_k, u_k, x_{k+1}) with episode bookkeeping."""

    states: np.ndarray       # (T, n)
    inputs: np.ndarray       # (T, m)
    next_states: np.ndarray  # (T, n)
    episode_ids: np.ndarray  # (T,)
    step_ids: np.ndarray     # (T,)
    source_seed: int = 0

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.inputs = np.asarray(self.inputs, dtype=float)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs[:, None]
        self.next_states = np.atleast_2d(np.asarray(self.next_states, dtype=float))
        self.episode_ids = np.asarray(self.episode_ids, dtype=int)
        self.step_ids = np.asarray(self.step_ids, dtype=int)
        T = self.states.shape[0]
        if not (self.inputs.shape[0] == self.next_states.shape[0] == T
                == self.episode_ids.shape[0] == self.step_ids.shape[0]):
            raise ValueError("inconsistent record counts")

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def check_chaining(self, atol: float = 0.0) -> bool:
        """Consecutive records of an episode chain x_next -> x."""
        same = self.episode_ids[1:] == self.episode_ids[:-1]
        if not np.any(same):
            return True
        gap = np.abs(self.next_states[:-1][same] - self.states[1:][same])
        return bool(np.max(gap) <= atol)

    def write_csv(self, path) -> None:
        n, m = self.state_dim, self.input_dim
        header = (["episode", "k"] + ["x%d" % i for i in range(n)]
                  + ["u%d" % i for i in range(m)] + ["xn%d" % i for i in range(n)])
        lines = [",".join(header)]
        for i in range(len(self)):
            row = [str(self.episode_ids[i]), str(self.step_ids[i])]
            row += [repr(float(v)) for v in self.states[i]]
            row += [repr(float(v)) for v in self.inputs[i]]
            row += [repr(float(v)) for v in self.next_states[i]]
            lines.append(",".join(row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def read_csv(cls, path, source_seed: int = 0) -> "TransitionDataset":
        with open(path) as fh:
            reader = csv.reader(fh)
            header = next(reader)
            n = sum(1 for h in header if h.startswith("x") and not h.startswith("xn"))
            m = sum(1 for h in header if h.startswith("u"))
            eps, ks, xs, us, xns = [], [], [], [], []
            for row in reader:
                if not row:
                    continue
                eps.append(int(row[0])); ks.append(int(row[1]))
                vals = [float(v) for v in row[2:]]
                xs.append(vals[:n]); us.append(vals[n:n + m]); xns.append(vals[n + m:])
        return cls(np.array(xs), np.array(us), np.array(xns),
                   np.array(eps), np.array(ks), source_seed)


@dataclass
class IdentificationConfig:
    """Weights and optimizer settings for the regularized refinement."""

    w_rho: float = 0.0
    w_ctrl: float = 0.0
    lambda_cond: float = 1.0
    epsilon_ctrl: float = 1e-6
    ridge: float = 0.0
    max_iters: int = 2000
    step_size: float = 1e-3
    tol: float = 1e-10
    # iterations without a >= tol improvement of the best loss before stopping;
    # 1 reproduces plain stop-on-no-decrease, larger values ride out the
    # bounces of the nonsmooth spectral penalties
    patience: int = 1

    def __post_init__(self):
        vals = [self.w_rho, self.w_ctrl, self.lambda_cond, self.epsilon_ctrl,
                self.ridge, self.step_size, self.tol]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("identification config values must be finite")
        if self.w_rho < 0 or self.w_ctrl < 0 or self.ridge < 0:
            raise ValueError("weights must be nonnegative")
        if self.epsilon_ctrl <= 0:
            raise ValueError("epsilon_ctrl must be positive")
        if self.step_size <= 0 or self.tol <= 0:
            raise ValueError("step_size and tol must be positive")


def _lifted_arrays(dictionary: Dictionary, data: TransitionDataset):
    Z = lift_many(dictionary, data.states)
    Zn = lift_many(dictionary, data.next_states)
    U = data.inputs
    return Z, U, Zn


def fit_edmd(dictionary: Dictionary, data: TransitionDataset, ridge: float = 0.0):
    """Ridge least-squares minimizer of sum ||z' - A z - B u||^2 + ridge ||[A B]||_F^2."""
    N, m = dictionary.latent_dim, data.input_dim
    if len(data) < N + m:
        raise ValueError("need at least N+m=%d records, got %d" % (N + m, len(data)))
    Z, U, Zn = _lifted_arrays(dictionary, data)
    G = np.concatenate([Z, U], axis=1)           # (T, N+m)
    gram = G.T @ G + ridge * np.eye(N + m)
    if ridge == 0.0 and np.linalg.matrix_rank(gram) < N + m:
        raise NumericalError("singular Gram matrix with zero ridge")
    try:
        W = np.linalg.solve(gram, G.T @ Zn).T    # (N, N+m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("EDMD normal equations failed: %s" % exc) from exc
    return W[:, :N], W[:, N:]


def prediction_loss(A, B, Z, U, Zn) -> float:
    """Mean squared one-step latent prediction error over the records.

    Uses exact (fsum) accumulation so the result is independent of record
    order to well below 1e-12.
    """
    A = np.asarray(A, dtype=float); B = np.atleast_2d(np.asarray(B, dtype=float))
    E = Zn - Z @ A.T - U @ B.T
    per = np.sum(E**2, axis=1)
    if not np.all(np.isfinite(per)):
        return math.inf
    return math.fsum(per.tolist()) / per.size


def spectral_radius(A) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("spectral_radius needs a square matrix")
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def controllability_matrix(A, B) -> np.ndarray:
    """C = [B, AB, ..., A^{N-1}B], shape (N, N*m)."""
    A = np.asarray(A, dtype=float); B = np.atleast_2d(np.asarray(B, dtype=float))
    N = A.shape[0]
    blocks, P = [], B.copy()
    for _ in range(N):
        blocks.append(P)
        P = A @ P
    return np.concatenate(blocks, axis=1)


def controllability_sigma_min(A, B) -> float:
    return float(np.linalg.svd(controllability_matrix(A, B), compute_uv=False)[-1])


def check_controllability(A, B, floor: float) -> float:
    """Return sigma_min(C), raising if it falls below the configured floor."""
    s = controllability_sigma_min(A, B)
    if s <= floor:
        raise NumericalError("controllability matrix sigma_min %.3e below floor %.3e" % (s, floor))
    return s


def controllability_loss(A, B, epsilon: float, lambda_cond: float) -> float:
    """-log(s_min + eps) + lambda * s_max / (s_min + eps) over singular values of C."""
    sv = np.linalg.svd(controllability_matrix(A, B), compute_uv=False)
    s_max, s_min = float(sv[0]), float(sv[-1])
    return -math.log(s_min + epsilon) + lambda_cond * s_max / (s_min + epsilon)


def _rho_gradient(A: np.ndarray) -> np.ndarray:
    """Gradient of |lambda_max| via the eigendecomposition A = V diag(l) V^-1.

    Using rows of V^-1 as left eigenvectors keeps the formula well defined for
    semisimple repeated eigenvalues; at a (near-)defective matrix the inverse
    fails and a zero subgradient is returned.
    """
    evals, V = np.linalg.eig(A)
    i = int(np.argmax(np.abs(evals)))
    lam = evals[i]
    mod = abs(lam)
    if mod == 0.0:
        return np.zeros_like(A)
    try:
        Vinv = np.linalg.inv(V)
    except np.linalg.LinAlgError:
        return np.zeros_like(A)
    G = np.real((np.conj(lam) / mod) * np.outer(Vinv[i, :], V[:, i]))
    return G


def _ctrl_gradient(A, B, epsilon, lambda_cond):
    """Gradients of the controllability loss w.r.t. A and B through the SVD of C."""
    N, m = A.shape[0], B.shape[1]
    C = controllability_matrix(A, B)
    Uu, sv, Vt = np.linalg.svd(C, full_matrices=False)
    s_max, s_min = sv[0], sv[-1]
    a_min = -1.0 / (s_min + epsilon) - lambda_cond * s_max / (s_min + epsilon) ** 2
    a_max = lambda_cond / (s_min + epsilon)
    P = a_min * np.outer(Uu[:, -1], Vt[-1]) + a_max * np.outer(Uu[:, 0], Vt[0])
    Apow = [np.linalg.matrix_power(A, j) for j in range(N)]
    gA = np.zeros_like(A); gB = np.zeros_like(B)
    for j in range(N):
        Pj = P[:, j * m : (j + 1) * m]
        gB += Apow[j].T @ Pj
        for i in range(j):
            gA += Apow[i].T @ Pj @ B.T @ Apow[j - 1 - i].T
    return gA, gB


def _capped(G: np.ndarray, cap: float = GRAD_CAP) -> np.ndarray:
    n = float(np.linalg.norm(G))
    return G * (cap / n) if n > cap else G


def regularized_loss(A, B, Z, U, Zn, config: IdentificationConfig) -> float:
    T = Z.shape[0]
    L = prediction_loss(A, B, Z, U, Zn)
    L += (config.ridge / T) * (float(np.sum(A**2)) + float(np.sum(B**2)))
    if config.w_rho > 0:
        L += config.w_rho * spectral_radius(A)
    if config.w_ctrl > 0:
        L += config.w_ctrl * controllability_loss(A, B, config.epsilon_ctrl, config.lambda_cond)
    return L


def regularized_gradient(A, B, Z, U, Zn, config: IdentificationConfig):
    T = Z.shape[0]
    E = Zn - Z @ A.T - U @ B.T
    gA = -(2.0 / T) * E.T @ Z + (2.0 * config.ridge / T) * A
    gB = -(2.0 / T) * E.T @ U + (2.0 * config.ridge / T) * B
    if config.w_rho > 0:
        gA = gA + config.w_rho * _capped(_rho_gradient(A))
    if config.w_ctrl > 0:
        gcA, gcB = _ctrl_gradient(A, B, config.epsilon_ctrl, config.lambda_cond)
        gA = gA + config.w_ctrl * _capped(gcA)
        gB = gB + config.w_ctrl * _capped(gcB)
    return gA, gB


def fit_regularized(dictionary: Dictionary, data: TransitionDataset,
                    config: IdentificationConfig):
    """Gradient-descent refinement of the EDMD initializer on the composite loss.

    Plain fixed-step descent; stops at max_iters or when the loss decrease
    falls below config.tol.  Returns the best iterate seen, so the reported
    final loss never exceeds the initial one.
    """
    A, B = fit_edmd(dictionary, data, config.ridge)
    Z, U, Zn = _lifted_arrays(dictionary, data)
    loss = regularized_loss(A, B, Z, U, Zn, config)
    best = (loss, A.copy(), B.copy())
    trace = [loss]
    stalled = 0
    for _ in range(config.max_iters):
        gA, gB = regularized_gradient(A, B, Z, U, Zn, config)
        A = A - config.step_size * gA
        B = B - config.step_size * gB
        new_loss = regularized_loss(A, B, Z, U, Zn, config)
        trace.append(new_loss)
        if not math.isfinite(new_loss):
            raise NumericalError("refinement diverged; last losses: %s"
                                 % ", ".join("%.3e" % v for v in trace[-6:]))
        if best[0] - new_loss >= config.tol:
            stalled = 0
        else:
            stalled += 1
        if new_loss < best[0]:
            best = (new_loss, A.copy(), B.copy())
        if stalled >= config.patience:
            break
    return best[1], best[2]


def residual(model: LiftedModel, x, u, x_next) -> np.ndarray:
    """Latent one-step residual d = g(x') - (A g(x) + B u)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    z = lift(model.dictionary, np.asarray(x, dtype=float))
    zn = lift(model.dictionary, np.asarray(x_next, dtype=float))
    return zn - (model.A @ z + model.B @ u)
