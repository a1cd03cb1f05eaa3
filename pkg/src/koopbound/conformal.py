"""Split-conformal calibration of the nonconformity scores and evaluation of
the probabilistic tracking-error bounds.

Score kinds:

* ``fwd_nfc``  -- norm of the difference between the one-step latent residual
  of an observed transition and that of the reference transition.
* ``fwd_crdr`` -- sqrt(m_bar) * Delta_d + Delta_v, combining the residual
  magnitude with the per-step slack of the robustified controller.
* ``round_trip`` -- ||x - decode(lift(x))||.

The conformal quantile of m calibration scores at miscoverage delta is the
k-th order statistic with k = ceil((m+1)(1-delta)); k > m yields +inf
(honestly vacuous).  Over a K-step horizon the per-step miscoverage is
delta = alpha / K (union bound).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lifting import Decoder, LiftedModel, decode_many, lift
from .sysid import residual

FORWARD_NFC = "fwd_nfc"
FORWARD_CRDR = "fwd_crdr"
ROUND_TRIP = "round_trip"
SCORE_KINDS = (FORWARD_NFC, FORWARD_CRDR, ROUND_TRIP)

# guard against ties like (m+1)*(1-delta) evaluating one ulp above an integer
_CEIL_GUARD = 1e-9


def quantile_index(m: int, delta: float) -> int:
    """k = ceil((m+1)(1-delta)), 1-based."""
    if m < 1:
        raise ValueError("need at least one calibration score")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    return math.ceil((m + 1) * (1.0 - delta) - _CEIL_GUARD)


@dataclass(frozen=True)
class CalibrationResult:
    """Sorted scores with the conformal quantile at miscoverage delta."""

    scores_sorted: np.ndarray
    delta: float
    k_index: int
    quantile: float
    score_kind: str = FORWARD_NFC

    @property
    def m(self) -> int:
        return int(self.scores_sorted.size)

    def csv_row(self) -> str:
        return ",".join([self.score_kind, repr(float(self.delta)), str(self.m),
                         str(self.k_index), repr(float(self.quantile))])

    @staticmethod
    def csv_header() -> str:
        return "kind,delta,m,k_index,q"


def conformal_quantile(scores, delta: float, score_kind: str = FORWARD_NFC) -> CalibrationResult:
    """Sort ascending and take the ceil((m+1)(1-delta))-th score, or +inf."""
    arr = np.asarray(list(scores), dtype=float)
    if arr.size == 0:
        raise ValueError("empty score list")
    if not np.all(np.isfinite(arr)):
        raise ValueError("scores must be finite")
    arr = np.sort(arr, kind="stable")
    k = quantile_index(arr.size, delta)
    q = float(arr[k - 1]) if k <= arr.size else math.inf
    return CalibrationResult(arr, float(delta), k, q, score_kind)


def forward_score_nfc(model: LiftedModel, x_k, x_next, u_k,
                      x_d_k, x_d_next, u_d_k) -> float:
    """|| residual(actual transition) - residual(reference transition) ||."""
    d = residual(model, x_k, u_k, x_next)
    d_ref = residual(model, x_d_k, u_d_k, x_d_next)
    return float(np.linalg.norm(d - d_ref))


def forward_score_crdr(delta_d: float, delta_v: float, m_bar: float) -> float:
    """sqrt(m_bar) * delta_d + delta_v."""
    if m_bar <= 0:
        raise ValueError("m_bar must be positive")
    if delta_d < 0 or delta_v < 0:
        raise ValueError("score components must be nonnegative")
    return math.sqrt(m_bar) * delta_d + delta_v


def union_bound_delta(alpha: float, K: int) -> float:
    """Per-step miscoverage delta = alpha / K for a K-step horizon."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    delta = alpha / K
    if not (0.0 < delta < 1.0):
        raise ValueError("alpha/K must lie in (0, 1)")
    return delta


def delta_r(kind: str, q: float, gamma: float, rho: float,
            m_bar: float, m_under: float) -> float:
    """Asymptotic latent error radius.

    ``nfc``:  sqrt(m_bar) q / ((1-gamma) sqrt(m_under))
    ``crdr``: (q - rho) / ((1-gamma) sqrt(m_under)); may be negative when
    rho exceeds q, signalling an over-robust margin.
    """
    if not (0.0 < gamma < 1.0):
        raise ValueError("gamma must lie in (0, 1)")
    if m_under <= 0:
        raise ValueError("m_under must be positive")
    denom = (1.0 - gamma) * math.sqrt(m_under)
    if kind == "nfc":
        return math.sqrt(m_bar) * q / denom
    if kind == "crdr":
        return (q - rho) / denom
    raise ValueError("kind must be 'nfc' or 'crdr'")


def latent_bound_profile(v0: float, gamma: float, K: int, dr: float,
                         m_under: float) -> np.ndarray:
    """eps_j = gamma^j (v0/ sqrt(m_under) - dr) + dr for j = 0..K."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    if m_under <= 0:
        raise ValueError("m_under must be positive")
    c = v0 / math.sqrt(m_under) - dr
    out = np.empty(K + 1)
    g = 1.0
    for j in range(K + 1):
        out[j] = g * c + dr
        g *= gamma
    return out


def trajectory_bound(v0: float, gamma: float, rho: float, m_bar: float,
                     m_under: float, q: float, delta_v_history) -> float:
    """Trajectory-dependent bound on ||e_K|| from the logged slack history.

    (1/sqrt(m_under)) ( gamma^K v0 + (1-gamma^K)/(1-gamma) (-rho + sqrt(m_bar) q)
                        + sum_k gamma^{K-1-k} dv_k ),
    with exact (fsum) accumulation of the geometric-weighted slack sum.
    """
    dv = np.asarray(list(delta_v_history), dtype=float)
    K = dv.size
    if K < 1:
        raise ValueError("need at least one slack entry")
    if m_under <= 0:
        raise ValueError("m_under must be positive")
    gK = gamma ** K
    drive = (1.0 - gK) / (1.0 - gamma) * (-rho + math.sqrt(m_bar) * q)
    weighted = [gamma ** (K - 1 - k) * dv[k] for k in range(K)]
    total = gK * v0 + drive + math.fsum(weighted)
    return total / math.sqrt(m_under)


def state_bound(q_rt: float, L: float, epsilon_K: float) -> float:
    """2 q_rt + L eps_K, the state-space counterpart of a latent bound."""
    if q_rt < 0 or L < 0 or epsilon_K < 0:
        raise ValueError("state bound arguments must be nonnegative")
    return 2.0 * q_rt + L * epsilon_K


@dataclass(frozen=True)
class LipschitzEstimate:
    value: float
    exact: bool


def estimate_lipschitz(dec: Decoder, samples=None, safety: float = 1.0) -> LipschitzEstimate:
    """Decoder Lipschitz constant.

    Linear decoders (projection included) get the exact operator 2-norm of the
    weight matrix; the safety factor is ignored and the estimate flagged
    exact.  Trained decoders get safety * the largest difference quotient over
    the supplied latent sample pairs, flagged as a heuristic lower-bound-based
    estimate.
    """
    if safety < 1.0:
        raise ValueError("safety factor must be >= 1")
    if dec.kind in ("projection", "linear"):
        return LipschitzEstimate(float(np.linalg.norm(dec.weight_matrix, 2)), True)
    if samples is None or len(samples) < 2:
        raise ValueError("trained decoders need at least two latent sample pairs")
    best = 0.0
    used = 0
    for z1, z2 in samples:
        z1 = np.asarray(z1, dtype=float); z2 = np.asarray(z2, dtype=float)
        dz = float(np.linalg.norm(z1 - z2))
        if dz == 0.0:
            continue
        used += 1
        out = decode_many(dec, np.stack([z1, z2]))
        best = max(best, float(np.linalg.norm(out[0] - out[1])) / dz)
    if used == 0:
        raise ValueError("all sample pairs coincide")
    return LipschitzEstimate(safety * best, False)


def empirical_coverage(q: float, test_scores) -> float:
    """Fraction of test scores <= q."""
    arr = np.asarray(list(test_scores), dtype=float)
    if arr.size == 0:
        raise ValueError("empty test score list")
    return float(np.mean(arr <= q))


def round_trip_scores(model: LiftedModel, states) -> np.ndarray:
    X = np.atleast_2d(np.asarray(states, dtype=float))
    Z = np.stack([lift(model.dictionary, x) for x in X])
    rec = decode_many(model.decoder, Z)
    return np.linalg.norm(X - rec, axis=1)


@dataclass(frozen=True)
class BoundInputs:
    """Calibrated quantities a rollout needs to evaluate its live bounds."""

    q_fwd_nfc: float
    q_fwd_crdr: float
    q_rt: float
    lipschitz: float
    alpha: float
    beta: float
    delta: float


@dataclass(frozen=True)
class BoundProfile:
    """Per-step bound values over a K-step horizon."""

    horizon: int
    alpha: float
    beta: float
    dr: float
    epsilon: np.ndarray
    lipschitz: float
    v0: float
    q_rt: float = 0.0
    state: np.ndarray = field(default_factory=lambda: np.empty(0))

    @classmethod
    def build(cls, v0: float, gamma: float, K: int, dr: float, m_under: float,
              alpha: float, beta: float, q_rt: float, lipschitz: float) -> "BoundProfile":
        eps = latent_bound_profile(v0, gamma, K, dr, m_under)
        st = np.array([state_bound(q_rt, lipschitz, max(e, 0.0)) for e in eps])
        return cls(K, alpha, beta, dr, eps, lipschitz, v0, q_rt, st)

    def write_csv(self, path) -> None:
        lines = ["k,epsilon,state_bound"]
        for k in range(self.epsilon.size):
            sb = self.state[k] if self.state.size else math.nan
            lines.append("%d,%s,%s" % (k, repr(float(self.epsilon[k])), repr(float(sb))))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
