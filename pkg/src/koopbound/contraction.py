"""A-posteriori numerical check of the pulled-back contraction condition.

For a closed-loop map f_cl and metric W(x) = G(x)^T M G(x), where G is the
Jacobian of the lifting map, the check evaluates

    F^T W(f_cl(x)) F - gamma W(x),    F = d f_cl / d x  (central differences)

on sampled states and records the worst (largest) eigenvalue, together with
the smallest singular value of G seen (the full-column-rank hypothesis).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lifting import Dictionary, lift_jacobian


@dataclass(frozen=True)
class ContractionReport:
    samples: int
    excluded: int
    max_violation: float
    min_jacobian_sigma: float
    gamma: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance

    @property
    def rank_ok(self) -> bool:
        return self.min_jacobian_sigma > 1e-8

    def csv_row(self) -> str:
        return ",".join([str(self.samples), str(self.excluded),
                         repr(float(self.max_violation)),
                         repr(float(self.min_jacobian_sigma)),
                         repr(float(self.gamma)), repr(float(self.tolerance)),
                         str(self.passed).lower()])

    @staticmethod
    def csv_header() -> str:
        return "samples,excluded,max_violation,min_jacobian_sigma,gamma,tolerance,pass"


def metric_at(dictionary: Dictionary, M, x) -> np.ndarray:
    """W(x) = G(x)^T M G(x); positive definite iff G(x) has full column rank."""
    M = np.asarray(M, dtype=float)
    G = lift_jacobian(dictionary, np.asarray(x, dtype=float))
    W = G.T @ M @ G
    return 0.5 * (W + W.T)


def _fd_jacobian(f, x, step):
    x = np.asarray(x, dtype=float)
    n = x.size
    cols = []
    for j in range(n):
        e = np.zeros(n); e[j] = step
        hi = np.asarray(f(x + e), dtype=float)
        lo = np.asarray(f(x - e), dtype=float)
        cols.append((hi - lo) / (2.0 * step))
    return np.stack(cols, axis=1)


def verify_contraction(dictionary: Dictionary, M, gamma: float,
                       closed_loop_map, samples, jac_step: float = 1e-5,
                       tolerance: float = 1e-6) -> ContractionReport:
    """Evaluate the contraction residual on each sample state.

    Samples where the closed-loop map returns non-finite values are excluded
    and counted.  Deterministic for fixed samples and step.
    """
    M = np.asarray(M, dtype=float)
    worst = -np.inf
    min_sigma = np.inf
    excluded = 0
    total = 0
    for x in samples:
        total += 1
        x = np.asarray(x, dtype=float)
        fx = np.asarray(closed_loop_map(x), dtype=float)
        if not np.all(np.isfinite(fx)):
            excluded += 1
            continue
        F = _fd_jacobian(closed_loop_map, x, jac_step)
        if not np.all(np.isfinite(F)):
            excluded += 1
            continue
        G = lift_jacobian(dictionary, x)
        min_sigma = min(min_sigma, float(np.linalg.svd(G, compute_uv=False)[-1]))
        R = F.T @ metric_at(dictionary, M, fx) @ F - gamma * metric_at(dictionary, M, x)
        R = 0.5 * (R + R.T)
        worst = max(worst, float(np.max(np.linalg.eigvalsh(R))))
    if total == excluded:
        raise ValueError("no finite samples to verify")
    return ContractionReport(samples=total, excluded=excluded,
                             max_violation=worst, min_jacobian_sigma=min_sigma,
                             gamma=gamma, tolerance=tolerance)
