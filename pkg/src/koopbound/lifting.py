"""Observable dictionaries (state lifting), decoders, and round-trip errors.

A dictionary maps a state x in R^n to a latent vector z in R^N.  Three kinds
are supported:

* ``identity_augmented`` -- the raw state, optionally followed by a constant 1
  and a set of Gaussian radial basis features.  The raw state is always the
  prefix of the feature vector, so an exact left inverse exists (projection).
* ``radial_basis`` -- Gaussian features only.
* ``trained_encoder`` -- a single-hidden-layer tanh MLP trained by
  :func:`train_encoder_decoder`.

Decoders map latent vectors back to states: ``projection`` (first n
coordinates), ``linear`` (a fitted weight matrix), or ``trained_decoder``
(a small MLP trained jointly with the encoder).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalError

FD_STEP = 1e-5  # central-difference step for non-analytic Jacobians

IDENTITY_AUGMENTED = "identity_augmented"
RADIAL_BASIS = "radial_basis"
TRAINED_ENCODER = "trained_encoder"

PROJECTION = "projection"
LINEAR = "linear"
TRAINED_DECODER = "trained_decoder"


@dataclass(frozen=True)
class Dictionary:
    """Observable map z = g(x) with a flat parameter vector.

    For the RBF-bearing kinds ``parameters`` stores k centers (k*n values,
    row-major) followed by k strictly positive widths.  For the trained
    encoder it stores the MLP weights (W1, b1, W2, b2 flattened); the hidden
    width is recoverable from the length.
    """

    kind: str
    input_dim: int
    latent_dim: int
    parameters: np.ndarray
    include_constant: bool = True
    metadata: str = ""

    def __post_init__(self):
        object.__setattr__(self, "parameters", np.asarray(self.parameters, dtype=float))
        if not np.all(np.isfinite(self.parameters)):
            raise ValueError("dictionary parameters must be finite")
        if self.kind == IDENTITY_AUGMENTED and self.latent_dim < self.input_dim:
            raise ValueError("identity_augmented requires latent_dim >= input_dim")
        k = self.rbf_count
        if k and np.any(self.rbf_widths <= 0):
            raise ValueError("RBF widths must be strictly positive")

    @property
    def rbf_count(self) -> int:
        if self.kind == TRAINED_ENCODER:
            return 0
        if self.kind == IDENTITY_AUGMENTED:
            return self.latent_dim - self.input_dim - (1 if self.include_constant else 0)
        return self.latent_dim

    @property
    def rbf_centers(self) -> np.ndarray:
        k = self.rbf_count
        return self.parameters[: k * self.input_dim].reshape(k, self.input_dim)

    @property
    def rbf_widths(self) -> np.ndarray:
        k = self.rbf_count
        return self.parameters[k * self.input_dim : k * (self.input_dim + 1)]

    @property
    def hidden_width(self) -> int:
        n, N = self.input_dim, self.latent_dim
        return (self.parameters.size - N) // (n + 1 + N)


@dataclass(frozen=True)
class Decoder:
    """Inverse map back to state space; ``weights`` layout depends on kind."""

    kind: str
    latent_dim: int
    output_dim: int
    weights: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("decoder weights must be finite")

    @property
    def weight_matrix(self) -> np.ndarray:
        if self.kind == PROJECTION:
            w = np.zeros((self.output_dim, self.latent_dim))
            w[:, : self.output_dim] = np.eye(self.output_dim)
            return w
        if self.kind == LINEAR:
            return self.weights.reshape(self.output_dim, self.latent_dim)
        raise ValueError("no weight matrix for kind %r" % self.kind)

    @property
    def hidden_width(self) -> int:
        n, N = self.output_dim, self.latent_dim
        return (self.weights.size - n) // (N + 1 + n)


@dataclass(frozen=True)
class LiftedModel:
    """Dictionary + decoder + identified latent linear dynamics (A, B)."""

    dictionary: Dictionary
    decoder: Decoder
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        object.__setattr__(self, "B", np.atleast_2d(np.asarray(self.B, dtype=float)))
        N = self.dictionary.latent_dim
        if self.A.shape != (N, N):
            raise ValueError("A must be %dx%d, got %s" % (N, N, self.A.shape))
        if self.B.shape[0] != N:
            raise ValueError("B must have %d rows, got %s" % (N, self.B.shape))

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]


def identity_augmented(n: int, rbf_centers=None, rbf_widths=None,
                       include_constant: bool = True, metadata: str = "") -> Dictionary:
    """Raw state followed by an optional constant 1 and Gaussian RBF features."""
    centers = np.zeros((0, n)) if rbf_centers is None else np.atleast_2d(np.asarray(rbf_centers, dtype=float))
    k = centers.shape[0]
    widths = np.ones(k) if rbf_widths is None else np.asarray(rbf_widths, dtype=float) * np.ones(k)
    N = n + (1 if include_constant else 0) + k
    params = np.concatenate([centers.ravel(), widths])
    return Dictionary(IDENTITY_AUGMENTED, n, N, params, include_constant, metadata)


def radial_basis(n: int, centers, widths, metadata: str = "") -> Dictionary:
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    k = centers.shape[0]
    widths = np.asarray(widths, dtype=float) * np.ones(k)
    params = np.concatenate([centers.ravel(), widths])
    return Dictionary(RADIAL_BASIS, n, k, params, include_constant=False, metadata=metadata)


def projection_decoder(n: int, N: int) -> Decoder:
    return Decoder(PROJECTION, N, n)


def rbf_width_from_data(states: np.ndarray, max_samples: int = 200) -> float:
    """Median pairwise distance of (sub)sampled states; a scale-free width."""
    X = np.atleast_2d(np.asarray(states, dtype=float))
    if X.shape[0] > max_samples:
        idx = np.linspace(0, X.shape[0] - 1, max_samples).astype(int)
        X = X[idx]
    d2 = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    iu = np.triu_indices(X.shape[0], k=1)
    med = float(np.sqrt(np.median(d2[iu]))) if iu[0].size else 1.0
    return med if med > 0 else 1.0


def _rbf_values(dic: Dictionary, X: np.ndarray) -> np.ndarray:
    """Gaussian feature values for rows of X; shape (T, k)."""
    C, w = dic.rbf_centers, dic.rbf_widths
    if C.shape[0] == 0:
        return np.zeros((X.shape[0], 0))
    d2 = np.sum((X[:, None, :] - C[None, :, :]) ** 2, axis=-1)
    return np.exp(-d2 / (2.0 * w**2))


def _encoder_unpack(dic: Dictionary):
    n, N, h = dic.input_dim, dic.latent_dim, dic.hidden_width
    p = dic.parameters
    o = 0
    W1 = p[o : o + h * n].reshape(h, n); o += h * n
    b1 = p[o : o + h]; o += h
    W2 = p[o : o + N * h].reshape(N, h); o += N * h
    b2 = p[o : o + N]
    return W1, b1, W2, b2


def _mlp_forward(W1, b1, W2, b2, X):
    return np.tanh(X @ W1.T + b1) @ W2.T + b2


def lift_many(dic: Dictionary, X: np.ndarray) -> np.ndarray:
    """Lift a batch of states (rows of X) to latent vectors (rows)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != dic.input_dim:
        raise ValueError("expected states of dim %d, got %d" % (dic.input_dim, X.shape[1]))
    if not np.all(np.isfinite(X)):
        raise ValueError("states must be finite")
    if dic.kind == TRAINED_ENCODER:
        return _mlp_forward(*_encoder_unpack(dic), X)
    feats = _rbf_values(dic, X)
    if dic.kind == RADIAL_BASIS:
        return feats
    cols = [X]
    if dic.include_constant:
        cols.append(np.ones((X.shape[0], 1)))
    cols.append(feats)
    return np.concatenate(cols, axis=1)


def lift(dic: Dictionary, x: np.ndarray) -> np.ndarray:
    """Lift a single state x to its latent vector g(x)."""
    return lift_many(dic, np.asarray(x, dtype=float)[None, :])[0]


def lift_jacobian(dic: Dictionary, x: np.ndarray) -> np.ndarray:
    """Jacobian dg/dx at x, shape (N, n).

    Analytic for the fixed dictionaries; central finite differences
    (step ``FD_STEP``) for trained encoders.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (dic.input_dim,):
        raise ValueError("expected state of dim %d" % dic.input_dim)
    n = dic.input_dim
    if dic.kind == TRAINED_ENCODER:
        J = np.empty((dic.latent_dim, n))
        for j in range(n):
            e = np.zeros(n); e[j] = FD_STEP
            J[:, j] = (lift(dic, x + e) - lift(dic, x - e)) / (2 * FD_STEP)
        return J
    C, w = dic.rbf_centers, dic.rbf_widths
    vals = _rbf_values(dic, x[None, :])[0]
    rbf_rows = vals[:, None] * (C - x[None, :]) / (w**2)[:, None]
    if dic.kind == RADIAL_BASIS:
        return rbf_rows
    rows = [np.eye(n)]
    if dic.include_constant:
        rows.append(np.zeros((1, n)))
    rows.append(rbf_rows)
    return np.concatenate(rows, axis=0)


def decode_many(dec: Decoder, Z: np.ndarray) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != dec.latent_dim:
        raise ValueError("expected latent dim %d, got %d" % (dec.latent_dim, Z.shape[1]))
    if dec.kind == PROJECTION:
        return Z[:, : dec.output_dim]
    if dec.kind == LINEAR:
        return Z @ dec.weight_matrix.T
    n, N, h = dec.output_dim, dec.latent_dim, dec.hidden_width
    p = dec.weights
    o = 0
    W1 = p[o : o + h * N].reshape(h, N); o += h * N
    b1 = p[o : o + h]; o += h
    W2 = p[o : o + n * h].reshape(n, h); o += n * h
    b2 = p[o : o + n]
    return _mlp_forward(W1, b1, W2, b2, Z)


def decode(dec: Decoder, z: np.ndarray) -> np.ndarray:
    """Map a latent vector back to state space."""
    return decode_many(dec, np.asarray(z, dtype=float)[None, :])[0]


def round_trip_residual(dic: Dictionary, dec: Decoder, x: np.ndarray) -> float:
    """Euclidean norm of x - decode(lift(x)); zero iff the pair inverts exactly."""
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(x - decode(dec, lift(dic, x))))


def fit_linear_decoder(dic: Dictionary, states, ridge: float = 0.0) -> Decoder:
    """Least-squares linear decoder minimizing sum ||x - W g(x)||^2 + ridge ||W||^2."""
    X = np.atleast_2d(np.asarray(states, dtype=float))
    Z = lift_many(dic, X)
    gram = Z.T @ Z + ridge * np.eye(dic.latent_dim)
    if ridge == 0.0:
        # detect rank deficiency before solving
        if np.linalg.matrix_rank(gram) < dic.latent_dim:
            raise NumericalError("rank-deficient features with zero ridge; "
                                 "pass ridge > 0 or add samples")
    try:
        W = np.linalg.solve(gram, Z.T @ X).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError("decoder normal equations singular: %s" % exc) from exc
    return Decoder(LINEAR, dic.latent_dim, dic.input_dim, W.ravel())


def _decoder_unpack(weights, N, h, n):
    o = 0
    W1 = weights[o : o + h * N].reshape(h, N); o += h * N
    b1 = weights[o : o + h]; o += h
    W2 = weights[o : o + n * h].reshape(n, h); o += n * h
    b2 = weights[o : o + n]
    return W1, b1, W2, b2


def train_encoder_decoder(X, U, X_next, latent_dim: int, hidden: int = 16,
                          iters: int = 300, lr: float = 1e-2,
                          alpha: float = 0.1, beta: float = 0.1,
                          ridge: float = 1e-6, seed: int = 0):
    """Train a small tanh encoder/decoder pair by full-batch gradient descent.

    The objective is a one-step latent prediction error under a per-batch
    least-squares (A, B), plus ``alpha`` times the reconstruction error.  The
    controllability penalty (weight ``beta``) of the per-batch (A, B) is
    evaluated into the returned trace but treated as constant when
    differentiating, since (A, B) is re-solved each iteration.

    Returns (Dictionary, Decoder, loss_trace).
    """
    from .sysid import controllability_loss  # local import to avoid a cycle

    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xn = np.atleast_2d(np.asarray(X_next, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if U.shape[0] != X.shape[0]:
        U = U.T
    T, n = X.shape
    N, h = latent_dim, hidden
    rng = np.random.default_rng(seed)
    s_e = 1.0 / np.sqrt(n)
    s_d = 1.0 / np.sqrt(N)
    W1 = rng.normal(0, s_e, (h, n)); b1 = np.zeros(h)
    W2 = rng.normal(0, 1.0 / np.sqrt(h), (N, h)); b2 = np.zeros(N)
    V1 = rng.normal(0, s_d, (h, N)); c1 = np.zeros(h)
    V2 = rng.normal(0, 1.0 / np.sqrt(h), (n, h)); c2 = np.zeros(n)

    trace = []
    for _ in range(iters):
        H = np.tanh(X @ W1.T + b1)
        Z = H @ W2.T + b2
        Hn = np.tanh(Xn @ W1.T + b1)
        Zn = Hn @ W2.T + b2
        # per-batch least-squares (A, B) on the current embedding
        G = np.concatenate([Z, U], axis=1)
        gram = G.T @ G + ridge * np.eye(N + U.shape[1])
        AB = np.linalg.solve(gram, G.T @ Zn).T
        A, B = AB[:, :N], AB[:, N:]
        E = Zn - Z @ A.T - U @ B.T
        l_rss = float(np.mean(np.sum(E**2, axis=1)))
        # reconstruction
        Hd = np.tanh(Z @ V1.T + c1)
        Xr = Hd @ V2.T + c2
        R = X - Xr
        l_rec = float(np.mean(np.sum(R**2, axis=1)))
        l_ctrl = controllability_loss(A, B, 1e-6, 1.0)
        trace.append(l_rss + alpha * l_rec + beta * l_ctrl)

        # gradients with (A, B) frozen
        dZn = (2.0 / T) * E
        dZ_rss = -(2.0 / T) * E @ A
        dXr = -(2.0 * alpha / T) * R
        dHd = dXr @ V2
        dPre_d = dHd * (1 - Hd**2)
        gV2 = dXr.T @ Hd; gc2 = dXr.sum(axis=0)
        gV1 = dPre_d.T @ Z; gc1 = dPre_d.sum(axis=0)
        dZ = dZ_rss + dPre_d @ V1
        # encoder backprop: Z from X, Zn from Xn
        dH = dZ @ W2
        dPre = dH * (1 - H**2)
        dHn = dZn @ W2
        dPre_n = dHn * (1 - Hn**2)
        gW2 = dZ.T @ H + dZn.T @ Hn
        gb2 = dZ.sum(axis=0) + dZn.sum(axis=0)
        gW1 = dPre.T @ X + dPre_n.T @ Xn
        gb1 = dPre.sum(axis=0) + dPre_n.sum(axis=0)

        W1 -= lr * gW1; b1 -= lr * gb1
        W2 -= lr * gW2; b2 -= lr * gb2
        V1 -= lr * gV1; c1 -= lr * gc1
        V2 -= lr * gV2; c2 -= lr * gc2

    enc_params = np.concatenate([W1.ravel(), b1, W2.ravel(), b2])
    dec_params = np.concatenate([V1.ravel(), c1, V2.ravel(), c2])
    dic = Dictionary(TRAINED_ENCODER, n, N, enc_params, include_constant=False,
                     metadata="tanh mlp h=%d" % h)
    dec = Decoder(TRAINED_DECODER, N, n, dec_params)
    return dic, dec, trace


def with_decoder(dic: Dictionary, dec: Decoder, A, B) -> LiftedModel:
    return LiftedModel(dic, dec, A, B)


def replace_dynamics(model: LiftedModel, A, B) -> LiftedModel:
    return replace(model, A=np.asarray(A, dtype=float), B=np.atleast_2d(np.asarray(B, dtype=float)))
