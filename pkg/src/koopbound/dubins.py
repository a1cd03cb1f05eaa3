"""Dubins-car ground truth, exploration data collection, circular reference
construction, and closed-loop rollouts with actuator saturation.

The observation fed to the lifting map is (x, y, sin theta, cos theta).  The
default input is the turn rate omega alone (constant speed, a = 0); an
"accel-omega" mode with u = (a, omega) is available.  The turn-rate command
is clamped to [-pi, pi] after the controller, for both controller kinds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conformal import (BoundInputs, delta_r, forward_score_nfc, state_bound,
                        trajectory_bound)
from .controller import ControllerSpec, crdr_step, nfc_input
from .lifting import LiftedModel, lift
from .sysid import TransitionDataset, residual

OMEGA_LIMIT = math.pi

NFC = "nfc"
CRDR = "crdr"

ABSENT = ""  # CSV sentinel for values a controller kind does not produce


@dataclass(frozen=True)
class DubinsState:
    x: float
    y: float
    theta: float
    v: float

    def __post_init__(self):
        if not all(map(math.isfinite, (self.x, self.y, self.theta, self.v))):
            raise ValueError("state components must be finite")

    @property
    def heading_wrapped(self) -> float:
        """Heading wrapped to (-pi, pi]."""
        th = math.remainder(self.theta, 2.0 * math.pi)
        return math.pi if th == -math.pi else th


def observe(s: DubinsState) -> np.ndarray:
    """Observation (x, y, sin theta, cos theta)."""
    return np.array([s.x, s.y, math.sin(s.theta), math.cos(s.theta)])


def dubins_step(s: DubinsState, a: float, omega: float, dt: float) -> DubinsState:
    """One Euler step of the car dynamics."""
    return DubinsState(
        x=s.x + s.v * dt * math.cos(s.theta),
        y=s.y + s.v * dt * math.sin(s.theta),
        theta=s.theta + omega * dt,
        v=s.v + a * dt,
    )


def saturate_omega(omega: float) -> float:
    """Clamp the turn-rate command to [-pi, pi]."""
    return min(max(omega, -OMEGA_LIMIT), OMEGA_LIMIT)


def collect_episodes(n_episodes: int, steps_per_episode: int, dt: float, seed: int,
                     speed: float = 1.0, position_halfwidth: float = 1.0,
                     heading_halfwidth: float = math.pi,
                     resample_interval: int = 10,
                     input_mode: str = "omega") -> TransitionDataset:
    """Exploration episodes: random initial pose, constant speed, random
    steering held for ``resample_interval`` steps.

    Observation-space transitions are recorded.  Fully determined by the seed.
    """
    if n_episodes < 1 or steps_per_episode < 1:
        raise ValueError("episode counts must be positive")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5E5]))
    E, T = n_episodes, steps_per_episode
    x = rng.uniform(-position_halfwidth, position_halfwidth, E)
    y = rng.uniform(-position_halfwidth, position_halfwidth, E)
    th = (rng.uniform(-heading_halfwidth, heading_halfwidth, E)
          if heading_halfwidth > 0 else np.zeros(E))
    v = np.full(E, speed)
    m = 2 if input_mode == "accel-omega" else 1
    states = np.empty((E * T, 4)); nexts = np.empty((E * T, 4))
    inputs = np.empty((E * T, m))
    omega = np.zeros(E); accel = np.zeros(E)
    for k in range(T):
        if k % resample_interval == 0:
            omega = rng.uniform(-math.pi, math.pi, E)
            if m == 2:
                accel = rng.uniform(-0.5, 0.5, E)
        sl = slice(k * E, (k + 1) * E)
        states[sl] = np.stack([x, y, np.sin(th), np.cos(th)], axis=1)
        x = x + v * dt * np.cos(th)
        y = y + v * dt * np.sin(th)
        th = th + omega * dt
        if m == 2:
            v = v + accel * dt
            inputs[sl] = np.stack([accel, omega], axis=1)
        else:
            inputs[sl] = omega[:, None]
        nexts[sl] = np.stack([x, y, np.sin(th), np.cos(th)], axis=1)
    # reorder to episode-major so per-episode records chain consecutively
    order = np.argsort(np.tile(np.arange(E), T), kind="stable")
    ep_ids = np.tile(np.arange(E), T)[order]
    k_ids = np.repeat(np.arange(T), E)[order]
    return TransitionDataset(states[order], inputs[order], nexts[order],
                             ep_ids, k_ids, source_seed=int(seed))


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Reference observations and inputs; index 0..T inclusive."""

    observations: np.ndarray  # (T+1, 4)
    inputs: np.ndarray        # (T+1, m)
    dt: float
    radius: float = math.nan
    speed: float = math.nan

    @property
    def steps(self) -> int:
        return self.observations.shape[0] - 1


def circle_reference(r: float, v_d: float, dt: float, n_steps: int) -> ReferenceTrajectory:
    """Circle of radius r centered at (0, r), traversed at speed v_d from the origin.

    Headings are tangent; the turn-rate input comes from a central finite
    difference of the heading (one-sided at the endpoints), clipped to
    [-pi, pi].
    """
    if r <= 0 or v_d <= 0:
        raise ValueError("radius and speed must be positive")
    if n_steps < 3:
        raise ValueError("need at least 3 steps for the central difference")
    t = np.arange(n_steps + 1) * dt
    phi = v_d * t / r
    obs = np.stack([r * np.sin(phi), r * (1.0 - np.cos(phi)),
                    np.sin(phi), np.cos(phi)], axis=1)
    omega = np.empty(n_steps + 1)
    omega[1:-1] = (phi[2:] - phi[:-2]) / (2.0 * dt)
    omega[0] = (phi[1] - phi[0]) / dt
    omega[-1] = (phi[-1] - phi[-2]) / dt
    omega = np.clip(omega, -math.pi, math.pi)
    return ReferenceTrajectory(obs, omega[:, None], dt, radius=r, speed=v_d)


class DubinsPlant:
    """True car dynamics behind the rollout's plant interface."""

    def __init__(self, dt: float, input_mode: str = "omega"):
        self.dt = dt
        self.input_mode = input_mode

    def step(self, s: DubinsState, u: np.ndarray) -> DubinsState:
        if self.input_mode == "accel-omega":
            a, omega = float(u[0]), float(u[1])
        else:
            a, omega = 0.0, float(u[0])
        return dubins_step(s, a, omega, self.dt)

    def observe(self, s: DubinsState) -> np.ndarray:
        return observe(s)

    def log_state(self, s: DubinsState):
        return (s.x, s.y, s.heading_wrapped, s.v)

    def saturate(self, u: np.ndarray) -> np.ndarray:
        u = np.array(u, dtype=float)
        u[-1] = saturate_omega(u[-1])
        return u


class LinearPlant:
    """x' = A0 x + B0 u with identity observation; used for exactness tests."""

    def __init__(self, A0, B0):
        self.A0 = np.asarray(A0, dtype=float)
        self.B0 = np.atleast_2d(np.asarray(B0, dtype=float))

    def step(self, s, u):
        return self.A0 @ np.asarray(s, dtype=float) + self.B0 @ np.atleast_1d(u)

    def observe(self, s):
        return np.asarray(s, dtype=float)

    def log_state(self, s):
        s = np.asarray(s, dtype=float)
        vals = list(s[:4]) + [0.0] * max(0, 4 - s.size)
        return tuple(vals[:4])

    def saturate(self, u):
        return np.array(u, dtype=float)


@dataclass
class TrajectoryLog:
    """Time-indexed rollout record with live bound evaluations."""

    controller: str
    seed: int
    preset: str
    steps: np.ndarray        # k = 0..T-1
    log_states: np.ndarray   # (T, 4): x, y, theta (wrapped), v
    observations: np.ndarray
    latents: np.ndarray
    errors: np.ndarray       # latent errors e_k
    inputs: np.ndarray       # applied (saturated) inputs
    slacks: np.ndarray       # dv_k (nan for nfc)
    deltas_d: np.ndarray     # forward residual-difference scores per step
    e_norms: np.ndarray
    pos_errs: np.ndarray
    eps_bound: np.ndarray    # Theorem-style latent profile (nan if no quantiles)
    traj_bound: np.ndarray   # slack-history latent bound (nan for nfc)
    state_bound: np.ndarray
    v0: float
    saturated_steps: int
    aborted: bool = False
    metadata: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.steps.size

    def write_csv(self, path) -> None:
        m = self.inputs.shape[1]
        ucols = ["u"] if m == 1 else ["u%d" % i for i in range(m)]
        header = (["k", "x", "y", "theta", "v"] + ucols
                  + ["delta_v", "e_norm", "pos_err", "eps_k", "traj_bound", "state_bound"])
        meta = dict(self.metadata)
        meta.update({"controller": self.controller, "seed": self.seed,
                     "preset": self.preset, "v0": repr(float(self.v0)),
                     "saturated_steps": self.saturated_steps,
                     "aborted": str(self.aborted).lower()})
        lines = ["# %s=%s" % (k, meta[k]) for k in sorted(meta)]
        lines.append(",".join(header))

        def cell(v):
            return ABSENT if (isinstance(v, float) and math.isnan(v)) else repr(float(v))

        for i in range(self.T):
            row = [str(int(self.steps[i]))]
            row += [repr(float(c)) for c in self.log_states[i]]
            row += [repr(float(c)) for c in self.inputs[i]]
            row += [cell(float(self.slacks[i]))]
            row += [repr(float(self.e_norms[i])), repr(float(self.pos_errs[i]))]
            row += [cell(float(self.eps_bound[i])), cell(float(self.traj_bound[i])),
                    cell(float(self.state_bound[i]))]
            lines.append(",".join(row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def read_log_csv(path):
    """Read back the columns of a rollout CSV as a dict of arrays + metadata."""
    meta = {}
    rows = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("# "):
                k, _, v = line[2:].partition("=")
                meta[k] = v
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append([math.nan if c == ABSENT else float(c) for c in line.split(",")])
    data = {h: np.array([r[i] for r in rows]) for i, h in enumerate(header)}
    return data, meta


def _live_bounds(kind, bi: BoundInputs, spec: ControllerSpec, v0: float, k: int,
                 slack_sum: float):
    """(eps_k, traj_k, state_k) for step k given the running slack sum."""
    if bi is None:
        return math.nan, math.nan, math.nan
    sm = math.sqrt(spec.m_under)
    if kind == CRDR:
        dr = delta_r("crdr", bi.q_fwd_crdr, spec.gamma, spec.rho, spec.m_bar, spec.m_under)
    else:
        dr = delta_r("nfc", bi.q_fwd_nfc, spec.gamma, spec.rho, spec.m_bar, spec.m_under)
    # an infinite quantile makes every bound honestly vacuous
    eps_k = math.inf if math.isinf(dr) else spec.gamma**k * (v0 / sm - dr) + dr
    if kind == CRDR:
        if math.isinf(bi.q_fwd_nfc):
            traj_k = math.inf
        else:
            gK = spec.gamma**k
            drive = (1.0 - gK) / (1.0 - spec.gamma) * (-spec.rho + math.sqrt(spec.m_bar) * bi.q_fwd_nfc)
            traj_k = (gK * v0 + drive + slack_sum) / sm
        st = state_bound(bi.q_rt, bi.lipschitz, max(traj_k, 0.0)) if math.isfinite(traj_k) else math.inf
    else:
        traj_k = math.nan
        st = state_bound(bi.q_rt, bi.lipschitz, max(eps_k, 0.0)) if math.isfinite(eps_k) else math.inf
    return eps_k, traj_k, st


def rollout(model: LiftedModel, spec: ControllerSpec, ref: ReferenceTrajectory,
            controller_kind: str, s0, bound_inputs: BoundInputs = None,
            seed: int = 0, preset: str = "", plant=None) -> TrajectoryLog:
    """Closed loop on the true plant for ref.steps steps.

    At each step: lift the observation, form e_k against the lifted reference,
    compute the input (nominal feedback or the robustified program), saturate,
    apply to the plant, and log states, inputs, slacks, errors, and live bound
    values.  A non-finite plant state aborts the rollout and returns the
    partial log flagged aborted.
    """
    if controller_kind not in (NFC, CRDR):
        raise ValueError("controller_kind must be 'nfc' or 'crdr'")
    if plant is None:
        plant = DubinsPlant(ref.dt)
    T = ref.steps
    zd = np.stack([lift(model.dictionary, o) for o in ref.observations])
    s = s0
    recs = {k: [] for k in ("log_states", "observations", "latents", "errors",
                            "inputs", "slacks", "deltas_d", "e_norms", "pos_errs",
                            "eps", "traj", "state")}
    v0 = math.nan
    slack_sum = 0.0
    saturated = 0
    aborted = False
    for k in range(T):
        obs = plant.observe(s)
        if not np.all(np.isfinite(obs)):
            aborted = True
            break
        z = lift(model.dictionary, obs)
        e = z - zd[k]
        if k == 0:
            v0 = spec.lyapunov_value(e)
        u_d = ref.inputs[k]
        if controller_kind == NFC:
            u_cmd = nfc_input(spec, u_d, e)
            dv = math.nan
        else:
            sol = crdr_step(spec, model.A, model.B, e, u_d)
            u_cmd = sol.u
            dv = sol.delta_v
        u_applied = plant.saturate(u_cmd)
        if float(np.max(np.abs(u_applied - np.atleast_1d(u_cmd)))) > 0.0:
            saturated += 1
        eps_k, traj_k, st_k = _live_bounds(controller_kind, bound_inputs, spec,
                                           v0, k, slack_sum)
        s_next = plant.step(s, u_applied)
        obs_next = plant.observe(s_next)
        if np.all(np.isfinite(obs_next)):
            dd = forward_score_nfc(model, obs, obs_next, u_applied,
                                   ref.observations[k], ref.observations[k + 1],
                                   ref.inputs[k])
        else:
            dd = math.nan
        recs["log_states"].append(plant.log_state(s))
        recs["observations"].append(obs)
        recs["latents"].append(z)
        recs["errors"].append(e)
        recs["inputs"].append(np.atleast_1d(u_applied))
        recs["slacks"].append(dv)
        recs["deltas_d"].append(dd)
        recs["e_norms"].append(float(np.linalg.norm(e)))
        recs["pos_errs"].append(float(np.linalg.norm(obs[:2] - ref.observations[k][:2])))
        recs["eps"].append(eps_k)
        recs["traj"].append(traj_k)
        recs["state"].append(st_k)
        if controller_kind == CRDR:
            slack_sum = spec.gamma * slack_sum + dv
        s = s_next
        if not np.all(np.isfinite(plant.observe(s))):
            aborted = True
            break
    n = len(recs["e_norms"])

    def stack2d(key, width):
        if n == 0:
            return np.zeros((0, width))
        return np.array(recs[key]).reshape(n, -1)

    n_obs = ref.observations.shape[1]
    return TrajectoryLog(
        controller=controller_kind, seed=seed, preset=preset,
        steps=np.arange(n),
        log_states=stack2d("log_states", 4),
        observations=stack2d("observations", n_obs),
        latents=stack2d("latents", zd.shape[1]),
        errors=stack2d("errors", zd.shape[1]),
        inputs=stack2d("inputs", ref.inputs.shape[1]),
        slacks=np.array(recs["slacks"], dtype=float),
        deltas_d=np.array(recs["deltas_d"], dtype=float),
        e_norms=np.array(recs["e_norms"], dtype=float),
        pos_errs=np.array(recs["pos_errs"], dtype=float),
        eps_bound=np.array(recs["eps"], dtype=float),
        traj_bound=np.array(recs["traj"], dtype=float),
        state_bound=np.array(recs["state"], dtype=float),
        v0=v0, saturated_steps=saturated, aborted=aborted)
