"""Pipeline stages: collect -> fit -> synth -> calibrate -> run -> validate -> report.

Each stage consumes only files written by earlier stages into the same output
directory, so stages are individually re-runnable.  All randomness derives
from the root seed through counter-based seed sequences keyed by (stage,
unit), which makes every command idempotent: identical config and seed give
byte-identical outputs.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import conformal as cp
from . import dubins, lifting, modelio, sysid
from .config import ExperimentConfig
from .contraction import verify_contraction
from .controller import synthesize_metric
from .errors import ConfigError, NumericalError

STAGE_COLLECT = 1
STAGE_FIT = 2
STAGE_CALIBRATE = 4
STAGE_RUN = 5

TRAIN_CSV = "dataset_train.csv"
ID_CSV = "dataset_id.csv"
MODEL_FILE = "model.txt"
CONTROLLER_FILE = "controller.txt"
CALIBRATION_CSV = "calibration.csv"
CALIBRATION_META = "calibration_meta.txt"
CALIBRATION_STATES = "calibration_states.csv"
RUNS_DIR = "runs"
INDEX_CSV = "index.csv"
SUMMARY_JSON = "validation_summary.json"
CONTRACTION_CSV = "contraction_report.csv"
REPORT_MD = "report.md"


def _rng(root_seed: int, stage: int, unit: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(root_seed), stage, unit]))


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


# ---------------------------------------------------------------- collect

def cmd_collect(cfg: ExperimentConfig, out_dir) -> dict:
    """Write the representation-learning and identification transition CSVs."""
    _ensure_dir(out_dir)
    d = cfg.data
    common = dict(steps_per_episode=d.steps, dt=d.dt, speed=d.speed,
                  position_halfwidth=d.position_halfwidth,
                  heading_halfwidth=d.heading_halfwidth,
                  resample_interval=d.resample_interval, input_mode=d.input_mode)
    train_seed = int(_rng(d.seed, STAGE_COLLECT, 0).integers(0, 2**31 - 1))
    id_seed = int(_rng(d.seed, STAGE_COLLECT, 1).integers(0, 2**31 - 1))
    train = dubins.collect_episodes(d.train_episodes, seed=train_seed, **common)
    ident = dubins.collect_episodes(d.id_episodes, seed=id_seed, **common)
    train_path = os.path.join(out_dir, TRAIN_CSV)
    id_path = os.path.join(out_dir, ID_CSV)
    train.write_csv(train_path)
    ident.write_csv(id_path)
    with open(os.path.join(out_dir, "collect_meta.txt"), "w") as fh:
        fh.write("root_seed = %d\ntrain_seed = %d\nid_seed = %d\n"
                 "train_records = %d\nid_records = %d\n"
                 % (d.seed, train_seed, id_seed, len(train), len(ident)))
    return {"train": train_path, "id": id_path,
            "train_records": len(train), "id_records": len(ident)}


# ---------------------------------------------------------------- fit

def _heading_circle_centers(k: int) -> np.ndarray:
    ang = 2.0 * math.pi * np.arange(k) / max(k, 1)
    return np.stack([np.zeros(k), np.zeros(k), np.sin(ang), np.cos(ang)], axis=1)


def build_dictionary(cfg: ExperimentConfig, id_states: np.ndarray,
                     train_data: sysid.TransitionDataset = None):
    """Dictionary + decoder per the lifting configuration."""
    lc = cfg.lifting
    n = id_states.shape[1]
    if lc.kind == "trained_encoder":
        if train_data is None:
            raise ConfigError("trained encoder requires the training split")
        N = n + 2  # matches the n -> ~1.3n sizing of the fixed dictionaries
        dic, dec, _ = lifting.train_encoder_decoder(
            train_data.states, train_data.inputs, train_data.next_states,
            latent_dim=N, hidden=lc.hidden_width, iters=lc.train_iters,
            lr=lc.learning_rate, alpha=lc.loss_alpha, beta=lc.loss_beta,
            seed=cfg.data.seed)
        return dic, dec
    k = lc.rbf_count
    if lc.rbf_placement == "heading-circle":
        centers = _heading_circle_centers(k)
    elif lc.rbf_placement == "origin":
        centers = np.zeros((k, n))
    else:
        idx = np.linspace(0, id_states.shape[0] - 1, max(k, 1)).astype(int)
        centers = id_states[idx][:k]
    width = lc.rbf_width if lc.rbf_width > 0 else lifting.rbf_width_from_data(id_states)
    widths = np.full(k, width)
    if lc.kind == "radial_basis":
        dic = lifting.radial_basis(n, centers, widths)
        dec = lifting.fit_linear_decoder(dic, id_states, ridge=1e-9)
        return dic, dec
    dic = lifting.identity_augmented(n, centers if k else None, widths if k else None,
                                     include_constant=lc.include_constant)
    if lc.decoder == "linear":
        dec = lifting.fit_linear_decoder(dic, id_states, ridge=1e-9)
    else:
        dec = lifting.projection_decoder(n, dic.latent_dim)
    return dic, dec


def cmd_fit(cfg: ExperimentConfig, out_dir) -> dict:
    """Identify (A, B) on the identification split and write the model file."""
    id_path = os.path.join(out_dir, ID_CSV)
    if not os.path.exists(id_path):
        raise FileNotFoundError("missing dataset %s (run collect first)" % id_path)
    ident = sysid.TransitionDataset.read_csv(id_path)
    train = None
    if cfg.lifting.kind == "trained_encoder":
        train = sysid.TransitionDataset.read_csv(os.path.join(out_dir, TRAIN_CSV))
    dic, dec = build_dictionary(cfg, ident.states, train)
    ic = cfg.identification
    id_cfg = sysid.IdentificationConfig(
        w_rho=ic.w_rho, w_ctrl=ic.w_ctrl, lambda_cond=ic.lambda_cond,
        epsilon_ctrl=ic.epsilon_ctrl, ridge=ic.ridge, max_iters=ic.max_iters,
        step_size=ic.step_size, tol=ic.tol, patience=ic.patience)
    A0, B0 = sysid.fit_edmd(dic, ident, ic.ridge)
    A, B = sysid.fit_regularized(dic, ident, id_cfg)
    Z = lifting.lift_many(dic, ident.states)
    Zn = lifting.lift_many(dic, ident.next_states)
    diagnostics = {
        "rho_A": sysid.spectral_radius(A),
        "rho_A_edmd": sysid.spectral_radius(A0),
        "sigma_min_ctrb": sysid.controllability_sigma_min(A, B),
        "prediction_loss_edmd": sysid.prediction_loss(A0, B0, Z, ident.inputs, Zn),
        "prediction_loss": sysid.prediction_loss(A, B, Z, ident.inputs, Zn),
    }
    model = lifting.LiftedModel(dic, dec, A, B)
    modelio.write_model(os.path.join(out_dir, MODEL_FILE), model, diagnostics)
    return diagnostics


# ---------------------------------------------------------------- synth

def cmd_synth(cfg: ExperimentConfig, out_dir) -> dict:
    model_path = os.path.join(out_dir, MODEL_FILE)
    if not os.path.exists(model_path):
        raise FileNotFoundError("missing model %s (run fit first)" % model_path)
    model, diagnostics, _ = modelio.read_model(model_path)
    cc = cfg.controller
    spec = synthesize_metric(model.A, model.B, cc.gamma, q_weight=cc.q_weight,
                             rho=cc.rho, c_v=cc.c_v, q_lqr=cc.q_lqr, r_lqr=cc.r_lqr,
                             controllability_floor=cc.controllability_floor)
    modelio.write_model(os.path.join(out_dir, CONTROLLER_FILE), model, diagnostics, spec)
    return {"certificate": spec.certificate,
            "max_closed_loop_modulus": float(spec.closed_loop_moduli[0]),
            "sqrt_ratio": math.sqrt(spec.m_bar / spec.m_under)}


# ---------------------------------------------------------------- calibrate

def _reference(cfg: ExperimentConfig) -> dubins.ReferenceTrajectory:
    return dubins.circle_reference(cfg.rollout.radius, cfg.rollout.ref_speed,
                                   cfg.data.dt, cfg.conformal.horizon)


def _draw_initial_state(cfg: ExperimentConfig, rng) -> dubins.DubinsState:
    r = cfg.rollout
    return dubins.DubinsState(
        x=float(rng.uniform(-r.eval_position_halfwidth, r.eval_position_halfwidth)),
        y=float(rng.uniform(-r.eval_position_halfwidth, r.eval_position_halfwidth)),
        theta=float(rng.uniform(-r.eval_heading_halfwidth, r.eval_heading_halfwidth))
        if r.eval_heading_halfwidth > 0 else 0.0,
        v=cfg.data.speed)


def _calib_rollout(args):
    model, spec, ref, cfg, j = args
    s0 = _draw_initial_state(cfg, _rng(cfg.data.seed, STAGE_CALIBRATE, j))
    return dubins.rollout(model, spec, ref, dubins.CRDR, s0, seed=j,
                          preset=cfg.preset)


def _parallel_map(fn, items, jobs):
    if jobs <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def cmd_calibrate(cfg: ExperimentConfig, out_dir, jobs: int = 1) -> dict:
    path = os.path.join(out_dir, CONTROLLER_FILE)
    if not os.path.exists(path):
        raise FileNotFoundError("missing controller %s (run synth first)" % path)
    model, _, spec = modelio.read_model(path)
    if spec is None:
        raise ConfigError("%s carries no controller section" % path)
    ref = _reference(cfg)
    co = cfg.conformal
    delta = cp.union_bound_delta(co.alpha, co.horizon)
    logs = _parallel_map(_calib_rollout,
                         [(model, spec, ref, cfg, j) for j in range(co.calib_rollouts)],
                         jobs)
    dd, dv, states, v0s = [], [], [], []
    for log in logs:
        keep = np.isfinite(log.deltas_d)
        dd.extend(log.deltas_d[keep].tolist())
        dv.extend(log.slacks[keep].tolist())
        states.append(log.observations)
        v0s.append(log.v0)
    states = np.concatenate(states + [ref.observations], axis=0)
    fwd_nfc = cp.conformal_quantile(dd, delta, cp.FORWARD_NFC)
    crdr_scores = [cp.forward_score_crdr(a, b, spec.m_bar) for a, b in zip(dd, dv)]
    fwd_crdr = cp.conformal_quantile(crdr_scores, delta, cp.FORWARD_CRDR)
    rt_scores = cp.round_trip_scores(model, states)
    round_trip = cp.conformal_quantile(rt_scores, co.beta / 2.0, cp.ROUND_TRIP)

    lat = lifting.lift_many(model.dictionary, states[: min(len(states), 64)])
    pairs = list(zip(lat[:-1], lat[1:]))
    lip = cp.estimate_lipschitz(model.decoder, pairs, safety=co.lipschitz_safety)

    results = {cp.FORWARD_NFC: fwd_nfc, cp.FORWARD_CRDR: fwd_crdr, cp.ROUND_TRIP: round_trip}
    insufficient = [r.score_kind for r in results.values() if math.isinf(r.quantile)]
    with open(os.path.join(out_dir, CALIBRATION_CSV), "w") as fh:
        fh.write(cp.CalibrationResult.csv_header() + "\n")
        for kind in cp.SCORE_KINDS:
            fh.write(results[kind].csv_row() + "\n")
    for kind in cp.SCORE_KINDS:
        with open(os.path.join(out_dir, "calibration_scores_%s.csv" % kind), "w") as fh:
            fh.write("score\n")
            fh.write("\n".join(repr(float(s)) for s in results[kind].scores_sorted) + "\n")
    with open(os.path.join(out_dir, CALIBRATION_META), "w") as fh:
        fh.write("alpha = %s\nbeta = %s\nhorizon = %d\ndelta = %s\n"
                 "lipschitz = %s\nlipschitz_exact = %s\nv0_median = %s\n"
                 % (repr(co.alpha), repr(co.beta), co.horizon, repr(delta),
                    repr(lip.value), str(lip.exact).lower(),
                    repr(float(np.median(v0s)))))
    with open(os.path.join(out_dir, CALIBRATION_STATES), "w") as fh:
        fh.write(",".join("x%d" % i for i in range(states.shape[1])) + "\n")
        fh.write("\n".join(",".join(repr(float(v)) for v in row) for row in states) + "\n")
    v0_med = float(np.median(v0s))
    for kind, q_kind in ((cp.FORWARD_NFC, "nfc"), (cp.FORWARD_CRDR, "crdr")):
        dr = cp.delta_r(q_kind, results[kind].quantile, spec.gamma, spec.rho,
                        spec.m_bar, spec.m_under)
        if math.isfinite(dr):
            prof = cp.BoundProfile.build(v0_med, spec.gamma, co.horizon, dr,
                                         spec.m_under, co.alpha, co.beta,
                                         round_trip.quantile, lip.value)
            prof.write_csv(os.path.join(out_dir, "bound_profile_%s.csv" % kind))
    out = {kind: results[kind].quantile for kind in cp.SCORE_KINDS}
    out["delta"] = delta
    out["lipschitz"] = lip.value
    if insufficient:
        out["warning"] = ("insufficient calibration data for %s: quantile is +inf"
                          % ", ".join(insufficient))
    return out


def read_calibration(out_dir):
    """(quantiles by kind, meta dict) from the calibration stage files."""
    path = os.path.join(out_dir, CALIBRATION_CSV)
    if not os.path.exists(path):
        raise FileNotFoundError("missing calibration %s (run calibrate first)" % path)
    quantiles = {}
    deltas = {}
    with open(path) as fh:
        next(fh)
        for line in fh:
            kind, delta, m, k_index, q = line.strip().split(",")
            quantiles[kind] = float(q)
            deltas[kind] = float(delta)
    meta = {}
    with open(os.path.join(out_dir, CALIBRATION_META)) as fh:
        for line in fh:
            k, _, v = line.partition("=")
            meta[k.strip()] = v.strip()
    return quantiles, deltas, meta


# ---------------------------------------------------------------- run

def _eval_rollout(args):
    model, spec, ref, cfg, bi, kind, idx = args
    s0 = _draw_initial_state(cfg, _rng(cfg.data.seed, STAGE_RUN, idx))
    return dubins.rollout(model, spec, ref, kind, s0, bound_inputs=bi, seed=idx,
                          preset=cfg.preset)


def cmd_run(cfg: ExperimentConfig, out_dir, jobs: int = 1) -> dict:
    model, _, spec = modelio.read_model(os.path.join(out_dir, CONTROLLER_FILE))
    quantiles, deltas, meta = read_calibration(out_dir)
    ref = _reference(cfg)
    co = cfg.conformal
    bi = cp.BoundInputs(q_fwd_nfc=quantiles[cp.FORWARD_NFC],
                        q_fwd_crdr=quantiles[cp.FORWARD_CRDR],
                        q_rt=quantiles[cp.ROUND_TRIP],
                        lipschitz=float(meta["lipschitz"]),
                        alpha=co.alpha, beta=co.beta,
                        delta=deltas[cp.FORWARD_NFC])
    kinds = [dubins.NFC, dubins.CRDR] if cfg.rollout.controllers == "both" \
        else [cfg.rollout.controllers]
    tasks = [(model, spec, ref, cfg, bi, kind, idx)
             for idx in range(cfg.rollout.n_seeds) for kind in kinds]
    logs = _parallel_map(_eval_rollout, tasks, jobs)
    runs_dir = _ensure_dir(os.path.join(out_dir, RUNS_DIR))
    index_lines = ["seed,controller,file,steps,aborted,saturated_steps,terminal_pos_err"]
    heldout = {cp.FORWARD_NFC: [], cp.FORWARD_CRDR: []}
    rt_states = []
    n_ok = 0
    for log in sorted(logs, key=lambda lg: (lg.seed, lg.controller)):
        name = "rollout_%s_%04d.csv" % (log.controller, log.seed)
        log.write_csv(os.path.join(runs_dir, name))
        term = float(log.pos_errs[-1]) if log.T else math.nan
        index_lines.append("%d,%s,%s,%d,%s,%d,%s"
                           % (log.seed, log.controller, name, log.T,
                              str(log.aborted).lower(), log.saturated_steps,
                              repr(term) if math.isfinite(term) else ""))
        if not log.aborted:
            n_ok += 1
        keep = np.isfinite(log.deltas_d)
        if log.controller == dubins.CRDR:
            heldout[cp.FORWARD_NFC].extend(log.deltas_d[keep].tolist())
            heldout[cp.FORWARD_CRDR].extend(
                cp.forward_score_crdr(a, b, spec.m_bar)
                for a, b in zip(log.deltas_d[keep], log.slacks[keep]))
            rt_states.append(log.observations)
    for kind, scores in heldout.items():
        with open(os.path.join(runs_dir, "heldout_%s.csv" % kind), "w") as fh:
            fh.write("score\n")
            fh.write("\n".join(repr(float(s)) for s in scores) + ("\n" if scores else ""))
    if rt_states:
        rt = cp.round_trip_scores(model, np.concatenate(rt_states, axis=0))
        with open(os.path.join(runs_dir, "heldout_%s.csv" % cp.ROUND_TRIP), "w") as fh:
            fh.write("score\n")
            fh.write("\n".join(repr(float(s)) for s in rt) + "\n")
    with open(os.path.join(runs_dir, INDEX_CSV), "w") as fh:
        fh.write("\n".join(index_lines) + "\n")
    if n_ok == 0:
        raise NumericalError("all rollouts aborted")
    return {"rollouts": len(logs), "completed": n_ok}


# ---------------------------------------------------------------- validate

@dataclass
class ValidationSummary:
    runs: int
    fraction_within_bound: dict
    per_run_within: dict
    coverage: dict
    targets: dict
    pass_flags: dict
    violations: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "runs": self.runs,
            "fraction_within_bound": self.fraction_within_bound,
            "per_run_within": self.per_run_within,
            "coverage": self.coverage,
            "targets": self.targets,
            "pass_flags": self.pass_flags,
            "violations": self.violations,
        }, indent=2, sort_keys=True)

    def table(self) -> str:
        rows = ["%-24s %-12s %-10s %s" % ("bound", "fraction", "target", "pass")]
        for kind, frac in sorted(self.fraction_within_bound.items()):
            tgt = self.targets.get(kind, math.nan)
            rows.append("%-24s %-12.4f %-10.4f %s"
                        % (kind, frac, tgt, self.pass_flags.get(kind, "-")))
        for kind, cov in sorted(self.coverage.items()):
            rows.append("%-24s %-12.4f %-10.4f %s"
                        % ("coverage:" + kind, cov, self.targets.get("coverage:" + kind, math.nan),
                           self.pass_flags.get("coverage:" + kind, "-")))
        return "\n".join(rows)


def _heading_from_obs(obs, speed):
    return dubins.DubinsState(float(obs[0]), float(obs[1]),
                              math.atan2(float(obs[2]), float(obs[3])), speed)


def cmd_validate(cfg: ExperimentConfig, out_dir) -> ValidationSummary:
    runs_dir = os.path.join(out_dir, RUNS_DIR)
    index_path = os.path.join(runs_dir, INDEX_CSV)
    if not os.path.exists(index_path):
        raise FileNotFoundError("missing %s (run the rollout stage first)" % index_path)
    quantiles, deltas, meta = read_calibration(out_dir)
    co = cfg.conformal
    delta = deltas[cp.FORWARD_NFC]
    horizon = int(round(co.alpha / delta))
    rows = []
    with open(index_path) as fh:
        next(fh)
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) >= 3 and parts[2]:
                rows.append(parts)
    if not rows:
        raise ValueError("empty rollout index")

    checks = {"latent_step": [0, 0], "latent_trajectory": [0, 0], "state": [0, 0]}
    per_run = {"latent_step": [], "latent_trajectory": [], "state": []}
    run_meta = []
    for parts in rows:
        data, lmeta = dubins.read_log_csv(os.path.join(runs_dir, parts[2]))
        T = data["k"].size
        if T and not (T == horizon or lmeta.get("aborted") == "true"):
            raise ValueError("log %s has %d steps but calibration horizon is %d"
                             % (parts[2], T, horizon))
        ok_run = {"latent_step": True, "latent_trajectory": True, "state": True}
        for i in range(T):
            if math.isfinite(data["eps_k"][i]):
                checks["latent_step"][1] += 1
                good = data["e_norm"][i] <= data["eps_k"][i] + 1e-12
                checks["latent_step"][0] += good
                ok_run["latent_step"] &= bool(good)
            if math.isfinite(data["traj_bound"][i]):
                checks["latent_trajectory"][1] += 1
                good = data["e_norm"][i] <= data["traj_bound"][i] + 1e-12
                checks["latent_trajectory"][0] += good
                ok_run["latent_trajectory"] &= bool(good)
            if math.isfinite(data["state_bound"][i]):
                checks["state"][1] += 1
                good = data["pos_err"][i] <= data["state_bound"][i] + 1e-12
                checks["state"][0] += good
                ok_run["state"] &= bool(good)
        ctrl = lmeta.get("controller", "?")
        run_meta.append((ctrl, lmeta))
        for key in per_run:
            if ctrl == dubins.CRDR or key in ("latent_step", "state"):
                per_run[key].append(ok_run[key])

    fractions = {k: (c[0] / c[1] if c[1] else math.nan) for k, c in checks.items()}
    per_run_within = {k: (float(np.mean(v)) if v else math.nan) for k, v in per_run.items()}

    coverage = {}
    cov_targets = {}
    for kind in cp.SCORE_KINDS:
        path = os.path.join(runs_dir, "heldout_%s.csv" % kind)
        if not os.path.exists(path):
            continue
        with open(path) as fh:
            next(fh)
            scores = [float(s) for s in fh.read().split() if s]
        if scores:
            coverage[kind] = cp.empirical_coverage(quantiles[kind], scores)
            cov_targets["coverage:" + kind] = (1.0 - co.beta / 2.0 if kind == cp.ROUND_TRIP
                                               else 1.0 - delta)

    targets = {"latent_step": 1.0 - co.alpha, "latent_trajectory": 1.0 - co.alpha,
               "state": 1.0 - co.alpha - co.beta}
    targets.update(cov_targets)
    pass_flags = {}
    for kind in fractions:
        if math.isfinite(fractions[kind]):
            pass_flags[kind] = bool(fractions[kind] >= targets[kind])
    for kind in coverage:
        pass_flags["coverage:" + kind] = bool(coverage[kind] >= cov_targets["coverage:" + kind])

    summary = ValidationSummary(
        runs=len(rows), fraction_within_bound=fractions,
        per_run_within=per_run_within, coverage=coverage, targets=targets,
        pass_flags=pass_flags,
        violations={k: int(c[1] - c[0]) for k, c in checks.items()})
    with open(os.path.join(out_dir, SUMMARY_JSON), "w") as fh:
        fh.write(summary.to_json() + "\n")

    _write_contraction_report(cfg, out_dir)
    return summary


def _write_contraction_report(cfg: ExperimentConfig, out_dir, n_samples: int = 500):
    path = os.path.join(out_dir, CALIBRATION_STATES)
    ctrl_path = os.path.join(out_dir, CONTROLLER_FILE)
    if not (os.path.exists(path) and os.path.exists(ctrl_path)):
        return None
    model, _, spec = modelio.read_model(ctrl_path)
    states = np.loadtxt(path, delimiter=",", skiprows=1)
    idx = np.linspace(0, states.shape[0] - 1, min(n_samples, states.shape[0])).astype(int)
    samples = states[idx]
    ref = _reference(cfg)
    z_d0 = lifting.lift(model.dictionary, ref.observations[0])
    u_d0 = ref.inputs[0]
    speed = cfg.data.speed
    plant = dubins.DubinsPlant(cfg.data.dt, cfg.data.input_mode)

    def closed_loop(obs):
        e = lifting.lift(model.dictionary, obs) - z_d0
        u = u_d0 - spec.K @ e
        s = _heading_from_obs(obs, speed)
        return dubins.observe(plant.step(s, u))

    report = verify_contraction(model.dictionary, spec.M, spec.gamma,
                                closed_loop, samples)
    with open(os.path.join(out_dir, CONTRACTION_CSV), "w") as fh:
        fh.write(report.csv_header() + "\n" + report.csv_row() + "\n")
    return report


# ---------------------------------------------------------------- report

def cmd_report(cfg: ExperimentConfig, out_dir) -> dict:
    from .report import write_report
    summary_path = os.path.join(out_dir, SUMMARY_JSON)
    if not os.path.exists(summary_path):
        raise FileNotFoundError("missing %s (run validate first)" % summary_path)
    return write_report(cfg, out_dir)


# ---------------------------------------------------------------- all

def run_all(cfg: ExperimentConfig, out_dir, jobs: int = 1) -> dict:
    results = {"collect": cmd_collect(cfg, out_dir)}
    results["fit"] = cmd_fit(cfg, out_dir)
    results["synth"] = cmd_synth(cfg, out_dir)
    results["calibrate"] = cmd_calibrate(cfg, out_dir, jobs)
    results["run"] = cmd_run(cfg, out_dir, jobs)
    results["validate"] = cmd_validate(cfg, out_dir)
    results["report"] = cmd_report(cfg, out_dir)
    return results
