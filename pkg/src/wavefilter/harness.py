"""Experiment runs: wiring, CSV logs, figures, summaries.

Each subcommand produces a deterministic set of CSV files (given the seed)
plus a JSON sidecar per CSV recording the config hash, seed and code
version.  CSV schemas:

    trajectory.csv    time, mode0_re, mode0_im, ...
    observations.csv  time, y_1 .. y_N
    filter_pf.csv /   time, mean_0 .. mean_{2M-1}, cov_trace, ess,
    filter_kf.csv       log_evidence   (nan where a column does not apply)
    innovations.csv   time, nu_1 .. nu_N
    comparison.csv    time, gap_0 .., kfstd_0 .., max_abs_gap
    riccati.csv /     time, P_0_0, P_0_1, ... (row-major)
    chandrasekhar.csv
    gain.csv          time, K_0_0, ... (row-major)

Report paths also render matplotlib figures next to the CSVs; figures are
derived from the CSV contents only.
"""

from __future__ import annotations

import json
import math
import os
import time as _time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .integrator import Trajectory, simulate_path
from .kalman import (
    ChandrasekharState,
    chandrasekhar_integrate,
    forcing_matrix,
    riccati_integrate,
    run_kalman_filter,
)
from .noise import RngStreams
from .observation import ITO, WHITENOISE, observe_ito, observe_whitenoise
from .parallel import replica_map
from .particle import (
    ParticleCloud,
    cloud_cov_trace_real,
    cloud_mean_real,
    innovation_path,
    pf_normalize,
    pf_propagate,
    pf_resample,
    pf_update_ito,
    pf_update_whitenoise,
)
from .spectral import eval_jacobian, realify_state, state_from_realified

STATUS_COMPLETED = "completed"
STATUS_GUARD_STOPPED = "guard_stopped"


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: str, header: list, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_sidecar(csv_path: str, config: ExperimentConfig, command: str, extra: dict | None = None) -> None:
    meta = {
        "config_hash": config.hash,
        "seed": config.seed,
        "version": __version__,
        "command": command,
    }
    if extra:
        meta.update(extra)
    with open(csv_path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class RunSummary:
    status: str
    final_mean: list
    rmse_vs_truth: float
    log_evidence: float
    ess_min: float
    ess_mean: float
    cov_trace_final: float
    wall_clock_s: float

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "final_mean": self.final_mean,
            "rmse_vs_truth": self.rmse_vs_truth,
            "log_evidence": self.log_evidence,
            "ess_min": self.ess_min,
            "ess_mean": self.ess_mean,
            "cov_trace_final": self.cov_trace_final,
            "wall_clock_s": self.wall_clock_s,
        }


def _draw_truth_x0(config: ExperimentConfig, streams: RngStreams):
    model = config.model
    if config.x0 is not None:
        from .spectral import state_from_flat

        return state_from_flat(config.x0, model.basis, model.spec)
    rng = streams.generator("truth-init", 0)
    draw = config.prior_mean + np.sqrt(config.prior_cov) * rng.standard_normal(
        config.prior_mean.shape[0]
    )
    return state_from_realified(draw, model.basis, model.spec)


def _simulate_truth(config: ExperimentConfig):
    streams = RngStreams(config.seed)
    x0 = _draw_truth_x0(config, streams)
    traj = simulate_path(x0, config.path, config.noise, config.model, streams, family="signal")
    status = STATUS_GUARD_STOPPED if traj.stopped else STATUS_COMPLETED
    return traj, status, streams


def _observe_truth(config: ExperimentConfig, traj, streams: RngStreams):
    rng = streams.generator("obs", 0)
    if config.obs_mode == ITO:
        return observe_ito(traj, config.observation, rng)
    return observe_whitenoise(traj, config.observation, rng)


def _write_trajectory(out, config, traj, command):
    flats = traj.flat_array()
    dim = flats.shape[1]
    header = ["time"] + [f"mode{i}_{part}" for i in range(dim) for part in ("re", "im")]
    rows = []
    for t, flat in zip(traj.times, flats):
        row = [t]
        for c in flat:
            row.extend([c.real, c.imag])
        rows.append(row)
    path = os.path.join(out, "trajectory.csv")
    write_csv(path, header, rows)
    write_sidecar(path, config, command)


def _write_observations(out, config, record, command):
    header = ["time"] + [f"y_{i+1}" for i in range(record.values.shape[1])]
    rows = [[t, *vals] for t, vals in zip(record.times, record.values)]
    path = os.path.join(out, "observations.csv")
    write_csv(path, header, rows)
    write_sidecar(path, config, command, {"mode": record.mode})


@dataclass
class FilterRun:
    name: str
    times: np.ndarray
    means: np.ndarray
    cov_traces: np.ndarray
    ess: np.ndarray  # nan for the Kalman run
    log_evidence: np.ndarray  # accumulated; nan for the Kalman run
    hhat: np.ndarray
    kf_var_diag: np.ndarray | None = None  # posterior variances (Kalman only)


def _run_particle(config: ExperimentConfig, record) -> FilterRun:
    model = config.model
    streams = RngStreams(config.seed)
    n = config.filter.particle_n
    rng_init = streams.generator("pf-init", 0)
    cloud = ParticleCloud.from_prior(n, config.prior_mean, config.prior_cov, model, rng_init)
    dt = record.dt
    update = pf_update_ito if config.obs_mode == ITO else pf_update_whitenoise
    hmat = config.observation.hmat
    times = [0.0]
    means = [cloud_mean_real(cloud, model)]
    traces = [cloud_cov_trace_real(cloud, model)]
    ess_path = [float(cloud.ess)]
    logz_path = [0.0]
    hhat = []
    logz = 0.0
    log_n = math.log(n)
    for step in range(record.n_steps):
        hhat.append(hmat @ cloud_mean_real(cloud, model) if hmat is not None else
                    np.mean(config.observation.evaluate_block(cloud.states), axis=0))
        cloud = update(cloud, record.values[step], dt, config.observation)
        cloud, lz = pf_normalize(cloud)
        logz += lz + log_n  # lz reports log(mean weight); total mass adds log n
        ess = float(cloud.ess)
        if ess < config.filter.ess_threshold * n:
            cloud = pf_resample(
                cloud, config.filter.ess_threshold, streams.generator("resample", step)
            )
        cloud = pf_propagate(
            cloud,
            dt,
            model,
            config.noise,
            streams,
            family="pf",
            guard_lambda=config.path.guard_lambda,
            guard_order=config.path.guard_order,
        )
        times.append(cloud.time)
        means.append(cloud_mean_real(cloud, model))
        traces.append(cloud_cov_trace_real(cloud, model))
        ess_path.append(ess)
        logz_path.append(logz)
    return FilterRun(
        name="pf",
        times=np.asarray(times),
        means=np.asarray(means),
        cov_traces=np.asarray(traces),
        ess=np.asarray(ess_path),
        log_evidence=np.asarray(logz_path),
        hhat=np.asarray(hhat),
    )


def _linearization_provider(config: ExperimentConfig):
    model = config.model
    if config.filter.kalman_linearization == "self":
        def provider(mean, time):
            state = state_from_realified(mean, model.basis, model.spec)
            return eval_jacobian(state, model.basis, model.spec)

        return provider
    basic = state_from_realified(config.prior_mean, model.basis, model.spec)
    return eval_jacobian(basic, model.basis, model.spec)


def _run_kalman(config: ExperimentConfig, record) -> FilterRun:
    model = config.model
    F = forcing_matrix(config.noise, model)
    P0 = np.diag(config.prior_cov)
    result = run_kalman_filter(
        record,
        config.prior_mean,
        P0,
        F,
        config.observation,
        _linearization_provider(config),
        record_P=True,
    )
    nan = np.full(result.times.shape[0], np.nan)
    var_diag = np.asarray([np.diag(P) for P in result.P_path])
    return FilterRun(
        name="kf",
        times=result.times,
        means=result.means,
        cov_traces=result.traces,
        ess=nan,
        log_evidence=nan.copy(),
        hhat=result.hhat,
        kf_var_diag=var_diag,
    )


def _write_filter_csv(out, config, run: FilterRun, command) -> str:
    dim = run.means.shape[1]
    header = ["time"] + [f"mean_{i}" for i in range(dim)] + ["cov_trace", "ess", "log_evidence"]
    rows = []
    for k in range(run.times.shape[0]):
        rows.append(
            [run.times[k], *run.means[k], run.cov_traces[k], run.ess[k], run.log_evidence[k]]
        )
    path = os.path.join(out, f"filter_{run.name}.csv")
    write_csv(path, header, rows)
    write_sidecar(path, config, command)
    return path


def _write_innovations(out, config, record, run: FilterRun, command):
    nu = innovation_path(record, run.hhat, config.observation)
    header = ["time"] + [f"nu_{i+1}" for i in range(nu.shape[1])]
    rows = [[t, *vals] for t, vals in zip(record.times, nu)]
    path = os.path.join(out, "innovations.csv")
    write_csv(path, header, rows)
    write_sidecar(path, config, command, {"source_filter": run.name})
    return nu


def _summary(config, truth, run: FilterRun, status, wall) -> RunSummary:
    truth_final = realify_state(truth.states[-1], config.model.basis, config.model.spec)
    k = min(run.times.shape[0], truth.times.shape[0]) - 1
    resid = run.means[k] - truth_final
    finite_ess = run.ess[np.isfinite(run.ess)]
    logz = run.log_evidence[np.isfinite(run.log_evidence)]
    return RunSummary(
        status=status,
        final_mean=[float(v) for v in run.means[k]],
        rmse_vs_truth=float(np.sqrt(np.mean(resid**2))),
        log_evidence=float(logz[-1]) if logz.size else float("nan"),
        ess_min=float(np.min(finite_ess)) if finite_ess.size else float("nan"),
        ess_mean=float(np.mean(finite_ess)) if finite_ess.size else float("nan"),
        cov_trace_final=float(run.cov_traces[k]),
        wall_clock_s=wall,
    )


def _write_summary(out, payload: dict):
    with open(os.path.join(out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_simulate(config: ExperimentConfig, out: str, quiet: bool = False) -> dict:
    """Simulate one truth path and its observation record."""
    os.makedirs(out, exist_ok=True)
    t0 = _time.monotonic()
    traj, status, streams = _simulate_truth(config)
    record = _observe_truth(config, traj, streams)
    _write_trajectory(out, config, traj, "simulate")
    _write_observations(out, config, record, "simulate")
    payload = {
        "status": status,
        "n_steps": int(traj.times.shape[0] - 1),
        "stopped_at": traj.stopped_at,
        "wall_clock_s": _time.monotonic() - t0,
    }
    _write_summary(out, payload)
    if not quiet:
        print(f"simulate: {status}, {payload['n_steps']} steps -> {out}")
    return payload


def run_filter(config: ExperimentConfig, out: str, quiet: bool = False) -> dict:
    """Twin experiment: simulate truth, observe, run the configured filters."""
    os.makedirs(out, exist_ok=True)
    t0 = _time.monotonic()
    traj, status, streams = _simulate_truth(config)
    record = _observe_truth(config, traj, streams)
    _write_trajectory(out, config, traj, "filter")
    _write_observations(out, config, record, "filter")

    runs = []
    kinds = {"particle": ["pf"], "kalman": ["kf"], "both": ["pf", "kf"]}[config.filter.kind]
    workers = {
        "pf": lambda _=None: _run_particle(config, record),
        "kf": lambda _=None: _run_kalman(config, record),
    }
    runs = replica_map(lambda name: workers[name](), kinds)
    wall = _time.monotonic() - t0

    payload = {"status": status, "wall_clock_s": wall}
    innovation_run = None
    for run in runs:
        _write_filter_csv(out, config, run, "filter")
        payload[run.name] = _summary(config, traj, run, status, wall).to_dict()
        innovation_run = run if innovation_run is None or run.name == "kf" else innovation_run
    _write_innovations(out, config, record, innovation_run, "filter")
    _write_summary(out, payload)
    _render_filter_figures(out, config, have=[r.name for r in runs])
    if not quiet:
        print(f"filter[{config.filter.kind}]: {status} -> {out}")
    return payload


def run_compare(config: ExperimentConfig, out: str, quiet: bool = False) -> dict:
    """PF vs Kalman on the same record, plus the gap table."""
    from .config import ConfigError

    if config.filter.kind != "both":
        raise ConfigError("filter.kind", "compare runs require filter.kind = both")
    os.makedirs(out, exist_ok=True)
    t0 = _time.monotonic()
    traj, status, streams = _simulate_truth(config)
    record = _observe_truth(config, traj, streams)
    _write_trajectory(out, config, traj, "compare")
    _write_observations(out, config, record, "compare")
    pf_run, kf_run = replica_map(
        lambda name: _run_particle(config, record) if name == "pf" else _run_kalman(config, record),
        ["pf", "kf"],
    )
    wall = _time.monotonic() - t0
    _write_filter_csv(out, config, pf_run, "compare")
    _write_filter_csv(out, config, kf_run, "compare")
    _write_innovations(out, config, record, kf_run, "compare")

    dim = pf_run.means.shape[1]
    gaps = pf_run.means - kf_run.means
    kf_std = np.sqrt(np.maximum(kf_run.kf_var_diag, 0.0))
    header = (
        ["time"]
        + [f"gap_{i}" for i in range(dim)]
        + [f"kfstd_{i}" for i in range(dim)]
        + ["max_abs_gap"]
    )
    rows = []
    for k in range(pf_run.times.shape[0]):
        rows.append(
            [pf_run.times[k], *gaps[k], *kf_std[k], float(np.max(np.abs(gaps[k])))]
        )
    cpath = os.path.join(out, "comparison.csv")
    write_csv(cpath, header, rows)
    write_sidecar(cpath, config, "compare")

    payload = {
        "status": status,
        "wall_clock_s": wall,
        "pf": _summary(config, traj, pf_run, status, wall).to_dict(),
        "kf": _summary(config, traj, kf_run, status, wall).to_dict(),
        "max_abs_gap_final": float(np.max(np.abs(gaps[-1]))),
    }
    _write_summary(out, payload)
    _render_filter_figures(out, config, have=["pf", "kf"])
    if not quiet:
        print(f"compare: {status}, final max gap {payload['max_abs_gap_final']:.3e} -> {out}")
    return payload


def run_riccati(config: ExperimentConfig, out: str, quiet: bool = False) -> dict:
    """Direct Riccati and Chandrasekhar solutions for the linearized model."""
    os.makedirs(out, exist_ok=True)
    t0 = _time.monotonic()
    model = config.model
    from .config import ConfigError
    from .integrator import ADDITIVE

    if model.coupling != ADDITIVE:
        raise ConfigError("noise.coupling", "riccati runs require noise.coupling = additive")
    amat = _linearization_provider(config)
    if callable(amat):
        amat = amat(config.prior_mean, 0.0)
    F = forcing_matrix(config.noise, model)
    P0 = np.diag(config.prior_cov)
    dt, t_end = config.path.dt, config.path.t_end
    stride = config.output_stride
    direct = riccati_integrate(P0, amat, config.observation, F, t_end, dt, record_every=stride)
    cstate = ChandrasekharState.initial(P0, amat, config.observation, F)
    fact = chandrasekhar_integrate(cstate, amat, config.observation, t_end, dt, record_every=stride)

    def matrix_rows(times, mats):
        return [[t, *m.ravel()] for t, m in zip(times, mats)]

    dim = P0.shape[0]
    p_header = ["time"] + [f"P_{i}_{j}" for i in range(dim) for j in range(dim)]
    path_r = os.path.join(out, "riccati.csv")
    write_csv(path_r, p_header, matrix_rows(direct.times, direct.P_path))
    write_sidecar(path_r, config, "riccati")
    path_c = os.path.join(out, "chandrasekhar.csv")
    write_csv(path_c, p_header, matrix_rows(fact.times, fact.P_path))
    write_sidecar(path_c, config, "riccati")
    k_dim = fact.K_path[0].shape
    k_header = ["time"] + [f"K_{i}_{j}" for i in range(k_dim[0]) for j in range(k_dim[1])]
    path_k = os.path.join(out, "gain.csv")
    write_csv(path_k, k_header, matrix_rows(fact.times, fact.K_path))
    write_sidecar(path_k, config, "riccati")

    gap = float(np.max(np.abs(direct.final - fact.final_P)))
    scale = float(max(np.max(np.abs(direct.final)), 1e-300))
    payload = {
        "status": STATUS_COMPLETED,
        "final_trace_riccati": float(np.trace(direct.final)),
        "final_trace_chandrasekhar": float(np.trace(fact.final_P)),
        "max_abs_gap": gap,
        "max_rel_gap": gap / scale,
        "wall_clock_s": _time.monotonic() - t0,
    }
    _write_summary(out, payload)
    from .figures import render_riccati_trace

    render_riccati_trace(path_r, path_c, os.path.join(out, "covariance.png"))
    if not quiet:
        print(f"riccati: rel gap {payload['max_rel_gap']:.3e} -> {out}")
    return payload


def _render_filter_figures(out, config, have):
    from . import figures

    traj = os.path.join(out, "trajectory.csv")
    pf = os.path.join(out, "filter_pf.csv") if "pf" in have else None
    kf = os.path.join(out, "filter_kf.csv") if "kf" in have else None
    figures.render_tracking(traj, pf, kf, os.path.join(out, "tracking.png"))
    figures.render_covariance(pf, kf, os.path.join(out, "covariance.png"))
    if pf:
        figures.render_ess(pf, os.path.join(out, "ess.png"))
    figures.render_innovation(
        os.path.join(out, "innovations.csv"),
        os.path.join(out, "innovation.png"),
        dt=config.path.dt,
    )
