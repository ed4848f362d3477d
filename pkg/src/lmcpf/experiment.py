"""Cycled twin experiments: truth run, synthetic observations, local analyses,
free forecasts and output files.

Random streams are derived from ``(seed, purpose, cycle, point)`` through
``numpy.random.SeedSequence`` so that the result never depends on the order
in which analysis points are processed.
"""
import csv
import json
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import EnsembleInit, ExperimentConfig, to_dict
from .diagnostics import CycleDiagnostics, crps_field, rmse_and_bias, spread_stats
from .ensemble import build_ens_space
from .errors import AllWeightsZero, NonFiniteState
from .filters import (
    LocalDraws,
    analyze_point,
    assemble_global,
    pf_weights_approx,
    pf_weights_exact,
    select_local_obs,
)
from .models import ModelKind, integrate, propagate
from .obs import apply_H, generate_twin_obs, observation_network, qc_filter

PURPOSES = {"truth": 1, "init": 2, "obs": 3, "resample": 4, "noise": 5}


def stream(seed, purpose, cycle=0, point=0):
    """Independent generator for one (seed, purpose, cycle, point) counter."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), PURPOSES[purpose], int(cycle), int(point)]))


def analysis_points(cfg):
    n = cfg.model.n
    if cfg.model.kind is ModelKind.LORENZ63:
        return np.arange(n, dtype=float)
    return np.arange(0, n, cfg.filter.analysis_stride, dtype=float)


def initial_truth(cfg):
    spec = cfg.model
    rng = stream(cfg.seed, "truth")
    if spec.kind is ModelKind.LORENZ63:
        x0 = np.ones(3)
    else:
        x0 = np.full(spec.n, spec.forcing)
    x0 = x0 + 0.01 * rng.standard_normal(spec.n)
    return integrate(spec, x0, cfg.burn_in_steps)


def initial_ensemble(cfg, truth):
    rng = stream(cfg.seed, "init")
    n, L = cfg.model.n, cfg.members
    if cfg.ensemble_init is EnsembleInit.IDENTICAL_COPIES:
        x = truth + cfg.init_spread * rng.standard_normal(n)
        return np.repeat(x[:, None], L, axis=1)
    return truth[:, None] + cfg.init_spread * rng.standard_normal((n, L))


def obs_template(cfg):
    return observation_network(cfg.model.n, cfg.obs.every, cfg.obs.err_var, cfg.obs.offset,
                               cyclic=cfg.model.cyclic)


@dataclass
class AnalysisStep:
    analysis: np.ndarray
    locals: list
    qc_mask: np.ndarray
    rho_state: np.ndarray
    points: np.ndarray


def draws_for(cfg, cycle, point_index, shared=None):
    """Stratified offsets and Gaussian matrix for one analysis point.

    ``shared`` holds the cycle-wide draws, computed once before the fan-out.
    """
    L = cfg.members
    fseed = cfg.filter_seed
    if shared is None:
        shared = shared_draws(cfg, cycle)
    if cfg.filter.shared_resampling_draws:
        uniform = shared.uniform
    else:
        uniform = stream(fseed, "resample", cycle, point_index + 1).random(L)
    if cfg.filter.shared_noise:
        normal = shared.normal
    else:
        normal = stream(fseed, "noise", cycle, point_index + 1).standard_normal((L, L))
    return LocalDraws(uniform=uniform, normal=normal)


def shared_draws(cfg, cycle):
    L = cfg.members
    return LocalDraws(uniform=stream(cfg.filter_seed, "resample", cycle, 0).random(L),
                      normal=stream(cfg.filter_seed, "noise", cycle, 0).standard_normal((L, L)))


def analysis_step(cfg, ens_b, batch, cycle, rho_state, executor=None, point_order=None):
    """Run every local analysis of one cycle and assemble the global ensemble."""
    fcfg = cfg.filter
    hx = apply_H(batch, ens_b)
    ybar = hx.mean(axis=1)
    if fcfg.k_qc is not None:
        spread_obs = hx.std(axis=1, ddof=1)
        mask = qc_filter(batch, ybar, spread_obs, fcfg.k_qc).mask
    else:
        mask = np.ones(batch.m, dtype=bool)
    used = batch.subset(mask)
    Yp = (hx - ybar[:, None])[mask]
    innov = used.values - ybar[mask]

    points = analysis_points(cfg)
    order = range(points.size) if point_order is None else point_order

    shared = shared_draws(cfg, cycle)

    def run(i):
        obs = select_local_obs(Yp, innov, used, fcfg.loc, points[i])
        return i, analyze_point(obs, fcfg, draws_for(cfg, cycle, i, shared), rho_state[i])

    results = list(executor.map(run, order)) if executor is not None else [run(i) for i in order]
    locals_ = [None] * points.size
    for i, res in results:
        locals_[i] = res
    new_rho = np.array([la.rho for la in locals_])
    W = np.stack([la.W for la in locals_])
    ens_a = assemble_global(ens_b, W, points, cyclic=cfg.model.cyclic)
    return AnalysisStep(ens_a, locals_, mask, new_rho, points)


@dataclass
class CycleRecord:
    cycle: int
    truth: np.ndarray
    background: np.ndarray
    analysis: np.ndarray
    obs_values: np.ndarray
    qc_mask: np.ndarray
    diagnostics: CycleDiagnostics
    rmse_free: float
    transforms: np.ndarray | None = field(default=None, repr=False)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list

    def scores(self, name, after_spinup=True):
        start = self.config.spinup_cycles if after_spinup else 0
        return np.array([getattr(r.diagnostics, name) for r in self.records[start:]])

    def mean_score(self, name):
        vals = self.scores(name)
        return math.fsum(vals) / vals.size

    @property
    def rmse_free(self):
        vals = [r.rmse_free for r in self.records[self.config.spinup_cycles:]]
        return math.fsum(vals) / len(vals)


def _diagnose(cycle, truth, ens_b, ens_a, step, n_obs):
    rmse_a, bias_a = rmse_and_bias(ens_a.mean(axis=1), truth)
    rmse_b, _ = rmse_and_bias(ens_b.mean(axis=1), truth)
    s_mean, s_min, s_max = spread_stats(ens_a)
    pick = lambda name: np.array([getattr(la, name) for la in step.locals], dtype=float)
    return CycleDiagnostics(
        cycle=cycle, rmse_a=rmse_a, rmse_b=rmse_b, bias_a=bias_a, crps_a=crps_field(ens_a, truth),
        spread_mean=s_mean, spread_min=s_min, spread_max=s_max,
        n_obs_passed_qc=int(step.qc_mask.sum()), n_obs_total=n_obs,
        d_C=pick("d_C"), d_min=pick("d_min"), shift_norm=pick("shift_norm"),
        rho=pick("rho"), sigma=pick("sigma"),
    )


def run_cycle_experiment(cfg, point_order=None, callback=None):
    spec = cfg.model
    truth = initial_truth(cfg)
    ens = initial_ensemble(cfg, truth)
    free = ens.copy()
    template = obs_template(cfg)
    rho_state = np.full(analysis_points(cfg).size, math.nan)
    records = []
    executor = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for k in range(cfg.cycles):
            try:
                truth = propagate(spec, truth[:, None])[:, 0]
                ens_b = propagate(spec, ens)
                free = propagate(spec, free)
            except NonFiniteState as err:
                err.cycle = k
                raise
            batch = generate_twin_obs(truth, template, stream(cfg.seed, "obs", k))
            step = analysis_step(cfg, ens_b, batch, k, rho_state, executor, point_order)
            rho_state = step.rho_state
            ens = step.analysis
            diag = _diagnose(k, truth, ens_b, ens, step, batch.m)
            rmse_free, _ = rmse_and_bias(free.mean(axis=1), truth)
            transforms = None
            if k in cfg.dump_matrices_cycles:
                transforms = np.stack([la.W for la in step.locals])
            rec = CycleRecord(k, truth, ens_b, ens, batch.values, step.qc_mask, diag, rmse_free, transforms)
            records.append(rec)
            if callback is not None:
                callback(rec)
    finally:
        if executor is not None:
            executor.shutdown()
    return ExperimentResult(cfg, records)


# -- forecasts ------------------------------------------------------------------------


@dataclass
class ForecastScore:
    lead: int
    launches: int
    rmse: float
    bias: float
    crps: float
    spread: float


def run_forecasts(cfg, result):
    """Free ensemble forecasts from every post-spinup analysis, scored vs truth."""
    records = result.records
    truths = [r.truth for r in records]
    leads = sorted(set(cfg.forecast_lead_cycles))
    acc = {lead: {"rmse": [], "bias": [], "crps": [], "spread": []} for lead in leads}
    for k in range(cfg.spinup_cycles, len(records)):
        ens = records[k].analysis
        done = 0
        for lead in leads:
            if k + lead >= len(records):
                break
            ens = propagate(cfg.model, ens, steps=(lead - done) * cfg.model.steps_per_cycle)
            done = lead
            truth = truths[k + lead]
            rmse, bias = rmse_and_bias(ens.mean(axis=1), truth)
            acc[lead]["rmse"].append(rmse)
            acc[lead]["bias"].append(bias)
            acc[lead]["crps"].append(crps_field(ens, truth))
            acc[lead]["spread"].append(spread_stats(ens)[0])
    table = []
    for lead in leads:
        a = acc[lead]
        count = len(a["rmse"])
        mean = (lambda v: math.fsum(v) / len(v)) if count else (lambda v: math.nan)
        table.append(ForecastScore(lead, count, mean(a["rmse"]), mean(a["bias"]), mean(a["crps"]),
                                   mean(a["spread"])))
    return table


# -- kappa sweep of particle weights --------------------------------------------------


def compare_weights_curve(q, kappas):
    """Exact and approximate normalized weights along a sweep of kappa.

    Returns rows ``(kappa, member, exact, approx)``; weights are normalized to
    sum one here, as in a probability plot.
    """
    L = q.L
    rows = []
    for kappa in kappas:
        qk = q.with_gamma(kappa / (L - 1))
        exact = pf_weights_exact(qk) / L
        approx = pf_weights_approx(qk) / L
        rows.extend((float(kappa), j, float(exact[j]), float(approx[j])) for j in range(L))
    return rows


def instance_from_record(cfg, record, point_index=0, template=None):
    """Ensemble-space quantities at one analysis point of a stored cycle."""
    template = obs_template(cfg) if template is None else template
    batch = template.with_values(record.obs_values).subset(record.qc_mask)
    hx = apply_H(batch, record.background)
    ybar = hx.mean(axis=1)
    point = analysis_points(cfg)[point_index]
    obs = select_local_obs(hx - ybar[:, None], batch.values - ybar, batch, cfg.filter.loc, point)
    return build_ens_space(obs.Y, obs.rinv, obs.innovation, cfg.filter.kappa / (cfg.members - 1))


def save_instance(q, path):
    np.savez(path, A=q.A, C=q.C, rhs=q.rhs, gamma=q.gamma)


def load_instance(path):
    from .ensemble import EnsembleSpaceQuantities

    with np.load(path) as f:
        A, C, rhs, gamma = f["A"], f["C"], f["rhs"], float(f["gamma"])
    lam, U = np.linalg.eigh(0.5 * (A + A.T))
    lam = np.maximum(lam, 0.0)
    rank = int(np.sum(lam > 1e-10 * lam[-1])) if lam[-1] > 0 else 0
    return EnsembleSpaceQuantities(A=A, C=C, gamma=gamma, rankA=rank, eigvals=lam, eigvecs=U, rhs=rhs)


# -- output files ---------------------------------------------------------------------

CYCLE_COLUMNS = CycleDiagnostics.SCALAR_FIELDS + ("rmse_free",)
POINT_COLUMNS = ("cycle", "point", "location") + CycleDiagnostics.POINT_FIELDS


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def manifest(cfg, extra=None):
    out = {
        "config": to_dict(cfg),
        "seed": cfg.seed,
        "versions": {"lmcpf": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }
    if extra:
        out.update(extra)
    return out


def write_outputs(result, out_dir):
    cfg = result.config
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = analysis_points(cfg)

    write_csv(out / "cycles.csv", CYCLE_COLUMNS,
              ([getattr(r.diagnostics, c) for c in CycleDiagnostics.SCALAR_FIELDS] + [r.rmse_free]
               for r in result.records))

    def point_rows():
        for r in result.records:
            d = r.diagnostics
            for i, loc in enumerate(points):
                yield [r.cycle, i, loc] + [getattr(d, c)[i] for c in CycleDiagnostics.POINT_FIELDS]

    write_csv(out / "points.csv", POINT_COLUMNS, point_rows())

    for r in result.records:
        if r.transforms is None:
            continue
        mdir = out / "matrices"
        mdir.mkdir(exist_ok=True)
        for i, W in enumerate(r.transforms):
            write_csv(mdir / f"W_cycle{r.cycle:05d}_point{i:03d}.csv", [f"col{j}" for j in range(W.shape[1])], W)

    if cfg.save_states:
        np.savez(out / "states.npz",
                 truth=np.stack([r.truth for r in result.records]),
                 background=np.stack([r.background for r in result.records]),
                 analysis=np.stack([r.analysis for r in result.records]),
                 obs_values=np.stack([r.obs_values for r in result.records]),
                 qc_mask=np.stack([r.qc_mask for r in result.records]))
    (out / "manifest.json").write_text(json.dumps(manifest(cfg), indent=2, sort_keys=True) + "\n")


def write_forecast_table(table, path):
    write_csv(path, ("lead", "launches", "rmse", "bias", "crps", "spread"),
              ([s.lead, s.launches, s.rmse, s.bias, s.crps, s.spread] for s in table))


def load_states(out_dir):
    with np.load(Path(out_dir) / "states.npz") as f:
        return {k: f[k] for k in f.files}


def records_from_states(cfg, states):
    """Lightweight records rebuilt from ``states.npz`` (diagnostics left empty)."""
    recs = []
    for k in range(states["truth"].shape[0]):
        recs.append(CycleRecord(k, states["truth"][k], states["background"][k], states["analysis"][k],
                                states["obs_values"][k], states["qc_mask"][k].astype(bool), None, math.nan))
    return ExperimentResult(cfg, recs)


def recompute_point_diagnostics(cfg, states):
    """d_C, d_min and raw rho from saved backgrounds and observations.

    Yields rows ``(cycle, point, location, d_C, d_min, rho_raw, n_obs)``.
    """
    from .diagnostics import d_C, d_min
    from .filters import rho_spread

    template = obs_template(cfg)
    points = analysis_points(cfg)
    L = cfg.members
    for k in range(states["truth"].shape[0]):
        batch = template.with_values(states["obs_values"][k]).subset(states["qc_mask"][k].astype(bool))
        ens_b = states["background"][k]
        hx = apply_H(batch, ens_b)
        ybar = hx.mean(axis=1)
        Yp = hx - ybar[:, None]
        innov = batch.values - ybar
        for i, loc in enumerate(points):
            obs = select_local_obs(Yp, innov, batch, cfg.filter.loc, loc)
            try:
                q = build_ens_space(obs.Y, obs.rinv, obs.innovation, cfg.filter.kappa / (L - 1))
                dc, dm = d_C(q), d_min(q)
            except AllWeightsZero:
                dc = dm = 0.0
            hbht = np.einsum("ij,ij->i", obs.Y, obs.Y) / (L - 1)
            rho = rho_spread(obs.innovation, obs.err_var, hbht, obs.loc_weights)
            yield (k, i, loc, dc, dm, rho, obs.m)

