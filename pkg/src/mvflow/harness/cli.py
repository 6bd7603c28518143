"""Command line entry point.

    mvflow simulate           --config C [--seed S] [--out D]
    mvflow run-filter         --config C [--seed S] [--out D] [--threads K]
    mvflow convergence-study  --config C [--seed S] [--out D] [--threads K]
    mvflow stability-report   --config C [--seed S] [--out D]
    mvflow compare-exact      --config C [--seed S] [--out D] [--threads K]

Every file carries the config hash and the seed; ``--threads`` changes
wall time only. Files are staged and published together, so a failed
command leaves no partial output.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .. import __version__
from .. import association as assoc
from ..analysis import CSV_COLUMNS, AssociationRunner, MeanfieldRunner, run_trials
from ..bernoulli import BernoulliModel, likelihood_bounds
from ..exceptions import ConfigError, MvflowError
from ..flow import MassMeasurePair, exact_reference_flow
from ..meanfield import run_meanfield
from ..phd import PhdModel, phd_mass_bounds
from .. import stability as stab
from .config import ScenarioConfig, load_config, vector
from .io import OutputSet, csv_text, json_text, meta_line
from .scenario import simulate_bernoulli_scenario, simulate_phd_scenario

FILTER_COLUMNS = ("trial", "step", "statistic", "value")


def scenario(cfg: ScenarioConfig):
    """``(truth, observations)``; truth is ``None`` for a fixed record."""
    if cfg.record is not None:
        return None, cfg.record[:cfg.horizon]
    seed = cfg.obs_seed
    mass, law = cfg.init
    if cfg.kind == "bernoulli":
        return simulate_bernoulli_scenario(cfg.spec, cfg.horizon, seed, mass, law, cfg.max_count)
    return simulate_phd_scenario(cfg.spec, cfg.horizon, seed, int(round(mass)), law, cfg.max_count)


def finite_model(cfg: ScenarioConfig, observations):
    if cfg.kind == "bernoulli":
        return BernoulliModel(cfg.spec, observations)
    return PhdModel(cfg.spec, observations)


def _algebra(cfg: ScenarioConfig):
    return assoc.GaussianAlgebra(cfg.spec) if cfg.state == "gaussian" else assoc.FiniteAlgebra(cfg.spec)


def _components(cfg: ScenarioConfig):
    return [cfg.init]


def truth_rows(truth):
    for st in truth:
        for tid, x, hit in st.targets:
            yield (st.step, "target", tid, x, int(hit))
        for c in st.clutter:
            yield (st.step, "clutter", "", c, 0)


def obs_rows(observations):
    for n, Y in enumerate(observations):
        for i, y in enumerate(Y.points):
            yield (n, i, y)


def _intensity_rows(trial, step, m, summary: dict):
    yield (trial, step, "mass", m)
    if "weights" in summary:
        for j, v in enumerate(summary["weights"]):
            yield (trial, step, f"eta[{j}]", v)
    else:
        mean = np.asarray(summary["mean"])
        cov = np.atleast_2d(summary["cov"])
        for i, v in enumerate(mean):
            yield (trial, step, f"mean[{i}]", v)
        for i in range(cov.shape[0]):
            for j in range(cov.shape[1]):
                yield (trial, step, f"cov[{i}][{j}]", cov[i, j])


def _association_trial(cfg, observations, trial):
    alg = _algebra(cfg)
    if cfg.algorithm == "mixed":
        alg = assoc.ParticleAlgebra(alg, cfg.N_inner)
        A = assoc.inner_initial_measure(_components(cfg), alg, cfg.seed, trial)
    else:
        A = assoc.initial_measure(_components(cfg))
    out = []
    for n in range(cfg.horizon + 1):
        out.append(A)
        if n == cfg.horizon:
            break
        if cfg.algorithm == "exact":
            A = assoc.omega_step(A, observations[n], alg)
        else:
            A = assoc.mixed_step(A, observations[n], alg, cfg.N, cfg.seed, trial)
    return alg, out


def _summary_of(A, alg):
    base = alg.base if isinstance(alg, assoc.ParticleAlgebra) else alg
    if isinstance(base, assoc.FiniteAlgebra):
        _, eta = assoc.finite_intensity(A, alg)
        return {"weights": eta}
    if isinstance(alg, assoc.ParticleAlgebra):
        pts = np.concatenate([h.state for h in A.hypotheses])
        w = np.concatenate([np.full(h.state.shape[0], h.weight / h.state.shape[0]) for h in A.hypotheses])
        mean = w @ pts
        d = pts - mean
        return {"mean": mean, "cov": (w[:, None] * d).T @ d}
    w, means, covs = assoc.gaussian_mixture(A)
    _, mean, cov = assoc.mixture_moments(w, means, covs)
    return {"mean": mean, "cov": cov}


def _filter_trial(args):
    cfg, observations, trial = args
    rows = []
    if cfg.algorithm == "meanfield":
        model = finite_model(cfg, observations)
        init = MassMeasurePair.from_dense(*cfg.init)
        ref = exact_reference_flow(model, cfg.horizon, init)
        ens = run_meanfield(model, init, cfg.N, cfg.seed, cfg.horizon, trial, cfg.eps, cfg.variant)
        for e, r in zip(ens, ref):
            rows.extend(_intensity_rows(trial, e.step, e.mass, {"weights": e.eta}))
            rows.append((trial, e.step, "tv_to_oracle", 0.5 * float(np.abs(e.eta - r.weights).sum())))
        return rows
    if cfg.algorithm == "exact" and cfg.state == "finite":
        model = finite_model(cfg, observations)
        for p in exact_reference_flow(model, cfg.horizon, MassMeasurePair.from_dense(*cfg.init)):
            rows.extend(_intensity_rows(trial, p.step, p.mass, {"weights": p.weights}))
        return rows
    alg, flows = _association_trial(cfg, observations, trial)
    for n, A in enumerate(flows):
        rows.extend(_intensity_rows(trial, n, A.mass, _summary_of(A, alg)))
    return rows


def _map(fn, jobs, threads):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def cmd_simulate(cfg, out, threads):
    truth, observations = scenario(cfg)
    h, s = cfg.config_hash, cfg.seed
    if truth is not None:
        out.add("truth.csv", csv_text(("step", "kind", "id", "state", "detected"), truth_rows(truth), h, s))
    out.add("obs.csv", csv_text(("step", "index", "value"), obs_rows(observations), h, s))


def cmd_run_filter(cfg, out, threads):
    _, observations = scenario(cfg)
    trials = cfg.trials if cfg.algorithm != "exact" else 1
    parts = _map(_filter_trial, [(cfg, observations, t) for t in range(trials)], threads)
    rows = [r for part in parts for r in part]
    h, s = cfg.config_hash, cfg.seed
    out.add("obs.csv", csv_text(("step", "index", "value"), obs_rows(observations), h, s))
    out.add("filter.csv", csv_text(FILTER_COLUMNS, rows, h, s))


def _runner(cfg, observations):
    if cfg.algorithm == "meanfield":
        return MeanfieldRunner(finite_model(cfg, observations), MassMeasurePair.from_dense(*cfg.init),
                               eps=cfg.eps, variant=cfg.variant)
    if cfg.algorithm in ("association", "mixed"):
        return AssociationRunner(_algebra(cfg), _components(cfg), observations,
                                 n_inner=cfg.N_inner if cfg.algorithm == "mixed" else None)
    raise ConfigError("a study needs a sampled algorithm (meanfield, association or mixed)")


def _study(cfg, out, threads, N_list, trials, horizon):
    _, observations = scenario(cfg)
    if len(observations) < horizon:
        raise ConfigError("study horizon exceeds the observation record")
    runner = _runner(cfg, observations)
    model = f"{cfg.kind}-{cfg.state}"
    report = run_trials(runner, N_list, trials, horizon, cfg.seed, threads=threads, algorithm=cfg.algorithm,
                        model=model)
    h, s = cfg.config_hash, cfg.seed
    out.add("errors.csv", csv_text(CSV_COLUMNS, report.rows(), h, s))
    return report


def cmd_convergence(cfg, out, threads):
    st = cfg.study
    N_list = [int(v) for v in vector(st.get("N_list", "100,1000"))]
    trials = int(st.get("trials", cfg.trials))
    horizon = int(st.get("horizon", cfg.horizon))
    report = _study(cfg, out, threads, N_list, trials, horizon)
    out.add("summary.json", json_text(report.summary(), cfg.config_hash, cfg.seed))


def cmd_compare(cfg, out, threads):
    report = _study(cfg, out, threads, [cfg.N], cfg.trials, cfg.horizon)
    out.add("summary.json", json_text(report.summary(), cfg.config_hash, cfg.seed))


def _stability_bernoulli(cfg, observations, sec):
    step = cfg.spec.at(0)
    if not cfg.spec.homogeneous:
        raise ConfigError("the stability report needs a time-homogeneous Bernoulli spec")
    m = int(sec.get("m", "1"))
    T = int(sec.get("horizon", cfg.horizon))
    s_lo, s_hi = step.survival_bounds
    lik = step.likelihood
    counts = [len(Y) for Y in observations[:T]]
    bounds = [likelihood_bounds(step.detection.min(), step.detection.max(), lik.min(), lik.max(),
                                step.clutter.min(), step.clutter.max(), c) for c in counts]
    g_lo = np.array([b[0] for b in bounds])
    g_hi = np.array([b[1] for b in bounds])
    eps_m = stab.check_mixing([step.motion] * m, m)[0]
    params = stab.bernoulli_theorem_constants(s_lo, s_hi, step.birth_mass, g_lo, g_hi, eps_m, m, horizon=T)
    inputs = {"model": "bernoulli", "m": m, "horizon": T, "s_lo": s_lo, "s_hi": s_hi, "mu1": step.birth_mass,
              "g_lo": g_lo, "g_hi": g_hi, "eps_m": eps_m, "observation_counts": counts}
    return params, inputs


def _stability_phd(cfg, observations, sec):
    spec = cfg.spec
    r, d = spec.scalars()
    T = int(sec.get("horizon", cfg.horizon))
    y_max = int(sec.get("y_max", max(len(Y) for Y in observations[:T])))
    h, obs_bounds = stab.phd_declared_inputs(spec, observations[:T])
    m_lo, m_hi = phd_mass_bounds(spec, cfg.init[0], y_max, observations[:T])
    beta = stab.dobrushin_beta(spec.merged_motion)
    params = stab.phd_theorem_constants(r, d, h, spec.birth_mass, m_lo, m_hi, beta, obs_bounds, gamma0=cfg.init[0])
    inputs = {"model": "phd", "horizon": T, "r": r, "d": d, "h": h, "mu1": spec.birth_mass, "m_lo": m_lo,
              "m_hi": m_hi, "beta_M": beta, "y_max": y_max}
    return params, inputs


def cmd_stability(cfg, out, threads):
    if cfg.state != "finite":
        raise ConfigError("the stability report needs a finite state space")
    _, observations = scenario(cfg)
    sec = cfg.stability
    if cfg.kind == "bernoulli":
        params, inputs = _stability_bernoulli(cfg, observations, sec)
    else:
        params, inputs = _stability_phd(cfg, observations, sec)
    T = inputs["horizon"]
    model = finite_model(cfg, observations)
    init = MassMeasurePair.from_dense(*cfg.init)
    law2 = vector(sec["init2_law"]) if "init2_law" in sec else np.roll(cfg.init[1], 1)
    init2 = MassMeasurePair.from_dense(float(sec.get("init2_mass", cfg.init[0])), law2 / law2.sum())
    fit = stab.empirical_decay_rate(model, init, init2, T)
    report = stab.stability_report(inputs, params, fit)
    if cfg.kind == "phd":
        report["crude"] = stab._jsonable(params.details.get("crude"))
    out.add("stability.json", json_text(report, cfg.config_hash, cfg.seed))


COMMANDS = {
    "simulate": cmd_simulate,
    "run-filter": cmd_run_filter,
    "convergence-study": cmd_convergence,
    "stability-report": cmd_stability,
    "compare-exact": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mvflow", description="Measure-valued filtering flows and particle studies.")
    ap.add_argument("--version", action="version", version=f"mvflow {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI configuration file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker processes (never changes results)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config, args.seed)
        out = OutputSet(args.out)
        out.add("config.snapshot", meta_line(cfg.config_hash, cfg.seed) + cfg.snapshot())
        COMMANDS[args.command](cfg, out, args.threads)
        for path in out.publish():
            print(path)
    except ConfigError as err:
        print(f"mvflow: invalid config: {err}", file=sys.stderr)
        return 2
    except MvflowError as err:
        print(f"mvflow: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
