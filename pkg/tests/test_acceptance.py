"""Acceptance suite: one test per criterion, each records a PASS/FAIL line.

The lines are repeated in the terminal summary under "acceptance criteria".
"""
import json
import math
import os
import re
import time

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from conftest import (random_bernoulli_step, random_phd_spec, random_records, record_criterion, simplex,
                      stochastic)
from mvflow import association as assoc
from mvflow import stability as stab
from mvflow.analysis import mann_kendall, run_trials
from mvflow.bernoulli import BernoulliModel, bernoulli_alternating_mass, bernoulli_measure_step, theta
from mvflow.flow import MassMeasurePair, exact_reference_flow
from mvflow.harness import cli
from mvflow.harness.cli import _runner, scenario
from mvflow.harness.config import load_config
from mvflow.meanfield import ParticleEnsemble, local_field, mf_step, run_meanfield
from mvflow.observations import ObservationSet
from mvflow.phd import PhdModel, phd_flow_step, phd_mass_bounds, phd_update_predict

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def config(name):
    return load_config(os.path.join(CONFIGS, name + ".ini"))


def test_criterion_01_closed_form_masses():
    t0 = time.perf_counter()
    g = np.random.default_rng(101)
    T = 50
    errs = {}

    # constant mass: s = mu(1) everywhere
    s = 0.35
    step = random_bernoulli_step(g, K=4, L=3, survival=np.full(4, s), birth=s * simplex(g, 4))
    obs = random_records(g, 3, T)
    flow = exact_reference_flow(BernoulliModel(step, obs), T, MassMeasurePair.from_dense(0.8, simplex(g, 4)))
    errs["constant"] = max(abs(p.mass - s) for p in flow[1:])

    # mu = 0 and s = 1: gamma_n(1) = theta_{prod eta_p(g_p)}(gamma_0(1))
    step = random_bernoulli_step(g, K=4, L=3, survival=np.ones(4), birth=np.zeros(4))
    obs = random_records(g, 3, T, max_count=2)
    model = BernoulliModel(step, obs)
    flow = exact_reference_flow(model, T, MassMeasurePair.from_dense(0.6, simplex(g, 4)))
    prod, worst = 1.0, 0.0
    for n in range(T):
        prod *= flow[n].weights @ model.likelihood(n)
        worst = max(worst, abs(flow[n + 1].mass - theta(prod, 0.6)))
    errs["theta"] = worst

    # s = 0 and mu(1) = 1: alternating formula
    step = random_bernoulli_step(g, K=4, L=3, survival=np.zeros(4), birth=simplex(g, 4))
    obs = random_records(g, 3, T)
    init = MassMeasurePair.from_dense(0.4, simplex(g, 4))
    flow = exact_reference_flow(BernoulliModel(step, obs), T, init)
    closed = bernoulli_alternating_mass(step, obs, 0.4, init.weights, T)
    errs["alternating"] = float(np.abs(np.array([p.mass for p in flow]) - closed).max())

    elapsed = time.perf_counter() - t0
    ok = max(errs.values()) <= 1e-12 and elapsed < 1.0
    detail = " ".join(f"{k}={v:.1e}" for k, v in errs.items())
    record_criterion(1, ok, f"max errors {detail} ({elapsed:.2f}s)")
    assert ok


def test_criterion_02_representation_equivalences():
    t0 = time.perf_counter()
    g = np.random.default_rng(202)
    worst_b = worst_p = 0.0
    for _ in range(250):
        step = random_bernoulli_step(g)
        m, eta = g.uniform(0.01, 0.99), simplex(g, step.size)
        for Y in random_records(g, step.clutter.size, 4):
            a = bernoulli_measure_step(m, eta, Y, step, route="mckean")
            b = bernoulli_measure_step(m, eta, Y, step, route="hatQ")
            worst_b = max(worst_b, float(np.abs(a - b).max()))
        spec = random_phd_spec(g)
        m, eta = g.uniform(0.1, 6.0), simplex(g, spec.size)
        for Y in random_records(g, spec.clutter.size, 4):
            merged = phd_flow_step(m, eta, Y, spec)
            _, split = phd_update_predict(m, eta, Y, spec)
            worst_p = max(worst_p, abs(merged.mass - split.mass) / merged.mass,
                          float(np.abs(merged.weights - split.weights).max()))
    elapsed = time.perf_counter() - t0
    ok = worst_b <= 1e-10 and worst_p <= 1e-10 and elapsed < 30.0
    record_criterion(2, ok, f"250 specs x 4 sets: bernoulli {worst_b:.1e}, phd {worst_p:.1e} ({elapsed:.1f}s)")
    assert ok


def test_criterion_03_phd_mass_envelope():
    t0 = time.perf_counter()
    g = np.random.default_rng(303)
    T, y_max, specs, exits = 500, 3, 0, 0
    while specs < 20:
        spec = random_phd_spec(g, homogeneous=True)
        r, d = spec.scalars()
        if r * (1 - d) >= 1 or spec.birth_mass <= 0:
            continue
        specs += 1
        obs = random_records(g, spec.clutter.size, T, max_count=y_max)
        m_lo, _ = phd_mass_bounds(spec, 0.0, y_max, obs)
        gamma0 = m_lo + g.uniform(0, 1) * (r * y_max + spec.birth_mass) / (1 - r * (1 - d))
        m_lo, m_hi = phd_mass_bounds(spec, gamma0, y_max, obs)
        model = PhdModel(spec, obs)
        init = MassMeasurePair.from_dense(gamma0, simplex(g, spec.size))
        masses = [p.mass for p in exact_reference_flow(model, T, init)]
        masses += [e.mass for e in run_meanfield(model, init, 500, specs, T)]
        exits += sum(not (m_lo * (1 - 1e-12) <= m <= m_hi * (1 + 1e-12)) for m in masses)
    elapsed = time.perf_counter() - t0
    ok = exits == 0 and elapsed < 60.0
    record_criterion(3, ok, f"{specs} specs x {T} steps, exact and N=500: {exits} exits ({elapsed:.1f}s)")
    assert ok


@pytest.mark.slow
def test_criterion_04_meanfield_convergence():
    t0 = time.perf_counter()
    slopes = {}
    monotone = True
    for name in ("bernoulli_standard", "phd_finite"):
        cfg = config(name)
        _, obs = scenario(cfg)
        rep = run_trials(_runner(cfg, obs), [100, 1000, 10000, 100000], 1000, 5, cfg.seed)
        slopes[name] = (rep.slope("mass"), rep.slope("value"))
        monotone &= rep.moments_monotone()
    elapsed = time.perf_counter() - t0
    ok = all(abs(v + 0.5) <= 0.1 for pair in slopes.values() for v in pair) and monotone and elapsed < 600
    detail = ", ".join(f"{k} mass {a:.3f} eta {b:.3f}" for k, (a, b) in slopes.items())
    record_criterion(4, ok, f"slopes {detail} ({elapsed:.0f}s)")
    assert ok


def _profile_trend(name, N=10000, trials=1000, horizon=200):
    cfg = config(name)
    _, obs = scenario(cfg)
    rep = run_trials(_runner(cfg, obs), [N], trials, horizon, cfg.seed)
    return [mann_kendall(rep.profile(which)[20:horizon + 1])[1] for which in ("mass", "value")]


@pytest.mark.slow
def test_criterion_05_uniform_in_time():
    t0 = time.perf_counter()
    p_mass, p_eta = _profile_trend("bernoulli_homogeneous")
    c_mass, c_eta = _profile_trend("bernoulli_identity")
    elapsed = time.perf_counter() - t0
    ok = p_mass > 0.05 and p_eta > 0.05 and elapsed < 600
    record_criterion(5, ok, f"homogeneous MK p mass {p_mass:.3f} eta {p_eta:.3f}; "
                            f"identity control (no gate) p mass {c_mass:.3f} eta {c_eta:.3f} ({elapsed:.0f}s)")
    assert ok


def test_criterion_06_contraction_bounds():
    t0 = time.perf_counter()
    g = np.random.default_rng(606)
    outside = 0
    for _ in range(250):
        K = int(g.integers(2, 6))
        T = int(g.integers(3, 12))
        m = int(g.integers(1, 3))
        kernels = [stochastic(g, K, floor=0.2) for _ in range(T)]
        pots = [g.uniform(0.5, 2.0, K) for _ in range(T)]
        p = int(g.integers(0, T - m))
        outside += not stab.fk_semigroup_quantities(pots, kernels, p, T - 1, m).within_bounds
    dob = 0.0
    for p, q in g.random((1000, 2)):
        dob = max(dob, abs(stab.dobrushin_beta([[p, 1 - p], [q, 1 - q]]) - abs(p - q)))
    elapsed = time.perf_counter() - t0
    ok = outside == 0 and dob <= 1e-14 and elapsed < 60
    record_criterion(6, ok, f"250 instances, {outside} violations; two-state Dobrushin error {dob:.1e} "
                            f"({elapsed:.1f}s)")
    assert ok


def test_criterion_07_stability_composition(tmp_path):
    t0 = time.perf_counter()
    g = np.random.default_rng(707)
    bad = cases = 0
    while cases < 200:
        lam1, lam2 = g.uniform(0.1, 3.0, 2)
        if abs(lam1 - lam2) < 1e-3:
            continue
        cases += 1
        c1, c2 = g.uniform(0.5, 3.0, 2)
        lo, hi = min(lam1, lam2), max(lam1, lam2)
        rhs = (1 - math.exp(-lo)) * (math.exp(-lo) - math.exp(-hi))
        t1 = g.uniform(0.01, 1.0)
        t2 = g.uniform(0, 1) * rhs / (c1 * c2 * t1)
        comp = stab.compose_rates(c1, lam1, c2, lam2, t1, t2)
        a1, a2, tau1, tau2 = stab.geometric_tables(c1, lam1, c2, lam2, t1, t2, 30)
        for p in (0, 3):
            for n in range(p, 30, 2):
                s = stab.finite_horizon_sums(a1, a2, tau1, tau2, p, n)
                for k in ("c11", "c12", "c21", "c22"):
                    bad += s[k] > getattr(comp, k) * math.exp(-comp.lam * (n - p)) * (1 + 1e-9) + 1e-300
    out = tmp_path / "stability"
    rc = cli.main(["stability-report", "--config", os.path.join(CONFIGS, "bernoulli_homogeneous.ini"),
                   "--out", str(out)])
    rep = json.load(open(out / "stability.json")) if rc == 0 else {}
    lam = rep.get("lambda") or float("nan")
    lam_hat = (rep.get("empirical") or {}).get("lam_hat") or float("nan")
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and lam > 0 and lam_hat >= lam - 0.05 and elapsed < 120
    record_criterion(7, ok, f"{cases} geometric cases, {bad} violations; lambda {lam:.4f}, "
                            f"lambda_hat {lam_hat:.3f} ({elapsed:.1f}s)")
    assert ok


def _mixture_density(comps, pts):
    return sum(w * multivariate_normal(m, P).pdf(pts) for w, m, P in comps)


def test_criterion_08_association_exactness():
    t0 = time.perf_counter()
    cfg = config("phd_gaussian")
    spec = cfg.spec
    alg = assoc.GaussianAlgebra(spec)
    _, cfg_obs = scenario(cfg)
    g = np.random.default_rng(808)
    records = [cfg_obs] + [[ObservationSet(g.normal(0, 3, (int(g.integers(0, 4)), 1)), n) for n in range(4)]
                           for _ in range(3)]
    records.append([ObservationSet(g.normal(0, 3, (3, 1)), n) for n in range(4)])
    pts = g.normal(0, 3, (50, 2))
    worst = 0.0
    m0, s0 = cfg.init
    A0 = assoc.initial_measure([(m0, s0)])
    for obs in records:
        flows = assoc.enumerate_association(A0, obs, alg)
        comps = [(m0, s0.mean, s0.cov)]
        for n in range(4):
            comps = assoc.gaussian_phd_step(comps, obs[n], spec)
            w, mu, P = assoc.gaussian_mixture(flows[n + 1])
            mass_ref = sum(c[0] for c in comps)
            got = _mixture_density(list(zip(w, mu, P)), pts) / w.sum()
            ref = _mixture_density(comps, pts) / mass_ref
            worst = max(worst, abs(w.sum() - mass_ref) / mass_ref,
                        float(np.abs(got - ref).max() / ref.max()))
    exact = assoc.enumerate_association(A0, cfg_obs, alg)
    A, tv = A0, []
    for n in range(4):
        A = assoc.sample_association_ensemble(A, cfg_obs[n], alg, 100_000, seed=cfg.seed)
        wa = {h.sequence: h.weight for h in A.hypotheses}
        wb = {h.sequence: h.weight for h in exact[n + 1].hypotheses}
        tv.append(0.5 * sum(abs(wa.get(k, 0.0) - wb.get(k, 0.0)) for k in set(wa) | set(wb)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and max(tv) <= 0.02 and elapsed < 300
    record_criterion(8, ok, f"enumeration vs recursion {worst:.1e} on {len(records)} records; "
                            f"sampled TV {max(tv):.4f} at N=1e5 ({elapsed:.1f}s)")
    assert ok


def test_criterion_09_local_field():
    t0 = time.perf_counter()
    g = np.random.default_rng(909)
    trials, N = 10_000, 1000
    worst_z, worst_l2 = 0.0, -np.inf
    for name in ("bernoulli_standard", "phd_finite"):
        cfg = config(name)
        _, obs = scenario(cfg)
        model = cli.finite_model(cfg, obs)
        K = model.size
        tests = np.vstack([np.eye(K), g.uniform(0, 1, (3, K)), np.where(np.arange(K) % 2, 0.5, -0.5)])
        before = run_meanfield(model, MassMeasurePair.from_dense(*cfg.init), N, cfg.seed, 2)[-1]
        W = np.empty((trials, tests.shape[0]))
        for t in range(trials):
            src = ParticleEnsemble(before.particles, before.mass, before.step, K, cfg.seed, trial=t + 1)
            W[t] = local_field(src, mf_step(src, model), model, tests).scaled
        sd = W.std(axis=0, ddof=1)
        z = np.abs(W.mean(axis=0)) / (sd / np.sqrt(trials))
        sq = W ** 2
        l2 = np.sqrt(sq.mean(axis=0))
        se = sq.std(axis=0, ddof=1) / np.sqrt(trials) / (2 * l2)
        worst_z = max(worst_z, float(z.max()))
        worst_l2 = max(worst_l2, float((l2 - 1 - 3 * se).max()))
    elapsed = time.perf_counter() - t0
    ok = worst_z <= 4 and worst_l2 <= 0 and elapsed < 300
    record_criterion(9, ok, f"max |mean|/se {worst_z:.2f}, max sqrtN L2 - (1 + 3 se) {worst_l2:.3f} "
                            f"({elapsed:.1f}s)")
    assert ok


SHRINK = {"study": {"trials": "6", "N_list": "100, 400", "horizon": "3"},
          "run": {"trials": "2"}}


def _shrunk(text):
    out, section = [], None
    for line in text.splitlines():
        head = re.match(r"\[(\w+)\]", line)
        if head:
            section = head.group(1)
        key = line.split("=")[0].strip()
        if section in SHRINK and key in SHRINK[section] and "=" in line:
            line = f"{key} = {SHRINK[section][key]}"
        out.append(line)
    return "\n".join(out) + "\n"


def test_criterion_10_reproducibility(tmp_path):
    """Every config x command runs three times (twice serial, once with two workers).

    Outputs must be byte-identical; a refusal must repeat with the same exit
    code and leave no output directory behind.
    """
    t0 = time.perf_counter()
    runs = refused = mismatched = 0
    for name in sorted(f[:-4] for f in os.listdir(CONFIGS) if f.endswith(".ini")):
        path = tmp_path / f"{name}.ini"
        path.write_text(_shrunk(open(os.path.join(CONFIGS, name + ".ini")).read()))
        for command in cli.COMMANDS:
            dirs = [tmp_path / f"{name}-{command}-{k}" for k in range(3)]
            codes = [cli.main([command, "--config", str(path), "--out", str(d)] + (["--threads", "2"] if k == 2 else []))
                     for k, d in enumerate(dirs)]
            runs += 1
            if codes[0] != 0:
                refused += 1
                mismatched += len(set(codes)) != 1 or any(d.exists() for d in dirs)
                continue
            names = sorted(os.listdir(dirs[0]))
            same = set(codes) == {0} and all(sorted(os.listdir(d)) == names for d in dirs[1:])
            same = same and all((dirs[0] / f).read_bytes() == (d / f).read_bytes() for d in dirs[1:] for f in names)
            mismatched += not same
    elapsed = time.perf_counter() - t0
    ok = mismatched == 0 and runs - refused > 0
    record_criterion(10, ok, f"{runs} config x command pairs ({refused} refused), re-run and --threads 2: "
                             f"{mismatched} differ ({elapsed:.0f}s)")
    assert ok
