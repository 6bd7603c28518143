import numpy as np
import pytest

from conftest import random_bernoulli_step, random_phd_spec, random_records, simplex
from mvflow.bernoulli import BernoulliModel
from mvflow.exceptions import DomainError, ParameterError
from mvflow.flow import MassMeasurePair, exact_reference_flow, telescoping_terms
from mvflow.meanfield import init_ensemble, local_field, mf_step, run_meanfield, trajectory_rows
from mvflow.observations import ObservationSet
from mvflow.phd import PhdModel, phd_flow_step


@pytest.fixture
def phd_model(rng):
    spec = random_phd_spec(rng, K=4, L=3)
    return PhdModel(spec, random_records(rng, 3, 8)), MassMeasurePair.from_dense(1.5, simplex(rng, 4))


def test_same_seed_same_run(phd_model):
    model, init = phd_model
    a = run_meanfield(model, init, 500, 42, 8)
    b = run_meanfield(model, init, 500, 42, 8)
    c = run_meanfield(model, init, 500, 43, 8)
    assert all(np.array_equal(x.particles, y.particles) and x.mass == y.mass for x, y in zip(a, b))
    assert not all(np.array_equal(x.particles, y.particles) for x, y in zip(a[1:], c[1:]))


def test_trials_use_distinct_streams(phd_model):
    model, init = phd_model
    a = run_meanfield(model, init, 200, 42, 3, trial=0)
    b = run_meanfield(model, init, 200, 42, 3, trial=1)
    assert not np.array_equal(a[-1].particles, b[-1].particles)


def test_prefix_consistency(phd_model):
    """Particle i only reads word i, so a smaller ensemble is a prefix at time 0."""
    model, init = phd_model
    big = init_ensemble(init.weights, 1000, 9)
    small = init_ensemble(init.weights, 100, 9)
    assert np.array_equal(big.particles[:100], small.particles)


def test_large_population_tracks_exact_flow(phd_model):
    model, init = phd_model
    ref = exact_reference_flow(model, 8, init)
    ens = run_meanfield(model, init, 100_000, 5, 8)
    for e, r in zip(ens, ref):
        assert 0.5 * np.abs(e.eta - r.weights).sum() < 0.01
        assert abs(e.mass - r.mass) / r.mass < 0.01


@pytest.mark.parametrize("eps,variant", [(0.0, "additive"), (0.05, "additive"), (0.2, "multiplicative")])
def test_selection_variants_stay_consistent(rng, eps, variant):
    step = random_bernoulli_step(rng, K=3, L=2)
    obs = random_records(rng, 2, 5)
    model = BernoulliModel(step, obs)
    init = MassMeasurePair.from_dense(0.5, simplex(rng, 3))
    ref = exact_reference_flow(model, 5, init)
    ens = run_meanfield(model, init, 50_000, 3, 5, eps=eps, variant=variant)
    assert 0.5 * np.abs(ens[-1].eta - ref[-1].weights).sum() < 0.02


def test_local_field_definition(phd_model):
    model, init = phd_model
    ens = run_meanfield(model, init, 400, 1, 2)
    lf = local_field(ens[0], ens[1], model)
    target = phd_flow_step(ens[0].mass, ens[0].eta, model.observations[0], model.spec).weights
    assert np.allclose(lf.diff, ens[1].eta - target)
    assert np.allclose(lf.scaled, 20.0 * lf.diff)
    with pytest.raises(ParameterError):
        local_field(ens[0], ens[2], model)


def test_trajectory_rows(phd_model):
    model, init = phd_model
    ens = run_meanfield(model, init, 50, 1, 2)
    rows = list(trajectory_rows(ens, oracle=exact_reference_flow(model, 2, init)))
    assert len(rows) == 3 * 4
    assert rows[0][:2] == (0, 0)


def test_telescoping_adds_up(phd_model):
    model, init = phd_model
    ens = run_meanfield(model, init, 300, 2, 5)
    mass_terms, f_terms, end = telescoping_terms(model, [e.pair() for e in ens], init)
    assert mass_terms.sum() == pytest.approx(end[0], abs=1e-12)
    assert f_terms.sum() == pytest.approx(end[1], abs=1e-12)


def test_bad_population():
    with pytest.raises(ParameterError):
        init_ensemble([0.5, 0.5], 0, 1)


def test_out_of_alphabet_observation(rng):
    spec = random_phd_spec(rng, K=3, L=2)
    with pytest.raises(DomainError):
        phd_flow_step(1.0, simplex(rng, 3), ObservationSet.ids([5]), spec)
    model = BernoulliModel(random_bernoulli_step(rng, K=3, L=2), [ObservationSet.ids([2])])
    with pytest.raises(DomainError):
        model.likelihood(0)


def test_mf_step_mass(phd_model):
    model, init = phd_model
    ens = init_ensemble(init.weights, 1000, 7, init.mass)
    nxt = mf_step(ens, model)
    assert nxt.mass == pytest.approx(ens.mass * ens.eta @ model.potential(0, ens.mass, ens.eta))
    assert nxt.step == 1 and nxt.stream == (7, 0, 1)
