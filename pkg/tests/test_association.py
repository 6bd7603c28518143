import numpy as np
import pytest

from conftest import random_phd_spec, random_records, simplex
from mvflow import association as assoc
from mvflow.association import (BIRTH, MISSED, FiniteAlgebra, GaussianAlgebra, GaussianState,
                                LinearGaussianPhdSpec, ParticleAlgebra)
from mvflow.exceptions import DomainError, ParameterError
from mvflow.observations import ObservationSet
from mvflow.phd import phd_flow_step


def scalar_spec(**kw):
    base = dict(F=[[1.0]], Q=[[0.5]], H=[[1.0]], R=[[1.0]], survival=0.9, detection=0.8, clutter=0.1,
                birth_mass=1.0, birth_mean=[0.0], birth_cov=[[4.0]])
    base.update(kw)
    return LinearGaussianPhdSpec(**base)


def cv_spec():
    F = np.array([[1.0, 1.0], [0.0, 1.0]])
    Q = 0.05 * np.array([[1 / 3, 1 / 2], [1 / 2, 1.0]])
    return LinearGaussianPhdSpec(F=F, Q=Q, H=[[1.0, 0.0]], R=[[0.5]], survival=0.9, detection=0.85,
                                 clutter=0.05, birth_mass=0.2, birth_mean=[0.0, 0.0],
                                 birth_cov=np.diag([4.0, 1.0]), region=((-10.0, 10.0),))


def gauss_obs(rng, horizon, max_count=3):
    return [ObservationSet(rng.normal(0, 2, (int(rng.integers(0, max_count + 1)), 1)), n) for n in range(horizon)]


def tv_sequences(a, b):
    wa = {h.sequence: h.weight for h in a.hypotheses}
    wb = {h.sequence: h.weight for h in b.hypotheses}
    return 0.5 * sum(abs(wa.get(k, 0.0) - wb.get(k, 0.0)) for k in set(wa) | set(wb))


def test_kalman_update_matches_quadrature():
    x = np.linspace(-12, 12, 200001)
    dx = x[1] - x[0]
    post = np.exp(-0.5 * x ** 2) * np.exp(-0.5 * (1.0 - x) ** 2)
    post /= post.sum() * dx
    mean = (x * post).sum() * dx
    var = ((x - mean) ** 2 * post).sum() * dx
    out = assoc.kalman_update(GaussianState([0.0], [[1.0]]), np.array([1.0]), np.eye(1), np.eye(1))
    assert out.mean[0] == pytest.approx(0.5, abs=1e-12)
    assert out.cov[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert mean == pytest.approx(out.mean[0], abs=1e-8)
    assert var == pytest.approx(out.cov[0, 0], abs=1e-8)


def test_predictive_weight_matches_quadrature():
    spec = scalar_spec()
    alg = GaussianAlgebra(spec)
    A = assoc.initial_measure([(2.0, GaussianState([0.5], [[1.5]]))])
    Y = np.array([[1.2], [-0.7]])
    x = np.linspace(-15, 15, 300001)
    dx = x[1] - x[0]
    eta = np.exp(-0.5 * (x - 0.5) ** 2 / 1.5) / np.sqrt(2 * np.pi * 1.5)
    for i, y in enumerate(Y[:, 0]):
        g = np.exp(-0.5 * (y - x) ** 2) / np.sqrt(2 * np.pi)
        eg = (eta * g).sum() * dx
        ref = spec.rate * spec.detection * eg / (spec.clutter + 2.0 * spec.detection * eg)
        w = assoc.predictive_weight(A.hypotheses[0], i, A, Y, alg)
        assert w == pytest.approx(ref, abs=1e-6)
    assert assoc.predictive_weight(A.hypotheses[0], MISSED, A, Y, alg) == pytest.approx(0.9 * 0.2)
    assert assoc.predictive_weight(A.hypotheses[0], BIRTH, A, Y, alg) == pytest.approx(0.5)


def test_finite_enumeration_matches_phd(rng):
    spec = random_phd_spec(rng, K=3, L=3)
    obs = random_records(rng, 3, 4, max_count=3)
    alg = FiniteAlgebra(spec)
    eta0 = simplex(rng, 3)
    flows = assoc.enumerate_association(assoc.initial_measure([(1.4, eta0)]), obs, alg)
    m, eta = 1.4, eta0
    count = 1
    for n in range(4):
        pair = phd_flow_step(m, eta, obs[n], spec)
        m, eta = pair.mass, pair.weights
        mass, v = assoc.finite_intensity(flows[n + 1], alg)
        assert mass == pytest.approx(m, rel=1e-12)
        assert np.allclose(v, eta, atol=1e-12)
        count *= len(obs[n]) + 2
        assert len(flows[n + 1]) == count


def test_gaussian_enumeration_matches_gm_phd(rng):
    spec = cv_spec()
    obs = gauss_obs(rng, 4)
    init = GaussianState([0.0, 0.5], np.diag([1.0, 0.5]))
    flows = assoc.enumerate_association(assoc.initial_measure([(1.0, init)]), obs, GaussianAlgebra(spec))
    comps = [(1.0, init.mean, init.cov)]
    for n in range(4):
        comps = assoc.gaussian_phd_step(comps, obs[n], spec)
        ref = assoc.mixture_moments(np.array([c[0] for c in comps]), np.array([c[1] for c in comps]),
                                    np.array([c[2] for c in comps]))
        got = assoc.mixture_moments(*assoc.gaussian_mixture(flows[n + 1]))
        assert got[0] == pytest.approx(ref[0], rel=1e-10)
        assert np.allclose(got[1], ref[1], atol=1e-10)
        assert np.allclose(got[2], ref[2], atol=1e-10)


def test_sequences_and_weights_sum(rng):
    spec = random_phd_spec(rng, K=3, L=2)
    A = assoc.initial_measure([(0.6, simplex(rng, 3)), (0.4, simplex(rng, 3))])
    assert A.mass == pytest.approx(1.0) and [h.sequence for h in A.hypotheses] == [(0,), (1,)]
    B = assoc.omega_step(A, ObservationSet.ids([1]), FiniteAlgebra(spec))
    assert B.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert {h.sequence[-1] for h in B.hypotheses} == {0, MISSED, BIRTH}


def test_pruning_respects_tail(rng):
    spec = random_phd_spec(rng, K=3, L=3)
    obs = random_records(rng, 3, 3, max_count=3)
    alg = FiniteAlgebra(spec)
    A = assoc.initial_measure([(1.0, simplex(rng, 3))])
    with pytest.raises(ParameterError):
        assoc.enumerate_association(A, obs, alg, cap=3, max_tail=1e-9)
    flows = assoc.enumerate_association(A, obs, alg, cap=5, max_tail=1.0)
    assert all(len(F) <= 5 for F in flows)
    assert flows[-1].pruned_mass > 0


def test_sampled_measure_converges():
    rng = np.random.default_rng(4)
    spec = cv_spec()
    obs = gauss_obs(rng, 4)
    alg = GaussianAlgebra(spec)
    A0 = assoc.initial_measure([(1.0, GaussianState([0.0, 0.5], np.diag([1.0, 0.5])))])
    exact = assoc.enumerate_association(A0, obs, alg)
    A = A0
    for n in range(4):
        A = assoc.sample_association_ensemble(A, obs[n], alg, 100_000, seed=8)
        assert tv_sequences(A, exact[n + 1]) <= 0.02


def test_sampling_is_reproducible(rng):
    spec = random_phd_spec(rng, K=3, L=2)
    alg = FiniteAlgebra(spec)
    A = assoc.initial_measure([(1.0, simplex(rng, 3))])
    Y = ObservationSet.ids([0, 1])
    a = assoc.sample_association_ensemble(A, Y, alg, 1000, 3)
    b = assoc.sample_association_ensemble(A, Y, alg, 1000, 3)
    assert [(h.sequence, h.weight) for h in a.hypotheses] == [(h.sequence, h.weight) for h in b.hypotheses]


@pytest.mark.parametrize("finite", [True, False])
def test_mixed_scheme_runs(rng, finite):
    if finite:
        spec = random_phd_spec(rng, K=3, L=2)
        base, comps, obs = FiniteAlgebra(spec), [(1.0, simplex(rng, 3))], random_records(rng, 2, 3)
    else:
        spec = cv_spec()
        base, comps, obs = GaussianAlgebra(spec), [(1.0, GaussianState([0.0, 0.0], np.eye(2)))], gauss_obs(rng, 3)
    palg = ParticleAlgebra(base, 500)
    A = assoc.inner_initial_measure(comps, palg, 1)
    for n in range(3):
        A = assoc.mixed_step(A, obs[n], palg, 2000, 1)
    exact = assoc.enumerate_association(assoc.initial_measure(comps), obs, base)[-1]
    m, v = assoc.intensity_summary(A, palg)
    m_ref, v_ref = assoc.intensity_summary(exact, base)
    assert m == pytest.approx(m_ref, rel=0.1)
    assert np.allclose(v, v_ref, atol=0.15)


def test_spd_guard():
    with pytest.raises(DomainError):
        GaussianState([0.0, 0.0], [[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(DomainError):
        assoc.kalman_predict(GaussianState([0.0], [[1.0]]), np.zeros((1, 1)), np.zeros((1, 1)))
    with pytest.raises(ParameterError):
        scalar_spec(survival=np.array([0.5, 0.6]))


def test_hypothesis_dump(rng):
    spec = cv_spec()
    alg = GaussianAlgebra(spec)
    A = assoc.omega_step(assoc.initial_measure([(1.0, spec.birth_state())]), np.array([[0.3]]), alg)
    dump = assoc.hypothesis_dump(A, alg, top_k=2)
    assert dump["atoms"] == 3 and len(dump["hypotheses"]) == 2
    assert dump["hypotheses"][0]["weight"] >= dump["hypotheses"][1]["weight"]
    assert len(dump["hypotheses"][0]["mean"]) == 2
