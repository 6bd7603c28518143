import math

import numpy as np
import pytest

from conftest import random_phd_spec, random_records, simplex
from mvflow.analysis import (AssociationRunner, ErrorReport, MeanfieldRunner, concentration_radius,
                             khintchine_constants, mann_kendall, run_trials, uniform_error_bound)
from mvflow.association import FiniteAlgebra
from mvflow.exceptions import ParameterError
from mvflow.flow import MassMeasurePair
from mvflow.phd import PhdModel


def test_khintchine_values():
    assert khintchine_constants(1) == pytest.approx(1.0)
    assert khintchine_constants(2) == pytest.approx(1.0)
    assert khintchine_constants(3) ** 3 == pytest.approx(3.0)
    assert khintchine_constants(4) ** 4 == pytest.approx(3.0)
    assert khintchine_constants(6) ** 6 == pytest.approx(15.0)
    assert khintchine_constants(2, b=2.5) == pytest.approx(2.5)
    with pytest.raises(ParameterError):
        khintchine_constants(0)


def test_concentration_example():
    tail, radius = concentration_radius(1.0, 100, 0.3)
    assert tail == pytest.approx(math.exp(-4.5))
    assert round(tail, 4) == 0.0111
    assert radius == pytest.approx(0.1)


def test_uniform_bound():
    assert uniform_error_bound(2, 1.0, math.log(2), 100) == pytest.approx(0.2)


def test_mann_kendall():
    g = np.random.default_rng(1)
    tau, p = mann_kendall(np.arange(50) + g.normal(0, 1, 50))
    assert tau > 0.5 and p < 1e-6
    _, p_flat = mann_kendall(g.normal(0, 1, 200))
    assert p_flat > 0.001
    _, p_down = mann_kendall(-np.arange(30.0))
    assert p_down > 0.99


@pytest.fixture
def phd_case(rng):
    spec = random_phd_spec(rng, K=3, L=2)
    obs = random_records(rng, 2, 4)
    return spec, obs, MassMeasurePair.from_dense(1.0, simplex(rng, 3))


def test_run_trials_shapes_and_threads(phd_case):
    spec, obs, init = phd_case
    runner = MeanfieldRunner(PhdModel(spec, obs), init)
    a = run_trials(runner, [100, 400], 8, 4, seed=3)
    b = run_trials(runner, [100, 400], 8, 4, seed=3, threads=2)
    assert a.mass_err.shape == (2, 8, 5) and a.value_err.shape == (2, 8, 5, 3)
    assert np.array_equal(a.mass_err, b.mass_err) and np.array_equal(a.value_err, b.value_err)
    assert np.all(a.mass_err[:, :, 0] == 0)


def test_report_statistics():
    e = np.random.default_rng(2).normal(0, 1, (2, 500, 4))
    e[1] /= 10
    rep = ErrorReport([100, 10000], e, e[..., None], seed=0)
    assert rep.slope() == pytest.approx(-0.5, abs=0.02)
    assert rep.moments_monotone()
    prof = rep.profile("mass")
    assert prof.shape == (4,) and np.allclose(prof, 10.0, rtol=0.15)
    rows = list(rep.rows())
    assert len(rows) == 2 * 500 * 4 * 2
    summary = rep.summary()
    assert summary["trials"] == 500 and "slope_mass" in summary


def test_association_runner(phd_case):
    spec, obs, init = phd_case
    runner = AssociationRunner(FiniteAlgebra(spec), [(init.mass, init.weights)], obs)
    rep = run_trials(runner, [20000], 3, 3, seed=5)
    assert np.abs(rep.mass_err).max() < 0.05 * (1 + np.abs(runner.oracle(3)[0]).max())
    assert np.abs(rep.value_err).max() < 0.05


def test_oracle_required():
    class Bare:
        def __call__(self, N, seed, trial, horizon):
            return np.zeros(horizon + 1), np.zeros((horizon + 1, 1))

    with pytest.raises(ParameterError):
        run_trials(Bare(), [10], 1, 2, 0)
    rep = run_trials(Bare(), [10], 2, 2, 0, oracle=(np.zeros(3), np.zeros((3, 1))))
    assert np.all(rep.mass_err == 0)
