import numpy as np
import pytest

from mvflow.bernoulli import BernoulliModelSpec, BernoulliStep
from mvflow.observations import ObservationSet
from mvflow.phd import PhdModelSpec


def stochastic(rng, K, floor=0.05):
    P = rng.random((K, K)) + floor
    return P / P.sum(axis=1, keepdims=True)


def random_bernoulli_step(rng, K=None, L=None, **fixed):
    K = K or int(rng.integers(2, 6))
    L = L or int(rng.integers(2, 5))
    birth = rng.random(K) + 0.05
    birth *= rng.uniform(0.05, 0.9) / birth.sum()
    kw = dict(survival=rng.uniform(0.05, 0.95, K), detection=rng.uniform(0.05, 0.95, K),
              likelihood=rng.random((K, L)) + 0.05, clutter=rng.uniform(0.2, 2.0, L),
              birth=birth, motion=stochastic(rng, K))
    kw.update(fixed)
    return BernoulliStep(**kw)


def random_phd_spec(rng, K=None, L=None, homogeneous=False, **fixed):
    K = K or int(rng.integers(2, 6))
    L = L or int(rng.integers(2, 5))
    if homogeneous:
        s, b, d = rng.uniform(0.3, 0.9), rng.uniform(0.0, 0.2), rng.uniform(0.1, 0.9)
    else:
        s, b, d = rng.uniform(0.3, 0.9, K), rng.uniform(0.0, 0.2, K), rng.uniform(0.1, 0.9, K)
    kw = dict(survival=s, detection=d, likelihood=rng.random((K, L)) + 0.05,
              clutter=rng.uniform(0.2, 2.0, L), birth=rng.uniform(0.02, 0.3, K),
              motion=stochastic(rng, K), spawn_rate=b, spawn_kernel=stochastic(rng, K))
    kw.update(fixed)
    return PhdModelSpec(**kw)


def random_records(rng, L, horizon, max_count=4):
    return [ObservationSet(rng.integers(0, L, int(rng.integers(0, max_count + 1))), n) for n in range(horizon)]


def simplex(rng, K):
    w = rng.random(K) + 0.01
    return w / w.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def bernoulli_spec(rng):
    return BernoulliModelSpec(random_bernoulli_step(rng, K=3, L=3))


CRITERIA = {}


def record_criterion(k, ok, detail=""):
    CRITERIA[k] = (bool(ok), detail)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'} {detail}")


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
