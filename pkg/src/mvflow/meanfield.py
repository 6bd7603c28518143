"""Mean-field particle approximation of a finite-space flow.

Given ``N`` particles ``xi^i_n`` with empirical measure ``eta^N_n`` and
a mass ``gamma^N_n(1)``, one step is

    gamma^N_{n+1}(1) = gamma^N_n(1) eta^N_n(G_{n, gamma^N_n})
    xi^i_{n+1} ~ K_{n+1, gamma^N_n}(xi^i_n, .)   independently

Particle ``i`` at time ``n+1`` consumes word ``i`` of the stream
``(seed, trial, n+1, PROPAGATE)``, so results do not depend on how a
step is split across workers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core, rng
from .exceptions import ExtinctionError, ParameterError
from .flow import FlowModel, MassMeasurePair
from .measures import DiscreteMeasure


@dataclass(frozen=True)
class ParticleEnsemble:
    particles: np.ndarray
    mass: float
    step: int
    size: int
    seed: int
    trial: int = 0

    def __post_init__(self):
        p = np.asarray(self.particles, dtype=np.int64)
        if p.ndim != 1 or p.size < 1:
            raise ParameterError("an ensemble needs at least one particle")
        p.setflags(write=False)
        object.__setattr__(self, "particles", p)

    @property
    def N(self) -> int:
        return self.particles.shape[0]

    def counts(self) -> np.ndarray:
        return np.bincount(self.particles, minlength=self.size)

    @property
    def eta(self) -> np.ndarray:
        """Empirical measure as a dense vector."""
        return self.counts() / self.N

    def pair(self) -> MassMeasurePair:
        return MassMeasurePair.from_dense(self.mass, self.eta, self.step)

    @property
    def stream(self) -> tuple[int, int, int]:
        """Substream of the draws that produced this ensemble."""
        return (self.seed, self.trial, self.step)


def _draw(cdf: np.ndarray, key: np.ndarray, N: int) -> np.ndarray:
    return _core.sample_shared(cdf, rng.raw_words(key, 0, N))


def init_ensemble(eta0, N: int, seed: int, mass: float = 1.0, trial: int = 0, size: int | None = None) -> ParticleEnsemble:
    """``N`` i.i.d. draws from ``eta0`` (dense vector or finite DiscreteMeasure)."""
    if N < 1:
        raise ParameterError("N must be at least 1")
    w = eta0.dense() if isinstance(eta0, DiscreteMeasure) else np.asarray(eta0, dtype=np.float64)
    K = w.shape[0] if size is None else size
    key = rng.stream_key(seed, trial, 0, rng.INIT)
    return ParticleEnsemble(_draw(_core.build_cdf(w), key, N), float(mass), 0, K, seed, trial)


def mf_step(ens: ParticleEnsemble, model: FlowModel, eps: float = 0.0, variant: str = "additive") -> ParticleEnsemble:
    """One mean-field step; ``eps``/``variant`` select the selection kernel inside ``K``."""
    n = ens.step
    eta = ens.eta
    G = model.potential(n, ens.mass, eta)
    z = float(eta @ G)
    if not z > 0:
        raise ExtinctionError(f"eta^N(G) = {z!r} at step {n}")
    K = model.mckean_kernel(n, ens.mass, eta, eps, variant)
    key = rng.stream_key(ens.seed, ens.trial, n + 1, rng.PROPAGATE)
    raw = rng.raw_words(key, 0, ens.N)
    if np.all(K == K[0]):
        nxt = _core.sample_shared(_core.build_cdf(K[0]), raw)
    else:
        nxt = _core.sample_rows(_core.build_cdf(K), ens.particles, raw)
    return ParticleEnsemble(nxt, ens.mass * z, n + 1, ens.size, ens.seed, ens.trial)


def run_meanfield(model: FlowModel, init: MassMeasurePair, N: int, seed: int, horizon: int, trial: int = 0,
                  eps: float = 0.0, variant: str = "additive") -> list[ParticleEnsemble]:
    """Ensembles at times ``0..horizon``."""
    ens = init_ensemble(init.weights, N, seed, init.mass, trial)
    out = [ens]
    for _ in range(horizon):
        ens = mf_step(ens, model, eps, variant)
        out.append(ens)
    return out


@dataclass(frozen=True)
class LocalField:
    """``eta^N_n(f) - Gamma^2_n(gamma^N_{n-1}(1), eta^N_{n-1})(f)`` per test function."""

    diff: np.ndarray
    N: int
    step: int

    @property
    def scaled(self) -> np.ndarray:
        """``W^N_n(f) = sqrt(N) * diff``."""
        return np.sqrt(self.N) * self.diff


def local_field(before: ParticleEnsemble, after: ParticleEnsemble, model: FlowModel, tests=None) -> LocalField:
    """Local sampling error between consecutive ensembles.

    ``tests`` is a ``(k, K)`` table of test functions; the default is the
    coordinate indicators.
    """
    if after.step != before.step + 1 or after.N != before.N:
        raise ParameterError("ensembles are not consecutive steps of one run")
    F = np.eye(before.size) if tests is None else np.atleast_2d(np.asarray(tests, dtype=np.float64))
    _, target = model.step(before.step, before.mass, before.eta)
    return LocalField(F @ (after.eta - target), after.N, after.step)


TRAJECTORY_COLUMNS = ("trial", "step", "mass", "test", "value", "tv_to_oracle")


def trajectory_rows(ensembles, tests=None, oracle=None):
    """Rows for a trajectory dump: one per (trial, step, test function).

    ``oracle`` is an optional list of exact pairs; it adds the TV
    distance of each empirical measure to the exact one.
    """
    for k, ens in enumerate(ensembles):
        eta = ens.eta
        F = np.eye(ens.size) if tests is None else np.atleast_2d(tests)
        tv = ""
        if oracle is not None:
            tv = 0.5 * float(np.abs(eta - oracle[k].weights).sum())
        for j, v in enumerate(F @ eta):
            yield (ens.trial, ens.step, ens.mass, j, float(v), tv)
