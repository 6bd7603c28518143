"""Association-sequence representation of the PHD flow.

The intensity is written ``gamma_n = m_n * sum_a A_n(a) eta_n^(a)`` where
each atom ``a`` is a sequence of alphabet symbols and carries a
closed-form sub-filter state. At step ``n`` the alphabet is the list of
observations of ``Y_n`` (by index) plus two virtual symbols:

=========  ======================  ===================  =====================
symbol     potential G^(b)         kernel M^(b)         scaling in G_{n,gamma}
=========  ======================  ===================  =====================
obs ``i``  ``r d g(., y_i)``       ``M``                ``1/(h(y_i) + gamma(d g(., y_i)))``
``"c"``    ``r (1 - d)``           ``M``                ``1``
``"c'"``   ``1``                   ``mu_bar``           ``mu(1) / gamma(1)``
=========  ======================  ===================  =====================

and ``A_{n+1}(a, b) ∝ A_n(a) eta^(a)(G^(b)_{n,gamma})``. The same code
drives three schemes through an *algebra* object: exact Gaussian
sub-filters (Kalman), exact finite sub-filters, and inner particle
ensembles (the mixed ``N x N'`` scheme).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _core, rng
from .exceptions import DomainError, ExtinctionError, ParameterError
from .measures import gaussian_density, psi
from .observations import as_observation
from .phd import PhdModelSpec

MISSED = "c"
BIRTH = "c'"
SPD_FLOOR = 1e-10


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64)).copy()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        cov = 0.5 * (cov + cov.T)
        if cov.shape != (mean.size, mean.size):
            raise ParameterError("covariance shape does not match the mean")
        if np.linalg.eigvalsh(cov).min() <= SPD_FLOOR:
            raise DomainError("covariance is not positive definite (min eigenvalue <= 1e-10)")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class LinearGaussianPhdSpec:
    """PHD model with ``x' = F x + w``, ``y = H x + v`` and constant rates.

    Spawned targets follow the survival motion, so the merged kernel is
    the Gaussian transition itself and ``r = s + b``. Clutter has constant
    density ``clutter`` (per unit observation volume) on ``region``.
    """

    F: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    R: np.ndarray
    survival: float
    detection: float
    clutter: float
    birth_mass: float
    birth_mean: np.ndarray
    birth_cov: np.ndarray
    spawn_rate: float = 0.0
    region: tuple = ((-10.0, 10.0),)

    def __post_init__(self):
        for name in ("survival", "detection", "clutter", "birth_mass", "spawn_rate"):
            v = np.asarray(getattr(self, name))
            if v.ndim != 0:
                raise ParameterError(f"{name} must be state independent (a scalar) for Gaussian sub-filters")
            object.__setattr__(self, name, float(v))
        for name in ("F", "Q", "H", "R", "birth_cov"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=np.float64)))
        object.__setattr__(self, "birth_mean", np.atleast_1d(np.asarray(self.birth_mean, dtype=np.float64)))
        dx = self.F.shape[0]
        dy = self.H.shape[0]
        if self.F.shape != (dx, dx) or self.Q.shape != (dx, dx) or self.H.shape != (dy, dx) or self.R.shape != (dy, dy):
            raise ParameterError("inconsistent F, Q, H, R shapes")
        if not (0 <= self.survival <= 1 and 0 <= self.detection <= 1):
            raise ParameterError("survival and detection must lie in [0, 1]")
        if self.rate <= 0 or self.spawn_rate < 0 or self.clutter < 0 or self.birth_mass < 0:
            raise ParameterError("rates must be non-negative with r = s + b > 0")
        if len(self.region) != dy:
            raise ParameterError("clutter region needs one interval per observation coordinate")

    @property
    def rate(self) -> float:
        return self.survival + self.spawn_rate

    @property
    def dim(self) -> int:
        return self.F.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.H.shape[0]

    @property
    def region_volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.region]))

    def birth_state(self) -> GaussianState:
        return GaussianState(self.birth_mean, self.birth_cov)


def _checked_cov(P: np.ndarray) -> np.ndarray:
    P = 0.5 * (P + P.T)
    if np.linalg.eigvalsh(P).min() <= SPD_FLOOR:
        raise DomainError("covariance lost positive definiteness")
    return P


def kalman_update(state: GaussianState, y: np.ndarray, H: np.ndarray, R: np.ndarray) -> GaussianState:
    """Conditioning on ``y = H x + v`` with the Joseph-form covariance."""
    P = state.cov
    S = H @ P @ H.T + R
    K = np.linalg.solve(S, H @ P).T
    mean = state.mean + K @ (np.atleast_1d(y) - H @ state.mean)
    A = np.eye(P.shape[0]) - K @ H
    cov = A @ P @ A.T + K @ R @ K.T
    return GaussianState(mean, _checked_cov(cov))


def kalman_predict(state: GaussianState, F: np.ndarray, Q: np.ndarray) -> GaussianState:
    return GaussianState(F @ state.mean, _checked_cov(F @ state.cov @ F.T + Q))


class GaussianAlgebra:
    """Exact sub-filters for :class:`LinearGaussianPhdSpec`."""

    exact = True

    def __init__(self, spec: LinearGaussianPhdSpec):
        self.spec = spec

    @property
    def birth_mass(self) -> float:
        return self.spec.birth_mass

    def clutter(self, y) -> float:
        return self.spec.clutter

    def obs_masses(self, state: GaussianState, Y: np.ndarray) -> np.ndarray:
        """``eta(g(., y))`` for every observation: ``N(y; H m, H P H' + R)``."""
        if Y.shape[0] == 0:
            return np.zeros(0)
        H, R = self.spec.H, self.spec.R
        return gaussian_density(Y, H @ state.mean, H @ state.cov @ H.T + R)

    def weights(self, state, Y):
        """``(eta(d g(., y)) per y, eta(r d g(., y)) per y, eta(r (1 - d)))``."""
        q = self.obs_masses(state, Y)
        d, r = self.spec.detection, self.spec.rate
        return d * q, r * d * q, r * (1.0 - d)

    def advance(self, state: GaussianState, symbol, Y, key=None) -> GaussianState:
        s = self.spec
        if symbol == BIRTH:
            return s.birth_state()
        if symbol != MISSED:
            state = kalman_update(state, Y[symbol], s.H, s.R)
        return kalman_predict(state, s.F, s.Q)

    def summary(self, state: GaussianState) -> dict:
        return {"mean": state.mean.tolist(), "cov": state.cov.tolist()}


class FiniteAlgebra:
    """Exact sub-filters on a finite space (dense probability vectors)."""

    exact = True

    def __init__(self, spec: PhdModelSpec):
        self.spec = spec
        self._rd = spec.rate * spec.detection
        self._miss = spec.rate * (1.0 - spec.detection)

    @property
    def birth_mass(self) -> float:
        return self.spec.birth_mass

    def clutter(self, y) -> float:
        return float(self.spec.clutter[int(y)])

    def weights(self, state, Y):
        ids = np.asarray(Y, dtype=np.int64).ravel()
        g = self.spec.likelihood[:, ids]
        return (state * self.spec.detection) @ g, (state * self._rd) @ g, float(state @ self._miss)

    def advance(self, state, symbol, Y, key=None):
        s = self.spec
        if symbol == BIRTH:
            return s.birth_law.copy()
        pot = self._miss if symbol == MISSED else self._rd * s.likelihood[:, int(Y[symbol])]
        return psi(state, pot) @ s.merged_motion

    def summary(self, state) -> dict:
        return {"weights": np.asarray(state).tolist()}


class ParticleAlgebra:
    """Inner ``N'``-particle ensembles for the mixed scheme.

    States are particle arrays: integer ids for a finite base algebra,
    ``(N', d)`` coordinates for a Gaussian one. Each inner step resamples
    by the symbol's potential (selection with eps = 0) and then moves
    every particle by the symbol's kernel.
    """

    exact = False

    def __init__(self, base, n_inner: int):
        if n_inner < 1:
            raise ParameterError("inner ensembles need at least one particle")
        self.base = base
        self.n_inner = n_inner
        self.finite = isinstance(base, FiniteAlgebra)

    @property
    def birth_mass(self) -> float:
        return self.base.birth_mass

    def clutter(self, y) -> float:
        return self.base.clutter(y)

    def sample_birth(self, key) -> np.ndarray:
        if self.finite:
            cdf = _core.build_cdf(self.base.spec.birth_law)
            return _core.sample_shared(cdf, rng.raw_words(key, 0, self.n_inner))
        s = self.base.spec
        gen = rng.generator(key)
        return gen.multivariate_normal(s.birth_mean, s.birth_cov, size=self.n_inner, method="cholesky")

    def _pointwise(self, particles, Y):
        """Per-particle ``(d g(x, y), r d g(x, y))`` for all y, and ``r (1-d)(x)``."""
        if self.finite:
            s = self.base.spec
            ids = np.asarray(Y, dtype=np.int64).ravel()
            g = s.likelihood[particles][:, ids]
            d = s.detection[particles][:, None]
            r = s.rate[particles][:, None]
            return d * g, r * d * g, (s.rate * (1.0 - s.detection))[particles]
        s = self.base.spec
        if Y.shape[0]:
            z = particles @ s.H.T
            g = np.stack([gaussian_density(y[None, :], z, s.R) for y in Y], axis=1)
        else:
            g = np.zeros((particles.shape[0], 0))
        return s.detection * g, s.rate * s.detection * g, np.full(particles.shape[0], s.rate * (1.0 - s.detection))

    def weights(self, particles, Y):
        dg, rdg, miss = self._pointwise(particles, Y)
        return dg.mean(axis=0), rdg.mean(axis=0), float(miss.mean())

    def advance(self, particles, symbol, Y, key=None):
        if key is None:
            raise ParameterError("inner particle steps need a stream key")
        if symbol == BIRTH:
            return self.sample_birth(key)
        _, rdg, miss = self._pointwise(particles, Y)
        pot = miss if symbol == MISSED else rdg[:, symbol]
        n = self.n_inner
        if self.finite:
            raw = rng.raw_words(key, 0, 2 * n)
            chosen = particles[_core.sample_shared(_core.build_cdf(pot), raw[:n])]
            return _core.sample_rows(_core.build_cdf(self.base.spec.merged_motion), chosen, raw[n:])
        s = self.base.spec
        gen = rng.generator(key)
        raw = gen.integers(0, np.iinfo(np.uint64).max, size=n, dtype=np.uint64, endpoint=True)
        chosen = particles[_core.sample_shared(_core.build_cdf(pot), raw)]
        noise = gen.multivariate_normal(np.zeros(s.dim), s.Q, size=n, method="cholesky") if np.any(s.Q) else 0.0
        return chosen @ s.F.T + noise

    def summary(self, particles) -> dict:
        if self.finite:
            return {"weights": (np.bincount(particles, minlength=self.base.spec.size) / particles.size).tolist()}
        return {"mean": particles.mean(axis=0).tolist(), "cov": np.atleast_2d(np.cov(particles.T)).tolist()}


@dataclass
class AssociationHypothesis:
    sequence: tuple
    weight: float
    state: object


@dataclass
class AssociationMeasure:
    """Atoms of ``A_n`` together with the mass ``m_n = B_n(1)``."""

    hypotheses: list
    mass: float
    step: int = 0
    pruned_mass: float = 0.0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.hypotheses:
            total = sum(h.weight for h in self.hypotheses)
            if abs(total - 1.0) > 1e-10:
                raise ParameterError(f"association weights sum to {total!r}")

    @property
    def weights(self) -> np.ndarray:
        return np.array([h.weight for h in self.hypotheses])

    def __len__(self):
        return len(self.hypotheses)


def initial_measure(components: Sequence[tuple[float, object]], step: int = 0) -> AssociationMeasure:
    """``A_0`` from ``(weight, state)`` pairs of the initial intensity ``gamma_0``."""
    w = np.array([c[0] for c in components], dtype=np.float64)
    if np.any(w < 0) or not w.sum() > 0:
        raise ParameterError("initial weights must be non-negative with positive total")
    total = float(w.sum())
    hyps = [AssociationHypothesis((j,), float(wj / total), st) for j, (wj, st) in enumerate(components)]
    return AssociationMeasure(hyps, total, step)


def sub_filter_step(hyp: AssociationHypothesis, symbol, Y, algebra, key=None) -> AssociationHypothesis:
    """Child hypothesis ``(a, b)`` with ``eta^(a,b) = Psi_{G^(b)}(eta^(a)) M^(b)`` (weight left at 0)."""
    Y = _obs(Y)
    return AssociationHypothesis(hyp.sequence + (symbol,), 0.0, algebra.advance(hyp.state, symbol, Y, key))


def _obs(Y) -> np.ndarray:
    return as_observation(Y).points


def _weight_table(measure: AssociationMeasure, Y: np.ndarray, algebra):
    """Rows: atoms; columns: observation symbols, then c, then c'."""
    m = measure.mass
    hyps = measure.hypotheses
    ny = Y.shape[0]
    dg = np.empty((len(hyps), ny))
    rdg = np.empty((len(hyps), ny))
    miss = np.empty(len(hyps))
    for k, h in enumerate(hyps):
        dg[k], rdg[k], miss[k] = algebra.weights(h.state, Y)
    A = measure.weights
    den = np.array([algebra.clutter(Y[i]) for i in range(ny)]) + m * (A @ dg)
    if np.any(den <= 0):
        raise ExtinctionError("h(y) + gamma(d g(., y)) = 0")
    table = np.empty((len(hyps), ny + 2))
    table[:, :ny] = rdg / den
    table[:, ny] = miss
    table[:, ny + 1] = algebra.birth_mass / m
    return table


def predictive_weight(hyp: AssociationHypothesis, symbol, measure: AssociationMeasure, Y, algebra) -> float:
    """``eta^(a)(G^(b)_{n,gamma})`` for one atom and one symbol."""
    Y = _obs(Y)
    m = measure.mass
    if symbol == BIRTH:
        return algebra.birth_mass / m
    dg, rdg, miss = algebra.weights(hyp.state, Y)
    if symbol == MISSED:
        return float(miss)
    gamma_dg = 0.0
    for h in measure.hypotheses:
        gamma_dg += h.weight * float(algebra.weights(h.state, Y)[0][symbol])
    den = algebra.clutter(Y[symbol]) + m * gamma_dg
    if not den > 0:
        raise ExtinctionError("h(y) + gamma(d g(., y)) = 0")
    return float(rdg[symbol]) / den


def _symbols(ny: int) -> list:
    return list(range(ny)) + [MISSED, BIRTH]


def omega_step(measure: AssociationMeasure, Y, algebra, cap: int = 100_000, prune: float = 1e-12,
               max_tail: float = 1e-6) -> AssociationMeasure:
    """Exact ``A_{n+1} = Omega(m_n, A_n)`` and ``m_{n+1} = m_n A_n(G)``.

    Every atom is extended by every symbol. Beyond ``cap`` atoms, atoms
    below ``prune`` relative weight are dropped, then the smallest atoms
    until the cap is met, never removing more than ``max_tail`` mass.
    """
    Y = _obs(Y)
    table = _weight_table(measure, Y, algebra)
    flat = (measure.weights[:, None] * table).ravel()
    Z = float(flat.sum())
    if not Z > 0:
        raise ExtinctionError("all association weights vanished")
    probs = flat / Z
    keep = np.flatnonzero(probs > 0)
    pruned = 0.0
    if keep.size > cap:
        small = probs[keep] < prune * probs.max()
        pruned = float(probs[keep][small].sum())
        keep = keep[~small]
        if keep.size > cap:
            order = np.argsort(probs[keep], kind="stable")[::-1]
            pruned += float(probs[keep[order[cap:]]].sum())
            keep = np.sort(keep[order[:cap]])
        if pruned > max_tail:
            raise ParameterError(f"pruning would remove {pruned!r} > {max_tail!r} of the mass")
    syms = _symbols(Y.shape[0])
    nsym = len(syms)
    hyps = []
    total = float(probs[keep].sum())
    for j in keep:
        a, b = divmod(int(j), nsym)
        child = sub_filter_step(measure.hypotheses[a], syms[b], Y, algebra)
        child.weight = float(probs[j] / total)
        hyps.append(child)
    return AssociationMeasure(hyps, measure.mass * Z, measure.step + 1, measure.pruned_mass + pruned,
                              {"normalizer": Z, "atoms_before_pruning": int((probs > 0).sum())})


def enumerate_association(init: AssociationMeasure, observations: Sequence, algebra, horizon: int | None = None,
                          **kw) -> list[AssociationMeasure]:
    """Exhaustive association flow ``[A_0, ..., A_horizon]``."""
    horizon = len(observations) if horizon is None else horizon
    out = [init]
    for n in range(horizon):
        out.append(omega_step(out[-1], observations[n], algebra, **kw))
    return out


def sample_association_ensemble(measure: AssociationMeasure, Y, algebra, N: int, seed: int,
                                trial: int = 0) -> AssociationMeasure:
    """``N`` conditionally i.i.d. draws from ``Omega(m, A^N)``, returned as an empirical measure.

    With an :class:`ParticleAlgebra` this is one step of the mixed scheme:
    the predictive weights come from the inner empirical measures and each
    distinct drawn atom advances its inner ensemble on its own substream.
    """
    if N < 1:
        raise ParameterError("N must be at least 1")
    Y = _obs(Y)
    table = _weight_table(measure, Y, algebra)
    flat = (measure.weights[:, None] * table).ravel()
    Z = float(flat.sum())
    if not Z > 0:
        raise ExtinctionError("all association weights vanished")
    n = measure.step
    key = rng.stream_key(seed, trial, n + 1, rng.ASSOCIATION)
    draws = _core.sample_shared(_core.build_cdf(flat), rng.raw_words(key, 0, N))
    counts = np.bincount(draws, minlength=flat.size)
    syms = _symbols(Y.shape[0])
    nsym = len(syms)
    hyps = []
    for j in np.flatnonzero(counts):
        a, b = divmod(int(j), nsym)
        inner = None if algebra.exact else rng.stream_key(seed, trial, n + 1, rng.INNER, int(j))
        child = sub_filter_step(measure.hypotheses[a], syms[b], Y, algebra, inner)
        child.weight = float(counts[j] / N)
        hyps.append(child)
    return AssociationMeasure(hyps, measure.mass * Z, n + 1, measure.pruned_mass, {"normalizer": Z, "N": N})


def mixed_step(measure: AssociationMeasure, Y, algebra: ParticleAlgebra, N: int, seed: int,
               trial: int = 0) -> AssociationMeasure:
    """One step of the mixed ``N x N'`` scheme; hypothesis states are inner ensembles."""
    if not isinstance(algebra, ParticleAlgebra):
        # exact inner flows: the scheme is the plain sampled association step
        return sample_association_ensemble(measure, Y, algebra, N, seed, trial)
    for h in measure.hypotheses:
        if np.asarray(h.state).shape[0] == 0:
            raise ParameterError("empty inner ensemble")
    return sample_association_ensemble(measure, Y, algebra, N, seed, trial)


def inner_initial_measure(components, algebra: ParticleAlgebra, seed: int, trial: int = 0) -> AssociationMeasure:
    """``A_0`` whose atoms carry ``N'`` i.i.d. draws of each initial component."""
    out = []
    for j, (w, state) in enumerate(components):
        key = rng.stream_key(seed, trial, 0, rng.INNER, j)
        if algebra.finite:
            pts = _core.sample_shared(_core.build_cdf(state), rng.raw_words(key, 0, algebra.n_inner))
        else:
            pts = rng.generator(key).multivariate_normal(state.mean, state.cov, size=algebra.n_inner,
                                                         method="cholesky")
        out.append((w, pts))
    return initial_measure(out)


def finite_intensity(measure: AssociationMeasure, algebra) -> tuple[float, np.ndarray]:
    """``(m, eta)`` with ``eta = sum_a A(a) eta^(a)`` on a finite space."""
    if isinstance(algebra, ParticleAlgebra):
        K = algebra.base.spec.size
        eta = sum(h.weight * np.bincount(h.state, minlength=K) / h.state.size for h in measure.hypotheses)
    else:
        eta = sum(h.weight * np.asarray(h.state) for h in measure.hypotheses)
    return measure.mass, np.asarray(eta)


def intensity_summary(measure: AssociationMeasure, algebra) -> tuple[float, np.ndarray]:
    """``(m, v)``: ``v = eta`` on a finite space, the mean of ``eta`` on a Euclidean one."""
    base = algebra.base if isinstance(algebra, ParticleAlgebra) else algebra
    if isinstance(base, FiniteAlgebra):
        return finite_intensity(measure, algebra)
    if isinstance(algebra, ParticleAlgebra):
        return measure.mass, sum(h.weight * h.state.mean(axis=0) for h in measure.hypotheses)
    return measure.mass, sum(h.weight * h.state.mean for h in measure.hypotheses)


def gaussian_mixture(measure: AssociationMeasure):
    """Mixture weights (summing to ``m``), means and covariances of ``gamma_n``."""
    w = measure.mass * measure.weights
    means = np.array([h.state.mean for h in measure.hypotheses])
    covs = np.array([h.state.cov for h in measure.hypotheses])
    return w, means, covs


def mixture_moments(weights, means, covs) -> tuple[float, np.ndarray, np.ndarray]:
    """Total mass, mean and covariance of a Gaussian mixture intensity."""
    total = float(np.sum(weights))
    p = np.asarray(weights) / total
    mu = p @ means
    diff = means - mu
    cov = np.einsum("k,kij->ij", p, covs) + np.einsum("k,ki,kj->ij", p, diff, diff)
    return total, mu, cov


def gaussian_phd_step(components, Y, spec: LinearGaussianPhdSpec):
    """Direct PHD recursion on a Gaussian-mixture intensity.

    ``components`` is a list of ``(w, mean, cov)`` with total weight
    ``gamma_n(1)``; returns the components of ``gamma_{n+1}``. Missed
    detections keep ``w r (1 - d)``, each observation ``y`` gives
    ``w r d q(y) / (h + sum_k w_k d q_k(y))``, births add ``mu(1) N(m_b, P_b)``.
    """
    Y = _obs(Y)
    d, r = spec.detection, spec.rate
    H, R = spec.H, spec.R
    out = []
    q = np.array([[float(gaussian_density(y[None, :], H @ m, H @ P @ H.T + R)[0]) for y in Y]
                  for (_, m, P) in components]).reshape(len(components), Y.shape[0])
    w = np.array([c[0] for c in components])
    den = spec.clutter + d * (w @ q)
    for k, (wk, m, P) in enumerate(components):
        st = GaussianState(m, P)
        pred = kalman_predict(st, spec.F, spec.Q)
        out.append((wk * r * (1.0 - d), pred.mean, pred.cov))
        for i in range(Y.shape[0]):
            upd = kalman_predict(kalman_update(st, Y[i], H, R), spec.F, spec.Q)
            out.append((wk * r * d * q[k, i] / den[i], upd.mean, upd.cov))
    if spec.birth_mass > 0:
        out.append((spec.birth_mass, spec.birth_mean.copy(), spec.birth_cov.copy()))
    return out


def hypothesis_dump(measure: AssociationMeasure, algebra, top_k: int = 10) -> dict:
    """JSON-ready summary of the ``top_k`` heaviest hypotheses."""
    order = np.argsort(-measure.weights, kind="stable")[:top_k]
    return {
        "step": measure.step,
        "mass": measure.mass,
        "atoms": len(measure),
        "pruned_mass": measure.pruned_mass,
        "hypotheses": [
            {"sequence": [str(s) for s in measure.hypotheses[k].sequence],
             "weight": measure.hypotheses[k].weight,
             **algebra.summary(measure.hypotheses[k].state)}
            for k in order
        ],
    }
