"""Synthetic ground truth and observations.

Truth records share one layout for both models: per step a list of
``(target id, state, detected)`` and a list of clutter points. Time
``n`` observations are generated from the time ``n`` targets, then the
targets move to time ``n + 1``; this matches the filters, where ``Y_n``
enters the step from ``gamma_n`` to ``gamma_{n+1}``.

Finite likelihood rows ``g(x, .)`` and clutter vectors ``h`` are
intensities on the observation alphabet; a detection draws its cell
from ``g(x, .)`` normalized, clutter counts are Poisson with mean ``h(1)``
and cells follow ``h`` normalized.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import rng
from ..association import LinearGaussianPhdSpec
from ..bernoulli import BernoulliModelSpec
from ..exceptions import ParameterError
from ..observations import ObservationSet
from ..phd import PhdModelSpec


@dataclass
class StepTruth:
    step: int
    targets: list = field(default_factory=list)   # (id, state, detected)
    clutter: list = field(default_factory=list)


def _gen(seed: int, trial: int, n: int) -> np.random.Generator:
    return rng.generator(rng.stream_key(seed, trial, n, rng.SCENARIO))


def _cell(gen, weights) -> int:
    w = np.asarray(weights, dtype=np.float64)
    return int(gen.choice(w.size, p=w / w.sum()))


def _cap(points: list, cap: int | None, n_detections: int) -> list:
    """Keep every detection and as much clutter as the declared cap allows."""
    if cap is None or len(points) <= cap:
        return points
    return points[:max(cap, n_detections)]


def _finite_observe(gen, spec, targets, detect, lik, h):
    truth, pts = [], []
    for tid, x in targets:
        hit = bool(gen.random() < detect[x])
        if hit:
            if lik[x].sum() <= 0:
                raise ParameterError("a detected state needs a positive likelihood row")
            pts.append(_cell(gen, lik[x]))
        truth.append((tid, x, hit))
    hm = float(h.sum())
    clutter = [_cell(gen, h) for _ in range(gen.poisson(hm))] if hm > 0 else []
    return truth, pts, clutter


def simulate_phd_scenario(spec, horizon: int, seed: int, init_count: int = 0, init_law=None,
                          max_count: int | None = None, trial: int = 0):
    """Multi-target truth and observation sets for ``n = 0..horizon-1``.

    Each step: detection with probability ``d``, an observation drawn from
    ``g(x, .)``, Poisson clutter ``h``; then Bernoulli(``s``) survival with
    motion ``M``, Poisson(``b``) spawns moved by ``B`` and Poisson(``mu(1)``)
    births from ``mu_bar``. ``init_count`` targets start from ``init_law``.
    """
    gaussian = isinstance(spec, LinearGaussianPhdSpec)
    if not gaussian and not isinstance(spec, PhdModelSpec):
        raise ParameterError("expected a PHD spec")
    next_id = 0
    gen0 = _gen(seed, trial, 0)
    targets = []
    for _ in range(init_count):
        if gaussian:
            x = gen0.multivariate_normal(spec.birth_mean, spec.birth_cov) if init_law is None else \
                gen0.multivariate_normal(init_law.mean, init_law.cov)
        else:
            x = _cell(gen0, spec.birth_law if init_law is None else init_law)
        targets.append((next_id, x))
        next_id += 1
    truth, observations = [], []
    for n in range(horizon):
        gen = _gen(seed, trial, n + 1)
        if gaussian:
            st = StepTruth(n)
            pts = []
            for tid, x in targets:
                hit = bool(gen.random() < spec.detection)
                if hit:
                    pts.append(spec.H @ x + gen.multivariate_normal(np.zeros(spec.obs_dim), spec.R))
                st.targets.append((tid, x, hit))
            lo = np.array([a for a, _ in spec.region])
            hi = np.array([b for _, b in spec.region])
            k = gen.poisson(spec.clutter * spec.region_volume)
            st.clutter = [lo + (hi - lo) * gen.random(lo.size) for _ in range(k)]
            det = len(pts)
            allp = _cap(pts + st.clutter, max_count, det)
            st.clutter = st.clutter[:len(allp) - det]
            observations.append(ObservationSet(np.array(allp).reshape(len(allp), spec.obs_dim), n))
        else:
            tr, pts, clutter = _finite_observe(gen, spec, targets, spec.detection, spec.likelihood, spec.clutter)
            allp = _cap(pts + clutter, max_count, len(pts))
            st = StepTruth(n, tr, clutter[:len(allp) - len(pts)])
            observations.append(ObservationSet(np.array(allp, dtype=np.int64), n))
        truth.append(st)
        moved = []
        for tid, x in targets:
            if gaussian:
                s, b = spec.survival, spec.spawn_rate
            else:
                s, b = spec.survival[x], spec.spawn_rate[x]
            if gen.random() < s:
                moved.append((tid, _move(gen, spec, x, gaussian, spawn=False)))
            for _ in range(gen.poisson(b)):
                moved.append((next_id, _move(gen, spec, x, gaussian, spawn=True)))
                next_id += 1
        if spec.birth_mass > 0:
            for _ in range(gen.poisson(spec.birth_mass)):
                if gaussian:
                    x = gen.multivariate_normal(spec.birth_mean, spec.birth_cov)
                else:
                    x = _cell(gen, spec.birth_law)
                moved.append((next_id, x))
                next_id += 1
        targets = moved
    return truth, observations


def _move(gen, spec, x, gaussian: bool, spawn: bool):
    if gaussian:
        return spec.F @ x + gen.multivariate_normal(np.zeros(spec.dim), spec.Q)
    row = spec.spawn_kernel[x] if spawn else spec.motion[x]
    return _cell(gen, row)


def simulate_bernoulli_scenario(spec: BernoulliModelSpec, horizon: int, seed: int, gamma0: float = 0.0,
                                eta0=None, max_count: int | None = None, trial: int = 0):
    """Single on/off target truth and observations for ``n = 0..horizon-1``.

    The target is present at time 0 with probability ``gamma0`` (state from
    ``eta0``). A present target is detected with probability ``d``; clutter
    is Poisson ``h``. A present target survives with probability ``s`` and
    moves by ``M``; an absent one is born with probability ``mu_{n+1}(1)``
    from ``mu_bar_{n+1}``.
    """
    gen0 = _gen(seed, trial, 0)
    first = spec.at(0)
    state = None
    if gen0.random() < gamma0:
        state = _cell(gen0, first.birth_law if eta0 is None else eta0)
    truth, observations = [], []
    for n in range(horizon):
        step = spec.at(n)
        gen = _gen(seed, trial, n + 1)
        targets = [] if state is None else [(0, state)]
        tr, pts, clutter = _finite_observe(gen, step, targets, step.detection, step.likelihood, step.clutter)
        allp = _cap(pts + clutter, max_count, len(pts))
        truth.append(StepTruth(n, tr, clutter[:len(allp) - len(pts)]))
        observations.append(ObservationSet(np.array(allp, dtype=np.int64), n))
        if state is not None:
            state = _cell(gen, step.motion[state]) if gen.random() < step.survival[state] else None
        elif step.birth_mass > 0 and gen.random() < step.birth_mass:
            state = _cell(gen, step.birth_law)
    return truth, observations


def presence(truth) -> np.ndarray:
    """0/1 presence indicator per step of a Bernoulli truth record."""
    return np.array([1.0 if st.targets else 0.0 for st in truth])
