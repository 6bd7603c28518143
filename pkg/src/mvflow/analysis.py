"""Monte Carlo error quantification against exact oracles.

A *runner* maps ``(N, seed, trial, horizon)`` to ``(masses, values)``:
the particle masses ``gamma^N_n(1)`` for ``n = 0..horizon`` and a
``(horizon + 1, k)`` table of test-function values ``eta^N_n(f_j)``. The
oracle supplies the same two arrays for the exact flow; errors are the
differences ``V^{gamma,N}_n(1) / sqrt(N)`` and ``V^{eta,N}_n(f) / sqrt(N)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import association as assoc
from .exceptions import ParameterError
from .flow import FlowModel, MassMeasurePair, exact_reference_flow
from .meanfield import run_meanfield

MOMENTS = (1, 2, 4)
CSV_COLUMNS = ("algorithm", "model", "N", "trial", "n", "statistic", "value")


def khintchine_constants(r: int, b: float = 1.0) -> float:
    """Bound on ``a_r``: ``a_{2k}^{2k} <= b^{2k} (2k)! 2^{-k} / k!`` and
    ``a_{2k+1}^{2k+1} <= b^{2k+1} (2k+1)! 2^{-k} / k!``."""
    if r < 1 or int(r) != r:
        raise ParameterError("r must be an integer >= 1")
    k = r // 2
    return b * (math.factorial(r) * 2.0 ** -k / math.factorial(k)) ** (1.0 / r)


def concentration_radius(b: float, N: int, eps: float) -> tuple[float, float]:
    """Gaussian tail bound ``exp(-N eps^2 / (2 b^2))`` and radius ``b / sqrt(N)``."""
    if not b > 0:
        raise ParameterError("b must be positive")
    return math.exp(-N * eps * eps / (2.0 * b * b)), b / math.sqrt(N)


def mann_kendall(x) -> tuple[float, float]:
    """One-sided Mann-Kendall test for an increasing trend: ``(tau, p)``."""
    x = np.asarray(x, dtype=np.float64)
    res = stats.kendalltau(np.arange(x.size), x, alternative="greater")
    return float(res.statistic), float(res.pvalue)


def uniform_error_bound(r: int, c: float, lam: float, N: int) -> float:
    """``a_r c / (1 - e^{-lam}) / sqrt(N)``, the time-uniform ``L_r`` bound."""
    return khintchine_constants(r) * c / (1.0 - math.exp(-lam)) / math.sqrt(N)


class MeanfieldRunner:
    """Mean-field runs of a finite-space model; values are ``tests @ eta^N``."""

    def __init__(self, model: FlowModel, init: MassMeasurePair, tests=None, eps: float = 0.0,
                 variant: str = "additive"):
        self.model = model
        self.init = init
        self.tests = np.eye(model.size) if tests is None else np.atleast_2d(np.asarray(tests, float))
        self.eps = eps
        self.variant = variant

    def __call__(self, N, seed, trial, horizon):
        ens = run_meanfield(self.model, self.init, N, seed, horizon, trial, self.eps, self.variant)
        return np.array([e.mass for e in ens]), np.array([self.tests @ e.eta for e in ens])

    def oracle(self, horizon):
        ref = exact_reference_flow(self.model, horizon, self.init)
        return np.array([p.mass for p in ref]), np.array([self.tests @ p.weights for p in ref])


class AssociationRunner:
    """Sampled association ensembles; values are ``tests @ eta`` (finite) or the mean of ``eta``.

    With ``n_inner`` set, atoms carry inner ``N'``-particle ensembles (the
    mixed scheme); otherwise the sub-filters are exact.
    """

    def __init__(self, algebra, components, observations, tests=None, n_inner: int | None = None):
        self.algebra = algebra
        self.components = components
        self.observations = observations
        self.tests = None if tests is None else np.atleast_2d(np.asarray(tests, float))
        self.n_inner = n_inner

    def _values(self, A, alg):
        m, v = assoc.intensity_summary(A, alg)
        return m, (v if self.tests is None else self.tests @ v)

    def __call__(self, N, seed, trial, horizon):
        if self.n_inner is None:
            alg = self.algebra
            A = assoc.initial_measure(self.components)
        else:
            alg = assoc.ParticleAlgebra(self.algebra, self.n_inner)
            A = assoc.inner_initial_measure(self.components, alg, seed, trial)
        out = [self._values(A, alg)]
        for n in range(horizon):
            A = assoc.mixed_step(A, self.observations[n], alg, N, seed, trial) if self.n_inner else \
                assoc.sample_association_ensemble(A, self.observations[n], alg, N, seed, trial)
            out.append(self._values(A, alg))
        return np.array([m for m, _ in out]), np.array([v for _, v in out])

    def oracle(self, horizon):
        flows = assoc.enumerate_association(assoc.initial_measure(self.components), self.observations,
                                            self.algebra, horizon)
        pairs = [self._values(A, self.algebra) for A in flows]
        return np.array([m for m, _ in pairs]), np.array([v for _, v in pairs])


@dataclass
class ErrorReport:
    """Errors ``[N index, trial, n]`` for the mass and ``[N index, trial, n, j]`` for ``eta(f_j)``."""

    N_list: list
    mass_err: np.ndarray
    value_err: np.ndarray
    seed: int
    algorithm: str = "meanfield"
    model: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.mass_err.shape[2] - 1

    def lr(self, r: int, which: str = "mass") -> np.ndarray:
        """``E(|err|^r)^{1/r}`` over trials, shape ``(len(N), horizon + 1[, k])``."""
        e = self.mass_err if which == "mass" else self.value_err
        return np.mean(np.abs(e) ** r, axis=1) ** (1.0 / r)

    def rmse(self, which: str = "mass", steps=None) -> np.ndarray:
        """Pooled RMSE per ``N`` over ``steps`` (default ``1..horizon``) and test functions."""
        steps = range(1, self.horizon + 1) if steps is None else steps
        e = (self.mass_err if which == "mass" else self.value_err)[:, :, list(steps)]
        return np.sqrt(np.mean(e.reshape(e.shape[0], -1) ** 2, axis=1))

    def slope(self, which: str = "mass", steps=None) -> float:
        """Least-squares slope of ``log RMSE`` against ``log N``."""
        if len(self.N_list) < 2:
            raise ParameterError("a slope needs at least two values of N")
        return float(np.polyfit(np.log(self.N_list), np.log(self.rmse(which, steps)), 1)[0])

    def profile(self, which: str = "mass", N_index: int = -1) -> np.ndarray:
        """``sqrt(N) * RMSE`` per step at one ``N`` (test functions pooled)."""
        e = (self.mass_err if which == "mass" else self.value_err)[N_index]
        e = e.reshape(e.shape[0], e.shape[1], -1)
        return math.sqrt(self.N_list[N_index]) * np.sqrt(np.mean(e ** 2, axis=(0, 2)))

    def moments_monotone(self) -> bool:
        ok = True
        for which in ("mass", "value"):
            l1, l2, l4 = (self.lr(r, which) for r in MOMENTS)
            tol = 1e-12 * (1 + l4)
            ok &= bool(np.all(l1 <= l2 + tol) and np.all(l2 <= l4 + tol))
        return ok

    def rows(self):
        """One CSV row per ``(N, trial, n, statistic)``."""
        k = self.value_err.shape[3]
        for i, N in enumerate(self.N_list):
            for t in range(self.mass_err.shape[1]):
                for n in range(self.mass_err.shape[2]):
                    yield (self.algorithm, self.model, N, t, n, "mass", float(self.mass_err[i, t, n]))
                    for j in range(k):
                        yield (self.algorithm, self.model, N, t, n, f"f{j}", float(self.value_err[i, t, n, j]))

    def summary(self) -> dict:
        out = {"algorithm": self.algorithm, "model": self.model, "seed": self.seed, "N": list(self.N_list),
               "trials": int(self.mass_err.shape[1]), "horizon": self.horizon,
               "rmse_mass": self.rmse("mass").tolist(), "rmse_eta": self.rmse("value").tolist(),
               "moments_monotone": self.moments_monotone()}
        for r in MOMENTS:
            out[f"L{r}_mass"] = self.lr(r, "mass").tolist()
        if len(self.N_list) > 1:
            out["slope_mass"] = self.slope("mass")
            out["slope_eta"] = self.slope("value")
        out.update(self.meta)
        return out


def _trial_block(args):
    runner, N, seed, trials, horizon = args
    ms, vs = [], []
    for t in trials:
        m, v = runner(N, seed, t, horizon)
        ms.append(m)
        vs.append(v)
    return np.array(ms), np.array(vs)


def run_trials(runner, N_list, trials: int, horizon: int, seed: int, oracle=None, threads: int = 1,
               algorithm: str = "meanfield", model: str = "") -> ErrorReport:
    """Independent trials per ``N`` against the exact oracle.

    Trial ``t`` uses the substreams ``(seed, t, ...)`` so the report does
    not depend on ``threads``.
    """
    if oracle is None:
        if not hasattr(runner, "oracle"):
            raise ParameterError("no exact oracle available for this runner")
        oracle = runner.oracle(horizon)
    om, ov = (np.asarray(a, dtype=np.float64) for a in oracle)
    if om.shape[0] < horizon + 1:
        raise ParameterError("oracle shorter than the horizon")
    om, ov = om[:horizon + 1], ov[:horizon + 1]
    mass = np.empty((len(N_list), trials, horizon + 1))
    vals = np.empty((len(N_list), trials, horizon + 1, ov.shape[1]))
    for i, N in enumerate(N_list):
        if threads > 1:
            chunks = [list(c) for c in np.array_split(np.arange(trials), threads) if len(c)]
            with ProcessPoolExecutor(max_workers=threads) as ex:
                parts = list(ex.map(_trial_block, [(runner, N, seed, c, horizon) for c in chunks]))
            m = np.concatenate([p[0] for p in parts])
            v = np.concatenate([p[1] for p in parts])
        else:
            m, v = _trial_block((runner, N, seed, range(trials), horizon))
        mass[i] = m - om
        vals[i] = v - ov
    return ErrorReport(list(N_list), mass, vals, seed, algorithm, model)
