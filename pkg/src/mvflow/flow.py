"""Generic measure-valued flows on finite spaces.

A flow propagates the pair ``(gamma_n(1), eta_n)`` through

    gamma_{n+1}(1) = eta_n(G_{n, gamma_n}) gamma_n(1)
    eta_{n+1}      = eta_n Q_{n+1, gamma_n} / eta_n Q_{n+1, gamma_n}(1)

Models implement :class:`FlowModel`: the operator ``Q_{n+1, gamma}``
and a McKean kernel ``K_{n+1, gamma}`` with ``eta K = eta Q / eta Q(1)``.
Step ``n`` of a model always means the map from time ``n`` to ``n+1``.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exceptions import ExtinctionError, MeasureError, ParameterError
from .measures import DiscreteMeasure


@dataclass(frozen=True)
class MassMeasurePair:
    """``(gamma_n(1), eta_n)`` at time ``step``."""

    mass: float
    eta: DiscreteMeasure
    step: int = 0

    def __post_init__(self):
        if not (self.mass > 0 and np.isfinite(self.mass)):
            raise ParameterError(f"mass must be positive and finite, got {self.mass!r}")
        if not self.eta.probability:
            raise MeasureError("eta must be a probability measure")
        if self.step < 0:
            raise ParameterError("step index must be non-negative")

    @classmethod
    def from_dense(cls, mass: float, weights, step: int = 0) -> "MassMeasurePair":
        return cls(float(mass), DiscreteMeasure.finite(weights), step)

    @property
    def weights(self) -> np.ndarray:
        return self.eta.dense()

    @property
    def gamma(self) -> np.ndarray:
        """The unnormalized measure ``gamma_n`` as a dense vector."""
        return self.mass * self.eta.dense()


class FlowModel(ABC):
    """Interface of a finite-space flow.

    Subclasses hold their own observation record and are queried with an
    explicit step index, so time-inhomogeneous models carry no clock.
    ``eta`` arguments are dense probability vectors.
    """

    size: int

    @abstractmethod
    def operator(self, n: int, m: float, eta: np.ndarray) -> np.ndarray:
        """Matrix of ``Q_{n+1, m eta}``."""

    def potential(self, n: int, m: float, eta: np.ndarray) -> np.ndarray:
        """``G_{n, m eta} = Q_{n+1, m eta}(1)``."""
        return self.operator(n, m, eta).sum(axis=1)

    @abstractmethod
    def mckean_kernel(self, n: int, m: float, eta: np.ndarray, eps: float = 0.0,
                      variant: str = "additive") -> np.ndarray:
        """Row-stochastic ``K_{n+1, m eta}``; ``eps``/``variant`` pick the selection kernel."""

    def step(self, n: int, m: float, eta: np.ndarray) -> tuple[float, np.ndarray]:
        """Closed-form ``Gamma_{n+1}``; models override with their own formulas."""
        return normalize_route(self, n, m, eta)

    def mass_bounds(self, n: int) -> tuple[Callable[[float], float], Callable[[float], float]] | None:
        """Optional ``(theta_-, theta_+)`` with ``theta_-(m) <= eta(G_{n, m eta}) <= theta_+(m)``."""
        return None

    @property
    def horizon(self) -> int | None:
        """Number of steps the model can take (length of its observation record)."""
        return None


def _check_eta(model: FlowModel, eta: np.ndarray):
    if eta.shape != (model.size,):
        raise MeasureError(f"eta has shape {eta.shape}, model space has {model.size} states")


def normalize_route(model: FlowModel, n: int, m: float, eta: np.ndarray) -> tuple[float, np.ndarray]:
    """One step by direct normalization ``eta Q / eta Q(1)``."""
    etaQ = eta @ model.operator(n, m, eta)
    z = etaQ.sum()
    if not z > 0:
        raise ExtinctionError(f"eta(G) = {z!r} at step {n}")
    return m * z, etaQ / z


def psi_kernel_route(model: FlowModel, n: int, m: float, eta: np.ndarray) -> tuple[float, np.ndarray]:
    """One step as ``Psi_G(eta) M`` with ``M(x, .) = Q(x, .) / Q(1)(x)``."""
    Q = model.operator(n, m, eta)
    G = Q.sum(axis=1)
    z = float(eta @ G)
    if not z > 0:
        raise ExtinctionError(f"eta(G) = {z!r} at step {n}")
    w = eta * G / z
    live = G > 0
    M = np.zeros_like(Q)
    M[live] = Q[live] / G[live, None]
    return m * z, w @ M


def mckean_route(model: FlowModel, n: int, m: float, eta: np.ndarray, eps: float = 0.0,
                 variant: str = "additive") -> tuple[float, np.ndarray]:
    """One step with the mass from ``G`` and the measure from ``eta K``."""
    return mass_update(model, n, m, eta), eta @ model.mckean_kernel(n, m, eta, eps, variant)


def mass_update(model: FlowModel, n: int, m: float, eta: np.ndarray) -> float:
    z = float(eta @ model.potential(n, m, eta))
    if not z > 0:
        raise ExtinctionError(f"eta(G) = {z!r} at step {n}")
    return m * z


_ROUTES = {"model": None, "normalize": normalize_route, "psi": psi_kernel_route, "mckean": mckean_route}


def mass_step(pair: MassMeasurePair, model: FlowModel) -> float:
    """``gamma_{n+1}(1) = eta_n(G_{n, gamma_n}) gamma_n(1)``."""
    _check_eta(model, pair.weights)
    return mass_update(model, pair.step, pair.mass, pair.weights)


def flow_step(pair: MassMeasurePair, model: FlowModel, route: str = "model") -> MassMeasurePair:
    """``(Gamma^1_{n+1}, Gamma^2_{n+1})(gamma_n(1), eta_n)``.

    ``route`` is ``"model"`` (the model's closed form), ``"normalize"``
    (eta Q / eta Q(1)), ``"psi"`` (Boltzmann-Gibbs then the normalized
    kernel) or ``"mckean"`` (eta K).
    """
    eta = pair.weights
    _check_eta(model, eta)
    if route not in _ROUTES:
        raise ParameterError(f"unknown route {route!r}")
    fn = _ROUTES[route]
    if fn is None:
        m, w = model.step(pair.step, pair.mass, eta)
    else:
        m, w = fn(model, pair.step, pair.mass, eta)
    return MassMeasurePair(float(m), DiscreteMeasure.finite(w), pair.step + 1)


def semigroup_flow(p: int, n: int, pair: MassMeasurePair, model: FlowModel, route: str = "model") -> MassMeasurePair:
    """``Gamma_{p,n}`` applied to a pair sitting at time ``p``."""
    if n < p:
        raise ParameterError("semigroup needs p <= n")
    if pair.step != p:
        raise ParameterError(f"pair is at step {pair.step}, expected {p}")
    for _ in range(n - p):
        pair = flow_step(pair, model, route)
    return pair


def exact_reference_flow(model: FlowModel, horizon: int, init: MassMeasurePair,
                         route: str = "model") -> list[MassMeasurePair]:
    """Exact trajectory ``[pair_0, ..., pair_horizon]`` by dense arithmetic."""
    if not isinstance(model, FlowModel):
        raise ParameterError("exact reference flow needs a finite FlowModel")
    if model.size > 1000 or horizon > 10_000:
        raise ParameterError("exact reference flow is limited to 1000 states and 10^4 steps")
    out = [init]
    pair = init
    for _ in range(horizon):
        pair = flow_step(pair, model, route)
        out.append(pair)
    return out


def mass_envelope(model: FlowModel, horizon: int, m0: float, start: int = 0) -> np.ndarray:
    """Recursive ``[m_n^-, m_n^+]`` from declared ``theta_{+/-}``.

    ``m_{n+1}^- = m_n^- theta_-(m_n^-)`` and likewise for the upper end,
    starting from ``m_0^- = m_0^+ = gamma_0(1)``. Returns shape
    ``(horizon + 1, 2)``.
    """
    env = np.empty((horizon + 1, 2))
    env[0] = m0
    for k in range(horizon):
        bounds = model.mass_bounds(start + k)
        if bounds is None:
            raise ParameterError(f"model declares no mass bounds at step {start + k}")
        lo, hi = bounds
        env[k + 1, 0] = env[k, 0] * lo(env[k, 0])
        env[k + 1, 1] = env[k, 1] * hi(env[k, 1])
    return env


def check_mckean_consistency(model: FlowModel, n: int, m: float, eta: np.ndarray, eps: float = 0.0,
                             variant: str = "additive") -> float:
    """Sup-norm gap between ``eta Q / eta Q(1)`` and ``eta K``."""
    _, direct = normalize_route(model, n, m, eta)
    return float(np.abs(direct - eta @ model.mckean_kernel(n, m, eta, eps, variant)).max())


def telescoping_terms(model: FlowModel, pairs: Sequence[MassMeasurePair], reference: MassMeasurePair,
                      f: np.ndarray | None = None):
    """Local error decomposition of an approximate trajectory.

    ``pairs`` are approximations ``(u_p, eta_p)`` of the flow at times
    ``0..n``; ``reference`` is the exact pair at time 0. Term ``p`` is
    ``Gamma_{p,n}(pairs[p]) - Gamma_{p-1,n}(pairs[p-1])`` (term 0 uses the
    reference), so the terms add up to ``pairs[n] - Gamma_{0,n}(reference)``.
    Returns ``(mass_terms, f_terms, end_to_end)`` where the measure parts
    are evaluated on ``f`` (default: the first indicator).
    """
    n = pairs[-1].step
    if f is None:
        f = np.eye(model.size)[0]

    def image(pair):
        q = semigroup_flow(pair.step, n, pair, model)
        return q.mass, float(q.weights @ f)

    images = [image(reference)] + [image(pq) for pq in pairs]
    mass_terms = np.array([images[k + 1][0] - images[k][0] for k in range(len(pairs))])
    f_terms = np.array([images[k + 1][1] - images[k][1] for k in range(len(pairs))])
    end = (pairs[-1].mass - images[0][0], float(pairs[-1].weights @ f) - images[0][1])
    return mass_terms, f_terms, end
