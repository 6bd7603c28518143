"""Bernoulli single-target filter on a finite state space.

The unnormalized measure ``gamma_n`` has total mass equal to the
existence probability of the target and ``eta_n`` is the law of its
state given existence. One step uses

    g_n(x)  = (1 - d_n(x)) + d_n(x) sum_y l_n(x, y) / h_n(y)
    Q(x, .) = [s_n g_n M_{n+1}(x, .) + (1/m - 1) mu_{n+1}] / ((1 - m) + m eta(g_n))

with ``m = gamma_n(1)``. Observations are ids into a finite alphabet of
size ``L``; ``l_n`` is a ``(K, L)`` table and ``h_n`` has length ``L``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import DomainError, ExtinctionError, ParameterError
from .flow import FlowModel
from .measures import NORM_TOL, DiscreteMeasure, psi, selection_matrix
from .observations import ObservationSet, as_observation


@dataclass(frozen=True)
class BernoulliStep:
    """Parameters of one step ``n -> n+1``.

    ``birth`` is the unnormalized birth measure ``mu_{n+1}`` with total
    mass in ``[0, 1]``; ``motion`` is ``M_{n+1}``.
    """

    survival: np.ndarray
    detection: np.ndarray
    likelihood: np.ndarray
    clutter: np.ndarray
    birth: np.ndarray
    motion: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.motion).shape[0]
        conv = {
            "survival": np.broadcast_to(np.asarray(self.survival, float), (K,)),
            "detection": np.broadcast_to(np.asarray(self.detection, float), (K,)),
            "likelihood": np.atleast_2d(np.asarray(self.likelihood, float)),
            "clutter": np.atleast_1d(np.asarray(self.clutter, float)),
            "birth": np.asarray(self.birth, float).ravel(),
            "motion": np.asarray(self.motion, float),
        }
        for k, v in conv.items():
            v = np.array(v)
            v.setflags(write=False)
            object.__setattr__(self, k, v)
        self.validate()

    @property
    def size(self) -> int:
        return self.motion.shape[0]

    @property
    def birth_mass(self) -> float:
        return float(self.birth.sum())

    @property
    def birth_law(self) -> np.ndarray:
        if not self.birth_mass > 0:
            raise ParameterError("the birth law is undefined for zero birth mass")
        return self.birth / self.birth_mass

    def validate(self):
        K = self.size
        if self.motion.shape != (K, K) or np.any(self.motion < 0):
            raise ParameterError("motion must be a non-negative K x K matrix")
        if np.any(np.abs(self.motion.sum(axis=1) - 1.0) > NORM_TOL):
            raise ParameterError("motion rows must sum to 1")
        if self.likelihood.shape[0] != K or self.likelihood.shape[1] != self.clutter.shape[0]:
            raise ParameterError("likelihood must be K x L with L = len(clutter)")
        if np.any(self.likelihood < 0):
            raise ParameterError("likelihood must be non-negative")
        for name in ("survival", "detection"):
            v = getattr(self, name)
            if np.any(v < 0) or np.any(v > 1):
                raise ParameterError(f"{name} must take values in [0, 1]")
        if self.birth.shape != (K,) or np.any(self.birth < 0):
            raise ParameterError("birth must be a non-negative vector of length K")
        if self.birth_mass > 1.0 + NORM_TOL:
            raise ParameterError("birth mass must not exceed 1")
        if np.all(self.survival == 0) and self.birth_mass == 0:
            raise ParameterError("survival = 0 together with zero birth mass kills the flow")

    @property
    def survival_bounds(self) -> tuple[float, float]:
        return float(self.survival.min()), float(self.survival.max())


@dataclass(frozen=True)
class BernoulliModelSpec:
    """A homogeneous step or a per-step schedule ``n -> BernoulliStep``."""

    steps: BernoulliStep | Sequence[BernoulliStep] | Callable[[int], BernoulliStep]
    homogeneous: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "homogeneous", isinstance(self.steps, BernoulliStep))

    def at(self, n: int) -> BernoulliStep:
        if isinstance(self.steps, BernoulliStep):
            return self.steps
        if callable(self.steps):
            return self.steps(n)
        return self.steps[n]

    @property
    def size(self) -> int:
        return self.at(0).size


def _as_spec(spec) -> BernoulliModelSpec:
    return spec if isinstance(spec, BernoulliModelSpec) else BernoulliModelSpec(spec)


def likelihood_vector(step: BernoulliStep, Y) -> np.ndarray:
    """``g_n`` on every state."""
    ids = as_observation(Y).points
    d = step.detection
    if ids.size == 0:
        return 1.0 - d
    if ids.min() < 0 or ids.max() >= step.clutter.size:
        raise DomainError("observation id outside the sensor alphabet")
    h = step.clutter[ids]
    if np.any(h <= 0):
        raise DomainError("clutter intensity vanishes at an observed point")
    return (1.0 - d) + d * (step.likelihood[:, ids] / h).sum(axis=1)


def bernoulli_likelihood(x: int, Y, spec, n: int = 0) -> float:
    """``g_n(x) = (1 - d_n(x)) + d_n(x) sum_y l_n(x,y)/h_n(y)``."""
    return float(likelihood_vector(_as_spec(spec).at(n), Y)[x])


def theta(a: float, x: float) -> float:
    """``theta_a(x) = a x / (a x + 1 - x)``."""
    if a < 0 or not 0.0 <= x <= 1.0:
        raise ParameterError("theta needs a >= 0 and x in [0, 1]")
    if x == 1.0:
        if a == 0:
            raise ParameterError("theta_0(1) is undefined")
        return 1.0
    return a * x / (a * x + (1.0 - x))


def _mass(step: BernoulliStep, m: float, eta: np.ndarray, g: np.ndarray) -> float:
    etag = float(eta @ g)
    den = (1.0 - m) + m * etag
    if not den > 0:
        raise ExtinctionError("(1 - m) + m eta(g) = 0")
    mhat = m * etag / den
    s_upd = float(psi(eta, g) @ step.survival) if mhat > 0 else 0.0
    return mhat * s_upd + (1.0 - mhat) * step.birth_mass


def _weights(eta) -> np.ndarray:
    return eta.dense() if isinstance(eta, DiscreteMeasure) else np.asarray(eta, dtype=np.float64)


def bernoulli_mass_step(m: float, eta, Y, spec, n: int = 0) -> float:
    """Existence probability after one step.

    Two stages: the updated mass ``m_hat = m eta(g)/((1-m) + m eta(g))``,
    then ``m' = m_hat Psi_g(eta)(s) + (1 - m_hat) mu_{n+1}(1)``.
    """
    if not 0.0 <= m <= 1.0:
        raise ParameterError("mass must lie in [0, 1]")
    step = _as_spec(spec).at(n)
    w = _weights(eta)
    return _mass(step, m, w, likelihood_vector(step, Y))


def _measure_mckean(step, m, eta, g):
    gs = g * step.survival
    a = m * float(eta @ gs)
    b = (1.0 - m) * step.birth_mass
    if not a + b > 0:
        raise ExtinctionError("m eta(g s) + (1 - m) mu(1) = 0")
    alpha = a / (a + b)
    if alpha == 0.0:
        return step.birth_law.copy()
    out = alpha * (psi(eta, gs) @ step.motion)
    if alpha < 1.0:
        out += (1.0 - alpha) * step.birth_law
    return out


def _measure_hatq(step, m, eta, g):
    Ghat = m * g * step.survival + (1.0 - m) * step.birth_mass
    if not float(eta @ Ghat) > 0:
        raise ExtinctionError("eta(G_hat) = 0")
    w = psi(eta, Ghat)
    rows = (m * g * step.survival)[:, None] * step.motion + ((1.0 - m) * step.birth)[None, :]
    live = Ghat > 0
    Mhat = np.zeros_like(rows)
    Mhat[live] = rows[live] / Ghat[live, None]
    return w @ Mhat


def bernoulli_measure_step(m: float, eta, Y, spec, n: int = 0, route: str = "mckean") -> np.ndarray:
    """``Gamma^2_{n+1}(m, eta)`` as a dense vector.

    ``route="mckean"`` uses ``alpha Psi_{gs}(eta) M + (1 - alpha) mu_bar``
    with ``alpha = m eta(gs) / (m eta(gs) + (1-m) mu(1))``;
    ``route="hatQ"`` uses ``Psi_{G_hat}(eta) M_hat``.
    """
    step = _as_spec(spec).at(n)
    w = _weights(eta)
    g = likelihood_vector(step, Y)
    if route == "mckean":
        return _measure_mckean(step, m, w, g)
    if route == "hatQ":
        return _measure_hatq(step, m, w, g)
    raise ParameterError(f"unknown route {route!r}")


def bernoulli_alternating_mass(spec, observations, gamma0: float, eta0, horizon: int) -> np.ndarray:
    """Closed-form masses for ``s = 0`` and ``mu_{n+1}(1) = 1``.

    With ``b_n = mu_bar_n(g_n)`` (and ``mu_bar_0 = eta_0``):

        gamma_{2(k+1)}(1) = theta_{prod_{p<=k} b_{2p}/b_{2p+1}}(gamma_0(1))
        gamma_{2k+1}(1)   = theta_{b_{2k}^{-1} prod_{p<k} b_{2p+1}/b_{2p}}(1 - gamma_0(1))
    """
    spec = _as_spec(spec)
    b = np.empty(horizon)
    for n in range(horizon):
        step = spec.at(n)
        if np.any(step.survival != 0) or abs(step.birth_mass - 1.0) > NORM_TOL:
            raise ParameterError("alternating closed form needs s = 0 and mu(1) = 1")
        law = _weights(eta0) if n == 0 else spec.at(n - 1).birth_law
        b[n] = float(law @ likelihood_vector(step, observations[n]))
    out = np.empty(horizon + 1)
    out[0] = gamma0
    even = 1.0  # prod_{p<k} b_{2p} / b_{2p+1}
    for t in range(1, horizon + 1):
        if t % 2:
            k = (t - 1) // 2
            out[t] = theta(1.0 / (b[2 * k] * even), 1.0 - gamma0)
        else:
            k = t // 2 - 1
            even *= b[2 * k] / b[2 * k + 1]
            out[t] = theta(even, gamma0)
    return out


def likelihood_bounds(d_lo: float, d_hi: float, l_lo: float, l_hi: float, h_lo: float, h_hi: float,
                      count: float) -> tuple[float, float]:
    """Certified ``(g^-, g^+)`` from declared bounds on ``d, l, h`` and ``Y_n(1)``."""
    if not h_lo > 0:
        raise ParameterError("likelihood bounds need h^- > 0")
    d_up = d_hi if l_hi * count >= h_lo else d_lo
    d_dn = d_lo if l_lo * count >= h_hi else d_hi
    g_lo = (1.0 - d_dn) + d_dn * l_lo / h_hi * count
    g_hi = (1.0 - d_up) + d_up * l_hi / h_lo * count
    return g_lo, g_hi


class BernoulliModel(FlowModel):
    """A Bernoulli filter bound to an observation record."""

    def __init__(self, spec, observations: Sequence):
        self.spec = _as_spec(spec)
        self.observations = [as_observation(y, k) for k, y in enumerate(observations)]
        self.size = self.spec.size
        self._g: dict[int, np.ndarray] = {}

    @property
    def horizon(self) -> int:
        return len(self.observations)

    def likelihood(self, n: int) -> np.ndarray:
        g = self._g.get(n)
        if g is None:
            g = likelihood_vector(self.spec.at(n), self.observations[n])
            self._g[n] = g
        return g

    def operator(self, n, m, eta):
        step = self.spec.at(n)
        g = self.likelihood(n)
        den = (1.0 - m) + m * float(eta @ g)
        if not den > 0:
            raise ExtinctionError("(1 - m) + m eta(g) = 0")
        Q = (step.survival * g)[:, None] * step.motion + ((1.0 / m - 1.0) * step.birth)[None, :]
        return Q / den

    def potential(self, n, m, eta):
        step = self.spec.at(n)
        g = self.likelihood(n)
        den = (1.0 - m) + m * float(eta @ g)
        if not den > 0:
            raise ExtinctionError("(1 - m) + m eta(g) = 0")
        return (step.survival * g + (1.0 / m - 1.0) * step.birth_mass) / den

    def mckean_kernel(self, n, m, eta, eps=0.0, variant="additive"):
        step = self.spec.at(n)
        gs = self.likelihood(n) * step.survival
        a = m * float(eta @ gs)
        b = (1.0 - m) * step.birth_mass
        if not a + b > 0:
            raise ExtinctionError("m eta(g s) + (1 - m) mu(1) = 0")
        alpha = a / (a + b)
        if alpha == 0.0:
            return np.broadcast_to(step.birth_law, (self.size, self.size)).copy()
        Mg = alpha * step.motion
        if alpha < 1.0:
            Mg = Mg + (1.0 - alpha) * step.birth_law[None, :]
        return selection_matrix(eta, gs, eps, variant) @ Mg

    def step(self, n, m, eta):
        step = self.spec.at(n)
        g = self.likelihood(n)
        return _mass(step, m, eta, g), _measure_mckean(step, m, eta, g)

    def mass_bounds(self, n):
        step = self.spec.at(n)
        s_lo, s_hi = step.survival_bounds
        lo = min(step.birth_mass, s_lo)
        hi = max(step.birth_mass, s_hi)
        return (lambda m: lo / m), (lambda m: hi / m)

    def envelope(self, n: int) -> tuple[float, float]:
        """``[mu_n(1) ^ s^-_{n-1}, mu_n(1) v s^+_{n-1}]`` for ``n >= 1``."""
        if n < 1:
            raise ParameterError("the envelope starts at n = 1")
        step = self.spec.at(n - 1)
        s_lo, s_hi = step.survival_bounds
        return min(step.birth_mass, s_lo), max(step.birth_mass, s_hi)

    def constant_mass_form(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """``(g^(s), M^(s))`` for the case ``s = mu(1)``.

        ``g^(s) = s g + (1 - s)`` and
        ``M^(s)(x, .) = [s g(x) M(x, .) + (1 - s) mu_bar] / g^(s)(x)``.
        """
        step = self.spec.at(n)
        s = step.survival
        g = self.likelihood(n)
        gs = s * g + (1.0 - s)
        Ms = ((s * g)[:, None] * step.motion + (1.0 - s)[:, None] * step.birth_law[None, :]) / gs[:, None]
        return gs, Ms

    def lipschitz_constants(self, n: int, m_lo: float, m_hi: float) -> tuple[float, float]:
        """``(c(n), c'(n))`` with ``|Q_{m eta}(f) - Q_{m' eta'}(f)| <= c |m-m'| + c' |[eta-eta'](g)|``.

        Valid for ``|f| <= 1`` and ``m, m'`` in ``[m_lo, m_hi]``; derived
        from the explicit form of ``Q`` with ``D = (1-m) + m eta(g) >= min(1, g^-)``.
        """
        step = self.spec.at(n)
        g = self.likelihood(n)
        g_lo, g_hi = float(g.min()), float(g.max())
        D_lo = min(1.0, g_lo)
        num = float((step.survival * g).max()) + (1.0 / m_lo - 1.0) * step.birth_mass
        spread = max(abs(1.0 - g_lo), abs(1.0 - g_hi))
        c = step.birth_mass / (m_lo * m_lo * D_lo) + num * spread / D_lo ** 2
        c_prime = num * m_hi / D_lo ** 2
        return c, c_prime
