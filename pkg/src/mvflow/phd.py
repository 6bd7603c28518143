"""PHD filter on a finite state space.

For ``gamma = m eta`` the intensity moves by

    Q_{n+1,gamma}(x, .) = g_{n,gamma}(x) M_{n+1}(x, .) + mu_{n+1} / m
    g_{n,gamma}(x)      = r(x) [(1 - d(x)) + d(x) sum_y g(x,y) / (h(y) + gamma(d g(., y)))]

where ``r = s + b`` and ``M = (s M' + b B_bar) / r`` merges survival
motion with spawning. Observations are ids into a finite alphabet;
``likelihood`` is the ``(K, L)`` sensor table, ``clutter`` has length ``L``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DomainError, ExtinctionError, ParameterError
from .flow import FlowModel, MassMeasurePair
from .measures import NORM_TOL, DiscreteMeasure, psi, selection_matrix
from .observations import as_observation


@dataclass(frozen=True)
class PhdModelSpec:
    survival: np.ndarray
    detection: np.ndarray
    likelihood: np.ndarray
    clutter: np.ndarray
    birth: np.ndarray
    motion: np.ndarray
    spawn_rate: np.ndarray | float = 0.0
    spawn_kernel: np.ndarray | None = None

    def __post_init__(self):
        K = np.asarray(self.motion).shape[0]
        vals = {
            "survival": np.broadcast_to(np.asarray(self.survival, float), (K,)),
            "detection": np.broadcast_to(np.asarray(self.detection, float), (K,)),
            "likelihood": np.atleast_2d(np.asarray(self.likelihood, float)),
            "clutter": np.atleast_1d(np.asarray(self.clutter, float)),
            "birth": np.asarray(self.birth, float).ravel(),
            "motion": np.asarray(self.motion, float),
            "spawn_rate": np.broadcast_to(np.asarray(self.spawn_rate, float), (K,)),
            "spawn_kernel": np.eye(K) if self.spawn_kernel is None else np.asarray(self.spawn_kernel, float),
        }
        for k, v in vals.items():
            v = np.array(v)
            v.setflags(write=False)
            object.__setattr__(self, k, v)
        self.validate()
        r = self.survival + self.spawn_rate
        safe = np.where(r > 0, r, 1.0)
        merged = (self.survival[:, None] * self.motion + self.spawn_rate[:, None] * self.spawn_kernel) / safe[:, None]
        merged[r <= 0] = self.motion[r <= 0]
        merged.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "rate", r)
        object.__setattr__(self, "merged_motion", merged)

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

    @property
    def homogeneous(self) -> bool:
        """Survival, spawn rate and detection do not depend on the state."""
        return all(np.ptp(v) == 0 for v in (self.survival, self.spawn_rate, self.detection))

    def validate(self):
        K = self.size
        for name in ("motion", "spawn_kernel"):
            P = getattr(self, name)
            if P.shape != (K, K) or np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1) > NORM_TOL):
                raise ParameterError(f"{name} must be a K x K Markov matrix")
        if self.likelihood.shape[0] != K or self.likelihood.shape[1] != self.clutter.shape[0]:
            raise ParameterError("likelihood must be K x L with L = len(clutter)")
        if np.any(self.likelihood < 0) or np.any(self.clutter < 0):
            raise ParameterError("likelihood and clutter must be non-negative")
        if np.any(self.survival < 0) or np.any(self.survival > 1):
            raise ParameterError("survival must take values in [0, 1]")
        if np.any(self.detection < 0) or np.any(self.detection > 1):
            raise ParameterError("detection must take values in [0, 1]")
        if np.any(self.spawn_rate < 0):
            raise ParameterError("spawn rate must be non-negative")
        if np.any(self.survival + self.spawn_rate <= 0):
            raise ParameterError("r = s + b must be positive")
        if self.birth.shape != (K,) or np.any(self.birth < 0):
            raise ParameterError("birth must be a non-negative vector of length K")

    def scalars(self) -> tuple[float, float]:
        """``(r, d)`` of a homogeneous spec."""
        if not self.homogeneous:
            raise ParameterError("this computation assumes state-independent s, b and d")
        return float(self.rate[0]), float(self.detection[0])


def _gamma_vec(gamma) -> np.ndarray:
    if isinstance(gamma, DiscreteMeasure):
        return gamma.dense()
    return np.asarray(gamma, dtype=np.float64)


def _denominators(spec: PhdModelSpec, ids: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    if ids.size and (ids.min() < 0 or ids.max() >= spec.clutter.size):
        raise DomainError("observation id outside the sensor alphabet")
    dg = spec.detection[:, None] * spec.likelihood[:, ids]
    den = spec.clutter[ids] + gamma @ dg
    if np.any(den <= 0):
        raise ExtinctionError("h(y) + gamma(d g(., y)) = 0")
    return den


def detection_factor(spec: PhdModelSpec, Y, gamma) -> np.ndarray:
    """``(1 - d) + d sum_y g(., y) / (h(y) + gamma(d g(., y)))`` (the PHD likelihood without ``r``)."""
    ids = as_observation(Y).points
    gamma = _gamma_vec(gamma)
    d = spec.detection
    if ids.size == 0:
        return 1.0 - d
    den = _denominators(spec, ids, gamma)
    return (1.0 - d) + d * (spec.likelihood[:, ids] / den).sum(axis=1)


def phd_likelihood_vector(spec: PhdModelSpec, Y, gamma) -> np.ndarray:
    """``g_{n,gamma}`` on every state; ``gamma`` is the unnormalized intensity."""
    return spec.rate * detection_factor(spec, Y, gamma)


def phd_likelihood(x: int, Y, gamma, spec: PhdModelSpec, n: int = 0) -> float:
    """``g_{n,gamma}(x) = r [(1 - d) + d sum_y g(x,y)/(h(y) + gamma(d g(., y)))]``."""
    return float(phd_likelihood_vector(spec, Y, gamma)[x])


def phd_extended_alphabet(Y, gamma=None, spec: PhdModelSpec | None = None):
    """Alphabet ``Y + delta_c`` and its potentials.

    Returns the symbol list (``"c"`` first, then the observation ids) and,
    when ``gamma`` and ``spec`` are given, a ``(len(Y) + 1, K)`` array of
    the pieces ``g^gamma(., y)``:
    ``r (1 - d)`` for ``c`` and ``r d g(., y) / (h(y) + gamma(d g(., y)))``
    for real observations. Their sum is ``g_{n,gamma}``.
    """
    ids = as_observation(Y).points
    symbols = ["c"] + [int(y) for y in ids]
    if spec is None or gamma is None:
        return symbols
    gamma = _gamma_vec(gamma)
    pieces = np.empty((len(symbols), spec.size))
    pieces[0] = spec.rate * (1.0 - spec.detection)
    if ids.size:
        den = _denominators(spec, ids, gamma)
        pieces[1:] = (spec.rate * spec.detection)[None, :] * (spec.likelihood[:, ids] / den).T
    return symbols, pieces


def _alpha(gg: float, mu1: float) -> float:
    if not gg + mu1 > 0:
        raise ExtinctionError("gamma(g) + mu(1) = 0")
    return gg / (gg + mu1)


def _phd_step(spec: PhdModelSpec, m: float, eta: np.ndarray, Y) -> tuple[float, np.ndarray]:
    g = phd_likelihood_vector(spec, Y, m * eta)
    gg = m * float(eta @ g)
    mu1 = spec.birth_mass
    a = _alpha(gg, mu1)
    out = a * (psi(eta, g) @ spec.merged_motion) if a > 0 else np.zeros(spec.size)
    if a < 1.0:
        out += (1.0 - a) * spec.birth_law
    return gg + mu1, out


def phd_flow_step(m: float, eta, Y, spec: PhdModelSpec, n: int = 0) -> MassMeasurePair:
    """One PHD step: ``Gamma^1 = gamma(g_{n,gamma}) + mu(1)``, ``Gamma^2 = Psi_g(eta) M_{n+1,gamma}``."""
    if not m > 0:
        raise ParameterError("PHD step needs m > 0")
    w = eta.dense() if isinstance(eta, DiscreteMeasure) else np.asarray(eta, float)
    mass, out = _phd_step(spec, m, w, Y)
    return MassMeasurePair.from_dense(mass, out, n + 1)


def phd_update_predict(m: float, eta, Y, spec: PhdModelSpec, n: int = 0):
    """Updating then prediction.

    updated:   ``gamma_hat(1) = gamma(g_c)``, ``eta_hat = Psi_{g_c}(eta)`` with
               ``g_c = (1 - d) + d sum_y g(., y)/(h(y) + gamma(d g(., y)))``
    predicted: ``gamma_{n+1}(1) = gamma_hat(r) + mu(1)``,
               ``eta_{n+1} = Psi_r(eta_hat) M'_{n+1,gamma_hat}`` with
               ``M' = alpha' M + (1 - alpha') mu_bar``, ``alpha' = gamma_hat(r)/(gamma_hat(r) + mu(1))``.
    """
    w = eta.dense() if isinstance(eta, DiscreteMeasure) else np.asarray(eta, float)
    gc = detection_factor(spec, Y, m * w)
    upd_mass = m * float(w @ gc)
    if not upd_mass > 0:
        raise ExtinctionError("updated mass vanished")
    eta_hat = psi(w, gc)
    hat_r = upd_mass * float(eta_hat @ spec.rate)
    mu1 = spec.birth_mass
    a = _alpha(hat_r, mu1)
    pred = a * (psi(eta_hat, spec.rate) @ spec.merged_motion)
    if a < 1.0:
        pred += (1.0 - a) * spec.birth_law
    return (MassMeasurePair.from_dense(upd_mass, eta_hat, n),
            MassMeasurePair.from_dense(hat_r + mu1, pred, n + 1))


def _y_functional(spec: PhdModelSpec, ids: np.ndarray, fn) -> float:
    if ids.size == 0:
        return 0.0
    return float(sum(fn(int(y)) for y in ids))


def phd_mass_bounds(spec: PhdModelSpec, gamma0: float, y_max: float, lower_observations: Sequence = ()):
    """Time-uniform mass bounds ``(m^-, m^+)``.

        m^- = mu(1)/(1 - r(1-d)) (1 + r d Y^-(g^-/(h + d mu(1) g^-)))
        m^+ = gamma_0(1) + (r Y^+(1) + mu(1)) / (1 - r(1-d))

    ``Y^+(1) = y_max`` is the declared cap on observation counts and
    ``Y^-(phi)`` is the infimum of ``Y_n(phi)`` over the declared lower
    observation sets (zero when none are given). ``g^-(y) = min_x g(x, y)``.
    The lower end holds from time 0 on when ``gamma_0(1) >= m^-``;
    otherwise it is reached geometrically.
    """
    r, d = spec.scalars()
    rho = r * (1.0 - d)
    if rho >= 1.0:
        raise ParameterError("mass bounds need r(1 - d) < 1")
    mu1 = spec.birth_mass
    g_lo = spec.likelihood.min(axis=0)
    h = spec.clutter

    def theta(y):
        return g_lo[y] / (h[y] + d * mu1 * g_lo[y]) if g_lo[y] > 0 else 0.0

    lows = [_y_functional(spec, as_observation(Y).points, theta) for Y in lower_observations]
    y_low = min(lows) if lows else 0.0
    m_lo = mu1 / (1.0 - rho) * (1.0 + r * d * y_low)
    m_hi = gamma0 + (r * y_max + mu1) / (1.0 - rho)
    return m_lo, m_hi


def phd_weights(spec: PhdModelSpec, u: float, eta, Y) -> np.ndarray:
    """``w_u(eta, y) = r d u eta(g(., y)) / (h(y) + d u eta(g(., y)))`` per observation."""
    r, d = spec.scalars()
    ids = as_observation(Y).points
    w = eta.dense() if isinstance(eta, DiscreteMeasure) else np.asarray(eta, float)
    eg = w @ spec.likelihood[:, ids]
    return r * d * u * eg / (spec.clutter[ids] + d * u * eg)


def phd_weight_bounds(spec: PhdModelSpec, m_lo: float, m_hi: float, Y) -> tuple[np.ndarray, np.ndarray]:
    """``(w^-, w^+)`` with ``w^-(y) <= w_u(eta, y) <= w^+(y)`` for ``u`` in ``[m^-, m^+]``."""
    r, d = spec.scalars()
    ids = as_observation(Y).points
    g_lo = spec.likelihood.min(axis=0)[ids]
    g_hi = spec.likelihood.max(axis=0)[ids]
    h = spec.clutter[ids]
    lo = r * d * m_lo * g_lo / (h + d * m_lo * g_lo)
    hi = r * d * m_hi * g_hi / (h + d * m_hi * g_hi)
    return lo, hi


def phd_lipschitz_bound(spec: PhdModelSpec, Y, m: float, eta, m2: float, eta2, m_lo: float, m_hi: float):
    """Sup gap of the detection factor between two intensities and its certified bound.

    Returns ``(gap, bound, c_n)`` where ``bound`` is
    ``sum_y g'^+_y / (h_y + m^- g'^-_y)^2 (g'^+_y |m'-m| + m^+ |[eta'-eta](g'_y)|)``
    and ``c_n`` the constant in ``gap <= c_n [|m'-m| + sum_y |[eta'-eta](g'_y)|]``.
    """
    ids = as_observation(Y).points
    w = np.asarray(eta, float)
    w2 = np.asarray(eta2, float)
    gap = float(np.abs(detection_factor(spec, Y, m * w) - detection_factor(spec, Y, m2 * w2)).max())
    if ids.size == 0:
        return gap, 0.0, 0.0
    gp = spec.detection[:, None] * spec.likelihood[:, ids]
    gp_hi = gp.max(axis=0)
    gp_lo = gp.min(axis=0)
    den = (spec.clutter[ids] + m_lo * gp_lo) ** 2
    diffs = np.abs((w2 - w) @ gp)
    bound = float((gp_hi / den * (gp_hi * abs(m2 - m) + m_hi * diffs)).sum())
    c_n = float((gp_hi / den * np.maximum(gp_hi, m_hi)).sum())
    return gap, bound, c_n


class PhdModel(FlowModel):
    """A finite PHD filter bound to an observation record."""

    def __init__(self, spec: PhdModelSpec, observations: Sequence):
        self.spec = spec
        self.observations = [as_observation(y, k) for k, y in enumerate(observations)]
        self.size = spec.size

    @property
    def horizon(self) -> int:
        return len(self.observations)

    def likelihood(self, n: int, m: float, eta: np.ndarray) -> np.ndarray:
        return phd_likelihood_vector(self.spec, self.observations[n], m * eta)

    def operator(self, n, m, eta):
        g = self.likelihood(n, m, eta)
        return g[:, None] * self.spec.merged_motion + (self.spec.birth / m)[None, :]

    def potential(self, n, m, eta):
        return self.likelihood(n, m, eta) + self.spec.birth_mass / m

    def mckean_kernel(self, n, m, eta, eps=0.0, variant="additive"):
        g = self.likelihood(n, m, eta)
        a = _alpha(m * float(eta @ g), self.spec.birth_mass)
        Mg = a * self.spec.merged_motion
        if a < 1.0:
            Mg = Mg + (1.0 - a) * self.spec.birth_law[None, :]
        return selection_matrix(eta, g, eps, variant) @ Mg

    def step(self, n, m, eta):
        return _phd_step(self.spec, m, eta, self.observations[n])

    def mass_bounds(self, n):
        # Gamma^1 = m eta(g) + mu(1) with r(1-d) <= g - sum of obs terms, obs terms in [0, r]
        spec = self.spec
        rd_lo = float((spec.rate * (1.0 - spec.detection)).min())
        rd_hi = float((spec.rate * (1.0 - spec.detection)).max())
        y_hi = float(spec.rate.max()) * self.observations[n].count
        mu1 = spec.birth_mass
        return (lambda m: rd_lo + mu1 / m), (lambda m: rd_hi + (y_hi + mu1) / m)
