"""Contraction and stability constants.

Everything here is computed from declared bounds (``g^-``, ``g^+``,
``s^-``, ``s^+``, mixing ``eps``, ...), never fitted from data: the
quantities certify worst-case behaviour. The one empirical routine,
:func:`empirical_decay_rate`, exists to check those certificates.

Index conventions. ``a1[p, q]`` and ``a2[p, q]`` hold ``a^i_{p,q}`` for
``p <= q``; ``tau1[k]`` and ``tau2[k]`` hold ``tau^i_k`` (entry 0 unused).
For Feynman-Kac inputs ``potentials[k] = G_k`` and ``kernels[k] = M_{k+1}``,
so ``Q_{k+1} = diag(G_k) M_{k+1}``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _core
from .exceptions import AdmissibilityError, DegeneratePotentialError, ParameterError
from .flow import FlowModel, MassMeasurePair, exact_reference_flow

GAP_FLOOR = 1e-14
BURN_IN = 3


def _stochastic(P) -> np.ndarray:
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    if P.ndim != 2 or np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
        raise ParameterError("rows must be probability vectors")
    return P


def dobrushin_beta(P) -> float:
    """``max_{x,x'} ||P(x,.) - P(x',.)||_tv`` by brute force over pairs."""
    return _core.dobrushin(_stochastic(P))


def mixing_epsilon(P) -> float:
    """Largest ``eps`` with ``P(x,.) >= eps P(x',.)`` for all ``x, x'``.

    Column by column the condition reads ``min_x P(x,y) >= eps max_x P(x,y)``.
    """
    P = _stochastic(P)
    hi = P.max(axis=0)
    live = hi > 0
    return float((P.min(axis=0)[live] / hi[live]).min())


def check_mixing(kernels, m: int = 1) -> np.ndarray:
    """``eps_p(m)`` for every ``p`` with ``M_{p,p+m} = M_{p+1} ... M_{p+m}`` available."""
    if m < 1:
        raise ParameterError("m must be at least 1")
    ks = [_stochastic(k) for k in kernels]
    out = []
    for p in range(len(ks) - m + 1):
        P = ks[p]
        for k in ks[p + 1:p + m]:
            P = P @ k
        out.append(mixing_epsilon(P))
    return np.array(out)


@dataclass
class FeynmanKacBounds:
    p: int
    n: int
    m: int
    r_pn: float
    beta_pn: float
    r_bound: float
    beta_bound: float
    eps_m: list = field(default_factory=list)
    eps_mm: list = field(default_factory=list)
    r_p: list = field(default_factory=list)

    @property
    def within_bounds(self) -> bool:
        tol = 1e-12
        return self.r_pn <= self.r_bound * (1 + tol) and self.beta_pn <= self.beta_bound + tol


def fk_semigroup_quantities(potentials, kernels, p: int, n: int, m: int = 1) -> FeynmanKacBounds:
    """Exact ``r_{p,n}`` and ``beta(P_{p,n})`` by dense products, with their mixing bounds.

    ``r_{p,p+n} <= eps_p(m)^{-1} prod_{k<m} r_{p+k}`` and
    ``beta(P_{p,p+n}) <= prod_{k < floor(n/m)} (1 - eps^{(m)}_{p+km})`` with
    ``eps^{(m)}_p = eps_p(m)^2 prod_{0<k<m} r_{p+k}^{-1}``; ``r_k = sup G_k / inf G_k``.
    """
    if not 0 <= p <= n or n - p > 50:
        raise ParameterError("need 0 <= p <= n and n - p <= 50")
    G = [np.asarray(g, dtype=np.float64) for g in potentials]
    M = [_stochastic(k) for k in kernels]
    K = M[0].shape[0]
    Q = np.eye(K)
    for k in range(p, n):
        Q = Q @ (G[k][:, None] * M[k])
    Gpn = Q.sum(axis=1)
    if np.any(Gpn <= 0):
        raise DegeneratePotentialError("Q_{p,n}(1) vanishes somewhere")
    r_pn = float(Gpn.max() / Gpn.min())
    beta_pn = _core.dobrushin(Q / Gpn[:, None])

    def osc(k):
        if k >= len(G):
            return np.inf
        g = G[k]
        return float(g.max() / g.min()) if g.min() > 0 else np.inf

    eps = check_mixing(M, m)

    def eps_at(k):
        return float(eps[k]) if k < eps.size else 0.0

    def eps_mm(k):
        return eps_at(k) ** 2 / np.prod([osc(k + j) for j in range(1, m)])

    span = n - p
    e0 = eps_at(p)
    r_bound = np.prod([osc(p + k) for k in range(m)]) / e0 if e0 > 0 else np.inf
    beta_bound = float(np.prod([1.0 - eps_mm(p + k * m) for k in range(span // m)]))
    return FeynmanKacBounds(p, n, m, r_pn, beta_pn, float(r_bound), beta_bound,
                            [eps_at(p + k * m) for k in range(span // m)],
                            [eps_mm(p + k * m) for k in range(span // m)],
                            [osc(p + k) for k in range(m)])


# ---------------------------------------------------------------------------
# composition of contraction rates

@dataclass(frozen=True)
class Composition:
    lam: float
    c11: float
    c12: float
    c21: float
    c22: float
    lhs: float
    rhs: float


def compose_rates(c1: float, lam1: float, c2: float, lam2: float, tau1: float, tau2: float) -> Composition:
    """Uniform rate ``lam`` and constants ``c^{i,j}`` from geometric ``a^i``.

    Requires ``lam1 != lam2`` and
    ``c1 c2 tau1 tau2 <= (1 - e^{-lo}) (e^{-lo} - e^{-hi})`` (``lo``/``hi`` the
    smaller/larger rate); then ``c^{i,j}_{p,n} <= c^{i,j} e^{-lam (n-p)}``.
    ``lam1 = inf`` is allowed. When ``lam = lam1`` (only possible with
    ``tau1 tau2 = 0`` and ``lam1 < lam2``) a positive ``tau1`` leaves
    ``c^{1,2}_{p,n}`` without a geometric bound and ``c12 = c11 = inf``.
    """
    for v in (c1, c2, tau1, tau2):
        if v < 0:
            raise ParameterError("constants must be non-negative")
    if not (lam1 > 0 and lam2 > 0):
        raise ParameterError("rates must be positive")
    if lam1 == lam2:
        raise AdmissibilityError("the rates must differ", "lambda1 != lambda2", lam1, lam2)
    lo, hi = min(lam1, lam2), max(lam1, lam2)
    gap = np.exp(-lo) - np.exp(-hi)
    ct = c1 * c2 * tau1 * tau2
    rhs = float((1.0 - np.exp(-lo)) * gap)
    if ct > rhs:
        raise AdmissibilityError("inadmissible contraction parameters",
                                 "c1 c2 tau1 tau2 <= (1 - e^-lo)(e^-lo - e^-hi)", ct, rhs)
    lam = float(lo - np.log1p(ct * np.exp(lo) / gap))
    c22 = c2
    c21 = c1 * c2 * tau2 / gap
    d1 = np.exp(-lam) - np.exp(-lam1)
    if tau1 == 0:
        c12, c11 = 0.0, c1
    elif d1 > 0:
        c12 = c1 * c2 * tau1 / d1
        c11 = c1 * (1.0 + c21 * tau1 / d1)
    else:
        c12 = c11 = np.inf
    return Composition(lam, float(c11), float(c12), float(c21), float(c22), float(ct), rhs)


def _bar(a, tau):
    """``abar[p, q] = tau_{p+1} a_{p+1, q}`` for ``p < q``."""
    T = a.shape[0]
    out = np.zeros_like(a)
    for p in range(T - 1):
        out[p, p + 1:] = tau[p + 1] * a[p + 1, p + 1:]
    return out


def _b_tables(a1, a2, tau1, tau2):
    T = a1.shape[0]
    ab1, ab2 = _bar(a1, tau1), _bar(a2, tau2)
    b = np.zeros_like(a1)
    bp = np.zeros_like(a1)
    for p in range(T):
        for n in range(p, T):
            b[p, n] = sum(ab1[p, q] * ab2[q, n] for q in range(p + 1, n))
            bp[p, n] = sum(a1[p, q] * ab2[q, n] for q in range(p, n))
    return ab1, ab2, b, bp


def _chains(head, b, p, n):
    """``head[p, n] + sum_l sum_{p<=r1<...<rl<n} head[p, r1] prod_k b[r_k, r_{k+1}]`` (``r_{l+1} = n``)."""
    tail = np.zeros(n + 1)  # tail[r]: all chains r -> ... -> n
    for r in range(n - 1, p - 1, -1):
        tail[r] = b[r, n] + sum(b[r, s] * tail[s] for s in range(r + 1, n))
    return head[p, n] + sum(head[p, r] * tail[r] for r in range(p, n))


def finite_horizon_sums(a1, a2, tau1, tau2, p: int, n: int) -> dict:
    """``c^{i,j}_{p,n}`` by dynamic programming over the chain length."""
    a1 = np.asarray(a1, dtype=np.float64)
    a2 = np.asarray(a2, dtype=np.float64)
    tau1 = np.asarray(tau1, dtype=np.float64)
    tau2 = np.asarray(tau2, dtype=np.float64)
    if not 0 <= p <= n < a1.shape[0]:
        raise ParameterError("need 0 <= p <= n within the tables")
    ab1, _, b, bp = _b_tables(a1, a2, tau1, tau2)
    c22 = {q: _chains(a2, b, p, q) for q in range(p, n + 1)}
    c21 = {q: _chains(bp, b, p, q) for q in range(p, n + 1)}
    return {
        "c11": float(a1[p, n] + sum(c21[q] * ab1[q, n] for q in range(p, n))),
        "c12": float(sum(c22[q] * ab1[q, n] for q in range(p, n))),
        "c21": float(c21[n]),
        "c22": float(c22[n]),
    }


def finite_horizon_sums_literal(a1, a2, tau1, tau2, p: int, n: int) -> dict:
    """Same quantities by enumerating every index chain (exponential; small ``n - p`` only)."""
    a1 = np.asarray(a1, dtype=np.float64)
    a2 = np.asarray(a2, dtype=np.float64)
    ab1, _, b, bp = _b_tables(a1, a2, np.asarray(tau1, float), np.asarray(tau2, float))

    def chains(head, q):
        tot = head[p, q]
        for l in range(1, q - p + 1):
            for rs in itertools.combinations(range(p, q), l):
                term = head[p, rs[0]]
                for k in range(l):
                    term *= b[rs[k], rs[k + 1] if k + 1 < l else q]
                tot += term
        return tot

    return {
        "c11": float(a1[p, n] + sum(chains(bp, q) * ab1[q, n] for q in range(p, n))),
        "c12": float(sum(chains(a2, q) * ab1[q, n] for q in range(p, n))),
        "c21": float(chains(bp, n)),
        "c22": float(chains(a2, n)),
    }


def geometric_tables(c1, lam1, c2, lam2, tau1, tau2, T: int):
    """``a^i[p, q] = c_i e^{-lam_i (q - p)}`` and constant ``tau^i`` over ``T`` times."""
    d = np.subtract.outer(np.arange(T), np.arange(T)).T.astype(float)
    up = d >= 0
    with np.errstate(over="ignore", invalid="ignore"):
        a1 = np.where(up, c1 * np.exp(-lam1 * np.where(up, d, 0)), 0.0)
        a2 = np.where(up, c2 * np.exp(-lam2 * np.where(up, d, 0)), 0.0)
    return a1, a2, np.full(T, float(tau1)), np.full(T, float(tau2))


# ---------------------------------------------------------------------------
# model instantiations

@dataclass
class ContractionParameters:
    """Lipschitz and continuity constants of one model, with the homogeneous summary."""

    a1: np.ndarray
    a2: np.ndarray
    tau1: np.ndarray
    tau2: np.ndarray
    details: dict = field(default_factory=dict)
    homogeneous: dict = field(default_factory=dict)

    def sums(self, p: int, n: int) -> dict:
        return finite_horizon_sums(self.a1, self.a2, self.tau1, self.tau2, p, n)

    def derived(self) -> dict:
        ab1, ab2, b, bp = _b_tables(self.a1, self.a2, self.tau1, self.tau2)
        return {"abar1": ab1, "abar2": ab2, "b": b, "bprime": bp}


def _summarize(c1, lam1, c2, lam2, tau1, tau2) -> dict:
    out = {"c1": c1, "lambda1": lam1, "c2": c2, "lambda2": lam2, "tau1": tau1, "tau2": tau2}
    try:
        comp = compose_rates(c1, lam1, c2, lam2, tau1, tau2)
    except AdmissibilityError as err:
        out.update(admissible=False, violated=err.inequality, lhs=err.lhs, rhs=err.rhs)
    except ParameterError as err:
        out.update(admissible=False, violated=str(err))
    else:
        out.update(admissible=True, lam=comp.lam, c11=comp.c11, c12=comp.c12, c21=comp.c21, c22=comp.c22,
                   lhs=comp.lhs, rhs=comp.rhs)
    return out


def bernoulli_delta_bounds(d: float, l_lo: float, l_hi: float, h_lo: float, h_hi: float, y_max: float):
    """Observation-free ``(delta(g), delta'(g))`` bounds for constant detection ``d``.

    ``delta(g) <= min(1 + d/(1-d) l^+/h^- Y, l^+ h^+ / (l^- h^-))`` and, for
    ``d < 1``, ``delta'(g) <= max((1-d) + d l^+/h^- Y, 1/(1-d))``.
    """
    if d >= 1:
        raise ParameterError("the bounds need d < 1")
    if d == 0:
        return 1.0, 1.0
    first = 1.0 + d / (1.0 - d) * l_hi / h_lo * y_max
    second = l_hi * h_hi / (l_lo * h_lo) if l_lo > 0 else np.inf
    return min(first, second), max((1.0 - d) + d * l_hi / h_lo * y_max, 1.0 / (1.0 - d))


def _per_step(x, T):
    v = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return np.broadcast_to(v, (T,)).copy() if v.size == 1 else v


def bernoulli_theorem_constants(s_lo, s_hi, mu1, g_lo, g_hi, eps_m, m: int = 1, horizon: int | None = None) -> ContractionParameters:
    """Bernoulli ``a^i_{p,q}``, ``tau^i_n`` from declared per-step bounds.

    Arguments are scalars or arrays indexed by step ``n``: survival
    bounds ``s^-_n, s^+_n``, birth mass ``mu_{n+1}(1)``, likelihood bounds
    ``g^-_n, g^+_n`` and mixing ``eps_n(m)`` of ``M_{n,n+m}``. With

        eps_n        = min{s^-/mu, mu/s^+, (1-s^+)/(1-mu), (1-mu)/(1-s^-)}
        delta_n(g)   = g^+/g^-,  delta_n(sg) = g^+ s^+ / (g^- s^-),  delta'_n(g) = max(1/g^-, g^+)
        rho_p(m)     = eps_p(m)^{-1} prod_{k<m} delta_{p+k}(sg)^3
        eps^{(m)}_p  = eps_p(m)^2 delta_p(sg)^{-4} prod_{0<k<m} delta_{p+k}(sg)^{-5}

    the constants are ``a^1_{p,q} = 2 eps_p^{-1} delta'_p prod_{p<=k<q} (1 - eps_k^2)``,
    ``a^2_{p,q} = 2 rho_p(m) prod_{j < floor((q-p)/m)} (1 - eps^{(m)}_{p+jm})``,
    ``tau^1_{n+1} = delta_n(g) [(s^+ - s^-) + max|s - mu|]`` and
    ``tau^2_{n+1} = delta'_n(g) max(mu/s^-, s^+/mu)``.
    """
    lens = [np.atleast_1d(v).size for v in (s_lo, s_hi, mu1, g_lo, g_hi, eps_m)]
    T = horizon if horizon is not None else max(max(lens), 2)
    s_lo, s_hi, mu1, g_lo, g_hi, eps_m = (_per_step(v, T) for v in (s_lo, s_hi, mu1, g_lo, g_hi, eps_m))
    if np.any((mu1 <= 0) | (mu1 >= 1)):
        raise ParameterError("the theorem needs mu(1) in (0, 1)")
    if np.any((s_lo <= 0) | (s_lo > s_hi) | (s_hi >= 1)):
        raise ParameterError("the theorem needs 0 < s^- <= s^+ < 1")
    if np.any(eps_m <= 0):
        raise ParameterError("the theorem needs eps_p(m) > 0")
    if np.any(g_lo <= 0) or np.any(g_lo > g_hi):
        raise ParameterError("need 0 < g^- <= g^+")
    eps = np.minimum.reduce([s_lo / mu1, mu1 / s_hi, (1 - s_hi) / (1 - mu1), (1 - mu1) / (1 - s_lo)])
    dg = g_hi / g_lo
    dsg = dg * s_hi / s_lo
    dprime = np.maximum(1.0 / g_lo, g_hi)

    def dsg_at(k):
        return dsg[min(k, T - 1)]

    rho = np.array([np.prod([dsg_at(p + k) ** 3 for k in range(m)]) / eps_m[p] for p in range(T)])
    epsmm = np.array([eps_m[p] ** 2 * dsg_at(p) ** -4 * np.prod([dsg_at(p + k) ** -5 for k in range(1, m)])
                      for p in range(T)])
    a1 = np.zeros((T, T))
    a2 = np.zeros((T, T))
    for p in range(T):
        for q in range(p, T):
            a1[p, q] = 2.0 / eps[p] * dprime[p] * np.prod(1.0 - eps[p:q] ** 2)
            blocks = [epsmm[min(p + j * m, T - 1)] for j in range((q - p) // m)]
            a2[p, q] = 2.0 * rho[p] * np.prod(1.0 - np.array(blocks))
    tau1 = np.zeros(T)
    tau2 = np.zeros(T)
    spread = np.maximum(np.abs(s_hi - mu1), np.abs(s_lo - mu1))
    tau1[1:] = (dg * ((s_hi - s_lo) + spread))[:-1]
    tau2[1:] = (dprime * np.maximum(mu1 / s_lo, s_hi / mu1))[:-1]
    details = {"eps": eps, "delta_g": dg, "delta_sg": dsg, "delta_prime_g": dprime, "rho": rho, "eps_mm": epsmm,
               "m": m}
    # homogeneous summary from the worst case over steps
    e, em = float(eps.min()), float(eps_m.min())
    dlt, dlt_p = float(dsg.max()), float(dprime.max())
    inner = 1.0 - em ** 2 * dlt ** (-5 * m + 1)
    lam1 = float(-np.log1p(-e * e)) if e < 1 else np.inf
    lam2 = float(-np.log(inner) / m)
    c1 = 2.0 / e * dlt_p
    c2 = 2.0 / em / inner * dlt ** (3 * m)
    summary = _summarize(c1, lam1, c2, lam2, float(tau1[1:].max()), float(tau2[1:].max()))
    summary["epsilon"] = e
    summary["epsilon_m"] = em
    return ContractionParameters(a1, a2, tau1, tau2, details, summary)


def bernoulli_constant_mass_constants(s: float, g_lo, g_hi, eps_m, m: int = 1) -> dict:
    """Constant-mass (``s = mu(1)``) Feynman-Kac constants of the ``(g^(s), M^(s))`` semigroup.

    ``r_n(s) = (s g^+ + 1 - s)/(s g^- + 1 - s)``,
    ``rho_p(m) = eps_p(m)^{-1} prod_{p<=k<p+m} r_k(s)^2 r_k(1)`` and
    ``eps^{(s,m)}_p = eps_p(m)^2 r_p(s) / prod_{p<=k<p+m} r_k(s)^3 r_k(1)^2``.
    """
    g_lo = np.atleast_1d(np.asarray(g_lo, float))
    g_hi = np.atleast_1d(np.asarray(g_hi, float))
    eps_m = np.atleast_1d(np.asarray(eps_m, float))
    T = max(g_lo.size, g_hi.size, eps_m.size)
    g_lo, g_hi, eps_m = (_per_step(v, T) for v in (g_lo, g_hi, eps_m))
    rs = (s * g_hi + 1 - s) / (s * g_lo + 1 - s)
    r1 = g_hi / g_lo
    P = T - m + 1
    rho = np.array([np.prod(rs[p:p + m] ** 2 * r1[p:p + m]) / eps_m[p] for p in range(P)])
    eps_s = np.array([eps_m[p] ** 2 * rs[p] / np.prod(rs[p:p + m] ** 3 * r1[p:p + m] ** 2) for p in range(P)])
    return {"r_s": rs, "r_1": r1, "rho": rho, "eps_s": eps_s, "a1": 0.0}


def phd_declared_inputs(spec, observations):
    """Per-step ``(g^-(y), g^+(y))`` arrays and the constant clutter level of a finite spec."""
    from .observations import as_observation

    h = spec.clutter
    if np.ptp(h) != 0:
        raise ParameterError("the PHD constants assume a constant clutter intensity h")
    g_lo = spec.likelihood.min(axis=0)
    g_hi = spec.likelihood.max(axis=0)
    obs = []
    for Y in observations:
        ids = as_observation(Y).points
        obs.append((g_lo[ids], g_hi[ids]))
    return float(h[0]), obs


def phd_theorem_constants(r: float, d: float, h: float, mu1: float, m_lo: float, m_hi: float, beta_M: float,
                          obs_bounds, gamma0: float | None = None) -> ContractionParameters:
    """PHD one-step constants ``a^i_{n,n+1}``, ``tau^i_{n+1}`` and ``a^i_{p,q} = prod a^i_{k,k+1}``.

    ``obs_bounds[n] = (g_lo, g_hi)`` lists ``g^-(y), g^+(y)`` over ``y`` in ``Y_n``.
    With ``D_n = (1-d) m^- + d m^- Y_n(g^-/(h + d m^- g^-)) + mu(1)/r``:

        a^1 = r(1-d) + r d h Y_n(g^+ / (h + d m^- g^-)^2)
        a^2 = m^+ [beta(M) ((1-d) + d Y_n(g^+/(h + d m^+ g^+) g^+/g^-))
                   + h d Y_n((g^+ - g^-)/(h + d m^- g^-)^2)] / D_n
        tau^1 = r d h m^+ Y_n((g^+ - g^-)/(h + d m^- g^-)^2)
        tau^2 = [(1-d) + h d Y_n(g^+/(h + d m^- g^-)^2)] / D_n

    The homogeneous summary uses ``c_i = 1``, ``lam_i = -log sup_n a^i_{n,n+1}``
    and ``tau^i = sup_n tau^i_n``. Given ``gamma0`` it also evaluates the
    crude sufficient bounds of the uniform corollary (key ``"crude"``).
    """
    if r * (1.0 - d) >= 1.0:
        raise ParameterError("the PHD constants need r(1 - d) < 1")
    if not (0 < m_lo <= m_hi) or mu1 <= 0 or h < 0 or not 0 <= d <= 1:
        raise ParameterError("need 0 < m^- <= m^+, mu(1) > 0, h >= 0 and d in [0, 1]")
    T = len(obs_bounds)
    a1s = np.zeros(T)
    a2s = np.zeros(T)
    tau1 = np.zeros(T + 1)
    tau2 = np.zeros(T + 1)
    for n, (gl, gh) in enumerate(obs_bounds):
        gl = np.asarray(gl, float)
        gh = np.asarray(gh, float)
        den_lo = (h + d * m_lo * gl)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(gh > 0, gh / gl, 0.0) if gl.size else gl
            pos = np.where(gl > 0, gl / den_lo, 0.0) if gl.size else gl
            t_sq = (gh / den_lo ** 2).sum()
            t_osc = ((gh - gl) / den_lo ** 2).sum()
            t_up = (gh / (h + d * m_hi * gh) * ratio).sum() if gl.size else 0.0
        D = (1 - d) * m_lo + d * m_lo * pos.sum() + mu1 / r
        a1s[n] = r * (1 - d) + r * d * h * t_sq
        a2s[n] = m_hi * (beta_M * ((1 - d) + d * t_up) + h * d * t_osc) / D
        tau1[n + 1] = r * d * h * m_hi * t_osc
        tau2[n + 1] = ((1 - d) + h * d * t_sq) / D
    a1 = np.zeros((T + 1, T + 1))
    a2 = np.zeros((T + 1, T + 1))
    for p in range(T + 1):
        a1[p, p] = a2[p, p] = 1.0
        for q in range(p + 1, T + 1):
            a1[p, q] = a1[p, q - 1] * a1s[q - 1]
            a2[p, q] = a2[p, q - 1] * a2s[q - 1]
    details = {"a1_step": a1s, "a2_step": a2s}
    summary: dict = {}
    A1, A2 = float(a1s.max()) if T else 0.0, float(a2s.max()) if T else 0.0
    if T and A1 < 1 and A2 < 1:
        lam1 = -np.log(A1) if A1 > 0 else np.inf
        lam2 = -np.log(A2) if A2 > 0 else np.inf
        summary = _summarize(1.0, float(lam1), 1.0, float(lam2), float(tau1.max()), float(tau2.max()))
    elif T:
        summary = {"admissible": False, "violated": "sup_n a^i_{n,n+1} < 1", "a1_sup": A1, "a2_sup": A2}
    if gamma0 is not None:
        details["crude"] = phd_crude_bounds(r, d, h, mu1, beta_M, obs_bounds, gamma0)
    return ContractionParameters(a1, a2, tau1, tau2, details, summary)


def phd_crude_bounds(r, d, h, mu1, beta_M, obs_bounds, gamma0) -> dict:
    """Sufficient conditions from the uniform PHD corollary's proof.

    ``rho = 2 + gamma0 + 2 r Y^+(1)``,
    ``delta = rho v Y^+(g^+/g^-) v Y^+(g^+/(g^-)^2)``,
    ``e^{-lam1} = r[(1-d) + 2/mu^2] delta``, ``e^{-lam2} = r[(1-d) + 3/mu] delta``,
    ``tau1 tau2 <= 2 h r^2 / mu^2 [(1-d) + 2 h delta / mu^2] delta^2``. The proof
    also assumes ``r(1-d) < 1/2 <= d`` and ``mu(1) >= 1 >= h``; these are reported.
    """
    y_max = max((len(np.atleast_1d(gl)) for gl, _ in obs_bounds), default=0)
    with np.errstate(divide="ignore"):
        y1 = max((float(np.sum(np.asarray(gh) / np.asarray(gl))) for gl, gh in obs_bounds), default=0.0)
        y2 = max((float(np.sum(np.asarray(gh) / np.asarray(gl) ** 2)) for gl, gh in obs_bounds), default=0.0)
    rho = 2.0 + gamma0 + 2.0 * r * y_max
    delta = max(rho, y1, y2)
    e1 = r * ((1 - d) + 2.0 / mu1 ** 2) * delta
    e2 = r * ((1 - d) + 3.0 / mu1) * delta
    tt = 2 * h * r * r / mu1 ** 2 * ((1 - d) + 2 * h * delta / mu1 ** 2) * delta ** 2
    out = {"rho": rho, "delta": delta, "exp_neg_lambda1": e1, "exp_neg_lambda2": e2, "tau_product": tt,
           "proof_conditions": bool(r * (1 - d) < 0.5 <= d and mu1 >= 1 >= h)}
    ok = 0 < e1 < e2 < 1
    out["rhs"] = float((1 - e2) * (e2 - e1)) if ok else None
    out["admissible"] = bool(ok and tt <= out["rhs"])
    if ok:
        out["lambda1"], out["lambda2"] = float(-np.log(e1)), float(-np.log(e2))
    return out


# ---------------------------------------------------------------------------
# empirical decay

@dataclass
class DecayFit:
    lam_hat: float | None
    lam_mass: float | None
    lam_tv: float | None
    mass_gaps: np.ndarray
    tv_gaps: np.ndarray
    degenerate: bool


def _fit_rate(gaps: np.ndarray, skip: int) -> float | None:
    idx = []
    for n in range(skip, gaps.size):
        if gaps[n] < GAP_FLOOR:
            break
        idx.append(n)
    if len(idx) < 2:
        return None
    slope = np.polyfit(np.array(idx, float), np.log(gaps[idx]), 1)[0]
    return float(-slope)


def empirical_decay_rate(model: FlowModel, init: MassMeasurePair, init2: MassMeasurePair, horizon: int,
                         skip: int = BURN_IN) -> DecayFit:
    """Least-squares decay rates of ``|Gamma^1|`` and TV gaps between two exact flows.

    The fit uses ``n >= skip`` and stops at the first gap below 1e-14.
    ``lam_hat`` is the smaller of the two rates; ``None`` marks a series
    with too few usable points.
    """
    f1 = exact_reference_flow(model, horizon, init)
    f2 = exact_reference_flow(model, horizon, init2)
    mg = np.array([abs(a.mass - b.mass) for a, b in zip(f1, f2)])
    tv = np.array([0.5 * float(np.abs(a.weights - b.weights).sum()) for a, b in zip(f1, f2)])
    lm, lt = _fit_rate(mg, skip), _fit_rate(tv, skip)
    rates = [v for v in (lm, lt) if v is not None]
    return DecayFit(min(rates) if rates else None, lm, lt, mg, tv, not rates)


# ---------------------------------------------------------------------------
# reporting

FORMULAS = {
    "c1": "2 eps^-1 delta'(g)",
    "c2": "2 eps(m)^-1 (1 - eps(m)^2 delta^(-5m+1))^-1 delta^(3m)",
    "lambda1": "-log(1 - eps^2)",
    "lambda2": "-(1/m) log(1 - eps(m)^2 delta^(-5m+1))",
    "tau1": "delta(g) [(s+ - s-) + |s - mu(1)|]",
    "tau2": "delta'(g) max(mu(1)/s-, s+/mu(1))",
    "lam": "lo - log(1 + c1 c2 tau1 tau2 e^lo / (e^-lo - e^-hi))",
    "c22": "c2",
    "c21": "c1 c2 tau2 / (e^-lo - e^-hi)",
    "c11": "c1 (1 + c21 tau1 / (e^-lam - e^-lambda1))",
    "c12": "c1 c2 tau1 / (e^-lam - e^-lambda1)",
}


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def stability_report(inputs: dict, params: ContractionParameters, fit: DecayFit | None = None) -> dict:
    """JSON-ready report: inputs, homogeneous constants with formulas, verdict, rates."""
    h = params.homogeneous
    out = {
        "inputs": _jsonable(inputs),
        "constants": {k: {"value": _jsonable(h[k]), "formula": FORMULAS.get(k, "")} for k in
                      ("c1", "c2", "lambda1", "lambda2", "tau1", "tau2", "c11", "c12", "c21", "c22") if k in h},
        "admissibility": "pass" if h.get("admissible") else "fail",
        "lambda": _jsonable(h.get("lam")),
    }
    if not h.get("admissible"):
        out["violated"] = _jsonable({k: h.get(k) for k in ("violated", "lhs", "rhs")})
    if fit is not None:
        out["empirical"] = _jsonable({k: v for k, v in asdict(fit).items()})
    return out


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
