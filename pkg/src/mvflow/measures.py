"""Finite-support measures, Markov kernels and potential functions.

Measures on finite spaces ``{0, ..., K-1}`` are weight vectors over
integer ids; measures on Euclidean spaces are always particle clouds.
The array-level helpers (``psi``, ``selection_matrix``) are what the
flow code calls in its inner loops; the object-level functions wrap
them with validation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .exceptions import DegeneratePotentialError, DomainError, MeasureError, ParameterError

NORM_TOL = 1e-12


@dataclass(frozen=True)
class FiniteSpace:
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise MeasureError("finite space needs at least one state")


@dataclass(frozen=True)
class EuclideanSpace:
    dim: int


Space = Union[FiniteSpace, EuclideanSpace]


class DiscreteMeasure:
    """Weighted point set.

    Parameters
    ----------
    points : array_like
        Integer ids (finite space) or an ``(n, d)`` array of coordinates.
    weights : array_like
        Non-negative weights, one per point.
    space : FiniteSpace or EuclideanSpace
    probability : bool
        If set, the weights must sum to one within ``NORM_TOL``; smaller
        drift is renormalized away.
    """

    __slots__ = ("points", "weights", "space", "probability")

    def __init__(self, points, weights, space: Space, probability: bool = False):
        w = np.array(weights, dtype=np.float64).ravel()
        if isinstance(space, FiniteSpace):
            pts = np.asarray(points, dtype=np.int64).ravel()
            if pts.size and (pts.min() < 0 or pts.max() >= space.size):
                raise MeasureError("point id outside the finite space")
        else:
            pts = np.asarray(points, dtype=np.float64).reshape(-1, space.dim)
        if pts.shape[0] != w.shape[0]:
            raise MeasureError("points and weights differ in length")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise MeasureError("weights must be finite and non-negative")
        if probability:
            total = w.sum()
            if abs(total - 1.0) > NORM_TOL:
                raise MeasureError(f"probability weights sum to {total!r}")
            w = w / total
        w.setflags(write=False)
        pts.setflags(write=False)
        self.points = pts
        self.weights = w
        self.space = space
        self.probability = probability

    @classmethod
    def finite(cls, weights, probability: bool = True) -> "DiscreteMeasure":
        """Dense measure on ``{0..K-1}`` with one weight per state."""
        w = np.asarray(weights, dtype=np.float64).ravel()
        return cls(np.arange(w.size), w, FiniteSpace(w.size), probability)

    @classmethod
    def dirac(cls, x: int, size: int) -> "DiscreteMeasure":
        w = np.zeros(size)
        w[x] = 1.0
        return cls.finite(w)

    @classmethod
    def particles(cls, points, weights=None) -> "DiscreteMeasure":
        """Euclidean particle cloud; uniform weights when none are given."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        n = pts.shape[0]
        if weights is None:
            weights = np.full(n, 1.0 / n)
        return cls(pts, weights, EuclideanSpace(pts.shape[1]), probability=True)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def is_finite(self) -> bool:
        return isinstance(self.space, FiniteSpace)

    def dense(self) -> np.ndarray:
        """Weights as a length-K vector (finite spaces only)."""
        if not self.is_finite:
            raise MeasureError("dense() needs a finite space")
        if self.points.size == self.space.size and np.array_equal(self.points, np.arange(self.space.size)):
            return self.weights
        return np.bincount(self.points, weights=self.weights, minlength=self.space.size)

    def normalized(self) -> "DiscreteMeasure":
        total = self.mass
        if total <= 0:
            raise DegeneratePotentialError("cannot normalize a zero measure")
        return DiscreteMeasure(self.points, self.weights / total, self.space, probability=True)

    def __len__(self):
        return self.weights.shape[0]

    def __repr__(self):
        kind = "probability" if self.probability else "measure"
        return f"DiscreteMeasure({kind}, n={len(self)}, space={self.space})"


class MarkovKernel:
    """Row-stochastic matrix on a finite space."""

    def __init__(self, matrix):
        P = np.array(matrix, dtype=np.float64)
        if P.ndim != 2:
            raise MeasureError("kernel matrix must be 2-d")
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            raise MeasureError("kernel entries must be finite and non-negative")
        rows = P.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > NORM_TOL):
            raise MeasureError("kernel rows must sum to 1")
        P /= rows[:, None]
        P.setflags(write=False)
        self.matrix = P

    @classmethod
    def identity(cls, size: int) -> "MarkovKernel":
        return cls(np.eye(size))

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True)
class GaussianKernel:
    """Linear-Gaussian transition ``x' = A x + offset + w``, ``w ~ N(0, cov)``."""

    A: np.ndarray
    cov: np.ndarray
    offset: np.ndarray | None = None

    def sample(self, points: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        x = np.atleast_2d(points) @ np.atleast_2d(self.A).T
        if self.offset is not None:
            x = x + self.offset
        d = x.shape[1]
        noise = rng.multivariate_normal(np.zeros(d), np.atleast_2d(self.cov), size=x.shape[0], method="cholesky")
        return x + noise

    def density(self, x, y) -> np.ndarray:
        x = np.atleast_2d(x)
        mean = x @ np.atleast_2d(self.A).T
        if self.offset is not None:
            mean = mean + self.offset
        return gaussian_density(np.atleast_2d(y), mean, np.atleast_2d(self.cov))


def gaussian_density(y: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """N(y; mean, cov) row by row; ``y`` and ``mean`` broadcast over rows."""
    cov = np.atleast_2d(cov)
    d = cov.shape[0]
    L = np.linalg.cholesky(cov)
    diff = np.atleast_2d(y) - np.atleast_2d(mean)
    z = np.linalg.solve(L, diff.T)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    return np.exp(-0.5 * (z * z).sum(axis=0) - 0.5 * (d * np.log(2 * np.pi) + logdet))


class PotentialFunction:
    """Bounded positive function with declared bounds ``(lower, upper)``.

    Either a value table over a finite space or a vectorized callable on
    Euclidean points. Values are checked against the bounds every time
    they are evaluated.
    """

    def __init__(self, values=None, func: Callable | None = None, bounds=None):
        if (values is None) == (func is None):
            raise ParameterError("give exactly one of values or func")
        self.func = func
        self.values = None
        if values is not None:
            v = np.array(values, dtype=np.float64).ravel()
            if not np.all(np.isfinite(v)):
                raise DomainError("potential table has non-finite entries")
            v.setflags(write=False)
            self.values = v
            if bounds is None:
                bounds = (float(v.min()), float(v.max()))
        if bounds is None:
            raise ParameterError("callable potentials need declared bounds")
        lo, hi = float(bounds[0]), float(bounds[1])
        if not (0 <= lo <= hi < np.inf):
            raise ParameterError("bounds must satisfy 0 <= lower <= upper < inf")
        self.bounds = (lo, hi)
        if self.values is not None:
            self._check(self.values)

    def _check(self, v):
        lo, hi = self.bounds
        tol = NORM_TOL * max(1.0, hi)
        if np.any(v < lo - tol) or np.any(v > hi + tol):
            raise DomainError("potential value outside its declared bounds")

    def __call__(self, points) -> np.ndarray:
        if self.values is not None:
            return self.values[np.asarray(points, dtype=np.int64)]
        try:
            v = np.asarray(self.func(points), dtype=np.float64)
        except Exception as exc:  # surface as a domain failure
            raise DomainError(f"potential evaluation failed: {exc}") from exc
        if not np.all(np.isfinite(v)):
            raise DomainError("potential evaluated to a non-finite value")
        self._check(v)
        return v

    @property
    def lower(self) -> float:
        return self.bounds[0]

    @property
    def upper(self) -> float:
        return self.bounds[1]


def evaluate(mu: DiscreteMeasure, f) -> np.ndarray:
    """Values of ``f`` on the support points of ``mu``."""
    if isinstance(f, PotentialFunction):
        return f(mu.points)
    if callable(f):
        try:
            v = np.asarray(f(mu.points), dtype=np.float64)
        except Exception as exc:
            raise DomainError(f"function evaluation failed: {exc}") from exc
    else:
        table = np.asarray(f, dtype=np.float64)
        if not mu.is_finite:
            raise DomainError("a value table needs a finite space")
        if table.ndim == 0:
            v = np.full(len(mu), float(table))
        else:
            if table.shape[0] != mu.space.size:
                raise DomainError("value table does not cover the space")
            v = table[mu.points]
    v = np.broadcast_to(v, (len(mu),))
    if not np.all(np.isfinite(v)):
        raise DomainError("function evaluated to a non-finite value")
    return v


def table_on(f, size: int) -> np.ndarray:
    """Values of ``f`` on every state of a finite space."""
    full = DiscreteMeasure(np.arange(size), np.zeros(size), FiniteSpace(size))
    return np.array(evaluate(full, f))


def integrate(mu: DiscreteMeasure, f) -> float:
    """``mu(f) = sum_i w_i f(x_i)``."""
    return float(np.dot(mu.weights, evaluate(mu, f)))


def psi(weights: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Boltzmann-Gibbs reweighting of a weight vector (array level)."""
    wg = weights * g
    z = wg.sum()
    if not z > 0:
        raise DegeneratePotentialError("eta(G) = 0")
    return wg / z


def boltzmann_gibbs(G, eta: DiscreteMeasure) -> DiscreteMeasure:
    """Psi_G(eta) on the support of eta."""
    if not eta.probability:
        raise MeasureError("Boltzmann-Gibbs needs a probability measure")
    return DiscreteMeasure(eta.points, psi(eta.weights, evaluate(eta, G)), eta.space, probability=True)


def apply_kernel(mu: DiscreteMeasure, Q, rng: np.random.Generator | None = None) -> DiscreteMeasure:
    """``mu Q``.

    ``Q`` may be a :class:`MarkovKernel`, a non-negative matrix (integral
    operator, mass not preserved) or a :class:`GaussianKernel`. The
    Gaussian case moves each particle once and keeps its weight, so it
    needs ``rng``.
    """
    if isinstance(Q, GaussianKernel):
        if mu.is_finite:
            raise MeasureError("Gaussian kernel needs a Euclidean measure")
        if rng is None:
            raise ParameterError("Gaussian kernel application needs an rng")
        moved = Q.sample(mu.points, rng)
        return DiscreteMeasure(moved, mu.weights, EuclideanSpace(moved.shape[1]), mu.probability)
    markov = isinstance(Q, MarkovKernel)
    M = Q.matrix if markov else np.asarray(Q, dtype=np.float64)
    if not mu.is_finite:
        raise MeasureError("matrix kernels need a finite space")
    if M.ndim != 2 or M.shape[0] != mu.space.size:
        raise MeasureError(f"kernel shape {M.shape} does not match space size {mu.space.size}")
    w = mu.dense() @ M
    return DiscreteMeasure.finite(w, probability=mu.probability and markov)


def selection_matrix(weights: np.ndarray, g: np.ndarray, eps: float = 0.0, variant: str = "additive") -> np.ndarray:
    """Rows of the selection kernel S_eta with ``eta S_eta = Psi_G(eta)``.

    additive:       S(x,.) = (eps/eta(G)) delta_x + (1 - eps/eta(G)) Psi_{G-eps}(eta)
    multiplicative: S(x,.) = eps G(x) delta_x + (1 - eps G(x)) Psi_G(eta)

    Admissibility is checked on the support of ``weights``; rows outside
    the support (irrelevant for ``eta S``) fall back to ``Psi_G(eta)``.
    """
    g = np.asarray(g, dtype=np.float64)
    target = psi(weights, g)
    size = g.shape[0]
    if eps == 0.0:
        return np.broadcast_to(target, (size, size)).copy()
    if eps < 0:
        raise ParameterError("selection epsilon must be non-negative")
    support = weights > 0
    tol = NORM_TOL * max(1.0, float(g.max()))
    if variant == "additive":
        if np.any(g[support] < eps - tol):
            raise ParameterError("additive selection needs G >= eps on the support")
        etaG = float(np.dot(weights, g))
        keep = eps / etaG
        rest = np.clip(g - eps, 0.0, None)
        if keep >= 1.0 - NORM_TOL:
            S = np.eye(size)
        else:
            S = keep * np.eye(size) + (1.0 - keep) * psi(weights, rest)[None, :]
        S[~support] = target
        return S
    if variant == "multiplicative":
        keep = eps * g
        if np.any(keep[support] > 1.0 + tol):
            raise ParameterError("multiplicative selection needs eps*G <= 1 on the support")
        keep = np.where(support, np.minimum(keep, 1.0), 0.0)
        return keep[:, None] * np.eye(size) + (1.0 - keep)[:, None] * target[None, :]
    raise ParameterError(f"unknown selection variant {variant!r}")


def selection_kernel(G, eta: DiscreteMeasure, eps: float = 0.0, variant: str = "additive") -> MarkovKernel:
    """Finite-space selection kernel as a :class:`MarkovKernel`."""
    if not eta.is_finite:
        raise MeasureError("selection kernels are materialized on finite spaces only")
    g = table_on(G, eta.space.size)
    return MarkovKernel(selection_matrix(eta.dense(), g, eps, variant))


def total_variation(eta: DiscreteMeasure, eta2: DiscreteMeasure) -> float:
    """``1/2 sum |w - w'|`` over the merged support of two finite probability measures."""
    if not (eta.probability and eta2.probability):
        raise MeasureError("total variation needs probability measures")
    if not (eta.is_finite and eta2.is_finite):
        raise MeasureError("project Euclidean clouds with grid_projection first")
    if eta.space != eta2.space:
        raise MeasureError("measures live on different spaces")
    return float(0.5 * np.abs(eta.dense() - eta2.dense()).sum())


def grid_projection(mu: DiscreteMeasure, edges) -> DiscreteMeasure:
    """Histogram of a Euclidean cloud on a caller-supplied grid.

    ``edges`` is one array of bin edges per coordinate; points outside
    the grid go to the nearest boundary cell.
    """
    if mu.is_finite:
        raise MeasureError("grid_projection takes a Euclidean measure")
    edges = [np.asarray(e, dtype=np.float64) for e in edges]
    if len(edges) != mu.space.dim:
        raise MeasureError("one edge array per coordinate is required")
    shape = [e.size - 1 for e in edges]
    idx = []
    for k, e in enumerate(edges):
        i = np.searchsorted(e, mu.points[:, k], side="right") - 1
        idx.append(np.clip(i, 0, e.size - 2))
    flat = np.ravel_multi_index(idx, shape)
    w = np.bincount(flat, weights=mu.weights, minlength=int(np.prod(shape)))
    return DiscreteMeasure.finite(w, probability=mu.probability)
