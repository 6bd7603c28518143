import numpy as np
import pytest

from mvflow.exceptions import DegeneratePotentialError, DomainError, MeasureError, ParameterError
from mvflow.measures import (DiscreteMeasure, GaussianKernel, MarkovKernel, PotentialFunction, apply_kernel,
                             boltzmann_gibbs, gaussian_density, grid_projection, integrate, psi,
                             selection_kernel, selection_matrix, total_variation)


def test_probability_measure_checks():
    with pytest.raises(MeasureError):
        DiscreteMeasure.finite([0.5, 0.6])
    with pytest.raises(MeasureError):
        DiscreteMeasure.finite([1.5, -0.5])
    mu = DiscreteMeasure.finite([0.2, 0.3, 0.5])
    assert mu.mass == pytest.approx(1.0)
    assert integrate(mu, [1.0, 2.0, 3.0]) == pytest.approx(2.3)


def test_dirac_and_dense():
    d = DiscreteMeasure.dirac(2, 4)
    assert np.array_equal(d.dense(), [0, 0, 1, 0])
    cloud = DiscreteMeasure.particles(np.array([0.1, 0.2, 0.3]))
    with pytest.raises(MeasureError):
        cloud.dense()


def test_markov_kernel_rows():
    with pytest.raises(MeasureError):
        MarkovKernel([[0.5, 0.4], [0.5, 0.5]])
    K = MarkovKernel([[0.5, 0.5], [0.1, 0.9]])
    mu = apply_kernel(DiscreteMeasure.finite([0.5, 0.5]), K)
    assert np.allclose(mu.dense(), [0.3, 0.7])
    assert mu.probability


def test_integral_operator_keeps_mass():
    mu = DiscreteMeasure.finite([1.0, 2.0], probability=False)
    out = apply_kernel(mu, np.array([[2.0, 0.0], [1.0, 1.0]]))
    assert np.allclose(out.dense(), [4.0, 2.0])


def test_boltzmann_gibbs():
    eta = DiscreteMeasure.finite([0.25, 0.75])
    out = boltzmann_gibbs([2.0, 1.0], eta)
    assert np.allclose(out.dense(), [0.4, 0.6])
    with pytest.raises(DegeneratePotentialError):
        psi(np.array([1.0, 0.0]), np.array([0.0, 5.0]))


@pytest.mark.parametrize("variant,eps", [("additive", 0.0), ("additive", 0.3), ("multiplicative", 0.4)])
def test_selection_kernel_reproduces_psi(rng, variant, eps):
    for _ in range(50):
        w = rng.random(5) + 0.01
        w /= w.sum()
        g = rng.uniform(0.5, 2.5, 5)
        S = selection_matrix(w, g, eps, variant)
        assert np.allclose(S.sum(axis=1), 1.0, atol=1e-12)
        assert np.allclose(w @ S, psi(w, g), atol=1e-12)


def test_selection_admissibility():
    w = np.array([0.5, 0.5])
    with pytest.raises(ParameterError):
        selection_matrix(w, np.array([0.1, 2.0]), 0.5, "additive")
    with pytest.raises(ParameterError):
        selection_matrix(w, np.array([0.1, 2.0]), 1.0, "multiplicative")
    K = selection_kernel([1.0, 2.0], DiscreteMeasure.finite(w))
    assert np.allclose(K.matrix, [[1 / 3, 2 / 3]] * 2)


def test_total_variation():
    a = DiscreteMeasure.finite([0.5, 0.5, 0.0])
    b = DiscreteMeasure.finite([0.0, 0.5, 0.5])
    assert total_variation(a, b) == pytest.approx(0.5)
    with pytest.raises(MeasureError):
        total_variation(a, DiscreteMeasure.finite([1.0, 0.0]))


def test_potential_bounds():
    G = PotentialFunction(func=lambda x: np.exp(-np.sum(x * x, axis=1)), bounds=(0.0, 1.0))
    assert G(np.zeros((2, 1))) == pytest.approx([1.0, 1.0])
    H = PotentialFunction(func=lambda x: 2.0 + 0 * x[:, 0], bounds=(0.0, 1.0))
    with pytest.raises(DomainError):
        H(np.zeros((1, 1)))
    with pytest.raises(ParameterError):
        PotentialFunction(func=lambda x: x)


def test_gaussian_density_matches_scipy():
    from scipy import stats
    cov = np.array([[2.0, 0.3], [0.3, 0.5]])
    y = np.array([[0.1, -0.4], [1.0, 2.0]])
    assert np.allclose(gaussian_density(y, [0.2, 0.1], cov), stats.multivariate_normal([0.2, 0.1], cov).pdf(y))


def test_gaussian_kernel_moves_cloud():
    cloud = DiscreteMeasure.particles(np.zeros((20000, 1)))
    out = apply_kernel(cloud, GaussianKernel(np.eye(1), np.eye(1) * 4.0), np.random.default_rng(1))
    assert abs(out.points.std() - 2.0) < 0.05
    with pytest.raises(ParameterError):
        apply_kernel(cloud, GaussianKernel(np.eye(1), np.eye(1)))


def test_grid_projection():
    cloud = DiscreteMeasure.particles(np.array([[-5.0], [0.2], [0.7], [9.0]]))
    h = grid_projection(cloud, [np.array([-1.0, 0.0, 0.5, 1.0])])
    assert np.allclose(h.dense(), [0.25, 0.25, 0.5])
