import numpy as np
import pytest
from scipy.linalg import expm, polar

from gsfica import fastica as fi
from gsfica.asymptotics import moment_functionals
from gsfica.errors import DegenerateError, ParameterError, UnsupportedError
from gsfica.metrics import align, off_index
from gsfica.nonlinearity import Nonlinearity, parse_list
from gsfica.preprocess import random_orthogonal, standardize
from gsfica.sources import SourceSpec, sample_batch

EX1 = [SourceSpec.uniform(), SourceSpec.uniform(), SourceSpec.laplace()]
FIG2 = [SourceSpec.bimod(3.0, -0.3), SourceSpec.gg(4.0), SourceSpec.laplace()]
FIG2_NLS = parse_list(["kurtosis", "gauss", "tanh"])
KURT3 = parse_list(["kurtosis"], 3)


@pytest.fixture(scope="module")
def ex1_data():
    return standardize(sample_batch(EX1, 10**5, 2)).X


def test_empirical_H_scalar_kurtosis(rs):
    x = standardize(rs.laplace(size=(1, 5000))).X
    for w in (1.0, -1.0):
        H = fi.empirical_H([[w]], x, KURT3[:1])
        assert H[0, 0] == pytest.approx((3 * np.mean(x**2) - np.mean(x**4)) * w, rel=1e-12)


def test_empirical_H_zero_data():
    W = random_orthogonal(3, 0)
    H = fi.empirical_H(W, np.zeros((3, 10)), parse_list(["gauss"], 3))
    np.testing.assert_allclose(H, W, atol=1e-15)


def test_empirical_H_rows_match_definition(rs):
    X = rs.standard_normal((3, 200))
    W = random_orthogonal(3, 2)
    H = fi.empirical_H(W, X, FIG2_NLS)
    for i, nl in enumerate(FIG2_NLS):
        y = W[i] @ X
        np.testing.assert_allclose(H[i], nl.gprime(y).mean() * W[i] - (nl.g(y) * X).mean(axis=1), atol=1e-13)


def test_theoretical_H_is_alpha_times_demixer():
    A = random_orthogonal(3, 5)
    X, w = fi.theoretical_data(FIG2, A, 48)
    W_star = A.T
    alpha = moment_functionals(FIG2, FIG2_NLS).alpha
    np.testing.assert_allclose(fi.empirical_H(W_star, X, FIG2_NLS, w), np.diag(alpha) @ W_star, atol=1e-9)
    assert fi.fixed_point_residual(W_star, X, FIG2_NLS, w) <= 1e-9


def test_theoretical_engine_stays_at_fixed_point():
    A = random_orthogonal(3, 6)
    X, w = fi.theoretical_data(FIG2, A, 48)
    res = fi.generalized_symmetric(X, fi.IterationConfig(FIG2_NLS, W0=A.T), weights=w)
    assert res.converged and res.iterations <= 2
    np.testing.assert_allclose(np.abs(res.W), np.abs(A.T), atol=1e-9)


def test_symmetric_orthogonalize_examples(rs):
    Q = random_orthogonal(4, 1)
    np.testing.assert_allclose(fi.symmetric_orthogonalize(Q), Q, atol=1e-14)
    np.testing.assert_allclose(fi.symmetric_orthogonalize(np.diag([2.0, -3.0])), np.diag([1.0, -1.0]), atol=1e-15)
    M = rs.standard_normal((5, 5))
    U = fi.symmetric_orthogonalize(M)
    assert np.abs(U @ U.T - np.eye(5)).max() <= 1e-10
    P = M @ U.T
    np.testing.assert_allclose(P, P.T, atol=1e-12)
    assert np.linalg.eigvalsh(0.5 * (P + P.T)).min() > 0
    np.testing.assert_allclose(U, polar(M, side="left")[0], atol=1e-10)


def test_symmetric_orthogonalize_rank_deficient():
    with pytest.raises(DegenerateError):
        fi.symmetric_orthogonalize(np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_example1_recovery(ex1_data):
    res = fi.generalized_symmetric(ex1_data, KURT3)
    assert res.converged
    sigma, signs, _ = align(res.W)
    assert off_index(res.W, sigma) <= 0.05**2
    assert np.abs(np.abs(res.W[np.arange(3), list(sigma)]) - 1).max() <= 0.05
    assert np.abs(res.W @ res.W.T - np.eye(3)).max() <= 1e-10
    assert fi.fixed_point_residual(res.W, ex1_data, KURT3) <= 1e-7
    assert fi.symmetry_defect(res.W, ex1_data, KURT3, res.sign_vector) <= 1e-7
    np.testing.assert_array_equal(fi.detect_signs(res.W, ex1_data, KURT3), res.sign_vector)


def test_fig2_initializations_select_assignment():
    X = standardize(sample_batch(FIG2, 20000, 8)).X
    r1 = fi.generalized_symmetric(X, fi.IterationConfig(FIG2_NLS, W0=np.eye(3)))
    r2 = fi.generalized_symmetric(X, fi.IterationConfig(FIG2_NLS, W0=np.eye(3)[[1, 2, 0]]))
    assert align(r1.W)[0] == (0, 1, 2)
    assert align(r2.W)[0] == (1, 2, 0)


def test_sign_flip_robustness(ex1_data):
    a = fi.generalized_symmetric(ex1_data, KURT3)
    L = np.diag([-1.0, 1.0, -1.0])
    b = fi.generalized_symmetric(ex1_data, fi.IterationConfig(KURT3, W0=L))
    np.testing.assert_allclose(np.abs(a.W), np.abs(b.W), atol=1e-8)


def test_fixed_point_residual_far_from_solution(ex1_data):
    assert fi.fixed_point_residual(random_orthogonal(3, 3), ex1_data, KURT3) > 0.1


def test_symmetry_defect_cases(ex1_data):
    W = random_orthogonal(3, 3)
    assert fi.symmetry_defect(W, ex1_data, KURT3, np.ones(3)) > 1e-2
    x = np.random.default_rng(0).standard_normal((1, 100))
    assert fi.symmetry_defect([[1.0]], x, KURT3[:1], [1.0]) == 0.0


def test_local_contrast_gauss_term(rs):
    x = rs.standard_normal((1, 1000))
    val = fi.local_contrast([[1.0]], x, [Nonlinearity("gauss")], [1.0])
    assert val == pytest.approx(-np.mean(np.exp(-x[0] ** 2 / 2)))


def test_example1_sign_pattern():
    f = moment_functionals(EX1, KURT3)
    np.testing.assert_allclose(f.alpha, [1.2, 1.2, -3.0], atol=1e-9)
    np.testing.assert_array_equal(np.sign(f.alpha), [1, 1, -1])


def test_converged_point_is_local_minimum(ex1_data):
    res = fi.generalized_symmetric(ex1_data, KURT3)
    s = res.sign_vector
    j0 = fi.local_contrast(res.W, ex1_data, KURT3, s)
    rng = np.random.default_rng(1)
    for _ in range(20):
        K = rng.standard_normal((3, 3))
        K = 0.02 * (K - K.T)
        assert fi.local_contrast(expm(K) @ res.W, ex1_data, KURT3, s) >= j0 - 1e-12


def test_rotation_family():
    np.testing.assert_allclose(fi.rotation(0.0, 0.0), np.eye(3))
    R = fi.rotation(0.3, -1.1)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-15)


def test_contrast_surface_shape_and_symmetry():
    X, w = fi.theoretical_data(EX1, None, 32)
    grid = np.linspace(-0.4, 0.4, 9)
    J = fi.contrast_surface(grid, grid, X, KURT3, [1, 1, -1], w)
    assert J.shape == (9, 9)
    np.testing.assert_allclose(J, J[::-1, :], atol=1e-12)
    np.testing.assert_allclose(J, J[:, ::-1], atol=1e-12)
    assert J[4, 4] == pytest.approx(fi.local_contrast(np.eye(3), X, KURT3, [1, 1, -1], w))


def test_contrast_hessian_saddle_vs_minimum():
    X, w = fi.theoretical_data(EX1, None, 32)
    H1 = fi.contrast_hessian(X, KURT3, None, weights=w)
    H2 = fi.contrast_hessian(X, KURT3, [1, 1, -1], weights=w)
    e1, e2 = np.linalg.eigvalsh(H1), np.linalg.eigvalsh(H2)
    assert e1[0] < 0 < e1[1]
    assert e2[0] > 0
    # second derivatives worked out from the moments of the sources
    np.testing.assert_allclose(np.diag(H1), [2.4, -1.8], atol=1e-3)
    np.testing.assert_allclose(np.diag(H2), [2.4, 4.2], atol=1e-3)


def test_contrast_surface_needs_three_dimensions(rs):
    with pytest.raises(UnsupportedError):
        fi.contrast_surface([0.0], [0.0], rs.standard_normal((2, 10)), KURT3[:2])


def test_max_iter_one_is_flagged(ex1_data):
    res = fi.generalized_symmetric(ex1_data, fi.IterationConfig(KURT3, max_iter=1, W0=random_orthogonal(3, 1)))
    assert not res.converged and res.iterations == 1
    assert res.to_dict()["converged"] is False


def test_gaussian_kurtosis_theoretical_degenerate_report():
    X, w = fi.theoretical_data([SourceSpec.gaussian(), SourceSpec.laplace()], None, 64)
    with pytest.raises(DegenerateError, match=r"row 0 \(kurtosis\)"):
        fi.generalized_symmetric(X, parse_list(["kurtosis"], 2), weights=w)


def test_one_unit_deflation_recovers_all(ex1_data):
    res = fi.one_unit_deflation(ex1_data, KURT3)
    assert res.converged
    assert np.abs(res.W @ res.W.T - np.eye(3)).max() <= 1e-8
    sigma, _, _ = align(res.W)
    assert off_index(res.W, sigma) <= 0.05**2


def test_one_unit_single_vector(ex1_data):
    r = fi.one_unit(ex1_data, "kurtosis", np.array([1.0, 0.1, 0.0]))
    assert r.converged and abs(np.linalg.norm(r.w) - 1) < 1e-14


def test_symmetric_is_generalized_with_equal_nls(ex1_data):
    a = fi.symmetric(ex1_data, "kurtosis")
    b = fi.generalized_symmetric(ex1_data, KURT3)
    np.testing.assert_array_equal(a.W, b.W)


def test_iteration_config_validation():
    with pytest.raises(ParameterError):
        fi.IterationConfig(KURT3, tol=0.0)
    with pytest.raises(ParameterError):
        fi.IterationConfig(KURT3, W0=2 * np.eye(3))
    W0 = fi.rotation(0.2, 0.1) + 1e-10
    cfg = fi.IterationConfig(KURT3, W0=W0)
    assert np.abs(cfg.W0 @ cfg.W0.T - np.eye(3)).max() <= 1e-15


def test_separate_returns_demixer_for_raw_data():
    H = np.array([[1.0, 0.5, 0.0], [0.2, 1.0, 0.3], [0.0, 0.4, 1.0]])
    Y = H @ sample_batch(EX1, 10**5, 4) + 2.0
    res = fi.separate(Y, "kurtosis")
    G = res.B @ H
    sigma, _, _ = align(G)
    assert off_index(G, sigma) <= 0.05**2


def test_weighted_and_kernel_paths_agree(rs):
    X = rs.standard_normal((3, 500))
    W = random_orthogonal(3, 7)
    w = np.full(500, 1 / 500)
    np.testing.assert_allclose(
        fi.empirical_H(W, X, FIG2_NLS), fi.empirical_H(W, X, FIG2_NLS, w), atol=1e-13
    )
