import numpy as np
import pytest
from scipy import sparse

from app.numerics.regression import (
    RegressionProblem,
    exact_least_squares,
    export_reduction,
    sketch_and_solve,
)
from app.numerics.sketches import SketchKind, SketchSpec
from app.services.errors import NumericError, ParameterError, RankError, ShapeError


@pytest.fixture
def noisy_problem():
    generator = np.random.default_rng(13)
    A = generator.standard_normal((2000, 4))
    b = A @ np.array([2.0, -1.0, 0.0, 0.5]) + generator.standard_normal(2000)
    return RegressionProblem(A=A, b=b)


def test_identity_system_is_solved_exactly():
    b = np.zeros(4)
    b[0] = 1.0
    prob = RegressionProblem(A=np.eye(4), b=b)

    result = sketch_and_solve(prob, SketchSpec(kind=SketchKind.GAUSSIAN, m=8, n=4, seed=1))

    assert np.allclose(result.x_hat, b)
    assert result.exact_optimum == pytest.approx(0.0, abs=1e-20)
    assert result.ratio == 1.0


def test_consistent_system_has_unit_ratio():
    A = np.zeros((64, 4))
    A[:4, :4] = np.eye(4)
    x = np.array([1.0, 2.0, -3.0, 0.25])
    prob = RegressionProblem(A=A, b=A @ x)

    result = sketch_and_solve(prob, SketchSpec(m=32, n=64, s=4, seed=3))

    assert np.allclose(result.x_hat, x)
    assert result.ratio == 1.0
    assert result.residual_norm <= 1e-8 * np.linalg.norm(prob.b)


def test_sketched_solution_is_near_optimal(noisy_problem):
    result = sketch_and_solve(noisy_problem, SketchSpec(m=400, n=2000, s=4, seed=5))

    x_star, optimum = exact_least_squares(noisy_problem)
    assert result.exact_optimum == pytest.approx(optimum)
    assert np.allclose(result.x_star, x_star)
    assert result.ratio >= 1.0 - 1e-9
    assert result.ratio < 1.5
    assert result.exact_objective_at_xhat == pytest.approx(result.residual_norm ** 2)


def test_sketched_solution_is_near_optimal_for_most_seeds(noisy_problem):
    ratios = [
        sketch_and_solve(noisy_problem, SketchSpec(m=200, n=2000, s=4, seed=seed)).ratio
        for seed in range(40)
    ]

    assert sum(ratio <= 1.25 for ratio in ratios) >= 0.95 * len(ratios)


def test_sparse_and_dense_inputs_agree(noisy_problem):
    spec = SketchSpec(m=100, n=2000, s=2, seed=8)
    sparse_problem = RegressionProblem(A=sparse.csr_matrix(noisy_problem.A), b=noisy_problem.b)

    dense_result = sketch_and_solve(noisy_problem, spec)
    sparse_result = sketch_and_solve(sparse_problem, spec)

    assert np.allclose(dense_result.x_hat, sparse_result.x_hat)
    assert sparse_result.ratio == pytest.approx(dense_result.ratio)


def test_sketch_needs_more_rows_than_unknowns(noisy_problem):
    with pytest.raises(ParameterError):
        sketch_and_solve(noisy_problem, SketchSpec(m=4, n=2000, s=1))


def test_sketch_must_match_the_problem(noisy_problem):
    with pytest.raises(ShapeError):
        sketch_and_solve(noisy_problem, SketchSpec(m=40, n=1999, s=1))


def test_problem_shapes_are_validated():
    with pytest.raises(ShapeError):
        RegressionProblem(A=np.ones((2, 3)), b=np.ones(2))
    with pytest.raises(ShapeError):
        RegressionProblem(A=np.ones((5, 2)), b=np.ones(4))


def test_problem_rejects_non_finite_data():
    b = np.ones(5)
    b[2] = np.inf

    with pytest.raises(NumericError):
        RegressionProblem(A=np.eye(5), b=b)


def test_rank_deficient_problem_is_rejected():
    A = np.random.default_rng(2).standard_normal((30, 3))
    A[:, 2] = A[:, 0]

    with pytest.raises(RankError):
        exact_least_squares(RegressionProblem(A=A, b=np.ones(30)))


def test_export_reduction_tightens_eps(noisy_problem):
    spec = SketchSpec(m=100, n=2000, s=4, seed=21)

    reduction = export_reduction(noisy_problem, spec, eps=0.3)

    assert reduction.eps_tilde == pytest.approx(0.1)
    assert reduction.A_tilde.shape == (100, 4)
    assert reduction.b_tilde.shape == (100,)
    assert (reduction.m, reduction.s, reduction.seed) == (100, 4, 21)
    result = sketch_and_solve(noisy_problem, spec)
    residual = reduction.A_tilde @ np.array(result.x_hat) - reduction.b_tilde
    assert float(residual @ residual) == pytest.approx(result.sketched_objective)


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.5])
def test_export_reduction_rejects_invalid_eps(noisy_problem, eps):
    with pytest.raises(ParameterError):
        export_reduction(noisy_problem, SketchSpec(m=100, n=2000, s=4), eps=eps)
