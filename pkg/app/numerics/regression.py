"""
Sketch-and-solve least squares: one sketch application to [A | b], a QR solve of the reduced
problem, and a dense oracle for the exact optimum.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np
import pydantic
import scipy.linalg
from scipy import sparse

from app.services.errors import ParameterError, RankError, ShapeError
from .linalg import apply_sketch, as_dense, check_finite, numerical_rank
from .sketches import SketchKind, SketchSpec, generate_sketch


logger = logging.getLogger(__name__)

# Relative residual below which a system counts as consistent
CONSISTENT_TOLERANCE = 1e-8


@dataclass(frozen=True)
class RegressionProblem:
    A: Union[np.ndarray, sparse.csr_matrix]
    b: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=np.float64).ravel()
        object.__setattr__(self, "b", b)
        if not sparse.issparse(self.A):
            object.__setattr__(self, "A", as_dense(self.A))
        n, d = self.A.shape
        if n < d:
            raise ShapeError(f"Least squares needs n >= d, got A of shape {n} x {d}")
        if b.size != n:
            raise ShapeError(f"b has length {b.size} but A has {n} rows")
        check_finite(self.A, "design matrix")
        check_finite(b, "right-hand side")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]


class RegressionResult(pydantic.BaseModel):
    kind: SketchKind
    m: int
    s: int
    seed: int
    x_hat: List[float]
    x_star: List[float]
    sketched_objective: float
    exact_objective_at_xhat: float
    exact_optimum: float
    ratio: float
    residual_norm: float


@dataclass(frozen=True)
class SketchedReduction:
    """
    Sketched data (Pi A, Pi b) with accuracy eps_tilde, for solvers of constrained or
    regularized objectives that run outside this toolkit.
    """
    A_tilde: np.ndarray
    b_tilde: np.ndarray
    eps_tilde: float
    m: int
    s: int
    seed: int


def _qr_solve(M: np.ndarray, y: np.ndarray) -> np.ndarray:
    Q, R = scipy.linalg.qr(M, mode="economic")
    rank = numerical_rank(R, M.shape)
    if rank < M.shape[1]:
        raise RankError(f"Least squares matrix has numerical rank {rank} < {M.shape[1]}")
    return scipy.linalg.solve_triangular(R, Q.T @ y)


def _objective(A, x: np.ndarray, b: np.ndarray) -> float:
    residual = A @ x - b
    return float(residual @ residual)


def exact_least_squares(prob: RegressionProblem) -> Tuple[np.ndarray, float]:
    A = as_dense(prob.A)
    x_star = _qr_solve(A, prob.b)
    return x_star, _objective(A, x_star, prob.b)


def _sketch_augmented(prob: RegressionProblem, spec: SketchSpec) -> np.ndarray:
    if spec.n != prob.n:
        raise ShapeError(f"Sketch has n={spec.n} columns but A has {prob.n} rows")
    if spec.m < prob.d + 1:
        raise ParameterError(f"The sketch needs at least d+1={prob.d + 1} rows, got m={spec.m}")
    if sparse.issparse(prob.A):
        augmented = sparse.hstack([prob.A, sparse.csr_matrix(prob.b.reshape(-1, 1))], format="csr")
    else:
        augmented = np.column_stack([prob.A, prob.b])
    return apply_sketch(generate_sketch(spec), augmented)


def sketch_and_solve(prob: RegressionProblem, spec: SketchSpec) -> RegressionResult:
    sketched = _sketch_augmented(prob, spec)
    A_tilde, b_tilde = sketched[:, :prob.d], sketched[:, prob.d]
    x_hat = _qr_solve(A_tilde, b_tilde)
    x_star, optimum = exact_least_squares(prob)
    objective = _objective(prob.A, x_hat, prob.b)
    residual_norm = math.sqrt(objective)

    b_norm = float(np.linalg.norm(prob.b))
    if math.sqrt(optimum) <= CONSISTENT_TOLERANCE * b_norm:
        ratio = 1.0 if residual_norm <= CONSISTENT_TOLERANCE * b_norm else math.inf
    else:
        ratio = objective / optimum
    logger.debug(f"Sketch-and-solve m={spec.m}, s={spec.s}: ratio={ratio:.6g}")
    return RegressionResult(
        kind=spec.kind,
        m=spec.m,
        s=spec.s,
        seed=spec.seed,
        x_hat=x_hat.tolist(),
        x_star=x_star.tolist(),
        sketched_objective=_objective(A_tilde, x_hat, b_tilde),
        exact_objective_at_xhat=objective,
        exact_optimum=optimum,
        ratio=ratio,
        residual_norm=residual_norm,
    )


def export_reduction(prob: RegressionProblem, spec: SketchSpec, eps: float) -> SketchedReduction:
    if not 0 < eps < 1:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}")
    sketched = _sketch_augmented(prob, spec)
    return SketchedReduction(
        A_tilde=sketched[:, :prob.d],
        b_tilde=sketched[:, prob.d],
        eps_tilde=eps / 3.0,
        m=spec.m,
        s=spec.s,
        seed=spec.seed,
    )
