"""
Embedding-property trials: draw Pi, measure the extreme singular values of Pi U, and aggregate
failures against an (eps, delta) target with exact Clopper-Pearson intervals.
"""
import logging
import math
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pydantic

from app import settings
from app.services.errors import ParameterError, RankError, ShapeError
from app.services.utils import clopper_pearson, mix_seed, parallel_map
from .linalg import OrthonormalBasis, apply_sketch_dense, gram_extreme_singular_values, orthonormalize
from .moments import BasisLike, basis_array, estimate_from_samples, unscaled_product, Normalization, MomentEstimate
from .sketches import SketchKind, SketchSpec, generate_gaussian, generate_sketch


logger = logging.getLogger(__name__)


class TestMatrixKind(str, Enum):
    __test__ = False

    HAAR = "haar_orthonormal"
    IDENTITY_BLOCK = "identity_block"
    COHERENT_SPIKE = "coherent_spike"
    CLUSTERED_DUPLICATES = "clustered_duplicates"


class TestMatrixSpec(pydantic.BaseModel):
    __test__ = False

    kind: TestMatrixKind = TestMatrixKind.HAAR
    n: int
    d: int
    seed: int = 0
    group_size: int = settings.DEFAULT_GROUP_SIZE

    @pydantic.root_validator(skip_on_failure=True)
    def validate_dimensions(cls, values):
        if not values["n"] >= values["d"] >= 1:
            raise ParameterError(f"Test matrices need n >= d >= 1, got n={values['n']}, d={values['d']}")
        if values["group_size"] < 1:
            raise ParameterError(f"group_size must be positive, got {values['group_size']}")
        return values


class EmbeddingReport(pydantic.BaseModel):
    kind: SketchKind
    m: int
    n: int
    s: int
    d: int
    seed: int
    eps: float
    delta: Optional[float] = None
    trials: int
    s_min: List[float]
    s_max: List[float]
    eps_hat: List[float]
    failures: int
    failure_rate: float
    ci_low: float
    ci_high: float
    median_eps_hat: float
    mean_eps_hat: float
    max_eps_hat: float
    passes: Optional[bool] = None  # Clopper-Pearson lower bound <= delta
    certified: Optional[bool] = None  # Clopper-Pearson upper bound <= delta


class SweepRow(pydantic.BaseModel):
    m: int
    s: int
    trials: int
    failures: int
    failure_rate: float
    ci_low: float
    ci_high: float
    median_eps_hat: float
    mean_eps_hat: float
    max_eps_hat: float


class SweepTable(pydantic.BaseModel):
    rows: List[SweepRow]
    reports: List[EmbeddingReport]


class GaussianBaselineReport(pydantic.BaseModel):
    m: int
    d: int
    t: float
    trials: int
    lower: float
    upper: float
    holds: int
    fraction: float
    tail_bound: float
    mean_s_min: float
    mean_s_max: float


class NormMomentReport(pydantic.BaseModel):
    q: int
    trials: int
    frobenius_sq_mean: float
    frobenius_sq_stderr: float
    frobenius_sq_expected: float
    row_sq_mean: float
    row_sq_stderr: float
    row_sq_expected: float
    frobenius: MomentEstimate
    column: MomentEstimate
    row: MomentEstimate


def make_test_matrix(spec: TestMatrixSpec) -> OrthonormalBasis:
    n, d = spec.n, spec.d
    generator = np.random.Generator(np.random.Philox(key=spec.seed))
    if spec.kind == TestMatrixKind.IDENTITY_BLOCK:
        U = np.zeros((n, d))
        U[:d, :d] = np.eye(d)
        return OrthonormalBasis(U=U)
    if spec.kind == TestMatrixKind.HAAR:
        # Sign-corrected QR of a Gaussian matrix is Haar distributed
        return orthonormalize(generator.standard_normal((n, d)))
    if spec.kind == TestMatrixKind.COHERENT_SPIKE:
        spikes = d // 2
        A = np.zeros((n, d))
        A[:spikes, :spikes] = np.eye(spikes)
        A[:, spikes:] = generator.standard_normal((n, d - spikes))
        return orthonormalize(A)
    groups = math.ceil(n / spec.group_size)
    if groups < d:
        raise RankError(f"{groups} distinct rows cannot span {d} dimensions; lower group_size")
    base = generator.standard_normal((groups, d))
    return orthonormalize(np.repeat(base, spec.group_size, axis=0)[:n])


def _embedding_report(
        spec: SketchSpec,
        d: int,
        extremes: Sequence[Tuple[float, float]],
        eps_target: float,
        delta: Optional[float],
) -> EmbeddingReport:
    s_min = np.array([e[0] for e in extremes])
    s_max = np.array([e[1] for e in extremes])
    eps_hat = np.maximum(1.0 - s_min, s_max - 1.0)
    trials = len(extremes)
    failures = int(np.sum(eps_hat > eps_target))
    ci_low, ci_high = clopper_pearson(failures, trials)
    return EmbeddingReport(
        kind=spec.kind,
        m=spec.m,
        n=spec.n,
        s=spec.s,
        d=d,
        seed=spec.seed,
        eps=eps_target,
        delta=delta,
        trials=trials,
        s_min=s_min.tolist(),
        s_max=s_max.tolist(),
        eps_hat=eps_hat.tolist(),
        failures=failures,
        failure_rate=failures / trials,
        ci_low=ci_low,
        ci_high=ci_high,
        median_eps_hat=float(np.median(eps_hat)),
        mean_eps_hat=float(np.mean(eps_hat)),
        max_eps_hat=float(np.max(eps_hat)),
        passes=None if delta is None else ci_low <= delta,
        certified=None if delta is None else ci_high <= delta,
    )


def run_embedding_trials(
        U: BasisLike,
        spec: SketchSpec,
        trials: int,
        eps_target: float,
        delta: Optional[float] = None,
        threads: int = 1,
) -> EmbeddingReport:
    U = basis_array(U)
    if trials < 1:
        raise ParameterError(f"trials must be at least 1, got {trials}")
    if U.shape[0] != spec.n:
        raise ShapeError(f"Sketch has n={spec.n} columns but U has {U.shape[0]} rows")

    def trial(index):
        sketch = generate_sketch(spec.with_seed(mix_seed(spec.seed, index)))
        return gram_extreme_singular_values(apply_sketch_dense(sketch, U))

    logger.info(f"Running {trials} embedding trials: kind={spec.kind.value}, m={spec.m}, s={spec.s}, d={U.shape[1]}")
    extremes = parallel_map(trial, range(trials), threads)
    report = _embedding_report(spec, U.shape[1], extremes, eps_target, delta)
    logger.info(
        f"-- {report.failures}/{trials} failures at eps={eps_target}, "
        f"95% interval [{report.ci_low:.4g}, {report.ci_high:.4g}] --"
    )
    return report


def sweep(
        U: BasisLike,
        grid: Sequence[Tuple[int, int]],
        trials: int,
        eps_target: float,
        delta: Optional[float] = None,
        kind: SketchKind = SketchKind.OSNAP,
        seed: int = 0,
        threads: int = 1,
) -> SweepTable:
    U = basis_array(U)
    if not grid:
        raise ParameterError("The sweep grid is empty")
    reports = []
    for m, s in grid:
        spec = SketchSpec(kind=kind, m=m, n=U.shape[0], s=s, seed=seed)
        reports.append(run_embedding_trials(U, spec, trials, eps_target, delta, threads))
    rows = [
        SweepRow(m=r.m, s=r.s, **r.dict(include={
            "trials", "failures", "failure_rate", "ci_low", "ci_high",
            "median_eps_hat", "mean_eps_hat", "max_eps_hat",
        }))
        for r in reports
    ]
    return SweepTable(rows=rows, reports=reports)


def gaussian_baseline_check(m: int, d: int, t: float, trials: int, seed: int = 0, threads: int = 1) -> GaussianBaselineReport:
    """
    For an m x d matrix G with independent standard normal entries, check
    sqrt(m) - sqrt(d) - t <= s_min(G) <= s_max(G) <= sqrt(m) + sqrt(d) + t,
    which fails with probability at most 2 exp(-t^2 / 2).
    """
    if trials < 1 or m < d:
        raise ParameterError(f"Need trials >= 1 and m >= d, got trials={trials}, m={m}, d={d}")
    lower = math.sqrt(m) - math.sqrt(d) - t
    upper = math.sqrt(m) + math.sqrt(d) + t

    def trial(index):
        G = generate_gaussian(m, d, mix_seed(seed, index)).matrix * math.sqrt(m)
        return gram_extreme_singular_values(G)

    extremes = np.array(parallel_map(trial, range(trials), threads))
    holds = int(np.sum((extremes[:, 0] >= lower) & (extremes[:, 1] <= upper)))
    return GaussianBaselineReport(
        m=m,
        d=d,
        t=t,
        trials=trials,
        lower=lower,
        upper=upper,
        holds=holds,
        fraction=holds / trials,
        tail_bound=min(1.0, 2.0 * math.exp(-t ** 2 / 2)),
        mean_s_min=float(np.mean(extremes[:, 0])),
        mean_s_max=float(np.mean(extremes[:, 1])),
    )


def norm_moments(U: BasisLike, spec: SketchSpec, q: int, trials: int, threads: int = 1) -> NormMomentReport:
    """
    Moments of X = S U (unscaled): ||X||_F, ||X e_1|| and the norm of a uniformly random row.
    E ||X||_F^2 = pm*d and E ||e_mu^T X||^2 = pd hold exactly; the 2q-th moment roots are compared
    with sqrt(pmd) + sqrt(q), sqrt(pm) + sqrt(q) and sqrt(pd) + sqrt(q).
    """
    U = basis_array(U)
    if spec.kind == SketchKind.GAUSSIAN:
        raise ParameterError("Norm moments are defined for osnap and countsketch sketches")
    if U.shape[0] != spec.n:
        raise ShapeError(f"Sketch has n={spec.n} columns but U has {U.shape[0]} rows")
    if q < 1 or trials < 2:
        raise ParameterError(f"Need q >= 1 and at least two trials, got q={q}, trials={trials}")
    d, pm, p = U.shape[1], spec.s, spec.p

    def trial(index):
        X = unscaled_product(U, spec, mix_seed(spec.seed, index))
        row_sq = np.sum(X ** 2, axis=1)
        frobenius_sq = float(np.sum(row_sq))
        column_sq = float(np.sum(X[:, 0] ** 2))
        return frobenius_sq, float(np.mean(row_sq)), column_sq, float(np.mean(row_sq ** q))

    values = np.array(parallel_map(trial, range(trials), threads))
    root_q = math.sqrt(q)
    frobenius = estimate_from_samples(
        values[:, 0] ** q, q, normalization=Normalization.UNSCALED, label="frobenius",
        shape=math.sqrt(pm * d) + root_q,
    )
    column = estimate_from_samples(
        values[:, 2] ** q, q, normalization=Normalization.UNSCALED, label="column",
        shape=math.sqrt(pm) + root_q,
    )
    row = estimate_from_samples(
        values[:, 3], q, normalization=Normalization.UNSCALED, label="row",
        shape=math.sqrt(p * d) + root_q,
    )
    return NormMomentReport(
        q=q,
        trials=trials,
        frobenius_sq_mean=float(np.mean(values[:, 0])),
        frobenius_sq_stderr=float(np.std(values[:, 0], ddof=1) / math.sqrt(trials)),
        frobenius_sq_expected=float(pm * d),
        row_sq_mean=float(np.mean(values[:, 1])),
        row_sq_stderr=float(np.std(values[:, 1], ddof=1) / math.sqrt(trials)),
        row_sq_expected=p * d,
        frobenius=frobenius,
        column=column,
        row=row,
    )
