import json
import logging
import os
from typing import List, Optional, Tuple

import aiofiles
import numpy as np
import pydantic

from app.numerics.benchmark import BenchReport, benchmark_nnz_scaling
from app.numerics.linalg import OrthonormalBasis, orthonormalize
from app.numerics.moments import (
    MomentEstimate,
    Normalization,
    decoupling_inequality_check,
    exact_decoupled_moment,
    exact_embedding_moment,
    markov_failure_bound,
    mc_decoupled_moment,
    mc_embedding_moment,
    mc_gaussian_decoupled_moment,
    r_quantities,
)
from app.numerics.planner import PlanInputs, PlanMode, PlanResult, plan
from app.numerics.regression import RegressionProblem, RegressionResult, export_reduction, sketch_and_solve
from app.numerics.sketches import GaussianSketch, SketchKind, SketchSpec, generate_sketch, sketch_as_triplets
from app.numerics.verification import (
    TestMatrixSpec,
    gaussian_baseline_check,
    make_test_matrix,
    norm_moments,
    run_embedding_trials,
    sweep,
)
from app.services.activity_logger import activity_logger, log_action_activity
from app.services.errors import ParameterError
from app.services.matrix_market import read_matrix_market, read_vector, write_matrix_market
from .configurations import (
    BenchConfig,
    MomentEstimator,
    MomentsConfig,
    PlanConfig,
    RegressConfig,
    SketchConfig,
    SketchLayout,
    VerifyConfig,
)


logger = logging.getLogger(__name__)


class SketchReport(pydantic.BaseModel):
    kind: SketchKind
    m: int
    n: int
    s: int
    seed: int
    layout: SketchLayout
    triplets: Optional[List[Tuple[int, int, float]]] = None  # 0-based (row, col, value)
    mtx: Optional[str] = None


class MarkovBoundReport(pydantic.BaseModel):
    estimate: MomentEstimate
    eps: float
    d: int
    failure_bound: float


async def write_text(path: str, text: str):
    async with aiofiles.open(path, "w") as f:
        await f.write(text)


async def load_basis(action_config) -> OrthonormalBasis:
    if action_config.basis:
        return orthonormalize(await read_matrix_market(action_config.basis))
    return make_test_matrix(
        TestMatrixSpec(
            kind=action_config.matrix,
            n=action_config.n,
            d=action_config.d,
            seed=action_config.matrix_seed,
            group_size=action_config.group_size,
        )
    )


@activity_logger()
async def action_plan(action_config: PlanConfig) -> PlanResult:
    inputs = PlanInputs(
        d=action_config.d,
        n=action_config.n,
        eps=action_config.eps,
        delta=action_config.delta,
        k=action_config.k,
        theta=action_config.theta,
        constants=action_config.constants,
        eps_exponent=action_config.eps_exponent,
    )
    result = plan(inputs, mode=action_config.mode)
    logger.info(f"-- Planned m={result.m}, s={result.s} (m before adjustment: {result.m_unadjusted}) --")
    return result


@activity_logger()
async def action_sketch(action_config: SketchConfig) -> SketchReport:
    spec = SketchSpec(
        kind=action_config.kind,
        m=action_config.m,
        n=action_config.n,
        s=action_config.s,
        seed=action_config.seed,
    )
    sketch = generate_sketch(spec)
    report = SketchReport(
        kind=spec.kind, m=spec.m, n=spec.n, s=spec.s, seed=spec.seed, layout=action_config.layout
    )
    if isinstance(sketch, GaussianSketch):
        if action_config.layout == SketchLayout.MTX:
            report.mtx = write_matrix_market(sketch.matrix)
        else:
            rows, cols = np.nonzero(sketch.matrix)
            order = np.lexsort((rows, cols))
            report.triplets = [(int(rows[k]), int(cols[k]), float(sketch.matrix[rows[k], cols[k]])) for k in order]
        return report
    if action_config.layout == SketchLayout.MTX:
        report.mtx = write_matrix_market(sketch.to_csc())
    else:
        report.triplets = sketch_as_triplets(sketch)
    return report


@activity_logger()
async def action_verify(action_config: VerifyConfig):
    if action_config.gaussian_baseline:
        if action_config.m is None or action_config.d is None:
            raise ParameterError("The Gaussian baseline needs m and d")
        return gaussian_baseline_check(
            m=action_config.m,
            d=action_config.d,
            t=action_config.t,
            trials=action_config.trials,
            seed=action_config.seed,
            threads=action_config.threads,
        )

    basis = await load_basis(action_config)
    if action_config.grid:
        return sweep(
            basis,
            grid=action_config.grid_points,
            trials=action_config.trials,
            eps_target=action_config.eps,
            delta=action_config.delta,
            kind=action_config.kind,
            seed=action_config.seed,
            threads=action_config.threads,
        )

    spec = SketchSpec(
        kind=action_config.kind, m=action_config.m, n=basis.n, s=action_config.s, seed=action_config.seed
    )
    report = run_embedding_trials(
        basis, spec, action_config.trials, action_config.eps, action_config.delta, action_config.threads
    )
    if report.passes is not None:
        await log_action_activity(
            action_id="verify",
            title=f"Failure rate {report.failure_rate:.4g} {'is' if report.certified else 'is not'} certified below delta={report.delta}",
            level="INFO" if report.certified else "WARNING",
            config_data=action_config.dict(),
            data={"failures": report.failures, "trials": report.trials, "ci_high": report.ci_high},
        )
    return report


@activity_logger()
async def action_moments(action_config: MomentsConfig):
    estimator = action_config.estimator
    if action_config.exact and estimator in (MomentEstimator.NORMS, MomentEstimator.GAUSSIAN):
        raise ParameterError(f"The {estimator.value} estimator has no exact mode")
    if estimator == MomentEstimator.GAUSSIAN:
        if action_config.d is None:
            raise ParameterError("The Gaussian decoupled moment needs d")
        return mc_gaussian_decoupled_moment(
            m=action_config.m,
            d=action_config.d,
            q=action_config.q,
            trials=action_config.trials,
            seed=action_config.seed,
            threads=action_config.threads,
        )

    basis = await load_basis(action_config)
    spec = SketchSpec(
        kind=action_config.kind, m=action_config.m, n=basis.n, s=action_config.s, seed=action_config.seed
    )
    q, trials, threads = action_config.q, action_config.trials, action_config.threads
    if estimator == MomentEstimator.DECOUPLED:
        if action_config.exact:
            return exact_decoupled_moment(basis, spec, q)
        return mc_decoupled_moment(basis, spec, q, trials, threads)
    if estimator == MomentEstimator.DECOUPLING:
        return decoupling_inequality_check(basis, spec, q, trials, exact=action_config.exact, threads=threads)
    if estimator == MomentEstimator.R:
        return r_quantities(
            basis, spec, q, trials, exact=action_config.exact, constant=action_config.constant, threads=threads
        )
    if estimator == MomentEstimator.NORMS:
        return norm_moments(basis, spec, q, trials, threads)

    if action_config.exact:
        estimate = exact_embedding_moment(basis, spec, q, normalization=action_config.normalization)
    else:
        estimate = mc_embedding_moment(basis, spec, q, trials, action_config.normalization, threads)
    if action_config.eps is None:
        return estimate
    if action_config.normalization != Normalization.SCALED:
        raise ParameterError("The failure bound needs the scaled normalization")
    return MarkovBoundReport(
        estimate=estimate,
        eps=action_config.eps,
        d=basis.d,
        failure_bound=markov_failure_bound(estimate, action_config.eps, basis.d),
    )


@activity_logger()
async def action_regress(action_config: RegressConfig) -> RegressionResult:
    A = await read_matrix_market(action_config.a)
    b = await read_vector(action_config.b)
    problem = RegressionProblem(A=A, b=b)
    m, s = action_config.m, action_config.s
    if m is None:
        # Sized for the d+1 columns of [A | b]
        planned = plan(
            PlanInputs(d=problem.d + 1, n=problem.n, eps=action_config.eps, delta=action_config.delta),
            mode=PlanMode.BASIC,
        )
        m, s = planned.m, planned.s
        logger.info(f"-- Planned m={m}, s={s} for d+1={problem.d + 1} columns --")
    spec = SketchSpec(kind=action_config.kind, m=m, n=problem.n, s=s, seed=action_config.seed)
    result = sketch_and_solve(problem, spec)

    if action_config.export:
        reduction = export_reduction(problem, spec, action_config.eps)
        os.makedirs(action_config.export, exist_ok=True)
        await write_text(os.path.join(action_config.export, "A_tilde.mtx"), write_matrix_market(reduction.A_tilde))
        await write_text(os.path.join(action_config.export, "b_tilde.mtx"), write_matrix_market(reduction.b_tilde))
        await write_text(
            os.path.join(action_config.export, "reduction.json"),
            json.dumps({"eps_tilde": reduction.eps_tilde, "m": reduction.m, "s": reduction.s, "seed": reduction.seed}, indent=2),
        )
        await log_action_activity(
            action_id="regress",
            title=f"Sketched reduction written to '{action_config.export}'",
            config_data=action_config.dict(),
            data={"eps_tilde": reduction.eps_tilde},
        )
    return result


@activity_logger()
async def action_bench(action_config: BenchConfig) -> BenchReport:
    return benchmark_nnz_scaling(
        m=action_config.m,
        d=action_config.d,
        s=action_config.s,
        nnz_values=action_config.nnz,
        seed=action_config.seed,
        repeats=action_config.repeats,
    )
