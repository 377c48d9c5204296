import json
import logging
import math
import os

import numpy as np
import pydantic
import pytest

from app.actions.configurations import (
    BenchConfig,
    MomentsConfig,
    PlanConfig,
    RegressConfig,
    SketchConfig,
    VerifyConfig,
)
from app.actions.handlers import (
    MarkovBoundReport,
    action_bench,
    action_moments,
    action_plan,
    action_regress,
    action_sketch,
    action_verify,
)
from app.numerics.moments import DecouplingCheck, MomentEstimate
from app.numerics.sketches import SketchSpec, generate_osnap
from app.numerics.verification import EmbeddingReport, GaussianBaselineReport, SweepTable
from app.services.errors import ParameterError, ParseError
from app.services.matrix_market import parse_matrix_market


@pytest.mark.asyncio
async def test_action_plan(plan_config):
    result = await action_plan(action_config=plan_config)

    assert result.m_unadjusted == 103787
    assert result.q_int == 14
    assert result.n is None
    assert result.m % result.s == 0


@pytest.mark.asyncio
async def test_action_plan_rejects_invalid_accuracy():
    with pytest.raises(ParameterError):
        await action_plan(action_config=PlanConfig(d=64, eps=1.0, delta=0.01))


@pytest.mark.asyncio
async def test_action_sketch_triplets():
    report = await action_sketch(action_config=SketchConfig(m=8, n=5, s=2, seed=4))

    sketch = generate_osnap(SketchSpec(m=8, n=5, s=2, seed=4))
    dense = sketch.to_csc().toarray()
    assert len(report.triplets) == 5 * 2
    for row, col, value in report.triplets:
        assert dense[row, col] == value
    assert report.mtx is None


@pytest.mark.asyncio
async def test_action_sketch_matrix_market():
    report = await action_sketch(action_config=SketchConfig(m=8, n=5, s=2, seed=4, layout="mtx"))

    expected = generate_osnap(SketchSpec(m=8, n=5, s=2, seed=4)).to_csc().toarray()
    assert np.array_equal(parse_matrix_market(report.mtx).toarray(), expected)
    assert report.triplets is None


@pytest.mark.asyncio
async def test_action_sketch_gaussian():
    report = await action_sketch(action_config=SketchConfig(kind="gaussian", m=3, n=4, seed=1))

    assert report.s == 3
    assert len(report.triplets) == 12
    assert [(row, col) for row, col, _ in report.triplets[:3]] == [(0, 0), (1, 0), (2, 0)]


@pytest.mark.asyncio
async def test_action_sketch_rejects_invalid_structure():
    with pytest.raises(ParameterError):
        await action_sketch(action_config=SketchConfig(m=10, n=5, s=3))


@pytest.mark.asyncio
async def test_action_verify(verify_config, caplog):
    with caplog.at_level(logging.INFO):
        report = await action_verify(action_config=verify_config)

    assert isinstance(report, EmbeddingReport)
    assert report.trials == 20
    assert report.n == 256
    assert report.passes is not None
    assert "certified below delta=0.5" in caplog.text


@pytest.mark.asyncio
async def test_action_verify_sweep():
    config = VerifyConfig(n=128, d=3, grid=["32:2", "64:4"], trials=10, eps=0.5)

    table = await action_verify(action_config=config)

    assert isinstance(table, SweepTable)
    assert [(row.m, row.s) for row in table.rows] == [(32, 2), (64, 4)]


@pytest.mark.asyncio
async def test_action_verify_gaussian_baseline():
    config = VerifyConfig(gaussian_baseline=True, m=400, d=10, t=4.0, trials=20)

    report = await action_verify(action_config=config)

    assert isinstance(report, GaussianBaselineReport)
    assert report.fraction == 1.0


def test_verify_config_needs_a_basis_source():
    with pytest.raises(pydantic.ValidationError):
        VerifyConfig(m=64, s=4)
    with pytest.raises(pydantic.ValidationError):
        VerifyConfig(n=64, d=4)
    with pytest.raises(pydantic.ValidationError):
        VerifyConfig(n=64, d=4, grid=["64"])


@pytest.mark.asyncio
async def test_action_moments_exact_from_a_basis_file(exact_moments_config):
    estimate = await action_moments(action_config=exact_moments_config)

    assert isinstance(estimate, MomentEstimate)
    assert estimate.exact
    assert estimate.trials == 16
    assert estimate.raw_mean == pytest.approx(0.5, abs=1e-12)
    assert estimate.root == pytest.approx(math.sqrt(0.5), abs=1e-12)


@pytest.mark.asyncio
async def test_action_moments_decoupling(diagonal_basis_file):
    config = MomentsConfig(basis=diagonal_basis_file, estimator="decoupling", m=2, s=1, q=1, exact=True)

    check = await action_moments(action_config=config)

    assert isinstance(check, DecouplingCheck)
    assert check.ratio == pytest.approx(0.25)


@pytest.mark.asyncio
async def test_action_moments_markov_bound():
    config = MomentsConfig(n=64, d=4, m=256, s=4, q=2, trials=50, eps=0.9)

    report = await action_moments(action_config=config)

    assert isinstance(report, MarkovBoundReport)
    assert report.d == 4
    assert 0.0 <= report.failure_bound <= 1.0


@pytest.mark.asyncio
async def test_action_moments_markov_bound_needs_scaled_moments():
    config = MomentsConfig(n=64, d=4, m=32, s=4, q=1, trials=10, eps=0.5, normalization="unscaled")

    with pytest.raises(ParameterError):
        await action_moments(action_config=config)


@pytest.mark.asyncio
async def test_action_moments_gaussian_needs_no_basis():
    config = MomentsConfig(estimator="gaussian", m=32, d=4, q=1, trials=20)

    estimate = await action_moments(action_config=config)

    assert estimate.label == "gaussian_decoupled"
    assert estimate.shape == pytest.approx(math.sqrt(32 * 4))


@pytest.mark.asyncio
async def test_action_moments_norms_has_no_exact_mode():
    config = MomentsConfig(estimator="norms", n=8, d=2, m=4, s=2, exact=True)

    with pytest.raises(ParameterError):
        await action_moments(action_config=config)


@pytest.mark.asyncio
async def test_action_moments_missing_basis_file(tmp_path):
    config = MomentsConfig(basis=str(tmp_path / "missing.mtx"), m=2, s=1)

    with pytest.raises(ParameterError):
        await action_moments(action_config=config)


@pytest.mark.asyncio
async def test_action_regress_plans_m(regression_files):
    a_path, b_path = regression_files

    result = await action_regress(action_config=RegressConfig(a=a_path, b=b_path, seed=2))

    assert result.m >= 5
    assert result.m % result.s == 0
    assert 1.0 - 1e-9 <= result.ratio < 2.0
    assert np.allclose(result.x_star, [1.0, -2.0, 0.5, 3.0], atol=0.1)


@pytest.mark.asyncio
async def test_action_regress_export(regression_files, tmp_path, caplog):
    a_path, b_path = regression_files
    export = tmp_path / "reduction"
    config = RegressConfig(a=a_path, b=b_path, m=64, s=4, eps=0.3, export=str(export))

    with caplog.at_level(logging.INFO):
        result = await action_regress(action_config=config)

    A_tilde = parse_matrix_market((export / "A_tilde.mtx").read_text())
    b_tilde = parse_matrix_market((export / "b_tilde.mtx").read_text())
    metadata = json.loads((export / "reduction.json").read_text())
    assert A_tilde.shape == (64, 4)
    assert b_tilde.shape == (64, 1)
    assert metadata == {"eps_tilde": pytest.approx(0.1), "m": 64, "s": 4, "seed": 0}
    residual = A_tilde @ np.array(result.x_hat) - b_tilde[:, 0]
    assert float(residual @ residual) == pytest.approx(result.sketched_objective)
    assert "Sketched reduction written" in caplog.text
    assert sorted(os.listdir(export)) == ["A_tilde.mtx", "b_tilde.mtx", "reduction.json"]


@pytest.mark.asyncio
async def test_action_regress_reports_parse_errors(tmp_path, regression_files):
    _, b_path = regression_files
    broken = tmp_path / "broken.mtx"
    broken.write_text("%%MatrixMarket matrix array real general\n2 2\n1\n")

    with pytest.raises(ParseError):
        await action_regress(action_config=RegressConfig(a=str(broken), b=b_path, m=8, s=2))


@pytest.mark.asyncio
async def test_action_bench():
    config = BenchConfig(m=64, d=4, s=2, nnz=[1000, 2000], repeats=1)

    report = await action_bench(action_config=config)

    assert [row.nnz for row in report.rows] == [1000, 2000]
    assert len(report.ratios) == 1


@pytest.mark.asyncio
async def test_action_moments_rejects_a_basis_that_is_not_text(tmp_path):
    basis = tmp_path / "basis.mtx"
    basis.write_bytes(b"\xff\xfe\x00\x01")
    config = MomentsConfig(basis=str(basis), m=2, s=1, q=1, exact=True)

    with pytest.raises(ParameterError):
        await action_moments(action_config=config)
