import asyncio
import math

import numpy as np
import pydantic
import pytest
from unittest.mock import MagicMock

from app.actions import GenericActionConfiguration
from app.numerics.linalg import OrthonormalBasis
from app.numerics.sketches import SketchSpec
from app.numerics.verification import TestMatrixKind, TestMatrixSpec, make_test_matrix


class AsyncMock(MagicMock):
    async def __call__(self, *args, **kwargs):
        return super(AsyncMock, self).__call__(*args, **kwargs)


def async_return(result):
    f = asyncio.Future()
    f.set_result(result)
    return f


class MockActionConfiguration(GenericActionConfiguration):
    d: int = 4


class MockPayload(pydantic.BaseModel):
    value: float = 0.5
    label: str = "mock"


@pytest.fixture
def mock_action_handlers(mocker):
    mock_action_handler = AsyncMock()
    mock_action_handler.return_value = MockPayload()
    mock_action_handlers = {
        "mock": (mock_action_handler, MockActionConfiguration)
    }
    return mock_action_handlers


@pytest.fixture
def diagonal_basis():
    # n=2, d=1: U = (1/sqrt 2, 1/sqrt 2)^T, the smallest instance with 16 equally likely outcomes
    return OrthonormalBasis(U=np.full((2, 1), 1.0 / math.sqrt(2.0)))


@pytest.fixture
def haar_basis():
    return make_test_matrix(TestMatrixSpec(kind=TestMatrixKind.HAAR, n=64, d=4, seed=11))


@pytest.fixture
def identity_block_basis():
    return make_test_matrix(TestMatrixSpec(kind=TestMatrixKind.IDENTITY_BLOCK, n=64, d=4))


@pytest.fixture
def osnap_spec():
    return SketchSpec(m=32, n=64, s=4, seed=7)


@pytest.fixture
def identity_mtx():
    return (
        "%%MatrixMarket matrix coordinate real general\n"
        "% 2x2 identity\n"
        "2 2 2\n"
        "1 1 1.0\n"
        "2 2 1.0\n"
    )


@pytest.fixture
def dense_mtx():
    # 3 x 2, column-major values
    return (
        "%%MatrixMarket matrix array real general\n"
        "3 2\n"
        "1\n2\n3\n"
        "4\n5\n6\n"
    )


@pytest.fixture
def diagonal_basis_file(tmp_path):
    path = tmp_path / "u.mtx"
    path.write_text(
        "%%MatrixMarket matrix array real general\n"
        "2 1\n"
        "1\n"
        "1\n"
    )
    return str(path)


@pytest.fixture
def regression_files(tmp_path):
    generator = np.random.default_rng(5)
    A = generator.standard_normal((256, 4))
    x = np.array([1.0, -2.0, 0.5, 3.0])
    b = A @ x + 0.1 * generator.standard_normal(256)
    a_path = tmp_path / "a.mtx"
    b_path = tmp_path / "b.txt"
    lines = ["%%MatrixMarket matrix array real general", "256 4"]
    lines.extend(f"{value:.17g}" for value in A.ravel(order="F"))
    a_path.write_text("\n".join(lines) + "\n")
    b_path.write_text("# right-hand side\n" + "\n".join(f"{value:.17g}" for value in b) + "\n")
    return str(a_path), str(b_path)
