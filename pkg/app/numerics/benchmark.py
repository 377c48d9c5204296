import logging
import math
import time
from typing import List, Sequence

import numpy as np
import pydantic
from scipy import sparse

from app.services.errors import ParameterError
from app.services.utils import mix_seed
from .linalg import apply_sketch_sparse
from .sketches import SketchSpec, generate_osnap


logger = logging.getLogger(__name__)

# Fraction of nonzeros in the generated test matrices
FILL = 0.5


class BenchRow(pydantic.BaseModel):
    nnz: int
    n: int
    seconds: float


class BenchReport(pydantic.BaseModel):
    m: int
    d: int
    s: int
    seed: int
    repeats: int
    rows: List[BenchRow]
    ratios: List[float]  # seconds[i+1] / seconds[i]


def random_csr(nnz: int, d: int, seed: int) -> sparse.csr_matrix:
    n = max(math.ceil(nnz / (FILL * d)), d)
    generator = np.random.Generator(np.random.Philox(key=seed))
    return sparse.random(n, d, density=nnz / (n * d), format="csr", random_state=generator)


def benchmark_nnz_scaling(
        m: int,
        d: int,
        s: int,
        nnz_values: Sequence[int],
        seed: int = 0,
        repeats: int = 3,
) -> BenchReport:
    if repeats < 1 or not nnz_values or min(nnz_values) < 1:
        raise ParameterError("Need repeats >= 1 and a non-empty list of positive nnz values")
    rows = []
    for index, nnz in enumerate(nnz_values):
        A = random_csr(nnz, d, mix_seed(seed, index))
        sketch = generate_osnap(SketchSpec(m=m, n=A.shape[0], s=s, seed=mix_seed(seed, index, 1)))
        best = math.inf
        for _ in range(repeats):
            start = time.perf_counter()
            apply_sketch_sparse(sketch, A)
            best = min(best, time.perf_counter() - start)
        logger.info(f"nnz={A.nnz}, n={A.shape[0]}: {best:.6f}s")
        rows.append(BenchRow(nnz=A.nnz, n=A.shape[0], seconds=best))
    ratios = [
        later.seconds / earlier.seconds if earlier.seconds > 0 else math.inf
        for earlier, later in zip(rows, rows[1:])
    ]
    return BenchReport(m=m, d=d, s=s, seed=seed, repeats=repeats, rows=rows, ratios=ratios)
