"""
Sketch distributions and reproducible sketch generation.

An unscaled OSNAP matrix S (m x n) stacks s CountSketch blocks of height m/s: column l holds,
for every subcolumn gamma, one Rademacher sign at a uniformly random row of block gamma.
The sketch applied to data is Pi = S / sqrt(s). CountSketch is the single-block case s = 1.

Row positions are stored 0-based: block gamma (0-based) covers rows [gamma*m/s, (gamma+1)*m/s),
which is block gamma+1 = [(m/s)*gamma + 1 : (m/s)*(gamma+1)] in 1-based numbering.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple, Union

import numpy as np
import pydantic
from scipy import sparse

from app import settings
from app.services.errors import ParameterError
from app.services.utils import chunked_ranges


logger = logging.getLogger(__name__)

MAX_SEED = (1 << 64) - 1


class SketchKind(str, Enum):
    OSNAP = "osnap"
    COUNTSKETCH = "countsketch"
    GAUSSIAN = "gaussian"


class SketchSpec(pydantic.BaseModel):
    kind: SketchKind = SketchKind.OSNAP
    m: int
    n: int
    s: int = 1
    seed: int = 0

    class Config:
        allow_mutation = False
        use_enum_values = False

    @pydantic.root_validator(skip_on_failure=True)
    def validate_structure(cls, values):
        kind, m, n, s, seed = (values[k] for k in ("kind", "m", "n", "s", "seed"))
        if m < 1 or n < 1:
            raise ParameterError(f"Sketch dimensions must be positive, got m={m}, n={n}")
        if not 0 <= seed <= MAX_SEED:
            raise ParameterError(f"Seed must be a 64-bit unsigned integer, got {seed}")
        if kind == SketchKind.GAUSSIAN:
            # Dense: every entry is nonzero
            values["s"] = m
            return values
        if kind == SketchKind.COUNTSKETCH and s != 1:
            raise ParameterError(f"CountSketch has exactly one nonzero per column, got s={s}")
        if s < 1 or s > m:
            raise ParameterError(f"Sparsity must satisfy 1 <= s <= m, got s={s}, m={m}")
        if m % s:
            raise ParameterError(f"Sparsity s={s} must divide the row count m={m}")
        return values

    @property
    def p(self) -> float:
        return self.s / self.m

    @property
    def block_height(self) -> int:
        return self.m // self.s

    def with_seed(self, seed: int) -> "SketchSpec":
        return self.copy(update={"seed": seed})


@dataclass(frozen=True)
class OsnapSketch:
    spec: SketchSpec
    positions: np.ndarray  # (n, s) 0-based rows, one per block
    signs: np.ndarray  # (n, s) in {+1, -1}

    @property
    def scale(self) -> float:
        return 1.0 / np.sqrt(self.spec.s)

    def to_csc(self, scaled: bool = True) -> sparse.csc_matrix:
        return sketch_as_csc(self, scaled=scaled)


@dataclass(frozen=True)
class GaussianSketch:
    spec: SketchSpec
    matrix: np.ndarray  # (m, n), entries N(0, 1/m)

    @property
    def scale(self) -> float:
        return 1.0


Sketch = Union[OsnapSketch, GaussianSketch]


def _column_stream(seed: int, chunk: int) -> np.random.Philox:
    # One independent counter-based stream per chunk of columns
    return np.random.Philox(key=(chunk << 64) | seed)


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def generate_osnap(spec: SketchSpec) -> OsnapSketch:
    if spec.kind == SketchKind.GAUSSIAN:
        raise ParameterError("generate_osnap expects an osnap or countsketch spec")
    n, s, block = spec.n, spec.s, spec.block_height
    positions = np.empty((n, s), dtype=np.int64)
    signs = np.empty((n, s), dtype=np.int8)
    block_starts = np.arange(s, dtype=np.int64) * block
    for chunk, (start, stop) in enumerate(chunked_ranges(n, settings.COLUMN_CHUNK)):
        raw = _column_stream(spec.seed, chunk).random_raw((stop - start) * s).reshape(stop - start, s)
        # Top 53 bits pick the row inside the block, the low bit picks the sign
        uniform = (raw >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        offsets = np.minimum((uniform * block).astype(np.int64), block - 1)
        positions[start:stop] = block_starts + offsets
        signs[start:stop] = 1 - 2 * (raw & np.uint64(1)).astype(np.int8)
    return OsnapSketch(spec=spec, positions=_readonly(positions), signs=_readonly(signs))


def generate_gaussian(m: int, n: int, seed: int = 0) -> GaussianSketch:
    spec = SketchSpec(kind=SketchKind.GAUSSIAN, m=m, n=n, seed=seed)
    matrix = np.empty((m, n), dtype=np.float64)
    for chunk, (start, stop) in enumerate(chunked_ranges(n, settings.COLUMN_CHUNK)):
        generator = np.random.Generator(_column_stream(spec.seed, chunk))
        # Drawn column by column so each column is a contiguous piece of the stream
        matrix[:, start:stop] = generator.standard_normal((stop - start, m)).T
    matrix /= np.sqrt(m)
    return GaussianSketch(spec=spec, matrix=_readonly(matrix))


def generate_sketch(spec: SketchSpec) -> Sketch:
    if spec.kind == SketchKind.GAUSSIAN:
        return generate_gaussian(spec.m, spec.n, spec.seed)
    return generate_osnap(spec)


def sketch_as_csc(sk: OsnapSketch, scaled: bool = True) -> sparse.csc_matrix:
    m, n, s = sk.spec.m, sk.spec.n, sk.spec.s
    data = sk.signs.astype(np.float64).ravel()
    if scaled:
        data *= sk.scale
    indptr = np.arange(0, n * s + 1, s, dtype=np.int64)
    return sparse.csc_matrix((data, sk.positions.ravel(), indptr), shape=(m, n))


def sketch_as_triplets(sk: OsnapSketch) -> List[Tuple[int, int, float]]:
    """
    (row, col, value) for every nonzero of Pi, 0-based, sorted by (col, row).
    Rows within a column already increase with the block index.
    """
    n, s = sk.spec.n, sk.spec.s
    cols = np.repeat(np.arange(n), s)
    rows = sk.positions.ravel()
    values = sk.signs.ravel().astype(np.float64) * sk.scale
    return [(int(r), int(c), float(v)) for r, c, v in zip(rows, cols, values)]
