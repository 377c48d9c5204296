from enum import Enum
from typing import List, Optional, Tuple, Union

import pydantic

from app import settings
from app.numerics.moments import Normalization
from app.numerics.planner import EpsExponent, PlanConstants, PlanMode
from app.numerics.sketches import SketchKind
from app.numerics.verification import TestMatrixKind
from .core import ExperimentActionConfiguration, GenericActionConfiguration


class SketchLayout(str, Enum):
    TRIPLETS = "triplets"
    MTX = "mtx"


class MomentEstimator(str, Enum):
    EMBEDDING = "embedding"
    DECOUPLED = "decoupled"
    DECOUPLING = "decoupling"
    R = "r"
    NORMS = "norms"
    GAUSSIAN = "gaussian"


class PlanConfig(GenericActionConfiguration):
    d: pydantic.conint(ge=1)
    n: Optional[pydantic.conint(ge=1)] = None
    eps: float
    delta: float
    mode: PlanMode = PlanMode.BASIC
    k: Union[int, str] = "auto"
    theta: Union[float, str] = "auto"
    eps_exponent: EpsExponent = EpsExponent.LOG
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    c_basic1: float = 1.0
    c_basic2: float = 1.0
    c_subpoly1: float = 1.0
    c_subpoly2: float = 1.0

    @property
    def constants(self) -> PlanConstants:
        return PlanConstants(**self.dict(include=set(PlanConstants.__fields__)))


class SketchConfig(GenericActionConfiguration):
    kind: SketchKind = SketchKind.OSNAP
    m: pydantic.conint(ge=1)
    n: pydantic.conint(ge=1)
    s: pydantic.conint(ge=1) = 1
    layout: SketchLayout = SketchLayout.TRIPLETS


class BasisConfigMixin(pydantic.BaseModel):
    # U is read from a Matrix Market file (and orthonormalized) or generated from a test-matrix kind
    basis: Optional[str] = None
    matrix: TestMatrixKind = TestMatrixKind.HAAR
    matrix_seed: pydantic.conint(ge=0) = 0
    group_size: pydantic.conint(ge=1) = settings.DEFAULT_GROUP_SIZE
    n: Optional[pydantic.conint(ge=1)] = None
    d: Optional[pydantic.conint(ge=1)] = None

    @pydantic.root_validator(skip_on_failure=True)
    def validate_basis_source(cls, values):
        # Gaussian baselines draw their own matrices
        if values.get("gaussian_baseline") or values.get("estimator") == MomentEstimator.GAUSSIAN:
            return values
        if not values.get("basis") and (values.get("n") is None or values.get("d") is None):
            raise ValueError("Either a basis file or both n and d are required")
        return values


def parse_grid_point(point: str) -> Tuple[int, int]:
    m, _, s = point.partition(":")
    return int(m), int(s)


class VerifyConfig(BasisConfigMixin, ExperimentActionConfiguration):
    kind: SketchKind = SketchKind.OSNAP
    m: Optional[pydantic.conint(ge=1)] = None
    s: pydantic.conint(ge=1) = 1
    eps: pydantic.confloat(gt=0) = 0.5
    delta: Optional[pydantic.confloat(gt=0, lt=1)] = None
    grid: List[str] = []  # "m:s" points for a sweep
    gaussian_baseline: bool = False
    t: pydantic.confloat(ge=0) = 3.0

    @pydantic.validator("grid", each_item=True)
    def validate_grid_point(cls, value):
        try:
            m, s = parse_grid_point(value)
        except ValueError:
            raise ValueError(f"Grid points look like 'm:s', got '{value}'")
        if m < 1 or s < 1:
            raise ValueError(f"Grid point '{value}' must have positive m and s")
        return value

    @pydantic.root_validator(skip_on_failure=True)
    def validate_m(cls, values):
        if values.get("m") is None and not values.get("grid"):
            raise ValueError("m is required unless a sweep grid is given")
        return values

    @property
    def grid_points(self) -> List[Tuple[int, int]]:
        return [parse_grid_point(point) for point in self.grid]


class MomentsConfig(BasisConfigMixin, ExperimentActionConfiguration):
    estimator: MomentEstimator = MomentEstimator.EMBEDDING
    kind: SketchKind = SketchKind.OSNAP
    m: pydantic.conint(ge=1)
    s: pydantic.conint(ge=1) = 1
    q: pydantic.conint(ge=1) = 1
    exact: bool = False
    normalization: Normalization = Normalization.SCALED
    constant: pydantic.confloat(gt=0) = 1.0
    eps: Optional[pydantic.confloat(gt=0)] = None  # adds the Markov failure bound to embedding moments


class RegressConfig(GenericActionConfiguration):
    a: str
    b: str
    kind: SketchKind = SketchKind.OSNAP
    m: Optional[pydantic.conint(ge=1)] = None  # planned with d+1 columns when omitted
    s: pydantic.conint(ge=1) = 1
    eps: pydantic.confloat(gt=0, lt=1) = 0.25
    delta: pydantic.confloat(gt=0, lt=1) = 0.05
    export: Optional[str] = None


class BenchConfig(GenericActionConfiguration):
    m: pydantic.conint(ge=1) = 2048
    d: pydantic.conint(ge=1) = 16
    s: pydantic.conint(ge=1) = 8
    nnz: List[pydantic.conint(ge=1)] = [1_000_000, 2_000_000, 4_000_000, 8_000_000]
    repeats: pydantic.conint(ge=1) = 3
