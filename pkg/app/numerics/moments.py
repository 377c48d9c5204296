"""
Trace-moment estimators for OSNAP embeddings.

Unscaled quantities use S (entries in {0, +1, -1}); scaled ones use Pi = S / sqrt(s).
Every estimator averages per-trial values stored in trial order (numpy pairwise summation), so
results do not depend on the number of worker threads. Exact estimators enumerate every equally
likely (sign, position) assignment.
"""
import logging
import math
from enum import Enum
from typing import Iterator, List, Optional, Union

import numpy as np
import pydantic

from app import settings
from app.services.errors import ParameterError, ShapeError, SpaceTooLarge
from app.services.utils import chunked_ranges, mix_seed, parallel_map
from .linalg import (
    OrthonormalBasis,
    as_dense,
    batched_trace_abs_power,
    batched_trace_power,
    normalized_trace_abs_power,
    normalized_trace_power,
)
from .planner import compute_K
from .sketches import SketchKind, SketchSpec, generate_gaussian, generate_osnap, sketch_as_csc


logger = logging.getLogger(__name__)


class Normalization(str, Enum):
    SCALED = "scaled"
    UNSCALED = "unscaled"


class MomentEstimate(pydantic.BaseModel):
    q: int
    raw_mean: float
    root: float
    stderr: float
    root_stderr: float
    trials: int
    exact: bool = False
    normalization: Normalization = Normalization.SCALED
    label: str = "embedding"
    shape: Optional[float] = None  # reference scale the root is compared against

    @property
    def ratio_to_shape(self) -> Optional[float]:
        if not self.shape:
            return None
        return self.root / self.shape


class DecouplingCheck(pydantic.BaseModel):
    q: int
    lhs: MomentEstimate
    rhs: MomentEstimate
    lhs_root: float
    rhs_root: float
    ratio: float
    ratio_stderr: float
    exact: bool


class RQuantities(pydantic.BaseModel):
    r: int
    R2: float
    R1: MomentEstimate
    bound_R1: float
    bound_R2: float
    constant: float = 1.0


BasisLike = Union[OrthonormalBasis, np.ndarray]


def basis_array(U: BasisLike) -> np.ndarray:
    return U.U if isinstance(U, OrthonormalBasis) else as_dense(U)


def estimate_from_samples(
        values: np.ndarray,
        q: int,
        exact: bool = False,
        normalization: Normalization = Normalization.SCALED,
        label: str = "embedding",
        shape: float = None,
) -> MomentEstimate:
    """
    Summarize per-trial values of a 2q-th power. The root's error bar uses the delta method,
    stderr_root = stderr / (2q * raw^((2q-1)/2q)), and is only approximate.
    """
    values = np.asarray(values, dtype=np.float64)
    trials = int(values.size)
    raw_mean = max(float(np.mean(values)), 0.0)
    if exact or trials < 2:
        stderr = 0.0
    else:
        stderr = float(np.std(values, ddof=1) / math.sqrt(trials))
    power = 2 * q
    root = raw_mean ** (1.0 / power)
    root_stderr = stderr / (power * raw_mean ** ((power - 1) / power)) if raw_mean > 0 else 0.0
    return MomentEstimate(
        q=q,
        raw_mean=raw_mean,
        root=root,
        stderr=stderr,
        root_stderr=root_stderr,
        trials=trials,
        exact=exact,
        normalization=normalization,
        label=label,
        shape=shape,
    )


def _validate(U: np.ndarray, spec: SketchSpec, q: int, trials: Optional[int] = None):
    if spec.kind == SketchKind.GAUSSIAN:
        raise ParameterError("Trace-moment estimators are defined for osnap and countsketch sketches")
    if U.shape[0] != spec.n:
        raise ShapeError(f"Sketch has n={spec.n} columns but U has {U.shape[0]} rows")
    if q < 1:
        raise ParameterError(f"The moment order q must be a positive integer, got {q}")
    if trials is not None and trials < 2:
        raise ParameterError(f"At least two trials are needed for a standard error, got {trials}")


def unscaled_product(U: np.ndarray, spec: SketchSpec, seed: int) -> np.ndarray:
    # X = S U for the unscaled sketch drawn with the given seed
    return np.asarray(sketch_as_csc(generate_osnap(spec.with_seed(seed)), scaled=False) @ U)


def _embedding_value(X: np.ndarray, pm: int, q: int) -> float:
    Y = X.T @ X - pm * np.eye(X.shape[1])
    return normalized_trace_power(Y, q)


def _scale_values(values: np.ndarray, pm: int, q: int, normalization: Normalization) -> np.ndarray:
    if Normalization(normalization) == Normalization.SCALED:
        return values / float(pm) ** (2 * q)
    return values


def mc_embedding_moment(
        U: BasisLike,
        spec: SketchSpec,
        q: int,
        trials: int,
        normalization: Normalization = Normalization.SCALED,
        threads: int = 1,
) -> MomentEstimate:
    """
    Monte Carlo estimate of E tr((SU)^T SU - pm I)^(2q), reported scaled by (pm)^(2q) unless
    the unscaled normalization is requested.
    """
    U = basis_array(U)
    _validate(U, spec, q, trials)
    pm = spec.s

    def trial(index):
        return _embedding_value(unscaled_product(U, spec, mix_seed(spec.seed, index)), pm, q)

    logger.debug(f"Embedding moment: m={spec.m}, s={pm}, q={q}, trials={trials}")
    values = np.array(parallel_map(trial, range(trials), threads))
    return estimate_from_samples(
        _scale_values(values, pm, q, normalization), q, normalization=normalization, label="embedding"
    )


# Exhaustive enumeration

def outcome_count(spec: SketchSpec, copies: int = 1) -> int:
    # Each of the n*s subcolumns has 2 signs times m/s positions
    return (2 * spec.block_height) ** (spec.n * spec.s * copies)


def _check_enumerable(spec: SketchSpec, copies: int = 1) -> int:
    total = outcome_count(spec, copies)
    if total > settings.ENUMERATION_LIMIT:
        raise SpaceTooLarge(
            f"Enumeration needs {total} outcomes, above the limit of {settings.ENUMERATION_LIMIT}"
        )
    return total


def _digits(indices: np.ndarray, base: int, width: int) -> np.ndarray:
    digits = np.empty((indices.size, width), dtype=np.int64)
    remainder = indices.copy()
    for position in range(width):
        digits[:, position] = remainder % base
        remainder //= base
    return digits


def _products_from_digits(U: np.ndarray, spec: SketchSpec, digits: np.ndarray) -> np.ndarray:
    """
    Unscaled X = S U for a batch of outcomes. Digit j encodes subcolumn (l, gamma) = divmod(j, s)
    as sign bit (digit % 2) and block offset (digit // 2).
    """
    batch, entries = digits.shape
    s, block = spec.s, spec.block_height
    columns, gammas = np.divmod(np.arange(entries), s)
    signs = 1.0 - 2.0 * (digits % 2)
    positions = gammas * block + digits // 2
    X = np.zeros((batch, spec.m, U.shape[1]))
    np.add.at(X, (np.arange(batch)[:, None], positions), signs[..., None] * U[columns][None, :, :])
    return X


def enumerate_products(U: np.ndarray, spec: SketchSpec, copies: int = 1) -> Iterator[List[np.ndarray]]:
    """
    Yield batches of [X_1, ..., X_copies] over the joint outcome space of independent sketches.
    """
    total = _check_enumerable(spec, copies)
    entries = spec.n * spec.s
    base = 2 * spec.block_height
    for start, stop in chunked_ranges(total, settings.ENUMERATION_BATCH):
        digits = _digits(np.arange(start, stop, dtype=np.int64), base, entries * copies)
        yield [
            _products_from_digits(U, spec, digits[:, copy * entries:(copy + 1) * entries])
            for copy in range(copies)
        ]


def _gram_deviation(X: np.ndarray, pm: int) -> np.ndarray:
    return np.transpose(X, (0, 2, 1)) @ X - pm * np.eye(X.shape[2])


def exact_embedding_moment(
        U: BasisLike,
        spec: SketchSpec,
        q: int,
        normalization: Normalization = Normalization.SCALED,
) -> MomentEstimate:
    U = basis_array(U)
    _validate(U, spec, q)
    pm = spec.s
    values = np.concatenate([
        batched_trace_power(_gram_deviation(X, pm), q) for X, in enumerate_products(U, spec)
    ])
    return estimate_from_samples(
        _scale_values(values, pm, q, normalization), q, exact=True, normalization=normalization, label="embedding"
    )


def mc_decoupled_moment(U: BasisLike, spec: SketchSpec, q: int, trials: int, threads: int = 1) -> MomentEstimate:
    """
    Monte Carlo estimate of E tr|(S1 U)^T (S2 U)|^(2q) for independent unscaled S1, S2.
    The K quantity at (m, d, p, q) is attached as the reference shape.
    """
    U = basis_array(U)
    _validate(U, spec, q, trials)

    def trial(index):
        X1 = unscaled_product(U, spec, mix_seed(spec.seed, index, 0))
        X2 = unscaled_product(U, spec, mix_seed(spec.seed, index, 1))
        return normalized_trace_abs_power(X1.T @ X2, q)

    values = np.array(parallel_map(trial, range(trials), threads))
    return estimate_from_samples(
        values, q, normalization=Normalization.UNSCALED, label="decoupled",
        shape=compute_K(spec.m, U.shape[1], spec.p, q),
    )


def exact_decoupled_moment(U: BasisLike, spec: SketchSpec, q: int) -> MomentEstimate:
    U = basis_array(U)
    _validate(U, spec, q)
    values = np.concatenate([
        batched_trace_abs_power(np.transpose(X1, (0, 2, 1)) @ X2, q)
        for X1, X2 in enumerate_products(U, spec, copies=2)
    ])
    return estimate_from_samples(
        values, q, exact=True, normalization=Normalization.UNSCALED, label="decoupled",
        shape=compute_K(spec.m, U.shape[1], spec.p, q),
    )


def _symmetrized_decoupled(X: np.ndarray, X_prime: np.ndarray) -> np.ndarray:
    # 2 * ((S'U)^T SU + (SU)^T S'U) for stacks of products
    cross = np.swapaxes(X_prime, -1, -2) @ X
    return 2.0 * (cross + np.swapaxes(cross, -1, -2))


def _ratio(lhs: MomentEstimate, rhs: MomentEstimate):
    if rhs.root == 0.0:
        return (0.0 if lhs.root == 0.0 else math.inf), 0.0
    ratio = lhs.root / rhs.root
    relative = 0.0
    if lhs.root > 0:
        relative += (lhs.root_stderr / lhs.root) ** 2
    relative += (rhs.root_stderr / rhs.root) ** 2
    return ratio, ratio * math.sqrt(relative)


def decoupling_inequality_check(
        U: BasisLike,
        spec: SketchSpec,
        q: int,
        trials: Optional[int] = None,
        exact: bool = False,
        threads: int = 1,
) -> DecouplingCheck:
    """
    Compare E tr(U^T S^T S U - pm I)^(2q) (lhs) with E tr(2((S'U)^T SU + (SU)^T S'U))^(2q) (rhs)
    for an independent copy S'. The inequality lhs <= rhs holds for exact expectations.
    """
    U = basis_array(U)
    _validate(U, spec, q, None if exact else trials)
    pm = spec.s
    if exact:
        _check_enumerable(spec, copies=2)
        lhs = exact_embedding_moment(U, spec, q, normalization=Normalization.UNSCALED)
        rhs_values = np.concatenate([
            batched_trace_power(_symmetrized_decoupled(X, X_prime), q)
            for X, X_prime in enumerate_products(U, spec, copies=2)
        ])
        rhs = estimate_from_samples(
            rhs_values, q, exact=True, normalization=Normalization.UNSCALED, label="symmetrized_decoupled"
        )
    else:
        if trials is None:
            raise ParameterError("Monte Carlo mode needs a trial count")

        def trial(index):
            X = unscaled_product(U, spec, mix_seed(spec.seed, index, 0))
            X_prime = unscaled_product(U, spec, mix_seed(spec.seed, index, 1))
            return (
                _embedding_value(X, pm, q),
                normalized_trace_power(_symmetrized_decoupled(X, X_prime), q),
            )

        values = np.array(parallel_map(trial, range(trials), threads))
        lhs = estimate_from_samples(values[:, 0], q, normalization=Normalization.UNSCALED, label="embedding")
        rhs = estimate_from_samples(
            values[:, 1], q, normalization=Normalization.UNSCALED, label="symmetrized_decoupled"
        )
    ratio, ratio_stderr = _ratio(lhs, rhs)
    logger.info(f"Decoupling check q={q}: lhs_root={lhs.root:.6g}, rhs_root={rhs.root:.6g}, ratio={ratio:.6g}")
    return DecouplingCheck(
        q=q,
        lhs=lhs,
        rhs=rhs,
        lhs_root=lhs.root,
        rhs_root=rhs.root,
        ratio=ratio,
        ratio_stderr=ratio_stderr,
        exact=exact,
    )


def r_quantities(
        U: BasisLike,
        spec: SketchSpec,
        r: int,
        trials: Optional[int] = None,
        exact: bool = False,
        constant: float = 1.0,
        threads: int = 1,
) -> RQuantities:
    """
    R2 = sqrt(pd + 2r) * (sum over the n*s subcolumns of (1/d) ||u_l||^(2r))^(1/(2r)), exact.
    R1 = (sum over subcolumns of (1/d) E ||e_mu^T S1 U||^(2r) ||u_l||^(2r))^(1/(2r)), where mu is
    uniform in block gamma. Blocks partition the rows, so the sum over gamma equals (s/m) times the
    sum over all rows, and each trial averages the row statistic over every row of one S1.
    """
    U = basis_array(U)
    _validate(U, spec, r, None if exact else trials)
    d = U.shape[1]
    pm, p = spec.s, spec.p
    weight = float(np.sum(np.sum(U ** 2, axis=1) ** r)) / d
    R2 = math.sqrt(p * d + 2 * r) * (pm * weight) ** (1.0 / (2 * r))

    def row_statistic(X: np.ndarray) -> np.ndarray:
        return np.mean(np.sum(X ** 2, axis=-1) ** r, axis=-1)

    if exact:
        samples = np.concatenate([row_statistic(X) for X, in enumerate_products(U, spec)])
    else:
        if trials is None:
            raise ParameterError("Monte Carlo mode needs a trial count")
        samples = np.array(parallel_map(
            lambda index: float(row_statistic(unscaled_product(U, spec, mix_seed(spec.seed, index)))),
            range(trials),
            threads,
        ))
    R1 = estimate_from_samples(
        weight * pm * samples, r, exact=exact, normalization=Normalization.UNSCALED, label="R1"
    )
    bound = constant * pm ** (1.0 / (2 * r)) * math.sqrt(p * d + 2 * r)
    return RQuantities(r=r, R2=R2, R1=R1, bound_R1=bound, bound_R2=bound, constant=constant)


def mc_gaussian_decoupled_moment(m: int, d: int, q: int, trials: int, seed: int = 0, threads: int = 1) -> MomentEstimate:
    """
    E tr|G1^T G2|^(2q) for independent standard Gaussian m x d matrices, with the reference
    shape sqrt(max(m, q) * max(d, q)).
    """
    if q < 1 or trials < 2:
        raise ParameterError(f"Need q >= 1 and at least two trials, got q={q}, trials={trials}")

    def trial(index):
        G1 = generate_gaussian(m, d, mix_seed(seed, index, 0)).matrix * math.sqrt(m)
        G2 = generate_gaussian(m, d, mix_seed(seed, index, 1)).matrix * math.sqrt(m)
        return normalized_trace_abs_power(G1.T @ G2, q)

    values = np.array(parallel_map(trial, range(trials), threads))
    return estimate_from_samples(
        values, q, normalization=Normalization.UNSCALED, label="gaussian_decoupled",
        shape=math.sqrt(max(m, q) * max(d, q)),
    )


def markov_failure_bound(estimate: MomentEstimate, eps: float, d: int) -> float:
    """
    P(||(Pi U)^T Pi U - I|| > eps) <= E Tr(Y^(2q)) / eps^(2q) = d * (root / eps)^(2q).
    """
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    try:
        bound = d * (estimate.root / eps) ** (2 * estimate.q)
    except OverflowError:
        return 1.0
    return min(1.0, bound)
