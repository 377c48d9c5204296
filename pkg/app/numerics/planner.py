"""
Closed-form parameter prescriptions for sparse subspace embeddings.

All logarithms are natural. The absolute constants of the bounds are not known; they default to 1.0
and are meant to be calibrated empirically with the verification sweeps.
"""
import logging
import math
from enum import Enum
from typing import List, Optional, Tuple, Union

import pydantic

from app.services.errors import ParameterError


logger = logging.getLogger(__name__)


class PlanMode(str, Enum):
    THEOREM = "theorem12"
    BASIC = "cor_basic"
    SUBPOLYLOG = "cor_subpolylog"


class EpsExponent(str, Enum):
    # Denominator d in the epsilon power 1 + 1/d
    LOG = "log"
    Q = "q"
    TWO_Q_MINUS_ONE = "two_q_minus_one"


class PlanConstants(pydantic.BaseModel):
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    c_basic1: float = 1.0
    c_basic2: float = 1.0
    c_subpoly1: float = 1.0
    c_subpoly2: float = 1.0

    @pydantic.root_validator(skip_on_failure=True)
    def validate_positive(cls, values):
        for name, value in values.items():
            if not value > 0:
                raise ParameterError(f"Constant {name} must be positive, got {value}")
        return values


class PlanInputs(pydantic.BaseModel):
    d: int
    n: Optional[int] = None
    eps: float
    delta: float
    k: Union[int, str] = "auto"
    theta: Union[float, str] = "auto"
    constants: PlanConstants = PlanConstants()
    eps_exponent: EpsExponent = EpsExponent.LOG

    @pydantic.root_validator(skip_on_failure=True)
    def validate_ranges(cls, values):
        if not 0 < values["eps"] < 1:
            raise ParameterError(f"eps must lie in (0, 1), got {values['eps']}")
        if not 0 < values["delta"] < 1:
            raise ParameterError(f"delta must lie in (0, 1), got {values['delta']}")
        if values["d"] < 1 or values["n"] is not None and values["n"] < 1:
            raise ParameterError(f"d and n must be positive, got d={values['d']}, n={values['n']}")
        k, theta = values["k"], values["theta"]
        if isinstance(k, str) and k != "auto" or isinstance(k, int) and k < 1:
            raise ParameterError(f"k must be a positive integer or 'auto', got {k}")
        if isinstance(theta, str) and theta != "auto" or isinstance(theta, float) and not theta > 0:
            raise ParameterError(f"theta must be a positive real or 'auto', got {theta}")
        return values

    @property
    def q(self) -> float:
        return math.log(self.d / self.delta)


class BoundTerms(pydantic.BaseModel):
    term_theta_q: float
    term_q52: float
    term_q4: float
    prefactor: float = 1.0
    total: float = 0.0
    precondition_ok: bool = True


class PlanResult(pydantic.BaseModel):
    mode: PlanMode
    d: int
    n: Optional[int]
    eps: float
    delta: float
    q: float
    q_int: int
    m: int
    m_unadjusted: int
    s: int
    s_required: float
    p: float
    K: float
    bound_terms: BoundTerms
    k_used: Optional[int]
    theta_used: float
    warnings: List[str] = []


def h(x: float) -> float:
    return max(math.log(x), 1.0)


def iterated_log_k(d_over_delta: float) -> int:
    if not d_over_delta > 0:
        raise ParameterError(f"d/delta must be positive, got {d_over_delta}")
    value = d_over_delta
    for _ in range(4):
        value = h(value)
    return math.ceil(value + 1)


def compute_K(m: float, d: float, p: float, q: float) -> float:
    return math.sqrt(
        p * max(m, q) * p * max(d, q) + (p * m) ** (1.0 / q) * q * (p * d + q)
    )


def eps_power_denominator(q: float, eps_exponent: EpsExponent = EpsExponent.LOG) -> float:
    if eps_exponent == EpsExponent.Q:
        return float(math.ceil(q))
    if eps_exponent == EpsExponent.TWO_Q_MINUS_ONE:
        return 2.0 * q - 1.0
    return q


def double_exp(x: float) -> float:
    try:
        return math.exp(math.exp(x))
    except OverflowError:
        return math.inf


def theorem_theta_floor(k: int, constants: PlanConstants) -> float:
    return constants.c1 * double_exp(constants.c2 * k) ** 2


def sparsity_lower_bound(
        theta: float,
        k: int,
        q: float,
        eps: float,
        constants: PlanConstants = None,
        eps_exponent: EpsExponent = EpsExponent.LOG,
) -> Tuple[float, BoundTerms]:
    """
    Required sparsity pm:
        exp(exp(c3*k)) * ( eps^-(1+1/den) * (theta*q + q^(5/2) / theta^(k/2-1/4)) + q^4 / theta^(k+1/2) )
    with den = log(d/delta) by default. The three summands are returned separately.
    """
    constants = constants or PlanConstants()
    precondition_ok = theta >= theorem_theta_floor(k, constants)
    if not precondition_ok:
        logger.warning(
            f"theta={theta:.6g} is below c1*exp(exp(c2*k))^2 for k={k}; evaluating the bound anyway."
        )
    prefactor = double_exp(constants.c3 * k)
    eps_factor = eps ** -(1.0 + 1.0 / eps_power_denominator(q, eps_exponent))
    terms = BoundTerms(
        term_theta_q=prefactor * eps_factor * theta * q,
        term_q52=prefactor * eps_factor * q ** 2.5 / theta ** (k / 2 - 0.25),
        term_q4=prefactor * q ** 4 / theta ** (k + 0.5),
        prefactor=prefactor,
        precondition_ok=precondition_ok,
    )
    terms.total = terms.term_theta_q + terms.term_q52 + terms.term_q4
    return terms.total, terms


def basic_sparsity_bound(q: float, eps: float, constants: PlanConstants, eps_exponent=EpsExponent.LOG) -> BoundTerms:
    eps_factor = eps ** -(1.0 + 1.0 / eps_power_denominator(q, eps_exponent))
    terms = BoundTerms(
        term_theta_q=0.0,
        term_q52=constants.c_basic2 * q ** 2.5 * eps_factor,
        term_q4=constants.c_basic2 * q ** 4,
    )
    terms.total = terms.term_q52 + terms.term_q4
    return terms


def subpolylog_growth(q: float, k: int) -> float:
    return q ** (5.0 / (k - 0.5))


def subpolylog_theta(q: float, k: int, constants: PlanConstants) -> float:
    return constants.c_subpoly1 * subpolylog_growth(q, k)


def subpolylog_sparsity_bound(q: float, growth: float, eps: float, constants: PlanConstants, eps_exponent=EpsExponent.LOG) -> BoundTerms:
    # growth is q^(5/(k-1/2)), or the explicit theta when one is given
    eps_factor = eps ** -(1.0 + 1.0 / eps_power_denominator(q, eps_exponent))
    terms = BoundTerms(
        term_theta_q=constants.c_subpoly2 * growth * q * eps_factor,
        term_q52=0.0,
        term_q4=0.0,
    )
    terms.total = terms.term_theta_q
    return terms


def plan(inputs: PlanInputs, mode: PlanMode = PlanMode.BASIC) -> PlanResult:
    mode = PlanMode(mode)
    constants = inputs.constants
    q = inputs.q
    if q <= 0:
        raise ParameterError(f"log(d/delta) must be positive, got {q}")
    warnings = []
    k_used = None
    if mode != PlanMode.BASIC:
        k_used = iterated_log_k(inputs.d / inputs.delta) if inputs.k == "auto" else int(inputs.k)

    if mode == PlanMode.BASIC:
        if inputs.k != "auto" or inputs.theta != "auto":
            warnings.append("cor_basic ignores k and theta; set c_basic1 to scale m")
        theta = constants.c_basic1
        terms = basic_sparsity_bound(q, inputs.eps, constants, inputs.eps_exponent)
    elif mode == PlanMode.SUBPOLYLOG:
        if inputs.theta == "auto":
            theta, growth = subpolylog_theta(q, k_used, constants), subpolylog_growth(q, k_used)
        else:
            theta = growth = float(inputs.theta)
        terms = subpolylog_sparsity_bound(q, growth, inputs.eps, constants, inputs.eps_exponent)
    else:
        if inputs.d <= 10:
            warnings.append(f"d={inputs.d} violates the d > 10 precondition")
        theta = subpolylog_theta(q, k_used, constants) if inputs.theta == "auto" else float(inputs.theta)
        _, terms = sparsity_lower_bound(theta, k_used, q, inputs.eps, constants, inputs.eps_exponent)
        if not terms.precondition_ok:
            warnings.append(f"theta={theta:.6g} is below the required floor {theorem_theta_floor(k_used, constants):.6g}")

    if not math.isfinite(terms.total) or not math.isfinite(theta):
        raise ParameterError(f"The sparsity bound overflows for k={k_used}; lower k or the constants")
    m_unadjusted = math.ceil(theta * (inputs.d + q) / inputs.eps ** 2)
    m = max(m_unadjusted, inputs.d)
    s = min(max(math.ceil(terms.total), 1), m)
    if s < terms.total:
        warnings.append(f"Required sparsity {terms.total:.6g} exceeds m={m}; clamped to s=m")
    if m % s:
        # Larger m only helps, so repair divisibility upward
        m = (m // s + 1) * s
    if inputs.n is not None and m > inputs.n:
        warnings.append(f"Embedding dimension m={m} exceeds n={inputs.n}")
    for message in warnings:
        logger.warning(message)

    p = s / m
    return PlanResult(
        mode=mode,
        d=inputs.d,
        n=inputs.n,
        eps=inputs.eps,
        delta=inputs.delta,
        q=q,
        q_int=math.ceil(q),
        m=m,
        m_unadjusted=m_unadjusted,
        s=s,
        s_required=terms.total,
        p=p,
        K=compute_K(m, inputs.d, p, q),
        bound_terms=terms,
        k_used=k_used,
        theta_used=theta,
        warnings=warnings,
    )
