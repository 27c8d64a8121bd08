"""Edge disorder laws with mean 0, variance 1 and finite exponential moments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

_LOG2 = math.log(2.0)

KINDS = ("gaussian", "rademacher", "twopoint")


@dataclass(frozen=True)
class DisorderModel:
    """One of three standardized disorder families.

    ``twopoint`` takes the value sqrt((1-p)/p) with probability p and
    -sqrt(p/(1-p)) otherwise, which has mean 0, variance 1 and third moment
    (1-2p)/sqrt(p(1-p)).
    """

    kind: str
    p: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown disorder kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "twopoint":
            if self.p is None or not (0.0 < self.p < 1.0):
                raise ValueError(f"twopoint disorder needs p in (0, 1), got {self.p!r}")
        elif self.p is not None:
            raise ValueError(f"{self.kind} disorder takes no parameter")

    @property
    def support(self) -> tuple[float, float] | None:
        if self.kind == "rademacher":
            return (1.0, -1.0)
        if self.kind == "twopoint":
            p = self.p
            return (math.sqrt((1 - p) / p), -math.sqrt(p / (1 - p)))
        return None

    def spec(self) -> str:
        """Inverse of :func:`parse_disorder`."""
        if self.kind == "twopoint":
            return f"twopoint:p={self.p!r}"
        return self.kind


GAUSSIAN = DisorderModel("gaussian")
RADEMACHER = DisorderModel("rademacher")


def parse_disorder(text: str) -> DisorderModel:
    """Parse ``gaussian``, ``rademacher`` or ``twopoint:p=<real>``."""
    text = text.strip().lower()
    if text in ("gaussian", "rademacher"):
        return DisorderModel(text)
    if text.startswith("twopoint"):
        _, sep, rest = text.partition(":")
        key, eq, value = rest.partition("=")
        if not sep or not eq or key.strip() != "p":
            raise ValueError(f"expected twopoint:p=<real>, got {text!r}")
        return DisorderModel("twopoint", float(value))
    raise ValueError(f"unknown disorder {text!r}")


def _log_cosh(x: float) -> float:
    ax = abs(x)
    if ax < 1.0:
        # cosh x - 1 = 2 sinh^2(x/2) keeps full relative accuracy near 0
        return math.log1p(2.0 * math.sinh(0.5 * ax) ** 2)
    return ax + math.log1p(math.exp(-2.0 * ax)) - _LOG2


def _bernoulli_cumulant_polys(order: int) -> list[Polynomial]:
    """kappa_k(p) of a Bernoulli(p) variable, via kappa_{k+1} = p(1-p) kappa_k'."""
    polys = [Polynomial([0.0, 1.0])]
    w = Polynomial([0.0, 1.0, -1.0])
    for _ in range(order - 1):
        polys.append(w * polys[-1].deriv())
    return polys


_SERIES_ORDER = 24
_CUMULANTS = _bernoulli_cumulant_polys(_SERIES_ORDER)


def _centered_bernoulli_cgf(p: float, x: float) -> float:
    """log E[exp(x (B - p))] for B ~ Bernoulli(p).

    The closed form subtracts two O(x) quantities to leave an O(x^2) result,
    so small |x| uses the cumulant series instead.
    """
    if abs(x) <= 1.0:
        terms = [
            _CUMULANTS[k - 1](p) * x**k / math.factorial(k)
            for k in range(_SERIES_ORDER, 1, -1)
        ]
        return math.fsum(terms)
    if x > 0:
        return x * (1.0 - p) + math.log(p + (1.0 - p) * math.exp(-x))
    return math.log1p(p * math.expm1(x)) - p * x


def log_mgf(model: DisorderModel, beta: float) -> float:
    """lambda(beta) = log E[exp(beta * omega)], in closed form."""
    if not math.isfinite(beta):
        raise ValueError(f"beta must be finite, got {beta}")
    if model.kind == "gaussian":
        return 0.5 * beta * beta
    if model.kind == "rademacher":
        return _log_cosh(beta)
    # omega = (hi - lo)(B - p) with B ~ Bernoulli(p)
    hi, lo = model.support
    return _centered_bernoulli_cgf(model.p, beta * (hi - lo))


def normalized_weight(model: DisorderModel, beta: float, omega):
    """exp(beta*omega - lambda(beta)); accepts scalars or arrays."""
    lam = log_mgf(model, beta)
    if np.ndim(omega) == 0:
        return math.exp(beta * float(omega) - lam)
    return np.exp(beta * np.asarray(omega, dtype=float) - lam)


def rho0(model: DisorderModel, beta: float) -> float:
    """Var(W_0(beta)) = exp(lambda(2 beta) - 2 lambda(beta)) - 1."""
    return math.expm1(log_mgf(model, 2.0 * beta) - 2.0 * log_mgf(model, beta))


def third_moment(model: DisorderModel) -> float:
    if model.kind == "twopoint":
        p = model.p
        return (1.0 - 2.0 * p) / math.sqrt(p * (1.0 - p))
    return 0.0


def w0_raw_moment(model: DisorderModel, beta: float, r: int) -> float:
    if r < 1:
        raise ValueError(f"moment order must be >= 1, got {r}")
    if r == 1:
        return 1.0
    return math.exp(log_mgf(model, r * beta) - r * log_mgf(model, beta))


def w0_central_moments(model: DisorderModel, beta: float, rmax: int = 4) -> list[float]:
    """E[(W_0 - 1)^r] for r = 0..rmax.

    Written as sum_t C(r,t) (-1)^(r-t) expm1(lambda(t beta) - t lambda(beta)),
    which drops the O(1) terms that cancel exactly and keeps accuracy when
    beta is small.
    """
    lam = log_mgf(model, beta)
    d = [math.expm1(log_mgf(model, t * beta) - t * lam) for t in range(rmax + 1)]
    out = [1.0]
    for r in range(1, rmax + 1):
        terms = [math.comb(r, t) * (-1) ** (r - t) * d[t] for t in range(r + 1)]
        out.append(math.fsum(terms))
    out[1] = 0.0
    return out


def sample(model: DisorderModel, rng: np.random.Generator, size=None):
    """Draw omega; returns a float when ``size`` is None, else an array."""
    if model.kind == "gaussian":
        x = rng.standard_normal(size)
    else:
        hi, lo = model.support
        q = 0.5 if model.kind == "rademacher" else model.p
        x = np.where(rng.random(size) < q, hi, lo)
    if size is None:
        return float(x)
    return x
