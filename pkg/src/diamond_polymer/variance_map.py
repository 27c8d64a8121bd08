"""Deterministic core: the variance map, its variants and iterates, the
critical constants, nested scaling schedules, the moment recursion, the
free-energy depth gamma and the diamond-lattice percolation threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

OVERFLOW_GUARD = 1e300


class DomainError(ValueError):
    pass


class NonConvergenceError(RuntimeError):
    pass


def _check_b(b: int) -> None:
    if isinstance(b, bool) or not isinstance(b, (int, np.integer)) or b < 2:
        raise ValueError(f"b must be an integer >= 2, got {b!r}")


@dataclass(frozen=True)
class MapParams:
    """Branching number of the variance map M(x) = ((1+x)^b - 1)/b."""

    b: int
    # Horner coefficients C(b, k)/b for k = 1..b, highest order first.
    _coeffs: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_b(self.b)
        coeffs = tuple(math.comb(self.b, k) / self.b for k in range(self.b, 0, -1))
        object.__setattr__(self, "_coeffs", coeffs)


# -- constants ---------------------------------------------------------------


def kappa(b: int) -> float:
    _check_b(b)
    return math.sqrt(2.0 / (b - 1))


def eta(b: int) -> float:
    _check_b(b)
    return (b + 1) / (3.0 * (b - 1))


def upsilon(b: int, epsilon: float) -> float:
    """Limiting variance kappa_b^2 / (eta_b - epsilon) for epsilon < eta_b."""
    e = eta(b)
    if epsilon >= e:
        raise DomainError(f"upsilon needs epsilon < eta_b = {e}, got {epsilon}")
    return (2.0 / (b - 1)) / (e - epsilon)


# -- the nested logarithm -----------------------------------------------------


def ell(x: float) -> float:
    """log(1+x) - log(log(1+x)), defined for x > 0 (and then always >= 1)."""
    if not x > 0:
        raise DomainError(f"ell needs x > 0, got {x}")
    y = math.log1p(x)
    return y - math.log(y)


def ell_m(x: float, m: int) -> float:
    """m-fold composition of :func:`ell`; ell_m(x, 0) == x."""
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    value = x
    for k in range(1, m + 1):
        if not value > 0:
            raise DomainError(
                f"ell composition {k} of {m} applied to non-positive value {value}"
            )
        value = ell(value)
    return value


def ell_iterates(x: float, m: int) -> list[float]:
    """[ell^1(x), ..., ell^m(x)]."""
    out = []
    value = x
    for k in range(1, m + 1):
        if not value > 0:
            raise DomainError(f"ell composition {k} of {m} applied to non-positive value {value}")
        value = ell(value)
        out.append(value)
    return out


# -- scaling schedules ---------------------------------------------------------


@dataclass(frozen=True)
class ScalingSchedule:
    b: int
    m: int = 1
    epsilon: float = 0.0
    tau: float = 0.0

    def __post_init__(self):
        _check_b(self.b)
        if isinstance(self.m, bool) or not isinstance(self.m, (int, np.integer)) or self.m < 1:
            raise ValueError(f"m must be an integer >= 1, got {self.m!r}")
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if not math.isfinite(self.tau):
            raise ValueError(f"tau must be finite, got {self.tau}")

    @property
    def is_critical(self) -> bool:
        return self.epsilon == eta(self.b)

    def beta(self, n: int) -> float:
        return beta_schedule(self, n)


def beta_schedule(s: ScalingSchedule, n: int) -> float:
    """Inverse temperature probing the m-th nested critical window at size n.

    kappa/sqrt(n) - tau kappa^2/(2n)
        + kappa/(2 n^1.5) (eta * sum_{k<m} ell^k_n + epsilon * ell^m_n)
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    k = kappa(s.b)
    e = eta(s.b)
    logs = ell_iterates(float(n), s.m)
    # Summing the individual terms with fsum makes (m, eps=eta) and
    # (m+1, eps=0) produce bit-identical results.
    terms = [e * v for v in logs[:-1]]
    terms.append(s.epsilon * logs[-1])
    correction = math.fsum(terms)
    nf = float(n)
    return k / math.sqrt(nf) - s.tau * k * k / (2.0 * nf) + k / (2.0 * nf**1.5) * correction


def predicted_limit(s: ScalingSchedule) -> tuple[int, float]:
    """(m*, v): sqrt(ell^{m*}_n) (W_n - 1) tends to N(0, v) along the schedule."""
    e = eta(s.b)
    if s.epsilon > e:
        raise DomainError(
            f"epsilon = {s.epsilon} > eta_b = {e}: the variance diverges, no Gaussian limit"
        )
    if s.epsilon == e:
        return s.m + 1, upsilon(s.b, 0.0)
    return s.m, upsilon(s.b, s.epsilon)


def gamma_level(b: int, beta: float, tau: float, N: int) -> int:
    """ceil(kappa^2/beta^2 - tau kappa^2/beta + eta * sum_{j<=N} ell^j(1/beta^2))."""
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    k2 = kappa(b) ** 2
    x = 1.0 / (beta * beta)
    total = k2 * x - tau * k2 / beta + eta(b) * math.fsum(ell_iterates(x, N))
    return math.ceil(total)


# -- the variance map ------------------------------------------------------------


def _check_x(x: float) -> None:
    if x < 0 or math.isnan(x):
        raise DomainError(f"variance map needs x >= 0, got {x}")


def var_map(p: MapParams, x: float) -> float:
    """M(x) = ((1+x)^b - 1)/b.

    Evaluated as the polynomial sum_k C(b,k)/b x^k by Horner's rule; all
    coefficients are positive so there is no cancellation for small x.
    """
    _check_x(x)
    acc = 0.0
    for c in p._coeffs:
        acc = (acc + c) * x
    return acc


def var_map_hat(p: MapParams, x: float) -> float:
    _check_x(x)
    return x + 0.5 * (p.b - 1) * x * x


def var_map_tilde(p: MapParams, x: float) -> float:
    _check_x(x)
    b = p.b
    return x + 0.5 * (b - 1) * x * x + (b - 1) * (b - 2) / 6.0 * x**3


def var_map_prime(p: MapParams, x: float) -> float:
    _check_x(x)
    return (1.0 + x) ** (p.b - 1)


@dataclass
class MapTrajectory:
    """Iterates x_0..x_k of M.  Entries from ``diverged_at`` on are +inf."""

    values: np.ndarray
    diverged_at: int | None = None

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None

    @property
    def final(self) -> float:
        return float(self.values[-1])


def _stepper(p: MapParams):
    """Fast scalar M for hot loops (no argument checks)."""
    if p.b == 2:
        return lambda x: x * (1.0 + 0.5 * x)
    coeffs = p._coeffs

    def step(x):
        acc = 0.0
        for c in coeffs:
            acc = (acc + c) * x
        return acc

    return step


def iterate_map(p: MapParams, x0: float, k: int) -> MapTrajectory:
    """[x0, M(x0), ..., M^k(x0)], saturating at OVERFLOW_GUARD."""
    _check_x(x0)
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    values = np.full(k + 1, np.inf)
    step = _stepper(p)
    x = x0
    for i in range(k + 1):
        if x > OVERFLOW_GUARD:
            return MapTrajectory(values, i)
        values[i] = x
        if i < k:
            x = step(x)
    return MapTrajectory(values, None)


def iterate_final(p: MapParams, x0: float, k: int) -> tuple[float, int | None]:
    """M^k(x0) without storing the trajectory.

    Returns (value, diverged_at); value is +inf once the guard is crossed.
    """
    _check_x(x0)
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    step = _stepper(p)
    x = x0
    for i in range(k):
        if x > OVERFLOW_GUARD:
            return math.inf, i
        x = step(x)
    if x > OVERFLOW_GUARD:
        return math.inf, k
    return x, None


def first_exceedance(p: MapParams, x0: float, k: int, threshold: float) -> int | None:
    """Smallest i <= k with M^i(x0) > threshold, or None."""
    _check_x(x0)
    step = _stepper(p)
    x = x0
    for i in range(k + 1):
        if x > threshold:
            return i
        if i < k:
            x = step(x)
    return None


def map_derivative_product(p: MapParams, x0: float, j: int) -> float:
    """d/dx M^j at x0, i.e. prod_{i<j} M'(M^i(x0)) with M'(x) = (1+x)^(b-1)."""
    _check_x(x0)
    if j < 0:
        raise ValueError(f"j must be >= 0, got {j}")
    step = _stepper(p)
    log_sum = 0.0
    x = x0
    for _ in range(j):
        log_sum += math.log1p(x)
        x = step(x)
    return math.exp((p.b - 1) * log_sum)


# -- moment recursion ---------------------------------------------------------


def _raw_to_central(mu: tuple[float, float, float, float]) -> list[float]:
    m1, m2, m3, m4 = mu
    return [1.0, 0.0, m2 - 1.0, m3 - 3.0 * m2 + 2.0, m4 - 4.0 * m3 + 6.0 * m2 - 3.0]


def _central_to_raw(c: list[float]) -> list[float]:
    # moments of 1 + R from those of R (c[1] == 0)
    return [
        1.0,
        1.0 + c[2],
        1.0 + 3.0 * c[2] + c[3],
        1.0 + 6.0 * c[2] + 4.0 * c[3] + c[4],
    ]


def _product_central(cx: list[float], cy: list[float]) -> list[float]:
    """Central moments of XY for independent mean-one X, Y.

    XY - 1 = x(1+y) + y with x = X-1, y = Y-1, so
    E[(XY-1)^r] = sum_t C(r,t) E[x^t] sum_u C(t,u) E[y^(u+r-t)].
    """
    out = [1.0]
    for r in range(1, len(cx)):
        total = []
        for t in range(r + 1):
            if cx[t] == 0.0:
                continue
            inner = math.fsum(math.comb(t, u) * cy[u + r - t] for u in range(t + 1))
            total.append(math.comb(r, t) * cx[t] * inner)
        out.append(math.fsum(total))
    out[1] = 0.0
    return out


def _sum_central(cx: list[float], cy: list[float]) -> list[float]:
    return [
        math.fsum(math.comb(r, t) * cx[t] * cy[r - t] for t in range(r + 1))
        for r in range(len(cx))
    ]


def moment_step(b: int, central: list[float], s: int | None = None) -> list[float]:
    """One level of W' = (1/b) sum_i prod_j W_ij on central moments [1, 0, c2, c3, c4].

    The product runs over ``s`` factors (default ``b``).
    """
    prod = central
    for _ in range((b if s is None else s) - 1):
        prod = _product_central(prod, central)
    acc = prod
    for _ in range(b - 1):
        acc = _sum_central(acc, prod)
    return [acc[r] / float(b) ** r for r in range(len(acc))]


@dataclass
class MomentTrajectory:
    """Moments of W_k for k = 0..K.

    ``raw[k]`` holds (mu_1, mu_2, mu_3, mu_4); ``central[k]`` holds
    (rho_2, rho_3, rho_4), the central moments E[(W_k - 1)^r].
    """

    raw: np.ndarray
    central: np.ndarray

    @property
    def levels(self) -> int:
        return len(self.central) - 1

    def kurtosis_ratio(self) -> np.ndarray:
        """rho_4 / rho_2^2 per level."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.central[:, 2] / self.central[:, 0] ** 2


def moment_recursion(p: MapParams, w0_moments, k: int, central: bool = False) -> MomentTrajectory:
    """Propagate the first four moments of W through k levels of the recursion.

    ``w0_moments`` is (mu_1..mu_4) of W_0, or (rho_2, rho_3, rho_4) when
    ``central`` is true.  The central route avoids the cancellation of
    forming central moments from raw ones when Var(W_0) is small.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if central:
        c2, c3, c4 = (float(v) for v in w0_moments)
        if c2 < 0:
            raise ValueError(f"rho_2 must be >= 0, got {c2}")
        if c4 < c2 * c2 * (1 - 1e-12):
            raise ValueError("rho_4 must be >= rho_2^2")
        c = [1.0, 0.0, c2, c3, c4]
    else:
        mu = tuple(float(v) for v in w0_moments)
        if len(mu) != 4:
            raise ValueError("need the raw moments mu_1..mu_4")
        if abs(mu[0] - 1.0) > 1e-12:
            raise ValueError(f"mu_1 must equal 1, got {mu[0]}")
        if mu[1] < 1.0:
            raise ValueError(f"mu_2 must be >= 1, got {mu[1]}")
        if mu[3] < mu[1] ** 2 * (1 - 1e-12):
            raise ValueError("mu_4 must be >= mu_2^2")
        c = _raw_to_central(mu)
    raw = np.empty((k + 1, 4))
    cen = np.empty((k + 1, 3))
    with np.errstate(invalid="ignore", over="ignore"):
        for level in range(k + 1):
            raw[level] = _central_to_raw(c)
            cen[level] = c[2:]
            if level < k:
                c = moment_step(p.b, c)
    # Order-r moments only feed orders >= r, so an overflowing channel
    # saturates to +inf (as in iterate_map) without touching lower ones.
    for arr in (raw, cen):
        arr[~(np.abs(arr) <= OVERFLOW_GUARD)] = np.inf
    return MomentTrajectory(raw, cen)


# -- percolation --------------------------------------------------------------


def percolation_pc(b: int, s: int, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Nontrivial fixed point of p -> 1 - (1 - p^s)^b in (0, 1), by bisection."""
    _check_b(b)
    if isinstance(s, bool) or not isinstance(s, (int, np.integer)) or s < 2:
        raise ValueError(f"s must be an integer >= 2, got {s!r}")

    def g(q: float) -> float:
        return -math.expm1(b * math.log1p(-(q**s))) - q

    lo, hi = 1e-9, 1.0 - 1e-9
    if not (g(lo) < 0 < g(hi)):
        raise NonConvergenceError("fixed-point function is not bracketed on (0, 1)")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if gm < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * 1e-2:
            mid = 0.5 * (lo + hi)
            if abs(g(mid)) <= tol:
                return mid
    raise NonConvergenceError(f"bisection did not reach tolerance {tol} in {max_iter} steps")
