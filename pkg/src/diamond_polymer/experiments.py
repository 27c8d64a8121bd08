"""Experiment drivers shared by the command line and the acceptance suite."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import disorder as dis
from . import lattice as lat
from . import mc_engine as mc
from . import variance_map as vm
from .disorder import DisorderModel
from .lattice import LatticeParams
from .variance_map import MapParams, ScalingSchedule


def lattice_info(params: LatticeParams) -> dict:
    return {
        "edges": str(lat.edge_count(params)),
        "paths": str(lat.path_count(params)),
        "log10_paths": lat.log10_path_count(params),
        "expected_shared_edges": lat.expected_shared_edges(params),
    }


def schedule_scale(schedule: ScalingSchedule, n: int) -> tuple[float, float]:
    """(ell^{m*}_n, predicted limit) with m* from the critical identity.

    Above eta_b there is no Gaussian limit: the scale uses ell^m_n and the
    predicted limit is +inf.
    """
    try:
        m_star, limit = vm.predicted_limit(schedule)
    except vm.DomainError:
        return vm.ell_m(float(n), schedule.m), math.inf
    return vm.ell_m(float(n), m_star), limit


def variance_table(
    b: int, model: DisorderModel, schedule: ScalingSchedule, n_list
) -> list[dict]:
    """Deterministic Var(W_n) along a schedule, one row per n."""
    p = MapParams(b)
    rows = []
    for n in n_list:
        beta = vm.beta_schedule(schedule, n)
        rho_n, _ = vm.iterate_final(p, dis.rho0(model, beta), n)
        ell_n, limit = schedule_scale(schedule, n)
        rows.append(
            {
                "n": n,
                "beta": beta,
                "rho_n": rho_n,
                "ell_m_n": ell_n,
                "scaled_variance": ell_n * rho_n,
                "predicted_limit": limit,
            }
        )
    return rows


def schedule_table(schedule: ScalingSchedule, model: DisorderModel, n_list) -> list[dict]:
    rows = []
    for n in n_list:
        beta = vm.beta_schedule(schedule, n)
        rows.append({"n": n, "beta": beta, "rho0": dis.rho0(model, beta)})
    return rows


def pool_table(
    params: LatticeParams,
    model: DisorderModel,
    beta: float,
    levels: int,
    size: int,
    rng: mc.RngSpec,
    workers: int = 1,
) -> list[dict]:
    """Per-level summaries; ``se_variance`` includes error inherited from earlier levels."""
    tracker = mc.MomentTracker(params.b, params.s)
    rows = []
    for pool in mc.evolve_pool(params, model, beta, levels, size, rng, workers):
        row = dict(mc.summarize_pool(pool).__dict__)
        row["se_variance"] = float(tracker.update(pool).se[0])
        rows.append(row)
    return rows


def clt_run(
    params: LatticeParams,
    model: DisorderModel,
    schedule: ScalingSchedule,
    n: int,
    size: int,
    rng: mc.RngSpec,
    workers: int = 1,
) -> tuple[np.ndarray, mc.FluctuationStats]:
    """Pool the law of W_n at beta^{(m)}_{n,eps} and return sqrt(ell^{m*}_n)(W_n - 1)."""
    m_star, _ = vm.predicted_limit(schedule)
    scale = math.sqrt(vm.ell_m(float(n), m_star))
    beta = vm.beta_schedule(schedule, n)
    pool = None
    for pool in mc.evolve_pool(params, model, beta, n, size, rng, workers):
        pass
    return scale * pool.deviations(), mc.fluct_stats(pool, scale)


def deterministic_shape(
    b: int, model: DisorderModel, schedule: ScalingSchedule, n: int
) -> dict:
    """Exact variance, skewness and excess kurtosis of the scaled W_n from the moment recursion."""
    beta = vm.beta_schedule(schedule, n)
    c0 = dis.w0_central_moments(model, beta)
    traj = vm.moment_recursion(MapParams(b), c0[2:], n, central=True)
    r2, r3, r4 = traj.central[-1]
    ell_n, _ = schedule_scale(schedule, n)
    return {
        "scaled_variance": ell_n * r2,
        "skewness": r3 / r2**1.5,
        "excess_kurtosis": r4 / r2**2 - 3.0,
    }


def enumeration_oracle(
    params: LatticeParams,
    model: DisorderModel,
    beta: float,
    trials: int,
    rng: mc.RngSpec,
    cap: int = lat.DEFAULT_ENUMERATION_CAP,
) -> dict:
    """Compare path-sum and recursive W_n on random disorder assignments."""
    worst = 0.0
    for t in range(trials):
        omega = mc.random_edge_values(params, model, rng.child(t))
        _, w_sum = mc.enumeration_partition(params, model, beta, omega, cap)
        w_rec = mc.recursive_partition(params, model, beta, omega)
        worst = max(worst, abs(w_sum - w_rec) / abs(w_rec))
    return {"trials": trials, "max_relative_difference": worst}


def free_energy_table(
    params: LatticeParams,
    model: DisorderModel,
    beta: float,
    n_max: int,
    size: int,
    rng: mc.RngSpec,
    workers: int = 1,
) -> list[dict]:
    est = mc.free_energy_profile(params, model, beta, n_max, size, rng, workers)
    return [
        {"n": e.n, "lambda": e.lam, "p_hat": e.p_hat, "gap": e.gap + 0.0, "se": e.se}
        for e in est
    ]


# -- asymptotic trend checks for the variance map ------------------------------


@dataclass
class InductionStepPoint:
    """Quantities along M^k(X_N) with X_N = kappa^2/(lambda_c N)."""

    N: int
    ell_N: float
    at_critical: float      # ell_N * M^{floor(lambda_c N)}(X_N)
    at_subcritical: float   # N * M^{floor(lambda N)}(X_N)
    past_critical: float    # ell_N * M^{floor(lambda_c N + eps ell_N)}(X_N)
    derivative_constant: float  # max_k (d/dx M^{alpha-k})(M^k X_N) ell_N^2 (M^k X_N)^2


def induction_step_point(
    b: int, N: int, lambda_c: float = 1.0, lam: float = 0.5, eps: float = 0.5
) -> InductionStepPoint:
    """Walk the orbit of X_N once and record the four induction-step quantities."""
    if not 0 < lam < lambda_c:
        raise ValueError("need 0 < lam < lambda_c")
    if not 0 < eps < vm.eta(b):
        raise ValueError("need 0 < eps < eta_b")
    p = MapParams(b)
    step = vm._stepper(p)
    L = vm.ell(float(N))
    x = vm.kappa(b) ** 2 / (lambda_c * N)
    k_crit = math.floor(lambda_c * N)
    k_sub = math.floor(lam * N)
    alpha = math.floor(lambda_c * N + eps * L)
    # d/dx M^{alpha-k} at x_k = exp(S_alpha - S_k), S_k = sum_{i<k} log M'(x_i)
    log_prime = 0.0
    best = -math.inf
    x_crit = x_sub = math.nan
    for k in range(alpha + 1):
        if k == k_sub:
            x_sub = x
        if k == k_crit:
            x_crit = x
        best = max(best, 2.0 * math.log(x) - log_prime)
        if k < alpha:
            log_prime += (b - 1) * math.log1p(x)
            x = step(x)
    return InductionStepPoint(
        N=N,
        ell_N=L,
        at_critical=L * x_crit,
        at_subcritical=N * x_sub,
        past_critical=L * x,
        derivative_constant=math.exp(log_prime + best + 2.0 * math.log(L)),
    )


def fourth_moment_sup(b: int, model: DisorderModel, schedule: ScalingSchedule, n: int) -> float:
    """max over k <= n of rho_{k,4} / rho_{k,2}^2 at beta^{(m)}_{n,eps}."""
    beta = vm.beta_schedule(schedule, n)
    c0 = dis.w0_central_moments(model, beta)
    traj = vm.moment_recursion(MapParams(b), c0[2:], n, central=True)
    return float(np.max(traj.kurtosis_ratio()))
