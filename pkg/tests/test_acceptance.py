"""Acceptance criteria 1-13, each printed as one PASS/FAIL line in the terminal summary."""

import math

import numpy as np
import pytest

from diamond_polymer import experiments as ex
from diamond_polymer import mc_engine as mc
from diamond_polymer import variance_map as vm
from diamond_polymer.disorder import GAUSSIAN, rho0
from diamond_polymer.lattice import LatticeParams
from diamond_polymer.variance_map import MapParams, ScalingSchedule

P2 = MapParams(2)
criterion = pytest.mark.criterion


def gaussian_rho(beta):
    return rho0(GAUSSIAN, beta)


@criterion(1, "subcritical variance limit")
def test_subcritical_variance_limit(note):
    limit = 1.0 / (1.0 - 1.0 / vm.kappa(2) ** 2)
    assert limit == pytest.approx(2.0, rel=1e-15)
    errors = []
    for n in [10**4, 10**5, 10**6]:
        value, _ = vm.iterate_final(P2, gaussian_rho(1.0 / math.sqrt(n)), n)
        errors.append(abs(n * value - limit) / limit)
        note(f"n={n}: {n * value:.7f}")
    assert errors[-1] < 0.02
    assert errors[0] > errors[1] > errors[2]


@criterion(2, "supercritical blowup")
def test_supercritical_blowup(note):
    n = 10**6
    beta_hat = 1.1 * vm.kappa(2)
    hit = vm.first_exceedance(P2, gaussian_rho(beta_hat / math.sqrt(n)), n, 1e3)
    note(f"exceeds 1e3 at step {hit}")
    assert hit is not None and hit <= n


@criterion(3, "nested critical limit")
def test_nested_critical_limit(note):
    sched = ScalingSchedule(2, 1, 0.5)
    target = vm.upsilon(2, 0.5)
    assert target == 4.0
    errors = []
    for n in [10**4, 10**5, 10**6, 10**7]:
        value, _ = vm.iterate_final(P2, gaussian_rho(sched.beta(n)), n)
        scaled = vm.ell(float(n)) * value
        errors.append(abs(scaled - target) / target)
        note(f"n={n}: {scaled:.4f}")
    assert errors[-1] < 0.25
    assert all(a > b for a, b in zip(errors, errors[1:]))


@criterion(4, "nested blowup past eta")
def test_nested_blowup(note):
    sched = ScalingSchedule(2, 1, 2 * vm.eta(2))
    hits = []
    for n in [10, 10**2, 10**3, 10**4, 10**5, 10**6, 10**7 - 1]:
        x0 = gaussian_rho(sched.beta(n))
        if vm.first_exceedance(P2, x0, n, 1e3) is not None:
            hits.append(n)
    note(f"variance above 1e3 at n in {hits}")
    assert hits and min(hits) < 10**7


@criterion(5, "critical identity")
def test_critical_identity(note):
    worst = 0.0
    for b in [2, 3]:
        for m in [1, 2]:
            for n in [10**2, 10**3, 10**4, 10**5, 10**6]:
                at_eta = ScalingSchedule(b, m, vm.eta(b)).beta(n)
                next_zero = ScalingSchedule(b, m + 1, 0.0).beta(n)
                worst = max(worst, abs(at_eta - next_zero) / next_zero)
    note(f"max relative difference {worst:.1e}")
    assert worst <= 1e-14


@criterion(6, "pool variance vs map, 15 levels")
def test_pool_matches_map(note):
    params = LatticeParams(2, 2, 0)
    beta = 0.5
    pools = mc.evolve_pool(params, GAUSSIAN, beta, 15, 10**6, mc.RngSpec(20240601))
    tracker = mc.MomentTracker(2, 2)
    x = gaussian_rho(beta)
    worst_z, worst_level, first_bad = 0.0, 0, None
    for pool in pools:
        est = tracker.update(pool)
        z = (est.central[0] - x) / est.se[0]
        if abs(z) > abs(worst_z):
            worst_z, worst_level = z, pool.level
        if abs(z) > 4 and first_bad is None:
            first_bad = pool.level
            note(f"first miss at level {pool.level}: exact {x:.4g} pool {est.central[0]:.4g} z={z:.1f}")
        x = vm.var_map(P2, x)
    note(f"worst z={worst_z:.3g} at level {worst_level}")
    assert abs(worst_z) <= 4


@criterion(7, "enumeration vs recursion")
def test_enumeration_consistency(note):
    worst = 0.0
    for n in [1, 2, 3]:
        res = ex.enumeration_oracle(LatticeParams(2, 2, n), GAUSSIAN, 0.8, 1000, mc.RngSpec(7, (n,)))
        worst = max(worst, res["max_relative_difference"])
    note(f"max relative difference {worst:.1e}")
    assert worst <= 1e-10


@criterion(8, "exact-sampler variance")
def test_exact_sampler_variance(note):
    expected = vm.var_map(P2, vm.var_map(P2, gaussian_rho(0.5)))
    assert expected == pytest.approx(0.37696555, abs=1e-7)
    w = mc.exact_sample_W_batch(LatticeParams(2, 2, 2), GAUSSIAN, 0.5, 10**5, mc.RngSpec(8))
    d = w - w.mean()
    var = np.mean(d**2) * len(w) / (len(w) - 1)
    se = math.sqrt((np.mean(d**4) - np.mean(d**2) ** 2) / len(w))
    note(f"sample {var:.5f} vs {expected:.5f}, z={(var - expected) / se:.2f}")
    assert abs(var - expected) <= 4 * se


@criterion(9, "fourth-moment boundedness")
def test_fourth_moment_bounded(note):
    sched = ScalingSchedule(2, 1, 0.5)
    fitted = ex.fourth_moment_sup(2, GAUSSIAN, sched, 100)
    later = ex.fourth_moment_sup(2, GAUSSIAN, sched, 1000)
    note(f"C fitted at n=100: {fitted:.4g}; sup at n=1000: {later:.4g}")
    assert math.isfinite(fitted)
    assert later <= 1.1 * fitted


@criterion(10, "CLT shape from the pool")
def test_clt_shape_pool(note):
    params = LatticeParams(2, 2, 0)
    sched = ScalingSchedule(2, 1, 0.5)
    stats = []
    for n in [10**2, 10**3, 10**4]:
        _, st = ex.clt_run(params, GAUSSIAN, sched, n, 10**5, mc.RngSpec(10, (n,)))
        stats.append(st)
        note(f"n={n}: var {st.variance:.3f} skew {st.skewness:.3f} kurt {st.excess_kurtosis:.3f}")
    skew = [abs(s.skewness) for s in stats]
    kurt = [abs(s.excess_kurtosis) for s in stats]
    assert abs(stats[-1].variance - 4.0) <= 0.25 * 4.0
    assert skew[0] > skew[1] > skew[2]
    assert kurt[0] > kurt[1] > kurt[2]


def test_clt_shape_deterministic():
    # same shape criteria on exact moments of W_n, free of pool noise
    sched = ScalingSchedule(2, 1, 0.5)
    shapes = [ex.deterministic_shape(2, GAUSSIAN, sched, n) for n in [10**2, 10**3, 10**4]]
    assert abs(shapes[-1]["scaled_variance"] - 4.0) <= 0.25 * 4.0
    for key in ["skewness", "excess_kurtosis"]:
        vals = [abs(s[key]) for s in shapes]
        assert vals[0] > vals[1] > vals[2]


def _bisection_pc(b, s):
    lo, hi = 1e-9, 1.0 - 1e-12
    f = lambda p: 1.0 - (1.0 - p**s) ** b - p  # noqa: E731
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@criterion(11, "percolation fixed point")
def test_percolation_fixed_point(note):
    pc = vm.percolation_pc(2, 2)
    oracle = _bisection_pc(2, 2)
    note(f"pc={pc:.10f} oracle={oracle:.10f}")
    assert abs(pc - oracle) <= 1e-6
    assert abs(pc - 0.6180340) <= 1e-6


@criterion(12, "free-energy gap")
def test_free_energy_gap(note):
    params = LatticeParams(2, 2, 0)
    est = mc.free_energy_profile(params, GAUSSIAN, 0.6, 8, 10**5, mc.RngSpec(12))
    est = [e for e in est if e.n >= 2]
    note("gap " + " ".join(f"{e.gap:.4g}" for e in est))
    for e in est:
        assert e.gap >= -4 * e.se
    for a, c in zip(est, est[1:]):
        assert c.gap <= a.gap + 4 * math.hypot(a.se, c.se)
    zero = mc.free_energy_profile(params, GAUSSIAN, 0.0, 8, 1000, mc.RngSpec(12))
    assert all(e.gap == 0.0 for e in zero)
    gamma = vm.gamma_level(2, 0.5, 0.0, 1)
    spot = mc.free_energy_profile(params, GAUSSIAN, 0.5, gamma, 10**5, mc.RngSpec(13))[-1]
    bound = 2.0**-gamma * 1e3
    note(f"gap at n=gamma={gamma}: {spot.gap:.3g} <= {bound:.3g}")
    assert spot.gap <= bound


@criterion(13, "iterated-map trend suite")
def test_induction_step_trends(note):
    b = 2
    k2, e = vm.kappa(b) ** 2, vm.eta(b)
    lam_c, lam = 1.0, 0.5
    pts = [ex.induction_step_point(b, N, lam_c, lam, 0.5) for N in [10**3, 10**4, 10**5, 10**6, 10**7]]
    fitted = {
        "i": [(p.at_critical - k2 / e) * p.ell_N for p in pts],
        "ii": [(p.at_subcritical - k2 / (lam_c - lam)) * p.N for p in pts],
        "iii": [max(p.past_critical, 1 / p.past_critical) for p in pts],
        "iv": [p.derivative_constant for p in pts],
    }
    for part, vals in fitted.items():
        mags = [abs(v) for v in vals]
        note(f"({part}) {min(vals):.3g}..{max(vals):.3g}")
        assert all(math.isfinite(v) and v != 0 for v in vals)
        assert max(mags) / min(mags) < 2.0
