import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FROZEN, birth_model, bundled
from fptbound.constraints import FptSystem, constraint_set, martingale_constraint
from fptbound.model import FptQuery, parse_model
from fptbound.ssa import (
    HAVE_NUMBA,
    IntegralKey,
    constraint_residuals,
    empirical_cdf,
    estimate_mean,
    integral_keys_for,
    martingale_residual,
    mean_fpt,
    pilot_scales,
    simulate_fpt,
    trajectory_keys,
    wilson_interval,
)

BIRTH_T1 = "query { threshold A >= 2; horizon 1; order 2; }"


def within(est, tol_se=4.0, floor=1e-12):
    return abs(est.mean) <= tol_se * est.std_error + floor


def test_pure_birth_mean():
    m, q = birth_model()
    est = mean_fpt(simulate_fpt(m, q, 100_000, seed=1))
    assert est.contains(FROZEN["pure_birth_mfpt"])
    assert est.half_width < 0.02


def test_model2_mean_matches_reference():
    m, q = bundled("model2_parallel")
    est = mean_fpt(simulate_fpt(m, q, 10_000, seed=1))
    assert est.contains(0.028378)
    assert est.contains(FROZEN["model2_mfpt_inf"])


def test_model3_mean_against_exact_chain():
    m, q = bundled("model3_gene_expression")
    est = mean_fpt(simulate_fpt(m, q, 20_000, seed=2))
    assert est.contains(FROZEN["model3_mfpt_T20"])


def test_samples_respect_horizon_and_threshold():
    m, q = bundled("model1_dimerization")
    s = simulate_fpt(m, q, 2_000, seed=3)
    assert np.all(s.tau <= q.horizon)
    d = m.index("D")
    hit = s.hit_index >= 0
    assert np.all(s.final[hit, d] == 5)
    assert np.all(s.final[~hit, d] < 5)
    assert np.all(s.tau[~hit] == q.horizon)
    first = s[0]
    assert first.hit in ("D", "horizon") and len(first.final_state) == 2


def test_reproducible():
    m, q = bundled("model3_gene_expression")
    a = simulate_fpt(m, q, 500, seed=9)
    b = simulate_fpt(m, q, 500, seed=9)
    c = simulate_fpt(m, q, 500, seed=10)
    assert np.array_equal(a.tau, b.tau) and np.array_equal(a.final, b.final)
    assert not np.array_equal(a.tau, c.tau)


def test_trajectory_streams_are_prefix_stable():
    assert np.array_equal(trajectory_keys(5, 10), trajectory_keys(5, 20)[:10])


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
def test_backends_agree():
    m, q = bundled("model3_gene_expression")
    keys = [IntegralKey(1, (2, 0, 0), (1, 0)), IntegralKey(0, (1, 0, 0), None)]
    a = simulate_fpt(m, q, 300, seed=4, integrals=keys, backend="numba")
    b = simulate_fpt(m, q, 300, seed=4, integrals=keys, backend="numpy")
    assert np.array_equal(a.hit_index, b.hit_index) and np.array_equal(a.final, b.final)
    assert np.allclose(a.tau, b.tau, rtol=1e-12, atol=1e-14)
    assert np.allclose(a.integrals, b.integrals, rtol=1e-10, atol=1e-12)


def test_bad_arguments():
    m, q = birth_model()
    with pytest.raises(ValueError):
        simulate_fpt(m, q, 5, backend="fortran")
    with pytest.raises(ValueError):
        simulate_fpt(m, q, 0)


# -- CDF and intervals ----------------------------------------------------------


def test_cdf_pure_birth():
    m, q = birth_model(BIRTH_T1)
    s = simulate_fpt(m, q, 100_000, seed=5)
    (pt,) = empirical_cdf(s, [1.0])
    assert pt.low <= FROZEN["pure_birth_hit_T1"] <= pt.high
    assert empirical_cdf(s, [0.0])[0].p == 0.0


def test_cdf_all_hit():
    m, q = birth_model("query { threshold A >= 1; horizon 1000; order 2; }")
    s = simulate_fpt(m, q, 200, seed=5)
    assert s.hit_any.all()
    late = float(s.tau.max()) * 1.01
    assert [p.p for p in empirical_cdf(s, [late, 2 * late])] == [1.0, 1.0]


def test_cdf_monotone_and_matches_exact_chain():
    m, _ = bundled("model1_dimerization")
    q = FptQuery((("M", 25),), 4.0)
    s = simulate_fpt(m, q, 5_000, seed=6)
    pts = empirical_cdf(s, FROZEN["model1_m25_grid"])
    ps = [p.p for p in pts]
    assert ps == sorted(ps)
    for p, exact in zip(pts, FROZEN["model1_m25_hitprob"]):
        assert p.low <= exact <= p.high


def test_cdf_rejects_grid_past_horizon():
    m, q = birth_model(BIRTH_T1)
    s = simulate_fpt(m, q, 10, seed=0)
    with pytest.raises(ValueError):
        empirical_cdf(s, [2.0])


def test_wilson_known_values():
    lo, hi = wilson_interval(0, 10, 0.95)
    assert lo == 0.0 and 0.25 < hi < 0.35
    lo, hi = wilson_interval(50, 100, 0.95)
    assert abs((lo + hi) / 2 - 0.5) < 1e-12 and abs(hi - 0.5960) < 1e-3


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 200), st.integers(1, 200))
def test_wilson_contains_point_estimate(k, n):
    k = min(k, n)
    lo, hi = wilson_interval(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


def test_estimate_mean_t_interval():
    est = estimate_mean(np.array([1.0, 2.0, 3.0, 4.0]), 0.95)
    assert est.mean == 2.5
    assert abs(est.half_width - 3.182446 * math.sqrt(5 / 3) / 2) < 1e-5
    with pytest.raises(ValueError):
        estimate_mean(np.array([1.0]))


# -- martingale residuals -----------------------------------------------------------


def test_residual_identity_is_exact():
    for stem in ("model1_dimerization", "model3_gene_expression"):
        m, q = bundled(stem)
        system = FptSystem(m, q)
        cons = [martingale_constraint(system, q, (0,) * system.npop, 1, mode=y) for y in system.modes]
        keys = integral_keys_for(system, [v for c in cons for v, _ in c.terms])
        samples = simulate_fpt(system.model, q, 1_000, seed=7, integrals=keys)
        # switching terms cancel across modes, leaving T 1[tau=T] + tau 1[tau<T] - tau per sample
        total = sum(constraint_residuals(system, c, samples) for c in cons)
        assert np.max(np.abs(total)) < 1e-12 * q.horizon


def test_residual_model1_m1_k1():
    m, q = bundled("model1_dimerization")
    assert within(martingale_residual(m, q, (1, 0), 1, 10_000, seed=8))


def test_residual_pure_birth_wald():
    m, q = birth_model(BIRTH_T1)
    assert within(martingale_residual(m, q, (1,), 0, 20_000, seed=9))


@pytest.mark.parametrize("stem", ["model1_dimerization", "model3_gene_expression"])
def test_every_constraint_has_zero_residual(stem):
    m, q = bundled(stem)
    system = FptSystem(m, q)
    cons = constraint_set(system, q, order=2)
    variables = {v for c in cons for v, _ in c.terms}
    keys = integral_keys_for(system, variables)
    samples = simulate_fpt(system.model, q, 10_000, seed=12, integrals=keys)
    for c in cons:
        est = estimate_mean(constraint_residuals(system, c, samples))
        size = max(abs(float(k)) for _, k in c.terms)
        assert within(est, floor=1e-12 * size), c.to_string()


# -- misc -----------------------------------------------------------------------------


def test_pilot_scale_for_unthresholded_species():
    m, q = bundled("model1_dimerization")
    scales = pilot_scales(m, q)
    assert set(scales) == {"M"} and 20 < scales["M"] < 60


def test_csv_dump():
    m, q = birth_model(BIRTH_T1)
    s = simulate_fpt(m, q, 4, seed=0)
    buf = io.StringIO()
    s.write_csv(buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "trajectory,tau,hit,final_A" and len(lines) == 5
    for line, tau in zip(lines[1:], s.tau):
        assert float(line.split(",")[1]) == tau


def test_stuck_trajectories_are_reported():
    stuck = parse_model("species A B\ninit B=1\nreaction B -> A @ 1\n")
    q = FptQuery((("A", 3),), float("inf"))
    s = simulate_fpt(stuck, q, 50, seed=0)
    assert s.n_diverged == 50 and s.warnings()
    with pytest.raises(ValueError):
        mean_fpt(s)
