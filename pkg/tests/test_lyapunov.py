import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from circlekam import GOLDEN, PeriodicMap, RandomEnsemble
from circlekam.circle import CircleDiffeo, conjugate
from circlekam.kam import planted_ensemble
from circlekam.lyapunov import (StationaryHistogram, analytic_lyapunov_order2, lyapunov_order2_forms,
                                mc_lyapunov, mc_stationary, perturbation_size, perturbed_rotations,
                                stationary_density_order1)
from circlekam.periodic import random_trig

from conftest import SILVER, TWO_PI, shape_b


def pm_sine(eps):
    z = PeriodicMap.from_trig(sin=[1.0 / TWO_PI])
    alpha = RandomEnsemble.uniform([GOLDEN, GOLDEN])
    return alpha, perturbed_rotations(alpha, [z, -z], eps)


def test_rotations_have_zero_exponent():
    f = RandomEnsemble.uniform([CircleDiffeo.rotation(GOLDEN), CircleDiffeo.rotation(0.1)])
    est = mc_lyapunov(f, 500, 8, seed=1)
    assert est.value == 0.0 and est.std_error == 0.0


def test_planted_conjugate_zero_exponent():
    h = CircleDiffeo(PeriodicMap.from_trig(sin=[0.05 / TWO_PI]))
    f = planted_ensemble(RandomEnsemble.uniform([GOLDEN, SILVER]), h)
    est = mc_lyapunov(f, 20_000, 40, seed=2)
    assert abs(est.value) <= 3 * est.std_error + 1e-12


def test_pm_sine_matches_order2():
    eps = 0.02
    alpha, f = pm_sine(eps)
    lam2 = analytic_lyapunov_order2(f, alpha)
    est = mc_lyapunov(f, 20_000, 50, seed=3)
    assert abs(est.value - lam2) <= max(3 * est.std_error, 10 * eps ** 3)
    # zbar vanishes, so eta = 0 and lambda2 = -1/2 E int zeta'^2 = -eps^2 / 4
    assert lam2 == pytest.approx(-eps ** 2 / 4, rel=1e-12)


def test_estimators_agree():
    alpha = RandomEnsemble.uniform([GOLDEN, GOLDEN])
    f = perturbed_rotations(alpha, shape_b(), 0.1)
    a = mc_lyapunov(f, 20_000, 40, seed=4, estimator="conditional")
    b = mc_lyapunov(f, 20_000, 40, seed=4, estimator="pathwise")
    assert abs(a.value - b.value) <= 3 * math.hypot(a.std_error, b.std_error)
    assert a.std_error < b.std_error


def test_thread_count_does_not_change_bits():
    alpha = RandomEnsemble.uniform([GOLDEN, SILVER])
    f = perturbed_rotations(alpha, shape_b(), 0.05)
    runs = [mc_lyapunov(f, 3000, 7, seed=5, threads=t) for t in (1, 2, 3)]
    assert len({(r.value.hex(), r.std_error.hex()) for r in runs}) == 1
    hists = [mc_stationary(f, 10, 5000, 64, seed=5, n_chains=7, threads=t).masses for t in (1, 3)]
    assert np.array_equal(hists[0], hists[1])


def test_seed_reproducible_and_sensitive():
    alpha, f = pm_sine(0.05)
    a, b, c = (mc_lyapunov(f, 2000, 8, seed=s) for s in (9, 9, 10))
    assert a == b and a.value != c.value


def test_conjugation_invariance():
    alpha = RandomEnsemble.uniform([GOLDEN, SILVER])
    f = perturbed_rotations(alpha, shape_b(), 0.1)
    h = CircleDiffeo(PeriodicMap.from_trig(sin=[0.1 / TWO_PI], cos=[0.0, 0.02]))
    g = f.map(lambda fi: conjugate(h, fi))
    a, b = mc_lyapunov(f, 20_000, 40, seed=6), mc_lyapunov(g, 20_000, 40, seed=7)
    assert abs(a.value - b.value) <= 3 * (a.std_error + b.std_error)


def test_stationary_uniform_under_rotation():
    f = RandomEnsemble.single(CircleDiffeo.rotation(GOLDEN))
    n, bins = 200_000, 16
    hist = mc_stationary(f, 1, n, bins, seed=1, n_chains=8)
    assert hist.masses.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(hist.masses - 1 / bins)) < 5 * math.sqrt((1 / bins) / n)


def test_stationary_sink():
    # Id + 0.1 sin(2 pi x): 0 repels (slope 1 + 0.2 pi), 1/2 attracts (slope 1 - 0.2 pi)
    f = RandomEnsemble.single(CircleDiffeo(PeriodicMap.from_trig(sin=[0.1])))
    hist = mc_stationary(f, 500, 10_000, 20, seed=1, n_chains=10)
    assert hist.masses[9] + hist.masses[10] > 0.99


def test_histogram_integrate_exact():
    masses = np.array([0.1, 0.2, 0.3, 0.4])
    hist = StationaryHistogram(masses)
    phi = PeriodicMap.from_trig(cos=[1.0], sin=[0.0, 0.5], mean=0.2)
    edges = hist.edges
    # exact bin integrals of the density times phi
    def prim(x):
        return 0.2 * x + np.sin(2 * np.pi * x) / TWO_PI - 0.5 * np.cos(4 * np.pi * x) / (2 * TWO_PI)
    oracle = sum(m * 4 * (prim(b) - prim(a)) for m, a, b in zip(masses, edges[:-1], edges[1:]))
    assert hist.integrate(phi) == pytest.approx(oracle, abs=1e-14)


def test_density_zero_perturbation():
    alpha = RandomEnsemble.uniform([GOLDEN, SILVER])
    f = alpha.map(CircleDiffeo.rotation)
    assert stationary_density_order1(f, alpha).allclose(PeriodicMap.constant(1.0), 0.0)


def test_density_first_order_mc():
    alpha = RandomEnsemble.uniform([GOLDEN / 10] * 2)
    z = [PeriodicMap.from_trig(cos=[-0.1289, 0.0979], sin=[-0.0764, 0.2483]),
         PeriodicMap.from_trig(cos=[-0.0310, -0.1600], sin=[0.3271, 0.0836])]
    f = perturbed_rotations(alpha, z, 0.05)
    cosf = PeriodicMap.from_trig(cos=[1.0])
    h1 = stationary_density_order1(f, alpha)
    hist = mc_stationary(f, 2000, 200_000, 256, seed=11)
    assert abs(hist.integrate(cosf) - h1.integral_against(cosf)) < 10 * 0.05 ** 2


def test_order2_zero():
    alpha = RandomEnsemble.single(GOLDEN)
    assert analytic_lyapunov_order2(alpha.map(CircleDiffeo.rotation), alpha) == 0.0


def test_order2_coboundary_vanishes(rng):
    a = 0.3 + 1e-3 * GOLDEN
    alpha = RandomEnsemble.single(a)
    u = random_trig(rng, 6, 0.01, decay=0.3, mean=False)
    f = perturbed_rotations(alpha, [u.shift(a) - u])
    assert abs(analytic_lyapunov_order2(f, alpha)) < 1e-12


def test_perturbation_size_scales():
    alpha = RandomEnsemble.uniform([GOLDEN, GOLDEN])
    a = perturbation_size(perturbed_rotations(alpha, shape_b(), 0.02), alpha)
    b = perturbation_size(perturbed_rotations(alpha, shape_b(), 0.01), alpha)
    assert a == pytest.approx(2 * b, rel=1e-12)


ensembles = st.builds(
    lambda n, seed: (n, seed), st.integers(1, 3), st.integers(0, 2 ** 32 - 1))


def random_ensemble(n, seed, eps=0.02):
    rng = np.random.default_rng(seed)
    alpha = RandomEnsemble.uniform(list(rng.uniform(0.05, 0.95, n)))
    zetas = [random_trig(rng, 6, 1.0, decay=0.4, mean=False) / (TWO_PI * 6) for _ in range(n)]
    return alpha, perturbed_rotations(alpha, zetas, eps)


@given(ensembles)
def test_order2_forms_sign_and_consistency(spec):
    alpha, f = random_ensemble(*spec)
    direct, fourier = lyapunov_order2_forms(f, alpha, resonance_floor=1e-6)
    assert direct <= 0.0
    assert direct == pytest.approx(fourier, rel=1e-10, abs=1e-18)


@given(ensembles, st.floats(0.1, 3.0))
def test_order2_bilinear(spec, s):
    alpha, f = random_ensemble(*spec)
    zetas = [fi.zeta(a) for fi, a in zip(f.values, alpha.values)]
    g = perturbed_rotations(alpha, zetas, s)
    base = lyapunov_order2_forms(f, alpha, 1e-6)[0]
    assert lyapunov_order2_forms(g, alpha, 1e-6)[0] == pytest.approx(s * s * base, rel=1e-12, abs=1e-20)


@given(ensembles)
@settings(max_examples=15)
def test_density_has_unit_mass(spec):
    alpha, f = random_ensemble(*spec, eps=0.05)
    assert stationary_density_order1(f, alpha, 1e-6).mean == pytest.approx(1.0, abs=1e-15)
