import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from circlekam import GOLDEN, PeriodicMap, RandomEnsemble
from circlekam.circle import (CircleDiffeo, InversionError, compose, conjugate, diophantine_profile, distance,
                              distance_to_rotation, invert, rotation_number)
from circlekam.periodic import ck_norm, grid, random_trig

from conftest import TWO_PI


def sine_diffeo(amp, shift=0.0, p=1):
    return CircleDiffeo(PeriodicMap.from_trig(sin=[0.0] * (p - 1) + [amp / (TWO_PI * p)], mean=shift))


# combined slope amplitude stays below 0.6, well inside the orientation-preserving range
small = st.floats(-0.3, 0.3, allow_nan=False)
angles = st.floats(-1.0, 1.0, allow_nan=False)
diffeos = st.builds(lambda a, b, s: CircleDiffeo(PeriodicMap.from_trig(sin=[a / TWO_PI], cos=[0.0, b / (2 * TWO_PI)], mean=s)),
                    small, small, angles)


def test_rejects_orientation_reversal():
    with pytest.raises(ValueError):
        sine_diffeo(1.5)


def test_rotations_add():
    r = compose(CircleDiffeo.rotation(0.2), CircleDiffeo.rotation(0.35))
    assert r.phi.allclose(PeriodicMap.constant(0.55), 1e-15)


def test_compose_identity():
    f = sine_diffeo(0.3, 0.1)
    assert compose(f, CircleDiffeo.identity()).phi.allclose(f.phi, 1e-14)


def test_compose_pointwise():
    f = sine_diffeo(0.1)
    fg = compose(f, CircleDiffeo.rotation(0.3))
    x = grid(256)
    expected = 0.3 + 0.1 * np.sin(2 * np.pi * (x + 0.3)) / TWO_PI
    assert np.max(np.abs(fg.phi.values - expected)) < 1e-10


def test_invert_rotation_and_identity():
    assert invert(CircleDiffeo.rotation(0.37)).phi.allclose(PeriodicMap.constant(-0.37), 1e-14)
    assert invert(CircleDiffeo.identity()).phi.allclose(PeriodicMap.zeros(), 1e-15)


def test_invert_residuals():
    f = sine_diffeo(0.2)
    f_inv = invert(f)
    assert distance(compose(f, f_inv), CircleDiffeo.identity()) < 1e-10
    assert distance(compose(f_inv, f), CircleDiffeo.identity()) < 1e-10


def test_invert_fails_near_critical():
    f = CircleDiffeo(PeriodicMap.from_trig(sin=[0.999999 / TWO_PI], degree=8, grid_size=32))
    with pytest.raises((InversionError, ArithmeticError)):
        invert(f, max_iter=3)


def test_distance_to_rotation_is_norm():
    f = sine_diffeo(0.2, 0.4)
    assert distance_to_rotation(f, 0.4, 3) == pytest.approx(ck_norm(f.phi - 0.4, 3))


def test_conjugate_by_identity():
    f = sine_diffeo(0.3, 0.2)
    assert conjugate(CircleDiffeo.identity(), f).phi.allclose(f.phi, 1e-13)


def test_rotation_number_of_rotation():
    assert rotation_number(CircleDiffeo.rotation(0.123), 1) == pytest.approx(0.123, abs=1e-15)


def test_rotation_number_conjugate_rotation():
    h = sine_diffeo(0.4)
    n = 2000
    assert abs(rotation_number(conjugate(h, CircleDiffeo.rotation(GOLDEN)), n) - GOLDEN) < 2.0 / n


def test_rotation_number_long_orbit():
    f = CircleDiffeo(PeriodicMap.from_trig(sin=[0.05], mean=0.3))
    short = rotation_number(f, 10_000)
    oracle = rotation_number(f, 1_000_000, n_starts=2)
    assert abs(short - oracle) < 2e-4


def test_prop22_conjugation_estimate(rng):
    def ratio(f, g, alpha):
        d = distance_to_rotation(conjugate(g, f), alpha, 3)
        return d / (distance_to_rotation(f, alpha, 3) + distance(g, CircleDiffeo.identity(), 3))

    def sample():
        alpha = rng.uniform()
        f = CircleDiffeo(random_trig(rng, 4, 1e-3, decay=0.5, mean=False) + alpha)
        g = CircleDiffeo(random_trig(rng, 4, 1e-3, decay=0.5, mean=False))
        return ratio(f, g, alpha)

    C = max(sample() for _ in range(10))
    assert max(sample() for _ in range(10)) <= 2.0 * C


def test_profile_zero_is_resonant():
    prof = diophantine_profile(RandomEnsemble.single(0.0), 10)
    assert prof.resonant and np.all(prof.values == 0.0)


def test_profile_golden_sigma_one():
    prof = diophantine_profile(RandomEnsemble.single(GOLDEN), 100)
    # continued-fraction oracle: q dist(q g, Z) >= 1/(sqrt5 + 2) ... bounded below
    q = np.arange(1, 101)
    oracle = np.min(q * np.abs(q * GOLDEN - np.round(q * GOLDEN)))
    assert prof.sigma == pytest.approx(1.0, abs=0.1)
    assert prof.sigma_int == 1
    assert prof.constant_for(1.0) == pytest.approx(oracle, rel=1e-12)
    assert prof.satisfied(prof.A, prof.sigma)


def test_profile_two_atom_mix(golden_mix):
    prof = diophantine_profile(golden_mix, 64)
    q = np.arange(1, 65)
    single = np.abs(q * GOLDEN - np.round(q * GOLDEN))
    assert np.all(prof.values >= single / math.sqrt(2) - 1e-15)
    assert not prof.resonant


def test_profile_jittered_uniform_is_flat():
    m = 64
    vals = (np.arange(m) + 0.5 + 1e-3 * np.sin(np.arange(m))) / m
    prof = diophantine_profile(RandomEnsemble.uniform(list(vals)), 32)
    assert prof.sigma < 0.1


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=5), st.integers(1, 40))
def test_profile_bounded_and_symmetric(vals, q):
    prof = diophantine_profile(RandomEnsemble.uniform(vals), 40)
    assert np.all(prof.values <= 0.5 + 1e-15)
    neg = diophantine_profile(RandomEnsemble.uniform([-v for v in vals]), 40)
    assert neg.value(q) == pytest.approx(prof.value(q), abs=1e-12)


@given(diffeos, diffeos, diffeos)
def test_compose_associative(f, g, h):
    assert distance(compose(compose(f, g), h), compose(f, compose(g, h))) < 1e-9


@given(diffeos, st.floats(0.05, 0.45))
def test_rotation_number_conjugation_invariant(h, a):
    n = 500
    f = CircleDiffeo(PeriodicMap.from_trig(sin=[0.02], mean=a))
    assert abs(rotation_number(conjugate(h, f), n) - rotation_number(f, n)) < 4.0 / n


@given(diffeos)
def test_inverse_preserves_orientation(f):
    assert invert(f).min_slope() > 0
