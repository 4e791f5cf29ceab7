import numpy as np
import pytest
from hypothesis import given, strategies as st

from circlekam import GOLDEN, PeriodicMap, RandomEnsemble, ResonanceError
from circlekam.circle import CircleDiffeo, compose, diophantine_profile
from circlekam.cohomology import (averaged_multiplier, cohomological_residual, solve_U, solve_Ubar, transfer_T,
                                  transfer_T0)
from circlekam.periodic import ck_norm, grid, random_trig

from conftest import TWO_PI

angles = st.lists(st.floats(0.01, 0.99), min_size=1, max_size=4)


def test_T0_deterministic_is_shift():
    phi = PeriodicMap.from_trig(cos=[1.0, 0.3], sin=[0.2])
    assert transfer_T0(phi, RandomEnsemble.single(0.3)).allclose(phi.shift(0.3), 1e-15)


def test_T0_constant():
    c = PeriodicMap.constant(2.5)
    assert transfer_T0(c, RandomEnsemble.uniform([0.1, 0.7])).allclose(c, 0.0)


def test_T0_cancelling_quarter_turns():
    out = transfer_T0(PeriodicMap.from_trig(cos=[1.0]), RandomEnsemble.uniform([0.25, 0.75]))
    assert out.sup() < 1e-15


def test_T_on_rotations_matches_T0(rng):
    alpha = RandomEnsemble((0.3, 0.7), (0.2, GOLDEN))
    phi = random_trig(rng, 10)
    f = alpha.map(CircleDiffeo.rotation)
    assert transfer_T(phi, f).allclose(transfer_T0(phi, alpha), 1e-12)


def test_T_constant():
    f = RandomEnsemble.single(CircleDiffeo(PeriodicMap.from_trig(sin=[0.1 / TWO_PI])))
    c = PeriodicMap.constant(-1.0)
    assert transfer_T(c, f).allclose(c, 1e-15)


def test_T_pointwise():
    f = RandomEnsemble.single(CircleDiffeo(PeriodicMap.from_trig(sin=[0.1 / TWO_PI])))
    out = transfer_T(PeriodicMap.from_trig(cos=[1.0]), f)
    x = grid(256)
    oracle = np.cos(2 * np.pi * (x + 0.1 * np.sin(2 * np.pi * x) / TWO_PI))
    assert np.max(np.abs(out.values - oracle)) < 1e-10


def test_U_of_constant():
    assert solve_U(PeriodicMap.constant(3.0), RandomEnsemble.single(0.3)).sup() == 0.0
    assert solve_Ubar(PeriodicMap.constant(3.0), RandomEnsemble.single(0.3)).sup() == 0.0


def test_U_cosine_coefficient():
    psi = PeriodicMap.from_trig(cos=[1.0])
    alpha = RandomEnsemble.single(0.3)
    phi = solve_U(psi, alpha)
    assert phi.coeffs[1] == pytest.approx(0.5 / (1 - np.exp(2j * np.pi * 0.3)), abs=1e-15)
    assert cohomological_residual(phi, psi, alpha) < 1e-10


def test_U_resonance_names_q():
    psi = PeriodicMap.from_trig(cos=[0.0, 1.0])
    with pytest.raises(ResonanceError) as exc:
        solve_U(psi, RandomEnsemble.single(0.5))
    assert exc.value.q == 2


def test_Ubar_is_U_with_reversed_angle(rng):
    psi = random_trig(rng, 12)
    a = GOLDEN / 2
    assert solve_Ubar(psi, RandomEnsemble.single(a)).allclose(solve_U(psi, RandomEnsemble.single(-a)), 1e-13)


def test_adjoint_golden(rng, golden):
    for _ in range(10):
        a, b = random_trig(rng, 16), random_trig(rng, 16)
        lhs = float(np.mean(solve_U(a, golden).values * b.values))
        rhs = float(np.mean(a.values * solve_Ubar(b, golden).values))
        assert lhs == pytest.approx(rhs, abs=1e-10)


def test_denominator_bound(golden_mix):
    prof = diophantine_profile(golden_mix, 64)
    m = averaged_multiplier(golden_mix, 64)[1:]
    assert np.all(np.abs(1 - m) >= prof.values ** 2 * (1 - 1e-12))


@given(angles, st.integers(0, 10_000))
def test_central_contract(vals, seed):
    alpha = RandomEnsemble.uniform(vals)
    psi = random_trig(np.random.default_rng(seed), 8, N=8, M=32)
    try:
        phi = solve_U(psi, alpha, resonance_floor=1e-3)
    except ResonanceError:
        return
    assert cohomological_residual(phi, psi, alpha) < 1e-9 * max(1.0, phi.sup())
    assert abs(phi.mean) == 0.0


@given(angles, st.integers(0, 10_000), st.floats(-2, 2))
def test_linear_and_commutes_with_derivative(vals, seed, s):
    alpha = RandomEnsemble.uniform(vals)
    rng = np.random.default_rng(seed)
    a, b = random_trig(rng, 8, N=8, M=32), random_trig(rng, 8, N=8, M=32)
    try:
        ua, ub, uab = (solve_U(x, alpha, 1e-3) for x in (a, b, a + b * s))
    except ResonanceError:
        return
    scale = max(1.0, ua.sup(), ub.sup())
    assert uab.allclose(ua + ub * s, 1e-12 * scale)
    assert solve_U(a.derivative(), alpha, 1e-3).allclose(ua.derivative(), 1e-10 * scale)
    assert solve_Ubar(a.derivative(), alpha, 1e-3).allclose(solve_Ubar(a, alpha, 1e-3).derivative(), 1e-10 * scale)


@given(angles)
def test_multiplier_properties(vals):
    m = averaged_multiplier(RandomEnsemble.uniform(vals), 20)
    assert m[0] == pytest.approx(1.0)
    assert np.all(np.abs(m) <= 1 + 1e-12)
