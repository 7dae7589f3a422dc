import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ridmix.errors import StructureError
from ridmix.exact import QLinear
from ridmix.tvbounds import (PI_OVER_SQRT6, TrigPoly, bell_number, bound_constants,
                             bound_power_norm, exact_power_norm, grid_size_for,
                             random_trigpoly, rational_basis_lift, refined_bound_power_norm,
                             set_partitions)

BELL = [1, 1, 2, 5, 15, 52, 203, 877, 4140]


def test_trigpoly_merges_and_evaluates():
    p = TrigPoly.from_dict({0: 1.0, 1: 2.0, -1: 0.5})
    q = TrigPoly(np.array([[1], [1], [0]]), np.array([1.0, 1.0, 0.0]))
    assert q.coefficients == {(1,): 2.0}
    t = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(p(t), 1 + 2 * np.exp(1j * t) + 0.5 * np.exp(-1j * t))


def test_grid_values_match_direct_evaluation():
    rng = np.random.default_rng(3)
    p = random_trigpoly(rng, d_max=2)
    n = 16
    g = -math.pi + 2 * math.pi * np.arange(n) / n
    vals = p.grid_values(n)
    if p.dimension == 1:
        direct = p(g)
    else:
        T1, T2 = np.meshgrid(g, g, indexing="ij")
        direct = p(np.stack([T1, T2], axis=-1))
    np.testing.assert_allclose(vals, direct, atol=1e-10)


@pytest.mark.parametrize("coeffs,k,expect", [
    ({0: 1, 1: -1, 2: 1}, 3, 27.0),  # (1 - x + x^2)^3: all coefficients have one sign pattern
    ({0: 1, 1: 1}, 2, 4.0),
    ({0: 1, 1: 1}, 10, 1024.0),
    ({(0, 0): 1, (1, 0): 1, (0, 1): 1}, 3, 27.0),
])
def test_exact_power_norm_known(coeffs, k, expect):
    assert exact_power_norm(TrigPoly.from_dict(coeffs), k) == expect


def test_exact_power_norm_cancellation():
    # (1 - x)^2 = 1 - 2x + x^2, norm 4; (1+x)(1-x) style cancellation in a 2-d square
    assert exact_power_norm(TrigPoly.from_dict({0: 1, 1: -1}), 2) == 4.0
    p = TrigPoly.from_dict({(1, 0): 1, (0, 1): 1j})
    # (x + i y)^2 = x^2 + 2i xy - y^2
    assert exact_power_norm(p, 2) == pytest.approx(4.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5))
def test_power_norm_submultiplicative(seed, k):
    p = random_trigpoly(np.random.default_rng(seed), d_max=2, terms_max=4)
    assert exact_power_norm(p, k) <= p.norm() ** k * (1 + 1e-12)


def test_set_partitions_counts():
    for n in range(0, 7):
        parts = list(set_partitions(range(n)))
        assert len(parts) == BELL[n] == bell_number(n)
        assert len(set(parts)) == len(parts)
    assert list(set_partitions([])) == [()]


def test_constants_for_pure_phase():
    phi = TrigPoly.from_dict({1: 1.0})
    bc = bound_constants(phi)
    assert bc.S_phi == pytest.approx(1.0, abs=1e-12)
    assert bc.A_phi == pytest.approx(3 * PI_OVER_SQRT6, abs=1e-12)
    assert refined_bound_power_norm(phi, 1, bc) == pytest.approx(PI_OVER_SQRT6, abs=1e-12)


def test_grid_sizes():
    assert [grid_size_for(d) for d in (1, 2, 3, 4)] == [1024, 1024, 128, 64]
    with pytest.raises(ValueError):
        bound_constants(TrigPoly.from_dict({(1, 0, 0, 0, 0): 1.0}))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_bounds_dominate_exact_norm(seed):
    p = random_trigpoly(np.random.default_rng(seed), d_max=2, terms_max=4)
    bc = bound_constants(p)
    assert bc.S_lower <= bc.S_phi + 1e-12
    for k in range(1, 5):
        ex = exact_power_norm(p, k)
        assert ex <= refined_bound_power_norm(p, k, bc) * (1 + 1e-12)
        assert ex <= bound_power_norm(bc.S_phi, bc.A_phi, bc.dimension, k) * (1 + 1e-12)


def test_rational_lift_commensurate():
    lift = rational_basis_lift([Fraction(1, 2), Fraction(3, 4), 1])
    assert lift.dimension == 1
    b = lift.scaled_basis[0]
    for f, e in zip([Fraction(1, 2), Fraction(3, 4), 1], lift.exponents):
        assert e[0] * b == f


def test_rational_lift_incommensurate():
    s2 = QLinear.parse("sqrt2")
    freqs = [1, s2, 1 + s2, QLinear.parse("1/2 - sqrt2")]
    lift = rational_basis_lift(freqs)
    assert lift.dimension == 2
    B = lift.scaled_basis
    for f, e in zip(freqs, lift.exponents):
        rebuilt = sum((int(c) * b for c, b in zip(e, B)), QLinear.rational(0))
        assert rebuilt == (f if isinstance(f, QLinear) else QLinear.rational(f))


def test_rational_lift_rejects_floats():
    with pytest.raises(StructureError):
        rational_basis_lift([1.0, math.sqrt(2)])
