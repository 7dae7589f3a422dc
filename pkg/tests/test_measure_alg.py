import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from ridmix.exact import QLinear
from ridmix.measure_alg import (AtomicMeasure, CantorIFS, GridDensity, MixtureDistribution,
                                ProductCF, combine, convolve_atomic, exp_sum, mixture_convolve,
                                power_atomic, prune)

T = np.linspace(-30, 30, 241)


def cantor_oracle(t, terms=60):
    # classical Cantor law on [0, 1]: e^{it/2} prod_k cos(t / 3^k)
    mpmath.mp.dps = 30
    p = mpmath.mpf(1)
    for k in range(1, terms + 1):
        p *= mpmath.cos(mpmath.mpf(t) / mpmath.mpf(3) ** k)
    return complex(mpmath.exp(0.5j * mpmath.mpf(t)) * p)


# --- atomic measures ---------------------------------------------------------


def test_point_mass_cf_is_pure_phase():
    m = AtomicMeasure.point(Fraction(3, 2))
    np.testing.assert_allclose(m.cf(T), np.exp(1.5j * T), atol=1e-15)


def test_binomial_powers_match_scipy():
    coin = AtomicMeasure.from_pairs([(0, 0.5), (1, 0.5)])
    for n in (1, 5, 12, 33):
        m = power_atomic(coin, n)
        assert m.is_lattice and m.size == n + 1
        np.testing.assert_allclose(m.weights, stats.binom.pmf(np.arange(n + 1), n, 0.5),
                                   atol=1e-15)
        np.testing.assert_allclose(m.locations, np.arange(n + 1))


def test_lattice_convolution_keeps_exact_step():
    a = AtomicMeasure.from_pairs([(Fraction(1, 3), 0.5), (Fraction(2, 3), 0.5)])
    b = AtomicMeasure.from_pairs([(Fraction(1, 2), 1.0)])
    c = convolve_atomic(a, b)
    assert c.exact_locations() == [Fraction(5, 6), Fraction(7, 6)]


def test_symbolic_locations_convolve_exactly():
    s2 = QLinear.parse("sqrt2")
    a = AtomicMeasure.from_pairs([(0, 0.5), (s2, 0.5)])
    c = convolve_atomic(a, a)
    assert c.size == 3
    ex = c.exact_locations()
    assert str(ex[-1]) == str(2 * s2)
    np.testing.assert_allclose(c.cf(T), a.cf(T) ** 2, atol=1e-14)


def test_float_atoms_merge():
    m = AtomicMeasure.from_arrays([0.1, 0.1 + 1e-16, 0.7], [0.2, 0.3, 0.5])
    assert m.size == 2
    assert m.mass == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(-6, 6), st.floats(-1, 1)), min_size=1, max_size=6),
       st.lists(st.tuples(st.integers(-6, 6), st.floats(-1, 1)), min_size=1, max_size=6))
def test_convolution_multiplies_transforms(pa, pb):
    a, b = AtomicMeasure.from_pairs(pa), AtomicMeasure.from_pairs(pb)
    c = convolve_atomic(a, b)
    np.testing.assert_allclose(c.cf(T), a.cf(T) * b.cf(T), atol=1e-12)
    assert c.tv <= a.tv * b.tv + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=2, max_size=40), st.floats(0, 0.5))
def test_prune_error_within_budget(ws, frac):
    m = AtomicMeasure.on_lattice(0, Fraction(1), np.arange(len(ws)), np.array(ws))
    budget = frac * m.tv
    p = prune(m, budget)
    assert p.tv_error_budget <= budget + 1e-15
    assert np.max(np.abs(p.atoms.cf(T) - m.cf(T))) <= p.tv_error_budget + 1e-12


def test_exp_sum_recurrence_matches_direct():
    rng = np.random.default_rng(0)
    x = rng.uniform(-5, 5, 5000)
    w = rng.normal(size=5000)
    t = np.linspace(-20, 20, 400)
    direct = np.exp(1j * np.outer(t, x)) @ w
    np.testing.assert_allclose(exp_sum(x, w, t), direct, atol=1e-9)


def test_combine_linear():
    a = AtomicMeasure.point(0)
    b = AtomicMeasure.point(1)
    c = combine([a, b], [0.25, -0.5])
    assert c.mass == pytest.approx(-0.25)
    assert c.tv == pytest.approx(0.75)


# --- densities ---------------------------------------------------------------


def test_uniform_cf_against_quadrature():
    u = GridDensity.uniform(0.0, 1.0)
    for t in (0.0, 0.3, 2.0, -7.5, 40.0):
        re = integrate.quad(lambda x: math.cos(t * x), 0, 1)[0]
        im = integrate.quad(lambda x: math.sin(t * x), 0, 1)[0]
        assert abs(u.cf(t) - complex(re, im)) < 1e-12


def test_triangular_cf_closed_form():
    tri = GridDensity.triangular(-1.0, 1.0)
    t = T[T != 0]
    np.testing.assert_allclose(tri.cf(t), 2 * (1 - np.cos(t)) / t**2, atol=1e-12)
    assert tri.cf(0.0) == pytest.approx(1.0)


def test_density_tail_and_norms():
    u = GridDensity.uniform(0.0, 2.0)
    assert u.integral() == pytest.approx(1.0)
    assert u.l1_norm() == pytest.approx(1.0)
    assert u.tail_bound(10.0) == pytest.approx(u.total_variation_of_density / 10.0)
    with pytest.raises(ValueError):
        u.tail_bound(0.0)


# --- singular generators -----------------------------------------------------


def test_cantor_cf_against_product_oracle():
    c = CantorIFS()
    for t in (0.5, 3.0, 17.0, -40.0, 2 * math.pi * 9):
        assert abs(c.cf(t) - cantor_oracle(t)) < 1e-12


@pytest.mark.parametrize("level", [1, 4, 9])
def test_cantor_refinement_is_exact_level_measure(level):
    c = CantorIFS()
    m = c.refine(level)
    assert m.size == 2**level
    assert m.mass == pytest.approx(1.0)
    # level-L atoms at the left endpoints: CF of the truncated product
    t = np.linspace(-10, 10, 81)
    expect = np.ones_like(t, dtype=complex)
    for k in range(1, level + 1):
        expect *= 0.5 * (1 + np.exp(2j * t / 3**k))
    np.testing.assert_allclose(m.cf(t), expect, atol=1e-12)


def test_cantor_refine_power_matches_repeated_convolution():
    c = CantorIFS()
    direct = power_atomic(c.refine(5), 3)
    fast = c.refine_power(5, 3)
    np.testing.assert_allclose(fast.cf(T), direct.cf(T), atol=1e-12)


def test_factorial_product_exact_phases():
    f = ProductCF("factorial")
    for n in (3, 4, 5):
        q = math.factorial(2 * n)
        # exponent rows k <= 2n contribute +-1 exactly; k = 2n gives -1
        mpmath.mp.dps = 40
        tail = mpmath.mpf(1)
        den = mpmath.mpf(1)
        for k in range(2 * n + 1, 2 * n + 40):
            den *= k
            tail *= mpmath.cos(mpmath.pi / den)
        assert abs(f.cf_pi(q) - complex(-tail)) < 1e-14
        assert f.cf_pi(q + 1) == 0
        assert f.cf_pi(q - 1) == 0


def test_power_product_cf():
    p = ProductCF("power", 3)
    t = 2.7
    expect = np.prod([math.cos(t / 3**k) for k in range(1, 60)])
    assert abs(p.cf(t) - expect) < 1e-14


# --- mixtures ----------------------------------------------------------------


def example2():
    return MixtureDistribution(0.5, 0.3, 0.2, AtomicMeasure.point(0), GridDensity.uniform(),
                               CantorIFS(), all_powers_singular=True)


def test_mixture_validation():
    with pytest.raises(ValueError):
        MixtureDistribution(0.5, 0.3, 0.3, AtomicMeasure.point(0), GridDensity.uniform(),
                            CantorIFS())
    with pytest.raises(ValueError):
        MixtureDistribution(0.5, 0.5, 0.0, AtomicMeasure.point(0), None, None)
    with pytest.raises(ValueError):
        MixtureDistribution(-0.1, 0.6, 0.5, AtomicMeasure.point(0), GridDensity.uniform(),
                            CantorIFS())


def test_mixture_cf_is_weighted_sum():
    F = example2()
    expect = 0.5 + 0.3 * GridDensity.uniform().cf(T) + 0.2 * CantorIFS().cf(T)
    np.testing.assert_allclose(F.cf(T), expect, atol=1e-15)


def test_mixture_convolution_part_table():
    F = example2()
    G = mixture_convolve(F, F)
    assert G.c_d == pytest.approx(0.25)
    assert G.c_s + G.c_u == pytest.approx(0.2 * 0.5 * 2 + 0.04)
    assert G.c_a == pytest.approx(1 - 0.25 - 0.24)
    np.testing.assert_allclose(G.cf(T), F.cf(T) ** 2, atol=1e-12)


def test_unclassified_square_is_flagged():
    F = MixtureDistribution(0.5, 0.3, 0.2, AtomicMeasure.point(0), GridDensity.uniform(),
                            ProductCF("power", 4))
    G = mixture_convolve(F, F)
    assert G.c_u == pytest.approx(0.04)
    assert any("unclassified" in w for w in G.warnings)
