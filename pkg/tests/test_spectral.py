import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from ridmix.errors import CertificationError, DominationError
from ridmix.exact import QLinear
from ridmix.measure_alg import (AtomicMeasure, CantorIFS, GridDensity, MixtureDistribution,
                                ProductCF)
from ridmix.spectral import (assemble_triplet, compute_W, discrete_from_spectrum,
                             extract_discrete, extract_triplet, invert_fd, recover_va,
                             synthesize_cf, w_series_tail, winding_kernel)
from ridmix.charfun import winding_index

T = np.arange(-1000, 1001) * 0.05


def example2():
    return MixtureDistribution(0.5, 0.3, 0.2, AtomicMeasure.point(0), GridDensity.uniform(),
                               CantorIFS(), all_powers_singular=True)


@pytest.fixture(scope="module")
def ex2_triplet():
    F = example2()
    return F, extract_triplet(F, n=20, refine_level=8)


# --- discrete part -----------------------------------------------------------


def test_mercator_coefficients():
    # log(0.75 + 0.25 e^{it}) = log 0.75 + sum (-1)^{k-1} e^{ikt} / (k 3^k)
    F_d = AtomicMeasure.from_pairs([(0, 0.75), (1, 0.25)])
    ds = extract_discrete(F_d)
    assert abs(ds.gamma0) < 1e-14
    for k in range(1, 25):
        assert abs(ds.lambdas.get(float(k), 0.0) - (-1) ** (k - 1) / (k * 3.0**k)) < 1e-14
    assert all(u > 0 for u in ds.lambdas)
    np.testing.assert_allclose(np.exp(ds.log_cf(T)), F_d.cf(T), atol=1e-13)


def test_dominant_atom_off_origin_sets_gamma0():
    # 0.2 + 0.8 e^{2it}: winding 1 in e^{2it}, so gamma0 = 2
    F_d = AtomicMeasure.from_pairs([(0, 0.2), (2, 0.8)])
    ds = extract_discrete(F_d)
    assert ds.gamma0 == pytest.approx(2.0, abs=1e-13)
    assert all(u < 0 for u, v in ds.lambdas.items() if abs(v) > 1e-13)
    np.testing.assert_allclose(np.exp(ds.log_cf(T)), F_d.cf(T), atol=1e-12)


def test_compound_poisson_roundtrip():
    F_d = discrete_from_spectrum(Fraction(1, 2), {1: 0.3})
    ds = extract_discrete(F_d)
    assert ds.gamma0 == pytest.approx(0.5, abs=1e-12)
    big = {u: v for u, v in ds.lambdas.items() if abs(v) > 1e-13}
    assert big == pytest.approx({1.0: 0.3}, abs=1e-12)
    assert ds.lambda_l1 == pytest.approx(0.3, abs=1e-10)


def test_incommensurate_extraction():
    s2 = QLinear.parse("sqrt2")
    F_d = AtomicMeasure.from_pairs([(0, 0.7), (1, 0.2), (s2, 0.1)])
    ds = extract_discrete(F_d)
    np.testing.assert_allclose(np.exp(ds.log_cf(T)), F_d.cf(T), atol=1e-10)


def test_extraction_needs_modulus():
    with pytest.raises(CertificationError):
        extract_discrete(AtomicMeasure.from_pairs([(0, 0.5), (1, 0.5)]))


def test_wiener_inverse_geometric():
    F_d = AtomicMeasure.from_pairs([(0, 0.75), (1, 0.25)])
    inv = invert_fd(F_d)
    q = dict(zip(np.round(inv.locations).astype(int), inv.weights))
    for k in range(31):
        assert abs(q.get(k, 0.0) - (4 / 3) * (-1 / 3) ** k) < 1e-12
    t = np.linspace(-10, 10, 1001)
    assert np.max(np.abs(F_d.cf(t) * inv.cf(t) - 1)) < 1e-9


def test_inverse_of_point_mass():
    inv = invert_fd(AtomicMeasure.point(Fraction(3, 2)))
    assert inv.pairs() == [(-1.5, 1.0)]


# --- ac part -----------------------------------------------------------------


@pytest.mark.parametrize("t", [0.3, 1.0, 4.0, -2.5, 30.0])
def test_winding_kernel_against_quadrature(t):
    # m * integral (e^{itx} - 1) sign(x) e^{-|x|}/|x| dx = 2 i m int_0^inf sin(tx) e^{-x}/x dx
    head = integrate.quad(lambda x: math.sin(t * x) * math.exp(-x) / x, 0, 1, limit=400)[0]
    tail = integrate.quad(lambda x: math.exp(-x) / x, 1, np.inf, weight="sin", wvar=t)[0]
    val = head + tail
    assert abs(winding_kernel(t, 3) - 3 * 2j * val) < 1e-9


def test_kernel_drift_equals_quarter_turns():
    # integral sin(x) dL for dL = sign(x) e^{-|x|}/|x| dx equals pi/2
    val = 2 * integrate.quad(lambda x: math.sin(x) * math.exp(-x) / x, 0, np.inf)[0]
    assert val == pytest.approx(math.pi / 2, abs=1e-12)
    # and the spectral function of the kernel part is -E1(|x|)
    x = 0.7
    assert special.exp1(x) == pytest.approx(integrate.quad(lambda y: math.exp(-y) / y, x,
                                                           np.inf)[0])


def test_recover_va_example2(ex2_triplet):
    F, tr = ex2_triplet
    v = tr.v_a
    assert v.imag_residual < 1e-8
    assert v.resynthesis_residual < 1e-6
    assert v.constant == pytest.approx(math.log(0.7), abs=1e-15)
    assert v.edge_spread < 1e-2


def test_recover_va_with_winding():
    F = MixtureDistribution(0.2, 0.8, 0.0, AtomicMeasure.point(0), GridDensity.uniform(2, 3), None)
    m = winding_index(F).index
    assert m == 4
    v = recover_va(F, m)
    tr = assemble_triplet(F, extract_discrete(F.F_d), m, v, None)
    t = np.linspace(-40, 40, 801)
    assert np.max(np.abs(synthesize_cf(tr, t) - F.cf(t))) < 1e-6


def test_wrong_index_is_detected():
    F = MixtureDistribution(0.2, 0.8, 0.0, AtomicMeasure.point(0), GridDensity.uniform(2, 3), None)
    with pytest.raises(Exception):
        recover_va(F, 0)


# --- singular part -----------------------------------------------------------


def test_series_tail_closed_form():
    mpmath.mp.dps = 40
    for rho, n in ((0.4, 20), (0.9, 5), (0.1, 1)):
        r = mpmath.mpf(rho)
        direct = -mpmath.log(1 - r) - mpmath.fsum(r**k / k for k in range(1, n + 1))
        assert w_series_tail(rho, n) == pytest.approx(float(direct), rel=1e-12)


def test_compute_W_example2_mass_and_cf(ex2_triplet):
    F, tr = ex2_triplet
    W = tr.W
    d = W.diagnostics
    assert W.mass == pytest.approx(math.log(1.4), abs=1e-8)
    assert d["cf_residual"] <= 1e-8
    assert d["closed_form_residual"] <= 1e-8
    assert d["analytic_tail"] == pytest.approx(3.39e-10, rel=1e-2)


def test_compute_W_rejects_non_dominated():
    F = MixtureDistribution(0.5, 0.0, 0.5, AtomicMeasure.point(0), None, ProductCF("factorial"))
    with pytest.raises(DominationError):
        compute_W(F, 5, 4)


def test_W_with_two_atom_discrete_part():
    F = MixtureDistribution(0.6, 0.2, 0.2, AtomicMeasure.from_pairs([(0, 0.8), (1, 0.2)]),
                            GridDensity.uniform(), CantorIFS(), all_powers_singular=True)
    W = compute_W(F, 25, 7)
    # rho = (1/3) / 0.6 < 1; residual against the refined singular law
    assert W.rho == pytest.approx(0.2 / (0.6 * 0.6), rel=1e-6)
    assert W.diagnostics["cf_residual"] < 1e-6


# --- triplet -----------------------------------------------------------------


def test_triplet_roundtrip_example2(ex2_triplet):
    F, tr = ex2_triplet
    assert np.max(np.abs(synthesize_cf(tr, T) - F.cf(T))) < 1e-6
    assert tr.sigma2 == 0


def test_gamma_drift_formula(ex2_triplet):
    F, tr = ex2_triplet
    v, W = tr.v_a, tr.W
    g = float(np.sin(v.nodes) @ v.samples) * v.h + float(np.sin(W.atoms.locations) @ W.atoms.weights)
    assert tr.gamma == pytest.approx(g, abs=1e-15)


def test_spectral_function_limits(ex2_triplet):
    F, tr = ex2_triplet
    assert abs(tr.L(-1e3)[0]) < 1e-8
    assert abs(tr.L(1e3)[0]) < 1e-8
    with pytest.raises(ValueError):
        tr.L(0.0)


@settings(max_examples=15, deadline=None)
@given(st.dictionaries(st.integers(-5, 5).filter(bool), st.floats(0.01, 0.2), min_size=1,
                       max_size=4),
       st.fractions(-2, 2, max_denominator=8))
def test_discrete_roundtrip_property(lams, g0):
    F_d = discrete_from_spectrum(g0, lams)
    ds = extract_discrete(F_d)
    assert ds.gamma0 == pytest.approx(float(g0), abs=1e-10)
    got = {int(round(u)): v for u, v in ds.lambdas.items() if abs(v) > 1e-12}
    assert set(got) == set(lams)
    for k, v in lams.items():
        assert abs(got[k] - v) < 1e-10
