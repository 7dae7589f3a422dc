import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ridmix.charfun import (PiMultiple, certified_inf_modulus, certified_min_modulus_fd,
                            distinguished_log, eval_cf, fd_modulus, inf_modulus_report,
                            ratio_ac, tail_bound_fa, winding_index)
from ridmix.errors import DominationError, UnsupportedSupportError, ZeroCrossingError
from ridmix.exact import QLinear
from ridmix.measure_alg import (AtomicMeasure, CantorIFS, GridDensity, MixtureDistribution,
                                ProductCF)


def ex2():
    return MixtureDistribution(0.5, 0.3, 0.2, AtomicMeasure.point(0), GridDensity.uniform(),
                               CantorIFS(), all_powers_singular=True)


def test_eval_cf_parts_and_exact_phase():
    F = ex2()
    t = np.array([0.0, 1.0, 5.0])
    np.testing.assert_allclose(eval_cf(F, t, "a", weighted=False), GridDensity.uniform().cf(t))
    np.testing.assert_allclose(eval_cf(F, t, "s"), 0.2 * CantorIFS().cf(t))
    F3 = MixtureDistribution(0.5, 0.0, 0.5, AtomicMeasure.point(0), None, ProductCF("factorial"))
    assert eval_cf(F3, PiMultiple(math.factorial(8) + 1)) == 0.5
    with pytest.raises(ValueError):
        eval_cf(F, t, "x")


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(1, 40))
def test_distinguished_log_of_shift_is_linear(a, t_max):
    tr = distinguished_log(lambda t: np.exp(1j * a * t), t_max)
    np.testing.assert_allclose(tr.args, a * tr.grid, atol=1e-9)
    assert tr.at(0.0) == 0


def test_distinguished_log_zero_detection():
    with pytest.raises(ZeroCrossingError) as exc:
        distinguished_log(np.cos, 10.0)
    r = exc.value.t / math.pi - 0.5
    assert abs(r - round(r)) < 0.02


def test_distinguished_log_additive_for_products():
    F = ex2()
    t_max = 20.0
    a = distinguished_log(F, t_max)
    b = distinguished_log(lambda t: F.cf(t) * np.exp(3j * t), t_max, points=len(a.grid) // 2)
    ia = a.grid
    # compare on shared grid points
    common, i, j = np.intersect1d(ia, b.grid, return_indices=True)
    np.testing.assert_allclose(b.args[j] - a.args[i], 3 * common, atol=1e-9)


def test_fd_modulus_two_atoms():
    F_d = AtomicMeasure.from_pairs([(0, 0.75), (1, 0.25)])
    m = fd_modulus(F_d)
    assert m.method == "lattice"
    assert 0.5 - 1e-6 < m.lower <= 0.5 <= m.upper + 1e-15
    assert certified_min_modulus_fd(F_d) == m.lower


def test_fd_modulus_zero_for_balanced_coin():
    F_d = AtomicMeasure.from_pairs([(0, 0.5), (1, 0.5)])
    assert certified_min_modulus_fd(F_d) == 0.0


def test_fd_modulus_incommensurate_torus():
    # 0.6 + 0.25 e^{it} + 0.15 e^{i sqrt2 t}: inf = 0.6 - 0.25 - 0.15
    F_d = AtomicMeasure.from_pairs([(0, 0.6), (1, 0.25), (QLinear.parse("sqrt2"), 0.15)])
    m = fd_modulus(F_d)
    assert m.method.startswith("torus")
    assert 0.0 < m.lower <= 0.2 + 1e-12
    assert m.upper >= 0.2 - 1e-12


def test_fd_modulus_rejects_structureless_floats():
    F_d = AtomicMeasure.from_arrays([0.0, math.sqrt(2)], [0.5, 0.5])
    with pytest.raises(UnsupportedSupportError):
        fd_modulus(F_d)


def test_tail_bound_density():
    u = GridDensity.uniform()
    assert tail_bound_fa(u, 4.0) == pytest.approx(0.5)
    t = np.linspace(4, 400, 2000)
    assert np.max(np.abs(u.cf(t))) <= tail_bound_fa(u, 4.0)


def test_inf_modulus_example2():
    F = ex2()
    r = inf_modulus_report(F)
    assert r.lower > 0
    t = np.linspace(-200, 200, 40001)
    assert np.min(np.abs(F.cf(t))) >= r.lower


def test_inf_modulus_zero_when_not_dominated():
    F = MixtureDistribution(0.5, 0.0, 0.5, AtomicMeasure.point(0), None, ProductCF("factorial"))
    assert certified_inf_modulus(F) == 0.0


def test_winding_zero_without_ac_part():
    F = MixtureDistribution(0.6, 0.0, 0.4, AtomicMeasure.point(0), None, CantorIFS())
    assert winding_index(F).index == 0


def test_winding_zero_for_nonnegative_real_fa():
    F = MixtureDistribution(0.5, 0.3, 0.2, AtomicMeasure.point(0),
                            GridDensity.triangular(-1, 1), ProductCF("power", 3))
    w = winding_index(F)
    assert w.index == 0 and abs(w.raw) < 1e-9


def test_winding_against_dense_unwrap():
    F = MixtureDistribution(0.2, 0.8, 0.0, AtomicMeasure.point(0), GridDensity.uniform(2, 3), None)
    w = winding_index(F)
    # oracle: dense sampling plus numpy unwrap, with the limit arguments at +-T
    t = np.linspace(-w.tail_T, w.tail_T, 400001)
    ph = np.unwrap(np.angle(ratio_ac(F)(t)))
    R_end = ratio_ac(F)(np.array([-w.tail_T, w.tail_T]))
    raw = ((ph[-1] - np.angle(R_end[1])) - (ph[0] - np.angle(R_end[0]))) / (2 * math.pi)
    assert w.index == round(raw) == 4


def test_winding_requires_domination():
    F = MixtureDistribution(0.3, 0.3, 0.4, AtomicMeasure.point(0), GridDensity.uniform(),
                            CantorIFS())
    with pytest.raises(DominationError):
        winding_index(F)
