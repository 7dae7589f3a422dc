import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ridmix.charfun import PiMultiple
from ridmix.criteria import (SingularVerdict, Status, Verdict, classify_divergence,
                             convolution_power_domination, counterexample_table,
                             decomposition_check, dominated_check, exact_weight,
                             pure_singular_verdict, random_dominated_mixture, ratio_test,
                             rid_criteria, zero_free_check)
from ridmix.errors import CertificationError
from ridmix.measure_alg import (AtomicMeasure, CantorIFS, GridDensity, MixtureDistribution,
                                ProductCF)


def ex1():
    return MixtureDistribution(0.5, 0.3, 0.2, AtomicMeasure.point(0),
                               GridDensity.triangular(-1, 1), CantorIFS(),
                               all_powers_singular=True)


def ex2():
    return MixtureDistribution(0.5, 0.3, 0.2, AtomicMeasure.point(0), GridDensity.uniform(),
                               CantorIFS(), all_powers_singular=True)


def ex3():
    return MixtureDistribution(0.5, 0.0, 0.5, AtomicMeasure.point(0), None, ProductCF("factorial"))


def ex4(shift=1):
    return MixtureDistribution(0.5, 0.3, 0.2, AtomicMeasure.point(shift), GridDensity.uniform(),
                               CantorIFS(), all_powers_singular=True)


# --- domination ----------------------------------------------------------------


def test_dominated_point_mass():
    ok, margin = dominated_check(ex1())
    assert ok and margin == pytest.approx(0.5 - 0.2)


def test_boundary_case_not_dominated():
    ok, margin = dominated_check(ex3())
    assert not ok and margin == 0.0


def test_no_singular_part_always_dominated():
    F = MixtureDistribution(0.5, 0.5, 0.0, AtomicMeasure.from_pairs([(0, 0.5), (1, 0.5)]),
                            GridDensity.uniform(), None)
    ok, _ = dominated_check(F)
    assert ok


# --- verdicts --------------------------------------------------------------------


@pytest.mark.parametrize("make", [ex1, ex2, ex4])
def test_worked_mixtures_are_rid(make):
    r = rid_criteria(make())
    assert r.verdict == Verdict.RID
    assert r.cond_ii == r.cond_iii == Status.HOLDS
    assert r.inf_f_lower > 0 and not r.inconsistent


def test_counterexample_precondition_fails():
    r = rid_criteria(ex3())
    assert r.verdict == Verdict.PRECONDITION_FAILED
    assert not r.dominated


def test_zero_of_f_is_not_certified():
    # 0.5 + 0.5 cos-like: two-atom discrete part with exact zeros of f_d
    F = MixtureDistribution(0.6, 0.4, 0.0, AtomicMeasure.from_pairs([(0, 0.5), (1, 0.5)]),
                            GridDensity.uniform(), None)
    r = rid_criteria(F)
    assert r.verdict != Verdict.RID
    assert r.cond_iii in (Status.FAILS, Status.UNKNOWN)


def test_zero_free_check_example2():
    zf = zero_free_check(ex2(), 1.0)
    assert zf.status == Status.HOLDS and zf.T > 0


def test_rid_requires_positive_inf_modulus():
    rng = np.random.default_rng(11)
    for _ in range(10):
        r = rid_criteria(random_dominated_mixture(rng))
        if r.verdict == Verdict.RID:
            assert r.inf_f_lower > 0 and r.dominated


# --- ratio test ------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.floats(-50, 50), st.floats(-100, 100), st.floats(0.1, 10))
def test_ratio_of_point_mass_is_one(a, t, tau):
    F = MixtureDistribution(1.0, 0.0, 0.0, AtomicMeasure.from_arrays([a], [1.0]), None, None)
    assert ratio_test(F, tau, [t])[0] == pytest.approx(1.0, abs=1e-12)


def _tail_oracle(n):
    # 1 + f_s(t_n) = 1 - prod_{k>2n} cos(pi / ((2n+1)...k))
    mpmath.mp.dps = 60
    p, den = mpmath.mpf(1), mpmath.mpf(1)
    for k in range(2 * n + 1, 2 * n + 60):
        den *= k
        p *= mpmath.cos(mpmath.pi / den)
    return 1 - p


def test_counterexample_ratio_matches_oracle():
    rows = counterexample_table(ex3(), range(3, 11))
    for row in rows:
        assert row.f_minus == 0.5 and row.f_plus == 0.5
        expect = 1 / float(_tail_oracle(row.n)) ** 2
        assert row.ratio == pytest.approx(expect, rel=1e-9)
    vals = [r.ratio for r in rows]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert classify_divergence(vals)


def test_ratio_reports_exact_zero():
    coin = MixtureDistribution(1.0, 0.0, 0.0, AtomicMeasure.from_pairs([(0, 0.5), (1, 0.5)]),
                               None, None)
    res = ratio_test(coin, PiMultiple(Fraction(1, 2)), [PiMultiple(1), PiMultiple(2)])
    assert math.isnan(res[0]) and res.errors[0]
    assert res[1] == pytest.approx(0.5) and res.errors[1] is None


def test_divergence_classifier_is_conservative():
    assert not classify_divergence([1, 2, 3, 5000])             # four points
    assert not classify_divergence([1, 2, 3, 4, 5, 999])         # below threshold
    assert not classify_divergence([1, 2, 3, 2, 3, 4, 2000])     # run broken
    assert classify_divergence([1, 2, 3, 4, 1001])
    assert classify_divergence([5, 10, 100, 200, 800, 1200])


def test_ratio_bounded_for_rid_mixture():
    F = ex2()
    t = np.linspace(-1000, 1000, 4001)
    for tau in (1.0, math.pi):
        vals = list(ratio_test(F, tau, list(t)))
        assert max(vals) < 100
        assert not classify_divergence(vals)


# --- singularity threshold ----------------------------------------------------------


def test_pure_singular_verdicts():
    assert pure_singular_verdict(2, 1.0, 0.2, 0.5) == SingularVerdict.NOT_PURE_SINGULAR
    assert pure_singular_verdict(None, None, 0.2, 0.5, True) == SingularVerdict.PURE_SINGULAR
    assert pure_singular_verdict(2, 0.1, 0.9, 1.0) == SingularVerdict.INCONCLUSIVE


def test_threshold_boundary_is_inclusive():
    # alpha = (2/3) * (0.3/0.5) = 0.4 exactly in decimal arithmetic
    assert pure_singular_verdict(2, 0.4, 0.3, 0.5) == SingularVerdict.NOT_PURE_SINGULAR


@pytest.mark.parametrize("args", [(1, 0.5, 0.1, 0.5), (2, 0.0, 0.1, 0.5), (2, 1.5, 0.1, 0.5),
                                  (2, 0.5, 0.6, 0.5), (2.5, 0.5, 0.1, 0.5)])
def test_pure_singular_invalid(args):
    with pytest.raises(ValueError):
        pure_singular_verdict(*args)


# --- decomposition and powers ---------------------------------------------------------


def test_decomposition_of_square():
    r = decomposition_check(ex4(), ex4())
    assert r.product.verdict == r.first.verdict == r.second.verdict == Verdict.RID
    assert not r.inconsistent
    assert all(m > 0 for m in r.margins)


def test_decomposition_with_point_mass_factor():
    delta = MixtureDistribution(1.0, 0.0, 0.0, AtomicMeasure.point(Fraction(1, 3)), None, None)
    r = decomposition_check(ex2(), delta)
    assert r.first.verdict == r.product.verdict


def test_decomposition_carries_unclassified_warning():
    F = MixtureDistribution(0.6, 0.3, 0.1, AtomicMeasure.point(0), GridDensity.uniform(),
                            ProductCF("power", 4))
    r = decomposition_check(F, F)
    assert any("unclassified" in w for w in r.warnings)


def test_decomposition_rejects_uncertified_product():
    with pytest.raises(CertificationError):
        decomposition_check(ex3(), ex3())


def test_power_domination_boundary():
    F = MixtureDistribution(0.6, 0.2, 0.2, AtomicMeasure.point(0), GridDensity.uniform(),
                            CantorIFS())
    lost, w = convolution_power_domination(F, 3)
    assert lost
    assert w["s_lower"] == w["threshold"] == Fraction(27, 125)
    lost1, _ = convolution_power_domination(F, 1)
    assert not lost1
    with pytest.raises(ValueError):
        convolution_power_domination(F, 0)


def test_exact_weight_reads_decimals():
    assert exact_weight(0.1) == Fraction(1, 10)
    assert exact_weight(Fraction(1, 3)) == Fraction(1, 3)
