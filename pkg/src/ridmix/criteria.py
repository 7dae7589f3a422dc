"""Membership verdicts for dominated mixtures and related certificates."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .charfun import (LOG_FLOOR, PiMultiple, choose_tail_T, eval_cf, fd_modulus,
                      inf_modulus_report, lipschitz_cf, _non_decaying, _tail_sum)
from .errors import CertificationError, DominationError
from .measure_alg import (AtomicMeasure, CantorIFS, GridDensity, MixtureDistribution, ProductCF,
                          mixture_convolve)


class Status(str, enum.Enum):
    HOLDS = "HOLDS"
    FAILS = "FAILS"
    UNKNOWN = "UNKNOWN"


class Verdict(str, enum.Enum):
    RID = "RID"
    NOT_CERTIFIED = "NOT_CERTIFIED"
    PRECONDITION_FAILED = "PRECONDITION_FAILED"


class SingularVerdict(str, enum.Enum):
    PURE_SINGULAR = "PURE_SINGULAR"
    NOT_PURE_SINGULAR = "NOT_PURE_SINGULAR"
    INCONCLUSIVE = "INCONCLUSIVE"


def exact_weight(x) -> Fraction:
    """Exact rational read of a weight (floats via their shortest decimal form)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)))


# ---------------------------------------------------------------------------
# domination


def dominated_check(F: MixtureDistribution, mu_d: Optional[float] = None) -> tuple:
    """(dominated, margin) with margin = c_d mu_d - c_s.

    Unclassified mass is counted as singular, which keeps the check sound
    whatever its true type.
    """
    mu = fd_modulus(F.F_d).lower if mu_d is None else mu_d
    cs = F.c_s + F.c_u
    margin = F.c_d * mu - cs
    ok = cs == 0 or (mu > 0 and cs < F.c_d * mu)
    return bool(ok), float(margin)


# ---------------------------------------------------------------------------
# zero-freeness by pairwise exclusion


@dataclass(frozen=True)
class ZeroFree:
    status: Status
    T: float
    intervals: int
    min_sample: float
    note: str = ""


def zero_free_check(F: MixtureDistribution, mu_d: float, max_intervals: int = 1 << 21,
                    min_width: float = 1e-9) -> ZeroFree:
    """Certify f(t) != 0 for all real t.

    Past T the dominant discrete term beats everything else; on [0, T] an
    interval [a, b] is zero-free when |f(a)| + |f(b)| > L (b - a), L the
    Lipschitz bound of f.  Failing intervals are bisected.
    """
    margin = F.c_d * mu_d - _non_decaying(F)
    if margin <= 0:
        return ZeroFree(Status.UNKNOWN, 0.0, 0, float("nan"), "no tail argument available")
    if _tail_sum(F, 1.0) - _non_decaying(F) <= 0:
        return ZeroFree(Status.HOLDS, 0.0, 0, float("nan"), "no decaying part")
    # any tail margin positive suffices here
    T = choose_tail_T(F, margin, fraction=0.9)
    L = lipschitz_cf(F)
    a = np.linspace(0.0, T, 257)
    fa = np.abs(F.cf(a))
    lo, hi = a[:-1], a[1:]
    flo, fhi = fa[:-1], fa[1:]
    total = lo.size
    smin = float(fa.min())
    slack = 4e-12
    while True:
        if smin <= LOG_FLOOR:
            return ZeroFree(Status.FAILS, T, total, smin, "sampled |f| below floor")
        bad = flo + fhi - slack <= L * (hi - lo)
        if not np.any(bad):
            return ZeroFree(Status.HOLDS, T, total, smin)
        lo, hi, flo, fhi = lo[bad], hi[bad], flo[bad], fhi[bad]
        if float((hi - lo).min()) < min_width or total + lo.size > max_intervals:
            return ZeroFree(Status.UNKNOWN, T, total, smin, "bisection budget exhausted")
        mid = 0.5 * (lo + hi)
        fm = np.abs(F.cf(mid))
        smin = min(smin, float(fm.min()))
        total += lo.size
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
        flo, fhi = np.concatenate([flo, fm]), np.concatenate([fm, fhi])


# ---------------------------------------------------------------------------
# criteria report


@dataclass(frozen=True)
class CriteriaReport:
    mu_d_lower: float
    mu_d_upper: float
    inf_f_lower: float
    dominated: bool
    margin: float
    cond_ii: Status
    cond_iii: Status
    verdict: Verdict
    notes: tuple = ()
    inconsistent: bool = False
    details: dict = field(default_factory=dict)


def rid_criteria(F: MixtureDistribution) -> CriteriaReport:
    """Run the domination test, then certify (ii) and (iii) independently."""
    notes = list(F.warnings)
    mod = fd_modulus(F.F_d)
    mu = mod.lower
    dom, margin = dominated_check(F, mu)
    details = {"mu_d_method": mod.method, "mu_d_grid": mod.grid_size}
    if F.c_u > 0:
        notes.append(f"unclassified mass {F.c_u:.6g} counted as singular for domination")
    if not dom:
        notes.append("dominated singular part not certified; the criterion does not apply")
        return CriteriaReport(mu, mod.upper, 0.0, False, margin, Status.UNKNOWN, Status.UNKNOWN,
                              Verdict.PRECONDITION_FAILED, tuple(notes), False, details)
    # (ii): certified lower bound on inf |f|
    im = inf_modulus_report(F, mu)
    details.update(T_ii=im.T, window_lower=im.window_lower, tail_lower=im.tail_lower,
                   points_ii=im.points)
    if im.lower > 0:
        c2 = Status.HOLDS
    elif not math.isnan(im.sampled_min) and im.sampled_min <= LOG_FLOOR:
        c2 = Status.FAILS
    else:
        c2 = Status.UNKNOWN
        notes.append("inf |f| not certified positive on the window grid")
    # (iii): inf |f_d| > 0 and f zero-free, by an independent route
    if mu > 0:
        zf = zero_free_check(F, mu)
        details.update(T_iii=zf.T, intervals_iii=zf.intervals)
        c3 = zf.status
        if zf.note and zf.status != Status.HOLDS:
            notes.append("zero-freeness: " + zf.note)
    elif mod.upper <= LOG_FLOOR:
        c3 = Status.FAILS
    else:
        c3 = Status.UNKNOWN
    inconsistent = {c2, c3} == {Status.HOLDS, Status.FAILS}
    if inconsistent:
        notes.append("conditions (ii) and (iii) disagree: invariant breach")
        verdict = Verdict.NOT_CERTIFIED
    elif c2 == Status.HOLDS and c3 == Status.HOLDS:
        verdict = Verdict.RID
    else:
        verdict = Verdict.NOT_CERTIFIED
    return CriteriaReport(mu, mod.upper, im.lower, True, margin, c2, c3, verdict, tuple(notes),
                          inconsistent, details)


# ---------------------------------------------------------------------------
# ratio test


@dataclass(frozen=True)
class RatioTestResult:
    t_points: tuple
    values: tuple
    errors: tuple

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]


def _shift(t, tau, sign):
    if isinstance(t, PiMultiple) and isinstance(tau, PiMultiple):
        return PiMultiple(t.q + sign * tau.q)
    return float(t) + sign * float(tau)


def _f(F, t):
    return eval_cf(F, t) if isinstance(t, PiMultiple) else complex(eval_cf(F, float(t)))


def ratio_test(F: MixtureDistribution, tau, t_points: Sequence) -> RatioTestResult:
    """|f(t - tau) f(t + tau) / f(t)^2| at each point (exact phases for PiMultiple)."""
    vals, errs = [], []
    for t in t_points:
        ft = _f(F, t)
        if ft == 0:
            vals.append(float("nan"))
            errs.append(f"f({t}) = 0 exactly")
            continue
        num = _f(F, _shift(t, tau, -1)) * _f(F, _shift(t, tau, +1))
        vals.append(abs(num / ft**2))
        errs.append(None)
    return RatioTestResult(tuple(t_points), tuple(vals), tuple(errs))


def classify_divergence(values: Sequence[float], min_run: int = 5,
                        threshold: float = 1e3) -> bool:
    """Strictly increasing over >= min_run consecutive points, ending above threshold."""
    run = 1
    for i in range(1, len(values)):
        a, b = values[i - 1], values[i]
        if not (math.isfinite(a) and math.isfinite(b)):
            run = 1
            continue
        run = run + 1 if b > a else 1
        if run >= min_run and b > threshold:
            return True
    return False


@dataclass(frozen=True)
class CounterexampleRow:
    n: int
    f_minus: complex
    f_plus: complex
    f_center: complex
    ratio: float


def counterexample_table(F: MixtureDistribution, n_values: Sequence[int]) -> list:
    """Ratio test along t_n = pi (2n)!, tau = pi, with exact phase reduction."""
    rows = []
    tau = PiMultiple(1)
    for n in n_values:
        t = PiMultiple(math.factorial(2 * n))
        r = ratio_test(F, tau, [t])
        rows.append(CounterexampleRow(n, _f(F, _shift(t, tau, -1)), _f(F, _shift(t, tau, 1)),
                                      _f(F, t), r.values[0]))
    return rows


# ---------------------------------------------------------------------------
# singularity of W and decompositions


def pure_singular_verdict(n_a, alpha, c_s, c_d, all_powers_singular: bool = False
                          ) -> SingularVerdict:
    """Threshold test alpha >= n_a/(n_a+1) * c_s/c_d in exact arithmetic."""
    if all_powers_singular:
        return SingularVerdict.PURE_SINGULAR
    if not isinstance(n_a, (int, np.integer)) or isinstance(n_a, bool) or n_a < 2:
        raise ValueError("n_a must be an integer >= 2")
    a, s, d = exact_weight(alpha), exact_weight(c_s), exact_weight(c_d)
    if not (0 < a <= 1):
        raise ValueError("alpha must lie in (0, 1]")
    if not (0 <= s < d):
        raise ValueError("need 0 <= c_s < c_d")
    if a * (n_a + 1) * d >= n_a * s:
        return SingularVerdict.NOT_PURE_SINGULAR
    return SingularVerdict.INCONCLUSIVE


@dataclass(frozen=True)
class DecompositionReport:
    product: CriteriaReport
    first: CriteriaReport
    second: CriteriaReport
    margins: tuple
    warnings: tuple
    inconsistent: bool


def decomposition_check(F1: MixtureDistribution, F2: MixtureDistribution,
                        ss_class=None) -> DecompositionReport:
    """Criteria for F1 * F2 and for each factor, with the implied inequalities checked."""
    F = mixture_convolve(F1, F2, ss_class)
    rF = rid_criteria(F)
    if rF.verdict != Verdict.RID:
        raise CertificationError(f"product verdict is {rF.verdict.value}, not RID")
    r1, r2 = rid_criteria(F1), rid_criteria(F2)
    margins = (r1.margin, r2.margin)
    bad = any(m < -1e-9 for m in margins) or rF.inconsistent or r1.inconsistent or r2.inconsistent
    return DecompositionReport(rF, r1, r2, margins, tuple(F.warnings), bool(bad))


def convolution_power_domination(F: MixtureDistribution, n: int) -> tuple:
    """Whether F^{*n} necessarily loses domination, with exact part weights.

    The singular weight of F^{*n} is bounded below by the products with
    singular factors only of the kinds known to stay singular (one singular
    factor always; more when declared), and mu_d of F_d^{*n} is at most the
    n-th power of the sampled minimum of |f_d|.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if F.c_s == 0:
        raise ValueError("needs a singular part")
    cd, ca, cs = exact_weight(F.c_d), exact_weight(F.c_a), exact_weight(F.c_s)
    mu_up = exact_weight(fd_modulus(F.F_d).upper)
    if F.all_powers_singular:
        sing_max = n
    elif F.singular_square_class is not None:
        sing_max = int(F.singular_square_class[0]) - 1
    else:
        sing_max = 1
    s_lower = sum((math.comb(n, j) * cs**j * cd**(n - j) for j in range(1, min(sing_max, n) + 1)),
                  Fraction(0))
    w_d = cd**n
    w_a = 1 - (cd + cs) ** n if ca else Fraction(0)
    w_sd = (cd + cs) ** n - cd**n  # mass of d/s-only products with a singular factor
    threshold = w_d * mu_up**n
    lost = s_lower >= threshold
    weights = {"d": w_d, "a": w_a, "s_lower": s_lower, "s_or_ss": w_sd,
               "threshold": threshold, "mu_d_upper": mu_up}
    return bool(lost), weights


# ---------------------------------------------------------------------------
# random dominated mixtures (audits)


def random_dominated_mixture(rng: np.random.Generator) -> MixtureDistribution:
    """Random dominated mixture over the supported part families."""
    while True:
        k = int(rng.integers(1, 4))
        locs = sorted(set(int(v) for v in rng.integers(-3, 4, size=k)))
        w = rng.dirichlet(np.ones(len(locs)))
        # give one atom the bulk so that |f_d| stays away from 0
        w[int(rng.integers(len(locs)))] += len(locs)
        w /= w.sum()
        F_d = AtomicMeasure.from_pairs(list(zip(locs, w.tolist())))
        F_d = F_d.scaled(1.0 / F_d.mass)
        mu = fd_modulus(F_d).lower
        if mu >= 0.2:
            break
    c_d = float(rng.uniform(0.4, 0.8))
    c_s = float(rng.uniform(0.05, 0.8)) * c_d * mu
    c_a = 1.0 - c_d - c_s
    if c_a < 0.02:
        c_a = 0.0
        c_s = 1.0 - c_d
    kind = int(rng.integers(3))
    if kind == 0:
        F_s = CantorIFS()
    elif kind == 1:
        F_s = ProductCF("power", int(rng.integers(3, 5)))
    else:
        F_s = CantorIFS(Fraction(1, 4), (Fraction(0), Fraction(3, 4)),
                        (Fraction(1, 3), Fraction(2, 3)))
    F_a = None
    if c_a > 0:
        lo = float(rng.uniform(-2, 1))
        F_a = GridDensity.uniform(lo, lo + float(rng.uniform(0.5, 2))) if rng.random() < 0.5 \
            else GridDensity.triangular(lo, lo + float(rng.uniform(0.5, 2)))
    return MixtureDistribution(c_d, c_a, c_s, F_d, F_a, F_s,
                               all_powers_singular=isinstance(F_s, CantorIFS))


def domination_loss_n(F: MixtureDistribution) -> int:
    """Smallest n with n >= c_d/c_s (exact)."""
    r = exact_weight(F.c_d) / exact_weight(F.c_s)
    return max(1, math.ceil(r))
