"""Characteristic functions of mixtures: evaluation, logarithms, winding, bounds."""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .errors import CertificationError, DominationError, UnsupportedSupportError, ZeroCrossingError
from .measure_alg import AtomicMeasure, GridDensity, MixtureDistribution

LOG_FLOOR = 1e-12
JUMP_LIMIT = math.pi / 2
ROUND_REL = 1e-12  # pessimistic relative rounding allowance for float sums


@dataclass(frozen=True)
class PiMultiple:
    """The frequency t = pi*q for an exact rational q."""

    q: Fraction

    def __post_init__(self):
        object.__setattr__(self, "q", Fraction(self.q))

    def __float__(self):
        return math.pi * float(self.q)


def eval_cf(F: MixtureDistribution, t, part: str = "all", weighted: bool = True):
    """CF of the whole mixture or of one part at ``t``.

    ``t`` may be an array or a :class:`PiMultiple`; the latter evaluates
    every part with exact phase reduction where the part supports it.
    With ``weighted`` the part CF is multiplied by its mixture weight.
    """
    names = "dasu" if part == "all" else part
    if part not in ("all", "d", "a", "s", "u"):
        raise ValueError(f"unknown part selector {part!r}")
    if isinstance(t, PiMultiple):
        out = 0j
        for n in names:
            c = F.weight(n)
            if c > 0:
                v = F.part(n).cf_pi(t.q)
                out += (c if weighted or part == "all" else 1.0) * v
        return out
    t_arr = np.asarray(t, dtype=float)
    out = np.zeros(t_arr.shape, dtype=complex)
    for n in names:
        c = F.weight(n)
        if c > 0:
            out = out + (c if weighted or part == "all" else 1.0) * F.part(n).cf(t_arr)
    return out if out.ndim else complex(out)


def _as_callable(obj) -> Callable:
    if callable(obj) and not hasattr(obj, "cf"):
        return lambda t: np.asarray(obj(np.asarray(t, dtype=float)), dtype=complex)
    return lambda t: np.asarray(obj.cf(np.asarray(t, dtype=float)), dtype=complex)


# ---------------------------------------------------------------------------
# distinguished logarithm


@dataclass(frozen=True, eq=False)
class CfTrace:
    grid: np.ndarray
    values: np.ndarray
    args: np.ndarray

    @property
    def log_modulus(self) -> np.ndarray:
        return np.log(np.abs(self.values))

    @property
    def log_values(self) -> np.ndarray:
        return self.log_modulus + 1j * self.args

    @property
    def max_jump(self) -> float:
        return float(np.max(np.abs(np.diff(self.args)))) if self.args.size > 1 else 0.0

    def at(self, t: float) -> complex:
        """Distinguished log at a grid point."""
        i = int(np.searchsorted(self.grid, t))
        if i >= self.grid.size or self.grid[i] != t:
            raise KeyError(f"t={t} is not a trace grid point")
        return complex(self.log_values[i])


def distinguished_log(obj, t_max: float, points: Optional[int] = None,
                      floor: float = LOG_FLOOR, jump: float = JUMP_LIMIT,
                      max_points: int = 1 << 22) -> CfTrace:
    """Continuous argument of a CF on [-t_max, t_max], anchored at t = 0.

    The grid is bisected wherever consecutive samples differ in argument by
    ``jump`` or more.  A sample with modulus below ``floor``, or a jump that
    survives bisection down to float resolution, raises ZeroCrossingError.
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    fn = _as_callable(obj)
    if points is None:
        points = int(min(1 << 16, max(64, math.ceil(4 * t_max))))
    half = np.linspace(0.0, t_max, points + 1)
    grid = np.concatenate([-half[:0:-1], half])
    vals = fn(grid)
    while True:
        small = np.abs(vals) < floor
        if np.any(small):
            i = int(np.flatnonzero(small)[0])
            raise ZeroCrossingError(f"|f| below {floor:g} at t={grid[i]:.17g}", float(grid[i]))
        d = np.angle(vals[1:] / vals[:-1])
        bad = np.flatnonzero(np.abs(d) >= jump)
        if bad.size == 0:
            break
        mids = 0.5 * (grid[bad] + grid[bad + 1])
        same = (mids <= grid[bad]) | (mids >= grid[bad + 1])
        if np.any(same):
            i = int(bad[np.flatnonzero(same)[0]])
            raise ZeroCrossingError(f"argument jump unresolved near t={grid[i]:.17g}",
                                    float(grid[i]))
        if grid.size + mids.size > max_points:
            raise ZeroCrossingError("argument refinement exceeded the point budget",
                                    float(mids[0]))
        mv = fn(mids)
        grid = np.insert(grid, bad + 1, mids)
        vals = np.insert(vals, bad + 1, mv)
    i0 = int(np.flatnonzero(grid == 0.0)[0])
    d = np.angle(vals[1:] / vals[:-1])
    args = np.empty(grid.size)
    args[i0] = np.angle(vals[i0])
    if args[i0] == -math.pi:
        args[i0] = math.pi
    args[i0 + 1:] = args[i0] + np.cumsum(d[i0:])
    args[:i0] = args[i0] - np.cumsum(d[:i0][::-1])[::-1]
    return CfTrace(grid, vals, args)


# ---------------------------------------------------------------------------
# modulus bounds for the discrete part


@dataclass(frozen=True)
class FdModulus:
    lower: float
    upper: float  # smallest sampled |f_d|, an upper bound on the infimum
    method: str
    grid_size: int


_FD_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _segment_distance(P: np.ndarray, D: np.ndarray, half: float) -> np.ndarray:
    """min over |s| <= half of |P + D s| (s real), elementwise."""
    dd = np.abs(D) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(dd > 0, -np.real(np.conj(D) * P) / dd, 0.0)
    s = np.clip(s, -half, half)
    return np.abs(P + D * s)


def _lattice_modulus(idx: np.ndarray, w: np.ndarray, min_points: int = 1 << 16,
                     max_points: int = 1 << 24) -> FdModulus:
    n = idx - (idx[0] + idx[-1]) // 2
    span = int(n.max() - n.min())
    N = min_points
    while N < 8 * (span + 1):
        N *= 2
    if N > max_points:
        raise UnsupportedSupportError(f"lattice span {span} too wide for the period grid")
    a = np.zeros(N, dtype=complex)
    b = np.zeros(N, dtype=complex)
    np.add.at(a, n % N, w)
    np.add.at(b, n % N, 1j * n * w)
    P = N * np.fft.ifft(a)
    D = N * np.fft.ifft(b)
    delta = 2 * math.pi / N
    M2 = float(np.abs(w) @ (n.astype(float) ** 2))
    tv = float(np.abs(w).sum())
    dist = _segment_distance(P, D, delta / 2)
    lower = float(dist.min()) - M2 * delta**2 / 8 - ROUND_REL * tv * math.log2(N)
    return FdModulus(max(lower, 0.0), float(np.abs(P).min()), "lattice", N)


def _torus_modulus(vectors: np.ndarray, w: np.ndarray, budget: int = 1 << 24) -> FdModulus:
    d = vectors.shape[1]
    v = vectors - (vectors.min(axis=0) + vectors.max(axis=0)) // 2
    spans = v.max(axis=0) - v.min(axis=0)
    sizes = [max(16, 1 << int(math.ceil(math.log2(4 * (int(s) + 1))))) for s in spans]
    # grow the axes round-robin while the budget allows
    grown = True
    while grown:
        grown = False
        for ax in np.argsort([-(abs(w) @ np.abs(v[:, j])) / sizes[j] for j in range(d)]):
            if math.prod(sizes) * 2 <= budget:
                sizes[ax] *= 2
                grown = True
    if math.prod(sizes) > budget:
        raise UnsupportedSupportError("torus grid exceeds the point budget")
    a = np.zeros(sizes, dtype=complex)
    np.add.at(a, tuple((v[:, j] % sizes[j]) for j in range(d)), w)
    P = math.prod(sizes) * np.fft.ifftn(a)
    slack = sum(float(np.abs(w) @ np.abs(v[:, j])) * math.pi / sizes[j] for j in range(d))
    tv = float(np.abs(w).sum())
    absP = np.abs(P)
    lower = float(absP.min()) - slack - ROUND_REL * tv * math.log2(math.prod(sizes))
    return FdModulus(max(lower, 0.0), float(absP.min()), f"torus{d}", int(math.prod(sizes)))


def fd_modulus(F_d: AtomicMeasure) -> FdModulus:
    """Certified lower bound and sampled upper bound for inf_t |f_d(t)|."""
    hit = _FD_CACHE.get(F_d)
    if hit is not None:
        return hit
    if F_d.size == 0:
        res = FdModulus(0.0, 0.0, "empty", 0)
    elif F_d.size == 1:
        a = abs(float(F_d.weights[0]))
        res = FdModulus(a, a, "single", 1)
    elif F_d.is_lattice:
        res = _lattice_modulus(F_d.indices, F_d.weights)
    else:
        exact = F_d.exact_locations()
        if exact is None:
            x = F_d.locations
            if np.all(x == np.round(x)):
                idx = np.round(x).astype(np.int64)
                res = _lattice_modulus(idx, F_d.weights)
            else:
                raise UnsupportedSupportError(
                    "float atoms without exact structure: build F_d from exact locations")
        else:
            from .tvbounds import rational_basis_lift
            lift = rational_basis_lift(exact)
            if lift.dimension > 4:
                raise UnsupportedSupportError("torus dimension exceeds 4")
            vec = np.array([lift.exponent_map[e] for e in exact], dtype=np.int64)
            if lift.dimension == 1:
                order = np.argsort(vec[:, 0])
                res = _lattice_modulus(vec[order, 0], F_d.weights[order])
            else:
                res = _torus_modulus(vec, F_d.weights)
    _FD_CACHE[F_d] = res
    return res


def certified_min_modulus_fd(F_d: AtomicMeasure) -> float:
    """Rigorous lower bound on inf_t |f_d(t)| (0 when nothing positive is certified)."""
    return fd_modulus(F_d).lower


def tail_bound_fa(F_a, T: float) -> float:
    """Bound on sup_{|t| >= T} |f_a(t)|: V/T for a density of total variation V."""
    if not T > 0:
        raise ValueError("T must be positive")
    return float(F_a.tail_bound(T))


# ---------------------------------------------------------------------------
# mixture modulus


def _tail_sum(F: MixtureDistribution, T: float) -> float:
    return sum(c * min(1.0, p.tail_bound(T)) for n, c, p in F.parts() if n != "d")


def _non_decaying(F: MixtureDistribution) -> float:
    return _tail_sum(F, 1e300)


def lipschitz_cf(F: MixtureDistribution) -> float:
    """Upper bound on |f'(t)|: sum_i c_i E|X_i| over the parts."""
    return (1 + ROUND_REL) * sum(c * p.abs_moment() for _, c, p in F.parts())


def choose_tail_T(F: MixtureDistribution, margin: float, fraction: float = 0.5,
                  T0: float = 1.0) -> float:
    """Smallest power-of-two T >= T0 with decaying tail mass <= fraction*margin."""
    nd = _non_decaying(F)
    T = T0
    for _ in range(200):
        if _tail_sum(F, T) - nd <= fraction * margin:
            return T
        T *= 2
    raise CertificationError("no tail truncation point found")


@dataclass(frozen=True)
class InfModulus:
    lower: float
    window_lower: float
    tail_lower: float
    T: float
    mu_d: float
    margin: float
    points: int
    sampled_min: float


def inf_modulus_report(F: MixtureDistribution, mu_d: Optional[float] = None,
                       max_points: int = 1 << 22) -> InfModulus:
    """Certified lower bound on inf_t |f(t)| via the dominated-part argument."""
    mu = fd_modulus(F.F_d).lower if mu_d is None else mu_d
    nd = _non_decaying(F)
    margin = F.c_d * mu - nd
    if margin <= 0:
        return InfModulus(0.0, 0.0, 0.0, 0.0, mu, margin, 0, float("nan"))
    if _tail_sum(F, 1.0) - nd <= 0:
        # nothing decays: |f| >= c_d mu_d - (rest) everywhere
        lb = margin * (1 - ROUND_REL)
        return InfModulus(lb, lb, lb, 0.0, mu, margin, 0, float("nan"))
    T = choose_tail_T(F, margin)
    tail = margin - (_tail_sum(F, T) - nd)
    L = lipschitz_cf(F)
    n = 4096
    window, smin = 0.0, float("nan")
    while n <= max_points:
        t = np.linspace(0.0, T, n + 1)
        a = np.abs(F.cf(t))
        smin = float(a.min())
        window = smin - L * (T / n) / 2 - ROUND_REL * 4
        if window > 0 or smin <= LOG_FLOOR:
            break
        n *= 4
    lower = max(0.0, min(window, tail))
    return InfModulus(lower, window, tail, T, mu, margin, n + 1, smin)


def certified_inf_modulus(F: MixtureDistribution, mu_d: Optional[float] = None) -> float:
    """Rigorous lower bound on inf_t |f(t)|; 0 when certification fails."""
    return inf_modulus_report(F, mu_d).lower


# ---------------------------------------------------------------------------
# winding of the ac ratio


@dataclass(frozen=True)
class WindingResult:
    index: int
    arg_at_plus_inf: float
    arg_at_minus_inf: float
    tail_T: float
    certificate: float
    raw: float = 0.0


def ratio_ac(F: MixtureDistribution) -> Callable:
    """t -> R_a(t) = 1 + c_a f_a / (c_d f_d + c_s f_s)."""
    def R(t):
        t = np.asarray(t, dtype=float)
        den = F.c_d * F.F_d.cf(t)
        if F.c_s > 0:
            den = den + F.c_s * F.F_s.cf(t)
        return 1.0 + F.c_a * F.F_a.cf(t) / den
    return R


def winding_index(F: MixtureDistribution, mu_d: Optional[float] = None,
                  safety: float = 2.0) -> WindingResult:
    """Integer winding of R_a over the real line (zero when c_a = 0)."""
    if F.c_u > 0:
        raise ValueError("winding needs a fully classified mixture (unclassified mass present)")
    if F.c_a == 0:
        return WindingResult(0, 0.0, 0.0, 0.0, 0.0, 0.0)
    mu = fd_modulus(F.F_d).lower if mu_d is None else mu_d
    margin = F.c_d * mu - F.c_s
    if margin <= 0:
        raise DominationError("dominated singular part not certified: "
                              f"c_d*mu_d - c_s = {margin:.3g}")
    # past T, |c_a f_a| <= margin / (2 safety), so R_a stays near 1
    T = choose_tail_T(F, margin, 0.5 / safety)
    R = ratio_ac(F)
    tr = distinguished_log(R, T)
    ends = R(np.array([-T, T]))
    plus = float(tr.args[-1] - np.angle(ends[1]))
    minus = float(tr.args[0] - np.angle(ends[0]))
    raw = (plus - minus) / (2 * math.pi)
    idx = int(round(raw))
    if abs(raw - idx) >= 0.1:
        raise CertificationError(f"non-integer winding {raw:.6g}")
    return WindingResult(idx, plus, minus, T, tr.max_jump, raw)
