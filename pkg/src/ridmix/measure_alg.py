"""Finite signed measures, sampled densities and singular generator families.

Three representations are supported:

* :class:`AtomicMeasure` - finitely many weighted atoms.  Rational atoms are
  kept on an exact lattice ``origin + step * index`` (integer indices), so
  convolution never has to merge nearly-equal floats.  Irrational atoms with a
  declared rational-linear structure are kept symbolically as ``QLinear``.
* :class:`GridDensity` - a density sampled on a uniform grid, understood as
  its piecewise-linear interpolant (zero outside the grid).
* singular generators (:class:`CantorIFS`, :class:`ProductCF`,
  :class:`DeclaredGeneric`) - closed-form characteristic functions plus
  refinement to atomic approximations.

:class:`CompositePart` represents convolutions and mixtures of the above,
which is what mixture products produce.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import UnsupportedLevelError
from .exact import QLinear, cos_pi, cis_pi, frac_gcd, lcm_many, parse_exact

MERGE_TOL = 1e-14
PROB_TOL = 1e-12
DENSITY_TOL = 1e-8
MAX_INDEX = 2**62
# Memory guard for dense lattice accumulation (number of float64 cells).
DENSE_LIMIT = 2**27


# ---------------------------------------------------------------------------
# exponential sums


def _is_uniform(t: np.ndarray) -> bool:
    if t.size < 3:
        return False
    d = np.diff(t)
    return bool(d[0] != 0 and np.all(np.abs(d - d[0]) <= 1e-12 * max(abs(d[0]), 1e-300)))


def exp_sum(x: np.ndarray, w: np.ndarray, t) -> np.ndarray:
    """sum_j w_j exp(i t x_j) for every entry of ``t``."""
    t = np.asarray(t, dtype=float)
    shape = t.shape
    tf = t.ravel()
    out = np.zeros(tf.size, dtype=complex)
    if x.size == 0 or tf.size == 0:
        return out.reshape(shape)
    if x.size >= 2048 and tf.size >= 64 and _is_uniform(tf):
        # geometric recurrence, re-anchored every 128 steps
        dt = tf[1] - tf[0]
        z = np.exp(1j * dt * x)
        p = None
        for m in range(tf.size):
            if m % 128 == 0:
                p = w * np.exp(1j * tf[m] * x)
            else:
                p *= z
            out[m] = p.sum()
        return out.reshape(shape)
    block = max(1, (1 << 21) // x.size)
    for i in range(0, tf.size, block):
        tb = tf[i:i + block]
        out[i:i + block] = np.exp(1j * np.outer(tb, x)) @ w
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# atomic measures


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Finite signed measure ``sum_j w_j delta_{x_j}`` with increasing x_j.

    Build instances through the classmethods; the raw constructor expects
    already-normalized arrays.  When ``step`` is set the atoms sit at
    ``origin + step * indices`` exactly; when ``exact`` is set it holds the
    exact (symbolic) location of each atom.
    """

    locations: np.ndarray
    weights: np.ndarray
    origin: object = None
    step: Optional[Fraction] = None
    indices: Optional[np.ndarray] = None
    exact: Optional[tuple] = None

    def __post_init__(self):
        x = np.asarray(self.locations, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if x.ndim != 1 or x.shape != w.shape:
            raise ValueError("locations and weights must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
            raise ValueError("atoms must be finite")
        if self.step is not None:
            idx = np.asarray(self.indices, dtype=np.int64)
            if idx.shape != x.shape or np.any(np.diff(idx) <= 0):
                raise ValueError("lattice indices must be strictly increasing")
            object.__setattr__(self, "indices", _readonly(idx))
        elif x.size > 1 and np.any(np.diff(x) <= 0):
            if self.exact is None:
                raise ValueError("locations must be strictly increasing")
        object.__setattr__(self, "locations", _readonly(x))
        object.__setattr__(self, "weights", _readonly(w))

    # -- construction -----------------------------------------------------

    @classmethod
    def empty(cls) -> "AtomicMeasure":
        return cls(np.zeros(0), np.zeros(0))

    @classmethod
    def point(cls, x=0, weight=1.0) -> "AtomicMeasure":
        return cls.from_pairs([(x, weight)])

    @classmethod
    def from_arrays(cls, locations, weights, merge_tol: float = MERGE_TOL) -> "AtomicMeasure":
        """Float atoms; locations within ``merge_tol`` are merged."""
        x = np.asarray(locations, dtype=float).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if x.shape != w.shape:
            raise ValueError("locations and weights differ in length")
        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order]
        if x.size:
            new = np.empty(x.size, dtype=bool)
            new[0] = True
            new[1:] = np.diff(x) > merge_tol
            grp = np.cumsum(new) - 1
            w = np.bincount(grp, weights=w)
            # representative location: first member of each cluster
            x = x[new]
        keep = w != 0
        return cls(x[keep], w[keep])

    @classmethod
    def on_lattice(cls, origin, step, indices, weights) -> "AtomicMeasure":
        """Atoms at ``origin + step*indices``; duplicate indices are summed."""
        step = Fraction(step)
        if step <= 0:
            raise ValueError("lattice step must be positive")
        idx = np.asarray(indices, dtype=np.int64).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if idx.shape != w.shape:
            raise ValueError("indices and weights differ in length")
        if idx.size and np.max(np.abs(idx)) > MAX_INDEX:
            raise OverflowError("lattice index out of range")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            idx, inv = np.unique(idx, return_inverse=True)
            w = np.bincount(inv, weights=w)
        keep = w != 0
        idx, w = idx[keep], w[keep]
        return cls(_lattice_locations(origin, step, idx), w, origin, step, idx)

    @classmethod
    def from_pairs(cls, pairs, merge_tol: float = MERGE_TOL) -> "AtomicMeasure":
        """Build from ``(location, weight)`` pairs.

        Locations that are ints, Fractions or rational strings go on an exact
        lattice; ``QLinear`` values (or strings naming generators) are kept
        symbolically; any float location switches to float merging.
        """
        pairs = list(pairs)
        if not pairs:
            return cls.empty()
        locs = [p[0] for p in pairs]
        ws = [float(p[1]) for p in pairs]
        if any(isinstance(v, (float, np.floating)) for v in locs):
            return cls.from_arrays([float(v) for v in locs], ws, merge_tol)
        ex = [parse_exact(v) for v in locs]
        if all(isinstance(v, Fraction) for v in ex):
            return _lattice_from_fractions(ex, ws)
        return _symbolic(ex, ws)

    # -- basic properties -------------------------------------------------

    @property
    def size(self) -> int:
        return int(self.weights.size)

    def __len__(self):
        return self.size

    @property
    def is_lattice(self) -> bool:
        return self.step is not None

    @property
    def is_symbolic(self) -> bool:
        return self.exact is not None

    @property
    def tv(self) -> float:
        return float(np.abs(self.weights).sum())

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def is_probability(self, tol: float = PROB_TOL) -> bool:
        return bool(np.all(self.weights >= 0) and abs(self.mass - 1.0) <= tol)

    def exact_locations(self) -> Optional[list]:
        """Exact locations (Fractions or QLinear) when known, else None."""
        if self.exact is not None:
            return list(self.exact)
        if self.step is not None and isinstance(self.origin, Fraction):
            return [self.origin + self.step * int(i) for i in self.indices]
        return None

    def pairs(self) -> list:
        return list(zip(self.locations.tolist(), self.weights.tolist()))

    def abs_moment(self) -> float:
        """sum |w_j| |x_j|."""
        return float(np.abs(self.weights) @ np.abs(self.locations))

    def mean(self) -> float:
        return float(self.weights @ self.locations)

    # -- transforms -------------------------------------------------------

    def cf(self, t) -> np.ndarray:
        """Fourier-Stieltjes transform sum_j w_j exp(i t x_j)."""
        if self.step is not None and self.size > 1:
            # factor out the origin so the phases stay small
            o = float(self.origin)
            t_arr = np.asarray(t, dtype=float)
            rel = float(self.step) * self.indices.astype(float)
            return np.exp(1j * t_arr * o) * exp_sum(rel, self.weights, t_arr)
        return exp_sum(self.locations, self.weights, t)

    def cf_pi(self, q) -> complex:
        """Transform at ``t = pi*q`` for exact rational q, exact phase reduction."""
        q = Fraction(q)
        exact = self.exact_locations()
        if exact is None or any(not isinstance(v, Fraction) for v in exact):
            return complex(self.cf(math.pi * float(q)))
        return complex(sum(w * cis_pi(q * x) for x, w in zip(exact, self.weights.tolist())))

    def tail_bound(self, T: float) -> float:
        # atoms do not decay
        return self.tv

    def scaled(self, c: float) -> "AtomicMeasure":
        c = float(c)
        if c == 0:
            return AtomicMeasure.empty()
        return AtomicMeasure(self.locations, self.weights * c, self.origin, self.step,
                             self.indices, self.exact)

    def shifted(self, a) -> "AtomicMeasure":
        """Translate every atom by ``a`` (exact when a is rational)."""
        if self.step is not None and not isinstance(a, float):
            a_ex = parse_exact(a)
            if isinstance(a_ex, Fraction) and isinstance(self.origin, Fraction):
                o = self.origin + a_ex
                return AtomicMeasure(_lattice_locations(o, self.step, self.indices),
                                     self.weights, o, self.step, self.indices)
        if self.exact is not None and not isinstance(a, float):
            a_ex = parse_exact(a)
            ex = tuple(v + a_ex for v in self.exact)
            return _symbolic(list(ex), self.weights.tolist())
        if self.step is not None:
            o = float(self.origin) + float(a)
            return AtomicMeasure(_lattice_locations(o, self.step, self.indices),
                                 self.weights, o, self.step, self.indices)
        return AtomicMeasure.from_arrays(self.locations + float(a), self.weights)

    def reflected(self) -> "AtomicMeasure":
        """Image under x -> -x."""
        if self.step is not None:
            o = -self.origin
            idx = -self.indices[::-1]
            return AtomicMeasure(_lattice_locations(o, self.step, idx),
                                 self.weights[::-1].copy(), o, self.step, idx)
        if self.exact is not None:
            return _symbolic([-v for v in self.exact], self.weights.tolist())
        return AtomicMeasure.from_arrays(-self.locations, self.weights)

    def refine(self, level: int = 0, anchor: str = "origin") -> "AtomicMeasure":
        return self

    def refine_power(self, level: int, k: int, anchor: str = "origin") -> "AtomicMeasure":
        return power_atomic(self, k)

    def as_float(self) -> "AtomicMeasure":
        return AtomicMeasure(self.locations, self.weights)


def _lattice_locations(origin, step: Fraction, idx: np.ndarray) -> np.ndarray:
    if not isinstance(origin, Fraction):
        return float(origin) + float(step) * idx.astype(float)
    if idx.size == 0:
        return np.zeros(0)
    den = origin.denominator * step.denominator
    base = origin.numerator * step.denominator
    mult = step.numerator * origin.denominator
    big = int(np.max(np.abs(idx))) * mult + abs(base)
    if big < 2**62:
        return (base + idx * mult).astype(float) / float(den)
    return np.array([float(Fraction(base + int(i) * mult, den)) for i in idx])


def _lattice_from_fractions(ex: list, ws: list) -> AtomicMeasure:
    origin = min(ex)
    offs = [v - origin for v in ex]
    step = Fraction(0)
    for o in offs:
        step = frac_gcd(step, o)
    if step == 0:
        step = Fraction(1)
    idx = [int(o / step) for o in offs]
    return AtomicMeasure.on_lattice(origin, step, idx, ws)


def _symbolic(ex: list, ws: list) -> AtomicMeasure:
    acc: dict = {}
    for v, w in zip(ex, ws):
        key = v if isinstance(v, QLinear) else QLinear.rational(v)
        acc[key] = acc.get(key, 0.0) + float(w)
    items = [(k, w) for k, w in acc.items() if w != 0]
    if all(k.is_rational for k, _ in items):
        return _lattice_from_fractions([k.rational_value() for k, _ in items],
                                       [w for _, w in items]) if items else AtomicMeasure.empty()
    items.sort(key=lambda kw: float(kw[0]))
    x = np.array([float(k) for k, _ in items])
    w = np.array([v for _, v in items])
    return AtomicMeasure(x, w, exact=tuple(k for k, _ in items))


def _common_lattice(measures: Sequence[AtomicMeasure]):
    """Common exact lattice of several lattice measures, or None."""
    if not measures or any(m.step is None for m in measures):
        return None
    if any(not isinstance(m.origin, Fraction) for m in measures):
        o0 = float(measures[0].origin)
        if any(float(m.origin) != o0 for m in measures):
            return None
        step = Fraction(0)
        for m in measures:
            step = frac_gcd(step, m.step)
        return measures[0].origin, step
    origin = measures[0].origin
    step = Fraction(0)
    for m in measures:
        step = frac_gcd(frac_gcd(step, m.step), m.origin - origin)
    return origin, step


def _reindex(m: AtomicMeasure, origin, step: Fraction) -> np.ndarray:
    ratio = m.step / step
    if ratio.denominator != 1:
        raise ValueError("step is not a refinement")
    off = Fraction(0) if not isinstance(origin, Fraction) else (m.origin - origin) / step
    if off.denominator != 1:
        raise ValueError("origin is not on the common lattice")
    r, o = int(ratio), int(off)
    if m.size and (abs(int(m.indices[-1])) * r + abs(o) > MAX_INDEX or
                   abs(int(m.indices[0])) * r + abs(o) > MAX_INDEX):
        raise OverflowError("lattice index out of range")
    return m.indices * r + o


def _sparse_dense_conv(ia, wa, ib, wb):
    """Exact-index convolution of two sparse integer-indexed weight vectors."""
    na, nb = ia.size, ib.size
    if na == 0 or nb == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    if na > nb:
        ia, wa, ib, wb, na, nb = ib, wb, ia, wa, nb, na
    span_b = int(ib[-1] - ib[0]) + 1
    span = int(ia[-1] - ia[0]) + span_b
    pair_cost = na * nb * max(1.0, math.log2(na * nb + 1))
    dense_cost = na * span_b + span
    if span <= DENSE_LIMIT and dense_cost <= 4 * pair_cost:
        dense_b = np.zeros(span_b)
        dense_b[ib - ib[0]] = wb
        out = np.zeros(span)
        base = ia - ia[0]
        for off, w in zip(base.tolist(), wa.tolist()):
            out[off:off + span_b] += w * dense_b
        nz = np.flatnonzero(out)
        return nz.astype(np.int64) + (ia[0] + ib[0]), out[nz]
    idx = np.empty(0, dtype=np.int64)
    wts = np.empty(0)
    chunk = max(1, (1 << 24) // nb)
    parts_i, parts_w = [], []
    for s in range(0, na, chunk):
        si = (ia[s:s + chunk, None] + ib[None, :]).ravel()
        sw = (wa[s:s + chunk, None] * wb[None, :]).ravel()
        u, inv = np.unique(si, return_inverse=True)
        parts_i.append(u)
        parts_w.append(np.bincount(inv, weights=sw))
    idx = np.concatenate(parts_i)
    wts = np.concatenate(parts_w)
    if len(parts_i) > 1:
        idx, inv = np.unique(idx, return_inverse=True)
        wts = np.bincount(inv, weights=wts)
    keep = wts != 0
    return idx[keep], wts[keep]


def convolve_atomic(a: AtomicMeasure, b: AtomicMeasure) -> AtomicMeasure:
    """Convolution: atoms at pairwise sums with multiplied weights, merged."""
    if a.size == 0 or b.size == 0:
        return AtomicMeasure.empty()
    if a.step is not None and b.step is not None:
        step = frac_gcd(a.step, b.step)
        ia = a.indices * int(a.step / step)
        ib = b.indices * int(b.step / step)
        if isinstance(a.origin, Fraction) and isinstance(b.origin, Fraction):
            origin = a.origin + b.origin
        else:
            origin = float(a.origin) + float(b.origin)
        idx, w = _sparse_dense_conv(ia, a.weights, ib, b.weights)
        return AtomicMeasure(_lattice_locations(origin, step, idx), w, origin, step, idx)
    ea, eb = a.exact_locations(), b.exact_locations()
    if ea is not None and eb is not None:
        acc: dict = {}
        for x, wx in zip(ea, a.weights.tolist()):
            qx = x if isinstance(x, QLinear) else QLinear.rational(x)
            for y, wy in zip(eb, b.weights.tolist()):
                key = qx + y
                acc[key] = acc.get(key, 0.0) + wx * wy
        return _symbolic(list(acc.keys()), list(acc.values()))
    x = (a.locations[:, None] + b.locations[None, :]).ravel()
    w = (a.weights[:, None] * b.weights[None, :]).ravel()
    return AtomicMeasure.from_arrays(x, w)


def power_atomic(m: AtomicMeasure, k: int) -> AtomicMeasure:
    """k-fold convolution power by repeated squaring (k = 0 gives delta_0)."""
    if k < 0:
        raise ValueError("power must be non-negative")
    result = AtomicMeasure.point(0)
    base = m
    while k:
        if k & 1:
            result = convolve_atomic(result, base)
        k >>= 1
        if k:
            base = convolve_atomic(base, base)
    return result


def combine(measures: Sequence[AtomicMeasure], coefs: Sequence[float]) -> AtomicMeasure:
    """Linear combination sum_i c_i m_i, merged exactly when on a common lattice."""
    ms = [m for m, c in zip(measures, coefs) if c != 0 and m.size]
    cs = [float(c) for m, c in zip(measures, coefs) if c != 0 and m.size]
    if not ms:
        return AtomicMeasure.empty()
    lat = _common_lattice(ms)
    if lat is not None:
        origin, step = lat
        idx = np.concatenate([_reindex(m, origin, step) for m in ms])
        w = np.concatenate([m.weights * c for m, c in zip(ms, cs)])
        return AtomicMeasure.on_lattice(origin, step, idx, w)
    exs = [m.exact_locations() for m in ms]
    if all(e is not None for e in exs):
        ex = [v for e in exs for v in e]
        w = [float(x) * c for m, c in zip(ms, cs) for x in m.weights]
        return _symbolic(ex, w)
    x = np.concatenate([m.locations for m in ms])
    w = np.concatenate([m.weights * c for m, c in zip(ms, cs)])
    return AtomicMeasure.from_arrays(x, w)


# ---------------------------------------------------------------------------
# signed approximations and pruning


@dataclass(frozen=True, eq=False)
class SignedMeasureApprox:
    """Atoms plus an upper bound on their TV distance to the true measure."""

    atoms: AtomicMeasure
    tv_error_budget: float = 0.0

    def __post_init__(self):
        if not self.tv_error_budget >= 0:
            raise ValueError("error budget must be non-negative")

    @property
    def tv(self) -> float:
        return self.atoms.tv

    def cf(self, t):
        return self.atoms.cf(t)

    def convolve(self, other: "SignedMeasureApprox") -> "SignedMeasureApprox":
        e1, e2 = self.tv_error_budget, other.tv_error_budget
        err = e1 * other.tv + e2 * self.tv + e1 * e2
        return SignedMeasureApprox(convolve_atomic(self.atoms, other.atoms),
                                   max(err, e1, e2) if (e1 or e2) else 0.0)

    def prune(self, budget: float) -> "SignedMeasureApprox":
        p = prune(self.atoms, budget)
        return SignedMeasureApprox(p.atoms, self.tv_error_budget + p.tv_error_budget)


def prune(m: AtomicMeasure, budget: float) -> SignedMeasureApprox:
    """Drop the smallest atoms whose cumulative |weight| stays within ``budget``."""
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if budget == 0 or m.size == 0:
        return SignedMeasureApprox(m, 0.0)
    aw = np.abs(m.weights)
    order = np.argsort(aw, kind="stable")  # ties: location ascending
    cum = np.cumsum(aw[order])
    n_drop = int(np.searchsorted(cum, budget, side="right"))
    if n_drop == 0:
        return SignedMeasureApprox(m, 0.0)
    keep = np.ones(m.size, dtype=bool)
    keep[order[:n_drop]] = False
    dropped = float(cum[n_drop - 1])
    exact = None if m.exact is None else tuple(e for e, k in zip(m.exact, keep) if k)
    idx = None if m.indices is None else m.indices[keep]
    kept = AtomicMeasure(m.locations[keep], m.weights[keep], m.origin, m.step, idx, exact)
    return SignedMeasureApprox(kept, dropped)


# ---------------------------------------------------------------------------
# sampled densities


def _trapz(y: np.ndarray, h: float) -> float:
    return float(h * (y.sum() - 0.5 * (y[0] + y[-1])))


def _seg_moments(u: np.ndarray):
    """E0(u) = int_0^1 e^{ius} ds and E1(u) = int_0^1 s e^{ius} ds."""
    e0 = np.empty(u.shape, dtype=complex)
    e1 = np.empty(u.shape, dtype=complex)
    small = np.abs(u) < 0.5
    us = u[small]
    if us.size:
        # Taylor series: sum (iu)^n/(n+1)!, sum (iu)^n/(n!(n+2))
        iu = 1j * us
        term = np.ones_like(iu)
        s0 = np.zeros_like(iu)
        s1 = np.zeros_like(iu)
        for n in range(22):
            s0 += term / (n + 1)
            s1 += term / (n + 2)
            term = term * iu / (n + 1)
        e0[small] = s0
        e1[small] = s1
    ub = u[~small]
    if ub.size:
        ex = np.exp(1j * ub)
        e0[~small] = (ex - 1) / (1j * ub)
        e1[~small] = ex / (1j * ub) + (ex - 1) / ub**2
    return e0, e1


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Density sampled at ``x_min + j*h``; read as its linear interpolant."""

    x_min: float
    x_max: float
    h: float
    samples: np.ndarray
    total_variation_of_density: float = field(default=None)

    def __post_init__(self):
        p = np.asarray(self.samples, dtype=float).ravel()
        if not self.h > 0:
            raise ValueError("grid step must be positive")
        if p.size < 2 or not np.all(np.isfinite(p)):
            raise ValueError("need at least two finite samples")
        span = self.x_min + (p.size - 1) * self.h
        if abs(span - self.x_max) > 1e-9 * max(1.0, abs(self.x_max), abs(self.x_min)):
            raise ValueError("x_max does not match x_min + (n-1)h")
        object.__setattr__(self, "samples", _readonly(p))
        if self.total_variation_of_density is None:
            tv = abs(p[0]) + float(np.abs(np.diff(p)).sum()) + abs(p[-1])
            object.__setattr__(self, "total_variation_of_density", tv)

    @classmethod
    def uniform(cls, a: float = 0.0, b: float = 1.0) -> "GridDensity":
        return cls(float(a), float(b), float(b - a), np.full(2, 1.0 / (b - a)))

    @classmethod
    def triangular(cls, a: float = -1.0, b: float = 1.0) -> "GridDensity":
        """Symmetric triangle on [a, b] (exact: the peak is a grid node)."""
        h = (b - a) / 2
        return cls(float(a), float(b), float(h), np.array([0.0, 1.0 / h, 0.0]))

    @classmethod
    def from_function(cls, fn: Callable, x_min: float, x_max: float, points: int = 2049,
                      normalize: bool = True) -> "GridDensity":
        x = np.linspace(x_min, x_max, points)
        p = np.asarray(fn(x), dtype=float)
        g = cls(float(x_min), float(x_max), (x_max - x_min) / (points - 1), p)
        return g.normalized() if normalize else g

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.samples.size)

    def integral(self) -> float:
        return _trapz(self.samples, self.h)

    def l1_norm(self) -> float:
        p = self.samples
        # exact L1 of the interpolant: segments with a sign change lose mass
        a, b = p[:-1], p[1:]
        same = a * b >= 0
        seg = np.where(same, np.abs(a + b) / 2,
                       (a * a + b * b) / (2 * np.where(same, 1.0, np.abs(a - b))))
        return float(seg.sum() * self.h)

    def normalized(self) -> "GridDensity":
        z = self.integral()
        if z <= 0:
            raise ValueError("density integrates to a non-positive value")
        return GridDensity(self.x_min, self.x_max, self.h, self.samples / z)

    def is_probability(self, tol: float = DENSITY_TOL) -> bool:
        return bool(np.all(self.samples >= 0) and abs(self.integral() - 1.0) <= tol)

    def cf(self, t) -> np.ndarray:
        """Exact Fourier transform of the piecewise-linear interpolant."""
        t = np.asarray(t, dtype=float)
        shape = t.shape
        tf = t.ravel()
        p = self.samples
        a, d = p[:-1], np.diff(p)
        x0 = self.nodes[:-1]
        out = np.empty(tf.size, dtype=complex)
        block = max(1, (1 << 20) // max(1, a.size))
        for i in range(0, tf.size, block):
            tb = tf[i:i + block]
            e0, e1 = _seg_moments(self.h * tb)
            phase = np.exp(1j * np.outer(tb, x0))
            out[i:i + block] = self.h * ((phase @ a) * e0 + (phase @ d) * e1)
        return out.reshape(shape)

    def cf_pi(self, q) -> complex:
        return complex(self.cf(math.pi * float(Fraction(q))))

    def fourier_sum(self, t) -> np.ndarray:
        """Trapezoid rule h * sum' p_j e^{i t x_j} (endpoint weights 1/2)."""
        w = self.samples * self.h
        w = w.copy()
        w[0] *= 0.5
        w[-1] *= 0.5
        return exp_sum(self.nodes, w, t)

    def tail_bound(self, T: float) -> float:
        """sup_{|t|>=T} |cf(t)| <= V/T for a density of total variation V."""
        if not T > 0:
            raise ValueError("T must be positive")
        return self.total_variation_of_density / T

    def abs_moment(self) -> float:
        return max(abs(self.x_min), abs(self.x_max)) * self.l1_norm()

    def mean(self) -> float:
        x, p = self.nodes, self.samples
        return _trapz(x * p, self.h)

    def refine(self, level: int = 0, anchor: str = "origin"):
        raise UnsupportedLevelError("densities have no atomic refinement")


# ---------------------------------------------------------------------------
# singular generator families


@dataclass(frozen=True)
class CantorIFS:
    """Self-similar measure of the maps x -> ratio*x + shift_i with weights p_i."""

    ratio: Fraction = Fraction(1, 3)
    shifts: tuple = (Fraction(0), Fraction(2, 3))
    weights: tuple = (Fraction(1, 2), Fraction(1, 2))
    max_level: int = 20

    def __post_init__(self):
        r = parse_exact(self.ratio)
        sh = tuple(parse_exact(s) for s in self.shifts)
        ws = tuple(parse_exact(w) for w in self.weights)
        if not isinstance(r, Fraction) or not (0 < r < Fraction(1, 2)):
            raise ValueError("ratio must be a rational in (0, 1/2)")
        if any(not isinstance(s, Fraction) for s in sh):
            raise ValueError("shifts must be rational")
        if len(sh) < 2 or len(sh) != len(ws) or len(set(sh)) != len(sh):
            raise ValueError("need at least two distinct shifts, one weight each")
        if any(not isinstance(w, Fraction) or w <= 0 for w in ws) or sum(ws) != 1:
            raise ValueError("weights must be positive rationals summing to 1")
        object.__setattr__(self, "ratio", r)
        object.__setattr__(self, "shifts", sh)
        object.__setattr__(self, "weights", ws)

    @classmethod
    def classical(cls) -> "CantorIFS":
        return cls()

    def mean(self) -> Fraction:
        return sum(w * b for w, b in zip(self.weights, self.shifts)) / (1 - self.ratio)

    def support_hull(self) -> tuple:
        return min(self.shifts) / (1 - self.ratio), max(self.shifts) / (1 - self.ratio)

    def abs_moment(self) -> float:
        lo, hi = self.support_hull()
        return float(max(abs(lo), abs(hi)))

    def tail_bound(self, T: float) -> float:
        return 1.0

    def _mask(self, tau: np.ndarray) -> np.ndarray:
        b = np.array([float(s) for s in self.shifts])
        w = np.array([float(p) for p in self.weights])
        return np.exp(1j * np.multiply.outer(tau, b)) @ w

    def cf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.ones(t.shape, dtype=complex)
        bmax = max(abs(float(s)) for s in self.shifts)
        tmax = float(np.max(np.abs(t))) if t.size else 0.0
        r = float(self.ratio)
        scale = 1.0
        while tmax * scale * bmax >= 1e-16:
            out = out * self._mask(t * scale)
            scale *= r
        return out

    def cf_pi(self, q) -> complex:
        q = Fraction(q)
        out = 1.0 + 0j
        bmax = max(abs(s) for s in self.shifts)
        scale = Fraction(1)
        while abs(float(q * scale * bmax)) * math.pi >= 1e-16:
            out *= sum(float(w) * cis_pi(q * scale * b) for w, b in zip(self.weights, self.shifts))
            scale *= self.ratio
            if out == 0:
                break
        return out

    def _unit(self, level: int) -> Fraction:
        den = lcm_many([s.denominator for s in self.shifts])
        return Fraction(1, den * self.ratio.denominator ** max(level - 1, 0))

    def _digit(self, j: int, level: int):
        """Integer indices (in lattice units) and weights of the j-th digit."""
        unit = self._unit(level)
        idx = [int(self.ratio ** j * s / unit) for s in self.shifts]
        return np.array(idx, dtype=np.int64), np.array([float(w) for w in self.weights])

    def _anchor(self, level: int, anchor: str) -> Fraction:
        if anchor == "origin":
            return Fraction(0)
        if anchor == "center":
            return self.ratio ** level * self.mean()
        raise ValueError(f"unknown anchor {anchor!r}")

    def refine(self, level: int, anchor: str = "origin") -> AtomicMeasure:
        return self.refine_power(level, 1, anchor)

    def refine_power(self, level: int, k: int, anchor: str = "origin") -> AtomicMeasure:
        """k-fold convolution power of the level-``level`` refinement.

        Uses the digit structure: the level-L approximation is the convolution
        of its L digit measures, so its k-th power is the convolution of the
        digit k-th powers.
        """
        if not (isinstance(level, (int, np.integer)) and 0 <= level <= self.max_level):
            raise UnsupportedLevelError(f"level {level} outside 0..{self.max_level}")
        if k < 0:
            raise ValueError("power must be non-negative")
        shift = self._anchor(level, anchor) * k
        unit = self._unit(level)
        idx = np.zeros(1, dtype=np.int64)
        w = np.ones(1)
        if k > 0:
            for j in range(level - 1, -1, -1):
                di, dw = self._digit(j, level)
                pi_, pw = np.zeros(1, dtype=np.int64), np.ones(1)
                for _ in range(k):
                    pi_, pw = _sparse_dense_conv(pi_, pw, di, dw)
                idx, w = _sparse_dense_conv(idx, w, pi_, pw)
        return AtomicMeasure.on_lattice(shift, unit, idx, w)


@dataclass(frozen=True)
class ProductCF:
    """Law of sum_k eps_k / a_k with independent signs; CF prod cos(t/a_k).

    ``kind`` is ``"factorial"`` (a_k = k!) or ``"power"`` (a_k = base**k).
    """

    kind: str = "factorial"
    base: int = 3
    max_level: int = 40
    max_bits: int = 1 << 16

    def __post_init__(self):
        if self.kind not in ("factorial", "power"):
            raise ValueError("kind must be 'factorial' or 'power'")
        if self.kind == "power" and not (isinstance(self.base, int) and self.base >= 2):
            raise ValueError("power base must be an integer >= 2")

    def scale(self, k: int) -> int:
        if k < 1:
            raise ValueError("scales are indexed from 1")
        return math.factorial(k) if self.kind == "factorial" else self.base ** k

    def mean(self) -> Fraction:
        return Fraction(0)

    def abs_moment(self) -> float:
        # sum_k 1/a_k, rounded up
        return (math.e - 1 if self.kind == "factorial" else 1.0 / (self.base - 1)) + 1e-15

    def tail_bound(self, T: float) -> float:
        return 1.0

    def cf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.ones(t.shape, dtype=complex)
        tmax = float(np.max(np.abs(t))) if t.size else 0.0
        k = 1
        while True:
            a = float(self.scale(k))
            if tmax / a < 1.4e-8:
                break
            out = out * np.cos(t / a)
            k += 1
        return out

    def cf_pi(self, q) -> complex:
        """CF at t = pi*q, with each factor reduced exactly modulo 2."""
        q = Fraction(q)
        if abs(q.numerator).bit_length() > self.max_bits:
            raise OverflowError("argument exceeds the configured integer precision")
        out = 1.0
        k = 1
        while True:
            a = self.scale(k)
            r = q / a
            if abs(float(r)) * math.pi < 1.4e-8:
                break
            out *= cos_pi(r)
            if out == 0:
                break
            k += 1
        return complex(out)

    def _digit(self, k: int, unit_den: int):
        a = self.scale(k)
        m = unit_den // a
        return np.array([-m, m], dtype=np.int64), np.array([0.5, 0.5])

    def refine(self, level: int, anchor: str = "origin") -> AtomicMeasure:
        return self.refine_power(level, 1, anchor)

    def refine_power(self, level: int, k: int, anchor: str = "origin") -> AtomicMeasure:
        if not (isinstance(level, (int, np.integer)) and 0 <= level <= self.max_level):
            raise UnsupportedLevelError(f"level {level} outside 0..{self.max_level}")
        if anchor not in ("origin", "center"):
            raise ValueError(f"unknown anchor {anchor!r}")
        den = lcm_many(self.scale(j) for j in range(1, level + 1)) if level else 1
        idx, w = np.zeros(1, dtype=np.int64), np.ones(1)
        if k > 0:
            for j in range(level, 0, -1):
                di, dw = self._digit(j, den)
                pi_, pw = np.zeros(1, dtype=np.int64), np.ones(1)
                for _ in range(k):
                    pi_, pw = _sparse_dense_conv(pi_, pw, di, dw)
                idx, w = _sparse_dense_conv(idx, w, pi_, pw)
        return AtomicMeasure.on_lattice(Fraction(0), Fraction(1, den), idx, w)


@dataclass(frozen=True, eq=False)
class DeclaredGeneric:
    """User-declared singular law given by oracles."""

    cf_oracle: Callable
    refine_oracle: Optional[Callable] = None
    abs_moment_bound: Optional[float] = None
    name: str = "declared"

    def cf(self, t) -> np.ndarray:
        return np.asarray(self.cf_oracle(np.asarray(t, dtype=float)), dtype=complex)

    def cf_pi(self, q) -> complex:
        return complex(self.cf(math.pi * float(Fraction(q))))

    def tail_bound(self, T: float) -> float:
        return 1.0

    def abs_moment(self) -> float:
        if self.abs_moment_bound is None:
            raise ValueError(f"{self.name}: no absolute-moment bound declared")
        return float(self.abs_moment_bound)

    def refine(self, level: int, anchor: str = "origin") -> AtomicMeasure:
        if self.refine_oracle is None:
            raise UnsupportedLevelError(f"{self.name}: no refinement oracle")
        m = self.refine_oracle(level)
        if not isinstance(m, AtomicMeasure):
            m = AtomicMeasure.from_pairs(m)
        return m

    def refine_power(self, level: int, k: int, anchor: str = "origin") -> AtomicMeasure:
        return power_atomic(self.refine(level, anchor), k)


SingularSpec = Union[CantorIFS, ProductCF, DeclaredGeneric]


def singular_refine(s, level: int, anchor: str = "origin") -> AtomicMeasure:
    """Atomic approximation of a singular generator at refinement ``level``."""
    return s.refine(level, anchor)


# ---------------------------------------------------------------------------
# composite parts (products / mixtures of parts)


@dataclass(frozen=True, eq=False)
class CompositePart:
    """Probability law ``sum_i w_i (P_i1 * P_i2 * ...)``; weights sum to 1."""

    terms: tuple  # ((weight, (part, part, ...)), ...)
    label: str = ""

    def __post_init__(self):
        tot = sum(w for w, _ in self.terms)
        if not self.terms or abs(tot - 1.0) > PROB_TOL:
            raise ValueError("composite weights must sum to 1")

    def cf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        for w, factors in self.terms:
            v = np.full(t.shape, w, dtype=complex)
            for f in factors:
                v = v * f.cf(t)
            out = out + v
        return out

    def cf_pi(self, q) -> complex:
        out = 0j
        for w, factors in self.terms:
            v = complex(w)
            for f in factors:
                v *= f.cf_pi(q)
            out += v
        return out

    def tail_bound(self, T: float) -> float:
        return float(sum(w * min(f.tail_bound(T) for f in fs) for w, fs in self.terms))

    def abs_moment(self) -> float:
        return float(sum(w * sum(f.abs_moment() for f in fs) for w, fs in self.terms))

    def refine(self, level: int, anchor: str = "origin") -> AtomicMeasure:
        ms = []
        for _, fs in self.terms:
            m = AtomicMeasure.point(0)
            for f in fs:
                m = convolve_atomic(m, f.refine(level, anchor))
            ms.append(m)
        return combine(ms, [w for w, _ in self.terms])

    def refine_power(self, level: int, k: int, anchor: str = "origin") -> AtomicMeasure:
        return power_atomic(self.refine(level, anchor), k)

    @property
    def has_density_factor(self) -> bool:
        return all(any(isinstance(f, GridDensity) or
                       (isinstance(f, CompositePart) and f.has_density_factor) for f in fs)
                   for _, fs in self.terms)


def _flatten(part) -> list:
    """Express a part as [(weight, factors)] for building composites."""
    if isinstance(part, CompositePart):
        return list(part.terms)
    return [(1.0, (part,))]


def _composite(pieces: list, label: str):
    """Normalize [(weight, factors)] into a single part (or None)."""
    pieces = [(w, fs) for w, fs in pieces if w > 0]
    tot = sum(w for w, _ in pieces)
    if tot <= 0:
        return None
    if len(pieces) == 1 and len(pieces[0][1]) == 1:
        return pieces[0][1][0]
    return CompositePart(tuple((w / tot, fs) for w, fs in pieces), label)


# ---------------------------------------------------------------------------
# mixtures


@dataclass(frozen=True, eq=False)
class MixtureDistribution:
    """F = c_d F_d + c_a F_a + c_s F_s (+ c_u F_u for unclassified mass).

    ``singular_square_class`` = (n_a, alpha) declares that the n_a-th
    convolution power of F_s is the first with an absolutely continuous
    component, of weight alpha.  ``all_powers_singular`` declares instead
    that every power stays singular.
    """

    c_d: float
    c_a: float
    c_s: float
    F_d: AtomicMeasure
    F_a: object = None
    F_s: object = None
    singular_square_class: Optional[tuple] = None
    all_powers_singular: bool = False
    c_u: float = 0.0
    F_u: object = None
    warnings: tuple = ()

    def __post_init__(self):
        ws = (self.c_d, self.c_a, self.c_s, self.c_u)
        if any(not (0.0 <= float(c) <= 1.0) for c in ws):
            raise ValueError("weights must lie in [0, 1]")
        if abs(sum(float(c) for c in ws) - 1.0) > PROB_TOL:
            raise ValueError("weights must sum to 1 within 1e-12")
        if not self.c_d > 0:
            raise ValueError("c_d must be positive")
        for c, part, nm in ((self.c_a, self.F_a, "F_a"), (self.c_s, self.F_s, "F_s"),
                            (self.c_u, self.F_u, "F_u")):
            if (c == 0) != (part is None):
                raise ValueError(f"{nm} must be present exactly when its weight is positive")
        if not isinstance(self.F_d, AtomicMeasure) or not self.F_d.is_probability():
            raise ValueError("F_d must be a probability AtomicMeasure")
        if isinstance(self.F_a, GridDensity) and not self.F_a.is_probability():
            raise ValueError("F_a must be a probability density")
        if self.singular_square_class is not None:
            n_a, alpha = self.singular_square_class
            if int(n_a) != n_a or n_a < 2 or not (0 < alpha <= 1):
                raise ValueError("singular_square_class needs n_a >= 2 and alpha in (0, 1]")
            if self.all_powers_singular:
                raise ValueError("square class and all_powers_singular are exclusive")
        for nm in ("c_d", "c_a", "c_s", "c_u"):
            object.__setattr__(self, nm, float(getattr(self, nm)))

    @property
    def weights(self) -> tuple:
        return self.c_d, self.c_a, self.c_s

    def part(self, name: str):
        return {"d": self.F_d, "a": self.F_a, "s": self.F_s, "u": self.F_u}[name]

    def weight(self, name: str) -> float:
        return {"d": self.c_d, "a": self.c_a, "s": self.c_s, "u": self.c_u}[name]

    def parts(self):
        """(name, weight, part) for every present part."""
        return [(n, self.weight(n), self.part(n)) for n in "dasu" if self.weight(n) > 0]

    def cf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        for _, c, p in self.parts():
            out = out + c * p.cf(t)
        return out

    def shifted(self, a) -> "MixtureDistribution":
        """Law of X + a."""
        delta = point_mixture(a)
        return mixture_convolve(self, delta)


def point_mixture(a=0) -> MixtureDistribution:
    return MixtureDistribution(1.0, 0.0, 0.0, AtomicMeasure.point(a))


def _ss_product(F1: MixtureDistribution, F2: MixtureDistribution, ss_class):
    """Classify the s*s product: 'a', 's' or 'u'."""
    if ss_class is None and F1.F_s is F2.F_s:
        if F1.all_powers_singular:
            return "s"
        ss_class = F1.singular_square_class
        if ss_class is None:
            return "u"
    if ss_class is None:
        return "u"
    if ss_class == "singular" or ss_class == "s":
        return "s"
    if ss_class in ("ac", "a"):
        return "a"
    n_a, alpha = ss_class
    if n_a >= 3:
        return "s"
    return "a" if alpha == 1 else "u"


def mixture_convolve(F1: MixtureDistribution, F2: MixtureDistribution,
                     ss_class=None) -> MixtureDistribution:
    """Law of X1 + X2 for independent X1 ~ F1, X2 ~ F2.

    Part products are classified by the table d*d -> d, anything with an ac
    factor -> a, d*s -> s, s*s -> declared class, and anything involving
    unclassified mass -> unclassified.  ``ss_class`` may be ``"s"``, ``"a"``
    or an (n_a, alpha) pair to override the declaration carried by F1.
    Unclassified mass is kept apart and reported in ``warnings``.
    """
    buckets: dict = {"d": [], "a": [], "s": [], "u": []}
    warnings = list(F1.warnings) + list(F2.warnings)
    ss_kind = None
    for n1, c1, p1 in F1.parts():
        for n2, c2, p2 in F2.parts():
            w = c1 * c2
            kinds = {n1, n2}
            if kinds == {"d"}:
                kind = "d"
            elif "u" in kinds:
                kind = "u"
            elif "a" in kinds:
                kind = "a"
            elif kinds == {"d", "s"}:
                kind = "s"
            else:
                if ss_kind is None:
                    ss_kind = _ss_product(F1, F2, ss_class)
                kind = ss_kind
            for wa, fa in _flatten(p1):
                for wb, fb in _flatten(p2):
                    buckets[kind].append((w * wa * wb, fa + fb))
    if buckets["u"] and ss_kind == "u":
        warnings.append("unclassified singular product: s*s class not declared; "
                        f"mass {sum(w for w, _ in buckets['u']):.6g} kept apart")
    # discrete part: collapse to a single atomic measure
    atoms = [(w, fs) for w, fs in buckets["d"]]
    total_d = sum(w for w, _ in atoms)
    ms = []
    for w, fs in atoms:
        m = AtomicMeasure.point(0)
        for f in fs:
            m = convolve_atomic(m, f)
        ms.append(m)
    F_d = combine(ms, [w / total_d for w, _ in atoms])
    # renormalize tiny float drift in the mass of F_d
    F_d = F_d.scaled(1.0 / F_d.mass)
    weights = {k: sum(w for w, _ in v) for k, v in buckets.items()}
    wsum = sum(weights.values())
    weights = {k: v / wsum for k, v in weights.items()}
    parts = {k: _composite(_merge_atomic_factors(v), k) for k, v in buckets.items() if k != "d"}
    square = None
    all_pow = F1.all_powers_singular and F2.all_powers_singular and F1.F_s is F2.F_s
    return MixtureDistribution(
        weights["d"], weights["a"] if parts["a"] else 0.0, weights["s"] if parts["s"] else 0.0,
        F_d, parts["a"], parts["s"], square, all_pow,
        weights["u"] if parts["u"] else 0.0, parts["u"], tuple(warnings))


def _merge_atomic_factors(pieces: list) -> list:
    """Fold the atomic factors of each product into one AtomicMeasure."""
    out = []
    for w, fs in pieces:
        atoms = [f for f in fs if isinstance(f, AtomicMeasure)]
        rest = tuple(f for f in fs if not isinstance(f, AtomicMeasure))
        if len(atoms) > 1 or (atoms and rest):
            m = AtomicMeasure.point(0)
            for f in atoms:
                m = convolve_atomic(m, f)
            if m.size == 1 and m.locations[0] == 0 and rest:
                fs = rest
            else:
                fs = (m,) + rest
        out.append((w, fs))
    return out
