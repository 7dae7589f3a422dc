"""Total-variation norms of powers of trigonometric polynomials on Z^d.

``||phi||`` is the sum of absolute coefficients.  Besides the exact norm of
``phi**k`` (by sparse coefficient convolution) this module evaluates two
upper bounds built from sup-norms of phi and of products of its mixed
partial derivatives over set partitions of the coordinate axes, and lifts
finite sets of real frequencies to integer exponent vectors.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .errors import BudgetExceeded, StructureError
from .exact import ONE, QLinear, lcm_many, parse_exact

PI_OVER_SQRT6 = math.pi / math.sqrt(6.0)
WARN_TERMS = 10**7
MAX_TERMS = 5 * 10**7


def grid_size_for(d: int) -> int:
    return {1: 1 << 10, 2: 1 << 10, 3: 1 << 7, 4: 1 << 6}[d]


@dataclass(frozen=True, eq=False)
class TrigPoly:
    """phi(t) = sum_m q_m exp(i <t, c_m>) with integer exponent vectors c_m."""

    exponents: np.ndarray  # (n, d) int64
    coefs: np.ndarray      # (n,) complex

    def __post_init__(self):
        e = np.asarray(self.exponents, dtype=np.int64)
        c = np.asarray(self.coefs, dtype=complex).ravel()
        if e.ndim == 1:
            e = e[:, None]
        if e.shape[0] != c.size or e.shape[1] < 1:
            raise ValueError("need one exponent vector per coefficient and d >= 1")
        if c.size:
            e, c = _merge(e, c)
        object.__setattr__(self, "exponents", e)
        object.__setattr__(self, "coefs", c)

    @classmethod
    def from_dict(cls, coeffs: dict, d: int = None) -> "TrigPoly":
        items = list(coeffs.items())
        if not items:
            return cls(np.zeros((0, d or 1), dtype=np.int64), np.zeros(0))
        keys = [(k,) if isinstance(k, (int, np.integer)) else tuple(k) for k, _ in items]
        dim = d or len(keys[0])
        if any(len(k) != dim for k in keys):
            raise ValueError("exponent vectors of mixed dimension")
        return cls(np.array(keys, dtype=np.int64).reshape(-1, dim),
                   np.array([complex(v) for _, v in items]))

    @property
    def dimension(self) -> int:
        return int(self.exponents.shape[1])

    @property
    def coefficients(self) -> dict:
        return {tuple(int(x) for x in e): complex(c) for e, c in zip(self.exponents, self.coefs)}

    def norm(self) -> float:
        return float(np.abs(self.coefs).sum())

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.dimension == 1 and (t.ndim == 0 or t.shape[-1] != 1):
            t = t[..., None]
        return np.exp(1j * (t @ self.exponents.T.astype(float))) @ self.coefs

    def derivative(self, axes) -> "TrigPoly":
        """Mixed partial derivative along each axis in ``axes`` once."""
        c = self.coefs.copy()
        for j in axes:
            c = c * (1j * self.exponents[:, j])
        keep = c != 0
        return TrigPoly(self.exponents[keep], c[keep])

    def grid_values(self, n: int) -> np.ndarray:
        """Values at the points -pi + 2 pi j / n along each axis (exact via FFT)."""
        d = self.dimension
        a = np.zeros((n,) * d, dtype=complex)
        # shift the grid to start at -pi: multiply by (-1)^{sum c}
        sign = np.where(self.exponents.sum(axis=1) % 2 == 0, 1.0, -1.0)
        np.add.at(a, tuple(self.exponents[:, j] % n for j in range(d)), self.coefs * sign)
        return n**d * np.fft.ifftn(a)


def _merge(e: np.ndarray, c: np.ndarray):
    u, inv = np.unique(e, axis=0, return_inverse=True)
    inv = inv.ravel()
    re = np.bincount(inv, weights=c.real, minlength=len(u))
    im = np.bincount(inv, weights=c.imag, minlength=len(u))
    out = re + 1j * im
    keep = out != 0
    return u[keep], out[keep]


def _is_integral(c: np.ndarray) -> bool:
    return bool(np.all(c.imag == 0) and np.all(c.real == np.round(c.real))
                and np.all(np.abs(c.real) < 2**31))


def _encode(e: np.ndarray, lo: np.ndarray, radix: np.ndarray) -> np.ndarray:
    key = np.zeros(e.shape[0], dtype=np.int64)
    for j in range(e.shape[1]):
        key = key * radix[j] + (e[:, j] - lo[j])
    return key


def exact_power_norm(phi: TrigPoly, k: int) -> float:
    """||phi^k|| by k-fold sparse coefficient convolution over Z^d."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if phi.coefs.size == 0:
        return 0.0
    d = phi.dimension
    emin, emax = phi.exponents.min(axis=0), phi.exponents.max(axis=0)
    lo = emin * k
    radix = (emax - emin) * k + 1
    if float(np.prod(radix.astype(float))) > 2.0**62:
        raise BudgetExceeded("exponent range too large to encode")
    integral = _is_integral(phi.coefs)
    # keys are encoded relative to the range of the k-th power throughout
    cur_e = phi.exponents.copy()
    cur_c = phi.coefs.real.astype(np.int64) if integral else phi.coefs.copy()
    step_c = cur_c.copy()
    for _ in range(k - 1):
        n_terms = cur_e.shape[0] * phi.exponents.shape[0]
        if n_terms > MAX_TERMS:
            raise BudgetExceeded(f"{n_terms} intermediate terms exceed the budget")
        if n_terms > WARN_TERMS:
            warnings.warn(f"exact_power_norm: {n_terms} intermediate terms", RuntimeWarning)
        se = (cur_e[:, None, :] + phi.exponents[None, :, :]).reshape(-1, d)
        sc = (cur_c[:, None] * step_c[None, :]).ravel()
        key = _encode(se, lo, radix)
        u, first, inv = np.unique(key, return_index=True, return_inverse=True)
        inv = inv.ravel()
        if integral:
            acc = np.zeros(u.size, dtype=np.int64)
            np.add.at(acc, inv, sc)
        else:
            acc = (np.bincount(inv, weights=sc.real, minlength=u.size)
                   + 1j * np.bincount(inv, weights=sc.imag, minlength=u.size))
        keep = acc != 0
        cur_e, cur_c = se[first][keep], acc[keep]
    return float(np.abs(cur_c).sum()) if not integral else float(np.abs(cur_c).sum(dtype=np.int64))


# ---------------------------------------------------------------------------
# set partitions


def set_partitions(items: Sequence) -> Iterator[tuple]:
    """All partitions of ``items`` (restricted-growth-string order).

    The empty set has exactly one partition, the empty one.
    """
    items = list(items)
    n = len(items)
    if n == 0:
        yield ()
        return
    a = [0] * n

    def rec(i: int, m: int):
        if i == n:
            blocks = [[] for _ in range(m + 1)]
            for idx, b in enumerate(a):
                blocks[b].append(items[idx])
            yield tuple(tuple(b) for b in blocks)
            return
        for v in range(m + 2):
            a[i] = v
            yield from rec(i + 1, max(m, v))

    a[0] = 0
    yield from rec(1, 0)


def bell_number(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


# ---------------------------------------------------------------------------
# bound constants


@dataclass(frozen=True)
class BoundConstants:
    """Certified constants of the power-norm bounds.

    ``S_phi`` is an upper bound on sup|phi| over the torus and ``S_lower``
    the sampled grid maximum (a lower bound).  ``R`` maps each partition
    (a tuple of axis blocks) to an upper bound on sup prod |d_B phi|.
    """

    S_phi: float
    A_phi: float
    S_lower: float
    alpha: tuple
    R: dict
    dimension: int
    grid: int


def _lip(phi: TrigPoly) -> float:
    # sup_t |phi(t) - phi(t_grid)| <= sum_j ||d_j phi||_1 * pi/n
    return float(np.abs(phi.coefs) @ np.abs(phi.exponents).sum(axis=1))


def bound_constants(phi: TrigPoly, grid: int = None) -> BoundConstants:
    """S_phi, A_phi and the partition sups R_phi(P), all as certified bounds."""
    d = phi.dimension
    if d > 4:
        raise ValueError("dimension above 4 is not supported")
    n = grid or grid_size_for(d)
    if phi.coefs.size == 0:
        raise ValueError("zero polynomial")
    vals = np.abs(phi.grid_values(n))
    S_lo = float(vals.max())
    S_up = min(S_lo + _lip(phi) * math.pi / n, phi.norm())
    alpha = tuple(int(phi.exponents[:, j].min()) for j in range(d))
    axes = tuple(range(d))
    deriv: dict = {}
    for r in range(1, d + 1):
        for B in itertools.combinations(axes, r):
            g = phi.derivative(B)
            deriv[B] = (g, np.abs(g.grid_values(n)) if g.coefs.size else None)
    R: dict = {(): 1.0}
    for r in range(1, d + 1):
        for U in itertools.combinations(axes, r):
            for P in set_partitions(U):
                gs = [deriv[B] for B in P]
                if any(arr is None for _, arr in gs):
                    R[P] = 0.0
                    continue
                prod = np.ones_like(gs[0][1])
                for _, arr in gs:
                    prod = prod * arr
                norms = [g.norm() for g, _ in gs]
                lip = sum(_lip(g) * math.prod(norms[:i] + norms[i + 1:])
                          for i, (g, _) in enumerate(gs))
                R[P] = min(float(prod.max()) + lip * math.pi / n, math.prod(norms))
    A = 0.0
    for r in range(0, d + 1):
        for U in itertools.combinations(axes, r):
            outside = math.prod(abs(alpha[j]) + 1 for j in axes if j not in U)
            inner = sum(S_lo ** (-len(P)) * R[P] for P in set_partitions(U))
            A += outside * inner
    A *= PI_OVER_SQRT6 ** d
    return BoundConstants(S_up, A, S_lo, alpha, R, d, n)


def bound_power_norm(S_phi: float, A_phi: float, d: int, k: int) -> float:
    """A_phi * k^d * S_phi^k."""
    return A_phi * k**d * S_phi**k


def refined_bound_power_norm(phi: TrigPoly, k: int, constants: BoundConstants = None) -> float:
    """The k-dependent partition bound (sharper than A k^d S^k for small k)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    bc = constants or bound_constants(phi)
    d = bc.dimension
    axes = tuple(range(d))
    total = 0.0
    for r in range(0, d + 1):
        for U in itertools.combinations(axes, r):
            outside = math.prod(abs(k * bc.alpha[j] - 1) for j in axes if j not in U)
            if outside == 0:
                continue
            inner = 0.0
            for P in set_partitions(U):
                p = len(P)
                if p > k:
                    continue
                inner += math.prod(k - l + 1 for l in range(1, p + 1)) * \
                    bc.S_phi ** (k - p) * bc.R[P]
            total += outside * inner
    return PI_OVER_SQRT6 ** d * total


def random_trigpoly(rng: np.random.Generator, d_max: int = 3, terms_max: int = 6,
                    coef_range: int = 3, exp_range: int = 4) -> TrigPoly:
    """Random integer trigonometric polynomial (non-zero)."""
    while True:
        d = int(rng.integers(1, d_max + 1))
        n = int(rng.integers(1, terms_max + 1))
        e = rng.integers(-exp_range, exp_range + 1, size=(n, d))
        c = rng.integers(-coef_range, coef_range + 1, size=n).astype(float)
        p = TrigPoly(e, c)
        if p.coefs.size:
            return p


# ---------------------------------------------------------------------------
# rational basis lift


def _vector(x, gens: list) -> list:
    q = x if isinstance(x, QLinear) else QLinear.rational(x)
    dct = q.as_dict
    for g in dct:
        if g not in gens:
            gens.append(g)
    return dct


def _solve(basis: list, target: list):
    """Rational coordinates of ``target`` over ``basis`` or None (exact)."""
    m, n = len(target), len(basis)
    if n == 0:
        return [] if all(v == 0 for v in target) else None
    # augmented matrix: rows = generator components, cols = basis vectors
    rows = [[basis[j][i] for j in range(n)] + [target[i]] for i in range(m)]
    piv_cols = []
    r = 0
    for c in range(n):
        p = next((i for i in range(r, m) if rows[i][c] != 0), None)
        if p is None:
            continue
        rows[r], rows[p] = rows[p], rows[r]
        pv = rows[r][c]
        rows[r] = [v / pv for v in rows[r]]
        for i in range(m):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        piv_cols.append(c)
        r += 1
    if any(rows[i][n] != 0 for i in range(r, m)):
        return None
    sol = [Fraction(0)] * n
    for i, c in enumerate(piv_cols):
        sol[c] = rows[i][n]
    return sol


@dataclass(frozen=True, eq=False)
class LatticeLift:
    """Frequencies written as integer combinations of basis/kappa."""

    basis: tuple
    kappa: int
    exponent_map: dict
    exponents: tuple  # integer vectors in input order

    @property
    def dimension(self) -> int:
        return len(self.basis)

    @property
    def scaled_basis(self) -> tuple:
        return tuple(b / self.kappa if isinstance(b, QLinear) else Fraction(b) / self.kappa
                     for b in self.basis)

    def basis_floats(self) -> np.ndarray:
        return np.array([float(b) for b in self.scaled_basis])

    def lift(self, coefs: Sequence) -> TrigPoly:
        """TrigPoly with the given coefficients at the lifted exponents."""
        return TrigPoly(np.array(self.exponents, dtype=np.int64).reshape(len(coefs), -1),
                        np.asarray(coefs, dtype=complex))


def rational_basis_lift(frequencies: Sequence) -> LatticeLift:
    """Greedy Q-basis of an exact frequency set and its integer lift.

    Frequencies must be ints, Fractions, rational strings or QLinear values;
    floats are rejected because Q-independence cannot be read off them.
    """
    freqs = []
    for f in frequencies:
        if isinstance(f, (float, np.floating)):
            raise StructureError("floating frequencies carry no certified Q-structure")
        try:
            freqs.append(f if isinstance(f, QLinear) else parse_exact(f))
        except (TypeError, ValueError, KeyError) as exc:
            raise StructureError(f"cannot read exact structure of {f!r}") from exc
    keys = [str(f) for f in freqs]
    if len(set(keys)) != len(keys):
        raise ValueError("frequencies must be distinct")
    gens: list = []
    dicts = [_vector(f, gens) for f in freqs]
    vecs = [[d.get(g, Fraction(0)) for g in gens] for d in dicts]
    basis_idx: list = []
    coords: list = []
    for i, v in enumerate(vecs):
        sol = _solve([vecs[j] for j in basis_idx], v)
        if sol is None:
            basis_idx.append(i)
    for v in vecs:
        coords.append(_solve([vecs[j] for j in basis_idx], v))
    kappa = lcm_many(c.denominator for row in coords for c in row) if basis_idx else 1
    exps = tuple(tuple(int(c * kappa) for c in row) for row in coords)
    basis = tuple(freqs[j] for j in basis_idx)
    emap = {f: e for f, e in zip(frequencies, exps)}
    return LatticeLift(basis, kappa, emap, exps)


def is_rational_value(x) -> bool:
    return isinstance(x, (int, Fraction)) or (isinstance(x, QLinear) and x.is_rational)


__all__ = [
    "TrigPoly", "exact_power_norm", "bound_constants", "BoundConstants", "bound_power_norm",
    "refined_bound_power_norm", "set_partitions", "bell_number", "rational_basis_lift",
    "LatticeLift", "random_trigpoly", "PI_OVER_SQRT6", "ONE",
]
