"""Uniform-atom empirical measures, measure paths and Wasserstein-2 distances."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError

ASSIGNMENT_CAP = 512


class EmpiricalMeasure:
    """(1/n) sum_i delta_{x_i} on R^d.

    Summary statistics are computed lazily and cached; ``var`` is the total
    variance (trace of the covariance matrix).
    """

    __slots__ = ("atoms", "_mean", "_var")

    def __init__(self, atoms, check: bool = True):
        a = np.asarray(atoms, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[0] < 1:
            raise InputError("an empirical measure needs at least one atom")
        if check and not np.all(np.isfinite(a)):
            raise InputError("atoms must be finite")
        self.atoms = a
        self._mean = None
        self._var = None

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def d(self) -> int:
        return self.atoms.shape[1]

    @property
    def mean(self) -> np.ndarray:
        if self._mean is None:
            self._mean = self.atoms.mean(axis=0)
        return self._mean

    @property
    def var(self) -> float:
        if self._var is None:
            c = self.atoms - self.mean
            self._var = float(np.einsum("ij,ij->", c, c) / self.n)
        return self._var

    def cov(self) -> np.ndarray:
        c = self.atoms - self.mean
        return c.T @ c / self.n

    def second_moment(self) -> float:
        return float(np.einsum("ij,ij->", self.atoms, self.atoms) / self.n)

    def __repr__(self):
        return f"EmpiricalMeasure(n={self.n}, d={self.d})"


def dirac(x0, n: int = 1) -> EmpiricalMeasure:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    return EmpiricalMeasure(np.tile(x0, (n, 1)))


class MeasurePath:
    """Piecewise-constant cadlag path of empirical measures.

    ``states[i]`` holds the atoms on ``[grid[i], grid[i+1])``.  At a grid
    point where the population jumped, ``pre_jump[i]`` holds the atoms just
    before the jump (the left limit); elsewhere value and left limit agree.
    """

    def __init__(self, grid, states, pre_jump: dict[int, np.ndarray] | None = None):
        grid = np.asarray(grid, dtype=float)
        states = np.asarray(states, dtype=float)
        if grid.ndim != 1 or grid.size == 0 or grid[0] != 0.0:
            raise InputError("breakpoints must start at 0")
        if np.any(np.diff(grid) <= 0):
            raise InputError("breakpoints must be strictly increasing")
        if states.ndim == 2:
            states = states[:, :, None]
        if states.shape[0] != grid.size:
            raise InputError("one measure per breakpoint required")
        self.grid = grid
        self.states = states
        self.pre_jump = dict(pre_jump or {})
        self._cache: dict[int, EmpiricalMeasure] = {}
        self._left_cache: dict[int, EmpiricalMeasure] = {}

    @classmethod
    def constant(cls, measure: EmpiricalMeasure, T: float | None = None) -> "MeasurePath":
        return cls([0.0], measure.atoms[None])

    def __len__(self):
        return self.grid.size

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def index_of(self, t: float) -> int:
        """Index of the segment containing t (right-continuous)."""
        i = int(np.searchsorted(self.grid, t, side="right")) - 1
        if i < 0:
            raise InputError(f"t={t} precedes the path start")
        return i

    def value_index(self, i: int) -> EmpiricalMeasure:
        m = self._cache.get(i)
        if m is None:
            m = EmpiricalMeasure(self.states[i], check=False)
            self._cache[i] = m
        return m

    def left_index(self, i: int) -> EmpiricalMeasure:
        if i not in self.pre_jump:
            return self.value_index(i)
        m = self._left_cache.get(i)
        if m is None:
            m = EmpiricalMeasure(self.pre_jump[i], check=False)
            self._left_cache[i] = m
        return m

    def value_at(self, t: float) -> EmpiricalMeasure:
        return self.value_index(self.index_of(t))

    def left_limit(self, t: float) -> EmpiricalMeasure:
        i = self.index_of(t)
        if self.grid[i] == t:
            return self.left_index(i)
        return self.value_index(i)


# ---------------------------------------------------------------------------
# Wasserstein-2


def _atoms(mu) -> np.ndarray:
    if isinstance(mu, EmpiricalMeasure):
        return mu.atoms
    a = np.asarray(mu, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def w2_to_dirac(mu, x0) -> float:
    """W2 between an empirical measure and delta_{x0}; the product coupling is the only one."""
    x = _atoms(mu)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    diff = x - x0
    return math.sqrt(float(np.einsum("ij,ij->", diff, diff)) / x.shape[0])


def w2_1d(mu, nu) -> float:
    """Exact W2 for equal-size measures on the real line (sorted coupling)."""
    x, y = _atoms(mu), _atoms(nu)
    if x.shape[1] != 1 or y.shape[1] != 1:
        raise InputError("w2_1d needs one-dimensional measures")
    if x.shape[0] != y.shape[0]:
        raise InputError("w2_1d needs equal atom counts")
    diff = np.sort(x[:, 0]) - np.sort(y[:, 0])
    return math.sqrt(float(diff @ diff) / diff.size)


def w2_exact(mu, nu, cap: int = ASSIGNMENT_CAP) -> float:
    """Exact W2 for equal-size measures in R^d via minimum-cost assignment."""
    x, y = _atoms(mu), _atoms(nu)
    if x.shape != y.shape:
        raise InputError("w2_exact needs equal atom counts and dimensions")
    n = x.shape[0]
    if n > cap:
        raise InputError(f"n={n} exceeds the assignment cap {cap}; use w2_sliced instead")
    # solve in a canonical argument order so that W2(x, y) == W2(y, x) bit for bit
    # (near-tied optimal pairings can otherwise differ in the last ulp)
    if x.tobytes() > y.tobytes():
        x, y = y, x
    cost = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=-1)
    rows, cols = linear_sum_assignment(cost)
    return math.sqrt(max(math.fsum(cost[rows, cols]) / n, 0.0))


def w2_sliced(mu, nu, projections: int, rng: np.random.Generator) -> float:
    """Root-mean of squared 1-D W2 over random unit directions.

    A cheap diagnostic that never exceeds the true W2; not used for metrics.
    """
    x, y = _atoms(mu), _atoms(nu)
    if x.shape != y.shape:
        raise InputError("w2_sliced needs equal atom counts and dimensions")
    u = rng.standard_normal((int(projections), x.shape[1]))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    px = np.sort(x @ u.T, axis=0)
    py = np.sort(y @ u.T, axis=0)
    return math.sqrt(float(np.mean((px - py) ** 2)))


def product_coupling_bound(y1, y2) -> float:
    """sqrt(mean |Y1_i - Y2_i|^2): the W2 cost of the given pairing, an upper bound."""
    a, b = _atoms(y1), _atoms(y2)
    if a.shape != b.shape:
        raise InputError("paired samples must have equal shapes")
    diff = a - b
    return math.sqrt(float(np.einsum("ij,ij->", diff, diff)) / a.shape[0])


@lru_cache(maxsize=64)
def _quantile_segments(n: int, m: int):
    lcm = n * m // math.gcd(n, m)
    sx, sy = lcm // n, lcm // m
    cuts = np.union1d(np.arange(0, lcm, sx), np.arange(0, lcm, sy))
    weights = np.diff(np.append(cuts, lcm)) / lcm
    return cuts // sx, cuts // sy, weights


def w2_sq_quantile(x_sorted: np.ndarray, y_sorted: np.ndarray) -> np.ndarray:
    """Squared W2 between 1-D uniform-atom measures of any sizes.

    Inputs are sorted along the last axis; leading axes broadcast, so a whole
    time series of measures is handled in one call.  The monotone (quantile)
    coupling is optimal on the line, which makes this exact.
    """
    n, m = x_sorted.shape[-1], y_sorted.shape[-1]
    ix, iy, w = _quantile_segments(n, m)
    diff = x_sorted[..., ix] - y_sorted[..., iy]
    return (diff * diff) @ w


def w2_between(mu, nu, rng: np.random.Generator | None = None, cap: int = ASSIGNMENT_CAP) -> float:
    """W2 between empirical measures of possibly different sizes.

    On the line the quantile coupling is exact for any sizes.  In R^d the atoms
    are replicated up to the least common multiple when that fits under the
    assignment cap; otherwise the larger population is subsampled (seeded)
    down to the smaller size first.
    """
    x, y = _atoms(mu), _atoms(nu)
    if x.shape[1] != y.shape[1]:
        raise InputError("dimension mismatch")
    n, m = x.shape[0], y.shape[0]
    if x.shape[1] == 1:
        return math.sqrt(float(w2_sq_quantile(np.sort(x[:, 0]), np.sort(y[:, 0]))))
    lcm = n * m // math.gcd(n, m)
    if lcm <= cap:
        return w2_exact(np.repeat(x, lcm // n, axis=0), np.repeat(y, lcm // m, axis=0), cap=cap)
    if rng is None:
        raise InputError("subsampling a large population needs an rng")
    if n > m:
        x = x[rng.choice(n, size=m, replace=False)]
    elif m > n:
        y = y[rng.choice(m, size=n, replace=False)]
    return w2_exact(x, y, cap=cap)
