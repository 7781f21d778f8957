"""Reproducible randomness split into a common and an idiosyncratic coordinate.

Every random stream is derived from ``(seed, replication, entity, purpose)``
through a counter-based Philox generator, so a stream can be re-created in any
execution context without advancing shared state.  The Poisson base field and
its marks live on the *common* seed; Brownian increments and per-particle
initial conditions live on the *idiosyncratic* seed.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InputError

U64_MAX = 2**64 - 1
MAX_REPLICATION = 2**32

# entity layout: [0, 2**31) finite-system particles, [2**31, 2**32) reference
# particles, >= 2**32 sentinels (one slot per noise dimension below each).
REFERENCE_OFFSET = 2**31
ENTITY_BASE_FIELD = 2**32
ENTITY_MARKS = 2**32 + 2**16
ENTITY_INITIAL = 2**32 + 2**17
MAX_ENTITY = 2**33


@functools.lru_cache(maxsize=64)
def _gauss_rule(kind: str, order: int):
    if kind == "legendre":
        x, w = np.polynomial.legendre.leggauss(order)
    else:
        x, w = np.polynomial.hermite_e.hermegauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


class Purpose(enum.IntEnum):
    BROWNIAN = 0
    BASE_POINTS = 1
    MARKS = 2
    INIT = 3
    AUX = 4


_COMMON_PURPOSES = frozenset({Purpose.BASE_POINTS, Purpose.MARKS})


def parse_seed(text: str | int) -> int:
    """Parse a 64-bit seed given as an int, a decimal string or a ``0x`` hex string."""
    if isinstance(text, (int, np.integer)):
        value = int(text)
    else:
        s = str(text).strip().lower().replace("_", "")
        try:
            value = int(s, 16) if s.startswith("0x") else int(s, 10)
        except ValueError:
            raise ConfigurationError(f"not a 64-bit seed: {text!r}") from None
    if not 0 <= value <= U64_MAX:
        raise ConfigurationError(f"seed out of 64-bit range: {text!r}")
    return value


@dataclass(frozen=True)
class SeedSpec:
    common_seed: int
    idiosyncratic_seed: int

    def __post_init__(self):
        object.__setattr__(self, "common_seed", parse_seed(self.common_seed))
        object.__setattr__(self, "idiosyncratic_seed", parse_seed(self.idiosyncratic_seed))


@dataclass(frozen=True)
class StreamKey:
    replication: int
    entity: int
    purpose: Purpose

    def check(self) -> None:
        if not 0 <= self.replication < MAX_REPLICATION:
            raise ConfigurationError(f"replication {self.replication} out of range")
        if not 0 <= self.entity < MAX_ENTITY:
            raise ConfigurationError(f"entity {self.entity} out of range")
        try:
            Purpose(self.purpose)
        except ValueError:
            raise ConfigurationError(f"unknown stream purpose {self.purpose!r}") from None


def derive_stream(spec: SeedSpec, key: StreamKey, common: bool | None = None) -> np.random.Generator:
    """Return the generator for ``key``.

    ``common`` selects the seed coordinate; by default base points and marks
    use the common seed and everything else the idiosyncratic seed.
    """
    key.check()
    purpose = Purpose(key.purpose)
    if common is None:
        common = purpose in _COMMON_PURPOSES
    seed = spec.common_seed if common else spec.idiosyncratic_seed
    ss = np.random.SeedSequence(
        entropy=seed,
        spawn_key=(int(common), int(purpose), int(key.replication), int(key.entity)),
    )
    return np.random.Generator(np.random.Philox(ss))


def brownian_increments(rng: np.random.Generator, grid, k: int) -> np.ndarray:
    """Independent N(0, h I_k) increments over consecutive grid intervals.

    Returns an array of shape ``(len(grid) - 1, k)``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] != 0.0:
        raise InputError("grid must be a 1-D sequence starting at 0")
    h = np.diff(grid)
    if np.any(h <= 0):
        raise InputError("grid must be strictly increasing")
    z = rng.standard_normal((h.size, int(k)))
    return z * np.sqrt(h)[:, None]


# ---------------------------------------------------------------------------
# mark laws


class MarkLaw:
    """A finite measure Q on a mark space, with sampling and quadrature.

    ``mass`` is Q(R); ``sample`` draws from the normalised law Q / Q(R);
    ``quadrature(order)`` returns nodes and weights integrating against Q
    itself (weights sum to ``mass``).
    """

    dim: int = 1
    mass: float = 1.0
    exact: bool = False  # quadrature is the exact integral (finite support)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def quadrature(self, order: int = 32) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError


@dataclass(frozen=True)
class UniformMarks(MarkLaw):
    """Q = mass * Uniform[low, high] on the real line.

    ``mass=None`` gives a probability law; pass ``mass=high - low`` for
    Lebesgue measure on the interval.
    """

    low: float = 0.0
    high: float = 1.0
    mass: float | None = None

    def __post_init__(self):
        if not self.high > self.low:
            raise InputError("UniformMarks needs high > low")
        if self.mass is None:
            object.__setattr__(self, "mass", 1.0)
        if not self.mass > 0:
            raise InputError("mark measure must have positive mass")

    def sample(self, rng, size):
        return rng.uniform(self.low, self.high, size=(int(size), 1))

    def quadrature(self, order=32):
        x, w = _gauss_rule("legendre", int(order))
        half = 0.5 * (self.high - self.low)
        nodes = self.low + half * (x + 1.0)
        return nodes[:, None], w * 0.5 * self.mass


@dataclass(frozen=True)
class GaussianMarks(MarkLaw):
    """Standard Gaussian marks in R^dim (tensor Gauss-Hermite quadrature)."""

    dim: int = 1
    mass: float = 1.0

    def sample(self, rng, size):
        return rng.standard_normal((int(size), self.dim))

    def quadrature(self, order=32):
        x, w = _gauss_rule("hermite", int(order))
        w = w / w.sum()
        grids = np.meshgrid(*([x] * self.dim), indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=-1)
        wgrid = np.meshgrid(*([w] * self.dim), indexing="ij")
        weights = np.prod(np.stack([g.ravel() for g in wgrid], axis=-1), axis=-1)
        return nodes, weights * self.mass


@dataclass(frozen=True)
class DiscreteMarks(MarkLaw):
    """Finite measure sum_i weights[i] * delta_{values[i]}."""

    values: Sequence = (0.0,)
    weights: Sequence = (1.0,)
    exact: bool = field(default=True, init=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (vals.shape[0],) or np.any(w < 0) or w.sum() <= 0:
            raise InputError("DiscreteMarks needs one nonnegative weight per value")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def mass(self):
        return float(self.weights.sum())

    def sample(self, rng, size):
        idx = rng.choice(self.values.shape[0], size=int(size), p=self.weights / self.weights.sum())
        return self.values[idx]

    def quadrature(self, order=32):
        return self.values.copy(), self.weights.copy()


# ---------------------------------------------------------------------------
# base Poisson field


@dataclass
class BasePointField:
    """Points of a Poisson field on [0, T] x R x [0, bound_j], one layer per noise dimension."""

    horizon: float
    height_bound: np.ndarray
    q_mass: np.ndarray
    times: list[np.ndarray]
    marks: list[np.ndarray]
    heights: list[np.ndarray]

    @property
    def n_dims(self) -> int:
        return len(self.times)

    def counts(self) -> np.ndarray:
        return np.array([t.size for t in self.times])

    def events(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All points merged in time order: ``(times, dims, index_within_dim)``.

        Equal times keep dimension order (stable sort).
        """
        if self.n_dims == 0:
            empty = np.zeros(0)
            return empty, empty.astype(int), empty.astype(int)
        t = np.concatenate(self.times)
        dims = np.concatenate([np.full(a.size, j) for j, a in enumerate(self.times)])
        idx = np.concatenate([np.arange(a.size) for a in self.times])
        order = np.argsort(t, kind="stable")
        return t[order], dims[order], idx[order]


def sample_base_field(
    rng: np.random.Generator,
    T: float,
    marks: Sequence[MarkLaw],
    bounds,
    mark_rng: np.random.Generator | None = None,
) -> BasePointField:
    """Sample the dominating field with intensity dt x Q_j(dr) x ds on [0,T] x R x [0, bound_j]."""
    T = float(T)
    if not np.isfinite(T) or T <= 0:
        raise InputError("horizon T must be positive and finite")
    bounds = np.atleast_1d(np.asarray(bounds, dtype=float))
    if bounds.size != len(marks):
        raise InputError("need one height bound per noise dimension")
    if not np.all(np.isfinite(bounds)) or np.any(bounds <= 0):
        raise InputError("height bounds must be positive and finite")
    mark_rng = rng if mark_rng is None else mark_rng
    times, mvals, heights = [], [], []
    for law, lam_bar in zip(marks, bounds):
        count = rng.poisson(T * law.mass * lam_bar)
        t = np.sort(rng.uniform(0.0, T, size=count))
        times.append(t)
        heights.append(rng.uniform(0.0, lam_bar, size=count))
        mvals.append(law.sample(mark_rng, count))
    return BasePointField(
        horizon=T,
        height_bound=bounds,
        q_mass=np.array([law.mass for law in marks], dtype=float),
        times=times,
        marks=mvals,
        heights=heights,
    )


def common_base_field(spec: SeedSpec, replication: int, T: float, marks, bounds) -> BasePointField:
    """Base field for one replication, a function of the common seed only."""
    rng = derive_stream(spec, StreamKey(replication, ENTITY_BASE_FIELD, Purpose.BASE_POINTS))
    mrng = derive_stream(spec, StreamKey(replication, ENTITY_MARKS, Purpose.MARKS))
    return sample_base_field(rng, T, marks, bounds, mark_rng=mrng)
