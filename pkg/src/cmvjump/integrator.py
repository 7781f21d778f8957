"""Euler-Maruyama time stepping with exactly placed common jumps.

The time grid of a replication is the uniform grid of step ``dt`` merged with
*every* base-field time (accepted or not).  It therefore depends only on the
common noise, so the finite system, the reference population and the frozen
environment particles of one replication share one grid and one set of
Brownian increments per particle key.  Coefficients are evaluated at the
left end of each step; a base point at ``t`` is thinned against the
pre-jump (left-limit) empirical measure and, if accepted, moves every
particle at once.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigurationError, InputError, IntensityBoundError, NumericalDivergenceError
from .marked_poisson import AcceptedJumps, check_bounds, intensity_at
from .measures import EmpiricalMeasure, MeasurePath
from .model import CoefficientSet, RegimeModel, interval_table
from .noise import (
    REFERENCE_OFFSET,
    BasePointField,
    Purpose,
    SeedSpec,
    StreamKey,
    UniformMarks,
    brownian_increments,
    common_base_field,
    derive_stream,
)

DEFAULT_N_REF = 2048


@dataclass
class SimConfig:
    """Horizon, step, population size, dimensions and seeds of one replication.

    ``dt_noise`` is the resolution at which Brownian increments are drawn
    (defaults to ``dt``); runs whose ``dt`` is a multiple of a shared
    ``dt_noise`` see the same Brownian paths, which is what a strong-error
    comparison across step sizes needs.
    """

    T: float
    dt: float
    n: int
    d: int = 1
    k: int = 1
    l: int = 1
    seed_spec: SeedSpec = field(default_factory=lambda: SeedSpec(0, 0))
    replication: int = 0
    dt_noise: float | None = None
    common_init: bool = False
    quad_order: int = 32

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ConfigurationError("T must be positive")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError("dt must be positive")
        if self.dt > self.T:
            raise ConfigurationError("dt must not exceed T")
        if self.n < 1:
            raise ConfigurationError("n must be >= 1")
        if self.dt_noise is not None and not (self.dt_noise > 0 and self.dt_noise <= self.dt):
            raise ConfigurationError("dt_noise must lie in (0, dt]")

    def with_(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


def uniform_grid(T: float, dt: float) -> np.ndarray:
    """``T * i / N`` with ``N = ceil(T / dt)``; nested for dt's dividing each other."""
    N = max(1, math.ceil(T / dt - 1e-9))
    return T * (np.arange(N + 1) / N)


@dataclass
class EventGrid:
    times: np.ndarray
    uniform_index: np.ndarray  # positions of the uniform grid points
    events: dict  # grid index -> list of (dim, index within dim)


def event_grid(T: float, dt: float, base: BasePointField) -> EventGrid:
    uni = uniform_grid(T, dt)
    ev_t, ev_dim, ev_idx = base.events()
    times = np.union1d(uni, ev_t)
    events: dict[int, list] = {}
    pos = np.searchsorted(times, ev_t)
    for p, j, i in zip(pos, ev_dim, ev_idx):
        events.setdefault(int(p), []).append((int(j), int(i)))
    return EventGrid(times, np.searchsorted(times, uni), events)


@dataclass
class TrajectorySet:
    """Particle paths on the event-augmented grid.

    ``states[i]`` is the post-jump value at ``grid[i]``; the left limit at a
    jump index is kept in ``pre_jump``.
    """

    grid: np.ndarray
    states: np.ndarray
    jumps: AcceptedJumps
    jump_index: np.ndarray
    pre_jump: dict
    particles: np.ndarray
    uniform_index: np.ndarray
    regime_path: tuple | None = None

    def left_state(self, i: int) -> np.ndarray:
        return self.pre_jump.get(i, self.states[i])

    def measure_path(self) -> MeasurePath:
        return MeasurePath(self.grid, self.states, self.pre_jump)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


@dataclass
class MeanFieldProxy:
    N_ref: int
    measure_path: MeasurePath
    base: BasePointField
    trajectory: TrajectorySet


def _check_dims(model, cfg: SimConfig):
    if (model.d, model.k) != (cfg.d, cfg.k) or (isinstance(model, CoefficientSet) and model.l != cfg.l):
        raise ConfigurationError(
            f"model dims (d={model.d}, k={model.k}) do not match the configuration "
            f"(d={cfg.d}, k={cfg.k}, l={cfg.l})"
        )


def initial_states(model, cfg: SimConfig, ids) -> np.ndarray:
    """X_0 for the given particle keys; one stream per particle."""
    out = np.empty((len(ids), cfg.d))
    for p, i in enumerate(ids):
        rng = derive_stream(cfg.seed_spec, StreamKey(cfg.replication, int(i), Purpose.INIT), common=cfg.common_init)
        out[p] = model.x0(rng, 1)[0]
    return out


def particle_increments(cfg: SimConfig, ids, grid: EventGrid, base: BasePointField) -> np.ndarray:
    """Brownian increments of shape ``(len(grid) - 1, len(ids), k)``."""
    times = grid.times
    fine, pos = times, None
    if cfg.dt_noise is not None and cfg.dt_noise != cfg.dt:
        n_coarse = len(uniform_grid(cfg.T, cfg.dt)) - 1
        n_fine = len(uniform_grid(cfg.T, cfg.dt_noise)) - 1
        if n_fine % n_coarse:
            raise ConfigurationError("dt must be an integer multiple of dt_noise")
        fine = event_grid(cfg.T, cfg.dt_noise, base).times
        pos = np.searchsorted(fine, times)
        if not np.array_equal(fine[pos], times):
            raise ConfigurationError("step grid is not nested in the noise grid")
    out = np.empty((times.size - 1, len(ids), cfg.k))
    for p, i in enumerate(ids):
        rng = derive_stream(cfg.seed_spec, StreamKey(cfg.replication, int(i), Purpose.BROWNIAN))
        z = brownian_increments(rng, fine, cfg.k)
        if pos is not None:
            z = np.add.reduceat(z, pos[:-1], axis=0)
        out[:, p, :] = z
    return out


def _integrate(model: CoefficientSet, cfg: SimConfig, base: BasePointField, ids, env: MeasurePath | None):
    _check_dims(model, cfg)
    check_bounds(model.intensity, base)
    eg = event_grid(cfg.T, cfg.dt, base)
    grid = eg.times
    G = grid.size
    ids = np.asarray(ids, dtype=np.int64)
    X = initial_states(model, cfg, ids)
    dW = particle_increments(cfg, ids, eg, base)
    states = np.empty((G, ids.size, cfg.d))
    states[0] = X
    pre_jump: dict[int, np.ndarray] = {}
    acc = [[] for _ in range(cfg.l)]
    bias = model.particle_bias(ids) if model.particle_bias is not None else None

    aligned = env is not None and env.grid.size == G and np.array_equal(env.grid, grid)
    if env is None:
        def value(s):
            return EmpiricalMeasure(states[s], check=False)

        def left(s, X):
            return EmpiricalMeasure(X, check=False)
    elif aligned:
        def value(s):
            return env.value_index(s)

        def left(s, X):
            return env.left_index(s)
    else:
        def value(s):
            return env.value_at(grid[s])

        def left(s, X):
            return env.left_limit(grid[s])

    # overflow is caught below as a divergence, not reported as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(G - 1):
            t = grid[s]
            h = grid[s + 1] - t
            nu = value(s)
            incr = model.drift(t, nu, X) - model.compensator_drift(t, nu, X, cfg.quad_order)
            if bias is not None:
                incr = incr + bias
            sig = model.diffusion(t, nu, X)
            X = X + incr * h + (sig * dW[s][:, None, :]).sum(axis=2)
            todo = eg.events.get(s + 1)
            if todo and not np.all(np.isfinite(X)):
                raise NumericalDivergenceError(grid[s + 1])
            if todo:
                pre = X
                t1 = grid[s + 1]
                for j, i in todo:
                    nu_m = left(s + 1, X)
                    r = base.marks[j][i]
                    lam = intensity_at(model.intensity, t1, nu_m, r, j, base.height_bound[j])
                    if base.heights[j][i] <= lam:
                        X = X + model.jump(t1, nu_m, r, X)[:, :, j]
                        acc[j].append(i)
                if X is not pre:
                    pre_jump[s + 1] = pre
            if not np.all(np.isfinite(X)):
                raise NumericalDivergenceError(grid[s + 1])
            states[s + 1] = X

    jumps = AcceptedJumps(
        [base.times[j][np.asarray(acc[j], dtype=int)] for j in range(cfg.l)],
        [base.marks[j][np.asarray(acc[j], dtype=int)] for j in range(cfg.l)],
    )
    return TrajectorySet(
        grid=grid,
        states=states,
        jumps=jumps,
        jump_index=np.array(sorted(pre_jump), dtype=int),
        pre_jump=pre_jump,
        particles=ids,
        uniform_index=eg.uniform_index,
    )


def replication_base_field(model: CoefficientSet, cfg: SimConfig, height_bound=None) -> BasePointField:
    """Common base field of ``cfg.replication`` with bounds defaulting to the intensity bound."""
    bounds = model.intensity.bound if height_bound is None else height_bound
    return common_base_field(cfg.seed_spec, cfg.replication, cfg.T, model.marks, bounds)


def simulate_finite_system(model: CoefficientSet, cfg: SimConfig, base: BasePointField):
    """Interacting n-particle system; returns ``(TrajectorySet, MeasurePath)``."""
    traj = _integrate(model, cfg, base, np.arange(cfg.n), env=None)
    return traj, traj.measure_path()


def simulate_reference(
    model: CoefficientSet,
    cfg: SimConfig,
    base: BasePointField,
    n_ref: int = DEFAULT_N_REF,
    offset: int = REFERENCE_OFFSET,
) -> MeanFieldProxy:
    """Large population standing in for the conditional law of the limit.

    Its Brownian and initial-condition keys start at ``offset``, disjoint
    from the finite system's keys ``0..n-1``.
    """
    if n_ref < cfg.n:
        raise ConfigurationError("reference population must be at least as large as n")
    if offset < cfg.n:
        raise ConfigurationError("reference particle keys overlap the finite system's keys")
    traj = _integrate(model, cfg.with_(n=n_ref), base, offset + np.arange(n_ref), env=None)
    return MeanFieldProxy(n_ref, traj.measure_path(), base, traj)


def simulate_conditioned(
    model: CoefficientSet,
    env: MeasurePath,
    cfg: SimConfig,
    base: BasePointField,
    particles=(0,),
) -> TrajectorySet:
    """Non-interacting particles in a frozen environment (coefficients and intensity)."""
    return _integrate(model, cfg, base, np.atleast_1d(particles), env=env)


def simulate_conditioned_particle(model, env, cfg, base, particle: int = 0) -> TrajectorySet:
    return simulate_conditioned(model, env, cfg, base, [particle])


# ---------------------------------------------------------------------------
# regime switching


def regime_base_field(model: RegimeModel, cfg: SimConfig) -> BasePointField:
    """Poisson field with Lebesgue marks on the interval axis [0, |E| H0]."""
    U = model.interval_bound
    return common_base_field(cfg.seed_spec, cfg.replication, cfg.T, [UniformMarks(0.0, U, mass=U)], [1.0])


def simulate_regime_switching(model: RegimeModel, cfg: SimConfig, base: BasePointField) -> TrajectorySet:
    """Regime Y switches i -> j at a base point (t, u) iff u lies in Gamma^{(i,j)}(nu_{t-})."""
    _check_dims(model, cfg)
    spec = model.spec
    U = model.interval_bound
    if base.n_dims != 1 or base.marks[0].size and base.marks[0].max() > U:
        raise InputError("regime base field must have one dimension with marks in [0, |E| H0]")
    eg = event_grid(cfg.T, cfg.dt, base)
    grid = eg.times
    G = grid.size
    ids = np.arange(cfg.n)
    X = initial_states(model, cfg, ids)
    dW = particle_increments(cfg, ids, eg, base)
    states = np.empty((G, cfg.n, cfg.d))
    states[0] = X
    y = int(model.y0)
    switch_t, switch_u, path_t, path_y = [], [], [0.0], [y]
    for s in range(G - 1):
        t = grid[s]
        h = grid[s + 1] - t
        nu = EmpiricalMeasure(X, check=False)
        X = X + model.drift(t, nu, X, y) * h + model.vol * dW[s]
        for _, i in eg.events.get(s + 1, ()):
            nu_m = EmpiricalMeasure(X, check=False)
            Q = spec.rates(nu_m)
            out_rate = Q[y].sum() - Q[y, y]
            if out_rate > spec.H0 * (1 + 1e-12):
                raise IntensityBoundError(grid[s + 1], 0, out_rate, spec.H0)
            lows, highs = interval_table(Q)
            u = base.marks[0][i][0]
            hit = np.nonzero((lows[y] <= u) & (u < highs[y]))[0]
            if hit.size:
                y = int(hit[0])
                switch_t.append(grid[s + 1])
                switch_u.append(base.marks[0][i])
                path_t.append(grid[s + 1])
                path_y.append(y)
        if not np.all(np.isfinite(X)):
            raise NumericalDivergenceError(grid[s + 1])
        states[s + 1] = X
    jumps = AcceptedJumps([np.array(switch_t)], [np.array(switch_u).reshape(-1, 1)])
    return TrajectorySet(
        grid=grid,
        states=states,
        jumps=jumps,
        jump_index=np.searchsorted(grid, np.array(switch_t)).astype(int),
        pre_jump={},
        particles=ids,
        uniform_index=eg.uniform_index,
        regime_path=(np.array(path_t), np.array(path_y, dtype=int)),
    )


def regime_occupation(regime_path, T: float, n_states: int) -> np.ndarray:
    """Fraction of [0, T] spent in each regime."""
    times, ys = regime_path
    ends = np.append(times[1:], T)
    occ = np.zeros(n_states)
    np.add.at(occ, ys, ends - times)
    return occ / T


def regime_transition_counts(regime_path, T: float, n_states: int):
    """Jump counts N[i, j] and holding times per state, for rate estimates N / holding."""
    times, ys = regime_path
    counts = np.zeros((n_states, n_states))
    np.add.at(counts, (ys[:-1], ys[1:]), 1)
    holding = regime_occupation(regime_path, T, n_states) * T
    return counts, holding


# ---------------------------------------------------------------------------
# strong error


@dataclass
class StrongErrorResult:
    dts: np.ndarray
    rms: np.ndarray  # sqrt(E |X_T^dt - X_T^ref|^2), averaged over particles and replications
    se: np.ndarray  # standard error of the mean-square error across replications
    slope: float
    slope_stderr: float


def strong_error(
    model: CoefficientSet,
    dts,
    dt_ref: float,
    n: int,
    R: int,
    seed_spec: SeedSpec,
    T: float = 1.0,
) -> StrongErrorResult:
    """Terminal RMS error of coarse runs against a fine run driven by the same noise.

    Brownian increments are drawn on the ``dt_ref`` grid for every run and
    summed onto the coarser step grids, so the only difference is the step.
    """
    dts = np.asarray(dts, dtype=float)
    ms = np.zeros((dts.size, R))
    for rep in range(R):
        cfg = SimConfig(T=T, dt=dt_ref, n=n, d=model.d, k=model.k, l=model.l,
                        seed_spec=seed_spec, replication=rep, dt_noise=dt_ref)
        base = replication_base_field(model, cfg)
        ref, _ = simulate_finite_system(model, cfg, base)
        for i, dt in enumerate(dts):
            tr, _ = simulate_finite_system(model, cfg.with_(dt=float(dt)), base)
            ms[i, rep] = np.mean(np.sum((tr.terminal - ref.terminal) ** 2, axis=1))
    mse = ms.mean(axis=1)
    rms = np.sqrt(mse)
    fit = stats.linregress(np.log(dts), np.log(rms))
    return StrongErrorResult(dts, rms, ms.std(axis=1, ddof=1) / math.sqrt(R), float(fit.slope), float(fit.stderr))
