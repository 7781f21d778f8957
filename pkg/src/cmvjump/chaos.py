"""Propagation-of-chaos experiments by synchronous coupling.

For each replication one base field is drawn on the common seed.  A large
reference population (the proxy for the conditional law of the limit), the
finite system at every requested n, and the limit particles frozen in the
proxy environment are all driven by that base field, and particle ``i``
uses the same Brownian stream in the finite system and as a limit particle.
Only the environment differs, so pathwise differences measure the
mean-field error directly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize, stats

from .errors import ConfigurationError, InputError
from .integrator import (
    DEFAULT_N_REF,
    SimConfig,
    replication_base_field,
    simulate_conditioned,
    simulate_finite_system,
    simulate_reference,
    uniform_grid,
)
from .measures import w2_between, w2_sq_quantile
from .model import CoefficientSet
from .noise import Purpose, SeedSpec, StreamKey, derive_stream

Z_DECREASE = 2.0
CONFIDENCE = 0.95


def map_replications(fn: Callable, replications: Sequence[int], threads: int = 1) -> list:
    """Apply ``fn`` to each replication index; results come back in index order."""
    if threads < 1:
        raise ConfigurationError("threads must be >= 1")
    if threads == 1 or len(replications) < 2:
        return [fn(r) for r in replications]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, replications))


def _cfg(model, T, dt, n, seed_spec, rep) -> SimConfig:
    dt = T / 1000 if dt is None else dt
    return SimConfig(T=T, dt=dt, n=n, d=model.d, k=model.k, l=model.l, seed_spec=seed_spec, replication=rep)


def _se(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(x.std(ddof=1) / math.sqrt(x.size))


# ---------------------------------------------------------------------------
# coupling


@dataclass
class ReplicationMetrics:
    path_sup_sq: float  # mean over the index set of sup_s |X^{i,n}_s - X^i_s|^2
    w2_curve: np.ndarray  # W2(mu^n_t, proxy_t)^2 on the uniform grid


def coupling_replication(
    model: CoefficientSet,
    n_values: Sequence[int],
    N_ref: int,
    seed_spec: SeedSpec,
    rep: int,
    T: float = 1.0,
    dt: float | None = None,
    index_sets: dict | None = None,
    n_ref_extra: Sequence[int] = (),
) -> dict:
    """Coupling metrics of one replication for every n (and optionally extra proxy sizes).

    Returns ``{(n, N): ReplicationMetrics}`` for ``N`` in ``[N_ref, *n_ref_extra]``.
    The limit particles depend only on the proxy, not on n, so one batch
    serves all n.
    """
    n_values = sorted(int(n) for n in n_values)
    index_sets = index_sets or {n: np.arange(n) for n in n_values}
    cfg = _cfg(model, T, dt, n_values[-1], seed_spec, rep)
    base = replication_base_field(model, cfg)
    wanted = np.unique(np.concatenate([np.asarray(index_sets[n], dtype=int) for n in n_values]))
    systems = {n: simulate_finite_system(model, cfg.with_(n=n), base)[0] for n in n_values}
    out = {}
    for N in [N_ref, *n_ref_extra]:
        proxy = simulate_reference(model, cfg, base, n_ref=N)
        cond = simulate_conditioned(model, proxy.measure_path, cfg, base, particles=wanted)
        pos = {int(p): c for c, p in enumerate(wanted)}
        uidx = proxy.trajectory.uniform_index
        ref_states = proxy.trajectory.states[uidx]
        ref_sorted = np.sort(ref_states[:, :, 0], axis=1) if model.d == 1 else None
        for n in n_values:
            traj = systems[n]
            I = np.asarray(index_sets[n], dtype=int)
            if not np.array_equal(traj.grid, cond.grid):
                raise RuntimeError("finite system and limit particles ended up on different grids")
            diff = traj.states[:, I, :] - cond.states[:, [pos[int(i)] for i in I], :]
            path = float(np.mean(np.max(np.sum(diff * diff, axis=2), axis=0)))
            sys_states = traj.states[uidx]
            if model.d == 1:
                curve = w2_sq_quantile(np.sort(sys_states[:, :, 0], axis=1), ref_sorted)
            else:
                rng = derive_stream(seed_spec, StreamKey(rep, n, Purpose.AUX))
                curve = np.array([w2_between(a, b, rng=rng) ** 2 for a, b in zip(sys_states, ref_states)])
            out[(n, N)] = ReplicationMetrics(path, np.asarray(curve, dtype=float))
    return out


@dataclass
class CouplingRunResult:
    n: int
    replications: int
    path_err_sq: float
    path_err_se: float
    w2_err_sq: float
    w2_err_se: float
    # per-replication values behind the two means, kept for paired comparisons
    path_samples: np.ndarray = field(repr=False, default=None)
    w2_samples: np.ndarray = field(repr=False, default=None)
    w2_curve: np.ndarray = field(repr=False, default=None)
    sup_time: float = 0.0
    N_ref: int = DEFAULT_N_REF

    def as_row(self) -> tuple:
        return (self.n, self.replications, self.path_err_sq, self.path_err_se, self.w2_err_sq, self.w2_err_se)


def _aggregate(n: int, N: int, metrics: list, times: np.ndarray) -> CouplingRunResult:
    R = len(metrics)
    path = np.array([m.path_sup_sq for m in metrics])
    curves = np.stack([m.w2_curve for m in metrics])
    mean_curve = curves.mean(axis=0)
    k = int(np.argmax(mean_curve))
    w2 = curves[:, k]
    return CouplingRunResult(
        n=n,
        replications=R,
        path_err_sq=float(path.mean()),
        path_err_se=_se(path),
        w2_err_sq=float(w2.mean()),
        w2_err_se=_se(w2),
        path_samples=path,
        w2_samples=w2,
        w2_curve=mean_curve,
        sup_time=float(times[k]),
        N_ref=N,
    )


def _check_R(R: int):
    if R < 2:
        raise ConfigurationError("at least two replications are needed for standard errors")


def run_synchronous_coupling(
    model: CoefficientSet,
    n: int,
    N_ref: int,
    I: Sequence[int] | None,
    R: int,
    seed_spec: SeedSpec,
    T: float = 1.0,
    dt: float | None = None,
    threads: int = 1,
) -> CouplingRunResult:
    """Path and W2 errors between the n-system and its coupled limit, over R replications."""
    _check_R(R)
    I = np.arange(n) if I is None else np.asarray(I, dtype=int)
    if I.size == 0 or I.size > n or I.min() < 0 or I.max() >= n:
        raise ConfigurationError("index set must be a non-empty subset of the particle range")
    if n > N_ref:
        raise ConfigurationError("n must not exceed N_ref")

    def one(rep):
        return coupling_replication(model, [n], N_ref, seed_spec, rep, T, dt, {n: I})[(n, N_ref)]

    metrics = map_replications(one, list(range(R)), threads)
    return _aggregate(n, N_ref, metrics, _uniform_times(T, dt))


def _uniform_times(T, dt):
    return uniform_grid(T, T / 1000 if dt is None else dt)


@dataclass
class SlopeFit:
    slope: float
    stderr: float
    upper: float  # one-sided upper confidence bound
    applicable: bool

    def negative(self) -> bool:
        return self.applicable and self.upper < 0


def fit_loglog(n: Sequence[int], err: Sequence[float], confidence: float = CONFIDENCE) -> SlopeFit:
    """Least-squares slope of log(err) on log(n); not applicable if any error is <= 0."""
    n = np.asarray(n, dtype=float)
    err = np.asarray(err, dtype=float)
    if n.size < 2 or np.any(err <= 0) or not np.all(np.isfinite(err)):
        return SlopeFit(math.nan, math.nan, math.nan, False)
    fit = stats.linregress(np.log(n), np.log(err))
    df = n.size - 2
    q = stats.t.ppf(0.5 + confidence / 2, df) if df > 0 else math.inf
    upper = fit.slope + q * fit.stderr if df > 0 else math.nan
    return SlopeFit(float(fit.slope), float(fit.stderr), float(upper), df > 0)


@dataclass
class ConvergenceStudy:
    rows: list
    slope_path: SlopeFit
    slope_w2: SlopeFit
    N_ref: int
    proxy_rows: list | None = None  # same study at a smaller proxy size

    def decreasing(self, metric: str = "path", z: float = Z_DECREASE) -> tuple[bool, list]:
        """Each row below the previous by more than z paired standard errors."""
        attr = {"path": "path_samples", "w2": "w2_samples"}[metric]
        scores = []
        for a, b in zip(self.rows[:-1], self.rows[1:]):
            d = getattr(a, attr) - getattr(b, attr)
            se = _se(d)
            scores.append(float(d.mean() / se) if se > 0 else (math.inf if d.mean() > 0 else 0.0))
        return all(s > z for s in scores), scores

    def proxy_sensitivity(self) -> list | None:
        """Per-n change of the W2 error when the proxy shrinks to half size."""
        if self.proxy_rows is None:
            return None
        return [
            {"n": a.n, "w2_err_sq": a.w2_err_sq, "w2_err_sq_half": b.w2_err_sq, "difference": b.w2_err_sq - a.w2_err_sq}
            for a, b in zip(self.rows, self.proxy_rows)
        ]


def convergence_study(
    model: CoefficientSet,
    n_grid: Sequence[int],
    N_ref: int,
    R: int,
    seed_spec: SeedSpec,
    T: float = 1.0,
    dt: float | None = None,
    threads: int = 1,
    proxy_check: bool = False,
) -> ConvergenceStudy:
    """Coupling errors over an increasing n grid with common random numbers across n."""
    _check_R(R)
    n_grid = [int(n) for n in n_grid]
    if not n_grid or any(b <= a for a, b in zip(n_grid[:-1], n_grid[1:])) or n_grid[0] < 1:
        raise ConfigurationError("n_grid must be strictly increasing positive integers")
    if 4 * n_grid[-1] > N_ref:
        raise ConfigurationError("max(n_grid) must not exceed N_ref / 4")
    extra = [N_ref // 2] if proxy_check else []

    def one(rep):
        return coupling_replication(model, n_grid, N_ref, seed_spec, rep, T, dt, n_ref_extra=extra)

    per_rep = map_replications(one, list(range(R)), threads)
    times = _uniform_times(T, dt)
    rows = [_aggregate(n, N_ref, [m[(n, N_ref)] for m in per_rep], times) for n in n_grid]
    proxy_rows = None
    if proxy_check:
        proxy_rows = [_aggregate(n, extra[0], [m[(n, extra[0])] for m in per_rep], times) for n in n_grid]
    return ConvergenceStudy(
        rows=rows,
        slope_path=fit_loglog(n_grid, [r.path_err_sq for r in rows]),
        slope_w2=fit_loglog(n_grid, [r.w2_err_sq for r in rows]),
        N_ref=N_ref,
        proxy_rows=proxy_rows,
    )


# ---------------------------------------------------------------------------
# conditional i.i.d. tests


@dataclass
class TestReport:
    name: str
    passed: bool
    statistics: dict

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "statistics": self.statistics}


TestReport.__test__ = False


def terminal_pairs(
    model: CoefficientSet,
    n: int,
    R: int,
    seed_spec: SeedSpec,
    T: float = 1.0,
    dt: float | None = None,
    threads: int = 1,
    particles: tuple = (0, 1),
) -> np.ndarray:
    """First coordinate of X_T for two particles of the n-system, one row per replication."""

    def one(rep):
        cfg = _cfg(model, T, dt, n, seed_spec, rep)
        traj, _ = simulate_finite_system(model, cfg, replication_base_field(model, cfg))
        return traj.terminal[list(particles), 0]

    return np.array(map_replications(one, list(range(R)), threads))


def test_exchangeability(
    model: CoefficientSet,
    n: int,
    R: int,
    seed_spec: SeedSpec,
    T: float = 1.0,
    dt: float | None = None,
    threads: int = 1,
    level: float = 0.01,
) -> TestReport:
    """Two-sample KS on X_T^1 vs X_T^2 plus a swap-symmetry test on (X_T^1, X_T^2).

    Under exchangeability X^1 - X^2 is symmetric about 0, which the
    Wilcoxon signed-rank test (a rank statistic of the pair) checks.
    """
    if n < 2:
        raise ConfigurationError("exchangeability needs n >= 2")
    if R < 100:
        raise ConfigurationError("exchangeability needs R >= 100")
    xy = terminal_pairs(model, n, R, seed_spec, T, dt, threads)
    ks = stats.ks_2samp(xy[:, 0], xy[:, 1])
    diff = xy[:, 0] - xy[:, 1]
    if np.all(diff == 0):
        sw_stat, sw_p = 0.0, 1.0
    else:
        sw = stats.wilcoxon(diff)
        sw_stat, sw_p = float(sw.statistic), float(sw.pvalue)
    passed = ks.pvalue > level and sw_p > level
    return TestReport(
        "exchangeability",
        bool(passed),
        {
            "ks_statistic": float(ks.statistic),
            "ks_pvalue": float(ks.pvalue),
            "swap_statistic": sw_stat,
            "swap_pvalue": sw_p,
            "level": level,
            "n": n,
            "replications": R,
        },
    )


test_exchangeability.__test__ = False


def conditioned_terminals(
    model: CoefficientSet,
    count: int,
    seed_spec: SeedSpec,
    rep: int,
    T: float = 1.0,
    dt: float | None = None,
    N_ref: int = DEFAULT_N_REF,
) -> np.ndarray:
    """X_T (first coordinate) of ``count`` limit particles sharing one common-noise draw."""
    cfg = _cfg(model, T, dt, count, seed_spec, rep)
    base = replication_base_field(model, cfg)
    proxy = simulate_reference(model, cfg.with_(n=min(count, N_ref)), base, n_ref=N_ref)
    cond = simulate_conditioned(model, proxy.measure_path, cfg, base, particles=np.arange(count))
    return cond.terminal[:, 0]


def test_conditional_independence(
    model: CoefficientSet,
    R_common: int,
    R_inner: int,
    seed_spec: SeedSpec,
    T: float = 1.0,
    dt: float | None = None,
    N_ref: int = DEFAULT_N_REF,
    threads: int = 1,
    expect_common_correlation: bool = True,
) -> TestReport:
    """Pairs of limit particles are uncorrelated given the common noise but not unconditionally.

    Per common seed, ``R_inner`` pairs (X^1, X^2) with independent Brownian
    streams are simulated in one proxy environment.  The within-seed sample
    covariance (normalised by the within-seed variance) must average to 0
    within 3 s.e.  The unconditional covariance, computed around the grand
    mean, must be positive at 3 s.e. when ``expect_common_correlation``.
    """
    if R_common < 32 or R_inner < 256:
        raise ConfigurationError("need R_common >= 32 and R_inner >= 256")

    def one(rep):
        x = conditioned_terminals(model, 2 * R_inner, seed_spec, rep, T, dt, N_ref)
        return x[0::2], x[1::2]

    pairs = map_replications(one, list(range(R_common)), threads)
    x1 = np.stack([p[0] for p in pairs])
    x2 = np.stack([p[1] for p in pairs])
    within_cov = np.array([np.cov(a, b, ddof=1)[0, 1] for a, b in zip(x1, x2)])
    within_var = np.array([np.var(np.concatenate([a, b]), ddof=1) for a, b in zip(x1, x2)])
    safe = np.where(within_var > 0, within_var, 1.0)
    rho = np.where(within_var > 0, within_cov / safe, 0.0)
    rho_mean, rho_se = float(rho.mean()), _se(rho)
    cond_ok = abs(rho_mean) <= 3.0 * rho_se if rho_se > 0 else rho_mean == 0.0

    grand = 0.5 * (x1.mean() + x2.mean())
    contrib = np.mean((x1 - grand) * (x2 - grand), axis=1)
    u_mean, u_se = float(contrib.mean()), _se(contrib)
    uncond_positive = u_mean > 3.0 * u_se
    if expect_common_correlation:
        passed = cond_ok and uncond_positive
    else:
        passed = cond_ok and abs(u_mean) <= 3.0 * u_se if u_se > 0 else cond_ok
    return TestReport(
        "conditional_independence",
        bool(passed),
        {
            "conditional_corr": rho_mean,
            "conditional_corr_se": rho_se,
            "conditional_ok": bool(cond_ok),
            "unconditional_cov": u_mean,
            "unconditional_cov_se": u_se,
            "unconditional_positive": bool(uncond_positive),
            "R_common": R_common,
            "R_inner": R_inner,
        },
    )


test_conditional_independence.__test__ = False


def half_sample_w2(
    model: CoefficientSet,
    R_inner: int,
    seed_spec: SeedSpec,
    rep: int = 0,
    T: float = 1.0,
    dt: float | None = None,
    N_ref: int = DEFAULT_N_REF,
) -> float:
    """W2 between the two halves of 2 R_inner limit particles in one common-noise draw."""
    x = conditioned_terminals(model, 2 * R_inner, seed_spec, rep, T, dt, N_ref)
    return w2_between(x[:R_inner], x[R_inner:])


# ---------------------------------------------------------------------------
# Gronwall envelope


def gronwall_G(u, eps: float):
    """G(u) = 2 ln(sqrt(u) + 1) - 2 ln(sqrt(eps) + 1), a primitive of 1/(u + sqrt(u))."""
    return 2.0 * np.log1p(np.sqrt(u)) - 2.0 * np.log1p(np.sqrt(eps))


def gronwall_G_inv(y, eps: float):
    return ((math.sqrt(eps) + 1.0) * np.exp(np.asarray(y) / 2.0) - 1.0) ** 2


def gronwall_envelope(a: float, k: float, t: float, eps: float) -> float:
    """G^{-1}(G(a) + k t), the bound on u solving u <= a + int k g(u) with g(u) = u + sqrt(u)."""
    if not eps > 0:
        raise InputError("eps must be positive")
    if a < 0 or k < 0 or t < 0:
        raise InputError("a, k and t must be nonnegative")
    if 0 < a < eps:
        raise InputError(f"a={a} lies in (0, eps={eps}); the envelope needs a >= eps or a = 0")
    return float(gronwall_G_inv(gronwall_G(a, eps) + k * t, eps))


def gronwall_oracle(a: float, kt: float, tol: float = 1e-14) -> float:
    """Solve int_a^u ds / (s + sqrt(s)) = kt by quadrature and bisection."""

    def f(u):
        if u <= a:
            return -kt
        val, _ = integrate.quad(lambda s: 1.0 / (s + math.sqrt(s)), a, u, epsabs=0.0, epsrel=1e-13, limit=200)
        return val - kt

    if kt == 0:
        return a
    hi = max(a, 1.0)
    while f(hi) < 0:
        hi *= 4.0
    return optimize.bisect(f, a, hi, xtol=tol * hi, rtol=4 * np.finfo(float).eps, maxiter=500)


@dataclass
class EnvelopeRow:
    n: int
    a: float
    eps: float
    envelope: float
    path_err_sq: float
    holds: bool


def envelope_check(study: ConvergenceStudy, k: float, eps: float, T: float = 1.0) -> list[EnvelopeRow]:
    """Report whether each measured path error sits below the Gronwall envelope.

    a(T) = k T g(sup_t w2_err_sq(t)), g(u) = u + sqrt(u).  When a(T) falls in
    (0, eps) the envelope is evaluated with eps = a(T).  Diagnostic only.
    """
    out = []
    for row in study.rows:
        w = row.w2_err_sq
        a = k * T * (w + math.sqrt(w))
        e = min(eps, a) if a > 0 else eps
        env = gronwall_envelope(a, k, T, e)
        out.append(EnvelopeRow(row.n, a, e, env, row.path_err_sq, row.path_err_sq <= env))
    return out
