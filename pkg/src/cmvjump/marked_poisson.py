"""State-dependent marked Poisson noise built by thinning a shared base field.

A base point ``(t, r, s)`` of noise dimension ``j`` is accepted iff
``s <= lambda_j(t, env_{t-}, r)``.  Because every system in a replication
thins the *same* base field, two intensities share all randomness below
their pointwise minimum, which is what makes the synchronous coupling exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import InputError, IntensityBoundError
from .measures import EmpiricalMeasure, MeasurePath
from .noise import BasePointField, MarkLaw


class Estimate(NamedTuple):
    value: np.ndarray | float
    se: np.ndarray | float


@dataclass
class IntensityCandidate:
    """lambda_t(nu, r) for each of the l noise dimensions.

    ``evaluate(t, nu, r)`` returns an array of shape ``(l,)``.  ``bound`` is
    the declared supremum per dimension and ``lipschitz_w2`` the declared
    W2-Lipschitz constant in the measure argument.  Set ``mark_independent``
    when lambda does not depend on r; integrals against Q are then exact.
    """

    evaluate: Callable
    bound: np.ndarray
    lipschitz_w2: float = 0.0
    mark_independent: bool = False

    def __post_init__(self):
        self.bound = np.atleast_1d(np.asarray(self.bound, dtype=float))

    @property
    def l(self) -> int:
        return self.bound.size

    def __call__(self, t, nu, r) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.evaluate(t, nu, r), dtype=float))


def constant_intensity(values, bound=None) -> IntensityCandidate:
    values = np.atleast_1d(np.asarray(values, dtype=float))
    bound = values.copy() if bound is None else bound
    return IntensityCandidate(lambda t, nu, r: values, bound, 0.0, mark_independent=True)


@dataclass
class AcceptedJumps:
    """Accepted (time, mark) pairs per noise dimension, time-sorted."""

    times: list[np.ndarray]
    marks: list[np.ndarray]

    @classmethod
    def empty(cls, l: int, mark_dim: int = 1) -> "AcceptedJumps":
        return cls([np.zeros(0) for _ in range(l)], [np.zeros((0, mark_dim)) for _ in range(l)])

    @property
    def n_dims(self) -> int:
        return len(self.times)

    def counts(self) -> np.ndarray:
        return np.array([t.size for t in self.times])

    def total(self) -> int:
        return int(self.counts().sum())

    def events(self):
        """Yield ``(time, dim, mark)`` in time order across dimensions."""
        if not self.times:
            return
        t = np.concatenate(self.times)
        dims = np.concatenate([np.full(a.size, j) for j, a in enumerate(self.times)])
        idx = np.concatenate([np.arange(a.size) for a in self.times])
        for k in np.argsort(t, kind="stable"):
            j = dims[k]
            yield t[k], j, self.marks[j][idx[k]]


def check_bounds(lam: IntensityCandidate, base: BasePointField) -> None:
    if lam.l != base.n_dims:
        raise InputError("intensity and base field disagree on the number of noise dimensions")
    if np.any(lam.bound > base.height_bound):
        raise InputError("declared intensity bound exceeds the base-field height bound")


def intensity_at(lam: IntensityCandidate, t: float, nu, r, j: int, height_bound: float) -> float:
    """lambda_j(t, nu, r), aborting on values outside [0, height_bound]."""
    val = lam(t, nu, r)[j]
    if not val <= height_bound:  # also catches NaN
        raise IntensityBoundError(t, j, val, height_bound)
    if val < 0:
        raise InputError(f"negative intensity {val} at t={t}")
    return float(val)


def thin(base: BasePointField, lam: IntensityCandidate, env: MeasurePath) -> AcceptedJumps:
    """Accept base points lying below lambda evaluated at the environment's left limit."""
    check_bounds(lam, base)
    times, marks = [], []
    for j in range(base.n_dims):
        keep = np.zeros(base.times[j].size, dtype=bool)
        for i, (t, s) in enumerate(zip(base.times[j], base.heights[j])):
            nu = env.left_limit(t)
            keep[i] = s <= intensity_at(lam, t, nu, base.marks[j][i], j, base.height_bound[j])
        times.append(base.times[j][keep])
        marks.append(base.marks[j][keep])
    return AcceptedJumps(times, marks)


def _lambda_nodes(lam: IntensityCandidate, t, nu, nodes: np.ndarray, j: int) -> np.ndarray:
    if lam.mark_independent:
        return np.full(nodes.shape[0], lam(t, nu, nodes[0])[j])
    return np.array([lam(t, nu, r)[j] for r in nodes])


def kernel_mass(
    lam: IntensityCandidate,
    marks: Sequence[MarkLaw],
    t: float,
    nu: EmpiricalMeasure,
    budget: int = 32,
    rng: np.random.Generator | None = None,
) -> Estimate:
    """K_t(R) = int lambda_t(nu, r) Q(dr) per dimension, with a standard error.

    Exact for mark-independent lambda or finite Q.  Otherwise Monte Carlo with
    ``budget`` draws when ``rng`` is given, else Gauss quadrature of that order.
    """
    vals, ses = np.zeros(len(marks)), np.zeros(len(marks))
    for j, law in enumerate(marks):
        if lam.mark_independent:
            vals[j] = law.mass * lam(t, nu, law.quadrature(1)[0][0])[j]
        elif law.exact or rng is None:
            nodes, w = law.quadrature(budget)
            vals[j] = float(w @ _lambda_nodes(lam, t, nu, nodes, j))
        else:
            if budget < 1:
                raise InputError("Monte Carlo budget must be >= 1")
            f = _lambda_nodes(lam, t, nu, law.sample(rng, budget), j)
            vals[j] = law.mass * f.mean()
            ses[j] = law.mass * f.std(ddof=1) / np.sqrt(budget) if budget > 1 else np.inf
    return Estimate(vals, ses)


def random_norm_sq(
    U: Callable,
    lam: IntensityCandidate,
    marks: Sequence[MarkLaw],
    nu: EmpiricalMeasure,
    t: float,
    budget: int = 32,
    rng: np.random.Generator | None = None,
) -> Estimate:
    """||U_t||^2 = int Tr(U(r) diag(lambda_t(nu, r) Q(dr)) U(r)^T).

    ``U(t, r)`` returns a ``(d, l)`` matrix; column j is weighted by the
    kernel of noise dimension j.  Estimation rules are those of
    :func:`kernel_mass`.
    """
    total, var = 0.0, 0.0
    for j, law in enumerate(marks):
        if law.exact or rng is None:
            nodes, w = law.quadrature(budget)
            f = np.array([np.sum(np.asarray(U(t, r), float)[:, j] ** 2) for r in nodes])
            total += float(w @ (f * _lambda_nodes(lam, t, nu, nodes, j)))
        else:
            r = law.sample(rng, budget)
            f = np.array([np.sum(np.asarray(U(t, ri), float)[:, j] ** 2) for ri in r])
            g = law.mass * f * _lambda_nodes(lam, t, nu, r, j)
            total += g.mean()
            var += g.var(ddof=1) / budget if budget > 1 else np.inf
    return Estimate(total, float(np.sqrt(var)))


def integrate_marked(U: Callable, jumps: AcceptedJumps, up_to: float) -> np.ndarray:
    """sum_j sum_i U_{tau_i^j}(xi_i^j)[:, j] 1{tau_i^j <= up_to}."""
    out = None
    for t, j, r in jumps.events():
        if t > up_to:
            break
        col = np.asarray(U(t, r), dtype=float)[:, j]
        out = col.copy() if out is None else out + col
    if out is None:
        # no jump: infer d from a probe evaluation when possible
        return np.zeros(_probe_dim(U, jumps))
    return out


def _probe_dim(U, jumps) -> int:
    mdim = jumps.marks[0].shape[1] if jumps.marks else 1
    return np.asarray(U(0.0, np.zeros(mdim)), dtype=float).shape[0]


def compensator_rate(
    gamma_col: Callable,
    lam: IntensityCandidate,
    marks: Sequence[MarkLaw],
    t: float,
    nu,
    order: int = 32,
) -> np.ndarray:
    """sum_j int gamma_col(r, j) lambda_j(t, nu, r) Q_j(dr) by quadrature.

    ``gamma_col(r, j)`` returns the j-th column contribution (any array shape).
    """
    out = 0.0
    for j, law in enumerate(marks):
        nodes, w = law.quadrature(order)
        lam_w = w * _lambda_nodes(lam, t, nu, nodes, j)
        for r, c in zip(nodes, lam_w):
            if c != 0.0:
                out = out + c * gamma_col(r, j)
    return out


def integrate_compensated(
    U: Callable,
    jumps: AcceptedJumps,
    lam: IntensityCandidate,
    marks: Sequence[MarkLaw],
    env: MeasurePath,
    grid,
    up_to: float | None = None,
    order: int = 32,
) -> np.ndarray:
    """Integral against eta - K dt; the compensator by left-endpoint quadrature on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    up_to = grid[-1] if up_to is None else float(up_to)
    out = integrate_marked(U, jumps, up_to).astype(float)
    for a, b in zip(grid[:-1], grid[1:]):
        if a >= up_to:
            break
        h = min(b, up_to) - a
        nu = env.value_at(a)
        rate = compensator_rate(lambda r, j: np.asarray(U(a, r), float)[:, j], lam, marks, a, nu, order)
        out = out - h * rate
    return out
