"""Coefficient sets, built-in models, regime intervals and assumption validators.

Coefficient callables are vectorised over particles:

* ``drift(t, nu, x)``        -> ``(n, d)``
* ``diffusion(t, nu, x)``    -> ``(n, d, k)``
* ``jump(t, nu, r, x)``      -> ``(n, d, l)`` for a single mark ``r``

where ``nu`` is an :class:`EmpiricalMeasure` and ``x`` has shape ``(n, d)``.
The validators are falsifiers: they search random atom measures for a
violation of the declared constants, they cannot certify a bound.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InputError
from .marked_poisson import IntensityCandidate, compensator_rate, constant_intensity, random_norm_sq
from .measures import EmpiricalMeasure, w2_1d, w2_exact, w2_to_dirac
from .noise import GaussianMarks, MarkLaw, UniformMarks

LIPSCHITZ_SLACK = 1e-6


@dataclass
class RegularityConstants:
    """Declared Lipschitz (K, K0), growth (beta) and fourth-moment (gamma_star) constants."""

    K: float = 1.0
    K0: float = 1.0
    beta: float = 1.0
    gamma_star: float = 1.0

    def __post_init__(self):
        for name in ("K", "K0", "beta", "gamma_star"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v >= 0):
                raise InputError(f"constant {name} must be finite and nonnegative")
            setattr(self, name, v)


def _standard_normal_x0(d, mean=0.0, std=1.0):
    def x0(rng, size):
        return mean + std * rng.standard_normal((int(size), d))

    return x0


@dataclass
class CoefficientSet:
    d: int
    k: int
    l: int
    drift: Callable
    diffusion: Callable
    jump: Callable
    intensity: IntensityCandidate
    marks: Sequence[MarkLaw]
    constants: RegularityConstants = field(default_factory=RegularityConstants)
    x0: Callable | None = None
    # closed form of sum_j int gamma[:, :, j] lambda_j Q_j(dr); quadrature when None
    compensator: Callable | None = None
    # per-particle extra drift, only used to build deliberately asymmetric controls
    particle_bias: Callable | None = None
    name: str = "custom"

    def __post_init__(self):
        if len(self.marks) != self.l or self.intensity.l != self.l:
            raise InputError("need one mark law and one intensity component per noise dimension")
        if self.x0 is None:
            self.x0 = _standard_normal_x0(self.d)

    def compensator_drift(self, t, nu, x, order: int = 32) -> np.ndarray:
        if self.compensator is not None:
            return self.compensator(t, nu, x)
        rate = compensator_rate(
            lambda r, j: self.jump(t, nu, r, x)[:, :, j], self.intensity, self.marks, t, nu, order
        )
        return np.zeros_like(x) + rate

    def replace(self, **changes) -> "CoefficientSet":
        return dataclasses.replace(self, **changes)

    def with_constants(self, **changes) -> "CoefficientSet":
        return self.replace(constants=dataclasses.replace(self.constants, **changes))


def zero_model(d: int = 1, l: int = 1, x0_std: float = 1.0) -> CoefficientSet:
    """All coefficients and the intensity vanish; particles stay at their initial draws."""

    return CoefficientSet(
        d=d,
        k=d,
        l=l,
        drift=lambda t, nu, x: np.zeros_like(x),
        diffusion=lambda t, nu, x: np.zeros((x.shape[0], d, d)),
        jump=lambda t, nu, r, x: np.zeros((x.shape[0], d, l)),
        intensity=constant_intensity(np.zeros(l), bound=np.ones(l)),
        marks=[UniformMarks() for _ in range(l)],
        constants=RegularityConstants(0.0, 0.0, 0.0, 0.0),
        x0=_standard_normal_x0(d, std=x0_std),
        compensator=lambda t, nu, x: np.zeros_like(x),
        name="zero",
    )


def inject_asymmetric_drift(model: CoefficientSet, particle: int = 0, amount: float = 1.0) -> CoefficientSet:
    """Negative control: add a constant drift to one particle index only."""

    def bias(indices):
        out = np.zeros((len(indices), model.d))
        out[np.asarray(indices) == particle] = amount
        return out

    return model.replace(particle_bias=bias, name=model.name + "+asym")


# ---------------------------------------------------------------------------
# systemic risk


@dataclass
class SystemicRiskParams:
    """Mean-reverting banks hit by common Gaussian shocks.

    Coefficients: b = a (mean(nu) - x), sigma = vol I, gamma = jump_scale r,
    lambda = min(lambda0 + lambda1 Var(nu), lambda_bar), marks N(0, 1).
    """

    a: float = 1.0
    vol: float = 1.0
    jump_scale: float = 0.5
    lambda0: float = 1.0
    lambda1: float = 1.0
    x0_mean: float = 0.0
    x0_std: float = 1.0

    def __post_init__(self):
        for name in ("a", "vol", "lambda0", "lambda1", "x0_std"):
            if not getattr(self, name) >= 0:
                raise InputError(f"systemic-risk parameter {name} must be >= 0")


def build_systemic_risk(params: SystemicRiskParams, lambda_bar: float, d: int = 1) -> CoefficientSet:
    a, vol, js = float(params.a), float(params.vol), float(params.jump_scale)
    lam0, lam1, lam_bar = float(params.lambda0), float(params.lambda1), float(lambda_bar)
    if not lam_bar > 0:
        raise InputError("lambda_bar must be positive")
    eye = np.eye(d)

    def drift(t, nu, x):
        return a * (nu.mean - x)

    def diffusion(t, nu, x):
        return np.broadcast_to(vol * eye, (x.shape[0], d, d))

    def jump(t, nu, r, x):
        return np.full((x.shape[0], d, 1), js * float(np.asarray(r).ravel()[0]))

    def lam(t, nu, r):
        return np.array([min(lam0 + lam1 * nu.var, lam_bar)])

    # |Var nu - Var nu'| <= W2 (sd + sd') and the cap keeps sd <= sqrt((lam_bar - lam0)/lam1)
    k_star = 2.0 * math.sqrt(lam1 * max(lam_bar - lam0, 0.0))
    constants = RegularityConstants(
        K=2.0 * a * a,
        K0=2.0 * a * a,
        beta=max(a, vol * math.sqrt(d) + abs(js) * math.sqrt(lam_bar * d)),
        gamma_star=3.0 * js**4,
    )
    return CoefficientSet(
        d=d,
        k=d,
        l=1,
        drift=drift,
        diffusion=diffusion,
        jump=jump,
        intensity=IntensityCandidate(lam, [lam_bar], k_star, mark_independent=True),
        marks=[GaussianMarks()],
        constants=constants,
        x0=_standard_normal_x0(d, params.x0_mean, params.x0_std),
        # marks are centred and lambda ignores them, so the compensator vanishes
        compensator=lambda t, nu, x: np.zeros_like(x),
        name="systemic_risk",
    )


# ---------------------------------------------------------------------------
# regime switching


def interval_table(Qmat) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper ends of the consecutive intervals Gamma^{(i,j)}.

    Pairs (i, j), i != j, are laid out from 0 in lexicographic order, each
    interval having length Q[i, j]; diagonal intervals are empty.
    """
    Q = np.asarray(Qmat, dtype=float)
    S = Q.shape[0]
    if Q.shape != (S, S):
        raise InputError("generator must be square")
    off = ~np.eye(S, dtype=bool)
    if np.any(Q[off] < 0):
        raise InputError("generator has a negative off-diagonal rate")
    lengths = np.where(off, Q, 0.0).ravel()
    lows = np.concatenate([[0.0], np.cumsum(lengths)[:-1]]).reshape(S, S)
    highs = lows + lengths.reshape(S, S)
    return lows, highs


def regime_intervals(Qmat, labels: Sequence | None = None) -> dict:
    """Map ``(i, j) -> (low, high)`` for every ordered pair with i != j."""
    lows, highs = interval_table(Qmat)
    S = lows.shape[0]
    labels = list(range(S)) if labels is None else list(labels)
    return {
        (labels[i], labels[j]): (float(lows[i, j]), float(highs[i, j]))
        for i in range(S)
        for j in range(S)
        if i != j
    }


@dataclass
class RegimeSpec:
    """Finite state set with a measure-dependent generator bounded by H0."""

    states: Sequence
    generator: Callable  # nu -> (S, S) generator matrix
    H0: float

    def __post_init__(self):
        self.states = list(self.states)
        if not self.H0 > 0:
            raise InputError("H0 must be positive")

    @property
    def size(self) -> int:
        return len(self.states)

    def rates(self, nu) -> np.ndarray:
        """Evaluate and check the generator at ``nu``."""
        Q = np.asarray(self.generator(nu), dtype=float)
        S = self.size
        if Q.shape != (S, S):
            raise InputError("generator has the wrong shape")
        off = ~np.eye(S, dtype=bool)
        if np.any(Q[off] < 0):
            raise InputError("generator has a negative off-diagonal rate")
        if np.any(np.abs(Q.sum(axis=1)) > 1e-12 * max(1.0, np.abs(Q).max())):
            raise InputError("generator rows must sum to zero")
        return Q


def constant_generator(Qmat) -> Callable:
    Q = np.asarray(Qmat, dtype=float)
    return lambda nu: Q


def generator_from_rates(offdiag) -> np.ndarray:
    """Complete an off-diagonal rate matrix with the diagonal -row sums."""
    Q = np.array(offdiag, dtype=float)
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


@dataclass
class RegimeModel:
    """dX = b(nu, X, Y) dt + vol dW with Y driven by the common Poisson field."""

    spec: RegimeSpec
    drift: Callable  # (t, nu, x, state_index) -> (n, d)
    vol: float
    d: int = 1
    x0: Callable | None = None
    y0: int = 0
    constants: RegularityConstants = field(default_factory=RegularityConstants)
    name: str = "regime_switching"

    def __post_init__(self):
        if self.x0 is None:
            self.x0 = _standard_normal_x0(self.d)
        if not 0 <= self.y0 < self.spec.size:
            raise InputError("initial regime index out of range")

    @property
    def k(self) -> int:
        return self.d

    @property
    def interval_bound(self) -> float:
        """Length of the interval axis needed to hold every Gamma^{(i,j)}."""
        return self.spec.size * self.spec.H0

    def regime_coefficients(self, e: int) -> CoefficientSet:
        """Frozen-regime coefficient set (gamma = 0, lambda = 0) for the validators."""
        d, vol = self.d, float(self.vol)
        eye = np.eye(d)
        return CoefficientSet(
            d=d,
            k=d,
            l=1,
            drift=lambda t, nu, x: self.drift(t, nu, x, e),
            diffusion=lambda t, nu, x: np.broadcast_to(vol * eye, (x.shape[0], d, d)),
            jump=lambda t, nu, r, x: np.zeros((x.shape[0], d, 1)),
            intensity=constant_intensity([0.0], bound=[1.0]),
            marks=[UniformMarks()],
            constants=self.constants,
            x0=self.x0,
            compensator=lambda t, nu, x: np.zeros_like(x),
            name=f"{self.name}[{self.spec.states[e]}]",
        )


def build_regime_switching(
    spec: RegimeSpec,
    drift: Callable,
    vol: float,
    d: int = 1,
    x0: Callable | None = None,
    y0: int = 0,
    constants: RegularityConstants | None = None,
) -> RegimeModel:
    """Regime-switching diffusion with sigma = vol I and no state jumps.

    ``drift(nu, x, e)`` receives the regime *index* e.
    """
    model = RegimeModel(
        spec=spec,
        drift=lambda t, nu, x, e: drift(nu, x, e),
        vol=float(vol),
        d=d,
        x0=x0,
        y0=y0,
        constants=constants or RegularityConstants(),
    )
    return model


def state_drifts(values: Sequence[float]) -> Callable:
    """Regime-dependent constant drift b(nu, x, e) = values[e]."""
    vals = np.asarray(values, dtype=float)
    return lambda nu, x, e: np.full_like(x, vals[e])


# ---------------------------------------------------------------------------
# validators


@dataclass
class ValidationReport:
    name: str
    passed: bool
    max_ratio: float
    samples: int
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "max_ratio": float(self.max_ratio),
            "samples": int(self.samples),
            "details": self.details,
        }


def _ratio(lhs: float, rhs: float) -> float:
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs <= 1e-300 else math.inf


def _w2(mu: np.ndarray, nu: np.ndarray) -> float:
    if mu.shape[1] == 1:
        return w2_1d(mu, nu)
    return w2_exact(mu, nu)


def _random_atoms(rng, d, size=None, box=10.0):
    size = int(rng.integers(1, 17)) if size is None else size
    return rng.uniform(-box, box, size=(size, d))


def _sample_pair(rng, d):
    """Random (nu, x), (nu', x') with equal support sizes; mixes several perturbation shapes."""
    atoms = _random_atoms(rng, d)
    x = rng.uniform(-10, 10, size=(1, d))
    scale = 10.0 ** rng.uniform(-3, 1)
    kind = rng.integers(4)
    if kind == 0:
        atoms2 = _random_atoms(rng, d, size=atoms.shape[0])
        x2 = rng.uniform(-10, 10, size=(1, d))
    elif kind == 1:
        atoms2 = atoms + scale * rng.standard_normal(d)
        x2 = x + scale * rng.standard_normal((1, d)) * 10.0 ** rng.uniform(-1, 1)
    elif kind == 2:
        atoms2 = atoms.copy()
        x2 = x + scale * rng.standard_normal((1, d))
    else:
        atoms2 = atoms + scale * rng.standard_normal(atoms.shape)
        x2 = x + scale * rng.standard_normal((1, d))
    return atoms, x, atoms2, x2


def _jump_norm_sq(model: CoefficientSet, t, nu, U, order) -> float:
    return float(random_norm_sq(U, model.intensity, model.marks, nu, t, budget=order).value)


def validate_lipschitz(
    model: CoefficientSet,
    samples: int,
    rng: np.random.Generator,
    order: int = 16,
    horizon: float = 1.0,
) -> ValidationReport:
    """Search for violations of the Lipschitz condition with the declared K, K0.

    Also checks the W2-Lipschitz constant of lambda (``intensity.lipschitz_w2``).
    """
    if samples < 2:
        raise InputError("need at least two samples")
    K, K0 = model.constants.K, model.constants.K0
    k_star = model.intensity.lipschitz_w2
    worst = {"total": 0.0, "drift": 0.0, "diffusion": 0.0, "jump": 0.0, "intensity": 0.0}
    for _ in range(int(samples)):
        a1, x1, a2, x2 = _sample_pair(rng, model.d)
        t = rng.uniform(0, horizon)
        nu1, nu2 = EmpiricalMeasure(a1), EmpiricalMeasure(a2)
        w = _w2(a1, a2)
        rhs = K0 * w * w + K * float(np.sum((x1 - x2) ** 2))
        db = float(np.sum((model.drift(t, nu1, x1) - model.drift(t, nu2, x2)) ** 2))
        ds = float(np.sum((model.diffusion(t, nu1, x1) - model.diffusion(t, nu2, x2)) ** 2))

        def dgamma(s, r):
            return model.jump(s, nu1, r, x1)[0] - model.jump(s, nu2, r, x2)[0]

        dg = _jump_norm_sq(model, t, nu1, dgamma, order)
        worst["drift"] = max(worst["drift"], _ratio(db, rhs))
        worst["diffusion"] = max(worst["diffusion"], _ratio(ds, rhs))
        worst["jump"] = max(worst["jump"], _ratio(dg, rhs))
        worst["total"] = max(worst["total"], _ratio(db + ds + dg, rhs))
        r0 = model.marks[0].sample(rng, 1)[0]
        dl = float(np.max(np.abs(model.intensity(t, nu1, r0) - model.intensity(t, nu2, r0))))
        worst["intensity"] = max(worst["intensity"], _ratio(dl, k_star * w))
    passed = worst["total"] <= 1 + LIPSCHITZ_SLACK and worst["intensity"] <= 1 + LIPSCHITZ_SLACK
    return ValidationReport(
        "lipschitz",
        passed,
        max(worst["total"], worst["intensity"]),
        int(samples),
        {"ratios": worst, "K": K, "K0": K0, "K_star": k_star},
    )


def validate_growth(
    model: CoefficientSet,
    samples: int,
    rng: np.random.Generator,
    order: int = 16,
    horizon: float = 1.0,
    strict: bool = False,
) -> ValidationReport:
    """Check |b| + ||sigma|| + ||gamma||_lambda <= beta (1 + W2(nu, delta_0) + |x|).

    ``strict=True`` drops the constant 1, the homogeneous form which any model
    with constant noise violates at the origin.
    """
    if samples < 2:
        raise InputError("need at least two samples")
    beta = model.constants.beta
    offset = 0.0 if strict else 1.0
    worst, at = 0.0, None
    for s in range(int(samples)):
        if s == 0:
            atoms, x = np.zeros((1, model.d)), np.zeros((1, model.d))
        else:
            atoms = _random_atoms(rng, model.d)
            x = rng.uniform(-10, 10, size=(1, model.d))
        t = rng.uniform(0, horizon)
        nu = EmpiricalMeasure(atoms)
        lhs = (
            float(np.linalg.norm(model.drift(t, nu, x)[0]))
            + float(np.linalg.norm(model.diffusion(t, nu, x)[0]))
            + math.sqrt(_jump_norm_sq(model, t, nu, lambda u, r: model.jump(u, nu, r, x)[0], order))
        )
        rhs = beta * (offset + w2_to_dirac(nu, np.zeros(model.d)) + float(np.linalg.norm(x)))
        ratio = _ratio(lhs, rhs)
        if ratio > worst:
            worst, at = ratio, {"t": t, "x": x[0].tolist(), "support": atoms.shape[0]}
    return ValidationReport(
        "growth",
        worst <= 1 + LIPSCHITZ_SLACK,
        worst,
        int(samples),
        {"beta": beta, "strict": strict, "worst_at": at},
    )


def validate_fourth_moment(
    model: CoefficientSet,
    samples: int,
    rng: np.random.Generator,
    configurations: int = 8,
    horizon: float = 1.0,
) -> ValidationReport:
    """Monte Carlo check of max_i int |gamma^{(i,.)}|^4 Q(dr) <= gamma_star (3 s.e. slack).

    For several noise dimensions column j uses its own mark, and the result is
    scaled by the largest Q_j mass.
    """
    if samples < 2:
        raise InputError("need at least two samples")
    gstar = model.constants.gamma_star
    mass = max(law.mass for law in model.marks)
    worst_est, worst_se, passed = 0.0, 0.0, True
    for c in range(int(configurations)):
        if c == 0:
            atoms, x = np.zeros((1, model.d)), np.zeros((1, model.d))
        else:
            atoms = _random_atoms(rng, model.d)
            x = rng.uniform(-10, 10, size=(1, model.d))
        t = rng.uniform(0, horizon)
        nu = EmpiricalMeasure(atoms)
        draws = [law.sample(rng, samples) for law in model.marks]
        rows = np.zeros((int(samples), model.d))
        for s in range(int(samples)):
            for j in range(model.l):
                rows[s] += model.jump(t, nu, draws[j][s], x)[0][:, j] ** 2
        f = mass * rows**2  # |row_i|^4 for each state coordinate i
        est = f.mean(axis=0)
        se = f.std(axis=0, ddof=1) / math.sqrt(samples)
        i = int(np.argmax(est))
        if est[i] > worst_est:
            worst_est, worst_se = float(est[i]), float(se[i])
        if np.any(est > gstar + 3.0 * se):
            passed = False
    ratio = _ratio(worst_est, gstar)
    return ValidationReport(
        "fourth_moment",
        passed,
        ratio,
        int(samples),
        {"gamma_star": gstar, "estimate": worst_est, "se": worst_se},
    )


def validate_all(model, samples: int, rng: np.random.Generator, strict_growth: bool = False):
    """Run the three validators; regime models are checked regime by regime."""
    if isinstance(model, RegimeModel):
        reports = []
        for e in range(model.spec.size):
            sub = model.regime_coefficients(e)
            for rep in validate_all(sub, samples, rng, strict_growth):
                rep.name = f"{rep.name}[{model.spec.states[e]}]"
                reports.append(rep)
        return reports
    return [
        validate_lipschitz(model, samples, rng),
        validate_growth(model, samples, rng, strict=strict_growth),
        validate_fourth_moment(model, samples, rng),
    ]


def warn_if_unbounded(model: RegimeModel, rng: np.random.Generator, samples: int = 256, limit: float = 1e6):
    """Warn (never reject) when a regime drift looks unbounded on the sampling box."""
    for e in range(model.spec.size):
        for _ in range(samples):
            nu = EmpiricalMeasure(_random_atoms(rng, model.d, box=1e3))
            x = rng.uniform(-1e3, 1e3, size=(1, model.d))
            if np.abs(model.drift(0.0, nu, x, e)).max() > limit:
                warnings.warn(f"regime drift for state {model.spec.states[e]} looks unbounded", stacklevel=2)
                return True
    return False
