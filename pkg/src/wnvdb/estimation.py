"""Maximum-likelihood fitting of the Richards count model, Wald intervals and forecasts."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize, stats
from scipy.special import expit, gammaln, logit

from .errors import (AllStartsFailed, CovarianceUnavailable, DegenerateVariance, NoAsymptote,
                     NotConverged, TooFewPoints)
from .pipeline import WeeklySeries
from .richards import (MEAN_FLOOR, MIN_POINTS, PARAM_NAMES, FamilyKind, LikelihoodFamily,
                       RichardsParams, Variant, count_logpmf, curve)

_INF = math.inf


def default_bounds(n_weeks: int) -> dict[str, tuple[float, float]]:
    return {
        "b": (0.0, _INF),
        "r": (0.0, _INF),
        "h": (-10.0, 10.0),
        "p": (-float(n_weeks), 2.0 * n_weeks),
        "s": (0.0, 10.0),
        "dispersion": (0.0, _INF),
    }


@dataclass(frozen=True)
class FitConfig:
    family: FamilyKind = FamilyKind.POISSON
    variant: Variant = Variant.CONSTANT_BASELINE
    bounds: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    fixed: Mapping[str, float] = field(default_factory=dict)
    n_starts: int = 20
    seed: int = 0
    tolerance: float = 1e-8
    max_iterations: int = 5000
    level: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "family", FamilyKind(self.family))
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        object.__setattr__(self, "bounds", {k: (float(lo), float(hi)) for k, (lo, hi) in dict(self.bounds).items()})
        object.__setattr__(self, "fixed", {k: float(v) for k, v in dict(self.fixed).items()})
        if self.n_starts < 1:
            raise ValueError("n_starts must be at least 1")
        if not 0 < self.level < 1:
            raise ValueError("level must be in (0, 1)")
        for name, (lo, hi) in self.bounds.items():
            if name not in PARAM_NAMES + ("dispersion",):
                raise ValueError(f"unknown parameter {name!r}")
            if not lo < hi:
                raise ValueError(f"bounds for {name} must satisfy lower < upper")
        for name in self.fixed:
            if name not in PARAM_NAMES:
                raise ValueError(f"only curve parameters can be fixed, got {name!r}")

    def resolved_bounds(self, n_weeks: int) -> dict[str, tuple[float, float]]:
        out = default_bounds(n_weeks)
        out.update(self.bounds)
        return out

    def free_names(self) -> tuple[str, ...]:
        names = tuple(n for n in PARAM_NAMES if n not in self.fixed)
        return names + (("dispersion",) if self.family is FamilyKind.NEGBIN else ())

    def as_dict(self) -> dict:
        return {
            "family": self.family.value,
            "variant": self.variant.value,
            "bounds": {k: list(v) for k, v in sorted(self.bounds.items())},
            "fixed": dict(sorted(self.fixed.items())),
            "n_starts": self.n_starts,
            "seed": self.seed,
            "tolerance": self.tolerance,
            "max_iterations": self.max_iterations,
            "level": self.level,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FitConfig":
        data = dict(data)
        data["bounds"] = {k: tuple(v) for k, v in data.get("bounds", {}).items()}
        return cls(**data)


class _Transform:
    """Maps bounded natural parameters to an unconstrained vector.

    Box bounds use a scaled logit, half-open bounds a log, open bounds the
    identity.
    """

    def __init__(self, names: Sequence[str], bounds: Mapping[str, tuple[float, float]]):
        self.names = tuple(names)
        self.lo = np.array([bounds[n][0] for n in names], dtype=float)
        self.hi = np.array([bounds[n][1] for n in names], dtype=float)
        lo_fin, hi_fin = np.isfinite(self.lo), np.isfinite(self.hi)
        self.box = lo_fin & hi_fin
        self.lower = lo_fin & ~hi_fin
        self.upper = ~lo_fin & hi_fin
        self.width = np.where(self.box, self.hi - self.lo, 1.0)

    def to_natural(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        out = theta.copy()
        with np.errstate(over="ignore"):
            out = np.where(self.box, self.lo + self.width * expit(theta), out)
            out = np.where(self.lower, self.lo + np.exp(theta), out)
            out = np.where(self.upper, self.hi - np.exp(theta), out)
        return out

    def to_theta(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(self.box, logit((x - self.lo) / self.width), x)
            out = np.where(self.lower, np.log(x - self.lo), out)
            out = np.where(self.upper, np.log(self.hi - x), out)
        return out

    def interior(self, x: np.ndarray) -> np.ndarray:
        """Pull starting values strictly inside the bounds."""
        x = np.asarray(x, dtype=float).copy()
        margin = np.where(self.box, 1e-3 * self.width, 1e-2)
        lo = np.where(np.isfinite(self.lo), self.lo + margin, -np.inf)
        hi = np.where(np.isfinite(self.hi), self.hi - margin, np.inf)
        return np.clip(x, lo, hi)


class _Objective:
    """Negative log-likelihood on the transformed scale."""

    def __init__(self, series: WeeklySeries, config: FitConfig):
        y = series.incidence_array()
        self.n_weeks = y.size
        self.keep = ~np.isnan(y)
        self.y = y[self.keep]
        self.lgy = gammaln(self.y + 1.0)
        self.drift = config.variant is Variant.LINEAR_DRIFT
        self.negbin = config.family is FamilyKind.NEGBIN
        self.config = config
        self.bounds = config.resolved_bounds(self.n_weeks)
        self.transform = _Transform(config.free_names(), self.bounds)
        self.free = [PARAM_NAMES.index(n) for n in config.free_names() if n != "dispersion"]
        self.template = np.array([config.fixed.get(n, np.nan) for n in PARAM_NAMES])
        self.t = np.arange(0.0, self.n_weeks + 1.0)
        self.n_calls = 0

    def split(self, theta: np.ndarray) -> tuple[np.ndarray, float | None]:
        x = self.transform.to_natural(theta)
        values = self.template.copy()
        values[self.free] = x[: len(self.free)]
        return values, (float(x[-1]) if self.negbin else None)

    def means(self, values: np.ndarray) -> np.ndarray:
        lam = curve(self.t, *values, drift=self.drift)
        lam[0] = 0.0
        return np.diff(lam)[self.keep]

    def __call__(self, theta: np.ndarray) -> float:
        self.n_calls += 1
        with np.errstate(all="ignore"):
            values, k = self.split(theta)
            mu = np.maximum(self.means(values), MEAN_FLOOR)
            if k is None:
                ll = np.sum(self.y * np.log(mu) - mu - self.lgy)
            else:
                ll = np.sum(count_logpmf(self.y, mu, k))
        return -ll if np.isfinite(ll) else _INF


@dataclass(frozen=True)
class StartRecord:
    index: int
    initial_loglik: float
    final_loglik: float
    converged: bool


@dataclass(frozen=True)
class FitResult:
    params_hat: RichardsParams
    dispersion_hat: float | None
    loglik_hat: float
    ci: Mapping[str, tuple[float, float] | None]
    level: float
    r_squared: float
    fitted_incidence: tuple[float, ...]
    converged: bool
    n_evaluations: int
    seed: int
    config: FitConfig
    starts: tuple[StartRecord, ...] = ()

    @property
    def family(self) -> LikelihoodFamily:
        if self.config.family is FamilyKind.NEGBIN:
            return LikelihoodFamily.negbin(self.dispersion_hat)
        return LikelihoodFamily.poisson()

    def estimates(self) -> dict[str, float]:
        out = self.params_hat.as_dict()
        if self.dispersion_hat is not None:
            out["dispersion"] = self.dispersion_hat
        return out

    def to_json(self) -> str:
        return json.dumps(_fit_to_dict(self), indent=2, allow_nan=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        return _fit_from_dict(json.loads(text))


def _finite_or_none(x: float) -> float | None:
    return float(x) if x is not None and math.isfinite(x) else None


def _fit_to_dict(res: FitResult) -> dict:
    return {
        "params": res.params_hat.as_dict(),
        "dispersion": res.dispersion_hat,
        "ci": {k: (list(v) if v is not None else None) for k, v in res.ci.items()},
        "level": res.level,
        "loglik": res.loglik_hat,
        "r2": _finite_or_none(res.r_squared),
        "converged": res.converged,
        "seed": res.seed,
        "variant": res.params_hat.variant.value,
        "family": res.config.family.value,
        "n_evaluations": res.n_evaluations,
        "fitted_incidence": list(res.fitted_incidence),
        "config": res.config.as_dict(),
        "starts": [[s.index, s.initial_loglik, s.final_loglik, s.converged] for s in res.starts],
    }


def _fit_from_dict(d: Mapping) -> FitResult:
    config = FitConfig.from_dict(d["config"])
    p = d["params"]
    params = RichardsParams(p["b"], p["r"], p["h"], p["p"], p["s"], variant=d["variant"])
    return FitResult(
        params_hat=params,
        dispersion_hat=d.get("dispersion"),
        loglik_hat=d["loglik"],
        ci={k: (tuple(v) if v is not None else None) for k, v in d["ci"].items()},
        level=d["level"],
        r_squared=d["r2"] if d["r2"] is not None else math.nan,
        fitted_incidence=tuple(d["fitted_incidence"]),
        converged=d["converged"],
        n_evaluations=d["n_evaluations"],
        seed=d["seed"],
        config=config,
        starts=tuple(StartRecord(int(i), a, b, bool(c)) for i, a, b, c in d.get("starts", [])),
    )


_H_GRID = (0.1, 0.5, 1.0)
_S_GRID = (0.5, 1.0, 2.0)


def _start_points(series: WeeklySeries, obj: _Objective, config: FitConfig) -> list[np.ndarray]:
    """Data-driven starts on the transformed scale, jittered from ``config.seed`` after the first nine."""
    y = np.nan_to_num(series.incidence_array(), nan=0.0)
    cum = np.asarray(series.cumulative, dtype=float)
    base = {
        "r": max(float(cum.max()), 1.0),
        "p": float(np.argmax(y) + 1),
        "b": max(float(cum[0]), 1e-2) if config.variant is Variant.CONSTANT_BASELINE else 1e-2,
        "dispersion": 10.0,
    }
    names = obj.transform.names
    starts = []
    for i in range(config.n_starts):
        combo = i % (len(_H_GRID) * len(_S_GRID))
        guess = dict(base, h=_H_GRID[combo // len(_S_GRID)], s=_S_GRID[combo % len(_S_GRID)])
        x = obj.transform.interior(np.array([guess[n] for n in names]))
        theta = obj.transform.to_theta(x)
        if i >= len(_H_GRID) * len(_S_GRID):
            rng = np.random.default_rng([config.seed, i])
            theta = theta + rng.normal(0.0, 0.5, size=theta.size)
        starts.append(theta)
    return starts


def _run_start(obj: _Objective, theta0: np.ndarray, config: FitConfig):
    simplex = optimize.minimize(
        obj, theta0, method="Nelder-Mead",
        options={"maxiter": config.max_iterations, "maxfev": config.max_iterations,
                 "fatol": config.tolerance, "xatol": 1e-6, "adaptive": theta0.size > 3},
    )
    theta, value, ok = simplex.x, float(simplex.fun), bool(simplex.success)
    if math.isfinite(value):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            polish = optimize.minimize(obj, theta, method="BFGS", options={"gtol": 1e-6, "maxiter": 500})
        if math.isfinite(polish.fun) and polish.fun <= value:
            theta, value = polish.x, float(polish.fun)
    return theta, value, ok


def _check_points(series: WeeklySeries, config: FitConfig) -> None:
    # one more observation than free curve parameters: 6 for the full curve
    need = MIN_POINTS - len(config.fixed)
    n_obs = sum(y is not None for y in series.incidence)
    if n_obs < need:
        raise TooFewPoints(f"{n_obs} non-NA weeks, need at least {need}")


def fit(series: WeeklySeries, config: FitConfig | None = None) -> FitResult:
    """Multi-start maximum likelihood: Nelder-Mead from every start, then a BFGS polish.

    The best final value wins, ties going to the lowest start index, so the
    result does not depend on the order in which starts are run.
    """
    config = config or FitConfig()
    _check_points(series, config)
    obj = _Objective(series, config)
    best = None
    records = []
    for i, theta0 in enumerate(_start_points(series, obj, config)):
        initial = obj(theta0)
        if not math.isfinite(initial):
            records.append(StartRecord(i, -_INF, -_INF, False))
            continue
        theta, value, ok = _run_start(obj, theta0, config)
        records.append(StartRecord(i, -initial, -value, ok and math.isfinite(value)))
        if math.isfinite(value) and (best is None or value < best[1]):
            best = (theta, value)
    if best is None:
        raise AllStartsFailed("no start produced a finite likelihood")
    if not obj.y.any():
        best = _boundary_candidate(obj, best)
    theta_hat, value = best
    slack = max(1e-6, config.tolerance * abs(value))
    converged = any(r.converged and -r.final_loglik <= value + slack for r in records)
    return _assemble(series, config, obj, theta_hat, value, converged, tuple(records))


def _boundary_candidate(obj: _Objective, best):
    """All-zero data: the supremum is reached as b and r shrink to their lower bounds."""
    theta, value = best
    x = obj.transform.to_natural(theta)
    names = obj.transform.names
    for name, eps in (("b", 0.0), ("r", 1e-12)):
        if name in names:
            i = names.index(name)
            lo = obj.transform.lo[i]
            x[i] = (lo if np.isfinite(lo) else 0.0) + eps
    edge = obj.transform.to_theta(x)
    edge_value = obj(edge)
    return (edge, edge_value) if edge_value <= value else best


def _assemble(series, config, obj, theta_hat, value, converged, records) -> FitResult:
    values, k = obj.split(theta_hat)
    params = RichardsParams.from_array(values, variant=config.variant)
    fitted = _fitted(series.T, values, obj.drift)
    y = series.incidence_array()
    try:
        r2 = r_squared(y, fitted)
    except (DegenerateVariance, TooFewPoints):
        r2 = math.nan
    n_eval = obj.n_calls
    partial = FitResult(params, k, -value, {}, config.level, r2, tuple(map(float, fitted)),
                        converged, n_eval, config.seed, config, records)
    ci = wald_ci(partial, series, config, config.level) if converged else _no_ci(config)
    return FitResult(params, k, -value, ci, config.level, r2, tuple(map(float, fitted)),
                     converged, n_eval, config.seed, config, records)


def _no_ci(config: FitConfig) -> dict:
    return {n: None for n in config.free_names()}


def _fitted(n_weeks: int, values: np.ndarray, drift: bool) -> np.ndarray:
    lam = curve(np.arange(0.0, n_weeks + 1.0), *values, drift=drift)
    lam[0] = 0.0
    return np.diff(lam)


def numerical_hessian(func, x: np.ndarray, rel_step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian with per-coordinate steps ``rel_step * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    steps = rel_step * np.maximum(1.0, np.abs(x))
    f0 = func(x)
    hess = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = steps[i]
        hess[i, i] = (func(x + ei) - 2.0 * f0 + func(x - ei)) / steps[i] ** 2
        for j in range(i):
            ej = np.zeros(n)
            ej[j] = steps[j]
            hess[i, j] = hess[j, i] = (
                func(x + ei + ej) - func(x + ei - ej) - func(x - ei + ej) + func(x - ei - ej)
            ) / (4.0 * steps[i] * steps[j])
    return hess


def _covariance(hess: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of the observed information restricted to identifiable coordinates.

    Coordinates whose curvature vanishes (parameters pinned at a bound or
    flat directions) are dropped one at a time until the remaining block is
    positive definite.  Returns ``(cov, available_mask)``; dropped rows and
    columns of ``cov`` are zero.
    """
    n = hess.shape[0]
    active = list(range(n))
    if not np.all(np.isfinite(hess)):
        return np.zeros((n, n)), np.zeros(n, dtype=bool)
    diag = np.diag(hess)
    scale = max(float(np.max(np.abs(diag))), 1e-300)
    active = [i for i in active if diag[i] > 1e-9 * scale]
    while active:
        block = hess[np.ix_(active, active)]
        try:
            chol = np.linalg.cholesky(block)
            inv = np.linalg.inv(block)
            # reject near-singular blocks whose inverse is numerically meaningless
            if np.all(np.isfinite(inv)) and np.all(np.diag(inv) > 0) and np.linalg.cond(block) < 1e13:
                cov = np.zeros((n, n))
                cov[np.ix_(active, active)] = inv
                mask = np.zeros(n, dtype=bool)
                mask[active] = True
                return cov, mask
        except np.linalg.LinAlgError:
            pass
        w, v = np.linalg.eigh(block)
        worst = int(np.argmax(np.abs(v[:, 0])))
        active.pop(worst)
    return np.zeros((n, n)), np.zeros(n, dtype=bool)


def _information(result: FitResult, series: WeeklySeries, config: FitConfig):
    obj = _Objective(series, config)
    x = [result.estimates()[n] for n in obj.transform.names]
    theta = obj.transform.to_theta(np.array(x))
    pinned = ~np.isfinite(theta)
    if pinned.any():
        # estimates sitting exactly on a bound carry no curvature information
        theta = np.where(pinned, obj.transform.to_theta(obj.transform.interior(np.array(x))), theta)
    hess = numerical_hessian(obj, theta)
    hess[pinned, :] = 0.0
    hess[:, pinned] = 0.0
    return obj, theta, hess, np.where(pinned, obj.transform.to_theta(np.array(x)), theta)


def wald_ci(result: FitResult, series: WeeklySeries, config: FitConfig | None = None,
            level: float = 0.95) -> dict[str, tuple[float, float] | None]:
    """Wald intervals on the transformed scale, mapped back to natural units.

    Parameters whose curvature cannot be estimated get ``None``.
    """
    if not result.converged:
        raise NotConverged("Wald intervals need a converged fit")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    config = config or result.config
    obj, theta, hess, _ = _information(result, series, config)
    cov, available = _covariance(hess)
    z = stats.norm.ppf(0.5 + level / 2.0)
    se = np.sqrt(np.where(available, np.diag(cov), 0.0))
    lo = obj.transform.to_natural(theta - z * se)
    hi = obj.transform.to_natural(theta + z * se)
    est = result.estimates()
    out = {}
    for i, name in enumerate(obj.transform.names):
        if not available[i] or not (math.isfinite(lo[i]) and math.isfinite(hi[i])):
            out[name] = None
        else:
            # back-transformed endpoints bracket the estimate up to rounding
            out[name] = (min(float(lo[i]), est[name]), max(float(hi[i]), est[name]))
    return out


def r_squared(observed, fitted) -> float:
    """``1 - SSR/SST`` on the incidence scale over weeks where both values are present."""
    obs = np.array([np.nan if v is None else v for v in observed], dtype=float)
    fit_ = np.array([np.nan if v is None else v for v in fitted], dtype=float)
    if obs.shape != fit_.shape:
        raise ValueError("observed and fitted must have equal length")
    keep = ~(np.isnan(obs) | np.isnan(fit_))
    if keep.sum() < 2:
        raise TooFewPoints("R^2 needs at least two paired observations")
    o, f = obs[keep], fit_[keep]
    sst = float(np.sum((o - o.mean()) ** 2))
    if sst == 0.0:
        raise DegenerateVariance("observed incidence is constant")
    return 1.0 - float(np.sum((o - f) ** 2)) / sst


def final_epidemic_size(params: RichardsParams, population: int | None = None, *,
                        scale: str | None = None) -> float:
    """Asymptotic cumulative level ``b + r``.

    With a ``population``, ``scale`` says how the parameters are expressed:
    ``"per1000"`` returns ``b + r`` unchanged, ``"count"`` converts to cases
    per 1000 residents.
    """
    if params.variant is not Variant.CONSTANT_BASELINE:
        raise NoAsymptote("the linear-drift curve grows without bound")
    size = params.b + params.r
    if population is None:
        return size
    if population <= 0:
        raise ValueError("population must be positive")
    if scale == "per1000":
        return size
    if scale == "count":
        return 1000.0 * size / population
    raise ValueError("scale must be 'per1000' or 'count' when a population is given")


@dataclass(frozen=True)
class Forecast:
    horizon: int
    weeks: tuple[int, ...]
    point: tuple[float, ...]
    interval: tuple[tuple[float, float], ...]
    level: float
    expected: tuple[float, ...] = ()
    plug_in: bool = False
    seed: int = 0

    def __post_init__(self):
        if not (len(self.point) == len(self.interval) == len(self.weeks) == self.horizon):
            raise ValueError("forecast arrays must all have length horizon")

    def contains(self, observed: Sequence[float]) -> list[bool]:
        return [lo <= y <= hi for y, (lo, hi) in zip(observed, self.interval)]

    def to_json(self) -> str:
        d = {
            "horizon": self.horizon,
            "level": self.level,
            "weeks": list(self.weeks),
            "point": list(self.point),
            "interval": [list(x) for x in self.interval],
            "expected": list(self.expected),
            "plug_in": self.plug_in,
            "seed": self.seed,
        }
        return json.dumps(d, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Forecast":
        d = json.loads(text)
        return cls(d["horizon"], tuple(d["weeks"]), tuple(d["point"]),
                   tuple(tuple(x) for x in d["interval"]), d["level"],
                   tuple(d.get("expected", ())), d.get("plug_in", False), d.get("seed", 0))


def _means_at(weeks: np.ndarray, values: np.ndarray, drift: bool) -> np.ndarray:
    """Expected incidence at 1-based ``weeks`` for a stack of parameter rows."""
    cols = [values[:, i:i + 1] for i in range(5)]
    upper = curve(weeks[None, :], *cols, drift=drift)
    lower = curve(weeks[None, :] - 1.0, *cols, drift=drift)
    lower = np.where(weeks[None, :] <= 1, 0.0, lower)
    return upper - lower


def predictive_draws(result: FitResult, series: WeeklySeries, weeks: Sequence[int], *,
                     n_sims: int = 2000, seed: int = 0) -> tuple[np.ndarray, np.ndarray, bool]:
    """Simulated counts at ``weeks``: parameter draws plus observation noise.

    Returns ``(counts, expected, plug_in)`` where ``counts`` has shape
    ``(n_sims, len(weeks))`` and ``plug_in`` flags that no covariance was
    available so only observation noise was simulated.
    """
    config = result.config
    obj, _, hess, theta = _information(result, series, config)
    cov, available = _covariance(hess)
    plug_in = not available.any()
    rng = np.random.default_rng(seed)
    weeks = np.asarray(weeks, dtype=float)
    if plug_in:
        thetas = np.repeat(theta[None, :], n_sims, axis=0)
    else:
        idx = np.flatnonzero(available)
        block = cov[np.ix_(idx, idx)]
        chol = np.linalg.cholesky(block)
        z = rng.standard_normal((n_sims, idx.size))
        thetas = np.repeat(theta[None, :], n_sims, axis=0)
        thetas[:, idx] += z @ chol.T
    values = np.empty((n_sims, 5))
    disp = np.empty(n_sims)
    with np.errstate(all="ignore"):
        for j in range(n_sims):
            v, k = obj.split(thetas[j])
            values[j] = v
            disp[j] = k if k is not None else np.nan
        means = np.maximum(_means_at(weeks, values, obj.drift), 0.0)
        means = np.where(np.isfinite(means), means, 0.0)
    expected = _means_at(weeks, obj.split(theta)[0][None, :], obj.drift)[0]
    if obj.negbin:
        k = disp[:, None]
        p = k / (k + means)
        counts = rng.negative_binomial(np.broadcast_to(k, means.shape), p)
    else:
        counts = rng.poisson(means)
    return counts.astype(float), np.maximum(expected, 0.0), plug_in


def _summarise(counts: np.ndarray, level: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    alpha = 1.0 - level
    point = np.quantile(counts, 0.5, axis=0, method="inverted_cdf")
    lo = np.quantile(counts, alpha / 2.0, axis=0, method="inverted_cdf")
    hi = np.quantile(counts, 1.0 - alpha / 2.0, axis=0, method="inverted_cdf")
    return point, lo, hi


def forecast(result: FitResult, series: WeeklySeries, horizon: int, level: float = 0.95,
             n_sims: int = 2000, seed: int = 0) -> Forecast:
    """Predictive median and equal-tailed interval for weeks ``T+1 .. T+horizon``."""
    if not result.converged:
        raise NotConverged("forecasting needs a converged fit")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    weeks = np.arange(series.T + 1, series.T + horizon + 1)
    counts, expected, plug_in = predictive_draws(result, series, weeks, n_sims=n_sims, seed=seed)
    point, lo, hi = _summarise(counts, level)
    return Forecast(horizon, tuple(int(w) for w in weeks), tuple(map(float, point)),
                    tuple((float(a), float(b)) for a, b in zip(lo, hi)), level,
                    tuple(map(float, expected)), plug_in, seed)


def fitted_bands(result: FitResult, series: WeeklySeries, level: float = 0.95, n_sims: int = 2000,
                 seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise predictive bands over the observed weeks, for plotting."""
    counts, _, _ = predictive_draws(result, series, np.arange(1, series.T + 1), n_sims=n_sims, seed=seed)
    _, lo, hi = _summarise(counts, level)
    return lo, hi


@dataclass(frozen=True)
class HoldoutReport:
    hits: int
    total: int
    observed: tuple[int | None, ...]
    forecast: Forecast
    fit: FitResult


def holdout_check(series: WeeklySeries, holdout: int, config: FitConfig | None = None,
                  level: float = 0.95, n_sims: int = 2000, seed: int = 0) -> HoldoutReport:
    """Refit without the last ``holdout`` weeks and count held-out weeks inside the forecast interval."""
    if not 1 <= holdout < series.T:
        raise ValueError("holdout must be between 1 and T - 1")
    train = series.truncate(series.T - holdout)
    result = fit(train, config)
    fc = forecast(result, train, holdout, level=level, n_sims=n_sims, seed=seed)
    observed = series.incidence[-holdout:]
    inside = [y is not None and lo <= y <= hi for y, (lo, hi) in zip(observed, fc.interval)]
    total = sum(y is not None for y in observed)
    return HoldoutReport(sum(inside), total, tuple(observed), fc, result)
