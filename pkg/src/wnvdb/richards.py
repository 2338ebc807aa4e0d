"""Extended Richards growth curve and count log-likelihoods.

The cumulative mean is

    lambda(t) = base(t) + r / (1 + exp(h * (p - t)))**s

with ``base(t) = b`` (constant baseline, the default) or ``base(t) = b * t``
(linear drift).  Weekly incidence is modelled through its first difference.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.special import betaln, gammaln

from .errors import InvalidParams, TooFewPoints

if TYPE_CHECKING:
    from .pipeline import WeeklySeries

PARAM_NAMES = ("b", "r", "h", "p", "s")

# floor on the Poisson/NB mean inside the likelihood only
MEAN_FLOOR = 1e-10

MIN_POINTS = 6


class Variant(str, enum.Enum):
    CONSTANT_BASELINE = "constant_baseline"
    LINEAR_DRIFT = "linear_drift"

    @classmethod
    def parse(cls, value: "str | Variant") -> "Variant":
        if isinstance(value, cls):
            return value
        aliases = {"baseline": cls.CONSTANT_BASELINE, "drift": cls.LINEAR_DRIFT}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        return cls(key)


@dataclass(frozen=True)
class RichardsParams:
    """Parameter vector ``(b, r, h, p, s)`` plus the curve variant.

    ``b`` is the lower asymptote (constant baseline) or the weekly drift
    (linear drift), ``r`` the distance between asymptotes, ``h`` the growth
    rate, ``p`` the inflection week and ``s`` the asymmetry.
    """

    b: float
    r: float
    h: float
    p: float
    s: float
    variant: Variant = Variant.CONSTANT_BASELINE
    s_bounds: tuple[float, float] = (0.0, 10.0)

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        values = self.as_array()
        if not np.all(np.isfinite(values)):
            raise InvalidParams(f"non-finite parameter in {values.tolist()}")
        if self.r <= 0:
            raise InvalidParams(f"r must be positive, got {self.r}")
        if self.b < 0:
            raise InvalidParams(f"b must be non-negative, got {self.b}")
        lo, hi = self.s_bounds
        if not lo < self.s <= hi:
            raise InvalidParams(f"s={self.s} outside ({lo}, {hi}]")

    def as_array(self) -> np.ndarray:
        return np.array([self.b, self.r, self.h, self.p, self.s], dtype=float)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(PARAM_NAMES, map(float, self.as_array())))

    @classmethod
    def from_array(cls, values: Sequence[float], variant=Variant.CONSTANT_BASELINE, **kw) -> "RichardsParams":
        b, r, h, p, s = (float(v) for v in values)
        return cls(b=b, r=r, h=h, p=p, s=s, variant=variant, **kw)

    def with_values(self, **changes) -> "RichardsParams":
        return replace(self, **changes)


class FamilyKind(str, enum.Enum):
    POISSON = "poisson"
    NEGBIN = "negbin"


@dataclass(frozen=True)
class LikelihoodFamily:
    kind: FamilyKind = FamilyKind.POISSON
    dispersion: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", FamilyKind(self.kind))
        if self.kind is FamilyKind.NEGBIN:
            if self.dispersion is None or not self.dispersion > 0 or not math.isfinite(self.dispersion):
                raise InvalidParams("negbin requires a finite positive dispersion")
        elif self.dispersion is not None:
            raise InvalidParams("dispersion is only meaningful for negbin")

    @classmethod
    def poisson(cls) -> "LikelihoodFamily":
        return cls(FamilyKind.POISSON)

    @classmethod
    def negbin(cls, dispersion: float) -> "LikelihoodFamily":
        return cls(FamilyKind.NEGBIN, float(dispersion))


def curve(t, b, r, h, p, s, drift: bool = False):
    """Vectorised cumulative mean; the power term is evaluated in log space."""
    t = np.asarray(t, dtype=float)
    # (1 + e^z)^(-s) = exp(-s * softplus(z))
    power = np.exp(-s * np.logaddexp(0.0, h * (p - t)))
    base = b * t if drift else b
    return base + r * power


def richards_mean(t, params: RichardsParams):
    """Expected cumulative count at week ``t`` (scalar or array)."""
    out = curve(t, *params.as_array(), drift=params.variant is Variant.LINEAR_DRIFT)
    return float(out) if np.ndim(out) == 0 else out


def incidence_mean(t, params: RichardsParams):
    """Expected new counts ``lambda(t) - lambda(t - 1)``; not floored."""
    t = np.asarray(t, dtype=float)
    out = richards_mean(t, params) - richards_mean(t - 1.0, params)
    return float(out) if np.ndim(out) == 0 else out


def expected_incidence(n_weeks: int, values, drift: bool = False) -> np.ndarray:
    """Model means for observed weeks ``1..n_weeks``.

    The first week is anchored at a zero cumulative (the season starts from
    ``Y_0 = 0``), so its mean is ``lambda(1)`` in full; later weeks use the
    first difference.  This is what lets the baseline ``b`` be identified.
    """
    lam = curve(np.arange(0.0, n_weeks + 1.0), *values, drift=drift)
    lam[0] = 0.0
    return np.diff(lam)


def count_logpmf(y: np.ndarray, mu: np.ndarray, dispersion: float | None = None) -> np.ndarray:
    """Poisson (``dispersion is None``) or NB2 log-pmf, elementwise."""
    if dispersion is None:
        return y * np.log(mu) - mu - gammaln(y + 1.0)
    k = dispersion
    # log C(y + k - 1, y) via betaln: the gammaln difference cancels catastrophically for large k
    pos = y > 0
    yy = np.where(pos, y, 1.0)
    log_choose = np.where(pos, -np.log(yy) - betaln(yy, k), 0.0)
    return log_choose - k * np.log1p(mu / k) + y * (np.log(mu) - np.log(k + mu))


def loglik_counts(y, values, family: LikelihoodFamily, drift: bool = False) -> float:
    """Log-likelihood of incidence ``y`` (NaN marks NA weeks) at raw parameter values."""
    y = np.asarray(y, dtype=float)
    mu = np.maximum(expected_incidence(y.size, values, drift=drift), MEAN_FLOOR)
    keep = ~np.isnan(y)
    return float(np.sum(count_logpmf(y[keep], mu[keep], family.dispersion)))


def loglik(series: "WeeklySeries", params: RichardsParams, family: LikelihoodFamily) -> float:
    y = series.incidence_array()
    n_obs = int(np.sum(~np.isnan(y)))
    if n_obs < MIN_POINTS:
        raise TooFewPoints(f"{n_obs} non-NA weeks, need at least {MIN_POINTS}")
    if not isinstance(params, RichardsParams):
        raise InvalidParams(f"expected RichardsParams, got {type(params).__name__}")
    return loglik_counts(y, params.as_array(), family, drift=params.variant is Variant.LINEAR_DRIFT)
