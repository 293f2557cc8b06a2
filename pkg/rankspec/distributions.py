"""Continuous distribution families and the CDF functionals behind rank moments.

All functionals are integrated on the probability scale: substituting u = F(x) turns
every integral into one over (0, 1) with a bounded integrand, so heavy-tailed families
without a mean are handled the same way as light-tailed ones.
"""

import abc
import functools
import logging
import math
import warnings
from dataclasses import dataclass, fields
from functools import cached_property
from typing import ClassVar, Optional

import numpy as np
from scipy import stats
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from .errors import ArgumentError, NumericalError
from .utils import TOLERANCES, make_rng

logger = logging.getLogger(__name__)

FAMILIES = {}


class Distribution(abc.ABC):
    """Absolutely continuous distribution on the real line.

    Subclasses are frozen dataclasses, hashable and comparable by value, so moment
    functionals can be cached across block pairs that share a distribution.
    """

    family: ClassVar[str]

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        FAMILIES[cls.family] = cls

    @cached_property
    def frozen(self):
        """The equivalent frozen scipy.stats distribution."""
        return self._freeze()

    @abc.abstractmethod
    def _freeze(self):
        ...

    def cdf(self, x):
        return self.frozen.cdf(x)

    def pdf(self, x):
        return self.frozen.pdf(x)

    def quantile(self, u):
        return self.frozen.ppf(u)

    def sample(self, rng, size=None):
        """Draw from the distribution using the generator (or seed) `rng`."""
        return self.frozen.rvs(size=size, random_state=make_rng(rng))

    def median(self) -> float:
        return float(self.quantile(0.5))

    def mean(self) -> Optional[float]:
        """Mean, or None when the defining integral diverges."""
        return float(self.frozen.mean())

    def variance(self) -> Optional[float]:
        """Variance, or None when the defining integral diverges."""
        return float(self.frozen.var())

    def to_dict(self) -> dict:
        return {"family": self.family, **{f.name: getattr(self, f.name) for f in fields(self)}}


def _positive(**values):
    for name, value in values.items():
        if not (np.isfinite(value) and value > 0):
            raise ArgumentError(f"{name} must be positive and finite, got {value}")


def _finite(**values):
    for name, value in values.items():
        if not np.isfinite(value):
            raise ArgumentError(f"{name} must be finite, got {value}")


@dataclass(frozen=True)
class Normal(Distribution):
    mu: float
    sigma: float
    family: ClassVar[str] = "normal"

    def __post_init__(self):
        _finite(mu=self.mu)
        _positive(sigma=self.sigma)

    def _freeze(self):
        return stats.norm(loc=self.mu, scale=self.sigma)

    def median(self) -> float:
        return float(self.mu)


@dataclass(frozen=True)
class Cauchy(Distribution):
    x0: float
    gamma: float
    family: ClassVar[str] = "cauchy"

    def __post_init__(self):
        _finite(x0=self.x0)
        _positive(gamma=self.gamma)

    def _freeze(self):
        return stats.cauchy(loc=self.x0, scale=self.gamma)

    def median(self) -> float:
        return float(self.x0)

    def mean(self):
        return None

    def variance(self):
        return None


@dataclass(frozen=True)
class Pareto(Distribution):
    """Pareto with scale m and tail index alpha: Pr[X > x] = (m/x)^alpha for x >= m."""

    m: float
    alpha: float
    family: ClassVar[str] = "pareto"

    def __post_init__(self):
        _positive(m=self.m, alpha=self.alpha)

    def _freeze(self):
        return stats.pareto(b=self.alpha, scale=self.m)

    def median(self) -> float:
        return float(self.m * 2.0 ** (1.0 / self.alpha))

    def mean(self):
        if self.alpha <= 1:
            return None
        return self.alpha * self.m / (self.alpha - 1)

    def variance(self):
        if self.alpha <= 2:
            return None
        return self.m**2 * self.alpha / ((self.alpha - 1) ** 2 * (self.alpha - 2))


@dataclass(frozen=True)
class Gamma(Distribution):
    shape: float
    scale: float
    family: ClassVar[str] = "gamma"

    def __post_init__(self):
        _positive(shape=self.shape, scale=self.scale)

    def _freeze(self):
        return stats.gamma(a=self.shape, scale=self.scale)


@dataclass(frozen=True)
class Exponential(Distribution):
    mean_: float
    family: ClassVar[str] = "exponential"

    def __post_init__(self):
        _positive(mean=self.mean_)

    def _freeze(self):
        return stats.expon(scale=self.mean_)

    def median(self) -> float:
        return float(self.mean_ * math.log(2.0))

    def to_dict(self) -> dict:
        return {"family": self.family, "mean": self.mean_}


@dataclass(frozen=True)
class Beta(Distribution):
    a: float
    b: float
    family: ClassVar[str] = "beta"

    def __post_init__(self):
        _positive(a=self.a, b=self.b)

    def _freeze(self):
        return stats.beta(self.a, self.b)


@dataclass(frozen=True)
class Uniform(Distribution):
    lo: float
    hi: float
    family: ClassVar[str] = "uniform"

    def __post_init__(self):
        _finite(lo=self.lo, hi=self.hi)
        if not self.lo < self.hi:
            raise ArgumentError(f"uniform needs lo < hi, got lo={self.lo}, hi={self.hi}")

    def _freeze(self):
        return stats.uniform(loc=self.lo, scale=self.hi - self.lo)

    def median(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class Mixture(Distribution):
    """Finite mixture; quantiles are found by root bracketing on the CDF."""

    weights: tuple
    components: tuple
    family: ClassVar[str] = "mixture"

    def __post_init__(self):
        weights = tuple(float(w) for w in self.weights)
        components = tuple(self.components)
        if not components or len(weights) != len(components):
            raise ArgumentError("mixture needs one weight per component")
        if any(not isinstance(c, Distribution) for c in components):
            raise ArgumentError("mixture components must be distributions")
        if any(not w > 0 for w in weights):
            raise ArgumentError(f"mixture weights must be positive, got {weights}")
        if abs(sum(weights) - 1.0) > TOLERANCES.mixture_weights:
            raise ArgumentError(f"mixture weights must sum to 1, got {sum(weights)!r}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "components", components)

    def _freeze(self):
        raise NotImplementedError("Mixtures have no scipy.stats equivalent")

    def cdf(self, x):
        return sum(w * c.cdf(x) for w, c in zip(self.weights, self.components))

    def pdf(self, x):
        return sum(w * c.pdf(x) for w, c in zip(self.weights, self.components))

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        values = np.vectorize(self._scalar_quantile, otypes=[float])(u)
        return values if values.ndim else float(values)

    def _scalar_quantile(self, u: float) -> float:
        if u <= 0.0:
            return -np.inf if u == 0.0 else np.nan
        if u >= 1.0:
            return np.inf if u == 1.0 else np.nan
        # the mixture quantile lies between the extreme component quantiles
        bounds = [float(c.quantile(u)) for c in self.components]
        lo, hi = min(bounds), max(bounds)
        if hi - lo <= TOLERANCES.quantile * max(1.0, abs(lo)):
            return lo
        return brentq(
            lambda x: self.cdf(x) - u,
            lo,
            hi,
            xtol=TOLERANCES.quantile,
            rtol=4 * np.finfo(float).eps,
        )

    def sample(self, rng, size=None):
        rng = make_rng(rng)
        picks = rng.choice(
            len(self.components), size=1 if size is None else size, p=self.weights
        )
        draws = np.empty(picks.shape)
        for index, component in enumerate(self.components):
            mask = picks == index
            count = int(np.count_nonzero(mask))
            if count:
                draws[mask] = component.sample(rng, count)
        return float(draws[0]) if size is None else draws

    def median(self) -> float:
        return float(self.quantile(0.5))

    def mean(self):
        means = [c.mean() for c in self.components]
        if any(m is None for m in means):
            return None
        return float(np.dot(self.weights, means))

    def variance(self):
        means = [c.mean() for c in self.components]
        variances = [c.variance() for c in self.components]
        if any(v is None for v in means + variances):
            return None
        mean = np.dot(self.weights, means)
        second = np.dot(self.weights, np.add(variances, np.square(means)))
        return float(second - mean**2)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "weights": list(self.weights),
            "components": [c.to_dict() for c in self.components],
        }


_JSON_FIELDS = {"exponential": {"mean": "mean_"}}


def distribution_from_dict(fragment: dict) -> Distribution:
    """Build a distribution from its JSON fragment, e.g. {"family": "normal", "mu": 2, "sigma": 3}.

    Raises:
        ArgumentError: unknown family or unexpected/missing parameters
    """
    if not isinstance(fragment, dict) or "family" not in fragment:
        raise ArgumentError(f"distribution fragment needs a 'family' key: {fragment!r}")
    params = dict(fragment)
    family = str(params.pop("family")).lower()
    if family not in FAMILIES:
        raise ArgumentError(
            f"unknown distribution family {family!r}; expected one of {sorted(FAMILIES)}"
        )
    if family == "mixture":
        try:
            return Mixture(
                weights=tuple(params.pop("weights")),
                components=tuple(
                    distribution_from_dict(c) for c in params.pop("components")
                ),
            )
        except KeyError as e:
            raise ArgumentError(f"mixture fragment is missing {e}")
    renames = _JSON_FIELDS.get(family, {})
    params = {renames.get(k, k): v for k, v in params.items()}
    cls = FAMILIES[family]
    expected = {f.name for f in fields(cls)}
    if set(params) != expected:
        names = sorted({v: k for k, v in renames.items()}.get(e, e) for e in expected)
        raise ArgumentError(f"{family} takes parameters {names}, got {sorted(fragment)}")
    return cls(**{k: float(v) for k, v in params.items()})


def contaminated_normal(
    mu: float, sigma: float, epsilon: float, scale: float = 100.0
) -> Distribution:
    """(1 - epsilon) Normal(mu, sigma) + epsilon Normal(mu, scale * sigma)."""
    if not 0.0 <= epsilon < 1.0:
        raise ArgumentError(f"contamination must lie in [0, 1), got {epsilon}")
    if epsilon == 0.0 or scale == 1.0:
        return Normal(mu, sigma)
    return Mixture(
        weights=(1.0 - epsilon, epsilon),
        components=(Normal(mu, sigma), Normal(mu, scale * sigma)),
    )


def sample(dist: Distribution, rng, size=None):
    """Draws from `dist`; deterministic for a given generator state."""
    return dist.sample(rng, size)


def median(dist: Distribution) -> float:
    return dist.median()


# ---------------------------------------------------------------- functionals


def _probability_quad(integrand, upper: float = 1.0, tol: float = None) -> float:
    tol = TOLERANCES.quadrature if tol is None else tol
    if upper <= 0.0:
        return 0.0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IntegrationWarning)
        value, abserr = quad(
            integrand, 0.0, upper, epsabs=0.1 * tol, epsrel=0.1 * tol, limit=500
        )
    if not np.isfinite(value) or abserr > tol:
        raise NumericalError("quadrature did not converge", achieved=abserr)
    if any(issubclass(w.category, IntegrationWarning) for w in caught):
        logger.warning(f"Quadrature warned but reached {abserr:.3g} (tolerance {tol:.3g})")
    return float(value)


def _uniform_cdf_integral(x: float, lo: float, hi: float) -> float:
    # antiderivative of clip((x - lo) / (hi - lo), 0, 1)
    if x <= lo:
        return 0.0
    if x <= hi:
        return (x - lo) ** 2 / (2.0 * (hi - lo))
    return 0.5 * (hi - lo) + (x - hi)


def _closed_cross_moment(outer: Distribution, other: Distribution):
    if outer == other:
        return 0.5
    if type(outer) is not type(other):
        return None
    if isinstance(outer, Normal):
        spread = math.hypot(outer.sigma, other.sigma)
        return float(stats.norm.cdf((outer.mu - other.mu) / spread))
    if isinstance(outer, Cauchy):
        return 0.5 + math.atan((outer.x0 - other.x0) / (outer.gamma + other.gamma)) / math.pi
    if isinstance(outer, Exponential):
        return outer.mean_ / (outer.mean_ + other.mean_)
    if isinstance(outer, Uniform):
        width = outer.hi - outer.lo
        return (
            _uniform_cdf_integral(outer.hi, other.lo, other.hi)
            - _uniform_cdf_integral(outer.lo, other.lo, other.hi)
        ) / width
    if isinstance(outer, Pareto):
        ratio = outer.alpha + other.alpha
        if outer.m >= other.m:
            return 1.0 - outer.alpha / ratio * (other.m / outer.m) ** other.alpha
        return (outer.m / other.m) ** outer.alpha * other.alpha / ratio
    return None


def _parts(dist: Distribution) -> list:
    if isinstance(dist, Mixture):
        return list(zip(dist.weights, dist.components))
    return [(1.0, dist)]


def _has_mixture(*dists) -> bool:
    return any(isinstance(d, Mixture) for d in dists)


@functools.lru_cache(maxsize=8192)
def _cross_cdf_moment(outer, other, method):
    if method == "auto":
        closed = _closed_cross_moment(outer, other)
        if closed is not None:
            return closed
        if _has_mixture(outer, other):
            # linear in both laws
            return sum(
                w * v * _cross_cdf_moment(o, t, method)
                for w, o in _parts(outer)
                for v, t in _parts(other)
            )
    return _probability_quad(lambda u: other.cdf(outer.quantile(u)))


def _check_method(method: str, allowed: tuple):
    if method not in allowed:
        raise ArgumentError(f"method must be one of {allowed}, got {method!r}")


def cross_cdf_moment(outer: Distribution, other: Distribution, method: str = "auto") -> float:
    """E[F_other(X)] for X drawn from `outer`, i.e. Pr[Y <= X] with Y ~ other.

    Args:
        outer (Distribution): law of X
        other (Distribution): distribution whose CDF is averaged
        method (str): "auto" uses a closed form when one is known and splits
            mixtures into their components, "quadrature" always integrates
            F_other(F_outer^{-1}(u)) over u in (0, 1)

    Raises:
        NumericalError: quadrature failed to reach 1e-9

    Example:
        > cross_cdf_moment(Exponential(2.0), Exponential(1.0))
        0.6666666666666666
    """
    _check_method(method, ("auto", "quadrature"))
    return _cross_cdf_moment(outer, other, method)


@functools.lru_cache(maxsize=8192)
def _cross_cdf_product_moment(outer, first, second, method):
    if method == "auto" and outer == first == second:
        return 1.0 / 3.0
    if method == "auto" and _has_mixture(outer, first, second):
        return sum(
            w * v * x * _cross_cdf_product_moment(o, f, s, method)
            for w, o in _parts(outer)
            for v, f in _parts(first)
            for x, s in _parts(second)
        )

    def integrand(u):
        x = outer.quantile(u)
        return first.cdf(x) * second.cdf(x)

    return _probability_quad(integrand)


def cross_cdf_product_moment(
    outer: Distribution, first: Distribution, second: Distribution, method: str = "auto"
) -> float:
    """E[F_first(X) F_second(X)] for X drawn from `outer`."""
    _check_method(method, ("auto", "quadrature"))
    return _cross_cdf_product_moment(outer, first, second, method)


@functools.lru_cache(maxsize=8192)
def _g_moment(lower, inner, outer, method):
    if method == "auto" and lower == inner == outer:
        return 1.0 / 6.0
    if method == "auto" and _has_mixture(lower, inner, outer):
        return sum(
            w * v * x * _g_moment(a, b, c, method)
            for w, a in _parts(lower)
            for v, b in _parts(inner)
            for x, c in _parts(outer)
        )
    if method == "nested":
        tol = TOLERANCES.nested_quadrature

        def inner_integral(u):
            upper = float(inner.cdf(outer.quantile(u)))
            return _probability_quad(
                lambda v: lower.cdf(inner.quantile(v)), upper, tol=0.01 * tol
            )

        return _probability_quad(inner_integral, tol=tol)

    def integrand(v):
        y = inner.quantile(v)
        return lower.cdf(y) * (1.0 - outer.cdf(y))

    return _probability_quad(integrand)


def g_moment(
    lower: Distribution, inner: Distribution, outer: Distribution, method: str = "auto"
) -> float:
    """Pr[A <= B <= C] for independent A ~ lower, B ~ inner, C ~ outer.

    This is the expectation over C of the integral of F_lower(y) f_inner(y) for y up
    to C. "auto" and "quadrature" integrate the equivalent one-dimensional form
    E_B[F_lower(B) (1 - F_outer(B))]; "nested" evaluates the double integral on the
    probability scale.

    Raises:
        NumericalError: quadrature failed to converge
    """
    _check_method(method, ("auto", "quadrature", "nested"))
    return _g_moment(lower, inner, outer, method)
