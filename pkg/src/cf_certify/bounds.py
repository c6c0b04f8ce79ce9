"""Certified quantile enclosures built from Edgeworth models.

Levels follow the upper-point convention: for ``alpha`` the target is the
point ``x_alpha`` with ``Pr(U <= x_alpha) = 1 - alpha`` and ``u_alpha`` is the
matching point of the limit law.  With ``d`` the model's uniform remainder
bound and ``alpha`` strictly inside ``(d, 1 - d)``:

* first order: ``u_{alpha+d} <= x_alpha <= u_{alpha-d}`` and
  ``|x_alpha - u_alpha| <= d / min g`` over that bracket;
* transformed statistic ``T(U)``: the same radius with ``d = c eps**2``;
* back-transformed: ``|x_alpha - b(u_alpha)| <= d max|b'| / min g``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .edgeworth import EdgeworthModel, Polynomial
from .errors import AlphaOutOfRange, DomainError, InfeasibleError, TransformDomainError
from .transforms import MonotoneTransform

FLAG_ROUNDING = "rounding"
FLAG_GRID_MAX = "grid-max"


class Theorem(str, enum.Enum):
    T1 = "T1"
    T2 = "T2"
    T3 = "T3"


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise DomainError(f"bracket lo={self.lo!r} exceeds hi={self.hi!r}")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def as_list(self) -> list[float]:
        return [self.lo, self.hi]


@dataclass(frozen=True)
class CertifiedQuantile:
    """A point estimate of ``x_alpha`` with a guaranteed enclosure."""

    estimate: float
    radius: float
    interval: Bracket
    theorem: Theorem
    alpha: float
    model_label: str
    window: tuple[float, float]
    u_alpha: float
    bracket: Bracket
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if not (0 <= self.radius < math.inf):
            raise DomainError(f"radius must be finite and >= 0, got {self.radius!r}")

    def to_dict(self) -> dict:
        return {
            "model_label": self.model_label,
            "alpha": self.alpha,
            "theorem": self.theorem.value,
            "estimate": self.estimate,
            "radius": self.radius,
            "interval": self.interval.as_list(),
            "window": list(self.window),
            "flags": list(self.flags),
        }


def alpha_window(model: EdgeworthModel) -> tuple[float, float]:
    """Open interval of admissible ``alpha``: ``(d, 1 - d)``."""
    d = model.remainder_bound
    if d >= 0.5:
        raise InfeasibleError(f"remainder bound d={d:.6g} >= 1/2 leaves no admissible alpha")
    return d, 1.0 - d


def _checked_alpha(model: EdgeworthModel, alpha: float) -> tuple[float, float]:
    window = alpha_window(model)
    if not window[0] < alpha < window[1] or not 0.0 < alpha < 1.0:
        raise AlphaOutOfRange(alpha, window)
    return window


def theorem1_bracket(model: EdgeworthModel, alpha: float) -> Bracket:
    """``[u_{alpha+d}, u_{alpha-d}]``, which always contains ``x_alpha``."""
    _checked_alpha(model, alpha)
    d = model.remainder_bound
    g = model.base
    return Bracket(g.quantile(1.0 - alpha - d), g.quantile(1.0 - alpha + d))


def _intersect(center: float, radius: float, bracket: Bracket) -> tuple[Bracket, tuple[str, ...]]:
    lo = max(center - radius, bracket.lo)
    hi = min(center + radius, bracket.hi)
    if lo > hi or not (lo <= center <= hi):
        return bracket, (FLAG_ROUNDING,)
    return Bracket(lo, hi), ()


def _limit_radius(model: EdgeworthModel, alpha: float, theorem: Theorem) -> CertifiedQuantile:
    window = _checked_alpha(model, alpha)
    bracket = theorem1_bracket(model, alpha)
    u = model.base.quantile(1.0 - alpha)
    d = model.remainder_bound
    radius = 0.0 if d == 0 else d / model.base.density_min_on_interval(bracket.lo, bracket.hi)
    interval, flags = _intersect(u, radius, bracket)
    return CertifiedQuantile(
        estimate=u,
        radius=radius,
        interval=interval,
        theorem=theorem,
        alpha=alpha,
        model_label=model.label,
        window=window,
        u_alpha=u,
        bracket=bracket,
        flags=flags,
    )


def theorem1_certify(model: EdgeworthModel, alpha: float) -> CertifiedQuantile:
    """Certify ``x_alpha`` around ``u_alpha`` with radius ``d / min g``.

    ``model`` must bound ``|F - G|`` directly, i.e. carry no correction; use
    :func:`cf_certify.edgeworth.first_order_model` to fold a correction into
    the remainder.
    """
    if model.correction is not None:
        raise DomainError("first-order certificates need a model without correction; see first_order_model()")
    return _limit_radius(model, alpha, Theorem.T1)


def theorem2_certify(transformed_model: EdgeworthModel, alpha: float) -> CertifiedQuantile:
    """Certify the upper point of the transformed statistic ``T(U)``."""
    if transformed_model.correction is not None or transformed_model.eps_order != 2:
        raise DomainError("the transformed model must have no correction and eps_order = 2")
    return _limit_radius(transformed_model, alpha, Theorem.T2)


def theorem3_certify(
    transformed_model: EdgeworthModel, transform: MonotoneTransform, alpha: float
) -> CertifiedQuantile:
    """Certify ``x_alpha`` around ``b(u_alpha)``.

    Radius is ``d * max|b'| / min g`` over the bracket of ``T(U)``.  The
    interval is also clipped to ``[b(lo), b(hi)]``, the image of that bracket,
    which contains ``x_alpha = b(x~_alpha)``.
    """
    base = theorem2_certify(transformed_model, alpha)
    bracket = base.bracket
    try:
        transform._check_image(bracket.lo, bracket.hi)
    except TransformDomainError as exc:
        raise TransformDomainError(f"bracket [{bracket.lo}, {bracket.hi}] outside transform image: {exc}") from None
    estimate = float(transform.inverse(base.u_alpha))
    d = transformed_model.remainder_bound
    if d == 0:
        radius = 0.0
    else:
        slope = transform.max_abs_inverse_derivative(bracket.lo, bracket.hi)
        radius = d * slope / transformed_model.base.density_min_on_interval(bracket.lo, bracket.hi)
    mapped = Bracket(float(transform.inverse(bracket.lo)), float(transform.inverse(bracket.hi)))
    interval, flags = _intersect(estimate, radius, mapped)
    if not transform.analytic_max:
        flags = flags + (FLAG_GRID_MAX,)
    return CertifiedQuantile(
        estimate=estimate,
        radius=radius,
        interval=interval,
        theorem=Theorem.T3,
        alpha=alpha,
        model_label=transformed_model.label,
        window=base.window,
        u_alpha=base.u_alpha,
        bracket=bracket,
        flags=flags,
    )


class CFCoefficients(NamedTuple):
    b1: float
    b2: float
    #: True when ``a2`` was not supplied and ``b2`` omits the ``-a2(u)`` term
    partial: bool


def cf_coefficients(model: EdgeworthModel, u: float, a2_poly: Polynomial | None = None) -> CFCoefficients:
    """First two Cornish-Fisher coefficients at ``u``.

    ``b1 = -a1(u)`` and ``b2 = (g'/g)(u) a1(u)**2 / 2 - a2(u) + a1'(u) a1(u)``.
    """
    factor = model.density_factor()
    a1 = factor.poly if factor is not None else Polynomial()
    slope = model.base.log_density_slope(u)
    v = a1(u)
    a2 = a2_poly(u) if a2_poly is not None else 0.0
    b1 = -v
    b2 = 0.5 * slope * v * v - a2 + a1.derivative()(u) * v
    return CFCoefficients(float(b1), float(b2), a2_poly is None)


def cornish_fisher_quantile(model: EdgeworthModel, alpha: float, order: int = 2, a2_poly: Polynomial | None = None) -> float:
    """Truncated expansion ``u + eps b1(u) [+ eps**2 b2(u)]`` of the upper point."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    if order not in (1, 2, 3):
        raise DomainError("order must be 1, 2 or 3")
    u = model.base.quantile(1.0 - alpha)
    if order == 1:
        return u
    b1, b2, _ = cf_coefficients(model, u, a2_poly)
    x = u + model.eps * b1
    if order == 3:
        x += model.eps**2 * b2
    return x


def first_order_u_of_x(model: EdgeworthModel, x: float) -> float:
    """``u(x) ~ x + eps a1(x)``: the limit-law point matching ``x``."""
    factor = model.density_factor()
    if factor is None:
        return float(x)
    return float(x + model.eps * factor.poly(x))
