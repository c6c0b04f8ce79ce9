"""Edgeworth-Chebyshev models of a statistic's distribution function.

A model stores the limit law ``G``, the expansion parameter ``eps``, one
first-order correction term and a remainder constant ``c`` such that the
true CDF differs from :func:`approx_cdf` by at most ``c * eps**eps_order``
uniformly in ``x``.

Two correction forms are supported:

* :class:`DensityFactor` -- ``G(x) + eps * a(x) * g(x)`` with polynomial ``a``;
* :class:`ChiSquaredMixture` -- ``G_q(x) + eps * scale * sum_j a_j G_{q+2j}(x)``
  with ``sum_j a_j = 0``.

A mixture can always be rewritten as a density factor, see
:func:`mixture_to_density_factor`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence, Union

import numpy as np

from .distributions import LimitDistribution
from .errors import ConstraintError, DomainError

MAX_POLY_DEGREE = 8
MIXTURE_SUM_TOL = 1e-15

Coefficient = Union[Fraction, float]


def _coef(value) -> Coefficient:
    if isinstance(value, bool):
        raise TypeError("boolean is not a coefficient")
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    return float(value)


def _coef_to_json(value: Coefficient):
    if isinstance(value, Fraction):
        return int(value) if value.denominator == 1 else str(value)
    return value


@dataclass(frozen=True)
class Polynomial:
    """Polynomial with coefficients indexed by power (``coeffs[k]`` multiplies ``x**k``).

    Integer and :class:`~fractions.Fraction` inputs stay exact; conversion to
    float happens only on evaluation.
    """

    coeffs: tuple = ()

    def __post_init__(self):
        coeffs = [_coef(c) for c in self.coeffs]
        while coeffs and coeffs[-1] == 0:
            coeffs.pop()
        object.__setattr__(self, "coeffs", tuple(coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for c in reversed(self.coeffs):
            out = out * x + float(c)
        return float(out) if out.ndim == 0 else out

    def derivative(self) -> "Polynomial":
        return Polynomial(tuple(k * c for k, c in enumerate(self.coeffs) if k))

    def __add__(self, other: "Polynomial") -> "Polynomial":
        n = max(len(self.coeffs), len(other.coeffs))
        a = self.coeffs + (0,) * (n - len(self.coeffs))
        b = other.coeffs + (0,) * (n - len(other.coeffs))
        return Polynomial(tuple(x + y for x, y in zip(a, b)))

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        if self.is_zero or other.is_zero:
            return Polynomial()
        out = [Fraction(0)] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] = out[i + j] + a * b
        return Polynomial(tuple(out))

    def scaled(self, factor) -> "Polynomial":
        factor = _coef(factor)
        return Polynomial(tuple(c * factor for c in self.coeffs))

    def real_roots(self) -> np.ndarray:
        if self.degree < 1:
            return np.empty(0)
        roots = np.roots([float(c) for c in reversed(self.coeffs)])
        return np.sort(roots[np.abs(roots.imag) <= 1e-9 * (1 + np.abs(roots.real))].real)

    def to_json(self) -> list:
        return [_coef_to_json(c) for c in self.coeffs]


@dataclass(frozen=True)
class DensityFactor:
    """Correction ``eps * poly(x) * g(x)``."""

    poly: Polynomial

    def __post_init__(self):
        if not isinstance(self.poly, Polynomial):
            object.__setattr__(self, "poly", Polynomial(tuple(self.poly)))
        if self.poly.degree > MAX_POLY_DEGREE:
            raise ConstraintError(f"correction polynomial degree {self.poly.degree} exceeds {MAX_POLY_DEGREE}")

    def to_dict(self) -> dict:
        return {"form": "DensityFactor", "poly": self.poly.to_json()}


@dataclass(frozen=True)
class ChiSquaredMixture:
    """Correction ``eps * scale * sum_j mix_coeffs[j] * G_{base_dof + 2j}(x)``."""

    base_dof: int
    mix_coeffs: tuple
    scale: Coefficient = Fraction(1)

    def __post_init__(self):
        if int(self.base_dof) != self.base_dof or self.base_dof < 1:
            raise DomainError(f"base_dof must be a positive integer, got {self.base_dof!r}")
        object.__setattr__(self, "base_dof", int(self.base_dof))
        object.__setattr__(self, "mix_coeffs", tuple(_coef(c) for c in self.mix_coeffs))
        object.__setattr__(self, "scale", _coef(self.scale))
        if not self.mix_coeffs:
            raise ConstraintError("a mixture needs at least one coefficient")
        _check_zero_sum(self.mix_coeffs)

    def to_dict(self) -> dict:
        return {
            "form": "ChiSquaredMixture",
            "base_dof": self.base_dof,
            "mix_coeffs": [_coef_to_json(c) for c in self.mix_coeffs],
            "scale": _coef_to_json(self.scale),
        }


CorrectionForm = Union[DensityFactor, ChiSquaredMixture]


def _check_zero_sum(coeffs: Sequence[Coefficient]) -> None:
    total = sum(coeffs, Fraction(0))
    if isinstance(total, Fraction):
        if total != 0:
            raise ConstraintError(f"mixture coefficients must sum to 0, got {total}")
    elif abs(total) > MIXTURE_SUM_TOL:
        raise ConstraintError(f"mixture coefficients must sum to 0, got {total!r}")


def mixture_to_density_factor(correction: ChiSquaredMixture) -> DensityFactor:
    """Rewrite a zero-sum chi-squared mixture as ``g_q(x) * a(x)``.

    Uses ``G_{q+2j} = G_q - 2 sum_{i=1..j} g_{q+2i}`` and
    ``g_{q+2i}(x) = g_q(x) x^i / (q (q+2) ... (q+2i-2))``; the ``G_q`` terms
    cancel because the coefficients sum to zero.
    """
    _check_zero_sum(correction.mix_coeffs)
    q = correction.base_dof
    coeffs = correction.mix_coeffs
    poly = [Fraction(0)]
    denom = Fraction(1)
    for i in range(1, len(coeffs)):
        denom *= q + 2 * (i - 1)
        tail = sum(coeffs[i:], Fraction(0))
        poly.append(-2 * tail / denom * correction.scale)
    return DensityFactor(Polynomial(tuple(poly)))


@dataclass(frozen=True)
class EdgeworthModel:
    """Approximate CDF of a statistic with a uniform remainder bound.

    Parameters
    ----------
    base : LimitDistribution
        Limit law ``G``.
    eps : float
        Expansion parameter (e.g. ``1/n``).
    eps_order : int
        Exponent ``k`` of the remainder bound ``remainder_const * eps**k``.
    correction : DensityFactor, ChiSquaredMixture or None
        First-order correction; ``None`` means the model is ``G`` itself.
    remainder_const : float
        Constant ``c`` in the remainder bound.
    label : str
    """

    base: LimitDistribution
    eps: float
    eps_order: int
    correction: CorrectionForm | None
    remainder_const: float
    label: str = ""

    def __post_init__(self):
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise DomainError(f"eps must be positive, got {self.eps!r}")
        if self.eps_order not in (1, 2):
            raise DomainError(f"eps_order must be 1 or 2, got {self.eps_order!r}")
        if not (self.remainder_const >= 0 and math.isfinite(self.remainder_const)):
            raise DomainError(f"remainder_const must be finite and >= 0, got {self.remainder_const!r}")
        corr = self.correction
        if isinstance(corr, ChiSquaredMixture):
            if self.base.is_normal or self.base.dof != corr.base_dof:
                raise ConstraintError(f"mixture on chi2({corr.base_dof}) does not match base {self.base}")
        elif corr is not None and not isinstance(corr, DensityFactor):
            raise TypeError(f"unsupported correction {corr!r}")

    @property
    def remainder_bound(self) -> float:
        """``d = remainder_const * eps**eps_order``."""
        return self.remainder_const * self.eps**self.eps_order

    def density_factor(self) -> DensityFactor | None:
        """The correction in density-factor form (``None`` when absent)."""
        if isinstance(self.correction, ChiSquaredMixture):
            return mixture_to_density_factor(self.correction)
        return self.correction

    def approx_cdf(self, x):
        """Evaluate the raw (unclamped) expansion at ``x``."""
        g_cdf = self.base.cdf(x)
        corr = self.correction
        if corr is None:
            return g_cdf
        if isinstance(corr, DensityFactor):
            return g_cdf + self.eps * corr.poly(x) * self.base.density(x)
        q = corr.base_dof
        mix = sum(float(a) * LimitDistribution.chi2(q + 2 * j).cdf(x) for j, a in enumerate(corr.mix_coeffs) if a)
        return g_cdf + self.eps * float(corr.scale) * mix

    def replace(self, **changes) -> "EdgeworthModel":
        fields = dict(
            base=self.base,
            eps=self.eps,
            eps_order=self.eps_order,
            correction=self.correction,
            remainder_const=self.remainder_const,
            label=self.label,
        )
        fields.update(changes)
        return EdgeworthModel(**fields)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "base": self.base.to_dict(),
            "eps": self.eps,
            "eps_order": self.eps_order,
            "remainder_const": self.remainder_const,
            "correction": None if self.correction is None else self.correction.to_dict(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "EdgeworthModel":
        corr = data.get("correction")
        if corr is not None:
            form = corr.get("form")
            if form == "DensityFactor":
                corr = DensityFactor(Polynomial(tuple(corr["poly"])))
            elif form == "ChiSquaredMixture":
                corr = ChiSquaredMixture(corr["base_dof"], tuple(corr["mix_coeffs"]), corr.get("scale", 1))
            else:
                raise ConstraintError(f"unknown correction form {form!r}")
        return cls(
            base=LimitDistribution.from_dict(data["base"]),
            eps=float(data["eps"]),
            eps_order=int(data["eps_order"]),
            correction=corr,
            remainder_const=float(data["remainder_const"]),
            label=str(data.get("label", "")),
        )

    @classmethod
    def from_json(cls, text: str) -> "EdgeworthModel":
        return cls.from_dict(json.loads(text))


def approx_cdf(model: EdgeworthModel, x):
    return model.approx_cdf(x)


def correction_sup(model: EdgeworthModel) -> float:
    """``sup_x |a(x) g(x)|`` for the model's first-order correction.

    The maximum sits at a real root of ``(a g)' / g``, which is a polynomial
    for both limit laws (after multiplying by ``x`` in the chi-squared case),
    or at the left end of the chi-squared support.
    """
    factor = model.density_factor()
    if factor is None or factor.poly.is_zero:
        return 0.0
    a = factor.poly
    base = model.base
    x = Polynomial((0, 1))
    if base.is_normal:
        crit = a.derivative() + (x * a).scaled(-1)
        points = list(crit.real_roots())
    else:
        k = Fraction(base.dof, 2) - 1
        crit = x * a.derivative() + a.scaled(k) + (x * a).scaled(Fraction(-1, 2))
        points = [t for t in crit.real_roots() if t > 0]
        if base.dof == 1 and a(0.0) != 0:
            return math.inf
        if base.dof == 2:
            points.append(0.0)
    if not points:
        return 0.0
    points = np.asarray(points, dtype=float)
    vals = np.abs(a(points) * np.where(points > 0, base.density(points), 0.0))
    if not base.is_normal and base.dof == 2:
        vals = np.where(points == 0.0, abs(a(0.0)) * 0.5, vals)
    return float(np.max(vals))


def first_order_model(model: EdgeworthModel) -> EdgeworthModel:
    """Drop the correction and fold it into a first-order remainder.

    ``|F - G| <= eps * sup|a g| + c * eps**k``, so the returned model has
    ``eps_order = 1`` and ``remainder_const = sup|a g| + c * eps**(k-1)``.
    """
    const = correction_sup(model) + model.remainder_const * model.eps ** (model.eps_order - 1)
    return model.replace(correction=None, eps_order=1, remainder_const=const, label=f"{model.label} [first order]")


def build_hotelling_t0sq_model(p: int, q: int, n: int, c_pq: float) -> EdgeworthModel:
    """Expansion of Hotelling's generalized ``T0^2 = n tr(S_h S_e^{-1})``.

    ``Pr(T0^2 <= x) = G_r + (r/4n){(q-p-1) G_r - 2q G_{r+2} + (q+p+1) G_{r+4}} + R``
    with ``r = pq`` and ``|R| <= c_pq / n**2``.  ``c_pq`` has no default: it
    must come from an external computation.
    """
    for name, v in (("p", p), ("q", q), ("n", n)):
        if int(v) != v or v < 1:
            raise DomainError(f"{name} must be a positive integer, got {v!r}")
    p, q, n = int(p), int(q), int(n)
    if n < p:
        raise DomainError(f"the T0^2 expansion needs n >= p (got n={n}, p={p})")
    if not (c_pq > 0 and math.isfinite(c_pq)):
        raise DomainError(f"c_pq must be a positive finite constant, got {c_pq!r}")
    r = p * q
    corr = ChiSquaredMixture(r, (q - p - 1, -2 * q, q + p + 1), Fraction(r, 4))
    return EdgeworthModel(
        base=LimitDistribution.chi2(r),
        eps=1.0 / n,
        eps_order=2,
        correction=corr,
        remainder_const=float(c_pq),
        label=f"T0^2 p={p} q={q} n={n}",
    )


CORRELATION_BOUND = 2.2


def correlation_N(n: int) -> float:
    return n - 2.5


def build_correlation_model(n: int) -> EdgeworthModel:
    """Expansion ``Phi(x) + x^3 phi(x) / (4N)`` of ``sqrt(N) R``, ``N = n - 2.5``.

    Valid for ``n >= 7`` with remainder at most ``2.2 / N**2``.
    """
    if int(n) != n or n < 7:
        raise DomainError(f"n >= 7 required for the correlation expansion, got n={n!r}")
    N = correlation_N(int(n))
    return EdgeworthModel(
        base=LimitDistribution.normal(),
        eps=1.0 / N,
        eps_order=2,
        correction=DensityFactor(Polynomial((0, 0, 0, Fraction(1, 4)))),
        remainder_const=CORRELATION_BOUND,
        label=f"sqrt(N) R n={int(n)}",
    )


def build_transformed_model(model: EdgeworthModel, c_tilde: float, label: str | None = None) -> EdgeworthModel:
    """Model of ``T(U)`` for a Bartlett-type correction ``T``: ``G`` plus ``c_tilde * eps**2``."""
    return model.replace(
        correction=None,
        eps_order=2,
        remainder_const=float(c_tilde),
        label=label if label is not None else f"T({model.label})",
    )
