"""Monotone Bartlett-type corrections ``T`` with inverse ``b = T^{-1}``.

Each transform knows its forward map, its inverse, the inverse's derivative
``b'(x) = 1 / T'(b(x))`` and the maximum of ``|b'|`` over an interval, which
is what the second-order quantile certificate needs.

The Hotelling coefficients come in several readings, see
:data:`HOTELLING_READINGS`; only ``"derived"`` removes the ``1/n`` term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .distributions import LimitDistribution
from .errors import DomainError, KindError, MonotonicityError, TransformDomainError

GRID_POINTS = 1024
MAX_GRID_POINTS = 1025
ROUND_TRIP_TOL = 1e-10
NUMERIC_STEP = 1e-7


def _out(arr):
    arr = np.asarray(arr, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


def _bound_to_json(v: float):
    return None if math.isinf(v) else v


class MonotoneTransform:
    """Strictly increasing map ``T`` on ``domain`` with inverse on ``image``."""

    kind = "abstract"
    #: True when :meth:`max_abs_inverse_derivative` is exact rather than a grid scan
    analytic_max = True

    domain: tuple[float, float] = (-math.inf, math.inf)
    image: tuple[float, float] = (-math.inf, math.inf)

    def forward(self, z):
        raise NotImplementedError

    def inverse(self, x):
        raise NotImplementedError

    def inverse_derivative(self, x):
        raise NotImplementedError

    def max_abs_inverse_derivative(self, lo: float, hi: float) -> float:
        self._check_image(lo, hi)
        grid = np.linspace(lo, hi, MAX_GRID_POINTS)
        return float(np.max(np.abs(self.inverse_derivative(grid))))

    # -- checks -----------------------------------------------------------

    def _check_domain(self, z):
        z = np.asarray(z, dtype=float)
        lo, hi = self.domain
        if np.any(z < lo) or np.any(z > hi) or np.any(np.isnan(z)):
            raise TransformDomainError(f"{self.kind}: argument outside domain [{lo}, {hi}]")

    def _check_image(self, lo, hi=None):
        vals = np.asarray(lo if hi is None else [lo, hi], dtype=float)
        a, b = self.image
        if np.any(vals < a) or np.any(vals > b) or np.any(np.isnan(vals)):
            raise TransformDomainError(f"{self.kind}: argument outside image [{a}, {b}]")
        if hi is not None and lo > hi:
            raise DomainError(f"empty interval [{lo}, {hi}]")

    def check_grid(self, lo: float, hi: float, points: int = GRID_POINTS) -> None:
        """Verify strict monotonicity and the round trip on ``[lo, hi]``."""
        z = np.linspace(lo, hi, points)
        with np.errstate(invalid="ignore"):
            t = np.asarray(self.forward(z), dtype=float)
        if not np.all(np.isfinite(t)) or not np.all(np.diff(t) > 0):
            raise MonotonicityError(f"{self.kind} is not strictly increasing on [{lo}, {hi}]")
        back = np.asarray(self.inverse(t), dtype=float)
        err = np.max(np.abs(back - z))
        if not err <= ROUND_TRIP_TOL * max(1.0, np.max(np.abs(z))):
            raise MonotonicityError(f"{self.kind} round trip error {err:.3g} on [{lo}, {hi}]")

    def to_dict(self) -> dict:
        raise TypeError(f"{self.kind} transforms are not serializable")

    def __repr__(self):
        return f"<{type(self).__name__} {self.to_dict() if self.kind != 'NumericInverse' else ''}>"


class IdentityTransform(MonotoneTransform):
    kind = "Identity"

    def forward(self, z):
        return _out(z)

    def inverse(self, x):
        return _out(x)

    def inverse_derivative(self, x):
        return _out(np.ones_like(np.asarray(x, dtype=float)))

    def max_abs_inverse_derivative(self, lo, hi):
        self._check_image(lo, hi)
        return 1.0

    def to_dict(self):
        return {"kind": self.kind, "domain": [None, None]}


class CorrelationCubic(MonotoneTransform):
    """``T(z) = z + z**3 / (4N)``, inverted with Cardano's formula."""

    kind = "CorrelationCubic"

    def __init__(self, N: float):
        if not (N > 0 and math.isfinite(N)):
            raise DomainError(f"N must be positive, got {N!r}")
        self.N = float(N)
        self.check_grid(-10.0, 10.0)

    def forward(self, z):
        z = np.asarray(z, dtype=float)
        return _out(z + z**3 / (4.0 * self.N))

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        N = self.N
        ax = np.abs(x)
        t = 2.0 * N * ax
        k3 = (4.0 * N / 3.0) ** 3
        s = np.hypot(t, (4.0 * N / 3.0) ** 1.5)
        # cube roots A = cbrt(s + t), B = cbrt(s - t) with A*B = 4N/3;
        # s - t is rationalized and A - B written as 4N|x| / (A^2 + AB + B^2)
        A = np.cbrt(s + t)
        B = np.cbrt(k3 / (s + t))
        b = 4.0 * N * ax / (A * A + A * B + B * B)
        return _out(np.copysign(b, x))

    def inverse_derivative(self, x):
        b = np.asarray(self.inverse(x), dtype=float)
        return _out(1.0 / (1.0 + 3.0 * b * b / (4.0 * self.N)))

    def max_abs_inverse_derivative(self, lo, hi):
        self._check_image(lo, hi)
        # b' decreases in |x|: the maximum is at the point nearest zero
        nearest = 0.0 if lo <= 0.0 <= hi else (lo if lo > 0 else hi)
        return float(self.inverse_derivative(nearest))

    def inverse_series_coeffs(self) -> tuple[float, float, float]:
        """Coefficients of ``x``, ``x**3`` and ``x**5`` in the large-``N`` expansion of ``b``."""
        return 1.0, -1.0 / (4.0 * self.N), 3.0 / (16.0 * self.N**2)

    def to_dict(self):
        return {"kind": self.kind, "N": self.N, "domain": [None, None]}


def inverse_series_coeffs(t: MonotoneTransform) -> tuple[float, float, float]:
    if not isinstance(t, CorrelationCubic):
        raise KindError(f"series coefficients are only defined for CorrelationCubic, not {t.kind}")
    return t.inverse_series_coeffs()


class HotellingSqrt(MonotoneTransform):
    """``T(z) = h + sqrt(h**2 + z / b)`` with ``h = (a - 1) / (2b)``.

    The inverse is the quadratic ``b(x) = b x**2 - (a - 1) x`` on the branch
    ``x >= h``.
    """

    kind = "HotellingSqrt"

    def __init__(self, a: float, b_coef: float, check_range: tuple[float, float] | None = None):
        if b_coef == 0 or not math.isfinite(b_coef) or not math.isfinite(a):
            raise DomainError(f"need finite a and nonzero b_coef, got a={a!r}, b_coef={b_coef!r}")
        self.a = float(a)
        self.b_coef = float(b_coef)
        h = (self.a - 1.0) / (2.0 * self.b_coef)
        self._h = h
        if self.b_coef > 0:
            self.domain = (-self.b_coef * h * h, math.inf)
            self.image = (h, math.inf)
        else:
            # z / b decreases in z: the map is decreasing wherever it is real
            self.domain = (-math.inf, -self.b_coef * h * h)
            self.image = (h, h)
        if check_range is not None:
            self.check_grid(*check_range)

    def forward(self, z):
        z = np.asarray(z, dtype=float)
        self._check_domain(z)
        h, w = self._h, z / self.b_coef
        root = np.sqrt(np.maximum(h * h + w, 0.0))
        if h < 0:
            # h + root = w / (root - h): avoids cancellation when |h| is large
            denom = root - h
            val = np.where(denom > 0, w / np.where(denom > 0, denom, 1.0), 0.0)
        else:
            val = h + root
        return _out(val)

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        if self.b_coef > 0:
            self._check_image(x)
        return _out(self.b_coef * x * x - (self.a - 1.0) * x)

    def inverse_derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.b_coef > 0:
            self._check_image(x)
        return _out(2.0 * self.b_coef * x - (self.a - 1.0))

    def max_abs_inverse_derivative(self, lo, hi):
        self._check_image(lo, hi)
        # b' is affine, so |b'| peaks at an endpoint
        return float(max(abs(self.inverse_derivative(lo)), abs(self.inverse_derivative(hi))))

    def to_dict(self):
        return {
            "kind": self.kind,
            "a": self.a,
            "b_coef": self.b_coef,
            "domain": [_bound_to_json(self.domain[0]), _bound_to_json(self.domain[1])],
        }


class NumericInverse(MonotoneTransform):
    """Arbitrary increasing ``forward`` inverted numerically on a bounded domain."""

    kind = "NumericInverse"
    analytic_max = False

    def __init__(self, forward: Callable[[float], float], domain: tuple[float, float]):
        lo, hi = map(float, domain)
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise DomainError(f"NumericInverse needs a bounded domain, got {domain!r}")
        self._f = forward
        self.domain = (lo, hi)
        self.image = (float(forward(lo)), float(forward(hi)))
        self.check_grid(lo, hi)

    def forward(self, z):
        z = np.asarray(z, dtype=float)
        self._check_domain(z)
        return _out(np.vectorize(self._f, otypes=[float])(z))

    def _inverse_scalar(self, x: float) -> float:
        lo, hi = self.domain
        if x == self.image[0]:
            return lo
        if x == self.image[1]:
            return hi
        return optimize.brentq(lambda z: self._f(z) - x, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        self._check_image(x)
        return _out(np.vectorize(self._inverse_scalar, otypes=[float])(x))

    def inverse_derivative(self, x):
        b = np.asarray(self.inverse(x), dtype=float)
        lo, hi = self.domain
        zp = np.minimum(b + NUMERIC_STEP, hi)
        zm = np.maximum(b - NUMERIC_STEP, lo)
        f = np.vectorize(self._f, otypes=[float])
        return _out((zp - zm) / (f(zp) - f(zm)))


def transform_from_dict(data: dict) -> MonotoneTransform:
    kind = data.get("kind")
    if kind == "Identity":
        return IdentityTransform()
    if kind == "CorrelationCubic":
        return CorrelationCubic(float(data["N"]))
    if kind == "HotellingSqrt":
        return HotellingSqrt(float(data["a"]), float(data["b_coef"]))
    raise KindError(f"cannot deserialize transform kind {kind!r}")


# -- Hotelling T0^2 -------------------------------------------------------


def _derived(p, q, n):
    # match b(x) = x - a1(x)/n with a1(x) = (q-p-1)x/2 - (q+p+1)x^2 / (2(pq+2))
    return (q - p - 1) / (2 * n), (q + p + 1) / (2 * n * (p * q + 2))


def _printed_ratio(p, q, n):
    return p * (q - p - 1) / (2 * n), p * (q + p + 1) / (q + 2) / (2 * n)


def _printed_minus_one(p, q, n):
    return p * (q - p - 1) / (2 * n), p * (q + p + 1) * (q + 2) / (2 * n) - 1


def _printed_reciprocal(p, q, n):
    return p * (q - p - 1) / (2 * n), 2 * n / (p * (q + p + 1) * (q + 2))


#: Candidate ``(a, b_coef)`` formulas for the Hotelling square-root correction.
HOTELLING_READINGS: dict[str, Callable[[int, int, int], tuple[float, float]]] = {
    "derived": _derived,
    "printed-ratio": _printed_ratio,
    "printed-minus-one": _printed_minus_one,
    "printed-reciprocal": _printed_reciprocal,
}
DEFAULT_HOTELLING_READING = "derived"


def hotelling_coefficients(p: int, q: int, n: int, reading: str = DEFAULT_HOTELLING_READING) -> tuple[float, float]:
    try:
        formula = HOTELLING_READINGS[reading]
    except KeyError:
        raise DomainError(f"unknown reading {reading!r}; choose from {sorted(HOTELLING_READINGS)}") from None
    return formula(p, q, n)


def build_hotelling_transform(p: int, q: int, n: int, reading: str = DEFAULT_HOTELLING_READING) -> HotellingSqrt:
    """Square-root Bartlett correction for ``T0^2``.

    The transform is checked for monotonicity and round trip on the central
    ``[0.001, 0.999]`` quantile range of ``chi2(pq)``.
    """
    for name, v in (("p", p), ("q", q), ("n", n)):
        if int(v) != v or v < 1:
            raise DomainError(f"{name} must be a positive integer, got {v!r}")
    if n < p:
        raise DomainError(f"need n >= p (got n={n}, p={p})")
    a, b = hotelling_coefficients(int(p), int(q), int(n), reading)
    if b == 0:
        raise DomainError(f"reading {reading!r} gives b_coef = 0")
    g = LimitDistribution.chi2(int(p) * int(q))
    rng = (g.quantile(0.001), g.quantile(0.999))
    t = HotellingSqrt(a, b)
    if not (t.domain[0] <= rng[0] and rng[1] <= t.domain[1]):
        raise MonotonicityError(f"reading {reading!r}: transform undefined on [{rng[0]:.4g}, {rng[1]:.4g}]")
    t.check_grid(*rng)
    return t
