"""Limiting distributions G: the standard normal and chi-squared laws.

Every theorem in :mod:`cf_certify.bounds` needs the same four ingredients of
the limit law: its density, CDF, quantile function and the slope of the log
density.  All evaluators accept scalars or numpy arrays and return the same
shape (a Python ``float`` for scalar input).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

QUANTILE_TOL = 1e-12
QUANTILE_MAX_ITER = 200


class Kind(str, enum.Enum):
    STD_NORMAL = "StdNormal"
    CHI_SQUARED = "ChiSquared"


def _as_output(value):
    arr = np.asarray(value, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


@dataclass(frozen=True)
class LimitDistribution:
    """A limiting law ``G`` with density ``g``.

    Parameters
    ----------
    kind : Kind
        ``Kind.STD_NORMAL`` or ``Kind.CHI_SQUARED``.
    dof : int, optional
        Degrees of freedom; required (and only allowed) for chi-squared.
    """

    kind: Kind
    dof: int | None = None

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is Kind.CHI_SQUARED:
            if self.dof is None or isinstance(self.dof, bool) or int(self.dof) != self.dof:
                raise DomainError(f"chi-squared needs an integer dof, got {self.dof!r}")
            if self.dof < 1:
                raise DomainError(f"chi-squared dof must be >= 1, got {self.dof}")
            object.__setattr__(self, "dof", int(self.dof))
        elif self.dof is not None:
            raise DomainError("the standard normal takes no degrees of freedom")

    @classmethod
    def normal(cls) -> "LimitDistribution":
        return cls(Kind.STD_NORMAL)

    @classmethod
    def chi2(cls, dof: int) -> "LimitDistribution":
        return cls(Kind.CHI_SQUARED, dof)

    @property
    def is_normal(self) -> bool:
        return self.kind is Kind.STD_NORMAL

    @property
    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf) if self.is_normal else (0.0, math.inf)

    def __str__(self):
        return "N(0,1)" if self.is_normal else f"chi2({self.dof})"

    # -- evaluators -------------------------------------------------------

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_normal:
            return _as_output(np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi))
        half = 0.5 * self.dof
        with np.errstate(divide="ignore", invalid="ignore"):
            pos = np.where(x > 0, x, 1.0)
            logpdf = (half - 1.0) * np.log(pos) - 0.5 * pos - half * math.log(2.0) - special.gammaln(half)
            out = np.where(x > 0, np.exp(logpdf), 0.0)
        return _as_output(out)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_normal:
            # ndtr evaluates through erfc in both tails
            return _as_output(special.ndtr(x))
        return _as_output(special.gammainc(0.5 * self.dof, 0.5 * np.maximum(x, 0.0)))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_normal:
            return _as_output(special.ndtr(-x))
        return _as_output(special.gammaincc(0.5 * self.dof, 0.5 * np.maximum(x, 0.0)))

    def log_density_slope(self, x):
        """Return ``g'(x) / g(x)``."""
        x = np.asarray(x, dtype=float)
        if self.is_normal:
            return _as_output(-x)
        if np.any(x <= 0):
            raise DomainError(f"log-density slope of {self} needs x > 0")
        return _as_output((0.5 * self.dof - 1.0) / x - 0.5)

    def density_min_on_interval(self, lo: float, hi: float) -> float:
        """Exact minimum of the density over ``[lo, hi]``.

        Both densities are unimodal (or monotone), so the minimum over a closed
        interval is attained at one of its endpoints.
        """
        lo, hi = float(lo), float(hi)
        if not lo <= hi:
            raise DomainError(f"empty interval [{lo}, {hi}]")
        if not self.is_normal and lo <= 0:
            raise DomainError(f"[{lo}, {hi}] leaves the interior of the support of {self}")
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise DomainError(f"[{lo}, {hi}] is unbounded; the density infimum is 0")
        return min(self.density(lo), self.density(hi))

    # -- quantile ---------------------------------------------------------

    def _initial_guess(self, p: float) -> float:
        z = float(special.ndtri(p))
        if self.is_normal:
            return z
        # Wilson-Hilferty: (X/k)^(1/3) is approximately normal
        k = self.dof
        c = 2.0 / (9.0 * k)
        return max(k * (1.0 - c + z * math.sqrt(c)) ** 3, 1e-300)

    def quantile(self, p: float) -> float:
        """Solve ``cdf(x) = p`` by bracketed, safeguarded Newton iteration.

        The starting point is the normal inverse for ``N(0,1)`` and the
        Wilson-Hilferty cube-root approximation for chi-squared.  Iteration
        stops once the CDF residual is at most ``QUANTILE_TOL``.
        """
        p = float(p)
        if not 0.0 < p < 1.0:
            raise DomainError(f"quantile needs 0 < p < 1, got {p!r}")
        x = self._initial_guess(p)

        if self.is_normal:
            lo, hi = -40.0, 40.0
        else:
            lo, hi = 0.0, max(2.0 * x, 1.0)
            while self.cdf(hi) < p:
                lo, hi = hi, 2.0 * hi
        if not lo < x < hi:
            x = 0.5 * (lo + hi)

        for _ in range(QUANTILE_MAX_ITER):
            resid = self.cdf(x) - p
            if abs(resid) <= QUANTILE_TOL:
                break
            if resid > 0:
                hi = x
            else:
                lo = x
            slope = self.density(x)
            step = x - resid / slope if slope > 0 else math.nan
            x = step if lo < step < hi else 0.5 * (lo + hi)
            if hi - lo <= 4 * np.spacing(max(abs(lo), abs(hi))):
                break
        return float(x)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "dof": self.dof}

    @classmethod
    def from_dict(cls, data: dict) -> "LimitDistribution":
        return cls(Kind(data["kind"]), data.get("dof"))
