"""Monte Carlo verification of certified quantiles.

Sampling is split into ``stream_count`` independent substreams derived from
one seed (``SeedSequence.spawn`` feeding Philox counters).  Substreams may run
on threads; results are merged in stream order and then sorted, so the output
depends only on the plan.
"""

from __future__ import annotations

import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np
from scipy import special

from .bounds import CertifiedQuantile
from .edgeworth import EdgeworthModel, correlation_N
from .errors import DomainError, NumericalError

CHUNK = 1 << 15
THREADS_ENV = "CF_CERTIFY_THREADS"
MIN_GRID_POINTS = 4096
GRID_TAIL = 1e-6


@dataclass(frozen=True)
class Correlation:
    """``sqrt(N) R`` for the Pearson correlation of two ``N(0, I_n)`` vectors."""

    n: int

    tag = 1


@dataclass(frozen=True)
class HotellingT0sq:
    """``n tr(S_h S_e^{-1})`` with ``S_h ~ W_p(q, I)``, ``S_e ~ W_p(n, I)``."""

    p: int
    q: int
    n: int

    tag = 2


Statistic = Union[Correlation, HotellingT0sq]


@dataclass(frozen=True)
class SimulationPlan:
    statistic: Statistic
    sample_count: int
    seed: int
    stream_count: int = 1

    def __post_init__(self):
        if self.sample_count < 1:
            raise DomainError("sample_count must be >= 1")
        if self.stream_count < 1:
            raise DomainError("stream_count must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        st = self.statistic
        if isinstance(st, Correlation):
            if st.n < 2:
                raise DomainError("correlation needs n >= 2")
        elif isinstance(st, HotellingT0sq):
            if min(st.p, st.q, st.n) < 1 or st.n < st.p:
                raise DomainError(f"T0^2 needs p, q >= 1 and n >= p, got {st}")
        else:
            raise DomainError(f"unknown statistic {st!r}")

    def stream_sizes(self) -> list[int]:
        base, extra = divmod(self.sample_count, self.stream_count)
        return [base + (i < extra) for i in range(self.stream_count)]


@dataclass(frozen=True)
class EmpiricalQuantiles:
    sorted_samples: np.ndarray
    plan: SimulationPlan

    @property
    def count(self) -> int:
        return len(self.sorted_samples)

    def ecdf(self, x):
        """Right-continuous empirical CDF."""
        return np.searchsorted(self.sorted_samples, x, side="right") / self.count


def _thread_count(streams: int) -> int:
    env = os.environ.get(THREADS_ENV)
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, streams))


def _run_streams(plan: SimulationPlan, draw: Callable[[np.random.Generator, int], np.ndarray]) -> EmpiricalQuantiles:
    seeds = np.random.SeedSequence(plan.seed).spawn(plan.stream_count)
    sizes = plan.stream_sizes()

    def one(i: int) -> np.ndarray:
        rng = np.random.Generator(np.random.Philox(seeds[i]))
        parts, left = [], sizes[i]
        while left > 0:
            m = min(CHUNK, left)
            parts.append(draw(rng, m))
            left -= m
        return np.concatenate(parts) if parts else np.empty(0)

    workers = _thread_count(plan.stream_count)
    if workers == 1:
        chunks = [one(i) for i in range(plan.stream_count)]
    else:
        with ThreadPoolExecutor(workers) as pool:
            chunks = list(pool.map(one, range(plan.stream_count)))
    samples = np.sort(np.concatenate(chunks))
    return EmpiricalQuantiles(samples, plan)


def sample_correlation(plan: SimulationPlan) -> EmpiricalQuantiles:
    st = plan.statistic
    if not isinstance(st, Correlation):
        raise DomainError("plan does not describe the correlation statistic")
    n = st.n
    scale = math.sqrt(correlation_N(n)) if n > 2.5 else 1.0

    def draw(rng, m):
        x = rng.standard_normal((m, n))
        y = rng.standard_normal((m, n))
        x -= x.mean(axis=1, keepdims=True)
        y -= y.mean(axis=1, keepdims=True)
        r = np.einsum("ij,ij->i", x, y) / np.sqrt(np.einsum("ij,ij->i", x, x) * np.einsum("ij,ij->i", y, y))
        return scale * r

    return _run_streams(plan, draw)


def _bartlett_factor(rng: np.random.Generator, dof: int, p: int, m: int) -> np.ndarray:
    """Lower Cholesky factors ``L`` with ``L L^T ~ W_p(dof, I)``, shape ``(m, p, p)``."""
    L = np.zeros((m, p, p))
    for i in range(p):
        L[:, i, i] = np.sqrt(rng.chisquare(dof - i, m))
        if i:
            L[:, i, :i] = rng.standard_normal((m, i))
    return L


def _t0sq_draw(rng: np.random.Generator, p: int, q: int, n: int, m: int) -> np.ndarray:
    # S_h = H H^T with H lower-triangular (q >= p) or a p x q Gaussian matrix
    H = _bartlett_factor(rng, q, p, m) if q >= p else rng.standard_normal((m, p, q))
    L = _bartlett_factor(rng, n, p, m)
    # tr(S_h S_e^{-1}) = ||L^{-1} H||_F^2, forward substitution on L
    Z = np.empty_like(H)
    for i in range(p):
        acc = H[:, i, :] - np.einsum("mk,mkj->mj", L[:, i, :i], Z[:, :i, :])
        Z[:, i, :] = acc / L[:, i, i, None]
    return n * np.einsum("mij,mij->m", Z, Z)


def sample_t0sq(plan: SimulationPlan) -> EmpiricalQuantiles:
    st = plan.statistic
    if not isinstance(st, HotellingT0sq):
        raise DomainError("plan does not describe Hotelling's T0^2")

    def draw(rng, m):
        out = _t0sq_draw(rng, st.p, st.q, st.n, m)
        bad = ~np.isfinite(out)
        if bad.any():
            out[bad] = _t0sq_draw(rng, st.p, st.q, st.n, int(bad.sum()))
            if not np.all(np.isfinite(out)):
                raise NumericalError("singular S_e survived a redraw")
        return out

    return _run_streams(plan, draw)


def sample(plan: SimulationPlan) -> EmpiricalQuantiles:
    if isinstance(plan.statistic, Correlation):
        return sample_correlation(plan)
    return sample_t0sq(plan)


def exact_correlation_cdf(n: int, x):
    """``Pr(sqrt(N) R <= x)`` under the null, ``N = n - 2.5``.

    ``R`` has density proportional to ``(1 - r**2)**((n - 4) / 2)``, so
    ``R**2 ~ Beta(1/2, (n - 2)/2)``.
    """
    if int(n) != n or n < 5:
        raise DomainError(f"exact correlation CDF needs integer n >= 5, got {n!r}")
    x = np.asarray(x, dtype=float)
    r = np.clip(x / math.sqrt(correlation_N(n)), -1.0, 1.0)
    half = 0.5 * special.betainc(0.5, 0.5 * (n - 2), r * r)
    out = np.where(r >= 0, 0.5 + half, 0.5 - half)
    return float(out) if out.ndim == 0 else out


def empirical_upper_quantile(samples: EmpiricalQuantiles, alpha: float) -> float:
    """Order statistic of rank ``ceil((1 - alpha) * count)``."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    m = samples.count
    target = (1.0 - alpha) * m
    nearest = round(target)
    # absorb representation error such as (1 - 0.2) * 5 = 4.000000000000001
    k = nearest if abs(target - nearest) <= 1e-9 * max(1.0, m) else math.ceil(target)
    k = min(max(k, 1), m)
    return float(samples.sorted_samples[k - 1])


def default_grid(model: EdgeworthModel, points: int = MIN_GRID_POINTS) -> tuple[float, float, int]:
    return model.base.quantile(GRID_TAIL), model.base.quantile(1.0 - GRID_TAIL), points


def sup_norm_gap(model: EdgeworthModel, oracle_cdf: Callable, grid: tuple[float, float, int] | None = None) -> float:
    """``max |oracle_cdf(x) - approx_cdf(model, x)|`` over a grid, refined near the maximum.

    ``oracle_cdf`` must accept numpy arrays.
    """
    lo_min, hi_min, _ = default_grid(model)
    lo, hi, points = grid if grid is not None else default_grid(model)
    if lo > lo_min or hi < hi_min or points < MIN_GRID_POINTS:
        raise DomainError(
            f"grid must cover [{lo_min:.6g}, {hi_min:.6g}] with >= {MIN_GRID_POINTS} points"
        )

    def gap(xs):
        return np.abs(np.asarray(oracle_cdf(xs), dtype=float) - np.asarray(model.approx_cdf(xs), dtype=float))

    xs = np.linspace(lo, hi, int(points))
    vals = gap(xs)
    best = float(np.max(vals))
    # three rounds of zooming in on the neighbours of the current arg-max
    for _ in range(3):
        i = int(np.argmax(vals))
        a, b = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
        xs = np.linspace(a, b, 65)
        vals = gap(xs)
        best = max(best, float(np.max(vals)))
    return best


def empirical_sup_gap(samples: EmpiricalQuantiles, cdf: Callable) -> float:
    """Kolmogorov distance between the sample and a continuous CDF."""
    s = samples.sorted_samples
    m = len(s)
    F = np.asarray(cdf(s), dtype=float)
    upper = np.arange(1, m + 1) / m - F
    lower = F - np.arange(m) / m
    return float(max(upper.max(), lower.max()))


def dkw_epsilon(count: int, confidence: float) -> float:
    """Two-sided DKW half-width: ``sqrt(ln(2/delta) / (2 count))``."""
    if not 0.0 < confidence < 1.0:
        raise DomainError(f"confidence must lie in (0, 1), got {confidence!r}")
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * count))


@dataclass(frozen=True)
class EnclosureVerdict:
    inside: bool
    slack: float
    dkw_margin: float
    empirical_quantile: float
    inconclusive: bool
    alpha: float
    interval: tuple[float, float]
    dkw_band: tuple[float, float]
    confidence: float

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "inside": self.inside,
            "inconclusive": self.inconclusive,
            "slack": self.slack,
            "dkw_margin": self.dkw_margin,
            "empirical_quantile": self.empirical_quantile,
            "interval": list(self.interval),
            "dkw_band": [_json_float(v) for v in self.dkw_band],
            "confidence": self.confidence,
        }


def _json_float(v: float):
    return None if math.isinf(v) else v


def verify_enclosure(cert: CertifiedQuantile, samples: EmpiricalQuantiles, confidence: float = 0.99) -> EnclosureVerdict:
    """Check a certificate against simulated data.

    With probability ``confidence`` the true upper point lies in
    ``[q(alpha + e), q(alpha - e)]`` where ``q`` is the empirical upper
    quantile and ``e`` the DKW half-width.  The certificate interval is
    widened by the distance from the empirical quantile to either end of that
    band; the verdict is ``inside`` when the empirical quantile falls in the
    widened interval.
    """
    alpha = cert.alpha
    eps = dkw_epsilon(samples.count, confidence)
    emp = empirical_upper_quantile(samples, alpha)
    band_lo = empirical_upper_quantile(samples, alpha + eps) if alpha + eps < 1.0 else -math.inf
    band_hi = empirical_upper_quantile(samples, alpha - eps) if alpha - eps > 0.0 else math.inf
    below, above = emp - band_lo, band_hi - emp
    lo = cert.interval.lo - below
    hi = cert.interval.hi + above
    slack = min(emp - lo, hi - emp)
    inconclusive = band_lo <= cert.interval.lo and cert.interval.hi <= band_hi
    return EnclosureVerdict(
        inside=bool(lo <= emp <= hi),
        slack=float(slack),
        dkw_margin=float(max(below, above)),
        empirical_quantile=emp,
        inconclusive=bool(inconclusive),
        alpha=alpha,
        interval=(cert.interval.lo, cert.interval.hi),
        dkw_band=(band_lo, band_hi),
        confidence=confidence,
    )


# -- binary sample dumps ----------------------------------------------------

MAGIC = b"CFMC"
DUMP_VERSION = 1
# magic, version, statistic tag, p, q, n, seed, stream_count -> 32 bytes
_HEADER = struct.Struct("<4sHHIIIQI")


def write_samples(path, samples: EmpiricalQuantiles) -> None:
    plan = samples.plan
    st = plan.statistic
    p, q = (st.p, st.q) if isinstance(st, HotellingT0sq) else (0, 0)
    header = _HEADER.pack(MAGIC, DUMP_VERSION, st.tag, p, q, st.n, plan.seed, plan.stream_count)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(samples.sorted_samples, dtype="<f8").tobytes())


def read_samples(path) -> EmpiricalQuantiles:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DomainError("sample dump is truncated")
    magic, version, tag, p, q, n, seed, streams = _HEADER.unpack_from(data)
    if magic != MAGIC or version != DUMP_VERSION:
        raise DomainError(f"not a version-{DUMP_VERSION} CFMC sample dump")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    if tag == Correlation.tag:
        st = Correlation(n)
    elif tag == HotellingT0sq.tag:
        st = HotellingT0sq(p, q, n)
    else:
        raise DomainError(f"unknown statistic tag {tag}")
    plan = SimulationPlan(st, max(len(values), 1), seed, streams)
    return EmpiricalQuantiles(np.sort(values), plan)
