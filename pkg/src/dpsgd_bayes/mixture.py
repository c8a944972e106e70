"""Ground-truth total variation for the subsampled Gaussian gradient channel.

The channel for one challenge point over ``T`` steps is the mixture

    sum_b c_b N(mu ⊙ b, sigma^2 C^2 I),   c_b = p^|b| (1-p)^(T-|b|),

with ``2^T`` components. It factorizes across steps, so its log density is
a sum of ``T`` two-term log-sum-exps and never needs the components
enumerated.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.optimize import brentq
from scipy.stats import norm

from .special import erf

CHUNK_SIZE = 1 << 15
_Z95 = float(norm.ppf(0.975))


class TvMethod(str, enum.Enum):
    QUADRATURE = "quadrature"
    MONTE_CARLO = "monte_carlo"
    CLOSED_FORM = "closed_form"


@dataclass(frozen=True)
class TvEstimate:
    value: float
    half_width: float
    method: TvMethod
    samples_or_nodes: int

    @property
    def interval(self) -> tuple[float, float]:
        return (max(0.0, self.value - self.half_width),
                min(1.0, self.value + self.half_width))

    def to_dict(self) -> dict:
        return {"value": self.value, "half_width": self.half_width,
                "method": self.method.value, "samples_or_nodes": self.samples_or_nodes}


@dataclass(frozen=True)
class MixtureSpec:
    """Compressed form of the gradient channel for one secret.

    Attributes:
        means: array of shape ``(T, d)``; row ``t`` is the clipped gradient
            of the challenge point at step ``t``.
        p: sampling probability.
        sigma: noise multiplier; the per-coordinate noise std is ``sigma * clip``.
        clip: clipping norm ``C``.
    """

    means: np.ndarray
    p: float
    sigma: float
    clip: float = 1.0

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        if means.ndim != 2 or means.shape[0] < 1:
            raise ValueError("means must have shape (T, d) with T >= 1")
        object.__setattr__(self, "means", means)
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p!r}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma!r}")
        if not self.clip > 0:
            raise ValueError(f"clip must be > 0, got {self.clip!r}")
        if np.any(np.abs(means) > self.clip * (1 + 1e-12)):
            raise ValueError("every mean coordinate must have magnitude <= clip")

    @property
    def steps(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def noise_std(self) -> float:
        return self.sigma * self.clip

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` gradient traces, shape ``(n, T, d)``."""
        mask = rng.random((n, self.steps, 1)) < self.p
        noise = rng.standard_normal((n, self.steps, self.dim))
        return mask * self.means[None] + self.noise_std * noise

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Log density of traces ``x`` of shape ``(n, T, d)``, up to an
        additive constant shared by every spec with the same ``T``, ``d``
        and noise std."""
        s2 = 2.0 * self.noise_std ** 2
        off = -np.sum(x * x, axis=2) / s2
        diff = x - self.means[None]
        on = -np.sum(diff * diff, axis=2) / s2
        if self.p == 0.0:
            per_step = off
        elif self.p == 1.0:
            per_step = on
        else:
            per_step = np.logaddexp(math.log1p(-self.p) + off, math.log(self.p) + on)
        return per_step.sum(axis=1)


def worst_case_pair(p: float, sigma: float, steps: int, clip: float = 1.0):
    """The canonical adversarial channel pair: means ``+C`` and ``-C``
    along one axis at every step (distance ``2C``)."""
    plus = np.full((steps, 1), clip)
    return MixtureSpec(plus, p, sigma, clip), MixtureSpec(-plus, p, sigma, clip)


def tv_two_gaussians(mu0, mu1, sigma: float) -> float:
    """Exact TV between ``N(mu0, sigma^2 I)`` and ``N(mu1, sigma^2 I)``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma!r}")
    a = np.atleast_1d(np.asarray(mu0, dtype=float))
    b = np.atleast_1d(np.asarray(mu1, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    dist = float(np.linalg.norm((a - b).ravel()))
    return erf(dist / (2.0 * math.sqrt(2.0) * sigma))


def kl_mixture_upper_bound(p: float, sigma: float, steps: int) -> float:
    """Upper bound ``p(1-p)T / (2 sigma^2)`` on the KL divergence between the
    gradient mixture and its moment-matched Gaussian."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma!r}")
    return p * (1.0 - p) * steps / (2.0 * sigma ** 2)


def _sign_changes(f, lo: float, hi: float, n: int = 20001) -> list[float]:
    xs = np.linspace(lo, hi, n)
    v = f(xs)
    roots = []
    for i in np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]:
        roots.append(brentq(f, xs[i], xs[i + 1], xtol=1e-14, rtol=1e-14))
    return roots


def _abs_quad(f, lo: float, hi: float, points: Sequence[float]) -> tuple[float, float, int]:
    edges = [lo, *sorted(x for x in points if lo < x < hi), hi]
    total, err, nodes = 0.0, 0.0, 0
    for a, b in zip(edges[:-1], edges[1:]):
        # f has constant sign on each piece, so integrate f and take |.|
        val, e, info = integrate.quad(f, a, b, limit=200, epsabs=1e-15,
                                      epsrel=1e-11, full_output=True)[:3]
        total += abs(val)
        err += e
        nodes += int(info["neval"])
    return total, err, nodes


def _mixture_window(means: Iterable[float], scale: float, width: float = 12.0):
    means = list(means)
    lo, hi = min(means) - width * scale, max(means) + width * scale
    # extend until each density puts < 1e-12 outside [lo, hi]
    while 2.0 * norm.sf(min(m - lo for m in means) / scale) >= 1e-12 \
            or 2.0 * norm.sf(min(hi - m for m in means) / scale) >= 1e-12:
        lo -= width * scale
        hi += width * scale
    tail = norm.sf((min(means) - lo) / scale) + norm.sf((hi - max(means)) / scale)
    return lo, hi, tail


def tv_mixture_vs_gaussian_1d(p: float, sigma: float, mu: Optional[float] = None,
                              clip: float = 1.0) -> TvEstimate:
    """TV between ``(1-p) N(0, s^2) + p N(mu, s^2)`` and ``N(p mu, s^2)``
    with ``s = sigma * clip``, for a single step.

    ``mu`` defaults to ``clip`` (the worst case).
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma!r}")
    mu = clip if mu is None else float(mu)
    if p in (0.0, 1.0) or mu == 0.0:
        return TvEstimate(0.0, 0.0, TvMethod.QUADRATURE, 0)
    s = sigma * clip

    def diff(x):
        return ((1.0 - p) * norm.pdf(x, 0.0, s) + p * norm.pdf(x, mu, s)
                - norm.pdf(x, p * mu, s))

    lo, hi, tail = _mixture_window([0.0, mu, p * mu], s)
    roots = _sign_changes(diff, lo, hi)
    total, err, nodes = _abs_quad(diff, lo, hi, roots)
    return TvEstimate(float(min(1.0, 0.5 * total)), float(0.5 * err + tail), TvMethod.QUADRATURE, nodes)


def tv_two_mixtures_1d(p: float, sigma: float, mu0: float, mu1: float,
                       clip: float = 1.0) -> TvEstimate:
    """TV between two single-step mixtures ``(1-p) N(0, s^2) + p N(mu_i, s^2)``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma!r}")
    s = sigma * clip
    if p == 0.0 or mu0 == mu1:
        return TvEstimate(0.0, 0.0, TvMethod.QUADRATURE, 0)

    def diff(x):
        # the (1-p) N(0, s^2) terms cancel exactly
        return p * (norm.pdf(x, mu0, s) - norm.pdf(x, mu1, s))

    lo, hi, tail = _mixture_window([0.0, mu0, mu1], s)
    total, err, nodes = _abs_quad(diff, lo, hi, [0.5 * (mu0 + mu1)])
    return TvEstimate(float(min(1.0, 0.5 * total)), float(0.5 * err + tail), TvMethod.QUADRATURE, nodes)


def _tv_chunk(spec_a: MixtureSpec, spec_b: MixtureSpec, seed: int, chunk: int, n: int):
    rng = np.random.default_rng([seed, chunk])
    x = spec_a.sample(rng, n)
    llr = spec_a.log_density(x) - spec_b.log_density(x)
    if np.isnan(llr).any():
        raise FloatingPointError("NaN log-likelihood ratio in Monte Carlo TV")
    w = -np.expm1(-np.maximum(llr, 0.0))
    return float(w.sum()), float((w * w).sum())


def _check_pair(spec_a: MixtureSpec, spec_b: MixtureSpec):
    if spec_a.means.shape != spec_b.means.shape:
        raise ValueError("channels must share T and dimension")
    if spec_a.noise_std != spec_b.noise_std:
        raise ValueError("channels must share the noise scale sigma * C")


def chunk_sizes(n: int, chunk: int = CHUNK_SIZE) -> list[int]:
    """Deterministic partition of ``n`` samples into chunks; chunk ``i`` is
    always seeded with ``(seed, i)`` so results do not depend on workers."""
    full, rest = divmod(n, chunk)
    return [chunk] * full + ([rest] if rest else [])


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))


def tv_channel_monte_carlo(spec_a: MixtureSpec, spec_b: MixtureSpec,
                           n_samples: int = 10 ** 6, seed: int = 0,
                           workers: Optional[int] = None) -> TvEstimate:
    """Monte Carlo TV via ``E_{x~A}[(1 - f_B(x)/f_A(x))^+]``.

    Bit-identical for a given ``(seed, n_samples)`` whatever ``workers`` is.
    """
    _check_pair(spec_a, spec_b)
    if n_samples < 10 ** 4:
        raise ValueError(f"n_samples must be >= 10^4, got {n_samples}")
    sizes = chunk_sizes(n_samples)
    workers = workers or default_workers()
    args = [(spec_a, spec_b, seed, i, n) for i, n in enumerate(sizes)]
    if workers == 1:
        parts = [_tv_chunk(*a) for a in args]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _tv_chunk(*a), args))
    s1 = math.fsum(a for a, _ in parts)
    s2 = math.fsum(b for _, b in parts)
    mean = s1 / n_samples
    var = max(0.0, s2 / n_samples - mean * mean) * n_samples / (n_samples - 1)
    return TvEstimate(min(1.0, max(0.0, mean)), _Z95 * math.sqrt(var / n_samples),
                      TvMethod.MONTE_CARLO, n_samples)


def tv_sweep(ratios: Sequence[float], p: float = 0.01, mu: Optional[float] = None,
             clip: float = 1.0) -> list[dict]:
    """Single-step mixture-vs-Gaussian TV for each ``p/sigma`` ratio at a
    fixed sampling rate ``p`` (so ``sigma = p / ratio``)."""
    rows = []
    for ratio in ratios:
        sigma = p / ratio
        est = tv_mixture_vs_gaussian_1d(p, sigma, mu, clip)
        rows.append({"p": p, "sigma": sigma, "T": 1, "ratio": ratio,
                     "value": est.value, "half_width": est.half_width})
    return rows


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore",
                            lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()

