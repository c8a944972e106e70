"""Discretized privacy-loss-distribution accountant for subsampled Gaussian
DP-SGD under substitution adjacency.

Per step the two secrets induce, along the mean-difference direction and in
units of ``C``,

    A = (1-p) N(0, s^2) + p N(+1, s^2),   B = (1-p) N(0, s^2) + p N(-1, s^2).

The orthogonal coordinates are identically distributed under both, so this
1-D reduction is exact. The privacy loss ``l(x) = ln f_A(x)/f_B(x)`` is
strictly increasing in ``x``, which lets bin masses be computed exactly from
CDF differences at the loss-level preimages. Losses are rounded *up* to the
grid, so every reported delta is an upper bound for that grid.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft as sfft
from scipy.special import ndtr, ndtri

from .bounds import DpSgdConfig, mia_bound

MAX_GRID_SPACING = 0.01
DEFAULT_GRID_SPACING = 1e-4
DEFAULT_LOSS_CAP = 30.0
SINGLE_STEP_TAIL = 1e-15
COMPOSE_TAIL = 1e-13
MAX_BINS = 1 << 27


@dataclass(frozen=True)
class PrivacyLossDistribution:
    """Mass ``masses[k]`` sits on loss ``(origin + k) * h``.

    ``truncated_mass_pos`` is mass whose loss is only known to be large (it
    counts fully towards delta); ``truncated_mass_neg`` is mass known to have
    non-positive loss.
    """

    grid_spacing: float
    origin: int
    masses: np.ndarray
    truncated_mass_pos: float = 0.0
    truncated_mass_neg: float = 0.0
    steps_composed: int = 1

    @property
    def h(self) -> float:
        return self.grid_spacing

    @property
    def losses(self) -> np.ndarray:
        return (self.origin + np.arange(len(self.masses))) * self.grid_spacing

    @property
    def total_mass(self) -> float:
        return math.fsum(self.masses) + self.truncated_mass_pos + self.truncated_mass_neg

    def mean_loss(self) -> float:
        """Mean of the discretized loss, ignoring truncated mass."""
        m = self.masses
        return float(np.dot(self.losses, m) / m.sum())


def _mixture_cdf(x, p, s, shift):
    return (1.0 - p) * ndtr(x / s) + p * ndtr((x - shift) / s)


def _mixture_sf(x, p, s, shift):
    return (1.0 - p) * ndtr(-x / s) + p * ndtr((shift - x) / s)


def privacy_loss(x, p: float, sigma: float):
    """``ln f_A(x) - ln f_B(x)`` for the per-step pair."""
    x = np.asarray(x, dtype=float)
    s2 = sigma * sigma
    if p == 1.0:
        return 2.0 * x / s2
    lq = math.log1p(-p)
    lp = math.log(p)
    la = np.logaddexp(lq - x * x / (2 * s2), lp - (x - 1) ** 2 / (2 * s2))
    lb = np.logaddexp(lq - x * x / (2 * s2), lp - (x + 1) ** 2 / (2 * s2))
    return la - lb


def inverse_privacy_loss(loss, p: float, sigma: float):
    """The unique ``x`` with ``privacy_loss(x) = loss`` (for ``0 < p <= 1``).

    With ``u = exp(x / s^2)``, ``a = p exp(-1 / (2 s^2))``, ``q = 1 - p`` and
    ``r = exp(loss)``, the loss equation is ``a u^2 + q (1 - r) u - a r = 0``.
    The conjugate form of the root avoids cancellation for negative losses.
    """
    loss = np.asarray(loss, dtype=float)
    s2 = sigma * sigma
    q = 1.0 - p
    a = p * math.exp(-1.0 / (2.0 * s2))
    if a == 0.0:
        raise ValueError(f"sigma={sigma} too small for the loss inversion")
    r = np.exp(loss)
    qd = q * np.expm1(loss)  # q (r - 1)
    root = np.hypot(qd, 2.0 * a * np.sqrt(r))
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(loss >= 0, (qd + root) / (2.0 * a), 2.0 * a * r / (root - qd))
    return s2 * np.log(u)


def pld_single_step(p: float, sigma: float, h: float = DEFAULT_GRID_SPACING,
                    loss_cap: float = DEFAULT_LOSS_CAP,
                    tail: float = SINGLE_STEP_TAIL) -> PrivacyLossDistribution:
    """Privacy loss distribution of one subsampled Gaussian step.

    Args:
        p: sampling probability.
        sigma: noise multiplier.
        h: loss grid spacing; must not exceed 0.01.
        loss_cap: losses beyond ``+-loss_cap`` go to the truncated fields.
        tail: mass of ``A`` allowed outside the tabulated ``x`` range on each side.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma!r}")
    if not 0.0 < h <= MAX_GRID_SPACING:
        raise ValueError(f"grid spacing h={h!r} is too coarse; need 0 < h <= {MAX_GRID_SPACING}")
    if not loss_cap > 0:
        raise ValueError(f"loss_cap must be > 0, got {loss_cap!r}")
    if p == 0.0:
        return PrivacyLossDistribution(h, 0, np.ones(1))

    z = float(ndtri(tail))
    x_lo, x_hi = sigma * z, sigma * -z + 1.0
    l_lo = max(-loss_cap, float(privacy_loss(x_lo, p, sigma)))
    l_hi = min(loss_cap, float(privacy_loss(x_hi, p, sigma)))
    k_lo = math.floor(l_lo / h)
    k_hi = math.ceil(l_hi / h)
    if k_hi - k_lo > MAX_BINS:
        raise ValueError(f"{k_hi - k_lo} bins needed; increase h")
    ks = np.arange(k_lo, k_hi + 1)
    edges = inverse_privacy_loss(ks * h, p, sigma)

    # Bin k holds A-mass with loss in ((k-1)h, kh]: rounding up.
    cdf = _mixture_cdf(edges, p, sigma, 1.0)
    sf = _mixture_sf(edges, p, sigma, 1.0)
    # Difference whichever tail is small, so no bin loses precision.
    masses = np.where(edges[1:] <= 0.5 * p, np.diff(cdf), -np.diff(sf))
    np.maximum(masses, 0.0, out=masses)

    below, above = float(cdf[0]), float(sf[-1])
    pos, neg = above, 0.0
    if k_lo * h <= 0.0:
        neg += below
    else:
        pos += below
    return PrivacyLossDistribution(h, k_lo + 1, masses, pos, neg, 1)


def _convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = len(a) + len(b) - 1
    if n > MAX_BINS:
        raise ValueError(f"composition needs {n} bins (> {MAX_BINS}); increase h")
    size = sfft.next_fast_len(n, real=True)
    out = sfft.irfft(sfft.rfft(a, size) * sfft.rfft(b, size), size)[:n]
    np.maximum(out, 0.0, out=out)
    return out


def _trim(origin: int, masses: np.ndarray, h: float, tail: float):
    """Drop the extreme bins holding at most ``tail`` mass on each side."""
    lo = int(np.searchsorted(np.cumsum(masses), tail, side="right"))
    hi = len(masses) - int(np.searchsorted(np.cumsum(masses[::-1]), tail, side="right"))
    if lo >= hi:
        return origin, masses, 0.0, 0.0
    pos = neg = 0.0
    for sl, first in ((slice(0, lo), 0), (slice(hi, None), hi)):
        chunk = masses[sl]
        if len(chunk) == 0:
            continue
        loss_idx = origin + first + np.arange(len(chunk))
        positive = loss_idx > 0
        pos += float(chunk[positive].sum())
        neg += float(chunk[~positive].sum())
    return origin + lo, masses[lo:hi].copy(), pos, neg


def _combine(x: PrivacyLossDistribution, y: PrivacyLossDistribution,
             tail: float) -> PrivacyLossDistribution:
    masses = _convolve(x.masses, y.masses)
    origin, masses, tpos, tneg = _trim(x.origin + y.origin, masses, x.h, tail)
    # Truncated mass of either factor may combine with anything, so its
    # sum-loss is unknown: count all of it as positive.
    pos = x.truncated_mass_pos + y.truncated_mass_pos \
        + x.truncated_mass_neg + y.truncated_mass_neg + tpos
    return PrivacyLossDistribution(x.h, origin, masses, pos, tneg,
                                   x.steps_composed + y.steps_composed)


def compose(pld: PrivacyLossDistribution, steps: int,
            tail: float = COMPOSE_TAIL) -> PrivacyLossDistribution:
    """``steps``-fold self-composition by FFT convolution and repeated squaring.

    After every convolution the outer bins holding at most ``tail`` mass on
    each side are moved to the truncated fields.
    """
    if int(steps) != steps or steps < 1:
        raise ValueError(f"steps must be a positive integer, got {steps!r}")
    if steps == 1:
        return pld
    result: Optional[PrivacyLossDistribution] = None
    base = pld
    n = int(steps)
    while n:
        if n & 1:
            result = base if result is None else _combine(result, base, tail)
        n >>= 1
        if n:
            base = _combine(base, base, tail)
    assert result is not None
    return PrivacyLossDistribution(result.h, result.origin, result.masses,
                                   result.truncated_mass_pos, result.truncated_mass_neg,
                                   pld.steps_composed * int(steps))


def delta_at_eps(pld: PrivacyLossDistribution, eps: float) -> float:
    """Hockey-stick divergence ``E_A[(1 - e^(eps - L))^+]`` plus truncated
    positive mass (and, for ``eps < 0``, truncated negative mass)."""
    losses = pld.losses
    above = losses > eps
    vals = pld.masses[above] * -np.expm1(eps - losses[above])
    delta = math.fsum(vals) + pld.truncated_mass_pos
    if eps < 0:
        delta += pld.truncated_mass_neg
    return min(1.0, max(0.0, delta))


def grid_spacing_for(cfg: DpSgdConfig, base: float = DEFAULT_GRID_SPACING,
                     budget: float = 0.01, floor: float = 4e-7) -> float:
    """Grid spacing whose worst-case rounding shift ``T h`` stays near
    ``budget``, limited to ``[floor, base]``; coarser (1e-5) for ``sigma < 1``
    whose loss support is much wider."""
    h = min(base, max(floor, budget / cfg.steps))
    if cfg.sigma < 1.0:
        h = max(h, 1e-5)
    return h


def beta_via_pld(cfg: DpSgdConfig, h: float = DEFAULT_GRID_SPACING,
                 loss_cap: float = DEFAULT_LOSS_CAP) -> float:
    """Bayes security ``1 - delta(0)`` of ``cfg.steps`` composed steps."""
    if cfg.p == 0.0:
        return 1.0
    single = pld_single_step(cfg.p, cfg.sigma, h, loss_cap)
    return 1.0 - delta_at_eps(compose(single, cfg.steps), 0.0)


@dataclass(frozen=True)
class TimingRow:
    method: str
    epochs: int
    seconds: float
    beta: float


def benchmark(p: float, sigma: float, epochs_grid, h: float = DEFAULT_GRID_SPACING,
              loss_cap: float = DEFAULT_LOSS_CAP, repeats: int = 1000) -> list[TimingRow]:
    """Wall-clock time of the closed form vs the PLD accountant per epoch count."""
    rows = []
    for epochs in epochs_grid:
        cfg = DpSgdConfig(p, sigma, 1.0, max(1, round(epochs / p)))
        start = time.perf_counter()
        for _ in range(repeats):
            beta = mia_bound(cfg).nominal
        rows.append(TimingRow("closed_form", epochs, (time.perf_counter() - start) / repeats, beta))
        start = time.perf_counter()
        beta = beta_via_pld(cfg, h, loss_cap)
        rows.append(TimingRow("pld", epochs, time.perf_counter() - start, beta))
    return rows
