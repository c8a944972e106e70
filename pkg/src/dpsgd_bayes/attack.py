"""Membership-inference game on the gradient channel with the Bayes-optimal
attacker.

The attacker sees a full gradient trace and knows both candidate channels,
so it computes the exact log-likelihood ratio and guesses the secret with the
larger posterior. This measures the information-theoretic advantage the
closed-form bound is supposed to cap.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from .mixture import MixtureSpec, chunk_sizes, default_workers

MIN_TRIALS = 1000


@dataclass(frozen=True)
class GameConfig:
    """Two-secret game: secret 1 with probability ``prior``, else secret 0."""

    channel_0: MixtureSpec
    channel_1: MixtureSpec
    prior: float = 0.5
    trials: int = 10 ** 5
    seed: int = 0

    def __post_init__(self):
        a, b = self.channel_0, self.channel_1
        if a.means.shape != b.means.shape:
            raise ValueError("channels must share T and dimension")
        if a.noise_std != b.noise_std or a.noise_std <= 0:
            raise ValueError("channels need a shared, positive noise scale")
        if not 0.0 < self.prior < 1.0:
            raise ValueError(f"prior must lie in (0, 1), got {self.prior!r}")
        if self.trials < MIN_TRIALS:
            raise ValueError(f"trials must be >= {MIN_TRIALS}, got {self.trials}")


@dataclass(frozen=True)
class Proportion:
    value: float
    low: float
    high: float

    @property
    def half_width(self) -> float:
        return 0.5 * (self.high - self.low)


def wilson(successes: int, n: int) -> Proportion:
    if n == 0:
        return Proportion(0.0, 0.0, 1.0)
    ci = binomtest(int(successes), int(n)).proportion_ci(0.95, method="wilson")
    return Proportion(successes / n, float(ci.low), float(ci.high))


@dataclass(frozen=True)
class GameResult:
    success_rate: float
    advantage: float
    tpr: float
    fpr: float
    ci_half_width: float
    success_ci: tuple[float, float]
    tpr_ci: tuple[float, float]
    fpr_ci: tuple[float, float]
    trials: int
    prior: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    fpr: float
    tpr: float
    ci_half_width: float
    accuracy: float


def _chunk(g: GameConfig, index: int, n: int):
    rng = np.random.default_rng([g.seed, index])
    secret = rng.random(n) < g.prior
    a, b = g.channel_0, g.channel_1
    p = np.where(secret, b.p, a.p)[:, None, None]
    mask = rng.random((n, a.steps, 1)) < p
    means = np.where(secret[:, None, None], b.means[None], a.means[None])
    x = mask * means + a.noise_std * rng.standard_normal((n, a.steps, a.dim))
    llr = b.log_density(x) - a.log_density(x)
    if np.isnan(llr).any():
        raise FloatingPointError("NaN log-likelihood ratio")
    return secret, llr


def simulate(g: GameConfig, workers: Optional[int] = None):
    """Secrets and attacker log-likelihood ratios ``ln f_1/f_0`` per trial.

    Chunk ``i`` draws from ``default_rng([seed, i])`` so the output is
    identical for any ``workers``.
    """
    sizes = chunk_sizes(g.trials)
    workers = workers or default_workers()
    if workers == 1:
        parts = [_chunk(g, i, n) for i, n in enumerate(sizes)]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _chunk(g, *a), enumerate(sizes)))
    return np.concatenate([s for s, _ in parts]), np.concatenate([l for _, l in parts])


def _score(secret: np.ndarray, guess: np.ndarray, prior: float) -> GameResult:
    n = len(secret)
    n1 = int(secret.sum())
    correct = int(np.count_nonzero(guess == secret))
    tp = int(np.count_nonzero(guess & secret))
    fp = int(np.count_nonzero(guess & ~secret))
    succ = wilson(correct, n)
    tpr = wilson(tp, n1)
    fpr = wilson(fp, n - n1)
    base = max(prior, 1.0 - prior)
    scale = 1.0 - base
    return GameResult(
        success_rate=succ.value,
        advantage=(succ.value - base) / scale,
        tpr=tpr.value,
        fpr=fpr.value,
        ci_half_width=succ.half_width / scale,
        success_ci=(succ.low, succ.high),
        tpr_ci=(tpr.low, tpr.high),
        fpr_ci=(fpr.low, fpr.high),
        trials=n,
        prior=prior,
    )


def run_mia_game(g: GameConfig, workers: Optional[int] = None) -> GameResult:
    """Play ``g.trials`` rounds with the maximum-posterior attacker.

    ``advantage`` is the generalized advantage ``(success - m) / (1 - m)``
    with ``m = max(prior, 1 - prior)``; ``ci_half_width`` is the 95% Wilson
    half-width of the success rate on the same scale.
    """
    secret, llr = simulate(g, workers)
    guess = llr > math.log((1.0 - g.prior) / g.prior)
    return _score(secret, guess, g.prior)


def roc_sweep(g: GameConfig, thresholds: Sequence[float],
              workers: Optional[int] = None) -> list[RocPoint]:
    """ROC of the likelihood-ratio test ``f_1/f_0 >= threshold``.

    ``ci_half_width`` combines the Wilson half-widths of TPR and FPR in
    quadrature, the scale on which ``tpr - fpr`` is compared with a bound.
    """
    thresholds = list(thresholds)
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")
    secret, llr = simulate(g, workers)
    n1 = int(secret.sum())
    points = []
    for tau in thresholds:
        log_tau = -math.inf if tau <= 0 else math.log(tau)
        guess = llr >= log_tau
        tp = int(np.count_nonzero(guess & secret))
        fp = int(np.count_nonzero(guess & ~secret))
        tpr, fpr = wilson(tp, n1), wilson(fp, len(secret) - n1)
        acc = float(np.count_nonzero(guess == secret)) / len(secret)
        points.append(RocPoint(tau, fpr.value, tpr.value,
                               math.hypot(tpr.half_width, fpr.half_width), acc))
    return points
