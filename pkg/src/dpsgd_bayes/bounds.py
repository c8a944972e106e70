"""Closed-form Bayes-security bounds for DP-SGD.

All functions here are pure and cheap (a handful of floating point
operations), which is the point: they can be evaluated interactively during
parameter search.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .special import erf, erf_inv

SQRT2 = math.sqrt(2.0)


class InvalidConfigError(ValueError):
    """Raised when DP-SGD hyperparameters are out of range."""


class BoundWarning(UserWarning):
    """Emitted when an input is clamped or a result falls outside the
    regime where the closed form is accurate."""


class Threat(str, enum.Enum):
    MIA = "MIA"
    AI = "AI"
    PROPERTY = "PropertyInference"


@dataclass(frozen=True)
class DpSgdConfig:
    """DP-SGD hyperparameters consumed by every bound.

    ``sampling_rate`` may be omitted when both ``dataset_size`` and
    ``expected_batch`` are given; it is then ``expected_batch / dataset_size``.
    """

    sampling_rate: Optional[float] = None
    noise_multiplier: float = 1.0
    clip_norm: float = 1.0
    steps: int = 1
    dataset_size: Optional[int] = None
    expected_batch: Optional[int] = None

    def __post_init__(self):
        n, batch = self.dataset_size, self.expected_batch
        if n is not None and (int(n) != n or n < 1):
            raise InvalidConfigError(f"dataset_size must be a positive integer, got {n!r}")
        if batch is not None and (int(batch) != batch or batch < 1):
            raise InvalidConfigError(f"expected_batch must be a positive integer, got {batch!r}")
        p = self.sampling_rate
        if p is None:
            if n is None or batch is None:
                raise InvalidConfigError(
                    "give sampling_rate, or both dataset_size and expected_batch")
            p = batch / n
            object.__setattr__(self, "sampling_rate", p)
        elif n is not None and batch is not None and abs(p - batch / n) > 1e-12:
            raise InvalidConfigError(
                f"sampling_rate {p} disagrees with expected_batch/dataset_size = {batch / n}")
        if not (isinstance(p, (int, float)) and 0.0 <= p <= 1.0):
            raise InvalidConfigError(f"sampling_rate must lie in [0, 1], got {p!r}")
        if not self.noise_multiplier > 0:
            raise InvalidConfigError(f"noise_multiplier must be > 0, got {self.noise_multiplier!r}")
        if not self.clip_norm > 0:
            raise InvalidConfigError(f"clip_norm must be > 0, got {self.clip_norm!r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise InvalidConfigError(f"steps must be a positive integer, got {self.steps!r}")

    @classmethod
    def from_batch(cls, dataset_size: int, expected_batch: int, noise_multiplier: float,
                   steps: int, clip_norm: float = 1.0) -> "DpSgdConfig":
        return cls(None, noise_multiplier, clip_norm, steps, dataset_size, expected_batch)

    @property
    def p(self) -> float:
        return float(self.sampling_rate)

    @property
    def sigma(self) -> float:
        return float(self.noise_multiplier)

    @property
    def steps_per_epoch(self) -> int:
        """``ceil(1/p)`` steps make one epoch."""
        if self.p == 0:
            raise InvalidConfigError("epochs are undefined for sampling_rate 0")
        return math.ceil(1.0 / self.p - 1e-9)

    def with_steps(self, steps: int) -> "DpSgdConfig":
        return DpSgdConfig(self.sampling_rate, self.noise_multiplier, self.clip_norm,
                           steps, self.dataset_size, self.expected_batch)


@dataclass(frozen=True)
class SecurityBound:
    """A Bayes-security lower bound.

    ``nominal`` is the erf term alone; ``analytic_error`` is the explicit
    constant for the mixture-approximation error, reported separately.
    """

    nominal: float
    analytic_error: float
    threat: Threat
    delta_f: float
    empirical_error: Optional[float] = None
    empirical_half_width: Optional[float] = None
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def conservative(self) -> float:
        return max(0.0, self.nominal - self.analytic_error)

    def value(self, mode: str = "nominal") -> float:
        if mode == "nominal":
            return self.nominal
        if mode == "conservative":
            return self.conservative
        if mode == "empirical":
            if self.empirical_error is None:
                raise ValueError("no empirical error attached to this bound")
            return max(0.0, self.nominal - self.empirical_error)
        raise ValueError(f"unknown mode {mode!r}")

    def to_dict(self) -> dict:
        return {
            "threat": self.threat.value,
            "nominal": self.nominal,
            "analytic_error": self.analytic_error,
            "conservative": self.conservative,
            "empirical_error": self.empirical_error,
            "empirical_half_width": self.empirical_half_width,
            "delta_f": self.delta_f,
            **({"metadata": self.metadata} if self.metadata else {}),
        }


@dataclass(frozen=True)
class TprQuery:
    fpr: float
    prior: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.fpr <= 1.0:
            raise ValueError(f"fpr must lie in [0, 1], got {self.fpr!r}")
        if not 0.0 < self.prior < 1.0:
            raise ValueError(f"prior must lie in (0, 1), got {self.prior!r}")


def analytic_approx_error(cfg: DpSgdConfig) -> float:
    r"""Explicit constant for the mixture-vs-Gaussian error term.

    Pinsker gives ``tv <= sqrt(KL/2)`` with ``KL <= p(1-p)T / (2 sigma^2)``
    for each of the two mixtures; the two terms add up to
    ``sqrt(p(1-p)T) / sigma``.
    """
    p = cfg.p
    return math.sqrt(p * (1.0 - p) * cfg.steps) / cfg.sigma


def property_bound(cfg: DpSgdConfig, delta_f: float,
                   threat: Threat = Threat.PROPERTY) -> SecurityBound:
    """Bayes security against record-level property inference.

    Args:
        cfg: DP-SGD hyperparameters.
        delta_f: worst-case Frobenius distance between the clipped gradient
            sequences of the two leakiest property values. Values above
            ``2 C sqrt(T)`` are impossible under clipping and are clamped.
    """
    if delta_f < 0 or math.isnan(delta_f):
        raise ValueError(f"delta_f must be >= 0, got {delta_f!r}")
    cap = 2.0 * cfg.clip_norm * math.sqrt(cfg.steps)
    if delta_f > cap:
        if delta_f > cap * (1 + 1e-12):
            warnings.warn(f"delta_f={delta_f} exceeds 2C*sqrt(T)={cap}; clamped",
                          BoundWarning, stacklevel=2)
        delta_f = cap
    arg = cfg.p * delta_f / (2.0 * SQRT2 * cfg.sigma * cfg.clip_norm)
    nominal = 1.0 - erf(arg)
    return SecurityBound(nominal=nominal, analytic_error=analytic_approx_error(cfg),
                         threat=threat, delta_f=delta_f)


def mia_bound(cfg: DpSgdConfig) -> SecurityBound:
    """Bayes security against record-level membership inference,
    ``1 - erf(p sqrt(T) / (sqrt(2) sigma))``."""
    return property_bound(cfg, 2.0 * cfg.clip_norm * math.sqrt(cfg.steps), Threat.MIA)


def ai_bound(cfg: DpSgdConfig, trace: Sequence[float]) -> SecurityBound:
    """Data-dependent Bayes security against attribute inference.

    ``trace`` holds the per-step sensitivities ``R_1..R_T`` (a
    :class:`~dpsgd_bayes.trainer.SensitivityTrace` or any float sequence).
    """
    values = getattr(trace, "values", trace)
    values = [float(r) for r in values]
    if len(values) != cfg.steps:
        raise ValueError(f"trace has {len(values)} entries but cfg.steps = {cfg.steps}")
    top = 2.0 * cfg.clip_norm
    for t, r in enumerate(values, start=1):
        if not (-1e-12 <= r <= top * (1 + 1e-12)):
            raise ValueError(f"R_{t} = {r} outside [0, 2C] = [0, {top}]")
    norm = math.sqrt(math.fsum(min(max(r, 0.0), top) ** 2 for r in values))
    return property_bound(cfg, norm, Threat.AI)


def select_sampling_rate(beta_target: float, sigma: float, steps: int) -> float:
    """Sampling rate that makes the nominal MIA bound equal ``beta_target``.

    The approximation error term is ignored, as in the usual worked
    example ``beta=0.98, T=5000 -> p ~= 0.00035 sigma``.
    """
    if not 0.0 < beta_target < 1.0:
        raise ValueError(f"beta_target must lie in (0, 1), got {beta_target!r}")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma!r}")
    if int(steps) != steps or steps < 1:
        raise ValueError(f"steps must be a positive integer, got {steps!r}")
    p = erf_inv(1.0 - beta_target) * SQRT2 * sigma / math.sqrt(steps)
    if p > 1.0:
        warnings.warn(f"required sampling rate {p:.4g} exceeds 1; clamped to 1",
                      BoundWarning, stacklevel=2)
        p = 1.0
    return p


def select_noise_multiplier(beta_target: float, sampling_rate: float, steps: int) -> float:
    """Noise multiplier that makes the nominal MIA bound equal ``beta_target``
    for a fixed sampling rate (the same relation, solved for sigma)."""
    if not 0.0 < beta_target < 1.0:
        raise ValueError(f"beta_target must lie in (0, 1), got {beta_target!r}")
    if not 0.0 < sampling_rate <= 1.0:
        raise ValueError(f"sampling_rate must lie in (0, 1], got {sampling_rate!r}")
    return sampling_rate * math.sqrt(steps) / (SQRT2 * erf_inv(1.0 - beta_target))


def tpr_bound(beta: float, q: TprQuery) -> float:
    """Largest TPR any attacker can reach at ``q.fpr`` against a
    ``beta``-secure mechanism, for prior ``q.prior = Pr[S=1]``."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta!r}")
    slack = 1.0 + q.fpr - beta
    if q.prior > 0.5:
        slack *= q.prior / (1.0 - q.prior)
    return min(1.0, max(0.0, slack))


def advantage_from_dp(eps: float, delta: float) -> float:
    """Upper bound on MIA advantage for an (eps, delta)-DP mechanism."""
    if eps < 0 or math.isnan(eps):
        raise ValueError(f"eps must be >= 0, got {eps!r}")
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must lie in [0, 1), got {delta!r}")
    if math.isinf(eps):
        return 1.0
    em1 = math.expm1(eps)
    return min(1.0, (em1 + 2.0 * delta) / (em1 + 2.0))


def eps_lower_bound(beta: float, delta: float) -> float:
    """Smallest epsilon compatible with Bayes security ``beta`` at ``delta``.

    Inverts the advantage bound; returns 0 when the log argument does not
    exceed 1 (no meaningful bound).
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta!r}")
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must lie in [0, 1), got {delta!r}")
    arg = (2.0 - 2.0 * delta - beta) / beta
    if arg <= 1.0:
        return 0.0
    return math.log(arg)
