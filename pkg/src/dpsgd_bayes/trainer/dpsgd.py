"""DP-SGD with per-step attribute-inference sensitivity instrumentation."""

from __future__ import annotations

import csv
import enum
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from scipy.spatial.distance import pdist
from scipy.special import expit

from ..bounds import DpSgdConfig, ai_bound, mia_bound
from .data import TabularDataset, _parse_bool, read_key_values
from .models import Architecture, ModelSpec, ModelState, loss, per_example_gradients, predict

DATA_DEPENDENCE_CAVEAT = (
    "AI bounds are computed from the training data; publishing them may leak the "
    "membership of a record to a membership-inference adversary."
)


class AnalysisMode(str, enum.Enum):
    NONE = "none"
    MIA = "mia"
    AI_FULL = "ai_full"
    AI_APPROX = "ai_approx"


@dataclass(frozen=True)
class TrainConfig:
    """Trainer hyperparameters. ``learning_rate`` at step ``t`` is
    ``learning_rate / (1 + lr_decay * t)``."""

    model: str = "logistic_regression"
    hidden_width: int = 32
    activation: str = "tanh"
    fit_intercept: bool = True
    clip_norm: float = 1.0
    noise_multiplier: float = 1.0
    expected_batch: int = 256
    epochs: int = 1
    learning_rate: float = 0.1
    lr_decay: float = 0.0
    seed: int = 0
    steps: Optional[int] = None

    def __post_init__(self):
        Architecture(self.model)
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be > 0")
        if self.noise_multiplier < 0:
            raise ValueError("noise_multiplier must be >= 0")
        if self.expected_batch < 1 or self.epochs < 1:
            raise ValueError("expected_batch and epochs must be >= 1")
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be >= 1")

    def lr_at(self, t: int) -> float:
        return self.learning_rate / (1.0 + self.lr_decay * t)

    def model_spec(self, input_dim: int) -> ModelSpec:
        return ModelSpec(Architecture(self.model), input_dim, self.hidden_width,
                         self.activation, self.fit_intercept)

    @classmethod
    def from_mapping(cls, kv: dict) -> "TrainConfig":
        casts: dict[str, Callable] = {
            "model": str, "hidden_width": int, "activation": str,
            "fit_intercept": _parse_bool, "clip_norm": float, "noise_multiplier": float,
            "expected_batch": int, "epochs": int, "learning_rate": float,
            "lr_decay": float, "seed": int, "steps": int,
        }
        args = {k: casts[k](v.strip() if isinstance(v, str) else v)
                for k, v in kv.items() if k in casts}
        return cls(**args)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "TrainConfig":
        return cls.from_mapping(read_key_values(path))


def clip(g: np.ndarray, c: float) -> np.ndarray:
    """Scale rows of ``g`` to norm at most ``c``; shorter rows are unchanged."""
    g = np.asarray(g, dtype=float)
    norms = np.linalg.norm(g, axis=-1, keepdims=True)
    return g / np.maximum(1.0, norms / c)


def dp_sgd_step(m: ModelState, X: np.ndarray, y: np.ndarray, cfg: TrainConfig,
                rng: np.random.Generator) -> ModelState:
    """One update ``theta - eta_t (sum_i clip(g_i) + N(0, s^2 C^2 I)) / L``.

    The divisor is the expected batch size ``L``, not the realised one. An
    empty batch still takes a noise-only step.
    """
    c = cfg.clip_norm
    total = np.zeros(m.spec.n_params)
    if len(y):
        total = clip(per_example_gradients(m.spec, m.theta, X, y), c).sum(axis=0)
    noise = cfg.noise_multiplier * c * rng.standard_normal(m.spec.n_params)
    update = (total + noise) / cfg.expected_batch
    theta = m.theta - cfg.lr_at(m.step) * update
    if not np.all(np.isfinite(theta)):
        raise FloatingPointError(f"non-finite weights after step {m.step}")
    return ModelState(m.spec, theta, m.step + 1)


def _variant_gradients(m: ModelState, idx: np.ndarray, ds: TabularDataset, c: float):
    x = ds.variants(idx)
    b, a, d = x.shape
    y = np.repeat(ds.labels[idx], a)
    g = per_example_gradients(m.spec, m.theta, x.reshape(b * a, d), y)
    return clip(g, c).reshape(b, a, -1)


def _lr_terms(m: ModelState, idx: np.ndarray, ds: TabularDataset, c: float):
    # LR clipped gradient of variant a: rho_a * [phi, c_a, 1].
    spec = m.spec
    k0 = ds.base.shape[1]
    d = spec.input_dim
    w_phi, w_s = m.theta[:k0], m.theta[k0:d]
    bias = m.theta[d] if spec.fit_intercept else 0.0
    phi = ds.base[idx]
    enc = ds.sens_encoding
    z = (phi @ w_phi + bias)[:, None] + (enc @ w_s)[None, :]
    resid = expit(z) - ds.labels[idx][:, None]
    shared = (phi * phi).sum(axis=1) + float(spec.fit_intercept)
    enc_sq = (enc * enc).sum(axis=1)
    norm = np.abs(resid) * np.sqrt(shared[:, None] + enc_sq[None, :])
    rho = resid / np.maximum(1.0, norm / c)
    return rho, shared, enc


def r_t_full(m: ModelState, idx, ds: TabularDataset, c: float, method: str = "auto") -> float:
    """Largest distance between clipped gradients of any two substitutions
    of any batch record.

    ``method='auto'`` uses an exact closed form for logistic regression and
    explicit pairwise differences otherwise; ``'generic'`` forces the latter.
    """
    idx = np.asarray(idx, dtype=int)
    if len(idx) == 0 or ds.domain_size == 1:
        return 0.0
    if method == "auto" and m.spec.architecture is Architecture.LOGISTIC_REGRESSION:
        rho, shared, enc = _lr_terms(m, idx, ds, c)
        sq = rho[:, :, None] - rho[:, None, :]
        np.multiply(sq, sq, out=sq)
        sq *= shared[:, None, None]
        if enc.shape[1] == 1:
            pc = rho * enc[None, :, 0]
            d2 = pc[:, :, None] - pc[:, None, :]
            np.multiply(d2, d2, out=d2)
            sq += d2
        elif enc.shape[1] > 1:
            # ||rho_a c_a - rho_b c_b||^2 through the encoding Gram matrix;
            # exact for one-hot blocks, whose cross terms vanish.
            gram = enc @ enc.T
            cross = rho * rho * np.diag(gram)[None, :]
            d2 = rho[:, :, None] * rho[:, None, :]
            d2 *= -2.0 * gram[None]
            d2 += cross[:, :, None]
            d2 += cross[:, None, :]
            np.maximum(d2, 0.0, out=d2)
            sq += d2
        best = math.sqrt(float(sq.max()))
    elif method in ("auto", "generic"):
        best = 0.0
        for i in range(len(idx)):
            g = _variant_gradients(m, idx[i:i + 1], ds, c)[0]
            best = max(best, float(pdist(g).max()))
    else:
        raise ValueError(f"unknown method {method!r}")
    return min(best, 2.0 * c)


def r_t_approx(m: ModelState, idx, ds: TabularDataset, c: float, method: str = "auto") -> float:
    """Twice the largest distance from a clipped substitution gradient to the
    mean of that record's substitution gradients; an upper bound on
    :func:`r_t_full` within a factor 2."""
    idx = np.asarray(idx, dtype=int)
    if len(idx) == 0 or ds.domain_size == 1:
        return 0.0
    if method == "auto" and m.spec.architecture is Architecture.LOGISTIC_REGRESSION:
        rho, shared, enc = _lr_terms(m, idx, ds, c)
        dev = rho - rho.mean(axis=1, keepdims=True)
        sq = dev * dev * shared[:, None]
        if enc.shape[1]:
            pc = rho[:, :, None] * enc[None, :, :]
            centred = pc - pc.mean(axis=1, keepdims=True)
            sq += (centred * centred).sum(axis=2)
        radius = math.sqrt(float(sq.max()))
    elif method in ("auto", "generic"):
        radius = 0.0
        for i in range(len(idx)):
            g = _variant_gradients(m, idx[i:i + 1], ds, c)[0]
            radius = max(radius, float(np.linalg.norm(g - g.mean(axis=0), axis=1).max()))
    else:
        raise ValueError(f"unknown method {method!r}")
    return min(2.0 * radius, 2.0 * c)


@dataclass
class SensitivityTrace:
    values: list = field(default_factory=list)
    mode: str = "full"
    per_step_batch_sizes: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.values)

    def append(self, r: float, batch_size: int) -> None:
        self.values.append(float(r))
        self.per_step_batch_sizes.append(int(batch_size))

    def norm(self) -> float:
        return math.sqrt(math.fsum(v * v for v in self.values))

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "R_t", "mode"])
            for t, r in enumerate(self.values, start=1):
                w.writerow([t, repr(r), self.mode])

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "SensitivityTrace":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"t", "R_t"} <= set(reader.fieldnames):
                raise ValueError(f"{path}: trace CSV needs columns t, R_t[, mode]")
            values, modes = [], set()
            for n, row in enumerate(reader, start=1):
                try:
                    t, r = int(row["t"]), float(row["R_t"])
                except (TypeError, ValueError):
                    raise ValueError(f"{path}: malformed row {n}: {row}") from None
                if t != n:
                    raise ValueError(f"{path}: expected t={n}, found t={t}")
                if not math.isfinite(r):
                    raise ValueError(f"{path}: non-finite R_t at t={t}")
                values.append(r)
                modes.add((row.get("mode") or "full").strip())
        if len(modes) > 1:
            raise ValueError(f"{path}: mixed modes {sorted(modes)}")
        return cls(values, modes.pop() if modes else "full", [])


@dataclass
class EpochRecord:
    epoch: int
    steps: int
    loss: float
    accuracy: float
    wall_time: dict
    mia_beta: Optional[float] = None
    ai_beta_full: Optional[float] = None
    ai_beta_approx: Optional[float] = None
    ai_data_dependent: bool = False

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("mia_beta", "ai_beta_full", "ai_beta_approx"):
            if out[key] is None:
                del out[key]
        if self.ai_data_dependent:
            out["ai_caveat"] = DATA_DEPENDENCE_CAVEAT
        return out


@dataclass
class TrainReport:
    analysis_mode: str
    config: dict
    dataset_size: int
    sampling_rate: float
    steps_per_epoch: int
    epochs: list
    model: ModelState
    traces: dict
    aborted: bool = False
    abort_reason: Optional[str] = None

    @property
    def ai_data_dependent(self) -> bool:
        return self.analysis_mode in (AnalysisMode.AI_FULL.value, AnalysisMode.AI_APPROX.value)

    def deterministic_view(self) -> dict:
        """Everything except wall-clock timings."""
        rows = []
        for e in self.epochs:
            d = e.to_dict()
            d.pop("wall_time")
            rows.append(d)
        return {
            "analysis_mode": self.analysis_mode, "config": self.config,
            "epochs": rows, "theta": self.model.theta.tolist(),
            "traces": {k: list(v.values) for k, v in self.traces.items()},
            "aborted": self.aborted,
        }


def _dp_config(cfg: TrainConfig, n: int, steps: int) -> DpSgdConfig:
    return DpSgdConfig(cfg.expected_batch / n, max(cfg.noise_multiplier, 1e-300),
                       cfg.clip_norm, steps, n, cfg.expected_batch)


def train(ds: TabularDataset, cfg: TrainConfig, analysis_mode="none",
          seed: Optional[int] = None, r_method: str = "auto") -> TrainReport:
    """Run DP-SGD for ``cfg.epochs`` epochs of ``ceil(1/p)`` steps each
    (or ``cfg.steps`` steps) and record per-epoch bounds.

    ``ai_full`` computes both the full and the approximate sensitivity so the
    two bounds can be compared; timings are kept separately per analysis.
    Divergence stops training and returns the partial report.
    """
    mode = AnalysisMode(analysis_mode)
    seed = cfg.seed if seed is None else seed
    n = ds.n
    if cfg.expected_batch > n:
        raise ValueError(f"expected_batch {cfg.expected_batch} exceeds dataset size {n}")
    p = cfg.expected_batch / n
    per_epoch = math.ceil(1.0 / p - 1e-9)
    total = cfg.steps if cfg.steps is not None else cfg.epochs * per_epoch
    spec = cfg.model_spec(ds.input_dim)
    init_ss, sample_ss, noise_ss = np.random.SeedSequence(seed).spawn(3)
    sample_rng = np.random.default_rng(sample_ss)
    noise_rng = np.random.default_rng(noise_ss)
    state = ModelState(spec, spec.init(np.random.default_rng(init_ss)))
    X_all = ds.design()

    want_full = mode is AnalysisMode.AI_FULL
    want_approx = mode in (AnalysisMode.AI_FULL, AnalysisMode.AI_APPROX)
    traces = {}
    if want_full:
        traces["full"] = SensitivityTrace(mode="full")
    if want_approx:
        traces["approx"] = SensitivityTrace(mode="approximate")
    c = cfg.clip_norm

    epochs: list[EpochRecord] = []
    clock = {"train": 0.0, "mia": 0.0, "ai_full": 0.0, "ai_approx": 0.0}
    aborted, reason = False, None
    t = 0
    while t < total:
        t0 = time.perf_counter()
        idx = np.flatnonzero(sample_rng.random(n) < p)
        clock["train"] += time.perf_counter() - t0
        try:
            if want_full:
                t0 = time.perf_counter()
                traces["full"].append(r_t_full(state, idx, ds, c, r_method), len(idx))
                clock["ai_full"] += time.perf_counter() - t0
            if want_approx:
                t0 = time.perf_counter()
                traces["approx"].append(r_t_approx(state, idx, ds, c, r_method), len(idx))
                clock["ai_approx"] += time.perf_counter() - t0
            t0 = time.perf_counter()
            state = dp_sgd_step(state, X_all[idx], ds.labels[idx], cfg, noise_rng)
            clock["train"] += time.perf_counter() - t0
        except FloatingPointError as exc:
            aborted, reason = True, str(exc)
            break
        t += 1
        if t % per_epoch == 0 or t == total:
            t0 = time.perf_counter()
            losses = loss(spec, state.theta, X_all, ds.labels)
            acc = float(np.mean(predict(spec, state.theta, X_all) == ds.labels))
            mean_loss = float(np.mean(losses))
            clock["train"] += time.perf_counter() - t0
            record = EpochRecord(epoch=math.ceil(t / per_epoch), steps=t, loss=mean_loss,
                                 accuracy=acc, wall_time={})
            if mode is not AnalysisMode.NONE:
                t0 = time.perf_counter()
                record.mia_beta = mia_bound(_dp_config(cfg, n, t)).nominal
                clock["mia"] += time.perf_counter() - t0
            if want_full:
                t0 = time.perf_counter()
                record.ai_beta_full = ai_bound(_dp_config(cfg, n, t), traces["full"]).nominal
                clock["ai_full"] += time.perf_counter() - t0
            if want_approx:
                t0 = time.perf_counter()
                record.ai_beta_approx = ai_bound(_dp_config(cfg, n, t), traces["approx"]).nominal
                clock["ai_approx"] += time.perf_counter() - t0
            record.ai_data_dependent = want_approx
            record.wall_time = dict(clock)
            clock = {k: 0.0 for k in clock}
            epochs.append(record)
            if not math.isfinite(mean_loss):
                aborted, reason = True, f"non-finite loss at step {t}"
                break

    return TrainReport(analysis_mode=mode.value, config=asdict(cfg), dataset_size=n,
                       sampling_rate=p, steps_per_epoch=per_epoch, epochs=epochs,
                       model=state, traces=traces, aborted=aborted, abort_reason=reason)
