"""Desk-scale non-convex workload: a tiny MLP on a Gaussian-mixture task.

The workload plays the role of a real training job for the search protocol:
deterministic data from a generator seed, deterministic init and batch order
from a (init_seed, data_order_seed) pair, hand-rolled AdamW, softmax
cross-entropy loss, and a min-over-steps training-loss score. Sized so that
a default run stays optimization limited (it does not saturate within the
horizon), which keeps schedule differences measurable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .schedules import ScheduleSpec, schedule_lrs, shape_to_dict

__all__ = [
    "AdamState",
    "OptimizerConfig",
    "RunRecord",
    "RunSeed",
    "ToyWorkload",
    "TOY_DIVERGENCE_SENTINEL",
    "adamw_step",
    "init_params",
    "loss_and_grad",
    "make_dataset",
    "run_training",
]

TOY_DIVERGENCE_SENTINEL = 1e6


@dataclass(frozen=True)
class OptimizerConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    epsilon: float = 1e-8

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError(f"betas must lie in [0, 1): {self.beta1}, {self.beta2}")
        if self.weight_decay < 0.0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass(frozen=True)
class ToyWorkload:
    """Model + dataset + training-loop spec; a pure function of its seeds."""

    input_dim: int = 32
    n_classes: int = 10
    n_train: int = 8192
    hidden: tuple[int, ...] = (64, 64)
    batch_size: int = 256
    horizon: int = 1000
    data_seed: int = 0
    center_scale: float = 1.0

    def __post_init__(self):
        if min(self.input_dim, self.n_classes, self.n_train, self.batch_size) < 1:
            raise ValueError("workload dimensions must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.batch_size > self.n_train:
            raise ValueError("batch_size cannot exceed n_train")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.n_classes)


@dataclass(frozen=True)
class RunSeed:
    init_seed: int
    data_order_seed: int


@lru_cache(maxsize=8)
def make_dataset(workload: ToyWorkload) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian-mixture classification data; pure function of the workload."""
    rng = np.random.default_rng(workload.data_seed)
    centers = workload.center_scale * rng.standard_normal(
        (workload.n_classes, workload.input_dim)
    )
    labels = rng.integers(0, workload.n_classes, workload.n_train)
    points = centers[labels] + rng.standard_normal(
        (workload.n_train, workload.input_dim)
    )
    points.setflags(write=False)
    labels.setflags(write=False)
    return points, labels


# ---------------------------------------------------------------------------
# MLP: flat parameter vector with (W, b) views
# ---------------------------------------------------------------------------


def _layout(dims: tuple[int, ...]) -> tuple[list[tuple[int, int, int]], int]:
    """(offset, fan_in, fan_out) per layer plus the total parameter count."""
    spans = []
    offset = 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        spans.append((offset, fan_in, fan_out))
        offset += fan_in * fan_out + fan_out
    return spans, offset


def _views(flat: np.ndarray, dims: tuple[int, ...]) -> list[tuple[np.ndarray, np.ndarray]]:
    spans, total = _layout(dims)
    assert flat.size == total
    out = []
    for offset, fan_in, fan_out in spans:
        w = flat[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        b = flat[offset + fan_in * fan_out : offset + fan_in * fan_out + fan_out]
        out.append((w, b))
    return out


def init_params(workload: ToyWorkload, init_seed: int) -> np.ndarray:
    """He-style init: W ~ N(0, 2/fan_in), b = 0, packed flat."""
    rng = np.random.default_rng(init_seed)
    dims = workload.layer_dims
    spans, total = _layout(dims)
    flat = np.zeros(total)
    for (offset, fan_in, fan_out) in spans:
        w = rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in)
        flat[offset : offset + fan_in * fan_out] = w.ravel()
    return flat


def loss_and_grad(
    params: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    dims: tuple[int, ...],
) -> tuple[float, np.ndarray, float]:
    """Mean softmax cross-entropy, flat gradient, and classification error."""
    layers = _views(params, dims)
    n = x.shape[0]

    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        if i < len(layers) - 1:
            h = np.maximum(z, 0.0)
            acts.append(h)
        else:
            logits = z

    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(lse - shifted[np.arange(n), y]))
    error = float(np.mean(np.argmax(logits, axis=1) != y))

    probs = np.exp(shifted - lse[:, None])
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grad = np.empty_like(params)
    grad_views = _views(grad, dims)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        gw, gb = grad_views[i]
        np.matmul(acts[i].T, delta, out=gw)
        gb[:] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ w.T) * (acts[i] > 0.0)
    return loss, grad, error


# ---------------------------------------------------------------------------
# AdamW
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adamw_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    config: OptimizerConfig,
    lr: float,
) -> tuple[np.ndarray, AdamState]:
    """One AdamW update with bias correction and decoupled weight decay."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads and state shapes must agree")
    if lr < 0.0:
        raise ValueError(f"lr must be >= 0, got {lr}")
    t = state.t + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * grads
    v = config.beta2 * state.v + (1.0 - config.beta2) * grads * grads
    m_hat = m / (1.0 - config.beta1**t)
    v_hat = v / (1.0 - config.beta2**t)
    update = m_hat / (np.sqrt(v_hat) + config.epsilon)
    if config.weight_decay != 0.0:
        update = update + config.weight_decay * params
    return params - lr * update, AdamState(m, v, t)


# ---------------------------------------------------------------------------
# Training runs
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    """One training run's identity plus its trajectory summary."""

    run_id: str
    family: str | None
    shape_params: dict | None
    base_lr: float
    init_seed: int
    data_order_seed: int
    condition: str | None
    score: float          # min over steps of training loss; +inf if diverged
    final_loss: float
    min_error: float | None
    final_error: float | None
    diverged: bool
    n_steps: int
    trajectory: list[float] | None = None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "family": self.family,
            "shape_params": self.shape_params,
            "base_lr": self.base_lr,
            "init_seed": self.init_seed,
            "data_order_seed": self.data_order_seed,
            "condition": self.condition,
            "score": self.score,
            "final_loss": self.final_loss,
            "min_error": self.min_error,
            "final_error": self.final_error,
            "diverged": self.diverged,
            "n_steps": self.n_steps,
            "trajectory": self.trajectory,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _resolve_lrs(workload: ToyWorkload, schedule) -> tuple[np.ndarray, dict]:
    if isinstance(schedule, ScheduleSpec):
        if schedule.horizon != workload.horizon:
            raise ValueError(
                f"schedule horizon {schedule.horizon} does not match "
                f"workload horizon {workload.horizon}"
            )
        ident = {
            "family": schedule.shape.family,
            "shape_params": shape_to_dict(schedule.shape)["params"],
            "base_lr": schedule.base_lr,
        }
        return schedule_lrs(schedule), ident
    arr = np.asarray(schedule, dtype=float)
    if arr.shape != (workload.horizon,):
        raise ValueError(
            f"schedule length {arr.shape} does not match horizon {workload.horizon}"
        )
    ident = {"family": None, "shape_params": None, "base_lr": float(arr.max(initial=0.0))}
    return arr, ident


def run_training(
    workload: ToyWorkload,
    schedule,
    config: OptimizerConfig,
    seed: RunSeed,
    *,
    run_id: str = "",
    condition: str | None = None,
    keep_trajectory: bool = False,
) -> RunRecord:
    """Train the MLP for the workload horizon; bit-exact given equal inputs.

    ``schedule`` is a ScheduleSpec (horizon must match) or a raw per-step LR
    vector. Per-step training loss is measured on the step's batch before the
    update. Divergence (non-finite loss or loss > 1e6) truncates the run and
    scores it +inf.
    """
    lrs, ident = _resolve_lrs(workload, schedule)
    x_all, y_all = make_dataset(workload)
    dims = workload.layer_dims
    n, bsz = workload.n_train, workload.batch_size

    params = init_params(workload, seed.init_seed)
    state = AdamState.zeros(params.size)
    order_rng = np.random.default_rng(seed.data_order_seed)
    perm = order_rng.permutation(n)
    pos = 0

    losses = []
    errors = []
    diverged = False
    for t in range(workload.horizon):
        if pos + bsz > n:
            perm = order_rng.permutation(n)
            pos = 0
        idx = perm[pos : pos + bsz]
        pos += bsz
        loss, grad, err = loss_and_grad(params, x_all[idx], y_all[idx], dims)
        losses.append(loss)
        errors.append(err)
        if not math.isfinite(loss) or loss > TOY_DIVERGENCE_SENTINEL:
            diverged = True
            break
        params, state = adamw_step(params, grad, state, config, float(lrs[t]))

    loss_arr = np.asarray(losses)
    err_arr = np.asarray(errors)
    score = math.inf if diverged else float(loss_arr.min())
    return RunRecord(
        run_id=run_id,
        family=ident["family"],
        shape_params=ident["shape_params"],
        base_lr=ident["base_lr"],
        init_seed=seed.init_seed,
        data_order_seed=seed.data_order_seed,
        condition=condition,
        score=score,
        final_loss=float(loss_arr[-1]) if loss_arr.size else math.inf,
        min_error=float(err_arr.min()) if err_arr.size else None,
        final_error=float(err_arr[-1]) if err_arr.size else None,
        diverged=diverged,
        n_steps=int(loss_arr.size),
        trajectory=[float(v) for v in loss_arr] if keep_trajectory else None,
    )
