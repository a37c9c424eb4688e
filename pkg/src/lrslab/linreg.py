"""High-dimensional linear regression workload.

Three faces of the same problem:

* :func:`simulate_empirical` runs minibatch SGD on the residual dynamics
  z <- z - a_t * That * (D/B) P_t * z, with That a randomly rotated kernel of
  spectrum Lambda and P_t a fresh random selection of exactly B coordinates.
  The D/B factor makes the sampled projector unbiased (E[(D/B) P_t] = I), so
  the mean drift per step is I - a_t * That regardless of batch size and the
  B = D case reduces exactly to full-batch gradient descent.
* :func:`solve_theory` integrates the per-eigenmode second-moment recurrence
  that gives the exact mean loss in the high-dimensional limit; it is the
  deterministic ground-truth oracle the empirical averages converge to.
* :func:`schedule_descent` optimizes all T per-step learning rates at once by
  gradient descent on the final log-loss through that recurrence
  (:func:`theory_gradient`), with a shrink-all-LRs fallback on blow-up.

Losses use L = ||z||^2 / (2D); the spectrum lam_k = 2k / (D+1) has mean
exactly 1, so the expected initial loss is exactly 0.5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .schedules import base_lr_grid

__all__ = [
    "DIVERGENCE_SENTINEL",
    "DescentConfig",
    "DescentResult",
    "DivergenceError",
    "LinRegProblem",
    "TraceRow",
    "empirical_kernel",
    "schedule_descent",
    "simulate_empirical",
    "solve_theory",
    "theory_gradient",
]

DIVERGENCE_SENTINEL = 1e30


class DivergenceError(ArithmeticError):
    """A computation that must stay finite diverged."""


@dataclass(frozen=True)
class LinRegProblem:
    """Dimension, batch size, horizon; the spectrum is fixed by D."""

    dim: int
    batch: int
    horizon: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not 1 <= self.batch <= self.dim:
            raise ValueError(f"need 1 <= batch <= dim, got batch={self.batch} dim={self.dim}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")

    @property
    def spectrum(self) -> np.ndarray:
        """lam_k = 2k / (D+1), k = 1..D; strictly increasing, mean exactly 1."""
        return 2.0 * np.arange(1, self.dim + 1) / (self.dim + 1)

    @property
    def beta(self) -> float:
        return self.batch / self.dim

    @property
    def noise_coef(self) -> float:
        """The a-independent factor (1/beta - 1) / D of the noise term."""
        return (1.0 / self.beta - 1.0) / self.dim


def _check_schedule(problem: LinRegProblem, lrs) -> np.ndarray:
    arr = np.ascontiguousarray(lrs, dtype=float)
    if arr.shape != (problem.horizon,):
        raise ValueError(
            f"schedule length {arr.shape} does not match horizon {problem.horizon}"
        )
    return arr


def solve_theory(problem: LinRegProblem, lrs) -> tuple[np.ndarray, bool]:
    """Mean-loss trajectory (T+1 values) under the p-vector recurrence.

    Returns (losses, diverged); on divergence the trajectory is truncated.
    """
    arr = _check_schedule(problem, lrs)
    losses, diverged = _kernels.theory_losses(
        arr, problem.spectrum, problem.noise_coef, DIVERGENCE_SENTINEL
    )
    return losses, bool(diverged)


def empirical_kernel(problem: LinRegProblem, seed) -> np.ndarray:
    """The rotated kernel That = U Lambda U^T for this seed's rotation stream."""
    rot_ss, _, _ = np.random.SeedSequence(seed).spawn(3)
    return _rotated_kernel(problem, np.random.default_rng(rot_ss))

def _rotated_kernel(problem: LinRegProblem, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((problem.dim, problem.dim))
    q, r = np.linalg.qr(z)
    sign = np.sign(np.diag(r))
    sign[sign == 0.0] = 1.0
    q = q * sign
    return (q * problem.spectrum) @ q.T


def simulate_empirical(problem: LinRegProblem, lrs, seed) -> tuple[np.ndarray, bool]:
    """One SGD run; loss_t = ||z_t||^2 / (2D). Returns (losses, diverged).

    ``seed`` may be an int or a tuple of ints; it splits into independent
    rotation / init / batch-sampling streams. Each step samples exactly B
    coordinates without replacement and applies the inverse-probability
    scaled update z <- z - a_t (D/B) That P_t z, so E[step] is the
    full-batch step and B = D recovers plain gradient descent.
    """
    arr = _check_schedule(problem, lrs)
    D, B, T = problem.dim, problem.batch, problem.horizon
    rot_ss, init_ss, samp_ss = np.random.SeedSequence(seed).spawn(3)
    theta = _rotated_kernel(problem, np.random.default_rng(rot_ss))
    z = np.random.default_rng(init_ss).standard_normal(D)
    keys = np.random.default_rng(samp_ss).random((T, D))

    inv = 1.0 / (2.0 * D)
    losses = np.empty(T + 1)
    losses[0] = (z @ z) * inv
    scale = float(D) / B
    for t in range(T):
        if B == D:
            z = z - arr[t] * (theta @ z)
        else:
            idx = np.argpartition(keys[t], B)[:B]
            z = z - (arr[t] * scale) * (theta[:, idx] @ z[idx])
        loss = (z @ z) * inv
        losses[t + 1] = loss
        if not math.isfinite(loss) or loss > DIVERGENCE_SENTINEL:
            return losses[: t + 2], True
    return losses, False


def theory_gradient(problem: LinRegProblem, lrs) -> np.ndarray:
    """Gradient of log(L_T) w.r.t. each of the T per-step learning rates.

    Adjoint recursion through the stored forward states; O(D) per step.
    Raises DivergenceError if the forward pass diverges. By convention the
    gradient is the zero vector when L_T == 0 (the loss is at a fixed point).
    """
    arr = _check_schedule(problem, lrs)
    lam = problem.spectrum
    pvecs, losses, diverged = _kernels.theory_forward_pvecs(
        arr, lam, problem.noise_coef, DIVERGENCE_SENTINEL
    )
    if diverged:
        raise DivergenceError("forward pass diverged; gradient undefined")
    return _kernels.theory_adjoint(arr, lam, problem.noise_coef, pvecs, losses[-1])


# ---------------------------------------------------------------------------
# Schedule descent
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DescentConfig:
    """Knobs for gradient descent in schedule space.

    The descent optimizes log(L_T); whenever the forward loss exceeds
    ``blowup_threshold`` every per-step LR is multiplied by ``shrink_factor``
    instead of taking a gradient step. LRs are clamped at 0 after each step.
    """

    meta_lr: float = 1e-2
    meta_steps: int = 1000
    blowup_threshold: float = 10.0
    shrink_factor: float = 0.3
    init_grid: tuple[float, ...] = ()
    snapshot_every: int = 50

    def __post_init__(self):
        if self.meta_lr <= 0 or self.meta_steps < 1:
            raise ValueError("meta_lr must be > 0 and meta_steps >= 1")
        if self.blowup_threshold <= 0 or not 0 < self.shrink_factor < 1:
            raise ValueError("need blowup_threshold > 0 and 0 < shrink_factor < 1")

    def grid(self) -> np.ndarray:
        if self.init_grid:
            return np.asarray(self.init_grid, dtype=float)
        return base_lr_grid(0.01, 1.0, 16)


@dataclass(frozen=True)
class TraceRow:
    meta_step: int
    loss: float          # forward loss the step decision was based on
    kind: str            # "grad" or "shrink"
    grad_norm_sq: float  # NaN for shrink steps


@dataclass
class DescentResult:
    lrs: np.ndarray
    final_loss: float
    init_loss: float
    init_lr: float
    trace: list[TraceRow] = field(default_factory=list)
    snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)


def _best_constant(problem: LinRegProblem, grid: np.ndarray) -> tuple[float, float]:
    best_lr = math.nan
    best_loss = math.inf
    for lr in grid:
        losses, diverged = solve_theory(problem, np.full(problem.horizon, float(lr)))
        if not diverged and losses[-1] < best_loss:
            best_loss = float(losses[-1])
            best_lr = float(lr)
    if not math.isfinite(best_loss):
        raise DivergenceError("every constant schedule in the init grid diverged")
    return best_lr, best_loss


def schedule_descent(
    problem: LinRegProblem,
    config: DescentConfig = DescentConfig(),
    init_lrs=None,
) -> DescentResult:
    """Optimize the full T-vector of per-step LRs on the theory loss.

    Starts from the best constant schedule on ``config.grid()`` (or from
    ``init_lrs`` when given, e.g. for warm restarts).
    """
    lam = problem.spectrum
    c_coef = problem.noise_coef
    if init_lrs is None:
        init_lr, init_loss = _best_constant(problem, config.grid())
        lrs = np.full(problem.horizon, init_lr)
    else:
        lrs = np.maximum(_check_schedule(problem, init_lrs), 0.0)
        init_lr = math.nan
        losses, diverged = solve_theory(problem, lrs)
        init_loss = math.inf if diverged else float(losses[-1])

    trace: list[TraceRow] = []
    snapshots: list[tuple[int, np.ndarray]] = []
    for step in range(config.meta_steps):
        pvecs, losses, diverged = _kernels.theory_forward_pvecs(
            lrs, lam, c_coef, DIVERGENCE_SENTINEL
        )
        loss = math.inf if diverged else float(losses[-1])
        if step % config.snapshot_every == 0:
            snapshots.append((step, lrs.copy()))
        if diverged or loss > config.blowup_threshold:
            lrs = lrs * config.shrink_factor
            trace.append(TraceRow(step, loss, "shrink", math.nan))
            continue
        grad = _kernels.theory_adjoint(lrs, lam, c_coef, pvecs, losses[-1])
        lrs = np.maximum(lrs - config.meta_lr * grad, 0.0)
        trace.append(TraceRow(step, loss, "grad", float(grad @ grad)))

    final_losses, diverged = solve_theory(problem, lrs)
    final_loss = math.inf if diverged else float(final_losses[-1])
    snapshots.append((config.meta_steps, lrs.copy()))
    return DescentResult(lrs, final_loss, init_loss, init_lr, trace, snapshots)
