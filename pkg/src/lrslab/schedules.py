"""Learning-rate schedule shape families.

Every family is a pure shape function phi: [0, 1] -> [0, 1] parameterized by a
small named vector. A concrete schedule applies a base learning rate on top of
the shape: the LR used at step t of a horizon-T run is

    s(t) = base_lr * phi(t / T),    t in {0, ..., T-1}.

The fraction convention deliberately never evaluates phi(1) during a run, so
families that decay to zero do not spend a step at LR 0.

Families
--------
con      constant 1 after a linear warmup
cos-std  half-cosine decay with a decay-speed multiplier ``alpha``
cos-gen  cos-std raised to a tunable ``power``
sqrt     sqrt(1 - alpha * g) decay
rex      reflected-exponential-style rational decay, phi = z / (beta + (1-beta) z)
tps      shape-preserving cubic spline through two control points, decays to 0
tpl      piecewise-linear version of tps
snm      smooth non-monotonic: general 5-knot spline with a tunable peak
cos-y    cos-std (alpha pinned to 1) decaying to a tunable final value
tps-y    tps decaying to a tunable final value

All families except snm share the linear-warmup contract: phi(f) = f / w for
f < w, phi(w) = 1 (for tps/tpl/tps-y the first control abscissa x0 plays the
role of w). snm has no warmup segment; its knots may rise or fall freely.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

__all__ = [
    "FAMILIES",
    "FitResult",
    "ParamSpec",
    "SEARCH_SPACE",
    "ScheduleSpec",
    "ShapeError",
    "ShapeParams",
    "base_lr_grid",
    "eval_shape",
    "fit_family_to_target",
    "make_shape",
    "multipliers",
    "sample_shape",
    "schedule_lrs",
    "shape_from_dict",
    "shape_from_json",
    "shape_to_dict",
    "shape_to_json",
    "spec_from_dict",
    "spec_to_dict",
    "validate_shape",
]

# Minimum horizontal gap enforced between spline knots.
_KNOT_GAP = 1e-6


class ShapeError(ValueError):
    """Invalid shape family, parameter vector, or evaluation input."""


@dataclass(frozen=True)
class ParamSpec:
    """One named parameter: sampling range, sampling law, validation range."""

    name: str
    lo: float
    hi: float
    log: bool = False
    # Validation bounds when wider than the sampling range (rex beta admits 0).
    valid_lo: float | None = None
    # Exclusive upper validation bound (snm ordinates must stay below the peak).
    open_hi: bool = False

    @property
    def vlo(self) -> float:
        return self.lo if self.valid_lo is None else self.valid_lo

    @property
    def vhi(self) -> float:
        return self.hi

    def contains(self, v: float) -> bool:
        if not math.isfinite(v):
            return False
        if self.open_hi and v >= self.hi:
            return False
        return self.vlo <= v <= self.vhi

    def clip(self, v: float) -> float:
        """Clamp into the validation range (used by the fitter)."""
        hi = float(np.nextafter(self.hi, -np.inf)) if self.open_hi else self.hi
        return float(min(max(v, self.vlo), hi))


_WARMUP = ParamSpec("warmup", 0.0, 0.25)
_ALPHA = ParamSpec("alpha", 0.0, 2.0)
_TWO_POINT = (
    ParamSpec("x0", 0.01, 0.25),
    ParamSpec("y1", 0.1, 1.0),
    ParamSpec("delta_x1", 0.0, 1.0),
    ParamSpec("delta_x2", 0.0, 1.0),
    ParamSpec("delta_y2", 0.0, 1.0),
)
_Y_FINAL = ParamSpec("y_final", 0.0, 1.0)

SEARCH_SPACE: dict[str, tuple[ParamSpec, ...]] = {
    "con": (_WARMUP,),
    "cos-std": (_WARMUP, _ALPHA),
    "cos-gen": (_WARMUP, _ALPHA, ParamSpec("power", 0.1, 10.0, log=True)),
    "sqrt": (_WARMUP, _ALPHA),
    "rex": (_WARMUP, ParamSpec("beta", 1e-8, 32.0, log=True, valid_lo=0.0)),
    "tps": _TWO_POINT,
    "tpl": _TWO_POINT,
    "snm": (
        ParamSpec("y_start", 0.0, 1.0, open_hi=True),
        ParamSpec("y_end", 0.0, 1.0, open_hi=True),
        ParamSpec("x_peak", 0.0, 1.0),
        ParamSpec("y1", 0.0, 1.0, open_hi=True),
        ParamSpec("delta_x1", 0.0, 1.0),
        ParamSpec("y2", 0.0, 1.0, open_hi=True),
        ParamSpec("delta_x2", 0.0, 1.0),
    ),
    "cos-y": (_WARMUP, _Y_FINAL),
    "tps-y": _TWO_POINT + (_Y_FINAL,),
}

FAMILIES: tuple[str, ...] = tuple(SEARCH_SPACE)


@dataclass(frozen=True)
class ShapeParams:
    """A family identifier plus its ordered parameter values."""

    family: str
    values: tuple[float, ...]

    def __getitem__(self, name: str) -> float:
        for spec, v in zip(SEARCH_SPACE[self.family], self.values):
            if spec.name == name:
                return v
        raise KeyError(name)

    def replace(self, name: str, value: float) -> "ShapeParams":
        specs = SEARCH_SPACE[self.family]
        vals = list(self.values)
        for i, spec in enumerate(specs):
            if spec.name == name:
                vals[i] = float(value)
                return ShapeParams(self.family, tuple(vals))
        raise KeyError(name)

    def as_dict(self) -> dict[str, float]:
        return {s.name: v for s, v in zip(SEARCH_SPACE[self.family], self.values)}


def make_shape(family: str, **params: float) -> ShapeParams:
    """Build and validate a ShapeParams from named parameters."""
    specs = SEARCH_SPACE.get(family)
    if specs is None:
        raise ShapeError(f"unknown schedule family {family!r}")
    names = [s.name for s in specs]
    missing = [n for n in names if n not in params]
    if missing:
        raise ShapeError(f"{family}: missing parameter {missing[0]!r}")
    extra = [k for k in params if k not in names]
    if extra:
        raise ShapeError(f"{family}: unexpected parameter {extra[0]!r}")
    values = []
    for n in names:
        try:
            values.append(float(params[n]))
        except (TypeError, ValueError):
            raise ShapeError(
                f"{family}: parameter {n!r} must be a number, got {params[n]!r}"
            ) from None
    shape = ShapeParams(family, tuple(values))
    validate_shape(shape)
    return shape


def validate_shape(shape: ShapeParams) -> None:
    """Raise ShapeError naming the offending parameter, or return None."""
    specs = SEARCH_SPACE.get(shape.family)
    if specs is None:
        raise ShapeError(f"unknown schedule family {shape.family!r}")
    if len(shape.values) != len(specs):
        raise ShapeError(
            f"{shape.family}: expected {len(specs)} parameters "
            f"({', '.join(s.name for s in specs)}), got {len(shape.values)}"
        )
    for spec, v in zip(specs, shape.values):
        if not spec.contains(float(v)):
            hi_br = ")" if spec.open_hi else "]"
            raise ShapeError(
                f"{shape.family}: parameter {spec.name!r}={v!r} outside "
                f"[{spec.vlo!r}, {spec.vhi!r}{hi_br}"
            )


# ---------------------------------------------------------------------------
# Shape evaluation
# ---------------------------------------------------------------------------


def _warmup_then(f: np.ndarray, w: float, decay) -> np.ndarray:
    """Linear warmup from 0 over [0, w), then decay(g) with g = (f-w)/(1-w)."""
    out = np.empty_like(f)
    rising = f < w
    if rising.any():
        out[rising] = f[rising] / w
    rest = ~rising
    if rest.any():
        g = (f[rest] - w) / (1.0 - w) if w > 0.0 else f[rest]
        out[rest] = decay(g)
    return out


def _cos_core(g: np.ndarray, alpha: float) -> np.ndarray:
    return 0.5 * (np.cos(np.pi * np.minimum(alpha * g, 1.0)) + 1.0)


def _phi_con(vals, f):
    (w,) = vals
    return _warmup_then(f, w, lambda g: np.ones_like(g))


def _phi_cos_std(vals, f):
    w, alpha = vals
    return _warmup_then(f, w, lambda g: _cos_core(g, alpha))


def _phi_cos_gen(vals, f):
    w, alpha, power = vals
    return _warmup_then(f, w, lambda g: _cos_core(g, alpha) ** power)


def _phi_sqrt(vals, f):
    w, alpha = vals
    return _warmup_then(f, w, lambda g: np.sqrt(np.maximum(1.0 - alpha * g, 0.0)))


def _phi_rex(vals, f):
    w, beta = vals
    if beta == 0.0:
        # Degenerate member: the rational form collapses to the constant 1.
        return _warmup_then(f, w, lambda g: np.ones_like(g))

    def decay(g):
        z = 1.0 - g
        return z / (beta + (1.0 - beta) * z)

    return _warmup_then(f, w, decay)


def _two_point_knots(vals) -> tuple[np.ndarray, np.ndarray]:
    x0, y1, dx1, dx2, dy2 = vals
    x1 = x0 + dx1 * (1.0 - x0)
    x2 = x1 + dx2 * (1.0 - x1)
    y2 = y1 * (1.0 - dy2)
    xs = [x0]
    ys = [1.0]
    for x, y in ((x1, y1), (x2, y2)):
        x = max(x, xs[-1] + _KNOT_GAP)
        if x > 1.0 - _KNOT_GAP:
            # Cannot fit strictly below the terminal knot: drop the control point.
            continue
        xs.append(x)
        ys.append(y)
    xs.append(1.0)
    ys.append(0.0)
    return np.asarray(xs), np.asarray(ys)


def _two_point_eval(vals, f, linear: bool, y_final: float = 0.0) -> np.ndarray:
    x0 = vals[0]
    xs, ys = _two_point_knots(vals[:5])

    def decay_abs(fa):
        if linear:
            base = np.interp(fa, xs, ys)
        else:
            base = PchipInterpolator(xs, ys)(fa)
        if y_final != 0.0:
            base = y_final + (1.0 - y_final) * base
        return np.clip(base, 0.0, 1.0)

    out = np.empty_like(f)
    rising = f < x0
    if rising.any():
        out[rising] = f[rising] / x0
    rest = ~rising
    if rest.any():
        out[rest] = decay_abs(f[rest])
    return out


def _phi_tps(vals, f):
    return _two_point_eval(vals, f, linear=False)


def _phi_tpl(vals, f):
    return _two_point_eval(vals, f, linear=True)


def _phi_tps_y(vals, f):
    return _two_point_eval(vals[:5], f, linear=False, y_final=vals[5])


def _snm_knots(vals) -> tuple[np.ndarray, np.ndarray]:
    y_start, y_end, x_peak, y1, dx1, y2, dx2 = vals
    xa = dx1
    xb = xa + dx2 * (1.0 - xa)
    knots = [
        (0.0, y_start, 0),
        (xa, y1, 0),
        (xb, y2, 0),
        (x_peak, 1.0, 1),
        (1.0, y_end, 0),
    ]
    # Peak first on exact abscissa ties so it is never the knot that gets nudged.
    knots.sort(key=lambda k: (k[0], -k[2]))
    xs: list[float] = []
    ys: list[float] = []
    for x, y, _ in knots:
        if xs and x < xs[-1] + _KNOT_GAP:
            x = xs[-1] + _KNOT_GAP
        xs.append(x)
        ys.append(y)
    return np.asarray(xs), np.asarray(ys)


def _phi_snm(vals, f):
    xs, ys = _snm_knots(vals)
    # Trailing nudges may push the last knot marginally past 1; clamp f into
    # the knot span so phi stays defined on all of [0, 1].
    fa = np.clip(f, xs[0], xs[-1])
    return np.clip(PchipInterpolator(xs, ys)(fa), 0.0, 1.0)


def _phi_cos_y(vals, f):
    w, y_final = vals
    return _warmup_then(f, w, lambda g: y_final + (1.0 - y_final) * _cos_core(g, 1.0))


_EVALS = {
    "con": _phi_con,
    "cos-std": _phi_cos_std,
    "cos-gen": _phi_cos_gen,
    "sqrt": _phi_sqrt,
    "rex": _phi_rex,
    "tps": _phi_tps,
    "tpl": _phi_tpl,
    "snm": _phi_snm,
    "cos-y": _phi_cos_y,
    "tps-y": _phi_tps_y,
}


def eval_shape(shape: ShapeParams, f):
    """Evaluate phi at fraction(s) f in [0, 1]. Scalar in, scalar out."""
    validate_shape(shape)
    f_arr = np.asarray(f, dtype=float)
    if f_arr.size and (float(f_arr.min()) < 0.0 or float(f_arr.max()) > 1.0):
        raise ShapeError(f"fraction outside [0, 1]: {f!r}")
    out = _EVALS[shape.family](shape.values, np.atleast_1d(f_arr).astype(float))
    if f_arr.ndim == 0:
        return float(out[0])
    return out


def multipliers(shape: ShapeParams, horizon: int) -> np.ndarray:
    """Per-step shape multipliers phi(t/T) for t in {0, ..., T-1}."""
    if horizon < 1:
        raise ShapeError(f"horizon must be >= 1, got {horizon}")
    return eval_shape(shape, np.arange(horizon) / horizon)


@dataclass(frozen=True)
class ScheduleSpec:
    """A shape plus base LR and horizon; evaluable at any step."""

    shape: ShapeParams
    base_lr: float
    horizon: int

    def __post_init__(self):
        validate_shape(self.shape)
        if not (math.isfinite(self.base_lr) and self.base_lr > 0):
            raise ShapeError(f"base_lr must be positive, got {self.base_lr!r}")
        if int(self.horizon) < 1 or self.horizon != int(self.horizon):
            raise ShapeError(f"horizon must be a positive integer, got {self.horizon!r}")

    def lr_at(self, t: int) -> float:
        if not 0 <= t < self.horizon:
            raise ShapeError(f"step {t} outside horizon {self.horizon}")
        return self.base_lr * eval_shape(self.shape, t / self.horizon)


def schedule_lrs(spec: ScheduleSpec) -> np.ndarray:
    """The full per-step absolute LR vector of a schedule."""
    return spec.base_lr * multipliers(spec.shape, spec.horizon)


# ---------------------------------------------------------------------------
# Sampling and grids
# ---------------------------------------------------------------------------


def sample_shape(family: str, rng) -> ShapeParams:
    """Draw one parameter vector from the family's search distribution.

    ``rng`` is an integer seed or a numpy Generator. Identical seeds give
    bit-identical samples.
    """
    specs = SEARCH_SPACE.get(family)
    if specs is None:
        raise ShapeError(f"unknown schedule family {family!r}")
    gen = np.random.default_rng(rng)
    vals = []
    for spec in specs:
        if spec.log:
            v = math.exp(gen.uniform(math.log(spec.lo), math.log(spec.hi)))
            v = min(max(v, spec.lo), spec.hi)
        else:
            v = gen.uniform(spec.lo, spec.hi)
        vals.append(float(v))
    return ShapeParams(family, tuple(vals))


def base_lr_grid(lo: float, hi: float, n: int) -> np.ndarray:
    """n geometrically spaced values with exact endpoints lo and hi."""
    if not (0 < lo < hi):
        raise ValueError(f"need 0 < lo < hi, got lo={lo!r} hi={hi!r}")
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    grid = np.geomspace(lo, hi, int(n))
    grid[0] = lo
    grid[-1] = hi
    return grid


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def shape_to_dict(shape: ShapeParams) -> dict:
    validate_shape(shape)
    return {"family": shape.family, "params": shape.as_dict()}


def shape_from_dict(d: dict) -> ShapeParams:
    try:
        family = d["family"]
        params = d["params"]
    except (KeyError, TypeError) as e:
        raise ShapeError(f"shape object must have 'family' and 'params': {d!r}") from e
    return make_shape(family, **params)


def shape_to_json(shape: ShapeParams) -> str:
    return json.dumps(shape_to_dict(shape))


def shape_from_json(s: str) -> ShapeParams:
    return shape_from_dict(json.loads(s))


def spec_to_dict(spec: ScheduleSpec) -> dict:
    d = shape_to_dict(spec.shape)
    d["base_lr"] = float(spec.base_lr)
    d["horizon"] = int(spec.horizon)
    return d


def spec_from_dict(d: dict) -> ScheduleSpec:
    shape = shape_from_dict(d)
    try:
        base_lr = d["base_lr"]
        horizon = d["horizon"]
    except (KeyError, TypeError) as e:
        raise ShapeError(f"schedule object must have 'base_lr' and 'horizon': {d!r}") from e
    return ScheduleSpec(shape, float(base_lr), int(horizon))


# ---------------------------------------------------------------------------
# Fitting a family to a target schedule
# ---------------------------------------------------------------------------


@dataclass
class FitResult:
    shape: ShapeParams
    mse: float
    converged: bool
    n_evals: int


def fit_family_to_target(
    family: str,
    target,
    *,
    seed: int = 0,
    n_random: int = 1000,
    n_restarts: int = 4,
    max_evals: int = 60000,
    step_tol: float = 1e-7,
) -> FitResult:
    """Fit a family member to a target multiplier curve by MSE.

    Initializes from the best of ``n_random`` random samples (so the reported
    MSE never exceeds that baseline), then runs discrete coordinate descent:
    small moves in one parameter at a time, step sizes halved after every
    sweep that yields no improvement. Log-sampled parameters move in log
    space. Returns the best shape found; ``converged`` is False when the
    evaluation budget ran out before the steps shrank below ``step_tol``.
    """
    specs = SEARCH_SPACE.get(family)
    if specs is None:
        raise ShapeError(f"unknown schedule family {family!r}")
    target = np.asarray(target, dtype=float)
    if target.ndim != 1 or target.size < 2:
        raise ShapeError("target must be a 1-d curve with at least 2 points")
    if float(target.min()) < 0.0 or float(target.max()) > 1.0:
        raise ShapeError("target values must lie in [0, 1]")
    fracs = np.arange(target.size) / target.size

    n_evals = 0

    def mse_of(vals: tuple[float, ...]) -> float:
        nonlocal n_evals
        n_evals += 1
        cur = _EVALS[family](vals, fracs)
        diff = cur - target
        return float(diff @ diff) / target.size

    rng = np.random.default_rng(seed)
    cands = [sample_shape(family, rng) for _ in range(n_random)]
    errs = np.array([mse_of(c.values) for c in cands])
    order = np.argsort(errs, kind="stable")

    best_vals = cands[order[0]].values
    best_err = float(errs[order[0]])
    converged = True

    for start_idx in order[: max(1, n_restarts)]:
        vals = list(cands[start_idx].values)
        err = float(errs[start_idx])
        # Initial step: a quarter of each coordinate's range (log range for
        # log-sampled coordinates).
        steps = [
            0.25 * (math.log(s.hi) - math.log(s.lo)) if s.log else 0.25 * (s.hi - s.vlo)
            for s in specs
        ]
        scale = 1.0
        while scale > step_tol and n_evals < max_evals:
            improved = False
            for i, spec in enumerate(specs):
                for sign in (1.0, -1.0):
                    if spec.log:
                        cand = math.exp(math.log(max(vals[i], spec.lo)) + sign * steps[i] * scale)
                    else:
                        cand = vals[i] + sign * steps[i] * scale
                    cand = spec.clip(cand)
                    if cand == vals[i]:
                        continue
                    trial = list(vals)
                    trial[i] = cand
                    e = mse_of(tuple(trial))
                    if e < err:
                        vals, err = trial, e
                        improved = True
                        break
            if not improved:
                scale *= 0.5
        if n_evals >= max_evals and scale > step_tol:
            converged = False
        if err < best_err:
            best_err = err
            best_vals = tuple(vals)

    return FitResult(ShapeParams(family, tuple(best_vals)), best_err, converged, n_evals)
