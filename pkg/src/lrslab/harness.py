"""Two-stage random-search protocol and the analyses built on top of it.

The protocol decouples shape search from base-LR search:

* search step: sample ``n_shapes`` parameter vectors, score every one on a
  log-spaced base-LR grid with ``k_search`` seeds, keep each shape's best
  (lowest median) LR, and rank shapes by that score.
* evaluation step: re-score the top-k shapes at their best LR on the full
  ``n_init x n_order`` seed grid, attach DKW median bands, re-rank.

Everything is driven by one master seed. Seed streams are derived with
counter-based spawn keys (stream tag, index), so adding parallelism or
changing worker counts never reorders randomness. Work units are
(shape, lr, seed) triples keyed by a canonical id; results are reduced in
sorted id order, which makes N-worker runs byte-identical to serial runs.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import stats
from .linreg import LinRegProblem, simulate_empirical, solve_theory, DIVERGENCE_SENTINEL
from . import _kernels
from .schedules import (
    SEARCH_SPACE,
    ScheduleSpec,
    ShapeError,
    ShapeParams,
    base_lr_grid,
    multipliers,
    sample_shape,
    shape_from_dict,
    shape_to_dict,
    validate_shape,
)
from .stats import DkwBand, dkw_median_band
from .toy import OptimizerConfig, RunRecord, RunSeed, ToyWorkload, run_training

__all__ = [
    "Condition",
    "EmpiricalObjective",
    "LinesearchPoint",
    "NoiseResult",
    "SearchConfig",
    "SearchReport",
    "ShapeEntry",
    "TheoryObjective",
    "ToyObjective",
    "XCondCell",
    "XCondResult",
    "coordinate_linesearch",
    "cross_condition_matrix",
    "derive_seed_pair",
    "evaluation_step",
    "noise_characterization",
    "pick_best_lrs",
    "sample_search_shapes",
    "score",
    "search_step",
]

# Stream tags for master-seed derivation. Fixed forever; adding a stream means
# adding a new tag, never renumbering.
_TAG_SHAPES = 0
_TAG_SEARCH = 1
_TAG_EVAL_INIT = 2
_TAG_EVAL_ORDER = 3
_TAG_NOISE_A = 4
_TAG_NOISE_B = 5
_TAG_LR_PICK = 6


def derive_seed_pair(master_seed: int, tag: int, index: int) -> tuple[int, int]:
    """Two independent uint64 seeds for stream (tag, index) of a master seed."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(tag, index))
    a, b = ss.generate_state(2, dtype=np.uint64)
    return int(a), int(b)


def _derive_one(master_seed: int, tag: int, index: int) -> int:
    return derive_seed_pair(master_seed, tag, index)[0]


def _shape_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(_TAG_SHAPES, index)))


def sample_search_shapes(family: str, n_shapes: int, master_seed: int) -> list[ShapeParams]:
    """The protocol's shape sample: one independent stream per shape index."""
    return [sample_shape(family, _shape_rng(master_seed, i)) for i in range(n_shapes)]


def _eval_pairs(master_seed: int, n_init: int, n_order: int) -> list[tuple[int, int]]:
    """The pairwise init x order evaluation seed grid (shared across shapes)."""
    inits = [_derive_one(master_seed, _TAG_EVAL_INIT, i) for i in range(n_init)]
    orders = [_derive_one(master_seed, _TAG_EVAL_ORDER, j) for j in range(n_order)]
    return [(i, j) for i in inits for j in orders]


def _search_pairs(master_seed: int, k_search: int) -> list[tuple[int, int]]:
    return [derive_seed_pair(master_seed, _TAG_SEARCH, s) for s in range(k_search)]


# ---------------------------------------------------------------------------
# Workload objectives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TheoryObjective:
    """Deterministic mean-loss objective on the linreg recurrence."""

    problem: LinRegProblem

    deterministic = True

    @property
    def horizon(self) -> int:
        return self.problem.horizon

    def run_score(self, shape: ShapeParams, base_lr: float, seed=None) -> float:
        lrs = base_lr * multipliers(shape, self.horizon)
        losses, diverged = solve_theory(self.problem, lrs)
        return math.inf if diverged else float(losses.min())

    def run_record(self, shape, base_lr, seed=None, run_id="", condition=None) -> RunRecord:
        s = self.run_score(shape, base_lr)
        pair = seed or (0, 0)
        return _plain_record(run_id, shape, base_lr, pair, condition, s)

    def score_grid(self, shapes: list[ShapeParams], grid: np.ndarray) -> np.ndarray:
        """Min-over-steps theory loss for every (shape, base LR) pair."""
        mults = np.stack([multipliers(s, self.horizon) for s in shapes])
        return _kernels.theory_min_scores(
            np.ascontiguousarray(mults),
            np.ascontiguousarray(grid, dtype=float),
            self.problem.spectrum,
            self.problem.noise_coef,
            DIVERGENCE_SENTINEL,
        )


@dataclass(frozen=True)
class EmpiricalObjective:
    """Stochastic linreg SGD objective; seeds are (init, order)-style pairs."""

    problem: LinRegProblem

    deterministic = False

    @property
    def horizon(self) -> int:
        return self.problem.horizon

    def run_score(self, shape: ShapeParams, base_lr: float, seed) -> float:
        lrs = base_lr * multipliers(shape, self.horizon)
        losses, diverged = simulate_empirical(self.problem, lrs, seed)
        return math.inf if diverged else float(losses.min())

    def run_record(self, shape, base_lr, seed, run_id="", condition=None) -> RunRecord:
        s = self.run_score(shape, base_lr, seed)
        return _plain_record(run_id, shape, base_lr, seed, condition, s)


@dataclass(frozen=True)
class ToyObjective:
    """MLP training objective; metric is min train loss or min train error."""

    workload: ToyWorkload
    optimizer: OptimizerConfig = OptimizerConfig()
    metric: str = "loss"

    deterministic = False

    def __post_init__(self):
        if self.metric not in ("loss", "error"):
            raise ValueError(f"metric must be 'loss' or 'error', got {self.metric!r}")

    @property
    def horizon(self) -> int:
        return self.workload.horizon

    def run_record(self, shape, base_lr, seed, run_id="", condition=None) -> RunRecord:
        spec = ScheduleSpec(shape, float(base_lr), self.workload.horizon)
        return run_training(
            self.workload,
            spec,
            self.optimizer,
            RunSeed(int(seed[0]), int(seed[1])),
            run_id=run_id,
            condition=condition,
        )

    def run_score(self, shape, base_lr, seed) -> float:
        rec = self.run_record(shape, base_lr, seed)
        if self.metric == "error":
            return math.inf if rec.diverged else float(rec.min_error)
        return rec.score


def _plain_record(run_id, shape, base_lr, pair, condition, score_value) -> RunRecord:
    return RunRecord(
        run_id=run_id,
        family=shape.family,
        shape_params=shape_to_dict(shape)["params"],
        base_lr=float(base_lr),
        init_seed=int(pair[0]),
        data_order_seed=int(pair[1]),
        condition=condition,
        score=score_value,
        final_loss=score_value,
        min_error=None,
        final_error=None,
        diverged=math.isinf(score_value),
        n_steps=0,
    )


# ---------------------------------------------------------------------------
# Parallel unit execution (canonical-id reduction => thread-count invariant)
# ---------------------------------------------------------------------------


def _score_chunk(payload):
    objective, chunk = payload
    return [(uid, objective.run_score(shape, lr, pair)) for uid, shape, lr, pair in chunk]


def _record_chunk(payload):
    objective, chunk = payload
    return [
        (uid, objective.run_record(shape, lr, pair, run_id=rid, condition=cond))
        for uid, shape, lr, pair, rid, cond in chunk
    ]


def _run_chunked(worker, objective, units, threads):
    if threads <= 1 or len(units) <= 1:
        return dict(r for r in worker((objective, units)))
    n_chunks = max(1, min(len(units), threads * 4))
    chunks = [units[c::n_chunks] for c in range(n_chunks)]
    results = {}
    with ProcessPoolExecutor(max_workers=threads) as pool:
        for part in pool.map(worker, [(objective, c) for c in chunks]):
            for uid, value in part:
                results[uid] = value
    return results


def _score_units(objective, units, threads):
    """units: (uid, shape, lr, seed_pair) -> {uid: score}."""
    return _run_chunked(_score_chunk, objective, units, threads)


def _record_units(objective, units, threads):
    """units: (uid, shape, lr, seed_pair, run_id, condition) -> {uid: RunRecord}."""
    return _run_chunked(_record_chunk, objective, units, threads)


def _grid_medians(objective, shapes, grid, seed_pairs, threads=1) -> np.ndarray:
    """Median score over seeds for every (shape, grid LR) pair."""
    if getattr(objective, "deterministic", False) and hasattr(objective, "score_grid"):
        return objective.score_grid(list(shapes), np.asarray(grid, dtype=float))
    units = [
        ((i, j, s), shape, float(lr), pair)
        for i, shape in enumerate(shapes)
        for j, lr in enumerate(grid)
        for s, pair in enumerate(seed_pairs)
    ]
    scores = _score_units(objective, units, threads)
    med = np.empty((len(shapes), len(grid)))
    k = len(seed_pairs)
    for i in range(len(shapes)):
        for j in range(len(grid)):
            med[i, j] = stats.median([scores[(i, j, s)] for s in range(k)])
    return med


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchConfig:
    """Protocol sizes. Defaults mirror the larger (image-workload) protocol;
    the smaller protocol is 600 shapes / 5 search seeds / top-50."""

    family: str
    n_shapes: int = 3600
    k_search: int = 10
    top_k: int = 100
    n_init: int = 10
    n_order: int = 10
    grid_lo: float = 1e-4
    grid_hi: float = 1e-1
    grid_n: int = 16
    eval_delta: float = 0.05

    def grid(self) -> np.ndarray:
        return base_lr_grid(self.grid_lo, self.grid_hi, self.grid_n)


@dataclass
class ShapeEntry:
    shape_id: int
    shape: ShapeParams
    best_lr: float
    lr_index: int
    lr_at_edge: bool
    search_median: float
    lr_medians: tuple[float, ...] = ()
    eval_median: float | None = None
    band: DkwBand | None = None
    n_eval_runs: int = 0

    def to_dict(self) -> dict:
        d = {
            "shape_id": self.shape_id,
            "shape": shape_to_dict(self.shape),
            "best_lr": self.best_lr,
            "lr_index": self.lr_index,
            "lr_at_edge": self.lr_at_edge,
            "search_median": self.search_median,
            "lr_medians": list(self.lr_medians),
            "eval_median": self.eval_median,
            "band": None if self.band is None else asdict(self.band),
            "n_eval_runs": self.n_eval_runs,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ShapeEntry":
        band = d.get("band")
        return cls(
            shape_id=int(d["shape_id"]),
            shape=shape_from_dict(d["shape"]),
            best_lr=float(d["best_lr"]),
            lr_index=int(d["lr_index"]),
            lr_at_edge=bool(d["lr_at_edge"]),
            search_median=float(d["search_median"]),
            lr_medians=tuple(float(x) for x in d.get("lr_medians", [])),
            eval_median=d.get("eval_median"),
            band=None if band is None else DkwBand(**band),
            n_eval_runs=int(d.get("n_eval_runs", 0)),
        )


@dataclass
class SearchReport:
    family: str
    config: SearchConfig
    master_seed: int
    phase: str  # "search" or "evaluation"
    entries: list[ShapeEntry] = field(default_factory=list)

    def ranking_scores(self) -> list[float]:
        if self.phase == "evaluation":
            return [e.eval_median for e in self.entries]
        return [e.search_median for e in self.entries]

    def ecdf_points(self) -> list[tuple[float, float]]:
        """ECDF of per-shape best scores (the family sample-efficiency curve)."""
        return stats.ecdf([e.search_median for e in self.entries])

    def best_lr_histogram(self) -> list[tuple[float, int]]:
        grid = self.config.grid()
        counts = [0] * len(grid)
        for e in self.entries:
            counts[e.lr_index] += 1
        return [(float(lr), c) for lr, c in zip(grid, counts)]

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "config": asdict(self.config),
            "master_seed": self.master_seed,
            "phase": self.phase,
            "entries": [e.to_dict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchReport":
        return cls(
            family=d["family"],
            config=SearchConfig(**d["config"]),
            master_seed=int(d["master_seed"]),
            phase=d["phase"],
            entries=[ShapeEntry.from_dict(e) for e in d["entries"]],
        )


# ---------------------------------------------------------------------------
# Protocol operations
# ---------------------------------------------------------------------------


def score(shape: ShapeParams, base_lr: float, objective, seeds) -> float:
    """Median over seeds of each run's min-over-steps loss."""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    return stats.median([objective.run_score(shape, base_lr, s) for s in seeds])


def search_step(objective, config: SearchConfig, master_seed: int, threads: int = 1) -> SearchReport:
    """Phase one: rank n_shapes random shapes by their best-grid-LR median."""
    shapes = sample_search_shapes(config.family, config.n_shapes, master_seed)
    grid = config.grid()
    if objective.deterministic:
        seed_pairs = [(0, 0)]
    else:
        seed_pairs = _search_pairs(master_seed, config.k_search)
    med = _grid_medians(objective, shapes, grid, seed_pairs, threads)
    entries = []
    for i, shape in enumerate(shapes):
        j = int(np.argmin(med[i]))
        entries.append(
            ShapeEntry(
                shape_id=i,
                shape=shape,
                best_lr=float(grid[j]),
                lr_index=j,
                lr_at_edge=j in (0, len(grid) - 1),
                search_median=float(med[i, j]),
                lr_medians=tuple(float(x) for x in med[i]),
            )
        )
    entries.sort(key=lambda e: (e.search_median, e.shape_id))
    return SearchReport(config.family, config, master_seed, "search", entries)


def evaluation_step(
    report: SearchReport,
    objective,
    threads: int = 1,
    collect_records: bool = True,
) -> tuple[SearchReport, list[RunRecord]]:
    """Phase two: re-score the top-k at their best LR on the full seed grid."""
    cfg = report.config
    if len(report.entries) < cfg.top_k:
        raise ValueError(
            f"report has {len(report.entries)} entries, need top_k={cfg.top_k}"
        )
    top = report.entries[: cfg.top_k]
    if objective.deterministic:
        pairs = [(0, 0)]
    else:
        pairs = _eval_pairs(report.master_seed, cfg.n_init, cfg.n_order)

    units = []
    for e in top:
        for s, pair in enumerate(pairs):
            rid = f"{report.family}/{e.shape_id:05d}/lr{e.lr_index:02d}/e{s:03d}"
            units.append(((e.shape_id, s), e.shape, e.best_lr, pair, rid, None))
    recs = _record_units(objective, units, threads)

    records: list[RunRecord] = []
    new_entries = []
    for e in top:
        shape_scores = []
        for s in range(len(pairs)):
            rec = recs[(e.shape_id, s)]
            records.append(rec)
            if getattr(objective, "metric", "loss") == "error":
                shape_scores.append(math.inf if rec.diverged else float(rec.min_error))
            else:
                shape_scores.append(rec.score)
        med = stats.median(shape_scores)
        if len(shape_scores) >= 2:
            band = dkw_median_band(shape_scores, cfg.eval_delta)
        else:
            band = DkwBand(cfg.eval_delta, 0.0, med, med, False)
        new_entries.append(
            replace(
                e,
                eval_median=med,
                band=band,
                n_eval_runs=len(shape_scores),
            )
        )
    new_entries.sort(key=lambda e: (e.eval_median, e.shape_id))
    new_report = SearchReport(report.family, cfg, report.master_seed, "evaluation", new_entries)
    if not collect_records:
        records = []
    return new_report, records


def pick_best_lrs(
    objective, shapes, grid, master_seed: int, k_seeds: int = 1, threads: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Best grid LR per shape (by median over k_seeds); returns (lrs, indices)."""
    grid = np.asarray(grid, dtype=float)
    if objective.deterministic:
        pairs = [(0, 0)]
    else:
        pairs = [derive_seed_pair(master_seed, _TAG_LR_PICK, s) for s in range(k_seeds)]
    med = _grid_medians(objective, list(shapes), grid, pairs, threads)
    idx = np.argmin(med, axis=1)
    return grid[idx], idx


# ---------------------------------------------------------------------------
# Coordinate-wise linesearch
# ---------------------------------------------------------------------------


@dataclass
class LinesearchPoint:
    param: str
    value: float
    is_original: bool
    best_lr: float
    median: float
    band: DkwBand


def coordinate_linesearch(
    objective,
    shape: ShapeParams,
    config: SearchConfig,
    master_seed: int,
    threads: int = 1,
    n_points: int = 9,
    sweep_values: dict[str, list[float]] | None = None,
) -> list[LinesearchPoint]:
    """Vary one shape parameter at a time, re-optimizing the base LR each time.

    Each parameter sweeps a grid over its search range (log-spaced for
    log-sampled parameters) that always includes the original value; every
    point re-optimizes the base LR on the config grid using the search seeds,
    then scores with the full evaluation seed grid. Explicit ``sweep_values``
    outside a parameter's range are rejected.
    """
    validate_shape(shape)
    specs = SEARCH_SPACE[shape.family]
    grid = config.grid()
    if objective.deterministic:
        search_pairs = [(0, 0)]
        eval_pairs = [(0, 0)]
    else:
        search_pairs = _search_pairs(master_seed, config.k_search)
        eval_pairs = _eval_pairs(master_seed, config.n_init, config.n_order)

    points: list[LinesearchPoint] = []
    for pi, pspec in enumerate(specs):
        if sweep_values is not None and pspec.name in sweep_values:
            vals = [float(v) for v in sweep_values[pspec.name]]
            for v in vals:
                if not pspec.contains(v):
                    raise ShapeError(
                        f"{shape.family}: sweep value {v!r} for {pspec.name!r} "
                        f"outside [{pspec.vlo!r}, {pspec.vhi!r}]"
                    )
        elif pspec.log:
            vals = [pspec.clip(v) for v in np.geomspace(pspec.lo, pspec.hi, n_points)]
        else:
            vals = [pspec.clip(v) for v in np.linspace(pspec.lo, pspec.hi, n_points)]
        orig = float(shape.values[pi])
        vals = sorted(set(vals) | {orig})

        candidates = []
        for v in vals:
            trial = list(shape.values)
            trial[pi] = v
            candidates.append(ShapeParams(shape.family, tuple(trial)))
        med = _grid_medians(objective, candidates, grid, search_pairs, threads)
        best_idx = np.argmin(med, axis=1)

        units = [
            ((ci, s), cand, float(grid[best_idx[ci]]), pair)
            for ci, cand in enumerate(candidates)
            for s, pair in enumerate(eval_pairs)
        ]
        scores = _score_units(objective, units, threads)
        for ci, (v, cand) in enumerate(zip(vals, candidates)):
            vals_ci = [scores[(ci, s)] for s in range(len(eval_pairs))]
            m = stats.median(vals_ci)
            if len(vals_ci) >= 2:
                band = dkw_median_band(vals_ci, config.eval_delta)
            else:
                band = DkwBand(config.eval_delta, 0.0, m, m, False)
            points.append(
                LinesearchPoint(
                    param=pspec.name,
                    value=v,
                    is_original=(v == orig),
                    best_lr=float(grid[best_idx[ci]]),
                    median=m,
                    band=band,
                )
            )
    return points


# ---------------------------------------------------------------------------
# Cross-condition re-evaluation matrix
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Condition:
    """Optimizer and/or horizon override applied to the toy workload."""

    label: str
    beta1: float | None = None
    beta2: float | None = None
    weight_decay: float | None = None
    horizon: int | None = None

    def apply(self, workload: ToyWorkload, opt: OptimizerConfig):
        wl = workload if self.horizon is None else replace(workload, horizon=self.horizon)
        overrides = {
            k: v
            for k, v in (
                ("beta1", self.beta1),
                ("beta2", self.beta2),
                ("weight_decay", self.weight_decay),
            )
            if v is not None
        }
        oc = replace(opt, **overrides) if overrides else opt
        return wl, oc


@dataclass
class XCondCell:
    selection: str
    evaluation: str
    median: float
    spread: float
    lower: float
    upper: float


@dataclass
class XCondResult:
    labels: list[str]
    selected: dict[str, tuple[ShapeParams, float]]
    cells: list[XCondCell]

    def matrix(self) -> np.ndarray:
        k = len(self.labels)
        out = np.empty((k, k))
        pos = {lab: i for i, lab in enumerate(self.labels)}
        for c in self.cells:
            out[pos[c.selection], pos[c.evaluation]] = c.median
        return out


def cross_condition_matrix(
    workload: ToyWorkload,
    opt: OptimizerConfig,
    conditions: list[Condition],
    config: SearchConfig,
    master_seed: int,
    threads: int = 1,
    metric: str = "loss",
) -> XCondResult:
    """Select a best shape per condition, re-evaluate each under every other.

    Each selected shape keeps the base LR it was selected with; cells report
    the evaluation-grid median and the DKW half-width as the spread.
    """
    if len(conditions) < 2:
        raise ValueError("need at least 2 conditions")
    labels = [c.label for c in conditions]
    if len(set(labels)) != len(labels):
        raise ValueError("condition labels must be unique")

    selected: dict[str, tuple[ShapeParams, float]] = {}
    for cond in conditions:
        wl, oc = cond.apply(workload, opt)
        obj = ToyObjective(wl, oc, metric)
        rep = search_step(obj, config, master_seed, threads)
        erep, _ = evaluation_step(rep, obj, threads, collect_records=False)
        best = erep.entries[0]
        selected[cond.label] = (best.shape, best.best_lr)

    cells: list[XCondCell] = []
    for sel in conditions:
        shape, lr = selected[sel.label]
        for ev in conditions:
            wl, oc = ev.apply(workload, opt)
            obj = ToyObjective(wl, oc, metric)
            pairs = _eval_pairs(master_seed, config.n_init, config.n_order)
            units = [((0, s), shape, lr, p) for s, p in enumerate(pairs)]
            scores = _score_units(obj, units, threads)
            vals = [scores[(0, s)] for s in range(len(pairs))]
            med = stats.median(vals)
            band = dkw_median_band(vals, config.eval_delta)
            cells.append(
                XCondCell(sel.label, ev.label, med, band.half_width, band.lower, band.upper)
            )
    return XCondResult(labels, selected, cells)


# ---------------------------------------------------------------------------
# Seed-noise characterization
# ---------------------------------------------------------------------------


@dataclass
class NoiseResult:
    n_shapes: int
    n_seeds: int
    top_k: int
    subset_sizes: tuple[int, ...]
    false_negative_rates: dict[int, float]
    medians_ref: np.ndarray
    subset_medians: dict[int, np.ndarray]


def noise_characterization(
    objective,
    shapes,
    lrs,
    master_seed: int,
    n_seeds: int = 100,
    subset_sizes: tuple[int, ...] = (1, 3, 10, 100),
    top_k: int = 100,
    threads: int = 1,
) -> NoiseResult:
    """Subset-median stability of rankings across two independent seed sets.

    Set A (n_seeds runs per shape) gives the reference median ranking; set B
    medians from its first s seeds (s in subset_sizes) give the comparison
    rankings. The top-k false-negative rate is the fraction of reference
    top-k shapes missing from the subset top-k.
    """
    if getattr(objective, "deterministic", False):
        raise ValueError("noise characterization needs a stochastic objective")
    shapes = list(shapes)
    lrs = np.asarray(lrs, dtype=float)
    if lrs.shape != (len(shapes),):
        raise ValueError("need one base LR per shape")
    if top_k > len(shapes):
        raise ValueError(f"top_k={top_k} exceeds the {len(shapes)} shapes given")
    if max(subset_sizes) > n_seeds or min(subset_sizes) < 1:
        raise ValueError("subset sizes must lie in [1, n_seeds]")

    pairs_a = [derive_seed_pair(master_seed, _TAG_NOISE_A, s) for s in range(n_seeds)]
    pairs_b = [derive_seed_pair(master_seed, _TAG_NOISE_B, s) for s in range(n_seeds)]

    def score_matrix(pairs):
        units = [
            ((i, s), shape, float(lrs[i]), pair)
            for i, shape in enumerate(shapes)
            for s, pair in enumerate(pairs)
        ]
        scores = _score_units(objective, units, threads)
        out = np.empty((len(shapes), len(pairs)))
        for i in range(len(shapes)):
            for s in range(len(pairs)):
                out[i, s] = scores[(i, s)]
        return out

    mat_a = score_matrix(pairs_a)
    mat_b = score_matrix(pairs_b)

    med_a = np.array([stats.median(mat_a[i]) for i in range(len(shapes))])
    ref_top = set(_top_ids(med_a, top_k))

    rates: dict[int, float] = {}
    subset_medians: dict[int, np.ndarray] = {}
    for size in subset_sizes:
        med_b = np.array([stats.median(mat_b[i, :size]) for i in range(len(shapes))])
        subset_medians[size] = med_b
        top_b = set(_top_ids(med_b, top_k))
        rates[size] = len(ref_top - top_b) / top_k
    return NoiseResult(
        n_shapes=len(shapes),
        n_seeds=n_seeds,
        top_k=top_k,
        subset_sizes=tuple(subset_sizes),
        false_negative_rates=rates,
        medians_ref=med_a,
        subset_medians=subset_medians,
    )


def _top_ids(values: np.ndarray, k: int) -> list[int]:
    order = sorted(range(len(values)), key=lambda i: (values[i], i))
    return order[:k]
