"""lrslab: a laboratory for learning-rate schedule shapes.

Parametric schedule families, a solvable linear-regression workload with a
closed-form mean-loss recurrence (plus its adjoint gradient and a schedule
optimizer), a small MLP workload, a two-stage random-search protocol with
median scoring and DKW confidence bands, and a CLI that persists everything
reproducibly from a single master seed.
"""

from .harness import (
    Condition,
    EmpiricalObjective,
    NoiseResult,
    SearchConfig,
    SearchReport,
    ShapeEntry,
    TheoryObjective,
    ToyObjective,
    XCondResult,
    coordinate_linesearch,
    cross_condition_matrix,
    derive_seed_pair,
    evaluation_step,
    noise_characterization,
    pick_best_lrs,
    sample_search_shapes,
    score,
    search_step,
)
from .linreg import (
    DescentConfig,
    DescentResult,
    DivergenceError,
    LinRegProblem,
    schedule_descent,
    simulate_empirical,
    solve_theory,
    theory_gradient,
)
from .schedules import (
    FAMILIES,
    FitResult,
    SEARCH_SPACE,
    ScheduleSpec,
    ShapeError,
    ShapeParams,
    base_lr_grid,
    eval_shape,
    fit_family_to_target,
    make_shape,
    multipliers,
    sample_shape,
    schedule_lrs,
    shape_from_dict,
    shape_from_json,
    shape_to_dict,
    shape_to_json,
    spec_from_dict,
    spec_to_dict,
    validate_shape,
)
from .stats import DkwBand, bootstrap_std, dkw_median_band, ecdf, median
from .toy import (
    OptimizerConfig,
    RunRecord,
    RunSeed,
    ToyWorkload,
    adamw_step,
    init_params,
    loss_and_grad,
    make_dataset,
    run_training,
)

__version__ = "0.1.0"

__all__ = [
    "Condition",
    "DescentConfig",
    "DescentResult",
    "DivergenceError",
    "DkwBand",
    "EmpiricalObjective",
    "FAMILIES",
    "FitResult",
    "LinRegProblem",
    "NoiseResult",
    "OptimizerConfig",
    "RunRecord",
    "RunSeed",
    "SEARCH_SPACE",
    "ScheduleSpec",
    "SearchConfig",
    "SearchReport",
    "ShapeEntry",
    "ShapeError",
    "ShapeParams",
    "TheoryObjective",
    "ToyObjective",
    "ToyWorkload",
    "XCondResult",
    "adamw_step",
    "base_lr_grid",
    "bootstrap_std",
    "coordinate_linesearch",
    "cross_condition_matrix",
    "derive_seed_pair",
    "dkw_median_band",
    "ecdf",
    "eval_shape",
    "evaluation_step",
    "fit_family_to_target",
    "init_params",
    "loss_and_grad",
    "make_dataset",
    "make_shape",
    "median",
    "multipliers",
    "noise_characterization",
    "pick_best_lrs",
    "run_training",
    "sample_search_shapes",
    "sample_shape",
    "schedule_descent",
    "schedule_lrs",
    "score",
    "search_step",
    "shape_from_dict",
    "shape_from_json",
    "shape_to_dict",
    "shape_to_json",
    "simulate_empirical",
    "solve_theory",
    "spec_from_dict",
    "spec_to_dict",
    "theory_gradient",
    "validate_shape",
    "__version__",
]
