"""End-to-end acceptance suite.

These tests pin the package's headline behaviors at full protocol sizes:
theory/empirical agreement, analytic anchors, adjoint gradients, schedule
descent and its dominance over family search, the snm fit, order-statistics
machinery, shape-family invariants, byte-level protocol determinism, and
seed-noise monotonicity. Expect a few minutes of total runtime on one core.
"""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from lrslab.cli import EXIT_OK, main
from lrslab.harness import (
    OptimizerConfig,
    SearchConfig,
    TheoryObjective,
    ToyObjective,
    ToyWorkload,
    noise_characterization,
    pick_best_lrs,
    sample_search_shapes,
    search_step,
)
from lrslab.linreg import (
    DescentConfig,
    LinRegProblem,
    schedule_descent,
    simulate_empirical,
    solve_theory,
    theory_gradient,
)
from lrslab.persist import MANIFEST_NAME
from lrslab.schedules import (
    FAMILIES,
    SEARCH_SPACE,
    base_lr_grid,
    eval_shape,
    fit_family_to_target,
    multipliers,
    sample_shape,
)
from lrslab.stats import dkw_median_band
from lrslab.toy import AdamState, adamw_step

MASTER_SEED = 20260815

BIG = LinRegProblem(dim=500, batch=32, horizon=1000)

THEORY_FAMILIES = ("con", "cos-std", "cos-gen", "sqrt", "rex", "tps", "tpl", "snm")


# ---------------------------------------------------------------------------
# Shared expensive computations.


@pytest.fixture(scope="module")
def descent_result():
    # meta_lr=1e-3 converges cleanly at this scale; the 1e-2 default is tuned
    # for shorter exploratory runs and limit-cycles on this problem.
    cfg = DescentConfig(meta_lr=1e-3, meta_steps=10_000)
    return schedule_descent(BIG, cfg)


@pytest.fixture(scope="module")
def family_search_reports():
    obj = TheoryObjective(BIG)
    out = {}
    for family in THEORY_FAMILIES:
        cfg = SearchConfig(family=family, n_shapes=3600,
                           grid_lo=0.01, grid_hi=1.0, grid_n=16)
        out[family] = search_step(obj, cfg, MASTER_SEED)
    return out


# ---------------------------------------------------------------------------
# Theory vs empirical averages.


def test_theory_empirical_agreement_at_high_lr():
    # Constant alpha=0.3 on the D=500, B=32 problem: theory final loss vs the
    # mean empirical final loss over 1000 seeds, to 5% relative.
    n_seeds = 1000
    alpha = 0.3
    lrs = np.full(BIG.horizon, alpha)
    theory, theory_div = solve_theory(BIG, lrs)

    finals = np.empty(n_seeds)
    n_div = 0
    div_steps = []
    for seed in range(n_seeds):
        traj, div = simulate_empirical(BIG, lrs, seed)
        finals[seed] = traj[-1]
        if div:
            n_div += 1
            div_steps.append(len(traj) - 1)

    if theory_div or n_div:
        # The minibatch recurrence has a constant-LR stability threshold at
        # the root of c*a*sum(lam/(2-a*lam)) = 1, which for D=500, B=32 sits
        # at a ~ 0.1252. alpha=0.3 is 2.4x beyond it: the mean-loss recurrence
        # and every simulated run blow past the divergence sentinel, so there
        # is no finite final loss on either side to compare.
        lam, c = BIG.spectrum, BIG.noise_coef
        lo, hi = 1e-6, 2.0 / lam[-1] * 0.999999
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            lo, hi = (lo, mid) if c * mid * np.sum(lam / (2 - mid * lam)) > 1 else (mid, hi)
        pytest.fail(
            f"alpha={alpha} is unstable for D={BIG.dim}, B={BIG.batch}: "
            f"stability edge ~ {0.5 * (lo + hi):.6f}, theory diverged={theory_div} "
            f"(trajectory truncated at step {len(theory) - 1}), "
            f"{n_div}/{n_seeds} empirical runs diverged"
            + (f" (median divergence step {int(np.median(div_steps))})" if div_steps else "")
            + "; the 5% agreement check needs a stable constant LR "
            "(see test_theory_empirical_agreement_at_stable_lr)."
        )

    rel = abs(float(finals.mean()) - float(theory[-1])) / float(theory[-1])
    assert rel <= 0.05


def test_theory_empirical_agreement_at_stable_lr():
    # Companion check inside the stable region (alpha=0.10, ~80% of the
    # edge): the recurrence tracks the 300-seed empirical mean to within a
    # finite-size band. The residual gap is a quenched finite-D effect (one
    # fixed rotation per seed), so the tolerance is looser than 5%.
    n_seeds = 300
    lrs = np.full(BIG.horizon, 0.10)
    theory, theory_div = solve_theory(BIG, lrs)
    assert not theory_div
    total = 0.0
    for seed in range(n_seeds):
        traj, div = simulate_empirical(BIG, lrs, seed)
        assert not div
        total += traj[-1]
    emp = total / n_seeds
    rel = abs(emp - float(theory[-1])) / float(theory[-1])
    assert rel <= 0.15


# ---------------------------------------------------------------------------
# Analytic anchors.


def test_initial_loss_exactly_half():
    for dim, batch in ((1, 1), (2, 1), (50, 50), (500, 32), (1000, 8)):
        losses, _ = solve_theory(LinRegProblem(dim, batch, 2), np.zeros(2))
        assert abs(losses[0] - 0.5) <= 1e-12


def test_adjoint_gradient_vs_central_differences():
    # 20 random schedules at D=50, T=100, half minibatch and half full batch;
    # central differences on log L_T at h=1e-6.
    D, T, h = 50, 100, 1e-6
    rng = np.random.default_rng(MASTER_SEED)
    worst = 0.0
    for trial in range(20):
        B = 8 if trial % 2 == 0 else 50
        prob = LinRegProblem(D, B, T)
        lrs = rng.uniform(0.0, 0.5, T)
        grad = theory_gradient(prob, lrs)
        fd = np.empty(T)
        for t in range(T):
            up = lrs.copy()
            up[t] += h
            dn = lrs.copy()
            dn[t] -= h
            lu, du = solve_theory(prob, up)
            ld, dd = solve_theory(prob, dn)
            assert not (du or dd)
            fd[t] = (math.log(lu[-1]) - math.log(ld[-1])) / (2 * h)
        rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-12)
        worst = max(worst, float(rel.max()))
    assert worst <= 1e-5


# ---------------------------------------------------------------------------
# Schedule descent and family dominance.


def test_schedule_descent_converges_to_decay_shape(descent_result):
    res = descent_result
    # Strict improvement over the best constant schedule it started from.
    assert res.final_loss < res.init_loss

    # Converged: relative loss change across the last 10% of meta-steps.
    n = len(res.trace)
    tail_start_loss = res.trace[int(0.9 * n)].loss
    rel_change = abs(res.final_loss - tail_start_loss) / res.final_loss
    assert rel_change < 1e-3

    # No warmup, sharp decay.
    peak = float(res.lrs.max())
    assert res.lrs[0] >= 0.9 * peak
    assert res.lrs[-1] <= 0.2 * peak


def test_descent_beats_every_family_search(descent_result, family_search_reports):
    best = {f: rep.entries[0].search_median for f, rep in family_search_reports.items()}
    for family, score in best.items():
        assert score >= descent_result.final_loss, (
            f"{family} best {score:.6e} undercuts descent {descent_result.final_loss:.6e}"
        )
    # The constant family is strictly the worst of the eight.
    con = best.pop("con")
    for family, score in best.items():
        assert score < con, f"{family} ({score:.6e}) not better than con ({con:.6e})"


def test_snm_fit_recovers_descent_optimum(descent_result, family_search_reports):
    res = descent_result
    peak = float(res.lrs.max())
    target = res.lrs / peak
    fit = fit_family_to_target("snm", target, seed=0)
    fitted_lrs = peak * multipliers(fit.shape, BIG.horizon)
    losses, div = solve_theory(BIG, fitted_lrs)
    assert not div
    fit_loss = float(losses.min())
    assert fit_loss - res.final_loss <= 2e-4
    best_searched_snm = family_search_reports["snm"].entries[0].search_median
    assert fit_loss < best_searched_snm


# ---------------------------------------------------------------------------
# Optimizer and statistics oracles.


def test_adamw_scalar_hand_steps():
    # theta=1, g=1, fresh state: m_hat = v_hat = 1, so the no-decay update is
    # exactly lr/(1+eps); decoupled decay adds lr*wd*theta on top.
    params = np.array([1.0])
    grads = np.array([1.0])
    no_wd, _ = adamw_step(params, grads, AdamState.zeros(1), OptimizerConfig(), lr=0.1)
    assert abs(no_wd[0] - (1.0 - 0.1 / (1.0 + 1e-8))) <= 1e-12
    wd, _ = adamw_step(
        params, grads, AdamState.zeros(1), OptimizerConfig(weight_decay=0.1), lr=0.1
    )
    assert abs(wd[0] - (1.0 - 0.1 * (1.0 / (1.0 + 1e-8) + 0.1))) <= 1e-12


def test_dkw_band_epsilon_and_coverage():
    band = dkw_median_band(np.arange(100.0), delta=0.05)
    assert abs(band.epsilon - math.sqrt(math.log(40.0) / 200.0)) <= 1e-12

    # 1000 trials of n=100 standard-normal samples; the band must cover the
    # true median (0) in at least 93% of them.
    rng = np.random.default_rng(MASTER_SEED)
    hits = 0
    trials = 1000
    for _ in range(trials):
        sample = rng.normal(size=100)
        b = dkw_median_band(sample, delta=0.05)
        hits += b.lower <= 0.0 <= b.upper
    assert hits / trials >= 0.93


# ---------------------------------------------------------------------------
# Shape-family property sweep.


def test_shape_invariants_zero_violations():
    rng = np.random.default_rng(MASTER_SEED)
    families = list(FAMILIES)
    violations = []
    dense = np.linspace(0.0, 1.0, 257)
    n_triples = 10_000
    for i in range(n_triples):
        family = families[int(rng.integers(len(families)))]
        shape = sample_shape(family, rng)
        f = float(rng.random())

        # Range on the sampled fraction.
        v = eval_shape(shape, f)
        if not -1e-9 <= v <= 1.0 + 1e-9:
            violations.append((family, "range", f, v))

        # Warmup anchor (all families except snm).
        if family != "snm":
            names = [p.name for p in SEARCH_SPACE[family]]
            w = shape["warmup"] if "warmup" in names else shape["x0"]
            if w > 0 and abs(eval_shape(shape, 0.0)) > 1e-9:
                violations.append((family, "start", 0.0, eval_shape(shape, 0.0)))
            if abs(eval_shape(shape, w) - 1.0) > 1e-9:
                violations.append((family, "knee", w, eval_shape(shape, w)))

        # Terminal values.
        if family == "con":
            if eval_shape(shape, 1.0) != 1.0:
                violations.append((family, "terminal", 1.0, eval_shape(shape, 1.0)))
        elif family in ("tps", "tpl"):
            if abs(eval_shape(shape, 1.0)) > 1e-9:
                violations.append((family, "terminal", 1.0, eval_shape(shape, 1.0)))
        elif family in ("cos-y", "tps-y"):
            if abs(eval_shape(shape, 1.0) - shape["y_final"]) > 1e-9:
                violations.append((family, "terminal", 1.0, eval_shape(shape, 1.0)))

        # Monotone decay after the warmup knee.
        if family in ("tps", "tpl") and i % 10 == 0:
            g = dense[dense >= shape["x0"]]
            vals = eval_shape(shape, g)
            if np.any(np.diff(vals) > 1e-9):
                violations.append((family, "monotone", float(g[0]), None))

    assert violations == [], f"{len(violations)} violations, first: {violations[:3]}"


# ---------------------------------------------------------------------------
# Protocol determinism across worker counts (via the CLI, byte level).


def _dir_bytes(out_dir):
    return {
        p.name: p.read_bytes()
        for p in sorted(Path(out_dir).iterdir())
        if p.name != MANIFEST_NAME
    }


def test_protocol_byte_identical_across_threads(tmp_path):
    # Full two-stage protocol at the smaller published sizes: 600 shapes,
    # 5 search seeds, top-50, 10x10 evaluation grid.
    workload = {
        "input_dim": 8, "n_classes": 4, "n_train": 512, "hidden": [16, 16],
        "batch_size": 32, "horizon": 40, "data_seed": 0,
    }
    search_cfg = {
        "family": "tps",
        "objective": {"kind": "toy", "workload": workload},
        "n_shapes": 600, "k_search": 5, "top_k": 50, "n_init": 10, "n_order": 10,
        "grid": {"lo": 1e-3, "hi": 1e-1, "n": 16},
        "master_seed": MASTER_SEED,
    }
    cfg_path = tmp_path / "search.json"
    cfg_path.write_text(json.dumps(search_cfg))

    outs = {}
    for threads in (1, 2):
        out = tmp_path / f"search_t{threads}"
        code = main(["search", "--config", str(cfg_path), "--out", str(out),
                     "--threads", str(threads)])
        assert code == EXIT_OK
        outs[threads] = _dir_bytes(out)
    assert outs[1] == outs[2]

    eval_cfg = {
        "report": str(tmp_path / "search_t1" / "report.json"),
        "objective": {"kind": "toy", "workload": workload},
    }
    ecfg_path = tmp_path / "eval.json"
    ecfg_path.write_text(json.dumps(eval_cfg))
    eouts = {}
    for threads in (1, 2):
        out = tmp_path / f"eval_t{threads}"
        code = main(["evaluate", "--config", str(ecfg_path), "--out", str(out),
                     "--threads", str(threads)])
        assert code == EXIT_OK
        eouts[threads] = _dir_bytes(out)
    assert eouts[1] == eouts[2]
    # 50 shapes x 100 seed pairs of evaluation records.
    n_records = len(eouts[1]["eval_records.jsonl"].splitlines())
    assert n_records == 50 * 100


# ---------------------------------------------------------------------------
# Seed-noise characterization.


def test_noise_false_negative_rate_monotone_in_seeds():
    # 1000 tps shapes on the toy workload, two independent 100-seed sets;
    # the top-100 false-negative rate must fall as the subset grows.
    #
    # The study uses the min-training-error metric. Seed pairs are shared
    # across shapes, so with the loss metric the common per-seed component
    # (init and batch-sequence luck) dominates and cancels exactly in
    # single-seed rankings, inverting the ordering; error-metric noise is
    # shape-idiosyncratic and behaves like honest measurement noise.
    wl = ToyWorkload(input_dim=8, n_classes=4, n_train=512, hidden=(32,),
                     batch_size=32, horizon=40, data_seed=0)
    obj = ToyObjective(wl, OptimizerConfig(), metric="error")
    shapes = sample_search_shapes("tps", 1000, MASTER_SEED)
    grid = base_lr_grid(1e-3, 1e-1, 8)
    lrs, _ = pick_best_lrs(obj, shapes, grid, MASTER_SEED, k_seeds=1)
    res = noise_characterization(
        obj, shapes, lrs, MASTER_SEED,
        n_seeds=100, subset_sizes=(1, 10, 100), top_k=100,
    )
    r = res.false_negative_rates
    assert r[1] > r[10], f"rate(1)={r[1]:.3f} not above rate(10)={r[10]:.3f}"
    assert r[10] >= r[100], f"rate(10)={r[10]:.3f} below rate(100)={r[100]:.3f}"
