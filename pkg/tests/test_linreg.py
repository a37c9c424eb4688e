"""Linear-regression engine: theory recurrence, simulator, adjoint, descent."""

import math

import numpy as np
import pytest

from lrslab.linreg import (
    DIVERGENCE_SENTINEL,
    DescentConfig,
    DivergenceError,
    LinRegProblem,
    empirical_kernel,
    schedule_descent,
    simulate_empirical,
    solve_theory,
    theory_gradient,
)


def test_problem_validation():
    with pytest.raises(ValueError):
        LinRegProblem(0, 1, 10)
    with pytest.raises(ValueError):
        LinRegProblem(4, 5, 10)
    with pytest.raises(ValueError):
        LinRegProblem(4, 0, 10)
    with pytest.raises(ValueError):
        LinRegProblem(4, 2, 0)


def test_spectrum_shape():
    prob = LinRegProblem(10, 2, 5)
    lam = prob.spectrum
    # lam_k = 2k/(D+1): strictly increasing, top value 2D/(D+1), mean 1.
    assert np.all(np.diff(lam) > 0)
    assert lam[-1] == pytest.approx(20.0 / 11.0, abs=1e-15)
    assert lam.mean() == pytest.approx(1.0, abs=1e-15)


def test_schedule_length_checked():
    prob = LinRegProblem(4, 2, 10)
    with pytest.raises(ValueError):
        solve_theory(prob, np.zeros(9))
    with pytest.raises(ValueError):
        simulate_empirical(prob, np.zeros(11), 0)


def test_initial_loss_exact_half():
    # p_0 = 1 and mean(lam) = 1 give L_0 = sum(lam)/(2D) = 0.5 exactly.
    for D, B in ((1, 1), (2, 1), (17, 3), (500, 32)):
        losses, diverged = solve_theory(LinRegProblem(D, B, 3), np.zeros(3))
        assert not diverged
        assert abs(losses[0] - 0.5) < 1e-12


def test_zero_schedule_is_constant():
    prob = LinRegProblem(6, 2, 25)
    th, _ = solve_theory(prob, np.zeros(25))
    np.testing.assert_allclose(th, 0.5, atol=1e-14)
    emp, _ = simulate_empirical(prob, np.zeros(25), seed=4)
    np.testing.assert_array_equal(emp, np.full(26, emp[0]))


def test_two_mode_hand_roll():
    # D=2: lam = (2/3, 4/3), beta = 1/2, noise coefficient
    # c = (1/beta - 1)/D = 1/2. One step at alpha = 0.5, p_0 = (1, 1):
    #   decay factors (1 - alpha*lam)^2 = (4/9, 1/9)
    #   noise: c * alpha^2 * lam_k^2 * sum(p) = (1/8)*(4/9, 16/9)*2 = (1/9, 4/9)
    #   p_1 = (4/9 + 1/9, 1/9 + 4/9) = (5/9, 5/9)
    #   L_1 = (lam . p_1)/(2D) = ((2/3 + 4/3) * 5/9)/4 = 5/18.
    prob = LinRegProblem(2, 1, 1)
    losses, diverged = solve_theory(prob, [0.5])
    assert not diverged
    assert abs(losses[0] - 0.5) < 1e-14
    assert abs(losses[1] - 5.0 / 18.0) < 1e-14


def test_two_mode_hand_roll_second_step():
    # Continuing the previous derivation one more step at alpha = 0.5 from
    # p_1 = (5/9, 5/9), sum(p_1) = 10/9:
    #   p_2 = (4/9*5/9 + 1/8*4/9*10/9, 1/9*5/9 + 1/8*16/9*10/9)
    #       = (20/81 + 5/81, 5/81 + 20/81) = (25/81, 25/81)
    #   L_2 = 2 * 25/81 / 4 = 25/162.
    prob = LinRegProblem(2, 1, 2)
    losses, diverged = solve_theory(prob, [0.5, 0.5])
    assert not diverged
    assert abs(losses[2] - 25.0 / 162.0) < 1e-14


def test_one_step_exact_solve():
    # D=1 gives lam=(1,); full-batch alpha=1 zeroes the residual in one step.
    prob = LinRegProblem(1, 1, 1)
    th, _ = solve_theory(prob, [1.0])
    assert th[1] == 0.0
    emp, _ = simulate_empirical(prob, [1.0], seed=123)
    assert emp[1] == pytest.approx(0.0, abs=1e-30)


def test_monte_carlo_matches_one_step_theory():
    # For one step from the isotropic start the recurrence is the exact
    # expectation over rotation, init, and batch choice; a 40k-seed average
    # sits ~1% from 5/18 (its standard error), far inside the 5% gate.
    prob = LinRegProblem(2, 1, 1)
    total = 0.0
    n = 40_000
    for seed in range(n):
        losses, _ = simulate_empirical(prob, [0.5], seed)
        total += losses[-1]
    assert total / n == pytest.approx(5.0 / 18.0, rel=0.05)


def test_full_batch_theory_reduces_to_deterministic_decay():
    # At B = D the noise coefficient is zero, so p_k shrinks by (1-a*lam_k)^2
    # each step with no mode coupling.
    D, T = 7, 19
    prob = LinRegProblem(D, D, T)
    rng = np.random.default_rng(8)
    lrs = rng.uniform(0.0, 0.9, T)
    losses, diverged = solve_theory(prob, lrs)
    assert not diverged
    lam = prob.spectrum
    p = np.ones(D)
    expect = [0.5]
    for a in lrs:
        p = (1.0 - a * lam) ** 2 * p
        expect.append(float(lam @ p) / (2 * D))
    np.testing.assert_allclose(losses, expect, rtol=1e-13, atol=1e-300)


def test_full_batch_stability_edge():
    # Full batch diverges iff alpha > 2/lam_max = (D+1)/D. D=8: edge = 1.125.
    D, T = 8, 3000
    prob = LinRegProblem(D, D, T)
    edge = (D + 1) / D
    below, div_below = solve_theory(prob, np.full(T, edge * 0.99))
    assert not div_below
    assert below[-1] < 0.5
    _, div_above = solve_theory(prob, np.full(T, edge * 1.01))
    assert div_above


def test_minibatch_stability_edge():
    # With noise the per-step map on p is diag((1-a*lam)^2) plus the rank-one
    # term c*a^2*lam^2*1^T. Its top eigenvalue crosses 1 exactly where
    # c*a*sum(lam/(2-a*lam)) = 1; bisect that and check both sides.
    prob = LinRegProblem(500, 32, 20_000)
    lam, c = prob.spectrum, prob.noise_coef

    def excess(a):
        return c * a * float(np.sum(lam / (2.0 - a * lam))) - 1.0

    lo, hi = 1e-6, 2.0 / lam[-1] * 0.999999
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if excess(mid) > 0 else (mid, hi)
    edge = 0.5 * (lo + hi)
    assert 0.0 < edge < 2.0 / lam[-1]
    T = prob.horizon
    _, div_below = solve_theory(prob, np.full(T, edge * 0.95))
    assert not div_below
    _, div_above = solve_theory(prob, np.full(T, edge * 1.05))
    assert div_above


def test_divergence_truncates_trajectory():
    prob = LinRegProblem(4, 4, 100)
    losses, diverged = solve_theory(prob, np.full(100, 3.0))
    assert diverged
    assert len(losses) < 101
    assert losses[-1] > DIVERGENCE_SENTINEL or not math.isfinite(losses[-1])
    emp, emp_div = simulate_empirical(prob, np.full(100, 3.0), seed=0)
    assert emp_div
    assert len(emp) < 101


def test_empirical_determinism_and_seed_sensitivity():
    prob = LinRegProblem(12, 3, 30)
    lrs = np.full(30, 0.1)
    a, _ = simulate_empirical(prob, lrs, seed=99)
    b, _ = simulate_empirical(prob, lrs, seed=99)
    np.testing.assert_array_equal(a, b)
    c, _ = simulate_empirical(prob, lrs, seed=100)
    assert not np.array_equal(a, c)


def test_empirical_kernel_spectrum():
    prob = LinRegProblem(24, 6, 5)
    theta = empirical_kernel(prob, seed=7)
    assert np.max(np.abs(theta - theta.T)) < 1e-10
    np.testing.assert_allclose(np.linalg.eigvalsh(theta), prob.spectrum, atol=1e-9)
    np.testing.assert_array_equal(theta, empirical_kernel(prob, seed=7))


# ---------------------------------------------------------------------------
# Adjoint gradient.


def test_gradient_matches_central_differences():
    # Smaller sibling of the acceptance-scale check; h=1e-6 central FD on
    # log L_T.
    prob = LinRegProblem(20, 5, 40)
    rng = np.random.default_rng(3)
    for _ in range(3):
        lrs = rng.uniform(0.0, 0.5, 40)
        grad = theory_gradient(prob, lrs)
        h = 1e-6
        for t in range(0, 40, 7):
            up = lrs.copy()
            up[t] += h
            dn = lrs.copy()
            dn[t] -= h
            lu, _ = solve_theory(prob, up)
            ld, _ = solve_theory(prob, dn)
            fd = (math.log(lu[-1]) - math.log(ld[-1])) / (2 * h)
            assert grad[t] == pytest.approx(fd, rel=1e-5, abs=1e-10)


def test_gradient_at_rest_is_nonpositive():
    # From p = 1 any first use of a positive LR lowers the loss.
    prob = LinRegProblem(16, 4, 12)
    grad = theory_gradient(prob, np.zeros(12))
    assert np.all(grad <= 0.0)
    assert np.any(grad < 0.0)


def test_gradient_zero_at_zero_loss():
    # D=1 full batch at alpha=1 lands exactly on L=0; the gradient is defined
    # as the zero vector at that fixed point.
    prob = LinRegProblem(1, 1, 2)
    grad = theory_gradient(prob, [1.0, 0.3])
    np.testing.assert_array_equal(grad, np.zeros(2))


def test_gradient_raises_on_divergence():
    prob = LinRegProblem(8, 8, 200)
    with pytest.raises(DivergenceError):
        theory_gradient(prob, np.full(200, 3.0))


# ---------------------------------------------------------------------------
# Schedule descent.


def test_descent_config_validation():
    with pytest.raises(ValueError):
        DescentConfig(meta_lr=0.0)
    with pytest.raises(ValueError):
        DescentConfig(meta_steps=0)
    with pytest.raises(ValueError):
        DescentConfig(shrink_factor=1.0)
    with pytest.raises(ValueError):
        DescentConfig(blowup_threshold=0.0)


def test_descent_improves_on_best_constant():
    prob = LinRegProblem(30, 6, 80)
    cfg = DescentConfig(meta_lr=1e-3, meta_steps=400)
    res = schedule_descent(prob, cfg)
    # The starting point is the best constant from the default grid.
    grid = cfg.grid()
    best = min(
        solve_theory(prob, np.full(80, lr))[0][-1]
        for lr in grid
        if not solve_theory(prob, np.full(80, lr))[1]
    )
    assert res.init_loss == pytest.approx(best, rel=1e-12)
    assert res.init_lr in grid
    assert res.final_loss < res.init_loss
    # Accepted gradient steps never increase the loss here.
    grad_losses = [r.loss for r in res.trace if r.kind == "grad"]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(grad_losses, grad_losses[1:]))
    assert np.all(res.lrs >= 0.0)


def test_descent_shrink_branch_geometric():
    # Threshold below any reachable loss forces the shrink branch every step;
    # ten shrinks multiply the schedule by exactly 0.3**10.
    prob = LinRegProblem(8, 8, 20)
    cfg = DescentConfig(
        meta_lr=1e-2, meta_steps=10, blowup_threshold=0.01,
        shrink_factor=0.3, init_grid=(0.05,),
    )
    res = schedule_descent(prob, cfg)
    assert all(r.kind == "shrink" for r in res.trace)
    assert all(math.isnan(r.grad_norm_sq) for r in res.trace)
    np.testing.assert_allclose(res.lrs, 0.05 * 0.3**10, rtol=1e-12)


def test_descent_recovers_from_divergent_init():
    # Warm start far above the stability edge: the first meta-steps shrink,
    # after which ordinary gradient steps resume and reach a finite loss.
    prob = LinRegProblem(8, 8, 100)
    cfg = DescentConfig(meta_lr=1e-2, meta_steps=40, init_grid=(0.2,))
    res = schedule_descent(prob, cfg, init_lrs=np.full(100, 5.0))
    kinds = [r.kind for r in res.trace]
    assert kinds[0] == "shrink"
    assert "grad" in kinds
    assert math.isfinite(res.final_loss)


def test_descent_all_diverged_grid_raises():
    # D=4 full-batch edge is 1.25; both grid points sit above it.
    prob = LinRegProblem(4, 4, 100)
    cfg = DescentConfig(init_grid=(2.0, 3.0))
    with pytest.raises(DivergenceError):
        schedule_descent(prob, cfg)


def test_descent_snapshot_cadence():
    prob = LinRegProblem(10, 2, 30)
    cfg = DescentConfig(meta_lr=1e-3, meta_steps=100, snapshot_every=25)
    res = schedule_descent(prob, cfg)
    steps = [s for s, _ in res.snapshots]
    assert steps == [0, 25, 50, 75, 100]
    assert all(arr.shape == (30,) for _, arr in res.snapshots)
    # Final snapshot is the returned schedule.
    np.testing.assert_array_equal(res.snapshots[-1][1], res.lrs)
