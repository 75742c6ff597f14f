import numpy as np
import pytest

from lowrank_duel.bm import (BmOptions, adversarial_start, bm_gradient,
                             bm_hessian, bm_objective, classify_point,
                             monte_carlo, solve_gd, write_trials_csv)
from lowrank_duel.errors import DivergenceError, InvalidInput
from lowrank_duel.instances import (canonical_low_complexity_graph, gen_chain,
                                    gen_cycle, gen_low_complexity)

from conftest import fd_gradient, fd_hessian


CHAIN = gen_chain([1.0, 1.0, 2.0])


def test_objective_at_truth_is_zero(families):
    for name, inst in families.items():
        val = bm_objective(inst.xstar, inst)
        if inst.op.kind == "omega":
            assert val == 0.0, name
        else:
            # scaled/general measurements rebuild b with a different
            # reduction order, leaving only rounding dust
            assert val <= 1e-25, name


def test_objective_chain_at_origin():
    # quarter weight on the observed diagonal, half per off-diagonal pair
    assert bm_objective(np.zeros(3), CHAIN) == pytest.approx(2.75, abs=1e-15)


def test_objective_cycle_at_origin():
    inst = gen_cycle([1.0, 1.0, 3.0])
    assert bm_objective(np.zeros(3), inst) == pytest.approx(9.5, abs=1e-15)


def test_gradient_examples():
    assert np.allclose(bm_gradient(CHAIN.xstar, CHAIN), 0.0)
    g = bm_gradient(np.array([1.0, 1.0, 1.0]), CHAIN)
    assert np.allclose(g.ravel(), [0.0, -1.0, -1.0])


def test_gradient_matches_finite_differences(families):
    rng = np.random.default_rng(0)
    for name, inst in families.items():
        for _ in range(8):
            x = rng.normal(scale=1.2, size=(inst.n, inst.r))
            g = bm_gradient(x, inst)
            fd = fd_gradient(inst, x)
            denom = max(1.0, np.linalg.norm(fd))
            assert np.linalg.norm(g - fd) / denom < 1e-6, name


def test_hessian_chain_table_values():
    h = bm_hessian(CHAIN.xstar, CHAIN)
    assert np.allclose(np.diag(h), [3.0, 5.0, 1.0])
    assert h[1, 2] == pytest.approx(2.0, abs=1e-14)
    assert h[0, 2] == 0.0


def test_hessian_matches_finite_differences(families):
    rng = np.random.default_rng(1)
    for name, inst in families.items():
        for _ in range(4):
            x = rng.normal(scale=1.1, size=(inst.n, inst.r))
            h = bm_hessian(x, inst)
            fd = fd_hessian(inst, x)
            denom = max(1.0, np.linalg.norm(fd, "fro"))
            assert np.linalg.norm(h - fd, "fro") / denom < 1e-5, name


def test_dimension_mismatch():
    with pytest.raises(InvalidInput):
        bm_objective(np.zeros(4), CHAIN)
    with pytest.raises(InvalidInput):
        bm_gradient(np.zeros((3, 2)), CHAIN)


def test_objective_zero_at_rotated_factor():
    g = canonical_low_complexity_graph(5)
    inst = gen_low_complexity(g, 10, 2, seed=2, sigma=0.1)
    theta = 0.7
    q = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    x = inst.xstar.entries @ q
    assert bm_objective(x, inst) <= 1e-20
    assert np.linalg.norm(bm_gradient(x, inst)) <= 1e-12
    # sign flip is an exactly valid factor
    assert bm_objective(-inst.xstar.entries, inst) == 0.0


def test_classify_truth_and_negation():
    for x in (CHAIN.xstar.entries, -CHAIN.xstar.entries):
        rep = classify_point(x, CHAIN)
        assert rep.crit_class == "second_order"
        assert rep.recovery == "global"
        assert rep.frob_gap <= 1e-12


def test_classify_origin_is_strict_saddle():
    rep = classify_point(np.zeros(3), CHAIN)
    assert rep.grad_norm == 0.0
    assert rep.crit_class == "first_order_only"
    assert rep.hess_min_eig < -1e-7
    assert rep.recovery == "spurious"


def _appendix_zero_entry_saddle(xs, k):
    """First-order point with a zero at position k (1-based) on a chain."""
    xs = np.asarray(xs, dtype=float)
    n = xs.size
    alpha = (xs[k - 2] / xs[k]) ** 2     # (x*_{k-1} / x*_{k+1})^2, 0-based
    xhat = xs.copy()
    xhat[k - 1] = 0.0
    sign = -1.0
    for idx in range(k, n):
        exponent = 1 if (idx - k) % 2 == 0 else -1
        xhat[idx] = sign * alpha ** exponent * xs[idx]
    return xhat


def test_classify_chain_zero_entry_stationary_point():
    xs = [1.0, 1.2, 0.9, 1.1, 1.3, 0.8]
    inst = gen_chain(xs)
    xhat = _appendix_zero_entry_saddle(xs, k=3)
    rep = classify_point(xhat, inst)
    assert rep.grad_norm <= 1e-9
    assert rep.crit_class == "first_order_only"
    assert rep.hess_min_eig < -1e-7


def test_solve_gd_near_truth():
    x0 = CHAIN.xstar.entries + 1e-3
    fac, trace = solve_gd(CHAIN, BmOptions(), x0=x0)
    assert trace.converged
    x = fac.entries.ravel()
    xs = CHAIN.xstar.entries.ravel()
    assert min(np.linalg.norm(x - xs), np.linalg.norm(x + xs)) <= 1e-8


def test_solve_gd_zero_init_stays_at_saddle():
    fac, trace = solve_gd(CHAIN, BmOptions(), x0=np.zeros(3))
    assert trace.iters == 0 and trace.converged
    rep = classify_point(fac, CHAIN)
    assert rep.crit_class == "first_order_only" and rep.hess_min_eig < 0


def test_solve_gd_adversarial_init_finds_spurious_point():
    g = canonical_low_complexity_graph(5)
    inst = gen_low_complexity(g, 5, 1, seed=3, sigma=0.1)
    x0 = adversarial_start(inst, flip_nodes=[0], noise=1e-3, seed=1)
    fac, trace = solve_gd(inst, BmOptions(), x0=x0)
    assert trace.converged
    rep = classify_point(fac, inst)
    assert rep.crit_class == "second_order"
    assert rep.recovery == "spurious"


def test_backtracking_objective_monotone():
    log = []
    rng = np.random.default_rng(5)
    solve_gd(CHAIN, BmOptions(max_iters=500), x0=rng.normal(size=(3, 1)),
             objective_log=log)
    vals = np.array(log).ravel()
    assert np.all(np.diff(vals) <= 1e-12)


@pytest.mark.filterwarnings("ignore:overflow")
def test_fixed_step_diverges_loudly():
    with pytest.raises(DivergenceError):
        solve_gd(CHAIN, BmOptions(step_rule="fixed", step_alpha=10.0, max_iters=200),
                 x0=np.full((3, 1), 2.0))


def test_fixed_step_converges_with_small_alpha():
    fac, trace = solve_gd(CHAIN, BmOptions(step_rule="fixed", step_alpha=0.05,
                                           max_iters=20000),
                          x0=CHAIN.xstar.entries + 0.1)
    assert trace.converged
    rep = classify_point(fac, CHAIN)
    assert rep.recovery == "global"


def test_compiled_and_reference_paths_agree():
    rng = np.random.default_rng(8)
    starts = [rng.normal(size=(3, 1)) for _ in range(10)]
    for x0 in starts:
        fast, _ = solve_gd(CHAIN, BmOptions(), x0=x0)
        log = []
        ref, _ = solve_gd(CHAIN, BmOptions(), x0=x0, objective_log=log)
        gf = fast.entries @ fast.entries.T
        gr = ref.entries @ ref.entries.T
        assert np.linalg.norm(gf - gr) <= 1e-6


def test_monte_carlo_chain_small_all_global():
    summary = monte_carlo(CHAIN, 100, BmOptions(seed=2))
    assert summary.success_rate == 1.0
    assert summary.cluster_count == 1
    assert summary.spurious_cluster_count == 0


def test_monte_carlo_single_trial_at_truth():
    summary = monte_carlo(CHAIN, 1, BmOptions(seed=0),
                          init_factory=lambda t, rng: CHAIN.xstar.entries)
    assert summary.success_rate == 1.0


def test_monte_carlo_low_complexity_finds_spurious_basins():
    g = canonical_low_complexity_graph(7)
    inst = gen_low_complexity(g, 7, 1, seed=11, sigma=0.1)
    summary = monte_carlo(inst, 120, BmOptions(seed=5))
    assert summary.success_rate < 1.0
    assert summary.spurious_cluster_count >= 2
    for rec in summary.records:
        assert rec.seed == 5 ^ rec.trial


def test_monte_carlo_rejects_bad_trials():
    with pytest.raises(InvalidInput):
        monte_carlo(CHAIN, 0, BmOptions())


def test_trials_csv_deterministic(tmp_path):
    summary = monte_carlo(CHAIN, 5, BmOptions(seed=1))
    opts = BmOptions(seed=1)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trials_csv(p1, summary, opts, {"instance": "chain"})
    write_trials_csv(p2, summary, opts, {"instance": "chain"})
    assert p1.read_bytes() == p2.read_bytes()
    text = p1.read_text()
    assert "# grad_tol=1e-09" in text
    assert text.splitlines()[-1].count(",") == 7
    header = [l for l in text.splitlines() if not l.startswith("#")][0]
    assert header == "trial,seed,iters,grad_norm,hess_min_eig,frob_gap,class,recovery"


def test_options_validation():
    with pytest.raises(InvalidInput):
        BmOptions(grad_tol=0.0)
    with pytest.raises(InvalidInput):
        BmOptions(beta=1.5)
    with pytest.raises(InvalidInput):
        BmOptions(step_rule="newton")
