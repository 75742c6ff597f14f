import numpy as np
import pytest

from lowrank_duel.errors import InvalidInput
from lowrank_duel.instances import (MeasurementOp, canonical_low_complexity_graph,
                                    gen_chain, gen_cycle, gen_low_complexity,
                                    make_instance, perturbed_operator)
from lowrank_duel.linalg import SymMat, psd_check
from lowrank_duel.sdp import (SdpOptions, SdpResult, kkt_residuals,
                              recovery_check, save_sdp_result, solve_sdp,
                              solve_sdp_raw)


def test_full_observation_recovers_truth():
    base = gen_chain([1.0, 1.0, 2.0])
    omega = tuple((i, j) for i in range(3) for j in range(3))
    inst = make_instance(base.xstar.entries, MeasurementOp(kind="omega", omega=omega))
    res = solve_sdp(inst)
    rec = recovery_check(res, inst.mstar(), tol=1e-6)
    assert res.status == "optimal"
    assert rec.recovered and rec.frob_gap <= 1e-6


def test_perturbed_operator_recovers_truth():
    base = gen_chain([1.0, 1.0, 2.0])
    for eps in (0.01, 0.5):
        inst = make_instance(base.xstar.entries, perturbed_operator(base.op, eps))
        res = solve_sdp(inst)
        rec = recovery_check(res, inst.mstar(), tol=1e-6)
        assert res.status == "optimal" and rec.recovered


def test_three_node_chain_partial_objective():
    inst = gen_chain([1.0, 1.0, 2.0])
    res = solve_sdp(inst)
    rec = recovery_check(res, inst.mstar(), tol=1e-6)
    assert res.status == "optimal"
    partial = res.trace - res.m_opt.entries[0, 0]
    assert partial <= 4.0 + 1e-6           # beats the 5.0 of the ground truth
    assert not rec.recovered
    assert rec.trace_gap == pytest.approx(1.0, abs=1e-6)


def test_three_cycle_trace_and_gap():
    inst = gen_cycle([1.0, 1.0, 3.0])
    res = solve_sdp(inst)
    rec = recovery_check(res, inst.mstar(), tol=1e-6)
    assert res.trace <= 10.0 + 1e-6
    assert not rec.recovered
    assert rec.trace_gap >= 1.0 - 1e-6


def test_five_cycle_regression_value():
    # frozen from an independent convex-solver run and a dual feasible
    # point: the optimum of the (1,3,1,3,1) cycle sits near 15.2606560,
    # strictly above the rank-one formula value 2 sqrt(54) = 14.6969
    inst = gen_cycle([1.0, 3.0, 1.0, 3.0, 1.0])
    res = solve_sdp(inst)
    assert res.status == "optimal"
    assert res.trace == pytest.approx(15.2606560, abs=2e-5)
    # weak duality on the reported dual certificate
    amats_b = inst.b
    assert res.trace >= float(np.dot(res.y, amats_b)) - 1e-6


def test_low_complexity_recovery():
    g = canonical_low_complexity_graph(5)
    inst = gen_low_complexity(g, 10, 2, seed=6, sigma=0.3, omega_from_g1_only=True)
    res = solve_sdp(inst)
    rec = recovery_check(res, inst.mstar(), tol=1e-5)
    assert res.status == "optimal" and rec.recovered


def test_weak_duality_along_iterates(families):
    for name, inst in families.items():
        res = solve_sdp(inst)
        for tr_m, by, _ in res.history:
            assert tr_m >= by - 1e-8, name


def test_returned_matrix_is_psd():
    for inst in (gen_chain([1.0, 1.0, 1.0, 2.0]), gen_cycle([1.0, 3.0, 1.0, 3.0, 1.0])):
        res = solve_sdp(inst)
        assert psd_check(res.m_opt, tol=SdpOptions().feas_tol * 10)


def test_determinism_bitwise():
    inst = gen_cycle([1.0, 3.0, 1.0, 3.0, 1.0])
    a = solve_sdp(inst)
    b = solve_sdp(inst)
    assert a.iters == b.iters
    assert np.array_equal(a.m_opt.entries, b.m_opt.entries)
    assert a.history == b.history


def test_kkt_residuals_small_on_solved(families):
    for name, inst in families.items():
        res = solve_sdp(inst)
        kkt = kkt_residuals(res, inst)
        assert res.status == "optimal", name
        assert kkt.primal <= 1e-7 and kkt.dual <= 1e-7, name
        assert kkt.complementarity <= 1e-7, name


def test_kkt_on_hand_built_point_with_empty_observations():
    base = gen_chain([1.0, 1.0, 2.0])
    inst = make_instance(base.xstar.entries, MeasurementOp(kind="omega", omega=()))
    hand = SdpResult(m_opt=inst.mstar(), y=np.zeros(0), s=SymMat(np.eye(3)),
                     primal_res=0.0, dual_res=0.0, duality_gap=0.0,
                     status="optimal", iters=0, trace=inst.mstar().trace(),
                     history=())
    kkt = kkt_residuals(hand, inst)
    assert kkt.primal == 0.0
    assert kkt.complementarity == pytest.approx(inst.mstar().trace())


def test_empty_constraint_solve_returns_zero():
    base = gen_chain([1.0, 1.0, 2.0])
    inst = make_instance(base.xstar.entries, MeasurementOp(kind="omega", omega=()))
    res = solve_sdp(inst)
    assert res.status == "optimal" and res.trace == 0.0


def test_infeasible_constraint_detected():
    a = np.zeros((1, 2, 2))
    a[0, 0, 0] = 1.0
    res = solve_sdp_raw(a, np.array([-1.0]), 2, SdpOptions(max_iters=200))
    assert res.status == "infeasible_detected"


def test_solver_beats_feasible_witnesses():
    # a feasible strictly-better point exists, so the optimum must not exceed it
    inst = gen_chain([1.0, 1.0, 1.0, 2.0])
    res = solve_sdp(inst)
    assert res.trace <= 6.0 + 1e-6


def test_recovery_check_validation_and_exact_match():
    inst = gen_chain([1.0, 1.0, 2.0])
    res = solve_sdp(inst)
    exact = SdpResult(m_opt=inst.mstar(), y=res.y, s=res.s, primal_res=0.0,
                      dual_res=0.0, duality_gap=0.0, status="optimal", iters=0,
                      trace=inst.mstar().trace(), history=())
    rec = recovery_check(exact, inst.mstar(), tol=1e-10)
    assert rec.recovered and rec.frob_gap == 0.0 and rec.trace_gap == 0.0
    with pytest.raises(InvalidInput):
        recovery_check(res, SymMat(np.eye(5)))


def test_result_file_schema(tmp_path):
    import json

    inst = gen_chain([1.0, 1.0, 2.0])
    res = solve_sdp(inst)
    rec = recovery_check(res, inst.mstar())
    path = tmp_path / "res.json"
    save_sdp_result(path, res, rec)
    payload = json.loads(path.read_text())
    assert set(payload) == {"status", "trace", "frob_gap", "trace_gap",
                            "primal_res", "dual_res", "gap", "iters"}
    assert payload["status"] == "optimal"


def test_options_validation():
    with pytest.raises(InvalidInput):
        SdpOptions(feas_tol=0.0)
    with pytest.raises(InvalidInput):
        SdpOptions(step_fraction=1.0)
    with pytest.raises(InvalidInput):
        SdpOptions(mu_reduction=0.0)
