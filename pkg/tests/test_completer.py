import numpy as np
import pytest

from lowrank_duel.completer import cross_check, propagate_complete
from lowrank_duel.errors import InconsistencyError, InvalidInput
from lowrank_duel.instances import (BlockSparsityGraph, MeasurementOp,
                                    canonical_low_complexity_graph, gen_chain,
                                    gen_cycle, gen_low_complexity,
                                    induced_measurement_set, make_instance)


def test_chain_completes_exactly():
    inst = gen_chain([1.0, 1.0, 2.0])
    out = propagate_complete(inst)
    assert out.resolved and not out.unresolved_blocks
    assert np.allclose(out.m.entries, inst.mstar().entries, atol=1e-12)


def test_chain_with_signs():
    inst = gen_chain([1.0, -1.5, 2.0, -0.5])
    out = propagate_complete(inst)
    assert out.resolved
    assert np.allclose(out.m.entries, inst.mstar().entries, atol=1e-10)


def test_odd_cycle_without_diagonal_completes():
    inst = gen_cycle([1.0, 3.0, 1.0, 3.0, 1.0])
    out = propagate_complete(inst)
    assert out.resolved
    assert np.allclose(out.m.entries, inst.mstar().entries, atol=1e-10)


def test_odd_cycle_sign_indefinite():
    inst = gen_cycle([1.0, -2.0, 0.5, 1.5, -1.0])
    out = propagate_complete(inst)
    assert out.resolved
    assert np.allclose(out.m.entries, inst.mstar().entries, atol=1e-10)


def test_low_complexity_rank2_completion():
    g = canonical_low_complexity_graph(7)
    inst = gen_low_complexity(g, 14, 2, seed=5, sigma=0.3)
    out = propagate_complete(inst)
    assert out.resolved
    m = out.m.entries
    assert np.allclose(m, inst.mstar().entries, atol=1e-8)
    svals = np.linalg.svd(m, compute_uv=False)
    assert svals[2] / svals[0] <= 1e-8                 # rank <= r
    for (i, j), v in zip(inst.op.pairs(), inst.b):
        assert abs(m[i, j] - v) <= 1e-10


def test_traversal_order_invariance():
    g = canonical_low_complexity_graph(7)
    inst = gen_low_complexity(g, 7, 1, seed=8, sigma=0.2)
    bfs = propagate_complete(inst, order="bfs")
    dfs = propagate_complete(inst, order="dfs")
    assert np.linalg.norm(bfs.m.entries - dfs.m.entries, "fro") <= 1e-9
    with pytest.raises(InvalidInput):
        propagate_complete(inst, order="random")


def test_disconnected_graph_left_unresolved():
    g = BlockSparsityGraph(m=4, e1=((0, 0), (0, 1), (2, 3)))
    omega = induced_measurement_set(g, 4, 1)
    x = np.array([1.0, 2.0, 1.0, 3.0])
    inst = make_instance(x, MeasurementOp(kind="omega", omega=tuple(omega)), graph=g)
    out = propagate_complete(inst)
    assert not out.resolved
    assert out.unresolved_blocks
    # the anchored component is still completed correctly
    assert np.allclose(out.m.entries[:2, :2], inst.mstar().entries[:2, :2])


def test_requires_block_structure_and_entrywise_ops():
    inst = gen_chain([1.0, 1.0, 2.0])
    bare = make_instance(inst.xstar.entries, inst.op)      # no graph attached
    with pytest.raises(InvalidInput):
        propagate_complete(bare)


class _Doctored:
    def __init__(self, inst, slot, value):
        self.graph = inst.graph
        self.n, self.r = inst.n, inst.r
        self.op = inst.op
        self.b = inst.b.copy()
        self.b[slot] = value
        self.xstar = inst.xstar


def test_inconsistent_observations_raise():
    # flipping one edge sign makes the alternating cycle product negative
    inst = gen_cycle([1.0, 3.0, 1.0, 3.0, 1.0])
    with pytest.raises(InconsistencyError):
        propagate_complete(_Doctored(inst, 0, -3.0))

    # diagonals plus cycle edges are redundant: corrupting one diagonal
    # contradicts the value propagated around the loop
    g = canonical_low_complexity_graph(5)
    lc = gen_low_complexity(g, 5, 1, seed=2, sigma=0.2)
    diag_slot = next(i for i, (a, b) in enumerate(lc.op.pairs()) if a == b == 1)
    with pytest.raises(InconsistencyError):
        propagate_complete(_Doctored(lc, diag_slot, lc.b[diag_slot] * 4.0))


def test_cross_check_low_complexity():
    g = canonical_low_complexity_graph(5)
    inst = gen_low_complexity(g, 10, 2, seed=12, sigma=0.4, omega_from_g1_only=True)
    report = cross_check(inst)
    assert report.completer_resolved
    assert report.sdp_status == "optimal"
    assert report.agreement <= 1e-5
    assert report.completer_frob_gap <= 1e-8


def test_cross_check_full_observation():
    base = gen_chain([1.0, 1.0, 2.0])
    g = BlockSparsityGraph(m=3, e1=tuple((i, j) for i in range(3)
                                         for j in range(i, 3)))
    omega = induced_measurement_set(g, 3, 1)
    inst = make_instance(base.xstar.entries,
                         MeasurementOp(kind="omega", omega=tuple(omega)), graph=g)
    report = cross_check(inst)
    assert report.agreement <= 1e-6
    assert report.completer_frob_gap <= 1e-12


def test_cross_check_chain_shows_sdp_departure():
    inst = gen_chain([1.0, 1.0, 2.0])
    report = cross_check(inst)
    assert report.completer_frob_gap <= 1e-10       # oracle nails the truth
    assert report.sdp_frob_gap > 1e-3               # trace minimization does not
    assert report.agreement == pytest.approx(report.sdp_frob_gap, rel=1e-6)
