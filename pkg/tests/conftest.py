"""Shared oracles and instance factories for the test suite."""

import numpy as np
import pytest

from lowrank_duel.bm import bm_objective
from lowrank_duel.instances import (MeasurementOp, canonical_low_complexity_graph,
                                    gen_chain, gen_cycle, gen_low_complexity,
                                    make_instance, perturbed_operator)


def fd_gradient(inst, x, h=1e-5):
    """Central-difference gradient of the factored objective."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (bm_objective(xp, inst) - bm_objective(xm, inst)) / (2 * h)
    return g


def fd_hessian(inst, x, h=1e-4):
    """Central differences of the exact gradient."""
    from lowrank_duel.bm import bm_gradient

    x = np.asarray(x, dtype=float)
    nr = x.size
    hess = np.zeros((nr, nr))
    flat_index = list(np.ndindex(*x.shape))
    for col, idx in enumerate(flat_index):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        hess[:, col] = ((bm_gradient(xp, inst) - bm_gradient(xm, inst)) / (2 * h)).ravel()
    return 0.5 * (hess + hess.T)


def random_sym(n, rng, scale=1.0):
    a = rng.normal(size=(n, n)) * scale
    return 0.5 * (a + a.T)


def family_instances(seed=0):
    """One representative instance per operator family."""
    rng = np.random.default_rng(seed)
    chain = gen_chain([1.0, 1.0, 2.0])
    cycle = gen_cycle([1.0, 1.0, 3.0])
    lowc = gen_low_complexity(canonical_low_complexity_graph(5), 5, 1,
                              seed=seed + 1, sigma=0.1)
    scaled = make_instance(chain.xstar.entries,
                           perturbed_operator(chain.op, 0.25))
    mats = [random_sym(3, rng) for _ in range(4)]
    general = make_instance(rng.normal(size=(3, 1)),
                            MeasurementOp(kind="general", sensing=tuple(mats)))
    return {"chain": chain, "cycle": cycle, "low_complexity": lowc,
            "omega_scaled": scaled, "general": general}


@pytest.fixture(scope="session")
def families():
    return family_instances()
