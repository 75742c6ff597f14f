"""Explicit feasibility witnesses: matrices that satisfy the observed
entries with strictly smaller trace than the ground truth, certifiying
that trace minimization cannot return the truth.

Feasibility is always re-verified numerically against the instance; a
constructed matrix that misses an observed entry is reported with
feasible=False rather than trusted. Sign-indefinite inputs are
canonicalized to |x*| for the cycle and three-node constructions, since
their inequalities implicitly assume positive entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditionNotMet, InvalidInput
from .instances import Instance, apply_op, gen_chain, gen_cycle
from .linalg import SymMat, psd_check_chol, sym_eig

PSD_MARGIN_TOL = 1e-9
MATCH_TOL = 1e-9


@dataclass(frozen=True)
class Certificate:
    m_hat: SymMat
    feasible: bool
    psd_margin: float      # smallest eigenvalue of m_hat
    trace_hat: float
    trace_star: float
    strict: bool           # trace_hat < trace_star by construction


def _evaluate(m_hat: SymMat, inst: Instance, strict: bool) -> Certificate:
    mismatch = float(np.max(np.abs(apply_op(inst.op, m_hat) - inst.b), initial=0.0))
    margin = float(sym_eig(m_hat).eigenvalues[-1])
    chol_ok = psd_check_chol(m_hat, PSD_MARGIN_TOL)
    eig_ok = margin >= -PSD_MARGIN_TOL
    feasible = bool(mismatch <= MATCH_TOL and eig_ok and chol_ok)
    return Certificate(m_hat=m_hat, feasible=feasible, psd_margin=margin,
                       trace_hat=m_hat.trace(), trace_star=inst.mstar().trace(),
                       strict=bool(strict))


def verify_certificate(cert: Certificate, inst: Instance) -> Certificate:
    """Recheck observed-entry match, PSD margin, and traces; idempotent.

    A mismatch is reported by flipping feasible to False, never by raising.
    strict restates trace_hat < trace_star on the recomputed values.
    """
    if cert.m_hat.n != inst.n:
        raise InvalidInput("dimension mismatch")
    out = _evaluate(cert.m_hat, inst, strict=False)
    strict = out.trace_hat < out.trace_star - 1e-12
    return Certificate(m_hat=out.m_hat, feasible=out.feasible,
                       psd_margin=out.psd_margin, trace_hat=out.trace_hat,
                       trace_star=out.trace_star, strict=bool(strict))


def chain_certificate(xstar, j: int, k: int) -> Certificate:
    """Two-rank-one witness for a chain instance.

    Positions j < k are 1-based with j, k > 2 and 0 < x*_j <= x*_k; the
    construction copies x* except y_k = x*_j and patches positions {j, k}
    with z_j = z_k = (x*_j x*_k - x*_j^2)^(1/2). It satisfies every
    observed entry when k is the last node and j its predecessor; the
    returned feasible flag reports the actual check.
    """
    x = np.asarray(xstar, dtype=float).ravel()
    n = x.size
    j, k = int(j), int(k)
    if not (2 < j < k <= n):
        raise InvalidInput("need indices 2 < j < k <= n (1-based)")
    xj, xk = x[j - 1], x[k - 1]
    if not (xj > 0 and xk > 0):
        raise InvalidInput("entries at j and k must be positive")
    if xk < xj:
        raise InvalidInput("need x*_k >= x*_j")
    inst = gen_chain(x)
    y = x.copy()
    y[k - 1] = xj
    z = np.zeros(n)
    z[j - 1] = z[k - 1] = np.sqrt(abs(xj * xk) - xj ** 2)
    m_hat = SymMat(np.outer(y, y) + np.outer(z, z))
    return _evaluate(m_hat, inst, strict=xk > xj)


def example1_certificate(xstar) -> Certificate:
    """Three-node chain witness: free diagonal entries are replaced by
    |x*_2 x*_3| and the unobserved corner by |x*_1 x*_2|.

    Applicable iff |x*_3| >= |x*_2|; strict iff the inequality is strict.
    """
    x = np.abs(np.asarray(xstar, dtype=float).ravel())
    if x.size != 3:
        raise InvalidInput("expected a length-3 ground truth")
    if np.any(x == 0):
        raise InvalidInput("entries must be nonzero")
    if x[2] < x[1]:
        raise ConditionNotMet("requires |x*_3| >= |x*_2|")
    inst = gen_chain(x)
    m_hat = np.array([
        [x[0] ** 2, x[0] * x[1], x[0] * x[1]],
        [x[0] * x[1], x[1] * x[2], x[1] * x[2]],
        [x[0] * x[1], x[1] * x[2], x[1] * x[2]],
    ])
    return _evaluate(SymMat(m_hat), inst, strict=x[2] > x[1])


def example2_certificate(xstar) -> Certificate:
    """Three-cycle rank-2 witness with diagonal
    (x1(x3-x2), x2(x3-x1), x3(x1+x2)); needs x sorted ascending and
    x3 >= x1 + x2, strict when strict.
    """
    x = np.abs(np.asarray(xstar, dtype=float).ravel())
    if x.size != 3:
        raise InvalidInput("expected a length-3 ground truth")
    if np.any(x == 0):
        raise InvalidInput("entries must be nonzero")
    if not (x[0] <= x[1] <= x[2]):
        raise InvalidInput("entries must be sorted ascending")
    if x[2] < x[0] + x[1]:
        raise ConditionNotMet("requires x*_3 >= x*_1 + x*_2")
    inst = gen_cycle(x)
    m_hat = np.array([
        [x[0] * (x[2] - x[1]), x[0] * x[1], x[0] * x[2]],
        [x[0] * x[1], x[1] * (x[2] - x[0]), x[1] * x[2]],
        [x[0] * x[2], x[1] * x[2], x[2] * (x[0] + x[1])],
    ])
    return _evaluate(SymMat(m_hat), inst, strict=x[2] > x[0] + x[1])


def cycle_odd_even_split(x, base: int):
    """(sum of odd-position squares, sum of even-position squares) after
    relabeling so that `base` becomes node 0."""
    v = np.roll(x, -base)
    odd = float(np.sum(v[1::2] ** 2))
    even = float(np.sum(v[0::2] ** 2))
    return odd, even


def cycle_certificate(xstar) -> Certificate:
    """Rank-one witness for an odd cycle with trace 2 sqrt(S_odd S_even).

    Tries every base node; applicable when some rotation has
    S_odd > S_even. The construction scales even positions up by
    s = (S_odd/S_even)^(1/4) and odd positions down by 1/s, which meets
    every path edge but overshoots the wrap-around edge by s^2; the
    feasible flag therefore comes back False whenever the witness departs
    from the ground truth, and the advertised trace is not attained by
    trace minimization (see README on this known defect of the
    construction). The trace value itself matches the closed form.
    """
    x = np.abs(np.asarray(xstar, dtype=float).ravel())
    n = x.size
    if n < 3 or n % 2 == 0:
        raise InvalidInput("cycle length must be odd and >= 3")
    if np.any(x == 0):
        raise InvalidInput("entries must be nonzero")
    best = None
    for base in range(n):
        odd, even = cycle_odd_even_split(x, base)
        if odd > even and (best is None or odd > best[1]):
            best = (base, odd, even)
    if best is None:
        raise ConditionNotMet("no rotation satisfies S_odd > S_even")
    base, odd, even = best
    v = np.roll(x, -base)
    m00 = v[0] ** 2 * np.sqrt(odd / even)
    y_rot = np.empty(n)
    y_rot[0] = np.sqrt(m00)
    k = (n - 1) // 2
    for t in range(1, k + 1):
        y_rot[2 * t - 1] = np.sqrt(v[2 * t - 1] ** 2 * v[0] ** 2 / m00)
        y_rot[2 * t] = np.sqrt(v[2 * t] ** 2 / v[0] ** 2 * m00)
    y = np.roll(y_rot, base)
    inst = gen_cycle(x)
    return _evaluate(SymMat(np.outer(y, y)), inst, strict=True)
