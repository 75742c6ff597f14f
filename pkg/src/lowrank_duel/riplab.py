"""Restricted-isometry machinery for the trace-minimization route.

Contents: the eigenvalue-grouped block decomposition of vec(M* - M), the
analytic sufficient bound on the RIP constant and its rank-dependent
improvement, the eta closed form together with an independent bisection
mechanization, the singular-value comparison lemma for PSD pairs, and the
explicit constants of the epsilon-scaled full operator.

Deciding delta_{2r}-RIP for an arbitrary operator is NP-hard, so nothing
here certifies RIP of general operators; only closed-form constants for
the structured ones are computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .instances import MeasurementOp
from .linalg import SymMat, psd_check, sym_eig, vec

BLOCK_ORTHO_TOL = 1e-10
WEYL_SLACK = 1e-10
RANK_SVAL_TOL = 1e-8


@dataclass(frozen=True)
class EBlocks:
    """vec(M* - M) split into rank-r eigenvalue groups.

    Blocks are mutually orthogonal and sum to e; e2r collects the two
    leading groups and ec the tail, so ||e||^2 = ||e2r||^2 + ||ec||^2.
    """

    e: np.ndarray
    blocks: tuple
    e2r: np.ndarray
    ec: np.ndarray
    l: int
    n: int
    r: int

    def norms(self):
        return (float(np.linalg.norm(self.e)),
                float(np.linalg.norm(self.e2r)),
                float(np.linalg.norm(self.ec)))


def decompose_e(mstar: SymMat, m: SymMat, r: int) -> EBlocks:
    """Group the eigenpairs of M* - M into l = ceil(n/r) blocks of r,
    ordered by absolute eigenvalue, and vectorize each group."""
    if mstar.n != m.n:
        raise InvalidInput("dimension mismatch")
    if r < 1 or r > mstar.n:
        raise InvalidInput("need 1 <= r <= n")
    n = mstar.n
    diff = SymMat(mstar.entries - m.entries)
    dec = sym_eig(diff, mode="descending_absolute")
    l = math.ceil(n / r)
    blocks = []
    for i in range(l):
        lo, hi = i * r, min((i + 1) * r, n)
        q = dec.eigenvectors[:, lo:hi]
        lam = dec.eigenvalues[lo:hi]
        blocks.append(vec((q * lam) @ q.T))
    e = vec(diff)
    e2r = blocks[0] + (blocks[1] if l > 1 else 0.0)
    ec = np.zeros(n * n)
    for i in range(2, l):
        ec = ec + blocks[i]
    return EBlocks(e=e, blocks=tuple(blocks), e2r=np.asarray(e2r), ec=ec, l=l, n=n, r=r)


def _check_rank_range(n: int, r: int):
    if n < 1 or r < 1:
        raise InvalidInput("n and r must be positive")
    if 2 * r > n:
        raise InvalidInput("need r <= n/2")


def delta_lb_analytic(n: int, r: int) -> float:
    """Closed-form lower bound 2r / (n + (n-2r)(2l-5)) with l = ceil(n/r).

    Equals 1 at r = n/2 and decays like 2r/(2n(l-2)) for small rank.
    """
    _check_rank_range(n, r)
    l = -(-n // r)
    return 2 * r / (n + (n - 2 * r) * (2 * l - 5))


def sdp_sufficient_rip(n: int, r: int) -> float:
    """Sufficient RIP threshold for exact trace-minimization recovery:
    the rank-dependent bound never falls below the universal 1/2."""
    return max(0.5, delta_lb_analytic(n, r))


def _cd_squares(eb: EBlocks):
    ec_sq = float(np.dot(eb.ec, eb.ec))
    c2 = 2.0 * (eb.l - 3) * ec_sq
    d2 = 2.0 * ec_sq
    return c2, d2


def eta_closed_form(eb: EBlocks) -> float:
    """min{1, (c^2 + d^2) / (2||e||^2 + c^2 - d^2)} with
    c^2 = 2(l-3)||ec||^2 and d^2 = 2||ec||^2; zero when the tail vanishes."""
    e_sq = float(np.dot(eb.e, eb.e))
    if e_sq == 0.0:
        raise InvalidInput("e must be nonzero")
    c2, d2 = _cd_squares(eb)
    if c2 + d2 == 0.0:
        return 0.0
    return min(1.0, (c2 + d2) / (2.0 * e_sq + c2 - d2))


def eta_numeric(eb: EBlocks, tol: float = 1e-10) -> float:
    """Largest feasible eta by bisection.

    Feasibility of {exists H with eta*I <= H <= I and
    e^T H e <= (1-eta)/2 c^2 + (1+eta)/2 d^2} reduces to checking the
    interval minimum H = eta*I, i.e. eta ||e||^2 <= rhs(eta); this is the
    independent mechanization the closed form is validated against.
    """
    e_sq = float(np.dot(eb.e, eb.e))
    if e_sq == 0.0:
        raise InvalidInput("e must be nonzero")
    c2, d2 = _cd_squares(eb)

    def feasible(eta):
        return eta * e_sq <= (1.0 - eta) / 2.0 * c2 + (1.0 + eta) / 2.0 * d2

    if not feasible(0.0):
        return 0.0
    if feasible(1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def delta_lb_numeric(eb: EBlocks, tol: float = 1e-10) -> float:
    """(1 - eta)/(1 + eta) at the bisection value of eta."""
    eta = eta_numeric(eb, tol)
    return (1.0 - eta) / (1.0 + eta)


def matrix_rank_psd(m: SymMat, tol: float = RANK_SVAL_TOL) -> int:
    svals = np.linalg.svd(m.entries, compute_uv=False)
    return int(np.sum(svals > tol))


def verify_weyl_lemma(mstar: SymMat, m: SymMat, r: int,
                      slack: float = WEYL_SLACK) -> bool:
    """For PSD M, M* with tr(M) <= tr(M*) and rank(M*) = r, the r largest
    singular values of M* - M dominate the sum of the remaining ones."""
    if mstar.n != m.n:
        raise InvalidInput("dimension mismatch")
    if not psd_check(mstar) or not psd_check(m):
        raise InvalidInput("both matrices must be PSD")
    if m.trace() > mstar.trace() + 1e-12 * max(1.0, abs(mstar.trace())):
        raise InvalidInput("need tr(M) <= tr(M*)")
    if matrix_rank_psd(mstar) != r:
        raise InvalidInput(f"M* must have rank exactly {r}")
    svals = np.sort(np.abs(np.linalg.eigvalsh(mstar.entries - m.entries)))[::-1]
    return bool(svals[:r].sum() + slack >= svals[r:].sum())


@dataclass(frozen=True)
class RipConstants:
    """RIP constant of the epsilon-scaled full operator.

    computed: (1 - eps^2)/(1 + eps^2), the constant of the optimally
    rescaled operator (the squared-norm ratio over all matrices lies in
    [eps^2, 1], and centering that interval is optimal).
    companion_linear: (1 - |eps|)/(1 + |eps|), the constant quoted for the
    same operator elsewhere; it treats the entry scale rather than the
    squared norm. The two disagree for 0 < |eps| < 1 -- see README.
    """

    computed: float
    companion_linear: float


def rip_constant_explicit(op: MeasurementOp) -> RipConstants:
    if op.kind != "omega_scaled":
        raise InvalidInput("explicit RIP constants exist only for omega_scaled")
    eps = abs(op.epsilon)
    computed = abs(1.0 - eps * eps) / (1.0 + eps * eps)
    companion = abs(1.0 - eps) / (1.0 + eps)
    return RipConstants(computed=computed, companion_linear=companion)


def sample_feasible_pair(n: int, r: int, rng) -> tuple:
    """Random (M*, M): M* = F F^T with Gaussian F (rank r a.s.), M a
    Wishart draw rescaled so tr(M) = 0.9 tr(M*)."""
    _check_rank_range(n, r)
    f = rng.normal(size=(n, r))
    mstar = SymMat(f @ f.T)
    w = rng.normal(size=(n, n))
    m = w @ w.T
    m *= 0.9 * mstar.trace() / np.trace(m)
    return mstar, SymMat(m)


def sample_eblocks(n: int, r: int, rng) -> EBlocks:
    mstar, m = sample_feasible_pair(n, r, rng)
    return decompose_e(mstar, m, r)
