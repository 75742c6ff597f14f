"""Dense primal-dual interior-point solver for trace minimization over the
PSD cone under linear measurements:

    min tr(M)  s.t.  <A_i, M> = b_i (i = 1..d),  M >= 0.

Mehrotra-style predictor-corrector with the first-order (XZ) Newton
direction and a dense Cholesky of the d x d Schur complement. Observed
entries are deduplicated to one scalar constraint per unordered pair, which
keeps the constraint Jacobian full rank on completion instances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InvalidInput, NumericalFailure
from .instances import Instance, MeasurementOp, scale_weights
from .linalg import SymMat

STATUSES = ("optimal", "max_iters", "infeasible_detected")


@dataclass(frozen=True)
class SdpOptions:
    max_iters: int = 100
    mu_reduction: float = 0.2       # centering floor when progress stalls
    feas_tol: float = 1e-9          # scaled primal/dual residual target
    gap_tol: float = 1e-9           # scaled complementarity target
    step_fraction: float = 0.98     # fraction-to-boundary

    def __post_init__(self):
        if self.feas_tol <= 0 or self.gap_tol <= 0:
            raise InvalidInput("tolerances must be positive")
        if not (0 < self.mu_reduction < 1):
            raise InvalidInput("mu_reduction must lie in (0,1)")
        if not (0 < self.step_fraction < 1):
            raise InvalidInput("step_fraction must lie in (0,1)")
        if self.max_iters < 1:
            raise InvalidInput("max_iters must be >= 1")


@dataclass(frozen=True)
class SdpResult:
    m_opt: SymMat
    y: np.ndarray
    s: SymMat
    primal_res: float
    dual_res: float
    duality_gap: float
    status: str
    iters: int
    trace: float
    # (tr M, b.y, mu) per iteration, for the weak-duality invariant
    history: tuple


@dataclass(frozen=True)
class RecoveryReport:
    recovered: bool
    frob_gap: float
    trace_gap: float


@dataclass(frozen=True)
class KktReport:
    primal: float           # ||A(M) - b||_2
    dual: float             # ||A*(y) + S - I||_F
    complementarity: float  # <M, S>


def constraint_system(op: MeasurementOp, n: int, b: np.ndarray):
    """Deduplicated sensing matrices and right-hand side for the SDP.

    omega: one constraint per unordered observed pair. omega_scaled: one
    scaled constraint per unordered pair of the full grid. general: the
    explicit sensing list, as given.
    """
    if op.kind == "omega":
        amats = []
        for i, j in op.pairs():
            a = np.zeros((n, n))
            if i == j:
                a[i, i] = 1.0
            else:
                a[i, j] = a[j, i] = 0.5
            amats.append(a)
        stacked = np.stack(amats) if amats else np.zeros((0, n, n))
        return stacked, np.asarray(b, dtype=float)
    if op.kind == "omega_scaled":
        w = scale_weights(op, n)
        bmat = np.asarray(b, dtype=float).reshape(n, n)
        amats, rhs = [], []
        for i in range(n):
            for j in range(i, n):
                a = np.zeros((n, n))
                if i == j:
                    a[i, i] = w[i, i]
                else:
                    a[i, j] = a[j, i] = 0.5 * w[i, j]
                amats.append(a)
                rhs.append(bmat[i, j])
        return np.stack(amats), np.array(rhs)
    return np.stack([a.entries for a in op.sensing]), np.asarray(b, dtype=float)


def _chol_with_ridge(mat, what):
    """Cholesky factorization, escalating a diagonal ridge on failure."""
    scale = max(float(np.mean(np.abs(np.diag(mat)))), 1e-300)
    ridge = 0.0
    for _ in range(8):
        try:
            return cho_factor(mat + ridge * np.eye(mat.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            ridge = 1e-14 * scale if ridge == 0.0 else ridge * 100.0
            if ridge > 1e-4 * scale:
                break
    raise NumericalFailure(f"{what} system singular beyond ridge recovery")


def _max_step(p, dp):
    """sup {alpha >= 0 : p + alpha dp >= 0} for PD p."""
    lower = np.linalg.cholesky(p)
    t = np.linalg.solve(lower, np.linalg.solve(lower, dp).T).T
    lam = np.linalg.eigvalsh(0.5 * (t + t.T))[0]
    if lam >= -1e-16:
        return np.inf
    return -1.0 / lam


def solve_sdp_raw(amats, b, n: int, opts: SdpOptions = None):
    """Interior-point solve of min tr(M) s.t. <A_i,M> = b_i, M >= 0.

    Returns an SdpResult. Deterministic: no randomness anywhere, so a
    repeated solve reproduces the iterate sequence bit for bit.
    """
    opts = opts or SdpOptions()
    amats = np.asarray(amats, dtype=float)
    b = np.asarray(b, dtype=float)
    d = amats.shape[0]
    eye = np.eye(n)
    if d == 0:
        # unconstrained trace minimization over the cone: the zero matrix
        zero = SymMat(np.zeros((n, n)))
        return SdpResult(m_opt=zero, y=np.zeros(0), s=SymMat(eye),
                         primal_res=0.0, dual_res=0.0, duality_gap=0.0,
                         status="optimal", iters=0, trace=0.0,
                         history=((0.0, 0.0, 0.0),))

    def apply_a(mat):
        return np.tensordot(amats, mat, axes=([1, 2], [0, 1]))

    def apply_at(yv):
        return np.tensordot(yv, amats, axes=(0, 0))

    tau = max(1.0, float(np.max(np.abs(b))) if d else 1.0)
    m = tau * eye
    s = eye.copy()
    y = np.zeros(d)

    b_scale = 1.0 + float(np.linalg.norm(b))
    c_scale = 1.0 + float(np.sqrt(n))
    history = []
    status = "max_iters"
    iters = 0
    prev_mu = None

    def measures():
        rp = b - apply_a(m)
        rd = eye - s - apply_at(y)
        tr_m = float(np.trace(m))
        by = float(b @ y)
        comp = float(np.sum(m * s))
        return (rp, rd, comp / n,
                float(np.linalg.norm(rp)) / b_scale,
                float(np.linalg.norm(rd, "fro")) / c_scale,
                comp / (1.0 + abs(tr_m) + abs(by)),
                tr_m, by)

    for it in range(1, opts.max_iters + 1):
        rp, rd, mu, primal_res, dual_res, gap, tr_m, by = measures()
        history.append((tr_m, by, mu))
        if primal_res <= opts.feas_tol and dual_res <= opts.feas_tol and gap <= opts.gap_tol:
            status = "optimal"
            break

        # dual improving ray => primal infeasible
        ynorm = float(np.linalg.norm(y))
        if ynorm > 1e8 * b_scale:
            yhat = y / ynorm
            ray = -apply_at(yhat)
            if float(b @ yhat) > 1e-8 and np.linalg.eigvalsh(0.5 * (ray + ray.T))[0] >= -1e-8:
                status = "infeasible_detected"
                break

        s_c = _chol_with_ridge(s, "slack")
        sinv = cho_solve(s_c, eye)
        sinv = 0.5 * (sinv + sinv.T)

        k = amats @ sinv
        w = m @ k
        schur = np.tensordot(amats, np.swapaxes(w, 1, 2), axes=([1, 2], [1, 2]))
        schur = 0.5 * (schur + schur.T)
        schur_c = _chol_with_ridge(schur, "Newton")

        m_rd_sinv = m @ rd @ sinv

        def direction(sigma_mu, correction):
            g = -m - m_rd_sinv
            if sigma_mu:
                g = g + sigma_mu * sinv
            if correction is not None:
                g = g - correction @ sinv
            dy = cho_solve(schur_c, rp - apply_a(g))
            ds = rd - apply_at(dy)
            dm = g + m @ apply_at(dy) @ sinv
            return 0.5 * (dm + dm.T), dy, ds

        dm_a, dy_a, ds_a = direction(0.0, None)
        ap_a = min(1.0, _max_step(m, dm_a))
        ad_a = min(1.0, _max_step(s, ds_a))
        mu_aff = max(float(np.sum((m + ap_a * dm_a) * (s + ad_a * ds_a))) / n, 0.0)
        sigma = min(max((mu_aff / mu) ** 3, 0.0), 1.0) if mu > 0 else 0.0
        if prev_mu is not None and mu > 0.9 * prev_mu:
            sigma = max(sigma, opts.mu_reduction)
        prev_mu = mu

        dm, dy, ds = direction(sigma * mu, dm_a @ ds_a)
        ap = min(1.0, opts.step_fraction * _max_step(m, dm))
        ad = min(1.0, opts.step_fraction * _max_step(s, ds))
        m_new = m + ap * dm
        s_new = s + ad * ds
        m = 0.5 * (m_new + m_new.T)
        s = 0.5 * (s_new + s_new.T)
        y = y + ad * dy
        iters = it
    else:
        _, _, _, primal_res, dual_res, gap, _, _ = measures()

    return SdpResult(m_opt=SymMat(m), y=y, s=SymMat(s),
                     primal_res=primal_res, dual_res=dual_res, duality_gap=gap,
                     status=status, iters=iters, trace=float(np.trace(m)),
                     history=tuple(history))


def solve_sdp(inst: Instance, opts: SdpOptions = None) -> SdpResult:
    amats, b = constraint_system(inst.op, inst.n, inst.b)
    return solve_sdp_raw(amats, b, inst.n, opts)


def recovery_check(res: SdpResult, mstar: SymMat, tol: float = 1e-5) -> RecoveryReport:
    """Compare the solver output against a reference matrix.

    recovered holds iff the relative Frobenius gap is within tol;
    trace_gap is tr(M*) - tr(m_opt), positive when the solver found a
    strictly better-than-truth feasible point.
    """
    if res.m_opt.n != mstar.n:
        raise InvalidInput("dimension mismatch")
    denom = mstar.frob()
    if denom == 0:
        raise InvalidInput("reference matrix must be nonzero")
    gap = float(np.linalg.norm(res.m_opt.entries - mstar.entries, "fro") / denom)
    return RecoveryReport(recovered=bool(gap <= tol), frob_gap=gap,
                          trace_gap=float(mstar.trace() - res.trace))


def kkt_residuals(res: SdpResult, inst: Instance) -> KktReport:
    """Raw KKT residuals of a result on its instance."""
    amats, b = constraint_system(inst.op, inst.n, inst.b)
    m = res.m_opt.entries
    primal = float(np.linalg.norm(np.tensordot(amats, m, axes=([1, 2], [0, 1])) - b))
    at_y = np.tensordot(res.y, amats, axes=(0, 0))
    dual = float(np.linalg.norm(at_y + res.s.entries - np.eye(inst.n), "fro"))
    comp = float(np.sum(m * res.s.entries))
    return KktReport(primal=primal, dual=dual, complementarity=comp)


def save_sdp_result(path, res: SdpResult, recovery: RecoveryReport = None) -> None:
    payload = {
        "status": res.status,
        "trace": res.trace,
        "frob_gap": None if recovery is None else recovery.frob_gap,
        "trace_gap": None if recovery is None else recovery.trace_gap,
        "primal_res": res.primal_res,
        "dual_res": res.dual_res,
        "gap": res.duality_gap,
        "iters": res.iters,
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=1)
        f.write("\n")
