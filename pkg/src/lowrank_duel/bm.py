"""Factorized objective f(X) on M = X X^T, its exact derivatives, a
gradient-descent solver, and second-order criticality classification.

Objective convention: for entrywise observations the squared loss weights
are 1/4 per observed diagonal entry and 1/2 per unordered off-diagonal
pair; scaled-full and explicit-sensing operators use f = ||A(X X^T)-b||^2/2.
Positive rescaling changes neither stationary points nor their
classification, so the convention only matters when comparing raw
objective values.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DivergenceError, InvalidInput
from .instances import Factor, Instance, scale_weights
from .linalg import SymMat, sym_eig

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:          # pragma: no cover - numba is an optional speedup
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap

STEP_RULES = ("backtracking", "fixed")


@dataclass(frozen=True)
class BmOptions:
    """Solver knobs. Defaults favor reproducibility over speed."""

    max_iters: int = 50_000
    step_rule: str = "backtracking"
    step_alpha: float = 1.0          # fixed step size, and backtracking warm start
    beta: float = 0.5                # backtracking shrink factor
    armijo_c: float = 1e-4
    grad_tol: float = 1e-9
    hess_tol: float = 1e-7
    recovery_tol: float = 1e-6       # relative Frobenius gap for "global"
    cluster_tol: float = 1e-4        # relative clustering radius on X X^T
    init_scale: float = None         # default ||M*||_F^(1/2) / sqrt(n)
    seed: int = 0
    jitter_restart: bool = False     # one jittered retry for stalled trials

    def __post_init__(self):
        if self.step_rule not in STEP_RULES:
            raise InvalidInput(f"unknown step rule {self.step_rule!r}")
        if self.grad_tol <= 0:
            raise InvalidInput("grad_tol must be positive")
        if self.hess_tol < 0:
            raise InvalidInput("hess_tol must be nonnegative")
        if not (0 < self.beta < 1):
            raise InvalidInput("beta must lie in (0,1)")
        if self.max_iters < 1:
            raise InvalidInput("max_iters must be >= 1")


@dataclass(frozen=True)
class CriticalityReport:
    """Where a point sits in the landscape and whether it is the truth."""

    grad_norm: float
    hess_min_eig: float
    crit_class: str        # not_converged | first_order_only | second_order
    recovery: str          # global | spurious
    frob_gap: float        # ||X X^T - M*||_F / ||M*||_F


@dataclass(frozen=True)
class GdTrace:
    iters: int
    converged: bool
    obj_initial: float
    obj_final: float
    grad_norm: float


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    seed: int
    iters: int
    report: CriticalityReport


@dataclass(frozen=True)
class LandscapeSummary:
    success_rate: float
    cluster_count: int            # distinct second-order points (by X X^T)
    spurious_cluster_count: int
    records: tuple


class _Loss:
    """Vectorized objective/gradient over a batch axis, plus the Hessian.

    Batch arrays have shape (T, n, r); the Hessian is assembled for a
    single point with row-major (node, column) flattening.
    """

    def __init__(self, inst: Instance):
        self.n, self.r = inst.n, inst.r
        self.kind = inst.op.kind
        if self.kind == "omega":
            pairs = inst.op.pairs()
            diag = [(i, v) for (i, j), v in zip(pairs, inst.b) if i == j]
            off = [(i, j, v) for (i, j), v in zip(pairs, inst.b) if i != j]
            self.di = np.array([i for i, _ in diag], dtype=int)
            self.bd = np.array([v for _, v in diag], dtype=float)
            self.pi = np.array([i for i, _, _ in off], dtype=int)
            self.pj = np.array([j for _, j, _ in off], dtype=int)
            self.bo = np.array([v for _, _, v in off], dtype=float)
        elif self.kind == "omega_scaled":
            w = scale_weights(inst.op, self.n)
            self.w2 = w * w
            self.target = inst.b.reshape(self.n, self.n) / w
        else:
            self.amats = np.stack([a.entries for a in inst.op.sensing])
            self.b = inst.b

    def value_grad(self, x):
        """(objective, gradient) for a batch x of shape (T, n, r)."""
        g = x @ np.swapaxes(x, 1, 2)
        if self.kind == "omega":
            w = np.zeros_like(g)
            f = np.zeros(x.shape[0])
            if self.di.size:
                rd = g[:, self.di, self.di] - self.bd
                f += 0.25 * np.sum(rd * rd, axis=1)
                w[:, self.di, self.di] = rd
            if self.pi.size:
                ro = g[:, self.pi, self.pj] - self.bo
                f += 0.5 * np.sum(ro * ro, axis=1)
                w[:, self.pi, self.pj] = ro
                w[:, self.pj, self.pi] = ro
            return f, w @ x
        if self.kind == "omega_scaled":
            d = g - self.target
            wd = self.w2 * d
            f = 0.5 * np.einsum("tij,tij->t", wd, d)
            return f, 2.0 * (wd @ x)
        res = np.einsum("dij,tij->td", self.amats, g) - self.b
        f = 0.5 * np.sum(res * res, axis=1)
        grad = 2.0 * np.einsum("td,dij->tij", res, self.amats) @ x
        return f, grad

    def value(self, x):
        return self.value_grad(x)[0]

    def hessian(self, x):
        """Dense (n r) x (n r) Hessian at a single point."""
        n, r = self.n, self.r
        h = np.zeros((n * r, n * r))

        def blk(i, j):
            return h[i * r:(i + 1) * r, j * r:(j + 1) * r]

        if self.kind == "omega":
            g = x @ x.T
            for i, b in zip(self.di, self.bd):
                blk(i, i)[:] += 2.0 * np.outer(x[i], x[i]) + (g[i, i] - b) * np.eye(r)
            for i, j, b in zip(self.pi, self.pj, self.bo):
                res = g[i, j] - b
                blk(i, j)[:] += res * np.eye(r) + np.outer(x[j], x[i])
                blk(j, i)[:] += res * np.eye(r) + np.outer(x[i], x[j])
                blk(i, i)[:] += np.outer(x[j], x[j])
                blk(j, j)[:] += np.outer(x[i], x[i])
            return h
        if self.kind == "omega_scaled":
            g = x @ x.T
            wd = self.w2 * (g - self.target)
            for i in range(n):
                for j in range(n):
                    blk(i, j)[:] += (2.0 * self.w2[i, j] * np.outer(x[j], x[i])
                                     + 2.0 * wd[i, j] * np.eye(r))
                blk(i, i)[:] += 2.0 * np.einsum("l,la,lb->ab", self.w2[i], x, x)
            return h
        g = x @ x.T
        eye_r = np.eye(r)
        for a, b in zip(self.amats, self.b):
            res = float(np.sum(a * g)) - b
            y = a @ x
            for i in range(n):
                for j in range(n):
                    blk(i, j)[:] += 4.0 * np.outer(y[i], y[j])
            h += 2.0 * res * np.kron(a, eye_r)
        return h


def _check_point(x, inst):
    a = x.entries if isinstance(x, Factor) else np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape != (inst.n, inst.r):
        raise InvalidInput(f"point shape {a.shape} does not match ({inst.n},{inst.r})")
    return a


def bm_objective(x, inst: Instance) -> float:
    a = _check_point(x, inst)
    return float(_Loss(inst).value(a[None])[0])


def bm_gradient(x, inst: Instance) -> np.ndarray:
    a = _check_point(x, inst)
    return _Loss(inst).value_grad(a[None])[1][0]


def bm_hessian(x, inst: Instance) -> np.ndarray:
    a = _check_point(x, inst)
    return _Loss(inst).hessian(a)


def classify_point(x, inst: Instance, opts: BmOptions = None) -> CriticalityReport:
    """Criticality class and recovery verdict at a point."""
    opts = opts or BmOptions()
    a = _check_point(x, inst)
    loss = _Loss(inst)
    grad_norm = float(np.linalg.norm(loss.value_grad(a[None])[1][0]))
    hess_min = float(sym_eig(SymMat(loss.hessian(a))).eigenvalues[-1])
    mstar = inst.mstar().entries
    gap = float(np.linalg.norm(a @ a.T - mstar, "fro") / np.linalg.norm(mstar, "fro"))
    if grad_norm > opts.grad_tol:
        crit = "not_converged"
    elif hess_min >= -opts.hess_tol:
        crit = "second_order"
    else:
        crit = "first_order_only"
    recovery = "global" if gap <= opts.recovery_tol else "spurious"
    return CriticalityReport(grad_norm=grad_norm, hess_min_eig=hess_min,
                             crit_class=crit, recovery=recovery, frob_gap=gap)


def _hess_min_eig(loss, a):
    return float(sym_eig(SymMat(loss.hessian(a))).eigenvalues[-1])


@njit(cache=True)
def _omega_eval(x, di, bd, pi, pj, bo, g):
    """Objective and gradient (written into g) for entrywise observations."""
    n, r = x.shape
    f = 0.0
    g[:] = 0.0
    for k in range(di.shape[0]):
        i = di[k]
        res = -bd[k]
        for a in range(r):
            res += x[i, a] * x[i, a]
        f += 0.25 * res * res
        for a in range(r):
            g[i, a] += res * x[i, a]
    for k in range(pi.shape[0]):
        i = pi[k]
        j = pj[k]
        res = -bo[k]
        for a in range(r):
            res += x[i, a] * x[j, a]
        f += 0.5 * res * res
        for a in range(r):
            g[i, a] += res * x[j, a]
            g[j, a] += res * x[i, a]
    return f


@njit(cache=True)
def _omega_value(x, di, bd, pi, pj, bo):
    n, r = x.shape
    f = 0.0
    for k in range(di.shape[0]):
        i = di[k]
        res = -bd[k]
        for a in range(r):
            res += x[i, a] * x[i, a]
        f += 0.25 * res * res
    for k in range(pi.shape[0]):
        i = pi[k]
        j = pj[k]
        res = -bo[k]
        for a in range(r):
            res += x[i, a] * x[j, a]
        f += 0.5 * res * res
    return f


@njit(cache=True)
def _gd_omega_kernel(x, di, bd, pi, pj, bo, grad_tol, max_iters, beta, c, a0):
    """Per-trial backtracking descent (BB warm start) over a batch.

    Mirrors the batched numpy path: spectral trial step, Armijo shrink by
    beta, freeze on convergence or on a double-precision stall.
    """
    t, n, r = x.shape
    iters = np.zeros(t, dtype=np.int64)
    conv = np.zeros(t, dtype=np.bool_)
    f0 = np.zeros(t)
    ffin = np.zeros(t)
    gn = np.zeros(t)
    for tt in range(t):
        xt = x[tt]
        g = np.zeros((n, r))
        gnew = np.zeros((n, r))
        f = _omega_eval(xt, di, bd, pi, pj, bo, g)
        f0[tt] = f
        gsq = 0.0
        for i in range(n):
            for a in range(r):
                gsq += g[i, a] * g[i, a]
        alpha = a0
        xp = np.zeros((n, r))
        gp = np.zeros((n, r))
        have_prev = False
        it = 0
        while gsq > grad_tol * grad_tol and it < max_iters:
            it += 1
            aa = alpha / beta
            if have_prev:
                num = 0.0
                den = 0.0
                for i in range(n):
                    for a in range(r):
                        dx = xt[i, a] - xp[i, a]
                        num += dx * dx
                        den += dx * (g[i, a] - gp[i, a])
                if den > 1e-300 and np.isfinite(den):
                    bb = num / den
                    if bb < 1e-12:
                        bb = 1e-12
                    elif bb > 1e8:
                        bb = 1e8
                    aa = bb
            for i in range(n):
                for a in range(r):
                    xp[i, a] = xt[i, a]
                    gp[i, a] = g[i, a]
            have_prev = True
            stalled = False
            while True:
                for i in range(n):
                    for a in range(r):
                        xt[i, a] = xp[i, a] - aa * gp[i, a]
                fn = _omega_value(xt, di, bd, pi, pj, bo)
                if fn <= f - c * aa * gsq:
                    break
                aa *= beta
                if aa < 1e-18:
                    for i in range(n):
                        for a in range(r):
                            xt[i, a] = xp[i, a]
                    fn = f
                    stalled = True
                    break
            alpha = aa
            f = fn
            if stalled:
                break
            f = _omega_eval(xt, di, bd, pi, pj, bo, gnew)
            gsq = 0.0
            for i in range(n):
                for a in range(r):
                    g[i, a] = gnew[i, a]
                    gsq += g[i, a] * g[i, a]
        iters[tt] = it
        ffin[tt] = f
        gn[tt] = np.sqrt(gsq)
        conv[tt] = gsq <= grad_tol * grad_tol
    return iters, conv, f0, ffin, gn


def _descend_batch(loss, x0, opts: BmOptions, objective_log=None):
    """Run gradient descent on a batch of starting points.

    Returns (x_final, iters, converged, f0, f_final, grad_norms). Converged
    trials freeze at the iterate that first met grad_tol; under
    backtracking the per-trial objective sequence is nonincreasing by
    construction. Trials where Armijo cannot make progress in double
    precision are frozen as not converged. If objective_log is a list, the
    per-iteration objective vector is appended to it.
    """
    if (_HAVE_NUMBA and loss.kind == "omega" and objective_log is None
            and opts.step_rule == "backtracking"):
        x = np.array(x0, dtype=float)
        iters, conv, f0, ff, gn = _gd_omega_kernel(
            x, loss.di, loss.bd, loss.pi, loss.pj, loss.bo,
            opts.grad_tol, opts.max_iters, opts.beta, opts.armijo_c,
            opts.step_alpha)
        return x, iters, conv, f0, ff, gn
    x = np.array(x0, dtype=float)
    t = x.shape[0]
    f, g = loss.value_grad(x)
    if not np.isfinite(f).all():
        raise DivergenceError("objective not finite at the starting point")
    f0 = f.copy()
    alpha = np.full(t, opts.step_alpha)
    iters = np.zeros(t, dtype=int)
    gnorm = np.linalg.norm(g.reshape(t, -1), axis=1)
    active = gnorm > opts.grad_tol
    x_prev = np.zeros_like(x)
    g_prev = np.zeros_like(g)
    have_prev = np.zeros(t, dtype=bool)
    if objective_log is not None:
        objective_log.append(f.copy())

    for it in range(1, opts.max_iters + 1):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        xa, fa, ga = x[idx], f[idx], g[idx]
        gsq = np.sum(ga * ga, axis=(1, 2))
        stalled = np.zeros(len(idx), dtype=bool)
        if opts.step_rule == "fixed":
            xn = xa - opts.step_alpha * ga
            fn, gn_mat = loss.value_grad(xn)
            if not np.isfinite(fn).all():
                raise DivergenceError(f"objective diverged at iteration {it}")
        else:
            # Trial step: spectral (Barzilai-Borwein) estimate when available,
            # else regrow the previous accepted step; Armijo then shrinks it.
            aa = alpha[idx] / opts.beta
            hp = have_prev[idx]
            if hp.any():
                dx = xa - x_prev[idx]
                dg = ga - g_prev[idx]
                num = np.sum(dx * dx, axis=(1, 2))
                den = np.sum(dx * dg, axis=(1, 2))
                ok = hp & (den > 1e-300) & np.isfinite(den)
                bb = np.where(ok, num / np.where(ok, den, 1.0), aa)
                aa = np.where(ok, np.clip(bb, 1e-12, 1e8), aa)
            x_prev[idx] = xa
            g_prev[idx] = ga
            have_prev[idx] = True
            xn = xa - aa[:, None, None] * ga
            fn, gn_mat = loss.value_grad(xn)
            need = ~(fn <= fa - opts.armijo_c * aa * gsq)
            shrunk = need.copy()
            while need.any():
                aa = np.where(need, aa * opts.beta, aa)
                floor = need & (aa < 1e-18)
                if floor.any():
                    # cannot make Armijo progress in double precision
                    fn = np.where(floor, fa, fn)
                    xn[floor] = xa[floor]
                    stalled |= floor
                    need &= ~floor
                sub = np.flatnonzero(need)
                if sub.size:
                    xn[sub] = xa[sub] - aa[sub, None, None] * ga[sub]
                    fn[sub] = loss.value(xn[sub])
                    need = ~(fn <= fa - opts.armijo_c * aa * gsq) & ~stalled
            alpha[idx] = aa
            redo = np.flatnonzero(shrunk)
            if redo.size:
                gn_mat[redo] = loss.value_grad(xn[redo])[1]
        x[idx] = xn
        f[idx] = fn
        g[idx] = gn_mat
        gnorm[idx] = np.linalg.norm(gn_mat.reshape(len(idx), -1), axis=1)
        done = (gnorm[idx] <= opts.grad_tol) | stalled
        iters[idx] = it
        active[idx[done]] = False
        if objective_log is not None:
            objective_log.append(f.copy())

    converged = gnorm <= opts.grad_tol
    return x, iters, converged, f0, f, gnorm


def solve_gd(inst: Instance, opts: BmOptions = None, x0=None, objective_log=None):
    """Gradient descent from x0 (random Gaussian when omitted).

    Returns (Factor, GdTrace). Pass a list as objective_log to collect the
    objective value at every iteration.
    """
    opts = opts or BmOptions()
    loss = _Loss(inst)
    if x0 is None:
        rng = np.random.default_rng(opts.seed)
        x0 = rng.normal(0.0, _init_scale(inst, opts), size=(inst.n, inst.r))
    else:
        x0 = _check_point(x0, inst)
    xf, iters, conv, f0, ff, gn = _descend_batch(loss, x0[None], opts,
                                                 objective_log=objective_log)
    trace = GdTrace(iters=int(iters[0]), converged=bool(conv[0]),
                    obj_initial=float(f0[0]), obj_final=float(ff[0]),
                    grad_norm=float(gn[0]))
    return Factor(xf[0]), trace


def _init_scale(inst: Instance, opts: BmOptions) -> float:
    if opts.init_scale is not None:
        return opts.init_scale
    return float(np.sqrt(inst.mstar().frob()) / np.sqrt(inst.n))


def monte_carlo(inst: Instance, trials: int, opts: BmOptions = None,
                init_factory=None) -> LandscapeSummary:
    """Repeated randomly initialized descent with per-trial derived seeds.

    Trial t draws its start from default_rng(seed XOR t); trials run as one
    vectorized batch, so results do not depend on scheduling. Second-order
    endpoints are clustered by the relative Frobenius distance of X X^T.
    """
    if trials < 1:
        raise InvalidInput("trials must be >= 1")
    opts = opts or BmOptions()
    loss = _Loss(inst)
    scale = _init_scale(inst, opts)
    seeds = [opts.seed ^ t for t in range(trials)]
    starts = []
    for t, s in enumerate(seeds):
        rng = np.random.default_rng(s)
        if init_factory is not None:
            starts.append(np.asarray(init_factory(t, rng), dtype=float).reshape(inst.n, inst.r))
        else:
            starts.append(rng.normal(0.0, scale, size=(inst.n, inst.r)))
    x0 = np.stack(starts)
    xf, iters, conv, _, _, _ = _descend_batch(loss, x0, opts)

    if opts.jitter_restart and not conv.all():
        stalled = np.flatnonzero(~conv)
        for t in stalled:
            rng = np.random.default_rng(seeds[t] + 1)
            bump = 1e-6 * scale * rng.normal(size=(inst.n, inst.r))
            xr, it2, c2, _, _, _ = _descend_batch(loss, (xf[t] + bump)[None], opts)
            if c2[0]:
                xf[t] = xr[0]
                iters[t] = iters[t] + it2[0]
                conv[t] = True

    records = []
    grams = []
    mstar_f = inst.mstar().frob()
    for t in range(trials):
        rep = classify_point(xf[t], inst, opts)
        records.append(TrialRecord(trial=t, seed=seeds[t], iters=int(iters[t]), report=rep))
        grams.append(xf[t] @ xf[t].T)

    success = sum(1 for rec in records if rec.report.recovery == "global") / trials
    radius = opts.cluster_tol * max(1.0, mstar_f)
    reps = []          # (gram, recovery) of cluster representatives
    for t, rec in enumerate(records):
        if rec.report.crit_class != "second_order":
            continue
        for gm, _ in reps:
            if np.linalg.norm(grams[t] - gm, "fro") <= radius:
                break
        else:
            reps.append((grams[t], rec.report.recovery))
    spurious = sum(1 for _, r in reps if r == "spurious")
    return LandscapeSummary(success_rate=success, cluster_count=len(reps),
                            spurious_cluster_count=spurious, records=tuple(records))


def adversarial_start(inst: Instance, flip_nodes, noise=0.0, seed=0) -> np.ndarray:
    """Sign-flip the factor blocks of the given nodes; a start near a
    candidate spurious basin for perturbed low-complexity instances."""
    x = np.array(inst.xstar.entries)
    r = inst.r
    for i in flip_nodes:
        x[i * r:(i + 1) * r, :] *= -1.0
    if noise:
        rng = np.random.default_rng(seed)
        x = x + noise * rng.normal(size=x.shape)
    return x


def effective_options(opts: BmOptions, overrides: dict) -> BmOptions:
    """Apply a tolerance/knob override map onto an options object."""
    known = {k: v for k, v in overrides.items() if hasattr(opts, k)}
    unknown = set(overrides) - set(known)
    if unknown:
        raise InvalidInput(f"unknown option overrides: {sorted(unknown)}")
    return replace(opts, **known)


def write_trials_csv(path, summary: LandscapeSummary, opts: BmOptions,
                     meta: dict = None) -> None:
    """Monte-Carlo results as CSV with the effective settings in comments."""
    lines = []
    header = dict(meta or {})
    header.update({
        "grad_tol": opts.grad_tol, "hess_tol": opts.hess_tol,
        "recovery_tol": opts.recovery_tol, "cluster_tol": opts.cluster_tol,
        "max_iters": opts.max_iters, "step_rule": opts.step_rule,
        "beta": opts.beta, "armijo_c": opts.armijo_c, "seed": opts.seed,
    })
    for k in sorted(header):
        lines.append(f"# {k}={header[k]}")
    lines.append("trial,seed,iters,grad_norm,hess_min_eig,frob_gap,class,recovery")
    for rec in summary.records:
        rep = rec.report
        lines.append(f"{rec.trial},{rec.seed},{rec.iters},{rep.grad_norm!r},"
                     f"{rep.hess_min_eig!r},{rep.frob_gap!r},{rep.crit_class},{rep.recovery}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
