"""Reproduction harness: one subcommand per claim family, deterministic
seeding, machine-readable outputs.

Exit codes: 0 expectations met, 1 violated, 2 usage error, 3 certificate
not applicable. Wall-clock columns are emitted only under --timing so that
identical configuration and seed reproduce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .bm import BmOptions, effective_options, monte_carlo, write_trials_csv
from .certificates import (Certificate, chain_certificate, cycle_certificate,
                           cycle_odd_even_split, example1_certificate,
                           example2_certificate)
from .completer import propagate_complete
from .errors import ConditionNotMet, InvalidInput
from .instances import (Instance, canonical_low_complexity_graph, gen_chain,
                        gen_cycle, gen_low_complexity, load_instance,
                        make_instance, perturbed_operator, save_instance)
from .linalg import save_matrix
from .riplab import delta_lb_analytic, sdp_sufficient_rip
from .sdp import SdpOptions, kkt_residuals, recovery_check, save_sdp_result, solve_sdp

FAMILIES = ("chain", "cycle", "low_complexity", "perturbed_op", "custom_file")
RECOVERY_TOL = {"low_complexity": 1e-5, "perturbed_op": 1e-6,
                "chain": 1e-6, "cycle": 1e-6, "custom_file": 1e-5}


@dataclass(frozen=True)
class ExperimentConfig:
    family: str
    seed: int
    trials: int = 100
    n_values: tuple = (4, 5, 6)
    r: int = 1
    m: int = 7
    sigma: float = None
    epsilon: float = 0.01
    instances_per_size: int = 1
    tolerances: dict = field(default_factory=dict)
    out: str = None
    workers: int = 1
    path: str = None
    timing: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInput(f"unknown family {self.family!r}")
        if self.seed is None:
            raise InvalidInput("seed is mandatory")
        if self.family == "custom_file" and not self.path:
            raise InvalidInput("custom_file needs path")


@dataclass(frozen=True)
class DuelRecord:
    instance_id: str
    n: int
    r: int
    sdp_status: str
    sdp_recovered: bool
    sdp_trace_gap: float
    bm_success_rate: float
    bm_spurious_clusters: int
    bm_second_order: int
    bm_violations: int          # second-order trials that are not global
    expectation_ok: bool
    skipped: str = ""
    wall_sdp: float = 0.0
    wall_bm: float = 0.0


def random_ground_truth(n, rng):
    """Entries with magnitude uniform in [0.5, 2] and random signs."""
    return rng.uniform(0.5, 2.0, size=n) * rng.choice([-1.0, 1.0], size=n)


def chain_failure_condition(x) -> bool:
    """True when two positions past the second carry different magnitudes.

    This restates the textbook failure hypothesis; it is necessary but NOT
    sufficient for trace minimization to miss the truth (a chain whose tail
    decreases toward the free end can still be recovered), so the duel
    binds its expectation to an explicitly verified witness instead.
    """
    tail = np.abs(np.asarray(x, dtype=float).ravel())[2:]
    return bool(tail.size >= 2 and tail.max() - tail.min() > 1e-9)


def cycle_failure_condition(x) -> bool:
    """True when some rotation puts strictly more mass on odd positions."""
    x = np.abs(np.asarray(x, dtype=float).ravel())
    for base in range(x.size):
        odd, even = cycle_odd_even_split(x, base)
        if odd > even + 1e-9:
            return True
    return False


def strict_witness_trace(inst: Instance):
    """Trace of a verified feasible strictly-better witness, or None.

    Only witnesses that pass the numeric feasibility check count; the
    rank-one odd-cycle construction, for instance, comes back infeasible
    and therefore never binds an expectation.
    """
    try:
        cert = _detect_certificate(inst)
    except (ConditionNotMet, InvalidInput):
        return None
    if cert.feasible and cert.strict:
        return cert.trace_hat
    return None


def _duel_instances(cfg: ExperimentConfig):
    """(instance_id, Instance, condition) triples for a config."""
    out = []
    if cfg.family in ("chain", "cycle"):
        gen = gen_chain if cfg.family == "chain" else gen_cycle
        for n in cfg.n_values:
            for k in range(cfg.instances_per_size):
                rng = np.random.default_rng([cfg.seed, n, k])
                x = random_ground_truth(n, rng)
                out.append((f"{cfg.family}-n{n}-i{k}", gen(x), True))
    elif cfg.family == "low_complexity":
        g = canonical_low_complexity_graph(cfg.m)
        for k in range(cfg.instances_per_size):
            inst = gen_low_complexity(g, cfg.m * cfg.r, cfg.r,
                                      seed=int(np.random.default_rng([cfg.seed, k]).integers(2 ** 31)),
                                      sigma=cfg.sigma)
            out.append((f"lowcomp-m{cfg.m}-r{cfg.r}-i{k}", inst, True))
    elif cfg.family == "perturbed_op":
        for n in cfg.n_values:
            for k in range(cfg.instances_per_size):
                rng = np.random.default_rng([cfg.seed, n, k])
                x = random_ground_truth(n, rng)
                base = gen_chain(x)
                op = perturbed_operator(base.op, cfg.epsilon)
                out.append((f"perturbed-n{n}-i{k}", make_instance(base.xstar.entries, op), True))
    else:
        out.append((os.path.basename(cfg.path), load_instance(cfg.path), False))
    return out


def _duel_one(args):
    """Run both routes on one instance; executed inside worker processes."""
    inst_id, inst, condition, cfg = args
    opts = effective_options(BmOptions(seed=cfg.seed), cfg.tolerances)
    t0 = time.perf_counter()
    res = solve_sdp(inst)
    rec = recovery_check(res, inst.mstar(), tol=RECOVERY_TOL[cfg.family])
    wall_sdp = time.perf_counter() - t0
    t0 = time.perf_counter()
    summary = monte_carlo(inst, cfg.trials, opts)
    wall_bm = time.perf_counter() - t0
    n_second = sum(1 for t in summary.records if t.report.crit_class == "second_order")
    n_viol = sum(1 for t in summary.records
                 if t.report.crit_class == "second_order" and t.report.recovery != "global")

    if cfg.family in ("chain", "cycle"):
        # landscape side: no second-order endpoint may be non-global;
        # trace side: bind only to an explicitly verified witness
        ok = n_viol == 0
        witness = strict_witness_trace(inst)
        if witness is not None:
            ok = ok and (not rec.recovered) and res.trace <= witness + 1e-6
    elif cfg.family == "low_complexity":
        ok = rec.recovered and summary.success_rate < 1.0
    elif cfg.family == "perturbed_op":
        ok = rec.recovered
    else:
        ok = True
    return DuelRecord(instance_id=inst_id, n=inst.n, r=inst.r,
                      sdp_status=res.status, sdp_recovered=rec.recovered,
                      sdp_trace_gap=rec.trace_gap,
                      bm_success_rate=summary.success_rate,
                      bm_spurious_clusters=summary.spurious_cluster_count,
                      bm_second_order=n_second, bm_violations=n_viol,
                      expectation_ok=bool(ok),
                      wall_sdp=wall_sdp, wall_bm=wall_bm)


def run_duel(cfg: ExperimentConfig):
    """DuelRecords for every instance of the config, ordered by instance id
    position regardless of worker scheduling."""
    jobs = [(i_id, inst, cond, cfg) for i_id, inst, cond in _duel_instances(cfg)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(_duel_one, jobs))
    else:
        records = [_duel_one(j) for j in jobs]
    return records


def _header_lines(cfg: ExperimentConfig, opts: BmOptions):
    sdp = SdpOptions()
    settings = {
        "version": __version__, "family": cfg.family, "seed": cfg.seed,
        "trials": cfg.trials, "grad_tol": opts.grad_tol, "hess_tol": opts.hess_tol,
        "recovery_tol": opts.recovery_tol, "cluster_tol": opts.cluster_tol,
        "max_iters": opts.max_iters, "sdp_feas_tol": sdp.feas_tol,
        "sdp_gap_tol": sdp.gap_tol, "sdp_recovery_tol": RECOVERY_TOL[cfg.family],
    }
    return [f"# {k}={settings[k]}" for k in sorted(settings)]


def write_duel_csv(path, cfg: ExperimentConfig, records):
    opts = effective_options(BmOptions(seed=cfg.seed), cfg.tolerances)
    lines = _header_lines(cfg, opts)
    cols = ("instance,n,r,sdp_status,sdp_recovered,sdp_trace_gap,"
            "bm_success_rate,bm_spurious_clusters,bm_second_order,"
            "bm_violations,expectation_ok")
    if cfg.timing:
        cols += ",wall_sdp,wall_bm"
    lines.append(cols)
    for rec in records:
        row = (f"{rec.instance_id},{rec.n},{rec.r},{rec.sdp_status},"
               f"{rec.sdp_recovered},{rec.sdp_trace_gap!r},{rec.bm_success_rate!r},"
               f"{rec.bm_spurious_clusters},{rec.bm_second_order},"
               f"{rec.bm_violations},{rec.expectation_ok}")
        if cfg.timing:
            row += f",{rec.wall_sdp:.3f},{rec.wall_bm:.3f}"
        lines.append(row)
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def run_rip_table(n_range, r_range):
    """Rows (n, r, l, lemma_bound, theorem_bound); raises if the lemma
    bound ever decreases in r for fixed n."""
    rows = []
    for n in n_range:
        prev = None
        for r in r_range:
            if r < 1 or 2 * r > n:
                continue
            l = -(-n // r)
            lemma = delta_lb_analytic(n, r)
            rows.append((n, r, l, lemma, sdp_sufficient_rip(n, r)))
            if prev is not None and lemma < prev - 1e-12:
                raise InvalidInput(f"lemma bound decreased in r at n={n}, r={r}")
            prev = lemma
    return rows


def _detect_certificate(inst: Instance) -> Certificate:
    """Pick the witness construction matching the instance shape."""
    if inst.r != 1 or inst.op.kind != "omega":
        raise ConditionNotMet("no certificate family applies")
    pairs = set(inst.op.pairs())
    n = inst.n
    chain_pairs = {(0, 0)} | {(i, i + 1) for i in range(n - 1)}
    cycle_pairs = {(min(i, (i + 1) % n), max(i, (i + 1) % n)) for i in range(n)}
    x = inst.xstar.entries.ravel()
    if pairs == chain_pairs:
        if n == 3:
            return example1_certificate(x)
        ax = np.abs(x)
        if ax[-1] >= ax[-2]:
            return chain_certificate(ax, n - 1, n)
        raise ConditionNotMet("chain tail is decreasing; witness not applicable")
    if n % 2 == 1 and pairs == cycle_pairs:
        if n == 3:
            return example2_certificate(np.sort(np.abs(x)))
        return cycle_certificate(x)
    raise ConditionNotMet("no certificate family applies")


def _certificate_json(cert: Certificate) -> dict:
    return {"feasible": cert.feasible, "psd_margin": cert.psd_margin,
            "trace_hat": cert.trace_hat, "trace_star": cert.trace_star,
            "strict": cert.strict,
            "m_hat": [[float(v) for v in row] for row in cert.m_hat.entries]}


def _build_parser():
    p = argparse.ArgumentParser(prog="lowrank-duel",
                                description="Trace-minimization vs factorized descent lab")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write an instance file")
    gen.add_argument("--family", required=True,
                     choices=("chain", "cycle", "low_complexity", "perturbed_op"))
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--n", type=int, default=4)
    gen.add_argument("--r", type=int, default=1)
    gen.add_argument("--m", type=int, default=7)
    gen.add_argument("--sigma", type=float, default=None)
    gen.add_argument("--epsilon", type=float, default=0.01)
    gen.add_argument("--xstar", type=str, default=None,
                     help="comma-separated ground truth (chain/cycle/perturbed_op)")
    gen.add_argument("--g1-only", action="store_true",
                     help="restrict observations to whole-block edges")
    gen.add_argument("--out", required=True)

    bm = sub.add_parser("bm", help="Monte-Carlo descent trials on an instance")
    bm.add_argument("--instance", required=True)
    bm.add_argument("--trials", type=int, default=100)
    bm.add_argument("--seed", type=int, required=True)
    bm.add_argument("--out", default=None)

    sdp = sub.add_parser("sdp", help="trace minimization on an instance")
    sdp.add_argument("--instance", required=True)
    sdp.add_argument("--out", default=None)

    duel = sub.add_parser("duel", help="run both routes and check expectations")
    duel.add_argument("--config", default=None)
    duel.add_argument("--family", default=None, choices=FAMILIES)
    duel.add_argument("--seed", type=int, default=None)
    duel.add_argument("--trials", type=int, default=None)
    duel.add_argument("--out", default=None)
    duel.add_argument("--workers", type=int, default=None)
    duel.add_argument("--timing", action="store_true")

    rip = sub.add_parser("rip", help="sufficient-bound table")
    rip.add_argument("--n", default="4:10", help="inclusive range lo:hi")
    rip.add_argument("--r", default="1:5", help="inclusive range lo:hi")
    rip.add_argument("--out", default=None)

    cert = sub.add_parser("certify", help="construct a failure witness")
    cert.add_argument("--instance", required=True)
    cert.add_argument("--cross-check", action="store_true")

    comp = sub.add_parser("complete", help="graph-propagation completion")
    comp.add_argument("--instance", required=True)
    comp.add_argument("--out", default=None)
    return p


def _parse_range(text):
    lo, hi = (int(v) for v in text.split(":"))
    return range(lo, hi + 1)


def _cmd_generate(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.family in ("chain", "cycle", "perturbed_op"):
        if args.xstar:
            x = np.array([float(v) for v in args.xstar.split(",")])
        else:
            x = random_ground_truth(args.n, rng)
        base = gen_cycle(x) if args.family == "cycle" else gen_chain(x)
        inst = base
        if args.family == "perturbed_op":
            inst = make_instance(base.xstar.entries,
                                 perturbed_operator(base.op, args.epsilon))
    else:
        g = canonical_low_complexity_graph(args.m)
        inst = gen_low_complexity(g, args.m * args.r, args.r, seed=args.seed,
                                  sigma=args.sigma,
                                  omega_from_g1_only=args.g1_only)
    save_instance(args.out, inst)
    print(f"wrote {args.out} (n={inst.n}, r={inst.r}, kind={inst.op.kind})")
    return 0


def _cmd_bm(args) -> int:
    inst = load_instance(args.instance)
    opts = BmOptions(seed=args.seed)
    summary = monte_carlo(inst, args.trials, opts)
    meta = {"version": __version__, "instance": os.path.basename(args.instance),
            "trials": args.trials}
    if args.out:
        write_trials_csv(args.out, summary, opts, meta)
    print(f"success_rate={summary.success_rate} clusters={summary.cluster_count} "
          f"spurious_clusters={summary.spurious_cluster_count}")
    return 0


def _cmd_sdp(args) -> int:
    inst = load_instance(args.instance)
    res = solve_sdp(inst)
    rec = recovery_check(res, inst.mstar())
    kkt = kkt_residuals(res, inst)
    if args.out:
        save_sdp_result(args.out, res, rec)
    print(f"status={res.status} trace={res.trace} recovered={rec.recovered} "
          f"trace_gap={rec.trace_gap} kkt=({kkt.primal:.2e},{kkt.dual:.2e},"
          f"{kkt.complementarity:.2e})")
    return 0


def _cmd_duel(args) -> int:
    payload = {}
    if args.config:
        with open(args.config) as f:
            payload = json.load(f)
    for key in ("family", "seed", "trials", "out", "workers"):
        val = getattr(args, key)
        if val is not None:
            payload[key] = val
    if args.timing:
        payload["timing"] = True
    if payload.get("workers") is None:
        payload["workers"] = int(os.environ.get("LOWRANK_DUEL_WORKERS", "1"))
    if "n_values" in payload:
        payload["n_values"] = tuple(payload["n_values"])
    if "tolerances" in payload:
        payload["tolerances"] = dict(payload["tolerances"])
    try:
        cfg = ExperimentConfig(**payload)
    except TypeError as exc:
        print(f"error: bad duel config: {exc}", file=sys.stderr)
        return 2
    records = run_duel(cfg)
    if cfg.out:
        write_duel_csv(cfg.out, cfg, records)
    ok = all(r.expectation_ok for r in records)
    for rec in records:
        print(f"{rec.instance_id}: sdp_recovered={rec.sdp_recovered} "
              f"trace_gap={rec.sdp_trace_gap:.6g} success={rec.bm_success_rate} "
              f"spurious_clusters={rec.bm_spurious_clusters} ok={rec.expectation_ok}")
    return 0 if ok else 1


def _cmd_rip(args) -> int:
    rows = run_rip_table(_parse_range(args.n), _parse_range(args.r))
    lines = ["n,r,l,delta_lb_analytic,theorem4_bound"]
    lines += [f"{n},{r},{l},{lemma!r},{thm!r}" for n, r, l, lemma, thm in rows]
    text = "\n".join([f"# version={__version__}"] + lines) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    print(text, end="")
    return 0


def _cmd_certify(args) -> int:
    inst = load_instance(args.instance)
    try:
        cert = _detect_certificate(inst)
    except ConditionNotMet as exc:
        print(f"not applicable: {exc}", file=sys.stderr)
        return 3
    payload = _certificate_json(cert)
    if args.cross_check:
        res = solve_sdp(inst)
        payload["sdp_trace"] = res.trace
        if cert.feasible and res.trace > cert.trace_hat + 1e-6:
            print(json.dumps(payload, indent=1))
            print("cross-check violated: solver exceeded a feasible witness",
                  file=sys.stderr)
            return 1
    print(json.dumps(payload, indent=1))
    return 0


def _cmd_complete(args) -> int:
    inst = load_instance(args.instance)
    result = propagate_complete(inst)
    if args.out:
        save_matrix(args.out, result.m)
    gap = float(np.linalg.norm(result.m.entries - inst.mstar().entries, "fro")
                / inst.mstar().frob())
    print(f"resolved={result.resolved} unresolved_blocks={len(result.unresolved_blocks)} "
          f"frob_gap={gap:.3e}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0,) else 0
    handlers = {"generate": _cmd_generate, "bm": _cmd_bm, "sdp": _cmd_sdp,
                "duel": _cmd_duel, "rip": _cmd_rip, "certify": _cmd_certify,
                "complete": _cmd_complete}
    try:
        return handlers[args.command](args)
    except (InvalidInput, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
