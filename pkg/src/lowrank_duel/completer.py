"""Graph-propagation completion for block-structured observations.

Anchors a factor on an observed diagonal block (symmetric PSD square
root), propagates X_j = M_ij^T X_i^{-T} along a spanning traversal of the
full-block graph, and for rank one without any observed diagonal recovers
the anchor magnitude from an odd cycle's alternating edge products. The
result is an independent oracle for the trace-minimization route on
instances where both must agree.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import InconsistencyError, InvalidInput, RankDeficiencyError
from .instances import Instance
from .linalg import SymMat
from .sdp import SdpOptions, recovery_check, solve_sdp

OBS_MATCH_TOL = 1e-8
ANCHOR_RANK_TOL = 1e-8


@dataclass(frozen=True)
class CompletionResult:
    m: SymMat
    resolved: bool
    unresolved_blocks: tuple    # block index pairs left undetermined


@dataclass(frozen=True)
class CrossCheck:
    agreement: float            # ||M_completer - M_sdp||_F / ||M*||_F
    completer_frob_gap: float   # completer vs truth, relative
    sdp_frob_gap: float         # solver vs truth, relative
    completer_resolved: bool
    sdp_status: str


def _observed_entries(inst: Instance) -> dict:
    obs = {}
    for (i, j), v in zip(inst.op.pairs(), inst.b):
        obs[(i, j)] = v
        obs[(j, i)] = v
    return obs


def _block_value(obs, a, b, r):
    """Observed r x r block (a, b); None if any entry is missing."""
    out = np.empty((r, r))
    for p in range(r):
        for q in range(r):
            v = obs.get((a * r + p, b * r + q))
            if v is None:
                return None
            out[p, q] = v
    return out


def _anchor_factor(diag_block, r):
    """Symmetric PSD square root of an observed diagonal block."""
    w, q = np.linalg.eigh(0.5 * (diag_block + diag_block.T))
    scale = max(1.0, float(np.max(np.abs(w))))
    if w[0] < -OBS_MATCH_TOL * scale:
        raise InconsistencyError("observed diagonal block is not PSD")
    w = np.clip(w, 0.0, None)
    if np.sum(np.sqrt(w) > ANCHOR_RANK_TOL) < r:
        raise RankDeficiencyError("diagonal block is rank deficient")
    return (q * np.sqrt(w)) @ q.T


def _odd_walk_anchor(comp, adj, blocks, root):
    """Squared anchor value for a rank-1 component without diagonals.

    BFS two-coloring; the first same-color edge closes an odd cycle
    through tree parents, and the alternating product of its edge values
    telescopes to the anchor squared.
    """
    color = {root: 0}
    parent = {root: None}
    queue = deque([root])
    clash = None
    while queue and clash is None:
        u = queue.popleft()
        for v in adj[u]:
            if v not in color:
                color[v] = color[u] ^ 1
                parent[v] = u
                queue.append(v)
            elif color[v] == color[u] and v != u:
                clash = (u, v)
                break
    if clash is None:
        return None, None
    u, v = clash

    def path_to_root(w):
        out = [w]
        while parent[out[-1]] is not None:
            out.append(parent[out[-1]])
        return out

    pu, pv = path_to_root(u), path_to_root(v)
    shared = 0
    while (shared < min(len(pu), len(pv))
           and pu[len(pu) - 1 - shared] == pv[len(pv) - 1 - shared]):
        shared += 1
    lca_u = pu[:len(pu) - shared + 1]
    lca_v = pv[:len(pv) - shared + 1]
    walk = lca_u + lca_v[::-1][1:] + [u]    # u .. lca .. v, then edge back
    num, den = 1.0, 1.0
    for t in range(len(walk) - 1):
        val = blocks(walk[t], walk[t + 1])
        if val is None:
            raise InconsistencyError("cycle edge lost its observation")
        c = float(val[0, 0])
        if c == 0.0:
            raise RankDeficiencyError("zero product on a cycle edge")
        if t % 2 == 0:
            num *= c
        else:
            den *= c
    return u, num / den


def propagate_complete(inst: Instance, order: str = "bfs") -> CompletionResult:
    """Complete the matrix by factor propagation over the full-block graph.

    order selects the spanning traversal (bfs or dfs); the completion is
    traversal-invariant on consistent data. Components without an anchor
    stay unresolved (all their block pairs are reported) instead of
    guessing a gauge.
    """
    if order not in ("bfs", "dfs"):
        raise InvalidInput(f"unknown traversal order {order!r}")
    if inst.graph is None:
        raise InvalidInput("completion needs the block structure of the instance")
    if inst.op.kind != "omega":
        raise InvalidInput("completion operates on entrywise observations")
    g = inst.graph
    r = inst.r
    obs = _observed_entries(inst)

    def block(a, b):
        return _block_value(obs, a, b, r)

    for a, b in g.e1:
        if block(a, b) is None:
            raise InvalidInput("graph and observation set disagree on a full block")

    adj = g.adjacency1()
    x = np.zeros((inst.n, inst.r))
    known = np.zeros(g.m, dtype=bool)

    comp_id = -np.ones(g.m, dtype=int)
    comps = []
    for start in range(g.m):
        if comp_id[start] >= 0:
            continue
        comp = [start]
        comp_id[start] = len(comps)
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if comp_id[v] < 0:
                    comp_id[v] = len(comps)
                    comp.append(v)
                    queue.append(v)
        comps.append(sorted(comp))

    for comp in comps:
        anchors = [u for u in comp if g.has_self_loop(u)]
        if anchors:
            root = anchors[0]
            x[root * r:(root + 1) * r] = _anchor_factor(block(root, root), r)
        elif r == 1:
            root, sq = _odd_walk_anchor(comp, adj, block, comp[0])
            if root is None:
                continue    # bipartite component: sign cannot be fixed
            if sq <= 0:
                raise InconsistencyError("negative squared anchor from cycle products")
            x[root, 0] = np.sqrt(sq)
        else:
            continue        # no diagonal block observed: decline for r > 1
        known[root] = True

        frontier = deque([root])
        while frontier:
            u = frontier.popleft() if order == "bfs" else frontier.pop()
            xu = x[u * r:(u + 1) * r]
            for v in sorted(adj[u]):
                if known[v]:
                    continue
                muv = block(u, v)
                if muv is None:
                    continue
                if np.linalg.svd(xu, compute_uv=False)[-1] <= ANCHOR_RANK_TOL:
                    raise RankDeficiencyError("cannot invert a rank-deficient factor")
                x[v * r:(v + 1) * r] = np.linalg.solve(xu, muv).T
                known[v] = True
                frontier.append(v)

    m = x @ x.T
    unresolved = []
    for a in range(g.m):
        for b in range(a, g.m):
            if not (known[a] and known[b]):
                unresolved.append((a, b))
    resolved = not unresolved

    scale = max(1.0, float(np.max(np.abs(inst.b), initial=0.0)))
    for (i, j), v in obs.items():
        if known[i // r] and known[j // r]:
            if abs(m[i, j] - v) > OBS_MATCH_TOL * scale:
                raise InconsistencyError(
                    f"completed entry ({i},{j}) = {m[i, j]!r} contradicts "
                    f"the observed value {v!r}")
    return CompletionResult(m=SymMat(m), resolved=resolved,
                            unresolved_blocks=tuple(unresolved))


def cross_check(inst: Instance, sdp_opts: SdpOptions = None) -> CrossCheck:
    """Solve by propagation and by trace minimization; report how far the
    two land from each other (relative to the ground truth scale)."""
    comp = propagate_complete(inst)
    res = solve_sdp(inst, sdp_opts)
    mstar = inst.mstar()
    denom = mstar.frob()
    agreement = float(np.linalg.norm(comp.m.entries - res.m_opt.entries, "fro") / denom)
    comp_gap = float(np.linalg.norm(comp.m.entries - mstar.entries, "fro") / denom)
    sdp_gap = recovery_check(res, mstar).frob_gap
    return CrossCheck(agreement=agreement, completer_frob_gap=comp_gap,
                      sdp_frob_gap=sdp_gap, completer_resolved=comp.resolved,
                      sdp_status=res.status)
