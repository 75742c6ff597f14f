"""Instance families: block-graph induced observation sets, the perturbed
low-complexity class, rank-1 chains and odd cycles, and the epsilon-scaled
full measurement operator.

Node and entry indices are 0-based everywhere in code and in files; the
chain family's textbook description is 1-based, which only shows up in
documentation strings.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstructionFailure, InvalidInput
from .linalg import SymMat

# Smallest singular value accepted as "full rank" for factor blocks.
BLOCK_RANK_TOL = 1e-8
# Resampling budget for the perturbation rank condition.
RANK_RESAMPLE_CAP = 100


def _norm_pairs(pairs, m, what):
    out = set()
    for i, j in pairs:
        i, j = int(i), int(j)
        if not (0 <= i < m and 0 <= j < m):
            raise InvalidInput(f"{what} edge ({i},{j}) out of range for m={m}")
        out.add((min(i, j), max(i, j)))
    return tuple(sorted(out))


@dataclass(frozen=True)
class BlockSparsityGraph:
    """Pair of undirected graphs (E1, E2) on block nodes [0, m).

    E1 edges observe whole blocks, E2 edges observe off-diagonal block
    entries; the edge sets must be disjoint. Self-loops are allowed.
    """

    m: int
    e1: tuple = ()
    e2: tuple = ()

    def __post_init__(self):
        if self.m < 1:
            raise InvalidInput("m must be >= 1")
        e1 = _norm_pairs(self.e1, self.m, "e1")
        e2 = _norm_pairs(self.e2, self.m, "e2")
        if set(e1) & set(e2):
            raise InvalidInput("e1 and e2 must be disjoint")
        object.__setattr__(self, "e1", e1)
        object.__setattr__(self, "e2", e2)

    def adjacency1(self):
        """E1 adjacency sets, self-loops dropped."""
        adj = [set() for _ in range(self.m)]
        for i, j in self.e1:
            if i != j:
                adj[i].add(j)
                adj[j].add(i)
        return adj

    def has_self_loop(self, i) -> bool:
        return (i, i) in self.e1

    def g1_connected(self) -> bool:
        if self.m == 1:
            return True
        adj = self.adjacency1()
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == self.m


def maximal_independent_set(g: BlockSparsityGraph):
    """Greedy maximal independent set of G1, ascending node order.

    Self-loops are ignored for independence. Deterministic: the node with
    the smallest index always enters first.
    """
    if g.m < 1:
        raise InvalidInput("graph must have at least one node")
    adj = g.adjacency1()
    chosen = []
    blocked = set()
    for u in range(g.m):
        if u not in blocked:
            chosen.append(u)
            blocked.add(u)
            blocked.update(adj[u])
    return tuple(chosen)


def induced_measurement_set(g: BlockSparsityGraph, n: int, r: int) -> frozenset:
    """Entry indices observed under the block graph: E1 edges give whole
    r x r blocks, E2 edges give the blocks minus their in-block diagonal.

    Output is symmetric under transposition.
    """
    if r < 1 or n < 1:
        raise InvalidInput("n and r must be positive")
    if n % r != 0:
        raise InvalidInput(f"n={n} is not divisible by r={r}")
    if n // r != g.m:
        raise InvalidInput(f"n/r={n // r} disagrees with graph node count m={g.m}")
    entries = set()
    for a, b in g.e1:
        for p in range(r):
            for q in range(r):
                i, j = a * r + p, b * r + q
                entries.add((i, j))
                entries.add((j, i))
    for a, b in g.e2:
        for p in range(r):
            for q in range(r):
                if p == q:
                    continue
                i, j = a * r + p, b * r + q
                entries.add((i, j))
                entries.add((j, i))
    return frozenset(entries)


@dataclass(frozen=True)
class MeasurementOp:
    """Linear measurement operator in one of three shapes.

    kind == "omega":        observe entries in the symmetric index set omega.
    kind == "omega_scaled": observe every entry, scaled by epsilon off omega.
    kind == "general":      explicit list of symmetric sensing matrices.
    """

    kind: str
    omega: tuple = None
    epsilon: float = None
    sensing: tuple = None

    def __post_init__(self):
        if self.kind not in ("omega", "omega_scaled", "general"):
            raise InvalidInput(f"unknown operator kind {self.kind!r}")
        if self.kind in ("omega", "omega_scaled"):
            if self.omega is None:
                raise InvalidInput("omega operators need an index set")
            closure = set()
            for i, j in self.omega:
                i, j = int(i), int(j)
                if i < 0 or j < 0:
                    raise InvalidInput("negative entry index")
                closure.add((i, j))
                closure.add((j, i))
            object.__setattr__(self, "omega", tuple(sorted(closure)))
            if self.kind == "omega_scaled":
                if self.epsilon is None or self.epsilon == 0:
                    raise InvalidInput("omega_scaled requires epsilon != 0")
                object.__setattr__(self, "epsilon", float(self.epsilon))
            else:
                object.__setattr__(self, "epsilon", None)
            object.__setattr__(self, "sensing", None)
        else:
            if not self.sensing:
                raise InvalidInput("general operator needs sensing matrices")
            mats = tuple(a if isinstance(a, SymMat) else SymMat(a) for a in self.sensing)
            n = mats[0].n
            if any(a.n != n for a in mats):
                raise InvalidInput("sensing matrices must share one dimension")
            object.__setattr__(self, "sensing", mats)
            object.__setattr__(self, "omega", None)
            object.__setattr__(self, "epsilon", None)

    def pairs(self):
        """Deduplicated observed pairs (i <= j), sorted."""
        return tuple(sorted({(min(i, j), max(i, j)) for i, j in self.omega}))


def perturbed_operator(omega, epsilon: float) -> MeasurementOp:
    """Scale unobserved entries by epsilon instead of dropping them.

    Accepts an entry-index iterable or an omega-kind MeasurementOp.
    epsilon == 0 degenerates to the plain masked operator and is rejected.
    """
    if epsilon == 0:
        raise InvalidInput("epsilon must be nonzero")
    if isinstance(omega, MeasurementOp):
        if omega.kind != "omega":
            raise InvalidInput("perturbed_operator expects a plain omega operator")
        omega = omega.omega
    return MeasurementOp(kind="omega_scaled", omega=omega, epsilon=float(epsilon))


def scale_weights(op: MeasurementOp, n: int) -> np.ndarray:
    """Entry weights of an omega_scaled operator as an n x n matrix."""
    if op.kind != "omega_scaled":
        raise InvalidInput("scale weights only exist for omega_scaled operators")
    w = np.full((n, n), op.epsilon, dtype=float)
    for i, j in op.omega:
        if i < n and j < n:
            w[i, j] = 1.0
    return w


def apply_op(op: MeasurementOp, mat) -> np.ndarray:
    """Measurement vector A(M) under the canonical enumeration.

    omega:        one value per deduplicated pair (i <= j), sorted.
    omega_scaled: all n^2 entries row-major, scaled off omega.
    general:      <A_k, M> per sensing matrix.
    """
    a = mat.entries if isinstance(mat, SymMat) else np.asarray(mat, dtype=float)
    n = a.shape[0]
    if op.kind == "omega":
        return np.array([a[i, j] for i, j in op.pairs()], dtype=float)
    if op.kind == "omega_scaled":
        return (scale_weights(op, n) * a).ravel(order="C")
    return np.array([float(np.sum(s.entries * a)) for s in op.sensing], dtype=float)


@dataclass(frozen=True)
class Factor:
    """n x r factor X with M = X X^T."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2:
            raise InvalidInput("factor must be a 2-d array")
        if not np.isfinite(a).all():
            raise InvalidInput("factor has non-finite entries")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def r(self) -> int:
        return self.entries.shape[1]

    def gram(self) -> SymMat:
        return SymMat(self.entries @ self.entries.T)


@dataclass(frozen=True)
class Instance:
    """Problem bundle: ground truth factor, operator, and measurements."""

    n: int
    r: int
    xstar: Factor
    op: MeasurementOp
    b: np.ndarray
    graph: BlockSparsityGraph = None

    def __post_init__(self):
        if self.r > self.n:
            raise InvalidInput("r must not exceed n")
        if self.xstar.entries.shape != (self.n, self.r):
            raise InvalidInput("factor shape disagrees with (n, r)")
        b = np.asarray(self.b, dtype=float)
        expect = apply_op(self.op, self.xstar.gram())
        if b.shape != expect.shape or not np.array_equal(b, expect):
            raise InvalidInput("b does not equal the operator applied to x* x*^T")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    def mstar(self) -> SymMat:
        return self.xstar.gram()


def make_instance(xstar, op: MeasurementOp, graph: BlockSparsityGraph = None) -> Instance:
    """Build an Instance, deriving b from the factor."""
    x = np.asarray(xstar, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    fac = Factor(x)
    b = apply_op(op, fac.gram())
    return Instance(n=fac.n, r=fac.r, xstar=fac, op=op, b=b, graph=graph)


def gen_chain(xstar) -> Instance:
    """Rank-1 chain instance: self-loop on the first node plus the path edges.

    Requires every entry of x* to be nonzero.
    """
    x = np.asarray(xstar, dtype=float).ravel()
    if x.size < 2:
        raise InvalidInput("chain needs at least 2 nodes")
    if np.any(x == 0) or not np.isfinite(x).all():
        raise InvalidInput("chain ground truth must have nonzero finite entries")
    n = x.size
    edges = [(0, 0)] + [(i, i + 1) for i in range(n - 1)]
    graph = BlockSparsityGraph(m=n, e1=tuple(edges), e2=())
    op = MeasurementOp(kind="omega", omega=tuple(edges))
    return make_instance(x, op, graph=graph)


def gen_cycle(xstar) -> Instance:
    """Rank-1 odd-cycle instance: cycle edges only, no diagonal observations."""
    x = np.asarray(xstar, dtype=float).ravel()
    n = x.size
    if n < 3 or n % 2 == 0:
        raise InvalidInput("cycle length must be odd and >= 3")
    if np.any(x == 0) or not np.isfinite(x).all():
        raise InvalidInput("cycle ground truth must have nonzero finite entries")
    edges = [(i, (i + 1) % n) for i in range(n)]
    graph = BlockSparsityGraph(m=n, e1=tuple(edges), e2=())
    op = MeasurementOp(kind="omega", omega=tuple(edges))
    return make_instance(x, op, graph=graph)


def canonical_low_complexity_graph(m: int) -> BlockSparsityGraph:
    """Smallest graph family meeting the low-complexity class requirements:
    G1 is the odd cycle C_m with a self-loop on every vertex, G2 a path
    through the greedy maximal independent set (so G2 restricted to the set
    is connected).
    """
    if m < 3 or m % 2 == 0:
        raise InvalidInput("the canonical family needs odd m >= 3")
    e1 = [(i, i) for i in range(m)] + [(i, (i + 1) % m) for i in range(m)]
    g1_only = BlockSparsityGraph(m=m, e1=tuple(e1), e2=())
    s = maximal_independent_set(g1_only)
    e2 = [(s[k], s[k + 1]) for k in range(len(s) - 1)]
    return BlockSparsityGraph(m=m, e1=tuple(e1), e2=tuple(e2))


def _block(x, i, r):
    return x[i * r:(i + 1) * r, :]


def gen_low_complexity(
    g: BlockSparsityGraph,
    n: int,
    r: int,
    seed: int,
    sigma: float = None,
    independent_set=None,
    omega_from_g1_only: bool = False,
    base_magnitude: float = 1.0,
) -> Instance:
    """Perturbed low-complexity instance on the block graph g.

    The unperturbed factor has scaled identity blocks on a maximal
    independent set of G1 and zero blocks elsewhere; a Gaussian(0, sigma^2)
    entrywise perturbation is added to every block and redrawn until all
    perturbed blocks are full rank. sigma defaults to 0.1 times the smallest
    nonzero singular value of the unperturbed factor. sigma == 0 produces
    the degenerate unperturbed instance (rank condition waived).
    """
    if n % r != 0 or n // r != g.m:
        raise InvalidInput("need n == m * r")
    if not g.g1_connected():
        raise InvalidInput("G1 must be connected")
    if independent_set is None:
        s = maximal_independent_set(g)
    else:
        s = tuple(sorted(int(v) for v in independent_set))
        adj = g.adjacency1()
        ok = all(v not in adj[u] for u in s for v in s)
        covered = set(s) | {v for u in s for v in adj[u]}
        if not ok or covered != set(range(g.m)):
            raise ConstructionFailure("provided set is not a maximal independent set of G1")
    if sigma is None:
        sigma = 0.1 * base_magnitude
    if sigma < 0:
        raise InvalidInput("sigma must be nonnegative")

    x0 = np.zeros((n, r))
    for i in s:
        x0[i * r:(i + 1) * r, :] = base_magnitude * np.eye(r)

    rng = np.random.default_rng(seed)
    if sigma == 0:
        x = x0
    else:
        for _ in range(RANK_RESAMPLE_CAP):
            x = x0 + rng.normal(0.0, sigma, size=(n, r))
            svals = [np.linalg.svd(_block(x, i, r), compute_uv=False)[-1] for i in range(g.m)]
            if min(svals) > BLOCK_RANK_TOL:
                break
        else:
            raise ConstructionFailure("rank condition failed for every perturbation draw")

    source = BlockSparsityGraph(m=g.m, e1=g.e1, e2=()) if omega_from_g1_only else g
    omega = induced_measurement_set(source, n, r)
    op = MeasurementOp(kind="omega", omega=tuple(sorted(omega)))
    return make_instance(x, op, graph=g)


# --- file formats ----------------------------------------------------------

def save_graph(path, g: BlockSparsityGraph) -> None:
    payload = {"m": g.m, "e1": [list(e) for e in g.e1], "e2": [list(e) for e in g.e2]}
    with open(path, "w") as f:
        json.dump(payload, f, indent=1)
        f.write("\n")


def load_graph(path) -> BlockSparsityGraph:
    with open(path) as f:
        payload = json.load(f)
    return BlockSparsityGraph(m=payload["m"], e1=tuple(map(tuple, payload["e1"])),
                              e2=tuple(map(tuple, payload["e2"])))


def save_instance(path, inst: Instance) -> None:
    if inst.op.kind == "general":
        raise InvalidInput("general-operator instances have no file form")
    op_payload = {"kind": inst.op.kind,
                  "omega": [list(p) for p in inst.op.pairs()],
                  "epsilon": inst.op.epsilon}
    payload = {"n": inst.n, "r": inst.r,
               "xstar": [[float(v) for v in row] for row in inst.xstar.entries],
               "op": op_payload,
               "b": [float(v) for v in inst.b]}
    if inst.graph is not None:
        payload["graph"] = {"m": inst.graph.m,
                            "e1": [list(e) for e in inst.graph.e1],
                            "e2": [list(e) for e in inst.graph.e2]}
    with open(path, "w") as f:
        json.dump(payload, f, indent=1)
        f.write("\n")


def load_instance(path) -> Instance:
    with open(path) as f:
        payload = json.load(f)
    kind = payload["op"]["kind"]
    omega = tuple(map(tuple, payload["op"]["omega"]))
    if kind == "omega":
        op = MeasurementOp(kind="omega", omega=omega)
    else:
        op = MeasurementOp(kind="omega_scaled", omega=omega, epsilon=payload["op"]["epsilon"])
    graph = None
    if payload.get("graph") is not None:
        gp = payload["graph"]
        graph = BlockSparsityGraph(m=gp["m"], e1=tuple(map(tuple, gp["e1"])),
                                   e2=tuple(map(tuple, gp["e2"])))
    x = np.asarray(payload["xstar"], dtype=float)
    inst = make_instance(x, op, graph=graph)
    stored = np.asarray(payload["b"], dtype=float)
    if stored.shape != inst.b.shape or not np.array_equal(stored, inst.b):
        raise InvalidInput("stored b disagrees with recomputed measurements")
    return inst
