"""Decision trees over edge sets and their exact analysis.

A decision tree is an adaptive query order: it names the first edge to
reveal and, given the revealed history, the next one.  Trees here are
total (they eventually query every edge), and the quantities of interest
are cut off at the determination time tau, the first query count after
which the target function is constant on every configuration consistent
with the revealed bits.

The exact engine walks the history tree depth-first, carrying the array
of consistent configuration indices, and reports per-edge revealments,
the stopped leaves and the distribution of tau.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .graph import FiniteGraph
from .measure import (
    Measure,
    bit_columns,
    config_bits,
    config_index,
    connectivity_event_table,
)

__all__ = [
    "TreeError",
    "DecisionTree",
    "FixedOrderTree",
    "HashRuleTree",
    "ExplorationTree",
    "UserTableTree",
    "tree_to_json",
    "tree_from_json",
    "BoolFunction",
    "TableFunction",
    "ConnectivityIndicator",
    "and_function",
    "or_function",
    "majority_function",
    "dictator_function",
    "table_is_increasing",
    "RunTrace",
    "run_tree",
    "Leaf",
    "ExactRunReport",
    "exact_analysis",
    "revealment",
    "revealment_mc",
    "sequential_sample",
    "sequential_law_exact",
    "sequential_sample_counts",
    "conditional_expectation_at_stop",
]


class TreeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# trees


class DecisionTree:
    """Adaptive edge-query rule.  Histories are parallel lists of queried
    edge ids and their revealed bits."""

    def __init__(self, n_edges: int):
        if n_edges < 1:
            raise TreeError("a tree needs at least one edge")
        self.n_edges = n_edges

    def root(self) -> int:
        raise NotImplementedError

    def next_edge(self, queried: list[int], bits: list[int]) -> int | None:
        """The edge queried after the given history; None once all are queried."""
        raise NotImplementedError


class FixedOrderTree(DecisionTree):
    def __init__(self, order):
        order = list(order)
        super().__init__(len(order))
        if sorted(order) != list(range(len(order))):
            raise TreeError("order must be a permutation of the edge ids")
        self.order = order

    def root(self):
        return self.order[0]

    def next_edge(self, queried, bits):
        t = len(queried)
        return self.order[t] if t < self.n_edges else None


class HashRuleTree(DecisionTree):
    """Deterministic pseudo-random rule: the next edge is chosen among the
    unqueried ones by hashing (seed, history)."""

    def __init__(self, n_edges: int, seed: int = 0):
        super().__init__(n_edges)
        self.seed = int(seed)

    def _pick(self, queried, bits):
        remaining = sorted(set(range(self.n_edges)) - set(queried))
        if not remaining:
            return None
        h = hashlib.sha256()
        h.update(str((self.seed, tuple(queried), tuple(bits))).encode())
        return remaining[int.from_bytes(h.digest()[:8], "big") % len(remaining)]

    def root(self):
        return self._pick([], [])

    def next_edge(self, queried, bits):
        return self._pick(queried, bits)


class ExplorationTree(DecisionTree):
    """Cluster exploration from a target vertex set.

    While some unqueried edge has exactly one endpoint in the explored set
    V (initially the targets), query the smallest such edge; if it opens,
    absorb its other endpoint into V.  Once no such edge remains the rule
    falls back to scanning the leftover edges in id order.  Before the
    fallback starts, every queried edge touches the open cluster of the
    targets.
    """

    def __init__(self, g: FiniteGraph, targets):
        super().__init__(g.n_edges)
        self.graph = g
        self.targets = frozenset(targets)
        if not self.targets:
            raise TreeError("exploration needs a nonempty target set")
        unknown = self.targets - set(g.vertices)
        if unknown:
            raise TreeError(f"targets not in the graph: {sorted(unknown)}")
        self._endpoints = [(u, v) for u, v, _ in g.edges]

    def _replay(self, queried, bits):
        v_set = set(self.targets)
        for e, b in zip(queried, bits):
            if b:
                u, v = self._endpoints[e]
                iu, iv = u in v_set, v in v_set
                if iu != iv:
                    v_set.add(v if iu else u)
        return v_set

    def _pick(self, queried, bits):
        if len(queried) == self.n_edges:
            return None
        v_set = self._replay(queried, bits)
        done = set(queried)
        for e in range(self.n_edges):
            if e in done:
                continue
            u, v = self._endpoints[e]
            if (u in v_set) != (v in v_set):
                return e
        return min(e for e in range(self.n_edges) if e not in done)

    def root(self):
        return self._pick([], [])

    def next_edge(self, queried, bits):
        return self._pick(queried, bits)


class UserTableTree(DecisionTree):
    """Tree given by an explicit history -> next-edge map."""

    def __init__(self, n_edges: int, root: int, rule: dict):
        super().__init__(n_edges)
        self._root = root
        # keys are tuples of (edge, bit) pairs
        self.rule = dict(rule)

    def root(self):
        return self._root

    def next_edge(self, queried, bits):
        if len(queried) == self.n_edges:
            return None
        key = tuple(zip(queried, bits))
        try:
            return self.rule[key]
        except KeyError:
            raise TreeError(f"rule table has no entry for history {key}") from None


def _history_key_str(key):
    return ",".join(f"{e}:{b}" for e, b in key)


def tree_to_json(tree: DecisionTree) -> str:
    if isinstance(tree, FixedOrderTree):
        d = {"type": "fixed-order", "order": tree.order}
    elif isinstance(tree, HashRuleTree):
        d = {"type": "hash-rule", "n_edges": tree.n_edges, "seed": tree.seed}
    elif isinstance(tree, ExplorationTree):
        d = {"type": "exploration", "targets": sorted(tree.targets)}
    elif isinstance(tree, UserTableTree):
        d = {
            "type": "table",
            "n_edges": tree.n_edges,
            "root": tree._root,
            "rule": {_history_key_str(k): v for k, v in tree.rule.items()},
        }
    else:
        raise TreeError(f"cannot serialize {type(tree).__name__}")
    return json.dumps(d, sort_keys=True)


def tree_from_json(text: str, graph: FiniteGraph | None = None) -> DecisionTree:
    d = json.loads(text)
    t = d["type"]
    if t == "fixed-order":
        return FixedOrderTree(d["order"])
    if t == "hash-rule":
        return HashRuleTree(d["n_edges"], d["seed"])
    if t == "exploration":
        if graph is None:
            raise TreeError("exploration trees need the graph to deserialize")
        return ExplorationTree(graph, d["targets"])
    if t == "table":
        rule = {}
        for ks, v in d["rule"].items():
            key = tuple(
                (int(p.split(":")[0]), int(p.split(":")[1]))
                for p in ks.split(",")
            ) if ks else ()
            rule[key] = v
        return UserTableTree(d["n_edges"], d["root"], rule)
    raise TreeError(f"unknown tree type {t!r}")


# ---------------------------------------------------------------------------
# boolean functions


class BoolFunction:
    """A {0,1}-valued function of the edge configuration."""

    def __init__(self, n_edges: int, increasing: bool | None = None):
        self.n_edges = n_edges
        self._increasing = increasing
        self._table: np.ndarray | None = None

    def _compute_table(self) -> np.ndarray:
        raise NotImplementedError

    def table(self) -> np.ndarray:
        if self._table is None:
            t = np.asarray(self._compute_table()).astype(np.uint8)
            if t.shape != (1 << self.n_edges,):
                raise ValueError("table must have one value per configuration")
            self._table = t
        return self._table

    def evaluate(self, bits) -> int:
        return int(self.table()[config_index(bits)])

    def determined(self, revealed: dict[int, int]):
        """(True, value) if f is constant over configurations matching the
        revealed bits, else (False, None)."""
        t = self.table()
        cols = bit_columns(self.n_edges)
        mask = np.ones(t.shape[0], dtype=bool)
        for e, b in revealed.items():
            mask &= cols[:, e] == b
        vals = t[mask]
        if vals.min() == vals.max():
            return True, int(vals[0])
        return False, None

    def is_increasing(self) -> bool:
        if self._increasing is None:
            self._increasing = table_is_increasing(self.table())
        return self._increasing


class TableFunction(BoolFunction):
    def __init__(self, n_edges: int, table, increasing: bool | None = None):
        super().__init__(n_edges, increasing)
        self._table = np.asarray(table).astype(np.uint8)
        if self._table.shape != (1 << n_edges,):
            raise ValueError("table must have one value per configuration")


class ConnectivityIndicator(BoolFunction):
    """Indicator of 'some source vertex connects to some target vertex'."""

    def __init__(self, g: FiniteGraph, sources, targets):
        super().__init__(g.n_edges, increasing=True)
        self.graph = g
        self.sources = sorted(set(sources))
        self.targets = sorted(set(targets))

    def _compute_table(self):
        return connectivity_event_table(self.graph, self.sources, self.targets)

    def evaluate(self, bits) -> int:
        return 1 if self._connected({e: int(b) for e, b in enumerate(bits)}) else 0

    def _connected(self, revealed, default_open=False):
        # union-find over edges known open, plus optionally the undecided ones
        verts = self.graph.vertices
        vidx = {v: i for i, v in enumerate(verts)}
        parent = list(range(len(verts)))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for u, v, eid in self.graph.edges:
            b = revealed.get(eid)
            if b == 1 or (b is None and default_open):
                ra, rb = find(vidx[u]), find(vidx[v])
                if ra != rb:
                    parent[rb] = ra
        roots = {find(vidx[s]) for s in self.sources}
        return any(find(vidx[t]) in roots for t in self.targets)

    def determined(self, revealed):
        # open path through revealed-open edges: surely connected
        if self._connected(revealed, default_open=False):
            return True, 1
        # no path even with every undecided edge open: surely disconnected
        if not self._connected(revealed, default_open=True):
            return True, 0
        return False, None


def and_function(n_edges: int) -> TableFunction:
    t = bit_columns(n_edges).all(axis=1)
    return TableFunction(n_edges, t, increasing=True)


def or_function(n_edges: int) -> TableFunction:
    t = bit_columns(n_edges).any(axis=1)
    return TableFunction(n_edges, t, increasing=True)


def majority_function(n_edges: int) -> TableFunction:
    if n_edges % 2 == 0:
        raise ValueError("majority needs an odd number of edges")
    t = bit_columns(n_edges).sum(axis=1) > n_edges // 2
    return TableFunction(n_edges, t, increasing=True)


def dictator_function(n_edges: int, e: int) -> TableFunction:
    t = bit_columns(n_edges)[:, e]
    return TableFunction(n_edges, t, increasing=True)


def table_is_increasing(table) -> bool:
    t = np.asarray(table, dtype=np.int8)
    n = int(np.log2(t.shape[0]))
    idx = np.arange(t.shape[0])
    for e in range(n):
        low = idx[(idx >> e) & 1 == 0]
        if np.any(t[low] > t[low | (1 << e)]):
            return False
    return True


# ---------------------------------------------------------------------------
# running a tree on a configuration


@dataclass
class RunTrace:
    queried: list[int]
    bits: list[int]
    tau: int
    value: int


def run_tree(tree: DecisionTree, f: BoolFunction, bits) -> RunTrace:
    """Run the tree on a full configuration, recording the determination
    time (with at least one query, even for constant f)."""
    bits = [int(b) for b in bits]
    queried: list[int] = []
    revealed_bits: list[int] = []
    revealed: dict[int, int] = {}
    tau = None
    value = None
    e = tree.root()
    while e is not None:
        if e in revealed:
            raise TreeError(f"tree queried edge {e} twice")
        queried.append(e)
        revealed_bits.append(bits[e])
        revealed[e] = bits[e]
        if tau is None:
            done, val = f.determined(revealed)
            if done:
                tau, value = len(queried), val
        e = tree.next_edge(queried, revealed_bits)
    if len(queried) != tree.n_edges:
        raise TreeError("tree stopped before querying every edge")
    if tau is None:
        raise AssertionError("function undetermined after all edges revealed")
    return RunTrace(queried, revealed_bits, tau, value)


# ---------------------------------------------------------------------------
# exact engine


@dataclass
class Leaf:
    queried: tuple[int, ...]        # edges revealed up to tau, in order
    bits: tuple[int, ...]
    prob: float
    f_mean: float
    config_indices: np.ndarray = field(repr=False)


@dataclass
class ExactRunReport:
    delta: np.ndarray               # per-edge revealment
    leaves: list[Leaf]
    tau_distribution: dict[int, float]
    expected_tau: float


def exact_analysis(m: Measure, tree: DecisionTree, f: BoolFunction) -> ExactRunReport:
    """Exhaustive walk of the history tree, stopped at determination.

    Determination is checked against every consistent configuration, not
    just the positive-probability ones; zero-probability branches are
    still descended when they share a parent with a positive one, but
    contribute nothing to revealments or leaves.
    """
    E = m.n_edges
    if f.n_edges != E or tree.n_edges != E:
        raise ValueError("measure, tree and function must share the edge set")
    probs = m.probabilities()
    cols = bit_columns(E)
    f_table = f.table()
    delta = np.zeros(E)
    leaves: list[Leaf] = []
    tau_dist: dict[int, float] = {}

    # iterative DFS: (consistent config indices, queried edges, their bits)
    root = tree.root()
    stack = [(np.arange(1 << E), [], [])]
    while stack:
        indices, queried, bits = stack.pop()
        if queried:
            vals = f_table[indices]
            if vals.min() == vals.max() or len(queried) == E:
                if vals.min() != vals.max():
                    raise AssertionError("undetermined with all edges revealed")
                p = float(probs[indices].sum())
                if p > 0.0:
                    fm = float(probs[indices] @ f_table[indices] / p)
                    leaves.append(Leaf(tuple(queried), tuple(bits), p, fm, indices))
                    for e in queried:
                        delta[e] += p
                    t = len(queried)
                    tau_dist[t] = tau_dist.get(t, 0.0) + p
                continue
            e = tree.next_edge(queried, bits)
        else:
            e = root
        if e is None or e in queried:
            raise TreeError(f"invalid tree move {e!r} after history {queried}")
        open_mask = cols[indices, e] == 1
        stack.append((indices[open_mask], queried + [e], bits + [1]))
        stack.append((indices[~open_mask], queried + [e], bits + [0]))
    expected_tau = sum(t * p for t, p in tau_dist.items())
    return ExactRunReport(delta, leaves, tau_dist, expected_tau)


def revealment(m: Measure, tree: DecisionTree, f: BoolFunction) -> np.ndarray:
    """Exact per-edge revealments delta_e = mu[edge e queried by time tau]."""
    return exact_analysis(m, tree, f).delta


def revealment_mc(m: Measure, tree: DecisionTree, f: BoolFunction,
                  n_samples: int, rng: np.random.Generator,
                  samples: np.ndarray | None = None) -> np.ndarray:
    """Monte Carlo revealment estimate from iid configurations.

    ``samples`` may supply pre-drawn configurations as a (k, E) bit array;
    otherwise they are drawn exactly from m.
    """
    E = m.n_edges
    if samples is None:
        idx = m.sample_indices(rng, n_samples)
        samples = bit_columns(E)[idx]
    hits = np.zeros(E)
    for row in samples:
        trace = run_tree(tree, f, row)
        for e in trace.queried[: trace.tau]:
            hits[e] += 1
    return hits / samples.shape[0]


# ---------------------------------------------------------------------------
# sequential sampler (threshold coupling along the tree)


def sequential_sample(m: Measure, tree: DecisionTree, rng: np.random.Generator):
    """Draw one configuration by revealing edges in tree order.

    Edge e_t is set open exactly when the uniform u_t reaches the
    conditional closure probability mu[w_{e_t} = 0 | revealed so far].
    The resulting law is exactly m.
    """
    queried: list[int] = []
    bits: list[int] = []
    revealed: dict[int, int] = {}
    e = tree.root()
    while e is not None:
        p_open = m.cond_one_edge(e, revealed)
        u = rng.random()
        b = 1 if u >= 1.0 - p_open else 0
        queried.append(e)
        bits.append(b)
        revealed[e] = b
        e = tree.next_edge(queried, bits)
    if len(queried) != m.n_edges:
        raise TreeError("tree stopped before querying every edge")
    out = np.zeros(m.n_edges, dtype=np.uint8)
    for eid, b in revealed.items():
        out[eid] = b
    return out


def _walk_histories(m, tree, visit):
    """Drive (prob-or-count, history) recursion shared by the exact law and
    the batched sampler; ``visit`` splits a node's mass between children."""
    E = m.n_edges

    stack = [(visit.root_mass, [], [], {})]
    while stack:
        mass, queried, bits, revealed = stack.pop()
        if len(queried) == E:
            visit.leaf(mass, revealed)
            continue
        e = tree.root() if not queried else tree.next_edge(queried, bits)
        if e is None or e in revealed:
            raise TreeError(f"invalid tree move {e!r} after history {queried}")
        p_open = m.cond_one_edge(e, revealed)
        m_open, m_closed = visit.split(mass, p_open)
        if visit.keep(m_closed):
            stack.append((m_closed, queried + [e], bits + [0], {**revealed, e: 0}))
        if visit.keep(m_open):
            stack.append((m_open, queried + [e], bits + [1], {**revealed, e: 1}))


def sequential_law_exact(m: Measure, tree: DecisionTree) -> np.ndarray:
    """Exact pushforward of the sequential sampler, as a table over
    configuration indices (should equal m.probabilities())."""
    out = np.zeros(1 << m.n_edges)

    class V:
        root_mass = 1.0

        @staticmethod
        def split(mass, p_open):
            return mass * p_open, mass * (1.0 - p_open)

        @staticmethod
        def keep(mass):
            return mass > 0.0

        @staticmethod
        def leaf(mass, revealed):
            idx = sum(b << e for e, b in revealed.items())
            out[idx] += mass

    _walk_histories(m, tree, V)
    return out


def sequential_sample_counts(m: Measure, tree: DecisionTree,
                             rng: np.random.Generator, n_samples: int) -> np.ndarray:
    """Histogram of n_samples iid draws from the sequential sampler.

    Samples sharing a history prefix are advanced together: the open/closed
    split of a batch is a binomial draw, which gives the same joint law as
    running the per-sample loop n times.
    """
    out = np.zeros(1 << m.n_edges, dtype=np.int64)

    class V:
        root_mass = int(n_samples)

        @staticmethod
        def split(count, p_open):
            k = int(rng.binomial(count, p_open))
            return k, count - k

        @staticmethod
        def keep(count):
            return count > 0

        @staticmethod
        def leaf(count, revealed):
            idx = sum(b << e for e, b in revealed.items())
            out[idx] += count

    _walk_histories(m, tree, V)
    return out


# ---------------------------------------------------------------------------
# stopped conditional expectation


def conditional_expectation_at_stop(m: Measure, tree: DecisionTree, f: BoolFunction):
    """Leaves of the stopped sigma-field with E[f | leaf], plus the L1
    residual mu[|f - E[f | stopped history]|]."""
    report = exact_analysis(m, tree, f)
    probs = m.probabilities()
    f_table = f.table().astype(float)
    residual = 0.0
    for leaf in report.leaves:
        residual += float(
            probs[leaf.config_indices]
            @ np.abs(f_table[leaf.config_indices] - leaf.f_mean)
        )
    return report, residual
