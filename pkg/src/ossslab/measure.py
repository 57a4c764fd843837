"""Exact probability laws on {0,1}^E.

Product, random-cluster (free/wired) and Potts measures with exact
probability tables by full enumeration, one-edge conditional probabilities,
and a monotonicity auditor.  Configurations are edge-indexed bit vectors;
internally a configuration is the integer index sum_e w_e 2^e.
"""

from __future__ import annotations

import json
import math
from functools import lru_cache

import numpy as np

from .graph import COORDINATION, FiniteGraph, GraphError, LatticeSpec, build_box

__all__ = [
    "EXACT_EDGE_CAP",
    "AUDIT_CAP",
    "ExactUnavailableError",
    "ZeroProbabilityError",
    "Measure",
    "ProductMeasure",
    "RandomClusterMeasure",
    "ExplicitMeasure",
    "PottsMeasure",
    "config_index",
    "config_bits",
    "bit_columns",
    "cluster_count",
    "cluster_count_table",
    "component_labels_table",
    "connectivity_event_table",
    "connection_probability",
    "rc_prob",
    "cond_one_edge",
    "single_bond_conditional",
    "monotonicity_audit",
    "potts_prob",
    "potts_rc_identity_check",
    "stochastic_domination_check",
]

EXACT_EDGE_CAP = 20     # full enumeration of {0,1}^E
AUDIT_CAP = 12          # exhaustive monotonicity audit
DOMINATION_CAP = 5      # exhaustive up-set enumeration


class ExactUnavailableError(RuntimeError):
    """Raised when an exact computation would exceed its enumeration cap."""


class ZeroProbabilityError(ValueError):
    """Conditioning on an event of probability zero."""


# ---------------------------------------------------------------------------
# configuration helpers


def config_index(bits) -> int:
    idx = 0
    for e, b in enumerate(bits):
        if b:
            idx |= 1 << e
    return idx


def config_bits(index: int, n_edges: int) -> np.ndarray:
    return np.array([(index >> e) & 1 for e in range(n_edges)], dtype=np.uint8)


@lru_cache(maxsize=8)
def bit_columns(n_edges: int) -> np.ndarray:
    """(2^n, n) uint8 matrix: bit e of every configuration index."""
    if n_edges > EXACT_EDGE_CAP:
        raise ExactUnavailableError(f"{n_edges} edges exceeds the enumeration cap {EXACT_EDGE_CAP}")
    idx = np.arange(1 << n_edges, dtype=np.uint32)
    return ((idx[:, None] >> np.arange(n_edges, dtype=np.uint32)) & 1).astype(np.uint8)


# ---------------------------------------------------------------------------
# cluster counting


class _UnionFind:
    __slots__ = ("parent",)

    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def _dense_index(g: FiniteGraph):
    return {v: i for i, v in enumerate(g.vertices)}


def cluster_count(g: FiniteGraph, w, boundary_mode: str = "free") -> int:
    """Number of clusters of the open subgraph.

    ``wired`` counts with all boundary vertices identified; it requires a
    nonempty boundary.
    """
    vidx = _dense_index(g)
    uf = _UnionFind(g.n_vertices)
    count = g.n_vertices
    if boundary_mode == "wired":
        if not g.boundary:
            raise GraphError("wired counting requires a nonempty boundary")
        bs = [vidx[v] for v in sorted(g.boundary)]
        for b in bs[1:]:
            if uf.union(bs[0], b):
                count -= 1
    elif boundary_mode != "free":
        raise ValueError(f"unknown boundary mode {boundary_mode!r}")
    bits = w if not isinstance(w, (int, np.integer)) else config_bits(w, g.n_edges)
    for u, v, eid in g.edges:
        if bits[eid] and uf.union(vidx[u], vidx[v]):
            count -= 1
    return count


def _enumerate_components(g: FiniteGraph, boundary_mode: str, want_labels: bool):
    """Depth-first enumeration of all 2^E configurations.

    Shares union-find prefixes between configurations: edge E-1 is decided
    first so leaves are produced in increasing configuration-index order.
    Returns (counts, labels) where labels is None unless requested.
    """
    E, V = g.n_edges, g.n_vertices
    if E > EXACT_EDGE_CAP:
        raise ExactUnavailableError(f"{E} edges exceeds the enumeration cap {EXACT_EDGE_CAP}")
    vidx = _dense_index(g)
    endpoints = [(vidx[u], vidx[v]) for u, v, _ in g.edges]

    parent0 = list(range(V))
    count0 = V
    if boundary_mode == "wired":
        if not g.boundary:
            raise GraphError("wired counting requires a nonempty boundary")
        bs = sorted(vidx[v] for v in g.boundary)
        for b in bs[1:]:
            parent0[b] = bs[0]
            count0 -= 1
    elif boundary_mode != "free":
        raise ValueError(f"unknown boundary mode {boundary_mode!r}")

    counts = np.empty(1 << E, dtype=np.int16)
    labels = np.empty((1 << E, V), dtype=np.int16) if want_labels else None
    out = 0

    def find(parent, a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    # stack of (next edge to decide, parent array, count, config prefix)
    stack = [(E - 1, parent0, count0)]
    while stack:
        t, parent, count = stack.pop()
        if t < 0:
            counts[out] = count
            if want_labels:
                row = labels[out]
                for i in range(V):
                    row[i] = find(parent, i)
            out += 1
            continue
        # open branch pushed first so the closed branch (bit 0) is handled
        # next, keeping leaves in increasing index order
        u, v = endpoints[t]
        p2 = list(parent)
        c2 = count
        ru, rv = find(p2, u), find(p2, v)
        if ru != rv:
            p2[rv] = ru
            c2 -= 1
        stack.append((t - 1, p2, c2))
        stack.append((t - 1, parent, count))
    return counts, labels


def _graph_cache(g: FiniteGraph) -> dict:
    # per-instance cache; keying a module dict by id(g) is unsafe (addresses
    # get reused once a graph is garbage-collected)
    return g.__dict__.setdefault("_table_cache", {})


def cluster_count_table(g: FiniteGraph, boundary_mode: str = "free") -> np.ndarray:
    """Cluster count of every configuration, indexed by configuration index."""
    cache = _graph_cache(g)
    key = ("counts", boundary_mode)
    if key not in cache:
        counts, _ = _enumerate_components(g, boundary_mode, want_labels=False)
        cache[key] = counts
    return cache[key]


def component_labels_table(g: FiniteGraph) -> np.ndarray:
    """(2^E, V) array of free-component labels (equal label <=> connected)."""
    cache = _graph_cache(g)
    if "labels" not in cache:
        _, labels = _enumerate_components(g, "free", want_labels=True)
        cache["labels"] = labels
    return cache["labels"]


def connectivity_event_table(g: FiniteGraph, sources, targets) -> np.ndarray:
    """Boolean table of the event 'some source is connected to some target'."""
    vidx = _dense_index(g)
    labels = component_labels_table(g)
    src = [vidx[s] for s in sources]
    tgt = [vidx[t] for t in targets]
    common = set(src) & set(tgt)
    if common:
        return np.ones(labels.shape[0], dtype=bool)
    event = np.zeros(labels.shape[0], dtype=bool)
    for s in src:
        for t in tgt:
            event |= labels[:, s] == labels[:, t]
    return event


# ---------------------------------------------------------------------------
# measures


class Measure:
    """A probability law on {0,1}^E with exact enumeration support."""

    kind = "abstract"

    def __init__(self, graph: FiniteGraph | None, n_edges: int):
        self.graph = graph
        self.n_edges = n_edges
        self._probs: np.ndarray | None = None

    # subclasses fill in the full table
    def _compute_probabilities(self) -> np.ndarray:
        raise NotImplementedError

    def probabilities(self) -> np.ndarray:
        if self._probs is None:
            if self.n_edges > EXACT_EDGE_CAP:
                raise ExactUnavailableError(
                    f"exact unavailable: {self.n_edges} edges exceeds cap {EXACT_EDGE_CAP}"
                )
            probs = self._compute_probabilities()
            total = probs.sum()
            if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
                raise AssertionError(f"probabilities sum to {total}, not 1")
            self._probs = probs
        return self._probs

    def prob(self, w) -> float:
        idx = w if isinstance(w, (int, np.integer)) else config_index(w)
        return float(self.probabilities()[idx])

    def expectation(self, f_table: np.ndarray) -> float:
        return float(self.probabilities() @ np.asarray(f_table, dtype=float))

    def cond_one_edge(self, e: int, partial: dict[int, int]) -> float:
        """mu[w_e = 1 | w_f = partial[f] for all f], by enumeration."""
        if e in partial:
            raise ValueError(f"edge {e} is part of the conditioning")
        probs = self.probabilities()
        cols = bit_columns(self.n_edges)
        mask = np.ones(probs.shape[0], dtype=bool)
        for f, b in partial.items():
            mask &= cols[:, f] == b
        den = probs[mask].sum()
        if den <= 0.0:
            raise ZeroProbabilityError("conditioning event has probability zero")
        num = probs[mask & (cols[:, e] == 1)].sum()
        return float(num / den)

    def sample_indices(self, rng: np.random.Generator, size: int) -> np.ndarray:
        probs = self.probabilities()
        return rng.choice(probs.shape[0], size=size, p=probs)

    def is_monotonic_by_construction(self) -> bool:
        return False


class ProductMeasure(Measure):
    """Independent edges, P(w_e = 1) = p_e."""

    kind = "product"

    def __init__(self, n_edges: int, p, graph: FiniteGraph | None = None):
        super().__init__(graph, n_edges)
        p = np.broadcast_to(np.asarray(p, dtype=float), (n_edges,)).copy()
        if np.any((p < 0) | (p > 1)):
            raise ValueError("edge probabilities must lie in [0, 1]")
        self.p = p

    def _compute_probabilities(self) -> np.ndarray:
        cols = bit_columns(self.n_edges).astype(float)
        probs = np.ones(1 << self.n_edges)
        for e in range(self.n_edges):
            probs *= np.where(cols[:, e] == 1, self.p[e], 1 - self.p[e])
        return probs

    def cond_one_edge(self, e, partial):
        if e in partial:
            raise ValueError(f"edge {e} is part of the conditioning")
        return float(self.p[e])

    def is_monotonic_by_construction(self):
        return True


def _beta_from_p(p: float, j: float) -> float:
    if not 0 <= p < 1:
        raise ValueError("p must lie in [0, 1)")
    return -math.log1p(-p) / j


class RandomClusterMeasure(Measure):
    """phi_{G,beta,q}^{free|wired}: weight q^{k(w)} prod (e^{beta J}-1)^{w_e}.

    beta is the canonical parameter; a scalar p is accepted and converted
    through p = 1 - e^{-beta J} (uniform couplings required in that case).
    """

    kind = "random-cluster"

    def __init__(self, graph: FiniteGraph, q: float, beta: float | None = None,
                 p: float | None = None, boundary: str = "free"):
        super().__init__(graph, graph.n_edges)
        if q <= 0:
            raise ValueError("q must be positive")
        if (beta is None) == (p is None):
            raise ValueError("give exactly one of beta or p")
        if beta is None:
            js = set(graph.couplings)
            if len(js) != 1:
                raise ValueError("p parameterization needs uniform couplings")
            beta = _beta_from_p(p, js.pop())
        if beta < 0:
            raise ValueError("beta must be nonnegative")
        if boundary not in ("free", "wired"):
            raise ValueError(f"unknown boundary mode {boundary!r}")
        if boundary == "wired" and not graph.boundary:
            raise GraphError("wired measure requires a nonempty boundary")
        self.q = float(q)
        self.beta = float(beta)
        self.boundary = boundary

    @property
    def p_edges(self) -> np.ndarray:
        return 1.0 - np.exp(-self.beta * np.asarray(self.graph.couplings))

    def _compute_probabilities(self) -> np.ndarray:
        counts = cluster_count_table(self.graph, self.boundary)
        cols = bit_columns(self.n_edges).astype(float)
        # log weights; expm1 may be 0 at beta J = 0, meaning the edge can
        # never be open
        logy = np.empty(self.n_edges)
        for e, j in enumerate(self.graph.couplings):
            y = math.expm1(self.beta * j)
            logy[e] = math.log(y) if y > 0 else -1e300
        logw = counts * math.log(self.q) + cols @ logy
        logw -= logw.max()
        w = np.exp(logw)
        return w / w.sum()

    def is_monotonic_by_construction(self):
        return self.q >= 1


class ExplicitMeasure(Measure):
    """A measure given by an explicit probability table."""

    kind = "explicit-table"

    def __init__(self, n_edges: int, probs, graph: FiniteGraph | None = None):
        super().__init__(graph, n_edges)
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (1 << n_edges,):
            raise ValueError("table must have one entry per configuration")
        if np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("table must be a probability vector")
        self._explicit = probs / probs.sum()

    def _compute_probabilities(self):
        return self._explicit

    @classmethod
    def from_json(cls, text: str, graph: FiniteGraph | None = None) -> "ExplicitMeasure":
        d = json.loads(text)
        configs = d["configs"]
        n = len(configs[0])
        probs = np.zeros(1 << n)
        for bits, p in zip(configs, d["probs"]):
            # bitstring position i is edge i
            probs[config_index([int(c) for c in bits])] += float(p)
        return cls(n, probs, graph=graph)

    def to_json(self) -> str:
        probs = self.probabilities()
        configs, vals = [], []
        for idx in np.nonzero(probs)[0]:
            configs.append("".join(str((int(idx) >> e) & 1) for e in range(self.n_edges)))
            vals.append(float(probs[idx]))
        return json.dumps({"configs": configs, "probs": vals})


class PottsMeasure:
    """q-state Potts measure with a fixed boundary spin.

    The boundary field couples each boundary vertex to the boundary spin
    once per missing lattice neighbor (lattice coordination minus degree);
    non-lattice graphs may pass explicit external multiplicities.
    """

    kind = "potts"

    def __init__(self, graph: FiniteGraph, q: int, beta: float, boundary_spin: int = 1,
                 external: dict[int, int] | None = None):
        if not (isinstance(q, (int, np.integer)) and q >= 2):
            raise ValueError("Potts q must be an integer >= 2")
        if beta < 0:
            raise ValueError("beta must be nonnegative")
        if not 1 <= boundary_spin <= q:
            raise ValueError("boundary spin must lie in 1..q")
        self.graph = graph
        self.q = int(q)
        self.beta = float(beta)
        self.boundary_spin = int(boundary_spin)
        if external is None:
            if graph.family is None:
                raise ValueError("external edge multiplicities required for user graphs")
            z = COORDINATION[graph.family]
            external = {v: z - graph.degree(v) for v in graph.boundary}
        self.external = external
        self._probs = None
        self._spins = None

    def _enumerate(self):
        if self._probs is not None:
            return
        V = self.graph.n_vertices
        if self.q ** V > 2_200_000:
            raise ExactUnavailableError(f"{self.q}^{V} spin configurations exceed the cap")
        vidx = _dense_index(self.graph)
        n_states = self.q ** V
        # mixed-radix spin table, sigma in {1..q}^V
        idx = np.arange(n_states)
        spins = np.empty((n_states, V), dtype=np.int8)
        for i in range(V):
            spins[:, i] = (idx // self.q**i) % self.q + 1
        energy = np.zeros(n_states)
        for u, v, eid in self.graph.edges:
            j = self.graph.couplings[eid]
            energy -= j * (spins[:, vidx[u]] == spins[:, vidx[v]])
        for bv, mult in self.external.items():
            if mult:
                # uniform-coupling lattices only; mixed couplings would need
                # per-external-edge values
                js = set(self.graph.couplings) or {1.0}
                if len(js) != 1:
                    raise ValueError("boundary field needs uniform couplings")
                jb = js.pop()
                energy -= jb * mult * (spins[:, vidx[bv]] == self.boundary_spin)
        logw = -self.beta * energy
        logw -= logw.max()
        w = np.exp(logw)
        self._probs = w / w.sum()
        self._spins = spins

    def probabilities(self) -> np.ndarray:
        self._enumerate()
        return self._probs

    def prob(self, spins) -> float:
        self._enumerate()
        s = np.asarray(spins)
        idx = int(np.sum((s - 1) * self.q ** np.arange(len(s))))
        return float(self._probs[idx])

    def prob_origin_spin(self, spin: int) -> float:
        self._enumerate()
        o = _dense_index(self.graph)[self.graph.origin]
        return float(self._probs[self._spins[:, o] == spin].sum())


# ---------------------------------------------------------------------------
# operations


def rc_prob(m: RandomClusterMeasure, w) -> float:
    return m.prob(w)


def cond_one_edge(m: Measure, e: int, partial: dict[int, int]) -> float:
    return m.cond_one_edge(e, partial)


def potts_prob(m: PottsMeasure, spins) -> float:
    return m.prob(spins)


def single_bond_conditional(connected_off_e: bool, q: float, p_e: float) -> float:
    """The closed-form conditional P(w_e = 1 | everything else)."""
    if connected_off_e:
        return p_e
    return p_e / (p_e + q * (1.0 - p_e))


def monotonicity_audit(m: Measure, cap: int = AUDIT_CAP, tol: float = 1e-12) -> dict:
    """Exhaustive check of the monotone-conditional property.

    For every edge e, every conditioning set F not containing e and every
    pair of comparable positive-probability assignments xi <= zeta on F,
    verifies mu[w_e=1 | xi] <= mu[w_e=1 | zeta].  Returns a report with a
    concrete witness on failure.
    """
    E = m.n_edges
    if E > cap:
        raise ExactUnavailableError(f"{E} edges exceeds the audit cap {cap}")
    probs = m.probabilities()
    tensor = probs.reshape((2,) * E)  # axis i corresponds to edge E-1-i

    def axis(edge):
        return E - 1 - edge

    for e in range(E):
        others = [f for f in range(E) if f != e]
        for fmask in range(1 << len(others)):
            F = [others[i] for i in range(len(others)) if (fmask >> i) & 1]
            keep = sorted([axis(e)] + [axis(f) for f in F])
            drop = tuple(a for a in range(E) if a not in keep)
            marg = tensor.sum(axis=drop) if drop else tensor
            # move the e-axis to the front
            e_pos = keep.index(axis(e))
            marg = np.moveaxis(marg, e_pos, 0)
            den = marg[0] + marg[1]
            with np.errstate(invalid="ignore", divide="ignore"):
                c = np.where(den > 0, marg[1] / np.where(den > 0, den, 1.0), np.nan)
            pos = den > 0
            if not F:
                continue  # a single assignment, nothing to compare
            lower = np.where(pos, c, -np.inf)
            for j in range(len(F)):
                lower = np.maximum(lower, np.maximum.accumulate(lower, axis=j))
            bad = pos & (lower > c + tol)
            if np.any(bad):
                witness = _extract_witness(e, F, keep, axis, c, pos, bad)
                return {"is_monotonic": False, "witness": witness}
    return {"is_monotonic": True, "witness": None}


def _extract_witness(e, F, keep, axis, c, pos, bad):
    # axes of c (after moveaxis) correspond to F sorted by their tensor axis,
    # i.e. by decreasing edge id
    f_order = sorted(F, key=axis)
    zeta_idx = tuple(int(i) for i in np.argwhere(bad)[0])
    zeta = {f: zeta_idx[k] for k, f in enumerate(f_order)}
    # search all xi <= zeta for the violating one
    support = [f for f in f_order if zeta[f] == 1]
    for smask in range(1 << len(support)):
        xi = dict(zeta)
        for i, f in enumerate(support):
            if not (smask >> i) & 1:
                xi[f] = 0
        xi_idx = tuple(xi[f] for f in f_order)
        if pos[xi_idx] and c[xi_idx] > c[zeta_idx] + 1e-12:
            return {
                "edge": e,
                "conditioning_set": sorted(F),
                "xi": {f: int(xi[f]) for f in sorted(F)},
                "zeta": {f: int(zeta[f]) for f in sorted(F)},
                "cond_xi": float(c[xi_idx]),
                "cond_zeta": float(c[zeta_idx]),
            }
    raise AssertionError("violation flagged but no witness found")


def connection_probability(m, sources, targets) -> float:
    """Exact probability that a source connects to a target under m."""
    event = connectivity_event_table(m.graph, sources, targets)
    return float(m.probabilities()[event].sum())


def potts_rc_identity_check(family: str, n: int, q: int, beta: float,
                            coupling: float = 1.0) -> dict:
    """Both sides of the spin-boundary vs wired-connection identity.

    Potts lives on the radius-n box, the random-cluster measure (wired) on
    the radius-(n+1) box; the left side is P[sigma_0 = nu] - 1/q, the right
    side ((q-1)/q) P[0 <-> boundary shell].
    """
    g_potts = build_box(LatticeSpec(family, n, coupling))
    g_rc = build_box(LatticeSpec(family, n + 1, coupling))
    pm = PottsMeasure(g_potts, q=q, beta=beta)
    lhs = pm.prob_origin_spin(pm.boundary_spin) - 1.0 / q
    rc = RandomClusterMeasure(g_rc, q=q, beta=beta, boundary="wired")
    theta = connection_probability(rc, [g_rc.origin], sorted(g_rc.boundary))
    rhs = (q - 1) / q * theta
    return {
        "family": family,
        "n": n,
        "q": q,
        "beta": beta,
        "potts_side": lhs,
        "rc_side": rhs,
        "abs_difference": abs(lhs - rhs),
    }


def stochastic_domination_check(lo: Measure, hi: Measure, cap: int = DOMINATION_CAP,
                                tol: float = 1e-12) -> dict:
    """Check E_lo[1_U] <= E_hi[1_U] for every up-set U, by enumeration.

    Up-sets are generated depth-first over configurations in decreasing
    popcount order; the first violating up-set is reported.
    """
    if lo.n_edges != hi.n_edges:
        raise ValueError("measures live on different edge sets")
    E = lo.n_edges
    if E > cap:
        raise ExactUnavailableError(f"{E} edges exceeds the domination cap {cap}")
    plo = lo.probabilities()
    phi = hi.probabilities()
    n = 1 << E
    order = sorted(range(n), key=lambda c: -bin(c).count("1"))
    pos = {c: i for i, c in enumerate(order)}
    supersets = [
        [pos[c | (1 << e)] for e in range(E) if not (c >> e) & 1] for c in order
    ]

    member = [False] * n
    worst = {"violation": None}
    checked = 0

    def rec(i, lo_sum, hi_sum):
        nonlocal checked
        if worst["violation"] is not None:
            return
        if i == n:
            checked += 1
            if lo_sum > hi_sum + tol:
                worst["violation"] = {
                    "up_set": [order[j] for j in range(n) if member[j]],
                    "lo": lo_sum,
                    "hi": hi_sum,
                }
            return
        c = order[i]
        member[i] = False
        rec(i + 1, lo_sum, hi_sum)
        # c may join only once every superset is already in (up-set closure)
        if all(member[j] for j in supersets[i]):
            member[i] = True
            rec(i + 1, lo_sum + plo[c], hi_sum + phi[c])
            member[i] = False

    rec(0, 0.0, 0.0)
    return {
        "dominates": worst["violation"] is None,
        "up_sets_checked": checked,
        "violation": worst["violation"],
    }
