"""Variance/covariance/influence computations and the decision-tree
variance inequalities.

The central check: for a monotonic measure, an increasing f into [0,1]
and any decision tree,

    Var(f) <= sum_e delta_e(f, T) * Cov(f, w_e),

together with its influence, Poincare (delta == 1) and stopped variants.
All quantities are exact (full enumeration).
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dtree import (
    BoolFunction,
    DecisionTree,
    TreeError,
    exact_analysis,
    table_is_increasing,
)
from .measure import (
    AUDIT_CAP,
    Measure,
    ZeroProbabilityError,
    bit_columns,
    connectivity_event_table,
    monotonicity_audit,
)

__all__ = [
    "HypothesisError",
    "DegenerateEdgeError",
    "OsssReport",
    "variance",
    "covariance",
    "influence",
    "check_osss",
    "check_osss_stopped",
    "check_lemma32",
]

SLACK_TOL = 1e-12


class HypothesisError(ValueError):
    """The inequality's hypotheses could not be certified."""


class DegenerateEdgeError(ValueError):
    """Influence is undefined for an edge that is a.s. open or a.s. closed."""


def _as_table(f, n_edges: int) -> np.ndarray:
    if isinstance(f, BoolFunction):
        if f.n_edges != n_edges:
            raise ValueError("function and measure edge counts differ")
        return f.table().astype(float)
    t = np.asarray(f, dtype=float)
    if t.shape != (1 << n_edges,):
        raise ValueError("table must have one value per configuration")
    return t


def variance(m: Measure, f) -> float:
    t = _as_table(f, m.n_edges)
    probs = m.probabilities()
    mean = probs @ t
    return float(probs @ (t - mean) ** 2)


def covariance(m: Measure, f, e: int) -> float:
    t = _as_table(f, m.n_edges)
    probs = m.probabilities()
    w = bit_columns(m.n_edges)[:, e].astype(float)
    return float(probs @ (t * w) - (probs @ t) * (probs @ w))


def influence(m: Measure, f, e: int) -> float:
    """I_e[f] = E[f | w_e = 1] - E[f | w_e = 0]."""
    t = _as_table(f, m.n_edges)
    probs = m.probabilities()
    w = bit_columns(m.n_edges)[:, e] == 1
    p1 = probs[w].sum()
    if p1 <= 0.0 or p1 >= 1.0:
        raise DegenerateEdgeError(f"edge {e} has marginal {p1}; influence undefined")
    up = float(probs[w] @ t[w] / p1)
    down = float(probs[~w] @ t[~w] / (1.0 - p1))
    return up - down


# ---------------------------------------------------------------------------
# reports


@dataclass
class OsssReport:
    variant: str
    variance: float
    delta: np.ndarray
    covariances: np.ndarray
    influences: np.ndarray | None
    rhs: float
    slack: float
    residual: float = 0.0
    monotonicity: str = "by-construction"
    notes: list[str] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.slack >= -SLACK_TOL

    def to_json(self) -> str:
        d = {
            "variant": self.variant,
            "variance": self.variance,
            "rhs": self.rhs,
            "slack": self.slack,
            "holds": self.holds,
            "residual": self.residual,
            "monotonicity": self.monotonicity,
            "delta": list(map(float, self.delta)),
            "covariances": list(map(float, self.covariances)),
            "influences": None if self.influences is None else list(map(float, self.influences)),
            "notes": self.notes,
        }
        return json.dumps(d, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["edge", "delta", "covariance", "influence"])
        for e in range(len(self.delta)):
            inf = "" if self.influences is None else self.influences[e]
            w.writerow([e, self.delta[e], self.covariances[e], inf])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# hypothesis policing


def _certify_monotone(m: Measure, force: bool) -> str:
    if m.is_monotonic_by_construction():
        return "by-construction"
    if m.n_edges <= AUDIT_CAP:
        rep = monotonicity_audit(m)
        if rep["is_monotonic"]:
            return "audited"
        if force:
            return "forced(audit-failed)"
        raise HypothesisError(
            f"measure is not monotonic; witness {rep['witness']} (pass force=True to proceed)"
        )
    if force:
        return "forced(unaudited)"
    raise HypothesisError(
        "measure monotonicity cannot be certified at this size (pass force=True to proceed)"
    )


def _certify_increasing(f, table: np.ndarray, force: bool, notes: list[str]):
    if isinstance(f, BoolFunction):
        inc = f.is_increasing()
    else:
        inc = table_is_increasing(table)
    if not inc:
        if not force:
            raise HypothesisError("f is not increasing (pass force=True to proceed)")
        notes.append("f is not increasing; inequality not guaranteed")


def _rescaled(table: np.ndarray, lo: float, hi: float, notes: list[str]) -> np.ndarray:
    if table.min() >= lo - 1e-15 and table.max() <= hi + 1e-15:
        return table
    span = table.max() - table.min()
    warnings.warn(f"f takes values outside [{lo},{hi}]; rescaling affinely")
    notes.append(f"f rescaled into [{lo},{hi}]")
    if span == 0:
        return np.full_like(table, lo)
    return lo + (hi - lo) * (table - table.min()) / span


# ---------------------------------------------------------------------------
# checks


def check_osss(m: Measure, tree: DecisionTree | None, f,
               variant: str = "covariance", force: bool = False) -> OsssReport:
    """Exact verification of the variance inequality for one
    (measure, tree, function) triple.

    variant: ``covariance`` (the main inequality), ``influence`` (rhs uses
    sum delta_e I_e), or ``poincare`` (delta == 1, no tree needed).
    """
    if variant not in ("covariance", "influence", "poincare"):
        raise ValueError(f"unknown variant {variant!r}")
    notes: list[str] = []
    E = m.n_edges
    table = _as_table(f, E)
    mono = _certify_monotone(m, force)
    _certify_increasing(f, table, force, notes)
    table = _rescaled(table, 0.0, 1.0, notes)

    if variant == "poincare":
        delta = np.ones(E)
    else:
        if tree is None:
            raise ValueError("this variant needs a decision tree")
        if isinstance(f, BoolFunction) and np.array_equal(table, f.table()):
            fq = f
        else:
            # the engine only uses value-constancy on cylinders, so a
            # real-valued f can be relabeled by its distinct values
            from .dtree import TableFunction

            _, inv = np.unique(table, return_inverse=True)
            if inv.max() > 255:
                raise ValueError("f takes too many distinct values for the engine")
            fq = TableFunction(E, inv.astype(np.uint8))
        delta = exact_analysis(m, tree, fq).delta

    var = variance(m, table)
    covs = np.array([covariance(m, table, e) for e in range(E)])
    infs = None
    if variant == "influence":
        infs = np.zeros(E)
        terms = np.zeros(E)
        for e in range(E):
            try:
                infs[e] = influence(m, table, e)
                terms[e] = delta[e] * infs[e]
            except DegenerateEdgeError:
                notes.append(f"edge {e} degenerate; influence term taken as 0")
        rhs = float(terms.sum())
    else:
        rhs = float(delta @ covs)
    return OsssReport(variant, var, delta, covs, infs, rhs, rhs - var,
                      monotonicity=mono, notes=notes)


def _stopped_walk(m: Measure, tree: DecisionTree, stop):
    """History walk cut at a history-measurable stopping rule.

    ``stop`` is a callable stop(queried, bits) -> bool evaluated after each
    query, an int (stop after that many queries), or "full".
    """
    E = m.n_edges
    if stop == "full":
        rule = lambda q, b: False
    elif isinstance(stop, int):
        if not 1 <= stop <= E:
            raise ValueError("stop count must lie in [1, n_edges]")
        k = stop
        rule = lambda q, b: len(q) >= k
    else:
        rule = stop
    probs = m.probabilities()
    cols = bit_columns(E)
    delta = np.zeros(E)
    leaves = []

    stack = [(np.arange(1 << E), [], [])]
    while stack:
        indices, queried, bits = stack.pop()
        if queried and (len(queried) == E or rule(queried, bits)):
            p = float(probs[indices].sum())
            if p > 0.0:
                leaves.append((indices, list(queried), p))
                for e in queried:
                    delta[e] += p
            continue
        e = tree.root() if not queried else tree.next_edge(queried, bits)
        if e is None or e in queried:
            raise TreeError(f"invalid tree move {e!r} after history {queried}")
        open_mask = cols[indices, e] == 1
        stack.append((indices[open_mask], queried + [e], bits + [1]))
        stack.append((indices[~open_mask], queried + [e], bits + [0]))
    return delta, leaves


def check_osss_stopped(m: Measure, tree: DecisionTree, stop, f,
                       force: bool = False) -> OsssReport:
    """The stopped variant: Var(f) <= sum delta_e Cov(f, w_e) + E|f - E[f|F_tau]|
    with delta counting queries up to the stopping time and f into [-1,1]."""
    notes: list[str] = []
    E = m.n_edges
    table = _as_table(f, E)
    mono = _certify_monotone(m, force)
    _certify_increasing(f, table, force, notes)
    table = _rescaled(table, -1.0, 1.0, notes)

    delta, leaves = _stopped_walk(m, tree, stop)
    probs = m.probabilities()
    residual = 0.0
    for indices, _, p in leaves:
        fm = float(probs[indices] @ table[indices] / p)
        residual += float(probs[indices] @ np.abs(table[indices] - fm))
    var = variance(m, table)
    covs = np.array([covariance(m, table, e) for e in range(E)])
    rhs = float(delta @ covs) + residual
    return OsssReport("stopped", var, delta, covs, None, rhs, rhs - var,
                      residual=residual, monotonicity=mono, notes=notes)


# ---------------------------------------------------------------------------
# box covariance lower bound


def _distance_shells(g, x):
    """Graph-distance shells around x inside g, as {distance: [vertices]}."""
    adj = g.adjacency()
    dist = {x: 0}
    frontier = [x]
    shells = {0: [x]}
    d = 0
    while frontier:
        d += 1
        nxt = []
        for v in frontier:
            for u, _ in adj[v]:
                if u not in dist:
                    dist[u] = d
                    nxt.append(u)
        if nxt:
            shells[d] = nxt
        frontier = nxt
    return shells


def check_lemma32(m: Measure, n: int) -> dict:
    """Exact check of the covariance lower bound for 0 <-> boundary shell:

        sum_e Cov(f, w_e) >= n * theta(1-theta) / (4 max_x sum_{k<n} P[x <-> shell_k(x)])

    where shell_k(x) is the graph-distance-k shell around x.
    """
    g = m.graph
    if g is None:
        raise ValueError("this check needs a graph-backed measure")
    targets = sorted(g.boundary) if g.boundary else None
    if not targets:
        raise ValueError("graph has an empty boundary shell")
    probs = m.probabilities()
    f_event = connectivity_event_table(g, [g.origin], targets)
    table = f_event.astype(float)
    theta = float(probs @ table)
    lhs = float(sum(covariance(m, table, e) for e in range(m.n_edges)))

    worst = 0.0
    worst_x = None
    for x in g.vertices:
        shells = _distance_shells(g, x)
        total = 0.0
        for k in range(n):
            sh = shells.get(k)
            if sh:
                ev = connectivity_event_table(g, [x], sh)
                total += float(probs[ev].sum())
        if total > worst:
            worst, worst_x = total, x
    rhs = n * theta * (1.0 - theta) / (4.0 * worst) if worst > 0 else 0.0
    return {
        "n": n,
        "theta": theta,
        "lhs": lhs,
        "rhs": rhs,
        "slack": lhs - rhs,
        "holds": lhs >= rhs - SLACK_TOL,
        "max_vertex": worst_x,
        "max_shell_sum": worst,
    }
