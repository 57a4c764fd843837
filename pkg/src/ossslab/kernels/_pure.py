"""Pure-Python reference implementation of the hot kernels.

Mirrors the compiled module's API exactly; selected at import time when the
extension is unavailable (or OSSSLAB_PURE=1).  All randomness comes in as
pre-drawn uniform buffers, so both backends produce identical results for
identical inputs.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"


def heatbath_sweeps(indptr, nbr, eid, eu, ev, state, p_conn, p_disc,
                    rand2d, src_mask, tgt_mask, out_hits):
    """Single-bond heat-bath sweeps with optional per-sweep event measurement.

    indptr/nbr/eid: CSR adjacency over the (possibly ghost-extended) vertex
    set; adjacency entries with eid >= n_edges are always-open pseudo-edges
    (ghost wiring).  state is the uint8 edge configuration, updated in
    place.  rand2d supplies one uniform per (sweep, edge).  After each sweep
    the connectivity event src_mask -> tgt_mask over open edges is recorded
    in out_hits (masks may be empty to skip measurement).
    """
    n_sweeps, E = rand2d.shape
    n_vert = len(indptr) - 1
    visited = np.zeros(n_vert, dtype=np.int64)
    queue = np.empty(n_vert, dtype=np.int64)
    stamp = 0
    measure = tgt_mask.any() and src_mask.any()

    def connected(a, b, skip):
        nonlocal stamp
        stamp += 1
        visited[a] = stamp
        queue[0] = a
        head, tail = 0, 1
        while head < tail:
            x = queue[head]
            head += 1
            for k in range(indptr[x], indptr[x + 1]):
                e2 = eid[k]
                if e2 == skip or (e2 < E and state[e2] == 0):
                    continue
                y = nbr[k]
                if visited[y] != stamp:
                    if y == b:
                        return True
                    visited[y] = stamp
                    queue[tail] = y
                    tail += 1
        return False

    def event_hit():
        nonlocal stamp
        stamp += 1
        head, tail = 0, 0
        for v in range(n_vert):
            if src_mask[v]:
                if tgt_mask[v]:
                    return True
                visited[v] = stamp
                queue[tail] = v
                tail += 1
        while head < tail:
            x = queue[head]
            head += 1
            for k in range(indptr[x], indptr[x + 1]):
                e2 = eid[k]
                # events are read off the configuration itself: ghost
                # pseudo-edges (e2 >= E) do not carry connections here
                if e2 >= E or state[e2] == 0:
                    continue
                y = nbr[k]
                if visited[y] != stamp:
                    if tgt_mask[y]:
                        return True
                    visited[y] = stamp
                    queue[tail] = y
                    tail += 1
        return False

    for s in range(n_sweeps):
        for e in range(E):
            p = p_conn[e] if connected(eu[e], ev[e], e) else p_disc[e]
            state[e] = 1 if rand2d[s, e] < p else 0
        out_hits[s] = 1 if (measure and event_hit()) else 0


def connected_batch(eu, ev, n_vertices, bits, src_mask, tgt_mask):
    """For each row of ``bits`` (a (k, E) uint8 array of configurations),
    whether some src vertex connects to some tgt vertex through open edges.
    Returns a (k,) uint8 array."""
    k, E = bits.shape
    out = np.zeros(k, dtype=np.uint8)
    parent = np.empty(n_vertices, dtype=np.int64)

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    for r in range(k):
        parent[:] = np.arange(n_vertices)
        row = bits[r]
        for e in range(E):
            if row[e]:
                ra, rb = find(eu[e]), find(ev[e])
                if ra != rb:
                    parent[rb] = ra
        src_roots = {find(v) for v in range(n_vertices) if src_mask[v]}
        for v in range(n_vertices):
            if tgt_mask[v] and find(v) in src_roots:
                out[r] = 1
                break
    return out
