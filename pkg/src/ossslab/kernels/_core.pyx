# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: single-bond heat-bath sweeps and batched
union-find connectivity.  Same API and same results as the pure-Python
fallback (randomness is supplied by the caller as uniform buffers)."""

import numpy as np

cimport numpy as cnp  # noqa: F401  (cimport kept for buffer typing)

BACKEND = "compiled"


cdef long long _find(long long* parent, long long a) nogil:
    cdef long long root = a, tmp
    while parent[root] != root:
        root = parent[root]
    while parent[a] != root:
        tmp = parent[a]
        parent[a] = root
        a = tmp
    return root


def heatbath_sweeps(long long[::1] indptr, long long[::1] nbr, long long[::1] eid,
                    long long[::1] eu, long long[::1] ev, unsigned char[::1] state,
                    double[::1] p_conn, double[::1] p_disc, double[:, ::1] rand2d,
                    unsigned char[::1] src_mask, unsigned char[::1] tgt_mask,
                    unsigned char[::1] out_hits):
    cdef Py_ssize_t n_sweeps = rand2d.shape[0]
    cdef Py_ssize_t E = rand2d.shape[1]
    cdef Py_ssize_t n_vert = indptr.shape[0] - 1
    cdef Py_ssize_t s, e, k, head, tail
    cdef long long x, y, e2, a, b
    cdef long long stamp = 0
    cdef double p
    cdef bint found, measure = False

    visited_arr = np.zeros(n_vert, dtype=np.int64)
    queue_arr = np.empty(n_vert, dtype=np.int64)
    cdef long long[::1] visited = visited_arr
    cdef long long[::1] queue = queue_arr

    for k in range(n_vert):
        if src_mask[k]:
            measure = True
            break
    if measure:
        found = False
        for k in range(n_vert):
            if tgt_mask[k]:
                found = True
                break
        measure = found

    with nogil:
        for s in range(n_sweeps):
            for e in range(E):
                # BFS from eu[e] towards ev[e] over open edges, skipping e
                a = eu[e]
                b = ev[e]
                stamp += 1
                visited[a] = stamp
                queue[0] = a
                head = 0
                tail = 1
                found = False
                while head < tail and not found:
                    x = queue[head]
                    head += 1
                    for k in range(indptr[x], indptr[x + 1]):
                        e2 = eid[k]
                        if e2 == e or (e2 < E and state[e2] == 0):
                            continue
                        y = nbr[k]
                        if visited[y] != stamp:
                            if y == b:
                                found = True
                                break
                            visited[y] = stamp
                            queue[tail] = y
                            tail += 1
                p = p_conn[e] if found else p_disc[e]
                state[e] = 1 if rand2d[s, e] < p else 0

            if measure:
                stamp += 1
                head = 0
                tail = 0
                found = False
                for x in range(n_vert):
                    if src_mask[x]:
                        if tgt_mask[x]:
                            found = True
                            break
                        visited[x] = stamp
                        queue[tail] = x
                        tail += 1
                while head < tail and not found:
                    x = queue[head]
                    head += 1
                    for k in range(indptr[x], indptr[x + 1]):
                        e2 = eid[k]
                        # events are read off the configuration itself:
                        # ghost pseudo-edges carry no connection here
                        if e2 >= E or state[e2] == 0:
                            continue
                        y = nbr[k]
                        if visited[y] != stamp:
                            if tgt_mask[y]:
                                found = True
                                break
                            visited[y] = stamp
                            queue[tail] = y
                            tail += 1
                out_hits[s] = 1 if found else 0
            else:
                out_hits[s] = 0


def connected_batch(long long[::1] eu, long long[::1] ev, Py_ssize_t n_vertices,
                    unsigned char[:, ::1] bits, unsigned char[::1] src_mask,
                    unsigned char[::1] tgt_mask):
    cdef Py_ssize_t k = bits.shape[0]
    cdef Py_ssize_t E = bits.shape[1]
    cdef Py_ssize_t r, e, v
    cdef long long ra, rb
    out_arr = np.zeros(k, dtype=np.uint8)
    parent_arr = np.empty(n_vertices, dtype=np.int64)
    src_root_arr = np.zeros(n_vertices, dtype=np.uint8)
    cdef unsigned char[::1] out = out_arr
    cdef long long[::1] parent_mv = parent_arr
    cdef unsigned char[::1] src_root = src_root_arr
    cdef long long* parent = &parent_mv[0]

    with nogil:
        for r in range(k):
            for v in range(n_vertices):
                parent[v] = v
                src_root[v] = 0
            for e in range(E):
                if bits[r, e]:
                    ra = _find(parent, eu[e])
                    rb = _find(parent, ev[e])
                    if ra != rb:
                        parent[rb] = ra
            for v in range(n_vertices):
                if src_mask[v]:
                    src_root[_find(parent, v)] = 1
            for v in range(n_vertices):
                if tgt_mask[v] and src_root[_find(parent, v)]:
                    out[r] = 1
                    break
    return out_arr
