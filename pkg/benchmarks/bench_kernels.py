"""Compare the compiled kernels against the pure-Python fallback.

Run: python3 benchmarks/bench_kernels.py
Both backends are called on identical inputs, so outputs must match
bit-for-bit; timings show the speedup of the extension.
"""

import time

import numpy as np

from ossslab.graph import LatticeSpec, build_box
from ossslab.kernels import _core, _pure  # type: ignore[attr-defined]
from ossslab.mcmc import _csr, _edge_p, _mask


def bench_heatbath(backend, g, sweeps, seed):
    indptr, nbr, eid, eu, ev, nv = _csr(g, wired=True)
    p_open, p_disc = _edge_p(g, 2.0, None, 0.5)
    src = _mask(g, [g.origin], nv)
    tgt = _mask(g, g.shell(g.radius // 2), nv)
    rng = np.random.default_rng(seed)
    state = np.ones(g.n_edges, dtype=np.uint8)
    rand2d = rng.random((sweeps, g.n_edges))
    out = np.zeros(sweeps, dtype=np.uint8)
    t0 = time.perf_counter()
    backend.heatbath_sweeps(indptr, nbr, eid, eu, ev, state, p_open, p_disc,
                            rand2d, src, tgt, out)
    return time.perf_counter() - t0, state.copy(), out.copy()


def bench_connected(backend, g, n_samples, seed):
    indptr, nbr, eid, eu, ev, nv = _csr(g, wired=False)
    src = _mask(g, [g.origin], g.n_vertices)
    tgt = _mask(g, g.shell(g.radius), g.n_vertices)
    rng = np.random.default_rng(seed)
    bits = (rng.random((n_samples, g.n_edges)) < 0.5).astype(np.uint8)
    t0 = time.perf_counter()
    out = backend.connected_batch(eu, ev, g.n_vertices, bits, src, tgt)
    return time.perf_counter() - t0, out


def main():
    g = build_box(LatticeSpec("square", 8))
    print(f"heat-bath sweeps, square box radius 8 ({g.n_edges} edges), q=2 p=0.5")
    t_pure, s_pure, h_pure = bench_heatbath(_pure, g, sweeps=30, seed=7)
    t_core, s_core, h_core = bench_heatbath(_core, g, sweeps=30, seed=7)
    assert np.array_equal(s_pure, s_core) and np.array_equal(h_pure, h_core), \
        "backends disagree"
    print(f"  pure     {t_pure:8.3f} s")
    print(f"  compiled {t_core:8.3f} s   speedup x{t_pure / t_core:.0f}")

    g = build_box(LatticeSpec("square", 6))
    print(f"batched connectivity, square box radius 6 ({g.n_edges} edges), 2000 samples")
    t_pure, o_pure = bench_connected(_pure, g, 2000, seed=3)
    t_core, o_core = bench_connected(_core, g, 2000, seed=3)
    assert np.array_equal(o_pure, o_core), "backends disagree"
    print(f"  pure     {t_pure:8.3f} s")
    print(f"  compiled {t_core:8.3f} s   speedup x{t_pure / t_core:.0f}")


if __name__ == "__main__":
    main()
