import itertools

import numpy as np
import pytest

from ossslab import kernels
from ossslab.graph import FiniteGraph, LatticeSpec, build_box, build_rectangle
from ossslab.kernels import _pure
from ossslab.measure import (
    ProductMeasure,
    RandomClusterMeasure,
    connection_probability,
)
from ossslab.mcmc import (
    ChainSettings,
    Estimate,
    _csr,
    _edge_p,
    _mask,
    dual_p,
    dual_sample_law_check,
    estimate_connectivity,
    estimate_crossing,
    estimate_theta,
    heatbath_conditional,
    heatbath_step,
)


def cycle4():
    return FiniteGraph(vertices=[0, 1, 2, 3],
                       edges=[(0, 1, 0), (1, 2, 1), (2, 3, 2), (0, 3, 3)],
                       couplings=[1.0] * 4, boundary=frozenset([2, 3]), origin=0)


FAST = ChainSettings(burnin=300, thinning=5, chains=6, seed=1, samples_per_chain=500)


class TestSettings:
    def test_validation(self):
        with pytest.raises(ValueError):
            ChainSettings(chains=0)
        with pytest.raises(ValueError):
            ChainSettings(thinning=0)

    def test_frozen(self):
        with pytest.raises(Exception):
            FAST.chains = 2  # type: ignore[misc]


class TestHeatbathConditional:
    @pytest.mark.parametrize("q", [1.0, 1.5, 2.0])
    @pytest.mark.parametrize("boundary", ["free", "wired"])
    def test_matches_exact_conditional(self, q, boundary):
        g = cycle4()
        m = RandomClusterMeasure(g, q=q, p=0.5, boundary=boundary)
        p_e = float(m.p_edges[0])
        for e in range(4):
            for bits in itertools.product([0, 1], repeat=3):
                w = list(bits[:e]) + [0] + list(bits[e:])
                partial = {f: w[f] for f in range(4) if f != e}
                want = m.cond_one_edge(e, partial)
                got = heatbath_conditional(g, w, e, q, p_e, boundary)
                assert got == pytest.approx(want, abs=1e-14)

    def test_q_below_one_rejected(self):
        with pytest.raises(ValueError):
            heatbath_conditional(cycle4(), [0, 0, 0, 0], 0, 0.5, 0.5)

    def test_step_touches_one_edge(self):
        g = cycle4()
        w = np.array([1, 0, 1, 0], dtype=np.uint8)
        out = heatbath_step(g, w, 1, 2.0, 0.5, "free", np.random.default_rng(0))
        assert np.array_equal(np.delete(out, 1), np.delete(w, 1))


class TestEstimators:
    def test_q1_direct_matches_enumeration(self):
        g = build_box(LatticeSpec("square", 1))
        est = estimate_connectivity(g, 1.0, [g.origin], sorted(g.boundary),
                                    FAST, p=0.5)
        exact = connection_probability(ProductMeasure(4, 0.5, graph=g),
                                       [g.origin], sorted(g.boundary))
        assert est.compatible_with(exact)

    def test_heatbath_stationary_small_box(self):
        g = build_box(LatticeSpec("square", 1))
        m = RandomClusterMeasure(g, q=2.0, p=0.55, boundary="wired")
        exact = connection_probability(m, [g.origin], sorted(g.boundary))
        est = estimate_connectivity(g, 2.0, [g.origin], sorted(g.boundary),
                                    FAST, p=0.55, boundary="wired")
        assert est.compatible_with(exact)

    def test_reproducible(self):
        g = build_box(LatticeSpec("square", 2))
        a = estimate_connectivity(g, 2.0, [g.origin], sorted(g.boundary), FAST, p=0.5)
        b = estimate_connectivity(g, 2.0, [g.origin], sorted(g.boundary), FAST, p=0.5)
        assert a.mean == b.mean and a.half_width_95 == b.half_width_95

    def test_theta_degenerate_p(self):
        spec = LatticeSpec("square", 2)
        assert estimate_theta(spec, 1.0, FAST, p=1.0).mean == 1.0
        assert estimate_theta(spec, 1.0, FAST, p=0.0).mean == 0.0

    def test_theta_q1_exact_value(self):
        # radius 1: 0 <-> shell(1) iff some incident edge is open
        est = estimate_theta(LatticeSpec("square", 1), 1.0, FAST, p=0.3)
        assert est.compatible_with(1 - 0.7 ** 4)

    def test_theta_monotone_in_p(self):
        spec = LatticeSpec("square", 2)
        lo = estimate_theta(spec, 1.0, FAST, p=0.35)
        hi = estimate_theta(spec, 1.0, FAST, p=0.6)
        assert lo.mean < hi.mean
        assert not lo.compatible_with(hi.mean)

    def test_crossing_exact_half(self):
        # 1 x 2 rectangle, q = 1, p = 1/2: crossing the long way is exactly 1/2
        g = build_rectangle(1, 2)
        m = ProductMeasure(g.n_edges, 0.5, graph=g)
        src = [v for v, c in g.coords.items() if c[1] == 0]
        tgt = [v for v, c in g.coords.items() if c[1] == 2]
        assert connection_probability(m, src, tgt) == pytest.approx(0.5, abs=1e-14)
        est = estimate_crossing(1, 2, "vertical", 1.0, FAST, p=0.5)
        assert est.compatible_with(0.5)

    def test_crossing_full_lattice(self):
        est = estimate_crossing(2, 3, "horizontal", 1.0, FAST, p=1.0)
        assert est.mean == 1.0

    def test_q_below_one_rejected(self):
        g = build_box(LatticeSpec("square", 1))
        with pytest.raises(ValueError):
            estimate_connectivity(g, 0.5, [g.origin], sorted(g.boundary), FAST, p=0.5)


class TestDuality:
    def test_dual_p_q1(self):
        assert dual_p(0.3, 1.0) == pytest.approx(0.7, abs=1e-15)

    def test_self_dual_point_fixed(self):
        for q in (1.0, 2.0, 3.0):
            p_sd = np.sqrt(q) / (1 + np.sqrt(q))
            assert dual_p(p_sd, q) == pytest.approx(p_sd, abs=1e-14)

    def test_involution(self):
        for q in (1.0, 2.0, 4.0):
            for p in (0.1, 0.5, 0.9):
                assert dual_p(dual_p(p, q), q) == pytest.approx(p, abs=1e-14)

    @pytest.mark.parametrize("q", [1.0, 2.0])
    @pytest.mark.parametrize("builder", [lambda: build_rectangle(1, 1),
                                         lambda: build_rectangle(2, 2)])
    def test_pushforward_law(self, q, builder):
        rep = dual_sample_law_check(builder(), q, 0.45)
        assert rep["max_abs_deviation"] < 1e-12
        assert rep["involution_ok"]


class TestBackends:
    def test_backend_name_known(self):
        assert kernels.backend_name() in ("compiled", "pure")

    def test_pure_matches_active_backend(self):
        g = build_box(LatticeSpec("square", 3))
        indptr, nbr, eid, eu, ev, nv = _csr(g, wired=True)
        p_open, p_disc = _edge_p(g, 2.0, None, 0.5)
        src = _mask(g, [g.origin], nv)
        tgt = _mask(g, sorted(g.boundary), nv)

        def run(backend):
            rng = np.random.default_rng(123)
            state = np.ones(g.n_edges, dtype=np.uint8)
            rand2d = rng.random((20, g.n_edges))
            out = np.zeros(20, dtype=np.uint8)
            backend.heatbath_sweeps(indptr, nbr, eid, eu, ev, state, p_open,
                                    p_disc, rand2d, src, tgt, out)
            return state, out

        s1, o1 = run(_pure)
        s2, o2 = run(kernels)
        assert np.array_equal(s1, s2)
        assert np.array_equal(o1, o2)

    def test_connected_batch_agrees(self):
        g = build_box(LatticeSpec("square", 2))
        _, _, _, eu, ev, _ = _csr(g, wired=False)
        src = _mask(g, [g.origin], g.n_vertices)
        tgt = _mask(g, sorted(g.boundary), g.n_vertices)
        bits = (np.random.default_rng(7).random((500, g.n_edges)) < 0.5).astype(np.uint8)
        a = _pure.connected_batch(eu, ev, g.n_vertices, bits, src, tgt)
        b = kernels.connected_batch(eu, ev, g.n_vertices, bits, src, tgt)
        assert np.array_equal(a, b)

    def test_connected_batch_oracle(self):
        # against the exact event table on the tiny box
        from ossslab.measure import bit_columns, connectivity_event_table

        g = build_box(LatticeSpec("square", 1))
        _, _, _, eu, ev, _ = _csr(g, wired=False)
        src = _mask(g, [g.origin], g.n_vertices)
        tgt = _mask(g, sorted(g.boundary), g.n_vertices)
        bits = bit_columns(g.n_edges)
        got = kernels.connected_batch(eu, ev, g.n_vertices, bits, src, tgt)
        want = connectivity_event_table(g, [g.origin], sorted(g.boundary))
        assert np.array_equal(got.astype(bool), want)
