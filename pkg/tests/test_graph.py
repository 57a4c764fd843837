import json

import pytest

from ossslab.graph import (
    FiniteGraph,
    GraphError,
    LatticeSpec,
    PlanarDualMap,
    build_box,
    build_rectangle,
    dual_graph,
    graph_distance,
)


def counts(g):
    return g.n_vertices, g.n_edges


class TestBoxes:
    def test_square_box_sizes(self):
        assert counts(build_box(LatticeSpec("square", 1))) == (5, 4)
        assert counts(build_box(LatticeSpec("square", 2))) == (13, 16)

    def test_triangular_box(self):
        assert counts(build_box(LatticeSpec("triangular", 1))) == (7, 12)

    def test_hexagonal_boxes(self):
        # the radius-1 ball of the honeycomb is a 3-edge star
        assert counts(build_box(LatticeSpec("hexagonal", 1))) == (4, 3)
        assert counts(build_box(LatticeSpec("hexagonal", 2))) == (10, 9)

    def test_boundary_is_outer_shell(self):
        g = build_box(LatticeSpec("square", 2))
        assert set(g.shell(2)) == g.boundary
        assert g.depth(g.origin) == 0

    def test_radius_zero_rejected(self):
        with pytest.raises((GraphError, ValueError)):
            build_box(LatticeSpec("square", 0))

    @pytest.mark.parametrize("family", ["square", "triangular", "hexagonal"])
    def test_edge_ids_dense_and_sorted(self, family):
        g = build_box(LatticeSpec(family, 2))
        assert [eid for _, _, eid in g.edges] == list(range(g.n_edges))

    def test_shell_partition(self):
        g = build_box(LatticeSpec("square", 3))
        total = sum(len(g.shell(k)) for k in range(4))
        assert total == g.n_vertices


class TestDistances:
    def test_square_distances(self):
        g = build_box(LatticeSpec("square", 3))
        inv = {c: v for v, c in g.coords.items()}
        assert graph_distance(g, inv[(0, 0)], inv[(2, 0)]) == 2
        assert graph_distance(g, inv[(1, 1)], inv[(-1, -1)]) == 4

    def test_distance_symmetry(self):
        g = build_box(LatticeSpec("triangular", 2))
        vs = g.vertices[:5]
        for a in vs:
            for b in vs:
                assert graph_distance(g, a, b) == graph_distance(g, b, a)


class TestSerialization:
    def test_round_trip_bit_exact(self):
        g = build_box(LatticeSpec("square", 2, coupling=1.25))
        g2 = FiniteGraph.from_json(g.to_json())
        assert g2.to_json() == g.to_json()
        assert g2.edges == g.edges
        assert g2.boundary == g.boundary
        assert g2.couplings == g.couplings

    def test_json_is_valid(self):
        g = build_rectangle(2, 1)
        payload = json.loads(g.to_json())
        assert len(payload["edges"]) == g.n_edges


class TestDuality:
    def test_rectangle_faces_cover_edges(self):
        # every edge borders exactly two faces once the outer face is added
        g = build_rectangle(2, 2)
        seen = {}
        for face in g.faces:
            for e in face:
                seen[e] = seen.get(e, 0) + 1
        assert all(c in (1, 2) for c in seen.values())

    def test_single_cell_dual(self):
        # free dual of one square cell: inner + outer face, 4 parallel edges
        dm = dual_graph(build_rectangle(1, 1), wired=False)
        assert isinstance(dm, PlanarDualMap)
        assert dm.dual.n_vertices == 2
        assert dm.dual.n_edges == 4
        assert dm.to_dual(3) == 3 and dm.to_primal(3) == 3

    def test_dual_of_dual_cell(self):
        dm = dual_graph(build_rectangle(1, 1), wired=False)
        back = dual_graph(dm.dual, wired=False, infer_faces=True)
        assert back.dual.n_vertices == 4
        assert back.dual.n_edges == 4

    def test_wired_2x2_dual(self):
        dm = dual_graph(build_rectangle(2, 2), wired=True)
        assert (dm.dual.n_vertices, dm.dual.n_edges) == (12, 12)

    def test_wired_cross_dual_is_cycle(self):
        dm = dual_graph(build_box(LatticeSpec("square", 1)), wired=True)
        d = dm.dual
        assert (d.n_vertices, d.n_edges) == (4, 4)
        assert all(d.degree(v) == 2 for v in d.vertices)

    def test_bridge_has_no_dual(self):
        g = FiniteGraph(vertices=[0, 1], edges=[(0, 1, 0)], couplings=[1.0],
                        boundary=frozenset([1]), origin=0)
        with pytest.raises(GraphError):
            dual_graph(g, wired=False, infer_faces=True)


class TestInvariants:
    def test_self_loop_rejected(self):
        with pytest.raises(GraphError):
            FiniteGraph(vertices=[0], edges=[(0, 0, 0)], couplings=[1.0],
                        boundary=frozenset(), origin=0)

    def test_negative_coupling_rejected(self):
        with pytest.raises(GraphError):
            FiniteGraph(vertices=[0, 1], edges=[(0, 1, 0)], couplings=[-1.0],
                        boundary=frozenset(), origin=0)

    def test_non_dense_edge_ids_rejected(self):
        with pytest.raises(GraphError):
            FiniteGraph(vertices=[0, 1, 2], edges=[(0, 1, 0), (1, 2, 2)],
                        couplings=[1.0, 1.0], boundary=frozenset(), origin=0)
