"""Finite graphs, lattice boxes, graph distance and planar duals.

Conventions fixed here and relied on everywhere else:

* Vertices are integer ids ``0..V-1``.  Lattice vertices are numbered
  row-major over their coordinate tuples (sorted tuple order).
* Edge ids are dense ``0..E-1``.  For lattice graphs the edge order is
  lexicographic on ``(min endpoint coordinate, max endpoint coordinate)``,
  which makes every adaptive exploration reproducible across runs.
* A box of radius ``n`` is the graph-distance ball around the origin with
  all induced edges; its boundary is the set of vertices at distance
  exactly ``n``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import networkx as nx

__all__ = [
    "FiniteGraph",
    "LatticeSpec",
    "PlanarDualMap",
    "GraphError",
    "build_box",
    "build_rectangle",
    "graph_distance",
    "dual_graph",
    "COORDINATION",
]

FAMILIES = ("square", "triangular", "hexagonal")

# Degree of a vertex in the infinite lattice (used for Potts boundary fields).
COORDINATION = {"square": 4, "triangular": 6, "hexagonal": 3}


class GraphError(ValueError):
    pass


def _square_neighbors(c):
    x, y = c
    return [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)]


_TRI_DELTAS = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)]


def _triangular_neighbors(c):
    a, b = c
    return [(a + da, b + db) for da, db in _TRI_DELTAS]


def _hexagonal_neighbors(c):
    # Honeycomb as two triangular sublattices; site = (a, b, s) with s in {0, 1}.
    a, b, s = c
    if s == 0:
        return [(a, b, 1), (a - 1, b, 1), (a, b - 1, 1)]
    return [(a, b, 0), (a + 1, b, 0), (a, b + 1, 0)]


_NEIGHBORS = {
    "square": _square_neighbors,
    "triangular": _triangular_neighbors,
    "hexagonal": _hexagonal_neighbors,
}

_ORIGIN_COORD = {"square": (0, 0), "triangular": (0, 0), "hexagonal": (0, 0, 0)}


@dataclass(frozen=True)
class LatticeSpec:
    """A lattice family, a box radius and a uniform coupling constant."""

    family: str
    radius: int
    coupling: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise GraphError(f"unknown lattice family {self.family!r}")
        if self.radius < 1:
            raise GraphError("box radius must be >= 1")
        if not (self.coupling > 0 and math.isfinite(self.coupling)):
            raise GraphError("coupling must be a positive finite real")


@dataclass
class FiniteGraph:
    """A finite weighted graph with a distinguished boundary and origin.

    ``edges[i]`` is ``(u, v, i)`` with dense edge ids.  Parallel edges are
    allowed (they arise in planar duals); self-loops are not.  Instances
    are treated as immutable after construction.
    """

    vertices: list[int]
    edges: list[tuple[int, int, int]]
    couplings: list[float]
    boundary: frozenset[int]
    origin: int
    coords: dict[int, tuple] | None = None
    family: str | None = None
    radius: int | None = None
    faces: list[list[int]] | None = None  # bounded faces as edge-id lists
    depths: dict[int, int] | None = None  # distance from origin, if precomputed
    _adj: dict[int, list[tuple[int, int]]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        vset = set(self.vertices)
        if len(vset) != len(self.vertices):
            raise GraphError("duplicate vertex ids")
        for i, (u, v, eid) in enumerate(self.edges):
            if eid != i:
                raise GraphError("edge ids must be dense 0..E-1 in order")
            if u == v:
                raise GraphError(f"self-loop at vertex {u}")
            if u not in vset or v not in vset:
                raise GraphError(f"edge {eid} has endpoint outside vertex set")
        if len(self.couplings) != len(self.edges):
            raise GraphError("one coupling per edge required")
        for j in self.couplings:
            if not (math.isfinite(j) and j >= 0):
                raise GraphError("couplings must be finite and >= 0")
        if self.edges and not any(j > 0 for j in self.couplings):
            raise GraphError("at least one coupling must be positive")
        if not self.boundary <= vset:
            raise GraphError("boundary vertices must belong to the graph")
        if self.origin not in vset:
            raise GraphError("origin must belong to the graph")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> dict[int, list[tuple[int, int]]]:
        """vertex -> list of (neighbor, edge id), built lazily."""
        if self._adj is None:
            adj = {v: [] for v in self.vertices}
            for u, v, eid in self.edges:
                adj[u].append((v, eid))
                adj[v].append((u, eid))
            object.__setattr__(self, "_adj", adj)
        return self._adj

    def degree(self, v: int) -> int:
        return len(self.adjacency()[v])

    def edge_endpoints(self, eid: int) -> tuple[int, int]:
        u, v, _ = self.edges[eid]
        return u, v

    def depth(self, v: int) -> int:
        """Graph distance from the origin."""
        if self.depths is not None:
            return self.depths[v]
        return graph_distance(self, self.origin, v)

    def shell(self, k: int) -> list[int]:
        """Vertices at distance exactly k from the origin, in id order."""
        return [v for v in self.vertices if self.depth(v) == k]

    # -- serialization ----------------------------------------------------

    def to_json(self) -> str:
        payload = {
            "vertices": list(self.vertices),
            "edges": [[u, v, self.couplings[eid]] for u, v, eid in self.edges],
            "boundary": sorted(self.boundary),
            "origin": self.origin,
        }
        if self.faces is not None:
            payload["faces"] = self.faces
        if self.coords is not None:
            payload["coords"] = {str(v): list(c) for v, c in self.coords.items()}
        if self.family is not None:
            payload["family"] = self.family
            payload["radius"] = self.radius
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "FiniteGraph":
        d = json.loads(text)
        edges = [(u, v, i) for i, (u, v, _) in enumerate(d["edges"])]
        couplings = [float(j) for _, _, j in d["edges"]]
        coords = None
        if "coords" in d:
            coords = {int(v): tuple(c) for v, c in d["coords"].items()}
        return cls(
            vertices=list(d["vertices"]),
            edges=edges,
            couplings=couplings,
            boundary=frozenset(d["boundary"]),
            origin=d["origin"],
            coords=coords,
            family=d.get("family"),
            radius=d.get("radius"),
            faces=d.get("faces"),
        )


@dataclass
class PlanarDualMap:
    """Primal/dual pair with an edge bijection (dual edge id == primal id)."""

    primal: FiniteGraph
    dual: FiniteGraph
    edge_bijection: list[int]

    def to_dual(self, eid: int) -> int:
        return self.edge_bijection[eid]

    def to_primal(self, dual_eid: int) -> int:
        return self.edge_bijection.index(dual_eid)


# ---------------------------------------------------------------------------
# lattice balls


@lru_cache(maxsize=None)
def _ball_coords(family: str, radius: int):
    """Coordinates of the radius-`radius` ball with their BFS depths."""
    nbrs = _NEIGHBORS[family]
    origin = _ORIGIN_COORD[family]
    depth = {origin: 0}
    frontier = [origin]
    for d in range(1, radius + 1):
        nxt = []
        for c in frontier:
            for c2 in nbrs(c):
                if c2 not in depth:
                    depth[c2] = d
                    nxt.append(c2)
        frontier = nxt
    return depth


def build_box(spec: LatticeSpec) -> FiniteGraph:
    """The ball of radius ``spec.radius`` around the origin with induced edges."""
    depth = _ball_coords(spec.family, spec.radius)
    coords_sorted = sorted(depth)
    vid = {c: i for i, c in enumerate(coords_sorted)}
    nbrs = _NEIGHBORS[spec.family]

    edge_pairs = set()
    for c in coords_sorted:
        for c2 in nbrs(c):
            if c2 in vid:
                edge_pairs.add((min(c, c2), max(c, c2)))
    edge_pairs = sorted(edge_pairs)

    edges = [(vid[a], vid[b], i) for i, (a, b) in enumerate(edge_pairs)]
    boundary = frozenset(vid[c] for c, d in depth.items() if d == spec.radius)
    if not boundary:
        raise GraphError("empty boundary shell")
    g = FiniteGraph(
        vertices=list(range(len(coords_sorted))),
        edges=edges,
        couplings=[spec.coupling] * len(edges),
        boundary=boundary,
        origin=vid[_ORIGIN_COORD[spec.family]],
        coords={i: c for c, i in vid.items()},
        family=spec.family,
        radius=spec.radius,
        depths={vid[c]: d for c, d in depth.items()},
    )
    if spec.family == "square":
        g.faces = _square_bounded_faces(g)
    return g


def build_rectangle(n: int, k: int, coupling: float = 1.0) -> FiniteGraph:
    """The square-lattice rectangle [0,n] x [0,k] with its ring as boundary."""
    if n < 1 or k < 1:
        raise GraphError("rectangle sides must be >= 1")
    coords_sorted = sorted((x, y) for x in range(n + 1) for y in range(k + 1))
    vid = {c: i for i, c in enumerate(coords_sorted)}
    edge_pairs = set()
    for c in coords_sorted:
        for c2 in _square_neighbors(c):
            if c2 in vid:
                edge_pairs.add((min(c, c2), max(c, c2)))
    edge_pairs = sorted(edge_pairs)
    edges = [(vid[a], vid[b], i) for i, (a, b) in enumerate(edge_pairs)]
    boundary = frozenset(
        vid[(x, y)]
        for x, y in coords_sorted
        if x in (0, n) or y in (0, k)
    )
    g = FiniteGraph(
        vertices=list(range(len(coords_sorted))),
        edges=edges,
        couplings=[coupling] * len(edges),
        boundary=boundary,
        origin=vid[(0, 0)],
        coords={i: c for c, i in vid.items()},
        family="square",
    )
    g.faces = _square_bounded_faces(g)
    return g


def _square_bounded_faces(g: FiniteGraph) -> list[list[int]]:
    """Unit-square faces (as edge-id quadruples) of a square-lattice subgraph."""
    coord_vid = {c: v for v, c in g.coords.items()}
    eid = {}
    for u, v, i in g.edges:
        eid[(u, v)] = i
        eid[(v, u)] = i
    faces = []
    for (x, y), v in sorted(coord_vid.items()):
        corners = [(x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1)]
        if not all(c in coord_vid for c in corners):
            continue
        ids = [coord_vid[c] for c in corners]
        try:
            faces.append(
                [eid[(ids[i], ids[(i + 1) % 4])] for i in range(4)]
            )
        except KeyError:
            continue  # some side missing from the induced subgraph
    return faces


# ---------------------------------------------------------------------------
# graph distance


def graph_distance(g: FiniteGraph, x: int, y: int) -> int:
    """Distance between x and y.

    For lattice boxes this is the infinite lattice's distance (computed on
    the radius n+1 ball and truncated to the box), for user graphs plain
    BFS on the graph itself.
    """
    if x not in g.adjacency() or y not in g.adjacency():
        raise GraphError("vertex not in graph")
    if x == y:
        return 0
    if g.family is not None and g.radius is not None and g.coords is not None:
        depth = _ball_coords(g.family, g.radius + 1)
        return _coord_bfs(g.family, g.coords[x], g.coords[y], depth)
    return _graph_bfs(g, x, y)


def _coord_bfs(family, cx, cy, allowed) -> int:
    nbrs = _NEIGHBORS[family]
    dist = {cx: 0}
    frontier = [cx]
    while frontier:
        nxt = []
        for c in frontier:
            for c2 in nbrs(c):
                if c2 in allowed and c2 not in dist:
                    dist[c2] = dist[c] + 1
                    if c2 == cy:
                        return dist[c2]
                    nxt.append(c2)
        frontier = nxt
    raise GraphError("vertices not connected in the ambient ball")


def _graph_bfs(g: FiniteGraph, x: int, y: int) -> int:
    dist = {x: 0}
    frontier = [x]
    while frontier:
        nxt = []
        for u in frontier:
            for v, _ in g.adjacency()[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    if v == y:
                        return dist[v]
                    nxt.append(v)
        frontier = nxt
    raise GraphError("vertices not connected")


# ---------------------------------------------------------------------------
# planar duality


def _faces_via_embedding(edges, vertices):
    """All faces of a planar multigraph, as edge-id walks.

    Every edge is subdivided twice so that parallel edges and loops become
    a simple graph, which networkx's planarity checker accepts.  Any planar
    embedding yields a dual satisfying the random-cluster duality identity,
    so the particular embedding returned by networkx is fine.
    """
    G = nx.Graph()
    G.add_nodes_from(vertices)
    for u, v, eid in edges:
        m1 = ("m", eid, 0)
        m2 = ("m", eid, 1)
        G.add_edge(u, m1, eid=eid)
        G.add_edge(m1, m2, eid=eid)
        G.add_edge(m2, v, eid=eid)
    ok, emb = nx.check_planarity(G)
    if not ok:
        raise GraphError("graph is not planar")
    faces = []
    seen = set()
    for a, b in emb.edges():
        if (a, b) in seen:
            continue
        walk = emb.traverse_face(a, b, mark_half_edges=seen)
        ids = []
        for node in walk:
            if isinstance(node, tuple) and node[0] == "m":
                e = node[1]
                if not ids or ids[-1] != e:
                    ids.append(e)
        if len(ids) > 1 and ids[0] == ids[-1]:
            ids.pop()
        faces.append(ids)
    return faces


def _dual_from_faces(primal: FiniteGraph, faces, couplings=None) -> PlanarDualMap:
    side = {}
    for fi, ids in enumerate(faces):
        for e in ids:
            side.setdefault(e, []).append(fi)
    n_edges = primal.n_edges
    dual_edges = []
    for e in range(n_edges):
        inc = side.get(e, [])
        if len(inc) != 2:
            raise GraphError(
                f"edge {e} borders {len(inc)} faces; need exactly 2 (bridges unsupported)"
            )
        a, b = inc
        if a == b:
            raise GraphError(f"edge {e} is a bridge; its dual would be a self-loop")
        dual_edges.append((a, b, e))
    dual = FiniteGraph(
        vertices=list(range(len(faces))),
        edges=dual_edges,
        couplings=list(couplings) if couplings is not None else list(primal.couplings),
        boundary=frozenset(),
        origin=0,
    )
    return PlanarDualMap(primal=primal, dual=dual, edge_bijection=list(range(n_edges)))


def _contract_boundary(g: FiniteGraph):
    """Contract the boundary set to a single vertex (the wired multigraph).

    Returns (edges, n_vertices); the contracted vertex gets the last id.
    Parallel edges are kept, boundary-boundary edges become loops and are
    rejected here only if they self-loop at a non-contracted vertex.
    """
    if not g.boundary:
        raise GraphError("wired contraction needs a nonempty boundary")
    inner = [v for v in g.vertices if v not in g.boundary]
    remap = {v: i for i, v in enumerate(inner)}
    b = len(inner)
    edges = []
    for u, v, eid in g.edges:
        uu = remap.get(u, b)
        vv = remap.get(v, b)
        edges.append((uu, vv, eid))
    return edges, b + 1


def dual_graph(g: FiniteGraph, wired: bool = False, infer_faces: bool = False) -> PlanarDualMap:
    """Planar dual with the edge bijection e -> e*.

    With ``wired=False`` the dual has one vertex per bounded face plus one
    outer vertex (face data must be available, or ``infer_faces=True`` to
    compute an embedding).  With ``wired=True`` the boundary is contracted
    first and the dual is taken over all faces of the contracted
    multigraph; this is the dual graph for which the wired measure maps to
    the free dual measure.
    """
    if wired:
        edges, nv = _contract_boundary(g)
        faces = _faces_via_embedding(edges, range(nv))
        return _dual_from_faces(g, faces)
    if g.faces is None:
        if not infer_faces:
            raise GraphError("planar dual requires face data for this graph")
        faces = _faces_via_embedding(g.edges, g.vertices)
        return _dual_from_faces(g, faces)
    bounded = [list(f) for f in g.faces]
    count = {}
    for f in bounded:
        for e in f:
            count[e] = count.get(e, 0) + 1
    outer = [e for e in range(g.n_edges) if count.get(e, 0) < 2]
    faces = bounded + [outer]
    return _dual_from_faces(g, faces)
