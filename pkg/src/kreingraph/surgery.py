"""Graph surgery: gluing, cutting, degree-2 vertices, lengthening, attaching.

Every operation returns a new validated graph together with an element
mapping, so spectra computed before and after can be aligned.  Potentials
are tracked exactly: splitting restricts step functions piece by piece,
lengthening by alpha stretches piece lengths by alpha and scales values
by alpha**-2, and concatenation respects edge orientation.

``verify_interlacing`` checks the eigenvalue interlacing chains that each
surgery kind satisfies for the Krein-von Neumann operators (and, for
boundary restriction, the subset variants).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SurgeryError
from .graph import Edge, MetricGraph, PiecewisePotential, validate
from .spectral import Spectrum


@dataclass(frozen=True)
class SurgeryResult:
    graph: MetricGraph
    vertex_map: dict[str, str] = field(default_factory=dict)
    edge_map: dict[str, tuple[str, ...]] = field(default_factory=dict)
    new_vertices: tuple[str, ...] = ()


def _fresh(name: str, taken: set[str]) -> str:
    candidate = name
    while candidate in taken:
        candidate += "'"
    taken.add(candidate)
    return candidate


def glue_vertices(graph: MetricGraph, vertices) -> SurgeryResult:
    """Identify the given vertices (at least two) into a single vertex.

    The merged vertex keeps the id of the first member in graph order;
    edges and potentials are unchanged, V drops by len(vertices) - 1.
    """
    vset = list(dict.fromkeys(vertices))
    unknown = [v for v in vset if v not in graph.vertices]
    if unknown:
        raise SurgeryError("UNKNOWN_VERTEX", f"vertices {unknown} not in graph")
    if len(vset) < 2:
        raise SurgeryError("BAD_GLUE_SET", "need at least two vertices to glue")
    ordered = [v for v in graph.vertices if v in vset]
    target = ordered[0]
    vmap = {v: (target if v in vset else v) for v in graph.vertices}
    new_vertices = [v for v in graph.vertices if vmap[v] == v]
    new_edges = [Edge(e.id, vmap[e.u], vmap[e.v], e.length, e.potential) for e in graph.edges]
    g = MetricGraph.make(new_vertices, new_edges)
    return SurgeryResult(g, vmap, {e.id: (e.id,) for e in graph.edges})


def cut_vertex(graph: MetricGraph, v: str, partition) -> SurgeryResult:
    """Split vertex v into one vertex per partition group of its edge-ends.

    ``partition`` is a list of >= 2 nonempty groups of (edge_id, end)
    pairs covering the ends at v exactly once (end 0 = tail, 1 = head).
    Raises DISCONNECTS if the result is no longer connected.
    """
    if v not in graph.vertices:
        raise SurgeryError("UNKNOWN_VERTEX", f"vertex {v!r} not in graph")
    ends_at_v = [(e.id, end) for e in graph.edges for end in (0, 1)
                 if (e.u if end == 0 else e.v) == v]
    flat = [tuple(p) for group in partition for p in group]
    if len(partition) < 2 or any(not g for g in partition):
        raise SurgeryError("BAD_PARTITION", "need >= 2 nonempty groups")
    if sorted(flat) != sorted(ends_at_v):
        raise SurgeryError("BAD_PARTITION",
                           f"partition must cover the ends at {v!r} exactly once")
    taken = set(graph.vertices)
    names = [v] + [_fresh(f"{v}~{i}", taken) for i in range(1, len(partition))]
    end_owner = {tuple(p): names[i] for i, group in enumerate(partition) for p in group}

    new_vertices = list(graph.vertices) + names[1:]
    new_edges = []
    for e in graph.edges:
        u = end_owner.get((e.id, 0), e.u) if e.u == v else e.u
        w = end_owner.get((e.id, 1), e.v) if e.v == v else e.v
        new_edges.append(Edge(e.id, u, w, e.length, e.potential))
    g = MetricGraph(tuple(new_vertices), tuple(new_edges))
    try:
        validate(g)
    except Exception as exc:
        raise SurgeryError("DISCONNECTS", f"cutting {v!r} disconnects the graph") from exc
    return SurgeryResult(g, {v: names[0]}, {e.id: (e.id,) for e in graph.edges},
                         tuple(names))


def insert_degree2(graph: MetricGraph, edge_id: str, position: float) -> SurgeryResult:
    """Split an edge at 0 < position < length by a new degree-2 vertex.

    The potential is restricted to the two sub-edges exactly (no piece is
    re-sampled); total length and the integral of q are conserved.
    """
    try:
        e = next(e for e in graph.edges if e.id == edge_id)
    except StopIteration:
        raise SurgeryError("UNKNOWN_EDGE", f"edge {edge_id!r} not in graph") from None
    if not (0.0 < position < e.length):
        raise SurgeryError("BAD_POSITION",
                           f"position {position} outside (0, {e.length})")
    taken_v = set(graph.vertices)
    w = _fresh(f"{edge_id}@", taken_v)
    taken_e = {x.id for x in graph.edges}
    taken_e.discard(edge_id)
    id1 = _fresh(f"{edge_id}:1", taken_e)
    id2 = _fresh(f"{edge_id}:2", taken_e)
    left, right = e.potential.split(position)
    e1 = Edge(id1, e.u, w, position, left)
    e2 = Edge(id2, w, e.v, e.length - position, right)
    new_edges = [x if x.id != edge_id else e1 for x in graph.edges]
    new_edges.insert(new_edges.index(e1) + 1, e2)
    g = MetricGraph.make(list(graph.vertices) + [w], new_edges)
    return SurgeryResult(g, {v: v for v in graph.vertices},
                         {edge_id: (id1, id2)}, (w,))


def remove_degree2(graph: MetricGraph, v: str) -> SurgeryResult:
    """Concatenate the two edges meeting at a degree-2 vertex.

    Not defined when v carries a loop: a lone loop has nothing to merge
    (LONE_LOOP_VERTEX).
    """
    if v not in graph.vertices:
        raise SurgeryError("UNKNOWN_VERTEX", f"vertex {v!r} not in graph")
    incident = [(k, end) for k, e in enumerate(graph.edges) for end in (0, 1)
                if (e.u if end == 0 else e.v) == v]
    if len(incident) != 2:
        raise SurgeryError("NOT_DEGREE_2", f"vertex {v!r} has degree {len(incident)}")
    (k1, end1), (k2, end2) = incident
    if k1 == k2:
        raise SurgeryError("LONE_LOOP_VERTEX",
                           f"vertex {v!r} carries a loop; removing it is undefined")
    e1, e2 = graph.edges[k1], graph.edges[k2]
    # orient e1 into v and e2 out of v
    e1o = e1 if end1 == 1 else e1.reversed()
    e2o = e2 if end2 == 0 else e2.reversed()
    taken_e = {x.id for x in graph.edges} - {e1.id, e2.id}
    new_id = _fresh(f"{e1.id}+{e2.id}", taken_e)
    merged = Edge(new_id, e1o.u, e2o.v, e1.length + e2.length,
                  PiecewisePotential(e1o.potential.pieces + e2o.potential.pieces))
    new_edges = [x for x in graph.edges if x.id not in (e1.id, e2.id)]
    new_edges.insert(min(k1, k2), merged)
    g = MetricGraph.make([x for x in graph.vertices if x != v], new_edges)
    return SurgeryResult(g, {x: x for x in graph.vertices if x != v},
                         {e1.id: (new_id,), e2.id: (new_id,)})


def lengthen_edge(graph: MetricGraph, edge_id: str, alpha: float) -> SurgeryResult:
    """Stretch one edge by alpha > 1; the potential transforms as
    q(x) -> alpha**-2 q(x/alpha) (piece lengths *alpha, values *alpha**-2)."""
    if not alpha > 1.0:
        raise SurgeryError("BAD_ALPHA", f"alpha must exceed 1, got {alpha}")
    if all(e.id != edge_id for e in graph.edges):
        raise SurgeryError("UNKNOWN_EDGE", f"edge {edge_id!r} not in graph")
    new_edges = [
        e if e.id != edge_id else Edge(e.id, e.u, e.v, e.length * alpha, e.potential.scaled(alpha))
        for e in graph.edges
    ]
    g = MetricGraph.make(graph.vertices, new_edges)
    return SurgeryResult(g, {x: x for x in graph.vertices},
                         {e.id: (e.id,) for e in graph.edges})


def scale_graph(graph: MetricGraph, alpha: float) -> MetricGraph:
    """Stretch every edge by alpha > 0 (lengths *alpha, potentials *alpha**-2);
    every eigenvalue rescales by alpha**-2."""
    if not alpha > 0.0:
        raise SurgeryError("BAD_ALPHA", f"alpha must be positive, got {alpha}")
    return MetricGraph.make(
        graph.vertices,
        [Edge(e.id, e.u, e.v, e.length * alpha, e.potential.scaled(alpha)) for e in graph.edges],
    )


def attach_graph(graph: MetricGraph, other: MetricGraph, pairing: dict[str, str]) -> SurgeryResult:
    """Attach ``other`` to ``graph`` by gluing m of its vertices onto m
    distinct vertices of ``graph`` (pairing: other vertex -> graph vertex).

    The returned maps describe where the elements of ``other`` ended up.
    """
    if not pairing:
        raise SurgeryError("BAD_PAIRING", "need at least one vertex pair")
    if len(set(pairing.values())) != len(pairing):
        raise SurgeryError("BAD_PAIRING", "target vertices must be distinct")
    bad = [v for v in pairing if v not in other.vertices]
    bad += [v for v in pairing.values() if v not in graph.vertices]
    if bad:
        raise SurgeryError("BAD_PAIRING", f"unknown vertices {bad}")
    taken_v = set(graph.vertices)
    vmap = {}
    for v in other.vertices:
        vmap[v] = pairing[v] if v in pairing else _fresh(v, taken_v)
    taken_e = {e.id for e in graph.edges}
    emap = {e.id: _fresh(e.id, taken_e) for e in other.edges}
    new_vertices = list(graph.vertices) + [vmap[v] for v in other.vertices if v not in pairing]
    new_edges = list(graph.edges) + [
        Edge(emap[e.id], vmap[e.u], vmap[e.v], e.length, e.potential) for e in other.edges
    ]
    g = MetricGraph.make(new_vertices, new_edges)
    return SurgeryResult(g, vmap, {eid: (nid,) for eid, nid in emap.items()},
                         tuple(vmap[v] for v in other.vertices if v not in pairing))


def insert_edge(graph: MetricGraph, u: str, v: str, length: float,
                potential: PiecewisePotential | None = None) -> SurgeryResult:
    """Insert a new edge between two (not necessarily distinct) vertices."""
    for x in (u, v):
        if x not in graph.vertices:
            raise SurgeryError("UNKNOWN_VERTEX", f"vertex {x!r} not in graph")
    taken_e = {e.id for e in graph.edges}
    eid = _fresh(f"{u}-{v}", taken_e)
    pot = potential if potential is not None else PiecewisePotential.zero(length)
    g = MetricGraph.make(graph.vertices, list(graph.edges) + [Edge(eid, u, v, length, pot)])
    return SurgeryResult(g, {x: x for x in graph.vertices},
                         {e.id: (e.id,) for e in graph.edges}, ())


def glue_points(graph: MetricGraph, points) -> SurgeryResult:
    """Glue a finite set of points (vertices or (edge_id, position) pairs).

    Interior points first become degree-2 vertices (in input order, with
    same-edge positions handled right-to-left so offsets stay valid), then
    all the points are glued into one vertex.
    """
    if len(points) < 2:
        raise SurgeryError("BAD_GLUE_SET", "need at least two points")
    vertex_names = []
    interior: dict[str, list[float]] = {}
    for p in points:
        if isinstance(p, str):
            if p not in graph.vertices:
                raise SurgeryError("UNKNOWN_VERTEX", f"vertex {p!r} not in graph")
            vertex_names.append(p)
        else:
            eid, pos = p
            interior.setdefault(eid, []).append(float(pos))
    g = graph
    inserted = []
    for eid, positions in interior.items():
        current = eid
        for pos in sorted(positions, reverse=True):
            res = insert_degree2(g, current, pos)
            g = res.graph
            inserted.append(res.new_vertices[0])
            current = res.edge_map[current][0]  # left sub-edge holds smaller offsets
    names = list(dict.fromkeys(vertex_names + inserted))
    res = glue_vertices(g, names)
    return SurgeryResult(res.graph, res.vertex_map, res.edge_map, tuple(inserted))


# ---------------------------------------------------------------------------
# Interlacing verification


def _chain_value(seq: list[float], j: int) -> float | None:
    """1-based access; None when the index runs past the certified list."""
    return seq[j - 1] if 1 <= j <= len(seq) else None


@dataclass
class InterlacingReport:
    theorem: str
    records: list[dict]
    max_violation: float
    n_checked: int
    n_skipped: int

    def passed(self, tol: float = 1e-8) -> bool:
        return self.max_violation <= tol

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "max_violation": self.max_violation,
            "n_checked": self.n_checked,
            "n_skipped": self.n_skipped,
            "records": self.records,
        }


_CHAINS = {
    # gluing k+1 vertices: positive eigenvalues relax, full list tightens
    "gluing": {
        "positive": [("~+", 0, "+", 0), ("+", 0, "~+", "k"), ("~+", "k", "+", "k")],
        "full": [("", 0, "~", 0), ("~", 0, "", "k"), ("", "k", "~", "k")],
    },
    # inserting k0 degree-2 vertices: transposed roles
    "degree2": {
        "positive": [("+", 0, "~+", 0), ("~+", 0, "+", "k"), ("+", "k", "~+", "k")],
        "full": [("~", 0, "", 0), ("", 0, "~", "k"), ("~", "k", "", "k")],
    },
    # gluing k+1 arbitrary points, k0 of them interior
    "glue_points": {
        "positive": [("~+", 0, "+", "k0"), ("+", "k0", "~+", "k+k0"),
                     ("~+", "k+k0", "+", "k+2*k0")],
        "full": [("~", 0, "", "k"), ("", "k", "~", "k+k0"), ("~", "k+k0", "", "2*k+k0")],
    },
    "lengthen": {
        "positive": [("~+", 0, "+", 0)],
        "full": [("~", 0, "", 0)],
    },
    # attaching a graph with V0 vertices by m of them
    "attach": {
        "positive": [("~+", 0, "+", 0)],
        "full": [("~", "V0-m", "", 0)],
    },
    "insert_edge": {
        "positive": [("~+", 0, "+", 0)],
        "full": [("~", 0, "", 0)],
    },
    # boundary restriction B~ inside B, k = |B| - |B~|; before = B, after = B~
    "boundary": {
        "positive": [("~+", 0, "+", 0), ("+", 0, "~+", "k"), ("~+", "k", "+", "k")],
        "full": [("", 0, "~", 0), ("~", 0, "", "k"), ("", "k", "~", "k")],
    },
    # additive potential: before = Krein of the perturbed minimal operator,
    # after = additively perturbed Krein operator, d = dim ker(after)
    "perturbation": {
        "full": [("", 0, "~", 0)],
        "mixed": [("~", "d", "+", 0)],
    },
}


def _shift(expr, params: dict) -> int:
    if isinstance(expr, int):
        return expr
    total = 0
    for token in expr.replace("-", "+-").split("+"):
        if not token:
            continue
        sign = 1
        if token.startswith("-"):
            sign, token = -1, token[1:]
        total += sign * int(np.prod([int(f) if f.isdigit() else params[f]
                                     for f in token.split("*")]))
    return total


def verify_interlacing(before: Spectrum, after: Spectrum, theorem: str,
                       params: dict | None = None, j_max: int = 8) -> InterlacingReport:
    """Check every inequality instance of the given surgery chain.

    Each record lists the two sides and the violation max(0, lhs - rhs);
    comparisons whose right-hand index runs past a certified list are
    satisfied vacuously (that eigenvalue exceeds the certified range),
    comparisons whose left-hand entry is unknown are skipped.
    """
    params = dict(params or {})
    if theorem not in _CHAINS:
        raise SurgeryError("UNKNOWN_THEOREM", f"no interlacing chain named {theorem!r}")
    seqs = {
        "": before.flat(),
        "+": before.positive(),
        "~": after.flat(),
        "~+": after.positive(),
    }
    records = []
    max_violation = 0.0
    n_checked = n_skipped = 0
    for name, chain in _CHAINS[theorem].items():
        for lhs_seq, lhs_shift, rhs_seq, rhs_shift in chain:
            dl, dr = _shift(lhs_shift, params), _shift(rhs_shift, params)
            for j in range(1, j_max + 1):
                lhs = _chain_value(seqs[lhs_seq], j + dl)
                rhs = _chain_value(seqs[rhs_seq], j + dr)
                if lhs is None:
                    n_skipped += 1
                    continue
                if rhs is None:
                    # rhs beyond the certified range, hence above every lhs entry
                    n_checked += 1
                    continue
                violation = max(0.0, lhs - rhs)
                max_violation = max(max_violation, violation)
                n_checked += 1
                if violation > 0:
                    records.append({
                        "chain": name, "j": j,
                        "lhs": f"{lhs_seq or 'lam'}[{j + dl}]", "rhs": f"{rhs_seq or 'lam'}[{j + dr}]",
                        "lhs_value": lhs, "rhs_value": rhs, "violation": violation,
                    })
    return InterlacingReport(theorem, records, max_violation, n_checked, n_skipped)


def strict_gluing_positivity(after: Spectrum, v_before: int, k: int) -> float:
    """The (V - k + 1)-th eigenvalue of the glued graph, which must be
    strictly positive (the kernel shrinks from V to V - k)."""
    seq = after.flat()
    idx = v_before - k + 1
    if idx > len(seq):
        raise SurgeryError("INSUFFICIENT_RANGE", "glued spectrum too short")
    return seq[idx - 1]
