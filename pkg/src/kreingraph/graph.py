"""Finite connected metric graphs with piecewise-constant edge potentials.

A graph is a multigraph: loops and parallel edges are allowed.  Edge ``e``
is parametrised by ``[0, length]`` with ``x = 0`` at the tail vertex ``u``
and ``x = length`` at the head vertex ``v``.  The potential on an edge is a
nonnegative step function, stored as an ordered list of
``(piece_length, value)`` pairs whose lengths sum to the edge length.

All types are immutable after construction; operations elsewhere in the
package treat them as value objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, ValidationError

REL_TOL = 1e-12


@dataclass(frozen=True)
class PiecewisePotential:
    """Step-function potential q >= 0 on a single edge.

    ``pieces`` is an ordered tuple of (piece_length, value); the lengths
    must sum to the edge length (checked by graph validation, relative
    tolerance 1e-12).
    """

    pieces: tuple[tuple[float, float], ...]

    @staticmethod
    def zero(length: float) -> "PiecewisePotential":
        return PiecewisePotential(((float(length), 0.0),))

    @staticmethod
    def constant(length: float, value: float) -> "PiecewisePotential":
        return PiecewisePotential(((float(length), float(value)),))

    @property
    def total_length(self) -> float:
        return sum(h for h, _ in self.pieces)

    def integral(self) -> float:
        return sum(h * q for h, q in self.pieces)

    def is_zero(self) -> bool:
        return all(q == 0.0 for _, q in self.pieces)

    def reversed(self) -> "PiecewisePotential":
        return PiecewisePotential(tuple(reversed(self.pieces)))

    def split(self, position: float) -> tuple["PiecewisePotential", "PiecewisePotential"]:
        """Split at 0 < position < total_length, restricting pieces exactly."""
        total = self.total_length
        tol = REL_TOL * max(1.0, total)
        if not (tol < position < total - tol):
            raise ValueError(f"split position {position} outside (0, {total})")
        left: list[tuple[float, float]] = []
        right: list[tuple[float, float]] = []
        x = 0.0
        for h, q in self.pieces:
            lo, hi = x, x + h
            x = hi
            if hi <= position - tol:
                left.append((h, q))
            elif lo >= position + tol:
                right.append((h, q))
            elif abs(hi - position) <= tol:   # cut on this piece's right boundary
                left.append((h, q))
            elif abs(lo - position) <= tol:   # cut on this piece's left boundary
                right.append((h, q))
            else:                             # cut interior to this piece
                left.append((position - lo, q))
                right.append((hi - position, q))
        return PiecewisePotential(tuple(left)), PiecewisePotential(tuple(right))

    def scaled(self, alpha: float) -> "PiecewisePotential":
        """Stretch x by alpha: piece lengths scale by alpha, values by alpha**-2."""
        return PiecewisePotential(tuple((h * alpha, q / alpha**2) for h, q in self.pieces))


@dataclass(frozen=True)
class Edge:
    """Edge of a metric graph; ``u == v`` makes it a loop."""

    id: str
    u: str
    v: str
    length: float
    potential: PiecewisePotential

    @staticmethod
    def make(id: str, u: str, v: str, length: float,
             potential: PiecewisePotential | Sequence[tuple[float, float]] | None = None) -> "Edge":
        if potential is None:
            potential = PiecewisePotential.zero(length)
        elif not isinstance(potential, PiecewisePotential):
            potential = PiecewisePotential(tuple((float(h), float(q)) for h, q in potential))
        return Edge(str(id), str(u), str(v), float(length), potential)

    @property
    def is_loop(self) -> bool:
        return self.u == self.v

    def reversed(self) -> "Edge":
        return Edge(self.id, self.v, self.u, self.length, self.potential.reversed())


@dataclass(frozen=True)
class MetricGraph:
    """Finite connected metric multigraph.

    ``vertices`` fixes the row/column ordering used by every matrix in
    the package (Weyl matrices, discrete Laplacians, coupling matrices).
    """

    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    _vindex: dict[str, int] = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "_vindex", {v: i for i, v in enumerate(self.vertices)})

    @staticmethod
    def make(vertices: Iterable[str], edges: Iterable[Edge], check: bool = True) -> "MetricGraph":
        g = MetricGraph(tuple(str(v) for v in vertices), tuple(edges))
        if check:
            validate(g)
        return g

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def vertex_index(self, v: str) -> int:
        return self._vindex[v]

    def degree(self, v: str) -> int:
        """Number of edge-ends at v; a loop counts twice."""
        d = 0
        for e in self.edges:
            d += (e.u == v) + (e.v == v)
        return d

    def vertex_ends(self) -> list[list[tuple[int, int]]]:
        """Per vertex (in order), the incident (edge_index, end) pairs.

        ``end`` is 0 for the x=0 endpoint (tail u) and 1 for x=length
        (head v).  A loop contributes both of its ends.
        """
        ends: list[list[tuple[int, int]]] = [[] for _ in self.vertices]
        for k, e in enumerate(self.edges):
            ends[self._vindex[e.u]].append((k, 0))
            ends[self._vindex[e.v]].append((k, 1))
        return ends


# ---------------------------------------------------------------------------
# Vertex conditions


@dataclass(frozen=True)
class ConditionSpec:
    """Which vertex conditions define the self-adjoint operator.

    kinds:
      dirichlet     -- f(v) = 0 at every vertex
      standard      -- continuity + Kirchhoff (sum of toward-vertex
                       derivatives vanishes) at every vertex
      delta         -- continuity + sum of toward-vertex derivatives plus
                       strength * f(v) = 0; ``strengths`` maps vertex ids
                       to nonnegative reals (missing vertices get 0)
      krein         -- Krein-von Neumann extension of the minimal operator
                       with Dirichlet-Kirchhoff conditions: continuity and
                       the nonlocal coupling (toward-vertex derivative
                       sums) = Lambda_q (vertex values)
      krein_subset  -- Krein conditions on a nonempty vertex subset B,
                       standard conditions elsewhere; the coupling matrix
                       is the Schur complement Lambda_{q,B}
      custom        -- continuity + (derivative sums) = coupling (values)
                       for an explicitly supplied symmetric V x V matrix
    """

    kind: str
    strengths: tuple[tuple[str, float], ...] = ()
    boundary: tuple[str, ...] = ()
    coupling: tuple[tuple[float, ...], ...] = ()

    KINDS = ("dirichlet", "standard", "delta", "krein", "krein_subset", "custom")

    @staticmethod
    def dirichlet() -> "ConditionSpec":
        return ConditionSpec("dirichlet")

    @staticmethod
    def standard() -> "ConditionSpec":
        return ConditionSpec("standard")

    @staticmethod
    def delta(strengths: dict[str, float]) -> "ConditionSpec":
        for v, s in strengths.items():
            if s < 0:
                raise ValidationError([("NEGATIVE_DELTA_STRENGTH",
                                        f"delta strength at {v!r} is {s} < 0")])
        return ConditionSpec("delta", strengths=tuple(sorted(strengths.items())))

    @staticmethod
    def krein() -> "ConditionSpec":
        return ConditionSpec("krein")

    @staticmethod
    def krein_subset(boundary: Iterable[str]) -> "ConditionSpec":
        b = tuple(boundary)
        if not b:
            raise ValidationError([("EMPTY_BOUNDARY", "krein_subset needs a nonempty vertex set")])
        return ConditionSpec("krein_subset", boundary=b)

    @staticmethod
    def custom(coupling: np.ndarray) -> "ConditionSpec":
        c = np.asarray(coupling, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValidationError([("BAD_COUPLING", "coupling matrix must be square")])
        scale = max(1.0, float(np.abs(c).max()))
        if np.abs(c - c.T).max() > 1e-12 * scale:
            raise ValidationError([("ASYMMETRIC_COUPLING",
                                    "coupling matrix must be symmetric to 1e-12")])
        return ConditionSpec("custom", coupling=tuple(tuple(row) for row in c))

    def strength_of(self, v: str) -> float:
        return dict(self.strengths).get(v, 0.0)

    def coupling_matrix(self) -> np.ndarray:
        return np.array(self.coupling, dtype=float)

    def check_against(self, graph: MetricGraph) -> None:
        """Graph-dependent validation (subset membership, matrix size)."""
        if self.kind not in self.KINDS:
            raise ValidationError([("UNKNOWN_CONDITION_KIND", f"kind {self.kind!r}")])
        if self.kind == "krein_subset":
            missing = [v for v in self.boundary if v not in graph.vertices]
            if missing:
                raise ValidationError([("UNKNOWN_VERTEX",
                                        f"boundary vertices {missing} not in graph")])
        if self.kind == "delta":
            missing = [v for v, _ in self.strengths if v not in graph.vertices]
            if missing:
                raise ValidationError([("UNKNOWN_VERTEX",
                                        f"delta vertices {missing} not in graph")])
        if self.kind == "custom" and len(self.coupling) != graph.num_vertices:
            raise ValidationError([("BAD_COUPLING",
                                    f"coupling is {len(self.coupling)}x{len(self.coupling)}, "
                                    f"graph has {graph.num_vertices} vertices")])


# ---------------------------------------------------------------------------
# Validation


def validate(graph: MetricGraph) -> None:
    """Check all graph invariants; raise ValidationError listing every violation."""
    errors: list[tuple[str, str]] = []
    seen = set()
    for v in graph.vertices:
        if v in seen:
            errors.append(("DUPLICATE_VERTEX", f"vertex id {v!r} repeated"))
        seen.add(v)
    if not graph.edges:
        errors.append(("NO_EDGES", "graph has no edges"))
    eids = set()
    for e in graph.edges:
        if e.id in eids:
            errors.append(("DUPLICATE_EDGE_ID", f"edge id {e.id!r} repeated"))
        eids.add(e.id)
        if not (e.length > 0.0) or not np.isfinite(e.length):
            errors.append(("NONPOSITIVE_LENGTH", f"edge {e.id!r} has length {e.length}"))
            continue
        for v in (e.u, e.v):
            if v not in graph._vindex:
                errors.append(("UNKNOWN_VERTEX", f"edge {e.id!r} endpoint {v!r} not a vertex"))
        for h, q in e.potential.pieces:
            if not (h > 0.0):
                errors.append(("NONPOSITIVE_PIECE", f"edge {e.id!r} has a piece of length {h}"))
            if q < 0.0:
                errors.append(("NEGATIVE_POTENTIAL", f"edge {e.id!r} has potential value {q} < 0"))
        if abs(e.potential.total_length - e.length) > REL_TOL * max(1.0, e.length):
            errors.append(("PIECES_MISMATCH",
                           f"edge {e.id!r}: pieces sum to {e.potential.total_length}, "
                           f"length is {e.length}"))
    if not errors and not _connected(graph):
        errors.append(("NOT_CONNECTED", "graph is not connected"))
    if errors:
        raise ValidationError(errors)


def _connected(graph: MetricGraph) -> bool:
    """Union-find over edge endpoints."""
    parent = list(range(graph.num_vertices))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for e in graph.edges:
        a, b = find(graph.vertex_index(e.u)), find(graph.vertex_index(e.v))
        if a != b:
            parent[a] = b
    roots = {find(i) for i in range(graph.num_vertices)}
    return len(roots) <= 1


# ---------------------------------------------------------------------------
# Simple functionals


def total_length(graph: MetricGraph) -> float:
    """Total metric length, the sum of all edge lengths."""
    return sum(e.length for e in graph.edges)


def integrate_potential(graph: MetricGraph) -> float:
    """Integral of q over the whole graph (sum of piece_length * value)."""
    return sum(e.potential.integral() for e in graph.edges)


def is_potential_free(graph: MetricGraph) -> bool:
    return all(e.potential.is_zero() for e in graph.edges)


# ---------------------------------------------------------------------------
# On-disk format


def parse_graph(text: str) -> MetricGraph:
    """Parse the JSON graph document and validate the result.

    Document shape::

        {"vertices": ["a", "b"],
         "edges": [{"id": "e1", "u": "a", "v": "b", "length": 1.0,
                    "potential": [{"len": 0.5, "q": 2.0}, ...]}]}

    A missing or empty "potential" means q = 0 on that edge.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", context=f"line {exc.lineno}") from exc
    if not isinstance(doc, dict):
        raise ParseError("document must be a JSON object")
    for key in ("vertices", "edges"):
        if key not in doc:
            raise ParseError(f"missing field {key!r}")
    if not isinstance(doc["vertices"], list) or not all(isinstance(v, str) for v in doc["vertices"]):
        raise ParseError("'vertices' must be a list of strings")
    edges = []
    for i, rec in enumerate(doc["edges"]):
        ctx = f"edges[{i}]"
        if not isinstance(rec, dict):
            raise ParseError("edge record must be an object", context=ctx)
        for key in ("id", "u", "v", "length"):
            if key not in rec:
                raise ParseError(f"missing field {key!r}", context=ctx)
        if not isinstance(rec["length"], (int, float)):
            raise ParseError("'length' must be a number", context=ctx)
        pot = rec.get("potential") or []
        if not isinstance(pot, list):
            raise ParseError("'potential' must be a list", context=ctx)
        pieces = []
        for j, p in enumerate(pot):
            if not isinstance(p, dict) or "len" not in p or "q" not in p:
                raise ParseError("potential piece needs 'len' and 'q'", context=f"{ctx}.potential[{j}]")
            pieces.append((float(p["len"]), float(p["q"])))
        potential = (PiecewisePotential(tuple(pieces)) if pieces
                     else PiecewisePotential.zero(float(rec["length"])))
        edges.append(Edge(str(rec["id"]), str(rec["u"]), str(rec["v"]),
                          float(rec["length"]), potential))
    graph = MetricGraph(tuple(doc["vertices"]), tuple(edges))
    validate(graph)
    return graph


def serialize_graph(graph: MetricGraph) -> str:
    """Inverse of parse_graph (field-for-field on valid graphs)."""
    doc = {
        "vertices": list(graph.vertices),
        "edges": [
            {
                "id": e.id,
                "u": e.u,
                "v": e.v,
                "length": e.length,
                "potential": [{"len": h, "q": q} for h, q in e.potential.pieces],
            }
            for e in graph.edges
        ],
    }
    return json.dumps(doc, indent=2)


# ---------------------------------------------------------------------------
# Convenience constructors used all over the test-suite and the CLI


def interval(length: float = 1.0, q: float | Sequence[tuple[float, float]] = 0.0) -> MetricGraph:
    """Single edge between two vertices 'a' -> 'b'."""
    if isinstance(q, (int, float)):
        pot = PiecewisePotential.constant(length, q)
    else:
        pot = PiecewisePotential(tuple(q))
    return MetricGraph.make(["a", "b"], [Edge.make("e", "a", "b", length, pot)])


def loop(length: float = 1.0, q: float = 0.0) -> MetricGraph:
    return MetricGraph.make(["a"], [Edge.make("e", "a", "a", length,
                                              PiecewisePotential.constant(length, q))])


def path_graph(lengths: Sequence[float]) -> MetricGraph:
    vs = [f"v{i}" for i in range(len(lengths) + 1)]
    es = [Edge.make(f"e{i}", vs[i], vs[i + 1], float(l)) for i, l in enumerate(lengths)]
    return MetricGraph.make(vs, es)


def star_graph(lengths: Sequence[float]) -> MetricGraph:
    vs = ["c"] + [f"l{i}" for i in range(len(lengths))]
    es = [Edge.make(f"e{i}", "c", f"l{i}", float(l)) for i, l in enumerate(lengths)]
    return MetricGraph.make(vs, es)


def cycle_graph(lengths: Sequence[float]) -> MetricGraph:
    """Cycle on len(lengths) vertices; two vertices give a 2-cycle (parallel edges)."""
    n = len(lengths)
    vs = [f"v{i}" for i in range(n)]
    es = [Edge.make(f"e{i}", vs[i], vs[(i + 1) % n], float(l)) for i, l in enumerate(lengths)]
    return MetricGraph.make(vs, es)


def flower_graph(lengths: Sequence[float]) -> MetricGraph:
    """Single vertex with one loop per length; two loops give a figure-8."""
    es = [Edge.make(f"e{i}", "c", "c", float(l)) for i, l in enumerate(lengths)]
    return MetricGraph.make(["c"], es)
