"""Vertex Weyl matrices, the Dirichlet-to-Neumann matrix and its Schur complements.

For the boundary maps (vertex values, minus toward-vertex derivative sums)
of the continuity-only operator, the Weyl function is the V x V matrix
M(lambda) with M(lambda) (f(v_i))_i = (-d_nu f(v_i))_i on lambda-harmonic
functions.  Its value at lambda = 0 is minus the Dirichlet-to-Neumann
matrix Lambda_q, which for q = 0 equals minus the weighted discrete
Laplacian with weights 1/length(e).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .edges import edge_dtn_block, transfer_matrix
from .errors import SpectralError
from .graph import MetricGraph


@dataclass(frozen=True)
class DiscreteLaplacian:
    """Weighted discrete Laplacian: off-diagonal -sum 1/length over connecting
    edges, diagonal sum of 1/length over incident non-loop edges."""

    entries: np.ndarray
    vertex_order: tuple[str, ...]


@dataclass(frozen=True)
class WeylMatrix:
    """M(lambda) in the vertex ordering of the graph; symmetric, M(0) = -Lambda_q."""

    lam: float
    entries: np.ndarray
    vertex_order: tuple[str, ...]


def discrete_laplacian(graph: MetricGraph) -> DiscreteLaplacian:
    """Combinatorial Laplacian with edge weights 1/length; loops contribute nothing."""
    V = graph.num_vertices
    L = np.zeros((V, V))
    for e in graph.edges:
        i, j = graph.vertex_index(e.u), graph.vertex_index(e.v)
        w = 1.0 / e.length
        if i == j:
            continue
        L[i, j] -= w
        L[j, i] -= w
        L[i, i] += w
        L[j, j] += w
    return DiscreteLaplacian(L, graph.vertices)


def weyl_matrix(graph: MetricGraph, lam: float) -> WeylMatrix:
    """Assemble M(lambda) = -(scattered edge DtN blocks).

    Each edge contributes its 2x2 block into the (u, v) positions; a loop
    adds all four block entries to its single diagonal position (forced by
    continuity of the extension at the one vertex).  Undefined at edge
    Dirichlet eigenvalues.
    """
    V = graph.num_vertices
    lam_mat = np.zeros((V, V))
    poles = []
    for e in graph.edges:
        try:
            blk = edge_dtn_block(e, lam)
        except SpectralError:
            poles.append(e.id)
            continue
        i, j = graph.vertex_index(e.u), graph.vertex_index(e.v)
        if i == j:
            lam_mat[i, i] += blk.sum()
        else:
            lam_mat[i, i] += blk[0, 0]
            lam_mat[j, j] += blk[1, 1]
            lam_mat[i, j] += blk[0, 1]
            lam_mat[j, i] += blk[1, 0]
    if poles:
        raise SpectralError("DIRICHLET_POLE",
                            f"lambda={lam} is a Dirichlet eigenvalue of edges {poles}")
    return WeylMatrix(float(lam), -lam_mat, graph.vertices)


def dtn_zero(graph: MetricGraph) -> np.ndarray:
    """Dirichlet-to-Neumann matrix Lambda_q = -M(0).

    Always defined: q >= 0 keeps lambda = 0 strictly below every edge
    Dirichlet eigenvalue.  Positive semidefinite; the kernel is the
    constants when q = 0 and trivial otherwise.
    """
    return -weyl_matrix(graph, 0.0).entries


def schur_boundary(dtn: np.ndarray, boundary_idx: np.ndarray, cond_limit: float = 1e12) -> np.ndarray:
    """Schur complement of the DtN matrix onto a boundary vertex subset.

    With the vertex set split into B and its complement I,
    Lambda_B = Lambda[B,B] - Lambda[B,I] Lambda[I,I]^{-1} Lambda[I,B].
    Raises SINGULAR_INTERIOR_BLOCK when the interior block is numerically
    singular (condition estimate above ``cond_limit``).
    """
    dtn = np.asarray(dtn, dtype=float)
    V = dtn.shape[0]
    bset = np.zeros(V, dtype=bool)
    bset[np.asarray(boundary_idx, dtype=int)] = True
    interior = np.where(~bset)[0]
    bnd = np.asarray(boundary_idx, dtype=int)
    if interior.size == 0:
        return dtn[np.ix_(bnd, bnd)]
    Lhat = dtn[np.ix_(interior, interior)]
    if np.linalg.cond(Lhat) > cond_limit:
        raise SpectralError("SINGULAR_INTERIOR_BLOCK",
                            "interior block of the DtN matrix is numerically singular")
    cross = dtn[np.ix_(bnd, interior)]
    out = dtn[np.ix_(bnd, bnd)] - cross @ np.linalg.solve(Lhat, cross.T)
    return 0.5 * (out + out.T)


def dirichlet_gap_bound(graph: MetricGraph) -> float:
    """A positive lower bound for min spec of the Dirichlet operator.

    q >= 0 gives min spec >= pi^2 / max_e length(e)^2.
    """
    lmax = max(e.length for e in graph.edges)
    return np.pi**2 / lmax**2


def min_edge_dirichlet_eigenvalue(graph: MetricGraph) -> float:
    """Smallest single-edge Dirichlet eigenvalue, located by bisection on s_end.

    This is min spec of the Dirichlet operator on the graph; Weyl matrices
    are analytic below it.
    """
    lo_global = np.inf
    for e in graph.edges:
        lo, hi = dirichlet_gap_bound_edge(e), None
        qmax = max(q for _, q in e.potential.pieces)
        # s_end(lam) > 0 for lam <= 0; first zero lies in (pi^2/l^2, qmax + (pi/l)^2 + ...]
        lam = np.pi**2 / e.length**2
        step = max(lam, 1.0)
        while transfer_matrix(e, lam).s_end > 0:
            lam += step
            if lam > qmax + 100 * (np.pi / e.length) ** 2 + 100:
                break
        a, b = max(lam - step, 1e-12), lam
        for _ in range(200):
            mid = 0.5 * (a + b)
            if transfer_matrix(e, mid).s_end > 0:
                a = mid
            else:
                b = mid
        lo_global = min(lo_global, 0.5 * (a + b))
    return float(lo_global)


def dirichlet_gap_bound_edge(e) -> float:
    return np.pi**2 / e.length**2
