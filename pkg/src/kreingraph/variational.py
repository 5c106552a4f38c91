"""Rayleigh-Ritz upper bounds for the positive Krein eigenvalues.

The positive spectrum minimises the quotient

    int |-f'' + q f|^2  /  ( int |f'|^2 + int q |f|^2 )

over subspaces of twice-differentiable functions vanishing at every vertex
with vanishing derivative sums (the domain of the minimal operator).  A
per-edge sine basis sin(m pi x / length) handles the vanishing values
automatically; only the V derivative-sum constraints remain, eliminated
through an orthonormal null-space basis, which keeps the projected pencil
symmetric definite.  All integrals against the piecewise-constant q have
elementary closed forms, so the assembled matrices are exact to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, null_space

from .errors import SpectralError
from .graph import ConditionSpec, MetricGraph, integrate_potential, is_potential_free, total_length
from .spectral import ScanConfig, Spectrum, eigenvalues


def _sine_overlap(ell: float, x0: float, x1: float, M: int) -> np.ndarray:
    """G[m-1, n-1] = int_{x0}^{x1} sin(m pi x / ell) sin(n pi x / ell) dx."""
    m = np.arange(1, M + 1)
    mm, nn = np.meshgrid(m, m, indexing="ij")
    diff = (mm - nn) * np.pi / ell
    summ = (mm + nn) * np.pi / ell

    def _int_cos(w, a, b):
        # int_a^b cos(w x) dx with w possibly 0
        out = np.where(w == 0, b - a, np.divide(np.sin(w * b) - np.sin(w * a),
                                                np.where(w == 0, 1.0, w)))
        return out

    return 0.5 * (_int_cos(diff, x0, x1) - _int_cos(summ, x0, x1))


@dataclass(frozen=True)
class BucklingPencil:
    """Projected quadratic forms of the positive-eigenvalue quotient.

    A[i, j]  = int (-phi_i'' + q phi_i)(-phi_j'' + q phi_j)
    Bm[i, j] = int phi_i' phi_j' + q phi_i phi_j
    C[v, j]  = sum over edge-ends at v of the toward-vertex derivative of phi_j

    with phi the per-edge sine modes; basis index = edge_index * M + (m-1).
    """

    A: np.ndarray
    Bm: np.ndarray
    C: np.ndarray
    modes: int
    graph: MetricGraph


def assemble_buckling_pencil(graph: MetricGraph, modes: int) -> BucklingPencil:
    if modes < 2:
        raise SpectralError("BAD_MODES", "need at least 2 sine modes per edge")
    E = graph.num_edges
    N = E * modes
    A = np.zeros((N, N))
    Bm = np.zeros((N, N))
    C = np.zeros((graph.num_vertices, N))
    m = np.arange(1, modes + 1)
    for k, e in enumerate(graph.edges):
        sl = slice(k * modes, (k + 1) * modes)
        ell = e.length
        mu2 = (m * np.pi / ell) ** 2
        Sq = np.zeros((modes, modes))
        Sqq = np.zeros((modes, modes))
        x0 = 0.0
        for h, q in e.potential.pieces:
            if q != 0.0:
                G = _sine_overlap(ell, x0, x0 + h, modes)
                Sq += q * G
                Sqq += q * q * G
            x0 += h
        A[sl, sl] = np.diag(mu2**2 * ell / 2) + mu2[:, None] * Sq + Sq * mu2[None, :] + Sqq
        Bm[sl, sl] = np.diag(mu2 * ell / 2) + Sq
        iu, iv = graph.vertex_index(e.u), graph.vertex_index(e.v)
        C[iu, sl] += -m * np.pi / ell                     # toward-vertex at x = 0
        C[iv, sl] += (m * np.pi / ell) * (-1.0) ** m      # toward-vertex at x = length
    return BucklingPencil(A, Bm, C, modes, graph)


def rayleigh_ritz(graph: MetricGraph, modes: int, j_max: int) -> np.ndarray:
    """Nonincreasing-in-modes upper bounds u_1 <= ... <= u_{j_max} for the
    positive Krein eigenvalues."""
    pencil = assemble_buckling_pencil(graph, modes)
    Z = null_space(pencil.C)
    if Z.shape[1] < j_max:
        raise SpectralError("INSUFFICIENT_SUBSPACE",
                            f"constrained space has dimension {Z.shape[1]} < {j_max}")
    vals = eigh(Z.T @ pencil.A @ Z, Z.T @ pencil.Bm @ Z, eigvals_only=True)
    return np.sort(vals)[:j_max]


def eulerian_upper_bound(graph: MetricGraph) -> float | None:
    """Explicit sine-mode upper bound for the first positive Krein eigenvalue
    when the graph itself is an Eulerian cycle carrier (all degrees even).

    Minimises (pi^2/total_length) * sum n_e^2/length(e) over integers
    n_e >= 1 with even sum: start from all ones and, if the parity fails,
    bump the n_e of the longest edge (the cheapest increment).
    Returns None when some vertex has odd degree.
    """
    if not is_potential_free(graph):
        raise SpectralError("POTENTIAL_NOT_ZERO", "the explicit bound requires q = 0")
    if any(graph.degree(v) % 2 for v in graph.vertices):
        return None
    n = np.ones(graph.num_edges)
    if graph.num_edges % 2 == 1:
        n[int(np.argmax([e.length for e in graph.edges]))] = 2.0
    lengths = np.array([e.length for e in graph.edges])
    return float(np.pi**2 / total_length(graph) * np.sum(n**2 / lengths))


@dataclass
class IsoperimetricReport:
    total_length: float
    lower_bound: float          # 4 pi^2 / total_length^2
    lambda1_plus: float
    margin: float               # lambda1_plus - lower_bound
    potential_free: bool
    delta_loop_value: float | None = None   # q != 0: first eigenvalue of the
    delta_strength: float | None = None     # comparison delta-loop
    strict_margin: float | None = None

    def holds(self, tol: float = 1e-8) -> bool:
        if self.potential_free:
            return self.margin >= -tol
        return self.strict_margin is not None and self.strict_margin > 0.0

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def _first_positive(graph: MetricGraph, cond: ConditionSpec) -> float:
    ell = total_length(graph)
    n_needed = graph.num_vertices + graph.num_edges + 2
    lam_max = (np.pi * n_needed / ell) ** 2
    spec = eigenvalues(graph, cond, lam_max)
    pos = spec.positive()
    while not pos:
        lam_max *= 4
        spec = eigenvalues(graph, cond, lam_max)
        pos = spec.positive()
    return pos[0]


def isoperimetric_check(graph: MetricGraph, lambda1_plus: float | None = None) -> IsoperimetricReport:
    """Check the total-length lower bound for the first positive Krein eigenvalue.

    q = 0: lambda_1^+ >= 4 pi^2 / total_length^2, with equality exactly on
    the interval, the loop, the equilateral 2-cycle and the equilateral
    figure-8.  q != 0: lambda_1^+ strictly dominates the first eigenvalue
    of the loop of the same total length carrying one delta vertex of
    strength int q.
    """
    from .graph import loop as make_loop

    ell = total_length(graph)
    bound = 4 * np.pi**2 / ell**2
    if lambda1_plus is None:
        lambda1_plus = _first_positive(graph, ConditionSpec.krein())
    report = IsoperimetricReport(ell, bound, lambda1_plus, lambda1_plus - bound,
                                 is_potential_free(graph))
    if not report.potential_free:
        strength = integrate_potential(graph)
        comparison = make_loop(ell)
        delta_val = _first_positive(comparison, ConditionSpec.delta({"a": strength}))
        report.delta_strength = strength
        report.delta_loop_value = delta_val
        report.strict_margin = lambda1_plus - delta_val
    return report
