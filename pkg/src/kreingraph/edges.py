"""Closed-form fundamental solutions of -u'' + q u = lambda u on one edge.

With piecewise-constant q the solution pair (c, s) normalised by
c(0) = 1, c'(0) = 0 and s(0) = 0, s'(0) = 1 propagates through each
constant piece by an explicit 2x2 block

    [[C(z, h), S(z, h)], [-z S(z, h), C(z, h)]],     z = lambda - q,

where C(z, h) = cos(sqrt(z) h) and S(z, h) = sin(sqrt(z) h)/sqrt(z) for
z > 0, with the hyperbolic analogues for z < 0.  Both are entire in z;
near z h^2 = 0 they are evaluated by their power series, which keeps the
blocks continuous across the trig/hyperbolic branch switch (no thresholded
substitution of the linear block).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SpectralError
from .graph import Edge, MetricGraph

# Switch to the series of C and S once |z h^2| is below this; six terms of
# the series then carry relative error ~ (1e-3)^6 / 13!, far below 1e-16.
_SERIES_W = 1e-3

GL_ORDER = 10
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(GL_ORDER)

# Panels longer than this get subdivided so that degree-9 interpolation of
# smooth data on a panel stays near machine precision for |omega| of a few.
MAX_PANEL_LENGTH = 0.5


def _cs(z, h):
    """Entire functions C(z,h), S(z,h) with C' = -z S, S' = C (d/dh).

    Accepts scalars or broadcastable arrays; returns (C, S).
    """
    z = np.asarray(z, dtype=float)
    h = np.asarray(h, dtype=float)
    w = z * h * h
    small = np.abs(w) < _SERIES_W
    trig = (~small) & (z > 0)
    hyp = (~small) & (z < 0)

    C = np.empty(np.broadcast(z, h).shape)
    S = np.empty(np.broadcast(z, h).shape)
    zb, hb, wb = np.broadcast_arrays(z, h, w)

    ws = wb[small]
    # C = sum (-w)^k/(2k)!, S = h * sum (-w)^k/(2k+1)!
    C[small] = 1 + ws * (-1 / 2 + ws * (1 / 24 + ws * (-1 / 720 + ws * (1 / 40320 - ws / 3628800))))
    S[small] = hb[small] * (
        1 + ws * (-1 / 6 + ws * (1 / 120 + ws * (-1 / 5040 + ws * (1 / 362880 - ws / 39916800))))
    )

    r = np.sqrt(zb[trig])
    C[trig] = np.cos(r * hb[trig])
    S[trig] = np.sin(r * hb[trig]) / r

    k = np.sqrt(-zb[hyp])
    C[hyp] = np.cosh(k * hb[hyp])
    S[hyp] = np.sinh(k * hb[hyp]) / k
    return C, S


def piece_block(z: float, h: float) -> np.ndarray:
    """Transfer block propagating (f, f') across a constant-q piece."""
    C, S = _cs(z, h)
    return np.array([[C, S], [-z * S, C]])


@dataclass(frozen=True)
class EdgeBasis:
    """Endpoint data of the normalised solutions c, s at x = length.

    The Wronskian c*s' - s*c' equals 1 identically, so
    c_end*ds_end - s_end*dc_end = 1 up to rounding.
    """

    lam: float
    c_end: float
    s_end: float
    dc_end: float
    ds_end: float

    @property
    def wronskian(self) -> float:
        return self.c_end * self.ds_end - self.s_end * self.dc_end


def transfer_matrix(edge: Edge, lam: float) -> EdgeBasis:
    """Fundamental-solution endpoint data, the ordered product of piece blocks."""
    M = np.eye(2)
    for h, q in edge.potential.pieces:
        M = piece_block(lam - q, h) @ M
    return EdgeBasis(float(lam), M[0, 0], M[0, 1], M[1, 0], M[1, 1])


def transfer_matrix_batch(edge: Edge, lams: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(c_end, s_end, dc_end, ds_end) arrays over a batch of lambda values."""
    lams = np.asarray(lams, dtype=float)
    n = lams.shape[0]
    M = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
    for h, q in edge.potential.pieces:
        C, S = _cs(lams - q, h)
        B = np.empty((n, 2, 2))
        B[:, 0, 0] = C
        B[:, 0, 1] = S
        B[:, 1, 0] = -(lams - q) * S
        B[:, 1, 1] = C
        M = np.einsum("nij,njk->nik", B, M)
    return M[:, 0, 0], M[:, 0, 1], M[:, 1, 0], M[:, 1, 1]


def basis_at_positions(edge: Edge, lam: float, xs: np.ndarray) -> tuple[np.ndarray, ...]:
    """Values (c, s, c', s') at positions xs in [0, length] (xs need not be sorted)."""
    xs = np.asarray(xs, dtype=float)
    c = np.empty_like(xs)
    s = np.empty_like(xs)
    dc = np.empty_like(xs)
    ds = np.empty_like(xs)
    P = np.eye(2)
    x0 = 0.0
    tol = 1e-12 * max(1.0, edge.length)
    for i, (h, q) in enumerate(edge.potential.pieces):
        last = i == len(edge.potential.pieces) - 1
        mask = (xs >= x0 - tol) & ((xs <= x0 + h + tol) if last else (xs < x0 + h))
        if mask.any():
            t = np.clip(xs[mask] - x0, 0.0, h)
            C, S = _cs(lam - q, t)
            zS = (lam - q) * S
            c[mask] = C * P[0, 0] + S * P[1, 0]
            dc[mask] = -zS * P[0, 0] + C * P[1, 0]
            s[mask] = C * P[0, 1] + S * P[1, 1]
            ds[mask] = -zS * P[0, 1] + C * P[1, 1]
        P = piece_block(lam - q, h) @ P
        x0 += h
    return c, s, dc, ds


def edge_dtn_block(edge: Edge, lam: float, tol: float = 1e-12) -> np.ndarray:
    """Edge Dirichlet-to-Neumann block at spectral parameter lambda.

    Maps (f(0), f(length)) to the derivatives taken in the direction
    pointing towards the respective endpoint:

        (1/s_end) * [[c_end, -1], [-1, ds_end]].

    Undefined when lambda is a Dirichlet eigenvalue of the single edge
    (s_end = 0); raises EDGE_DIRICHLET_POLE there.
    """
    eb = transfer_matrix(edge, lam)
    scale = edge.length * max(1.0, abs(eb.c_end), abs(eb.ds_end))
    if abs(eb.s_end) < tol * scale:
        raise SpectralError("EDGE_DIRICHLET_POLE",
                            f"lambda={lam} is a Dirichlet eigenvalue of edge {edge.id!r}")
    return np.array([[eb.c_end, -1.0], [-1.0, eb.ds_end]]) / eb.s_end


# ---------------------------------------------------------------------------
# Sampling grids and edge-wise functions

def _legendre_partial_matrix() -> np.ndarray:
    """J with (J g)_i = integral from -1 to node_i of the degree-9 interpolant of g."""
    t = _GL_NODES
    n = GL_ORDER
    V = np.empty((n, n))
    for k in range(n):
        V[:, k] = np.polynomial.legendre.legval(t, [0.0] * k + [1.0])
    A = np.empty((n, n))
    A[:, 0] = t + 1.0
    for k in range(1, n):
        pk1 = np.polynomial.legendre.legval(t, [0.0] * (k + 1) + [1.0])
        pk_1 = np.polynomial.legendre.legval(t, [0.0] * (k - 1) + [1.0])
        A[:, k] = (pk1 - pk_1) / (2 * k + 1)
    return A @ np.linalg.inv(V)


_PARTIAL = _legendre_partial_matrix()


def _bary_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.ones_like(nodes)
    for j in range(len(nodes)):
        w[j] = 1.0 / np.prod(nodes[j] - np.delete(nodes, j))
    return w


_BARY_W = _bary_weights(_GL_NODES)


@dataclass(frozen=True)
class EdgeGrid:
    """Composite Gauss-Legendre grid on one edge: panels of order 10.

    Each potential piece is subdivided into panels no longer than
    MAX_PANEL_LENGTH; nodes and weights are stored per panel.
    """

    edge: Edge
    panel_start: np.ndarray   # (P,)
    panel_half: np.ndarray    # (P,) half-lengths
    nodes: np.ndarray         # (P, 10) global positions along the edge
    weights: np.ndarray       # (P, 10)

    @staticmethod
    def build(edge: Edge) -> "EdgeGrid":
        starts, halves = [], []
        x0 = 0.0
        for h, _ in edge.potential.pieces:
            npan = max(1, int(np.ceil(h / MAX_PANEL_LENGTH)))
            ph = h / npan
            for j in range(npan):
                starts.append(x0 + j * ph)
                halves.append(ph / 2)
            x0 += h
        starts = np.array(starts)
        halves = np.array(halves)
        nodes = starts[:, None] + halves[:, None] * (_GL_NODES[None, :] + 1.0)
        weights = halves[:, None] * _GL_WEIGHTS[None, :]
        return EdgeGrid(edge, starts, halves, nodes, weights)

    def sample(self, fn) -> np.ndarray:
        return np.asarray(fn(self.nodes), dtype=float).reshape(self.nodes.shape)

    def interpolate(self, values: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """Barycentric interpolation of per-panel node values at positions xs."""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        out = np.empty_like(xs)
        ends = self.panel_start + 2 * self.panel_half
        for i, x in enumerate(xs):
            p = int(np.searchsorted(ends, x - 1e-14))
            p = min(p, len(ends) - 1)
            t = (x - self.panel_start[p]) / self.panel_half[p] - 1.0
            d = t - _GL_NODES
            hit = np.argmin(np.abs(d))
            if abs(d[hit]) < 1e-14:
                out[i] = values[p, hit]
            else:
                w = _BARY_W / d
                out[i] = np.dot(w, values[p]) / np.sum(w)
        return out


class GraphGrid:
    """Sampling grid for the whole graph (one EdgeGrid per edge)."""

    def __init__(self, graph: MetricGraph):
        self.graph = graph
        self.edges = [EdgeGrid.build(e) for e in graph.edges]

    def sample(self, fns) -> "SampledFunction":
        """fns: callable applied on every edge, or a per-edge list of callables."""
        if callable(fns):
            fns = [fns] * len(self.edges)
        return SampledFunction(self, [g.sample(fn) for g, fn in zip(self.edges, fns)])

    def zeros(self) -> "SampledFunction":
        return SampledFunction(self, [np.zeros_like(g.nodes) for g in self.edges])


@dataclass
class SampledFunction:
    """Edgewise function represented by its values on a GraphGrid."""

    grid: GraphGrid
    values: list[np.ndarray]

    def inner(self, other: "SampledFunction") -> float:
        acc = 0.0
        for g, a, b in zip(self.grid.edges, self.values, other.values):
            acc += float(np.sum(g.weights * a * b))
        return acc

    def norm(self) -> float:
        return float(np.sqrt(self.inner(self)))

    def __add__(self, other: "SampledFunction") -> "SampledFunction":
        return SampledFunction(self.grid, [a + b for a, b in zip(self.values, other.values)])

    def __sub__(self, other: "SampledFunction") -> "SampledFunction":
        return SampledFunction(self.grid, [a - b for a, b in zip(self.values, other.values)])

    def __rmul__(self, scalar: float) -> "SampledFunction":
        return SampledFunction(self.grid, [scalar * a for a in self.values])


# ---------------------------------------------------------------------------
# Particular solutions (variation of constants)


@dataclass
class ParticularSolution:
    """u_p with u_p(0) = u_p'(0) = 0 and u_p'' = (q - lambda) u_p + f on one edge.

    Equivalently (-d^2/dx^2 + q - lambda) u_p = -f: resolvent solves feed -f.
    values/derivs hold u_p and u_p' on the edge grid; end_value/end_deriv
    are u_p(length) and u_p'(length).  Calling the object evaluates u_p at
    arbitrary interior points by panel interpolation.
    """

    edge_grid: EdgeGrid
    lam: float
    values: np.ndarray
    derivs: np.ndarray
    end_value: float
    end_deriv: float

    @property
    def end_values(self) -> tuple[float, float]:
        return (0.0, self.end_value)

    @property
    def end_derivs_toward(self) -> tuple[float, float]:
        """Derivatives towards the respective endpoint: (-u_p'(0), u_p'(length))."""
        return (0.0, self.end_deriv)

    def __call__(self, xs) -> np.ndarray:
        return self.edge_grid.interpolate(self.values, xs)


def particular_solution(edge: Edge, lam: float, f_values: np.ndarray,
                        edge_grid: EdgeGrid | None = None) -> ParticularSolution:
    """Variation of constants u_p(x) = int_0^x [s(x)c(t) - c(x)s(t)] f(t) dt.

    ``f_values`` are samples of the right-hand side on the edge grid
    (shape (panels, 10)); partial integrals inside a panel use the exact
    antiderivative of the degree-9 node interpolant.
    """
    g = edge_grid if edge_grid is not None else EdgeGrid.build(edge)
    c, s, dc, ds = basis_at_positions(edge, lam, g.nodes.ravel())
    c, s, dc, ds = (a.reshape(g.nodes.shape) for a in (c, s, dc, ds))

    gc = c * f_values
    gs = s * f_values
    part_c = g.panel_half[:, None] * (gc @ _PARTIAL.T)
    part_s = g.panel_half[:, None] * (gs @ _PARTIAL.T)
    full_c = g.panel_half * (gc @ _GL_WEIGHTS)
    full_s = g.panel_half * (gs @ _GL_WEIGHTS)
    cum_c = np.concatenate([[0.0], np.cumsum(full_c)])
    cum_s = np.concatenate([[0.0], np.cumsum(full_s)])

    Ic = cum_c[:-1, None] + part_c
    Is = cum_s[:-1, None] + part_s
    up = s * Ic - c * Is
    dup = ds * Ic - dc * Is

    eb = transfer_matrix(edge, lam)
    end_value = eb.s_end * cum_c[-1] - eb.c_end * cum_s[-1]
    end_deriv = eb.ds_end * cum_c[-1] - eb.dc_end * cum_s[-1]
    return ParticularSolution(g, float(lam), up, dup, float(end_value), float(end_deriv))
