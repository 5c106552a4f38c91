"""Eigenvalues and resolvents for all vertex-condition kinds.

The engine represents an edgewise solution as f_e = a_e c_e + b_e s_e in
the normalised fundamental basis and encodes vertex conditions as 2E
linear rows in the coefficients (a_e, b_e): per vertex, deg(v) - 1
continuity rows plus one condition row, or deg(v) value rows for
Dirichlet conditions.  The rows are entire in lambda (they are built from
the fundamental basis, never from edge DtN blocks), so embedded
eigenvalues at single-edge Dirichlet eigenvalues are detected with their
correct multiplicity.

Eigenvalues in [0, lambda_max] are located as zeros of the smallest
singular value of the row-normalised secular matrix along a kappa =
sqrt(lambda) grid, refined by golden-section search.  Exhaustiveness is
certified against an independent oscillation count of the Dirichlet
spectrum (zeros of the s-solution per edge): every condition kind here is
a self-adjoint extension of the common minimal operator, so its counting
function stays within V of the Dirichlet one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .edges import (
    GraphGrid,
    SampledFunction,
    _cs,
    basis_at_positions,
    particular_solution,
    piece_block,
    transfer_matrix,
    transfer_matrix_batch,
)
from .errors import SpectralError
from .graph import ConditionSpec, MetricGraph, is_potential_free, total_length
from .weyl import dtn_zero, schur_boundary

# ---------------------------------------------------------------------------
# Condition rows


@dataclass(frozen=True)
class _Term:
    """Coefficient of value/toward-derivative of one edge-end inside a row."""

    edge: int
    end: int  # 0 = tail (x=0), 1 = head (x=length)
    val: float
    der: float


class ConditionRows:
    """Secular row structure for a (graph, conditions) pair.

    nonlocal coupling matrices (Krein, Krein-on-subset, custom) are
    computed once at construction and reused for every lambda.
    """

    def __init__(self, graph: MetricGraph, cond: ConditionSpec):
        cond.check_against(graph)
        self.graph = graph
        self.cond = cond
        self.rows: list[list[_Term]] = []
        ends = graph.vertex_ends()
        rep = [lst[0] for lst in ends]  # representative end per vertex

        coupling = None
        bidx = None
        if cond.kind == "krein":
            coupling = dtn_zero(graph)
        elif cond.kind == "custom":
            coupling = cond.coupling_matrix()
        elif cond.kind == "krein_subset":
            bidx = [graph.vertex_index(v) for v in cond.boundary]
            coupling = schur_boundary(dtn_zero(graph), np.array(bidx))
        self.coupling = coupling

        in_boundary = {}
        if bidx is not None:
            in_boundary = {vi: k for k, vi in enumerate(bidx)}

        for vi in range(graph.num_vertices):
            incident = ends[vi]
            if cond.kind == "dirichlet":
                for (e, end) in incident:
                    self.rows.append([_Term(e, end, 1.0, 0.0)])
                continue
            for (ea, enda), (eb, endb) in zip(incident, incident[1:]):
                self.rows.append([_Term(ea, enda, 1.0, 0.0), _Term(eb, endb, -1.0, 0.0)])
            row = [_Term(e, end, 0.0, 1.0) for (e, end) in incident]
            if cond.kind == "delta":
                s = cond.strength_of(graph.vertices[vi])
                if s != 0.0:
                    e0, end0 = incident[0]
                    row.append(_Term(e0, end0, s, 0.0))
            elif cond.kind in ("krein", "custom"):
                for wj in range(graph.num_vertices):
                    cij = coupling[vi, wj]
                    if cij != 0.0:
                        e0, end0 = rep[wj]
                        row.append(_Term(e0, end0, -cij, 0.0))
            elif cond.kind == "krein_subset" and vi in in_boundary:
                bi = in_boundary[vi]
                for wj, bj in in_boundary.items():
                    cij = coupling[bi, bj]
                    if cij != 0.0:
                        e0, end0 = rep[wj]
                        row.append(_Term(e0, end0, -cij, 0.0))
            self.rows.append(row)

        if len(self.rows) != 2 * graph.num_edges:
            raise AssertionError("row count must equal 2E")
        self._build_scatter()

    def _build_scatter(self) -> None:
        """Flatten the rows into scatter arrays for vectorised assembly.

        Each term contributes coefficient * feature to one matrix entry,
        with feature one of (1, c, s, c', s') of its edge; the envelope
        accumulates |coefficient| * |feature| per row.
        """
        E = self.graph.num_edges
        flat_idx, edges, kinds, coefs = [], [], [], []
        env_row, env_edge, env_kind, env_coef = [], [], [], []

        def add(r, col, edge, kind, coef):
            if coef == 0.0:
                return
            flat_idx.append(r * 2 * E + col)
            edges.append(edge)
            kinds.append(kind)
            coefs.append(coef)

        def add_env(r, edge, kind, coef):
            if coef == 0.0:
                return
            env_row.append(r)
            env_edge.append(edge)
            env_kind.append(kind)
            env_coef.append(coef)

        # feature kinds: 0 = const, 1 = c, 2 = s, 3 = c', 4 = s'
        for r, row in enumerate(self.rows):
            for t in row:
                ca, cb = 2 * t.edge, 2 * t.edge + 1
                if t.end == 0:
                    add(r, ca, t.edge, 0, t.val)
                    add(r, cb, t.edge, 0, -t.der)
                    add_env(r, t.edge, 0, abs(t.val) + abs(t.der))
                else:
                    add(r, ca, t.edge, 1, t.val)
                    add(r, cb, t.edge, 2, t.val)
                    add(r, ca, t.edge, 3, t.der)
                    add(r, cb, t.edge, 4, t.der)
                    for kind in (1, 2):
                        add_env(r, t.edge, kind, abs(t.val))
                    for kind in (3, 4):
                        add_env(r, t.edge, kind, abs(t.der))
        self._sc_idx = np.array(flat_idx, dtype=np.intp)
        self._sc_edge = np.array(edges, dtype=np.intp)
        self._sc_kind = np.array(kinds, dtype=np.intp)
        self._sc_coef = np.array(coefs)
        self._env_row = np.array(env_row, dtype=np.intp)
        self._env_edge = np.array(env_edge, dtype=np.intp)
        self._env_kind = np.array(env_kind, dtype=np.intp)
        self._env_coef = np.array(env_coef)

    # -- assembly -----------------------------------------------------------

    def assemble_batch(self, lams: np.ndarray,
                       with_env: bool = False) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
        """Secular matrices, shape (len(lams), 2E, 2E), unknowns (a_e, b_e).

        With ``with_env`` also returns the per-row magnitude envelope (the
        same assembly with every contribution taken in absolute value),
        which calibrates how much cancellation a row has undergone.
        """
        lams = np.asarray(lams, dtype=float)
        n = lams.shape[0]
        E = self.graph.num_edges
        feats = np.empty((E, 5, n))
        feats[:, 0, :] = 1.0
        for k, e in enumerate(self.graph.edges):
            feats[k, 1:, :] = transfer_matrix_batch(e, lams)
        vals = self._sc_coef[:, None] * feats[self._sc_edge, self._sc_kind, :]
        flat = np.zeros((4 * E * E, n))
        np.add.at(flat, self._sc_idx, vals)
        M = flat.reshape(2 * E, 2 * E, n).transpose(2, 0, 1)
        if not with_env:
            return M
        env_vals = self._env_coef[:, None] * np.abs(feats[self._env_edge, self._env_kind, :])
        env_flat = np.zeros((2 * E, n))
        np.add.at(env_flat, self._env_row, env_vals)
        return M, env_flat.T

    def assemble(self, lam: float) -> np.ndarray:
        return self.assemble_batch(np.array([lam]))[0]

    def normalised_batch(self, lams: np.ndarray, floor: np.ndarray | None = None,
                         zero_dust: bool = False) -> np.ndarray:
        """Row-normalised secular matrices for singular-value analysis.

        Rows whose entries have cancelled to floating-point dust relative
        to their magnitude envelope encode conditions satisfied by every
        edgewise solution (this happens e.g. at lambda = 0 for the Krein
        rows of leaf vertices); they are zeroed so that naive sup-norm
        scaling cannot amplify the dust into a spurious rank contribution.
        """
        M, env = self.assemble_batch(lams, with_env=True)
        return _finalise(M, env, floor, zero_dust)

    def rhs_from_end_data(self, end_values: np.ndarray, end_derivs_toward: np.ndarray) -> np.ndarray:
        """Apply each row to a function given by per-edge end data.

        end_values[e] = (w(0), w(length)); end_derivs_toward[e] =
        (-w'(0), w'(length)).
        """
        out = np.zeros(len(self.rows))
        for r, row in enumerate(self.rows):
            acc = 0.0
            for t in row:
                acc += t.val * end_values[t.edge, t.end] + t.der * end_derivs_toward[t.edge, t.end]
            out[r] = acc
        return out


def _row_normalise(M: np.ndarray) -> np.ndarray:
    """Plain sup-norm row scaling (diagnostic use on raw matrices)."""
    scale = np.max(np.abs(M), axis=-1, keepdims=True)
    return M / np.where(scale == 0.0, 1.0, scale)


def _finalise(M: np.ndarray, env: np.ndarray, floor: np.ndarray | None = None,
              zero_dust: bool = False) -> np.ndarray:
    """Row scaling for singular-value analysis.

    ``floor`` keeps the scale away from zero near full-matrix collapse
    (multiplicity-2E eigenvalues), so the sigma_min dip stays visible.
    ``zero_dust`` clears rows whose entries are pure cancellation residue
    relative to the magnitude envelope; this is needed at lambda = 0,
    where e.g. the Krein row of a leaf vertex vanishes identically, but it
    is kept OFF along kappa scans (it would flatten the sigma_min notch
    of a collapse root into a plateau and stall the refinement).
    """
    rowmax = np.max(np.abs(M), axis=2)
    if zero_dust:
        dust = rowmax <= 1e-10 * env
        if dust.any():
            M = np.where(dust[:, :, None], 0.0, M)
            rowmax = np.where(dust, 0.0, rowmax)
    scale = rowmax if floor is None else np.maximum(rowmax, floor[None, :])
    scale = np.where(scale == 0.0, 1.0, scale)
    return M / scale[:, :, None]


@dataclass(frozen=True)
class SecularMatrix:
    """2E x 2E secular matrix at one lambda; unknown layout (a_e, b_e) per edge."""

    lam: float
    entries: np.ndarray
    edge_order: tuple[str, ...]

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(_row_normalise(self.entries), compute_uv=False)


def secular_matrix(graph: MetricGraph, cond: ConditionSpec, lam: float) -> SecularMatrix:
    rows = ConditionRows(graph, cond)
    return SecularMatrix(float(lam), rows.assemble(lam), tuple(e.id for e in graph.edges))


# ---------------------------------------------------------------------------
# Kernel dimension and counting oracle

SV_REL_TOL = 1e-8


def _kernel_dim_from_sv(sv: np.ndarray, dim: int) -> int:
    if sv[0] == 0.0:
        return dim
    return int(np.sum(sv < SV_REL_TOL * sv[0]))


def kernel_dimension(graph: MetricGraph, cond: ConditionSpec) -> int:
    """dim ker at lambda = 0: V for krein, |B| for krein_subset, 1 for
    standard with q = 0, 0 for dirichlet."""
    rows = ConditionRows(graph, cond)
    sv = np.linalg.svd(rows.normalised_batch(np.array([0.0]), zero_dust=True),
                       compute_uv=False)[0]
    return _kernel_dim_from_sv(sv, 2 * graph.num_edges)


def dirichlet_count_oracle(graph: MetricGraph, lam: float) -> int:
    """Number of Dirichlet eigenvalues <= lam, by oscillation counting.

    Counts the zeros of the s-solution inside each edge: on a constant
    piece, zeros of a trigonometric solution are enumerated exactly from
    its phase; for lambda <= q at most one zero exists and a sign change
    detects it.  Independent of the secular machinery.
    """
    return sum(_edge_zero_count(e, lam) for e in graph.edges)


def _edge_zero_count(edge, lam: float) -> int:
    """Zeros of the s-solution in the open interval (0, length)."""
    count = 0
    u, du = 0.0, 1.0
    pieces = edge.potential.pieces
    guard = 1e-13 * edge.length
    for pi, (h, q) in enumerate(pieces):
        z = lam - q
        h_eff = h - guard if pi == len(pieces) - 1 else h
        if z * h * h >= 1e-3:
            omega = math.sqrt(z)
            phi = math.atan2(du / omega, u)
            A = -(phi + math.pi / 2) / math.pi
            B = (omega * h_eff - phi - math.pi / 2) / math.pi
            count += max(0, math.floor(B) - math.floor(A))
        else:
            C, S = (float(x) for x in _cs(z, h_eff))
            w1 = u * C + du * S
            if u == 0.0:
                pass  # zero at piece start belongs to the previous piece
            elif u * w1 < 0.0 or w1 == 0.0:
                count += 1
        T = piece_block(z, h)
        u, du = T[0, 0] * u + T[0, 1] * du, T[1, 0] * u + T[1, 1] * du
    return count


def edge_dirichlet_eigenvalues(edge, lam_max: float) -> list[float]:
    """Dirichlet eigenvalues of the single edge up to lam_max.

    Located by bisection on the (integer, nondecreasing) interior zero
    count of the s-solution; accurate to ~1e-13 relative.
    """
    n = _edge_zero_count(edge, lam_max)
    out = []
    for target in range(1, n + 1):
        lo, hi = 0.0, lam_max
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if _edge_zero_count(edge, mid) >= target:
                hi = mid
            else:
                lo = mid
        out.append(0.5 * (lo + hi))
    return out


def dirichlet_poles(graph: MetricGraph, lam_max: float) -> np.ndarray:
    """Sorted distinct single-edge Dirichlet eigenvalues up to lam_max
    (the poles of the Weyl matrix); coincidences merged at 1e-8 relative."""
    mus = sorted(m for e in graph.edges for m in edge_dirichlet_eigenvalues(e, lam_max))
    merged: list[float] = []
    for m in mus:
        if merged and m - merged[-1] <= 1e-8 * max(1.0, m):
            continue
        merged.append(m)
    return np.array(merged)


def condition_theta(graph: MetricGraph, rows: "ConditionRows") -> np.ndarray | None:
    """The vertex coupling Theta with (-d_nu f) = Theta (f(v)) for the
    condition kind, or None for Dirichlet (which is the reference operator)."""
    V = graph.num_vertices
    cond = rows.cond
    if cond.kind == "dirichlet":
        return None
    if cond.kind == "standard":
        return np.zeros((V, V))
    if cond.kind == "delta":
        return np.diag([cond.strength_of(v) for v in graph.vertices])
    if cond.kind in ("krein", "custom"):
        return -rows.coupling
    if cond.kind == "krein_subset":
        theta = np.zeros((V, V))
        bidx = [graph.vertex_index(v) for v in cond.boundary]
        theta[np.ix_(bidx, bidx)] = -rows.coupling
        return theta
    raise SpectralError("UNKNOWN_CONDITION_KIND", cond.kind)


def multiplicity_at(rows: "ConditionRows", lam: float) -> int:
    """Eigenvalue multiplicity at one lambda: near-zero singular values of
    the secular matrix, scaled against its own magnitude envelope so a
    full-matrix collapse still reads as maximal multiplicity."""
    M, env = rows.assemble_batch(np.array([lam]), with_env=True)
    A = _finalise(M, env, 0.02 * env[0])
    sv = np.linalg.svd(A, compute_uv=False)[0]
    return int(np.sum(sv < SV_REL_TOL * max(sv[0], 1.0)))


class ExactCounter:
    """Exact eigenvalue counting through the Weyl-matrix negative index.

    The Weyl matrix M is strictly increasing in lambda between its poles
    (the single-edge Dirichlet eigenvalues), so each eigenvalue branch of
    F(lambda) = Theta - M(lambda) is strictly decreasing there, branch
    zeros count operator eigenvalues, and across a pole of residue rank r
    exactly r branches reset from -inf to +inf.  Summing the
    negative-index increments over all pole-free intervals telescopes:
    pole residue ranks plus the trace-invisible embedded multiplicities
    add up to the per-edge Dirichlet eigenvalue count, leaving

        N(0, lam] = n_-(F(lam)) - n_-(F(0+)) + N_Dirichlet(lam)

    for every generic (non-pole, non-eigenvalue) lam, where n_-(F(0+))
    counts the nonpositive eigenvalues of F(0) (zero branches turn
    negative immediately).  For Dirichlet conditions the count is the
    oscillation oracle itself.
    """

    def __init__(self, graph: MetricGraph, rows: "ConditionRows"):
        from .weyl import weyl_matrix

        self.graph = graph
        self._weyl = weyl_matrix
        self.theta = condition_theta(graph, rows)
        if self.theta is not None:
            ev0 = np.linalg.eigvalsh(self.theta - weyl_matrix(graph, 0.0).entries)
            tol0 = 1e-10 * max(1.0, float(np.abs(ev0).max()))
            self._base = int(np.sum(ev0 < tol0))

    def count(self, lam: float) -> int:
        """N(0, lam]; lam must be clear of Weyl poles (see clear_kappa)."""
        if lam <= 0:
            return 0
        if self.theta is None:
            return dirichlet_count_oracle(self.graph, lam)
        ev = np.linalg.eigvalsh(self.theta - self._weyl(self.graph, lam).entries)
        return int(np.sum(ev < 0.0)) - self._base + dirichlet_count_oracle(self.graph, lam)

    def is_pole_clear(self, lam: float) -> bool:
        for e in self.graph.edges:
            eb = transfer_matrix(e, lam)
            scale = e.length / (1.0 + math.sqrt(max(lam, 0.0)) * e.length)
            if abs(eb.s_end) < 1e-5 * scale:
                return False
        return True

    def clear_kappa(self, k: float, lo: float, hi: float) -> float | None:
        """A pole-clear sample near kappa = k inside (lo, hi), or None."""
        width = hi - lo
        for j in range(9):
            delta = (j + 1) // 2 * width / 16.0 * (1 if j % 2 else -1)
            t = k + delta
            if lo < t < hi and self.is_pole_clear(t * t):
                return t
        return None


def exact_count(graph: MetricGraph, rows: "ConditionRows", lam_max: float) -> int:
    """Exact number of eigenvalues in (0, lam_max]; see ExactCounter."""
    return ExactCounter(graph, rows).count(lam_max)


def _clear_of_poles(graph: MetricGraph, lam: float) -> float:
    """Move lam slightly down until no single edge is near a Dirichlet pole,
    so that the negative index of Theta - M(lam) is numerically reliable."""
    for _ in range(60):
        close = False
        for e in graph.edges:
            eb = transfer_matrix(e, lam)
            scale = e.length / (1.0 + math.sqrt(max(lam, 0.0)) * e.length)
            if abs(eb.s_end) < 1e-5 * scale:
                close = True
                break
        if not close:
            return lam
        lam *= 1.0 - 1e-5
    return lam


# ---------------------------------------------------------------------------
# Spectrum


@dataclass(frozen=True)
class Spectrum:
    """Sorted (eigenvalue, multiplicity) pairs, certified on [0, certified_up_to]."""

    pairs: tuple[tuple[float, int], ...]
    certified_up_to: float
    condition: ConditionSpec

    def flat(self) -> list[float]:
        out: list[float] = []
        for lam, m in self.pairs:
            out.extend([lam] * m)
        return out

    def positive(self) -> list[float]:
        return [lam for lam in self.flat() if lam > 0.0]

    def count(self, lam: float) -> int:
        tol = 1e-9 * max(1.0, abs(lam))
        return sum(m for l, m in self.pairs if l <= lam + tol)

    def to_csv(self) -> str:
        lines = ["lambda,multiplicity"]
        for lam, m in self.pairs:
            lines.append(f"{format(lam, '.17g')},{m}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ScanConfig:
    """Knobs of the kappa-scan; defaults match the documented contract."""

    step_divisor: float = 8.0        # grid step = pi / (step_divisor * total length)
    refine_tol: float = 1e-12        # golden-section bracket width in kappa
    merge_tol: float = 1e-9          # de-duplication distance in kappa
    sv_rel_tol: float = SV_REL_TOL   # multiplicity threshold, relative to sigma_max
    max_halvings: int = 4
    min_kappa: float = 1e-6          # roots below this are the lambda=0 kernel


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _refine_lockstep(rows: ConditionRows, brackets: list[tuple[float, float]],
                     tol: float, floor: np.ndarray) -> list[float]:
    """Golden-section minimisation of sigma_min over kappa, all brackets in lockstep."""
    a = np.array([lo for lo, _ in brackets])
    b = np.array([hi for _, hi in brackets])
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)

    def sig_min(ks: np.ndarray) -> np.ndarray:
        sv = np.linalg.svd(rows.normalised_batch(ks * ks, floor), compute_uv=False)
        return sv[:, -1]

    f1 = sig_min(x1)
    f2 = sig_min(x2)
    while np.max(b - a) > tol:
        left = f1 < f2
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        x1_new = np.where(left, b - _INVPHI * (b - a), x2)
        x2_new = np.where(left, x1, a + _INVPHI * (b - a))
        f1_old, f2_old = f1, f2
        x_eval = np.where(left, x1_new, x2_new)
        f_eval = sig_min(x_eval)
        f1 = np.where(left, f_eval, f2_old)
        f2 = np.where(left, f1_old, f_eval)
        x1, x2 = x1_new, x2_new
    return list(0.5 * (a + b))


def _bisect_det_lockstep(rows: ConditionRows, brackets: list[tuple[float, float]],
                         tol: float, floor: np.ndarray) -> list[float]:
    """Sign bisection of det(secular) over kappa, all brackets in lockstep.

    Unlike golden-section on sigma_min, this cannot lose a narrow notch
    sitting in a flat plateau: a determinant sign change pins an
    odd-multiplicity root inside the bracket at every step.
    """
    a = np.array([lo for lo, _ in brackets])
    b = np.array([hi for _, hi in brackets])

    def det_sign(ks: np.ndarray) -> np.ndarray:
        return np.linalg.slogdet(rows.normalised_batch(ks * ks, floor))[0]

    sa = det_sign(a)
    while np.max(b - a) > tol:
        mid = 0.5 * (a + b)
        sm = det_sign(mid)
        go_left = sa * sm < 0
        b = np.where(go_left, mid, b)
        a = np.where(go_left, a, mid)
        sa = np.where(go_left, sa, sm)
    return list(0.5 * (a + b))


def _merge_roots(roots: list[tuple[float, int]], tol: float) -> list[tuple[float, int]]:
    roots.sort()
    merged: list[tuple[float, int]] = []
    for k, m in roots:
        if merged and k - merged[-1][0] < tol:
            merged[-1] = (merged[-1][0], max(merged[-1][1], m))
        else:
            merged.append((k, m))
    return merged


def _detect_on_grid(rows: ConditionRows, grid: np.ndarray, floor: np.ndarray,
                    config: ScanConfig, kappa_floor: float,
                    kappa_ceil: float) -> list[tuple[float, int]]:
    """Root candidates over one grid: sigma_min local minima (golden-section
    refined) plus determinant sign changes (sign-bisected), accepted by the
    near-zero singular value count at the refined point."""
    batch = rows.normalised_batch(grid * grid, floor)
    sv = np.linalg.svd(batch, compute_uv=False)
    smin = sv[:, -1]

    brackets = []
    n = len(grid)
    for i in range(n):
        # the leftmost bracket reaches (almost) to zero: when lambda = 0 is an
        # eigenvalue, sigma_min decays towards kappa = 0 and the refinement
        # must be able to follow that bleed all the way down so the kappa
        # filter below can discard it
        lo = grid[i - 1] if i > 0 else max(1e-9, 0.9 * kappa_floor)
        hi = grid[i + 1] if i < n - 1 else grid[i]
        left_ok = i == 0 or smin[i] <= smin[i - 1]
        right_ok = i == n - 1 or smin[i] < smin[i + 1]
        if left_ok and right_ok and lo < hi:
            brackets.append((lo, hi))
    # odd-multiplicity roots also flip the determinant sign; that detector is
    # immune to narrow sigma_min dips hiding in the basin of a nearby root,
    # and its brackets are closed by sign bisection (golden-section could
    # miss a narrow notch inside a flat plateau)
    det_sign = np.linalg.slogdet(batch)[0]
    det_brackets = [(grid[i], grid[i + 1]) for i in range(n - 1)
                    if det_sign[i] * det_sign[i + 1] < 0]
    if not brackets and not det_brackets:
        return []

    kappas = []
    if brackets:
        kappas += _refine_lockstep(rows, brackets, config.refine_tol, floor)
    if det_brackets:
        kappas += _bisect_det_lockstep(rows, det_brackets, config.refine_tol, floor)
    sv_at = np.linalg.svd(rows.normalised_batch(np.array(kappas) ** 2, floor), compute_uv=False)
    roots: list[tuple[float, int]] = []
    for k, svk in zip(kappas, sv_at):
        if k < kappa_floor or k > kappa_ceil:
            continue
        mult = int(np.sum(svk < config.sv_rel_tol * max(svk[0], 1.0)))
        if mult >= 1:
            roots.append((k, mult))
    return _merge_roots(roots, config.merge_tol)


def _scan_roots(rows: ConditionRows, kappa_max: float, dk: float,
                config: ScanConfig) -> tuple[list[tuple[float, int]], np.ndarray]:
    head = np.array([dk / 16, dk / 8, dk / 4, dk / 2])
    grid = np.concatenate([head, np.arange(dk, kappa_max, dk), [kappa_max]])
    grid = np.unique(grid[grid > 0])
    raw = rows.assemble_batch(grid * grid)
    # per-row envelope over the scan; floors the normalisation so that
    # full-matrix collapse (multiplicity-2E eigenvalues) stays detectable
    floor = 0.02 * np.max(np.abs(raw), axis=(0, 2))
    kappa_floor = max(config.min_kappa, 0.25 * grid[0])
    roots = _detect_on_grid(rows, grid, floor, config, kappa_floor,
                            kappa_max * (1 + 1e-12))
    return roots, floor


def _repair_cells(rows: ConditionRows, counter: ExactCounter,
                  roots: list[tuple[float, int]], kappa_floor: float,
                  kappa_cert: float, floor: np.ndarray,
                  config: ScanConfig) -> list[tuple[float, int]]:
    """Targeted rescue of quasi-degenerate clusters.

    Between consecutive found roots the exact counter gives the number of
    eigenvalues each cell must contain; cells in deficit (typically a pair
    whose second member hid inside one grid step of the initial scan) are
    rescanned on progressively finer local grids.
    """
    points = 96
    for _ in range(4):
        inside = [(k, m) for k, m in roots if k <= kappa_cert]
        first = inside[0][0] if inside else kappa_cert
        cuts = [max(kappa_floor, min(0.5 * first, kappa_cert))]
        for (k1, _), (k2, _) in zip(inside, inside[1:]):
            cuts.append(0.5 * (k1 + k2))
        cuts.append(kappa_cert)
        samples = [cuts[0] if counter.is_pole_clear(cuts[0] ** 2)
                   else counter.clear_kappa(cuts[0], 1e-9, first)]
        for i, c in enumerate(cuts[1:-1], start=1):
            lo = inside[i - 1][0]
            hi = inside[i][0] if i < len(inside) else kappa_cert
            samples.append(c if counter.is_pole_clear(c * c)
                           else counter.clear_kappa(c, lo, hi))
        samples.append(kappa_cert)
        if any(s is None for s in samples):
            return roots
        counts = [counter.count(s * s) for s in samples]
        deficits = []
        for i in range(len(samples) - 1):
            expected = counts[i + 1] - counts[i]
            found = sum(m for k, m in inside if samples[i] < k <= samples[i + 1])
            if expected > found:
                deficits.append((samples[i], samples[i + 1]))
        if not deficits:
            return roots
        extra: list[tuple[float, int]] = []
        for lo, hi in deficits:
            local = np.linspace(lo, hi, points)
            extra += _detect_on_grid(rows, local, floor, config, lo, hi)
        if not extra:
            points *= 4
            continue
        roots = _merge_roots(roots + extra, config.merge_tol)
        points *= 4
    return roots


def eigenvalues(graph: MetricGraph, cond: ConditionSpec, lambda_max: float,
                config: ScanConfig = ScanConfig()) -> Spectrum:
    """All eigenvalues in [0, lambda_max] with multiplicities.

    Scans kappa = sqrt(lambda) with step pi/(step_divisor * total length),
    refines sigma_min minima by golden-section search and determinant sign
    changes by bisection, then certifies the result against an exact
    eigenvalue count obtained from the Weyl-matrix negative-index flow
    (see exact_count); on a mismatch the scan step is halved (at most
    max_halvings times) before raising SCAN_INCOMPLETE.
    """
    if lambda_max <= 0:
        raise SpectralError("BAD_LAMBDA_MAX", "lambda_max must be positive")
    rows = ConditionRows(graph, cond)
    sv0 = np.linalg.svd(rows.normalised_batch(np.array([0.0]), zero_dust=True),
                        compute_uv=False)[0]
    n0 = _kernel_dim_from_sv(sv0, 2 * graph.num_edges)

    # the certificate is evaluated strictly inside the interval (and clear
    # of Weyl poles) so that an eigenvalue sitting exactly at lambda_max
    # cannot be counted by the scan yet half-dropped by the exact count
    lam_cert = _clear_of_poles(graph, lambda_max * (1.0 - 1e-10))
    counter = ExactCounter(graph, rows)
    n_exact = counter.count(lam_cert)
    kappa_max = math.sqrt(lambda_max)
    kappa_cert = math.sqrt(lam_cert)
    dk = math.pi / (config.step_divisor * total_length(graph))

    n_total = -1
    for _ in range(config.max_halvings + 1):
        roots, floor = _scan_roots(rows, kappa_max, dk, config)
        n_total = sum(m for k, m in roots if k * k <= lam_cert)
        if n_total != n_exact:
            # localise the deficit with per-cell exact counts before paying
            # for a globally finer scan
            kappa_floor = max(config.min_kappa, dk / 64.0)
            roots = _repair_cells(rows, counter, roots, kappa_floor, kappa_cert,
                                  floor, config)
            n_total = sum(m for k, m in roots if k * k <= lam_cert)
        if n_total == n_exact:
            pairs = ([(0.0, n0)] if n0 > 0 else []) + [(k * k, m) for k, m in roots]
            return Spectrum(tuple(pairs), float(lambda_max), cond)
        dk /= 2.0
    raise SpectralError("SCAN_INCOMPLETE",
                        f"root scan found {n_total} eigenvalues in (0, lambda_max], "
                        f"exact count is {n_exact}")


def counting_function(graph: MetricGraph, cond: ConditionSpec, lam: float,
                      spectrum: Spectrum | None = None) -> int:
    """N(lam): number of eigenvalues <= lam, kernel included."""
    if spectrum is None or spectrum.certified_up_to < lam:
        spectrum = eigenvalues(graph, cond, max(lam, 1e-6))
    return spectrum.count(lam)


def weyl_bounds(graph: MetricGraph, lam: float) -> tuple[float, float]:
    """Two-sided Weyl bounds for the Krein counting function, q = 0 only:
    total_length*sqrt(lam)/pi - E <= N(lam) <= total_length*sqrt(lam)/pi + V."""
    if not is_potential_free(graph):
        raise SpectralError("POTENTIAL_NOT_ZERO", "Weyl bounds require q = 0")
    x = total_length(graph) * math.sqrt(max(lam, 0.0)) / math.pi
    return (x - graph.num_edges, x + graph.num_vertices)


# ---------------------------------------------------------------------------
# Resolvents


@dataclass
class ResolventSolution:
    """Solution u of -u'' + q u - lambda u = f with the requested vertex conditions."""

    function: SampledFunction
    lam: float
    coeffs: np.ndarray              # (E, 2): homogeneous coefficients (a_e, b_e)
    end_values: np.ndarray          # (E, 2): u at (x=0, x=length)
    end_derivs_toward: np.ndarray   # (E, 2): (-u'(0), u'(length))

    def vertex_value(self, graph: MetricGraph, v: str) -> float:
        for k, e in enumerate(graph.edges):
            if e.u == v:
                return float(self.end_values[k, 0])
            if e.v == v:
                return float(self.end_values[k, 1])
        raise KeyError(v)

    def dnu(self, graph: MetricGraph) -> np.ndarray:
        """Per-vertex sums of toward-vertex derivatives."""
        out = np.zeros(graph.num_vertices)
        for k, e in enumerate(graph.edges):
            out[graph.vertex_index(e.u)] += self.end_derivs_toward[k, 0]
            out[graph.vertex_index(e.v)] += self.end_derivs_toward[k, 1]
        return out


def _as_sampled(graph: MetricGraph, f, grid: GraphGrid | None) -> SampledFunction:
    if isinstance(f, SampledFunction):
        return f
    g = grid if grid is not None else GraphGrid(graph)
    return g.sample(f)


SPECTRUM_PROXIMITY_TOL = 1e-6


def apply_resolvent(graph: MetricGraph, cond: ConditionSpec, lam: float, f,
                    grid: GraphGrid | None = None,
                    rows: ConditionRows | None = None) -> ResolventSolution:
    """Solve (-d^2/dx^2 + q - lambda) u = f with the given vertex conditions.

    The edgewise particular solution (variation of constants) is corrected
    by the homogeneous solution whose coefficients solve the secular linear
    system.  Raises LAMBDA_IN_SPECTRUM when lambda is (numerically) an
    eigenvalue.
    """
    fs = _as_sampled(graph, f, grid)
    if rows is None:
        rows = ConditionRows(graph, cond)
    M = rows.assemble(lam)
    scale = np.max(np.abs(M), axis=1)
    scale = np.where(scale == 0.0, 1.0, scale)
    Mn = M / scale[:, None]
    sv = np.linalg.svd(Mn, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] < SPECTRUM_PROXIMITY_TOL * sv[0]:
        raise SpectralError("LAMBDA_IN_SPECTRUM",
                            f"lambda={lam} is within tolerance of an eigenvalue")

    E = graph.num_edges
    end_values = np.zeros((E, 2))
    end_derivs = np.zeros((E, 2))
    particulars = []
    for k, e in enumerate(graph.edges):
        # the variation-of-constants kernel s(x)c(t) - c(x)s(t) yields
        # (-d^2/dx^2 + q - lambda) u_p = -f, so the resolvent feeds -f
        up = particular_solution(e, lam, -fs.values[k], fs.grid.edges[k])
        particulars.append(up)
        end_values[k, 1] = up.end_value
        end_derivs[k, 1] = up.end_deriv  # toward-derivative at head = +u_p'(l)

    rhs = -rows.rhs_from_end_data(end_values, end_derivs) / scale
    try:
        x = np.linalg.solve(Mn, rhs)
    except np.linalg.LinAlgError as exc:
        raise SpectralError("LAMBDA_IN_SPECTRUM", str(exc)) from exc

    values = []
    coeffs = x.reshape(E, 2)
    for k, e in enumerate(graph.edges):
        a, b = coeffs[k]
        eg = fs.grid.edges[k]
        c, s, dc, ds = basis_at_positions(e, lam, eg.nodes.ravel())
        vals = particulars[k].values + (a * c + b * s).reshape(eg.nodes.shape)
        values.append(vals)
        eb = transfer_matrix(e, lam)
        end_values[k, 0] = a
        end_values[k, 1] += a * eb.c_end + b * eb.s_end
        end_derivs[k, 0] = -b
        end_derivs[k, 1] += a * eb.dc_end + b * eb.ds_end
    return ResolventSolution(SampledFunction(fs.grid, values), float(lam),
                             coeffs, end_values, end_derivs)


def harmonic_extension(graph: MetricGraph, lam: float, phi: np.ndarray,
                       grid: GraphGrid) -> SampledFunction:
    """gamma(lambda) phi: the edgewise lambda-harmonic function with vertex
    values phi (in graph vertex order).  Needs s_end != 0 on every edge."""
    values = []
    for k, e in enumerate(graph.edges):
        eb = transfer_matrix(e, lam)
        if eb.s_end == 0.0:
            raise SpectralError("DIRICHLET_POLE", f"edge {e.id!r} at lambda={lam}")
        a = phi[graph.vertex_index(e.u)]
        b = (phi[graph.vertex_index(e.v)] - a * eb.c_end) / eb.s_end
        eg = grid.edges[k]
        c, s, _, _ = basis_at_positions(e, lam, eg.nodes.ravel())
        values.append((a * c + b * s).reshape(eg.nodes.shape))
    return SampledFunction(grid, values)


def krein_resolvent_via_formula(graph: MetricGraph, lam: float, f,
                                grid: GraphGrid | None = None) -> SampledFunction:
    """Krein resolvent through the rank-V correction of the Dirichlet resolvent.

    For lambda < 0: u = R_D(lam) f + gamma(lam) (M(0) - M(lam))^{-1} beta,
    where beta collects minus the toward-vertex derivative sums of
    R_D(lam) f (the adjoint gamma-field applied to f, via the Green
    identity).
    """
    from .weyl import weyl_matrix

    if lam >= 0:
        raise SpectralError("BAD_LAMBDA", "the resolvent formula is exercised at lambda < 0")
    fs = _as_sampled(graph, f, grid)
    w = apply_resolvent(graph, ConditionSpec.dirichlet(), lam, fs)
    beta = -w.dnu(graph)
    m0 = weyl_matrix(graph, 0.0).entries
    mlam = weyl_matrix(graph, lam).entries
    xi = np.linalg.solve(m0 - mlam, beta)
    corr = harmonic_extension(graph, lam, xi, fs.grid)
    return w.function + corr


def _random_probes(graph: MetricGraph, grid: GraphGrid, n: int,
                   rng: np.random.Generator) -> list[SampledFunction]:
    """Edgewise-smooth probe functions: random degree-4 polynomials per edge."""
    probes = []
    for _ in range(n):
        values = []
        for k, e in enumerate(graph.edges):
            coef = rng.standard_normal(5)
            x = grid.edges[k].nodes / e.length
            values.append(np.polynomial.polynomial.polyval(x, coef))
        probes.append(SampledFunction(grid, values))
    return probes


def resolvent_difference_rank(graph: MetricGraph, cond_a: ConditionSpec,
                              cond_b: ConditionSpec, lam: float,
                              n_probes: int | None = None,
                              rng: np.random.Generator | None = None) -> int:
    """Numerical rank of R_A(lam) - R_B(lam) from a Gram matrix of probe images.

    Uses n_probes >= 2V random edgewise-smooth right-hand sides; the rank
    is the number of Gram singular values above 1e-8 times the largest.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if n_probes is None:
        n_probes = 2 * graph.num_vertices + 2
    n_probes = max(n_probes, 2 * graph.num_vertices)
    grid = GraphGrid(graph)
    rows_a = ConditionRows(graph, cond_a)
    rows_b = ConditionRows(graph, cond_b)
    probes = _random_probes(graph, grid, n_probes, rng)
    diffs = []
    ref = 0.0
    for p in probes:
        ua = apply_resolvent(graph, cond_a, lam, p, rows=rows_a)
        ub = apply_resolvent(graph, cond_b, lam, p, rows=rows_b)
        diffs.append(ua.function - ub.function)
        ref = max(ref, ua.function.norm() ** 2)
    G = np.array([[d1.inner(d2) for d2 in diffs] for d1 in diffs])
    sv = np.linalg.svd(G, compute_uv=False)
    if sv[0] <= 1e-16 * max(ref, 1e-300):
        return 0
    return int(np.sum(sv > 1e-8 * sv[0]))
