"""Seeded randomised verification suites.

Each suite draws random graphs (V <= 6, E <= 9, generically incommensurate
lengths, optional nonnegative step potentials), applies an operation or
computes paired spectra, and checks the corresponding eigenvalue
inequality chains.  All randomness flows through one numpy Generator per
suite, so identical seeds reproduce identical reports.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .graph import (
    ConditionSpec,
    Edge,
    MetricGraph,
    PiecewisePotential,
    cycle_graph,
    flower_graph,
    integrate_potential,
    interval,
    is_potential_free,
    loop,
    star_graph,
    total_length,
)
from .spectral import (
    Spectrum,
    apply_resolvent,
    eigenvalues,
    kernel_dimension,
    krein_resolvent_via_formula,
    resolvent_difference_rank,
    weyl_bounds,
)
from .surgery import (
    attach_graph,
    glue_points,
    glue_vertices,
    insert_degree2,
    insert_edge,
    lengthen_edge,
    verify_interlacing,
)
from .variational import isoperimetric_check
from .weyl import discrete_laplacian

DEFAULT_TOL = 1e-8


def acceptance_tolerance() -> float:
    """1e-8 unless overridden through the KREINGRAPH_TOL environment variable."""
    return float(os.environ.get("KREINGRAPH_TOL", DEFAULT_TOL))


# ---------------------------------------------------------------------------
# Random instances


def random_potential(rng: np.random.Generator, length: float) -> PiecewisePotential:
    n = int(rng.integers(1, 4))
    cuts = np.sort(rng.uniform(0.15, 0.85, n - 1)) * length
    bounds = np.concatenate([[0.0], cuts, [length]])
    pieces = tuple((float(b - a), float(rng.uniform(0.0, 2.5)))
                   for a, b in zip(bounds[:-1], bounds[1:]))
    return PiecewisePotential(pieces)


def random_graph(rng: np.random.Generator, v_max: int = 6, e_max: int = 9,
                 potential: str = "none", v_min: int = 2) -> MetricGraph:
    """Random connected multigraph: spanning tree plus a few extra edges
    (loops and parallel edges included); lengths ~ U(0.6, 1.6).

    potential: "none" (q = 0), "maybe" (roughly half the edges carry a
    random step potential), or "nonzero" (at least one edge does).
    """
    V = int(rng.integers(v_min, v_max + 1))
    names = [f"v{i}" for i in range(V)]
    edges = []
    for i in range(1, V):
        j = int(rng.integers(0, i))
        edges.append((names[j], names[i]))
    extra = int(rng.integers(0, min(e_max - (V - 1), 3) + 1))
    for _ in range(extra):
        a = int(rng.integers(0, V))
        b = int(rng.integers(0, V))
        edges.append((names[a], names[b]))
    out = []
    for k, (a, b) in enumerate(edges):
        length = float(rng.uniform(0.6, 1.6))
        if potential == "none":
            pot = PiecewisePotential.zero(length)
        elif potential == "maybe":
            pot = random_potential(rng, length) if rng.random() < 0.5 else PiecewisePotential.zero(length)
        else:
            pot = random_potential(rng, length)
        out.append(Edge.make(f"e{k}", a, b, length, pot))
    if potential == "nonzero" and all(e.potential.is_zero() for e in out):
        e0 = out[0]
        out[0] = Edge.make(e0.id, e0.u, e0.v, e0.length, random_potential(rng, e0.length))
    return MetricGraph.make(names, out)


def lambda_max_for(graph: MetricGraph, n_positive: int) -> float:
    """A lambda range guaranteed (by the Weyl sandwich) to contain at least
    n_positive positive eigenvalues for every condition kind used here."""
    n = n_positive + graph.num_vertices + graph.num_edges + 1.37
    return (math.pi * n / total_length(graph)) ** 2


def _spectra_pair(g1: MetricGraph, c1: ConditionSpec, g2: MetricGraph, c2: ConditionSpec,
                  n_positive: int) -> tuple[Spectrum, Spectrum]:
    lam = max(lambda_max_for(g1, n_positive), lambda_max_for(g2, n_positive))
    return eigenvalues(g1, c1, lam), eigenvalues(g2, c2, lam)


# ---------------------------------------------------------------------------
# Suite scaffolding


def _report(suite: str, seed: int, tol: float, records: list[dict]) -> dict:
    max_violation = max((r.get("max_violation", 0.0) for r in records), default=0.0)
    failures = [r for r in records if not r.get("passed", True)]
    return {
        "suite": suite,
        "seed": seed,
        "tolerance": tol,
        "trials": len(records),
        "max_violation": max_violation,
        "passed": not failures and max_violation <= tol,
        "records": records,
    }


def _chain_record(trial: int, theorem: str, params: dict, before: Spectrum,
                  after: Spectrum, tol: float, j_max: int = 8, extra: dict | None = None) -> dict:
    rep = verify_interlacing(before, after, theorem, params, j_max=j_max)
    rec = {
        "trial": trial,
        "theorem": theorem,
        "params": params,
        "max_violation": rep.max_violation,
        "n_checked": rep.n_checked,
        "n_skipped": rep.n_skipped,
        "passed": rep.passed(tol),
        "violations": rep.records,
    }
    if extra:
        rec.update(extra)
    return rec


# ---------------------------------------------------------------------------
# Surgery suites


def suite_gluing(trials: int = 20, seed: int = 0, tol: float | None = None,
                 j_max: int = 8) -> dict:
    """Gluing vertices (interlacing both ways) and gluing arbitrary points."""
    tol = acceptance_tolerance() if tol is None else tol
    rng = np.random.default_rng(seed)
    krein = ConditionSpec.krein()
    records = []
    for t in range(trials):
        g = random_graph(rng, potential="maybe", v_min=3)
        k = int(rng.integers(1, min(2, g.num_vertices - 1) + 1))
        chosen = list(rng.choice(g.num_vertices, size=k + 1, replace=False))
        glued = glue_vertices(g, [g.vertices[i] for i in chosen]).graph
        before, after = _spectra_pair(g, krein, glued, krein, j_max + k + 2)
        kernel_after = sum(m for l, m in after.pairs if l == 0.0)
        strict_ok = kernel_after == g.num_vertices - k
        rec = _chain_record(t, "gluing", {"k": k}, before, after, tol,
                            j_max, {"kernel_after": kernel_after,
                                    "kernel_expected": g.num_vertices - k,
                                    "passed_kernel": strict_ok})
        rec["passed"] = rec["passed"] and strict_ok
        records.append(rec)

        # arbitrary points: mix one vertex with interior points
        g2 = random_graph(rng, potential="maybe")
        n_interior = int(rng.integers(1, 3))
        points: list = [g2.vertices[int(rng.integers(0, g2.num_vertices))]]
        for _ in range(n_interior):
            e = g2.edges[int(rng.integers(0, g2.num_edges))]
            points.append((e.id, float(rng.uniform(0.2, 0.8)) * e.length))
        k2 = len(points) - 1
        k0 = n_interior
        res = glue_points(g2, points)
        before2, after2 = _spectra_pair(g2, krein, res.graph, krein,
                                        j_max + k2 + 2 * k0 + 2)
        records.append(_chain_record(t, "glue_points", {"k": k2, "k0": k0},
                                     before2, after2, tol, j_max))
    return _report("gluing", seed, tol, records)


def suite_degree2(trials: int = 20, seed: int = 0, tol: float | None = None,
                  j_max: int = 8) -> dict:
    tol = acceptance_tolerance() if tol is None else tol
    rng = np.random.default_rng(seed)
    krein = ConditionSpec.krein()
    records = []
    for t in range(trials):
        g = random_graph(rng, potential="maybe")
        k0 = int(rng.integers(1, 3))
        h = g
        for _ in range(k0):
            e = h.edges[int(rng.integers(0, h.num_edges))]
            h = insert_degree2(h, e.id, float(rng.uniform(0.25, 0.75)) * e.length).graph
        before, after = _spectra_pair(g, krein, h, krein, j_max + k0 + 2)
        records.append(_chain_record(t, "degree2", {"k": k0}, before, after, tol, j_max))
    return _report("degree2", seed, tol, records)


def suite_lengthen(trials: int = 20, seed: int = 0, tol: float | None = None,
                   j_max: int = 8) -> dict:
    tol = acceptance_tolerance() if tol is None else tol
    rng = np.random.default_rng(seed)
    krein = ConditionSpec.krein()
    records = []
    for t in range(trials):
        g = random_graph(rng, potential="maybe")
        e = g.edges[int(rng.integers(0, g.num_edges))]
        alpha = float(rng.uniform(1.1, 2.2))
        h = lengthen_edge(g, e.id, alpha).graph
        before, after = _spectra_pair(g, krein, h, krein, j_max + 2)
        records.append(_chain_record(t, "lengthen", {"alpha": alpha}, before, after, tol, j_max))
    return _report("lengthen", seed, tol, records)


def suite_attach(trials: int = 20, seed: int = 0, tol: float | None = None,
                 j_max: int = 8, randomize_attached_potential: bool = False) -> dict:
    """Attaching a connected graph by m vertices; the attached potential is
    zero by default (randomise with the flag; the chains hold either way)."""
    tol = acceptance_tolerance() if tol is None else tol
    rng = np.random.default_rng(seed)
    krein = ConditionSpec.krein()
    records = []
    for t in range(trials):
        g = random_graph(rng, potential="maybe")
        pot = "nonzero" if randomize_attached_potential else "none"
        other = random_graph(rng, v_max=4, e_max=5, potential=pot)
        m = int(rng.integers(1, min(g.num_vertices, other.num_vertices) + 1))
        sources = [other.vertices[i] for i in rng.choice(other.num_vertices, m, replace=False)]
        targets = [g.vertices[i] for i in rng.choice(g.num_vertices, m, replace=False)]
        h = attach_graph(g, other, dict(zip(sources, targets))).graph
        before, after = _spectra_pair(g, krein, h, krein,
                                      j_max + other.num_vertices - m + 2)
        records.append(_chain_record(t, "attach", {"V0": other.num_vertices, "m": m},
                                     before, after, tol, j_max))
    return _report("attach", seed, tol, records)


def suite_insert_edge(trials: int = 20, seed: int = 0, tol: float | None = None,
                      j_max: int = 8) -> dict:
    tol = acceptance_tolerance() if tol is None else tol
    rng = np.random.default_rng(seed)
    krein = ConditionSpec.krein()
    records = []
    for t in range(trials):
        g = random_graph(rng, potential="maybe")
        u = g.vertices[int(rng.integers(0, g.num_vertices))]
        v = g.vertices[int(rng.integers(0, g.num_vertices))]
        h = insert_edge(g, u, v, float(rng.uniform(0.5, 1.5))).graph
        before, after = _spectra_pair(g, krein, h, krein, j_max + 2)
        records.append(_chain_record(t, "insert_edge", {"loop": u == v}, before, after, tol, j_max))
    return _report("insert-edge", seed, tol, records)


def suite_boundary(trials: int = 20, seed: int = 0, tol: float | None = None,
                   j_max: int = 8) -> dict:
    """Krein conditions on a vertex subset: shrinking the subset interlaces."""
    tol = acceptance_tolerance() if tol is None else tol
    rng = np.random.default_rng(seed)
    records = []
    for t in range(trials):
        g = random_graph(rng, potential="maybe", v_min=3)
        b = int(rng.integers(2, g.num_vertices + 1))
        bset = [g.vertices[i] for i in rng.choice(g.num_vertices, b, replace=False)]
        b_small = int(rng.integers(1, b))
        bsub = list(rng.choice(bset, b_small, replace=False))
        spec_b, spec_sub = _spectra_pair(g, ConditionSpec.krein_subset(bset),
                                         g, ConditionSpec.krein_subset(bsub),
                                         j_max + (b - b_small) + 2)
        kernels_ok = (sum(m for l, m in spec_b.pairs if l == 0.0) == b and
                      sum(m for l, m in spec_sub.pairs if l == 0.0) == b_small)
        rec = _chain_record(t, "boundary", {"k": b - b_small}, spec_b, spec_sub, tol,
                            j_max, {"passed_kernel": kernels_ok, "b": b, "b_small": b_small})
        rec["passed"] = rec["passed"] and kernels_ok
        records.append(rec)
    return _report("boundary", seed, tol, records)


# ---------------------------------------------------------------------------
# Counting, isoperimetric, resolvent, perturbation suites


def suite_counting(trials: int = 20, seed: int = 0, tol: float | None = None,
                   samples: int = 50) -> dict:
    """Counting-function sandwiches against Dirichlet and standard spectra,
    plus the two-sided Weyl bounds in the potential-free case."""
    tol = acceptance_tolerance() if tol is None else tol
    rng = np.random.default_rng(seed)
    records = []
    for t in range(trials):
        g = random_graph(rng, potential="maybe" if t % 2 else "none")
        q_free = is_potential_free(g)
        lam_max = lambda_max_for(g, 6)
        spec_d = eigenvalues(g, ConditionSpec.dirichlet(), lam_max)
        spec_s = eigenvalues(g, ConditionSpec.standard(), lam_max)
        spec_k = eigenvalues(g, ConditionSpec.krein(), lam_max)
        V = g.num_vertices
        worst = 0
        weyl_ok = True
        for lam in rng.uniform(0.0, lam_max * 0.98, samples):
            nd, ns, nk = spec_d.count(lam), spec_s.count(lam), spec_k.count(lam)
            breaches = [nd - nk, nk - (nd + V)]
            shift = V - 1 if q_free else V
            breaches += [ns - nk, nk - (ns + shift)]
            worst = max(worst, *breaches)
            if q_free:
                lo, hi = weyl_bounds(g, lam)
                weyl_ok = weyl_ok and (lo - 1e-9 <= nk <= hi + 1e-9)
        records.append({
            "trial": t, "potential_free": q_free, "worst_count_breach": worst,
            "weyl_ok": weyl_ok, "max_violation": float(max(0, worst)),
            "passed": worst <= 0 and weyl_ok,
        })
    return _report("counting", seed, tol, records)


def suite_isoperimetric(trials: int = 20, seed: int = 0, tol: float | None = None) -> dict:
    """Total-length lower bound: random graphs, the four equality cases, the
    strict 3-star, and strict dominance over the delta-loop for q != 0."""
    tol = acceptance_tolerance() if tol is None else tol
    rng = np.random.default_rng(seed)
    records = []
    for t in range(trials):
        g = random_graph(rng, potential="none")
        r = isoperimetric_check(g)
        records.append({"trial": t, "kind": "random", "margin": r.margin,
                        "max_violation": max(0.0, -r.margin), "passed": r.margin >= -tol})
    equality_cases = [
        ("interval", interval(1.0)),
        ("loop", loop(1.3)),
        ("2-cycle", cycle_graph([0.9, 0.9])),
        ("figure-8", flower_graph([1.1, 1.1])),
    ]
    for name, g in equality_cases:
        r = isoperimetric_check(g)
        records.append({"trial": name, "kind": "equality", "margin": abs(r.margin),
                        "max_violation": 0.0, "passed": abs(r.margin) < 1e-6})
    g3 = star_graph([1.0, 1.0, 1.0])
    r3 = isoperimetric_check(g3)
    rel = r3.margin / r3.lower_bound
    records.append({"trial": "3-star", "kind": "strict", "relative_margin": rel,
                    "max_violation": 0.0, "passed": rel > 1e-3})
    for t in range(min(trials, 10)):
        g = random_graph(rng, potential="nonzero", v_max=4, e_max=5)
        r = isoperimetric_check(g)
        records.append({"trial": t, "kind": "delta-loop",
                        "strict_margin": r.strict_margin,
                        "max_violation": max(0.0, -(r.strict_margin or 0.0)),
                        "passed": (r.strict_margin or 0.0) > 0.0})
    return _report("isoperimetric", seed, tol, records)


def suite_resolvent(trials: int = 10, seed: int = 0, tol: float | None = None) -> dict:
    """Resolvent-difference ranks at lambda = -1 and agreement of the direct
    Krein solve with the rank-V resolvent correction formula."""
    tol = acceptance_tolerance() if tol is None else tol
    rng = np.random.default_rng(seed)
    krein, dirich, std = ConditionSpec.krein(), ConditionSpec.dirichlet(), ConditionSpec.standard()
    records = []
    for t in range(trials):
        g = random_graph(rng, potential="none", v_max=5, e_max=7)
        V = g.num_vertices
        rkd = resolvent_difference_rank(g, krein, dirich, -1.0, rng=rng)
        rks = resolvent_difference_rank(g, krein, std, -1.0, rng=rng)
        gq = random_graph(rng, potential="nonzero", v_max=5, e_max=7)
        rkq = resolvent_difference_rank(gq, krein, std, -1.0, rng=rng)
        records.append({
            "trial": t, "V": V, "rank_krein_dirichlet": rkd, "rank_krein_standard": rks,
            "Vq": gq.num_vertices, "rank_krein_standard_q": rkq,
            "max_violation": 0.0,
            "passed": rkd == V and rks == V - 1 and rkq == gq.num_vertices,
        })
    from .edges import GraphGrid

    for t, g in enumerate([interval(1.0), loop(1.0), star_graph([1.0, 1.0, 1.0]),
                           random_graph(rng, potential="nonzero", v_max=4, e_max=5)]):
        grid = GraphGrid(g)
        worst = 0.0
        for _ in range(5):
            coeffs = rng.standard_normal((g.num_edges, 3))
            f = grid.sample([
                (lambda c: (lambda x: c[0] + c[1] * np.sin(x) + c[2] * x**2))(c)
                for c in coeffs
            ])
            direct = apply_resolvent(g, krein, -1.0, f).function
            via = krein_resolvent_via_formula(g, -1.0, f)
            worst = max(worst, (direct - via).norm())
        records.append({"trial": f"formula-{t}", "max_violation": worst, "passed": worst <= tol})
    return _report("resolvent", seed, tol, records)


def suite_perturbation(trials: int = 20, seed: int = 0, tol: float | None = None,
                       j_max: int = 8) -> dict:
    """Additive-potential comparison: the Krein operator of the perturbed
    minimal operator lies below the additively perturbed Krein operator,
    with the index-shifted reverse inequality."""
    tol = acceptance_tolerance() if tol is None else tol
    rng = np.random.default_rng(seed)
    records = []
    for t in range(trials):
        g = random_graph(rng, potential="nonzero", v_max=5, e_max=7)
        coupling = ConditionSpec.custom(discrete_laplacian(g).entries)
        d = kernel_dimension(g, coupling)
        spec_k, spec_c = _spectra_pair(g, ConditionSpec.krein(), g, coupling,
                                       j_max + g.num_vertices + 2)
        records.append(_chain_record(t, "perturbation", {"d": d}, spec_k, spec_c,
                                     tol, j_max, {"kernel_custom": d}))
    return _report("perturbation", seed, tol, records)


SUITES = {
    "gluing": suite_gluing,
    "degree2": suite_degree2,
    "lengthen": suite_lengthen,
    "attach": suite_attach,
    "insert-edge": suite_insert_edge,
    "boundary": suite_boundary,
    "counting": suite_counting,
    "isoperimetric": suite_isoperimetric,
    "resolvent": suite_resolvent,
    "perturbation": suite_perturbation,
}


def run_suite(name: str, trials: int = 20, seed: int = 0, tol: float | None = None) -> dict:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](trials=trials, seed=seed, tol=tol)
