"""Graph complexes: the weak Lie operad, its PROP, and the modular complexes.

Every complex here is the dual of edge contraction.  A basis element is a
canonical graph together with the generator of its orientation line fixed by
the graph's stored ordering data; the coefficient of ``Γ'`` in ``dΓ`` is the
coefficient of ``Γ`` in ``∂Γ'``, where ``∂`` contracts one edge at a time.

Families:

``wlie``      directed trees with ``n`` inputs (``WLie(n)``), inset orientation
``wlie_prop`` directed ``(n, m)``-graphs (``WLIE(n, m)``), inset orientation
``F``         connected stable graphs of genus ``g`` with ``n`` legs, all vertex
              genera 0, vertedge orientation
``F_tilde``   the same without connectivity
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from . import graph_kit as gk
from .exact_core import as_scalar, rank

FAMILY_CONVENTION = {"wlie": "inset", "wlie_prop": "inset", "F": "vertedge", "F_tilde": "vertedge"}


class FamilyMismatchError(ValueError):
    pass


def graph_degree(g: gk.OrientedGraph, family: str) -> int:
    if family in ("wlie", "wlie_prop"):
        return sum(2 - len(g.in_flags(v)) for v in range(g.n_vertices))
    return g.n_vertices


@dataclass
class ChainBasis:
    family: str
    params: dict
    by_degree: dict[int, list[gk.OrientedGraph]]
    zero_classes: list[gk.OrientedGraph]
    convention: str
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for k, graphs in self.by_degree.items():
            self._index[k] = {gk.canonical_key(g): i for i, g in enumerate(graphs)}

    @property
    def degrees(self) -> list[int]:
        return sorted(self.by_degree)

    def dim(self, k: int) -> int:
        return len(self.by_degree.get(k, []))

    def index(self, k: int, g: gk.OrientedGraph) -> int | None:
        return self._index.get(k, {}).get(gk.canonical_key(g))

    def total_dim(self) -> int:
        return sum(len(v) for v in self.by_degree.values())


def chain_space(family: str, n: int = 0, m: int = 0, g: int = 0, max_vertices: int = 8,
                max_class_size: int = 200_000) -> ChainBasis:
    """Canonical graphs of the family grouped by degree; zero-classes set aside."""
    if family == "wlie":
        spec = gk.GraphClassSpec("tree", legs_in=n, max_vertices=max_vertices, max_class_size=max_class_size)
    elif family == "wlie_prop":
        spec = gk.GraphClassSpec("prop_graph", legs_in=n, legs_out=m, max_vertices=max_vertices,
                                 max_class_size=max_class_size)
    elif family in ("F", "F_tilde"):
        spec = gk.GraphClassSpec("stable_modular", legs_in=n, genus=g, max_vertices=max_vertices,
                                 connected=family == "F", max_class_size=max_class_size)
    else:
        raise ValueError(f"unknown family {family!r}")
    graphs = gk.enumerate_graphs(spec)
    conv = FAMILY_CONVENTION[family]
    by_degree: dict[int, list] = defaultdict(list)
    zeros = []
    for gr in graphs:
        if gk.is_zero_class(gr, conv):
            zeros.append(gr)
        else:
            by_degree[graph_degree(gr, family)].append(gr)
    params = {"n": n, "m": m, "g": g, "max_vertices": max_vertices}
    return ChainBasis(family, params, dict(by_degree), zeros, conv)


def boundary(graph: gk.OrientedGraph, basis: ChainBasis) -> dict[tuple[int, int], Fraction]:
    """``∂Γ``: signed sum over non-loop edge contractions, as {(degree, index): coef}."""
    out: dict = defaultdict(Fraction)
    for e in range(len(graph.edges)):
        if graph.is_loop(e):
            continue
        h, s = gk.contract_edge(graph, e, basis.convention)
        c, t = gk.canonical_form(h, basis.convention)
        k = graph_degree(c, basis.family)
        idx = basis.index(k, c)
        if idx is None:
            continue  # zero-class or outside the vertex bound
        out[(k, idx)] += s * t
    return {key: v for key, v in out.items() if v}


@dataclass(frozen=True)
class ExactMatrix:
    """Sparse exact matrix; ``rows[i]`` maps column index to entry."""

    n_rows: int
    n_cols: int
    rows: tuple[tuple[tuple[int, Fraction], ...], ...]

    @classmethod
    def from_dicts(cls, n_rows: int, n_cols: int, rows: Sequence[Mapping[int, object]]) -> "ExactMatrix":
        return cls(n_rows, n_cols, tuple(tuple(sorted((c, as_scalar(v)) for c, v in r.items() if v)) for r in rows))

    def row_dicts(self) -> list[dict[int, Fraction]]:
        return [dict(r) for r in self.rows]

    def rank(self) -> int:
        return rank(self.row_dicts())

    def __matmul__(self, other: "ExactMatrix") -> "ExactMatrix":
        if self.n_cols != other.n_rows:
            raise ValueError("shape mismatch")
        other_rows = other.row_dicts()
        out = []
        for r in self.rows:
            acc: dict = defaultdict(Fraction)
            for k, v in r:
                for c, w in other_rows[k].items():
                    acc[c] += v * w
            out.append(acc)
        return ExactMatrix.from_dicts(self.n_rows, other.n_cols, out)

    def is_zero(self) -> bool:
        return all(not r for r in self.rows)

    def nnz(self) -> int:
        return sum(len(r) for r in self.rows)

    def entry(self, i: int, j: int) -> Fraction:
        return dict(self.rows[i]).get(j, Fraction(0))

    def to_triplets(self) -> dict:
        return {
            "shape": [self.n_rows, self.n_cols],
            "entries": [[i, j, str(v)] for i, r in enumerate(self.rows) for j, v in r],
        }


def differential_matrix(basis: ChainBasis, k: int) -> ExactMatrix:
    """Matrix of ``d: C_k → C_{k+1}``; row ``i`` is the ``i``-th graph of ``C_{k+1}``."""
    src = basis.by_degree.get(k, [])
    tgt = basis.by_degree.get(k + 1, [])
    rows = []
    for gr in tgt:
        row = {}
        for (deg, idx), v in boundary(gr, basis).items():
            if deg != k:
                raise AssertionError(f"contraction changed degree by {k + 1 - deg}")
            row[idx] = v
        rows.append(row)
    return ExactMatrix.from_dicts(len(tgt), len(src), rows)


def d_squared(basis: ChainBasis) -> dict[int, ExactMatrix]:
    """``d_{k+1} d_k`` for every degree with both maps present."""
    out = {}
    for k in basis.degrees:
        if basis.dim(k + 1) and basis.dim(k + 2):
            out[k] = differential_matrix(basis, k + 1) @ differential_matrix(basis, k)
    return out


@dataclass(frozen=True)
class RankRow:
    degree: int
    dim: int
    rank_d: int
    betti: int


def cohomology_ranks(basis: ChainBasis) -> list[RankRow]:
    ranks = {}
    lo, hi = min(basis.degrees, default=0), max(basis.degrees, default=-1)
    for k in range(lo - 1, hi + 1):
        ranks[k] = differential_matrix(basis, k).rank() if basis.dim(k) and basis.dim(k + 1) else 0
    out = []
    for k in range(lo, hi + 1):
        dim = basis.dim(k)
        out.append(RankRow(k, dim, ranks[k], dim - ranks[k] - ranks.get(k - 1, 0)))
    return out


def rank_table_csv(basis: ChainBasis, rows: Sequence[RankRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["family", "n", "m", "g", "degree", "dim", "rank_d", "betti"])
    p = basis.params
    for r in rows:
        w.writerow([basis.family, p["n"], p["m"], p["g"], r.degree, r.dim, r.rank_d, r.betti])
    return buf.getvalue()


# ---------------------------------------------------------------- chains


@dataclass(frozen=True)
class GraphChain:
    """Linear combination of oriented graphs, stored on canonical representatives."""

    family: str
    terms: tuple[tuple[tuple, Fraction], ...]
    graphs: Mapping = field(default_factory=dict, compare=False, hash=False)

    @classmethod
    def from_graphs(cls, family: str, items: Sequence[tuple[object, gk.OrientedGraph]]) -> "GraphChain":
        conv = FAMILY_CONVENTION[family]
        acc: dict = defaultdict(Fraction)
        graphs = {}
        for c, gr in items:
            can, s = gk.canonical_form(gr, conv)
            if can.zero_class:
                continue
            key = gk.canonical_key(can)
            acc[key] += as_scalar(c) * s
            graphs[key] = can
        terms = tuple(sorted(((k, v) for k, v in acc.items() if v), key=lambda kv: repr(kv[0])))
        return cls(family, terms, {k: graphs[k] for k, _ in terms})

    def items(self) -> list[tuple[Fraction, gk.OrientedGraph]]:
        return [(v, self.graphs[k]) for k, v in self.terms]

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "GraphChain") -> "GraphChain":
        return GraphChain.from_graphs(self.family, self.items() + other.items())

    def scale(self, c) -> "GraphChain":
        return GraphChain.from_graphs(self.family, [(c * v, g) for v, g in self.items()])

    def __sub__(self, other: "GraphChain") -> "GraphChain":
        return self + other.scale(-1)

    def degree(self) -> int:
        degs = {graph_degree(g, self.family) for _, g in self.items()}
        if len(degs) > 1:
            raise ValueError("chain is not homogeneous")
        return degs.pop() if degs else 0


def expansions(graph: gk.OrientedGraph, family: str) -> list[gk.OrientedGraph]:
    if graph.directed:
        return list(gk.directed_expansions(graph))
    return list(gk.undirected_expansions(graph, 3, True))


def chain_differential(chain: GraphChain) -> GraphChain:
    """``d`` on a chain, as the exact transpose of edge contraction.

    Candidates are the one-vertex expansions of each term; the coefficient of a
    candidate ``Γ'`` is read off from ``∂Γ'``.
    """
    conv = FAMILY_CONVENTION[chain.family]
    coeff = {gk.canonical_key(g): c for c, g in chain.items()}
    candidates = {}
    for _, gr in chain.items():
        for h in expansions(gr, chain.family):
            can, _ = gk.canonical_form(h, conv)
            if not can.zero_class:
                candidates.setdefault(gk.canonical_key(can), can)
    items = []
    for key, cand in sorted(candidates.items(), key=lambda kv: repr(kv[0])):
        total = Fraction(0)
        for e in range(len(cand.edges)):
            if cand.is_loop(e):
                continue
            back, s = gk.contract_edge(cand, e, conv)
            can, t = gk.canonical_form(back, conv)
            k = gk.canonical_key(can)
            if k in coeff:
                total += coeff[k] * s * t
        if total:
            items.append((total, cand))
    return GraphChain.from_graphs(chain.family, items)


def graft_chain(a: GraphChain, b: GraphChain, matching, relabel_legs: Mapping | None = None) -> GraphChain:
    """Bilinear extension of :func:`graph_kit.graft` (host ``a``, scion ``b``)."""
    if a.family != b.family:
        raise FamilyMismatchError(f"cannot graft {a.family} with {b.family}")
    items = []
    for ca, ga in a.items():
        for cb, gb in b.items():
            items.append((ca * cb, gk.graft(ga, gb, matching, relabel_legs)))
    return GraphChain.from_graphs(a.family, items)


def compose_chain(a: GraphChain, b: GraphChain, i: int) -> GraphChain:
    """Operadic ``a ∘_i b`` for tree chains."""
    if a.family != b.family:
        raise FamilyMismatchError(f"cannot compose {a.family} with {b.family}")
    items = [(ca * cb, gk.operad_compose(ga, gb, i)) for ca, ga in a.items() for cb, gb in b.items()]
    return GraphChain.from_graphs(a.family, items)


def juxtapose_chain(a: GraphChain, b: GraphChain) -> GraphChain:
    items = [(ca * cb, gk.juxtapose(ga, gb).with_family("prop_graph")) for ca, ga in a.items() for cb, gb in b.items()]
    return GraphChain.from_graphs("wlie_prop", items)


# ----------------------------------------------------- tree part of F


def tree_to_modular(tree: gk.OrientedGraph) -> gk.OrientedGraph:
    """Forget directions: inputs become legs ``1..n-1``, the root becomes leg ``n``."""
    n_in = len(tree.legs_in())
    legs = []
    for f, kind, lab in tree.legs:
        legs.append((f, "leg", lab if kind == "in" else n_in + 1))
    g, _ = gk.build_graph(tree.genus, tree.flag_order, tree.edges, legs, (), False, "stable_modular")
    return g


def suspension_dictionary(n: int) -> dict:
    """Identify ``WLie(n-1)`` with the tree part ``F((0, n))`` graph by graph.

    Returns ``{wlie_degree: (F_degree, permutation, signs)}`` where the ``j``-th
    WLie basis graph maps to ``signs[j]`` times F basis graph ``permutation[j]``.
    The sign is the natural ``det(In-flags) → det(Vert) ⊗ ⊗ OR(e)`` transport.
    """
    wl = chain_space("wlie", n=n - 1)
    fb = chain_space("F", n=n, g=0)
    out = {}
    for k in wl.degrees:
        perm, signs = [], []
        for tree in wl.by_degree[k]:
            s_dir = gk.transport_orientation(tree, "inset", "vertedge")
            mod = tree_to_modular(tree)
            can, s_can = gk.canonical_form(mod, "vertedge")
            fk = graph_degree(can, "F")
            idx = fb.index(fk, can)
            perm.append(idx)
            signs.append(s_dir * s_can)
        out[k] = (k + n - 2, perm, signs)
    return out


def check_suspension(n: int) -> dict[int, int]:
    """Per-degree global sign ``ε_k`` with ``d_F D = ε_k D d_WLie``; raises if none exists."""
    wl = chain_space("wlie", n=n - 1)
    fb = chain_space("F", n=n, g=0)
    dic = suspension_dictionary(n)
    eps = {}
    for k in wl.degrees:
        if k + 1 not in dic:
            continue
        dw = differential_matrix(wl, k)
        fk = dic[k][0]
        df = differential_matrix(fb, fk)
        _, p0, s0 = dic[k]
        _, p1, s1 = dic[k + 1]
        ratio = None
        for i in range(dw.n_rows):
            for j in range(dw.n_cols):
                lhs = dw.entry(i, j) * s1[i] * s0[j]
                rhs = df.entry(p1[i], p0[j])
                if lhs == 0 and rhs == 0:
                    continue
                if lhs == 0 or rhs == 0:
                    raise AssertionError(f"support mismatch at degree {k}")
                r = rhs / lhs
                if ratio is None:
                    ratio = r
                elif r != ratio:
                    raise AssertionError(f"no global sign at degree {k}")
        eps[k] = int(ratio) if ratio is not None else 1
    return eps
