"""Graphs with legs, genus labels and explicit orientation data.

A graph is stored flag by flag.  ``flag_order[v]`` lists the flags at vertex
``v``; the concatenation of these lists numbers the flags ``0..F-1``.  Edges
are ordered pairs of flags, legs attach a ``(kind, label)`` to one flag, and
``through`` records vertex-free input→output strands of PROP graphs.

Orientation is never stored as a bare sign.  The ordering data already in the
graph (vertex order, edge order, flag order inside each edge and each vertex)
fixes a generator of each orientation line:

``inset``
    ``⊗_v det In(v)`` for directed graphs, realised as the determinant of the
    set of all input flags ordered vertex by vertex.
``vertedge``
    ``det(Vert) ⊗ ⊗_e OR(e)``: vertex order and edge directions.
``edgecycle``
    ``det(Ed) ⊗ det(H_1)``: edge order and the fundamental-cycle basis of a
    spanning tree (connected graphs only).
``flag``
    ``⊗_v det Flag(v)``: cyclic orders at the vertices (odd valencies only).
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

from .exact_core import determinant, perm_sign

CONVENTIONS = ("inset", "edgecycle", "vertedge", "flag")
FAMILIES = ("tree", "prop_graph", "stable_modular", "trivalent_closed", "generic")
DEFAULT_CONVENTION = {
    "tree": "inset",
    "prop_graph": "inset",
    "stable_modular": "vertedge",
    "trivalent_closed": "flag",
    "generic": "vertedge",
}


class GraphError(ValueError):
    pass


class LoopContractionError(GraphError):
    """Contraction of a self-loop was requested."""


class UnsupportedConversionError(GraphError):
    pass


class GraftError(GraphError):
    pass


class ResourceGuardError(RuntimeError):
    """A configured size bound was exceeded."""


# ----------------------------------------------------------------- the graph


@dataclass(frozen=True)
class OrientedGraph:
    genus: tuple[int, ...]
    flag_order: tuple[tuple[int, ...], ...]
    edges: tuple[tuple[int, int], ...]
    legs: tuple[tuple[int, str, int], ...] = ()
    through: tuple[tuple[int, int], ...] = ()
    directed: bool = False
    family: str = "generic"
    zero_class: bool = field(default=False, compare=False)

    def __post_init__(self):
        flags = [f for fl in self.flag_order for f in fl]
        if sorted(flags) != list(range(len(flags))):
            raise GraphError("flags must be numbered 0..F-1")
        if len(self.genus) != len(self.flag_order):
            raise GraphError("one genus label per vertex")
        used = [f for e in self.edges for f in e] + [leg[0] for leg in self.legs]
        if sorted(used) != list(range(len(flags))):
            raise GraphError("every flag must belong to exactly one edge or leg")
        if self.directed:
            outs = [0] * len(self.flag_order)
            fv = self.flag_vertex
            for a, _ in self.edges:
                outs[fv[a]] += 1
            for f, kind, _ in self.legs:
                if kind == "out":
                    outs[fv[f]] += 1
                elif kind != "in":
                    raise GraphError(f"directed graphs need in/out legs, got {kind!r}")
            if any(c != 1 for c in outs):
                raise GraphError("each vertex needs exactly one outgoing flag")

    # basic structure
    @property
    def n_vertices(self) -> int:
        return len(self.flag_order)

    @property
    def n_flags(self) -> int:
        return sum(len(fl) for fl in self.flag_order)

    @property
    def flag_vertex(self) -> tuple[int, ...]:
        out = [0] * self.n_flags
        for v, fl in enumerate(self.flag_order):
            for f in fl:
                out[f] = v
        return tuple(out)

    def valency(self, v: int) -> int:
        return len(self.flag_order[v])

    def leg_of(self) -> dict[int, tuple[str, int]]:
        return {f: (kind, label) for f, kind, label in self.legs}

    def legs_in(self) -> list[int]:
        return sorted(lab for _, kind, lab in self.legs if kind == "in") + sorted(
            i for i, _ in self.through
        )

    def legs_out(self) -> list[int]:
        return sorted(lab for _, kind, lab in self.legs if kind == "out") + sorted(
            o for _, o in self.through
        )

    def out_flag(self, v: int) -> int:
        tails = {a for a, _ in self.edges}
        outs = {f for f, kind, _ in self.legs if kind == "out"}
        for f in self.flag_order[v]:
            if f in tails or f in outs:
                return f
        raise GraphError(f"vertex {v} has no outgoing flag")

    def in_flags(self, v: int) -> tuple[int, ...]:
        """``In(v)`` in its stored order (directed graphs)."""
        o = self.out_flag(v)
        return tuple(f for f in self.flag_order[v] if f != o)

    def is_loop(self, e: int) -> bool:
        a, b = self.edges[e]
        fv = self.flag_vertex
        return fv[a] == fv[b]

    def has_self_loop(self) -> bool:
        return any(self.is_loop(e) for e in range(len(self.edges)))

    def components(self) -> list[list[int]]:
        parent = list(range(self.n_vertices))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        fv = self.flag_vertex
        for a, b in self.edges:
            ra, rb = find(fv[a]), find(fv[b])
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        comps = defaultdict(list)
        for v in range(self.n_vertices):
            comps[find(v)].append(v)
        return [comps[k] for k in sorted(comps)]

    def first_betti(self) -> int:
        return len(self.edges) - self.n_vertices + len(self.components())

    def total_genus(self) -> int:
        """``dim H^1 + Σ g(v)``."""
        return self.first_betti() + sum(self.genus)

    def is_stable(self) -> bool:
        return all(2 * (g - 1) + self.valency(v) > 0 for v, g in enumerate(self.genus))

    def degree(self) -> int:
        """``Σ_v (2 - |In(v)|)`` for directed graphs, ``|Vert|`` otherwise."""
        if self.directed:
            return sum(2 - len(self.in_flags(v)) for v in range(self.n_vertices))
        return self.n_vertices

    def with_family(self, family: str) -> "OrientedGraph":
        return _replace(self, family=family)

    # serialization
    def to_json(self) -> dict:
        return {
            "family": self.family,
            "directed": self.directed,
            "vertices": [{"id": v, "g": g} for v, g in enumerate(self.genus)],
            "flags": [list(fl) for fl in self.flag_order],
            "edges": [list(e) for e in self.edges],
            "legs_in": [[f, lab] for f, kind, lab in self.legs if kind == "in"],
            "legs_out": [[f, lab] for f, kind, lab in self.legs if kind == "out"],
            "legs": [[f, lab] for f, kind, lab in self.legs if kind == "leg"],
            "through": [list(p) for p in self.through],
            "orientation": {
                "edge_order": list(range(len(self.edges))),
                "in_order": {
                    str(v): list(self.in_flags(v) if self.directed else self.flag_order[v])
                    for v in range(self.n_vertices)
                },
            },
        }

    @classmethod
    def from_json(cls, data: dict) -> "OrientedGraph":
        legs = [(f, "in", lab) for f, lab in data.get("legs_in", [])]
        legs += [(f, "out", lab) for f, lab in data.get("legs_out", [])]
        legs += [(f, "leg", lab) for f, lab in data.get("legs", [])]
        return cls(
            genus=tuple(v.get("g", 0) for v in data["vertices"]),
            flag_order=tuple(tuple(fl) for fl in data["flags"]),
            edges=tuple(tuple(e) for e in data["edges"]),
            legs=tuple(legs),
            through=tuple(tuple(p) for p in data.get("through", [])),
            directed=data.get("directed", False),
            family=data.get("family", "generic"),
        )


def _replace(g: OrientedGraph, **kw) -> OrientedGraph:
    d = dict(
        genus=g.genus,
        flag_order=g.flag_order,
        edges=g.edges,
        legs=g.legs,
        through=g.through,
        directed=g.directed,
        family=g.family,
    )
    d.update(kw)
    return OrientedGraph(**d)


def build_graph(
    genus: Sequence[int],
    flag_order: Sequence[Sequence],
    edges: Sequence[tuple],
    legs: Sequence[tuple] = (),
    through: Sequence[tuple[int, int]] = (),
    directed: bool = False,
    family: str = "generic",
) -> tuple[OrientedGraph, dict]:
    """Build a graph from arbitrary hashable flag names.

    Flags are renumbered vertex by vertex in ``flag_order`` order.  Returns the
    graph and the map from the given flag names to the new numbers.
    """
    rename = {}
    for fl in flag_order:
        for f in fl:
            if f in rename:
                raise GraphError(f"flag {f!r} listed twice")
            rename[f] = len(rename)
    g = OrientedGraph(
        genus=tuple(genus),
        flag_order=tuple(tuple(rename[f] for f in fl) for fl in flag_order),
        edges=tuple((rename[a], rename[b]) for a, b in edges),
        legs=tuple((rename[f], kind, lab) for f, kind, lab in legs),
        through=tuple(sorted(tuple(p) for p in through)),
        directed=directed,
        family=family,
    )
    return g, rename


# --------------------------------------------------------------- constructors


def corolla(n_in: int, out_label: int = 1, family: str = "tree") -> OrientedGraph:
    """One vertex with inputs ``1..n_in`` and one output (the generator β_n)."""
    flags = [("i", k) for k in range(1, n_in + 1)] + [("o",)]
    legs = [(("i", k), "in", k) for k in range(1, n_in + 1)] + [(("o",), "out", out_label)]
    g, _ = build_graph([0], [flags], [], legs, directed=True, family=family)
    return g


def wheel_corolla(labels: Sequence[int], family: str = "prop_graph") -> OrientedGraph:
    """One vertex whose output feeds back into its last input (``tr β``)."""
    flags = [("i", k) for k in labels] + [("loop_in",), ("loop_out",)]
    legs = [(("i", k), "in", k) for k in labels]
    g, _ = build_graph([0], [flags], [(("loop_out",), ("loop_in",))], legs, directed=True, family=family)
    return g


def modular_corolla(n_legs: int, loops: int = 0, genus: int = 0) -> OrientedGraph:
    """One vertex with legs ``1..n_legs``, ``loops`` self-loops and a genus label."""
    flags = [("l", k) for k in range(1, n_legs + 1)]
    edges = []
    for j in range(loops):
        flags += [("a", j), ("b", j)]
        edges.append((("a", j), ("b", j)))
    legs = [(("l", k), "leg", k) for k in range(1, n_legs + 1)]
    g, _ = build_graph([genus], [flags], edges, legs, family="stable_modular")
    return g


def undirected_graph(
    n_vertices: int,
    edge_list: Sequence[tuple[int, int]],
    leg_list: Sequence[tuple[int, int]] = (),
    genus: Sequence[int] | None = None,
    family: str = "generic",
) -> OrientedGraph:
    """Graph from vertex pairs; ``leg_list`` holds ``(vertex, label)`` pairs.

    Flags at each vertex are ordered edge flags first (in edge order), then legs.
    """
    at = [[] for _ in range(n_vertices)]
    edges = []
    for k, (a, b) in enumerate(edge_list):
        at[a].append(("e", k, 0))
        at[b].append(("e", k, 1))
        edges.append((("e", k, 0), ("e", k, 1)))
    legs = []
    for v, lab in leg_list:
        at[v].append(("l", lab))
        legs.append((("l", lab), "leg", lab))
    g, _ = build_graph(genus or [0] * n_vertices, at, edges, legs, family=family)
    return g


def theta_graph() -> OrientedGraph:
    return undirected_graph(2, [(0, 1)] * 3, family="trivalent_closed")


def k4_graph() -> OrientedGraph:
    return undirected_graph(4, list(itertools.combinations(range(4), 2)), family="trivalent_closed")


# ------------------------------------------------------- canonical encodings


def _vertex_invariants(g: OrientedGraph, strict: bool) -> list:
    fv = g.flag_vertex
    legs = defaultdict(list)
    for f, kind, lab in g.legs:
        legs[fv[f]].append((kind, lab) if strict else (kind,))
    loops = [0] * g.n_vertices
    for a, b in g.edges:
        if fv[a] == fv[b]:
            loops[fv[a]] += 1
    inv = []
    for v in range(g.n_vertices):
        base = (g.genus[v], g.valency(v), loops[v], tuple(sorted(legs[v])))
        if g.directed:
            base += (len(g.in_flags(v)),)
        inv.append(base)
    return inv


def _refine(g: OrientedGraph, strict: bool) -> list[int]:
    """Isomorphism-invariant vertex colours by iterated neighbourhood refinement."""
    fv = g.flag_vertex
    colors = _vertex_invariants(g, strict)
    nbrs = defaultdict(list)
    for a, b in g.edges:
        u, w = fv[a], fv[b]
        if u == w:
            continue
        nbrs[u].append((w, 1))
        nbrs[w].append((u, -1 if g.directed else 1))
    palette = {c: i for i, c in enumerate(sorted(set(colors)))}
    ranks = [palette[c] for c in colors]
    while True:
        sig = [
            (ranks[v], tuple(sorted((ranks[w], d) for w, d in nbrs[v])))
            for v in range(g.n_vertices)
        ]
        palette = {c: i for i, c in enumerate(sorted(set(sig)))}
        new = [palette[s] for s in sig]
        if len(set(new)) == len(set(ranks)):
            return new
        ranks = new


def _encode(g: OrientedGraph, pos: Sequence[int], strict: bool, inv: list) -> tuple:
    fv = g.flag_vertex
    n = g.n_vertices
    order = [0] * n
    for v, p in enumerate(pos):
        order[p] = v
    verts = tuple(inv[order[p]] for p in range(n))
    keys = []
    for a, b in g.edges:
        pa, pb = pos[fv[a]], pos[fv[b]]
        keys.append((pa, pb) if g.directed else (min(pa, pb), max(pa, pb)))
    thr = tuple(g.through) if strict else (len(g.through),)
    return (verts, tuple(sorted(keys)), thr)


def _optimal_orderings(g: OrientedGraph, strict: bool = True) -> tuple[tuple, list[tuple[int, ...]]]:
    """Minimal encoding and every colour-respecting vertex ordering attaining it."""
    colors = _refine(g, strict)
    inv = _vertex_invariants(g, strict)
    classes = defaultdict(list)
    for v, c in enumerate(colors):
        classes[c].append(v)
    class_list = [classes[c] for c in sorted(classes)]
    best = None
    winners: list[tuple[int, ...]] = []
    for choice in itertools.product(*(itertools.permutations(cl) for cl in class_list)):
        order = [v for block in choice for v in block]
        pos = [0] * g.n_vertices
        for p, v in enumerate(order):
            pos[v] = p
        enc = _encode(g, pos, strict, inv)
        if best is None or enc < best:
            best, winners = enc, [tuple(pos)]
        elif enc == best:
            winners.append(tuple(pos))
    if best is None:  # no vertices
        best = _encode(g, [], strict, inv)
        winners = [()]
    return best, winners


@lru_cache(maxsize=400_000)
def canonical_key(g: OrientedGraph) -> tuple:
    """Hashable isomorphism invariant (complete for labelled legs)."""
    return (g.directed,) + _optimal_orderings(g, True)[0]


# --------------------------------------------------------------- isomorphisms


def _edge_classes(g: OrientedGraph, pos: Sequence[int]) -> dict:
    fv = g.flag_vertex
    classes = defaultdict(list)
    for e, (a, b) in enumerate(g.edges):
        pa, pb = pos[fv[a]], pos[fv[b]]
        key = (pa, pb) if g.directed else (min(pa, pb), max(pa, pb))
        classes[key].append(e)
    return classes


def _leg_classes(g: OrientedGraph, pos: Sequence[int], strict: bool) -> dict:
    fv = g.flag_vertex
    classes = defaultdict(list)
    for f, kind, lab in g.legs:
        classes[(pos[fv[f]], kind, lab if strict else None)].append(f)
    return classes


def _flag_maps(g: OrientedGraph, pg, h: OrientedGraph, ph, strict: bool, first_only: bool) -> Iterator[dict]:
    """Flag bijections g→h over the vertex bijection given by positions."""
    fvg, fvh = g.flag_vertex, h.flag_vertex
    eg, eh = _edge_classes(g, pg), _edge_classes(h, ph)
    choices = []
    for key, es in sorted(eg.items()):
        targets = eh[key]
        loop = key[0] == key[1] and not g.directed
        opts = []
        for perm in itertools.permutations(targets):
            flips = itertools.product((False, True), repeat=len(es)) if loop else [(False,) * len(es)]
            for flip in flips:
                m = {}
                for e, t, fl in zip(es, perm, flip):
                    a, b = g.edges[e]
                    c, d = h.edges[t]
                    if not g.directed and not loop:
                        # match flags by their (mapped) vertex
                        if pg[fvg[a]] != ph[fvh[c]]:
                            c, d = d, c
                    elif fl:
                        c, d = d, c
                    m[a], m[b] = c, d
                opts.append(m)
                if first_only:
                    break
            if first_only and opts:
                break
        choices.append(opts)
    lg, lh = _leg_classes(g, pg, strict), _leg_classes(h, ph, strict)
    for key, fs in sorted(lg.items(), key=lambda kv: repr(kv[0])):
        targets = lh[key]
        opts = []
        for perm in itertools.permutations(targets):
            opts.append(dict(zip(fs, perm)))
            if first_only:
                break
        choices.append(opts)
    for combo in itertools.product(*choices):
        m = {}
        for part in combo:
            m.update(part)
        yield m
        if first_only:
            return


@dataclass(frozen=True)
class Isomorphism:
    """Vertex map and flag map between two graphs."""

    vertex_map: tuple[int, ...]
    flag_map: tuple[int, ...]


def isomorphisms(g: OrientedGraph, h: OrientedGraph, strict: bool = True, first_only: bool = False) -> list[Isomorphism]:
    if g.directed != h.directed or g.n_vertices != h.n_vertices or g.n_flags != h.n_flags:
        return []
    enc_g, orders_g = _optimal_orderings(g, strict)
    enc_h, orders_h = _optimal_orderings(h, strict)
    if enc_g != enc_h:
        return []
    ph = orders_h[0]
    inv_h = [0] * h.n_vertices
    for v, p in enumerate(ph):
        inv_h[p] = v
    out = []
    for pg in orders_g:
        vmap = tuple(inv_h[pg[v]] for v in range(g.n_vertices))
        for fm in _flag_maps(g, pg, h, ph, strict, first_only):
            out.append(Isomorphism(vmap, tuple(fm[f] for f in range(g.n_flags))))
            if first_only:
                return out
    return out


def are_isomorphic(g: OrientedGraph, h: OrientedGraph) -> bool:
    return bool(isomorphisms(g, h, True, first_only=True))


# ----------------------------------------------------------- orientation signs


def in_flag_sequence(g: OrientedGraph) -> list[int]:
    return [f for v in range(g.n_vertices) for f in g.in_flags(v)]


def _seq_sign(mapped: Sequence[int], reference: Sequence[int]) -> int:
    where = {f: i for i, f in enumerate(reference)}
    return perm_sign([where[f] for f in mapped])


def _edge_index(g: OrientedGraph) -> dict[int, tuple[int, int]]:
    """flag -> (edge index, end 0/1)."""
    out = {}
    for e, (a, b) in enumerate(g.edges):
        out[a] = (e, 0)
        out[b] = (e, 1)
    return out


def cycle_basis(g: OrientedGraph) -> list[dict[int, int]]:
    """Fundamental cycles of the BFS spanning forest, in edge coordinates.

    Edges are traversed from their first flag to their second.  The basis is
    indexed by the non-tree edges in edge order; cycle ``j`` contains its own
    non-tree edge with coefficient ``+1``.
    """
    fv = g.flag_vertex
    adj = defaultdict(list)
    for e, (a, b) in enumerate(g.edges):
        adj[fv[a]].append((e, fv[b], 1))
        adj[fv[b]].append((e, fv[a], -1))
    parent: dict[int, tuple[int, int, int] | None] = {}
    tree = set()
    for root in range(g.n_vertices):
        if root in parent:
            continue
        parent[root] = None
        queue = [root]
        while queue:
            u = queue.pop(0)
            for e, w, d in sorted(adj[u]):
                if w not in parent:
                    parent[w] = (u, e, d)
                    tree.add(e)
                    queue.append(w)

    def path_to_root(v):
        # edge coefficients of the tree path root -> v
        coeffs = defaultdict(int)
        while parent[v] is not None:
            u, e, d = parent[v]
            coeffs[e] += d
            v = u
        return coeffs

    basis = []
    for e, (a, b) in enumerate(g.edges):
        if e in tree:
            continue
        z = defaultdict(int)
        z[e] += 1
        for k, c in path_to_root(fv[a]).items():
            z[k] += c
        for k, c in path_to_root(fv[b]).items():
            z[k] -= c
        basis.append({k: c for k, c in z.items() if c})
    return basis


def _spanning_tree(g: OrientedGraph) -> tuple[list[int], list[int]]:
    """(tree edges, non-tree edges) for the forest used by :func:`cycle_basis`."""
    fv = g.flag_vertex
    adj = defaultdict(list)
    for e, (a, b) in enumerate(g.edges):
        adj[fv[a]].append((e, fv[b]))
        adj[fv[b]].append((e, fv[a]))
    seen = set()
    tree = []
    for root in range(g.n_vertices):
        if root in seen:
            continue
        seen.add(root)
        queue = [root]
        while queue:
            u = queue.pop(0)
            for e, w in sorted(adj[u]):
                if w not in seen:
                    seen.add(w)
                    tree.append(e)
                    queue.append(w)
    tset = set(tree)
    return sorted(tset), [e for e in range(len(g.edges)) if e not in tset]


def _require_odd_valency(g: OrientedGraph) -> None:
    # det Flag(v) is an odd line exactly when |Flag(v)| is odd; only then does
    # the unordered product over vertices absorb det(Vert)
    if any(g.valency(v) % 2 == 0 for v in range(g.n_vertices)):
        raise UnsupportedConversionError("flag convention needs every vertex of odd valency")


def orientation_sign(g: OrientedGraph, h: OrientedGraph, iso: Isomorphism, convention: str) -> int:
    """Sign by which ``iso`` carries g's reference generator to h's."""
    fm = iso.flag_map
    if convention == "inset":
        return _seq_sign([fm[f] for f in in_flag_sequence(g)], in_flag_sequence(h))
    if convention == "vertedge":
        s = perm_sign(iso.vertex_map)
        h_edges = set(h.edges)
        for a, b in g.edges:
            if (fm[a], fm[b]) not in h_edges:
                s = -s
        return s
    if convention == "flag":
        _require_odd_valency(g)
        s = 1
        for v in range(g.n_vertices):
            s *= _seq_sign([fm[f] for f in g.flag_order[v]], h.flag_order[iso.vertex_map[v]])
        return s
    if convention == "edgecycle":
        eg = _edge_index(g)
        eh = _edge_index(h)
        emap, dirs = [], []
        for a, b in g.edges:
            t, end = eh[fm[a]]
            emap.append(t)
            dirs.append(1 if end == 0 else -1)
        s = perm_sign(emap)
        zg, zh = cycle_basis(g), cycle_basis(h)
        if len(zg) != len(zh):
            raise GraphError("cycle ranks differ")
        if not zg:
            return s
        _, nontree_h = _spanning_tree(h)
        mat = []
        for j, ej in enumerate(nontree_h):
            row = []
            for z in zg:
                img = defaultdict(int)
                for e, c in z.items():
                    img[emap[e]] += c * dirs[e]
                row.append(img.get(ej, 0))
            mat.append(row)
        det = determinant(mat)
        if det not in (1, -1):
            raise GraphError(f"cycle map has determinant {det}")
        return s * int(det)
    raise ValueError(f"unknown convention {convention!r}")


def canonical_form(g: OrientedGraph, convention: str | None = None) -> tuple[OrientedGraph, int]:
    """Canonical representative and the orientation comparison sign.

    The sign ``s`` satisfies ``(g, its data) = s · (canonical, its data)``.
    The returned graph has ``zero_class`` set when an automorphism reverses
    the orientation.
    """
    convention = convention or DEFAULT_CONVENTION.get(g.family, "vertedge")
    return _canonical_form_cached(g, convention)


@lru_cache(maxsize=400_000)
def _canonical_form_cached(g: OrientedGraph, convention: str) -> tuple[OrientedGraph, int]:
    enc, orders = _optimal_orderings(g, True)
    pos = orders[0]
    c = _graph_from_encoding(g, pos)
    iso = isomorphisms(g, c, True, first_only=True)[0]
    sign = orientation_sign(g, c, iso, convention)
    zero = any(orientation_sign(c, c, a, convention) < 0 for a in isomorphisms(c, c, True))
    return _replace_zero(c, zero), sign


def _replace_zero(g: OrientedGraph, zero: bool) -> OrientedGraph:
    out = _replace(g)
    object.__setattr__(out, "zero_class", zero)
    return out


def _graph_from_encoding(g: OrientedGraph, pos: Sequence[int]) -> OrientedGraph:
    """Standard-labelled copy of ``g`` with vertices placed at ``pos``."""
    fv = g.flag_vertex
    n = g.n_vertices
    order = [0] * n
    for v, p in enumerate(pos):
        order[p] = v
    keys = []
    for a, b in g.edges:
        pa, pb = pos[fv[a]], pos[fv[b]]
        if not g.directed and pa > pb:
            pa, pb = pb, pa
        keys.append((pa, pb))
    keys.sort()
    at = [[] for _ in range(n)]
    edges = []
    for k, (pa, pb) in enumerate(keys):
        at[pa].append(("e", k, 0))
        at[pb].append(("e", k, 1))
        edges.append((("e", k, 0), ("e", k, 1)))
    legs = []
    for f, kind, lab in sorted(g.legs, key=lambda x: (pos[fv[x[0]]], x[1], x[2])):
        at[pos[fv[f]]].append(("l", kind, lab))
        legs.append((("l", kind, lab), kind, lab))
    if g.directed:
        # inputs first, then the single outgoing flag
        tails = {("e", k, 0) for k in range(len(keys))}
        for p in range(n):
            out = [f for f in at[p] if f in tails or (f[0] == "l" and f[1] == "out")]
            at[p] = [f for f in at[p] if f not in out] + out
    genus = [g.genus[order[p]] for p in range(n)]
    c, _ = build_graph(genus, at, edges, legs, g.through, g.directed, g.family)
    return c


def automorphisms(g: OrientedGraph, strict: bool = True, convention: str | None = None) -> list[tuple[Isomorphism, int]]:
    """All automorphisms with their induced orientation signs."""
    convention = convention or DEFAULT_CONVENTION.get(g.family, "vertedge")
    out = []
    for iso in isomorphisms(g, g, strict):
        try:
            s = orientation_sign(g, g, iso, convention)
        except GraphError:
            s = 0
        out.append((iso, s))
    return out


def is_zero_class(g: OrientedGraph, convention: str | None = None) -> bool:
    convention = convention or DEFAULT_CONVENTION.get(g.family, "vertedge")
    return any(orientation_sign(g, g, a, convention) < 0 for a in isomorphisms(g, g, True))


def relabel(g: OrientedGraph, vertex_perm: Sequence[int], edge_perm: Sequence[int] | None = None,
            flip: Iterable[int] = (), flag_perms: dict | None = None) -> OrientedGraph:
    """Same graph with reordered data (an explicit change of orientation data).

    ``vertex_perm[v]`` is the new position of vertex ``v``; ``edge_perm[e]`` the
    new position of edge ``e``; edges in ``flip`` have their flags swapped;
    ``flag_perms[v]`` reorders the flags at ``v`` (new order as a list).
    """
    n = g.n_vertices
    order = [0] * n
    for v, p in enumerate(vertex_perm):
        order[p] = v
    flag_perms = flag_perms or {}
    at = [list(flag_perms.get(order[p], g.flag_order[order[p]])) for p in range(n)]
    m = len(g.edges)
    edge_perm = list(edge_perm) if edge_perm is not None else list(range(m))
    new_edges = [None] * m
    flip = set(flip)
    for e, (a, b) in enumerate(g.edges):
        new_edges[edge_perm[e]] = (b, a) if e in flip else (a, b)
    genus = [g.genus[order[p]] for p in range(n)]
    h, _ = build_graph(genus, at, new_edges, g.legs, g.through, g.directed, g.family)
    return h


# ----------------------------------------------------------------- transport


def _vertedge_flag_sign(g: OrientedGraph) -> int:
    leg_flags = [f for f, _, _ in sorted(g.legs, key=lambda x: (x[1], x[2]))]
    by_edges = [f for e in g.edges for f in e] + leg_flags
    by_vertices = [f for fl in g.flag_order for f in fl]
    return _seq_sign(by_edges, by_vertices)


def _vertedge_edgecycle_sign(g: OrientedGraph) -> int:
    if len(g.components()) != 1:
        raise UnsupportedConversionError("edgecycle line needs a connected graph")
    fv = g.flag_vertex
    tree, _ = _spanning_tree(g)
    cycles = cycle_basis(g)
    m = len(g.edges)
    cols = [z for z in cycles] + [{e: 1} for e in tree]
    m1 = [[col.get(e, 0) for col in cols] for e in range(m)]
    nv = g.n_vertices
    cols0 = []
    for e in tree:
        a, b = g.edges[e]
        col = defaultdict(int)
        col[fv[b]] += 1
        col[fv[a]] -= 1
        cols0.append(col)
    cols0.append({0: 1})
    m0 = [[col.get(v, 0) for col in cols0] for v in range(nv)]
    d1 = determinant(m1) if m else Fraction(1)
    d0 = determinant(m0)
    if abs(d1) != 1 or abs(d0) != 1:
        raise GraphError("unimodularity failure in cycle/boundary bases")
    return int(d1 * d0)


def _inset_vertedge_sign(g: OrientedGraph) -> int:
    """Directed graphs: ``det(In-flags) ≅ det(Ed) ≅ det(Vert)`` via out-flags."""
    if not g.directed:
        raise UnsupportedConversionError("inset convention needs a directed graph")
    fv = g.flag_vertex
    head_edge = {b: e for e, (_, b) in enumerate(g.edges)}
    tail_edge = {a: e for e, (a, _) in enumerate(g.edges)}
    leg = g.leg_of()
    seq_in = in_flag_sequence(g)
    edge_order = [head_edge[f] for f in seq_in if f in head_edge]
    rank = {e: i for i, e in enumerate(edge_order)}
    # in-flags: edges (in edge_order) then input legs by label
    tagged_in = [("e", head_edge[f]) if f in head_edge else ("l", leg[f][1]) for f in seq_in]
    ref_in = [("e", e) for e in edge_order] + sorted(t for t in tagged_in if t[0] == "l")
    s1 = _seq_sign(tagged_in, ref_in)
    outs = [g.out_flag(v) for v in range(g.n_vertices)]
    tagged_out = [("e", tail_edge[f]) if f in tail_edge else ("l", leg[f][1]) for f in outs]
    ref_out = [("e", e) for e in edge_order] + sorted(t for t in tagged_out if t[0] == "l")
    s2 = _seq_sign(tagged_out, ref_out)
    del fv, rank
    return s1 * s2


def transport_orientation(g: OrientedGraph, frm: str, to: str) -> int:
    """Sign of the natural identification of two orientation lines.

    The returned ``s`` satisfies ``gen_frm ↦ s · gen_to`` where ``gen_X`` is the
    generator fixed by g's stored ordering data in convention ``X``.
    """
    for c in (frm, to):
        if c not in CONVENTIONS:
            raise ValueError(f"unknown convention {c!r}")
    if frm == to:
        return 1
    if "flag" in (frm, to):
        if g.has_self_loop():
            raise UnsupportedConversionError("flag convention transport needs a graph without self-loops")
        _require_odd_valency(g)
    if "inset" in (frm, to):
        other = to if frm == "inset" else frm
        s = _inset_vertedge_sign(g)
        if other != "vertedge":
            s *= transport_orientation(g, "vertedge", other)
        return s
    pair = {frm, to}
    if pair == {"vertedge", "flag"}:
        return _vertedge_flag_sign(g)
    if pair == {"vertedge", "edgecycle"}:
        return _vertedge_edgecycle_sign(g)
    # edgecycle <-> flag through vertedge
    return _vertedge_edgecycle_sign(g) * _vertedge_flag_sign(g)


# ----------------------------------------------------------------- contraction


def contract_edge(g: OrientedGraph, e: int, convention: str | None = None) -> tuple[OrientedGraph, int]:
    """Contract edge ``e``; the sign moves the edge's data to the front first.

    ``inset``: the head in-flag is moved to the front of the in-flag sequence
    and dropped.  ``vertedge``: the two endpoints are moved to the front
    (tail, head) and replaced by the merged vertex.
    """
    convention = convention or DEFAULT_CONVENTION.get(g.family, "vertedge")
    if not 0 <= e < len(g.edges):
        raise GraphError(f"no edge {e}")
    a, b = g.edges[e]
    fv = g.flag_vertex
    u, w = fv[a], fv[b]
    if u == w:
        raise LoopContractionError("cannot contract a self-loop")
    keep = [x for x in range(g.n_vertices) if x not in (u, w)]
    if g.directed:
        # merged vertex sits where w was; In(u) replaces the head flag b
        merged = []
        for f in g.flag_order[w]:
            if f == b:
                merged.extend(g.in_flags(u))
            else:
                merged.append(f)
        at, genus = [], []
        for x in range(g.n_vertices):
            if x == u:
                continue
            if x == w:
                at.append(merged)
                genus.append(g.genus[u] + g.genus[w])
            else:
                at.append(list(g.flag_order[x]))
                genus.append(g.genus[x])
    else:
        merged = [f for f in g.flag_order[u] if f != a] + [f for f in g.flag_order[w] if f != b]
        at = [merged] + [list(g.flag_order[x]) for x in keep]
        genus = [g.genus[u] + g.genus[w]] + [g.genus[x] for x in keep]
    edges = [ed for k, ed in enumerate(g.edges) if k != e]
    h, rename = build_graph(genus, at, edges, g.legs, g.through, g.directed, g.family)
    if convention == "inset":
        seq = in_flag_sequence(g)
        s = -1 if seq.index(b) % 2 else 1
        rest = [rename[f] for f in seq if f != b]
        sign = s * _seq_sign(rest, in_flag_sequence(h))
    elif convention == "vertedge":
        order = [u, w] + keep
        sign = perm_sign(order)
        if g.directed:
            # merged vertex is at w's slot, not the front
            pos_m = sorted(keep + [w]).index(w)
            sign *= -1 if pos_m % 2 else 1
    else:
        raise UnsupportedConversionError(f"contraction sign not defined for {convention!r}")
    return h, sign


def directed_expansions(g: OrientedGraph) -> Iterator[OrientedGraph]:
    """All graphs obtained by splitting one vertex along a new edge.

    The new vertex takes a subset ``S`` (``|S| ≥ 2``) of ``In(v)`` and feeds a
    new input flag appended to ``In(v)``.
    """
    for v in range(g.n_vertices):
        ins = g.in_flags(v)
        out = g.out_flag(v)
        for size in range(2, len(ins)):
            for S in itertools.combinations(ins, size):
                rest = [f for f in ins if f not in S]
                at = [list(fl) for fl in g.flag_order]
                at[v] = rest + ["new_in", out]
                at.append(list(S) + ["new_out"])
                genus = list(g.genus) + [0]
                edges = list(g.edges) + [("new_out", "new_in")]
                h, _ = build_graph(genus, at, edges, g.legs, g.through, True, g.family)
                yield h


def undirected_expansions(g: OrientedGraph, min_valency: int = 3, unordered: bool = True) -> Iterator[OrientedGraph]:
    """Split one vertex into two joined by a new edge (genus labels distributed).

    With ``unordered`` each split ``{S, T}`` is produced once (``S`` holds the
    first flag of the vertex).
    """
    for v in range(g.n_vertices):
        flags = g.flag_order[v]
        k = len(flags)
        gv = g.genus[v]
        for size in range(1, k):
            for S in itertools.combinations(flags, size):
                if unordered and flags[0] not in S:
                    continue
                T = [f for f in flags if f not in S]
                for g1 in range(gv + 1):
                    g2 = gv - g1
                    if 2 * (g1 - 1) + len(S) + 1 <= 0 or 2 * (g2 - 1) + len(T) + 1 <= 0:
                        continue
                    if g1 == 0 and len(S) + 1 < min_valency:
                        continue
                    if g2 == 0 and len(T) + 1 < min_valency:
                        continue
                    at = [list(fl) for fl in g.flag_order]
                    at[v] = list(S) + ["nu"]
                    at.append(T + ["nw"])
                    genus = list(g.genus)
                    genus[v] = g1
                    genus.append(g2)
                    edges = list(g.edges) + [("nu", "nw")]
                    h, _ = build_graph(genus, at, edges, g.legs, g.through, False, g.family)
                    yield h


# --------------------------------------------------------------------- grafting


def graft(host: OrientedGraph, scion: OrientedGraph, matching: Sequence[tuple[tuple[str, int], tuple[str, int]]],
          relabel_legs: dict | None = None, family: str | None = None) -> OrientedGraph:
    """Glue legs of ``host`` to legs of ``scion``.

    ``matching`` pairs ``(kind, label)`` of a host leg with ``(kind, label)`` of
    a scion leg.  Directed graphs must pair ``in`` with ``out``.  Orientation
    data is concatenated host first; new edges are appended, directed from the
    ``out`` flag (undirected: from the host flag).  Remaining legs keep their
    labels unless ``relabel_legs`` maps ``("host"|"scion", kind, label)`` to a
    new label.
    """
    if host.directed != scion.directed:
        raise GraftError("cannot graft directed and undirected graphs")
    hleg = {(kind, lab): f for f, kind, lab in host.legs}
    sleg = {(kind, lab): f for f, kind, lab in scion.legs}
    at = [[("h", f) for f in fl] for fl in host.flag_order] + [[("s", f) for f in fl] for fl in scion.flag_order]
    genus = list(host.genus) + list(scion.genus)
    edges = [(("h", a), ("h", b)) for a, b in host.edges] + [(("s", a), ("s", b)) for a, b in scion.edges]
    used_h, used_s = set(), set()
    for hk, sk in matching:
        if hk not in hleg or sk not in sleg:
            raise GraftError(f"no leg {hk} on host or {sk} on scion")
        if host.directed:
            if {hk[0], sk[0]} != {"in", "out"}:
                raise GraftError("directed grafting pairs an input with an output")
            if hk[0] == "out":
                edges.append((("h", hleg[hk]), ("s", sleg[sk])))
            else:
                edges.append((("s", sleg[sk]), ("h", hleg[hk])))
        else:
            edges.append((("h", hleg[hk]), ("s", sleg[sk])))
        used_h.add(hk)
        used_s.add(sk)
    relabel_legs = relabel_legs or {}
    legs = []
    for f, kind, lab in host.legs:
        if (kind, lab) not in used_h:
            legs.append((("h", f), kind, relabel_legs.get(("host", kind, lab), lab)))
    for f, kind, lab in scion.legs:
        if (kind, lab) not in used_s:
            legs.append((("s", f), kind, relabel_legs.get(("scion", kind, lab), lab)))
    through = [(relabel_legs.get(("host", "in", i), i), relabel_legs.get(("host", "out", o), o)) for i, o in host.through]
    through += [(relabel_legs.get(("scion", "in", i), i), relabel_legs.get(("scion", "out", o), o)) for i, o in scion.through]
    labels = defaultdict(list)
    for _, kind, lab in legs:
        labels[kind].append(lab)
    for i, o in through:
        labels["in"].append(i)
        labels["out"].append(o)
    for kind, labs in labels.items():
        if len(labs) != len(set(labs)):
            raise GraftError(f"duplicate {kind} labels after grafting: {sorted(labs)}")
    g, _ = build_graph(genus, at, edges, legs, through, host.directed, family or host.family)
    return g


def operad_compose(p: OrientedGraph, q: OrientedGraph, i: int) -> OrientedGraph:
    """``p ∘_i q`` for trees: q's output feeds input ``i`` of p."""
    m = len(p.legs_in())
    n = len(q.legs_in())
    rl = {}
    for k in range(1, m + 1):
        if k > i:
            rl[("host", "in", k)] = k + n - 1
    for k in range(1, n + 1):
        rl[("scion", "in", k)] = k + i - 1
    return graft(p, q, [(("in", i), ("out", 1))], rl)


def juxtapose(a: OrientedGraph, b: OrientedGraph) -> OrientedGraph:
    """Disjoint union; b's labels are shifted past a's (PROP monoidal product)."""
    n_in, n_out = len(a.legs_in()), len(a.legs_out())
    rl = {}
    for _, kind, lab in b.legs:
        rl[("scion", kind, lab)] = lab + (n_in if kind == "in" else n_out if kind == "out" else len(a.legs))
    for i, o in b.through:
        rl[("scion", "in", i)] = i + n_in
        rl[("scion", "out", o)] = o + n_out
    return graft(a, b, [], rl)


def self_glue(g: OrientedGraph, leg_a: int, leg_b: int) -> OrientedGraph:
    """Join two legs of an undirected graph into an edge (modular self-gluing)."""
    if g.directed:
        raise GraftError("self-gluing is for undirected graphs")
    legs = {lab: f for f, kind, lab in g.legs}
    if leg_a not in legs or leg_b not in legs or leg_a == leg_b:
        raise GraftError("need two distinct existing legs")
    fa, fb = legs[leg_a], legs[leg_b]
    new_legs = [(f, k, lab) for f, k, lab in g.legs if lab not in (leg_a, leg_b)]
    h, _ = build_graph(g.genus, g.flag_order, list(g.edges) + [(fa, fb)], new_legs, g.through, False, g.family)
    return h


# ----------------------------------------------------------------- enumeration


@dataclass(frozen=True)
class GraphClassSpec:
    family: str
    legs_in: int = 0
    legs_out: int = 0
    genus: int = 0
    max_vertices: int = 8
    allow_self_loops: bool = True
    allow_parallel_edges: bool = True
    connected: bool = True
    n_vertices: int | None = None
    genus_labels: bool = False
    max_class_size: int = 200_000

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.max_vertices <= 0 or self.max_class_size <= 0:
            raise ValueError("resource guards must be positive")
        if self.family == "trivalent_closed" and (self.legs_in or self.legs_out):
            raise ValueError("trivalent closed graphs have no legs")


def _closure(bases: Iterable[OrientedGraph], expand, spec: GraphClassSpec) -> dict:
    seen: dict = {}
    frontier = []
    for b in bases:
        k = canonical_key(b)
        if k not in seen:
            seen[k] = b
            frontier.append(b)
    while frontier:
        nxt = []
        for g in frontier:
            if g.n_vertices >= spec.max_vertices:
                continue
            for h in expand(g):
                k = canonical_key(h)
                if k not in seen:
                    seen[k] = h
                    nxt.append(h)
                    if len(seen) > spec.max_class_size:
                        raise ResourceGuardError(f"class exceeds {spec.max_class_size} graphs")
        frontier = nxt
    return seen


def _set_partitions(items: list) -> Iterator[list[list]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]


def _prop_bases(n: int, m: int) -> Iterator[OrientedGraph]:
    """Graphs whose components are corollas, wheel corollas or bare strands."""
    inputs = list(range(1, n + 1))
    # assign each input to an output block 1..m or to the wheel pool 0
    for assign in itertools.product(range(m + 1), repeat=n):
        blocks = [[i for i, a in zip(inputs, assign) if a == j] for j in range(m + 1)]
        if any(not blocks[j] for j in range(1, m + 1)):
            continue
        for wheels in _set_partitions(blocks[0]):
            at, edges, legs, through, genus = [], [], [], [], []
            for j in range(1, m + 1):
                blk = blocks[j]
                if len(blk) == 1:
                    through.append((blk[0], j))
                    continue
                at.append([("i", k) for k in blk] + [("o", j)])
                legs += [(("i", k), "in", k) for k in blk] + [(("o", j), "out", j)]
                genus.append(0)
            for w, blk in enumerate(wheels):
                at.append([("i", k) for k in blk] + [("wi", w), ("wo", w)])
                legs += [(("i", k), "in", k) for k in blk]
                edges.append((("wo", w), ("wi", w)))
                genus.append(0)
            g, _ = build_graph(genus, at, edges, legs, through, True, "prop_graph")
            yield g


def _stable_bases(g_total: int, n: int, genus_labels: bool) -> Iterator[OrientedGraph]:
    for h in range(g_total + 1) if genus_labels else [0]:
        loops = g_total - h
        c = modular_corolla(n, loops, h)
        if c.is_stable():
            yield c


def _trivalent_connected(n_vertices: int, n_legs: int = 0) -> list[OrientedGraph]:
    if (3 * n_vertices - n_legs) % 2:
        return []
    g_tot = (3 * n_vertices - n_legs) // 2 - n_vertices + 1
    if g_tot < 0 or 2 * g_tot - 2 + n_legs <= 0:
        return []
    spec = GraphClassSpec("stable_modular", genus=g_tot, legs_in=n_legs, max_vertices=n_vertices)
    found = _closure(_stable_bases(g_tot, n_legs, False), lambda x: undirected_expansions(x, 3, True), spec)
    out = []
    for g in found.values():
        if g.n_vertices == n_vertices and all(g.valency(v) == 3 for v in range(g.n_vertices)):
            out.append(g)
    return out


def enumerate_graphs(spec: GraphClassSpec) -> list[OrientedGraph]:
    """One canonical representative per isomorphism class, in canonical order.

    Zero-classes (an automorphism reversing orientation) are kept and flagged.
    """
    fam = spec.family
    if fam == "tree":
        n = spec.legs_in
        if n < 2:
            return []
        found = _closure([corolla(n)], directed_expansions, spec)
    elif fam == "prop_graph":
        found = _closure(_prop_bases(spec.legs_in, spec.legs_out), directed_expansions, spec)
    elif fam == "stable_modular":
        n = spec.legs_in
        if spec.connected:
            if 2 * spec.genus - 2 + n <= 0:
                return []
            found = _closure(
                _stable_bases(spec.genus, n, spec.genus_labels),
                lambda x: undirected_expansions(x, 3, True),
                spec,
            )
        else:
            found = {canonical_key(g): g for g in _disconnected_stable(spec)}
    elif fam == "trivalent_closed":
        sizes = [spec.n_vertices] if spec.n_vertices is not None else range(2, spec.max_vertices + 1, 2)
        found = {}
        for size in sizes:
            if spec.connected:
                graphs = _trivalent_connected(size)
            else:
                graphs = _trivalent_disconnected(size)
            for g in graphs:
                found[canonical_key(g)] = g
    else:
        raise ValueError(f"cannot enumerate family {fam!r}")
    out = []
    for g in found.values():
        if not spec.allow_self_loops and g.has_self_loop():
            continue
        if not spec.allow_parallel_edges and _has_parallel(g):
            continue
        if g.n_vertices > spec.max_vertices:
            continue
        if spec.n_vertices is not None and g.n_vertices != spec.n_vertices:
            continue
        c, _ = canonical_form(g.with_family(fam))
        out.append(c)
    out.sort(key=canonical_key)
    return out


def _has_parallel(g: OrientedGraph) -> bool:
    fv = g.flag_vertex
    keys = [tuple(sorted((fv[a], fv[b]))) for a, b in g.edges]
    return len(keys) != len(set(keys))


def disjoint_union(graphs: Sequence[OrientedGraph], family: str) -> OrientedGraph:
    at, edges, legs, genus = [], [], [], []
    for k, g in enumerate(graphs):
        at += [[(k, f) for f in fl] for fl in g.flag_order]
        edges += [((k, a), (k, b)) for a, b in g.edges]
        legs += [((k, f), kind, lab) for f, kind, lab in g.legs]
        genus += list(g.genus)
    h, _ = build_graph(genus, at, edges, legs, (), False, family)
    return h


def _trivalent_disconnected(n_vertices: int) -> list[OrientedGraph]:
    conn = {v: _trivalent_connected(v) for v in range(2, n_vertices + 1, 2)}
    out = []

    def rec(remaining, min_key, acc):
        if remaining == 0:
            out.append(disjoint_union(acc, "trivalent_closed"))
            return
        for size in range(2, remaining + 1, 2):
            for idx, g in enumerate(conn[size]):
                key = (size, idx)
                if key < min_key:
                    continue
                rec(remaining - size, key, acc + [g])

    rec(n_vertices, (0, 0), [])
    return out


def _relabel_legs(g: OrientedGraph, mapping: dict[int, int]) -> OrientedGraph:
    legs = tuple((f, kind, mapping[lab]) for f, kind, lab in g.legs)
    return _replace(g, legs=legs)


def _disconnected_stable(spec: GraphClassSpec) -> list[OrientedGraph]:
    """Graphs of ``Ĩ((g,n))``: disjoint unions of stable connected pieces."""
    n, g_total, vmax = spec.legs_in, spec.genus, spec.max_vertices
    cache: dict = {}

    def connected(gg, k):
        if (gg, k) not in cache:
            if 2 * gg - 2 + k <= 0:
                cache[(gg, k)] = []
            else:
                sub = GraphClassSpec("stable_modular", genus=gg, legs_in=k, max_vertices=vmax,
                                     genus_labels=spec.genus_labels)
                cache[(gg, k)] = list(
                    _closure(_stable_bases(gg, k, spec.genus_labels), lambda x: undirected_expansions(x, 3, True), sub).values()
                )
        return cache[(gg, k)]

    results = []
    labels = list(range(1, n + 1))

    def rec(blocks_left, genus_left, verts_left, pieces, vacuum_min):
        if not blocks_left:
            # optional vacuum pieces (no legs), nondecreasing to avoid repeats
            if genus_left == 0:
                results.append(pieces)
            for gg in range(2, genus_left + 1):
                for idx, piece in enumerate(connected(gg, 0)):
                    if (gg, idx) < vacuum_min or piece.n_vertices > verts_left:
                        continue
                    rec([], genus_left - gg, verts_left - piece.n_vertices, pieces + [piece], (gg, idx))
            return
        blk = blocks_left[0]
        for gg in range(genus_left + 1):
            for piece in connected(gg, len(blk)):
                if piece.n_vertices > verts_left:
                    continue
                mapped = _relabel_legs(piece, {k + 1: lab for k, lab in enumerate(blk)})
                rec(blocks_left[1:], genus_left - gg, verts_left - piece.n_vertices, pieces + [mapped], vacuum_min)

    for part in _set_partitions(labels) if labels else [[]]:
        rec(part, g_total, vmax, [], (0, -1))
    return [disjoint_union(p, "stable_modular") for p in results if p]
