import itertools
import random
from collections import defaultdict
from fractions import Fraction

import numpy as np
import pytest

from opforge import graph_kit as gk
from opforge import gelfand_fuks as gf
from opforge.exact_core import BilinearForm, perm_sign
from opforge.gelfand_fuks import (
    Cochain,
    FormalFieldAlgebra,
    RangeError,
    admissible_graph_count,
    ce_differential,
    graph_cochain,
    invariance_residual,
    invariant_dimension,
    is_invariant,
    juxtapose_cochains,
    morphism_graphs,
    tautological_cochain,
    verify_morphism,
)

# ------------------------------------------------------------------ oracles
# polynomials are dicts {sorted exponent tuple: coefficient}


def p_diff(p, i):
    out = defaultdict(int)
    for mono, c in p.items():
        if i in mono:
            rest = list(mono)
            rest.remove(i)
            out[tuple(rest)] += c * mono.count(i)
    return {k: v for k, v in out.items() if v}


def p_mul(p, q):
    out = defaultdict(int)
    for a, x in p.items():
        for b, y in q.items():
            out[tuple(sorted(a + b))] += x * y
    return {k: v for k, v in out.items() if v}


def p_add(*ps):
    out = defaultdict(int)
    for p in ps:
        for k, v in p.items():
            out[k] += v
    return {k: v for k, v in out.items() if v}


def p_scale(p, c):
    return {k: c * v for k, v in p.items() if c * v}


def field_apply(field, f, r):
    """A vector field {(i, mono): c} acting on a polynomial as a derivation."""
    out = {}
    for (i, mono), c in field.items():
        out = p_add(out, p_scale(p_mul({mono: 1}, p_diff(f, i)), c))
    return out


def poisson_oracle(f, g, r):
    om = BilinearForm.standard_symplectic(r)
    out = {}
    for a in range(r):
        for b in range(r):
            w = int(om(a, b))
            if w:
                out = p_add(out, p_scale(p_mul(p_diff(f, a), p_diff(g, b)), w))
    return out


def derivative_oracle(mono, slots):
    """∂_{slots} u^mono at the origin."""
    p = {mono: 1}
    for s in slots:
        p = p_diff(p, s)
    return p.get((), 0)


def random_field(alg, k, rng, density=0.5):
    return {x: rng.randint(-3, 3) for x in alg.basis(k) if rng.random() < density}


def naive_p(g, alg, labels):
    """p_Γ on basis arguments (one label per vertex) by summing over flag indices."""
    r = alg.r
    n, m = gf._signature(g)
    out = np.zeros((r,) * (n + m if alg.variant == "vect" else n), dtype=object)
    pi = alg.poisson_matrix()
    legs = {f: (kind, lab) for f, kind, lab in g.legs}
    for idx in itertools.product(range(r), repeat=g.n_flags):
        val = 1
        if alg.variant == "vect":
            if any(idx[a] != idx[b] for a, b in g.edges):
                continue
            for v, (i, mono) in enumerate(labels):
                if idx[g.out_flag(v)] != i:
                    val = 0
                    break
                val *= derivative_oracle(mono, [idx[f] for f in g.in_flags(v)])
            if not val:
                continue
            outs = [idx[f] for f in sorted((f for f in legs if legs[f][0] == "out"), key=lambda f: legs[f][1])]
            ins = [idx[f] for f in sorted((f for f in legs if legs[f][0] == "in"), key=lambda f: legs[f][1])]
            out[tuple(outs + ins)] += val
        else:
            for a, b in g.edges:
                val *= pi[idx[a]][idx[b]]
            for v, mono in enumerate(labels):
                val *= derivative_oracle(mono, [idx[f] for f in g.flag_order[v]])
            if not val:
                continue
            slots = [idx[f] for f in sorted(legs, key=lambda f: legs[f][1])]
            out[tuple(slots)] += val
    return out


# ------------------------------------------------------------------ the algebra


@pytest.mark.parametrize("r", [1, 2, 3])
def test_vect_bracket_is_commutator_of_derivations(r):
    alg = FormalFieldAlgebra("vect", r, 5)
    rng = random.Random(r)
    for a, b in [(2, 2), (2, 3), (3, 3)]:
        x, y = random_field(alg, a, rng), random_field(alg, b, rng)
        br = alg.bracket(x, y)
        assert {len(mono) for _, mono in br} <= {a + b - 1}
        for f in [{(0,) * 2: 1}, {tuple(range(r)): 2}, {(r - 1, r - 1, 0): -1}]:
            f = {tuple(sorted(k)): v for k, v in f.items()}
            lhs = field_apply(br, f, r)
            rhs = p_add(field_apply(x, field_apply(y, f, r), r), p_scale(field_apply(y, field_apply(x, f, r), r), -1))
            assert lhs == rhs


@pytest.mark.parametrize("r", [2, 4])
def test_ham_bracket_matches_poisson_oracle(r):
    alg = FormalFieldAlgebra("ham", r, 6)
    rng = random.Random(r)
    for a, b in [(3, 3), (3, 4), (4, 4)]:
        x, y = random_field(alg, a, rng), random_field(alg, b, rng)
        br = alg.bracket(x, y)
        assert br == poisson_oracle(x, y, r)
        assert all(len(mono) == a + b - 2 for mono in br)


@pytest.mark.parametrize("variant,r", [("vect", 2), ("ham", 2)])
def test_jacobi_on_random_fields(variant, r):
    alg = FormalFieldAlgebra(variant, r, 8)
    rng = random.Random(1)
    lo = alg.min_degree
    x, y, z = (random_field(alg, lo + i, rng) for i in range(3))
    br = alg.bracket
    total = p_add(br(br(x, y), z), br(br(y, z), x), br(br(z, x), y))
    assert total == {}


def test_bracket_tensor_guard():
    alg = FormalFieldAlgebra("vect", 2, 4)
    assert alg.bracket_tensor(2, 3).shape == (alg.dim(2), alg.dim(3), alg.dim(4))
    with pytest.raises(RangeError):
        alg.bracket_tensor(3, 3)
    with pytest.raises(ValueError):
        FormalFieldAlgebra("ham", 3)


# ------------------------------------------------------------------ tautological cochains


@pytest.mark.parametrize("variant,n", [("vect", 2), ("vect", 3), ("ham", 2), ("ham", 3)])
def test_tautological_extracts_derivative_tensor(variant, n):
    alg = FormalFieldAlgebra(variant, 2, 5)
    a = tautological_cochain(n, alg)
    k = n if variant == "vect" else n + 1
    assert list(a.blocks) == [(k,)]
    for x in alg.basis(k):
        val = a.evaluate([(k, x)])
        for slots in itertools.product(range(2), repeat=val.ndim):
            if variant == "vect":
                i, mono = x
                want = derivative_oracle(mono, slots[1:]) if slots[0] == i else 0
            else:
                want = derivative_oracle(x, slots)
            assert val[slots] == want


def test_tautological_vanishes_off_degree():
    alg = FormalFieldAlgebra("vect", 2, 4)
    a = tautological_cochain(2, alg)
    assert not a.block((3,)).any()
    with pytest.raises(RangeError):
        tautological_cochain(5, alg)


@pytest.mark.parametrize("variant", ["vect", "ham"])
def test_tautological_invariant(variant):
    alg = FormalFieldAlgebra(variant, 2, 5)
    assert invariance_residual(tautological_cochain(3, alg)) == {}


def test_non_invariant_cochain_detected():
    alg = FormalFieldAlgebra("vect", 2, 4)
    a = tautological_cochain(3, alg)
    b = Cochain(alg, 1, 3, 1, {(3,): np.ones_like(a.blocks[(3,)])})
    assert not is_invariant(b)


# ------------------------------------------------------------------ the differential


def random_cochain(alg, p, n, m, key, rng):
    slots = n + m if alg.variant == "vect" else n
    shape = tuple(alg.dim(k) for k in key) + (alg.r,) * slots
    t = np.array([rng.randint(-2, 2) for _ in range(int(np.prod(shape)))], dtype=np.int64).reshape(shape)
    return Cochain(alg, p, n, m, {key: gf._alternate(t, key)})


@pytest.mark.parametrize("key", [(2,), (3,), (2, 2), (2, 3)])
def test_d_squared_random_cochains(key):
    alg = FormalFieldAlgebra("vect", 2, 6)
    c = random_cochain(alg, len(key), 1, 1, key, random.Random(len(key)))
    dd = ce_differential(ce_differential(c))
    assert dd.is_zero()
    assert ce_differential(c).weights() <= c.weights()


@pytest.mark.parametrize("variant", ["vect", "ham"])
def test_d_squared_invariant_cochains(variant):
    alg = FormalFieldAlgebra(variant, 2, 7)
    rng = random.Random(5)
    graphs = [g for g in morphism_graphs(variant, max_vertices=2, max_legs=3)]
    for g in rng.sample(graphs, 6):
        c = graph_cochain(g, alg)
        d1 = ce_differential(c)
        assert is_invariant(d1)
        assert ce_differential(d1).is_zero()


def test_d_of_constant_is_zero():
    alg = FormalFieldAlgebra("vect", 2, 4)
    ident = Cochain(alg, 0, 1, 1, {(): np.eye(2, dtype=np.int64)})
    assert ce_differential(ident).is_zero()


def test_d_of_a2_is_single_expansion():
    # a_2 is a cocycle: no degree-2 field is a bracket of nilpotent ones
    alg = FormalFieldAlgebra("vect", 2, 4)
    assert ce_differential(tautological_cochain(2, alg)).is_zero()
    rep = verify_morphism(gk.corolla(2, family="prop_graph"), alg)
    assert rep.passed and rep.expansion_terms == 0
    rep = verify_morphism(gk.corolla(3, family="prop_graph"), alg)
    assert rep.passed and rep.expansion_terms == 3


# ------------------------------------------------------------------ graph cochains


def test_corolla_is_tautological():
    alg = FormalFieldAlgebra("vect", 2, 4)
    for n in (2, 3, 4):
        assert graph_cochain(gk.corolla(n, family="prop_graph"), alg) == tautological_cochain(n, alg)
    ham = FormalFieldAlgebra("ham", 2, 5)
    assert graph_cochain(gk.modular_corolla(4), ham) == tautological_cochain(3, ham)


@pytest.mark.parametrize("variant", ["vect", "ham"])
def test_graph_cochain_matches_naive_contraction(variant):
    alg = FormalFieldAlgebra(variant, 2, 8)
    rng = random.Random(2)
    graphs = [g for g in morphism_graphs(variant, max_vertices=2, max_legs=3) if g.n_vertices == 2]
    for g in rng.sample(graphs, min(6, len(graphs))):
        c = graph_cochain(g, alg)
        degs = [gf.vertex_degree(g, v, variant) for v in range(2)]
        for _ in range(4):
            labels = [rng.choice(alg.basis(k)) for k in degs]
            if labels[0] == labels[1]:
                continue
            want = naive_p(g, alg, labels)
            if degs[0] == degs[1]:
                want = want - naive_p(g, alg, labels[::-1])
            got = c.evaluate(list(zip(degs, labels)))
            assert (got == want).all()


def test_juxtaposition_is_product():
    alg = FormalFieldAlgebra("vect", 2, 4)
    a, b = gk.corolla(2, family="prop_graph"), gk.corolla(3, family="prop_graph")
    j = gk.juxtapose(a, b)
    assert graph_cochain(j, alg) == juxtapose_cochains(graph_cochain(a, alg), graph_cochain(b, alg))
    jj = gk.juxtapose(a, a)
    assert graph_cochain(jj, alg) == juxtapose_cochains(graph_cochain(a, alg), graph_cochain(a, alg))


def test_evaluate_alternates():
    alg = FormalFieldAlgebra("vect", 2, 4)
    g = next(g for g in morphism_graphs("vect", 2, 3) if g.n_vertices == 2)
    c = graph_cochain(g, alg)
    key = sorted(c.blocks)[0]
    xs = [alg.basis(k)[j] for j, k in enumerate(key)]
    args = list(zip(key, xs))
    assert (c.evaluate(args[::-1]) == perm_sign([1, 0]) * c.evaluate(args)).all()


# ------------------------------------------------------------------ the morphism


@pytest.mark.parametrize("variant", ["vect", "ham"])
def test_morphism_on_envelope_r2(variant):
    alg = FormalFieldAlgebra(variant, 2, 8)
    graphs = morphism_graphs(variant)
    nontrivial = 0
    for g in graphs:
        rep = verify_morphism(g, alg)
        assert rep.passed, rep.to_json()
        nontrivial += rep.expansion_terms > 0
    assert nontrivial > 100


def test_morphism_sign_is_pinned(monkeypatch):
    alg = FormalFieldAlgebra("vect", 2, 5)
    monkeypatch.setattr(gf, "morphism_sign", lambda g, v: 1)
    rep = verify_morphism(gk.corolla(3, family="prop_graph"), alg)
    assert not rep.passed and rep.witnesses
    w = rep.witnesses[0]
    assert Fraction(w["lhs"]) == -Fraction(w["rhs"])
    assert rep.to_json()["difference_nnz"] == rep.difference_nnz > 0


def test_unnormalized_cochain_fails_with_automorphisms(monkeypatch):
    # dividing by |Aut Γ| matters once parallel edges appear
    alg = FormalFieldAlgebra("ham", 2, 8)
    monkeypatch.setattr(gf, "automorphism_count", lambda g: 1)
    results = [verify_morphism(g, alg).passed for g in morphism_graphs("ham", max_vertices=2)]
    assert not all(results)


def test_range_error_when_truncation_too_small():
    with pytest.raises(RangeError):
        verify_morphism(gk.corolla(4, family="prop_graph"), FormalFieldAlgebra("vect", 2, 3))


# ------------------------------------------------------------------ invariant theory


def test_empty_signature_constants():
    assert invariant_dimension([], 0, 0, 3) == 1 == admissible_graph_count([], 0, 0)


@pytest.mark.parametrize("r", [2, 3, 4])
def test_corolla_signature_stable(r):
    # the corolla plus two trace-times-strand graphs
    assert invariant_dimension([2], 2, 1, r) == admissible_graph_count([2], 2, 1) == 3


def test_corolla_signature_unstable_at_r1():
    assert invariant_dimension([2], 2, 1, 1) == 1


def test_two_vertex_signature_stabilizes():
    count = admissible_graph_count([2, 2], 3, 1)
    dims = [invariant_dimension([2, 2], 3, 1, r) for r in (1, 2, 3)]
    assert dims == [0, 9, count] and count == 15


def test_ham_signature():
    assert invariant_dimension([4], 4, 0, 2, "ham") == admissible_graph_count([4], 4, 0, "ham") == 1


def test_invariant_guard():
    with pytest.raises(gk.ResourceGuardError):
        invariant_dimension([2, 2], 3, 1, 3, max_unknowns=10)


@pytest.mark.parametrize("variant", ["vect", "ham"])
def test_sliced_comparison_matches_full(variant):
    alg = FormalFieldAlgebra(variant, 2, 8)
    graphs = [g for g in morphism_graphs(variant, max_vertices=2, max_legs=3)][:25]
    for g in graphs:
        full = verify_morphism(g, alg)
        sliced = verify_morphism(g, alg, max_block=8)
        assert full.passed and sliced.passed
        assert full.expansion_terms == sliced.expansion_terms


def test_sliced_cochain_is_a_slice():
    alg = FormalFieldAlgebra("ham", 2, 6)
    g = next(g for g in morphism_graphs("ham", max_vertices=2) if g.n_vertices == 2 and len(g.legs) >= 2)
    full = graph_cochain(g, alg)
    for fixed in [(0,), (1, 0)]:
        part = graph_cochain(g, alg, fixed)
        key = next(iter(full.blocks))
        idx = (slice(None),) * len(key) + fixed
        assert (part.blocks[key] == full.blocks[key][idx]).all()
        assert part.n_slots == full.n_slots - len(fixed)
    with pytest.raises(ValueError):
        invariance_residual(graph_cochain(g, alg, (0,)))


def test_sliced_failure_reports_pinned_slots(monkeypatch):
    alg = FormalFieldAlgebra("ham", 2, 8)
    monkeypatch.setattr(gf, "morphism_sign", lambda g, v: 1)
    g = gk.modular_corolla(5)
    rep = verify_morphism(g, alg, max_block=40)
    full = verify_morphism(g, alg)
    assert not rep.passed and rep.difference_nnz == full.difference_nnz
    assert all(len(w["slots"]) == 5 for w in rep.witnesses)


def test_accumulate_switches_to_int_exactly():
    big = 2**52 + 1
    a = np.array([float(2**52)])
    acc, bound = gf._accumulate(None, 0, a, 2**52)
    assert acc.dtype == np.float64
    acc, bound = gf._accumulate(acc, bound, np.array([1.0]), big - 2**52)
    acc, bound = gf._accumulate(acc, bound, np.array([2**52 - 1.0]), 2**52)
    # the bound reached 2^53, past float64's exact range, so the last sum went through int64
    assert acc.dtype == np.int64 and int(acc[0]) == 2**53 and bound == 2**53 + 1


def test_einsum_bounded_dtype():
    small = np.array([[1, 2], [3, 4]], dtype=np.int64)
    res, bound = gf._einsum_bounded(small, [0, 1], small, [1, 2], [0, 2])
    assert res.dtype == np.float64 and bound == 32
    assert (res == small @ small).all()
    huge = np.array([2**40, -(2**40)], dtype=np.int64)
    res, bound = gf._einsum_bounded(huge, [0], np.array([2**14, 3], dtype=np.int64), [0], [])
    assert res.dtype == np.int64 and int(res) == 2**54 - 3 * 2**40


def test_scaled_falls_back_to_objects():
    t = np.array([2**61, -3], dtype=np.int64)
    out = gf._scaled(t, 4)
    assert out.dtype == object and out[0] == 2**63
