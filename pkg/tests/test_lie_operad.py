import itertools
import math
import random
from fractions import Fraction

import pytest

from opforge.lie_operad import (
    LieElement,
    MalformedExpressionError,
    PropElement,
    TraceElement,
    cyclic_block_swap,
    jacobi_monomials,
    lie_compose,
    lie_dim,
    lie_normal_form,
    parse_bracket,
    trace_of_composite,
    trace_reduce,
    trace_space_dim,
    word_space_rank,
)

# ---------------------------------------------------------- evaluation oracle
# sl2 in the basis e, h, f; sl2 ⊕ sl2 is faithful for arity-3 identities

SL2 = {(1, 0): {0: 2}, (1, 2): {2: -2}, (0, 2): {1: 1}}


def sl2_bracket(u, v, dim=3):
    out = [Fraction(0)] * dim
    for (a, b), res in SL2.items():
        for c, k in res.items():
            out[c] += k * (u[a] * v[b] - u[b] * v[a])
    return out


def double_bracket(u, v):
    return sl2_bracket(u[:3], v[:3]) + sl2_bracket(u[3:], v[3:])


def evaluate(expr, args, br):
    if isinstance(expr, int):
        return args[expr - 1]
    return br(evaluate(expr[0], args, br), evaluate(expr[1], args, br))


def evaluate_element(terms, args, br, dim):
    out = [Fraction(0)] * dim
    for c, e in terms:
        val = evaluate(e, args, br)
        out = [o + c * x for o, x in zip(out, val)]
    return out


def unit(i, dim):
    v = [Fraction(0)] * dim
    v[i] = Fraction(1)
    return v


def same_multilinear_map(lhs_terms, rhs_terms, arity, br=double_bracket, dim=6):
    for idx in itertools.product(range(dim), repeat=arity):
        args = [unit(i, dim) for i in idx]
        if evaluate_element(lhs_terms, args, br, dim) != evaluate_element(rhs_terms, args, br, dim):
            return False
    return True


def ad_matrix(x):
    cols = [sl2_bracket(x, unit(j, 3)) for j in range(3)]
    return [[cols[j][i] for j in range(3)] for i in range(3)]


def matmul(a, b):
    return [[sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3)] for i in range(3)]


def trace_form_value(word, args):
    m = [[Fraction(int(i == j)) for j in range(3)] for i in range(3)]
    for s in word:
        m = matmul(m, ad_matrix(args[s - 1]))
    return sum(m[i][i] for i in range(3))


def trace_element_value(t: TraceElement, args):
    return sum(c * trace_form_value(w, args) for w, c in t.coeffs)


def traced_value(p: LieElement, args):
    # oracle: literal trace of y ↦ p(x_1..x_n, y)
    total = Fraction(0)
    for j in range(3):
        y = unit(j, 3)
        total += evaluate_element(p.terms(), list(args) + [y], sl2_bracket, 3)[j]
    return total


# ---------------------------------------------------------------- normal form


def test_basis_monomial_is_fixed():
    nf = lie_normal_form(parse_bracket("[x1,[x2,x3]]"))
    assert nf == LieElement.basis((1, 2))


def test_antisymmetry():
    assert lie_normal_form(parse_bracket("[x2,x1]")) == LieElement.basis((1,)).scale(-1)


def test_normal_form_signs_match_evaluation():
    e = parse_bracket("[x3,[x1,x2]]")
    nf = lie_normal_form(e)
    assert nf.as_dict() == {(1, 2): -1, (2, 1): 1}
    assert same_multilinear_map([(1, e)], nf.terms(), 3)


def test_jacobi_sum_vanishes():
    assert lie_normal_form([(1, m) for m in jacobi_monomials()], 3).is_zero()


def test_malformed_expressions():
    with pytest.raises(MalformedExpressionError):
        lie_normal_form((1, (1, 2)))
    with pytest.raises(MalformedExpressionError):
        lie_normal_form((1, 3))
    with pytest.raises(MalformedExpressionError):
        parse_bracket("[x1,x2")


def _random_expr(n, rng):
    labels = list(range(1, n + 1))
    rng.shuffle(labels)

    def build(items):
        if len(items) == 1:
            return items[0]
        k = rng.randint(1, len(items) - 1)
        return (build(items[:k]), build(items[k:]))

    return build(labels)


def test_random_normal_forms_evaluate_correctly():
    rng = random.Random(3)
    for _ in range(15):
        e = _random_expr(3, rng)
        assert same_multilinear_map([(1, e)], lie_normal_form(e).terms(), 3)
    for _ in range(6):
        e = _random_expr(4, rng)
        assert same_multilinear_map([(1, e)], lie_normal_form(e).terms(), 4, sl2_bracket, 3)


def test_normal_form_independent_of_rewriting_order():
    # equal Lie polynomials written differently give the same normal form
    a = parse_bracket("[[x1,x2],[x3,x4]]")
    b = [(1, parse_bracket("[x1,[x2,[x3,x4]]]")), (-1, parse_bracket("[x2,[x1,[x3,x4]]]"))]
    assert lie_normal_form(a) == lie_normal_form(b, 4)


# ---------------------------------------------------------------- composition


def test_compose_bracket_into_first_slot():
    br = LieElement.basis((1,))
    assert lie_compose(br, br, 1) == lie_normal_form(parse_bracket("[[x1,x2],x3]"))


def test_unit_laws():
    p = lie_normal_form(parse_bracket("[x2,[x3,x1]]"))
    one = LieElement.identity()
    for i in range(1, 4):
        assert lie_compose(p, one, i) == p
    assert lie_compose(one, p, 1) == p


def _random_element(n, rng):
    d = {}
    for sigma in itertools.permutations(range(1, n)):
        if rng.random() < 0.6:
            d[sigma] = Fraction(rng.randint(-3, 3), rng.randint(1, 2))
    return LieElement.from_dict(n, d)


def test_associativity_binary():
    br = LieElement.basis((1,))
    for p, q, r in itertools.product([br, br.relabel({1: 2, 2: 1})], repeat=3):
        assert lie_compose(lie_compose(p, q, 1), r, 1) == lie_compose(p, lie_compose(q, r, 1), 1)


def test_associativity_random():
    rng = random.Random(11)
    for _ in range(5):
        p, q, r = _random_element(3, rng), _random_element(2, rng), _random_element(3, rng)
        # sequential: (p ∘_2 q) ∘_3 r = p ∘_2 (q ∘_2 r)
        assert lie_compose(lie_compose(p, q, 2), r, 3) == lie_compose(p, lie_compose(q, r, 2), 2)
        # parallel: (p ∘_1 q) ∘_4 r = (p ∘_3 r) ∘_1 q
        assert lie_compose(lie_compose(p, q, 1), r, 4) == lie_compose(lie_compose(p, r, 3), q, 1)


def test_composition_matches_evaluation():
    rng = random.Random(5)
    p, q = _random_element(3, rng), _random_element(2, rng)
    comp = lie_compose(p, q, 2)
    lhs = []
    for cp, ep in p.terms():
        for cq, eq in q.terms():
            lhs.append((cp * cq, (ep, eq)))
    # evaluate directly: p(x1, q(x2,x3), x4)
    for idx in itertools.product(range(3), repeat=4):
        args = [unit(i, 3) for i in idx]
        inner = evaluate_element(q.terms(), args[1:3], sl2_bracket, 3)
        direct = evaluate_element(p.terms(), [args[0], inner, args[3]], sl2_bracket, 3)
        assert direct == evaluate_element(comp.terms(), args, sl2_bracket, 3)


# ---------------------------------------------------------------- dimensions


@pytest.mark.parametrize("n,expected", [(2, 1), (3, 2), (5, 24)])
def test_lie_dim_examples(n, expected):
    assert lie_dim(n) == expected


@pytest.mark.parametrize("n", range(1, 8))
def test_lie_dim_factorial(n):
    assert lie_dim(n) == math.factorial(n - 1)


@pytest.mark.parametrize("n", range(2, 6))
def test_exact_and_modular_agree(n):
    assert lie_dim(n, "exact") == lie_dim(n, "modular")


@pytest.mark.parametrize("n", range(2, 7))
def test_word_space_cross_check(n):
    assert word_space_rank(n) == math.factorial(n - 1)


# ------------------------------------------------------------------- traces


@pytest.mark.parametrize("n", [2, 3, 4])
def test_trace_of_right_normed_is_kappa(n):
    assert trace_reduce(LieElement.basis(tuple(range(1, n + 1)))) == TraceElement.kappa(n)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_kappa_cyclic_symmetry(n):
    cycle = list(range(2, n + 1)) + [1]
    assert TraceElement.kappa(n).act(cycle) == TraceElement.kappa(n)


def test_kappa_not_symmetric_under_transposition():
    assert TraceElement.kappa(4).act([2, 1, 3, 4]) != TraceElement.kappa(4)


def test_trace_of_random_lie4_matches_matrix_trace():
    rng = random.Random(2)
    p = _random_element(4, rng)
    t = trace_reduce(p)
    for idx in itertools.product(range(3), repeat=3):
        args = [unit(i, 3) for i in idx]
        assert trace_element_value(t, args) == traced_value(p, args)


@pytest.mark.parametrize("n", range(1, 6))
def test_trace_space_dimension(n):
    assert trace_space_dim(n) == math.factorial(n - 1)


def test_cyclic_composition_rule_pinned_by_evaluation():
    rng = random.Random(8)
    for a, b in [(1, 2), (2, 1), (2, 2), (1, 3), (3, 1)]:
        p, q = _random_element(a + 1, rng), _random_element(b + 1, rng)
        lhs = trace_of_composite(p, q)
        rhs = trace_of_composite(q, p)
        swap = cyclic_block_swap(a, b)
        assert lhs == rhs.relabel(swap)
        for idx in itertools.product(range(3), repeat=a + b):
            args = [unit(i, 3) for i in idx]
            moved = [args[swap[k] - 1] for k in range(1, a + b + 1)]
            assert trace_element_value(lhs, args) == trace_element_value(rhs, moved)


def test_prop_juxtaposition():
    br = PropElement.from_lie(LieElement.basis((1,)))
    wheel = PropElement.from_trace(TraceElement.kappa(2))
    j = br.juxtapose(wheel)
    assert (j.n, j.m) == (4, 1)
    assert j.blocks() == [(((1, 2),), ((3, 4),))]


def test_json_shapes():
    data = lie_normal_form(parse_bracket("[x3,[x1,x2]]")).to_json()
    assert data["arity"] == 3 and len(data["terms"]) == 2
    assert TraceElement.kappa(3).to_json()["terms"][0]["word"] == [1, 2, 3]


def test_inverse_block_convention_is_rejected():
    rng = random.Random(8)
    # for a + b = 3 every block swap is a rotation, so use a = 1, b = 3
    p, q = _random_element(2, rng), _random_element(4, rng)
    while trace_of_composite(p, q).is_zero():
        p, q = _random_element(2, rng), _random_element(4, rng)
    assert trace_of_composite(p, q) == trace_of_composite(q, p).relabel(cyclic_block_swap(1, 3))
    wrong = {v: k for k, v in cyclic_block_swap(1, 3).items()}
    assert trace_of_composite(p, q) != trace_of_composite(q, p).relabel(wrong)
