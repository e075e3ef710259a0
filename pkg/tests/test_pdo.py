from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kontsevich.mvf import PolyCoeff
from kontsevich.pdo import (
    OpSeries,
    PolyDiffOp,
    StarSeries,
    apply,
    associativity_defect,
    compose_at,
    cup,
    deformed_differential,
    gerstenhaber_bracket,
    hochschild_d,
    monomials,
    moyal_star,
)


def x(d, i):
    return PolyCoeff.variable(d, i - 1)


def random_op(rng, d, arity, max_order=2, n_terms=3):
    terms = {}
    for _ in range(n_terms):
        derivs = []
        for _ in range(arity):
            mu = [0] * d
            for _ in range(int(rng.integers(0, max_order + 1))):
                mu[int(rng.integers(0, d))] += 1
            derivs.append(tuple(mu))
        coeff = PolyCoeff.constant(d, int(rng.integers(-3, 4)))
        coeff = coeff + PolyCoeff.variable(d, int(rng.integers(0, d)), int(rng.integers(-3, 4)))
        terms[tuple(derivs)] = coeff
    return PolyDiffOp(d, arity, terms)


def eval_bracket(a, b, args):
    """Gerstenhaber bracket evaluated pointwise from nested application only."""
    def circ_eval(p, q, fs):
        total = PolyCoeff(p.d)
        for i in range(p.arity):
            inner = apply(q, fs[i:i + q.arity])
            val = apply(p, list(fs[:i]) + [inner] + list(fs[i + q.arity:]))
            total = total + val * ((-1) ** (i * (q.arity - 1)))
        return total
    sign = (-1) ** ((a.arity - 1) * (b.arity - 1))
    return circ_eval(a, b, args) - circ_eval(b, a, args) * sign


# -- examples ------------------------------------------------------------------

def test_apply_examples():
    d = 2
    m = PolyDiffOp.multiplication(d)
    assert apply(m, [x(d, 1), x(d, 2)]) == x(d, 1) * x(d, 2)
    op = PolyDiffOp.from_indices(d, [[0], [1]])
    assert apply(op, [x(d, 1), x(d, 2)]) == PolyCoeff.constant(d)
    op = PolyDiffOp.from_indices(d, [[0], [1]], x(d, 2))
    assert apply(op, [x(d, 1) * x(d, 1), x(d, 2)]) == 2 * x(d, 1) * x(d, 2)
    with pytest.raises(ValueError):
        apply(op, [x(d, 1)])


def test_bracket_examples():
    d = 2
    m = PolyDiffOp.multiplication(d)
    assert gerstenhaber_bracket(m, m).is_zero()
    assert gerstenhaber_bracket(m, PolyDiffOp.from_indices(d, [[0]])).is_zero()
    T = PolyDiffOp.from_indices(d, [[0], [0]])
    br = gerstenhaber_bracket(m, T)
    for args in product(monomials(d, 2), repeat=3):
        assert apply(br, list(args)) == eval_bracket(m, T, list(args))
    with pytest.raises(ValueError):
        gerstenhaber_bracket(m, PolyDiffOp.multiplication(3))


def test_hochschild_examples():
    d = 2
    assert hochschild_d(PolyDiffOp.multiplication(d)).is_zero()
    assert hochschild_d(PolyDiffOp.from_indices(d, [[0]])).is_zero()
    T = PolyDiffOp.from_indices(d, [[0], [1]])
    assert hochschild_d(T) == -gerstenhaber_bracket(PolyDiffOp.multiplication(d), T)


def test_star_constant_term_enforced():
    d = 2
    with pytest.raises(ValueError):
        StarSeries([PolyDiffOp.from_indices(d, [[0], [1]])])
    s = StarSeries.undeformed(d, 2)
    assert s.order == 2


def test_order_mismatch_is_error():
    d = 2
    s = StarSeries.undeformed(d, 2)
    t = OpSeries.zero(d, 1, 1)
    with pytest.raises(ValueError):
        deformed_differential(t, s)
    with pytest.raises(ValueError):
        cup(t, t, s)


def test_deformed_differential_examples():
    d = 2
    m = PolyDiffOp.multiplication(d)
    s = StarSeries.undeformed(d, 1)
    assert deformed_differential(OpSeries([m, PolyDiffOp(d, 2)]), s).is_zero()
    # even arity: [delta, m] = -d(delta); odd arity picks up (-1)^arity
    T2 = PolyDiffOp.from_indices(d, [[0], [1]], x(d, 1))
    T1 = PolyDiffOp.from_indices(d, [[0, 0]])
    for T in (T2, T1):
        res = deformed_differential(OpSeries([T, T]), s)
        sign = (-1) ** T.arity
        for k in range(2):
            assert res[k] == hochschild_d(T) * (-sign)
    moy = moyal_star([[0, 1], [-1, 0]], 1)
    delta = PolyDiffOp.from_indices(d, [[0], [1]])
    res = deformed_differential(OpSeries([delta, PolyDiffOp(d, 2)]), moy)
    for args in product(monomials(d, 2), repeat=3):
        assert apply(res[1], list(args)) == eval_bracket(delta, moy[1], list(args))


def test_cup_examples():
    d = 2
    s = StarSeries.undeformed(d, 1)
    ident = OpSeries([PolyDiffOp.identity(d), PolyDiffOp(d, 1)])
    assert cup(ident, ident, s) == OpSeries([PolyDiffOp.multiplication(d), PolyDiffOp(d, 2)])
    t1 = OpSeries([PolyDiffOp.from_indices(d, [[0]]), PolyDiffOp(d, 1)])
    t2 = OpSeries([PolyDiffOp.from_indices(d, [[1]]), PolyDiffOp(d, 1)])
    assert cup(t1, t2, s)[0] == PolyDiffOp.from_indices(d, [[0], [1]])
    moy = moyal_star([[0, Fraction(1, 2)], [Fraction(-1, 2), 0]], 2)
    ident = OpSeries([PolyDiffOp.identity(d)] + [PolyDiffOp(d, 1)] * 2)
    assert cup(ident, ident, moy) == moy


def test_associativity_defect_examples():
    d = 2
    f, g, h = x(d, 1) * x(d, 2), x(d, 1) * x(d, 1), x(d, 2) * x(d, 2) * x(d, 1)
    assert all(p.is_zero() for p in associativity_defect(StarSeries.undeformed(d, 2), f, g, h))
    moy = moyal_star([[0, Fraction(1, 2)], [Fraction(-1, 2), 0]], 3)
    for a, b, c in product(monomials(d, 2), repeat=3):
        assert all(p.is_zero() for p in associativity_defect(moy, a, b, c))
    bad = StarSeries([moy[0], moy[1], moy[2] + PolyDiffOp.from_indices(d, [[0, 0], []])])
    res = associativity_defect(bad, x(d, 1), x(d, 1), x(d, 1))
    assert res[0].is_zero() and res[1].is_zero() and not res[2].is_zero()


def test_star_bracket_is_associator():
    d = 2
    moy = moyal_star([[0, 1], [-1, 0]], 2)
    s = moy[0] + moy[1]
    br = gerstenhaber_bracket(s, s)
    direct = (compose_at(s, 0, s) - compose_at(s, 1, s)) * 2
    assert br == direct


def test_json_roundtrip():
    rng = np.random.default_rng(1)
    op = random_op(rng, 3, 2) * Fraction(2, 7)
    assert PolyDiffOp.from_json(op.to_json()) == op
    ser = moyal_star([[0, 1], [-1, 0]], 2)
    assert OpSeries.from_json(ser.to_json()) == ser


# -- properties ----------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3), st.integers(0, 3))
def test_d_squared_zero(seed, d, arity):
    rng = np.random.default_rng(seed)
    T = random_op(rng, d, arity)
    assert hochschild_d(hochschild_d(T)).is_zero()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 2), st.integers(0, 2))
def test_bracket_matches_pointwise_oracle(seed, a_ar, b_ar):
    rng = np.random.default_rng(seed)
    d = 2
    a, b = random_op(rng, d, a_ar + 1), random_op(rng, d, b_ar)
    br = gerstenhaber_bracket(a, b)
    mons = monomials(d, 2)
    for _ in range(5):
        args = [mons[int(rng.integers(len(mons)))] for _ in range(br.arity)]
        assert apply(br, args) == eval_bracket(a, b, args)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 2), st.integers(0, 2), st.integers(0, 2))
def test_undeformed_cup_associative(seed, a1, a2, a3):
    rng = np.random.default_rng(seed)
    d = 2
    s = StarSeries.undeformed(d, 0)
    t1, t2, t3 = (OpSeries([random_op(rng, d, a)]) for a in (a1, a2, a3))
    assert cup(cup(t1, t2, s), t3, s) == cup(t1, cup(t2, t3, s), s)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 2))
def test_apply_multilinear(seed, arity):
    rng = np.random.default_rng(seed)
    d = 2
    op = random_op(rng, d, arity)
    mons = monomials(d, 3)
    args = [mons[int(rng.integers(len(mons)))] for _ in range(arity)]
    other = mons[int(rng.integers(len(mons)))]
    lhs = apply(op, [args[0] * 3 + other] + args[1:])
    rhs = apply(op, args) * 3 + apply(op, [other] + args[1:])
    assert lhs == rhs


def test_cocycle_cup_is_cocycle():
    """Derivations are cocycles for [., moyal]; so is their cup product."""
    d = 2
    moy = moyal_star([[0, 1], [-1, 0]], 2)
    z = PolyDiffOp(d, 1)
    t1 = OpSeries([PolyDiffOp.from_indices(d, [[0]]), z, z])
    t2 = OpSeries([PolyDiffOp.from_indices(d, [[1]]), z, z])
    assert deformed_differential(t1, moy).is_zero()
    assert deformed_differential(t2, moy).is_zero()
    assert deformed_differential(cup(t1, t2, moy), moy).is_zero()
