"""Assembly of the formality morphism from graphs and weights.

Everything is first built symbolically: a ``Weighted`` object is a polynomial
in graph weights whose coefficients are exact operators,

    sum_k (W_{k1} * ... * W_{kr}) * value_k,

keyed by sorted tuples of canonical graph encodings.  Weights known without
integration (empty charts) are folded into the rational coefficients.  The
numbers only enter in ``evaluate``, which also yields a first-order error
bound from the weight standard errors.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction
from itertools import permutations, product
from math import factorial, prod
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .graph import (
    Graph,
    canonical_form,
    contract_12,
    enumerate_splittings,
    iter_graphs,
    parse_graph,
)
from .mvf import Multivector, PolyCoeff, perm_sign, schouten_modified, wedge
from .pdo import (
    OpSeries,
    PolyDiffOp,
    StarSeries,
    apply,
    compose_at,
    gerstenhaber_bracket,
    monomials,
)
from .weight import (
    DEFAULT_SAMPLES,
    CacheMiss,
    WeightCache,
    _exact_weight,
    compute_weight,
)

Key = tuple  # sorted tuple of canonical graph encodings


# -- weight polynomials ----------------------------------------------------------

class Weighted:
    """Finite sum of weight monomials times values (operators or polynomials)."""

    __slots__ = ("zero", "terms")

    def __init__(self, zero, terms: Mapping[Key, object] | None = None):
        self.zero = zero
        self.terms: dict[Key, object] = {}
        for k, v in (terms or {}).items():
            if not v.is_zero():
                self.terms[tuple(sorted(k))] = v

    @classmethod
    def constant(cls, value):
        return cls(value * 0, {(): value})

    def is_zero(self):
        return not self.terms

    def __add__(self, other: "Weighted") -> "Weighted":
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out[k] + v if k in out else v
        return Weighted(self.zero, out)

    def __neg__(self):
        return Weighted(self.zero, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, s):
        return Weighted(self.zero, {k: v * s for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, Weighted):
            return NotImplemented
        return (self - other).is_zero()

    def __repr__(self):
        return f"Weighted({len(self.terms)} monomials)"

    def keys(self) -> set[str]:
        return {g for k in self.terms for g in k}

    def map(self, fn: Callable, zero) -> "Weighted":
        """Apply a linear map to every coefficient."""
        return Weighted(zero, {k: fn(v) for k, v in self.terms.items()})

    def combine(self, other: "Weighted", fn: Callable, zero) -> "Weighted":
        """Bilinear extension of ``fn``; weight monomials multiply."""
        out: dict[Key, object] = {}
        for ka, va in self.terms.items():
            for kb, vb in other.terms.items():
                v = fn(va, vb)
                if v.is_zero():
                    continue
                k = tuple(sorted(ka + kb))
                out[k] = out[k] + v if k in out else v
        return Weighted(zero, out)

    def evaluate(self, table: "WeightTable"):
        total = self.zero
        for k, v in self.terms.items():
            c = prod((table.value[g] for g in k), start=1.0)
            total = total + v * c
        return total

    def error_bound(self, table: "WeightTable") -> float:
        """First-order bound on the largest coefficient error."""
        total = 0.0
        for k, v in self.terms.items():
            sens = 0.0
            for j, g in enumerate(k):
                rest = prod((abs(table.value[h]) for i, h in enumerate(k) if i != j), start=1.0)
                sens += table.stderr[g] * rest
            if sens:
                total += sens * v.max_abs()
        return total


@dataclass
class WeightTable:
    value: dict[str, float] = field(default_factory=dict)
    stderr: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_cache(cls, keys: Iterable[str], cache: WeightCache) -> "WeightTable":
        table, missing = cls(), []
        for g in sorted(set(keys)):
            est = cache.lookup(parse_graph(g))
            if est is None:
                missing.append(g)
                continue
            table.value[g], table.stderr[g] = est.value, est.stderr
        if missing:
            raise CacheMiss(missing)
        return table


def series_keys(series: Iterable[Weighted]) -> set[str]:
    return set().union(*(w.keys() for w in series))


def fill_cache(cache: WeightCache, keys: Iterable[str], samples: int = DEFAULT_SAMPLES,
               seed: int = 0, prefer_quadrature: bool = True) -> int:
    """Compute every weight in ``keys`` that the cache does not hold."""
    added = 0
    for g in sorted(set(keys)):
        graph = parse_graph(g)
        if cache.lookup(graph) is None:
            cache.put(graph, compute_weight(graph, samples, seed, prefer_quadrature))
            added += 1
    return added


def evaluate_series(series: Sequence[Weighted], cache: WeightCache, cls=OpSeries):
    table = WeightTable.from_cache(series_keys(series), cache)
    return cls([w.evaluate(table) for w in series]), [w.error_bound(table) for w in series]


def _weight_term(g: Graph) -> tuple[Key, int]:
    """(weight key, rational factor) standing for W_g."""
    exact = _exact_weight(g)
    if exact is not None:
        return (), int(round(exact))
    canon, eps = canonical_form(g)
    return (canon.encode(),), eps


# -- B_Gamma ---------------------------------------------------------------------

def _support(mv: Multivector):
    """Ordered index tuples with nonzero pairing, with k! times the pairing value."""
    out = []
    for idx, c in mv.comps.items():
        for p in permutations(range(mv.k)):
            out.append((tuple(idx[i] for i in p), c * perm_sign(p)))
    return out


def b_gamma(g: Graph, multivectors: Sequence[Multivector], normalized: bool = True) -> PolyDiffOp:
    """The operator f_1 (x) ... (x) f_m -> sum_I prod D gamma_k^I prod D f_l.

    With ``normalized=False`` the 1/k! of each pairing is left out, so the
    result is prod_k k! times B_Gamma (integral for integral inputs).
    """
    if len(multivectors) != g.n:
        raise ValueError(f"graph has {g.n} aerial vertices, got {len(multivectors)} multivectors")
    if not multivectors:
        raise ValueError("need at least one multivector")
    d = multivectors[0].d
    if any(mv.d != d for mv in multivectors):
        raise ValueError("dimension mismatch among multivectors")
    zero = PolyDiffOp(d, g.m)
    blocks = [g.block(k) for k in range(1, g.n + 1)]
    if any(mv.k != len(b) for mv, b in zip(multivectors, blocks)):
        return zero
    supports = [_support(mv) for mv in multivectors]
    targets = [t for _, t in g.edges]
    terms: dict[tuple, PolyCoeff] = {}
    memo: dict[tuple, PolyCoeff] = {}
    for choice in product(*supports):
        I = [0] * len(targets)
        for blk, (idx, _) in zip(blocks, choice):
            for e, i in zip(blk, idx):
                I[e] = i
        derivs = [[0] * d for _ in range(g.n + g.m)]
        for e, t in enumerate(targets):
            slot = t - 1 if t > 0 else g.n - t - 1
            derivs[slot][I[e]] += 1
        coeff = None
        for k, (idx, c) in enumerate(choice):
            memo_key = (k, idx, tuple(derivs[k]))
            if memo_key not in memo:
                memo[memo_key] = c.diff_multi(derivs[k])
            c = memo[memo_key]
            if not c:
                coeff = None
                break
            coeff = c if coeff is None else coeff * c
        if coeff is None:
            continue
        key = tuple(tuple(mu) for mu in derivs[g.n:])
        terms[key] = terms[key] + coeff if key in terms else coeff
    out = PolyDiffOp(d, g.m, terms)
    if not normalized:
        return out
    # the 1/k! of each pairing is applied once, outside the loop
    return out * Fraction(1, prod(factorial(mv.k) for mv in multivectors))


def _arity(profile: Sequence[int]) -> int:
    return sum(profile) - 2 * len(profile) + 2


def canonical_graphs(n: int, m: int, profile: Sequence[int]):
    for g in iter_graphs(n, m, profile=tuple(profile)):
        if canonical_form(g)[0] == g:
            yield g


# -- Taylor coefficients and series ------------------------------------------------

def taylor_symbolic(multivectors: Sequence[Multivector]) -> Weighted:
    """U_n(gamma_1, ..., gamma_n) as a weight polynomial.

    Summing W B over the relabelings of one graph gives prod s_k! times the
    canonical representative, so only canonical graphs are visited."""
    n = len(multivectors)
    if n < 1:
        raise ValueError("n must be at least 1")
    d = multivectors[0].d
    profile = tuple(mv.k for mv in multivectors)
    m = _arity(profile)
    if m < 0:
        return Weighted(PolyDiffOp(d, 0))
    mult = prod(factorial(k) for k in profile)
    out: dict[Key, PolyDiffOp] = {}
    for g in canonical_graphs(n, m, profile):
        key, f = _weight_term(g)
        if f == 0:
            continue
        B = b_gamma(g, multivectors)
        if B.is_zero():
            continue
        B = B * (mult * f)
        out[key] = out[key] + B if key in out else B
    return Weighted(PolyDiffOp(d, m), out)


def taylor_u(n: int, multivectors: Sequence[Multivector], cache: WeightCache) -> PolyDiffOp:
    if len(multivectors) != n:
        raise ValueError(f"expected {n} multivectors")
    w = taylor_symbolic(multivectors)
    return w.evaluate(WeightTable.from_cache(w.keys(), cache))


def star_symbolic(gamma: Multivector, order: int) -> list[Weighted]:
    if gamma.k != 2:
        raise ValueError("gamma must be a bivector")
    out = [Weighted.constant(PolyDiffOp.multiplication(gamma.d))]
    for k in range(1, order + 1):
        out.append(taylor_symbolic([gamma] * k) * Fraction(1, factorial(k)))
    return out


def uprime_symbolic(delta: Multivector, gamma: Multivector, order: int) -> list[Weighted]:
    if gamma.k != 2:
        raise ValueError("gamma must be a bivector")
    return [taylor_symbolic([delta] + [gamma] * n) * Fraction(1, factorial(n)) for n in range(order + 1)]


def star_product(gamma: Multivector, order: int, cache: WeightCache) -> StarSeries:
    """m + sum_k hbar^k / k! U_k(gamma, ..., gamma)."""
    series, _ = evaluate_series(star_symbolic(gamma, order), cache, StarSeries)
    return series


def star_product_with_error(gamma: Multivector, order: int, cache: WeightCache):
    return evaluate_series(star_symbolic(gamma, order), cache, StarSeries)


def associator_symbolic(star: Sequence[Weighted]) -> list[Weighted]:
    """(f*g)*h - f*(g*h) as arity-3 operators, order by order."""
    d = star[0].zero.d
    out = []
    for k in range(len(star)):
        acc = Weighted(PolyDiffOp(d, 3))
        for i in range(k + 1):
            acc = acc + w_compose_at(star[i], 0, star[k - i]) - w_compose_at(star[i], 1, star[k - i])
        out.append(acc)
    return out


@dataclass
class AssociativityReport:
    order: int
    max_defect: list[float]     # per order, over all test triples
    max_bound: list[float]      # propagated first-order weight error, per order
    worst_ratio: list[float]    # max |defect| / bound per order (0 when both vanish)
    triples: int

    def ok(self, k_sigma: float = 3.0, max_bound: float | None = None) -> bool:
        within = all(dft <= k_sigma * bd + 1e-12 for dft, bd in zip(self.max_defect, self.max_bound))
        if max_bound is not None:
            within = within and all(b <= max_bound for b in self.max_bound)
        return within

    def to_json(self):
        return asdict(self)


def associativity_report(gamma: Multivector, order: int, cache: WeightCache,
                         test_degree: int = 3) -> AssociativityReport:
    """Associativity defects of the assembled star product on all triples of
    monomials x^a/a! of degree <= test_degree, with propagated weight errors."""
    assoc = associator_symbolic(star_symbolic(gamma, order))
    table = WeightTable.from_cache(series_keys(assoc), cache)
    mons = divided_monomials(gamma.d, test_degree)
    zero = PolyCoeff(gamma.d)
    max_defect, max_bound, worst = [], [], []
    for A in assoc:
        dmax = bmax = ratio = 0.0
        for f, g, h in product(mons, repeat=3):
            w = A.map(lambda op: apply(op, [f, g, h]), zero)
            val = w.evaluate(table).max_abs()
            bd = w.error_bound(table)
            dmax, bmax = max(dmax, val), max(bmax, bd)
            if val > 1e-12:
                ratio = max(ratio, val / bd if bd else float("inf"))
        max_defect.append(dmax)
        max_bound.append(bmax)
        worst.append(ratio)
    return AssociativityReport(order, max_defect, max_bound, worst, len(mons) ** 3)


def u_prime(delta: Multivector, gamma: Multivector, order: int, cache: WeightCache) -> OpSeries:
    """sum_n hbar^n / n! U_{n+1}(delta, gamma, ..., gamma)."""
    series, _ = evaluate_series(uprime_symbolic(delta, gamma, order), cache)
    return series


# -- symbolic operator algebra ---------------------------------------------------

def _op_zero(d, arity):
    return PolyDiffOp(d, max(arity, 0))


def _arity_of(w: Weighted) -> int:
    return w.zero.arity


def w_compose_at(a: Weighted, i: int, b: Weighted) -> Weighted:
    d = a.zero.d
    return a.combine(b, lambda x, y: compose_at(x, i, y), _op_zero(d, _arity_of(a) + _arity_of(b) - 1))


def w_bracket(a: Weighted, b: Weighted) -> Weighted:
    d = a.zero.d
    return a.combine(b, gerstenhaber_bracket, _op_zero(d, _arity_of(a) + _arity_of(b) - 1))


def _check_orders(*series):
    if len({len(s) for s in series}) != 1:
        raise ValueError("truncation orders must agree")


def w_deformed_differential(op: Sequence[Weighted], star: Sequence[Weighted]) -> list[Weighted]:
    """[delta, star], order by order."""
    _check_orders(op, star)
    d = star[0].zero.d
    out = []
    for k in range(len(star)):
        acc = Weighted(_op_zero(d, _arity_of(op[0]) + 1))
        for i in range(k + 1):
            acc = acc + w_bracket(op[i], star[k - i])
        out.append(acc)
    return out


def w_cup(t1: Sequence[Weighted], t2: Sequence[Weighted], star: Sequence[Weighted]) -> list[Weighted]:
    """(t1 u t2)(a, b) = t1(a) * t2(b), order by order."""
    _check_orders(t1, t2, star)
    d = star[0].zero.d
    arity = _arity_of(t1[0]) + _arity_of(t2[0])
    out = []
    for k in range(len(star)):
        acc = Weighted(_op_zero(d, arity))
        for l in range(k + 1):
            for i in range(k - l + 1):
                acc = acc + w_compose_at(w_compose_at(star[l], 1, t2[k - l - i]), 0, t1[i])
        out.append(acc)
    return out


# -- tangent map and the two cup expansions ----------------------------------------

# The tangent differentials are delta -> [delta, gamma] on multivectors and
# D -> [D, star] on cochains; with the conventions of this package U'
# intertwines them with sign +1 (checked exactly for functions and vector fields).
CHAIN_MAP_SIGN = 1


def chain_map_symbolic(delta: Multivector, gamma: Multivector, order: int) -> list[Weighted]:
    """U'([delta, hbar gamma]) - sign [U'(delta), star], order by order."""
    bracket = schouten_modified(delta, gamma)
    lhs_series = uprime_symbolic(bracket, gamma, order)
    rhs = w_deformed_differential(uprime_symbolic(delta, gamma, order), star_symbolic(gamma, order))
    out = []
    for k in range(order + 1):
        lhs = lhs_series[k - 1] if k >= 1 else Weighted(rhs[k].zero)
        out.append(lhs - rhs[k] * CHAIN_MAP_SIGN)
    return out


def chain_map_residual(delta: Multivector, gamma: Multivector, order: int, cache: WeightCache) -> OpSeries:
    series, _ = evaluate_series(chain_map_symbolic(delta, gamma, order), cache)
    return series


def chain_map_residual_with_error(delta, gamma, order, cache):
    return evaluate_series(chain_map_symbolic(delta, gamma, order), cache)


def _cup_profile(alpha: Multivector, beta: Multivector, n: int):
    return (alpha.k, beta.k) + (2,) * n


def w0_assembly(alpha: Multivector, beta: Multivector, gamma: Multivector, order: int) -> list[Weighted]:
    """sum_n hbar^n / n! sum_{G_{n+2,m}} W0_G B_G(alpha, beta, gamma, ...)."""
    d, m = alpha.d, alpha.k + beta.k
    out = []
    for n in range(order + 1):
        acc: dict[Key, PolyDiffOp] = {}
        mvs = [alpha, beta] + [gamma] * n
        for g in iter_graphs(n + 2, m, profile=_cup_profile(alpha, beta, n)):
            delta = contract_12(g)
            if delta is None:
                continue
            key, f = _weight_term(delta)
            if f == 0:
                continue
            B = b_gamma(g, mvs)
            if B.is_zero():
                continue
            B = B * f
            acc[key] = acc[key] + B if key in acc else B
        out.append(Weighted(PolyDiffOp(d, m), acc) * Fraction(1, factorial(n)))
    return out


def w1_assembly(alpha: Multivector, beta: Multivector, gamma: Multivector, order: int) -> list[Weighted]:
    """sum_n hbar^n / n! sum_{G_{n+2,m}} W1_G B_G(alpha, beta, gamma, ...)."""
    d, m = alpha.d, alpha.k + beta.k
    out = []
    for n in range(order + 1):
        acc: dict[Key, PolyDiffOp] = {}
        mvs = [alpha, beta] + [gamma] * n
        for g in iter_graphs(n + 2, m, profile=_cup_profile(alpha, beta, n)):
            B = None
            for s in enumerate_splittings(g):
                if s.zero:
                    continue
                coeff, key = s.sign, ()
                for sub in s.graphs:
                    k, f = _weight_term(sub)
                    coeff *= f
                    key += k
                    if coeff == 0:
                        break
                if coeff == 0:
                    continue
                if B is None:
                    B = b_gamma(g, mvs)
                if B.is_zero():
                    break
                key = tuple(sorted(key))
                acc[key] = acc[key] + B * coeff if key in acc else B * coeff
        out.append(Weighted(PolyDiffOp(d, m), acc) * Fraction(1, factorial(n)))
    return out


def cup_symbolic(alpha: Multivector, beta: Multivector, gamma: Multivector, order: int) -> list[Weighted]:
    """cup(U'(alpha), U'(beta), star)."""
    return w_cup(uprime_symbolic(alpha, gamma, order), uprime_symbolic(beta, gamma, order),
                 star_symbolic(gamma, order))


def cup_difference_symbolic(alpha, beta, gamma, order) -> list[Weighted]:
    """U'(alpha ^ beta) - cup(U'(alpha), U'(beta))."""
    first = uprime_symbolic(wedge(alpha, beta), gamma, order)
    second = cup_symbolic(alpha, beta, gamma, order)
    return [a - b for a, b in zip(first, second)]


def cup_difference(alpha: Multivector, beta: Multivector, gamma: Multivector, order: int,
                   cache: WeightCache) -> OpSeries:
    series, _ = evaluate_series(cup_difference_symbolic(alpha, beta, gamma, order), cache)
    return series


def cup_difference_with_error(alpha, beta, gamma, order, cache):
    return evaluate_series(cup_difference_symbolic(alpha, beta, gamma, order), cache)


# -- coboundary certification ----------------------------------------------------

@dataclass
class CupCertificate:
    order: int
    residuals: list[float]
    primitive: OpSeries | None
    bracket_terms: list[OpSeries]
    bracket_coeffs: list[float]
    test_degree: int
    tol: float
    certified: bool
    rank: int = 0
    unknowns: int = 0
    cache_fingerprint: str = ""
    messages: list[str] = field(default_factory=list)

    def to_json(self):
        return {
            "order": self.order,
            "residuals": list(self.residuals),
            "primitive": None if self.primitive is None else self.primitive.to_json(),
            "bracket_terms": [s.to_json() for s in self.bracket_terms],
            "bracket_coeffs": list(self.bracket_coeffs),
            "test_degree": self.test_degree,
            "tol": self.tol,
            "certified": self.certified,
            "rank": self.rank,
            "unknowns": self.unknowns,
            "cache_fingerprint": self.cache_fingerprint,
            "messages": list(self.messages),
        }


def _ansatz(alpha, beta, gamma, order, arity):
    """Primitive candidates: B_D(alpha, beta, gamma^j) over canonical D in G_{j+2, arity}."""
    cols = []
    if arity < 0:
        return cols
    for j in range(order + 1):
        mvs = [alpha, beta] + [gamma] * j
        seen = []
        for g in canonical_graphs(j + 2, arity, _cup_profile(alpha, beta, j)):
            B = b_gamma(g, mvs)
            if B.is_zero() or any(B == s or B == -s for s in seen):
                continue
            seen.append(B)
            cols.append((j, g, B))
    return cols


def _bracket_ansatz(alpha, beta, gamma, order, arity):
    """Non-coboundary terms: B_G([alpha, gamma], beta, gamma^j) and
    (-1)^k1 B_G(alpha, [beta, gamma], gamma^j)."""
    cols = []
    ag, bg = schouten_modified(alpha, gamma), schouten_modified(beta, gamma)
    sign = -1 if alpha.k % 2 else 1
    for j in range(order):
        for mvs, s in (([ag, beta] + [gamma] * j, 1), ([alpha, bg] + [gamma] * j, sign)):
            if any(mv.is_zero() for mv in mvs):
                continue
            profile = tuple(mv.k for mv in mvs)
            for g in canonical_graphs(j + 2, arity, profile):
                B = b_gamma(g, mvs) * s
                if not B.is_zero():
                    cols.append((j + 1, g, B))
    return cols


def divided_monomials(d: int, degree: int) -> list[PolyCoeff]:
    """x^a / a! for |a| <= degree; every derivative has coefficient 0 or 1."""
    out = []
    for p in monomials(d, degree):
        (exps,) = p.terms
        out.append(p * Fraction(1, prod(factorial(e) for e in exps)))
    return out


class _TestSpace:
    """Evaluates operators on all tuples of divided-power monomials, so that
    residuals are on the scale of operator coefficients."""

    def __init__(self, d, arity, degree):
        mons = divided_monomials(d, degree)
        self.tuples = list(product(mons, repeat=arity))

    def vector(self, op: PolyDiffOp) -> dict:
        out = {}
        for t, args in enumerate(self.tuples):
            for exps, c in apply(op, list(args)).terms.items():
                out[(t, exps)] = float(c)
        return out


def certify_coboundary(diff: OpSeries, star: StarSeries, alpha: Multivector, beta: Multivector,
                       gamma: Multivector, order: int | None = None, test_degree: int = 3,
                       tol: float = 1e-3, general: bool = False,
                       cache_fingerprint: str = "") -> CupCertificate:
    """Solve diff = [star, D] (+ bracket terms) order by order on a monomial test space.

    Unknowns are the coefficients of D = sum c B_D(alpha, beta, gamma, ...);
    all orders are solved jointly by least squares and residuals are
    reported per order.
    """
    order = diff.order if order is None else order
    if order > diff.order or order > star.order:
        raise ValueError("order exceeds the truncation of the inputs")
    if gamma.k != 2:
        raise ValueError("gamma must be a bivector")
    d, arity = diff.d, diff.arity
    messages = []
    brackets_vanish = schouten_modified(alpha, gamma).is_zero() and schouten_modified(beta, gamma).is_zero()
    if not general and not brackets_vanish:
        raise ValueError("precondition failed: [alpha, gamma] and [beta, gamma] must vanish "
                         "(use the general mode to include bracket terms)")
    cols = _ansatz(alpha, beta, gamma, order, arity - 1)
    bcols = _bracket_ansatz(alpha, beta, gamma, order, arity) if general else []
    n_unknowns = len(cols) + len(bcols)
    if arity == 0:
        tuples_count = lambda deg: 1
    else:
        tuples_count = lambda deg: len(monomials(d, deg)) ** arity
    while n_unknowns and tuples_count(test_degree) <= n_unknowns:
        test_degree += 1
        messages.append(f"test degree raised to {test_degree}")
    space = _TestSpace(d, arity, test_degree)

    # rows indexed by (order, tuple, exponent)
    columns = []
    for j, _, B in cols:
        col = {}
        for i in range(order - j + 1):
            for (t, e), v in space.vector(gerstenhaber_bracket(star[i], B)).items():
                col[(i + j, t, e)] = col.get((i + j, t, e), 0.0) + v
        columns.append(col)
    for j, _, B in bcols:
        columns.append({(j, t, e): v for (t, e), v in space.vector(B).items()})
    rhs = {}
    for k in range(order + 1):
        for (t, e), v in space.vector(diff[k]).items():
            rhs[(k, t, e)] = v
    rows = sorted(set(rhs).union(*[set(c) for c in columns]), key=lambda r: (r[0], r[1], r[2]))
    index = {r: i for i, r in enumerate(rows)}
    A = np.zeros((len(rows), n_unknowns))
    b = np.zeros(len(rows))
    for c, col in enumerate(columns):
        for r, v in col.items():
            A[index[r], c] = v
    for r, v in rhs.items():
        b[index[r]] = v
    if n_unknowns and len(rows):
        x, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    else:
        x, rank = np.zeros(n_unknowns), 0
    res = A @ x - b if len(rows) else np.zeros(0)
    residuals = []
    for k in range(order + 1):
        sel = [index[r] for r in rows if r[0] == k]
        residuals.append(float(np.max(np.abs(res[sel]))) if sel else 0.0)
    if rank < n_unknowns:
        messages.append(f"rank {rank} < {n_unknowns} unknowns: primitive not unique")

    primitive = None
    if arity >= 1:
        coeffs = [PolyDiffOp(d, arity - 1) for _ in range(order + 1)]
        for (j, _, B), c in zip(cols, x[:len(cols)]):
            if c != 0:
                coeffs[j] = coeffs[j] + B * float(c)
        primitive = OpSeries(coeffs, order)
    bracket_coeffs = [float(c) for c in x[len(cols):]]
    bterms = []
    if bcols:
        coeffs = [PolyDiffOp(d, arity) for _ in range(order + 1)]
        for (j, _, B), c in zip(bcols, bracket_coeffs):
            coeffs[j] = coeffs[j] + B * c
        bterms.append(OpSeries(coeffs, order))
    certified = all(r < tol for r in residuals)
    return CupCertificate(order, residuals, primitive, bterms, bracket_coeffs, test_degree, tol,
                          certified, int(rank), n_unknowns, cache_fingerprint, messages)


__all__ = [
    "Weighted",
    "WeightTable",
    "b_gamma",
    "taylor_symbolic",
    "taylor_u",
    "star_symbolic",
    "star_product",
    "star_product_with_error",
    "uprime_symbolic",
    "u_prime",
    "associator_symbolic",
    "associativity_report",
    "AssociativityReport",
    "divided_monomials",
    "chain_map_symbolic",
    "chain_map_residual",
    "chain_map_residual_with_error",
    "w0_assembly",
    "w1_assembly",
    "w_cup",
    "w_bracket",
    "w_compose_at",
    "w_deformed_differential",
    "cup_symbolic",
    "cup_difference",
    "cup_difference_symbolic",
    "cup_difference_with_error",
    "CupCertificate",
    "certify_coboundary",
    "fill_cache",
    "series_keys",
    "evaluate_series",
    "canonical_graphs",
]
