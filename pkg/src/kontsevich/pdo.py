"""Polydifferential operators acting on polynomials.

An arity-m operator is stored as ``{(mu_1, ..., mu_m): c}`` meaning
``c * d^{mu_1} f_1 * ... * d^{mu_m} f_m`` where each ``mu_j`` is an
exponent multi-index of length d.  Arity 0 (a plain function) is allowed so
that functions and zero-degree cochains flow through the same code paths.
"""
from __future__ import annotations

from fractions import Fraction
from itertools import product
from math import factorial
from typing import Iterable, Mapping, Sequence

from .mvf import PolyCoeff


def _leibniz_splits(mu: tuple, parts: int):
    """All ways to write mu = l_1 + ... + l_parts with multinomial weight."""
    per_coord = []
    for k in mu:
        opts = []
        for combo in _compositions(k, parts):
            w = factorial(k)
            for c in combo:
                w //= factorial(c)
            opts.append((combo, w))
        per_coord.append(opts)
    for choice in product(*per_coord):
        weight = 1
        for _, w in choice:
            weight *= w
        split = tuple(tuple(choice[i][0][p] for i in range(len(mu))) for p in range(parts))
        yield split, weight


def _compositions(k: int, parts: int):
    if parts == 1:
        yield (k,)
        return
    for first in range(k + 1):
        for rest in _compositions(k - first, parts - 1):
            yield (first,) + rest


def _add(a, b):
    return tuple(x + y for x, y in zip(a, b))


class PolyDiffOp:
    __slots__ = ("d", "arity", "terms")

    def __init__(self, d: int, arity: int, terms: Mapping[tuple, PolyCoeff] | None = None):
        if d < 1 or arity < 0:
            raise ValueError("need d >= 1 and arity >= 0")
        self.d, self.arity = d, arity
        clean: dict[tuple, PolyCoeff] = {}
        for derivs, c in (terms or {}).items():
            derivs = tuple(tuple(mu) for mu in derivs)
            if len(derivs) != arity or any(len(mu) != d or min(mu, default=0) < 0 for mu in derivs):
                raise ValueError(f"bad derivative multi-indices {derivs}")
            if not isinstance(c, PolyCoeff):
                c = PolyCoeff.constant(d, c)
            if c.d != d:
                raise ValueError("coefficient dimension mismatch")
            clean[derivs] = clean.get(derivs, PolyCoeff(d)) + c
        self.terms = {k: v for k, v in clean.items() if v}

    @classmethod
    def _raw(cls, d, arity, terms):
        """Trusted constructor: valid keys, PolyCoeff values; zero values are dropped."""
        self = object.__new__(cls)
        self.d, self.arity = d, arity
        self.terms = {k: v for k, v in terms.items() if v}
        return self

    # -- constructors --------------------------------------------------------
    @classmethod
    def zero(cls, d, arity):
        return cls(d, arity)

    @classmethod
    def multiplication(cls, d):
        z = (0,) * d
        return cls(d, 2, {(z, z): PolyCoeff.constant(d)})

    @classmethod
    def identity(cls, d):
        return cls(d, 1, {((0,) * d,): PolyCoeff.constant(d)})

    @classmethod
    def function(cls, p: PolyCoeff):
        return cls(p.d, 0, {(): p})

    @classmethod
    def from_indices(cls, d, idx_lists: Sequence[Sequence[int]], coeff=1):
        """Build ``coeff * d_{I_1} (x) ... (x) d_{I_m}`` from lists of 0-based indices."""
        derivs = []
        for idx in idx_lists:
            mu = [0] * d
            for i in idx:
                mu[i] += 1
            derivs.append(tuple(mu))
        return cls(d, len(derivs), {tuple(derivs): coeff})

    # -- arithmetic ----------------------------------------------------------
    def _check(self, other):
        if self.d != other.d:
            raise ValueError(f"dimension mismatch: {self.d} vs {other.d}")

    def is_zero(self):
        return not self.terms

    def __add__(self, other):
        self._check(other)
        if other.is_zero():
            return self
        if self.is_zero():
            return other
        if self.arity != other.arity:
            raise ValueError(f"arity mismatch: {self.arity} vs {other.arity}")
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out[k] + c if k in out else c
        return PolyDiffOp._raw(self.d, self.arity, out)

    def __neg__(self):
        return PolyDiffOp._raw(self.d, self.arity, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, s):
        if isinstance(s, PolyCoeff):
            self._check(s)
        elif s == 1:
            return self
        elif s == -1:
            return -self
        return PolyDiffOp._raw(self.d, self.arity, {k: c * s for k, c in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, PolyDiffOp):
            return NotImplemented
        if self.is_zero() and other.is_zero():
            return self.d == other.d
        return (self.d, self.arity, self.terms) == (other.d, other.arity, other.terms)

    def __hash__(self):
        return hash((self.d, self.arity, frozenset(self.terms.items())))

    def __repr__(self):
        if not self.terms:
            return f"PolyDiffOp(d={self.d}, arity={self.arity}, 0)"
        parts = []
        for derivs, c in sorted(self.terms.items()):
            ops = " (x) ".join(
                "".join(f"d{i + 1}" * k for i, k in enumerate(mu)) or "1" for mu in derivs
            )
            parts.append(f"({c}) {ops}")
        return f"PolyDiffOp(d={self.d}, arity={self.arity}, " + " + ".join(parts) + ")"

    def max_abs(self) -> float:
        return max((c.max_abs() for c in self.terms.values()), default=0.0)

    def map_coeffs(self, fn) -> "PolyDiffOp":
        return PolyDiffOp(self.d, self.arity, {k: c.map_coeffs(fn) for k, c in self.terms.items()})

    def order(self) -> int:
        return max((sum(sum(mu) for mu in k) for k in self.terms), default=-1)

    # -- JSON ----------------------------------------------------------------
    def to_json(self):
        return {
            "d": self.d,
            "arity": self.arity,
            "terms": [
                {"derivs": [list(mu) for mu in k], "poly": c.to_json()}
                for k, c in sorted(self.terms.items())
            ],
        }

    @classmethod
    def from_json(cls, data):
        d, arity = int(data["d"]), int(data["arity"])
        terms: dict[tuple, PolyCoeff] = {}
        for t in data.get("terms", []):
            k = tuple(tuple(mu) for mu in t["derivs"])
            terms[k] = terms.get(k, PolyCoeff(d)) + PolyCoeff.from_json(d, t["poly"])
        return cls(d, arity, terms)


def apply(op: PolyDiffOp, args: Sequence[PolyCoeff]) -> PolyCoeff:
    if len(args) != op.arity:
        raise ValueError(f"operator has arity {op.arity}, got {len(args)} arguments")
    for a in args:
        if a.d != op.d:
            raise ValueError("dimension mismatch")
    out = PolyCoeff(op.d)
    for derivs, c in op.terms.items():
        acc = c
        for mu, f in zip(derivs, args):
            df = f.diff_multi(mu)
            if not df:
                acc = None
                break
            acc = acc * df
        if acc is not None:
            out = out + acc
    return out


def compose_at(a: PolyDiffOp, i: int, b: PolyDiffOp) -> PolyDiffOp:
    """a o_i b: feed the output of b into slot i (0-based) of a, no sign."""
    a._check(b)
    if not 0 <= i < a.arity:
        raise ValueError(f"slot {i} out of range for arity {a.arity}")
    d = a.d
    arity = a.arity + b.arity - 1
    out: dict[tuple, PolyCoeff] = {}
    for adv, ac in a.terms.items():
        mu = adv[i]
        for bdv, bc in b.terms.items():
            for split, w in _leibniz_splits(mu, b.arity + 1):
                coeff = bc.diff_multi(split[0])
                if not coeff:
                    continue
                inner = tuple(_add(nu, lam) for nu, lam in zip(bdv, split[1:]))
                key = adv[:i] + inner + adv[i + 1:]
                out[key] = out.get(key, PolyCoeff(d)) + ac * coeff * w
    return PolyDiffOp(d, arity, out)


def _circ(a: PolyDiffOp, b: PolyDiffOp) -> PolyDiffOp:
    res = PolyDiffOp(a.d, a.arity + b.arity - 1)
    for i in range(a.arity):
        term = compose_at(a, i, b)
        res = res + (term if (i * (b.arity - 1)) % 2 == 0 else -term)
    return res


def gerstenhaber_bracket(a: PolyDiffOp, b: PolyDiffOp) -> PolyDiffOp:
    """[a, b] = a o b - (-1)^((|a|-1)(|b|-1)) b o a, with |.| the arity.

    ``a o b = sum_i (-1)^(i(|b|-1)) a o_i b``.  This makes [m, m] = 0 and
    [s, s] = 2 (s o_0 s - s o_1 s) for any arity-2 s.
    """
    a._check(b)
    arity = a.arity + b.arity - 1
    if arity < 0:
        return PolyDiffOp(a.d, 0)
    sign = -1 if ((a.arity - 1) * (b.arity - 1)) % 2 == 0 else 1
    res = PolyDiffOp(a.d, arity)
    if a.arity:
        res = res + _circ(a, b)
    if b.arity:
        res = res + _circ(b, a) * sign
    return res


def hochschild_d(op: PolyDiffOp) -> PolyDiffOp:
    """d = -[m, -]."""
    return -gerstenhaber_bracket(PolyDiffOp.multiplication(op.d), op)


class OpSeries:
    """Truncated series sum_{j<=N} hbar^j coeffs[j] of operators of one arity."""

    def __init__(self, coeffs: Iterable[PolyDiffOp], order: int | None = None):
        coeffs = list(coeffs)
        if not coeffs:
            raise ValueError("need at least one coefficient")
        if order is None:
            order = len(coeffs) - 1
        if len(coeffs) != order + 1:
            raise ValueError("length must equal order + 1")
        d, arity = coeffs[0].d, coeffs[0].arity
        for c in coeffs:
            if c.d != d or (c.arity != arity and not c.is_zero()):
                raise ValueError("coefficients must share dimension and arity")
        self.d, self.arity, self.order = d, arity, order
        self.coeffs = [c if c.arity == arity else PolyDiffOp(d, arity) for c in coeffs]

    @classmethod
    def zero(cls, d, arity, order):
        return cls([PolyDiffOp(d, arity) for _ in range(order + 1)])

    def __getitem__(self, j):
        return self.coeffs[j]

    def __len__(self):
        return len(self.coeffs)

    def _check(self, other):
        if self.order != other.order:
            raise ValueError(f"truncation order mismatch: {self.order} vs {other.order}")
        if self.d != other.d:
            raise ValueError("dimension mismatch")

    def __add__(self, other):
        self._check(other)
        return OpSeries([a + b for a, b in zip(self.coeffs, other.coeffs)], self.order)

    def __neg__(self):
        return OpSeries([-a for a in self.coeffs], self.order)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, s):
        return OpSeries([a * s for a in self.coeffs], self.order)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, OpSeries):
            return NotImplemented
        return self.order == other.order and self.coeffs == other.coeffs

    def is_zero(self):
        return all(c.is_zero() for c in self.coeffs)

    def max_abs(self):
        return [c.max_abs() for c in self.coeffs]

    def to_json(self):
        return {"order": self.order, "coefficients": [c.to_json() for c in self.coeffs]}

    @classmethod
    def from_json(cls, data):
        return cls([PolyDiffOp.from_json(c) for c in data["coefficients"]], int(data["order"]))


class StarSeries(OpSeries):
    """Arity-2 series whose constant term is the pointwise product."""

    def __init__(self, coeffs: Iterable[PolyDiffOp], order: int | None = None):
        super().__init__(coeffs, order)
        if self.arity != 2:
            raise ValueError("a star product has arity 2")
        if self.coeffs[0] != PolyDiffOp.multiplication(self.d):
            raise ValueError("the order-0 coefficient must be pointwise multiplication")

    @classmethod
    def undeformed(cls, d, order):
        return cls([PolyDiffOp.multiplication(d)] + [PolyDiffOp(d, 2) for _ in range(order)])


def moyal_star(pi: Sequence[Sequence], order: int) -> StarSeries:
    """exp(hbar pi^{ij} d_i (x) d_j) for a constant matrix pi, truncated."""
    d = len(pi)
    base = PolyDiffOp(d, 2)
    for i in range(d):
        for j in range(d):
            if pi[i][j]:
                base = base + PolyDiffOp.from_indices(d, [[i], [j]], Fraction(pi[i][j]))
    coeffs = [PolyDiffOp.multiplication(d)]
    power = PolyDiffOp.multiplication(d)
    for k in range(1, order + 1):
        # product of bidifferential operators with constant coefficients
        nxt = {}
        for (a1, a2), c1 in power.terms.items():
            for (b1, b2), c2 in base.terms.items():
                key = (_add(a1, b1), _add(a2, b2))
                nxt[key] = nxt.get(key, PolyCoeff(d)) + c1 * c2
        power = PolyDiffOp(d, 2, nxt)
        coeffs.append(power * Fraction(1, factorial(k)))
    return StarSeries(coeffs, order)


def deformed_differential(op: OpSeries, star: StarSeries) -> OpSeries:
    """[delta, star] truncated at the common order."""
    if op.order != star.order:
        raise ValueError(f"truncation order mismatch: {op.order} vs {star.order}")
    N = op.order
    out = []
    for k in range(N + 1):
        acc = PolyDiffOp(op.d, op.arity + 1)
        for i in range(k + 1):
            acc = acc + gerstenhaber_bracket(op[i], star[k - i])
        out.append(acc)
    return OpSeries(out, N)


def cup(t1: OpSeries, t2: OpSeries, star: StarSeries) -> OpSeries:
    """(t1 u t2)(a, b) = t1(a) * t2(b) with * the star product."""
    if not (t1.order == t2.order == star.order):
        raise ValueError("truncation orders must agree")
    if not (t1.d == t2.d == star.d):
        raise ValueError("dimension mismatch")
    N = star.order
    arity = t1.arity + t2.arity
    out = []
    for k in range(N + 1):
        acc = PolyDiffOp(star.d, arity)
        for l in range(k + 1):
            if star[l].is_zero():
                continue
            for i in range(k - l + 1):
                a, b = t1[i], t2[k - l - i]
                if a.is_zero() or b.is_zero():
                    continue
                acc = acc + compose_at(compose_at(star[l], 1, b), 0, a)
        out.append(acc)
    return OpSeries(out, N)


def associativity_defect(star: StarSeries, f: PolyCoeff, g: PolyCoeff, h: PolyCoeff) -> list:
    """(f*g)*h - f*(g*h), order by order up to the truncation order."""
    N = star.order
    fg = [apply(c, [f, g]) for c in star.coeffs]
    gh = [apply(c, [g, h]) for c in star.coeffs]
    out = []
    for k in range(N + 1):
        acc = PolyCoeff(star.d)
        for i in range(k + 1):
            acc = acc + apply(star[i], [fg[k - i], h]) - apply(star[i], [f, gh[k - i]])
        out.append(acc)
    return out


def monomials(d: int, max_degree: int) -> list:
    """All monic monomials of total degree <= max_degree."""
    out = []
    for exps in product(range(max_degree + 1), repeat=d):
        if sum(exps) <= max_degree:
            out.append(PolyCoeff.monomial(d, exps))
    out.sort(key=lambda p: (sum(next(iter(p.terms))), next(iter(p.terms))))
    return out


__all__ = [
    "PolyDiffOp",
    "OpSeries",
    "StarSeries",
    "apply",
    "compose_at",
    "gerstenhaber_bracket",
    "hochschild_d",
    "deformed_differential",
    "cup",
    "associativity_defect",
    "moyal_star",
    "monomials",
]
