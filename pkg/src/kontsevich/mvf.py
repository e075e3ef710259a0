"""Polynomial multivector fields on R^d.

Coefficients are polynomials with exact rational coefficients (floats are
tolerated so that numerically weighted expressions can reuse the same type).
Indices are 0-based internally; the JSON encoding uses 1-based indices so
that ``{"indices": [1, 2]}`` reads as d1 ^ d2.
"""
from __future__ import annotations

from fractions import Fraction
from itertools import combinations
from math import factorial
from operator import add
from typing import Iterable, Mapping


def _num(c):
    # ints stay ints (exact and much faster); Fractions stay Fractions
    if type(c) is Fraction and c.denominator == 1:
        return c.numerator
    return c


def perm_sign(seq) -> int:
    """Sign of the permutation sorting ``seq`` (0 if it has repeats)."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


class PolyCoeff:
    """Polynomial in d variables, stored as ``{exponents: coefficient}``."""

    __slots__ = ("d", "terms")

    def __init__(self, d: int, terms: Mapping[tuple, object] | None = None):
        if d < 1:
            raise ValueError("dimension must be positive")
        self.d = d
        clean = {}
        for exps, c in (terms or {}).items():
            exps = tuple(exps)
            if len(exps) != d or any(e < 0 for e in exps):
                raise ValueError(f"bad multi-index {exps} for d={d}")
            if c != 0:
                clean[exps] = _num(c)
        self.terms = clean

    @classmethod
    def _raw(cls, d, terms):
        """Trusted constructor: ``terms`` already has valid keys; zeros are dropped."""
        self = object.__new__(cls)
        self.d = d
        self.terms = {e: c for e, c in terms.items() if c}
        return self

    @classmethod
    def constant(cls, d, c=1):
        return cls(d, {(0,) * d: c})

    @classmethod
    def monomial(cls, d, exps, c=1):
        return cls(d, {tuple(exps): c})

    @classmethod
    def variable(cls, d, i, c=1):
        e = [0] * d
        e[i] = 1
        return cls(d, {tuple(e): c})

    @classmethod
    def zero(cls, d):
        return cls(d)

    def _check(self, other):
        if other.d != self.d:
            raise ValueError(f"dimension mismatch: {self.d} vs {other.d}")

    def __bool__(self):
        return bool(self.terms)

    def is_zero(self):
        return not self.terms

    def __add__(self, other):
        if not isinstance(other, PolyCoeff):
            return self + PolyCoeff.constant(self.d, other)
        self._check(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return PolyCoeff._raw(self.d, out)

    __radd__ = __add__

    def __neg__(self):
        return PolyCoeff._raw(self.d, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, PolyCoeff):
            other = _num(other)
            if other == 0:
                return PolyCoeff(self.d)
            return PolyCoeff._raw(self.d, {e: c * other for e, c in self.terms.items()})
        self._check(other)
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(map(add, e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return PolyCoeff._raw(self.d, out)

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, PolyCoeff):
            return self.d == other.d and self.terms == other.terms
        if other == 0:
            return not self.terms
        return NotImplemented

    def __hash__(self):
        return hash((self.d, frozenset(self.terms.items())))

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for e, c in sorted(self.terms.items()):
            mono = "*".join(f"x{i + 1}^{k}" if k > 1 else f"x{i + 1}" for i, k in enumerate(e) if k)
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)

    def diff(self, i: int) -> "PolyCoeff":
        out = {}
        for e, c in self.terms.items():
            if e[i]:
                f = list(e)
                f[i] -= 1
                out[tuple(f)] = c * e[i]
        return PolyCoeff._raw(self.d, out)

    def diff_multi(self, mu) -> "PolyCoeff":
        """Apply the constant-coefficient operator d^mu (mu an exponent multi-index)."""
        out = {}
        for e, c in self.terms.items():
            factor = 1
            f = []
            for k, m in zip(e, mu):
                if m > k:
                    break
                factor *= factorial(k) // factorial(k - m)
                f.append(k - m)
            else:
                out[tuple(f)] = c * factor
        return PolyCoeff._raw(self.d, out)

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def map_coeffs(self, fn) -> "PolyCoeff":
        return PolyCoeff(self.d, {e: fn(c) for e, c in self.terms.items()})

    def max_abs(self) -> float:
        return max((abs(float(c)) for c in self.terms.values()), default=0.0)

    def to_json(self):
        return [
            {"exps": list(e), "num": Fraction(c).numerator, "den": Fraction(c).denominator}
            for e, c in sorted(self.terms.items())
        ]

    @classmethod
    def from_json(cls, d, data):
        return cls(d, {tuple(t["exps"]): Fraction(t["num"], t.get("den", 1)) for t in data})


class Multivector:
    """Antisymmetric k-vector field with polynomial coefficients.

    ``comps`` maps strictly increasing index tuples to coefficients; a
    degree-0 multivector is a function stored under the empty tuple.
    """

    __slots__ = ("d", "k", "comps")

    def __init__(self, d: int, k: int, comps: Mapping[tuple, PolyCoeff] | None = None):
        if d < 1 or k < 0:
            raise ValueError("need d >= 1 and k >= 0")
        self.d, self.k = d, k
        clean: dict[tuple, PolyCoeff] = {}
        for idx, p in (comps or {}).items():
            idx = tuple(idx)
            if len(idx) != k:
                raise ValueError(f"index tuple {idx} has wrong length for degree {k}")
            if any(not 0 <= i < d for i in idx):
                raise ValueError(f"index out of range in {idx}")
            if not isinstance(p, PolyCoeff):
                p = PolyCoeff.constant(d, p)
            if p.d != d:
                raise ValueError("coefficient dimension mismatch")
            s = perm_sign(idx)
            if s == 0:
                continue
            key = tuple(sorted(idx))
            clean[key] = clean.get(key, PolyCoeff(d)) + p * s
        self.comps = {i: p for i, p in clean.items() if p}

    @classmethod
    def function(cls, p: PolyCoeff) -> "Multivector":
        return cls(p.d, 0, {(): p})

    @classmethod
    def basis(cls, d, idx, coeff=1) -> "Multivector":
        """``coeff * d_{idx[0]} ^ ... ^ d_{idx[-1]}`` (0-based indices)."""
        return cls(d, len(idx), {tuple(idx): coeff})

    @classmethod
    def zero(cls, d, k):
        return cls(d, k)

    def is_zero(self):
        return not self.comps

    def _check(self, other):
        if self.d != other.d:
            raise ValueError(f"dimension mismatch: {self.d} vs {other.d}")

    def component(self, idx) -> PolyCoeff:
        """Coefficient of the (possibly unsorted) tuple, with antisymmetry sign."""
        s = perm_sign(idx)
        if s == 0:
            return PolyCoeff(self.d)
        p = self.comps.get(tuple(sorted(idx)))
        return PolyCoeff(self.d) if p is None else p * s

    def __add__(self, other):
        self._check(other)
        if other.is_zero():
            return self
        if self.is_zero():
            return other
        if self.k != other.k:
            raise ValueError("cannot add multivectors of different degrees")
        out = dict(self.comps)
        for i, p in other.comps.items():
            out[i] = out.get(i, PolyCoeff(self.d)) + p
        return Multivector(self.d, self.k, out)

    def __neg__(self):
        return Multivector(self.d, self.k, {i: -p for i, p in self.comps.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        return Multivector(self.d, self.k, {i: p * c for i, p in self.comps.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, Multivector):
            return NotImplemented
        if self.is_zero() and other.is_zero():
            return self.d == other.d
        return (self.d, self.k, self.comps) == (other.d, other.k, other.comps)

    def __hash__(self):
        return hash((self.d, self.k, frozenset(self.comps.items())))

    def __repr__(self):
        if not self.comps:
            return f"Multivector(d={self.d}, k={self.k}, 0)"
        body = " + ".join(
            f"({p})" + ("*" + "^".join(f"d{i + 1}" for i in idx) if idx else "")
            for idx, p in sorted(self.comps.items())
        )
        return f"Multivector(d={self.d}, k={self.k}, {body})"

    def terms(self):
        return self.comps.items()

    def to_json(self):
        return {
            "d": self.d,
            "k": self.k,
            "components": [
                {"indices": [i + 1 for i in idx], "poly": p.to_json()}
                for idx, p in sorted(self.comps.items())
            ],
        }

    @classmethod
    def from_json(cls, data):
        d, k = int(data["d"]), int(data["k"])
        comps: dict[tuple, PolyCoeff] = {}
        for c in data.get("components", []):
            idx = tuple(i - 1 for i in c["indices"])
            p = PolyCoeff.from_json(d, c["poly"])
            s = perm_sign(idx)
            if s == 0:
                continue
            key = tuple(sorted(idx))
            comps[key] = comps.get(key, PolyCoeff(d)) + p * s
        return cls(d, k, comps)


def _merge(a_idx, b_idx):
    """Sorted concatenation with the sign of the shuffle, or (None, 0)."""
    joined = a_idx + b_idx
    s = perm_sign(joined)
    if s == 0:
        return None, 0
    return tuple(sorted(joined)), s


def wedge(a: Multivector, b: Multivector) -> Multivector:
    a._check(b)
    out: dict[tuple, PolyCoeff] = {}
    for ia, pa in a.comps.items():
        for ib, pb in b.comps.items():
            key, s = _merge(ia, ib)
            if not s:
                continue
            out[key] = out.get(key, PolyCoeff(a.d)) + pa * pb * s
    return Multivector(a.d, a.k + b.k, out)


def pair_with_coframe(a: Multivector, indices) -> PolyCoeff:
    """<a, dx_{i1} (x) ... (x) dx_{ik}> under the 1/k! identification of wedges.

    So <d1^d2, dx1 (x) dx2> = 1/2.
    """
    indices = tuple(indices)
    if len(indices) != a.k:
        raise ValueError(f"expected {a.k} indices, got {len(indices)}")
    if any(not 0 <= i < a.d for i in indices):
        raise ValueError(f"index out of range in {indices}")
    return a.component(indices) * Fraction(1, factorial(a.k))


def bullet(a: Multivector, b: Multivector) -> Multivector:
    """One-derivative contraction: sum_v (d/d theta_v a) ^ (d_v b).

    On decomposables f d_{i1}^...^d_{ik1} and g d_J this is
    sum_r (-1)^(r-1) f (d_{i_r} g) d_{i1}^..^(omit i_r)^..^d_{ik1} ^ d_J.
    """
    a._check(b)
    d = a.d
    if a.k == 0:
        return Multivector(d, max(a.k + b.k - 1, 0))
    out: dict[tuple, PolyCoeff] = {}
    for ia, pa in a.comps.items():
        for r, v in enumerate(ia):
            rest = ia[:r] + ia[r + 1:]
            sign_r = -1 if r % 2 else 1
            for ib, pb in b.comps.items():
                dpb = pb.diff(v)
                if not dpb:
                    continue
                key, s = _merge(rest, ib)
                if not s:
                    continue
                out[key] = out.get(key, PolyCoeff(d)) + pa * dpb * (s * sign_r)
    return Multivector(d, a.k + b.k - 1, out)


def schouten_modified(a: Multivector, b: Multivector) -> Multivector:
    """[a, b] = -[b, a]_Schouten.

    Computed as (-1)^((k1-1) k2) (a.b + (-1)^(k1 k2) b.a) with ``.`` the
    ``bullet`` contraction; for vector fields this is the Lie bracket.
    """
    a._check(b)
    k1, k2 = a.k, b.k
    if k1 + k2 == 0:
        return Multivector(a.d, 0)
    s1 = -1 if ((k1 - 1) * k2) % 2 else 1
    s2 = -1 if (k1 * k2) % 2 else 1
    res = bullet(a, b) + bullet(b, a) * s2 if k1 and k2 else (
        bullet(a, b) if k1 else bullet(b, a) * s2)
    return res * s1


def tangent_diff_q(delta: Multivector, gamma: Multivector) -> Multivector:
    """Differential of the tangent complex at gamma: delta -> [delta, gamma]."""
    return schouten_modified(delta, gamma)


class HbarSeriesMV:
    """Truncated series sum_{j<=N} hbar^j coeffs[j] of multivector fields."""

    def __init__(self, coeffs: Iterable[Multivector], order: int | None = None):
        coeffs = list(coeffs)
        if not coeffs:
            raise ValueError("need at least one coefficient")
        d = coeffs[0].d
        if any(c.d != d for c in coeffs):
            raise ValueError("all coefficients must share the dimension")
        if order is None:
            order = len(coeffs) - 1
        if len(coeffs) != order + 1:
            raise ValueError("length must equal order + 1")
        self.d, self.order, self.coeffs = d, order, coeffs

    def __getitem__(self, j):
        return self.coeffs[j]

    def is_zero(self):
        return all(c.is_zero() for c in self.coeffs)


def maurer_cartan_residual(gamma: HbarSeriesMV) -> HbarSeriesMV:
    """-1/2 [hbar gamma, hbar gamma], truncated at the order of ``gamma``."""
    N, d = gamma.order, gamma.d
    out = []
    for j in range(N + 1):
        acc = Multivector(d, 3)
        for a in range(j - 1):
            acc = acc + schouten_modified(gamma[a], gamma[j - 2 - a])
        out.append(acc * Fraction(-1, 2))
    return HbarSeriesMV(out, N)


def random_linear_multivector(rng, d: int, k: int, lo=-3, hi=3) -> Multivector:
    """Multivector whose coefficients are random affine functions with small integers."""
    comps = {}
    for idx in combinations(range(d), k):
        terms = {(0,) * d: Fraction(int(rng.integers(lo, hi + 1)))}
        for i in range(d):
            e = [0] * d
            e[i] = 1
            terms[tuple(e)] = Fraction(int(rng.integers(lo, hi + 1)))
        comps[idx] = PolyCoeff(d, terms)
    return Multivector(d, k, comps)


def coord_poly(d, i):
    return PolyCoeff.variable(d, i)


__all__ = [
    "PolyCoeff",
    "Multivector",
    "HbarSeriesMV",
    "wedge",
    "pair_with_coframe",
    "bullet",
    "schouten_modified",
    "tangent_diff_q",
    "maurer_cartan_residual",
    "perm_sign",
    "random_linear_multivector",
]
