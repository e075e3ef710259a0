"""Graph weights: integrals of products of angle forms over C+_{n,m}.

W = int_{C+_{n,m}} prod_e dphi_e / (2 pi)^|E|, with
phi(p, q) = arg((q - p) / (q - conj(p))) mod 2 pi.

Configurations are gauge fixed by the group z -> a z + b (a > 0, b real).
The orientation of every chart is the sign of
det d(x1, y1, ..., xn, yn, q1, ..., qm) / d(b, a, chart coordinates)
times ORIENTATION_PIN.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np
from scipy.integrate import cubature

from .graph import (
    Graph,
    canonical_form,
    contract_12,
    enumerate_splittings,
    validate,
)

TWO_PI = 2.0 * math.pi

# One global sign fixing the (b, a) versus (a, b) ambiguity in the quotient
# orientation.  With +1 the wedge graph (1->-1, 1->-2) has weight +1/2 and
# the first-order star product is + sum pi^{ij} d_i (x) d_j.
ORIENTATION_PIN = 1

ANGLE_CONVENTION = "arg((q-p)/(q-conj(p))) mod 2pi"
MC_GAUGE = "m>=2: q1=0,qm=1; m=1: q1=0,|p1|=1; m=0: p1=i"
QUAD_GAUGE = "p1=i"
CONVENTION_TAG = f"angle={ANGLE_CONVENTION};pin={ORIENTATION_PIN}"

MIN_SEPARATION = 1e-9
DEFAULT_SAMPLES = 10**5
SHARD_SIZE = 1 << 15


# -- angle -----------------------------------------------------------------------

def angle(p: complex, q: complex) -> float:
    """Hyperbolic angle at p from the upward vertical to the geodesic towards q."""
    p, q = complex(p), complex(q)
    if p.imag < 0 or q.imag < 0:
        raise ValueError("points must lie in the closed upper half-plane")
    if abs(p - q) == 0:
        raise ValueError("coincident points")
    w2 = q - p.conjugate()
    if abs(w2) == 0:
        raise ValueError("coincident points")
    return math.atan2(((q - p) / w2).imag, ((q - p) / w2).real) % TWO_PI


def angle_gradients(px, py, qx, qy):
    """Partial derivatives of phi(p, q) w.r.t. (x_p, y_p, x_q, y_q), vectorized."""
    w1 = (qx - px) + 1j * (qy - py)
    w2 = (qx - px) + 1j * (qy + py)
    i1 = 1.0 / w1
    i2 = 1.0 / w2
    dxp = (-i1).imag + i2.imag
    dyp = (-1j * i1).imag - (1j * i2).imag
    dxq = i1.imag - i2.imag
    dyq = (1j * i1).imag - (1j * i2).imag
    return dxp, dyp, dxq, dyq


# -- charts ----------------------------------------------------------------------

def chart_dimension(n: int, m: int) -> int:
    return 2 * n + m - 2


class _Layout:
    """Index helpers for full coordinates (x1, y1, ..., xn, yn, q1, ..., qm)."""

    def __init__(self, n, m):
        self.n, self.m = n, m
        self.size = 2 * n + m

    def x(self, j):      # j is 1-based
        return 2 * (j - 1)

    def y(self, j):
        return 2 * (j - 1) + 1

    def q(self, k):      # k is 1-based ground index
        return 2 * self.n + k - 1


def _edge_rows(g: Graph, full: np.ndarray) -> np.ndarray:
    """d phi_e / d(full coordinates), shape (N, E, 2n+m)."""
    lay = _Layout(g.n, g.m)
    N = full.shape[0]
    rows = np.zeros((N, g.num_edges, lay.size))
    for e, (s, t) in enumerate(g.edges):
        px, py = full[:, lay.x(s)], full[:, lay.y(s)]
        if t > 0:
            qx, qy = full[:, lay.x(t)], full[:, lay.y(t)]
        else:
            qx, qy = full[:, lay.q(-t)], np.zeros(N)
        dxp, dyp, dxq, dyq = angle_gradients(px, py, qx, qy)
        rows[:, e, lay.x(s)] = dxp
        rows[:, e, lay.y(s)] = dyp
        if t > 0:
            rows[:, e, lay.x(t)] += dxq
            rows[:, e, lay.y(t)] += dyq
        else:
            rows[:, e, lay.q(-t)] += dxq
    return rows


def _orientation(full_ref: np.ndarray, dfull_dfree: np.ndarray, n: int, m: int) -> int:
    """sign det d(full)/d(b, a, free) at a reference point, times the pin."""
    lay = _Layout(n, m)
    col_b = np.zeros(lay.size)
    for j in range(1, n + 1):
        col_b[lay.x(j)] = 1.0
    for k in range(1, m + 1):
        col_b[lay.q(k)] = 1.0
    col_a = full_ref.copy()
    M = np.column_stack([col_b, col_a, dfull_dfree]) if dfull_dfree.size else np.column_stack([col_b, col_a])
    det = np.linalg.det(M)
    if abs(det) < 1e-12:
        raise RuntimeError("degenerate reference point for orientation")
    return ORIENTATION_PIN * (1 if det > 0 else -1)


def _points_ok(full: np.ndarray, n: int, m: int) -> np.ndarray:
    """Rows whose points are pairwise separated by at least MIN_SEPARATION."""
    lay = _Layout(n, m)
    pts = [full[:, lay.x(j)] + 1j * full[:, lay.y(j)] for j in range(1, n + 1)]
    pts += [full[:, lay.q(k)] + 0j for k in range(1, m + 1)]
    ok = np.ones(full.shape[0], dtype=bool)
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            ok &= np.abs(pts[a] - pts[b]) >= MIN_SEPARATION
    for j in range(1, n + 1):
        ok &= np.abs(full[:, lay.y(j)]) >= MIN_SEPARATION
    return ok


def _in_domain(full: np.ndarray, n: int, m: int) -> np.ndarray:
    lay = _Layout(n, m)
    ok = np.ones(full.shape[0], dtype=bool)
    for j in range(1, n + 1):
        ok &= full[:, lay.y(j)] > 0
    for k in range(1, m):
        ok &= full[:, lay.q(k)] < full[:, lay.q(k + 1)]
    return ok


def _integrand(g: Graph, full: np.ndarray, jac: np.ndarray) -> np.ndarray:
    """det(d phi / d free) / (2 pi)^E for each row; jac = d full / d free (N, F, D)."""
    E = g.num_edges
    if E == 0:
        return np.ones(full.shape[0])
    rows = _edge_rows(g, full)
    J = rows @ jac
    return np.linalg.det(J) / TWO_PI ** E


# -- Monte Carlo -----------------------------------------------------------------

@dataclass
class WeightEstimate:
    value: float
    stderr: float
    samples: int
    seed: int
    method: str = "mc"
    rejected: int = 0
    meta: dict = field(default_factory=dict)

    def to_json(self):
        data = asdict(self)
        data["convention_tag"] = CONVENTION_TAG
        return data

    @classmethod
    def from_json(cls, data):
        if data.get("convention_tag", CONVENTION_TAG) != CONVENTION_TAG:
            raise ValueError("weight was computed under a different convention")
        return cls(
            value=float(data["value"]),
            stderr=float(data["stderr"]),
            samples=int(data["samples"]),
            seed=int(data["seed"]),
            method=data.get("method", "mc"),
            rejected=int(data.get("rejected", 0)),
            meta=dict(data.get("meta", {})),
        )

    def scaled(self, s: int) -> "WeightEstimate":
        return WeightEstimate(s * self.value, self.stderr, self.samples, self.seed,
                              self.method, self.rejected, dict(self.meta))


# proposal hyper-parameters, recorded in estimate metadata
PROPOSAL = {
    "global_weight": 0.25,
    "x_loc": 0.5,
    "x_scale": 1.0,
    "logy_loc": math.log(0.5),
    "logy_scale": 1.0,
    "logr_loc": math.log(0.3),
    "logr_scale": 1.0,
    "ground_uniform_weight": 0.5,
    "theta_uniform_weight": 0.5,
}


def _cauchy_pdf(z, loc, scale):
    u = (z - loc) / scale
    return 1.0 / (math.pi * scale * (1.0 + u * u))


def _cauchy(rng, size, loc, scale):
    return loc + scale * np.tan(math.pi * (rng.random(size) - 0.5))


# log-radii use logistic laws: exponential tails in log r keep both the
# near-collision mass and the overflow mass negligible, while staying heavy
# enough for the 1/r singularities of the angle forms
def _logistic_pdf(z, loc, scale):
    u = np.abs((z - loc) / scale)
    e = np.exp(-u)
    return e / (scale * (1.0 + e) ** 2)


def _logistic(rng, size, loc, scale):
    return rng.logistic(loc, scale, size)


class _Sampler:
    """Sequential mixture proposal for the MC chart."""

    def __init__(self, n, m):
        self.n, self.m = n, m
        self.lay = _Layout(n, m)
        self.dim = chart_dimension(n, m)

    # The chart: which full coordinates are free, and how fixed ones are set.
    def free_aerial(self):
        return list(range(2, self.n + 1)) if self.m <= 1 else list(range(1, self.n + 1))

    def draw(self, rng, N):
        """Return (full coordinates, d full / d free, proposal density)."""
        n, m, lay, P = self.n, self.m, self.lay, PROPOSAL
        full = np.zeros((N, lay.size))
        dens = np.ones(N)
        free_cols = []          # (kind, index) describing free coordinates in order
        ground_pts = []         # arrays of ground positions usable as anchors
        aerial_pts = []         # arrays of complex aerial positions usable as anchors
        theta = None
        if m >= 2:
            full[:, lay.q(1)] = 0.0
            full[:, lay.q(m)] = 1.0
            ground_pts = [full[:, lay.q(1)], full[:, lay.q(m)]]
            for k in range(2, m):
                q, dq = self._draw_ground(rng, N, ground_pts)
                full[:, lay.q(k)] = q
                dens *= dq
                ground_pts.append(q)
        elif m == 1:
            full[:, lay.q(1)] = 0.0
            ground_pts = [full[:, lay.q(1)]]
        if n >= 1 and m == 1:
            theta, dt = self._draw_theta(rng, N)
            dens *= dt
            full[:, lay.x(1)] = np.cos(theta)
            full[:, lay.y(1)] = np.sin(theta)
            aerial_pts.append(full[:, lay.x(1)] + 1j * full[:, lay.y(1)])
        elif n >= 1 and m == 0:
            full[:, lay.x(1)] = 0.0
            full[:, lay.y(1)] = 1.0
            aerial_pts.append(full[:, lay.x(1)] + 1j * full[:, lay.y(1)])
        for j in self.free_aerial():
            p, dp = self._draw_aerial(rng, N, ground_pts, aerial_pts)
            full[:, lay.x(j)] = p.real
            full[:, lay.y(j)] = p.imag
            dens *= dp
            aerial_pts.append(p)
        jac = self.jacobian(full, theta)
        return full, jac, dens

    def free_columns(self):
        cols = []
        if self.n >= 1 and self.m == 1:
            cols.append(("theta", 1))
        for j in self.free_aerial():
            cols += [("x", j), ("y", j)]
        if self.m >= 2:
            cols += [("q", k) for k in range(2, self.m)]
        return cols

    def jacobian(self, full, theta):
        lay = self.lay
        cols = self.free_columns()
        N = full.shape[0]
        jac = np.zeros((N, lay.size, len(cols)))
        for c, (kind, j) in enumerate(cols):
            if kind == "theta":
                jac[:, lay.x(1), c] = -np.sin(theta)
                jac[:, lay.y(1), c] = np.cos(theta)
            elif kind == "x":
                jac[:, lay.x(j), c] = 1.0
            elif kind == "y":
                jac[:, lay.y(j), c] = 1.0
            else:
                jac[:, lay.q(j), c] = 1.0
        return jac

    def reference(self):
        """A point in the chart (used for orientation)."""
        n, m, lay = self.n, self.m, self.lay
        full = np.zeros(lay.size)
        theta = None
        if m >= 2:
            for k in range(1, m + 1):
                full[lay.q(k)] = (k - 1) / (m - 1)
        if n >= 1 and m == 1:
            theta = np.array([1.1])
            full[lay.x(1)], full[lay.y(1)] = math.cos(1.1), math.sin(1.1)
        elif n >= 1 and m == 0:
            full[lay.y(1)] = 1.0
        for idx, j in enumerate(self.free_aerial()):
            full[lay.x(j)] = 0.37 + 0.61 * idx
            full[lay.y(j)] = 0.83 + 0.29 * idx
        jac = self.jacobian(full[None, :], theta)[0]
        return full, jac

    def _draw_theta(self, rng, N):
        P = PROPOSAL
        use_u = rng.random(N) < P["theta_uniform_weight"]
        u = rng.random(N)
        th = np.where(use_u, math.pi * u, math.pi * np.sin(0.5 * math.pi * u) ** 2)
        th = np.clip(th, 1e-300, math.pi - 1e-15)
        d_arc = 1.0 / (math.pi * np.sqrt(th * (math.pi - th)))
        dens = P["theta_uniform_weight"] / math.pi + (1 - P["theta_uniform_weight"]) * d_arc
        return th, dens

    def _draw_ground(self, rng, N, anchors):
        P = PROPOSAL
        wu = P["ground_uniform_weight"]
        A = len(anchors)
        comp = rng.integers(0, A, N)
        use_u = rng.random(N) < wu
        sgn = np.where(rng.random(N) < 0.5, -1.0, 1.0)
        logr = _logistic(rng, N, P["logr_loc"], P["logr_scale"])
        base = np.choose(comp, anchors) if A else np.zeros(N)
        q = np.where(use_u, rng.random(N), base + sgn * np.exp(logr))
        dens = wu * ((q > 0) & (q < 1))
        for a in anchors:
            r = np.abs(q - a)
            with np.errstate(divide="ignore", invalid="ignore"):
                lr = np.log(r)
                dens = dens + (1 - wu) / A * 0.5 * _logistic_pdf(lr, P["logr_loc"], P["logr_scale"]) / r
        return q, dens

    def _draw_aerial(self, rng, N, ground, aerial):
        P = PROPOSAL
        anchors = [(a + 0j, True) for a in ground] + [(a, False) for a in aerial]
        A = len(anchors)
        wg = P["global_weight"] if A else 1.0
        which = rng.integers(0, max(A, 1), N)
        use_g = rng.random(N) < wg
        # global component
        gx = _cauchy(rng, N, P["x_loc"], P["x_scale"])
        gy = np.exp(_logistic(rng, N, P["logy_loc"], P["logy_scale"]))
        # anchored component
        logr = _logistic(rng, N, P["logr_loc"], P["logr_scale"])
        u = rng.random(N)
        if A:
            centers = np.choose(which, [a for a, _ in anchors])
            is_ground = np.choose(which, [np.full(N, gflag) for _, gflag in anchors])
            psi = np.where(is_ground, math.pi * u, TWO_PI * u)
            ap = centers + np.exp(logr) * np.exp(1j * psi)
        else:
            ap = gx + 1j * gy
        p = np.where(use_g, gx + 1j * gy, ap)
        # mixture density in (x, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            y = p.imag
            dens = np.where(
                y > 0,
                wg * _cauchy_pdf(p.real, P["x_loc"], P["x_scale"])
                * _logistic_pdf(np.log(np.where(y > 0, y, 1.0)), P["logy_loc"], P["logy_scale"]) / np.where(y > 0, y, 1.0),
                0.0,
            )
            for a, gflag in anchors:
                d = p - a
                r = np.abs(d)
                ang = np.angle(d)
                if gflag:
                    dpsi = np.where((ang > 0) & (ang < math.pi), 1.0 / math.pi, 0.0)
                else:
                    dpsi = np.full(N, 1.0 / TWO_PI)
                dens = dens + (1 - wg) / A * _logistic_pdf(np.log(r), P["logr_loc"], P["logr_scale"]) * dpsi / r ** 2
        return p, dens


def graph_seed(g: Graph, seed: int) -> np.random.SeedSequence:
    """Seed sequence shared by all labelings of one graph (common random numbers)."""
    canon, _ = canonical_form(g)
    h = int.from_bytes(hashlib.sha256(canon.encode().encode()).digest()[:8], "big")
    return np.random.SeedSequence([int(seed), h])


def weight_mc(g: Graph, samples: int = DEFAULT_SAMPLES, seed: int = 0,
              labeled: bool = False) -> WeightEstimate:
    """Importance-sampled estimate of W_g with its standard error.

    By default the form is integrated for the canonical labeling and the
    relabeling sign is applied afterwards. With ``labeled=True`` the form is
    built from the edge order of ``g`` itself, on the same sample stream.
    """
    problems = validate(g)
    if problems:
        raise ValueError("inadmissible graph: " + "; ".join(problems))
    if samples < 2:
        raise ValueError("need at least two samples")
    meta = {"gauge": MC_GAUGE, "convention": CONVENTION_TAG, "proposal": dict(PROPOSAL)}
    exact = _exact_weight(g)
    if exact is not None:
        return WeightEstimate(exact, 0.0, samples, seed, "exact", 0, meta)
    # labelings of one graph share their samples; evaluate on the canonical
    # representative and apply the sign so that the estimate is equivariant
    canon, eps = canonical_form(g)
    target = g if labeled else canon
    sampler = _Sampler(canon.n, canon.m)
    ref_full, ref_jac = sampler.reference()
    orient = _orientation(ref_full, ref_jac, canon.n, canon.m)
    ss = graph_seed(canon, seed)
    n_shards = -(-samples // SHARD_SIZE)
    total = total_sq = 0.0
    rejected = 0
    for shard, child in enumerate(ss.spawn(n_shards)):
        rng = np.random.default_rng(child)
        size = min(SHARD_SIZE, samples - shard * SHARD_SIZE)
        full, jac, dens = sampler.draw(rng, size)
        for _ in range(100):
            bad = ~_points_ok(full, canon.n, canon.m)
            if not bad.any():
                break
            rejected += int(bad.sum())
            f2, j2, d2 = sampler.draw(rng, int(bad.sum()))
            full[bad], jac[bad], dens[bad] = f2, j2, d2
        inside = _in_domain(full, canon.n, canon.m) & (dens > 0)
        vals = np.zeros(size)
        if inside.any():
            vals[inside] = _integrand(target, full[inside], jac[inside]) / dens[inside]
        vals[~np.isfinite(vals)] = 0.0
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
    value = (1 if labeled else eps) * orient * mean
    return WeightEstimate(value, math.sqrt(var / samples), samples, seed, "mc", rejected, meta)


def _exact_weight(g: Graph) -> float | None:
    """Weights fixed without integration: wrong edge count, empty charts."""
    if not g.has_expected_edges():
        return 0.0
    dim = chart_dimension(g.n, g.m)
    if dim < 0 or (g.n == 0 and g.m < 2):
        return 0.0
    if dim == 0:
        # a single point; its weight is the orientation sign
        sampler = _Sampler(g.n, g.m)
        full, jac = sampler.reference()
        return float(_orientation(full, jac, g.n, g.m))
    return None


# -- deterministic quadrature ----------------------------------------------------

def quadrature_supported(n: int, m: int) -> bool:
    return (n <= 1 and 2 * n + m - 2 <= 4) or (n == 2 and m <= 1)


def _simplex(v):
    """Map the unit cube onto 0 < t1 < ... < tk < 1; returns (t, jacobian)."""
    k = v.shape[1]
    t = np.empty_like(v)
    jac = np.ones(v.shape[0])
    prev = np.zeros(v.shape[0])
    for i in range(k):
        t[:, i] = prev + (1.0 - prev) * v[:, i]
        jac = jac * (1.0 - prev)
        prev = t[:, i]
    return t, jac


def _quad_integrand(g: Graph, orient: int):
    n, m = g.n, g.m
    lay = _Layout(n, m)

    def f(s):
        s = np.atleast_2d(s)
        N = s.shape[0]
        full = np.zeros((N, lay.size))
        weight = np.ones(N)
        col = 0
        full[:, lay.y(1)] = 1.0
        jac_cols = []
        if n == 2:
            r, psi = s[:, 0], TWO_PI * s[:, 1]
            w = r * np.exp(1j * psi)
            p2 = 1j * (1 + w) / (1 - w)
            dpdw = 2j / (1 - w) ** 2
            full[:, lay.x(2)], full[:, lay.y(2)] = p2.real, p2.imag
            weight = weight * np.abs(dpdw) ** 2 * r * TWO_PI
            jac_cols += [("x", 2), ("y", 2)]
            col = 2
        if m:
            t, jt = _simplex(s[:, col:col + m])
            q = np.tan(math.pi * (t - 0.5))
            full[:, [lay.q(k) for k in range(1, m + 1)]] = q
            weight = weight * jt * np.prod(math.pi / np.cos(math.pi * (t - 0.5)) ** 2, axis=1)
            jac_cols += [("q", k) for k in range(1, m + 1)]
        jac = np.zeros((N, lay.size, len(jac_cols)))
        for c, (kind, j) in enumerate(jac_cols):
            idx = lay.x(j) if kind == "x" else lay.y(j) if kind == "y" else lay.q(j)
            jac[:, idx, c] = 1.0
        with np.errstate(all="ignore"):
            val = _integrand(g, full, jac) * weight * orient
        val[~np.isfinite(val)] = 0.0
        return val

    cols = ([("x", 2), ("y", 2)] if n == 2 else []) + [("q", k) for k in range(1, m + 1)]
    return f, cols


def _quad_orientation(n, m):
    lay = _Layout(n, m)
    full = np.zeros(lay.size)
    full[lay.y(1)] = 1.0
    cols = []
    if n == 2:
        full[lay.x(2)], full[lay.y(2)] = 0.4, 2.3
        cols += [lay.x(2), lay.y(2)]
    for k in range(1, m + 1):
        full[lay.q(k)] = -1.0 + k
        cols.append(lay.q(k))
    jac = np.zeros((lay.size, len(cols)))
    for c, idx in enumerate(cols):
        jac[idx, c] = 1.0
    return _orientation(full, jac, n, m)


def weight_quadrature(g: Graph, rtol: float = 1e-8, atol: float = 1e-10) -> float:
    """Adaptive cubature of the same form in the gauge p1 = i."""
    problems = validate(g)
    if problems:
        raise ValueError("inadmissible graph: " + "; ".join(problems))
    exact = _exact_weight(g)
    if exact is not None:
        return exact
    return weight_quadrature_with_error(g, rtol, atol)[0]


def weight_quadrature_with_error(g: Graph, rtol: float = 1e-8, atol: float = 1e-10) -> tuple[float, float]:
    exact = _exact_weight(g)
    if exact is not None:
        return exact, 0.0
    if not quadrature_supported(g.n, g.m):
        raise ValueError(f"quadrature not supported for n={g.n}, m={g.m}")
    canon, eps = canonical_form(g)
    orient = _quad_orientation(canon.n, canon.m)
    f, cols = _quad_integrand(canon, orient)
    D = len(cols)
    rule = "genz-malik" if D >= 4 else "gk21"
    res = cubature(f, np.zeros(D), np.ones(D), rule=rule, rtol=rtol, atol=atol, max_subdivisions=20000)
    return eps * float(res.estimate[()] if np.ndim(res.estimate) == 0 else res.estimate), float(np.max(res.error))


# -- cache -----------------------------------------------------------------------

class CacheMiss(KeyError):
    def __init__(self, missing):
        self.missing = sorted(set(missing))
        super().__init__(f"{len(self.missing)} graph weights missing from cache")


class WeightCache:
    """Weights keyed by the canonical labeling; lookups apply the sign eps."""

    def __init__(self, path: str | None = None, entries: dict | None = None):
        self.path = path
        self.entries: dict[str, WeightEstimate] = dict(entries or {})
        self.meta = {
            "angle_convention": ANGLE_CONVENTION,
            "mc_gauge": MC_GAUGE,
            "quadrature_gauge": QUAD_GAUGE,
            "orientation_pin": ORIENTATION_PIN,
            "convention_tag": CONVENTION_TAG,
        }

    def __len__(self):
        return len(self.entries)

    def __contains__(self, g: Graph):
        return self.lookup(g) is not None

    def lookup(self, g: Graph) -> WeightEstimate | None:
        exact = _exact_weight(g)
        if exact is not None:
            return WeightEstimate(exact, 0.0, 0, 0, "exact")
        canon, eps = canonical_form(g)
        est = self.entries.get(canon.encode())
        return None if est is None else est.scaled(eps)

    def get(self, g: Graph) -> WeightEstimate:
        est = self.lookup(g)
        if est is None:
            raise CacheMiss([canonical_form(g)[0].encode()])
        return est

    def put(self, g: Graph, est: WeightEstimate):
        canon, eps = canonical_form(g)
        self.entries[canon.encode()] = est.scaled(eps)

    def ensure(self, graphs: Iterable[Graph], samples: int = DEFAULT_SAMPLES, seed: int = 0,
               prefer_quadrature: bool = False) -> int:
        """Compute every missing weight; returns the number of new entries."""
        added = 0
        for g in graphs:
            if self.lookup(g) is not None:
                continue
            self.put(g, compute_weight(g, samples, seed, prefer_quadrature))
            added += 1
        return added

    def missing(self, graphs: Iterable[Graph]) -> list[str]:
        return sorted({canonical_form(g)[0].encode() for g in graphs if self.lookup(g) is None})

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_json(self):
        return {
            "meta": dict(self.meta),
            "weights": {k: v.to_json() for k, v in sorted(self.entries.items())},
        }

    @classmethod
    def from_json(cls, data, path=None) -> "WeightCache":
        meta = data.get("meta", {})
        if meta.get("orientation_pin", ORIENTATION_PIN) != ORIENTATION_PIN:
            raise ValueError("cache was written with a different orientation pin")
        if meta.get("angle_convention", ANGLE_CONVENTION) != ANGLE_CONVENTION:
            raise ValueError("cache was written with a different angle convention")
        entries = {k: WeightEstimate.from_json(v) for k, v in data.get("weights", {}).items()}
        return cls(path, entries)

    @classmethod
    def load(cls, path: str) -> "WeightCache":
        if not os.path.exists(path):
            return cls(path)
        with open(path) as fh:
            return cls.from_json(json.load(fh), path)

    def save(self, path: str | None = None):
        """Atomic write: dump to a temporary file, then rename over the target."""
        path = path or self.path
        if path is None:
            raise ValueError("no cache path")
        directory = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(prefix=".wcache-", dir=directory)
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def compute_weight(g: Graph, samples: int = DEFAULT_SAMPLES, seed: int = 0,
                   prefer_quadrature: bool = False) -> WeightEstimate:
    exact = _exact_weight(g)
    if exact is not None:
        return WeightEstimate(exact, 0.0, 0, seed, "exact")
    if prefer_quadrature and quadrature_supported(g.n, g.m):
        val, err = weight_quadrature_with_error(g)
        return WeightEstimate(val, err, 0, seed, "quadrature", 0, {"gauge": QUAD_GAUGE})
    return weight_mc(g, samples, seed)


def _cached(g: Graph, cache: WeightCache | None, samples: int, seed: int) -> float:
    if cache is None:
        return compute_weight(g, samples, seed).value
    est = cache.lookup(g)
    if est is None:
        est = compute_weight(g, samples, seed)
        cache.put(g, est)
    return est.value


def compute_W0(g: Graph, cache: WeightCache | None = None, samples: int = DEFAULT_SAMPLES, seed: int = 0) -> float:
    """Weight of the face where vertices 1 and 2 collide."""
    delta = contract_12(g)
    if delta is None:
        return 0.0
    return _cached(delta, cache, samples, seed)


def compute_W1(g: Graph, cache: WeightCache | None = None, samples: int = DEFAULT_SAMPLES, seed: int = 0) -> float:
    """Sum over splittings of the products of the three sub-weights."""
    total = 0.0
    for s in enumerate_splittings(g):
        if s.zero:
            continue
        w = s.sign
        for sub in s.graphs:
            if w == 0:
                break
            w *= _cached(sub, cache, samples, seed)
        total += w
    return total


__all__ = [
    "angle",
    "angle_gradients",
    "WeightEstimate",
    "WeightCache",
    "CacheMiss",
    "weight_mc",
    "weight_quadrature",
    "weight_quadrature_with_error",
    "quadrature_supported",
    "compute_weight",
    "compute_W0",
    "compute_W1",
    "chart_dimension",
    "ORIENTATION_PIN",
    "CONVENTION_TAG",
]
