"""Admissible graphs G_{n,m} with totally ordered edges.

Aerial vertices are 1..n, ground vertices are written -1..-m.  Edges are
(source, target) pairs grouped by source in increasing order; the position
of an edge in ``edges`` is its label.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import permutations, product
from typing import Iterator, Sequence

from .mvf import perm_sign


@dataclass(frozen=True)
class Graph:
    n: int
    m: int
    edges: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(s), int(t)) for s, t in self.edges))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def out_edges(self, k: int) -> list:
        return [t for s, t in self.edges if s == k]

    def profile(self) -> tuple:
        return tuple(sum(1 for s, _ in self.edges if s == k) for k in range(1, self.n + 1))

    def block(self, k: int) -> range:
        start = sum(1 for s, _ in self.edges if s < k)
        return range(start, start + sum(1 for s, _ in self.edges if s == k))

    def in_degree(self, v: int) -> int:
        return sum(1 for _, t in self.edges if t == v)

    def expected_edges(self) -> int:
        return 2 * self.n + self.m - 2

    def has_expected_edges(self) -> bool:
        return self.num_edges == self.expected_edges()

    def encode(self) -> str:
        body = ",".join(f"({s}->{t})" for s, t in self.edges)
        return f"{self.n} {self.m} : {body}"

    def __str__(self):
        return self.encode()

    def to_json(self):
        return {"n": self.n, "m": self.m, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_json(cls, data) -> "Graph":
        try:
            return cls(int(data["n"]), int(data["m"]), tuple(tuple(e) for e in data["edges"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed graph JSON: {exc}") from None


_ENC = re.compile(r"^\s*(\d+)\s+(\d+)\s*:\s*(.*?)\s*$")
_EDGE = re.compile(r"^\(\s*(-?\d+)\s*->\s*(-?\d+)\s*\)$")


def parse_graph(text: str) -> Graph:
    """Inverse of ``Graph.encode``; raises ValueError on malformed input."""
    mt = _ENC.match(text)
    if not mt:
        raise ValueError(f"malformed graph encoding: {text!r}")
    n, m, body = int(mt.group(1)), int(mt.group(2)), mt.group(3)
    edges = []
    if body:
        for tok in re.findall(r"\([^)]*\)|[^,\s]+", body):
            me = _EDGE.match(tok.strip())
            if not me:
                raise ValueError(f"malformed edge {tok!r}")
            edges.append((int(me.group(1)), int(me.group(2))))
    return Graph(n, m, tuple(edges))


def target_key(g: Graph, t: int) -> int:
    """Position of a vertex in the order 1..n, -1..-m."""
    return t if t > 0 else g.n - t


def validate(g: Graph) -> list[str]:
    """List of violated admissibility conditions (empty when admissible)."""
    problems = []
    if g.n < 0 or g.m < 0:
        problems.append("negative vertex count")
        return problems
    seen = set()
    last_src = 0
    for pos, (s, t) in enumerate(g.edges):
        if not 1 <= s <= g.n:
            problems.append(f"edge {pos}: source {s} is not an aerial vertex")
        if not (1 <= t <= g.n or -g.m <= t <= -1):
            problems.append(f"edge {pos}: target {t} is not a vertex")
        if s == t:
            problems.append(f"edge {pos}: loop at {s}")
        if (s, t) in seen:
            problems.append(f"edge {pos}: multiple edge {s}->{t}")
        seen.add((s, t))
        if s < last_src:
            problems.append(f"edge {pos}: order not grouped by source")
        last_src = max(last_src, s)
    return problems


def is_admissible(g: Graph) -> bool:
    return not validate(g)


def _targets(n: int, m: int, k: int) -> list[int]:
    return [v for v in range(1, n + 1) if v != k] + [-j for j in range(1, m + 1)]


def _profiles(n: int, total: int, caps: Sequence[int]) -> Iterator[tuple]:
    if n == 0:
        if total == 0:
            yield ()
        return
    for s in range(min(total, caps[0]) + 1):
        for rest in _profiles(n - 1, total - s, caps[1:]):
            yield (s,) + rest


def iter_graphs(n: int, m: int, edge_count: int | None = None, profile: Sequence[int] | None = None) -> Iterator[Graph]:
    """Stream all labeled admissible graphs, deterministic order.

    Profiles (out-degrees) run in lexicographic order; within a profile the
    ordered target tuples of each vertex vary with the last vertex fastest.
    """
    if n < 0 or m < 0:
        return
    cap = n - 1 + m
    if profile is not None:
        profile = tuple(profile)
        if len(profile) != n or any(s < 0 or s > cap for s in profile):
            return
        if edge_count is not None and sum(profile) != edge_count:
            return
        profiles = [profile]
    elif edge_count is None:
        profiles = (p for total in range(n * cap + 1) for p in _profiles(n, total, [cap] * n))
    else:
        if edge_count < 0:
            return
        profiles = _profiles(n, edge_count, [cap] * n)
    for prof in profiles:
        choices = [list(permutations(_targets(n, m, k + 1), s)) for k, s in enumerate(prof)]
        for pick in product(*choices):
            edges = tuple((k + 1, t) for k, ts in enumerate(pick) for t in ts)
            yield Graph(n, m, edges)


def enumerate_graphs(n: int, m: int, edge_count: int | None = None, profile=None) -> list[Graph]:
    return list(iter_graphs(n, m, edge_count, profile))


def permute_edges(g: Graph, sigma: Sequence[int]) -> tuple[Graph, int]:
    """Relabel edges: new edge i is old edge sigma[i].  Returns (graph, sign)."""
    sigma = list(sigma)
    if sorted(sigma) != list(range(g.num_edges)):
        raise ValueError("sigma is not a permutation of the edge labels")
    for i, j in enumerate(sigma):
        if g.edges[i][0] != g.edges[j][0]:
            raise ValueError("permutation mixes edges of different source vertices")
    return Graph(g.n, g.m, tuple(g.edges[j] for j in sigma)), perm_sign(sigma)


def _sort_blocks(g: Graph, vertices) -> tuple[Graph, int]:
    sigma = list(range(g.num_edges))
    for k in vertices:
        blk = list(g.block(k))
        blk_sorted = sorted(blk, key=lambda p: target_key(g, g.edges[p][1]))
        for pos, src in zip(blk, blk_sorted):
            sigma[pos] = src
    return permute_edges(g, sigma)


def privileged_form(g: Graph) -> tuple[Graph, int]:
    """Sort the out-edges of vertex 1 by target; returns (graph, eps)."""
    if g.n == 0:
        return g, 1
    return _sort_blocks(g, [1])


def canonical_form(g: Graph) -> tuple[Graph, int]:
    """Sort every out-edge block by target; returns (graph, eps)."""
    return _sort_blocks(g, range(1, g.n + 1))


def block_permutations(g: Graph) -> Iterator[list[int]]:
    """All edge permutations preserving source blocks."""
    blocks = [list(g.block(k)) for k in range(1, g.n + 1)]
    for parts in product(*(permutations(b) for b in blocks)):
        yield [p for part in parts for p in part]


def contract_12(g: Graph) -> Graph | None:
    """Merge aerial vertices 1 and 2; None when they are linked or a
    multiple edge would appear."""
    if g.n < 2:
        raise ValueError("need at least two aerial vertices")
    def ren(v):
        if v > 2:
            return v - 1
        if v in (1, 2):
            return 1
        return v
    merged, others = [], []
    for s, t in g.edges:
        if {s, t} == {1, 2}:
            return None
        if s in (1, 2):
            merged.append((1, ren(t)))
        else:
            others.append((s - 1, ren(t)))
    edges = tuple(merged + others)
    if len(set(edges)) != len(edges):
        return None
    return Graph(g.n - 1, g.m, edges)


def doubling_sign(k1: int, k2: int, internal_edge: str | None = None) -> int:
    """Sign carried by graphs produced in the 2->1 mode of ``double_first_vertex``."""
    if internal_edge == "2->1":
        return -1 if (k1 * k2) % 2 else 1
    return 1


def internal_edge_sign(g: Graph, internal_edge: str) -> int:
    """Sign of a graph produced with an internal edge: (-1)^(position of the
    internal edge in its source block), times ``doubling_sign`` for 2->1.

    The first factor is the relabeling sign that moves the internal edge to
    the front of its block."""
    src, dst = (1, 2) if internal_edge == "1->2" else (2, 1)
    block = [g.edges[e] for e in g.block(src)]
    if (src, dst) not in block:
        raise ValueError(f"graph has no edge {internal_edge}")
    k1, k2 = len(g.block(1)), len(g.block(2))
    sign = -1 if block.index((src, dst)) % 2 else 1
    return sign * doubling_sign(k1, k2, internal_edge)


def double_first_vertex(delta: Graph, k1: int, k2: int, internal_edge: str | None = None) -> list[Graph]:
    """Split vertex 1 of ``delta`` into vertices 1 and 2 of out-degrees k1, k2.

    Without internal edge vertex 1 keeps the first k1 out-edges and vertex 2
    the last k2.  With an internal edge 1->2 (resp. 2->1) the new edge is
    inserted at every position of vertex 1's (resp. 2's) block, the other
    edges being taken in order.  Edges into vertex 1 of ``delta`` are sent
    to the new 1 or the new 2 in all possible ways.
    """
    if delta.n < 1:
        raise ValueError("need an aerial vertex to double")
    if k1 < 0 or k2 < 0:
        raise ValueError("out-degrees must be non-negative")
    own = delta.out_edges(1)
    if internal_edge is None:
        need = k1 + k2
    elif internal_edge in ("1->2", "2->1"):
        need = k1 + k2 - 1
        if (internal_edge == "1->2" and k1 < 1) or (internal_edge == "2->1" and k2 < 1):
            raise ValueError("internal edge needs out-degree >= 1 at its source")
    else:
        raise ValueError(f"unknown internal edge mode {internal_edge!r}")
    if len(own) != need:
        raise ValueError(f"vertex 1 has out-degree {len(own)}, expected {need}")

    def ren(v):
        return v + 1 if v > 1 else v

    own = [ren(t) for t in own]
    if internal_edge is None:
        heads = [(own[:k1], own[k1:])]
    elif internal_edge == "1->2":
        first = own[:k1 - 1]
        heads = [(first[:p] + [2] + first[p:], own[k1 - 1:]) for p in range(k1)]
    else:
        first = own[:k2 - 1]
        heads = [(own[k2 - 1:], first[:p] + [1] + first[p:]) for p in range(k2)]

    rest = [(ren(s), ren(t)) for s, t in delta.edges if s != 1]
    incoming = [i for i, (_, t) in enumerate(rest) if t == 1]
    out = []
    for b1, b2 in heads:
        for choice in product((1, 2), repeat=len(incoming)):
            body = list(rest)
            for i, c in zip(incoming, choice):
                body[i] = (body[i][0], c)
            edges = tuple([(1, t) for t in b1] + [(2, t) for t in b2] + body)
            g = Graph(delta.n + 1, delta.m, edges)
            if is_admissible(g):
                out.append(g)
    return out


@dataclass(frozen=True)
class Splitting:
    cloud1: tuple            # aerial vertices collapsing with vertex 1
    cloud2: tuple            # aerial vertices collapsing with vertex 2
    external: tuple
    m1: int                  # ground points 1..m1 go to cloud 1, the rest to cloud 2
    g1: Graph | None = None
    g2: Graph | None = None
    g3: Graph | None = None
    sign: int = 0
    zero: bool = False
    reason: str = ""

    @property
    def graphs(self):
        return self.g1, self.g2, self.g3


def enumerate_splittings(g: Graph) -> list[Splitting]:
    """All (cloud1, cloud2, external, ground cut) data for collapsing the
    vertices 1 and 2 onto two distinct ground points."""
    if g.n < 2:
        raise ValueError("need aerial vertices 1 and 2")
    out = []
    extra = list(range(3, g.n + 1))
    for assign in product((1, 2, 3), repeat=len(extra)):
        c1 = (1,) + tuple(v for v, a in zip(extra, assign) if a == 1)
        c2 = (2,) + tuple(v for v, a in zip(extra, assign) if a == 2)
        ext = tuple(v for v, a in zip(extra, assign) if a == 3)
        for m1 in range(g.m + 1):
            out.append(_build_splitting(g, c1, c2, ext, m1))
    return out


def _build_splitting(g: Graph, c1, c2, ext, m1) -> Splitting:
    grounds1 = [-j for j in range(1, m1 + 1)]
    grounds2 = [-j for j in range(m1 + 1, g.m + 1)]
    members = {1: set(c1) | set(grounds1), 2: set(c2) | set(grounds2)}
    cloud_of = {v: 1 for v in members[1]}
    cloud_of.update({v: 2 for v in members[2]})
    base = dict(cloud1=c1, cloud2=c2, external=ext, m1=m1)
    for s, t in g.edges:
        if s in cloud_of and cloud_of.get(t) != cloud_of[s]:
            return Splitting(**base, zero=True, reason=f"edge {s}->{t} leaves cloud {cloud_of[s]}")

    def sub(verts, grounds):
        amap = {v: i + 1 for i, v in enumerate(verts)}
        gmap = {v: -(i + 1) for i, v in enumerate(grounds)}
        amap.update(gmap)
        return amap

    maps = [sub(c1, grounds1), sub(c2, grounds2)]
    emap = {v: i + 1 for i, v in enumerate(ext)}
    parts: list[list] = [[], [], []]
    order: list[list] = [[], [], []]
    for pos, (s, t) in enumerate(g.edges):
        if s in cloud_of:
            c = cloud_of[s] - 1
            parts[c].append((maps[c][s], maps[c][t]))
            order[c].append(pos)
        else:
            tt = emap[t] if t in emap else -cloud_of[t]
            parts[2].append((emap[s], tt))
            order[2].append(pos)
    g1 = Graph(len(c1), m1, tuple(parts[0]))
    g2 = Graph(len(c2), g.m - m1, tuple(parts[1]))
    g3 = Graph(len(ext), 2, tuple(parts[2]))
    sign = perm_sign(order[0] + order[1] + order[2])
    if not is_admissible(g3):
        return Splitting(**base, g1=g1, g2=g2, g3=g3, sign=sign, zero=True,
                         reason="external graph has a multiple edge")
    return Splitting(**base, g1=g1, g2=g2, g3=g3, sign=sign)


__all__ = [
    "Graph",
    "Splitting",
    "parse_graph",
    "validate",
    "is_admissible",
    "iter_graphs",
    "enumerate_graphs",
    "permute_edges",
    "privileged_form",
    "canonical_form",
    "block_permutations",
    "contract_12",
    "double_first_vertex",
    "doubling_sign",
    "internal_edge_sign",
    "enumerate_splittings",
    "target_key",
]

