"""Graphs with half-edges, rooted forests, closures, and pullbacks.

A graph is a set of flags (half-edges) and vertices with a boundary map
and a pairing: two paired flags form an edge, an unpaired flag is a tail.
This is the textbook presentation where edges may hang.  Structured
graphs (labels, colors, orientation, flag order) live on top of this in
the structure module; here we only deal with the combinatorial core:

* build and validate graphs,
* connected components,
* rooted forests and their path closure (the graph whose edges are the
  upward paths of the forest, one identity loop per node, one outgoing
  tail per root),
* graph morphisms, with the pullback of a cospan,
* isomorphism search between decorated graphs, driven by caller-supplied
  invariants and order constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

__all__ = [
    "GraphBuildError",
    "Graph",
    "build_graph",
    "components",
    "RootedForest",
    "ClosureGraph",
    "closure",
    "GraphMorphism",
    "pullback",
    "find_isomorphism",
]


class GraphBuildError(ValueError):
    pass


@dataclass
class Graph:
    """Flags, vertices, boundary, pairing.  Ids are opaque strings."""

    vertices: set[str]
    flags: set[str]
    boundary: dict[str, str]
    partner: dict[str, str | None]

    def tails(self) -> list[str]:
        return sorted(f for f in self.flags if self.partner[f] is None)

    def edges(self) -> set[frozenset[str]]:
        return {
            frozenset((f, g))
            for f, g in self.partner.items()
            if g is not None
        }

    def flags_at(self, v: str) -> list[str]:
        return sorted(f for f in self.flags if self.boundary[f] == v)

    def copy(self) -> "Graph":
        return Graph(
            set(self.vertices),
            set(self.flags),
            dict(self.boundary),
            dict(self.partner),
        )


def build_graph(
    vertices: Iterable[str],
    flags: Iterable[str],
    boundary: Mapping[str, str],
    partner: Mapping[str, str | None],
) -> Graph:
    vlist = list(vertices)
    flist = list(flags)
    vs = set(vlist)
    fs = set(flist)
    if len(vs) != len(vlist):
        raise GraphBuildError("duplicate vertex ids")
    if len(fs) != len(flist):
        raise GraphBuildError("duplicate flag ids")
    if vs & fs:
        raise GraphBuildError("vertex and flag ids overlap")
    b = dict(boundary)
    p = dict(partner)
    for f in fs:
        if f not in b:
            raise GraphBuildError(f"flag {f!r} has no boundary")
        if b[f] not in vs:
            raise GraphBuildError(f"flag {f!r} bounds unknown vertex {b[f]!r}")
        if f not in p:
            raise GraphBuildError(f"flag {f!r} has no pairing entry")
        q = p[f]
        if q is not None:
            if q not in fs:
                raise GraphBuildError(f"flag {f!r} paired with unknown {q!r}")
            if q == f:
                raise GraphBuildError(f"flag {f!r} paired with itself")
            if p.get(q) != f:
                raise GraphBuildError(f"pairing of {f!r} and {q!r} not symmetric")
    for f in b:
        if f not in fs:
            raise GraphBuildError(f"boundary given for unknown flag {f!r}")
    for f in p:
        if f not in fs:
            raise GraphBuildError(f"pairing given for unknown flag {f!r}")
    return Graph(vs, fs, b, p)


def components(g: Graph) -> list[set[str]]:
    """Connected components as vertex sets, in sorted-min order."""
    parent: dict[str, str] = {v: v for v in g.vertices}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x: str, y: str) -> None:
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[rx] = ry

    for f, q in g.partner.items():
        if q is not None:
            union(g.boundary[f], g.boundary[q])
    buckets: dict[str, set[str]] = {}
    for v in g.vertices:
        buckets.setdefault(find(v), set()).add(v)
    return sorted(buckets.values(), key=lambda s: min(s))


@dataclass
class RootedForest:
    """Nodes with a parent map; parent None marks a root.

    Nodes are opaque string ids.  The forest is the box-nesting skeleton:
    roots are the visible components, children are boxes.
    """

    nodes: set[str]
    parent: dict[str, str | None]

    def __post_init__(self):
        for n in self.nodes:
            if n not in self.parent:
                raise GraphBuildError(f"node {n!r} has no parent entry")
            p = self.parent[n]
            if p is not None and p not in self.nodes:
                raise GraphBuildError(f"node {n!r} has unknown parent {p!r}")
        # acyclicity
        for n in self.nodes:
            seen = {n}
            cur = self.parent[n]
            while cur is not None:
                if cur in seen:
                    raise GraphBuildError(f"parent cycle through {n!r}")
                seen.add(cur)
                cur = self.parent[cur]

    def roots(self) -> list[str]:
        return sorted(n for n in self.nodes if self.parent[n] is None)

    def children(self, n: str) -> list[str]:
        return sorted(m for m in self.nodes if self.parent[m] == n)

    def root_of(self, n: str) -> str:
        while self.parent[n] is not None:
            n = self.parent[n]
        return n

    def depth(self, n: str) -> int:
        d = 0
        while self.parent[n] is not None:
            n = self.parent[n]
            d += 1
        return d

    def ancestors(self, n: str) -> list[str]:
        """Strict ancestors, nearest first."""
        out = []
        cur = self.parent[n]
        while cur is not None:
            out.append(cur)
            cur = self.parent[cur]
        return out

    def path_up(self, a: str, b: str) -> list[str] | None:
        """The node path a, ..., b if b is a (weak) ancestor of a, else None."""
        path = [a]
        cur = a
        while cur != b:
            cur = self.parent[cur]
            if cur is None:
                return None
            path.append(cur)
        return path

    def is_ancestor(self, b: str, a: str) -> bool:
        """True if b is a weak ancestor of a."""
        return self.path_up(a, b) is not None

    def descendants(self, n: str) -> set[str]:
        """Weak descendants: the subtree of n."""
        out = {n}
        grow = True
        while grow:
            grow = False
            for m in self.nodes:
                if m not in out and self.parent[m] in out:
                    out.add(m)
                    grow = True
        return out

    def copy(self) -> "RootedForest":
        return RootedForest(set(self.nodes), dict(self.parent))


def _path_edge_id(a: str, b: str) -> tuple[str, str]:
    return (f"cl:{a}>{b}:lo", f"cl:{a}>{b}:hi")


def _loop_id(n: str) -> tuple[str, str]:
    return (f"cl:{n}:loop:lo", f"cl:{n}:loop:hi")


def _root_tail_id(r: str) -> str:
    return f"cl:{r}:out"


@dataclass
class ClosureGraph:
    """The path closure of a rooted forest.

    Vertices are the forest nodes.  For every strict descendant pair
    (a below b) there is one edge whose low half sits at a and high half
    at b; every node also carries an identity loop (the empty path), and
    every root an outgoing tail.  Morphisms into the closure address
    edges by their node path.
    """

    forest: RootedForest
    graph: Graph = field(init=False)

    def __post_init__(self):
        f = self.forest
        vertices = set(f.nodes)
        flags: set[str] = set()
        boundary: dict[str, str] = {}
        partner: dict[str, str | None] = {}
        for n in sorted(f.nodes):
            lo, hi = _loop_id(n)
            flags.update((lo, hi))
            boundary[lo] = boundary[hi] = n
            partner[lo] = hi
            partner[hi] = lo
            for b in f.ancestors(n):
                plo, phi = _path_edge_id(n, b)
                flags.update((plo, phi))
                boundary[plo] = n
                boundary[phi] = b
                partner[plo] = phi
                partner[phi] = plo
        for r in f.roots():
            t = _root_tail_id(r)
            flags.add(t)
            boundary[t] = r
            partner[t] = None
        self.graph = build_graph(vertices, flags, boundary, partner)

    def loop(self, n: str) -> tuple[str, str]:
        """Low and high halves of the identity loop at n."""
        return _loop_id(n)

    def path_flags(self, a: str, b: str) -> tuple[str, str]:
        """Low (at a) and high (at b) halves of the edge for the path a up to b.

        For a == b this is the identity loop.
        """
        if a == b:
            return _loop_id(a)
        if self.forest.path_up(a, b) is None:
            raise KeyError(f"{b!r} is not an ancestor of {a!r}")
        return _path_edge_id(a, b)

    def root_tail(self, r: str) -> str:
        if self.forest.parent.get(r, "?") is not None:
            raise KeyError(f"{r!r} is not a root")
        return _root_tail_id(r)


def closure(forest: RootedForest) -> ClosureGraph:
    return ClosureGraph(forest)


@dataclass
class GraphMorphism:
    """A morphism of graphs: vertex and flag maps commuting with boundary
    and pairing.  Tails map to tails (forced by the pairing condition)."""

    src: Graph
    dst: Graph
    vmap: dict[str, str]
    fmap: dict[str, str]

    def check(self) -> None:
        for v in self.src.vertices:
            if self.vmap.get(v) not in self.dst.vertices:
                raise GraphBuildError(f"vertex {v!r} not mapped into codomain")
        for f in self.src.flags:
            g = self.fmap.get(f)
            if g not in self.dst.flags:
                raise GraphBuildError(f"flag {f!r} not mapped into codomain")
            if self.vmap[self.src.boundary[f]] != self.dst.boundary[g]:
                raise GraphBuildError(f"boundary square fails at {f!r}")
            # the involution square: an edge may collapse onto a tail,
            # but a tail never maps to a half of a proper edge
            pf = self.src.partner[f]
            pg = self.dst.partner[g]
            jf = f if pf is None else pf
            expected = g if pg is None else pg
            if self.fmap[jf] != expected:
                raise GraphBuildError(f"pairing square fails at {f!r}")


def _pair_id(x: str, y: str) -> str:
    return f"{x}&{y}"


def pullback(
    f: GraphMorphism, g: GraphMorphism
) -> tuple[Graph, dict[str, tuple[str, str]]]:
    """Pullback of the cospan f: A -> C <- B :g.

    Returns the pullback graph together with a map from its ids to the
    contributing (A-id, B-id) pairs, from which both projections read
    off.  Vertex and flag ids of the pullback are synthesized.
    """
    if f.dst is not g.dst:
        # structural equality is enough; identity is the common case
        if (
            f.dst.vertices != g.dst.vertices
            or f.dst.flags != g.dst.flags
        ):
            raise GraphBuildError("pullback legs have different codomains")
    vertices: set[str] = set()
    vpairs: dict[str, tuple[str, str]] = {}
    vindex: dict[tuple[str, str], str] = {}
    for a in sorted(f.src.vertices):
        for b in sorted(g.src.vertices):
            if f.vmap[a] == g.vmap[b]:
                vid = _pair_id(a, b)
                vertices.add(vid)
                vpairs[vid] = (a, b)
                vindex[(a, b)] = vid
    flags: set[str] = set()
    fpairs: dict[str, tuple[str, str]] = {}
    findex: dict[tuple[str, str], str] = {}
    for x in sorted(f.src.flags):
        for y in sorted(g.src.flags):
            if f.fmap[x] == g.fmap[y]:
                fid = _pair_id(x, y)
                flags.add(fid)
                fpairs[fid] = (x, y)
                findex[(x, y)] = fid
    boundary: dict[str, str] = {}
    partner: dict[str, str | None] = {}
    for fid, (x, y) in fpairs.items():
        boundary[fid] = vindex[(f.src.boundary[x], g.src.boundary[y])]
        px = f.src.partner[x]
        py = g.src.partner[y]
        jx = x if px is None else px
        jy = y if py is None else py
        if (jx, jy) == (x, y):
            partner[fid] = None
        else:
            partner[fid] = findex[(jx, jy)]
    pb = build_graph(vertices, flags, boundary, partner)
    pairs = dict(vpairs)
    pairs.update(fpairs)
    return pb, pairs


def find_isomorphism(
    g1: Graph,
    g2: Graph,
    vertex_key: Callable[[Graph, str], object],
    flag_key: Callable[[Graph, str], object],
    ordered_flags: Callable[[Graph, str], list[str]] | None = None,
    extra_check: Callable[[dict[str, str], dict[str, str]], bool] | None = None,
) -> tuple[dict[str, str], dict[str, str]] | None:
    """Searches for an isomorphism g1 -> g2 as a (vmap, fmap) pair.

    vertex_key and flag_key are invariants that the map must preserve;
    they also drive the candidate prefilter.  ordered_flags gives, per
    vertex, the flags whose relative order the map must preserve (the
    caller decides which flags are rigid).  extra_check runs on every
    complete candidate before it is returned.
    """
    if len(g1.vertices) != len(g2.vertices) or len(g1.flags) != len(g2.flags):
        return None
    key1 = {v: vertex_key(g1, v) for v in g1.vertices}
    key2 = {v: vertex_key(g2, v) for v in g2.vertices}
    if sorted(map(repr, key1.values())) != sorted(map(repr, key2.values())):
        return None
    fkey1 = {f: flag_key(g1, f) for f in g1.flags}
    fkey2 = {f: flag_key(g2, f) for f in g2.flags}
    if sorted(map(repr, fkey1.values())) != sorted(map(repr, fkey2.values())):
        return None

    candidates = {
        v: sorted(w for w in g2.vertices if key2[w] == key1[v])
        for v in g1.vertices
    }
    for v, cs in candidates.items():
        if not cs:
            return None
    order1 = sorted(g1.vertices, key=lambda v: (len(candidates[v]), v))

    def match_vertex_flags(
        v: str, w: str, vmap: dict[str, str], fmap: dict[str, str]
    ):
        """Yields extensions of fmap pairing v's flags with w's."""
        f1s = g1.flags_at(v)
        f2s = g2.flags_at(w)
        if len(f1s) != len(f2s):
            return
        o1 = ordered_flags(g1, v) if ordered_flags else []
        o2 = ordered_flags(g2, w) if ordered_flags else []
        if len(o1) != len(o2):
            return
        forced = dict(zip(o1, o2))
        for a, b in forced.items():
            if fkey1[a] != fkey2[b]:
                return
        rest1 = [a for a in f1s if a not in forced]
        rest2 = [b for b in f2s if b not in set(forced.values())]

        def go(i: int, used: set[str], fm: dict[str, str]):
            if i == len(rest1):
                yield fm
                return
            a = rest1[i]
            for b in rest2:
                if b in used or fkey2[b] != fkey1[a]:
                    continue
                fm2 = dict(fm)
                fm2[a] = b
                yield from go(i + 1, used | {b}, fm2)

        base = dict(fmap)
        conflict = False
        for a, b in forced.items():
            if a in base and base[a] != b:
                conflict = True
                break
            base[a] = b
        if conflict:
            return
        yield from go(0, set(), base)

    def consistent(vmap: dict[str, str], fmap: dict[str, str]) -> bool:
        for a, b in fmap.items():
            pa = g1.partner[a]
            pb = g2.partner[b]
            if pa is None:
                if pb is not None:
                    return False
            else:
                if pb is None:
                    return False
                if pa in fmap and fmap[pa] != pb:
                    return False
            if vmap.get(g1.boundary[a]) not in (None, g2.boundary[b]):
                return False
        return True

    def search(i: int, vmap: dict[str, str], fmap: dict[str, str], used: set[str]):
        if i == len(order1):
            if extra_check is None or extra_check(vmap, fmap):
                yield vmap, fmap
            return
        v = order1[i]
        for w in candidates[v]:
            if w in used:
                continue
            vmap2 = dict(vmap)
            vmap2[v] = w
            for fmap2 in match_vertex_flags(v, w, vmap2, fmap):
                if consistent(vmap2, fmap2):
                    yield from search(i + 1, vmap2, fmap2, used | {w})

    for vmap, fmap in search(0, {}, {}, set()):
        return vmap, fmap
    return None
