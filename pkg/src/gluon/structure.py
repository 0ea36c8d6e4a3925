"""Quasi-proof-structures: labeled modules over a box forest.

A structure couples a flag graph (the module) with a rooted forest (the
box nesting) through a vertex assignment.  Cells are vertices labeled

    ax, cut, one, bot, tensor, par, why (?), ofc (!), dai (the daimon)

with typed, oriented flags.  Tails of the module are the conclusions;
their left-to-right order, grouped by forest root, is the type of the
structure: one block of formulas per root.

The module knows nothing about boxes except through the vertex
assignment; edge paths and the door bijection are derived, which keeps
the two layers consistent by construction.  validate_classify checks the
geometric conditions and reports every violation it finds, then tags the
structure with the classes it belongs to.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .formula import Formula, SequentContext, dual, format_formula
from .graph import (
    Graph,
    GraphBuildError,
    RootedForest,
    build_graph,
    closure,
    find_isomorphism,
)

__all__ = [
    "LABELS",
    "Structure",
    "StructureBuilder",
    "ValidationReport",
    "validate_classify",
    "type_of",
    "size_measure",
    "compare_measures",
    "structure_iso",
    "restrict_to_roots",
    "fresh_id",
]

LABELS = ("ax", "cut", "one", "bot", "tensor", "par", "why", "ofc", "dai")

# (inputs, outputs); None means any number
_ARITY = {
    "ax": (0, 2),
    "cut": (2, 0),
    "one": (0, 1),
    "bot": (0, 1),
    "tensor": (2, 1),
    "par": (2, 1),
    "why": (None, 1),
    "ofc": (None, 1),
    "dai": (0, None),
}


def fresh_id(prefix: str, taken: Iterable[str]) -> str:
    taken = set(taken)
    if prefix not in taken:
        return prefix
    n = 1
    while f"{prefix}_{n}" in taken:
        n += 1
    return f"{prefix}_{n}"


@dataclass
class Structure:
    graph: Graph
    label: dict[str, str]
    color: dict[str, Formula]
    orient: dict[str, str]  # 'in' | 'out'
    order: list[str]  # all flags; conclusions and inputs read their order here
    forest: RootedForest
    vmap: dict[str, str]

    # -- basic views ---------------------------------------------------

    def copy(self) -> "Structure":
        return Structure(
            self.graph.copy(),
            dict(self.label),
            dict(self.color),
            dict(self.orient),
            list(self.order),
            self.forest.copy(),
            dict(self.vmap),
        )

    def conclusions(self) -> list[str]:
        return [
            f
            for f in self.order
            if self.graph.partner.get(f) is None and self.orient.get(f) == "out"
        ]

    def inputs(self, v: str) -> list[str]:
        return [
            f
            for f in self.order
            if self.graph.boundary.get(f) == v and self.orient.get(f) == "in"
        ]

    def outputs(self, v: str) -> list[str]:
        return [
            f
            for f in self.order
            if self.graph.boundary.get(f) == v and self.orient.get(f) == "out"
        ]

    def cell_of_conclusion(self, i: int) -> str:
        """Vertex owning the i-th conclusion, 1-based."""
        return self.graph.boundary[self.conclusions()[i - 1]]

    def node_of(self, v: str) -> str:
        return self.vmap[v]

    def root_of_vertex(self, v: str) -> str:
        return self.forest.root_of(self.vmap[v])

    def roots_in_order(self) -> list[str]:
        """Roots ordered by their first conclusion; rootless conclusions
        cannot happen in valid structures."""
        seen: list[str] = []
        for f in self.conclusions():
            r = self.root_of_vertex(self.graph.boundary[f])
            if r not in seen:
                seen.append(r)
        for r in self.forest.roots():
            if r not in seen:
                seen.append(r)
        return seen

    def conclusions_of_root(self, r: str) -> list[str]:
        return [
            f
            for f in self.conclusions()
            if self.root_of_vertex(self.graph.boundary[f]) == r
        ]

    def edge_path(self, f: str) -> list[str] | None:
        """Forest path of the edge holding flag f, from the output end's
        node up to the input end's node.

        A single-node path means an internal edge.  None means a tail or
        an invalid crossing (downward or incomparable).
        """
        g = self.graph.partner.get(f)
        if g is None:
            return None
        out_flag = f if self.orient[f] == "out" else g
        in_flag = g if out_flag == f else f
        deep = self.vmap[self.graph.boundary[out_flag]]
        shallow = self.vmap[self.graph.boundary[in_flag]]
        if deep == shallow:
            return [deep]
        return self.forest.path_up(deep, shallow)

    def crossing_depth(self, f: str) -> int:
        """Number of borders crossed by the edge holding f (0 if internal)."""
        path = self.edge_path(f)
        if path is None:
            return 0
        return len(path) - 1

    def door_target(self, f: str) -> str | None:
        """For an input flag whose edge crosses borders, the child box it
        enters (the penultimate node of the upward path)."""
        g = self.graph.partner.get(f)
        if g is None:
            return None
        u = self.graph.boundary[f]
        v = self.graph.boundary[g]
        path = self.forest.path_up(self.vmap[v], self.vmap[u])
        if path is None or len(path) < 2:
            return None
        return path[-2]

    def cells_at_node(self, n: str) -> list[str]:
        return sorted(v for v in self.graph.vertices if self.vmap[v] == n)

    def cells_in_subtree(self, n: str) -> set[str]:
        nodes = self.forest.descendants(n)
        return {v for v in self.graph.vertices if self.vmap[v] in nodes}

    def pieces(self, r: str) -> list[set[str]]:
        """Units of the root r under splitting: module components, with
        each child box subtree glued into a single unit."""
        verts = {v for v in self.graph.vertices if self.root_of_vertex(v) == r}
        parent: dict[str, str] = {v: v for v in verts}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def union(x, y):
            rx, ry = find(x), find(y)
            if rx != ry:
                parent[rx] = ry

        for f, g in self.graph.partner.items():
            if g is not None and f < g:
                u, v = self.graph.boundary[f], self.graph.boundary[g]
                if u in verts and v in verts:
                    union(u, v)
        for c in self.forest.children(r):
            group = [v for v in verts if self.vmap[v] in self.forest.descendants(c)]
            for a, b in zip(group, group[1:]):
                union(a, b)
        buckets: dict[str, set[str]] = {}
        for v in verts:
            buckets.setdefault(find(v), set()).add(v)
        return sorted(buckets.values(), key=lambda s: min(s))

    def piece_of(self, v: str) -> set[str]:
        r = self.root_of_vertex(v)
        for p in self.pieces(r):
            if v in p:
                return p
        raise KeyError(v)

    def is_empty(self) -> bool:
        return not self.graph.vertices and not self.forest.nodes

    # -- derived door map ----------------------------------------------

    def door_map(self) -> dict[str, str]:
        """Partial map from 1-crossing !-inputs to the child node entered."""
        out: dict[str, str] = {}
        for v in sorted(self.graph.vertices):
            if self.label[v] != "ofc":
                continue
            for f in self.inputs(v):
                if self.crossing_depth(f) == 1:
                    tgt = self.door_target(f)
                    if tgt is not None:
                        out[f] = tgt
        return out

    def __repr__(self) -> str:
        try:
            ty = format_context_of(self)
        except Exception:
            ty = "<untyped>"
        return (
            f"<Structure {len(self.graph.vertices)} cells, "
            f"{len(self.forest.nodes)} nodes, type {ty}>"
        )


def format_context_of(s: Structure) -> str:
    from .formula import format_context

    return format_context(type_of(s))


def type_of(s: Structure) -> SequentContext:
    """The typed conclusion blocks, one per root in conclusion order."""
    blocks = []
    for r in s.roots_in_order():
        fs = s.conclusions_of_root(r)
        if fs:
            blocks.append([s.color[f] for f in fs])
    return SequentContext(blocks)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    classes: set[str] = field(default_factory=set)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_classify(s: Structure) -> ValidationReport:
    """Checks structural validity exhaustively and classifies.

    Classes (cumulative where meaningful): 'quasi' for any valid
    structure, 'mell-star', 'mell', 'dill0-star', 'dill0',
    'proof-structure' (single root), 'empty'.
    """
    v: list[str] = []
    g = s.graph

    if s.is_empty():
        return ValidationReport([], {"quasi", "empty", "mell-star", "mell",
                                     "dill0-star", "dill0"})

    # labels, orientation, colors present
    for vert in sorted(g.vertices):
        if s.label.get(vert) not in LABELS:
            v.append(f"cell {vert}: unknown label {s.label.get(vert)!r}")
        if s.vmap.get(vert) not in s.forest.nodes:
            v.append(f"cell {vert}: not assigned to a forest node")
    for f in sorted(g.flags):
        if s.orient.get(f) not in ("in", "out"):
            v.append(f"flag {f}: missing orientation")
        if f not in s.color:
            v.append(f"flag {f}: missing formula")
        if f not in s.order:
            v.append(f"flag {f}: missing from the order")
    if len(s.order) != len(set(s.order)) or set(s.order) - set(g.flags):
        v.append("order is not a permutation of the flags")
    if v:
        return ValidationReport(v, set())

    # tails are conclusions: no dangling inputs
    for f in sorted(g.flags):
        if g.partner[f] is None and s.orient[f] == "in":
            v.append(f"flag {f}: dangling input tail")

    # edges join one output to one input, with equal formulas
    for f, q in sorted(g.partner.items()):
        if q is None or f > q:
            continue
        o = {s.orient[f], s.orient[q]}
        if o != {"in", "out"}:
            v.append(f"edge {f}-{q}: must join an output to an input")
            continue
        if s.color[f] != s.color[q]:
            v.append(
                f"edge {f}-{q}: formula mismatch "
                f"{format_formula(s.color[f])} vs {format_formula(s.color[q])}"
            )

    # arities and typing per cell
    for vert in sorted(g.vertices):
        lab = s.label[vert]
        ins = s.inputs(vert)
        outs = s.outputs(vert)
        want_in, want_out = _ARITY[lab]
        if want_in is not None and len(ins) != want_in:
            v.append(f"cell {vert} ({lab}): expected {want_in} inputs, has {len(ins)}")
        if want_out is not None and len(outs) != want_out:
            v.append(f"cell {vert} ({lab}): expected {want_out} outputs, has {len(outs)}")
            continue
        ic = [s.color[f] for f in ins]
        oc = [s.color[f] for f in outs]
        if lab == "ax" and len(oc) == 2 and oc[1] != dual(oc[0]):
            v.append(f"cell {vert} (ax): conclusions are not dual")
        if lab == "cut" and len(ic) == 2 and ic[1] != dual(ic[0]):
            v.append(f"cell {vert} (cut): premises are not dual")
        if lab == "one" and oc and oc[0].kind != "one":
            v.append(f"cell {vert} (one): conclusion is not 1")
        if lab == "bot" and oc and oc[0].kind != "bot":
            v.append(f"cell {vert} (bot): conclusion is not bot")
        if lab in ("tensor", "par") and len(ic) == 2 and oc:
            want = Formula(lab, left=ic[0], right=ic[1])
            if oc[0] != want:
                v.append(
                    f"cell {vert} ({lab}): conclusion "
                    f"{format_formula(oc[0])} != {format_formula(want)}"
                )
        if lab == "why" and oc:
            if oc[0].kind != "why":
                v.append(f"cell {vert} (?): conclusion is not a ?-formula")
            else:
                for f, a in zip(ins, ic):
                    if a != oc[0].sub:
                        v.append(f"cell {vert} (?): premise {f} not typed "
                                 f"{format_formula(oc[0].sub)}")
        if lab == "ofc" and oc:
            if oc[0].kind != "ofc":
                v.append(f"cell {vert} (!): conclusion is not a !-formula")
            else:
                for f, a in zip(ins, ic):
                    if a != oc[0].sub:
                        v.append(f"cell {vert} (!): premise {f} not typed "
                                 f"{format_formula(oc[0].sub)}")

    # border geometry
    for f, q in sorted(g.partner.items()):
        if q is None or f > q:
            continue
        u, w = g.boundary[f], g.boundary[q]
        nu, nw = s.vmap[u], s.vmap[w]
        if nu == nw:
            continue
        out_flag = f if s.orient[f] == "out" else q
        in_flag = q if out_flag == f else f
        deep, shallow = g.boundary[out_flag], g.boundary[in_flag]
        path = s.forest.path_up(s.vmap[deep], s.vmap[shallow])
        if path is None:
            if s.forest.path_up(s.vmap[shallow], s.vmap[deep]) is not None:
                v.append(f"edge {f}-{q}: crosses a border downward")
            else:
                v.append(f"edge {f}-{q}: endpoints in incomparable boxes")
            continue
        if s.label[shallow] not in ("why", "ofc"):
            v.append(
                f"edge {f}-{q}: crosses a border into a "
                f"{s.label[shallow]}-cell (only ? and ! may be doors)"
            )

    # conclusions: at roots, one nonempty contiguous block per root
    concl = s.conclusions()
    for f in concl:
        vert = g.boundary[f]
        if s.forest.parent.get(s.vmap[vert]) is not None:
            v.append(f"conclusion {f}: its cell sits inside a box")
    if not any(x.startswith("conclusion") for x in v):
        seq = [s.root_of_vertex(g.boundary[f]) for f in concl]
        seen: list[str] = []
        for r in seq:
            if seen and seen[-1] != r and r in seen:
                v.append(f"root {r}: conclusions are not contiguous")
            if not seen or seen[-1] != r:
                seen.append(r)
        for r in s.forest.roots():
            if r not in seq:
                v.append(f"root {r}: no conclusions (empty block)")

    # door map injectivity; principal doors enter child boxes only
    dm = s.door_map()
    targets = Counter(dm.values())
    for tgt, n in sorted(targets.items()):
        if n > 1:
            v.append(f"box {tgt}: {n} principal doors")

    report = ValidationReport(v, set())
    if v:
        return report

    classes = {"quasi"}
    if len(s.forest.roots()) == 1:
        classes.add("proof-structure")

    nonroot = [n for n in s.forest.nodes if s.forest.parent[n] is not None]
    if not nonroot:
        classes.add("dill0-star")
        if not any(lab == "dai" for lab in s.label.values()):
            classes.add("dill0")

    mell_star = True
    for vert in sorted(g.vertices):
        if s.label[vert] != "ofc":
            continue
        ins = s.inputs(vert)
        if len(ins) != 1 or s.crossing_depth(ins[0]) != 1:
            mell_star = False
    if set(targets) != set(nonroot):
        mell_star = False
    if mell_star:
        classes.add("mell-star")
        mell = True
        for vert in sorted(g.vertices):
            if s.label[vert] != "dai":
                continue
            node = s.vmap[vert]
            if s.forest.parent[node] is None:
                mell = False
            elif s.cells_at_node(node) != [vert]:
                mell = False
        if mell:
            classes.add("mell")

    report.classes = classes
    return report


# -- size measure ------------------------------------------------------


def size_measure(s: Structure):
    """Per-piece pairs (multiset of ?-cell arities, count of non-daimon
    cells), collected as a multiset over the pieces of all roots.

    Pieces, not roots: splitting a root rearranges pieces without
    touching their contents, so exchange and mix preserve the measure
    while every deleting step strictly lowers it.
    """
    out = []
    for r in s.forest.roots():
        for piece in s.pieces(r):
            p = sorted(
                (len(s.inputs(v)) for v in piece if s.label[v] == "why"),
                reverse=True,
            )
            q = sum(1 for v in piece if s.label[v] != "dai")
            out.append((tuple(p), q))
    return Counter(out)


def _dm_greater(m1: Counter, m2: Counter, gt) -> bool:
    """Dershowitz-Manna: m1 > m2 iff removing the common part, every
    element left in m2 is dominated by some element left in m1."""
    d1 = m1 - m2
    d2 = m2 - m1
    if not d1 and not d2:
        return False
    if not d1:
        return False
    return all(any(gt(a, b) for a in d1) for b in d2)


def _pair_greater(a, b) -> bool:
    (p1, q1), (p2, q2) = a, b
    c1, c2 = Counter(p1), Counter(p2)
    if c1 != c2:
        return _dm_greater(c1, c2, lambda x, y: x > y)
    return q1 > q2


def compare_measures(m1: Counter, m2: Counter) -> int:
    """-1, 0, 1 as m1 <, =, > m2 in the termination order."""
    if m1 == m2:
        return 0
    if _dm_greater(m1, m2, _pair_greater):
        return 1
    if _dm_greater(m2, m1, _pair_greater):
        return -1
    raise ValueError("measures are incomparable")


# -- isomorphism -------------------------------------------------------


def iso_fingerprint(s: Structure):
    """A cheap invariant equal on isomorphic structures, so different
    fingerprints prove non-isomorphism and a full search is only needed
    within a fingerprint class.  Cached on the instance: do not mutate a
    structure after taking its fingerprint (copies start fresh).
    """
    fp = s.__dict__.get("_iso_fp")
    if fp is not None:
        return fp
    # one pass over the flag order instead of inputs()/outputs() per cell
    ins_of: dict[str, list[str]] = {}
    outs_of: dict[str, list[str]] = {}
    concl: dict[str, int] = {}
    for f in s.order:
        v = s.graph.boundary.get(f)
        if v is None:
            continue
        o = s.orient.get(f)
        if o == "in":
            ins_of.setdefault(v, []).append(f)
        elif o == "out":
            outs_of.setdefault(v, []).append(f)
            if s.graph.partner.get(f) is None:
                concl[f] = len(concl)
    vkeys = {}
    for v in s.graph.vertices:
        outs = outs_of.get(v, ())
        vkeys[v] = (
            s.label[v],
            tuple(sorted(format_formula(s.color[f])
                         for f in ins_of.get(v, ()))),
            tuple(sorted(format_formula(s.color[f]) for f in outs)),
            tuple(sorted(concl.get(f, -1) for f in outs)),
            s.forest.depth(s.vmap[v]),
        )
    cells_at: dict[str, int] = {}
    for v in s.graph.vertices:
        cells_at[s.vmap[v]] = cells_at.get(s.vmap[v], 0) + 1
    refined = []
    for v in s.graph.vertices:
        nbrs = []
        for f in s.graph.flags_at(v):
            p = s.graph.partner.get(f)
            if p is not None:
                nbrs.append(vkeys[s.graph.boundary[p]])
        refined.append((vkeys[v], tuple(sorted(nbrs))))
    nodes = tuple(sorted(
        (s.forest.depth(n), len(s.forest.children(n)), cells_at.get(n, 0))
        for n in s.forest.nodes
    ))
    fp = (
        tuple(format_formula(s.color[f]) for f in s.conclusions()),
        tuple(sorted(refined)),
        nodes,
    )
    s.__dict__["_iso_fp"] = fp
    return fp


def structure_iso(
    s1: Structure, s2: Structure, mode: str = "standard"
) -> tuple[dict[str, str], dict[str, str]] | None:
    """Isomorphism of structures: graph iso preserving labels, formulas,
    orientation, the conclusion sequence, the premise order of tensor and
    par cells, and the box assignment up to a forest bijection.  In
    'rigid' mode the premise order of ? and ! cells is preserved too.
    """
    if mode not in ("standard", "rigid"):
        raise ValueError(f"unknown iso mode {mode!r}")
    if iso_fingerprint(s1) != iso_fingerprint(s2):
        return None
    c1 = {f: i for i, f in enumerate(s1.conclusions())}
    c2 = {f: i for i, f in enumerate(s2.conclusions())}
    if len(c1) != len(c2):
        return None

    def vertex_key(s, c):
        def key(g, v):
            return (
                s.label[v],
                len(s.inputs(v)),
                len(s.outputs(v)),
                tuple(sorted(format_formula(s.color[f]) for f in s.inputs(v))),
                tuple(sorted(format_formula(s.color[f]) for f in s.outputs(v))),
                s.forest.depth(s.vmap[v]),
            )

        return key

    def flag_key(s, c):
        def key(g, f):
            return (
                s.orient[f],
                g.partner[f] is None,
                format_formula(s.color[f]),
                c.get(f, -1),
            )

        return key

    ordered = ("tensor", "par") if mode == "standard" else (
        "tensor", "par", "why", "ofc"
    )

    def ordered_flags(s):
        def of(g, v):
            if s.label[v] in ordered:
                return s.inputs(v)
            return []

        return of

    def extra(vmap, fmap):
        nodemap: dict[str, str] = {}
        for v, w in vmap.items():
            a, b = s1.vmap[v], s2.vmap[w]
            if nodemap.setdefault(a, b) != b:
                return False
        if len(set(nodemap.values())) != len(nodemap):
            return False
        if len(nodemap) != len(s1.forest.nodes) or len(s1.forest.nodes) != len(
            s2.forest.nodes
        ):
            return False
        for a, b in nodemap.items():
            pa, pb = s1.forest.parent[a], s2.forest.parent[b]
            if (pa is None) != (pb is None):
                return False
            if pa is not None and nodemap.get(pa) != pb:
                return False
        return True

    # the two key closures must compute the same invariant on both
    # sides, so each side gets its own closure over its own tables
    k1, k2 = vertex_key(s1, c1), vertex_key(s2, c2)
    fk1, fk2 = flag_key(s1, c1), flag_key(s2, c2)

    def vkey(g, v):
        return k1(g, v) if g is s1.graph else k2(g, v)

    def fkey(g, f):
        return fk1(g, f) if g is s1.graph else fk2(g, f)

    def oflags(g, v):
        return ordered_flags(s1)(g, v) if g is s1.graph else ordered_flags(s2)(g, v)

    return find_isomorphism(
        s1.graph,
        s2.graph,
        vkey,
        fkey,
        ordered_flags=oflags,
        extra_check=extra,
    )


def restrict_to_roots(s: Structure, roots: Iterable[str]) -> Structure:
    """The substructure spanned by the given roots' subtrees.

    Valid structures have no edges between different roots, so this is a
    clean split; ids are preserved.
    """
    roots = list(roots)
    nodes: set[str] = set()
    for r in roots:
        nodes |= s.forest.descendants(r)
    verts = {v for v in s.graph.vertices if s.vmap[v] in nodes}
    flags = {f for f in s.graph.flags if s.graph.boundary[f] in verts}
    for f in flags:
        q = s.graph.partner[f]
        if q is not None and q not in flags:
            raise GraphBuildError(f"edge {f}-{q} leaves the selected roots")
    g = build_graph(
        verts,
        flags,
        {f: s.graph.boundary[f] for f in flags},
        {f: s.graph.partner[f] for f in flags},
    )
    forest = RootedForest(nodes, {n: s.forest.parent[n] for n in nodes})
    return Structure(
        g,
        {v: s.label[v] for v in verts},
        {f: s.color[f] for f in flags},
        {f: s.orient[f] for f in flags},
        [f for f in s.order if f in flags],
        forest,
        {v: s.vmap[v] for v in verts},
    )


# -- builder -----------------------------------------------------------


class StructureBuilder:
    """Incremental construction with readable ids.

    Cells get flags named '<cell>.i<k>' and '<cell>.o<k>'.  Conclusions
    are declared in order; wiring joins an output to an input.  Nothing
    is validated here beyond id bookkeeping, so invalid structures can be
    built on purpose.
    """

    def __init__(self):
        self._nodes: dict[str, str | None] = {}
        self._cells: dict[str, tuple[str, str]] = {}  # name -> (label, node)
        self._ins: dict[str, list[Formula]] = {}
        self._outs: dict[str, list[Formula]] = {}
        self._wires: list[tuple[str, str]] = []
        self._conclusions: list[str] = []

    def node(self, name: str, parent: str | None = None) -> "StructureBuilder":
        if name in self._nodes:
            raise ValueError(f"duplicate node {name!r}")
        self._nodes[name] = parent
        return self

    def cell(
        self,
        name: str,
        label: str,
        node: str,
        inputs: Iterable[Formula] = (),
        outputs: Iterable[Formula] = (),
    ) -> "StructureBuilder":
        if name in self._cells:
            raise ValueError(f"duplicate cell {name!r}")
        self._cells[name] = (label, node)
        self._ins[name] = list(inputs)
        self._outs[name] = list(outputs)
        return self

    def wire(self, out_flag: str, in_flag: str) -> "StructureBuilder":
        self._wires.append((out_flag, in_flag))
        return self

    def conclude(self, *flags: str) -> "StructureBuilder":
        self._conclusions.extend(flags)
        return self

    def build(self) -> Structure:
        vertices = list(self._cells)
        flags: list[str] = []
        boundary: dict[str, str] = {}
        orient: dict[str, str] = {}
        color: dict[str, Formula] = {}
        for name in self._cells:
            for k, a in enumerate(self._ins[name]):
                f = f"{name}.i{k}"
                flags.append(f)
                boundary[f] = name
                orient[f] = "in"
                color[f] = a
            for k, a in enumerate(self._outs[name]):
                f = f"{name}.o{k}"
                flags.append(f)
                boundary[f] = name
                orient[f] = "out"
                color[f] = a
        partner: dict[str, str | None] = {f: None for f in flags}
        for a, b in self._wires:
            if a not in partner or b not in partner:
                raise ValueError(f"wire {a!r}-{b!r}: unknown flag")
            if partner[a] is not None or partner[b] is not None:
                raise ValueError(f"wire {a!r}-{b!r}: flag already wired")
            partner[a] = b
            partner[b] = a
        graph = build_graph(vertices, flags, boundary, partner)
        label = {name: lab for name, (lab, _) in self._cells.items()}
        vmap = {name: node for name, (_, node) in self._cells.items()}
        forest = RootedForest(set(self._nodes), dict(self._nodes))
        for c in self._conclusions:
            if c not in partner:
                raise ValueError(f"conclusion {c!r}: unknown flag")
        rest = [f for f in flags if f not in self._conclusions]
        order = list(self._conclusions) + rest
        return Structure(graph, label, color, orient, order, forest, vmap)
