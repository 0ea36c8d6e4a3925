"""Taylor expansion of box structures into resource structures.

An element of the expansion picks, recursively, a finite multiset of
copies of every box and flattens the result into a box-free structure.
Formally an element is the pullback of the module along (the closure of)
a thick subforest of the box forest: a forest morphism that is bijective
on roots.  Everything here is built on that pullback, so the element
construction is uniform in the decorations.

The module also provides the daimon-completed expansions: emptyings
replace whole root components by a daimon cell (optionally re-routing
?-typed conclusions through fresh unary ?-cells in the eta variant), and
the box-relative emptyings push daimons inside the forest along an
upward-closed set of boxes, with a matching fattened membership and a
strip operation back to the plain expansion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

from .formula import Formula
from .graph import (
    GraphBuildError,
    GraphMorphism,
    RootedForest,
    build_graph,
    closure,
    pullback,
)
from .structure import (
    Structure,
    fresh_id,
    restrict_to_roots,
    structure_iso,
    type_of,
)

__all__ = [
    "ThickSubforest",
    "enumerate_thick_subforests",
    "pull_element",
    "expand",
    "MembershipWitness",
    "is_taylor_member",
    "emptyings",
    "daimon_pattern",
    "is_filled_member",
    "emptying_wrt",
    "is_s_fat",
    "fattened_members",
    "StripResult",
    "strip_to_taylor",
]


@dataclass(frozen=True)
class ThickSubforest:
    """A forest sigma with a parent-preserving map into the base forest,
    bijective on roots."""

    sigma: RootedForest
    h: dict[str, str]

    def size(self) -> int:
        return len(self.sigma.nodes)


def _copy_shapes(forest: RootedForest, n: str, per_child: int, budget: int,
                 memo: dict) -> list[tuple[tuple, int]]:
    """Canonical shapes of one copy of the subtree at n with at most
    `budget` nodes in total.  A shape is a tuple of (child, shapes-of-
    that-child's-copies) pairs, children in sorted order, copies sorted.
    Returns (shape, size) pairs, deterministically ordered."""
    if budget < 1:
        return []
    key = (n, budget)
    if key in memo:
        return memo[key]
    kids = forest.children(n)
    partials: list[tuple[tuple, int]] = [((), 1)]
    for c in kids:
        grown: list[tuple[tuple, int]] = []
        for acc, size in partials:
            singles = _copy_shapes(forest, c, per_child, budget - size, memo)
            # multisets of copies of c: nondecreasing index sequences
            def multisets(start: int, left: int, room: int):
                yield (), 0
                if left == 0:
                    return
                for i in range(start, len(singles)):
                    sh, sz = singles[i]
                    if sz > room:
                        continue
                    for rest, rsz in multisets(i, left - 1, room - sz):
                        yield (sh,) + rest, sz + rsz

            for combo, csz in multisets(0, per_child, budget - size):
                grown.append((acc + ((c, combo),), size + csz))
        partials = grown
    partials.sort(key=lambda p: (p[1], repr(p[0])))
    memo[key] = partials
    return partials


def _materialize(
    forest: RootedForest, root_shapes: list[tuple[str, tuple]]
) -> ThickSubforest:
    nodes: set[str] = set()
    parent: dict[str, str | None] = {}
    h: dict[str, str] = {}
    counter = [0]

    def walk(base: str, shape: tuple, par: str | None) -> None:
        me = f"t{counter[0]}"
        counter[0] += 1
        nodes.add(me)
        parent[me] = par
        h[me] = base
        for child, copies in shape:
            for sub in copies:
                walk(child, sub, me)

    for base_root, shape in root_shapes:
        walk(base_root, shape, None)
    return ThickSubforest(RootedForest(nodes, parent), h)


def enumerate_thick_subforests(
    forest: RootedForest, copy_bound: int, budget: int | None = None
):
    """All thick subforests, each box taken with 0..copy_bound copies per
    parent copy, once up to isomorphism over the base, smallest first.

    budget optionally caps the total node count, which keeps membership
    searches finite without a tight per-box bound.
    """
    roots = forest.roots()
    if not roots:
        yield ThickSubforest(RootedForest(set(), {}), {})
        return
    memo: dict = {}
    cap = budget if budget is not None else copy_bound * max(
        1, len(forest.nodes)
    ) * 4 + 1
    per_root = [_copy_shapes(forest, r, copy_bound, cap, memo) for r in roots]
    combos = sorted(
        product(*per_root),
        key=lambda c: (sum(sz for _, sz in c), repr(c)),
    )
    for combo in combos:
        total = sum(sz for _, sz in combo)
        if budget is not None and total > budget:
            continue
        yield _materialize(forest, [(r, sh) for r, (sh, _) in zip(roots, combo)])


def _box_morphism(s: Structure):
    cl = closure(s.forest)
    vmap = dict(s.vmap)
    fmap: dict[str, str] = {}
    for f in s.graph.flags:
        q = s.graph.partner[f]
        if q is None:
            vert = s.graph.boundary[f]
            fmap[f] = cl.root_tail(s.forest.root_of(s.vmap[vert]))
            continue
        path = s.edge_path(f)
        if path is None:
            raise GraphBuildError(f"edge at {f} has no box path")
        lo, hi = cl.path_flags(path[0], path[-1])
        out_flag = f if s.orient[f] == "out" else q
        fmap[f] = lo if f == out_flag else hi
    m = GraphMorphism(s.graph, cl.graph, vmap, fmap)
    return cl, m


def _closure_lift(thick: ThickSubforest, base_cl) -> GraphMorphism:
    scl = closure(thick.sigma)
    fmap: dict[str, str] = {}
    sg = thick.sigma
    for n in sorted(sg.nodes):
        lo, hi = scl.loop(n)
        blo, bhi = base_cl.path_flags(thick.h[n], thick.h[n])
        fmap[lo], fmap[hi] = blo, bhi
        for b in sg.ancestors(n):
            lo, hi = scl.path_flags(n, b)
            blo, bhi = base_cl.path_flags(thick.h[n], thick.h[b])
            fmap[lo], fmap[hi] = blo, bhi
    for r in sg.roots():
        fmap[scl.root_tail(r)] = base_cl.root_tail(thick.h[r])
    vmap = dict(thick.h)
    return GraphMorphism(scl.graph, base_cl.graph, vmap, fmap)


def pull_element(s: Structure, thick: ThickSubforest) -> Structure:
    """The expansion element for one thick subforest: the pullback of the
    module against the subforest's closure, with decorations inherited
    along the first projection and one bare root per base root."""
    base_cl, box = _box_morphism(s)
    lift = _closure_lift(thick, base_cl)
    pb, pairs = pullback(box, lift)

    label: dict[str, str] = {}
    vmap: dict[str, str] = {}
    for pv in pb.vertices:
        v, sn = pairs[pv]
        label[pv] = s.label[v]
        vmap[pv] = thick.sigma.root_of(sn)
    color: dict[str, Formula] = {}
    orient: dict[str, str] = {}
    for pf in pb.flags:
        f, phi = pairs[pf]
        color[pf] = s.color[f]
        orient[pf] = s.orient[f]

    roots = {thick.sigma.root_of(n) for n in thick.sigma.nodes}
    forest = RootedForest(set(roots), {r: None for r in roots})

    # conclusions keep the base order; the rest sorts by base position
    # then copy id, which is the canonical premise order
    pos = {f: i for i, f in enumerate(s.order)}
    concl: list[str] = []
    for f in s.conclusions():
        hits = [pf for pf in pb.flags if pairs[pf][0] == f and pb.partner[pf] is None]
        concl.extend(sorted(hits))
    rest = sorted(
        (pf for pf in pb.flags if pf not in set(concl)),
        key=lambda pf: (pos[pairs[pf][0]], pairs[pf][1]),
    )
    return Structure(pb, label, color, orient, concl + rest, forest, vmap)


def expand(s: Structure, copy_bound: int, dedup: bool = True) -> list[Structure]:
    """The expansion elements up to the copy bound, plain variant."""
    out: list[Structure] = []
    for thick in enumerate_thick_subforests(s.forest, copy_bound):
        elem = pull_element(s, thick)
        if dedup and any(structure_iso(elem, e) for e in out):
            continue
        out.append(elem)
    return out


@dataclass
class MembershipWitness:
    per_root: list[tuple[str, str, ThickSubforest]] = field(default_factory=list)


def is_taylor_member(rho: Structure, s: Structure) -> MembershipWitness | None:
    """Does rho arise from s by the expansion?  Component by component:
    thick subforests factor through roots, and each box copy contributes
    at least one cell, which bounds the search by the element's size."""
    if type_of(rho) != type_of(s):
        return None
    r_roots = s.roots_in_order()
    e_roots = rho.roots_in_order()
    if len(r_roots) != len(e_roots):
        return None
    wit = MembershipWitness()
    for rr, er in zip(r_roots, e_roots):
        sc = restrict_to_roots(s, [rr])
        ec = restrict_to_roots(rho, [er])
        budget = len(ec.graph.vertices) + 1
        found = None
        for thick in enumerate_thick_subforests(sc.forest, budget, budget=budget):
            elem = pull_element(sc, thick)
            if structure_iso(elem, ec) is not None:
                found = thick
                break
        if found is None:
            return None
        wit.per_root.append((rr, er, found))
    return wit


# -- emptyings and filled membership -----------------------------------


def daimon_pattern(s: Structure, root: str) -> set[int] | None:
    """Recognizes a daimoned component: one daimon cell, plus optional
    ?-cells wired entirely from it whose outputs are conclusions.  Returns
    the 0-based wrapped positions within the root's block, else None."""
    comp = [v for v in sorted(s.graph.vertices) if s.root_of_vertex(v) == root]
    dais = [v for v in comp if s.label[v] == "dai"]
    if len(dais) != 1:
        return None
    dai = dais[0]
    concl = s.conclusions_of_root(root)
    wrapped: set[int] = set()
    others = [v for v in comp if v != dai]
    for v in others:
        if s.label[v] != "why":
            return None
        ins = s.inputs(v)
        outs = s.outputs(v)
        # wrappers may collect any positive number of daimon outputs
        if len(ins) < 1 or len(outs) != 1:
            return None
        for fi in ins:
            src = s.graph.partner[fi]
            if src is None or s.graph.boundary[src] != dai:
                return None
        if outs[0] not in concl:
            return None
        wrapped.add(concl.index(outs[0]))
    for f in s.outputs(dai):
        q = s.graph.partner[f]
        if q is None:
            if f not in concl:
                return None
        else:
            if s.graph.boundary[q] not in others:
                return None
    return wrapped


def _daimonize(s: Structure, root: str, wraps: set[int]) -> Structure:
    """Replaces the component of `root` by a daimon, re-routing the
    positions in `wraps` through fresh unary ?-cells."""
    out = s.copy()
    comp = {v for v in out.graph.vertices if out.root_of_vertex(v) == root}
    concl = out.conclusions_of_root(root)
    colors = [out.color[f] for f in concl]
    global_concl = out.conclusions()

    dead_flags = {f for f in out.graph.flags if out.graph.boundary[f] in comp}
    for v in comp:
        out.graph.vertices.discard(v)
        out.label.pop(v, None)
        out.vmap.pop(v, None)
    for f in dead_flags:
        out.graph.flags.discard(f)
        out.graph.boundary.pop(f, None)
        out.graph.partner.pop(f, None)
        out.color.pop(f, None)
        out.orient.pop(f, None)
    out.order = [f for f in out.order if f not in dead_flags]
    # a valid element has a bare forest, but drop any subtree of this
    # root to stay consistent on odd inputs
    out.forest = RootedForest(
        {n for n in out.forest.nodes if n == root or out.forest.root_of(n) != root},
        {
            n: out.forest.parent[n]
            for n in out.forest.nodes
            if n == root or out.forest.root_of(n) != root
        },
    )

    dai = fresh_id(f"dai_{root}", out.graph.vertices)
    out.graph.vertices.add(dai)
    out.label[dai] = "dai"
    out.vmap[dai] = root
    replacement: dict[str, str] = {}
    new_flags: list[str] = []
    for i, (old_f, a) in enumerate(zip(concl, colors)):
        df = f"{dai}.o{i}"
        out.graph.flags.add(df)
        out.graph.boundary[df] = dai
        out.orient[df] = "out"
        new_flags.append(df)
        if i in wraps:
            if a.kind != "why":
                raise ValueError(f"position {i}: wrapping a non-? conclusion")
            w = fresh_id(f"w_{root}_{i}", out.graph.vertices)
            out.graph.vertices.add(w)
            out.label[w] = "why"
            out.vmap[w] = root
            wi, wo = f"{w}.i0", f"{w}.o0"
            out.graph.flags.update((wi, wo))
            out.graph.boundary[wi] = w
            out.graph.boundary[wo] = w
            out.orient[wi] = "in"
            out.orient[wo] = "out"
            out.color[wi] = a.sub
            out.color[wo] = a
            out.color[df] = a.sub
            out.graph.partner[df] = wi
            out.graph.partner[wi] = df
            out.graph.partner[wo] = None
            replacement[old_f] = wo
            new_flags.extend((wi, wo))
        else:
            out.color[df] = a
            out.graph.partner[df] = None
            replacement[old_f] = df
    new_concl = [replacement.get(f, f) for f in global_concl]
    rest = [f for f in out.order if f not in set(new_concl)]
    rest += [f for f in new_flags if f not in set(new_concl) and f not in rest]
    out.order = new_concl + rest
    return out


def emptyings(rho: Structure, variant: str = "filled") -> list[Structure]:
    """All daimon completions of rho: per subset of roots, the component
    is replaced by a daimon with the same typed conclusions.  The eta
    variant additionally chooses, per ?-typed conclusion rooted in a
    ?-cell of rho, whether to re-route it through a fresh unary ?-cell.
    The identity (empty subset) is included."""
    if variant not in ("filled", "eta"):
        raise ValueError(f"unknown emptying variant {variant!r}")
    roots = rho.roots_in_order()
    out: list[Structure] = []
    for mask in range(1 << len(roots)):
        chosen = [r for i, r in enumerate(roots) if mask >> i & 1]
        wrap_choices: list[list[set[int]]] = []
        for r in chosen:
            if variant == "eta":
                concl = rho.conclusions_of_root(r)
                eligible = [
                    i
                    for i, f in enumerate(concl)
                    if rho.color[f].kind == "why"
                    and rho.label[rho.graph.boundary[f]] == "why"
                ]
                subsets = []
                for m in range(1 << len(eligible)):
                    subsets.append({eligible[j] for j in range(len(eligible))
                                    if m >> j & 1})
                wrap_choices.append(subsets)
            else:
                wrap_choices.append([set()])
        for combo in product(*wrap_choices):
            cur = rho
            for r, wraps in zip(chosen, combo):
                cur = _daimonize(cur, r, wraps)
            out.append(cur)
    return out


def is_filled_member(
    rho: Structure, s: Structure, variant: str = "filled"
) -> dict | None:
    """Membership in the daimon-completed expansion: per root, either the
    component is a recognized daimon pattern over the block (with wraps
    allowed only where s has a ?-cell conclusion, eta variant only), or
    it is a plain expansion member of the corresponding component."""
    if variant not in ("filled", "eta"):
        raise ValueError(f"unknown emptying variant {variant!r}")
    if type_of(rho) != type_of(s):
        return None
    r_roots = s.roots_in_order()
    e_roots = rho.roots_in_order()
    if len(r_roots) != len(e_roots):
        return None
    detail: dict = {"daimoned": [], "members": []}
    for idx, (rr, er) in enumerate(zip(r_roots, e_roots)):
        wraps = daimon_pattern(rho, er)
        if wraps is not None:
            if wraps and variant != "eta":
                return None
            sc_concl = s.conclusions_of_root(rr)
            ok = all(
                s.label[s.graph.boundary[sc_concl[i]]] == "why" for i in wraps
            )
            if not ok:
                return None
            detail["daimoned"].append(idx)
            continue
        sc = restrict_to_roots(s, [rr])
        ec = restrict_to_roots(rho, [er])
        wit = is_taylor_member(ec, sc)
        if wit is None:
            return None
        detail["members"].append((idx, wit))
    return detail


# -- box-relative emptyings (fattened expansion) -----------------------


def _check_upward_closed(forest: RootedForest, S: set[str]) -> None:
    for n in S:
        if n not in forest.nodes:
            raise ValueError(f"unknown node {n!r}")
        for c in forest.children(n):
            if c not in S:
                raise ValueError(
                    f"set is not closed under children: {c!r} missing"
                )


def _border(forest: RootedForest, S: set[str]) -> set[str]:
    return {n for n in S if forest.parent[n] not in S}


def emptying_wrt(
    s: Structure, S: set[str], doors: tuple[int, ...] = ()
) -> Structure:
    """The emptying of a single-root structure along a child-closed set
    of boxes S: the interior of S collapses into daimon cells sitting at
    the border boxes.  When S contains the root the whole component
    collapses; `doors` then lists 1-based conclusion positions whose
    ?-cells survive with their full premise count, fed by the daimon.
    """
    S = set(S)
    _check_upward_closed(s.forest, S)
    roots = s.forest.roots()
    if len(roots) != 1:
        raise ValueError("emptying_wrt expects a single-root structure")
    root = roots[0]
    if not S:
        return s.copy()

    if root in S:
        concl = s.conclusions()
        retained: dict[int, str] = {}
        for i in doors:
            f = concl[i - 1]
            v = s.graph.boundary[f]
            if s.label[v] != "why":
                raise ValueError(f"door position {i} is not a ?-cell conclusion")
            retained[i - 1] = v
        out_vertices: set[str] = set(retained.values())
        dai = fresh_id("dai", out_vertices)
        label = {v: "why" for v in out_vertices}
        label[dai] = "dai"
        vmap = {v: root for v in out_vertices}
        vmap[dai] = root
        flags: set[str] = set()
        boundary: dict[str, str] = {}
        partner: dict[str, str | None] = {}
        color: dict[str, Formula] = {}
        orient: dict[str, str] = {}
        new_concl: list[str] = []
        k = 0
        for i, f in enumerate(concl):
            if i in retained:
                v = retained[i]
                for fl in s.inputs(v) + s.outputs(v):
                    flags.add(fl)
                    boundary[fl] = v
                    color[fl] = s.color[fl]
                    orient[fl] = s.orient[fl]
                    partner[fl] = None
                for fl in s.inputs(v):
                    df = f"{dai}.o{k}"
                    k += 1
                    flags.add(df)
                    boundary[df] = dai
                    color[df] = s.color[fl]
                    orient[df] = "out"
                    partner[df] = fl
                    partner[fl] = df
                new_concl.append(s.outputs(v)[0])
            else:
                df = f"{dai}.o{k}"
                k += 1
                flags.add(df)
                boundary[df] = dai
                color[df] = s.color[f]
                orient[df] = "out"
                partner[df] = None
                new_concl.append(df)
        g = build_graph(out_vertices | {dai}, flags, boundary, partner)
        order = new_concl + sorted(f for f in flags if f not in new_concl)
        return Structure(
            g,
            label,
            color,
            orient,
            order,
            RootedForest({root}, {root: None}),
            vmap,
        )

    if doors:
        raise ValueError("doors only make sense when S contains the root")
    border = _border(s.forest, S)
    interior = S - border
    keep_nodes = set(s.forest.nodes) - interior
    out = s.copy()
    dead_cells = {v for v in out.graph.vertices if out.vmap[v] in S}

    def exit_box(n: str) -> str:
        cur = n
        while s.forest.parent[cur] in S:
            cur = s.forest.parent[cur]
        return cur

    dai_for: dict[str, str] = {}
    counters: dict[str, int] = {}
    for b in sorted(border):
        dai_for[b] = fresh_id(f"dai_{b}", out.graph.vertices)
        counters[b] = 0
        out.graph.vertices.add(dai_for[b])
        out.label[dai_for[b]] = "dai"
        out.vmap[dai_for[b]] = b

    for f in sorted(out.graph.flags):
        q = out.graph.partner.get(f)
        if q is None or f > q:
            continue
        u_dead = out.graph.boundary[f] in dead_cells
        w_dead = out.graph.boundary[q] in dead_cells
        if not u_dead and not w_dead:
            continue
        if u_dead and w_dead:
            continue  # dropped with the cells
        live, deadf = (q, f) if u_dead else (f, q)
        dead_vertex = out.graph.boundary[deadf]
        if out.orient[deadf] != "out":
            raise GraphBuildError(
                f"edge {f}-{q}: border crossing out of the emptied region "
                "runs downward"
            )
        b = exit_box(s.vmap[dead_vertex])
        dai = dai_for[b]
        df = f"{dai}.o{counters[b]}"
        counters[b] += 1
        out.graph.flags.add(df)
        out.graph.boundary[df] = dai
        out.color[df] = out.color[live]
        out.orient[df] = "out"
        out.graph.partner[df] = live
        out.graph.partner[live] = df
        out.order.append(df)

    dead_flags = {
        f for f in out.graph.flags if out.graph.boundary[f] in dead_cells
    }
    for v in dead_cells:
        out.graph.vertices.discard(v)
        out.label.pop(v, None)
        out.vmap.pop(v, None)
    for f in dead_flags:
        out.graph.flags.discard(f)
        out.graph.boundary.pop(f, None)
        out.graph.partner.pop(f, None)
        out.color.pop(f, None)
        out.orient.pop(f, None)
    out.order = [f for f in out.order if f in out.graph.flags]
    out.forest = RootedForest(
        keep_nodes, {n: s.forest.parent[n] for n in keep_nodes}
    )
    return out


def is_s_fat(thick: ThickSubforest, forest: RootedForest, S: set[str]) -> bool:
    """Fatness of a thick subtree of the S-emptied forest: surjective
    outside the border, exactly one copy of border roots, and copy counts
    matching the father's at every other border box."""
    S = set(S)
    _check_upward_closed(forest, S)
    border = _border(forest, S)
    interior = S - border
    fs_nodes = set(forest.nodes) - interior
    fibers: dict[str, int] = {n: 0 for n in fs_nodes}
    for t, base in thick.h.items():
        if base not in fs_nodes:
            return False
        fibers[base] += 1
    for n in fs_nodes - border:
        if fibers[n] == 0:
            return False
    for b in border:
        if forest.parent[b] is None:
            if fibers[b] != 1:
                return False
        else:
            if fibers[b] != fibers[forest.parent[b]]:
                return False
    return True


def fattened_members(
    s: Structure, S: set[str], copy_bound: int
) -> list[Structure]:
    """The box-relative daimon completions for one child-closed S: the
    pullbacks of the S-emptying along its S-fat thick subtrees.  When S
    swallows the root, the choices are the door subsets instead."""
    S = set(S)
    roots = s.forest.roots()
    if len(roots) != 1:
        raise ValueError("fattened_members expects a single-root structure")
    root = roots[0]
    if not S:
        return expand(s, copy_bound)
    if root in S:
        concl = s.conclusions()
        eligible = [
            i + 1
            for i, f in enumerate(concl)
            if s.label[s.graph.boundary[f]] == "why"
        ]
        out = []
        for mask in range(1 << len(eligible)):
            doors = tuple(
                eligible[j] for j in range(len(eligible)) if mask >> j & 1
            )
            out.append(emptying_wrt(s, S, doors))
        return out
    emp = emptying_wrt(s, S, ())
    out = []
    for thick in enumerate_thick_subforests(emp.forest, copy_bound):
        if not is_s_fat(thick, s.forest, S):
            continue
        elem = pull_element(emp, thick)
        if any(structure_iso(elem, e) for e in out):
            continue
        out.append(elem)
    return out


@dataclass
class StripResult:
    member: Structure | None
    daimoned_blocks: list[int]
    ok: bool
    detail: str = ""


def strip_to_taylor(rho: Structure, s: Structure) -> StripResult:
    """Removes the daimon fattening from an element: fully daimoned
    components are reported, elsewhere the daimon cells and the premises
    they feed are deleted, and the remainder is checked to be a plain
    expansion member of the matching components."""
    if type_of(rho) != type_of(s):
        return StripResult(None, [], False, "type mismatch")
    r_roots = s.roots_in_order()
    e_roots = rho.roots_in_order()
    daimoned: list[int] = []
    keep_r: list[str] = []
    keep_e: list[str] = []
    for idx, (rr, er) in enumerate(zip(r_roots, e_roots)):
        comp = [v for v in rho.graph.vertices if rho.root_of_vertex(v) == er]
        dais = [v for v in comp if rho.label[v] == "dai"]
        non_dai = [v for v in comp if rho.label[v] != "dai"]
        if dais and all(
            rho.label[v] == "why"
            and all(
                rho.graph.partner[f] is not None
                and rho.graph.boundary[rho.graph.partner[f]] in dais
                for f in rho.inputs(v)
            )
            for v in non_dai
        ):
            daimoned.append(idx)
        else:
            keep_r.append(rr)
            keep_e.append(er)
    if not keep_e:
        return StripResult(None, daimoned, True, "all components daimoned")
    part = restrict_to_roots(rho, keep_e)
    # delete daimons and the premises they feed
    out = part.copy()
    dais = [v for v in out.graph.vertices if out.label[v] == "dai"]
    dead_flags: set[str] = set()
    for v in dais:
        for f in out.outputs(v):
            q = out.graph.partner[f]
            dead_flags.add(f)
            if q is not None:
                dead_flags.add(q)
        for f in out.inputs(v):
            dead_flags.add(f)
    for v in dais:
        out.graph.vertices.discard(v)
        out.label.pop(v, None)
        out.vmap.pop(v, None)
    for f in dead_flags:
        out.graph.flags.discard(f)
        out.graph.boundary.pop(f, None)
        out.graph.partner.pop(f, None)
        out.color.pop(f, None)
        out.orient.pop(f, None)
    out.order = [f for f in out.order if f in out.graph.flags]
    base = restrict_to_roots(s, keep_r)
    wit = is_taylor_member(out, base)
    if wit is None:
        return StripResult(out, daimoned, False, "stripped part not a member")
    return StripResult(out, daimoned, True)
