"""Elementary rewriting steps and their actions on structures.

A step is a named rule at a flattened conclusion position: exchange and
mix act between positions i and i+1 of one block, the hypothesis rules
(ax, dai, one, bot, weak) delete a whole block, cut appends a dual pair
at the end of a block, tensor/par/contraction/dereliction act in place,
box opens a block of shape (?G, ..., !A).  Steps compose into paths;
typechecking a path against a context yields the unique target context
or the first offending step.

The same step alphabet drives two actions.  apply_mell rewrites a
structure with boxes; the relation is nondeterministic (cuts may match
several cells, contraction may split many ways) but co-functional:
reverse_mell reads any target back to the unique source.  apply_dill_set
rewrites sets of box-free resource structures elementwise, where a
daimon cell may additionally mimic every rule; one element can branch
(a contraction chooses a split) or fan out into several structures (a
box with n copies), and a set rewrites by choosing one branch per
element and taking the union.

The contraction rule on a daimon comes in two flavours: the atomic mode
splits the daimon output in place, the eta mode routes the two new
outputs through fresh unary ?-cells.  Only contraction differs between
the modes.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

from .formula import (
    Formula,
    SequentContext,
    dual,
    format_formula,
    parse_formula,
)
from .structure import (
    Structure,
    fresh_id,
    iso_fingerprint,
    structure_iso,
    type_of,
)
from .taylor import daimon_pattern

__all__ = [
    "STEP_KINDS",
    "StepError",
    "StepSyntaxError",
    "TypecheckError",
    "ApplyError",
    "ReverseError",
    "ElementaryStep",
    "RewritePath",
    "parse_step",
    "format_step",
    "parse_path",
    "format_path",
    "typecheck_step",
    "typecheck_path",
    "context_trace",
    "exchange_prefix",
    "apply_mell",
    "reverse_mell",
    "apply_dill",
    "apply_dill_set",
    "dedup_structures",
    "dedup_sets",
    "find_termination_path",
]

STEP_KINDS = (
    "exc", "mix", "ax", "cut", "dai", "one", "bot",
    "tensor", "par", "contr", "der", "weak", "box",
)

_HYPOTHESIS = ("ax", "dai", "one", "bot", "weak")


class StepError(ValueError):
    pass


class StepSyntaxError(StepError):
    pass


class TypecheckError(StepError):
    pass


class ApplyError(StepError):
    pass


class ReverseError(StepError):
    pass


# -- steps and paths ---------------------------------------------------


@dataclass(frozen=True)
class ElementaryStep:
    """One rule application site: kind, 1-based flattened position,
    the cut formula when kind is cut, an optional (h, k) annotation
    when kind is contr (the contiguous split h+1 | k+1)."""

    kind: str
    index: int
    formula: Formula | None = None
    split: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in STEP_KINDS:
            raise StepSyntaxError(f"unknown step kind {self.kind!r}")
        if self.index < 1:
            raise StepSyntaxError(f"step position must be >= 1, got {self.index}")
        if (self.kind == "cut") != (self.formula is not None):
            raise StepSyntaxError("exactly the cut steps carry a formula")
        if self.split is not None:
            if self.kind != "contr":
                raise StepSyntaxError("only contr steps carry a split annotation")
            h, k = self.split
            if h < 0 or k < 0:
                raise StepSyntaxError("split annotation parts must be >= 0")

    def __str__(self) -> str:
        return format_step(self)


_STEP_RE = re.compile(
    r"(?P<kind>[a-z]+)@(?P<index>\d+)"
    r"(?:\{(?P<formula>[^}]*)\}|\((?P<h>\d+),(?P<k>\d+)\))?$"
)


def parse_step(token: str) -> ElementaryStep:
    m = _STEP_RE.match(token.strip())
    if m is None:
        raise StepSyntaxError(f"malformed step token {token!r}")
    kind = m.group("kind")
    if kind not in STEP_KINDS:
        raise StepSyntaxError(f"unknown step kind {kind!r} in {token!r}")
    index = int(m.group("index"))
    formula = None
    if m.group("formula") is not None:
        if kind != "cut":
            raise StepSyntaxError(f"{kind} steps take no formula: {token!r}")
        formula = parse_formula(m.group("formula"))
    elif kind == "cut":
        raise StepSyntaxError(f"cut steps need a formula payload: {token!r}")
    split = None
    if m.group("h") is not None:
        if kind != "contr":
            raise StepSyntaxError(f"{kind} steps take no split annotation: {token!r}")
        split = (int(m.group("h")), int(m.group("k")))
    return ElementaryStep(kind, index, formula, split)


def format_step(step: ElementaryStep) -> str:
    out = f"{step.kind}@{step.index}"
    if step.formula is not None:
        out += "{" + format_formula(step.formula) + "}"
    if step.split is not None:
        out += f"({step.split[0]},{step.split[1]})"
    return out


def parse_path(text: str) -> list[ElementaryStep]:
    """Whitespace-separated step tokens; '#' starts a line comment."""
    steps = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        for tok in line.split():
            steps.append(parse_step(tok))
    return steps


def format_path(steps) -> str:
    return " ".join(format_step(s) for s in steps)


@dataclass(frozen=True)
class RewritePath:
    """A composable step sequence with its typed endpoints."""

    steps: tuple[ElementaryStep, ...]
    source: SequentContext
    target: SequentContext

    @classmethod
    def typed(cls, steps, source: SequentContext) -> "RewritePath":
        steps = tuple(steps)
        return cls(steps, source, typecheck_path(steps, source))

    def contexts(self) -> list[SequentContext]:
        return context_trace(self.steps, self.source)

    def __iter__(self):
        return iter(self.steps)

    def __len__(self) -> int:
        return len(self.steps)

    def __str__(self) -> str:
        return format_path(self.steps)


# -- typechecking ------------------------------------------------------


def _flat_replace(ctx: SequentContext, k: int, off: int, repl) -> SequentContext:
    blocks = [list(b) for b in ctx.blocks]
    blocks[k][off:off + 1] = list(repl)
    return SequentContext(blocks)


def typecheck_step(ctx: SequentContext, step: ElementaryStep) -> SequentContext:
    """The target context of one step, or TypecheckError."""
    i = step.index
    flat = ctx.flat

    def need(cond: bool, why: str):
        if not cond:
            raise TypecheckError(f"{format_step(step)}: {why}")

    if step.kind in ("exc", "mix"):
        need(i + 1 <= len(flat), f"position {i + 1} out of range")
        k1, o1 = ctx.locate(i)
        k2, o2 = ctx.locate(i + 1)
        need(k1 == k2, f"positions {i} and {i + 1} lie in different blocks")
        blocks = [list(b) for b in ctx.blocks]
        if step.kind == "exc":
            blocks[k1][o1], blocks[k1][o2] = blocks[k1][o2], blocks[k1][o1]
            return SequentContext(blocks)
        left, right = blocks[k1][:o1 + 1], blocks[k1][o1 + 1:]
        blocks[k1:k1 + 1] = [left, right]
        return SequentContext(blocks)

    if step.kind in _HYPOTHESIS:
        need(i <= len(flat), f"position {i} out of range")
        k, off = ctx.locate(i)
        block = ctx.blocks[k]
        if step.kind == "ax":
            need(off == 0 and len(block) == 2,
                 "ax consumes a block of exactly the two dual formulas")
            need(block[1] == dual(block[0]),
                 f"{format_formula(block[0])} and {format_formula(block[1])}"
                 " are not dual")
        elif step.kind == "dai":
            need(off == len(block) - 1,
                 "the daimon step is indexed by the last position of its block")
        else:
            need(len(block) == 1, f"{step.kind} consumes a singleton block")
            if step.kind == "one":
                need(block[0].kind == "one", "the formula is not 1")
            elif step.kind == "bot":
                need(block[0].kind == "bot", "the formula is not bot")
            else:
                need(block[0].kind == "why", "the formula is not a ?-formula")
        blocks = [list(b) for b in ctx.blocks]
        del blocks[k]
        return SequentContext(blocks)

    if step.kind == "cut":
        ends = {ctx.block_start(k) + len(b) - 1: k for k, b in enumerate(ctx.blocks)}
        need(i - 1 in ends, f"no block ends at position {i - 1}")
        k = ends[i - 1]
        blocks = [list(b) for b in ctx.blocks]
        blocks[k].extend([step.formula, dual(step.formula)])
        return SequentContext(blocks)

    need(i <= len(flat), f"position {i} out of range")
    k, off = ctx.locate(i)
    a = flat[i - 1]

    if step.kind in ("tensor", "par"):
        need(a.kind == step.kind,
             f"head connective of {format_formula(a)} is not {step.kind}")
        return _flat_replace(ctx, k, off, [a.left, a.right])
    if step.kind == "contr":
        need(a.kind == "why", f"{format_formula(a)} is not a ?-formula")
        return _flat_replace(ctx, k, off, [a, a])
    if step.kind == "der":
        need(a.kind == "why", f"{format_formula(a)} is not a ?-formula")
        return _flat_replace(ctx, k, off, [a.sub])
    if step.kind == "box":
        need(a.kind == "ofc", f"{format_formula(a)} is not a !-formula")
        need(off == len(ctx.blocks[k]) - 1, "the !-formula must close its block")
        need(all(b.kind == "why" for b in ctx.blocks[k][:-1]),
             "box needs a block of ?-formulas before the !-formula")
        return _flat_replace(ctx, k, off, [a.sub])
    raise TypecheckError(f"unhandled step kind {step.kind!r}")


def typecheck_path(xi, gamma: SequentContext) -> SequentContext:
    return context_trace(xi, gamma)[-1]


def context_trace(xi, gamma: SequentContext) -> list[SequentContext]:
    """All intermediate contexts of a path, source first."""
    steps = list(xi.steps) if isinstance(xi, RewritePath) else list(xi)
    out = [gamma]
    for n, step in enumerate(steps):
        try:
            out.append(typecheck_step(out[-1], step))
        except TypecheckError as e:
            raise TypecheckError(f"step {n + 1}: {e}") from None
    return out


# -- shared surgery helpers --------------------------------------------


def _fresh_vertex(s: Structure, prefix: str) -> str:
    taken = set(s.graph.vertices) | set(s.forest.nodes)
    taken |= {f.split(".", 1)[0] for f in s.graph.flags}
    return fresh_id(prefix, taken)


def _fresh_node(s: Structure, prefix: str) -> str:
    taken = set(s.forest.nodes) | set(s.graph.vertices)
    return fresh_id(prefix, taken)


def _drop_flags(s: Structure, doomed: set[str]) -> None:
    for f in doomed:
        q = s.graph.partner.get(f)
        if q is not None and q not in doomed:
            s.graph.partner[q] = None
        s.graph.flags.discard(f)
        s.graph.partner.pop(f, None)
        s.graph.boundary.pop(f, None)
        s.color.pop(f, None)
        s.orient.pop(f, None)
    s.order = [f for f in s.order if f in s.graph.flags]


def _drop_cells(s: Structure, cells) -> None:
    cells = set(cells)
    _drop_flags(s, {f for f in s.graph.flags if s.graph.boundary[f] in cells})
    for v in cells:
        s.graph.vertices.discard(v)
        s.label.pop(v, None)
        s.vmap.pop(v, None)


def _remove_root(s: Structure, r: str) -> None:
    _drop_cells(s, [v for v in s.graph.vertices if s.root_of_vertex(v) == r])
    for n in s.forest.descendants(r):
        s.forest.nodes.discard(n)
        s.forest.parent.pop(n, None)


def _add_cell(s, prefix, lab, node, ins=(), outs=()):
    """New cell; ins are (formula, source-tail-or-None) pairs, outs are
    formulas.  New flags go to the end of the order."""
    v = _fresh_vertex(s, prefix)
    s.graph.vertices.add(v)
    s.label[v] = lab
    s.vmap[v] = node
    in_flags, out_flags = [], []
    for n, (a, src) in enumerate(ins):
        f = f"{v}.i{n}"
        s.graph.flags.add(f)
        s.graph.boundary[f] = v
        s.orient[f] = "in"
        s.color[f] = a
        s.graph.partner[f] = src
        if src is not None:
            if s.graph.partner.get(src) is not None:
                raise ApplyError(f"flag {src} is not a tail")
            s.graph.partner[src] = f
        s.order.append(f)
        in_flags.append(f)
    for n, a in enumerate(outs):
        f = f"{v}.o{n}"
        s.graph.flags.add(f)
        s.graph.boundary[f] = v
        s.orient[f] = "out"
        s.color[f] = a
        s.graph.partner[f] = None
        s.order.append(f)
        out_flags.append(f)
    return v, in_flags, out_flags


def _grow_outputs(s: Structure, v: str, formulas) -> list[str]:
    """Fresh output tails on an existing cell, appended to the order."""
    out = []
    for a in formulas:
        f = fresh_id(f"{v}.ox", s.graph.flags)
        s.graph.flags.add(f)
        s.graph.boundary[f] = v
        s.orient[f] = "out"
        s.color[f] = a
        s.graph.partner[f] = None
        s.order.append(f)
        out.append(f)
    return out


def _set_conclusions(s: Structure, concl: list[str]) -> None:
    chosen = set(concl)
    s.order = list(concl) + [f for f in s.order if f not in chosen]


def _locate_block(s: Structure, i: int):
    """(root, block flags, 0-based offset) of flattened position i."""
    pos = 0
    for r in s.roots_in_order():
        fs = s.conclusions_of_root(r)
        if pos < i <= pos + len(fs):
            return r, fs, i - pos - 1
        pos += len(fs)
    raise ApplyError(f"position {i} out of range")


def dedup_structures(structs) -> list[Structure]:
    out: list[Structure] = []
    groups: dict = {}
    for s in structs:
        group = groups.setdefault(iso_fingerprint(s), [])
        if not any(structure_iso(s, t) is not None for t in group):
            group.append(s)
            out.append(s)
    return out


def _sets_iso(xs: list[Structure], ys: list[Structure]) -> bool:
    if len(xs) != len(ys):
        return False
    left: dict = {}
    right: dict = {}
    for x in xs:
        left.setdefault(iso_fingerprint(x), []).append(x)
    for y in ys:
        right.setdefault(iso_fingerprint(y), []).append(y)
    if set(left) != set(right):
        return False
    for fp, lx in left.items():
        ry = right[fp]
        if len(lx) != len(ry):
            return False
        free = list(ry)
        for x in lx:
            for n, y in enumerate(free):
                if structure_iso(x, y) is not None:
                    free.pop(n)
                    break
            else:
                return False
    return True


def dedup_sets(sets) -> list[list[Structure]]:
    out: list[list[Structure]] = []
    groups: dict = {}
    for ss in sets:
        fp = tuple(sorted(map(repr, (iso_fingerprint(s) for s in ss))))
        group = groups.setdefault(fp, [])
        if not any(_sets_iso(ss, t) for t in group):
            group.append(ss)
            out.append(ss)
    return out


def exchange_prefix(block_start: int, mask: list[bool]) -> list[ElementaryStep]:
    """Minimal adjacent exchanges bringing the marked positions of one
    block to its front, relative order preserved on both sides.

    block_start is the flattened position of the block's first element.
    """
    arr = list(mask)
    steps: list[ElementaryStep] = []
    want = sum(1 for m in arr if m)
    for dst in range(want):
        src = dst
        while not arr[src]:
            src += 1
        for j in range(src, dst, -1):
            arr[j - 1], arr[j] = arr[j], arr[j - 1]
            steps.append(ElementaryStep("exc", block_start + j - 1))
    return steps


# -- the daimon piece pattern ------------------------------------------


def _daimon_piece(s: Structure, piece: set[str]) -> str | None:
    """The daimon of a piece that is one daimon plus optional ?-cells
    fed entirely by it with conclusion outputs, else None."""
    dais = [v for v in piece if s.label[v] == "dai"]
    if len(dais) != 1:
        return None
    d = dais[0]
    for v in piece:
        if v == d:
            continue
        if s.label[v] != "why":
            return None
        ins = s.inputs(v)
        outs = s.outputs(v)
        if len(ins) < 1 or len(outs) != 1:
            return None
        if s.graph.partner[outs[0]] is not None:
            return None
        for f in ins:
            src = s.graph.partner[f]
            if src is None or s.graph.boundary[src] != d:
                return None
    return d


# -- forward action on structures with boxes ---------------------------


def apply_mell(s: Structure, step: ElementaryStep, mode: str = "atomic") -> list[Structure]:
    """All results of one step on a boxed structure.

    An empty list means the step is well typed but structurally blocked;
    a type mismatch raises TypecheckError.  The only daimon rule on this
    side is the contraction split (atomic: in place; eta: through fresh
    unary ?-cells): every other daimon pattern would break the
    uniqueness of reverse_mell.
    """
    _check_mode(mode)
    typecheck_step(type_of(s), step)
    fn = _MELL_CASES[step.kind]
    return dedup_structures(fn(s, step, mode))


def _check_mode(mode: str) -> None:
    if mode not in ("atomic", "eta"):
        raise ValueError(f"unknown mode {mode!r}")


def _do_exc(s: Structure, i: int) -> Structure:
    out = s.copy()
    concl = out.conclusions()
    concl[i - 1], concl[i] = concl[i], concl[i - 1]
    _set_conclusions(out, concl)
    return out


def _mell_exc(s, step, mode):
    return [_do_exc(s, step.index)]


def _split_root(s: Structure, r: str, side: dict[str, str]) -> Structure:
    """Splits root r by the per-cell side map ('L' or 'R'); cells of
    deeper boxes follow their box."""
    out = s.copy()
    r2 = _fresh_node(out, r + "b")
    out.forest.nodes.add(r2)
    out.forest.parent[r2] = None
    for v, where in side.items():
        if where == "R" and out.vmap[v] == r:
            out.vmap[v] = r2
    for c in list(out.forest.children(r)):
        probe = next(iter(out.cells_in_subtree(c)), None)
        if probe is not None and side.get(probe) == "R":
            out.forest.parent[c] = r2
    return out


def _mix_results(s, step, mode, allow_daimon_split):
    i = step.index
    r, fs, bi = _locate_block(s, i)
    pieces = s.pieces(r)
    owner = {f: s.graph.boundary[f] for f in fs}

    fixed: dict[int, str] = {}
    orphans: list[int] = []
    straddlers: list[tuple[int, str]] = []
    for n, piece in enumerate(pieces):
        idxs = [j for j, f in enumerate(fs) if owner[f] in piece]
        if not idxs:
            orphans.append(n)
        elif max(idxs) <= bi:
            fixed[n] = "L"
        elif min(idxs) > bi:
            fixed[n] = "R"
        else:
            d = _daimon_piece(s, piece) if allow_daimon_split else None
            if d is None:
                return []
            straddlers.append((n, d))

    results = []
    for combo in itertools.product("LR", repeat=len(orphans)):
        assign = dict(fixed)
        assign.update(dict(zip(orphans, combo)))
        work = s.copy()
        side: dict[str, str] = {}
        for n, piece in enumerate(pieces):
            if n in assign:
                for v in piece:
                    side[v] = assign[n]
        for n, d in straddlers:
            # the daimon splits; its wrappers follow their conclusions
            d2 = _fresh_vertex(work, d)
            work.graph.vertices.add(d2)
            work.label[d2] = "dai"
            work.vmap[d2] = work.vmap[d]
            side[d] = "L"
            side[d2] = "R"
            for f in list(work.outputs(d)):
                q = work.graph.partner[f]
                if q is None:
                    j = fs.index(f)
                else:
                    w = work.graph.boundary[q]
                    j = fs.index(work.outputs(w)[0])
                if j > bi:
                    work.graph.boundary[f] = d2
            for v in pieces[n]:
                if v != d and work.label[v] == "why":
                    side[v] = "R" if fs.index(work.outputs(v)[0]) > bi else "L"
        results.append(_split_root(work, r, side))
    return results


def _mell_mix(s, step, mode):
    return _mix_results(s, step, mode, allow_daimon_split=False)


def _hyp_concrete_matches(s, step, r, fs) -> bool:
    content = [v for v in s.graph.vertices if s.root_of_vertex(v) == r]
    if len(content) != 1:
        return False
    v = content[0]
    lab = s.label[v]
    if step.kind == "ax":
        return lab == "ax" and s.outputs(v) == fs
    if step.kind == "dai":
        return lab == "dai" and s.outputs(v) == fs
    if step.kind in ("one", "bot"):
        return lab == step.kind and s.outputs(v) == fs
    return lab == "why" and not s.inputs(v) and s.outputs(v) == fs


def _mell_hyp(s, step, mode):
    r, fs, _ = _locate_block(s, step.index)
    if not _hyp_concrete_matches(s, step, r, fs):
        return []
    out = s.copy()
    _remove_root(out, r)
    return [out]


def _cut_root(s: Structure, i: int) -> str | None:
    """The root whose block ends at flattened position i-1."""
    pos = 0
    for r in s.roots_in_order():
        pos += len(s.conclusions_of_root(r))
        if pos == i - 1:
            return r
    return None


def _cut_cell_results(s, step, r):
    a = step.formula
    results = []
    for v in s.cells_at_node(r):
        if s.label[v] != "cut":
            continue
        ins = s.inputs(v)
        if s.color[ins[0]] not in (a, dual(a)):
            continue
        fa = ins[0] if s.color[ins[0]] == a else ins[1]
        fb = ins[1] if fa == ins[0] else ins[0]
        pa, pb = s.graph.partner[fa], s.graph.partner[fb]
        out = s.copy()
        concl = out.conclusions()
        _drop_cells(out, [v])
        concl = concl[:step.index - 1] + [pa, pb] + concl[step.index - 1:]
        _set_conclusions(out, concl)
        results.append(out)
    return results


def _mell_cut(s, step, mode):
    r = _cut_root(s, step.index)
    if r is None:
        return []
    return _cut_cell_results(s, step, r)


def _binary_cell_result(s, step):
    i = step.index
    c = s.cell_of_conclusion(i)
    if s.label[c] != step.kind:
        return None
    fl, fr = s.inputs(c)
    pl, pr = s.graph.partner[fl], s.graph.partner[fr]
    out = s.copy()
    concl = out.conclusions()
    _drop_cells(out, [c])
    concl = concl[:i - 1] + [pl, pr] + concl[i:]
    _set_conclusions(out, concl)
    return out


def _mell_tensor(s, step, mode):
    res = _binary_cell_result(s, step)
    return [res] if res is not None else []


def _contr_splits(m: int, step: ElementaryStep, nonempty: bool):
    if step.split is not None:
        h, k = step.split
        if h + k + 2 != m:
            return []
        return [tuple(range(h + 1))]
    lo = 1 if nonempty else 0
    hi = m - 1 if nonempty else m
    out = []
    for size in range(lo, hi + 1):
        out.extend(itertools.combinations(range(m), size))
    return out


def _contr_concrete(s, step, left) -> Structure:
    i = step.index
    c = s.cell_of_conclusion(i)
    out = s.copy()
    ins = out.inputs(c)
    w2, _, (o2,) = _add_cell(
        out, "w", "why", out.vmap[c], outs=[out.color[out.conclusions()[i - 1]]]
    )
    for n, f in enumerate(ins):
        if n not in left:
            out.graph.boundary[f] = w2
    concl = out.conclusions()
    concl.remove(o2)
    concl = concl[:i] + [o2] + concl[i:]
    _set_conclusions(out, concl)
    return out


def _contr_daimon(s, step, mode) -> Structure:
    i = step.index
    f = s.conclusions()[i - 1]
    d = s.graph.boundary[f]
    out = s.copy()
    if mode == "atomic":
        (g,) = _grow_outputs(out, d, [out.color[f]])
        concl = out.conclusions()
        concl.remove(g)
        concl = concl[:i] + [g] + concl[i:]
        _set_conclusions(out, concl)
        return out
    a = out.color[f].sub
    wa = out.color[f]
    concl = out.conclusions()
    pos = concl.index(f)
    _drop_flags(out, {f})
    g1, g2 = _grow_outputs(out, d, [a, a])
    _, _, (o1,) = _add_cell(out, "w", "why", out.vmap[d], ins=[(a, g1)], outs=[wa])
    _, _, (o2,) = _add_cell(out, "w", "why", out.vmap[d], ins=[(a, g2)], outs=[wa])
    concl = concl[:pos] + [o1, o2] + concl[pos + 1:]
    _set_conclusions(out, concl)
    return out


def _mell_contr(s, step, mode):
    c = s.cell_of_conclusion(step.index)
    if s.label[c] == "dai":
        return [_contr_daimon(s, step, mode)]
    if s.label[c] != "why":
        return []
    m = len(s.inputs(c))
    if m < 2:
        return []
    return [_contr_concrete(s, step, left) for left in _contr_splits(m, step, True)]


def _der_concrete(s, step) -> Structure | None:
    i = step.index
    c = s.cell_of_conclusion(i)
    if s.label[c] != "why":
        return None
    ins = s.inputs(c)
    if len(ins) != 1 or s.crossing_depth(ins[0]) != 0:
        return None
    p = s.graph.partner[ins[0]]
    out = s.copy()
    concl = out.conclusions()
    _drop_cells(out, [c])
    concl = concl[:i - 1] + [p] + concl[i:]
    _set_conclusions(out, concl)
    return out


def _mell_der(s, step, mode):
    res = _der_concrete(s, step)
    return [res] if res is not None else []


def _mell_box(s, step, mode):
    i = step.index
    r, fs, off = _locate_block(s, i)
    c = s.graph.boundary[fs[off]]
    if s.label[c] != "ofc":
        return []
    ins = s.inputs(c)
    if len(ins) != 1 or s.crossing_depth(ins[0]) != 1:
        return []
    b = s.door_target(ins[0])
    if s.forest.children(r) != [b]:
        return []
    borders = {s.graph.boundary[f] for f in fs if f != fs[off]}
    if any(s.label[w] != "why" for w in borders):
        return []
    if set(s.cells_at_node(r)) != borders | {c}:
        return []
    p = s.graph.partner[ins[0]]
    out = s.copy()
    concl = out.conclusions()
    _drop_cells(out, [c])
    for v in list(out.graph.vertices):
        if out.vmap[v] == b:
            out.vmap[v] = r
    for ch in list(out.forest.children(b)):
        out.forest.parent[ch] = r
    out.forest.nodes.discard(b)
    out.forest.parent.pop(b, None)
    concl = concl[:i - 1] + [p] + concl[i:]
    _set_conclusions(out, concl)
    return [out]


_MELL_CASES = {
    "exc": _mell_exc,
    "mix": _mell_mix,
    "ax": _mell_hyp,
    "dai": _mell_hyp,
    "one": _mell_hyp,
    "bot": _mell_hyp,
    "weak": _mell_hyp,
    "cut": _mell_cut,
    "tensor": _mell_tensor,
    "par": _mell_tensor,
    "contr": _mell_contr,
    "der": _mell_der,
    "box": _mell_box,
}


# -- reverse action ----------------------------------------------------


def reverse_mell(
    sp: Structure,
    step: ElementaryStep,
    source: SequentContext | None = None,
    mode: str = "atomic",
) -> Structure:
    """The unique structure R with sp among apply_mell(R, step).

    The deleted-block rules (ax, dai, weak) need the source context to
    know what the removed block contained; everything else reads its
    source off sp.  Raises ReverseError when no source exists, in
    particular on the contraction patterns outside the ?-cell pair and
    the single-daimon shapes.
    """
    _check_mode(mode)
    if source is not None:
        want = typecheck_step(source, step)
        if type_of(sp) != want:
            raise ReverseError(
                f"{format_step(step)}: structure type {type_of(sp)} "
                f"does not match the step target {want}"
            )
    fn = _REVERSE_CASES[step.kind]
    return fn(sp, step, source)


def _need_source(step, source):
    if source is None:
        raise ReverseError(
            f"{format_step(step)}: reversing a block deletion needs "
            "the source context"
        )


def _rev_exc(sp, step, source):
    return _do_exc(sp, step.index)


def _rev_mix(sp, step, source):
    i = step.index
    r1, fs, off = _locate_block(sp, i)
    if off != len(fs) - 1:
        raise ReverseError(f"{format_step(step)}: position {i} does not end a block")
    roots = sp.roots_in_order()
    k = roots.index(r1)
    if k + 1 >= len(roots):
        raise ReverseError(f"{format_step(step)}: no block to merge on the right")
    r2 = roots[k + 1]
    out = sp.copy()
    for v in list(out.graph.vertices):
        if out.vmap[v] == r2:
            out.vmap[v] = r1
    for c in list(out.forest.children(r2)):
        out.forest.parent[c] = r1
    out.forest.nodes.discard(r2)
    out.forest.parent.pop(r2, None)
    return out


def _insert_block(sp, at: int, lab: str, formulas) -> Structure:
    """A fresh one-cell root whose outputs open at flattened position at."""
    out = sp.copy()
    n = _fresh_node(out, "r")
    out.forest.nodes.add(n)
    out.forest.parent[n] = None
    _, _, outs = _add_cell(out, lab if lab != "why" else "w", lab, n, outs=formulas)
    concl = [f for f in out.conclusions() if f not in outs]
    concl = concl[:at - 1] + outs + concl[at - 1:]
    _set_conclusions(out, concl)
    return out


def _block_boundary_positions(sp) -> set[int]:
    pos = {1}
    total = 0
    for r in sp.roots_in_order():
        total += len(sp.conclusions_of_root(r))
        pos.add(total + 1)
    return pos


def _rev_ax(sp, step, source):
    _need_source(step, source)
    a = source.flat[step.index - 1]
    b = source.flat[step.index]
    return _insert_block(sp, step.index, "ax", [a, b])


def _rev_dai(sp, step, source):
    _need_source(step, source)
    k, _ = source.locate(step.index)
    return _insert_block(sp, source.block_start(k), "dai", list(source.blocks[k]))


def _rev_one(sp, step, source):
    if source is None and step.index not in _block_boundary_positions(sp):
        raise ReverseError(
            f"{format_step(step)}: position {step.index} is inside a block"
        )
    return _insert_block(sp, step.index, "one", [Formula("one")])


def _rev_bot(sp, step, source):
    if source is None and step.index not in _block_boundary_positions(sp):
        raise ReverseError(
            f"{format_step(step)}: position {step.index} is inside a block"
        )
    return _insert_block(sp, step.index, "bot", [Formula("bot")])


def _rev_weak(sp, step, source):
    _need_source(step, source)
    return _insert_block(sp, step.index, "why", [source.flat[step.index - 1]])


def _rev_cut(sp, step, source):
    i = step.index
    a = step.formula
    concl = sp.conclusions()
    if i + 1 > len(concl):
        raise ReverseError(f"{format_step(step)}: position {i + 1} out of range")
    fa, fb = concl[i - 1], concl[i]
    r, fs, off = _locate_block(sp, i)
    if sp.color[fa] != a or sp.color[fb] != dual(a):
        raise ReverseError(
            f"{format_step(step)}: conclusions {i}, {i + 1} are not typed "
            f"{format_formula(a)}, {format_formula(dual(a))}"
        )
    if off != len(fs) - 2:
        raise ReverseError(
            f"{format_step(step)}: the dual pair does not close its block"
        )
    out = sp.copy()
    _add_cell(out, "cut", "cut", r, ins=[(a, fa), (dual(a), fb)])
    return out


def _rev_binary(sp, step, source):
    i = step.index
    concl = sp.conclusions()
    if i + 1 > len(concl):
        raise ReverseError(f"{format_step(step)}: position {i + 1} out of range")
    fa, fb = concl[i - 1], concl[i]
    ra, _, _ = _locate_block(sp, i)
    rb, _, _ = _locate_block(sp, i + 1)
    if ra != rb:
        raise ReverseError(
            f"{format_step(step)}: positions {i}, {i + 1} lie in different blocks"
        )
    a, b = sp.color[fa], sp.color[fb]
    out = sp.copy()
    _, _, (o,) = _add_cell(
        out, step.kind[0] + "c", step.kind, ra,
        ins=[(a, fa), (b, fb)],
        outs=[Formula(step.kind, left=a, right=b)],
    )
    concl = [f for f in out.conclusions() if f != o]
    concl = concl[:i - 1] + [o] + concl[i - 1:]
    _set_conclusions(out, concl)
    return out


def _rev_contr(sp, step, source):
    i = step.index
    concl = sp.conclusions()
    if i + 1 > len(concl):
        raise ReverseError(f"{format_step(step)}: position {i + 1} out of range")
    fa, fb = concl[i - 1], concl[i]
    c1, c2 = sp.graph.boundary[fa], sp.graph.boundary[fb]
    if sp.label.get(c1) == "why" and sp.label.get(c2) == "why" and c1 != c2:
        out = sp.copy()
        moved = out.inputs(c2)
        for f in moved:
            out.graph.boundary[f] = c1
        # concatenation: the moved premises go after the keeper's own
        out.order = [f for f in out.order if f not in moved] + moved
        _drop_cells(out, [c2])
        return out
    if c1 == c2 and sp.label.get(c1) == "dai":
        out = sp.copy()
        _drop_flags(out, {fb})
        return out
    raise ReverseError(
        f"{format_step(step)}: conclusions {i}, {i + 1} are neither two "
        "?-cells nor two outputs of one daimon; no contraction source exists"
    )


def _rev_der(sp, step, source):
    i = step.index
    concl = sp.conclusions()
    f = concl[i - 1]
    r, _, _ = _locate_block(sp, i)
    a = sp.color[f]
    out = sp.copy()
    _, _, (o,) = _add_cell(
        out, "w", "why", r, ins=[(a, f)], outs=[Formula("why", sub=a)]
    )
    concl = [g for g in out.conclusions() if g != o]
    concl = concl[:i - 1] + [o] + concl[i - 1:]
    _set_conclusions(out, concl)
    return out


def _rev_box(sp, step, source):
    i = step.index
    r, fs, off = _locate_block(sp, i)
    if off != len(fs) - 1:
        raise ReverseError(f"{format_step(step)}: position {i} does not end its block")
    f = fs[off]
    borders = {sp.graph.boundary[g] for g in fs[:-1]}
    for w in borders:
        if sp.label[w] != "why":
            raise ReverseError(
                f"{format_step(step)}: conclusion cell {w} is not a ?-cell, "
                "cannot become a box border"
            )
    out = sp.copy()
    old_children = list(out.forest.children(r))
    b = _fresh_node(out, "b")
    out.forest.nodes.add(b)
    out.forest.parent[b] = r
    for ch in old_children:
        out.forest.parent[ch] = b
    for v in list(out.graph.vertices):
        if out.vmap[v] == r and v not in borders:
            out.vmap[v] = b
    a = out.color[f]
    _, _, (o,) = _add_cell(
        out, "bg", "ofc", r, ins=[(a, f)], outs=[Formula("ofc", sub=a)]
    )
    concl = [g for g in out.conclusions() if g != o]
    concl = concl[:i - 1] + [o] + concl[i - 1:]
    _set_conclusions(out, concl)
    return out


_REVERSE_CASES = {
    "exc": _rev_exc,
    "mix": _rev_mix,
    "ax": _rev_ax,
    "dai": _rev_dai,
    "one": _rev_one,
    "bot": _rev_bot,
    "weak": _rev_weak,
    "cut": _rev_cut,
    "tensor": _rev_binary,
    "par": _rev_binary,
    "contr": _rev_contr,
    "der": _rev_der,
    "box": _rev_box,
}


# -- forward action on resource structures -----------------------------


def apply_dill(
    s: Structure,
    step: ElementaryStep,
    mode: str = "atomic",
    enumerate_daimon: bool = False,
) -> list[list[Structure]]:
    """The branches of one step on one box-free element.

    Each branch is the set of structures that jointly replace the
    element (a singleton except for the box rule on n copies).  No
    branches means the element blocks the step.
    """
    _check_mode(mode)
    typecheck_step(type_of(s), step)
    fn = _DILL_CASES[step.kind]
    branches = fn(s, step, mode, enumerate_daimon)
    return dedup_sets([dedup_structures(list(b)) for b in branches])


def apply_dill_set(
    pi, step: ElementaryStep, mode: str = "atomic",
    enumerate_daimon: bool = False,
) -> list[list[Structure]]:
    """All successor sets of a set of elements: one branch chosen per
    element, results merged and deduplicated."""
    pi = dedup_structures(pi)
    per_element = []
    for s in pi:
        branches = apply_dill(s, step, mode, enumerate_daimon)
        if not branches:
            return []
        per_element.append(branches)
    results = []
    for combo in itertools.product(*per_element):
        merged: list[Structure] = []
        for branch in combo:
            merged.extend(branch)
        results.append(dedup_structures(merged))
    return dedup_sets(results)


def _dill_exc(s, step, mode, enum):
    return [[_do_exc(s, step.index)]]


def _dill_mix(s, step, mode, enum):
    return [[x] for x in _mix_results(s, step, mode, allow_daimon_split=True)]


def _dill_hyp(s, step, mode, enum):
    r, fs, _ = _locate_block(s, step.index)
    if not _hyp_concrete_matches(s, step, r, fs) and daimon_pattern(s, r) is None:
        return []
    out = s.copy()
    _remove_root(out, r)
    return [[out]]


def _dill_cut(s, step, mode, enum):
    r = _cut_root(s, step.index)
    if r is None:
        return []
    branches = [[x] for x in _cut_cell_results(s, step, r)]
    dais = [v for v in s.cells_at_node(r) if s.label[v] == "dai"]
    if dais:
        if len(dais) > 1 and not enum:
            concl = s.conclusions()

            def first_pos(d):
                piece = s.piece_of(d)
                at = [n for n, f in enumerate(concl) if s.graph.boundary[f] in piece]
                return (min(at) if at else len(concl), d)

            dais = [min(dais, key=first_pos)]
        a = step.formula
        for d in dais:
            out = s.copy()
            ga, gb = _grow_outputs(out, d, [a, dual(a)])
            concl = [f for f in out.conclusions() if f not in (ga, gb)]
            concl = concl[:step.index - 1] + [ga, gb] + concl[step.index - 1:]
            _set_conclusions(out, concl)
            branches.append([out])
    return branches


def _dill_tensor(s, step, mode, enum):
    i = step.index
    c = s.cell_of_conclusion(i)
    if s.label[c] == "dai":
        f = s.conclusions()[i - 1]
        a = s.color[f]
        out = s.copy()
        concl = out.conclusions()
        pos = concl.index(f)
        _drop_flags(out, {f})
        g1, g2 = _grow_outputs(out, c, [a.left, a.right])
        concl = concl[:pos] + [g1, g2] + concl[pos + 1:]
        _set_conclusions(out, concl)
        return [[out]]
    res = _binary_cell_result(s, step)
    return [[res]] if res is not None else []


def _dill_contr(s, step, mode, enum):
    c = s.cell_of_conclusion(step.index)
    if s.label[c] == "dai":
        return [[_contr_daimon(s, step, mode)]]
    if s.label[c] != "why":
        return []
    m = len(s.inputs(c))
    return [
        [_contr_concrete(s, step, left)]
        for left in _contr_splits(m, step, False)
    ]


def _dill_der(s, step, mode, enum):
    i = step.index
    c = s.cell_of_conclusion(i)
    if s.label[c] == "dai":
        f = s.conclusions()[i - 1]
        out = s.copy()
        out.color[f] = out.color[f].sub
        return [[out]]
    res = _der_concrete(s, step)
    return [[res]] if res is not None else []


def _extract_copy(s, keep, concl):
    """The substructure on the kept cells; out-flags paired outside
    survive as tails, in-flags paired outside are pruned."""
    out = s.copy()
    _drop_cells(out, [v for v in s.graph.vertices if v not in keep])
    for f in list(out.graph.flags):
        if out.graph.partner[f] is None and out.orient[f] == "in":
            _drop_flags(out, {f})
    for n in list(out.forest.nodes):
        if not any(out.vmap[v] == n for v in out.graph.vertices):
            if not any(out.forest.parent[m] == n for m in out.forest.nodes if m != n):
                out.forest.nodes.discard(n)
                out.forest.parent.pop(n, None)
    _set_conclusions(out, concl)
    return out


def _dill_box(s, step, mode, enum):
    i = step.index
    r, fs, off = _locate_block(s, i)
    f = fs[off]
    c = s.graph.boundary[f]

    wraps = daimon_pattern(s, r)
    if wraps is not None:
        if s.label[c] != "dai":
            return []
        out = s.copy()
        out.color[f] = out.color[f].sub
        return [[out]]

    if s.label[c] != "ofc":
        return []
    borders = [s.graph.boundary[g] for g in fs if g != f]
    if any(s.label[w] != "why" for w in borders):
        return []
    content = {v for v in s.graph.vertices if s.root_of_vertex(v) == r}
    others = content - set(borders) - {c}
    ins = s.inputs(c)

    if not ins:
        # zero copies: everything collapses into one fresh daimon
        if others or any(s.inputs(w) for w in borders):
            return []
        out = s.copy()
        concl = out.conclusions()
        positions = [concl.index(g) for g in fs]
        _drop_cells(out, content)
        _, _, new_outs = _add_cell(
            out, "dai", "dai", r,
            outs=[s.color[g].sub if g == f else s.color[g] for g in fs],
        )
        for p, g in zip(positions, new_outs):
            concl[p] = g
        _set_conclusions(out, concl)
        return [[out]]

    # n >= 1 copies: the content must fall apart into one piece per
    # !-premise, up to orphan pieces assigned freely
    comp: dict[str, int] = {}
    groups: list[set[str]] = []
    for v in sorted(others):
        if v in comp:
            continue
        stack, group = [v], set()
        while stack:
            u = stack.pop()
            if u in group:
                continue
            group.add(u)
            comp[u] = len(groups)
            for g in s.graph.flags_at(u):
                q = s.graph.partner[g]
                if q is not None:
                    w = s.graph.boundary[q]
                    if w in others and w not in group:
                        stack.append(w)
        groups.append(group)

    premise_comp = []
    for g in ins:
        producer = s.graph.boundary[s.graph.partner[g]]
        if producer not in comp:
            return []
        premise_comp.append(comp[producer])
    if len(set(premise_comp)) != len(premise_comp):
        return []
    orphan_groups = [n for n in range(len(groups)) if n not in premise_comp]

    # orphan pieces that look alike yield isomorphic copies wherever
    # they land, so one assignment per multiset of destinations is
    # enough; only lone cells are classified, larger pieces stay apart
    classes: dict = {}
    for n in orphan_groups:
        group = groups[n]
        if len(group) == 1:
            (v,) = group
            wires = tuple(sorted(
                (s.graph.boundary[q], format_formula(s.color[g]), s.orient[g])
                for g in s.graph.flags_at(v)
                if (q := s.graph.partner[g]) is not None
            ))
            key = (s.label[v], wires)
        else:
            key = ("", n)
        classes.setdefault(key, []).append(n)
    members = list(classes.values())
    choices = [
        itertools.combinations_with_replacement(range(len(ins)), len(ms))
        for ms in members
    ]

    outside = {v for v in s.graph.vertices if s.root_of_vertex(v) != r}
    branches = []
    for picks in itertools.product(*choices):
        assign: dict[int, int] = {}
        for ms, pick in zip(members, picks):
            assign.update(zip(ms, pick))
        copies = []
        for j, g in enumerate(ins):
            keep = set(outside) | set(borders)
            keep |= groups[premise_comp[j]]
            for og, owner in assign.items():
                if owner == j:
                    keep |= groups[og]
            p = s.graph.partner[g]
            concl = [p if x == f else x for x in s.conclusions()]
            copies.append(_extract_copy(s, keep, concl))
        branches.append(copies)
    return branches


_DILL_CASES = {
    "exc": _dill_exc,
    "mix": _dill_mix,
    "ax": _dill_hyp,
    "dai": _dill_hyp,
    "one": _dill_hyp,
    "bot": _dill_hyp,
    "weak": _dill_hyp,
    "cut": _dill_cut,
    "tensor": _dill_tensor,
    "par": _dill_tensor,
    "contr": _dill_contr,
    "der": _dill_der,
    "box": _dill_box,
}


# -- termination -------------------------------------------------------


def find_termination_path(s: Structure) -> RewritePath:
    """A path deconstructing the structure to the empty one.

    Greedy leftmost strategy: delete one-cell roots, open conclusion
    cells in place, open a lone box (bubbling its !-door to the end of
    the block first), separate multi-piece roots with exchanges and a
    mix, and fall back to firing a root-level cut.  Cut payloads and
    contraction splits are recorded so a replay can follow the same
    choices.
    """
    source = type_of(s)
    cur = s
    steps: list[ElementaryStep] = []
    guard = 0
    while not cur.is_empty():
        guard += 1
        if guard > 10000:
            raise RuntimeError("termination strategy looped; structure invalid?")
        batch = _termination_steps(cur)
        for step in batch:
            results = apply_mell(cur, step)
            if not results:
                raise RuntimeError(
                    f"termination strategy chose inapplicable step {step}"
                )
            cur = results[0]
            steps.append(step)
    return RewritePath.typed(steps, source)


def _termination_steps(cur: Structure) -> list[ElementaryStep]:
    r = cur.roots_in_order()[0]
    fs = cur.conclusions_of_root(r)
    start = 1
    content = [v for v in cur.graph.vertices if cur.root_of_vertex(v) == r]

    if len(content) == 1:
        v = content[0]
        lab = cur.label[v]
        if lab == "ax":
            return [ElementaryStep("ax", start)]
        if lab == "dai":
            return [ElementaryStep("dai", start + len(fs) - 1)]
        if lab in ("one", "bot"):
            return [ElementaryStep(lab, start)]
        if lab == "why" and not cur.inputs(v):
            return [ElementaryStep("weak", start)]

    for j, f in enumerate(fs):
        c = cur.graph.boundary[f]
        lab = cur.label[c]
        if lab in ("tensor", "par"):
            return [ElementaryStep(lab, start + j)]
        if lab == "why":
            ins = cur.inputs(c)
            if len(ins) == 1 and cur.crossing_depth(ins[0]) == 0:
                return [ElementaryStep("der", start + j)]
            if len(ins) >= 2:
                return [ElementaryStep("contr", start + j, split=(0, len(ins) - 2))]

    kids = cur.forest.children(r)
    rcells = cur.cells_at_node(r)
    if len(kids) == 1:
        doors = [
            v for v in rcells
            if cur.label[v] == "ofc"
            and len(cur.inputs(v)) == 1
            and cur.crossing_depth(cur.inputs(v)[0]) == 1
        ]
        borders = {cur.graph.boundary[f] for f in fs}
        if (
            len(doors) == 1
            and set(rcells) == borders | set(doors)
            and all(cur.label[w] == "why" for w in borders - set(doors))
        ):
            mask = [cur.graph.boundary[f] != doors[0] for f in fs]
            pre = exchange_prefix(start, mask)
            return pre + [ElementaryStep("box", start + len(fs) - 1)]

    pieces = cur.pieces(r)
    with_concl = [
        p for p in pieces if any(cur.graph.boundary[f] in p for f in fs)
    ]
    if len(with_concl) >= 2:
        first = next(p for p in with_concl if cur.graph.boundary[fs[0]] in p)
        mask = [cur.graph.boundary[f] in first for f in fs]
        pre = exchange_prefix(start, mask)
        return pre + [ElementaryStep("mix", start + sum(mask) - 1)]

    cuts = sorted(v for v in rcells if cur.label[v] == "cut")
    if cuts:
        a = cur.color[cur.inputs(cuts[0])[0]]
        return [ElementaryStep("cut", start + len(fs), formula=a)]

    raise RuntimeError(f"no applicable deconstruction step at root {r}")
