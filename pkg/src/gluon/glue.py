"""Inverse expansion: search for a deconstruction path sending a set of
resource structures to the empty structure, rebuild the witness by reverse
replay, and certify the result.

The search is a budgeted depth-first walk over structure sets with
memoized failures.  Exchanges are silent: they never consume budget, and
states are kept in a canonical slot order so that arrangements differing
only by exchanges share one memo entry.  Soundness is unconditional:
every certificate is re-verified by independent replay and membership
checks.  Completeness is only relative to the configured depth bound and
cut-formula pool, so negative answers are always reported as "not within
bound", never as non-glueability.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .formula import (
    Formula,
    SequentContext,
    dual,
    format_context,
    format_formula,
    subformula_closure,
)
from .rewrite import (
    ElementaryStep,
    ReverseError,
    RewritePath,
    StepError,
    TypecheckError,
    apply_dill_set,
    apply_mell,
    context_trace,
    dedup_structures,
    exchange_prefix,
    format_step,
    reverse_mell,
    typecheck_step,
    _set_conclusions,
    _sets_iso,
)
from .structure import (
    Structure,
    StructureBuilder,
    iso_fingerprint,
    structure_iso,
    type_of,
    validate_classify,
)
from .taylor import is_filled_member, is_taylor_member


class GlueError(ValueError):
    """Bad input to the solver (not a failed search)."""


class CertificationError(RuntimeError):
    """A certificate invariant failed to re-verify."""


# -- configuration and results -----------------------------------------


@dataclass(frozen=True)
class GlueConfig:
    max_depth: int = 25
    cut_candidates: frozenset[Formula] | None = None
    mode: str = "atomic"
    enumerate_daimon_cut: bool = False

    def __post_init__(self):
        if self.max_depth < 0:
            raise GlueError("max_depth must be nonnegative")
        if self.mode not in ("atomic", "eta"):
            raise GlueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class GlueCertificate:
    elements: tuple[Structure, ...]
    path: RewritePath
    witness: Structure
    memberships: tuple[tuple[str, object], ...]  # per element: (flavor, witness)
    classification: frozenset[str]
    mode: str

    def verify(self):
        """Re-run every invariant from scratch; raises CertificationError."""
        again = reconstruct_and_certify(list(self.elements), self.path,
                                        mode=self.mode)
        if not structure_iso(again.witness, self.witness):
            raise CertificationError("stored witness differs from reverse replay")
        return True


@dataclass(frozen=True)
class Glueable:
    certificate: GlueCertificate


@dataclass(frozen=True)
class NotWithinBound:
    depth: int


# -- input normalization -----------------------------------------------


def normalize_set(pi) -> list[Structure]:
    """Validate, require one common typed context, dedup up to iso."""
    elems = list(pi)
    if not elems:
        raise GlueError("empty input set; the singleton of the empty "
                        "structure is the unit, not the empty set")
    ctx = None
    for s in elems:
        rep = validate_classify(s)
        if not rep.ok:
            raise GlueError(f"invalid element: {'; '.join(rep.violations)}")
        if "dill0-star" not in rep.classes:
            raise GlueError("element is not a resource structure "
                            "(boxes or infinite !-cells present)")
        t = type_of(s)
        if ctx is None:
            ctx = t
        elif t != ctx:
            raise GlueError(
                f"heterogeneous element types: {format_context(ctx)} "
                f"vs {format_context(t)}"
            )
    return dedup_structures(elems)


# -- state fingerprints ------------------------------------------------


def _state_key(ctx, state):
    # the block shape matters: the same elements under different block
    # groupings admit different steps
    shape = tuple(tuple(format_formula(f) for f in b) for b in ctx.blocks)
    return (shape, tuple(sorted(map(repr, (iso_fingerprint(s)
                                           for s in state)))))


# -- slot tables -------------------------------------------------------


def _slot_table(state):
    """Per element: (structure, cell, label, arity, input producers) at
    every conclusion slot, gathered in one pass over the flag order."""
    rows = []
    for s in state:
        ins_of: dict[str, list[str]] = {}
        cells: list[str] = []
        for f in s.order:
            v = s.graph.boundary.get(f)
            if v is None:
                continue
            o = s.orient.get(f)
            if o == "in":
                ins_of.setdefault(v, []).append(f)
            elif o == "out" and s.graph.partner.get(f) is None:
                cells.append(v)
        labels = []
        arities = []
        prods = []
        for c in cells:
            labels.append(s.label[c])
            flags = ins_of.get(c, ())
            arities.append(len(flags))
            ps = []
            for g in flags:
                p = s.graph.partner.get(g)
                ps.append("-" if p is None else s.label[s.graph.boundary[p]])
            prods.append(tuple(sorted(ps)))
        rows.append((s, cells, labels, arities, prods))
    return rows


# -- canonical slot order ----------------------------------------------


def _slot_sort_key(ctx, tab, i):
    descs = tuple(sorted(
        (labels[i - 1], arities[i - 1], prods[i - 1])
        for _, _, labels, arities, prods in tab
    ))
    return (format_formula(ctx.flat[i - 1]), descs)


def _apply_excs(state, steps):
    """A run of exchanges as one conclusion permutation, copying each
    element once.  Identical permutations preserve dedup up to iso."""
    if not steps:
        return state
    out = []
    for s in state:
        c = s.copy()
        concl = c.conclusions()
        for st in steps:
            i = st.index
            concl[i - 1], concl[i] = concl[i], concl[i - 1]
        _set_conclusions(c, concl)
        out.append(c)
    return out


def _normalize(state, ctx, cfg):
    """Exchange each block into a canonical slot order.

    Returns (exchange steps, state, ctx).  Sorting is stable on an
    isomorphism-invariant key, so states reachable from one another by
    silent exchanges normalize to a common representative and share a
    memo entry.
    """
    steps: list[ElementaryStep] = []
    tab = _slot_table(state)
    for k in range(len(ctx.blocks)):
        start = ctx.block_start(k)
        n = len(ctx.blocks[k])
        keys = [_slot_sort_key(ctx, tab, start + off) for off in range(n)]
        arr = list(range(n))
        for a in range(1, n):
            b = a
            while b > 0 and keys[arr[b]] < keys[arr[b - 1]]:
                arr[b - 1], arr[b] = arr[b], arr[b - 1]
                steps.append(ElementaryStep("exc", start + b - 1))
                b -= 1
    if not steps:
        return [], state, ctx
    cctx = ctx
    for st in steps:
        cctx = typecheck_step(cctx, st)
    return steps, _apply_excs(state, steps), cctx


# -- candidate move enumeration ----------------------------------------
#
# A move is a short list of steps: silent exchanges first, then exactly
# one budgeted step.  Candidates are generated per block and per slot,
# gated by cheap per-element cell checks, so steps that every element
# rejects are never even tried.


def _slot_gate(tab, i, labels):
    return all(row[2][i - 1] in labels for row in tab)


def _arity_gate(tab, i, arity):
    for _, _, labels, arities, _ in tab:
        lab = labels[i - 1]
        if lab == "dai":
            continue
        if lab != "why" or arities[i - 1] != arity:
            return False
    return True


def _ax_gate(tab, i):
    for _, cells, labels, _, _ in tab:
        if labels[i - 1] == "dai" and labels[i] == "dai":
            continue
        if labels[i - 1] != "ax" or cells[i - 1] != cells[i]:
            return False
    return True


def _mix_masks(ctx, tab, k):
    """Left-side masks for splitting block k, one per way of dividing
    the joint piece classes; the side holding the first slot stays left.
    Splits that cut through a piece of some daimon-free element are
    dropped, since the mix action rejects them anyway."""
    n = len(ctx.blocks[k])
    if n < 2:
        return []
    start = ctx.block_start(k)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for s, allcells, labels, _, _ in tab:
        cells = allcells[start - 1:start - 1 + n]
        if any(labels[start - 1 + off] == "dai" for off in range(n)):
            continue  # a daimon splits freely between the sides
        owner = {}
        for pn, piece in enumerate(s.pieces(s.root_of_vertex(cells[0]))):
            for v in piece:
                owner[v] = pn
        by: dict[int, int] = {}
        for off, c in enumerate(cells):
            if owner[c] in by:
                ra, rb = find(by[owner[c]]), find(off)
                if ra != rb:
                    parent[ra] = rb
            else:
                by[owner[c]] = off
    groups: dict[int, list[int]] = {}
    for off in range(n):
        groups.setdefault(find(off), []).append(off)
    anchor = groups.pop(find(0))
    others = list(groups.values())
    masks = []
    for bits in range(2 ** len(others) - 1):
        mask = [False] * n
        for off in anchor:
            mask[off] = True
        for j, grp in enumerate(others):
            if bits >> j & 1:
                for off in grp:
                    mask[off] = True
        masks.append(mask)
    return masks


def _cut_pool(state, cfg, cuts):
    """Formulas worth cutting on: colors of root-level cut-cell inputs,
    plus the configured pool when the daimon attachment is enabled."""
    pool = set()
    for s in state:
        for v in s.graph.vertices:
            if s.label[v] != "cut":
                continue
            if s.forest.parent.get(s.vmap[v]) is not None:
                continue
            for f in s.inputs(v):
                pool.add(s.color[f])
    if cfg.enumerate_daimon_cut:
        pool |= set(cuts)
    return sorted(pool, key=str)


def _cut_ok(state, a):
    want = {a, dual(a)}
    for s in state:
        if any(lab == "dai" for lab in s.label.values()):
            continue
        for v in s.graph.vertices:
            if (s.label[v] == "cut"
                    and s.forest.parent.get(s.vmap[v]) is None
                    and {s.color[f] for f in s.inputs(v)} == want):
                break
        else:
            return False
    return True


def _box_ready(fs) -> bool:
    bangs = sum(1 for f in fs if f.kind == "ofc")
    return bangs == 1 and all(f.kind in ("ofc", "why") for f in fs)


def _moves(ctx, state, tab, cfg, cuts):
    """Candidate moves in exploration order, each with its target
    context.  Order: block hypotheses, then deterministic openers,
    boxes, mixes (box-enabling splits and small sides first),
    contractions, cuts."""
    out = []
    for k, block in enumerate(ctx.blocks):
        start = ctx.block_start(k)
        end = start + len(block) - 1
        if len(block) == 1:
            f = block[0]
            if f.kind == "one" and _slot_gate(tab, start, ("one", "dai")):
                out.append((0, (0,), [ElementaryStep("one", start)]))
            elif f.kind == "bot" and _slot_gate(tab, start, ("bot", "dai")):
                out.append((0, (0,), [ElementaryStep("bot", start)]))
            if f.kind == "why" and _arity_gate(tab, start, 0):
                out.append((0, (0,), [ElementaryStep("weak", start)]))
        if (len(block) == 2 and block[1] == dual(block[0])
                and _ax_gate(tab, start)):
            out.append((0, (0,), [ElementaryStep("ax", start)]))
        if _slot_gate(tab, end, ("dai",)):
            out.append((0, (0,), [ElementaryStep("dai", end)]))
        bangs = [off for off, g in enumerate(block) if g.kind == "ofc"]
        if (_box_ready(block)
                and _slot_gate(tab, start + bangs[0], ("ofc", "dai"))
                and all(_slot_gate(tab, start + off, ("why", "dai"))
                        for off in range(len(block)) if off != bangs[0])):
            mask = [off != bangs[0] for off in range(len(block))]
            pre = exchange_prefix(start, mask)
            out.append((2, (0,), pre + [ElementaryStep("box", end)]))
        for mask in _mix_masks(ctx, tab, k):
            w = sum(mask)
            left = [f for f, m in zip(block, mask) if m]
            right = [f for f, m in zip(block, mask) if not m]
            rank = 0 if _box_ready(left) or _box_ready(right) else 1
            pre = exchange_prefix(start, mask)
            out.append((3, (rank, min(w, len(block) - w)),
                        pre + [ElementaryStep("mix", start + w - 1)]))
    for i, f in enumerate(ctx.flat, start=1):
        if f.kind == "why":
            if _arity_gate(tab, i, 1):
                out.append((1, (0,), [ElementaryStep("der", i)]))
            if _slot_gate(tab, i, ("why", "dai")):
                out.append((4, (0,), [ElementaryStep("contr", i)]))
        elif f.kind in ("tensor", "par") and _slot_gate(tab, i,
                                                        (f.kind, "dai")):
            out.append((1, (0,), [ElementaryStep(f.kind, i)]))
    cut_pool = [a for a in _cut_pool(state, cfg, cuts) if _cut_ok(state, a)]
    for a in cut_pool:
        for k in range(len(ctx.blocks)):
            e = ctx.block_start(k) + len(ctx.blocks[k]) - 1
            out.append((5, (0,), [ElementaryStep("cut", e + 1, formula=a)]))
    out.sort(key=lambda t: (t[0], t[1]))
    moves = []
    for _, _, steps in out:
        try:
            nctx = ctx
            for st in steps:
                nctx = typecheck_step(nctx, st)
        except StepError:
            continue
        moves.append((steps, nctx))
    return moves


# -- pruning -----------------------------------------------------------


def _state_info(state):
    """(daimons present or creatable, ax cells present, cut cells
    present) across all elements."""
    dai = ax = cut = False
    for s in state:
        for v in s.graph.vertices:
            lab = s.label[v]
            if lab == "dai":
                dai = True
            elif lab == "ax":
                ax = True
            elif lab == "cut":
                cut = True
            elif lab == "ofc" and not s.inputs(v):
                dai = True  # a zero-copy box collapses to a daimon
    return dai, ax, cut


def _formula_weight(f: Formula) -> int:
    if f.kind in ("tensor", "par"):
        return 1 + _formula_weight(f.left) + _formula_weight(f.right)
    if f.kind == "ofc":
        return 1 + _formula_weight(f.sub)
    return 1


def _contains_ofc(f: Formula) -> bool:
    if f.kind == "ofc":
        return True
    if f.kind in ("tensor", "par"):
        return _contains_ofc(f.left) or _contains_ofc(f.right)
    if f.kind == "why":
        return _contains_ofc(f.sub)
    return False


def _lower_bound(ctx, tab, info):
    """Steps still needed, never overestimated.

    Every block must be removed by its own hypothesis step.  When no
    daimon can ever absorb a block and no ax can drop two formulas at
    once, each formula and each !-layer costs a step of its own, and
    each slot beyond the current block count still needs a mix to reach
    its own hypothesis block.  A ?-slot whose whys all feed on inputs
    costs two steps (opening plus consuming what it exposes); if its
    block can never see a !-formula, box copies cannot parallelize the
    inputs, so equal arities a cost a derelictions, a hypotheses on the
    exposed content, a-1 contractions and a-1 mixes.
    """
    dai, ax, cut = info
    h = len(ctx.blocks)
    if dai or ax:
        return h
    total = 0
    for k, block in enumerate(ctx.blocks):
        start = ctx.block_start(k)
        banged = cut or any(_contains_ofc(f) for f in block)
        for off, f in enumerate(block):
            w = _formula_weight(f)
            if f.kind == "why":
                i = start + off
                if all(row[2][i - 1] == "why" for row in tab):
                    arities = {row[3][i - 1] for row in tab}
                    a = min(arities)
                    if a >= 1:
                        if banged or len(arities) > 1:
                            w = 2
                        else:
                            w = 4 * a - 2
            total += w
    total += max(0, len(ctx.flat) - len(ctx.blocks))
    return max(h, total)


def _nspan_member(target, gens):
    """Membership of an arity vector in the set of sums of the given
    generator vectors (each used any number of times)."""
    gens = [g for g in gens if any(g)]
    seen = set()

    def go(t, k):
        if not any(t):
            return True
        if (t, k) in seen:
            return False
        for j in range(k, len(gens)):
            g = gens[j]
            if all(x >= y for x, y in zip(t, g)):
                if go(tuple(x - y for x, y in zip(t, g)), j):
                    return True
        seen.add((t, k))
        return False

    return go(tuple(target), 0)


def _block_bags(block, tab, start):
    """The premise-count vectors of the block's !-slots, or None when
    the block hides deeper !-material that could change them.

    Valid only when every slot formula is an ofc with !-free body or a
    !-free formula outright, so no step can expose a new !-slot, and
    every !-slot is concretely an ofc cell in each element."""
    bags = []
    for off, f in enumerate(block):
        i = start + off
        if f.kind == "ofc":
            if _contains_ofc(f.sub):
                return None
            if any(row[2][i - 1] != "ofc" for row in tab):
                return None
            bags.append(tuple(row[3][i - 1] for row in tab))
        elif _contains_ofc(f):
            return None
    return bags


def _dead_state(ctx, tab, info):
    """Unreachability of the empty set, decided from ?-slot arities.

    With daimons neither present nor creatable, a ?-slot whose whys
    have arity zero in one element and nonzero in another can never be
    consumed: weakening and dereliction demand uniform arities,
    contraction always leaves a mixed child, and box copies inherit the
    mismatch.

    A ?-slot with unequal positive arities needs boxes to redistribute
    its inputs.  Without cut cells blocks never grow, so the only boxes
    it can ever join are the !-slots of its own block; a box on bags m
    forces every copy to take at least one input per door and leaves
    per-copy arities that must come out constant inside the (then
    !-free) box region.  Each contraction part must therefore be a
    constant vector or a multiple of some m, so the whole profile must
    be a sum of such vectors.  When the block's !-material is fully
    visible and the profile is outside that span, the state is dead.
    """
    dai, _, cut = info
    if dai:
        return False
    nelem = len(tab)
    for k, block in enumerate(ctx.blocks):
        start = ctx.block_start(k)
        bangable = any(_contains_ofc(f) for f in block)
        bags = None
        have_bags = False
        for off, f in enumerate(block):
            if f.kind != "why":
                continue
            i = start + off
            if any(row[2][i - 1] != "why" for row in tab):
                continue
            profile = tuple(row[3][i - 1] for row in tab)
            arities = set(profile)
            if len(arities) > 1:
                if 0 in arities:
                    return True
                if not bangable and not cut:
                    return True
                if not cut:
                    if not have_bags:
                        bags = _block_bags(block, tab, start)
                        have_bags = True
                    if bags is not None and not _nspan_member(
                            profile, [(1,) * nelem] + bags):
                        return True
    return False


# -- the search --------------------------------------------------------


def glueability_search(pi, cfg: GlueConfig | None = None):
    cfg = cfg or GlueConfig()
    elems = normalize_set(pi)
    ctx0 = type_of(elems[0])
    cuts = cfg.cut_candidates
    if cuts is None:
        cuts = subformula_closure(ctx0.flat)
    pre, state, ctx = _normalize(elems, ctx0, cfg)
    table: dict = {}
    steps = _search(state, ctx, cfg.max_depth, table, cfg, cuts)
    if steps is None:
        return NotWithinBound(cfg.max_depth)
    path = RewritePath.typed(pre + steps, ctx0)
    cert = reconstruct_and_certify(elems, path, mode=cfg.mode,
                                   enumerate_daimon=cfg.enumerate_daimon_cut)
    return Glueable(cert)


def _goal(state):
    return all(s.is_empty() for s in state)


def _expand(state, ctx, tab, cfg, cuts):
    """All successor edges of a state: (steps incl. silent exchanges,
    child state, child context).  Budget-independent, computed once."""
    edges = []
    for steps, nctx in _moves(ctx, state, tab, cfg, cuts):
        cur = _apply_excs(state, steps[:-1])
        for nstate in apply_dill_set(cur, steps[-1], mode=cfg.mode,
                                     enumerate_daimon=cfg.enumerate_daimon_cut):
            silent, fstate, fctx = _normalize(nstate, nctx, cfg)
            edges.append((steps + silent, fstate, fctx))
    return edges


def _search(state, ctx, budget, table, cfg, cuts):
    if _goal(state):
        return []
    tab = _slot_table(state)
    info = _state_info(state)
    if _lower_bound(ctx, tab, info) > budget:
        return None
    if _dead_state(ctx, tab, info):
        return None
    key = _state_key(ctx, state)
    bucket = table.setdefault(key, [])
    for entry in bucket:
        if _sets_iso(entry[0], state):
            if entry[1] >= budget:
                return None
            entry[1] = budget
            break
    else:
        entry = [state, budget, None]
        bucket.append(entry)
    if budget < 1:
        return None
    if entry[2] is None:
        entry[2] = _expand(state, ctx, tab, cfg, cuts)
    for steps, cstate, cctx in entry[2]:
        sub = _search(cstate, cctx, budget - 1, table, cfg, cuts)
        if sub is not None:
            return steps + sub
    return None


# -- reconstruction and certification ----------------------------------


def _replay_to_empty(state, steps, mode, enumerate_daimon):
    """First branch-resolved trace from state to the singleton of the
    empty structure, or None."""

    def rec(cur, n):
        if n == len(steps):
            return [cur] if _goal(cur) else None
        for nxt in apply_dill_set(cur, steps[n], mode=mode,
                                  enumerate_daimon=enumerate_daimon):
            tail = rec(nxt, n + 1)
            if tail is not None:
                return [cur] + tail
        return None

    return rec(state, 0)


def reconstruct_and_certify(pi, xi: RewritePath, mode: str = "atomic",
                            enumerate_daimon: bool = False) -> GlueCertificate:
    elems = normalize_set(pi)
    ctx0 = type_of(elems[0])
    if xi.source != ctx0:
        raise GlueError(
            f"path source {format_context(xi.source)} does not match "
            f"the set's type {format_context(ctx0)}"
        )
    trace = context_trace(list(xi.steps), ctx0)
    if trace[-1] != SequentContext():
        raise GlueError("path does not end at the empty context")

    if _replay_to_empty(elems, list(xi.steps), mode, enumerate_daimon) is None:
        raise CertificationError("forward replay does not reach the empty set")

    witness = StructureBuilder().build()
    for n in range(len(xi.steps) - 1, -1, -1):
        try:
            witness = reverse_mell(witness, xi.steps[n], source=trace[n],
                                   mode=mode)
        except ReverseError as e:
            raise CertificationError(
                f"reverse replay undefined at step {n + 1} "
                f"({format_step(xi.steps[n])}): {e}"
            ) from e
    if type_of(witness) != ctx0:
        raise CertificationError("reverse replay produced the wrong type")

    rep = validate_classify(witness)
    if not rep.ok:
        raise CertificationError(
            f"reverse replay produced an invalid structure: "
            f"{'; '.join(rep.violations)}"
        )

    variant = "eta" if mode == "eta" else "filled"
    memberships = []
    for s in elems:
        plain = is_taylor_member(s, witness)
        if plain is not None:
            memberships.append(("taylor", plain))
            continue
        filled = is_filled_member(s, witness, variant=variant)
        if filled is None:
            raise CertificationError(
                "element is not a member of the witness's expansion; "
                "this indicates a bug in the rewrite actions"
            )
        memberships.append((variant, filled))

    daimon_free = all(
        "dai" not in s.label.values() for s in elems
    )
    if daimon_free and all(kind == "taylor" for kind, _ in memberships):
        if "mell" not in rep.classes:
            raise CertificationError(
                "daimon-free memberships but the witness is not plain MELL"
            )

    return GlueCertificate(
        elements=tuple(elems),
        path=xi,
        witness=witness,
        memberships=tuple(memberships),
        classification=frozenset(rep.classes),
        mode=mode,
    )


# -- naturality squares ------------------------------------------------


@dataclass(frozen=True)
class NaturalityEntry:
    leg: str
    subject: str
    ok: bool
    detail: str = ""


@dataclass
class NaturalityReport:
    orientation: str
    entries: list[NaturalityEntry] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return all(e.ok for e in self.entries)

    def add(self, leg, subject, ok, detail=""):
        self.entries.append(NaturalityEntry(leg, subject, ok, detail))


def check_naturality_square(R: Structure, step: ElementaryStep, pi,
                            mode: str = "atomic",
                            extra_targets=()) -> NaturalityReport:
    """One instance of the expansion-vs-action square, at input set pi
    with pi inside R's completed expansion.

    Forward direction: every action result of R admits a set branch of
    pi landing in its expansion.  Backward direction: for every branch
    and every candidate target covering it (action results plus
    extra_targets), the reverse must be defined, rewrite back to the
    target, and keep pi inside its expansion; co-functionality makes
    the reverse the only possible source, so this decides the backward
    inclusion for each candidate.  Failures are entries, not exceptions.
    """
    variant = "eta" if mode == "eta" else "filled"
    ctx = type_of(R)
    elems = dedup_structures(list(pi))
    report = NaturalityReport("source")
    try:
        typecheck_step(ctx, step)
    except StepError as e:
        report.add("pre", "step typing", True, f"step does not apply: {e}")
        return report

    for n, s in enumerate(elems):
        ok = is_filled_member(s, R, variant=variant) is not None
        report.add("pre", f"element {n + 1} in expansion", ok)
    if not report.holds:
        return report

    forward = apply_mell(R, step, mode=mode)
    branches = apply_dill_set(elems, step, mode=mode, enumerate_daimon=True)

    for n, rp in enumerate(forward):
        covered = any(
            all(is_filled_member(x, rp, variant=variant) for x in br)
            for br in branches
        )
        report.add("forward", f"action result {n + 1}", covered,
                   "" if covered else "no set branch lands in its expansion")

    targets = dedup_structures(forward + list(extra_targets))
    for bn, br in enumerate(branches):
        for tn, tgt in enumerate(targets):
            if not all(is_filled_member(x, tgt, variant=variant) for x in br):
                continue
            subject = f"branch {bn + 1} via target {tn + 1}"
            try:
                back = reverse_mell(tgt, step, source=type_of(R), mode=mode)
            except ReverseError as e:
                report.add("reverse", subject, False, str(e))
                continue
            contained = any(
                structure_iso(x, tgt) for x in apply_mell(back, step, mode=mode)
            )
            if not contained:
                report.add("reverse", subject, False,
                           "reversed structure does not rewrite back")
                continue
            pre_ok = all(
                is_filled_member(x, back, variant=variant) for x in elems
            )
            report.add("reverse", subject, pre_ok,
                       "" if pre_ok else
                       "input set escapes the reversed structure's expansion")
            if pre_ok:
                _check_daimon_free_clause(elems, br, tgt, back, report, subject)
    return report


def _check_daimon_free_clause(elems, br, tgt, back, report, subject):
    # daimon-free inputs whose branch sits in the target's plain
    # expansion force a daimon-free reverse with plain memberships
    if any("dai" in x.label.values() for x in elems):
        return
    if not all(is_taylor_member(x, tgt) for x in br):
        return
    clean = "dai" not in back.label.values()
    plain = clean and all(is_taylor_member(x, back) for x in elems)
    report.add("moreover", subject, plain,
               "" if plain else
               "daimon-free inputs but the reverse keeps a daimon or "
               "loses plain membership")
