import pytest

from gluon.formula import (
    Formula,
    SequentContext,
    covar,
    dual,
    one,
    bot,
    parse_context,
    parse_formula,
    var,
    whynot,
)
from gluon.rewrite import (
    ApplyError,
    ElementaryStep,
    ReverseError,
    RewritePath,
    StepSyntaxError,
    TypecheckError,
    apply_dill,
    apply_dill_set,
    apply_mell,
    context_trace,
    dedup_structures,
    exchange_prefix,
    find_termination_path,
    format_path,
    format_step,
    parse_path,
    parse_step,
    reverse_mell,
    typecheck_path,
    typecheck_step,
)
from gluon.structure import (
    StructureBuilder,
    compare_measures,
    size_measure,
    structure_iso,
    type_of,
    validate_classify,
)
from gluon.taylor import daimon_pattern

from gen import random_mell


def pf(t):
    return parse_formula(t)


def pc(t):
    return parse_context(t)


def steps_of(text):
    return parse_path(text)


# -- step syntax -------------------------------------------------------


def test_step_parse_format_roundtrip():
    for tok in ["exc@1", "mix@3", "ax@2", "cut@4{(X*Y^)}", "dai@1",
                "one@2", "bot@1", "tensor@5", "par@1", "contr@2",
                "contr@2(1,3)", "der@9", "weak@1", "box@3"]:
        assert format_step(parse_step(tok)) == tok


def test_step_parse_rejects_garbage():
    for tok in ["frob@1", "ax@0", "ax@x", "cut@2", "tensor@1{X}",
                "der@1(0,0)", "ax", "@1"]:
        with pytest.raises(StepSyntaxError):
            parse_step(tok)


def test_parse_path_comments():
    text = """
    # deconstruct both tensors
    tensor@1 tensor@3   # in place
    ax@1
    """
    steps = steps_of(text)
    assert [s.kind for s in steps] == ["tensor", "tensor", "ax"]


# -- typechecking ------------------------------------------------------

WORKED_SOURCE = "((X*Y^)|((Y*Z^)|(X^|Z)))"
WORKED_PATH = (
    "par@1 par@2 par@3 tensor@1 tensor@3 "
    "exc@1 exc@2 mix@2 ax@1 exc@2 mix@2 ax@1 ax@1"
)


def test_worked_path_typechecks_to_empty():
    tgt = typecheck_path(steps_of(WORKED_PATH), pc(WORKED_SOURCE))
    assert tgt == SequentContext()


def test_worked_path_trace_shapes():
    trace = context_trace(steps_of(WORKED_PATH), pc(WORKED_SOURCE))
    assert len(trace) == 14
    assert trace[5] == pc("X, Y^, Y, Z^, X^, Z")
    assert trace[8] == pc("Y^, Y; X, Z^, X^, Z")


def test_empty_path_is_identity():
    ctx = pc("?X; 1, bot")
    assert typecheck_path([], ctx) == ctx


def test_tensor_on_par_position_errors():
    with pytest.raises(TypecheckError):
        typecheck_step(pc("(X|Y)"), parse_step("tensor@1"))


def test_typecheck_block_shape_errors():
    with pytest.raises(TypecheckError):
        typecheck_step(pc("X, X^, 1"), parse_step("ax@1"))
    with pytest.raises(TypecheckError):
        typecheck_step(pc("X; X^"), parse_step("mix@1"))
    with pytest.raises(TypecheckError):
        typecheck_step(pc("!X, ?Y"), parse_step("box@1"))
    with pytest.raises(TypecheckError):
        typecheck_step(pc("1"), parse_step("ax@5"))


def test_typecheck_cut_targets_block_end():
    out = typecheck_step(pc("1; X"), parse_step("cut@2{Y}"))
    assert out == pc("1, Y, Y^; X")
    with pytest.raises(TypecheckError):
        typecheck_step(pc("X, Y"), parse_step("cut@2{Z}"))


def test_rewrite_path_typed_endpoints():
    p = RewritePath.typed(steps_of("par@1"), pc("(X|Y)"))
    assert p.target == pc("X, Y")
    assert len(p) == 1


# -- builders ----------------------------------------------------------


def mk_axiom(a="X"):
    b = StructureBuilder()
    b.node("r")
    b.cell("a", "ax", "r", outputs=[var(a), covar(a)])
    b.conclude("a.o0", "a.o1")
    return b.build()


def mk_two_axioms():
    b = StructureBuilder()
    b.node("r")
    b.cell("a1", "ax", "r", outputs=[var("X"), covar("X")])
    b.cell("a2", "ax", "r", outputs=[var("Y"), covar("Y")])
    b.conclude("a1.o0", "a1.o1", "a2.o0", "a2.o1")
    return b.build()


def mk_tensor_of_ones():
    b = StructureBuilder()
    b.node("r")
    b.cell("u1", "one", "r", outputs=[one])
    b.cell("u2", "one", "r", outputs=[one])
    b.cell("t", "tensor", "r", inputs=[one, one], outputs=[pf("(1*1)")])
    b.wire("u1.o0", "t.i0")
    b.wire("u2.o0", "t.i1")
    b.conclude("t.o0")
    return b.build()


def mk_contr_candidate(arity=3):
    b = StructureBuilder()
    b.node("r")
    for n in range(arity):
        b.cell(f"u{n}", "one", "r", outputs=[one])
    b.cell("w", "why", "r", inputs=[one] * arity, outputs=[pf("?1")])
    for n in range(arity):
        b.wire(f"u{n}.o0", f"w.i{n}")
    b.conclude("w.o0")
    return b.build()


def mk_daimon(formulas):
    b = StructureBuilder()
    b.node("r")
    b.cell("d", "dai", "r", outputs=list(formulas))
    b.conclude(*[f"d.o{n}" for n in range(len(formulas))])
    return b.build()


def mk_box_of_one():
    b = StructureBuilder()
    b.node("r")
    b.node("b", "r")
    b.cell("u", "one", "b", outputs=[one])
    b.cell("g", "ofc", "r", inputs=[one], outputs=[pf("!1")])
    b.wire("u.o0", "g.i0")
    b.conclude("g.o0")
    return b.build()


def mk_box_with_aux():
    b = StructureBuilder()
    b.node("r")
    b.node("b", "r")
    b.cell("u1", "one", "b", outputs=[one])
    b.cell("u2", "bot", "b", outputs=[bot])
    b.cell("g", "ofc", "r", inputs=[one], outputs=[pf("!1")])
    b.cell("w", "why", "r", inputs=[bot], outputs=[pf("?bot")])
    b.wire("u1.o0", "g.i0")
    b.wire("u2.o0", "w.i0")
    b.conclude("w.o0", "g.o0")
    return b.build()


def mk_cut_orphan():
    """An axiom block plus a conclusionless cut piece at the same root."""
    b = StructureBuilder()
    b.node("r")
    b.cell("a", "ax", "r", outputs=[var("X"), covar("X")])
    b.cell("u", "one", "r", outputs=[one])
    b.cell("v", "bot", "r", outputs=[bot])
    b.cell("c", "cut", "r", inputs=[one, bot])
    b.wire("u.o0", "c.i0")
    b.wire("v.o0", "c.i1")
    b.conclude("a.o0", "a.o1")
    return b.build()


def assert_valid(s, cls=None):
    rep = validate_classify(s)
    assert rep.ok, rep.violations
    if cls is not None:
        assert cls in rep.classes, rep.classes
    return rep


# -- forward mell ------------------------------------------------------


def test_apply_ax_on_lone_axiom_gives_empty():
    s = mk_axiom()
    (res,) = apply_mell(s, parse_step("ax@1"))
    assert res.is_empty()


def test_apply_hypothesis_blocked_when_not_alone():
    # typechecks (the block is X, X^) but the root is not a lone axiom
    s = mk_cut_orphan()
    assert apply_mell(s, parse_step("ax@1")) == []
    with pytest.raises(TypecheckError):
        apply_mell(mk_two_axioms(), parse_step("ax@1"))


def test_apply_tensor_exposes_premises():
    s = mk_tensor_of_ones()
    (res,) = apply_mell(s, parse_step("tensor@1"))
    assert_valid(res)
    assert type_of(res) == pc("1, 1")
    assert sorted(res.label.values()) == ["one", "one"]


def test_apply_der_blocked_by_border_crossing():
    b = StructureBuilder()
    b.node("r")
    b.node("b", "r")
    b.cell("u", "bot", "b", outputs=[bot])
    b.cell("w", "why", "r", inputs=[bot], outputs=[pf("?bot")])
    b.wire("u.o0", "w.i0")
    b.conclude("w.o0")
    s = b.build()
    assert apply_mell(s, parse_step("der@1")) == []


def test_apply_der_same_level_applies():
    b = StructureBuilder()
    b.node("r")
    b.cell("u", "bot", "r", outputs=[bot])
    b.cell("w", "why", "r", inputs=[bot], outputs=[pf("?bot")])
    b.wire("u.o0", "w.i0")
    b.conclude("w.o0")
    (res,) = apply_mell(b.build(), parse_step("der@1"))
    assert type_of(res) == pc("bot")
    assert list(res.label.values()) == ["bot"]


def test_apply_cut_matches_by_formula():
    b = StructureBuilder()
    b.node("r")
    b.cell("a1", "ax", "r", outputs=[covar("X"), var("X")])
    b.cell("a2", "ax", "r", outputs=[var("X"), covar("X")])
    b.cell("cx", "cut", "r", inputs=[var("X"), covar("X")])
    b.wire("a1.o1", "cx.i0")
    b.wire("a2.o1", "cx.i1")
    b.cell("u", "one", "r", outputs=[one])
    b.cell("v", "bot", "r", outputs=[bot])
    b.cell("c1", "cut", "r", inputs=[one, bot])
    b.wire("u.o0", "c1.i0")
    b.wire("v.o0", "c1.i1")
    b.conclude("a1.o0", "a2.o0")
    s = b.build()
    assert_valid(s)

    res = apply_mell(s, parse_step("cut@3{1}"))
    assert len(res) == 1
    assert type_of(res[0]) == pc("X^, X, 1, bot")

    res = apply_mell(s, parse_step("cut@3{X}"))
    assert len(res) == 1
    assert type_of(res[0]) == pc("X^, X, X, X^")

    assert apply_mell(s, parse_step("cut@3{Y}")) == []


def test_apply_contr_enumerates_splits():
    s = mk_contr_candidate(3)
    res = apply_mell(s, parse_step("contr@1"))
    # splits (1,2) and (2,1); same-size splits collapse up to iso
    assert len(res) == 2
    arities = sorted(
        tuple(
            len(r.inputs(r.cell_of_conclusion(i)))
            for i in (1, 2)
        )
        for r in res
    )
    assert arities == [(1, 2), (2, 1)]
    for r in res:
        assert type_of(r) == pc("?1, ?1")
        assert compare_measures(size_measure(s), size_measure(r)) == 1


def test_apply_contr_annotation_pins_split():
    s = mk_contr_candidate(3)
    res = apply_mell(s, parse_step("contr@1(0,1)"))
    assert len(res) == 1
    assert len(res[0].inputs(res[0].cell_of_conclusion(1))) == 1
    assert apply_mell(s, parse_step("contr@1(3,3)")) == []


def test_apply_contr_needs_two_premises():
    s = mk_contr_candidate(1)
    assert apply_mell(s, parse_step("contr@1")) == []


def test_apply_contr_daimon_atomic_splits_output():
    s = mk_daimon([pf("?1")])
    (res,) = apply_mell(s, parse_step("contr@1"))
    assert type_of(res) == pc("?1, ?1")
    assert list(res.label.values()) == ["dai"]


def test_apply_contr_daimon_eta_wraps():
    s = mk_daimon([pf("?1")])
    (res,) = apply_mell(s, parse_step("contr@1"), mode="eta")
    assert type_of(res) == pc("?1, ?1")
    assert sorted(res.label.values()) == ["dai", "why", "why"]
    assert daimon_pattern(res, res.roots_in_order()[0]) == {0, 1}


def test_apply_mix_splits_between_pieces():
    s = mk_two_axioms()
    res = apply_mell(s, parse_step("mix@2"))
    assert len(res) == 1
    assert type_of(res[0]) == pc("X, X^; Y, Y^")
    assert len(res[0].forest.roots()) == 2
    assert apply_mell(s, parse_step("mix@1")) == []
    assert apply_mell(s, parse_step("mix@3")) == []


def test_apply_mix_enumerates_orphan_sides():
    s = mk_cut_orphan()
    b = StructureBuilder()
    b.node("r")
    b.cell("a", "ax", "r", outputs=[var("X"), covar("X")])
    b.cell("a2", "ax", "r", outputs=[var("Y"), covar("Y")])
    b.cell("u", "one", "r", outputs=[one])
    b.cell("v", "bot", "r", outputs=[bot])
    b.cell("c", "cut", "r", inputs=[one, bot])
    b.wire("u.o0", "c.i0")
    b.wire("v.o0", "c.i1")
    b.conclude("a.o0", "a.o1", "a2.o0", "a2.o1")
    s = b.build()
    res = apply_mell(s, parse_step("mix@2"))
    assert len(res) == 2
    piece_counts = sorted(
        tuple(len(r.pieces(x)) for x in r.roots_in_order()) for r in res
    )
    assert piece_counts == [(1, 2), (2, 1)]


def test_apply_mix_does_not_split_mell_daimon():
    s = mk_daimon([one, bot])
    assert apply_mell(s, parse_step("mix@1")) == []


def test_apply_box_opens_and_dissolves():
    s = mk_box_of_one()
    (res,) = apply_mell(s, parse_step("box@1"))
    assert_valid(res)
    assert type_of(res) == pc("1")
    assert list(res.label.values()) == ["one"]
    assert len(res.forest.nodes) == 1


def test_apply_box_keeps_aux_doors():
    s = mk_box_with_aux()
    (res,) = apply_mell(s, parse_step("box@2"))
    assert_valid(res)
    assert type_of(res) == pc("?bot, 1")
    w = res.cell_of_conclusion(1)
    assert res.label[w] == "why"
    assert res.crossing_depth(res.inputs(w)[0]) == 0


def test_apply_box_blocked_by_second_box():
    b = StructureBuilder()
    b.node("r")
    b.node("b1", "r")
    b.node("b2", "r")
    b.cell("u1", "one", "b1", outputs=[one])
    b.cell("g", "ofc", "r", inputs=[one], outputs=[pf("!1")])
    b.wire("u1.o0", "g.i0")
    b.cell("u2", "bot", "b2", outputs=[bot])
    b.cell("w", "why", "r", inputs=[bot], outputs=[pf("?bot")])
    b.wire("u2.o0", "w.i0")
    b.conclude("w.o0", "g.o0")
    s = b.build()
    assert apply_mell(s, parse_step("box@2")) == []


def test_exchange_prefix_minimal():
    assert exchange_prefix(1, [True, True]) == []
    steps = exchange_prefix(1, [False, True, False, True])
    assert [s.index for s in steps] == [1, 3, 2]


# -- reverse mell ------------------------------------------------------


def test_reverse_cut_inserts_cell_over_block_end():
    b = StructureBuilder()
    b.node("r")
    b.cell("u", "one", "r", outputs=[one])
    b.cell("a", "ax", "r", outputs=[var("X"), covar("X")])
    b.conclude("u.o0", "a.o0", "a.o1")
    sp = b.build()
    res = reverse_mell(sp, parse_step("cut@2{X}"))
    assert_valid(res)
    assert type_of(res) == pc("1")
    assert sorted(res.label.values()) == ["ax", "cut", "one"]
    back = apply_mell(res, parse_step("cut@2{X}"))
    assert any(structure_iso(x, sp) for x in back)


def test_reverse_mix_merges_roots():
    sp = apply_mell(mk_two_axioms(), parse_step("mix@2"))[0]
    res = reverse_mell(sp, parse_step("mix@2"))
    assert structure_iso(res, mk_two_axioms())


def test_reverse_hypothesis_needs_source():
    empty = StructureBuilder().build()
    with pytest.raises(ReverseError):
        reverse_mell(empty, parse_step("ax@1"))
    res = reverse_mell(empty, parse_step("ax@1"), pc("Y, Y^"))
    assert structure_iso(res, mk_axiom("Y"))
    assert type_of(res) == pc("Y, Y^")


def test_reverse_one_checks_block_boundary():
    s = mk_axiom()
    res = reverse_mell(s, parse_step("one@3"))
    assert type_of(res) == pc("X, X^; 1")
    with pytest.raises(ReverseError):
        reverse_mell(s, parse_step("one@2"))


def test_reverse_contr_merges_why_cells():
    sp_pool = apply_mell(mk_contr_candidate(3), parse_step("contr@1"))
    for sp in sp_pool:
        res = reverse_mell(sp, parse_step("contr@1"))
        assert structure_iso(res, mk_contr_candidate(3))


def test_reverse_contr_shrinks_single_daimon():
    sp = mk_daimon([pf("?1"), pf("?1")])
    res = reverse_mell(sp, parse_step("contr@1"))
    assert structure_iso(res, mk_daimon([pf("?1")]))


def test_reverse_contr_rejects_two_daimons():
    b = StructureBuilder()
    b.node("r")
    b.cell("d1", "dai", "r", outputs=[pf("?bot")])
    b.cell("d2", "dai", "r", outputs=[pf("?bot")])
    b.conclude("d1.o0", "d2.o0")
    with pytest.raises(ReverseError):
        reverse_mell(b.build(), parse_step("contr@1"))


def test_reverse_box_rewraps():
    s = mk_box_with_aux()
    (sp,) = apply_mell(s, parse_step("box@2"))
    res = reverse_mell(sp, parse_step("box@2"))
    assert structure_iso(res, s)


def test_reverse_box_needs_why_borders():
    sp = mk_daimon([pf("?bot"), one])
    with pytest.raises(ReverseError):
        reverse_mell(sp, parse_step("box@2"))


def roundtrip_cases():
    sq = [
        (mk_axiom(), "ax@1", pc("X, X^")),
        (mk_daimon([one, bot]), "dai@2", pc("1, bot")),
        (mk_tensor_of_ones(), "tensor@1", None),
        (mk_contr_candidate(2), "contr@1", None),
        (mk_contr_candidate(1), "der@1", None),
        (mk_box_with_aux(), "box@2", None),
        (mk_two_axioms(), "mix@2", None),
        (mk_two_axioms(), "exc@2", None),
        (mk_daimon([pf("?X")]), "contr@1", None),
    ]
    b = StructureBuilder()
    b.node("r")
    b.cell("u", "one", "r", outputs=[one])
    sb = b
    sb.conclude("u.o0")
    sq.append((sb.build(), "one@1", pc("1")))
    return sq


def test_forward_then_reverse_identity():
    for s, tok, src in roundtrip_cases():
        step = parse_step(tok)
        src = src if src is not None else type_of(s)
        for sp in apply_mell(s, step):
            back = reverse_mell(sp, step, src)
            assert structure_iso(back, s), f"{tok} failed round trip"


def test_reverse_then_forward_containment():
    for s, tok, src in roundtrip_cases():
        step = parse_step(tok)
        src = src if src is not None else type_of(s)
        for sp in apply_mell(s, step):
            back = reverse_mell(sp, step, src)
            again = apply_mell(back, step)
            assert any(structure_iso(sp, x) for x in again), tok


# -- resource side -----------------------------------------------------


def test_dill_contr_daimon_grows_block():
    pi = [mk_daimon([pf("?bot")])]
    res = apply_dill_set(pi, parse_step("contr@1"))
    assert len(res) == 1
    (out,) = res[0]
    assert structure_iso(out, mk_daimon([pf("?bot"), pf("?bot")]))


def test_dill_contr_concrete_allows_empty_sides():
    s = mk_contr_candidate(1)
    branches = apply_dill(s, parse_step("contr@1"))
    assert len(branches) == 2
    arities = sorted(
        tuple(len(b[0].inputs(b[0].cell_of_conclusion(i))) for i in (1, 2))
        for b in branches
    )
    assert arities == [(0, 1), (1, 0)]


def test_dill_hypothesis_on_daimon_block():
    pi = [mk_daimon([one])]
    res = apply_dill_set(pi, parse_step("one@1"))
    assert len(res) == 1
    assert len(res[0]) == 1 and res[0][0].is_empty()


def test_dill_blocked_element_yields_no_successor():
    b = StructureBuilder()
    b.node("r")
    b.cell("a", "ax", "r", outputs=[pf("?1"), pf("!bot")])
    b.conclude("a.o0", "a.o1")
    pi = [b.build()]
    assert apply_dill_set(pi, parse_step("contr@1")) == []


def test_dill_cut_attaches_to_daimon():
    pi = [mk_daimon([one])]
    res = apply_dill_set(pi, parse_step("cut@2{X}"))
    assert len(res) == 1
    (out,) = res[0]
    assert structure_iso(out, mk_daimon([one, var("X"), covar("X")]))


def test_dill_cut_daimon_choice_and_enumeration():
    b = StructureBuilder()
    b.node("r")
    b.cell("d1", "dai", "r", outputs=[one])
    b.cell("d2", "dai", "r", outputs=[bot])
    b.conclude("d1.o0", "d2.o0")
    s = b.build()
    step = parse_step("cut@3{X}")
    default = apply_dill(s, step)
    assert len(default) == 1
    grown = default[0][0]
    d = grown.cell_of_conclusion(3)
    assert grown.color[grown.outputs(d)[0]] == one  # leftmost daimon took it
    everything = apply_dill(s, step, enumerate_daimon=True)
    assert len(everything) == 2


def test_dill_mix_splits_daimon():
    s = mk_daimon([one, bot])
    branches = apply_dill(s, parse_step("mix@1"))
    assert len(branches) == 1
    (out,) = branches[0]
    assert len(out.forest.roots()) == 2
    assert sorted(out.label.values()) == ["dai", "dai"]
    assert type_of(out) == pc("1; bot")


def test_dill_mix_daimon_wrappers_follow_sides():
    b = StructureBuilder()
    b.node("r")
    b.cell("d", "dai", "r", outputs=[one, bot])
    b.cell("w", "why", "r", inputs=[bot], outputs=[pf("?bot")])
    b.wire("d.o1", "w.i0")
    b.conclude("d.o0", "w.o0")
    s = b.build()
    branches = apply_dill(s, parse_step("mix@1"))
    assert len(branches) == 1
    (out,) = branches[0]
    assert type_of(out) == pc("1; ?bot")
    r2 = out.roots_in_order()[1]
    labels = sorted(out.label[v] for v in out.graph.vertices
                    if out.root_of_vertex(v) == r2)
    assert labels == ["dai", "why"]


def test_dill_der_retypes_daimon_output():
    s = mk_daimon([pf("?X")])
    branches = apply_dill(s, parse_step("der@1"))
    assert len(branches) == 1
    assert type_of(branches[0][0]) == pc("X")


def test_dill_empty_box_creates_daimon():
    b = StructureBuilder()
    b.node("r")
    b.cell("w", "why", "r", outputs=[pf("?bot")])
    b.cell("g", "ofc", "r", outputs=[pf("!1")])
    b.conclude("w.o0", "g.o0")
    s = b.build()
    branches = apply_dill(s, parse_step("box@2"))
    assert len(branches) == 1
    (out,) = branches[0]
    assert list(out.label.values()) == ["dai"]
    assert type_of(out) == pc("?bot, 1")


def test_dill_daimoned_box_retypes():
    s = mk_daimon([pf("?bot"), pf("!1")])
    branches = apply_dill(s, parse_step("box@2"))
    assert len(branches) == 1
    (out,) = branches[0]
    assert type_of(out) == pc("?bot, 1")
    assert list(out.label.values()) == ["dai"]


def test_dill_nonempty_box_partitions_borders():
    b = StructureBuilder()
    b.node("r")
    b.cell("d1", "dai", "r", outputs=[var("X"), covar("X"), covar("X")])
    b.cell("a2", "ax", "r", outputs=[covar("X"), var("X")])
    b.cell("g", "ofc", "r", inputs=[var("X"), var("X")], outputs=[pf("!X")])
    b.cell(
        "w", "why", "r",
        inputs=[covar("X"), covar("X"), covar("X")],
        outputs=[pf("?X^")],
    )
    b.wire("d1.o0", "g.i0")
    b.wire("a2.o1", "g.i1")
    b.wire("d1.o1", "w.i0")
    b.wire("d1.o2", "w.i1")
    b.wire("a2.o0", "w.i2")
    b.conclude("w.o0", "g.o0")
    s = b.build()
    branches = apply_dill(s, parse_step("box@2"))
    assert len(branches) == 1
    copies = branches[0]
    assert len(copies) == 2
    assert all(type_of(c) == pc("?X^, X") for c in copies)
    shapes = sorted(
        (sorted(c.label.values()), len(c.inputs(c.cell_of_conclusion(1))))
        for c in copies
    )
    assert shapes == [(["ax", "why"], 1), (["dai", "why"], 2)]


def test_dill_nonempty_box_iso_copies_collapse():
    # identical copies land in the same set, which keeps one of them
    b = StructureBuilder()
    b.node("r")
    b.cell("a1", "ax", "r", outputs=[covar("X"), var("X")])
    b.cell("a2", "ax", "r", outputs=[covar("X"), var("X")])
    b.cell("g", "ofc", "r", inputs=[var("X"), var("X")], outputs=[pf("!X")])
    b.cell("w", "why", "r", inputs=[covar("X"), covar("X")], outputs=[pf("?X^")])
    b.wire("a1.o1", "g.i0")
    b.wire("a2.o1", "g.i1")
    b.wire("a1.o0", "w.i0")
    b.wire("a2.o0", "w.i1")
    b.conclude("w.o0", "g.o0")
    s = b.build()
    branches = apply_dill(s, parse_step("box@2"))
    assert len(branches) == 1
    assert len(branches[0]) == 1
    assert sorted(branches[0][0].label.values()) == ["ax", "why"]


def test_dill_nonempty_box_enumerates_orphans():
    b = StructureBuilder()
    b.node("r")
    b.cell("u1", "one", "r", outputs=[one])
    b.cell("u2", "one", "r", outputs=[one])
    b.cell("g", "ofc", "r", inputs=[one, one], outputs=[pf("!1")])
    b.wire("u1.o0", "g.i0")
    b.wire("u2.o0", "g.i1")
    b.cell("x1", "bot", "r", outputs=[bot])
    b.cell("x2", "bot", "r", outputs=[bot])
    b.cell("c", "cut", "r", inputs=[bot, one])
    b.cell("u3", "one", "r", outputs=[one])
    b.wire("x1.o0", "c.i0")
    b.wire("u3.o0", "c.i1")
    b.cell("w", "why", "r", inputs=[bot], outputs=[pf("?bot")])
    b.wire("x2.o0", "w.i0")
    b.conclude("w.o0", "g.o0")
    s = b.build()
    branches = apply_dill(s, parse_step("box@2"))
    # the cut piece and the lone bot feeding w are orphans; up to iso the
    # choices collapse to both-in-one-copy vs one-each
    assert len(branches) == 2
    sizes = sorted(sorted(len(c.label) for c in copies) for copies in branches)
    assert sizes == [[2, 6], [3, 5]]
    for copies in branches:
        assert len(copies) == 2
        assert all(type_of(c) == pc("?bot, 1") for c in copies)


def test_dill_set_combines_branches_per_element():
    b = StructureBuilder()
    b.node("r")
    b.cell("u", "one", "r", outputs=[one])
    b.cell("w", "why", "r", inputs=[one], outputs=[pf("?1")])
    b.wire("u.o0", "w.i0")
    b.conclude("w.o0")
    pi = [mk_daimon([pf("?1")]), b.build()]
    res = apply_dill_set(pi, parse_step("contr@1"))
    assert len(res) == 2
    assert all(len(ss) == 2 for ss in res)


# -- termination -------------------------------------------------------


def replay_first(s, path):
    cur = s
    trace = [cur]
    for step in path:
        nxt = apply_mell(cur, step)
        assert nxt, f"{step} got stuck"
        cur = nxt[0]
        trace.append(cur)
    return trace


def assert_descent(trace, path):
    for n, step in enumerate(path):
        cmp = compare_measures(size_measure(trace[n]), size_measure(trace[n + 1]))
        if step.kind in ("exc", "mix"):
            assert cmp == 0, f"{step} changed the measure"
        else:
            assert cmp == 1, f"{step} did not decrease the measure"


def mk_worked_structure():
    b = StructureBuilder()
    b.node("r")
    b.cell("a1", "ax", "r", outputs=[var("X"), covar("X")])
    b.cell("a2", "ax", "r", outputs=[covar("Y"), var("Y")])
    b.cell("a3", "ax", "r", outputs=[covar("Z"), var("Z")])
    b.cell("t1", "tensor", "r", inputs=[var("X"), covar("Y")], outputs=[pf("(X*Y^)")])
    b.wire("a1.o0", "t1.i0")
    b.wire("a2.o0", "t1.i1")
    b.cell("t2", "tensor", "r", inputs=[var("Y"), covar("Z")], outputs=[pf("(Y*Z^)")])
    b.wire("a2.o1", "t2.i0")
    b.wire("a3.o0", "t2.i1")
    b.cell("p1", "par", "r", inputs=[covar("X"), var("Z")], outputs=[pf("(X^|Z)")])
    b.wire("a1.o1", "p1.i0")
    b.wire("a3.o1", "p1.i1")
    b.cell(
        "p2", "par", "r",
        inputs=[pf("(Y*Z^)"), pf("(X^|Z)")],
        outputs=[pf("((Y*Z^)|(X^|Z))")],
    )
    b.wire("t2.o0", "p2.i0")
    b.wire("p1.o0", "p2.i1")
    b.cell(
        "p3", "par", "r",
        inputs=[pf("(X*Y^)"), pf("((Y*Z^)|(X^|Z))")],
        outputs=[pf(WORKED_SOURCE)],
    )
    b.wire("t1.o0", "p3.i0")
    b.wire("p2.o0", "p3.i1")
    b.conclude("p3.o0")
    return b.build()


def test_worked_structure_checks_out():
    s = mk_worked_structure()
    assert_valid(s, "mell")
    assert type_of(s) == pc(WORKED_SOURCE)


def test_termination_on_empty():
    path = find_termination_path(StructureBuilder().build())
    assert len(path) == 0


def test_termination_worked_structure():
    s = mk_worked_structure()
    path = find_termination_path(s)
    trace = replay_first(s, path)
    assert trace[-1].is_empty()
    assert_descent(trace, list(path))


def test_termination_boxes_and_orphans():
    for s in [mk_box_of_one(), mk_box_with_aux(), mk_cut_orphan(),
              mk_daimon([one, bot])]:
        path = find_termination_path(s)
        trace = replay_first(s, path)
        assert trace[-1].is_empty()
        assert_descent(trace, list(path))


def test_termination_two_daimons_one_root():
    b = StructureBuilder()
    b.node("r")
    b.cell("d1", "dai", "r", outputs=[pf("?bot")])
    b.cell("d2", "dai", "r", outputs=[pf("?bot")])
    b.conclude("d1.o0", "d2.o0")
    s = b.build()
    path = find_termination_path(s)
    trace = replay_first(s, path)
    assert trace[-1].is_empty()
    assert_descent(trace, list(path))


def test_termination_random_corpus_small():
    for seed in range(12):
        s = random_mell(seed, steps=8, max_cells=10)
        assert_valid(s)
        path = find_termination_path(s)
        trace = replay_first(s, path)
        assert trace[-1].is_empty()
        assert_descent(trace, list(path))
