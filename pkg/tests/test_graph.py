import pytest

from gluon.graph import (
    ClosureGraph,
    GraphBuildError,
    GraphMorphism,
    RootedForest,
    build_graph,
    closure,
    components,
    find_isomorphism,
    pullback,
)


def mk_chain():
    # a -- b -- c with one tail on a
    return build_graph(
        ["a", "b", "c"],
        ["t", "f1", "f2", "f3", "f4"],
        {"t": "a", "f1": "a", "f2": "b", "f3": "b", "f4": "c"},
        {"t": None, "f1": "f2", "f2": "f1", "f3": "f4", "f4": "f3"},
    )


def test_build_and_queries():
    g = mk_chain()
    assert g.tails() == ["t"]
    assert g.edges() == {frozenset({"f1", "f2"}), frozenset({"f3", "f4"})}
    assert g.flags_at("b") == ["f2", "f3"]


def test_build_errors():
    with pytest.raises(GraphBuildError):
        build_graph(["a"], ["f"], {"f": "zz"}, {"f": None})
    with pytest.raises(GraphBuildError):
        build_graph(["a"], ["f"], {"f": "a"}, {"f": "f"})
    with pytest.raises(GraphBuildError):
        build_graph(
            ["a"],
            ["f", "g"],
            {"f": "a", "g": "a"},
            {"f": "g", "g": None},
        )
    with pytest.raises(GraphBuildError):
        build_graph(["a"], ["f"], {}, {"f": None})


def test_components():
    g = build_graph(
        ["a", "b", "c"],
        ["f1", "f2"],
        {"f1": "a", "f2": "b"},
        {"f1": "f2", "f2": "f1"},
    )
    assert components(g) == [{"a", "b"}, {"c"}]


def test_forest_basics():
    f = RootedForest(
        {"r", "b1", "b2", "b21"},
        {"r": None, "b1": "r", "b2": "r", "b21": "b2"},
    )
    assert f.roots() == ["r"]
    assert f.children("r") == ["b1", "b2"]
    assert f.root_of("b21") == "r"
    assert f.depth("b21") == 2
    assert f.ancestors("b21") == ["b2", "r"]
    assert f.path_up("b21", "r") == ["b21", "b2", "r"]
    assert f.path_up("b1", "b2") is None
    assert f.descendants("b2") == {"b2", "b21"}


def test_forest_cycle_detection():
    with pytest.raises(GraphBuildError):
        RootedForest({"a", "b"}, {"a": "b", "b": "a"})


def test_closure_shape():
    f = RootedForest({"r", "b"}, {"r": None, "b": "r"})
    cl = closure(f)
    g = cl.graph
    # loops at r and b, the path edge b->r, one root tail
    assert len(g.vertices) == 2
    assert len(g.edges()) == 3
    assert g.tails() == [cl.root_tail("r")]
    lo, hi = cl.path_flags("b", "r")
    assert g.boundary[lo] == "b" and g.boundary[hi] == "r"
    assert cl.path_flags("b", "b") == cl.loop("b")
    with pytest.raises(KeyError):
        cl.path_flags("r", "b")


def test_closure_deep_paths():
    f = RootedForest(
        {"r", "b", "c"}, {"r": None, "b": "r", "c": "b"}
    )
    cl = closure(f)
    # paths: c->b, c->r, b->r plus 3 loops
    assert len(cl.graph.edges()) == 6


def identity_morphism(g):
    return GraphMorphism(
        g, g, {v: v for v in g.vertices}, {f: f for f in g.flags}
    )


def test_morphism_check():
    g = mk_chain()
    m = identity_morphism(g)
    m.check()
    bad = GraphMorphism(g, g, {v: v for v in g.vertices}, dict(m.fmap))
    bad.fmap["f1"] = "f3"
    with pytest.raises(GraphBuildError):
        bad.check()


def test_pullback_identity():
    # pulling back along the identity gives the graph back
    g = mk_chain()
    pb, pairs = pullback(identity_morphism(g), identity_morphism(g))
    # diagonal pairs only would be the iso image; the full pullback also
    # contains off-diagonal vertices when images coincide, which for the
    # identity cospan means exactly the diagonal
    assert len(pb.vertices) == len(g.vertices)
    assert len(pb.flags) == len(g.flags)
    assert len(pb.edges()) == len(g.edges())
    assert len(pb.tails()) == len(g.tails())


def test_pullback_two_copies():
    # C: one vertex with a loop; A: one vertex with a loop; B: two
    # vertices each with a loop, all mapping to C.  The pullback has
    # 2 vertices and 2 loops: the fiber product counts pairs.
    def loop_graph(name, n):
        vs = [f"{name}{i}" for i in range(n)]
        fl, bd, pr = [], {}, {}
        for v in vs:
            a, b = f"{v}lo", f"{v}hi"
            fl += [a, b]
            bd[a] = bd[b] = v
            pr[a] = b
            pr[b] = a
        return build_graph(vs, fl, bd, pr)

    c = loop_graph("c", 1)
    a = loop_graph("a", 1)
    b = loop_graph("b", 2)
    fa = GraphMorphism(a, c, {"a0": "c0"}, {"a0lo": "c0lo", "a0hi": "c0hi"})
    fb = GraphMorphism(
        b,
        c,
        {"b0": "c0", "b1": "c0"},
        {"b0lo": "c0lo", "b0hi": "c0hi", "b1lo": "c0lo", "b1hi": "c0hi"},
    )
    fa.check()
    fb.check()
    pb, pairs = pullback(fa, fb)
    assert len(pb.vertices) == 2
    assert len(pb.edges()) == 2
    assert not pb.tails()


def test_pullback_tail_against_edge():
    # a tail in one leg meeting an edge in the other produces an edge
    # with both halves over the tail
    c = build_graph(["c"], ["ct"], {"ct": "c"}, {"ct": None})
    a = build_graph(["a"], ["at"], {"at": "a"}, {"at": None})
    b = build_graph(
        ["b1", "b2"],
        ["x", "y"],
        {"x": "b1", "y": "b2"},
        {"x": "y", "y": "x"},
    )
    fa = GraphMorphism(a, c, {"a": "c"}, {"at": "ct"})
    fb = GraphMorphism(b, c, {"b1": "c", "b2": "c"}, {"x": "ct", "y": "ct"})
    fa.check()
    fb.check()
    pb, pairs = pullback(fa, fb)
    assert len(pb.vertices) == 2
    assert len(pb.edges()) == 1
    assert not pb.tails()


def trivial_keys():
    return (lambda g, v: 0), (lambda g, f: (g.partner[f] is None))


def test_iso_chain_to_itself():
    g = mk_chain()
    h = build_graph(
        ["u", "v", "w"],
        ["s", "g1", "g2", "g3", "g4"],
        {"s": "u", "g1": "u", "g2": "v", "g3": "v", "g4": "w"},
        {"s": None, "g1": "g2", "g2": "g1", "g3": "g4", "g4": "g3"},
    )
    vk, fk = trivial_keys()
    res = find_isomorphism(g, h, vk, fk)
    assert res is not None
    vmap, fmap = res
    assert vmap["a"] == "u" and vmap["c"] == "w"
    assert fmap["t"] == "s"


def test_iso_respects_counts():
    g = mk_chain()
    h = build_graph(["u"], ["s"], {"s": "u"}, {"s": None})
    vk, fk = trivial_keys()
    assert find_isomorphism(g, h, vk, fk) is None


def test_iso_vertex_key_blocks():
    g = build_graph(["a"], [], {}, {})
    h = build_graph(["b"], [], {}, {})
    assert find_isomorphism(g, h, lambda G, v: v, lambda G, f: 0) is None
    assert (
        find_isomorphism(g, h, lambda G, v: 0, lambda G, f: 0) is not None
    )


def test_iso_ordered_flags():
    # two vertices joined to a middle vertex; with order constraints the
    # two tails on the middle cannot swap
    def two_tail(name):
        return build_graph(
            [name],
            [f"{name}1", f"{name}2"],
            {f"{name}1": name, f"{name}2": name},
            {f"{name}1": None, f"{name}2": None},
        )

    g = two_tail("a")
    h = two_tail("b")
    vk = lambda G, v: 0
    fk = lambda G, f: 0
    res = find_isomorphism(
        g, h, vk, fk, ordered_flags=lambda G, v: G.flags_at(v)
    )
    assert res is not None
    _, fmap = res
    assert fmap == {"a1": "b1", "a2": "b2"}
