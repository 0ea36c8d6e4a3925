"""Command-line driver, JSON interchange documents, and DOT export.

Documents are canonical: arrays sorted by id, fixed field order, one
trailing newline, so checked-in fixtures diff cleanly.  The box data
(vertex placement, edge paths, conclusion roots) is stored explicitly
and re-derived on load; any disagreement is a schema error.  That keeps
malformed documents representable, which the negative tests rely on.

Exit codes: 0 for success or a true answer, 1 for a false answer or
nothing found within the bound, 2 for input errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from .formula import (
    FormulaSyntaxError,
    format_context,
    format_formula,
    parse_context,
    parse_formula,
)
from .glue import (
    CertificationError,
    GlueConfig,
    GlueError,
    Glueable,
    NotWithinBound,
    check_naturality_square,
    glueability_search,
    reconstruct_and_certify,
)
from .graph import GraphBuildError, RootedForest, build_graph
from .rewrite import (
    RewritePath,
    StepError,
    apply_dill_set,
    apply_mell,
    context_trace,
    dedup_sets,
    dedup_structures,
    find_termination_path,
    format_path,
    parse_path,
    reverse_mell,
    typecheck_path,
    ReverseError,
)
from .structure import (
    Structure,
    fresh_id,
    structure_iso,
    type_of,
    validate_classify,
)
from .taylor import emptyings, expand, is_filled_member, is_taylor_member


class SchemaError(ValueError):
    """Malformed document; the message names the offending path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# -- JSON documents ----------------------------------------------------


def to_document(s: Structure) -> dict:
    verts = [{"id": v, "label": s.label[v]} for v in sorted(s.graph.vertices)]
    flags = [
        {
            "id": f,
            "vertex": s.graph.boundary[f],
            "type": format_formula(s.color[f]),
            "orient": s.orient[f],
            "partner": s.graph.partner.get(f),
        }
        for f in sorted(s.graph.flags)
    ]
    nodes = [{"id": n, "parent": s.forest.parent[n]}
             for n in sorted(s.forest.nodes)]
    edges = {}
    for f in sorted(s.graph.flags):
        g = s.graph.partner.get(f)
        if g is not None and f < g:
            edges[f] = s.edge_path(f) or []
    concl = {
        f: s.root_of_vertex(s.graph.boundary[f]) for f in s.conclusions()
    }
    return {
        "mode": "structure",
        "structure": {
            "vertices": verts,
            "flags": flags,
            "order": list(s.order),
        },
        "forest": {"nodes": nodes},
        "box": {
            "vertices": {v: s.vmap[v] for v in sorted(s.vmap)},
            "edges": edges,
            "conclusions": concl,
        },
    }


def to_set_document(elems) -> dict:
    return {"mode": "set", "elements": [to_document(s) for s in elems]}


def _need(obj, key, typ, path):
    if not isinstance(obj, dict):
        raise SchemaError(path, f"expected an object, got {type(obj).__name__}")
    if key not in obj:
        raise SchemaError(f"{path}.{key}", "missing")
    val = obj[key]
    if typ is not None and not isinstance(val, typ):
        raise SchemaError(
            f"{path}.{key}",
            f"expected {typ.__name__}, got {type(val).__name__}",
        )
    return val


def _no_extras(obj, keys, path):
    extra = set(obj) - set(keys)
    if extra:
        raise SchemaError(path, f"unknown keys {sorted(extra)}")


def from_document(doc, path: str = "$") -> Structure:
    if not isinstance(doc, dict):
        raise SchemaError(path, "expected an object")
    mode = _need(doc, "mode", str, path)
    if mode != "structure":
        raise SchemaError(f"{path}.mode", f"expected 'structure', got {mode!r}")
    _no_extras(doc, ("mode", "structure", "forest", "box"), path)
    st = _need(doc, "structure", dict, path)
    _no_extras(st, ("vertices", "flags", "order"), f"{path}.structure")

    label: dict[str, str] = {}
    for n, v in enumerate(_need(st, "vertices", list, f"{path}.structure")):
        p = f"{path}.structure.vertices[{n}]"
        vid = _need(v, "id", str, p)
        _no_extras(v, ("id", "label"), p)
        if vid in label:
            raise SchemaError(p, f"duplicate vertex id {vid!r}")
        label[vid] = _need(v, "label", str, p)

    color = {}
    orient = {}
    boundary = {}
    partner = {}
    for n, f in enumerate(_need(st, "flags", list, f"{path}.structure")):
        p = f"{path}.structure.flags[{n}]"
        fid = _need(f, "id", str, p)
        _no_extras(f, ("id", "vertex", "type", "orient", "partner"), p)
        if fid in boundary:
            raise SchemaError(p, f"duplicate flag id {fid!r}")
        boundary[fid] = _need(f, "vertex", str, p)
        try:
            color[fid] = parse_formula(_need(f, "type", str, p))
        except FormulaSyntaxError as e:
            raise SchemaError(f"{p}.type", str(e)) from e
        o = _need(f, "orient", str, p)
        if o not in ("in", "out"):
            raise SchemaError(f"{p}.orient", f"expected 'in' or 'out', got {o!r}")
        orient[fid] = o
        q = _need(f, "partner", (str, type(None)), p)
        partner[fid] = q

    order = _need(st, "order", list, f"{path}.structure")
    for n, fid in enumerate(order):
        if not isinstance(fid, str) or fid not in boundary:
            raise SchemaError(f"{path}.structure.order[{n}]",
                              f"unknown flag {fid!r}")
    if len(set(order)) != len(order) or len(order) != len(boundary):
        raise SchemaError(f"{path}.structure.order",
                          "must list every flag exactly once")

    fo = _need(doc, "forest", dict, path)
    _no_extras(fo, ("nodes",), f"{path}.forest")
    parent: dict[str, str | None] = {}
    for n, nd in enumerate(_need(fo, "nodes", list, f"{path}.forest")):
        p = f"{path}.forest.nodes[{n}]"
        nid = _need(nd, "id", str, p)
        _no_extras(nd, ("id", "parent"), p)
        if nid in parent:
            raise SchemaError(p, f"duplicate node id {nid!r}")
        parent[nid] = _need(nd, "parent", (str, type(None)), p)

    box = _need(doc, "box", dict, path)
    _no_extras(box, ("vertices", "edges", "conclusions"), f"{path}.box")
    vmap = _need(box, "vertices", dict, f"{path}.box")
    for v in label:
        if v not in vmap:
            raise SchemaError(f"{path}.box.vertices", f"vertex {v!r} unplaced")
    for v, nd in vmap.items():
        if v not in label:
            raise SchemaError(f"{path}.box.vertices", f"unknown vertex {v!r}")
        if nd not in parent:
            raise SchemaError(f"{path}.box.vertices",
                              f"vertex {v!r} placed at unknown node {nd!r}")

    try:
        g = build_graph(set(label), set(boundary), boundary, partner)
        forest = RootedForest(set(parent), dict(parent))
    except GraphBuildError as e:
        raise SchemaError(path, str(e)) from e

    s = Structure(g, label, color, orient, list(order), forest, dict(vmap))

    # the stored box data must agree with what the graph derives
    edges = _need(box, "edges", dict, f"{path}.box")
    derived = {}
    for f in sorted(g.flags):
        q = g.partner.get(f)
        if q is not None and f < q:
            derived[f] = s.edge_path(f) or []
    if edges != derived:
        for f in sorted(set(edges) ^ set(derived)):
            raise SchemaError(f"{path}.box.edges",
                              f"wrong representative set at {f!r}")
        for f in sorted(derived):
            if edges[f] != derived[f]:
                raise SchemaError(
                    f"{path}.box.edges",
                    f"path of {f!r} is {edges[f]!r}, expected {derived[f]!r}",
                )
    concl = _need(box, "conclusions", dict, f"{path}.box")
    want = {f: s.root_of_vertex(g.boundary[f]) for f in s.conclusions()}
    if concl != want:
        raise SchemaError(f"{path}.box.conclusions",
                          f"expected {want!r}, got {concl!r}")
    return s


def from_set_document(doc, path: str = "$") -> list[Structure]:
    if not isinstance(doc, dict):
        raise SchemaError(path, "expected an object")
    mode = _need(doc, "mode", str, path)
    if mode != "set":
        raise SchemaError(f"{path}.mode", f"expected 'set', got {mode!r}")
    _no_extras(doc, ("mode", "elements"), path)
    elems = [
        from_document(d, f"{path}.elements[{n}]")
        for n, d in enumerate(_need(doc, "elements", list, path))
    ]
    types = {type_of(s) for s in elems}
    if len(types) > 1:
        raise SchemaError(f"{path}.elements",
                          "elements are not all of the same type")
    return elems


def load_document(filename: str):
    """Parsed JSON from a file, dispatching on the mode tag."""
    with open(filename, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise SchemaError("$", f"not JSON: {e}") from e
    if not isinstance(doc, dict) or "mode" not in doc:
        raise SchemaError("$", "expected an object with a 'mode' tag")
    return doc


def _structure_arg(filename: str) -> Structure:
    doc = load_document(filename)
    return from_document(doc)


def _set_arg(filename: str) -> list[Structure]:
    doc = load_document(filename)
    return from_set_document(doc)


def _valid_structure(filename: str) -> Structure:
    s = _structure_arg(filename)
    rep = validate_classify(s)
    if not rep.ok:
        raise SchemaError("$", "invalid structure: " + "; ".join(rep.violations))
    return s


def _valid_set(filename: str) -> list[Structure]:
    elems = _set_arg(filename)
    for n, s in enumerate(elems):
        rep = validate_classify(s)
        if not rep.ok:
            raise SchemaError(f"$.elements[{n}]",
                              "invalid structure: " + "; ".join(rep.violations))
    return elems


# -- DOT export --------------------------------------------------------


def _q(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(s: Structure) -> str:
    """The structure as a digraph: cells are labeled nodes, box nesting
    is cluster nesting, each root region is an open dashed cluster, and
    conclusions hang below as plaintext anchors kept in order."""
    lines = ["digraph structure {", "  rankdir=TB;"]
    counter = [0]

    def cluster(node: str, depth: int):
        pad = "  " * (depth + 1)
        n = counter[0]
        counter[0] += 1
        lines.append(f"{pad}subgraph {_q(f'cluster_{n}')} {{")
        style = "dashed" if s.forest.parent[node] is None else "solid"
        lines.append(f"{pad}  style={style};")
        lines.append(f"{pad}  label={_q('')};")
        for v in s.cells_at_node(node):
            lines.append(f"{pad}  {_q(v)} [shape=box, label={_q(s.label[v])}];")
        for child in s.forest.children(node):
            cluster(child, depth + 1)
        lines.append(f"{pad}}}")

    for root in s.roots_in_order():
        cluster(root, 0)
    for f in sorted(s.graph.flags):
        g = s.graph.partner.get(f)
        if g is None or f >= g:
            continue
        a, b = (f, g) if s.orient[f] == "out" else (g, f)
        lines.append(
            f"  {_q(s.graph.boundary[a])} -> {_q(s.graph.boundary[b])};"
        )
    anchors = []
    taken = set(s.graph.vertices)
    for i, f in enumerate(s.conclusions(), start=1):
        a = fresh_id(f"concl_{i}", taken)
        taken.add(a)
        anchors.append(a)
        lines.append(
            f"  {_q(a)} [shape=plaintext, "
            f"label={_q(format_formula(s.color[f]))}];"
        )
        lines.append(f"  {_q(s.graph.boundary[f])} -> {_q(a)};")
    if anchors:
        lines.append("  { rank=sink; " + " ".join(
            f"{_q(a)};" for a in anchors) + " }")
        for a, b in zip(anchors, anchors[1:]):
            lines.append(f"  {_q(a)} -> {_q(b)} [style=invis];")
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- command helpers ---------------------------------------------------


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _thick_counts(thick) -> dict:
    counts: dict[str, int] = {}
    for n in thick.sigma.nodes:
        b = thick.h[n]
        counts[b] = counts.get(b, 0) + 1
    return dict(sorted(counts.items()))


def _taylor_witness_json(wit) -> list:
    return [
        {"root": rr, "element_root": er, "copies": _thick_counts(t)}
        for rr, er, t in wit.per_root
    ]


def _membership_json(flavor: str, wit) -> dict:
    if flavor == "taylor":
        return {"flavor": "taylor", "per_root": _taylor_witness_json(wit)}
    return {
        "flavor": flavor,
        "daimoned_roots": list(wit["daimoned"]),
        "members": [
            {"root_index": idx, "per_root": _taylor_witness_json(w)}
            for idx, w in wit["members"]
        ],
    }


def _variant(mode: str) -> str:
    return "eta" if mode == "eta" else "filled"


def _steps_arg(args) -> list:
    if not args.path:
        raise SchemaError("--path", "this command needs a path file")
    with open(args.path, encoding="utf-8") as fh:
        return parse_path(fh.read())


def _cut_pool(args):
    if not args.cuts:
        return None
    with open(args.cuts, encoding="utf-8") as fh:
        entries = json.load(fh)
    if not isinstance(entries, list):
        raise SchemaError("$", "cut pool file must hold a JSON array")
    return frozenset(parse_formula(str(e)) for e in entries)


# -- commands ----------------------------------------------------------


def _cmd_validate(args) -> int:
    doc = load_document(args.file)
    if doc.get("mode") == "set":
        elems = from_set_document(doc)
        reports = [validate_classify(s) for s in elems]
        _emit({
            "ok": all(r.ok for r in reports),
            "elements": [
                {"ok": r.ok, "classes": sorted(r.classes),
                 "violations": list(r.violations)}
                for r in reports
            ],
        })
        return 0 if all(r.ok for r in reports) else 1
    s = from_document(doc)
    rep = validate_classify(s)
    _emit({"ok": rep.ok, "classes": sorted(rep.classes),
           "violations": list(rep.violations)})
    return 0 if rep.ok else 1


def _cmd_taylor(args) -> int:
    s = _valid_structure(args.file)
    _emit(to_set_document(expand(s, args.copies)))
    return 0


def _cmd_member(args) -> int:
    rho = _valid_structure(args.element)
    s = _valid_structure(args.structure)
    wit = is_taylor_member(rho, s)
    if wit is not None:
        _emit({"member": True, **_membership_json("taylor", wit)})
        return 0
    variant = _variant(args.mode)
    filled = is_filled_member(rho, s, variant=variant)
    if filled is not None:
        _emit({"member": True, **_membership_json(variant, filled)})
        return 0
    _emit({"member": False})
    return 1


def _cmd_emptyings(args) -> int:
    s = _valid_structure(args.file)
    _emit(to_set_document(emptyings(s, variant=_variant(args.mode))))
    return 0


def _cmd_apply(args) -> int:
    steps = _steps_arg(args)
    doc = load_document(args.file)
    if doc.get("mode") == "set":
        elems = from_set_document(doc)
        if not elems:
            raise SchemaError("$.elements", "cannot rewrite an empty set")
        typecheck_path(steps, type_of(elems[0]))
        states = [elems]
        for step in steps:
            states = dedup_sets([
                nxt
                for st in states
                for nxt in apply_dill_set(st, step, mode=args.mode)
            ])
            if not states:
                _emit({"branches": []})
                return 1
        _emit({"branches": [to_set_document(st) for st in states]})
        return 0
    s = from_document(doc)
    rep = validate_classify(s)
    if not rep.ok:
        raise SchemaError("$", "invalid structure: " + "; ".join(rep.violations))
    typecheck_path(steps, type_of(s))
    results = [s]
    for step in steps:
        results = dedup_structures([
            r for cur in results for r in apply_mell(cur, step, mode=args.mode)
        ])
        if not results:
            _emit({"results": []})
            return 1
    _emit({"results": [to_document(r) for r in results]})
    return 0


def _cmd_reverse(args) -> int:
    steps = _steps_arg(args)
    if args.source is None:
        raise SchemaError("--source", "reverse needs the path's source type")
    source = parse_context(args.source)
    trace = context_trace(steps, source)
    s = _valid_structure(args.file)
    if type_of(s) != trace[-1]:
        raise SchemaError(
            "$", f"structure type {format_context(type_of(s))} does not match "
            f"the path target {format_context(trace[-1])}")
    cur = s
    for n in range(len(steps) - 1, -1, -1):
        try:
            cur = reverse_mell(cur, steps[n], source=trace[n], mode=args.mode)
        except ReverseError as e:
            _emit({"reversible": False, "at_step": n + 1, "error": str(e)})
            return 1
    _emit({"reversible": True, "structure": to_document(cur)})
    return 0


def _cmd_terminate(args) -> int:
    s = _valid_structure(args.file)
    path = find_termination_path(s)
    non_exc = sum(1 for st in path.steps if st.kind != "exc")
    _emit({"path": format_path(path.steps), "steps": len(path.steps),
           "non_exchange": non_exc})
    return 0


def _certificate_bundle(cert, daimon_cut: bool = False) -> dict:
    return {
        "mode": "certificate",
        "search_mode": cert.mode,
        "daimon_cut": daimon_cut,
        "elements": to_set_document(cert.elements),
        "source": format_context(cert.path.source),
        "path": format_path(cert.path.steps),
        "witness": to_document(cert.witness),
        "memberships": [_membership_json(k, w) for k, w in cert.memberships],
        "classification": sorted(cert.classification),
    }


def _cmd_glue(args) -> int:
    elems = _valid_set(args.file)
    cfg = GlueConfig(
        max_depth=args.depth,
        cut_candidates=_cut_pool(args),
        mode=args.mode,
        enumerate_daimon_cut=args.daimon_cut,
    )
    res = glueability_search(elems, cfg)
    if isinstance(res, NotWithinBound):
        _emit({"not_within_bound": res.depth})
        return 1
    _emit(_certificate_bundle(res.certificate, args.daimon_cut))
    return 0


def _cmd_certify(args) -> int:
    doc = load_document(args.file)
    if doc.get("mode") != "certificate":
        raise SchemaError("$.mode", "expected 'certificate'")
    elems = from_set_document(_need(doc, "elements", dict, "$"))
    source = parse_context(_need(doc, "source", str, "$"))
    steps = parse_path(_need(doc, "path", str, "$"))
    mode = _need(doc, "search_mode", str, "$")
    daimon_cut = bool(doc.get("daimon_cut", False))
    path = RewritePath.typed(steps, source)
    try:
        cert = reconstruct_and_certify(elems, path, mode=mode,
                                       enumerate_daimon=daimon_cut)
    except CertificationError as e:
        _emit({"certified": False, "error": str(e)})
        return 1
    stored = from_document(_need(doc, "witness", dict, "$"))
    if structure_iso(cert.witness, stored) is None:
        _emit({"certified": False,
               "error": "stored witness differs from the reverse replay"})
        return 1
    _emit({"certified": True,
           "classification": sorted(cert.classification)})
    return 0


def _cmd_naturality(args) -> int:
    steps = _steps_arg(args)
    if len(steps) != 1:
        raise SchemaError("--path", "naturality-check takes exactly one step")
    R = _valid_structure(args.structure)
    elems = _valid_set(args.set)
    report = check_naturality_square(R, steps[0], elems, mode=args.mode)
    _emit({
        "holds": report.holds,
        "entries": [
            {"leg": e.leg, "subject": e.subject, "ok": e.ok, "detail": e.detail}
            for e in report.entries
        ],
    })
    return 0 if report.holds else 1


def _cmd_export_dot(args) -> int:
    s = _valid_structure(args.file)
    sys.stdout.write(export_dot(s))
    return 0


# -- driver ------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gluon",
        description="Workbench for proof-structures: Taylor expansion, "
        "deconstruction paths, bounded glueability.",
        epilog="Negative glueability answers mean 'no certificate within "
        "the configured depth and cut pool', never non-glueability. "
        "Daimon-absorbed cuts are off by default; --daimon-cut enables "
        "them with formulas drawn from the --cuts pool only, and the "
        "search stays complete only relative to that pool.",
    )
    p.add_argument("--mode", choices=("atomic", "eta"), default="atomic",
                   help="axiom discipline used by expansions and rewrites")
    p.add_argument("--copies", type=int, default=2,
                   help="per-box copy bound for taylor")
    p.add_argument("--depth", type=int, default=25,
                   help="non-exchange step budget for glue")
    p.add_argument("--cuts", metavar="FILE",
                   help="JSON array of cut formulas for glue")
    p.add_argument("--path", metavar="FILE",
                   help="path file of whitespace-separated step tokens")
    p.add_argument("--source", metavar="CTX",
                   help="typed source context for reverse")
    p.add_argument("--daimon-cut", action="store_true",
                   help="let glue enumerate daimon-absorbed cuts")
    p.add_argument("--seed", type=int, default=0,
                   help="reserved; shipped commands are deterministic")
    sub = p.add_subparsers(dest="command", required=True)

    one = sub.add_parser("validate", help="check a document and classify it")
    one.add_argument("file")
    one.set_defaults(fn=_cmd_validate)
    one = sub.add_parser("taylor", help="expand up to the copy bound")
    one.add_argument("file")
    one.set_defaults(fn=_cmd_taylor)
    one = sub.add_parser("member", help="expansion membership with witness")
    one.add_argument("element")
    one.add_argument("structure")
    one.set_defaults(fn=_cmd_member)
    one = sub.add_parser("emptyings", help="all daimon completions")
    one.add_argument("file")
    one.set_defaults(fn=_cmd_emptyings)
    one = sub.add_parser("apply", help="run a path forward on a document")
    one.add_argument("file")
    one.set_defaults(fn=_cmd_apply)
    one = sub.add_parser("reverse", help="replay a path backwards")
    one.add_argument("file")
    one.set_defaults(fn=_cmd_reverse)
    one = sub.add_parser("terminate", help="synthesize a path to the empty "
                                           "structure")
    one.add_argument("file")
    one.set_defaults(fn=_cmd_terminate)
    one = sub.add_parser("glue", help="search for a joint deconstruction")
    one.add_argument("file")
    one.set_defaults(fn=_cmd_glue)
    one = sub.add_parser("certify", help="re-verify a glue certificate")
    one.add_argument("file")
    one.set_defaults(fn=_cmd_certify)
    one = sub.add_parser("naturality-check",
                         help="one expansion-vs-action square")
    one.add_argument("structure")
    one.add_argument("set")
    one.set_defaults(fn=_cmd_naturality)
    one = sub.add_parser("export-dot", help="render a document as DOT")
    one.add_argument("file")
    one.set_defaults(fn=_cmd_export_dot)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.fn(args)
    except (SchemaError, FormulaSyntaxError, GlueError, StepError,
            GraphBuildError, OSError, CertificationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
