"""Emit C++ harness sources from LiLAC-How harnesses.

Each marshal class becomes three function templates (``_update``,
``_construct``, ``_destruct``) with parameters ``(in, size, out)`` around
the class's verbatim code blocks, plus an alias that plugs them into the
``lilac::ReadObject`` / ``lilac::WriteObject`` runtime templates.  The
harness itself becomes a state record (persistent variables and one
marshal object per binding) and an ``extern "C"`` entry point named after
the implemented computation, so every harness for one computation is a
drop-in replacement for the others.
"""

from __future__ import annotations

from importlib import resources

from .errors import MissingClass, ValidationFailed
from .how import Harness, HowProgram, MarshalClassDef, validate_how
from .what import Kind, format_expr, infer_interface

RUNTIME_HEADER = "lilac/marshal.hpp"

_PARAM_TYPES = {
    Kind.SCALAR_INT: "int",
    Kind.ARRAY_INT: "int*",
    Kind.ARRAY_FLOAT_IN: "double*",
    Kind.ARRAY_FLOAT_OUT: "double*",
}
_ELEMENT_TYPES = {Kind.ARRAY_INT: "int", Kind.ARRAY_FLOAT_IN: "double", Kind.ARRAY_FLOAT_OUT: "double"}


def include_dir():
    """Directory to pass as ``-I`` so generated sources find the runtime header."""
    return resources.files("lilac").joinpath("include")


def entry_symbol(computation: str) -> str:
    return f"lilac_{computation}"


def _block(code: str | None, indent: str = "") -> str:
    # braces keep the verbatim text intact, including its own whitespace
    return f"{indent}{{{code if code is not None else ''}}}"


def _class_functions(c: MarshalClassDef) -> list[str]:
    tpl = "template<typename type_in, typename type_out>"
    runtime = "ReadObject" if c.kind == "INPUT" else "WriteObject"
    args = "<type_in, type_out>"
    return [
        tpl,
        f"void {c.name}_update(type_in* in, int size, type_out& out)",
        _block(c.update_code),
        tpl,
        f"void {c.name}_construct(type_in* in, int size, type_out& out)",
        _block(c.construct_code),
        tpl,
        f"void {c.name}_destruct(type_in* in, int size, type_out& out)",
        _block(c.destruct_code),
        tpl,
        f"using {c.name} = lilac::{runtime}<type_in, type_out,",
        f"    {c.name}_update{args}, {c.name}_construct{args}, {c.name}_destruct{args}>;",
        "",
    ]


def gen_harness(h: Harness, sig, classes) -> str:
    """Source text for one harness; ``classes`` are all known marshal classes."""
    by_name = {c.name: c for c in classes}
    kinds = {p.name: p.kind for p in sig}
    used: list[MarshalClassDef] = []
    for b in h.bindings:
        c = by_name.get(b.class_name)
        if c is None:
            raise MissingClass(f"HARNESS {h.name}: no INPUT/OUTPUT class {b.class_name}")
        if c not in used:
            used.append(c)

    state = f"{h.name}_state"
    lines = [f"// harness {h.name} implementing {h.implements}", "// generated by lilac; edits are overwritten", ""]
    for header in h.headers:
        lines.append(f"#include <{header}>" if not header.startswith('"') else f"#include {header}")
    lines.append("#include <cstdlib>")
    if h.bindings:
        lines.append(f'#include "{RUNTIME_HEADER}"')
    lines.append("")
    for c in used:
        lines.extend(_class_functions(c))

    lines.append("namespace {")
    lines.append("")
    lines.append(f"struct {state} {{")
    lines.append("    bool initialized = false;")
    for ty, name in h.persistent_vars:
        lines.append(f"    {ty} {name};")
    for b in h.bindings:
        elem = _ELEMENT_TYPES.get(kinds.get(b.array_name), "double")
        lines.append(f"    {b.class_name}<{elem}, {b.out_type}> {b.out_name}_marshal;")
    lines.append("};")
    lines.append("")
    lines.append(f"{state} {h.name}_persistent;")
    lines.append("")
    lines.append(f"void {h.name}_teardown() {{")
    lines.append(f"    {state}& st = {h.name}_persistent;")
    for b in reversed(h.bindings):
        lines.append(f"    st.{b.out_name}_marshal.release();")
    for ty, name in h.persistent_vars:
        lines.append(f"    {ty}& {name} = st.{name};")
    if h.after_last is not None:
        lines.append(_block(h.after_last, "    "))
    lines.append("}")
    lines.append("")
    lines.append("}  // namespace")
    lines.append("")

    params = ", ".join(f"{_PARAM_TYPES[p.kind]} {p.name}" for p in sig)
    lines.append(f'extern "C" void {entry_symbol(h.implements)}({params}) {{')
    lines.append(f"    {state}& st = {h.name}_persistent;")
    for ty, name in h.persistent_vars:
        lines.append(f"    {ty}& {name} = st.{name};")
    lines.append("    if (!st.initialized) {")
    lines.append("        st.initialized = true;")
    if h.before_first is not None:
        lines.append(_block(h.before_first, "        "))
    lines.append(f"        std::atexit({h.name}_teardown);")
    lines.append("    }")
    for b in h.bindings:
        extent = format_expr(b.extent)
        lines.append(f"    {b.out_type} {b.out_name} = st.{b.out_name}_marshal.acquire({b.array_name}, {extent});")
    lines.append(_block(h.code, "    "))
    for b in h.bindings:
        if by_name[b.class_name].kind == "OUTPUT":
            extent = format_expr(b.extent)
            lines.append(f"    st.{b.out_name}_marshal.write_back({b.array_name}, {extent});")
    lines.append("}")
    return "\n".join(lines) + "\n"


def gen_all(how: HowProgram, whats) -> dict[str, str]:
    """Sources for every harness, keyed by harness name in declaration order."""
    diags = validate_how(how, whats)
    if diags:
        raise ValidationFailed(diags)
    by_name = {w.name: w for w in whats}
    return {
        h.name: gen_harness(h, infer_interface(by_name[h.implements]), how.marshal_classes)
        for h in how.harnesses
    }
