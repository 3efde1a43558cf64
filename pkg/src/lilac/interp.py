"""Reference interpreter for IR modules.

Memory is a set of typed buffers addressed by ``(buffer id, element
offset)`` pointers.  Every store bumps the buffer's ``write_version`` so
that change tracking can be exact.  Calls to ``@lilac.*`` symbols dispatch
through a :class:`HarnessRegistry`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple, Sequence

from .errors import (
    DuplicateRegistration,
    OutOfBounds,
    StepLimitExceeded,
    TypeTrap,
    UnboundVariable,
    UnregisteredHarness,
)
from .ir import ALLOC_BUILTINS, F64, I1, I64, PTR_F64, PTR_I64, Function, Lit, Module, Var

DEFAULT_STEP_LIMIT = 10**8
_MASK = (1 << 64) - 1
_SIGN = 1 << 63


def wrap_i64(x: int) -> int:
    if -_SIGN <= x < _SIGN:
        return x
    x &= _MASK
    return x - (1 << 64) if x & _SIGN else x


class Pointer(NamedTuple):
    buffer: int
    offset: int


class Buffer:
    """A typed, bounds-checked array with a write counter."""

    def __init__(self, kind: str, data, name: str = ""):
        self.kind = kind  # "i64" | "f64"
        self.data = data
        self.name = name
        self.write_version = 0

    def __len__(self) -> int:
        return len(self.data)

    def load(self, i: int):
        if not 0 <= i < len(self.data):
            raise OutOfBounds(self.name or "buffer", i, len(self.data))
        v = self.data[i]
        return float(v) if self.kind == F64 else int(v)

    def store(self, i: int, v) -> None:
        if not 0 <= i < len(self.data):
            raise OutOfBounds(self.name or "buffer", i, len(self.data))
        self.data[i] = v
        self.write_version += 1

    def tolist(self) -> list:
        return [float(v) for v in self.data] if self.kind == F64 else [int(v) for v in self.data]

    @property
    def address(self) -> int | None:
        ctypes_ = getattr(self.data, "ctypes", None)
        return None if ctypes_ is None else ctypes_.data

    @property
    def itemsize(self) -> int:
        return 8


class Memory:
    """All buffers visible to one interpreter run.

    With ``page_backed=True`` buffers live in page-aligned anonymous
    mappings so that page protection can observe writes.
    """

    def __init__(self, page_backed: bool = False):
        self.buffers: dict[int, Buffer] = {}
        self.page_backed = page_backed
        self._next = 1

    def alloc(self, kind: str, values, name: str = "") -> Pointer:
        if isinstance(values, int):
            values = [0.0 if kind == F64 else 0] * values
        conv = float if kind == F64 else int
        vals = [conv(v) for v in values]
        if self.page_backed:
            from .marshal.pageguard import PageArray

            data = PageArray(len(vals), "float64" if kind == F64 else "int64").array
            data[:] = vals
        else:
            data = vals
        bid = self._next
        self._next += 1
        self.buffers[bid] = Buffer(kind, data, name or f"buf{bid}")
        return Pointer(bid, 0)

    def buffer(self, p: Pointer) -> Buffer:
        try:
            return self.buffers[p.buffer]
        except KeyError:
            raise TypeTrap(f"dangling pointer {p}") from None

    def load(self, p: Pointer):
        return self.buffer(p).load(p.offset)

    def store(self, p: Pointer, v) -> None:
        self.buffer(p).store(p.offset, v)

    def read(self, p: Pointer) -> list:
        return self.buffer(p).tolist()[p.offset :]

    def versions(self) -> dict[int, int]:
        return {k: b.write_version for k, b in self.buffers.items()}


class BufferView:
    """Sequence view of a buffer from a pointer to the buffer's end."""

    def __init__(self, mem: Memory, p: Pointer):
        self.mem = mem
        self.ptr = p
        self.buf = mem.buffer(p)

    def __len__(self) -> int:
        return max(0, len(self.buf) - self.ptr.offset)

    def __getitem__(self, i: int):
        if not 0 <= i < len(self):
            raise OutOfBounds(self.buf.name, i, len(self))
        return self.buf.load(self.ptr.offset + i)

    def __setitem__(self, i: int, v) -> None:
        if not 0 <= i < len(self):
            raise OutOfBounds(self.buf.name, i, len(self))
        self.buf.store(self.ptr.offset + i, v)


# ---------------------------------------------------------------- harnesses


@dataclass
class HarnessEntry:
    name: str
    fn: Callable
    kinds: tuple | None = None  # per-argument: "int", "ptr i64", "ptr f64"


class HarnessRegistry:
    def __init__(self):
        self.entries: dict[str, HarnessEntry] = {}

    def register(self, name: str, fn: Callable, kinds: Sequence[str] | None = None) -> None:
        if name in self.entries:
            raise DuplicateRegistration(f"harness @{name} already registered")
        self.entries[name] = HarnessEntry(name, fn, tuple(kinds) if kinds is not None else None)

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def call(self, name: str, mem: Memory, args: list) -> None:
        entry = self.entries.get(name)
        if entry is None:
            raise UnregisteredHarness(f"no harness registered for @{name}")
        if entry.kinds is not None:
            if len(args) != len(entry.kinds):
                raise TypeTrap(f"@{name} expects {len(entry.kinds)} arguments, got {len(args)}")
            for k, a in zip(entry.kinds, args):
                if k == "int" and not isinstance(a, int):
                    raise TypeTrap(f"@{name}: expected integer argument, got {a!r}")
                if k.startswith("ptr"):
                    if not isinstance(a, Pointer) or mem.buffer(a).kind != k[4:]:
                        raise TypeTrap(f"@{name}: expected {k} argument, got {a!r}")
        entry.fn(mem, args)


def harness_symbol(name: str) -> str:
    return "lilac." + name


def register_reference_harnesses(
    reg: HarnessRegistry,
    whats,
    aliases: Mapping[str, str] | None = None,
    marshal=None,
) -> None:
    """Register ``@lilac.<name>`` for every What program.

    Each harness executes the program's reference semantics directly on
    interpreter memory, preserving accumulation order.  ``aliases`` maps
    extra harness names to What program names.  ``marshal`` (a
    :class:`lilac.marshal.MarshalContext`) routes read-only array arguments
    through marshal objects, so stale caches would change the result.
    """
    from .what import Kind, execute, infer_interface

    targets = [(w.name, w) for w in whats]
    by_name = {w.name: w for w in whats}
    for alias, what_name in (aliases or {}).items():
        targets.append((alias, by_name[what_name]))
    for name, what in targets:
        sig = infer_interface(what)
        kinds = []
        for p in sig:
            if p.kind is Kind.SCALAR_INT:
                kinds.append("int")
            elif p.kind is Kind.ARRAY_INT:
                kinds.append(PTR_I64)
            else:
                kinds.append(PTR_F64)

        def fn(mem, args, what=what, sig=sig, name=name):
            env = {}
            for p, a in zip(sig, args):
                if not p.kind.is_array:
                    env[p.name] = a
                elif marshal is not None and p.kind is not Kind.ARRAY_FLOAT_OUT:
                    env[p.name] = marshal.acquire_input(name, p.name, mem, a)
                else:
                    env[p.name] = BufferView(mem, a)
            execute(what, env)

        reg.register(harness_symbol(name), fn, kinds)


# ---------------------------------------------------------------- execution


class _Frame:
    __slots__ = ("steps", "limit")

    def __init__(self, limit: int):
        self.steps = 0
        self.limit = limit


def _val(env: dict, a):
    if isinstance(a, Lit):
        return a.value
    try:
        return env[a.name]
    except KeyError:
        raise TypeTrap(f"use of undefined value %{a.name}") from None


def _int(v):
    if type(v) is not int:
        raise TypeTrap(f"expected i64, got {v!r}")
    return v


def _float(v):
    if type(v) is not float:
        raise TypeTrap(f"expected f64, got {v!r}")
    return v


def _ptr(v) -> Pointer:
    if not isinstance(v, Pointer):
        raise TypeTrap(f"expected pointer, got {v!r}")
    return v


def _exec_function(m: Module, f: Function, args: list, mem: Memory, reg, frame: _Frame):
    if len(args) != len(f.params):
        raise TypeTrap(f"@{f.name} expects {len(f.params)} arguments, got {len(args)}")
    env = {name: v for (name, _), v in zip(f.params, args)}
    blocks = f.block_map()
    block = f.entry
    prev = None
    while True:
        instrs = block.instrs
        k = 0
        if prev is not None:
            staged = []
            while k < len(instrs) and instrs[k].opcode == "phi":
                ins = instrs[k]
                try:
                    src = ins.args[ins.labels.index(prev)]
                except ValueError:
                    raise TypeTrap(f"phi %{ins.result} has no entry for {prev}") from None
                staged.append((ins.result, _val(env, src)))
                k += 1
            frame.steps += len(staged)
            env.update(staged)
        for ins in instrs[k:]:
            frame.steps += 1
            if frame.steps > frame.limit:
                raise StepLimitExceeded(f"step limit {frame.limit} exceeded in @{f.name}")
            op = ins.opcode
            a = ins.args
            if op == "add":
                env[ins.result] = wrap_i64(_int(_val(env, a[0])) + _int(_val(env, a[1])))
            elif op == "sub":
                env[ins.result] = wrap_i64(_int(_val(env, a[0])) - _int(_val(env, a[1])))
            elif op == "mul":
                env[ins.result] = wrap_i64(_int(_val(env, a[0])) * _int(_val(env, a[1])))
            elif op == "fadd":
                env[ins.result] = _float(_val(env, a[0])) + _float(_val(env, a[1]))
            elif op == "fsub":
                env[ins.result] = _float(_val(env, a[0])) - _float(_val(env, a[1]))
            elif op == "fmul":
                env[ins.result] = _float(_val(env, a[0])) * _float(_val(env, a[1]))
            elif op == "elemptr":
                p = _ptr(_val(env, a[0]))
                env[ins.result] = Pointer(p.buffer, p.offset + _int(_val(env, a[1])))
            elif op == "load":
                env[ins.result] = mem.load(_ptr(_val(env, a[0])))
            elif op == "store":
                v = _val(env, a[0])
                p = _ptr(_val(env, a[1]))
                buf = mem.buffer(p)
                if (buf.kind == F64) != (type(v) is float):
                    raise TypeTrap(f"store of {v!r} into {buf.kind} buffer")
                buf.store(p.offset, v)
            elif op.startswith("icmp."):
                x = _int(_val(env, a[0]))
                y = _int(_val(env, a[1]))
                pred = op[5:]
                if pred == "eq":
                    r = x == y
                elif pred == "ne":
                    r = x != y
                elif pred == "slt":
                    r = x < y
                else:
                    r = x <= y
                env[ins.result] = r
            elif op == "br":
                prev, block = block.label, blocks[ins.labels[0]]
                break
            elif op == "condbr":
                c = _val(env, a[0])
                if type(c) is not bool:
                    raise TypeTrap(f"condbr on non-i1 value {c!r}")
                prev, block = block.label, blocks[ins.labels[0] if c else ins.labels[1]]
                break
            elif op == "ret":
                return _val(env, a[0]) if a else None
            elif op == "call":
                vals = [_val(env, x) for x in a]
                r = _call(m, ins.callee, vals, mem, reg, frame)
                if ins.result is not None:
                    env[ins.result] = r
            elif op == "phi":
                raise TypeTrap("phi in entry block or after non-phi")
            else:
                raise TypeTrap(f"unknown opcode {op}")
        else:
            raise TypeTrap(f"block {block.label} fell through without a terminator")


def _call(m: Module, callee: str, vals: list, mem: Memory, reg, frame: _Frame):
    if callee in ALLOC_BUILTINS:
        n = _int(vals[0])
        if n < 0:
            raise TypeTrap(f"negative allocation size {n}")
        kind = F64 if ALLOC_BUILTINS[callee] == PTR_F64 else I64
        return mem.alloc(kind, n, name=f"tmp{len(mem.buffers) + 1}")
    for g in m.functions:
        if g.name == callee:
            return _exec_function(m, g, vals, mem, reg, frame)
    if reg is None:
        raise UnregisteredHarness(f"no harness registered for @{callee}")
    reg.call(callee, mem, vals)
    return None


def run(
    m: Module,
    entry: str,
    args: Sequence,
    mem: Memory | None = None,
    step_limit: int = DEFAULT_STEP_LIMIT,
    harnesses: HarnessRegistry | None = None,
):
    """Execute ``@entry`` and return ``(return value, memory)``."""
    mem = Memory() if mem is None else mem
    f = m.function(entry)
    ret = _exec_function(m, f, list(args), mem, harnesses, _Frame(step_limit))
    return ret, mem


# ---------------------------------------------------------------- data files


def bind_data(f: Function, data: Mapping, mem: Memory, wrap_scalars: bool = False) -> list:
    """Turn a name -> number/array mapping into arguments for ``f``.

    Pointer parameters get fresh buffers named after the parameter.  With
    ``wrap_scalars`` a scalar given for a pointer parameter becomes a
    one-element buffer (FORTRAN-style by-reference scalars).
    """
    args = []
    for name, ty in f.params:
        if name not in data:
            raise UnboundVariable(f"no data for parameter %{name}")
        v = data[name]
        if ty in (PTR_I64, PTR_F64):
            if isinstance(v, (int, float)) and not isinstance(v, bool) and wrap_scalars:
                v = [v]
            if isinstance(v, (str, bytes)) or not hasattr(v, "__len__"):
                raise TypeTrap(f"%{name} is {ty} but data is not an array")
            kind = ty[4:]
            if kind == I64 and any(isinstance(x, float) and not float(x).is_integer() for x in v):
                raise TypeTrap(f"%{name} is {ty} but data holds non-integers")
            args.append(mem.alloc(kind, list(v), name=name))
        elif ty == I64:
            if isinstance(v, bool) or not isinstance(v, int):
                raise TypeTrap(f"%{name} is i64 but data is {v!r}")
            args.append(v)
        elif ty == F64:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise TypeTrap(f"%{name} is f64 but data is {v!r}")
            args.append(float(v))
        elif ty == I1:
            args.append(bool(v))
        else:
            raise TypeTrap(f"unsupported parameter type {ty}")
    return args


def load_data(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise TypeTrap("data file must hold a JSON object")
    return data


def snapshot(f: Function, args: Sequence, ret, mem: Memory) -> dict:
    """Observable state after a run: return value and every pointer argument."""
    out = {"return": ret}
    for (name, ty), a in zip(f.params, args):
        if isinstance(a, Pointer):
            out[name] = mem.read(a)
    return out


def exact_key(state) -> object:
    """Bit-exact comparison key for snapshots (distinguishes -0.0, nan)."""
    if isinstance(state, float):
        return ("f", state.hex())
    if isinstance(state, dict):
        return tuple((k, exact_key(v)) for k, v in sorted(state.items()))
    if isinstance(state, (list, tuple)):
        return tuple(exact_key(v) for v in state)
    return state


def var(name: str) -> Var:
    return Var(name)
