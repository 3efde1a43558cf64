"""Marshal objects: construct/update/destruct hooks driven by change tracking.

A :class:`MarshalObject` owns one :class:`TrackedRegion`.  ``acquire``
decides which hooks have to run before a harness may use the cached
``out`` value:

* nothing constructed yet: construct, then update;
* a different array or size than last time: destruct, construct, update;
* same array but written since the last update: update;
* otherwise: nothing.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from ..errors import HookFailure, ProtectionUnsupported
from . import pageguard

STRATEGY_ENV = "LILAC_MARSHAL_STRATEGY"

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_M64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _M64
    return h


class Strategy(str, enum.Enum):
    PAGEPROTECT = "pageprotect"
    CHECKSUM = "checksum"
    EXACT = "exact"
    NAIVE = "naive"  # no tracking: update on every acquire


def default_strategy() -> Strategy:
    return Strategy(os.environ.get(STRATEGY_ENV, Strategy.EXACT.value))


def resolve_strategy(strategy) -> Strategy:
    if strategy is None:
        return default_strategy()
    return Strategy(strategy)


class TrackedRegion:
    """``length`` elements of ``source`` starting at ``offset``.

    ``source`` is an interpreter :class:`~lilac.interp.Buffer` or a 1-D
    numpy array.  One dirty flag covers the whole region.
    """

    def __init__(self, source, offset: int = 0, length: int | None = None, strategy=None):
        self.source = source
        self.offset = offset
        total = len(source)
        self.length = max(0, total - offset) if length is None else length
        if self.offset < 0 or self.offset + self.length > total:
            raise ValueError(f"region [{offset}, {offset + self.length}) outside a source of {total}")
        self.strategy = resolve_strategy(strategy)
        self._guard = None
        self._checksum = None
        self._version = None
        self.dirty = True
        if self.strategy is Strategy.PAGEPROTECT and self.length:
            address = self._address()
            if address is None:
                raise ProtectionUnsupported("region is not backed by page-aligned memory")
            self._guard = pageguard.guard(address, self.length * self._itemsize())
        if self.strategy is Strategy.EXACT and not hasattr(source, "write_version"):
            raise TypeError("exact tracking needs a source with a write_version counter")

    # -- identity and contents

    @property
    def key(self) -> tuple:
        return (id(self.source), self.offset, self.length)

    def _array(self):
        if isinstance(self.source, np.ndarray):
            return self.source
        data = getattr(self.source, "data", None)
        return data if isinstance(data, np.ndarray) else None

    def _address(self) -> int | None:
        arr = self._array()
        if arr is None:
            return None
        return arr.ctypes.data + self.offset * arr.itemsize

    def _itemsize(self) -> int:
        arr = self._array()
        return 8 if arr is None else arr.itemsize

    def values(self) -> np.ndarray:
        """A copy of the region's current contents."""
        arr = self._array()
        if arr is not None:
            return np.array(arr[self.offset : self.offset + self.length])
        kind = getattr(self.source, "kind", "f64")
        dtype = np.float64 if kind == "f64" else np.int64
        return np.array(self.source.data[self.offset : self.offset + self.length], dtype=dtype)

    def _bytes(self) -> bytes:
        return self.values().tobytes()

    # -- change tracking

    def mark_clean(self) -> None:
        self.dirty = False
        if not self.length:
            return
        if self.strategy is Strategy.PAGEPROTECT:
            self._guard.mark_clean()
        elif self.strategy is Strategy.CHECKSUM:
            self._checksum = fnv1a64(self._bytes())
        elif self.strategy is Strategy.EXACT:
            self._version = self.source.write_version

    def poll_dirty(self) -> bool:
        if self.dirty:
            return True
        if self.strategy is Strategy.NAIVE:
            return True
        if not self.length:
            return False
        if self.strategy is Strategy.PAGEPROTECT:
            self.dirty = self._guard.dirty
        elif self.strategy is Strategy.CHECKSUM:
            self.dirty = fnv1a64(self._bytes()) != self._checksum
        else:
            self.dirty = self.source.write_version != self._version
        return self.dirty

    def release(self) -> None:
        if self._guard is not None:
            self._guard.release()
            self._guard = None


@dataclass
class MarshalCounters:
    n_construct: int = 0
    n_update: int = 0
    n_destruct: int = 0

    def as_dict(self) -> dict:
        return {"n_construct": self.n_construct, "n_update": self.n_update, "n_destruct": self.n_destruct}


class State(enum.Enum):
    EMPTY = "Empty"
    CONSTRUCTED = "Constructed"


@dataclass(frozen=True)
class Hooks:
    """Python stand-ins for a marshal class's code blocks.

    ``update(values, size, out) -> out`` sees a copy of the region;
    ``construct(size, out) -> out`` and ``destruct(size, out)`` are optional.
    """

    update: Callable[[np.ndarray, int, Any], Any]
    construct: Callable[[int, Any], Any] | None = None
    destruct: Callable[[int, Any], None] | None = None


class MarshalObject:
    def __init__(self, hooks: Hooks, strategy=None, name: str = ""):
        self.hooks = hooks
        self.strategy = resolve_strategy(strategy)
        self.name = name
        self.state = State.EMPTY
        self.region: TrackedRegion | None = None
        self.out: Any = None
        self.counters = MarshalCounters()
        self.log: list[str] = []  # hook names in call order

    def _run(self, which: str, fn, *args):
        self.log.append(which)
        try:
            return fn(*args)
        except Exception as e:
            raise HookFailure(which, e) from e

    def _construct(self, source, offset: int, size: int) -> None:
        region = TrackedRegion(source, offset, size, self.strategy)
        try:
            if self.hooks.construct is not None:
                self.out = self._run("construct", self.hooks.construct, size, None)
            else:
                self.log.append("construct")
        except HookFailure:
            region.release()
            self.out = None
            raise
        self.counters.n_construct += 1
        self.region = region
        self.state = State.CONSTRUCTED

    def _update(self) -> None:
        r = self.region
        self.counters.n_update += 1
        self.out = self._run("update", self.hooks.update, r.values(), r.length, self.out)
        r.mark_clean()

    def _destruct(self) -> None:
        self.counters.n_destruct += 1
        size = self.region.length if self.region is not None else 0
        try:
            if self.hooks.destruct is not None:
                self._run("destruct", self.hooks.destruct, size, self.out)
            else:
                self.log.append("destruct")
        finally:
            if self.region is not None:
                self.region.release()
            self.region = None
            self.out = None
            self.state = State.EMPTY

    def acquire(self, source, offset: int = 0, size: int | None = None):
        """Bring ``out`` up to date for ``size`` elements of ``source`` from ``offset``."""
        if size is None:
            size = max(0, len(source) - offset)
        if self.state is State.CONSTRUCTED and self.region.key != (id(source), offset, size):
            self._destruct()
        if self.state is State.EMPTY:
            self._construct(source, offset, size)
            self._update()
        elif self.region.poll_dirty():
            self._update()
        return self.out

    def release(self) -> None:
        if self.state is State.CONSTRUCTED:
            self._destruct()


class MarshalRegistry:
    """All marshal objects of a process, keyed by (harness, binding)."""

    def __init__(self):
        self.objects: dict[tuple, MarshalObject] = {}
        self.retired: dict[tuple, MarshalObject] = {}  # released, kept for counters

    def get(self, key: tuple, factory: Callable[[], MarshalObject]) -> MarshalObject:
        obj = self.objects.get(key)
        if obj is None:
            obj = self.objects[key] = factory()
        return obj

    def stats(self) -> list[dict]:
        """Counters per object, including objects already released."""
        every = {**self.retired, **self.objects}
        return [
            {"region": "/".join(map(str, key)), **obj.counters.as_dict()}
            for key, obj in sorted(every.items(), key=lambda kv: tuple(map(str, kv[0])))
        ]


def release_all(registry: MarshalRegistry) -> list[HookFailure]:
    """Destruct every constructed object and empty the registry.

    Failures are collected rather than raised so that every object gets
    released.
    """
    failures = []
    for obj in registry.objects.values():
        try:
            obj.release()
        except HookFailure as e:
            failures.append(e)
    registry.retired.update(registry.objects)
    registry.objects.clear()
    return failures


def cached_invariant(obj: MarshalObject, source=None, offset: int = 0, size: int | None = None):
    """The scalar an update hook derived from the region, refreshed only when needed."""
    if source is not None:
        return obj.acquire(source, offset, size)
    if obj.state is not State.CONSTRUCTED:
        raise ValueError("cached_invariant needs a constructed object or a source")
    return obj.out


# ---------------------------------------------------------------- class hooks
# Python meanings for the marshal classes of the shipped specification.


def _device_copy(values, size, out):
    out = np.empty(size, dtype=values.dtype) if out is None or len(out) != size else out
    out[:] = values
    return out


def _readable_max(values, size, out):
    # one past the largest entry; -1 + 1 = 0 for an empty range
    return int(values.max()) + 1 if size else 0


def _read_last(values, size, out):
    return values[size - 1].item() if size else 0


HOOK_LIBRARY: dict[str, Hooks] = {
    "CudaRead": Hooks(update=_device_copy, construct=lambda size, out: None, destruct=lambda size, out: None),
    "CudaWrite": Hooks(update=_device_copy, construct=lambda size, out: None, destruct=lambda size, out: None),
    "ReadableMax": Hooks(update=_readable_max),
    "ReadLast": Hooks(update=_read_last),
}


class MarshalContext:
    """Marshal objects for reference harnesses running on interpreter memory.

    Every read-only array argument of a harness goes through a device-copy
    marshal object; the harness then computes from the copy, so a missed
    update shows up as a wrong result.
    """

    def __init__(self, strategy=None):
        self.strategy = resolve_strategy(strategy)
        self.registry = MarshalRegistry()

    def acquire_input(self, harness: str, param: str, mem, ptr):
        buf = mem.buffer(ptr)
        obj = self.registry.get(
            (harness, param),
            lambda: MarshalObject(HOOK_LIBRARY["CudaRead"], self.strategy, f"{harness}.{param}"),
        )
        data = obj.acquire(buf, ptr.offset, len(buf) - ptr.offset)
        return _ReadOnly(data, buf.kind)

    def stats(self) -> list[dict]:
        return self.registry.stats()

    def release_all(self) -> list[HookFailure]:
        return release_all(self.registry)


class _ReadOnly:
    """Sequence over a device copy with interpreter scalar types."""

    def __init__(self, data, kind: str):
        self.data = data
        self.conv = float if kind == "f64" else int

    def __len__(self) -> int:
        return len(self.data)

    def __getitem__(self, i: int):
        if not 0 <= i < len(self.data):
            from ..errors import OutOfBounds

            raise OutOfBounds("marshaled array", i, len(self.data))
        return self.conv(self.data[i])
