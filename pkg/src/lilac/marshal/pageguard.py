"""Page-aligned arrays and write-fault tracking through ``mprotect``.

The fault handler is a few lines of C (``_pageguard.c``) built with the
system compiler on first use and loaded with :mod:`ctypes`; a Python signal
handler cannot service a synchronous segmentation fault.  When no compiler
or no POSIX memory protection is available, :func:`guard` raises
:class:`ProtectionUnsupported` and callers fall back to checksums.
"""

from __future__ import annotations

import ctypes
import hashlib
import mmap
import os
import shutil
import subprocess
import sys
import tempfile
import threading
from pathlib import Path

import numpy as np

from ..errors import ProtectionUnsupported

_SOURCE = Path(__file__).with_name("_pageguard.c")
_lock = threading.RLock()
_lib = None
_load_error: str | None = None


class PageArray:
    """A 1-D numpy array that starts on a page boundary.

    Backed by an anonymous mapping, so neighbouring Python objects never
    share its pages.
    """

    def __init__(self, n: int, dtype="float64"):
        dtype = np.dtype(dtype)
        nbytes = max(1, n * dtype.itemsize)
        size = -(-nbytes // mmap.PAGESIZE) * mmap.PAGESIZE
        self._map = mmap.mmap(-1, size)
        self.array = np.frombuffer(self._map, dtype=dtype, count=n)

    @property
    def address(self) -> int:
        return self.array.ctypes.data


def _build() -> ctypes.CDLL:
    if not sys.platform.startswith(("linux", "darwin")):
        raise ProtectionUnsupported(f"page protection is not supported on {sys.platform}")
    cc = os.environ.get("CC") or shutil.which("cc") or shutil.which("gcc") or shutil.which("clang")
    if cc is None:
        raise ProtectionUnsupported("no C compiler found to build the fault handler")
    src = _SOURCE.read_bytes()
    tag = hashlib.sha256(src).hexdigest()[:16]
    cache = Path(os.environ.get("LILAC_CACHE_DIR", Path(tempfile.gettempdir()) / f"lilac-{os.getuid()}"))
    cache.mkdir(parents=True, exist_ok=True)
    so = cache / f"pageguard-{tag}.so"
    if not so.exists():
        tmp = so.with_suffix(f".{os.getpid()}.tmp")
        proc = subprocess.run(
            [cc, "-O2", "-shared", "-fPIC", "-o", str(tmp), str(_SOURCE)],
            capture_output=True,
            text=True,
        )
        if proc.returncode != 0:
            raise ProtectionUnsupported(f"building the fault handler failed: {proc.stderr.strip()}")
        os.replace(tmp, so)
    lib = ctypes.CDLL(str(so), use_errno=True)
    lib.pg_register.argtypes = [ctypes.c_void_p, ctypes.c_size_t]
    for name in ("pg_protect", "pg_dirty", "pg_faults", "pg_unregister"):
        getattr(lib, name).argtypes = [ctypes.c_int]
    return lib


def library() -> ctypes.CDLL:
    """Load (building if needed) the fault-handler library."""
    global _lib, _load_error
    with _lock:
        if _lib is not None:
            return _lib
        if _load_error is not None:
            raise ProtectionUnsupported(_load_error)
        try:
            lib = _build()
        except ProtectionUnsupported as e:
            _load_error = str(e)
            raise
        except OSError as e:
            _load_error = f"loading the fault handler failed: {e}"
            raise ProtectionUnsupported(_load_error) from e
        if lib.pg_install() != 0:
            _load_error = "installing the fault handler failed"
            raise ProtectionUnsupported(_load_error)
        _lib = lib
        return lib


def available() -> bool:
    try:
        library()
    except ProtectionUnsupported:
        return False
    return True


class Guard:
    """Write tracking for one address range.

    ``mark_clean`` arms the guard; ``dirty`` stays true from the first write
    to any page the range touches until the next ``mark_clean``.  Pages are
    shared with whatever else lives on them, so a write next to the range
    also counts (never a missed write, sometimes a spurious one).
    """

    def __init__(self, address: int, nbytes: int):
        self._lib = library()
        self.address = address
        self.nbytes = nbytes
        self.id = -1
        if nbytes > 0:
            with _lock:
                self.id = self._lib.pg_register(ctypes.c_void_p(address), nbytes)
            if self.id < 0:
                raise ProtectionUnsupported("too many guarded regions")

    def mark_clean(self) -> None:
        if self.id < 0:
            return
        with _lock:
            self._lib.pg_install()
            if self._lib.pg_protect(self.id) != 0:
                raise ProtectionUnsupported(f"mprotect failed: errno {ctypes.get_errno()}")

    @property
    def dirty(self) -> bool:
        return self.id >= 0 and bool(self._lib.pg_dirty(self.id))

    @property
    def faults(self) -> int:
        return 0 if self.id < 0 else int(self._lib.pg_faults(self.id))

    def release(self) -> None:
        if self.id >= 0:
            with _lock:
                self._lib.pg_unregister(self.id)
            self.id = -1

    def __del__(self):
        try:
            self.release()
        except Exception:
            pass


def guard(address: int, nbytes: int) -> Guard:
    return Guard(address, nbytes)
