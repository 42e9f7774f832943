"""Deterministic keyed RNG substreams.

Every random task derives its generator from a global seed plus a key
(string tags, integers, raw bytes).  Identical keys always yield identical
streams, independent of scheduling order or thread count, which is what
makes parallel experiments bit-reproducible.

Two constructors are provided:

* :func:`substream` returns a fresh, independently owned generator.
* :func:`scratch_substream` rebinds a thread-local generator in place and
  is roughly 10x cheaper; the returned generator is only valid until the
  next ``scratch_substream`` call on the same thread.
"""
from __future__ import annotations

import hashlib
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = ["stream_key", "substream", "scratch_substream", "KeyedStreamFamily", "ordered_map"]


def _encode_part(h, part) -> None:
    # Type-tagged, length-prefixed encoding so distinct key tuples cannot
    # collide byte-wise.
    if isinstance(part, (bool, np.bool_)):
        h.update(b"b")
        h.update(int(part).to_bytes(1, "little"))
    elif isinstance(part, (int, np.integer)):
        h.update(b"i")
        h.update(int(part).to_bytes(16, "little", signed=True))
    elif isinstance(part, (float, np.floating)):
        h.update(b"f")
        h.update(np.float64(part).tobytes())
    elif isinstance(part, str):
        raw = part.encode("utf-8")
        h.update(b"s")
        h.update(len(raw).to_bytes(4, "little"))
        h.update(raw)
    elif isinstance(part, bytes):
        h.update(b"y")
        h.update(len(part).to_bytes(4, "little"))
        h.update(part)
    elif isinstance(part, np.ndarray):
        raw = np.ascontiguousarray(part, dtype=np.float64).tobytes()
        h.update(b"a")
        h.update(len(raw).to_bytes(4, "little"))
        h.update(raw)
    else:
        raise TypeError(f"unsupported key part type: {type(part)!r}")


def stream_key(seed: int, *parts) -> bytes:
    """16-byte digest identifying the substream for (seed, *parts)."""
    h = hashlib.blake2b(digest_size=16)
    _encode_part(h, seed)
    for part in parts:
        _encode_part(h, part)
    return h.digest()


def substream(seed: int, *parts) -> np.random.Generator:
    """Fresh generator for the given key; safe to store and share."""
    key = int.from_bytes(stream_key(seed, *parts), "little")
    return np.random.Generator(np.random.Philox(key=key))


class _ScratchState(threading.local):
    def __init__(self):
        self.bitgen = np.random.Philox(key=0)
        self.gen = np.random.Generator(self.bitgen)


_scratch = _ScratchState()


def _rekey_scratch(digest: bytes) -> np.random.Generator:
    _scratch.bitgen.state = {
        "bit_generator": "Philox",
        "state": {
            "counter": np.zeros(4, dtype=np.uint64),
            "key": np.frombuffer(digest, dtype=np.uint64),
        },
        "buffer": np.zeros(4, dtype=np.uint64),
        "buffer_pos": 4,
        "has_uint32": 0,
        "uinteger": 0,
    }
    return _scratch.gen


def scratch_substream(seed: int, *parts) -> np.random.Generator:
    """Thread-local generator rekeyed to (seed, *parts).

    Produces the exact same stream as ``substream(seed, *parts)`` but
    avoids bit-generator construction.  The result is invalidated by the
    next call on the same thread, so never store it.
    """
    return _rekey_scratch(stream_key(seed, *parts))


class KeyedStreamFamily:
    """Scratch substreams sharing a precomputed key prefix.

    ``family.scratch(suffix)`` yields the exact stream of
    ``scratch_substream(seed, *parts, suffix)`` while hashing only the
    suffix; built for hot loops over many suffixes.  The same
    thread-local validity rule applies to the returned generator.
    """

    def __init__(self, seed: int, *parts):
        h = hashlib.blake2b(digest_size=16)
        _encode_part(h, seed)
        for part in parts:
            _encode_part(h, part)
        self._prefix = h

    def scratch(self, suffix: bytes) -> np.random.Generator:
        h = self._prefix.copy()
        _encode_part(h, suffix)
        return _rekey_scratch(h.digest())


def ordered_map(fn: Callable, items: Sequence | Iterable, threads: int = 1) -> list:
    """Map ``fn`` over ``items``, returning results in input order.

    With ``threads > 1`` the work runs on a thread pool; results are still
    collected in input order, so reductions over them are deterministic.
    Tasks must derive their randomness from keyed substreams, never from
    shared mutable generators.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
