"""Hash, XOR masking, exact-match fuzzy extractor, seeded nonces and freshness.

Every value the protocol XORs together is 32 bytes wide. ``h`` hashes an
ordered list of fields, each prefixed with its 4-byte big-endian length, so
``h([b"AB", b"C"])`` and ``h([b"A", b"BC"])`` differ.
"""

from __future__ import annotations

import hashlib
import random
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence, Union

SIZE = 32
DEFAULT_DELTA_T_MS = 2000

Part = Union[bytes, bytearray, int]
HashBackend = Callable[[bytes], bytes]


class UsageError(ValueError):
    """A primitive was called with arguments outside its contract."""


def _sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


_backend: ContextVar[HashBackend] = ContextVar("hash_backend", default=_sha256)


@contextmanager
def hash_backend(fn: HashBackend) -> Iterator[None]:
    """Temporarily route ``h`` through ``fn`` (must return 32 bytes)."""
    token = _backend.set(fn)
    try:
        yield
    finally:
        _backend.reset(token)


def ts_bytes(ts: int) -> bytes:
    """Timestamps enter the hash as 8-byte big-endian unsigned integers."""
    if ts < 0:
        raise UsageError(f"timestamp must be non-negative, got {ts}")
    return ts.to_bytes(8, "big")


def encode(parts: Sequence[Part]) -> bytes:
    out = bytearray()
    for p in parts:
        if isinstance(p, int):
            p = ts_bytes(p)
        elif not isinstance(p, (bytes, bytearray)):
            raise UsageError(f"hash part must be bytes or int, got {type(p).__name__}")
        out += len(p).to_bytes(4, "big")
        out += p
    return bytes(out)


def h(parts: Sequence[Part]) -> bytes:
    """Digest of the length-prefixed encoding of ``parts``.

    Integers are treated as timestamps (see :func:`ts_bytes`).
    """
    if isinstance(parts, (bytes, bytearray)) or len(parts) == 0:
        raise UsageError("h() takes a non-empty list of parts")
    digest = _backend.get()(encode(parts))
    if len(digest) != SIZE:
        raise UsageError(f"hash backend returned {len(digest)} bytes, expected {SIZE}")
    return digest


def xor_mask(a: bytes, b: bytes) -> bytes:
    if len(a) != SIZE or len(b) != SIZE:
        raise UsageError(f"xor_mask needs two {SIZE}-byte strings, got {len(a)} and {len(b)}")
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(SIZE, "big")


def pad_identity(ident: Union[str, bytes]) -> bytes:
    """Right-pad an identity with zero bytes to 32 bytes."""
    raw = ident.encode() if isinstance(ident, str) else bytes(ident)
    if not raw or len(raw) > SIZE:
        raise UsageError(f"identity must be 1..{SIZE} bytes, got {len(raw)}")
    return raw.ljust(SIZE, b"\x00")


class Rng:
    """Seeded byte stream. Not cryptographically strong: this is a simulator."""

    def __init__(self, seed: int):
        self.seed = seed
        self._r = random.Random(seed)

    def bytes(self, n: int = SIZE) -> bytes:
        return self._r.randbytes(n)

    def randrange(self, *args: int) -> int:
        return self._r.randrange(*args)

    def shuffle(self, seq: list) -> None:
        self._r.shuffle(seq)


def fresh_nonce(rng: Rng) -> bytes:
    return rng.bytes(SIZE)


@dataclass(frozen=True)
class FuzzyPair:
    sigma: bytes
    tau: bytes


def _check_bio(bio: bytes) -> None:
    if not bio:
        raise UsageError("biometric sample must be non-empty")


def gen(bio: bytes, rng: Rng) -> FuzzyPair:
    """Enroll a biometric: fresh public helper ``tau``, secret ``sigma = h(bio, tau)``."""
    _check_bio(bio)
    tau = rng.bytes(SIZE)
    return FuzzyPair(sigma=h([bio, tau]), tau=tau)


def rep(bio: bytes, tau: bytes) -> bytes:
    # exact match only; any change to bio yields an unrelated sigma
    _check_bio(bio)
    if len(tau) != SIZE:
        raise UsageError(f"helper string must be {SIZE} bytes")
    return h([bio, tau])


def check_freshness(ts: int, now: int, delta_t: int = DEFAULT_DELTA_T_MS) -> bool:
    """True iff ``|ts - now| <= delta_t`` (inclusive bound)."""
    if delta_t <= 0:
        raise UsageError("delta_t must be positive")
    return abs(ts - now) <= delta_t
