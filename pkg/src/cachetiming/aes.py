"""AES-128 encryption with T-tables and a lookup trace.

Every table read made during an encryption is recorded as a
``Lookup(table_id, index, round)``.  Tables 0..3 are the 1 KiB T-tables
used by the nine full rounds; table 4 is the 256-byte S-box used by the
final round.  The trace is what the cache model charges for.

State layout is the FIPS-197 column-major one: byte ``j`` of the block
sits in column ``j // 4``, row ``j % 4``.  Within a round the 16 lookups
are issued column by column, and inside a column by table (T0..T3), so the
round-0 lookup ``i`` reads state byte ``ROUND_BYTE_ORDER[i]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple

BLOCK_SIZE = 16
ROUNDS = 10
SBOX_TABLE = 4

# state byte read by each of the 16 lookups of a round (ShiftRows folded in)
ROUND_BYTE_ORDER = tuple(4 * ((c + r) % 4) + r for c in range(4) for r in range(4))


def _xtime(a: int) -> int:
    a <<= 1
    return (a ^ 0x11B) & 0xFF if a & 0x100 else a


def _build_sbox() -> list[int]:
    # walk the multiplicative group with generator 3 to get inverses
    sbox = [0] * 256
    p = q = 1
    while True:
        p = p ^ _xtime(p)
        q ^= q << 1
        q ^= q << 2
        q ^= q << 4
        q &= 0xFF
        if q & 0x80:
            q ^= 0x09
        x = q ^ (q << 1 | q >> 7) ^ (q << 2 | q >> 6) ^ (q << 3 | q >> 5) ^ (q << 4 | q >> 4)
        sbox[p] = (x ^ 0x63) & 0xFF
        if p == 1:
            break
    sbox[0] = 0x63
    return sbox


SBOX = _build_sbox()


def _ror8(w: int) -> int:
    return ((w >> 8) | (w << 24)) & 0xFFFFFFFF


def _build_ttables() -> list[list[int]]:
    t0 = []
    for x in range(256):
        s = SBOX[x]
        s2 = _xtime(s)
        t0.append((s2 << 24) | (s << 16) | (s << 8) | (s2 ^ s))
    t1 = [_ror8(w) for w in t0]
    t2 = [_ror8(w) for w in t1]
    t3 = [_ror8(w) for w in t2]
    return [t0, t1, t2, t3]


T0, T1, T2, T3 = _build_ttables()
RCON = (0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36)


class Lookup(NamedTuple):
    table_id: int
    index: int
    round: int


@dataclass
class LookupTrace:
    accesses: list[Lookup] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.accesses)

    @property
    def n_blocks(self) -> int:
        return len(self.accesses) // (BLOCK_SIZE * ROUNDS)


def _check_len(data: bytes, what: str) -> bytes:
    data = bytes(data)
    if len(data) != BLOCK_SIZE:
        raise ValueError(f"{what} must be {BLOCK_SIZE} bytes, got {len(data)}")
    return data


@lru_cache(maxsize=64)
def _expand(key: bytes) -> tuple[int, ...]:
    w = [int.from_bytes(key[4 * i:4 * i + 4], "big") for i in range(4)]
    for i in range(4, 44):
        t = w[i - 1]
        if i % 4 == 0:
            t = ((t << 8) | (t >> 24)) & 0xFFFFFFFF
            t = (SBOX[t >> 24] << 24) | (SBOX[(t >> 16) & 0xFF] << 16) | (SBOX[(t >> 8) & 0xFF] << 8) | SBOX[t & 0xFF]
            t ^= RCON[i // 4 - 1] << 24
        w.append(w[i - 4] ^ t)
    return tuple(w)


def expand_key(key: bytes) -> list[int]:
    """Return the 44 round-key words of the AES-128 key schedule."""
    return list(_expand(_check_len(key, "key")))


def encrypt_block(
    key: bytes,
    plaintext: bytes,
    round_hook: Callable[[int], None] | None = None,
) -> tuple[bytes, LookupTrace]:
    """Encrypt one block, returning the ciphertext and its lookup trace.

    ``round_hook(r)`` is called after each of the ten rounds; the hardware
    timing path uses it to measure and pad rounds in place.
    """
    rk = _expand(_check_len(key, "key"))
    pt = _check_len(plaintext, "plaintext")
    acc: list[Lookup] = []
    ct = _encrypt_into(rk, pt, acc, round_hook)
    return ct, LookupTrace(acc)


def _encrypt_into(rk, pt, acc, round_hook=None) -> bytes:
    s = [int.from_bytes(pt[4 * i:4 * i + 4], "big") ^ rk[i] for i in range(4)]
    add = acc.append
    for r in range(ROUNDS - 1):
        t = []
        for c in range(4):
            a = s[c] >> 24
            b = (s[(c + 1) % 4] >> 16) & 0xFF
            d = (s[(c + 2) % 4] >> 8) & 0xFF
            e = s[(c + 3) % 4] & 0xFF
            add(Lookup(0, a, r))
            add(Lookup(1, b, r))
            add(Lookup(2, d, r))
            add(Lookup(3, e, r))
            t.append(T0[a] ^ T1[b] ^ T2[d] ^ T3[e] ^ rk[4 * (r + 1) + c])
        s = t
        if round_hook is not None:
            round_hook(r)
    out = bytearray(16)
    r = ROUNDS - 1
    for c in range(4):
        idx = (
            s[c] >> 24,
            (s[(c + 1) % 4] >> 16) & 0xFF,
            (s[(c + 2) % 4] >> 8) & 0xFF,
            s[(c + 3) % 4] & 0xFF,
        )
        k = rk[40 + c]
        for row, x in enumerate(idx):
            add(Lookup(SBOX_TABLE, x, r))
            out[4 * c + row] = SBOX[x] ^ ((k >> (24 - 8 * row)) & 0xFF)
    if round_hook is not None:
        round_hook(r)
    return bytes(out)


def encrypt_payload(
    key: bytes,
    payload: bytes,
    round_hook: Callable[[int], None] | None = None,
) -> tuple[bytes, LookupTrace]:
    """ECB-encrypt a payload whose length is a positive multiple of 16."""
    payload = bytes(payload)
    if not payload or len(payload) % BLOCK_SIZE:
        raise ValueError(f"payload length must be a positive multiple of 16, got {len(payload)}")
    rk = _expand(_check_len(key, "key"))
    acc: list[Lookup] = []
    out = bytearray()
    for i in range(0, len(payload), BLOCK_SIZE):
        out += _encrypt_into(rk, payload[i:i + BLOCK_SIZE], acc, round_hook)
    return bytes(out), LookupTrace(acc)


def scrambled_zeros(key: bytes) -> bytes:
    return encrypt_block(key, bytes(BLOCK_SIZE))[0]
