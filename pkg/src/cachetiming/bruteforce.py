"""Batched AES-128 key trials over a candidate key space.

Keys are enumerated as an odometer over the 16 positions (position 15
turns fastest), each position walking its candidate list in order.  The
low positions are materialised once as a block of key-byte columns; the
high positions step in Python, and every step checks one block with
vectorised T-table AES on the all-zero plaintext.
"""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

from .aes import RCON, SBOX, T0, T1, T2, T3

_SBOX = np.array(SBOX, dtype=np.uint32)
_T = [np.array(t, dtype=np.uint32) for t in (T0, T1, T2, T3)]
_RCON = [np.uint32(r << 24) for r in RCON]
_M = np.uint32(0xFF)

DEFAULT_BLOCK = 1 << 16


def _sub_rot(w):
    return (
        (_SBOX[(w >> 16) & _M] << 24)
        | (_SBOX[(w >> 8) & _M] << 16)
        | (_SBOX[w & _M] << 8)
        | _SBOX[w >> 24]
    )


def encrypt_zero_batch(key_words: np.ndarray) -> np.ndarray:
    """Encrypt the zero block under each key of an (N, 4) uint32 array.

    Returns the ciphertexts as an (N, 4) array of big-endian words.
    """
    w = [key_words[:, i].copy() for i in range(4)]
    s = list(w)  # zero plaintext: state = round key 0
    for r in range(1, 11):
        w0 = w[0] ^ _sub_rot(w[3]) ^ _RCON[r - 1]
        w1 = w[1] ^ w0
        w2 = w[2] ^ w1
        w3 = w[3] ^ w2
        w = [w0, w1, w2, w3]
        if r < 10:
            s = [
                _T[0][s[c] >> 24]
                ^ _T[1][(s[(c + 1) % 4] >> 16) & _M]
                ^ _T[2][(s[(c + 2) % 4] >> 8) & _M]
                ^ _T[3][s[(c + 3) % 4] & _M]
                ^ w[c]
                for c in range(4)
            ]
        else:
            s = [
                (
                    (_SBOX[s[c] >> 24] << 24)
                    | (_SBOX[(s[(c + 1) % 4] >> 16) & _M] << 16)
                    | (_SBOX[(s[(c + 2) % 4] >> 8) & _M] << 8)
                    | _SBOX[s[(c + 3) % 4] & _M]
                )
                ^ w[c]
                for c in range(4)
            ]
    return np.stack(s, axis=1)


def _split(sizes: Sequence[int], block: int) -> int:
    """First position of the fastest-turning suffix whose product fits ``block``."""
    prod = 1
    split = len(sizes)
    for j in range(len(sizes) - 1, -1, -1):
        if prod * sizes[j] > block:
            break
        prod *= sizes[j]
        split = j
    return split


def search(
    candidates: Sequence[Sequence[int]],
    scrambled_zeros: bytes,
    block: int = DEFAULT_BLOCK,
) -> tuple[bytes | None, int]:
    """Find the first key (in odometer order) that encrypts zeros to the target.

    Returns ``(key, trials)``; ``key`` is None when the space is exhausted,
    in which case ``trials`` equals the size of the space.
    """
    if len(candidates) != 16 or any(len(c) == 0 for c in candidates):
        raise ValueError("need 16 non-empty candidate lists")
    target = np.frombuffer(bytes(scrambled_zeros), dtype=">u4").astype(np.uint32)
    sizes = [len(c) for c in candidates]
    split = _split(sizes, block)
    inner_sizes = sizes[split:]
    n_inner = int(np.prod(inner_sizes, dtype=np.int64)) if inner_sizes else 1

    # inner key bytes for every inner index, position 15 fastest
    idx = np.arange(n_inner, dtype=np.int64)
    inner_cols = {}
    for j in range(15, split - 1, -1):
        idx, digit = np.divmod(idx, sizes[j])
        inner_cols[j] = np.asarray(candidates[j], dtype=np.uint32)[digit]

    inner_words = []
    for c in range(4):
        acc = np.zeros(n_inner, dtype=np.uint32)
        for row in range(4):
            if 4 * c + row >= split:
                acc |= inner_cols[4 * c + row] << np.uint32(24 - 8 * row)
        inner_words.append(acc)

    trials = 0
    keys = np.empty((n_inner, 4), dtype=np.uint32)
    for outer in itertools.product(*candidates[:split]):
        for c in range(4):
            const = 0
            for row in range(4):
                if 4 * c + row < split:
                    const |= outer[4 * c + row] << (24 - 8 * row)
            np.bitwise_or(inner_words[c], np.uint32(const), out=keys[:, c])
        ct = encrypt_zero_batch(keys)
        hits = np.flatnonzero((ct == target).all(axis=1))
        if hits.size:
            i = int(hits[0])
            return keys[i].astype(">u4").tobytes(), trials + i + 1
        trials += n_inner
    return None, trials
