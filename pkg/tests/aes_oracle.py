"""Textbook byte-oriented AES-128 used only as a test oracle.

Deliberately shares nothing with the package: the S-box comes from
brute-force inversion in GF(2^8) and rounds work on a 4x4 byte state.
"""


def gmul(a, b):
    p = 0
    for _ in range(8):
        if b & 1:
            p ^= a
        hi = a & 0x80
        a = (a << 1) & 0xFF
        if hi:
            a ^= 0x1B
        b >>= 1
    return p


def _sbox():
    inv = [0] * 256
    for a in range(1, 256):
        for b in range(1, 256):
            if gmul(a, b) == 1:
                inv[a] = b
                break
    box = []
    for x in range(256):
        b = inv[x]
        y = 0
        for i in range(8):
            bit = (b >> i) ^ (b >> ((i + 4) % 8)) ^ (b >> ((i + 5) % 8)) ^ (b >> ((i + 6) % 8)) ^ (b >> ((i + 7) % 8))
            y |= (bit & 1) << i
        box.append(y ^ 0x63)
    return box


SBOX = _sbox()


def key_schedule(key):
    rcon = 1
    words = [list(key[4 * i:4 * i + 4]) for i in range(4)]
    for i in range(4, 44):
        t = list(words[i - 1])
        if i % 4 == 0:
            t = t[1:] + t[:1]
            t = [SBOX[v] for v in t]
            t[0] ^= rcon
            rcon = gmul(rcon, 2)
        words.append([a ^ b for a, b in zip(words[i - 4], t)])
    return words


def encrypt(key, block):
    words = key_schedule(key)
    # state[r][c] = block[r + 4c]
    st = [[block[r + 4 * c] for c in range(4)] for r in range(4)]

    def add_round_key(rnd):
        for c in range(4):
            for r in range(4):
                st[r][c] ^= words[4 * rnd + c][r]

    add_round_key(0)
    for rnd in range(1, 11):
        for r in range(4):
            st[r] = [SBOX[v] for v in st[r]]
        for r in range(1, 4):
            st[r] = st[r][r:] + st[r][:r]
        if rnd != 10:
            for c in range(4):
                a = [st[r][c] for r in range(4)]
                st[0][c] = gmul(a[0], 2) ^ gmul(a[1], 3) ^ a[2] ^ a[3]
                st[1][c] = a[0] ^ gmul(a[1], 2) ^ gmul(a[2], 3) ^ a[3]
                st[2][c] = a[0] ^ a[1] ^ gmul(a[2], 2) ^ gmul(a[3], 3)
                st[3][c] = gmul(a[0], 3) ^ a[1] ^ a[2] ^ gmul(a[3], 2)
        add_round_key(rnd)
    return bytes(st[r][c] for c in range(4) for r in range(4))


def word(w):
    return int.from_bytes(bytes(w), "big")
