import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cachetiming.aes import Lookup, LookupTrace, encrypt_payload
from cachetiming.cache import (
    LAB_CACHE, CacheConfig, CacheState, charge_access, evicted_lines, initial_state,
    line_of, reset_cache, simulate_encryption,
)

DEFAULT = CacheConfig()


def trace_of(rounds):
    """Build a one-block trace from a list of 10 per-round (table, index) lists."""
    acc = [Lookup(t, i, r) for r, lookups in enumerate(rounds) for t, i in lookups]
    return LookupTrace(acc)


def test_reset_empties_and_is_idempotent():
    s = CacheState([{1, 2}, {3}, set(), set(), {0}])
    s = reset_cache(s)
    assert s == CacheState()
    assert reset_cache(s) == CacheState()


def test_access_after_reset_misses():
    s = reset_cache(CacheState([{0}, set(), set(), set(), set()]))
    _, cost = charge_access(s, 0, 0, DEFAULT)
    assert cost == DEFAULT.miss_cycles


def test_charge_access_hit_miss_and_line_sharing():
    s = CacheState()
    s, c1 = charge_access(s, 0, 5, DEFAULT)
    s, c2 = charge_access(s, 0, 5, DEFAULT)
    s, c3 = charge_access(s, 0, 6, DEFAULT)
    assert (c1, c2, c3) == (40, 3, 3)
    # 64-byte lines hold 16 four-byte entries: index 16 starts a new line
    s, c4 = charge_access(s, 0, 16, DEFAULT)
    assert c4 == 40
    # tables do not share lines
    s, c5 = charge_access(s, 1, 5, DEFAULT)
    assert c5 == 40


def test_line_arithmetic():
    assert [line_of(0, i, DEFAULT) for i in (0, 15, 16, 255)] == [0, 0, 1, 15]
    assert [line_of(4, i, DEFAULT) for i in (0, 63, 64, 255)] == [0, 0, 1, 3]


def test_cold_round_costs():
    # round 0: 16 lookups on 16 distinct lines (4 per table); later rounds reuse them
    r0 = [(t, 16 * k) for k in range(4) for t in range(4)]
    rounds = [r0] + [r0] * 9
    out = simulate_encryption(trace_of(rounds), DEFAULT)
    assert out == [[690] + [98] * 9]


def test_default_config_starts_cold():
    assert initial_state(DEFAULT) == CacheState()


def test_cache_persists_across_blocks():
    _, tr = encrypt_payload(bytes(16), bytes(32))
    first, second = simulate_encryption(tr, DEFAULT)
    # the second block is the same plaintext, so every line is already loaded
    assert second == [DEFAULT.base_round_cycles + 16 * DEFAULT.hit_cycles] * 10
    assert sum(first) > sum(second)


def test_noise_free_is_deterministic():
    _, tr = encrypt_payload(bytes(range(16)), bytes(range(48)))
    assert simulate_encryption(tr, LAB_CACHE) == simulate_encryption(tr, LAB_CACHE)


def test_noise_is_seeded():
    cfg = CacheConfig(noise_stddev_cycles=5.0, rng_seed=11)
    _, tr = encrypt_payload(bytes(range(16)), bytes(16))
    a = simulate_encryption(tr, cfg)
    assert a == simulate_encryption(tr, cfg)
    assert a != simulate_encryption(tr, CacheConfig(noise_stddev_cycles=5.0, rng_seed=12))


def test_rejects_bad_round():
    with pytest.raises(ValueError):
        simulate_encryption(LookupTrace([Lookup(0, 0, 10)] * 160), DEFAULT)


@pytest.mark.parametrize("kw", [
    dict(line_size_bytes=48), dict(line_size_bytes=2), dict(miss_cycles=2),
    dict(hit_cycles=-1), dict(evicted_fraction=1.5), dict(noise_stddev_cycles=-1),
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        CacheConfig(**kw)


def test_config_text_round_trip(tmp_path):
    p = tmp_path / "lab.cache"
    LAB_CACHE.save(p)
    assert CacheConfig.load(p) == LAB_CACHE
    assert CacheConfig.from_text("miss_cycles = 60\n# comment\n") == CacheConfig(miss_cycles=60)
    with pytest.raises(ValueError):
        CacheConfig.from_text("bogus = 1")


def test_evicted_layout_is_fixed_per_seed():
    gone = evicted_lines(LAB_CACHE)
    assert [len(g) for g in gone] == [16, 16, 16, 16, 4]
    assert gone == evicted_lines(CacheConfig(line_size_bytes=4, evicted_fraction=1 / 16, layout_seed=2014))
    state = initial_state(LAB_CACHE)
    for t, g in enumerate(gone):
        assert not (state.resident[t] & g)


keys = st.binary(min_size=16, max_size=16)


@given(keys, st.binary(min_size=16, max_size=64).filter(lambda b: len(b) % 16 == 0))
@settings(max_examples=40, deadline=None)
def test_bounds_and_round_floor(key, payload):
    _, tr = encrypt_payload(key, payload)
    cfg = DEFAULT
    out = simulate_encryption(tr, cfg)
    blocks = len(out)
    total = sum(map(sum, out))
    assert blocks * (10 * cfg.base_round_cycles + 160 * cfg.hit_cycles) <= total
    assert total <= blocks * (10 * cfg.base_round_cycles + 160 * cfg.miss_cycles)
    assert all(c >= cfg.base_round_cycles + 16 * cfg.hit_cycles for r in out for c in r)


@given(keys, st.binary(min_size=16, max_size=16), st.integers(40, 200))
@settings(max_examples=40, deadline=None)
def test_monotone_in_miss_cost(key, pt, miss):
    _, tr = encrypt_payload(key, pt)
    lo = simulate_encryption(tr, LAB_CACHE)
    hi = simulate_encryption(tr, CacheConfig(**{**LAB_CACHE.__dict__, "miss_cycles": miss}))
    assert all(h >= l for a, b in zip(hi, lo) for h, l in zip(a, b))


def test_signal_exists_by_first_byte():
    rng = np.random.default_rng(0)
    key = bytes(range(16))
    groups = {}
    for _ in range(4096):
        pt = rng.bytes(16)
        _, tr = encrypt_payload(key, pt)
        groups.setdefault(pt[0], []).append(sum(map(sum, simulate_encryption(tr, LAB_CACHE))))
    means = [np.mean(v) for v in groups.values()]
    assert max(means) - min(means) > 0
    # values whose first lookup lands on an evicted line are visibly slower
    gone = evicted_lines(LAB_CACHE)[0]
    slow = [np.mean(v) for b, v in groups.items() if (b ^ key[0]) in gone]
    fast = [np.mean(v) for b, v in groups.items() if (b ^ key[0]) not in gone]
    assert np.mean(slow) - np.mean(fast) > 15
