import csv
import math

import pytest
from hypothesis import given, strategies as st

from cachetiming.analysis import (
    PLOT_HEADER, SECONDS_PER_YEAR, TABLE1_HEADER, TABLE2_HEADER, CountermeasureReport, SearchBench, efficiency,
    emit_report, extrapolate_search_time, missing_bytes, overhead_multiple, synthetic_space, time_search,
)
from cachetiming.attack import CandidateKeySpace, brute_force, keyspace_size
from cachetiming.aes import scrambled_zeros

# per-key rate implied by the largest row of the paper's search-time table
TABLE_RATE = 18600.58 / 1e12


def test_overhead_examples():
    assert f"{overhead_multiple(10680, 5050):.2f}" == "2.11"
    assert f"{overhead_multiple(6050, 5050):.2f}" == "1.20"
    assert overhead_multiple(777, 777) == 1.0
    with pytest.raises(ValueError):
        overhead_multiple(1, 0)


def test_efficiency_examples():
    assert efficiency(3, 2.10) == pytest.approx(1.43, abs=0.01)
    assert f"{efficiency(3, 2.10):.2f}" == "1.43"
    assert f"{efficiency(2, 1.19):.2f}" == "1.68"
    assert efficiency(0, 5.0) == 0
    with pytest.raises(ValueError):
        efficiency(1, 0)


@given(st.integers(0, 15), st.floats(0.5, 50))
def test_efficiency_monotone(m, s):
    assert efficiency(m + 1, s) > efficiency(m, s)
    if m > 0:
        assert efficiency(m, s * 1.01) < efficiency(m, s)


def test_report_row_format():
    r = CountermeasureReport("fixed:250", 3, 10680.0, 2.10)
    assert r.row() == ["fixed:250", "3", "10680.00", "2.10", "1.43"]


def test_extrapolation_examples():
    _, years = extrapolate_search_time(int(9.4e35), TABLE_RATE)
    assert years == pytest.approx(5.5e20, rel=0.02)
    _, years = extrapolate_search_time(int(2.1e38), TABLE_RATE)
    assert years == pytest.approx(1.2e23, rel=0.05)
    assert extrapolate_search_time(0, TABLE_RATE) == (0, 0)
    sec, years = extrapolate_search_time(2, SearchBench([(10, 1.0)]))
    assert sec == pytest.approx(0.2) and years == pytest.approx(0.2 / SECONDS_PER_YEAR)


def test_bench_fit():
    b = SearchBench([(10, 1.0), (100, 10.0), (1000, 100.0)])
    assert b.seconds_per_key == pytest.approx(0.1)
    assert b.predict(200) == pytest.approx(2 * b.predict(100))
    assert max(b.residuals()) == pytest.approx(0, abs=1e-12)
    with pytest.raises(ValueError):
        SearchBench([]).seconds_per_key


@pytest.mark.parametrize("size", [1, 7, 256, 1000, 65536, 10**6])
def test_synthetic_space(size):
    cs, key = synthetic_space(size)
    assert keyspace_size(cs) == size
    assert all(c[-1] == key[j] for j, c in enumerate(cs.candidates))


def test_synthetic_space_rejects_big_prime():
    with pytest.raises(ValueError):
        synthetic_space(257)


def test_worst_case_search_uses_every_trial():
    cs, key = synthetic_space(1)
    assert brute_force(cs, scrambled_zeros(key)).trials == 1
    cs, key = synthetic_space(10**4)
    res = brute_force(cs, scrambled_zeros(key))
    assert res.key == key and res.trials == 10**4
    assert time_search(10**3) > 0


def test_missing_bytes():
    key = bytes(range(16))
    assert missing_bytes(CandidateKeySpace.full(), key) == 0
    cands = [[b] for b in key]
    for j in (1, 5, 9):
        cands[j] = [(key[j] + 1) % 256]
    assert missing_bytes(CandidateKeySpace(cands), key) == 3


def _read(path):
    lines = [line for line in path.read_text().splitlines() if not line.startswith("#")]
    return list(csv.reader(lines))


def test_empty_report_is_header_only(tmp_path):
    t1, t2, plot = emit_report(tmp_path)
    assert _read(t1) == [TABLE1_HEADER]
    assert _read(t2) == [TABLE2_HEADER]
    assert _read(plot) == [PLOT_HEADER]


def test_report_contents(tmp_path):
    bench = SearchBench([(10**k, 10**k * 1e-6) for k in range(1, 7)])
    reps = [CountermeasureReport("fixed:250", 3, 10680, 2.11), CountermeasureReport("avg", 2, 6050, 1.19)]
    t1, t2, plot = emit_report(tmp_path / "out", reps, bench, comments=["seed=1"])
    rows = _read(plot)
    assert rows[0] == PLOT_HEADER and len(rows) == 7
    assert float(rows[1][0]) == 1.0 and math.isclose(float(rows[1][1]), -5.0)
    assert _read(t2)[1:] == [r.row() for r in reps]
    assert t1.read_text().startswith("# seed=1\n")


def test_report_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        emit_report(blocker / "sub")
