import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from dyntrack.bits import (
    Bitstring,
    all_ones,
    hamming,
    in_ball,
    int_to_packed,
    pack_rows,
    packed_to_hex,
    random_bitstring,
    sample_at_distance,
    unpack_rows,
)

B = Bitstring.from_str


def bitstrings(n_min=1, n_max=16):
    return st.integers(n_min, n_max).flatmap(
        lambda n: st.integers(0, 2**n - 1).map(lambda v: Bitstring(n, v))
    )


def same_length(k, n_max=16):
    return st.integers(1, n_max).flatmap(
        lambda n: st.tuples(*[st.integers(0, 2**n - 1).map(lambda v, n=n: Bitstring(n, v)) for _ in range(k)])
    )


@pytest.mark.parametrize(
    "x, y, d",
    [("1111", "1111", 0), ("1111", "0000", 4), ("1010", "1001", 2)],
)
def test_hamming_examples(x, y, d):
    assert hamming(B(x), B(y)) == d


def test_hamming_rejects_mixed_lengths():
    with pytest.raises(ValueError):
        hamming(B("101"), B("1010"))


@given(same_length(3))
def test_triangle_inequality(xyz):
    x, y, z = xyz
    assert hamming(x, z) <= hamming(x, y) + hamming(y, z)


@given(same_length(2))
def test_hamming_matches_positionwise_count(xy):
    x, y = xy
    assert hamming(x, y) == sum(a != b for a, b in zip(x.bits, y.bits))


def test_in_ball_examples():
    x = B("0110")
    assert in_ball(x, x, 0)
    assert not in_ball(B("0000"), B("1111"), 3)
    assert in_ball(B("0111"), B("1111"), 1)


@pytest.mark.parametrize("n", range(1, 11))
def test_in_ball_exhaustive(n):
    # one centre per length is enough: the predicate only sees x XOR c
    c = Bitstring(n, (0b1011011011 >> (10 - n)) if n < 10 else 0b1011011011)
    for v in range(2**n):
        x = Bitstring(n, v)
        d = bin(v ^ c.value).count("1")
        for r in range(n + 1):
            assert in_ball(x, c, r) == (d <= r)


def test_in_ball_rejects_negative_radius():
    with pytest.raises(ValueError):
        in_ball(B("01"), B("01"), -1)


def test_all_ones():
    assert str(all_ones(3)) == "111"
    assert hamming(all_ones(7), all_ones(7)) == 0
    assert in_ball(all_ones(5), all_ones(5), 0)


def test_sample_at_distance_full_flip(rng):
    c = B("1100")
    assert sample_at_distance(c, 4, rng) == B("0011")


@given(bitstrings(1, 40), st.data())
def test_sample_at_distance_postcondition(c, data):
    ell = data.draw(st.integers(1, c.n))
    seed = data.draw(st.integers(0, 2**32))
    y = sample_at_distance(c, ell, np.random.default_rng(seed))
    assert hamming(c, y) == ell


def test_sample_at_distance_rejects_bad_distance(rng):
    with pytest.raises(ValueError):
        sample_at_distance(B("0101"), 5, rng)
    with pytest.raises(ValueError):
        sample_at_distance(B("0101"), 0, rng)


def test_single_flip_frequencies(rng):
    c = all_ones(4)
    draws = 10**6
    counts = {}
    for _ in range(draws):
        y = sample_at_distance(c, 1, rng).value
        counts[y] = counts.get(y, 0) + 1
    assert len(counts) == 4
    sigma = math.sqrt(0.25 * 0.75 / draws)
    for cnt in counts.values():
        assert abs(cnt / draws - 0.25) <= 3 * sigma


@pytest.mark.parametrize("n", [4, 5, 6])
def test_sample_at_distance_uniform_chi_square(n):
    rng = np.random.default_rng(n)
    c = Bitstring(n, 0b101101 & (2**n - 1))
    draws = 10**6 // n
    for ell in range(1, n + 1):
        cands = [c.value ^ sum(1 << (n - 1 - i) for i in idx) for idx in itertools.combinations(range(n), ell)]
        index = {v: k for k, v in enumerate(cands)}
        counts = np.zeros(len(cands))
        for _ in range(draws):
            counts[index[sample_at_distance(c, ell, rng).value]] += 1
        if len(cands) > 1:
            assert stats.chisquare(counts).pvalue > 1e-6


# representation ----------------------------------------------------------


def test_string_and_hex_layout():
    x = B("10000000" + "00000001")
    assert x.to_hex() == "8001"
    assert Bitstring.from_hex("8001", 16) == x
    # partial last nibble is left-aligned
    y = B("101")
    assert y.to_hex() == "a"
    assert Bitstring.from_hex("a", 3) == y


@given(bitstrings(1, 70))
def test_roundtrips(x):
    assert Bitstring.from_str(str(x)) == x
    assert Bitstring.from_hex(x.to_hex(), x.n) == x
    assert Bitstring.from_array(x.to_array()) == x
    assert Bitstring.parse(str(x)) == x
    assert packed_to_hex(np.frombuffer(int_to_packed(x.value, x.n), dtype=np.uint8), x.n) == x.to_hex()


def test_indexing_is_left_to_right():
    x = B("1000")
    assert x[0] == 1 and x[3] == 0
    assert x.count_ones() == 1


def test_immutable():
    x = B("10")
    with pytest.raises(AttributeError):
        x.value = 3


def test_invalid_inputs():
    with pytest.raises(ValueError):
        B("10a1")
    with pytest.raises(ValueError):
        Bitstring(3, 8)


def test_pack_unpack_rows(rng):
    rows = rng.random((7, 13)) < 0.5
    assert np.array_equal(unpack_rows(pack_rows(rows), 13), rows)


def test_random_bitstring_length(rng):
    assert random_bitstring(33, rng).n == 33
