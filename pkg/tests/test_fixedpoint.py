"""
Tests for signed fixed-point codes.
"""

import random
from fractions import Fraction

import pytest

from pega.fixedpoint import (FixedCode, decode, encode, reciprocal_code, round_half_away, signed,
                             uniform_code)

# Any odd modulus works for the encoding; this one is a 256-bit prime
N = 2 ** 256 - 189


def test_encode_examples():
    assert encode(0, 106, N) == FixedCode(0, 106)
    assert encode(Fraction(1, 2), 106, N).raw == 2 ** 105
    assert encode(-1, 10, N).raw == N - 1024


def test_decode_examples():
    assert decode(FixedCode(2 ** 105, 106), N) == Fraction(1, 2)
    assert decode(FixedCode(N - 2 ** 106, 106), N) == -1


def test_dyadic_round_trip_is_exact():
    rng = random.Random(1)
    for _ in range(1000):
        scale = rng.randrange(0, 107)
        value = Fraction(rng.randrange(-2 ** 100, 2 ** 100), 2 ** rng.randrange(0, scale + 1))
        assert decode(encode(value, scale, N), N) == value


def test_round_trip_rounds_non_dyadic_values():
    rng = random.Random(2)
    for _ in range(200):
        value = Fraction(rng.randrange(-10 ** 9, 10 ** 9), rng.randrange(1, 10 ** 6))
        expected = Fraction(round_half_away(value * 2 ** 40), 2 ** 40)
        assert decode(encode(value, 40, N), N) == expected


def test_negation_is_modular_complement():
    rng = random.Random(3)
    for _ in range(100):
        value = Fraction(rng.randrange(1, 10 ** 12), rng.randrange(1, 10 ** 3))
        assert encode(-value, 64, N).raw == (N - encode(value, 64, N).raw) % N


@pytest.mark.parametrize("value,expected", [
    (Fraction(5, 2), 3),
    (Fraction(-5, 2), -3),
    (Fraction(1, 3), 0),
    (Fraction(-2, 3), -1),
    (7, 7),
])
def test_round_half_away_from_zero(value, expected):
    assert round_half_away(value) == expected


def test_signed_upper_half_is_negative():
    assert signed(N - 1, N) == -1
    assert signed(N // 2, N) == N // 2
    assert signed(N // 2 + 1, N) < 0


def test_encode_overflow():
    with pytest.raises(OverflowError):
        encode(1, 256, N)
    with pytest.raises(OverflowError):
        encode(-(N // 2), 1, N)


def test_encode_rejects_floats():
    with pytest.raises(TypeError):
        encode(0.5, 10, N)


def test_fixed_code_rejects_negative_fields():
    with pytest.raises(ValueError):
        FixedCode(-1, 0)
    with pytest.raises(ValueError):
        FixedCode(1, -1)


def test_decode_rejects_out_of_range_code():
    with pytest.raises(ValueError):
        decode(FixedCode(N, 0), N)


def test_reciprocal_code():
    assert reciprocal_code(2, 106) == 2 ** 105
    assert reciprocal_code(1, 106) == 2 ** 106
    assert reciprocal_code(3, 106) == 2 ** 106 // 3
    assert reciprocal_code(-4, 10) == -256
    assert reciprocal_code(Fraction(1, 8), 3) == 64


def test_reciprocal_of_zero():
    with pytest.raises(ZeroDivisionError):
        reciprocal_code(0, 106)


def test_scale_bookkeeping():
    # 3 at scale 10 times the code of 1/4 at scale 6 reads as 3/4 at scale 16
    x = encode(3, 10, N)
    quarter = encode(Fraction(1, 4), 6, N).raw
    product = FixedCode(x.raw * quarter % N, 16)
    assert decode(product, N) == Fraction(3, 4)


def test_scale_bookkeeping_with_negative_factor():
    x = encode(-5, 8, N)
    half = reciprocal_code(2, 12) % N
    assert decode(FixedCode(x.raw * half % N, 20), N) == Fraction(-5, 2)


def test_uniform_code_range():
    rng = random.Random(4)
    draws = [uniform_code(rng, 8) for _ in range(2000)]
    assert min(draws) >= 1
    assert max(draws) < 2 ** 8
    assert len(set(draws)) > 200
