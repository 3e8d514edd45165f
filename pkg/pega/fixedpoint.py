"""
Signed fixed-point codes in the plaintext ring Z_N.

A rational v at scale l is stored as round(v * 2**l) mod N. Codes above N/2
are negative, so subtraction over ciphertexts wraps the way two's complement
does.
"""

import random
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Union

Number = Union[int, Fraction, Rational]


@dataclass(frozen=True)
class FixedCode:
    """A fixed-point code: raw ring element plus its scale exponent (bits)"""
    raw: int
    scale: int = 0

    def __post_init__(self):
        if self.raw < 0:
            raise ValueError(f"raw code must be non-negative, got {self.raw}")
        if self.scale < 0:
            raise ValueError(f"scale must be non-negative, got {self.scale}")


def round_half_away(value: Fraction) -> int:
    """Round a rational to the nearest integer, ties away from zero"""
    value = Fraction(value)
    magnitude = abs(value)
    rounded = (magnitude.numerator * 2 + magnitude.denominator) // (2 * magnitude.denominator)
    return rounded if value >= 0 else -rounded


def signed(raw: int, modulus: int) -> int:
    """Interpret a ring element as a signed integer (upper half is negative)"""
    raw %= modulus
    return raw if 2 * raw < modulus else raw - modulus


def encode(value: Number, scale: int, modulus: int) -> FixedCode:
    """Encode an exact rational at the given scale.

    Args:
        value: int or Fraction (floats are rejected; they carry binary error)
        scale: number of fractional bits
        modulus: plaintext modulus N

    Returns:
        FixedCode with raw = round(value * 2**scale) mod N

    Raises:
        OverflowError: if |value| * 2**scale is not below N/2
    """
    if isinstance(value, float):
        raise TypeError("encode() takes exact rationals; wrap floats in Fraction explicitly")
    scaled = Fraction(value) * (1 << scale)
    if 2 * abs(scaled) >= modulus:
        raise OverflowError(
            f"|{value}| * 2^{scale} does not fit below N/2 for a {modulus.bit_length()}-bit modulus")
    return FixedCode(round_half_away(scaled) % modulus, scale)


def decode(code: FixedCode, modulus: int) -> Fraction:
    """Exact rational value of a code"""
    if code.raw >= modulus:
        raise ValueError(f"raw code {code.raw} is outside Z_N")
    return Fraction(signed(code.raw, modulus), 1 << code.scale)


def reciprocal_code(y: Number, scale: int) -> int:
    """round((1/y) * 2**scale) as a signed integer.

    This is the public scalar S2 hands back in division: multiplying a
    ciphertext by it divides the plaintext by y and adds `scale` bits.
    """
    y = Fraction(y)
    if y == 0:
        raise ZeroDivisionError("reciprocal of zero")
    return round_half_away(Fraction(1 << scale) / y)


def uniform_code(rng: random.Random, scale: int) -> int:
    """Raw code of a uniform variate in the open interval (0, 1) at `scale`.

    Both the encrypted selection and its plaintext mirror draw thresholds
    through this function so they consume the stream identically.
    """
    return rng.randrange(1, 1 << scale)
