#!/usr/bin/env python3
"""
Threshold Paillier cryptosystem with a (2, 2) split of the decryption key.

The modulus is a product of two safe primes and g = N + 1. The secret
lambda is split into shares lambda_1 + lambda_2 = 0 (mod lambda) and
= 1 (mod N), so either share alone yields noise while the product of both
partial decryptions decrypts.

Serialization: every object is a version byte, a kind byte and a sequence of
integers, each as a 4-byte big-endian length followed by its minimal
big-endian encoding (zero is the empty string).
"""

import hashlib
import logging
import math
import random
import struct
import time
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from phe import util as phe_util
from phe.util import is_prime

from .errors import MalformedCiphertext, ScaleMismatch
from .fixedpoint import FixedCode

logger = logging.getLogger(__name__)

SERIAL_VERSION = 1
PRIMALITY_ROUNDS = 64

KIND_PUBLIC_KEY = 0x01
KIND_SECRET_KEY = 0x02
KIND_PARTIAL_KEY = 0x03
KIND_CIPHERTEXT = 0x04
KIND_INTS = 0x05

# Named key sizes; values are kappa (bits per safe prime), so |N| = 2 * kappa
PROFILES = {
    'test32': 32,
    'test64': 64,
    'test128': 128,
    'experiment': 128,     # |N| = 256, benchmark runs
    'standard': 512,
    'hardened': 1024,
}

_SMALL_PRIMES = [p for p in range(3, 2000) if all(p % d for d in range(2, int(p ** 0.5) + 1))]


# phe returns gmpy2 mpz values when gmpy2 is installed; keep plain ints
def powmod(a: int, b: int, c: int) -> int:
    return int(phe_util.powmod(a, b, c))


def invert(a: int, b: int) -> int:
    return int(phe_util.invert(a, b))


@dataclass(frozen=True)
class PublicKey:
    n: int
    g: int

    @property
    def nsquare(self) -> int:
        return self.n * self.n

    @property
    def half(self) -> int:
        """Largest integer not above N/2"""
        return self.n // 2

    def fingerprint(self) -> bytes:
        """8-byte identifier used in container headers"""
        return hashlib.sha256(public_key_to_bytes(self)).digest()[:8]

    def __repr__(self):
        return f"<PublicKey {self.fingerprint().hex()} ({self.n.bit_length()} bits)>"


@dataclass(frozen=True)
class SecretKey:
    public_key: PublicKey
    lam: int
    mu: int

    def __repr__(self):
        return f"<SecretKey for {self.public_key!r}>"


@dataclass(frozen=True)
class PartialKey:
    public_key: PublicKey
    index: int
    share: int

    def __repr__(self):
        return f"<PartialKey {self.index} for {self.public_key!r}>"


@dataclass(frozen=True)
class Ciphertext:
    """Ciphertext in Z_{N^2}; `scale` is public metadata, not encrypted"""
    public_key: PublicKey
    value: int
    scale: int = 0

    def __repr__(self):
        return f"<Ciphertext scale={self.scale} {hex(self.value)[:12]}...>"


@dataclass(frozen=True)
class PartialDecryption:
    public_key: PublicKey
    index: int
    value: int
    scale: int = 0


def _passes_sieve(candidate: int) -> bool:
    for p in _SMALL_PRIMES:
        if candidate == p:
            return True
        if candidate % p == 0:
            return False
    return True


def generate_safe_prime(bits: int, rng: random.Random) -> int:
    """Random safe prime p = 2p' + 1 with exactly `bits` bits"""
    if bits < 4:
        raise ValueError(f"safe primes need at least 4 bits, got {bits}")
    while True:
        sub = rng.getrandbits(bits - 1) | (1 << (bits - 2)) | 1
        p = 2 * sub + 1
        if p.bit_length() != bits:
            continue
        if not (_passes_sieve(sub) and _passes_sieve(p)):
            continue
        if is_prime(sub, PRIMALITY_ROUNDS) and is_prime(p, PRIMALITY_ROUNDS):
            return p


def keygen(kappa: int, rng: random.Random) -> Tuple[PublicKey, SecretKey, PartialKey, PartialKey]:
    """Generate a threshold Paillier key.

    Args:
        kappa: bit length of each safe prime; N has 2 * kappa bits
        rng: seedable random source (keys are reproducible from its seed)

    Returns:
        (public key, secret key, partial key 1, partial key 2)
    """
    if kappa < 32:
        logger.warning(f"kappa={kappa} is below the smallest test profile; use only for exhaustive checks")
    started = time.perf_counter()
    while True:
        p = generate_safe_prime(kappa, rng)
        q = generate_safe_prime(kappa, rng)
        if p == q:
            continue
        n = p * q
        if n.bit_length() == 2 * kappa:
            break

    public_key = PublicKey(n=n, g=n + 1)
    lam = math.lcm(p - 1, q - 1)
    mu = invert(lam, n)
    secret_key = SecretKey(public_key, lam, mu)

    modulus = lam * n
    share_1 = rng.randrange(1, modulus)
    share_2 = (lam * mu - share_1) % modulus

    logger.info(f"Generated {2 * kappa}-bit threshold Paillier key in {time.perf_counter() - started:.2f}s")
    return (public_key, secret_key,
            PartialKey(public_key, 1, share_1),
            PartialKey(public_key, 2, share_2))


def _random_unit(public_key: PublicKey, rng: random.Random) -> int:
    n = public_key.n
    while True:
        r = rng.randrange(1, n)
        if math.gcd(r, n) == 1:
            return r


def enc(public_key: PublicKey, m: FixedCode, rng: random.Random) -> Ciphertext:
    """(1 + mN) * r^N mod N^2 with r uniform in Z_N^*"""
    n, nsquare = public_key.n, public_key.nsquare
    if m.raw >= n:
        raise ValueError(f"plaintext {m.raw} is outside Z_N")
    r = _random_unit(public_key, rng)
    value = (1 + m.raw * n) * powmod(r, n, nsquare) % nsquare
    return Ciphertext(public_key, value, m.scale)


def _check_ciphertext(public_key: PublicKey, value: int):
    if not 0 < value < public_key.nsquare or math.gcd(value, public_key.n) != 1:
        raise MalformedCiphertext("ciphertext is not a unit of Z_{N^2}")


def _l_function(x: int, n: int) -> int:
    if (x - 1) % n:
        raise MalformedCiphertext("L(x) is not integral")
    return (x - 1) // n


def dec(secret_key: SecretKey, ct: Ciphertext) -> FixedCode:
    """Full decryption with lambda and mu"""
    pk = secret_key.public_key
    _check_ciphertext(pk, ct.value)
    x = powmod(ct.value, secret_key.lam, pk.nsquare)
    return FixedCode(_l_function(x, pk.n) * secret_key.mu % pk.n, ct.scale)


def pdec(partial: PartialKey, ct: Ciphertext) -> PartialDecryption:
    """One party's share: ct^{lambda_i} mod N^2"""
    pk = partial.public_key
    _check_ciphertext(pk, ct.value)
    return PartialDecryption(pk, partial.index, powmod(ct.value, partial.share, pk.nsquare), ct.scale)


def tdec(m1: PartialDecryption, m2: PartialDecryption) -> FixedCode:
    """Combine both partial decryptions of the same ciphertext"""
    if m1.public_key != m2.public_key:
        raise MalformedCiphertext("partial decryptions come from different keys")
    if m1.index == m2.index:
        raise MalformedCiphertext(f"both partial decryptions use share {m1.index}")
    pk = m1.public_key
    x = m1.value * m2.value % pk.nsquare
    return FixedCode(_l_function(x, pk.n) % pk.n, m1.scale)


def add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Encryption of (m1 + m2) mod N"""
    if a.scale != b.scale:
        raise ScaleMismatch(f"cannot add scale {a.scale} to scale {b.scale}")
    return Ciphertext(a.public_key, a.value * b.value % a.public_key.nsquare, a.scale)


def scalar_mul(a: Ciphertext, c: int, scale: int = 0) -> Ciphertext:
    """Encryption of c * m mod N.

    `scale` declares the fixed-point scale carried by c; the result's scale
    is a.scale + scale.
    """
    pk = a.public_key
    return Ciphertext(pk, powmod(a.value, c % pk.n, pk.nsquare), a.scale + scale)


def negate(a: Ciphertext) -> Ciphertext:
    """Encryption of N - m"""
    pk = a.public_key
    return Ciphertext(pk, invert(a.value, pk.nsquare), a.scale)


def sub(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    return add(a, negate(b))


def add_all(cts: Sequence[Ciphertext]) -> Ciphertext:
    """Homomorphic sum of a non-empty sequence"""
    if not cts:
        raise ValueError("nothing to add")
    total = cts[0]
    for ct in cts[1:]:
        total = add(total, ct)
    return total


# Serialization

def _int_to_bytes(value: int) -> bytes:
    if value < 0:
        raise ValueError("only non-negative integers are serialized")
    return value.to_bytes((value.bit_length() + 7) // 8, 'big')


def pack_ints(values: Sequence[int], kind: int = KIND_INTS) -> bytes:
    parts = [bytes([SERIAL_VERSION, kind])]
    for value in values:
        raw = _int_to_bytes(value)
        parts.append(struct.pack('>I', len(raw)))
        parts.append(raw)
    return b''.join(parts)


def unpack_ints(data: bytes, kind: int = KIND_INTS) -> List[int]:
    if len(data) < 2:
        raise MalformedCiphertext("serialized object is truncated")
    if data[0] != SERIAL_VERSION:
        raise MalformedCiphertext(f"unsupported serialization version {data[0]}")
    if data[1] != kind:
        raise MalformedCiphertext(f"expected object kind {kind}, found {data[1]}")
    values = []
    offset = 2
    while offset < len(data):
        if offset + 4 > len(data):
            raise MalformedCiphertext("length prefix is truncated")
        (length,) = struct.unpack_from('>I', data, offset)
        offset += 4
        if offset + length > len(data):
            raise MalformedCiphertext("integer body is truncated")
        values.append(int.from_bytes(data[offset:offset + length], 'big'))
        offset += length
    return values


def _expect(values: List[int], count: int, what: str) -> List[int]:
    if len(values) != count:
        raise MalformedCiphertext(f"{what} needs {count} fields, found {len(values)}")
    return values


def public_key_to_bytes(pk: PublicKey) -> bytes:
    return pack_ints([pk.n], KIND_PUBLIC_KEY)


def public_key_from_bytes(data: bytes) -> PublicKey:
    (n,) = _expect(unpack_ints(data, KIND_PUBLIC_KEY), 1, "public key")
    return PublicKey(n=n, g=n + 1)


def secret_key_to_bytes(sk: SecretKey) -> bytes:
    return pack_ints([sk.public_key.n, sk.lam, sk.mu], KIND_SECRET_KEY)


def secret_key_from_bytes(data: bytes) -> SecretKey:
    n, lam, mu = _expect(unpack_ints(data, KIND_SECRET_KEY), 3, "secret key")
    return SecretKey(PublicKey(n=n, g=n + 1), lam, mu)


def partial_key_to_bytes(partial: PartialKey) -> bytes:
    return pack_ints([partial.public_key.n, partial.index, partial.share], KIND_PARTIAL_KEY)


def partial_key_from_bytes(data: bytes) -> PartialKey:
    n, index, share = _expect(unpack_ints(data, KIND_PARTIAL_KEY), 3, "partial key")
    if index not in (1, 2):
        raise MalformedCiphertext(f"partial key index must be 1 or 2, found {index}")
    return PartialKey(PublicKey(n=n, g=n + 1), index, share)


def ciphertext_to_bytes(ct: Ciphertext) -> bytes:
    return pack_ints([ct.scale, ct.value], KIND_CIPHERTEXT)


def ciphertext_from_bytes(pk: PublicKey, data: bytes) -> Ciphertext:
    scale, value = _expect(unpack_ints(data, KIND_CIPHERTEXT), 2, "ciphertext")
    _check_ciphertext(pk, value)
    return Ciphertext(pk, value, scale)
