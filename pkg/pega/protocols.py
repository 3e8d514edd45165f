#!/usr/bin/env python3
"""
Secure two-party building blocks run between S1 and S2.

S1 holds ciphertexts and the share lambda_1; S2 holds lambda_2 and answers
requests over the channel. Every protocol is a short, strictly alternating
exchange driven by S1:

  sec_cmp        one bit at S1: 0 iff x >= y
  sec_div        x / y by a public reciprocal scalar (S2 sees y)
  sec_pro        selection probabilities from route costs (S2 sees the sum)
  sec_fps        roulette-wheel selection over encrypted prefix sums
  sec_argmin     running minimum, first index wins ties
  sec_tournament k-tournament selection
  sec_elite      the e lowest-cost indices
"""

import logging
import random
from typing import Callable, List, Optional, Sequence, Set, Tuple

from .channel import Endpoint, Frame, MessageType
from .errors import (ChannelClosed, DegeneratePopulation, MalformedCiphertext,
                     PrecisionError, ProtocolAbort, ScaleMismatch)
from .fixedpoint import FixedCode, decode, reciprocal_code, uniform_code
from .ga import draw_entrants
from .thpc import (Ciphertext, PartialDecryption, PartialKey, PublicKey, add, add_all, enc,
                   pack_ints, pdec, scalar_mul, sub, tdec, unpack_ints)

logger = logging.getLogger(__name__)

DEFAULT_SIGMA = 128

ERR_DIVISION_BY_ZERO = 1
ERR_DEGENERATE = 2
ERR_MALFORMED = 3
ERR_UNEXPECTED = 4

Reveal = Callable[[str, int], None]


class ServerTwo:
    """S2: holds lambda_2, decrypts blinded values, answers S1.

    `selection_rng` draws the roulette thresholds (shared with the plaintext
    mirror); `crypto_rng` supplies encryption randomness. `on_reveal`, when
    set, receives every plaintext S2 learns as (protocol, value).
    """

    def __init__(self, partial_key: PartialKey, selection_rng: random.Random,
                 crypto_rng: random.Random, on_reveal: Optional[Reveal] = None):
        if partial_key.index != 2:
            raise ValueError("S2 must hold partial key 2")
        self.partial_key = partial_key
        self.public_key = partial_key.public_key
        self.selection_rng = selection_rng
        self.crypto_rng = crypto_rng
        self.on_reveal = on_reveal
        self.requests = 0

    def handle(self, msg_type: MessageType, payload: bytes) -> Frame:
        self.requests += 1
        try:
            if msg_type == MessageType.CMP_BLIND:
                return self._compare(payload)
            if msg_type == MessageType.DIV_REQ:
                return self._divide(payload)
            if msg_type == MessageType.PRO_SUM:
                return self._probability_scalar(payload)
            if msg_type == MessageType.FPS_REQ:
                return self._thresholds(payload)
            logger.error(f"S2 received unexpected {msg_type.name}")
            return MessageType.ERROR, pack_ints([ERR_UNEXPECTED])
        except ZeroDivisionError:
            logger.error("S2 aborting: division by zero")
            return MessageType.ERROR, pack_ints([ERR_DIVISION_BY_ZERO])
        except DegeneratePopulation as e:
            logger.error(f"S2 aborting: {e}")
            return MessageType.ERROR, pack_ints([ERR_DEGENERATE])
        except MalformedCiphertext as e:
            logger.error(f"S2 aborting: {e}")
            return MessageType.ERROR, pack_ints([ERR_MALFORMED])

    def _reveal(self, protocol: str, value: int):
        if self.on_reveal is not None:
            self.on_reveal(protocol, value)

    def _threshold_decrypt(self, value: int, scale: int, share_1: int) -> FixedCode:
        ct = Ciphertext(self.public_key, value, scale)
        m1 = PartialDecryption(self.public_key, 1, share_1, scale)
        return tdec(m1, pdec(self.partial_key, ct))

    def _compare(self, payload: bytes) -> Frame:
        value, scale, share_1 = _fields(payload, 3)
        delta = self._threshold_decrypt(value, scale, share_1).raw
        self._reveal('cmp', delta)
        u = 0 if delta > self.public_key.half else 1
        return MessageType.CMP_RESULT, bytes([u])

    def _divide(self, payload: bytes) -> Frame:
        value, scale, share_1, ell = _fields(payload, 4)
        code = self._threshold_decrypt(value, scale, share_1)
        self._reveal('div', code.raw)
        y = decode(code, self.public_key.n)
        scalar = reciprocal_code(y, ell)
        return MessageType.DIV_SCALAR, pack_ints([scalar % self.public_key.n])

    def _probability_scalar(self, payload: bytes) -> Frame:
        value, scale, share_1, ell = _fields(payload, 4)
        code = self._threshold_decrypt(value, scale, share_1)
        total = decode(code, self.public_key.n)
        self._reveal('pro', code.raw)
        if total <= 0:
            raise DegeneratePopulation(f"fitness sum is {total}")
        return MessageType.PRO_SCALAR, pack_ints([reciprocal_code(total, ell)])

    def _thresholds(self, payload: bytes) -> Frame:
        count, bits = _fields(payload, 2)
        values = [bits]
        for _ in range(count):
            code = FixedCode(uniform_code(self.selection_rng, bits), bits)
            values.append(enc(self.public_key, code, self.crypto_rng).value)
        return MessageType.FPS_THRESHOLDS, pack_ints(values)


class ServerOne:
    """S1: holds lambda_1 and the channel to S2; drives every protocol"""

    def __init__(self, partial_key: PartialKey, endpoint: Endpoint, rng: random.Random,
                 sigma: int = DEFAULT_SIGMA):
        if partial_key.index != 1:
            raise ValueError("S1 must hold partial key 1")
        self.partial_key = partial_key
        self.public_key: PublicKey = partial_key.public_key
        self.endpoint = endpoint
        self.rng = rng
        self.sigma = sigma
        self.comparisons = 0
        self._reduced_bounds: Set[int] = set()

    def share(self, ct: Ciphertext) -> int:
        return pdec(self.partial_key, ct).value

    def exchange(self, msg_type: MessageType, values: Sequence[int], expected: MessageType) -> bytes:
        reply_type, reply = self.endpoint.request(msg_type, pack_ints(values))
        if reply_type == MessageType.ERROR:
            self.endpoint.close()
            raise _abort_error(_fields(reply, 1)[0])
        if reply_type != expected:
            self.endpoint.close()
            raise ChannelClosed(f"expected {expected.name}, received {reply_type.name}")
        return reply


def _fields(payload: bytes, count: int) -> List[int]:
    values = unpack_ints(payload)
    if len(values) != count:
        raise MalformedCiphertext(f"expected {count} fields, found {len(values)}")
    return values


def _abort_error(code: int) -> Exception:
    if code == ERR_DIVISION_BY_ZERO:
        return ZeroDivisionError("S2 aborted the session: division by zero")
    if code == ERR_DEGENERATE:
        return DegeneratePopulation("S2 aborted the session: fitness sum is not positive")
    return ProtocolAbort(code)


def _same_scale(cts: Sequence[Ciphertext]) -> int:
    scales = {ct.scale for ct in cts}
    if len(scales) != 1:
        raise ScaleMismatch(f"operands carry different scales {sorted(scales)}")
    return scales.pop()


def blinding_range(n: int, bound: int, sigma: int) -> int:
    """Largest admissible r1: r1 <= 2^sigma and r1 * (bound + 1) < N/2"""
    cap = (n // 2) // (bound + 1)
    if cap < 1:
        raise PrecisionError(f"difference bound 2^{bound.bit_length()} is too large for a "
                             f"{n.bit_length()}-bit modulus")
    return min(1 << sigma, cap)


def sec_cmp(s1: ServerOne, x: Ciphertext, y: Ciphertext, bound: int,
            pi: Optional[int] = None) -> int:
    """Secure comparison. Returns 0 if x >= y, 1 if x < y.

    Args:
        s1: S1 role
        x, y: ciphertexts at the same scale
        bound: public bound on |x - y| in raw code units
        pi: force S1's coin (tests exercise both branches)
    """
    _same_scale([x, y])
    pk = s1.public_key
    half = pk.half
    r1_max = blinding_range(pk.n, bound, s1.sigma)
    if r1_max < (1 << s1.sigma) and bound not in s1._reduced_bounds:
        s1._reduced_bounds.add(bound)
        logger.warning(f"sigma reduced from {s1.sigma} to {r1_max.bit_length() - 1} bits "
                       f"for difference bound of {bound.bit_length()} bits")

    coin = s1.rng.getrandbits(1) if pi is None else pi
    r1 = s1.rng.randint(1, r1_max)
    r2 = s1.rng.randint(max(half - r1 + 1, r1 * bound + 1), half)
    if coin == 0:
        blinded = add(scalar_mul(sub(x, y), r1), enc(pk, FixedCode(r1 + r2, x.scale), s1.rng))
    else:
        blinded = add(scalar_mul(sub(y, x), r1), enc(pk, FixedCode(r2, x.scale), s1.rng))

    s1.comparisons += 1
    reply = s1.exchange(MessageType.CMP_BLIND, [blinded.value, blinded.scale, s1.share(blinded)],
                        MessageType.CMP_RESULT)
    if len(reply) != 1 or reply[0] not in (0, 1):
        raise MalformedCiphertext("comparison reply must be a single bit")
    return coin ^ reply[0]


def sec_div(s1: ServerOne, x: Ciphertext, y: Ciphertext, scale: int) -> Ciphertext:
    """Encryption of x * round(2^scale / y), i.e. x / y at x.scale + scale.

    S2 decrypts y to build the reciprocal; a zero divisor aborts the session
    with ZeroDivisionError.
    """
    _same_scale([x, y])
    reply = s1.exchange(MessageType.DIV_REQ, [y.value, y.scale, s1.share(y), scale],
                        MessageType.DIV_SCALAR)
    (scalar,) = _fields(reply, 1)
    return scalar_mul(x, scalar, scale)


def sec_pro(s1: ServerOne, costs: Sequence[Ciphertext], scale: int) -> Tuple[List[Ciphertext], List[Ciphertext]]:
    """Selection probabilities from encrypted route costs.

    v_i = sum - D_i turns minimization into fitness; p_i = v_i * round(2^scale /
    (sum(v) / 2^cost_scale)), so p_i / 2^(cost_scale + scale) ~ v_i / sum(v).

    Returns:
        (probabilities, fitness values) as ciphertexts
    """
    if not costs:
        raise ValueError("sec_pro needs at least one cost")
    _same_scale(costs)
    total = add_all(costs)
    fitness = [sub(total, c) for c in costs]
    fitness_sum = add_all(fitness)
    reply = s1.exchange(MessageType.PRO_SUM,
                        [fitness_sum.value, fitness_sum.scale, s1.share(fitness_sum), scale],
                        MessageType.PRO_SCALAR)
    (scalar,) = _fields(reply, 1)
    if scalar == 0:
        raise PrecisionError(f"reciprocal of the fitness sum rounds to 0 at scale {scale}")
    return [scalar_mul(v, scalar, scale) for v in fitness], fitness


def prefix_sums(values: Sequence[Ciphertext]) -> List[Ciphertext]:
    sums = [values[0]]
    for ct in values[1:]:
        sums.append(add(sums[-1], ct))
    return sums


def request_thresholds(s1: ServerOne, count: int, bits: int) -> List[Ciphertext]:
    reply = s1.exchange(MessageType.FPS_REQ, [count, bits], MessageType.FPS_THRESHOLDS)
    values = unpack_ints(reply)
    if len(values) != count + 1 or values[0] != bits:
        raise MalformedCiphertext("threshold reply does not match the request")
    return [Ciphertext(s1.public_key, v, bits) for v in values[1:]]


def _find_bisect(s1: ServerOne, prefix: List[Ciphertext], r: Ciphertext, bound: int) -> int:
    lo, hi = 0, len(prefix)
    while lo < hi:
        mid = (lo + hi) // 2
        if sec_cmp(s1, prefix[mid], r, bound) == 1:
            lo = mid + 1
        else:
            hi = mid
    return min(lo, len(prefix) - 1)


def _find_recursive(s1: ServerOne, prefix: List[Ciphertext], r: Ciphertext, bound: int) -> int:
    # Indices are 1-based here, as in the binary-search description
    low, high = 1, len(prefix)
    while True:
        if low > high:
            return len(prefix) - 1
        i = (low + high) // 2
        if sec_cmp(s1, prefix[i - 1], r, bound) == 1:
            low = i + 1
            continue
        if i < 2:
            return 0
        if sec_cmp(s1, prefix[i - 2], r, bound) == 1:
            return i - 1
        high = i - 1


def sec_fps(s1: ServerOne, probabilities: Sequence[Ciphertext], count: Optional[int] = None,
            search: str = 'bisect', bound: Optional[int] = None) -> List[int]:
    """Fitness-proportionate selection over encrypted probabilities.

    S2 supplies `count` encrypted thresholds; for each, S1 locates the first
    prefix sum P_i >= r by binary search over sec_cmp. A threshold above P_n
    selects the last individual.

    Returns:
        0-based indices, one per threshold
    """
    if not probabilities:
        raise ValueError("sec_fps needs at least one probability")
    bits = _same_scale(probabilities)
    count = len(probabilities) if count is None else count
    bound = (1 << (bits + 1)) if bound is None else bound
    if search == 'bisect':
        find = _find_bisect
    elif search == 'recursive':
        find = _find_recursive
    else:
        raise ValueError(f"unknown search '{search}'")

    prefix = prefix_sums(probabilities)
    thresholds = request_thresholds(s1, count, bits)
    if len(prefix) == 1:
        return [0] * count
    return [find(s1, prefix, r, bound) for r in thresholds]


def sec_argmin(s1: ServerOne, values: Sequence[Ciphertext], bound: int,
               indices: Optional[Sequence[int]] = None) -> int:
    """Index of the minimum by a running scan; the first index wins ties"""
    candidates = list(range(len(values))) if indices is None else list(indices)
    if not candidates:
        raise ValueError("sec_argmin needs at least one value")
    best = candidates[0]
    for i in candidates[1:]:
        if sec_cmp(s1, values[i], values[best], bound) == 1:
            best = i
    return best


def sec_tournament(s1: ServerOne, values: Sequence[Ciphertext], k: int, count: int,
                   rng: random.Random, bound: int) -> List[int]:
    """k-tournament selection; entrants drawn from S1's selection stream"""
    if k < 2:
        raise ValueError(f"tournament size must be at least 2, got {k}")
    return [sec_argmin(s1, values, bound, draw_entrants(rng, len(values), k))
            for _ in range(count)]


def sec_elite(s1: ServerOne, values: Sequence[Ciphertext], e: int, bound: int) -> List[int]:
    """Indices of the e lowest values, best first"""
    if e > len(values):
        raise ValueError(f"cannot pick {e} elites from {len(values)} individuals")
    remaining = list(range(len(values)))
    chosen = []
    for _ in range(e):
        best = sec_argmin(s1, values, bound, remaining)
        chosen.append(best)
        remaining.remove(best)
    return chosen


__all__ = [
    'ServerOne', 'ServerTwo', 'blinding_range', 'sec_cmp', 'sec_div', 'sec_pro',
    'sec_fps', 'sec_argmin', 'sec_tournament', 'sec_elite', 'prefix_sums', 'request_thresholds',
]
