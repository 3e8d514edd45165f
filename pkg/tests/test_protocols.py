"""
Tests for the secure two-party protocols, each against a plaintext oracle.
"""

import logging
import math
import random
from fractions import Fraction

import pytest
from scipy.stats import chisquare

from pega.channel import MessageType
from pega.errors import DegeneratePopulation, PrecisionError, ProtocolAbort, ScaleMismatch
from pega.fixedpoint import FixedCode, decode
from pega.ga import elite_indices, fps_probabilities, fps_select, tournament_select
from pega.protocols import (ServerOne, ServerTwo, blinding_range, sec_argmin, sec_cmp, sec_div,
                            sec_elite, sec_fps, sec_pro, sec_tournament)
from pega.thpc import dec, enc


class Reveals:
    """Collects what S2 sees in the clear"""

    def __init__(self):
        self.seen = []

    def __call__(self, protocol, value):
        self.seen.append((protocol, value))


# Comparison

@pytest.mark.parametrize("pi", [0, 1])
def test_cmp_examples(key32, make_parties, encrypt, pi):
    s1, _ = make_parties(key32)
    pk = key32[0]
    rng = random.Random(1)
    assert sec_cmp(s1, encrypt(pk, 7, 0, rng), encrypt(pk, 7, 0, rng), 16, pi=pi) == 0
    assert sec_cmp(s1, encrypt(pk, 3, 0, rng), encrypt(pk, 5, 0, rng), 16, pi=pi) == 1
    assert sec_cmp(s1, encrypt(pk, 5, 0, rng), encrypt(pk, 3, 0, rng), 16, pi=pi) == 0


def _exhaustive_cmp(keys, make_parties, encrypt, values):
    pk = keys[0]
    reveals = Reveals()
    s1, _ = make_parties(keys, on_reveal=reveals)
    rng = random.Random(2)
    cts = {v: encrypt(pk, v, 0, rng) for v in values}
    bound = 2 * max(abs(v) for v in values)
    for pi in (0, 1):
        for x in values:
            for y in values:
                assert sec_cmp(s1, cts[x], cts[y], bound, pi=pi) == int(x < y)
    for protocol, delta in reveals.seen:
        assert protocol == 'cmp'
        assert 0 < delta < pk.n


def test_cmp_exhaustive_small_range(key32, make_parties, encrypt):
    _exhaustive_cmp(key32, make_parties, encrypt, range(-20, 21))


@pytest.mark.slow
def test_cmp_exhaustive_full_range(key32, make_parties, encrypt):
    _exhaustive_cmp(key32, make_parties, encrypt, range(-100, 101))


def test_cmp_half_test_matches_branch(key32, make_parties, encrypt):
    # S2's bit u is 0 exactly when the blinded difference is non-negative
    pk = key32[0]
    reveals = Reveals()
    s1, _ = make_parties(key32, on_reveal=reveals)
    rng = random.Random(3)
    for _ in range(200):
        x, y = rng.randrange(-1000, 1000), rng.randrange(-1000, 1000)
        pi = rng.getrandbits(1)
        sec_cmp(s1, encrypt(pk, x, 0, rng), encrypt(pk, y, 0, rng), 2000, pi=pi)
        delta = reveals.seen[-1][1]
        non_negative = x >= y if pi == 0 else y > x
        assert (delta > pk.half) == non_negative


def _random_cmp_pairs(keys, make_parties, encrypt, count, seed):
    pk = keys[0]
    s1, _ = make_parties(keys)
    rng = random.Random(seed)
    scale = 106
    bound = 1 << (42 + scale)
    for _ in range(count):
        x = Fraction(rng.randrange(-2 ** 40, 2 ** 40), 2 ** rng.randrange(0, 30))
        y = x if rng.random() < 0.05 else Fraction(rng.randrange(-2 ** 40, 2 ** 40), 2 ** rng.randrange(0, 30))
        cx, cy = encrypt(pk, x, scale, rng), encrypt(pk, y, scale, rng)
        for pi in (0, 1):
            assert sec_cmp(s1, cx, cy, bound, pi=pi) == int(x < y)


def test_cmp_random_pairs_at_scale_106(key128, make_parties, encrypt):
    _random_cmp_pairs(key128, make_parties, encrypt, 200, 4)


@pytest.mark.slow
def test_cmp_many_random_pairs_at_scale_106(key128, make_parties, encrypt):
    _random_cmp_pairs(key128, make_parties, encrypt, 10 ** 4, 5)


def test_cmp_counts_comparisons(key32, make_parties, encrypt):
    s1, _ = make_parties(key32)
    pk = key32[0]
    rng = random.Random(6)
    for _ in range(5):
        sec_cmp(s1, encrypt(pk, 1, 0, rng), encrypt(pk, 2, 0, rng), 4)
    assert s1.comparisons == 5


def test_sigma_reduction_warns_once_per_bound(key32, make_parties, encrypt, caplog):
    s1, _ = make_parties(key32)
    pk = key32[0]
    rng = random.Random(7)
    x, y = encrypt(pk, 1, 0, rng), encrypt(pk, 2, 0, rng)
    with caplog.at_level(logging.WARNING, logger='pega.protocols'):
        for _ in range(3):
            sec_cmp(s1, x, y, 1 << 40)
        sec_cmp(s1, x, y, 1 << 41)
    warnings = [r for r in caplog.records if 'sigma reduced' in r.getMessage()]
    assert len(warnings) == 2


def test_blinding_range():
    assert blinding_range(2 ** 64 + 1, 15, 8) == 2 ** 8
    assert blinding_range(2 ** 64 + 1, 2 ** 40 - 1, 128) == 2 ** 23
    with pytest.raises(PrecisionError):
        blinding_range(2 ** 64 + 1, 2 ** 63, 128)


def test_cmp_rejects_scale_mismatch(key32, make_parties, encrypt):
    s1, _ = make_parties(key32)
    pk = key32[0]
    rng = random.Random(8)
    with pytest.raises(ScaleMismatch):
        sec_cmp(s1, encrypt(pk, 1, 0, rng), encrypt(pk, 1, 3, rng), 16)


# Division

def test_div_examples(key128, make_parties, encrypt):
    pk, sk, _, _ = key128
    s1, _ = make_parties(key128)
    rng = random.Random(9)
    result = sec_div(s1, encrypt(pk, 10, 0, rng), encrypt(pk, 4, 0, rng), 106)
    assert result.scale == 106
    assert decode(dec(sk, result), pk.n) == Fraction(5, 2)
    assert decode(dec(sk, sec_div(s1, encrypt(pk, 37, 0, rng), encrypt(pk, 1, 0, rng), 106)), pk.n) == 37
    assert decode(dec(sk, sec_div(s1, encrypt(pk, 0, 0, rng), encrypt(pk, 9, 0, rng), 106)), pk.n) == 0


def _div_accuracy(keys, make_parties, encrypt, count, seed):
    pk, sk, _, _ = keys
    reveals = Reveals()
    s1, _ = make_parties(keys, on_reveal=reveals)
    rng = random.Random(seed)
    scale = 106
    for _ in range(count):
        x = rng.randrange(-10 ** 6, 10 ** 6)
        y = rng.choice([-1, 1]) * rng.randrange(1, 10 ** 6)
        result = decode(dec(sk, sec_div(s1, encrypt(pk, x, 0, rng), encrypt(pk, y, 0, rng), scale)), pk.n)
        assert abs(result - Fraction(x, y)) <= abs(x) * Fraction(2, 2 ** scale)
        assert reveals.seen[-1] == ('div', y % pk.n)


def test_div_accuracy(key128, make_parties, encrypt):
    _div_accuracy(key128, make_parties, encrypt, 300, 10)


@pytest.mark.slow
def test_div_accuracy_many(key128, make_parties, encrypt):
    _div_accuracy(key128, make_parties, encrypt, 10 ** 4, 11)


def test_div_by_zero_aborts_session(key32, make_parties, encrypt):
    s1, _ = make_parties(key32)
    pk = key32[0]
    rng = random.Random(12)
    with pytest.raises(ZeroDivisionError):
        sec_div(s1, encrypt(pk, 3, 0, rng), encrypt(pk, 0, 0, rng), 8)
    assert s1.endpoint.closed


# Probabilities

def _decrypt_raw(keys, cts):
    return [dec(keys[1], ct).raw for ct in cts]


def test_pro_examples(key32, make_parties, encrypt):
    pk = key32[0]
    s1, _ = make_parties(key32)
    rng = random.Random(13)
    scale = 16

    probs, fitness = sec_pro(s1, [encrypt(pk, 1, scale, rng), encrypt(pk, 1, scale, rng)], scale)
    assert _decrypt_raw(key32, probs) == [2 ** 31, 2 ** 31]
    assert _decrypt_raw(key32, fitness) == [2 ** 16, 2 ** 16]

    probs, fitness = sec_pro(s1, [encrypt(pk, d, scale, rng) for d in (1, 1, 2)], scale)
    assert _decrypt_raw(key32, fitness) == [3 * 2 ** 16, 3 * 2 ** 16, 2 * 2 ** 16]
    assert _decrypt_raw(key32, probs) == [3 * 2 ** 29, 3 * 2 ** 29, 2 * 2 ** 29]
    assert all(p.scale == 2 * scale for p in probs)


def test_pro_matches_plaintext_quantization(key32, make_parties, encrypt):
    pk = key32[0]
    reveals = Reveals()
    s1, _ = make_parties(key32, on_reveal=reveals)
    rng = random.Random(14)
    scale = 16
    for _ in range(50):
        costs = [rng.randrange(1, 100) for _ in range(rng.randrange(2, 12))]
        probs, fitness = sec_pro(s1, [encrypt(pk, c, scale, rng) for c in costs], scale)
        expected = fps_probabilities(costs, scale)
        assert _decrypt_raw(key32, probs) == expected
        fitness_sum = (len(costs) - 1) * sum(costs) << scale
        assert reveals.seen[-1] == ('pro', fitness_sum)
        # normalization within one reciprocal rounding unit per fitness unit
        assert abs(sum(expected) - 2 ** (2 * scale)) <= fitness_sum // 2


def _ordering(keys, make_parties, encrypt, vectors, seed):
    pk = keys[0]
    s1, _ = make_parties(keys)
    rng = random.Random(seed)
    scale = 24
    for _ in range(vectors):
        costs = [rng.randrange(1, 10 ** 4) for _ in range(rng.randrange(2, 8))]
        probs = _decrypt_raw(keys, sec_pro(s1, [encrypt(pk, c, scale, rng) for c in costs], scale)[0])
        for i in range(len(costs)):
            for j in range(len(costs)):
                if costs[i] < costs[j]:
                    assert probs[i] > probs[j]


def test_pro_inverts_cost_ordering(key32, make_parties, encrypt):
    _ordering(key32, make_parties, encrypt, 100, 15)


@pytest.mark.slow
def test_pro_inverts_cost_ordering_many(key32, make_parties, encrypt):
    _ordering(key32, make_parties, encrypt, 1000, 16)


def test_pro_single_cost_is_degenerate(key32, make_parties, encrypt):
    pk = key32[0]
    s1, _ = make_parties(key32)
    with pytest.raises(DegeneratePopulation):
        sec_pro(s1, [encrypt(pk, 5, 16, random.Random(17))], 16)
    assert s1.endpoint.closed


def test_pro_scale_too_small(key32, make_parties, encrypt):
    pk = key32[0]
    s1, _ = make_parties(key32)
    rng = random.Random(18)
    with pytest.raises(PrecisionError):
        sec_pro(s1, [encrypt(pk, 1000, 2, rng), encrypt(pk, 2000, 2, rng)], 2)


# Roulette wheel

def _encrypted_probabilities(pk, weights, bits, rng):
    total = sum(weights)
    return [enc(pk, FixedCode(w * 2 ** bits // total, bits), rng) for w in weights]


@pytest.mark.parametrize("search", ['bisect', 'recursive'])
def test_fps_single_individual(key32, make_parties, encrypt, search):
    s1, _ = make_parties(key32)
    probs = _encrypted_probabilities(key32[0], [1], 32, random.Random(19))
    assert sec_fps(s1, probs, 5, search=search) == [0] * 5


@pytest.mark.parametrize("search", ['bisect', 'recursive'])
def test_fps_forced_mass(key32, make_parties, search):
    s1, _ = make_parties(key32)
    probs = _encrypted_probabilities(key32[0], [1, 0, 0], 32, random.Random(20))
    assert sec_fps(s1, probs, 40, search=search) == [0] * 40


@pytest.mark.parametrize("search", ['bisect', 'recursive'])
def test_fps_mirrors_plaintext_roulette(key32, make_parties, encrypt, search):
    pk = key32[0]
    rng = random.Random(21)
    scale = 16
    for seed in range(5):
        s1, _ = make_parties(key32, selection_seed=seed)
        costs = [rng.randrange(1, 100) for _ in range(rng.randrange(2, 20))]
        probs, _ = sec_pro(s1, [encrypt(pk, c, scale, rng) for c in costs], scale)
        selected = sec_fps(s1, probs, len(costs), search=search)
        assert selected == fps_select(costs, len(costs), random.Random(seed), scale)


def test_fps_searches_agree(key32, make_parties):
    pk = key32[0]
    rng = random.Random(22)
    weights = [rng.randrange(0, 50) for _ in range(33)] + [1]
    results = []
    for search in ('bisect', 'recursive'):
        s1, _ = make_parties(key32, selection_seed=99)
        results.append(sec_fps(s1, _encrypted_probabilities(pk, weights, 32, rng), 200, search=search))
    assert results[0] == results[1]


def test_fps_rejects_unknown_search(key32, make_parties):
    s1, _ = make_parties(key32)
    with pytest.raises(ValueError):
        sec_fps(s1, _encrypted_probabilities(key32[0], [1, 1], 32, random.Random(23)), search='linear')


def _fps_frequencies(keys, make_parties, draws):
    s1, _ = make_parties(keys, selection_seed=2024)
    probs = _encrypted_probabilities(keys[0], [1, 2, 3, 4], 32, random.Random(24))
    selected = sec_fps(s1, probs, draws)
    observed = [selected.count(i) for i in range(4)]
    return chisquare(observed, [draws * p / 10 for p in (1, 2, 3, 4)]).pvalue


def test_fps_frequencies(key32, make_parties):
    assert _fps_frequencies(key32, make_parties, 2000) > 0.01


@pytest.mark.slow
def test_fps_frequencies_many_draws(key32, make_parties):
    assert _fps_frequencies(key32, make_parties, 10 ** 4) > 0.01


@pytest.mark.parametrize("n", [16, 64, pytest.param(256, marks=pytest.mark.slow)])
def test_fps_comparison_budget(key64, make_parties, encrypt, n):
    pk = key64[0]
    s1, _ = make_parties(key64)
    rng = random.Random(n)
    scale = 32
    probs, _ = sec_pro(s1, [encrypt(pk, rng.randrange(1, 10 ** 4), scale, rng) for _ in range(n)], scale)
    before = s1.comparisons
    sec_fps(s1, probs, n)
    assert s1.comparisons - before <= n * (math.ceil(math.log2(n)) + 1)


# Argmin, tournament, elites

@pytest.mark.parametrize("values,expected", [
    ([5], 0),
    ([3, 3, 2], 2),
    ([2, 2], 0),
    ([4, 1, 1, 7], 1),
    ([-3, 8, -9, -9], 2),
])
def test_argmin_examples(key32, make_parties, encrypt, values, expected):
    pk = key32[0]
    s1, _ = make_parties(key32)
    rng = random.Random(25)
    assert sec_argmin(s1, [encrypt(pk, v, 0, rng) for v in values], 64) == expected
    assert s1.comparisons == len(values) - 1


def test_argmin_over_subset(key32, make_parties, encrypt):
    pk = key32[0]
    s1, _ = make_parties(key32)
    rng = random.Random(26)
    cts = [encrypt(pk, v, 0, rng) for v in (1, 9, 4, 4, 0)]
    assert sec_argmin(s1, cts, 32, indices=[1, 2, 3]) == 2
    with pytest.raises(ValueError):
        sec_argmin(s1, cts, 32, indices=[])


def test_tournament_with_everyone_entered(key32, make_parties, encrypt):
    pk = key32[0]
    s1, _ = make_parties(key32)
    rng = random.Random(27)
    values = [9, 4, 7, 4, 8]
    cts = [encrypt(pk, v, 0, rng) for v in values]
    assert sec_tournament(s1, cts, 5, 6, random.Random(1), 32) == [1] * 6


def test_tournament_mirrors_plaintext(key32, make_parties, encrypt):
    pk = key32[0]
    s1, _ = make_parties(key32)
    rng = random.Random(28)
    for seed in range(5):
        costs = [rng.randrange(1, 50) for _ in range(12)]
        cts = [encrypt(pk, c, 0, rng) for c in costs]
        k = 2 + seed % 3
        assert sec_tournament(s1, cts, k, 12, random.Random(seed), 128) == \
            tournament_select(costs, k, 12, random.Random(seed))


def test_tournament_rejects_small_k(key32, make_parties, encrypt):
    s1, _ = make_parties(key32)
    with pytest.raises(ValueError):
        sec_tournament(s1, [encrypt(key32[0], 1, 0, random.Random(29))] * 3, 1, 3, random.Random(1), 8)


def test_elite_matches_plaintext_order(key32, make_parties, encrypt):
    pk = key32[0]
    s1, _ = make_parties(key32)
    rng = random.Random(30)
    costs = [rng.randrange(1, 6) for _ in range(10)]
    cts = [encrypt(pk, c, 0, rng) for c in costs]
    for e in (0, 1, 4, 10):
        assert sec_elite(s1, cts, e, 16) == elite_indices(costs, e)
    with pytest.raises(ValueError):
        sec_elite(s1, cts, 11, 16)


# Session handling

def test_unexpected_message_aborts(key32, make_parties):
    s1, s2 = make_parties(key32)
    with pytest.raises(ProtocolAbort) as excinfo:
        s1.exchange(MessageType.CMP_RESULT, [1], MessageType.CMP_RESULT)
    assert excinfo.value.code == 4
    assert s1.endpoint.closed
    assert s2.requests == 1


def test_malformed_request_aborts(key32, make_parties):
    s1, _ = make_parties(key32)
    with pytest.raises(ProtocolAbort) as excinfo:
        s1.exchange(MessageType.CMP_BLIND, [1, 2], MessageType.CMP_RESULT)
    assert excinfo.value.code == 3


def test_roles_hold_the_right_shares(key32):
    _, _, share1, share2 = key32
    with pytest.raises(ValueError):
        ServerTwo(share1, random.Random(), random.Random())
    with pytest.raises(ValueError):
        ServerOne(share2, None, random.Random())


def test_protocol_outputs_are_deterministic(key32, make_parties, encrypt):
    pk = key32[0]
    outputs = []
    for _ in range(2):
        s1, _ = make_parties(key32, selection_seed=5, crypto_seed=6)
        rng = random.Random(31)
        costs = [encrypt(pk, c, 16, rng) for c in (40, 25, 31, 60, 25)]
        probs, _ = sec_pro(s1, costs, 16)
        outputs.append((sec_fps(s1, probs), sec_argmin(s1, costs, 1 << 24),
                        [p.value for p in probs], s1.endpoint.transcript.summary()))
    assert outputs[0] == outputs[1]
