"""
Shared fixtures: deterministic keys per profile, S1/S2 pairs over the
loopback channel, and the small TSPLIB files in tests/data.
"""

import random
from pathlib import Path

import pytest

from pega.channel import connect_loopback
from pega.fixedpoint import encode
from pega.protocols import DEFAULT_SIGMA, ServerOne, ServerTwo
from pega.thpc import enc, keygen
from pega.tsp import load_instance

DATA_DIR = Path(__file__).parent / 'data'
TSPLIB_DIR = Path(__file__).parent.parent / 'data'


@pytest.fixture(scope='session')
def key8():
    return keygen(8, random.Random(8))


@pytest.fixture(scope='session')
def key32():
    return keygen(32, random.Random(32))


@pytest.fixture(scope='session')
def key64():
    return keygen(64, random.Random(64))


@pytest.fixture(scope='session')
def key128():
    return keygen(128, random.Random(128))


@pytest.fixture
def rng():
    return random.Random(20240521)


@pytest.fixture
def encrypt():
    """encrypt(pk, value, scale, rng) -> Ciphertext of an exact rational"""
    def _encrypt(pk, value, scale, rng):
        return enc(pk, encode(value, scale, pk.n), rng)
    return _encrypt


@pytest.fixture
def make_parties():
    """make_parties(keys, ...) -> (S1, S2) joined by the loopback transport"""
    def _make(keys, selection_seed=7, crypto_seed=0, on_reveal=None, sigma=DEFAULT_SIGMA):
        _, _, share1, share2 = keys
        s2 = ServerTwo(share2, random.Random(selection_seed), random.Random(f"s2/{crypto_seed}"),
                       on_reveal)
        s1 = ServerOne(share1, connect_loopback(s2.handle), random.Random(f"s1/{crypto_seed}"), sigma)
        return s1, s2
    return _make


@pytest.fixture
def data_file():
    def _path(name):
        return DATA_DIR / name
    return _path


@pytest.fixture
def tiny3():
    return load_instance(DATA_DIR / 'tiny3.tsp')


@pytest.fixture
def tsplib():
    """Load data/<name>.tsp, skipping the test when it has not been fetched"""
    def _load(name):
        path = TSPLIB_DIR / f"{name}.tsp"
        if not path.exists():
            pytest.skip(f"{path} not present; run fetch_tsplib.py")
        return load_instance(path)
    return _load
