#!/usr/bin/env python3
"""
The encrypted evolutionary engine.

Roles:
  User  generates keys, pseudonymizes and encrypts the instance, and later
        decrypts the reported costs and maps the tour back to city labels
  S1    holds lambda_1, the encrypted costs and the population of
        pseudonymous tours; runs the GA loop
  S2    holds lambda_2 and answers protocol requests

With equal seeds the engine reproduces ga.run_ga on the pseudonymized matrix
generation by generation: both consume the same named streams and the same
operators, and the secure protocols return exactly what their plaintext
counterparts compute.
"""

import logging
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

from tqdm import tqdm

from .channel import Endpoint, TcpServer, close_session, connect_loopback, connect_tcp
from .errors import ScaleMismatch
from .fixedpoint import decode
from .ga import (Chromosome, GaParams, Population, RunStats, Selection, breed, init_population,
                 next_generation)
from .protocols import (DEFAULT_SIGMA, ServerOne, ServerTwo, sec_argmin, sec_cmp, sec_elite,
                        sec_fps, sec_pro, sec_tournament)
from .thpc import Ciphertext, PartialKey, PublicKey, SecretKey, add_all, dec, keygen
from .tsp import (CityMap, CostMatrix, EncryptedTsp, TspInstance, build_matrix, encrypt_tsp,
                  pseudonymize, route_cost_enc)

logger = logging.getLogger(__name__)


@dataclass
class User:
    """Key owner; the only party that ever sees plaintext costs or city labels"""
    public_key: PublicKey
    secret_key: SecretKey
    partial_keys: Tuple[PartialKey, PartialKey]
    city_map: Optional[CityMap] = None

    @classmethod
    def generate(cls, kappa: int, seed: int) -> 'User':
        pk, sk, pk1, pk2 = keygen(kappa, random.Random(seed))
        return cls(pk, sk, (pk1, pk2))

    def decrypt_int(self, ct: Ciphertext) -> int:
        value = decode(dec(self.secret_key, ct), self.public_key.n)
        if value.denominator != 1:
            raise ValueError(f"expected an integer cost, decrypted {value}")
        return value.numerator


@dataclass
class PegaSession:
    """S1's working state plus handles on the simulated S2 and the transport"""
    s1: ServerOne
    s2: ServerTwo
    enc_tsp: EncryptedTsp
    params: GaParams
    cost_bound: int
    streams: Dict[str, random.Random]
    search: str = 'bisect'
    server: Optional[TcpServer] = None
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def endpoint(self) -> Endpoint:
        return self.s1.endpoint

    def close(self):
        close_session(self.s1.endpoint)
        if self.server is not None:
            self.server.join(timeout=5)


@dataclass
class PegaResult:
    """Encrypted outcome held by S1 until the user retrieves it"""
    best_series: List[Ciphertext]
    cost_sums: List[Ciphertext]
    best_tour: Chromosome
    population_size: int


def submit(user: User, problem: Union[TspInstance, CostMatrix], params: GaParams,
           perm_seed: Optional[int] = None, permutation: Optional[Sequence[int]] = None,
           enc_seed: int = 0, crypto_seed: int = 0, transport: str = 'inproc',
           host: str = '127.0.0.1', port: int = 0, sigma: int = DEFAULT_SIGMA,
           search: str = 'bisect', progress: bool = False) -> PegaSession:
    """Pseudonymize and encrypt the problem, then hand it to S1 and S2.

    Args:
        user: key owner; keeps the city map
        problem: instance or cost matrix over original labels
        params: GA parameters (params.scale is the fixed-point scale)
        perm_seed / permutation: source of the city map
        enc_seed: root seed of the per-entry encryption streams
        crypto_seed: root seed of S1's and S2's protocol randomness
        transport: 'inproc' or 'tcp'
    """
    matrix = build_matrix(problem) if isinstance(problem, TspInstance) else problem
    started = time.perf_counter()
    user.city_map, relabeled = pseudonymize(matrix, random.Random(perm_seed), permutation)
    enc_tsp = encrypt_tsp(user.public_key, relabeled, params.scale, enc_seed, progress=progress)
    encrypt_seconds = time.perf_counter() - started
    session = open_session(enc_tsp, user.partial_keys, params, crypto_seed=crypto_seed, transport=transport,
                           host=host, port=port, sigma=sigma, search=search)
    session.timings['encrypt'] = encrypt_seconds
    return session


def open_session(enc_tsp: EncryptedTsp, partial_keys: Tuple[PartialKey, PartialKey], params: GaParams,
                 crypto_seed: int = 0, transport: str = 'inproc', host: str = '127.0.0.1',
                 port: int = 0, sigma: int = DEFAULT_SIGMA, search: str = 'bisect') -> PegaSession:
    """Hand an encrypted instance to S1 (share 1) and S2 (share 2).

    Only the container and the two key shares are needed, so a session can
    start from a container the user encrypted earlier.
    """
    if enc_tsp.scale != params.scale:
        raise ScaleMismatch(f"container is encoded at scale {enc_tsp.scale}, parameters ask for {params.scale}")
    cost_bound = enc_tsp.cost_bound

    s2 = ServerTwo(partial_keys[1], random.Random(params.seeds.selection),
                   random.Random(f"s2/{crypto_seed}"))
    server = None
    if transport == 'tcp':
        server = TcpServer(s2.handle, host, port).start()
        endpoint = connect_tcp(*server.address)
    elif transport == 'inproc':
        endpoint = connect_loopback(s2.handle)
    else:
        raise ValueError(f"unknown transport '{transport}'")
    s1 = ServerOne(partial_keys[0], endpoint, random.Random(f"s1/{crypto_seed}"), sigma)

    logger.info(f"Opened session m={enc_tsp.m} at scale {params.scale}: {enc_tsp.payload_size()} bytes")
    return PegaSession(s1, s2, enc_tsp, params, cost_bound, params.seeds.streams(), search, server,
                       {'encrypt': 0.0})


def gen_initial_pop(session: PegaSession) -> Population:
    return init_population(session.enc_tsp.m, session.params.n, session.streams['population'])


def evaluate(session: PegaSession, population: Population) -> Tuple[List[Ciphertext], int]:
    """Encrypted route costs and the index of the cheapest route"""
    costs = [route_cost_enc(session.enc_tsp, tour) for tour in population]
    return costs, sec_argmin(session.s1, costs, session.cost_bound)


def select(session: PegaSession, costs: List[Ciphertext]) -> List[int]:
    params = session.params
    if len(costs) == 1:
        return [0] * params.n
    if params.selection == Selection.FPS:
        probabilities, _ = sec_pro(session.s1, costs, params.scale)
        return sec_fps(session.s1, probabilities, params.n, session.search)
    return sec_tournament(session.s1, costs, params.k, params.n, session.streams['selection'],
                          session.cost_bound)


def crossover_mutate(session: PegaSession, parents: Population) -> Population:
    return breed(parents, session.params, session.streams['crossover'], session.streams['mutation'])


def run_pega(session: PegaSession, progress: bool = False) -> PegaResult:
    """I -> E -> [S -> C -> M -> E] x generations, entirely at S1"""
    params = session.params
    started = time.perf_counter()
    population = gen_initial_pop(session)
    best: Optional[Ciphertext] = None
    best_tour: Chromosome = []
    best_series, cost_sums = [], []

    for generation in tqdm(range(params.generations + 1), desc="PEGA", unit="gen", disable=not progress):
        if generation:
            elites = []
            if params.elitism:
                elites = [population[i] for i in sec_elite(session.s1, costs, params.elitism,
                                                            session.cost_bound)]
            parents = [population[i] for i in select(session, costs)]
            population = next_generation(crossover_mutate(session, parents), elites)

        costs, leader = evaluate(session, population)
        if best is None or sec_cmp(session.s1, costs[leader], best, session.cost_bound) == 1:
            best = costs[leader]
            best_tour = list(population[leader])
        best_series.append(best)
        cost_sums.append(add_all(costs))

    session.timings['search'] = time.perf_counter() - started
    logger.info(f"PEGA finished {params.generations} generations with "
                f"{session.s1.comparisons} secure comparisons in {session.timings['search']:.2f}s")
    return PegaResult(best_series, cost_sums, best_tour, params.n)


def finalize(user: User, result: PegaResult) -> RunStats:
    """User side: decrypt the series and map the tour back to city labels"""
    stats = RunStats()
    stats.best_costs = [user.decrypt_int(ct) for ct in result.best_series]
    stats.mean_costs = [Fraction(user.decrypt_int(ct), result.population_size) for ct in result.cost_sums]
    stats.best_tour = user.city_map.restore(result.best_tour) if user.city_map else list(result.best_tour)
    return stats
