#!/usr/bin/env python3
"""
Plaintext genetic algorithm for the TSP (GA1: roulette wheel, GA2: k-tournament).

The encrypted engine reuses every operator here and consumes the same named
random streams, so with equal seeds both produce identical populations. The
roulette wheel therefore works on the same quantized integers the secure
probability protocol produces, not on exact rationals.
"""

import bisect
import itertools
import logging
import random
from dataclasses import asdict, dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import pandas as pd
from tqdm import tqdm

from .errors import ConfigError, PrecisionError
from .fixedpoint import reciprocal_code, uniform_code
from .tsp import CostMatrix, route_cost_plain

logger = logging.getLogger(__name__)

Chromosome = List[int]
Population = List[Chromosome]

STREAMS = ('population', 'selection', 'crossover', 'mutation')


class Selection(str, Enum):
    FPS = 'fps'
    TOURNAMENT = 'tournament'


@dataclass(frozen=True)
class Seeds:
    """Independent seeds for the four random streams"""
    population: int = 1
    selection: int = 2
    crossover: int = 3
    mutation: int = 4

    @classmethod
    def derive(cls, root: int) -> 'Seeds':
        rng = random.Random(root)
        return cls(*(rng.getrandbits(64) for _ in STREAMS))

    def streams(self) -> Dict[str, random.Random]:
        return {name: random.Random(getattr(self, name)) for name in STREAMS}


@dataclass(frozen=True)
class GaParams:
    n: int = 300
    crossover_rate: float = 0.1
    mutation_rate: float = 0.15
    selection: Selection = Selection.TOURNAMENT
    k: int = 2
    generations: int = 10000
    elitism: int = 0
    scale: int = 106
    seeds: Seeds = field(default_factory=Seeds)

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"population size must be at least 1, got {self.n}")
        for name in ('crossover_rate', 'mutation_rate'):
            rate = getattr(self, name)
            if not 0 <= rate <= 1:
                raise ConfigError(f"{name} must lie in [0, 1], got {rate}")
        if self.k < 2:
            raise ConfigError(f"tournament size must be at least 2, got {self.k}")
        if self.selection == Selection.TOURNAMENT and self.n > 1 and self.k > self.n:
            raise ConfigError(f"tournament size {self.k} exceeds population size {self.n}")
        if self.elitism < 0 or (self.elitism and self.elitism >= self.n):
            raise ConfigError(f"elitism must lie in [0, n), got {self.elitism}")
        if self.generations < 0:
            raise ConfigError("generations must be non-negative")
        object.__setattr__(self, 'selection', Selection(self.selection))

    def as_dict(self) -> Dict:
        data = asdict(self)
        data['selection'] = self.selection.value
        return data


@dataclass
class RunStats:
    """Per-generation best-so-far and mean cost; row 0 is the initial population"""
    best_costs: List[int] = field(default_factory=list)
    mean_costs: List[Fraction] = field(default_factory=list)
    best_tour: Optional[Chromosome] = None
    seeds: Optional[Seeds] = None

    @property
    def best_cost(self) -> Optional[int]:
        return self.best_costs[-1] if self.best_costs else None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'generation': range(len(self.best_costs)),
            'best_cost': self.best_costs,
            'mean_cost': self.mean_costs,
        })


# Operators

def init_population(m: int, n: int, rng: random.Random) -> Population:
    population = []
    for _ in range(n):
        tour = list(range(1, m + 1))
        rng.shuffle(tour)
        population.append(tour)
    return population


def draw_entrants(rng: random.Random, n: int, k: int) -> List[int]:
    """k distinct tournament entrants in ascending index order"""
    if k > n:
        raise ValueError(f"cannot draw {k} entrants from {n} individuals")
    return sorted(rng.sample(range(n), k))


def fps_probabilities(costs: Sequence[int], scale: int) -> List[int]:
    """Quantized selection weights, identical to the secure protocol's plaintexts.

    v_i = (sum - cost_i) * 2^scale and p_i = v_i * round(2^scale / sum(v)),
    so p_i / 2^(2 * scale) approximates v_i / sum(v).
    """
    total = sum(costs)
    fitness = [(total - c) << scale for c in costs]
    fitness_sum = Fraction(sum(fitness), 1 << scale)
    if fitness_sum <= 0:
        raise ValueError("fitness sum must be positive")
    scalar = reciprocal_code(fitness_sum, scale)
    if scalar == 0:
        raise PrecisionError(f"reciprocal of the fitness sum rounds to 0 at scale {scale}")
    return [v * scalar for v in fitness]


def fps_select(costs: Sequence[int], count: int, rng: random.Random, scale: int) -> List[int]:
    """Roulette-wheel selection by prefix sums and binary search.

    One threshold in (0, 1) per slot, drawn at scale 2 * scale; a threshold
    past the last prefix sum selects the last individual.
    """
    n = len(costs)
    if n == 1:
        return [0] * count
    prefix = list(itertools.accumulate(fps_probabilities(costs, scale)))
    thresholds = [uniform_code(rng, 2 * scale) for _ in range(count)]
    return [min(bisect.bisect_left(prefix, r), n - 1) for r in thresholds]


def tournament_select(costs: Sequence[int], k: int, count: int, rng: random.Random) -> List[int]:
    n = len(costs)
    if n == 1:
        return [0] * count
    winners = []
    for _ in range(count):
        entrants = draw_entrants(rng, n, k)
        best = entrants[0]
        for i in entrants[1:]:
            if costs[i] < costs[best]:
                best = i
        winners.append(best)
    return winners


def elite_indices(costs: Sequence[int], e: int) -> List[int]:
    """The e lowest costs, best first; ties go to the lower index"""
    return sorted(range(len(costs)), key=lambda i: (costs[i], i))[:e]


def erx_crossover(p1: Chromosome, p2: Chromosome, rng: random.Random) -> Chromosome:
    """Edge recombination.

    Start at p1's first city and move to the unvisited neighbour (in either
    parent) with the fewest remaining neighbours. A tie on the first step goes
    to p1's second city, so identical parents give back the parent; later ties
    are broken at random. At a dead end jump to a random unvisited city.
    """
    m = len(p1)
    neighbours: Dict[int, set] = {c: set() for c in p1}
    for parent in (p1, p2):
        for i, c in enumerate(parent):
            neighbours[c].add(parent[i - 1])
            neighbours[c].add(parent[(i + 1) % m])

    current = p1[0]
    child = [current]
    unvisited = set(p1)
    unvisited.discard(current)
    for adjacent in neighbours.values():
        adjacent.discard(current)

    while unvisited:
        candidates = neighbours[current]
        if candidates:
            fewest = min(len(neighbours[c]) for c in candidates)
            pool = sorted(c for c in candidates if len(neighbours[c]) == fewest)
        else:
            pool = sorted(unvisited)
        if len(pool) == 1:
            current = pool[0]
        elif len(child) == 1 and p1[1] in pool:
            current = p1[1]
        else:
            current = rng.choice(pool)
        child.append(current)
        unvisited.discard(current)
        for adjacent in neighbours.values():
            adjacent.discard(current)
    return child


def swap_mutation(chrom: Chromosome, mutation_rate: float, rng: random.Random) -> Chromosome:
    mutated = list(chrom)
    if rng.random() < mutation_rate:
        i, j = rng.sample(range(len(mutated)), 2)
        mutated[i], mutated[j] = mutated[j], mutated[i]
    return mutated


def breed(parents: Population, params: GaParams, crossover_rng: random.Random,
          mutation_rng: random.Random) -> Population:
    """Mate consecutive slots, two children per mating, then mutate every child"""
    offspring = []
    for a in range(0, len(parents) - 1, 2):
        p1, p2 = parents[a], parents[a + 1]
        if crossover_rng.random() < params.crossover_rate:
            offspring.append(erx_crossover(p1, p2, crossover_rng))
            offspring.append(erx_crossover(p2, p1, crossover_rng))
        else:
            offspring.extend([list(p1), list(p2)])
    if len(parents) % 2:
        offspring.append(list(parents[-1]))
    return [swap_mutation(c, params.mutation_rate, mutation_rng) for c in offspring]


def next_generation(offspring: Population, elites: Population) -> Population:
    """Elites take the places of the last offspring"""
    if not elites:
        return offspring
    return offspring[:len(offspring) - len(elites)] + [list(e) for e in elites]


# Driver

def _select(costs: Sequence[int], params: GaParams, rng: random.Random) -> List[int]:
    if params.selection == Selection.FPS:
        return fps_select(costs, params.n, rng, params.scale)
    return tournament_select(costs, params.k, params.n, rng)


def run_ga(matrix: CostMatrix, params: GaParams, progress: bool = False) -> RunStats:
    """Evaluate, then (select, breed, evaluate) for `params.generations` rounds.

    Args:
        matrix: costs over pseudonymous or original labels
        params: GA parameters including the four seeds
        progress: show a tqdm bar over generations

    Returns:
        RunStats with generations + 1 rows
    """
    streams = params.seeds.streams()
    population = init_population(matrix.m, params.n, streams['population'])
    stats = RunStats(seeds=params.seeds)
    best_cost: Optional[int] = None

    for generation in tqdm(range(params.generations + 1), desc="GA", unit="gen", disable=not progress):
        if generation:
            elites = [population[i] for i in elite_indices(costs, params.elitism)]
            parents = [population[i] for i in _select(costs, params, streams['selection'])]
            offspring = breed(parents, params, streams['crossover'], streams['mutation'])
            population = next_generation(offspring, elites)

        costs = [route_cost_plain(matrix, tour) for tour in population]
        leader = elite_indices(costs, 1)[0]
        if best_cost is None or costs[leader] < best_cost:
            best_cost = costs[leader]
            stats.best_tour = list(population[leader])
        stats.best_costs.append(best_cost)
        stats.mean_costs.append(Fraction(sum(costs), len(costs)))
        logger.debug(f"generation {generation}: best so far {best_cost}")

    return stats
