"""
Run configuration.

Values are resolved from, lowest to highest precedence:
  1. defaults below (adjusted by the selected profile)
  2. a key=value config file
  3. PEGA_* environment variables (PEGA_BITS, PEGA_SCALE, ...)
  4. command-line flags

See CONFIGURATION.md for every key.
"""

import logging
import os
from dataclasses import dataclass, fields
from typing import Any, Dict, Mapping, Optional, Tuple

from .errors import ConfigError
from .ga import GaParams, Seeds, Selection
from .thpc import PROFILES

logger = logging.getLogger(__name__)

ENV_PREFIX = 'PEGA_'

# profile -> fixed-point scale; the modulus size comes from thpc.PROFILES
PROFILE_SCALES = {
    'test32': 16,
    'test64': 32,
    'test128': 106,
    'experiment': 106,
    'standard': 106,
    'hardened': 106,
}

# crossover / mutation rates used for the benchmark instances
DEFAULT_RATES = (0.1, 0.15)
INSTANCE_RATES = {'gr48': (0.08, 0.1)}


def rates_for(instance_name: str) -> Tuple[float, float]:
    return INSTANCE_RATES.get(instance_name, DEFAULT_RATES)


@dataclass
class Settings:
    profile: Optional[str] = None
    bits: int = 256
    scale: int = 106
    seed: int = 0
    key_dir: str = 'keys'
    tsp: Optional[str] = None
    perm_seed: Optional[int] = None
    enc_seed: int = 0
    crypto_seed: int = 0
    out: Optional[str] = None
    container: Optional[str] = None
    city_map: Optional[str] = None
    mode: str = 'plain'
    selection: str = 'tournament'
    k: int = 2
    pop: int = 300
    gens: int = 10000
    crossover_rate: Optional[float] = None
    mutation_rate: Optional[float] = None
    elitism: int = 0
    seed_population: Optional[int] = None
    seed_selection: Optional[int] = None
    seed_crossover: Optional[int] = None
    seed_mutation: Optional[int] = None
    transport: str = 'inproc'
    host: str = '127.0.0.1'
    port: int = 0
    sigma: int = 128
    search: str = 'bisect'
    csv: Optional[str] = None
    repeat: int = 1
    column: str = 'final_cost'
    verbose: bool = False
    quiet: bool = False

    @property
    def kappa(self) -> int:
        return self.bits // 2

    def seeds(self) -> Seeds:
        derived = Seeds.derive(self.seed)
        return Seeds(
            population=_pick(self.seed_population, derived.population),
            selection=_pick(self.seed_selection, derived.selection),
            crossover=_pick(self.seed_crossover, derived.crossover),
            mutation=_pick(self.seed_mutation, derived.mutation),
        )

    def ga_params(self, instance_name: str = '') -> GaParams:
        crossover, mutation = rates_for(instance_name)
        return GaParams(
            n=self.pop,
            crossover_rate=_pick(self.crossover_rate, crossover),
            mutation_rate=_pick(self.mutation_rate, mutation),
            selection=Selection(self.selection),
            k=self.k,
            generations=self.gens,
            elitism=self.elitism,
            scale=self.scale,
            seeds=self.seeds(),
        )


def _pick(value, fallback):
    return fallback if value is None else value


_TYPES = {f.name: f.type for f in fields(Settings)}


def _convert(key: str, value: Any) -> Any:
    if not isinstance(value, str):
        return value
    kind = _TYPES[key]
    try:
        if kind in (int, Optional[int]):
            return int(value, 0)
        if kind in (float, Optional[float]):
            return float(value)
        if kind is bool:
            lowered = value.strip().lower()
            if lowered not in ('1', '0', 'true', 'false', 'yes', 'no', 'on', 'off'):
                raise ValueError(value)
            return lowered in ('1', 'true', 'yes', 'on')
    except ValueError:
        raise ConfigError(f"invalid value for {key}: '{value}'")
    return value


def _normalize_key(key: str) -> str:
    name = key.strip().replace('-', '_').lower()
    if name not in _TYPES:
        raise ConfigError(f"unknown configuration key '{key.strip()}'")
    return name


def read_config_file(path: str) -> Dict[str, Any]:
    values = {}
    try:
        with open(path, 'r', encoding='utf-8') as f:
            lines = f.readlines()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}")
    for number, raw in enumerate(lines, start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{path}:{number}: expected key=value")
        key, value = line.split('=', 1)
        name = _normalize_key(key)
        values[name] = _convert(name, value.strip())
    return values


def read_environment(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    values = {}
    for name in _TYPES:
        env_name = ENV_PREFIX + name.upper()
        raw = environ.get(env_name) if environ is not None else os.getenv(env_name)
        if raw is not None and raw != '':
            values[name] = _convert(name, raw)
    return values


def load_settings(flags: Optional[Dict[str, Any]] = None, config_file: Optional[str] = None,
                  environ: Optional[Mapping[str, str]] = None) -> Settings:
    """Merge every configuration source into one Settings.

    Args:
        flags: explicitly given command-line values (None entries are ignored)
        config_file: optional key=value file
        environ: environment mapping (defaults to the process environment)
    """
    values: Dict[str, Any] = {}
    if config_file:
        values.update(read_config_file(config_file))
    values.update(read_environment(environ))
    values.update({k: v for k, v in (flags or {}).items() if v is not None and k in _TYPES})

    profile = values.get('profile')
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile '{profile}' (choose from {', '.join(PROFILES)})")
        values.setdefault('bits', 2 * PROFILES[profile])
        values.setdefault('scale', PROFILE_SCALES[profile])

    settings = Settings(**{k: _convert(k, v) for k, v in values.items()})
    if settings.bits < 16 or settings.bits % 2:
        raise ConfigError(f"modulus size must be an even number of bits >= 16, got {settings.bits}")
    if settings.mode not in ('plain', 'pega'):
        raise ConfigError(f"mode must be 'plain' or 'pega', got '{settings.mode}'")
    if settings.transport not in ('inproc', 'tcp'):
        raise ConfigError(f"transport must be 'inproc' or 'tcp', got '{settings.transport}'")
    if settings.selection not in (s.value for s in Selection):
        raise ConfigError(f"selection must be 'fps' or 'tournament', got '{settings.selection}'")
    if settings.search not in ('bisect', 'recursive'):
        raise ConfigError(f"search must be 'bisect' or 'recursive', got '{settings.search}'")
    logger.debug(f"Resolved settings: {settings}")
    return settings
