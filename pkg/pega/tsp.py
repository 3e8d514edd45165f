#!/usr/bin/env python3
"""
TSPLIB ingestion, cost matrices, city pseudonymization and problem encryption.

Supported input: TYPE TSP with EDGE_WEIGHT_TYPE EUC_2D, or EXPLICIT with one
of FULL_MATRIX, UPPER_ROW, LOWER_ROW, UPPER_DIAG_ROW, LOWER_DIAG_ROW.

City labels are 1-based throughout. A cost of 0 between two distinct cities
marks the pair unreachable.

Encrypted container layout (big-endian):
    magic b"ETSP" | version (1 byte) | m (4) | scale (2) | pk fingerprint (8)
    then m(m-1)/2 entries in row-major upper-triangular order, each a 4-byte
    length and the entry's thpc serialization (length 0 = unreachable)
"""

import json
import logging
import random
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from .errors import MalformedCiphertext, ParseError, UnreachableEdge, UnsupportedFormat
from .fixedpoint import encode
from .thpc import Ciphertext, PublicKey, add_all, ciphertext_from_bytes, ciphertext_to_bytes, enc

logger = logging.getLogger(__name__)

CONTAINER_MAGIC = b"ETSP"
CONTAINER_VERSION = 2
# magic, version, m, scale, bound bits, key fingerprint
CONTAINER_HEADER = struct.Struct('>4sBIHH8s')
ENTRY_LENGTH = struct.Struct('>I')

EXPLICIT_FORMATS = ('FULL_MATRIX', 'UPPER_ROW', 'LOWER_ROW', 'UPPER_DIAG_ROW', 'LOWER_DIAG_ROW')
_KEYWORD = re.compile(r'^\s*([A-Z_]+)\s*:\s*(.*?)\s*$')

Tour = Sequence[int]


@dataclass(frozen=True, eq=False)
class TspInstance:
    name: str
    dimension: int
    edge_weight_type: str
    coords: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    comment: str = ''

    def __repr__(self):
        return f"<TspInstance {self.name} m={self.dimension} {self.edge_weight_type}>"


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Symmetric integer costs with a zero diagonal; 0 off the diagonal = unreachable"""
    weights: np.ndarray

    def __post_init__(self):
        w = self.weights
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"cost matrix must be square, got shape {w.shape}")
        if w.shape[0] < 3:
            raise ValueError(f"need at least 3 cities, got {w.shape[0]}")
        if (w < 0).any():
            raise ValueError("costs must be non-negative")
        if not (w == w.T).all():
            raise ValueError("cost matrix is not symmetric")
        if np.diagonal(w).any():
            raise ValueError("cost matrix diagonal must be zero")

    @property
    def m(self) -> int:
        return int(self.weights.shape[0])

    def cost(self, i: int, j: int) -> int:
        """Cost between 1-based city labels i != j"""
        d = int(self.weights[i - 1, j - 1])
        if d == 0:
            raise UnreachableEdge(i, j)
        return d

    def upper_entries(self) -> Iterator[Tuple[int, int, int]]:
        """(i, j, d) for 1 <= i < j <= m in row-major order"""
        for i in range(1, self.m + 1):
            for j in range(i + 1, self.m + 1):
                yield i, j, int(self.weights[i - 1, j - 1])

    @property
    def max_edge(self) -> int:
        return int(self.weights.max())

    def __repr__(self):
        return f"<CostMatrix m={self.m} max_edge={self.max_edge}>"


@dataclass(frozen=True)
class CityMap:
    """The user's secret bijection from city labels to pseudonymous indices"""
    forward: Dict[int, int]
    inverse: Dict[int, int] = field(init=False)

    def __post_init__(self):
        m = len(self.forward)
        if sorted(self.forward) != list(range(1, m + 1)) or sorted(self.forward.values()) != list(range(1, m + 1)):
            raise ValueError("city map must be a bijection on 1..m")
        object.__setattr__(self, 'inverse', {v: k for k, v in self.forward.items()})

    def apply(self, tour: Tour) -> List[int]:
        return [self.forward[c] for c in tour]

    def restore(self, tour: Tour) -> List[int]:
        """Map a tour over pseudonyms back to original labels"""
        return [self.inverse[c] for c in tour]

    def to_dict(self) -> Dict:
        return {'forward': {str(k): v for k, v in sorted(self.forward.items())}}

    @classmethod
    def from_dict(cls, data: Dict) -> 'CityMap':
        return cls({int(k): int(v) for k, v in data['forward'].items()})


# Parsing

def _parse_number(token: str, line_no: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"expected a number, found '{token}'", line_no)


def _explicit_cells(fmt: str, m: int) -> List[Tuple[int, int]]:
    if fmt == 'FULL_MATRIX':
        return [(i, j) for i in range(m) for j in range(m)]
    if fmt == 'UPPER_ROW':
        return [(i, j) for i in range(m) for j in range(i + 1, m)]
    if fmt == 'LOWER_ROW':
        return [(i, j) for i in range(m) for j in range(i)]
    if fmt == 'UPPER_DIAG_ROW':
        return [(i, j) for i in range(m) for j in range(i, m)]
    if fmt == 'LOWER_DIAG_ROW':
        return [(i, j) for i in range(m) for j in range(i + 1)]
    raise UnsupportedFormat(f"EDGE_WEIGHT_FORMAT {fmt} is not supported")


def _fill_weights(fmt: str, m: int, values: List[Tuple[float, int]]) -> np.ndarray:
    weights = np.zeros((m, m), dtype=np.int64)
    for (i, j), (value, line_no) in zip(_explicit_cells(fmt, m), values):
        if value != int(value) or value < 0:
            raise ParseError(f"edge weight {value} is not a non-negative integer", line_no)
        if i == j and value != 0:
            raise ParseError(f"diagonal entry for city {i + 1} must be 0", line_no)
        if fmt == 'FULL_MATRIX':
            weights[i, j] = int(value)
        else:
            weights[i, j] = weights[j, i] = int(value)
    if fmt == 'FULL_MATRIX' and not (weights == weights.T).all():
        raise ParseError("FULL_MATRIX is not symmetric")
    return weights


def parse_tsplib(data: Union[bytes, str]) -> TspInstance:
    """Parse the supported subset of TSPLIB.

    Raises:
        ParseError: malformed input, with the offending line number
        UnsupportedFormat: a well-formed file outside the supported subset
    """
    text = data.decode('utf-8', errors='replace') if isinstance(data, bytes) else data
    lines = text.splitlines()
    spec: Dict[str, str] = {}
    coords: Optional[np.ndarray] = None
    explicit: List[Tuple[float, int]] = []
    idx = 0

    def header(key: str) -> str:
        if key not in spec:
            raise ParseError(f"{key} must appear before the data sections", idx + 1)
        return spec[key]

    def check_supported():
        problem_type = spec.get('TYPE', '')
        if problem_type != 'TSP':
            raise UnsupportedFormat(f"TYPE '{problem_type}' is not supported (only TSP)")
        weight_type = spec.get('EDGE_WEIGHT_TYPE', '')
        if weight_type not in ('EUC_2D', 'EXPLICIT'):
            raise UnsupportedFormat(f"EDGE_WEIGHT_TYPE '{weight_type}' is not supported "
                                    f"(only EUC_2D and EXPLICIT)")
        return weight_type

    def dimension() -> int:
        raw = header('DIMENSION')
        try:
            m = int(raw)
        except ValueError:
            raise ParseError(f"DIMENSION '{raw}' is not an integer")
        if m < 3:
            raise ParseError(f"DIMENSION must be at least 3, got {m}")
        return m

    while idx < len(lines):
        line = lines[idx].strip()
        idx += 1
        if not line:
            continue
        if line == 'EOF':
            break
        section = line.rstrip(':').strip()
        if section == 'NODE_COORD_SECTION':
            check_supported()
            m = dimension()
            if header('EDGE_WEIGHT_TYPE') != 'EUC_2D':
                raise ParseError("NODE_COORD_SECTION given for a non-coordinate instance", idx)
            coords = np.zeros((m, 2), dtype=float)
            seen = set()
            for _ in range(m):
                if idx >= len(lines):
                    raise ParseError("NODE_COORD_SECTION ends early", idx)
                parts = lines[idx].split()
                idx += 1
                if len(parts) != 3:
                    raise ParseError(f"expected 'id x y', found '{' '.join(parts)}'", idx)
                node = int(_parse_number(parts[0], idx))
                if not 1 <= node <= m or node in seen:
                    raise ParseError(f"node id {node} is out of range or repeated", idx)
                seen.add(node)
                coords[node - 1] = [_parse_number(parts[1], idx), _parse_number(parts[2], idx)]
            if not np.isfinite(coords).all():
                raise ParseError("coordinates must be finite")
        elif section == 'EDGE_WEIGHT_SECTION':
            check_supported()
            m = dimension()
            fmt = header('EDGE_WEIGHT_FORMAT')
            needed = len(_explicit_cells(fmt, m))
            while len(explicit) < needed:
                if idx >= len(lines):
                    raise ParseError(f"EDGE_WEIGHT_SECTION ends after {len(explicit)} of {needed} entries", idx)
                for token in lines[idx].split():
                    explicit.append((_parse_number(token, idx + 1), idx + 1))
                idx += 1
            if len(explicit) > needed:
                raise ParseError(f"EDGE_WEIGHT_SECTION has {len(explicit)} entries, expected {needed}", idx)
        elif section in ('DISPLAY_DATA_SECTION', 'FIXED_EDGES_SECTION', 'TOUR_SECTION'):
            # Not needed for costs; skip to the next keyword
            while idx < len(lines) and not _KEYWORD.match(lines[idx]) and lines[idx].strip() != 'EOF' \
                    and not lines[idx].strip().endswith('_SECTION'):
                idx += 1
        else:
            match = _KEYWORD.match(lines[idx - 1])
            if not match:
                raise ParseError(f"unrecognized line '{line}'", idx)
            spec[match.group(1)] = match.group(2)

    weight_type = check_supported()
    m = dimension()
    name = spec.get('NAME', 'unnamed')

    if weight_type == 'EUC_2D':
        if coords is None:
            raise ParseError("EUC_2D instance has no NODE_COORD_SECTION")
        return TspInstance(name, m, weight_type, coords=coords, comment=spec.get('COMMENT', ''))

    fmt = spec.get('EDGE_WEIGHT_FORMAT', '')
    if fmt not in EXPLICIT_FORMATS:
        raise UnsupportedFormat(f"EDGE_WEIGHT_FORMAT '{fmt}' is not supported")
    if not explicit:
        raise ParseError("EXPLICIT instance has no EDGE_WEIGHT_SECTION")
    return TspInstance(name, m, weight_type, weights=_fill_weights(fmt, m, explicit),
                       comment=spec.get('COMMENT', ''))


def load_instance(path: Union[str, Path]) -> TspInstance:
    return parse_tsplib(Path(path).read_bytes())


def format_tsplib(instance: TspInstance) -> str:
    """Write an instance back out; explicit weights as FULL_MATRIX"""
    out = [f"NAME : {instance.name}", "TYPE : TSP"]
    if instance.comment:
        out.append(f"COMMENT : {instance.comment}")
    out.append(f"DIMENSION : {instance.dimension}")
    out.append(f"EDGE_WEIGHT_TYPE : {instance.edge_weight_type}")
    if instance.edge_weight_type == 'EUC_2D':
        out.append("NODE_COORD_SECTION")
        for i, (x, y) in enumerate(instance.coords, start=1):
            out.append(f"{i} {float(x)!r} {float(y)!r}")
    else:
        out.append("EDGE_WEIGHT_FORMAT : FULL_MATRIX")
        out.append("EDGE_WEIGHT_SECTION")
        for row in instance.weights:
            out.append(' '.join(str(int(v)) for v in row))
    out.append("EOF")
    return '\n'.join(out) + '\n'


def random_instance(m: int, rng: random.Random, extent: int = 1000, name: Optional[str] = None) -> TspInstance:
    """EUC_2D instance with distinct integer coordinates in [0, extent)"""
    points: List[Tuple[int, int]] = []
    while len(points) < m:
        point = (rng.randrange(extent), rng.randrange(extent))
        if point not in points:
            points.append(point)
    coords = np.array(points, dtype=float)
    return TspInstance(name or f"rand{m}", m, 'EUC_2D', coords=coords)


def build_matrix(instance: TspInstance) -> CostMatrix:
    """Integer cost matrix; EUC_2D uses TSPLIB nearest-integer rounding"""
    if instance.edge_weight_type == 'EXPLICIT':
        return CostMatrix(instance.weights.copy())
    coords = instance.coords
    diff = coords[:, None, :] - coords[None, :, :]
    weights = np.floor(np.sqrt((diff ** 2).sum(axis=-1)) + 0.5).astype(np.int64)
    np.fill_diagonal(weights, 0)
    zeros = int((weights == 0).sum()) - instance.dimension
    if zeros:
        logger.warning(f"{instance.name}: {zeros // 2} city pairs round to cost 0 and are unreachable")
    return CostMatrix(weights)


# Pseudonymization

def pseudonymize(matrix: CostMatrix, rng: Optional[random.Random] = None,
                 permutation: Optional[Sequence[int]] = None) -> Tuple[CityMap, CostMatrix]:
    """Relabel cities by a uniform random bijection.

    Args:
        matrix: costs over original labels
        rng: source for the permutation (ignored when `permutation` is given)
        permutation: explicit pseudonyms, permutation[label - 1] = index

    Returns:
        (city map, costs over pseudonymous indices)
    """
    m = matrix.m
    if permutation is None:
        permutation = list(range(1, m + 1))
        (rng or random.Random()).shuffle(permutation)
    city_map = CityMap({label: int(permutation[label - 1]) for label in range(1, m + 1)})
    order = np.array([city_map.inverse[k] - 1 for k in range(1, m + 1)])
    return city_map, CostMatrix(matrix.weights[np.ix_(order, order)])


# Tours

def check_tour(tour: Tour, m: int):
    if sorted(tour) != list(range(1, m + 1)):
        raise ValueError(f"tour is not a permutation of 1..{m}")


def tour_edges(tour: Tour) -> List[Tuple[int, int]]:
    """The m edges of a closed tour, including the return to the start"""
    return [(tour[i], tour[(i + 1) % len(tour)]) for i in range(len(tour))]


def route_cost_plain(matrix: CostMatrix, tour: Tour) -> int:
    check_tour(tour, matrix.m)
    return sum(matrix.cost(i, j) for i, j in tour_edges(tour))


# Encryption

@dataclass(frozen=True, eq=False)
class EncryptedTsp:
    """Encrypted upper-triangular costs; None marks an unreachable pair.

    bound_bits is published by the user: every route cost difference is
    below 2**bound_bits at this scale.
    """
    public_key: PublicKey
    m: int
    scale: int
    entries: Tuple[Optional[Ciphertext], ...]
    bound_bits: int = 0

    def __post_init__(self):
        if len(self.entries) != self.m * (self.m - 1) // 2:
            raise ValueError(f"expected {self.m * (self.m - 1) // 2} entries, got {len(self.entries)}")

    @property
    def cost_bound(self) -> int:
        return 1 << self.bound_bits

    def _offset(self, i: int, j: int) -> int:
        if i > j:
            i, j = j, i
        # Row-major offset of (i, j), i < j, both 1-based
        return (i - 1) * (2 * self.m - i) // 2 + (j - i - 1)

    def entry(self, i: int, j: int) -> Ciphertext:
        if i == j or not (1 <= i <= self.m and 1 <= j <= self.m):
            raise ValueError(f"no entry for city pair ({i}, {j})")
        ct = self.entries[self._offset(i, j)]
        if ct is None:
            raise UnreachableEdge(i, j)
        return ct

    def to_bytes(self) -> bytes:
        parts = [CONTAINER_HEADER.pack(CONTAINER_MAGIC, CONTAINER_VERSION, self.m, self.scale,
                                       self.bound_bits, self.public_key.fingerprint())]
        for ct in self.entries:
            body = b'' if ct is None else ciphertext_to_bytes(ct)
            parts.append(ENTRY_LENGTH.pack(len(body)))
            parts.append(body)
        return b''.join(parts)

    @classmethod
    def from_bytes(cls, public_key: PublicKey, data: bytes) -> 'EncryptedTsp':
        if len(data) < CONTAINER_HEADER.size:
            raise MalformedCiphertext("container header is truncated")
        magic, version, m, scale, bound_bits, fingerprint = CONTAINER_HEADER.unpack_from(data)
        if magic != CONTAINER_MAGIC:
            raise MalformedCiphertext("not an encrypted TSP container")
        if version != CONTAINER_VERSION:
            raise MalformedCiphertext(f"unsupported container version {version}")
        if fingerprint != public_key.fingerprint():
            raise MalformedCiphertext("container was encrypted under a different public key")
        offset = CONTAINER_HEADER.size
        entries = []
        for _ in range(m * (m - 1) // 2):
            if offset + ENTRY_LENGTH.size > len(data):
                raise MalformedCiphertext("container entries are truncated")
            (length,) = ENTRY_LENGTH.unpack_from(data, offset)
            offset += ENTRY_LENGTH.size
            body = data[offset:offset + length]
            if len(body) != length:
                raise MalformedCiphertext("container entry is truncated")
            offset += length
            entries.append(ciphertext_from_bytes(public_key, body) if length else None)
        if offset != len(data):
            raise MalformedCiphertext("trailing bytes after container entries")
        return cls(public_key, m, scale, tuple(entries), bound_bits)

    def save(self, path: Union[str, Path]):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, public_key: PublicKey, path: Union[str, Path]) -> 'EncryptedTsp':
        return cls.from_bytes(public_key, Path(path).read_bytes())

    def payload_size(self) -> int:
        """Bytes the user ships to S1"""
        return len(self.to_bytes())


def encrypt_tsp(public_key: PublicKey, matrix: CostMatrix, scale: int, seed: int = 0,
                progress: bool = False) -> EncryptedTsp:
    """Encrypt every reachable pair independently.

    Entry k draws its randomness from random.Random(f"{seed}/{k}"), so the
    container is reproducible from the seed and entries are independent.

    Raises:
        OverflowError: if some cost * 2^scale does not fit below N/2
    """
    entries = []
    pairs = list(matrix.upper_entries())
    for k, (i, j, d) in enumerate(tqdm(pairs, desc="Encrypting costs", unit="entry", disable=not progress)):
        if d == 0:
            entries.append(None)
            continue
        code = encode(d, scale, public_key.n)
        entries.append(enc(public_key, code, random.Random(f"{seed}/{k}")))
    unreachable = sum(1 for ct in entries if ct is None)
    logger.info(f"Encrypted {len(entries) - unreachable} costs for m={matrix.m} at scale {scale}"
                + (f" ({unreachable} unreachable)" if unreachable else ""))
    bound_bits = (matrix.m * matrix.max_edge).bit_length() + scale
    return EncryptedTsp(public_key, matrix.m, scale, tuple(entries), bound_bits)


def route_cost_enc(enc_tsp: EncryptedTsp, tour: Tour) -> Ciphertext:
    """Homomorphic sum over the same edges as route_cost_plain"""
    check_tour(tour, enc_tsp.m)
    return add_all([enc_tsp.entry(i, j) for i, j in tour_edges(tour)])


def save_city_map(city_map: CityMap, path: Union[str, Path]):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(city_map.to_dict(), f, indent=2)


def load_city_map(path: Union[str, Path]) -> CityMap:
    with open(path, 'r', encoding='utf-8') as f:
        return CityMap.from_dict(json.load(f))
