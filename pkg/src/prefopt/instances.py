"""TSP instances, tours, rewards, and file formats.

Rewards are negated tour lengths so that a larger reward always means a
shorter tour.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument, InvalidTour, ParseError, UnsupportedFormat

GENERATE_STREAM = 0


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def distance_matrix(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    # exact symmetry and a clean diagonal regardless of rounding
    dist = np.triu(dist, 1)
    return dist + dist.T


@dataclass(frozen=True, eq=False)
class Instance:
    id: str
    coords: np.ndarray
    dist: np.ndarray = field(repr=False)

    @classmethod
    def from_coords(cls, coords, id: str = "instance") -> "Instance":
        coords = np.array(coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise InvalidArgument(f"coords must have shape (n, 2), got {coords.shape}")
        if coords.shape[0] < 3:
            raise InvalidArgument(f"an instance needs at least 3 nodes, got {coords.shape[0]}")
        if not np.all(np.isfinite(coords)):
            raise InvalidArgument("coords must be finite")
        return cls(id=str(id), coords=_frozen(coords), dist=_frozen(distance_matrix(coords)))

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def to_json(self) -> dict:
        return {"id": self.id, "coords": self.coords.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Instance":
        try:
            return cls.from_coords(obj["coords"], id=obj["id"])
        except KeyError as exc:
            raise ParseError(f"missing key {exc.args[0]!r} in instance JSON") from None

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash((self.id, self.coords.tobytes()))


@dataclass(frozen=True)
class Tour:
    perm: tuple[int, ...]
    length: float

    @property
    def reward(self) -> float:
        return -self.length


def check_perm(n: int, perm) -> np.ndarray:
    """Return ``perm`` as an int64 array, raising InvalidTour unless it is a permutation of ``range(n)``."""
    arr = np.asarray(perm)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise InvalidTour(f"tour must list {n} nodes, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.mod(arr, 1) == 0):
            raise InvalidTour("tour entries must be integers")
    arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() >= n:
        raise InvalidTour(f"tour entries must lie in [0, {n})")
    if np.unique(arr).shape[0] != n:
        raise InvalidTour("tour visits some node more than once")
    return arr


def tour_length(inst: Instance, perm) -> float:
    p = check_perm(inst.n, perm)
    return float(inst.dist[p, np.roll(p, -1)].sum())


def tour_lengths(dist: np.ndarray, perms: np.ndarray) -> np.ndarray:
    """Closed-tour lengths for a batch of already-validated permutations."""
    return dist[perms, np.roll(perms, -1, axis=1)].sum(axis=1)


def make_tour(inst: Instance, perm) -> Tour:
    p = check_perm(inst.n, perm)
    return Tour(tuple(int(v) for v in p), tour_length(inst, p))


def reward(inst: Instance, tour: Tour | Sequence[int]) -> float:
    perm = tour.perm if isinstance(tour, Tour) else tour
    return -tour_length(inst, perm)


def instance_rng(seed: int, index: int, stream: int = GENERATE_STREAM) -> np.random.Generator:
    """Counter-based sub-stream: entropy ``(seed, stream, index)``."""
    return np.random.default_rng([int(seed), int(stream), int(index)])


def generate_uniform(n: int, count: int, seed: int) -> list[Instance]:
    if n < 3:
        raise InvalidArgument(f"n must be >= 3, got {n}")
    if count < 1:
        raise InvalidArgument(f"count must be >= 1, got {count}")
    out = []
    width = max(4, len(str(count - 1)))
    for i in range(count):
        coords = instance_rng(seed, i).random((n, 2))
        out.append(Instance.from_coords(coords, id=f"tsp{n}_s{seed}_{i:0{width}d}"))
    return out


# --- TSPLib -----------------------------------------------------------------


def parse_tsplib(text: str, id: str | None = None) -> Instance:
    """Parse the EUC_2D subset of TSPLib.

    Distances are recomputed as exact Euclidean values, not TSPLib's rounded
    integers.
    """
    headers: dict[str, str] = {}
    coords: dict[int, tuple[float, float]] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line == "EOF":
            break
        if section is not None and not line[0].isalpha():
            if section == "skip":
                continue
            parts = line.split()
            try:
                if len(parts) != 3:
                    raise ValueError
                idx, x, y = int(parts[0]), float(parts[1]), float(parts[2])
            except ValueError:
                raise ParseError(f"malformed coordinate line {line!r}", lineno) from None
            if idx in coords:
                raise ParseError(f"duplicate node index {idx}", lineno)
            coords[idx] = (x, y)
            continue
        if line.endswith("_SECTION"):
            section = "coords" if line == "NODE_COORD_SECTION" else "skip"
            continue
        section = None
        key, sep, value = line.partition(":")
        if not sep or not key.strip():
            raise ParseError(f"malformed header line {line!r}", lineno)
        headers[key.strip().upper()] = value.strip()

    kind = headers.get("TYPE") or "TSP"
    if kind != "TSP":
        raise UnsupportedFormat(f"TYPE {kind} is not supported (only TSP)")
    ewt = headers.get("EDGE_WEIGHT_TYPE")
    if ewt != "EUC_2D":
        raise UnsupportedFormat(f"EDGE_WEIGHT_TYPE {ewt} is not supported (only EUC_2D)")
    if "DIMENSION" not in headers:
        raise ParseError("missing DIMENSION")
    try:
        dim = int(headers["DIMENSION"])
    except ValueError:
        raise ParseError(f"bad DIMENSION {headers['DIMENSION']!r}") from None
    if len(coords) != dim:
        raise ParseError(f"DIMENSION is {dim} but {len(coords)} coordinates were given")
    if sorted(coords) != list(range(1, dim + 1)):
        raise ParseError("node indices must be 1..DIMENSION")
    xy = [coords[i] for i in range(1, dim + 1)]
    return Instance.from_coords(xy, id=id or headers.get("NAME", "tsplib"))


def to_tsplib(inst: Instance) -> str:
    lines = [f"NAME : {inst.id}", "TYPE : TSP", f"DIMENSION : {inst.n}", "EDGE_WEIGHT_TYPE : EUC_2D", "NODE_COORD_SECTION"]
    lines += [f"{i + 1} {x!r} {y!r}" for i, (x, y) in enumerate(inst.coords.tolist())]
    lines.append("EOF")
    return "\n".join(lines) + "\n"


# --- native JSON files ----------------------------------------------------------

INDEX_NAME = "index.json"


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(inst.to_json()) + "\n")


def load_instance(path: str | Path) -> Instance:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".tsp":
        return parse_tsplib(text, id=path.stem)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno) from None
    return Instance.from_json(obj)


def save_dataset(instances: Iterable[Instance], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for inst in instances:
        p = out_dir / f"{inst.id}.json"
        save_instance(inst, p)
        files.append(p)
    index = {"instances": [p.name for p in files]}
    (out_dir / INDEX_NAME).write_text(json.dumps(index, indent=1) + "\n")
    return files


def load_dataset(path: str | Path) -> list[Instance]:
    """Load a directory (via its index, else sorted ``*.json``/``*.tsp``) or a single file."""
    path = Path(path)
    if path.is_file():
        return [load_instance(path)]
    index = path / INDEX_NAME
    if index.exists():
        names = json.loads(index.read_text())["instances"]
        return [load_instance(path / name) for name in names]
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".json", ".tsp") and p.name != INDEX_NAME)
    return [load_instance(p) for p in files]
