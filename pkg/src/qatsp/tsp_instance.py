"""TSPLIB GEO instances, node subsets and tour lengths."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

# Constants from the TSPLIB95 GEO definition; PI is the truncated literal used there.
TSPLIB_PI = 3.141592
EARTH_RADIUS_KM = 6378.388


class TSPLIBParseError(ValueError):
    """Malformed TSPLIB content; ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class UnsupportedFormatError(ValueError):
    pass


def geo_radians(x: float) -> float:
    """DD.MM coordinate to radians, truncating the degree part as TSPLIB does."""
    deg = math.trunc(x)
    minutes = x - deg
    return TSPLIB_PI * (deg + 5.0 * minutes / 3.0) / 180.0


def geo_distance(a: tuple[float, float], b: tuple[float, float]) -> int:
    lat_a, lon_a = geo_radians(a[0]), geo_radians(a[1])
    lat_b, lon_b = geo_radians(b[0]), geo_radians(b[1])
    q1 = math.cos(lon_a - lon_b)
    q2 = math.cos(lat_a - lat_b)
    q3 = math.cos(lat_a + lat_b)
    arg = 0.5 * ((1.0 + q1) * q2 - (1.0 - q1) * q3)
    # identical points can drift past 1.0 by rounding
    arg = min(1.0, max(-1.0, arg))
    return int(EARTH_RADIUS_KM * math.acos(arg) + 1.0)


def geo_matrix(coords: Sequence[tuple[float, float]]) -> np.ndarray:
    n = len(coords)
    dist = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            if coords[i] == coords[j]:
                d = 0
            else:
                d = geo_distance(coords[i], coords[j])
            dist[i, j] = dist[j, i] = d
    return dist


def normalize(dist: np.ndarray) -> np.ndarray:
    off = dist[~np.eye(len(dist), dtype=bool)]
    top = off.max()
    if top <= 0:
        raise ValueError("all off-diagonal distances are zero; cannot normalize")
    return dist.astype(np.float64) / float(top)


@dataclass(frozen=True, eq=False)
class Instance:
    name: str
    coords: tuple[tuple[float, float], ...]
    dist: np.ndarray
    dist_norm: np.ndarray
    node_ids: tuple[int, ...] = field(default=())

    @property
    def n(self) -> int:
        return len(self.coords)

    @classmethod
    def from_coords(cls, name: str, coords: Sequence[tuple[float, float]],
                    node_ids: Sequence[int] | None = None) -> "Instance":
        coords = tuple((float(a), float(b)) for a, b in coords)
        if len(coords) < 3:
            raise ValueError(f"an instance needs at least 3 nodes, got {len(coords)}")
        dist = geo_matrix(coords)
        dist.setflags(write=False)
        dn = normalize(dist)
        dn.setflags(write=False)
        ids = tuple(node_ids) if node_ids is not None else tuple(range(len(coords)))
        return cls(name=name, coords=coords, dist=dist, dist_norm=dn, node_ids=ids)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "coords": [list(c) for c in self.coords],
            "dist": self.dist.tolist(),
            "node_ids": list(self.node_ids),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class Tour:
    order: tuple[int, ...]
    length: int


def parse_tsplib(text: str, name: str | None = None) -> Instance:
    """Parse a TSPLIB ``.tsp`` file with ``EDGE_WEIGHT_TYPE: GEO``."""
    header: dict[str, str] = {}
    coords: dict[int, tuple[float, float]] = {}
    in_coords = False
    saw_coords = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line == "EOF":
            break
        if in_coords:
            parts = line.split()
            if len(parts) != 3:
                # another section starts, e.g. DISPLAY_DATA_SECTION
                if line.endswith("SECTION"):
                    in_coords = False
                    continue
                raise TSPLIBParseError(f"expected 'id lat lon', got {line!r}", lineno)
            try:
                idx = int(parts[0])
                lat, lon = float(parts[1]), float(parts[2])
            except ValueError:
                raise TSPLIBParseError(f"bad coordinate record {line!r}", lineno) from None
            if idx in coords:
                raise TSPLIBParseError(f"duplicate node id {idx}", lineno)
            coords[idx] = (lat, lon)
            continue
        if line.startswith("NODE_COORD_SECTION"):
            in_coords = saw_coords = True
            continue
        if line.endswith("SECTION"):
            continue
        if ":" not in line:
            raise TSPLIBParseError(f"expected 'KEY: value' header, got {line!r}", lineno)
        key, value = line.split(":", 1)
        header[key.strip().upper()] = value.strip()

    wtype = header.get("EDGE_WEIGHT_TYPE")
    if wtype is None:
        raise TSPLIBParseError("missing EDGE_WEIGHT_TYPE")
    if wtype.upper() != "GEO":
        raise UnsupportedFormatError(f"unsupported EDGE_WEIGHT_TYPE {wtype!r}; only GEO is supported")
    if not saw_coords:
        raise TSPLIBParseError("missing NODE_COORD_SECTION")
    if "DIMENSION" in header:
        try:
            dim = int(header["DIMENSION"])
        except ValueError:
            raise TSPLIBParseError(f"bad DIMENSION {header['DIMENSION']!r}") from None
        if dim != len(coords):
            raise TSPLIBParseError(f"DIMENSION is {dim} but {len(coords)} coordinates were read")
    ids = sorted(coords)
    return Instance.from_coords(name or header.get("NAME", "unnamed"), [coords[i] for i in ids])


def load_tsplib(path: str | Path) -> Instance:
    path = Path(path)
    return parse_tsplib(path.read_text(), name=None)


def burma14() -> Instance:
    text = resources.files("qatsp").joinpath("data/burma14.tsp").read_text()
    return parse_tsplib(text)


def burma14_opt_tour() -> list[int]:
    """TSPLIB optimal tour for burma14, 0-based."""
    text = resources.files("qatsp").joinpath("data/burma14.opt.tour").read_text()
    lines = text.split("TOUR_SECTION", 1)[1].split()
    return [int(t) - 1 for t in lines if int(t) != -1]


def subset(instance: Instance, nodes: Sequence[int], name: str | None = None) -> Instance:
    """Restrict to ``nodes`` (in the given order); distances are re-normalized over the subset."""
    nodes = [int(v) for v in nodes]
    if len(set(nodes)) != len(nodes):
        raise ValueError(f"duplicate node ids in subset {nodes}")
    bad = [v for v in nodes if not 0 <= v < instance.n]
    if bad:
        raise ValueError(f"node ids out of range 0..{instance.n - 1}: {bad}")
    if len(nodes) < 3:
        raise ValueError("a subset needs at least 3 nodes")
    coords = [instance.coords[v] for v in nodes]
    ids = [instance.node_ids[v] for v in nodes]
    return Instance.from_coords(name or f"{instance.name}'{len(nodes)}", coords, node_ids=ids)


def first_k(instance: Instance, k: int) -> Instance:
    """Default sub-instance convention: the first ``k`` nodes in file order."""
    base = instance.name.rstrip("0123456789")
    return subset(instance, range(k), name=f"{base}'{k}")


def parse_subset_spec(spec: str) -> list[int]:
    """``"0..6"`` (inclusive range) or ``"0,2,5"``."""
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        lo_i, hi_i = int(lo), int(hi)
        if hi_i < lo_i:
            raise ValueError(f"empty subset range {spec!r}")
        return list(range(lo_i, hi_i + 1))
    return [int(t) for t in spec.split(",") if t.strip()]


def check_permutation(order: Sequence[int], n: int) -> tuple[int, ...]:
    order = tuple(int(v) for v in order)
    if len(order) != n or sorted(order) != list(range(n)):
        raise ValueError(f"order is not a permutation of 0..{n - 1}: {list(order)}")
    return order


def tour_length(instance: Instance, order: Sequence[int]) -> int:
    order = check_permutation(order, instance.n)
    idx = np.asarray(order)
    return int(instance.dist[idx, np.roll(idx, -1)].sum())


def make_tour(instance: Instance, order: Sequence[int]) -> Tour:
    order = check_permutation(order, instance.n)
    return Tour(order=order, length=tour_length(instance, order))
