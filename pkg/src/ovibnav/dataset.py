"""Synthetic multi-view localization worlds and the on-disk feature format.

A world maps a 3-D position to ``M`` unit-norm view embeddings of size
``d``. Each view is a fixed random projection of a random Fourier basis
evaluated at the position, so nearby positions give similar features and
the correlation length is set by ``length_scale``.

Feature files (little-endian)::

    "OVIB" | version u16 | M u16 | d u32 | count u64
    count x ( frame_id u64 | position 3 x f64 | views M x d x f32 )

with a ``<file>.json`` sidecar holding seed, config and split name.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numkernel import NumericalError, RngState

MAGIC = b"OVIB"
VERSION = 1
_HEADER = struct.Struct("<4sHHIQ")
SPLITS = ("train", "database", "test")
_SPLIT_STREAM = {"train": 1, "database": 2, "test": 3}

# views are stored as f32, so norms are only exact to f32 rounding
STORED_NORM_TOL = 1e-6


class ConfigError(ValueError):
    pass


class FormatError(ValueError):
    pass


@dataclass
class WorldConfig:
    num_views: int = 5
    feature_dim: int = 64
    num_basis: int = 256
    length_scale: float = 60.0
    noise_std: float = 0.1
    extent: tuple = (200.0, 200.0, 60.0)
    altitude: float = 30.0
    road_spacing: float = 20.0
    step_length: float = 2.0
    n_train: int = 5000
    n_test: int = 500
    db_spacing: float = 10.0

    def validate(self):
        for name in ("num_views", "feature_dim", "num_basis", "n_train", "n_test"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("length_scale", "road_spacing", "step_length", "db_spacing"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")
        if len(self.extent) != 3 or min(self.extent) <= 0:
            raise ConfigError("extent must be three positive lengths")
        if not 0 <= self.altitude <= self.extent[2]:
            raise ConfigError("altitude must lie inside the vertical extent")

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown world config keys: {sorted(unknown)}")
        kw = dict(d)
        if "extent" in kw:
            kw["extent"] = tuple(float(v) for v in kw["extent"])
        return cls(**kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["extent"] = list(self.extent)
        return d


@dataclass
class WorldModel:
    frequencies: np.ndarray  # (num_basis, 3), rad/m
    phases: np.ndarray  # (num_basis,)
    view_projections: np.ndarray  # (M, d, num_basis)
    length_scale: float
    noise_std: float
    extent: tuple

    @property
    def num_basis(self):
        return self.frequencies.shape[0]

    @property
    def num_views(self):
        return self.view_projections.shape[0]

    @property
    def feature_dim(self):
        return self.view_projections.shape[1]


def generate_world(config: WorldConfig, seed: int) -> WorldModel:
    config.validate()
    g = RngState(seed, stream=0).generator
    nb = config.num_basis
    # Gaussian spectrum: feature similarity ~ exp(-|dp|^2 / (2 length_scale^2))
    freqs = g.standard_normal((nb, 3)) / config.length_scale
    phases = g.uniform(0.0, 2.0 * np.pi, nb)
    proj = g.standard_normal((config.num_views, config.feature_dim, nb))
    return WorldModel(freqs, phases, proj, float(config.length_scale),
                      float(config.noise_std), tuple(config.extent))


def _basis(world: WorldModel, positions: np.ndarray) -> np.ndarray:
    # unit-variance projections of this basis have unit-variance entries
    return np.sqrt(2.0 / world.num_basis) * np.cos(positions @ world.frequencies.T + world.phases)


def _normalize_views(raw, world, rng):
    norms = np.linalg.norm(raw, axis=-1, keepdims=True)
    if np.any(norms == 0):
        if rng is None or world.noise_std == 0:
            raise NumericalError("zero-norm feature vector")
        bad = (norms == 0)[..., 0]
        raw[bad] += world.noise_std * rng.generator.standard_normal((int(bad.sum()), raw.shape[-1]))
        norms = np.linalg.norm(raw, axis=-1, keepdims=True)
        if np.any(norms == 0):
            raise NumericalError("zero-norm feature vector after resampling noise")
    return raw / norms


def features_at(world: WorldModel, position, rng: RngState | None = None) -> np.ndarray:
    """Return the ``(M, d)`` unit-norm view features observed at ``position``."""
    p = np.asarray(position, dtype=np.float64).reshape(3)
    if np.any(p < 0) or np.any(p > np.asarray(world.extent)):
        raise ValueError(f"position {p} outside world extent {world.extent}")
    raw = world.view_projections @ _basis(world, p)
    if world.noise_std > 0:
        if rng is None:
            raise ValueError("noisy world needs an rng")
        raw = raw + world.noise_std * rng.generator.standard_normal(raw.shape)
    return _normalize_views(raw, world, rng)


def features_batch(world: WorldModel, positions, seed: int, stream: int) -> np.ndarray:
    """Features for many positions; frame ``i`` draws noise from substream ``i``."""
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    phi = _basis(world, pos)  # (N, nb)
    raw = np.einsum("mdb,nb->nmd", world.view_projections, phi)
    base = RngState(seed, stream)
    rngs = [base.substream(i) for i in range(len(pos))]
    if world.noise_std > 0:
        for i, r in enumerate(rngs):
            raw[i] += world.noise_std * r.generator.standard_normal(raw.shape[1:])
    out = np.empty_like(raw)
    for i in range(len(pos)):
        out[i] = _normalize_views(raw[i], world, rngs[i])
    return out


def generate_trajectory(world: WorldModel, config: WorldConfig, seed: int,
                        n_steps: int | None = None) -> np.ndarray:
    """Constant-altitude random walk along a square road grid.

    The walker moves ``step_length`` per frame along grid lines spaced
    ``road_spacing`` apart and picks a random new heading at each
    intersection, avoiding U-turns unless boundary-forced.
    """
    n = config.n_test if n_steps is None else n_steps
    g = RngState(seed, stream=(9, 0)).generator
    lx, ly = config.extent[0], config.extent[1]
    nx = int(np.floor(lx / config.road_spacing))
    ny = int(np.floor(ly / config.road_spacing))
    if nx < 1 or ny < 1:
        raise ConfigError("road grid needs at least two roads per axis")
    seg = max(1, int(round(config.road_spacing / config.step_length)))
    step = config.road_spacing / seg
    node = np.array([g.integers(0, nx + 1), g.integers(0, ny + 1)])
    heading = None
    moves = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
    out = np.empty((n, 3))
    i = 0
    while i < n:
        valid = [m for m in moves
                 if 0 <= node[0] + m[0] <= nx and 0 <= node[1] + m[1] <= ny]
        forward = [m for m in valid if heading is None or not np.array_equal(m, -heading)]
        choices = forward or valid
        heading = choices[g.integers(len(choices))]
        start = node * config.road_spacing
        for s in range(seg):
            if i >= n:
                break
            xy = start + heading * step * s
            out[i] = (xy[0], xy[1], config.altitude)
            i += 1
        node = node + heading
    out[:, 0] = np.clip(out[:, 0], 0.0, lx)
    out[:, 1] = np.clip(out[:, 1], 0.0, ly)
    return out


@dataclass
class FeatureFrame:
    views: np.ndarray  # (M, d)
    position: np.ndarray  # (3,), meters
    frame_id: int


@dataclass
class Dataset:
    """Frames of one split stored column-wise.

    ``views`` is ``(N, M, d)`` float32 (the file precision), ``positions``
    is ``(N, 3)`` float64 in meters.
    """

    views: np.ndarray
    positions: np.ndarray
    frame_ids: np.ndarray
    split: str
    seed: int = 0
    extent: tuple = (0.0, 0.0, 0.0)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.views = np.asarray(self.views, dtype=np.float32)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.frame_ids = np.asarray(self.frame_ids, dtype=np.uint64)
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        if self.views.ndim != 3 or len(self.views) != len(self.positions) != len(self.frame_ids):
            raise ValueError("views, positions and frame_ids disagree in length")

    def __len__(self):
        return len(self.positions)

    @property
    def num_views(self):
        return self.views.shape[1]

    @property
    def feature_dim(self):
        return self.views.shape[2]

    @property
    def flat(self) -> np.ndarray:
        """Concatenated view features, ``(N, M*d)`` float64."""
        return self.views.reshape(len(self), -1).astype(np.float64)

    @property
    def frames(self) -> list[FeatureFrame]:
        return [FeatureFrame(self.views[i], self.positions[i], int(self.frame_ids[i]))
                for i in range(len(self))]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.views[idx], self.positions[idx], self.frame_ids[idx],
                       self.split, self.seed, self.extent, self.config)


def _database_grid(config: WorldConfig) -> np.ndarray:
    xs = np.arange(0.0, config.extent[0] + 1e-9, config.db_spacing)
    ys = np.arange(0.0, config.extent[1] + 1e-9, config.db_spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, config.altitude)])


def split_positions(config: WorldConfig, seed: int, split: str) -> np.ndarray:
    if split == "train":
        g = RngState(seed, stream=(8, 1)).generator
        n = config.n_train
        return np.column_stack([g.uniform(0, config.extent[0], n),
                                g.uniform(0, config.extent[1], n),
                                np.full(n, config.altitude)])
    if split == "database":
        return _database_grid(config)
    if split == "test":
        return generate_trajectory(None, config, seed)
    raise ValueError(f"unknown split {split!r}")


def make_split(world: WorldModel, config: WorldConfig, seed: int, split: str) -> Dataset:
    pos = split_positions(config, seed, split)
    views = features_batch(world, pos, seed, stream=_SPLIT_STREAM[split])
    return Dataset(views, pos, np.arange(len(pos)), split, seed,
                   tuple(config.extent), config.to_dict())


def make_splits(config: WorldConfig, seed: int) -> dict[str, Dataset]:
    world = generate_world(config, seed)
    return {s: make_split(world, config, seed, s) for s in SPLITS}


def _record_dtype(m, d):
    return np.dtype([("frame_id", "<u8"), ("position", "<f8", (3,)), ("views", "<f4", (m, d))])


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    m, d = ds.num_views, ds.feature_dim
    rec = np.empty(len(ds), dtype=_record_dtype(m, d))
    rec["frame_id"] = ds.frame_ids
    rec["position"] = ds.positions
    rec["views"] = ds.views
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, m, d, len(ds)))
        f.write(rec.tobytes())
    meta = {"seed": int(ds.seed), "split": ds.split, "extent": list(ds.extent),
            "num_views": m, "feature_dim": d, "config": ds.config}
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    buf = path.read_bytes()
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, m, d, count = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if m < 1 or d < 1:
        raise FormatError(f"{path}: bad dimensions M={m} d={d}")
    dt = _record_dtype(m, d)
    payload = len(buf) - _HEADER.size
    if payload != count * dt.itemsize:
        raise FormatError(f"{path}: header declares {count} frames but payload holds "
                          f"{payload / dt.itemsize:g}")
    rec = np.frombuffer(buf, dtype=dt, count=count, offset=_HEADER.size)
    views = rec["views"].copy()
    if not np.all(np.isfinite(views)) or not np.all(np.isfinite(rec["position"])):
        raise FormatError(f"{path}: non-finite values")
    norms = np.linalg.norm(views.astype(np.float64), axis=-1)
    if count and np.max(np.abs(norms - 1.0)) > STORED_NORM_TOL:
        raise FormatError(f"{path}: view vectors are not unit norm")
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
    return Dataset(views, rec["position"].copy(), rec["frame_id"].copy(),
                   meta.get("split", "train"), meta.get("seed", 0),
                   tuple(meta.get("extent", (0.0, 0.0, 0.0))), meta.get("config", {}))
