"""Training sample generation and the SDFS binary container.

Samples mix weighted surface points (perturbed by Gaussian noise) with a
uniform sprinkle over the inflated bounding box. Each sample carries its
signed distance, a truncated-distance target value in [0, 1], and the
nearest scan point's normal and edge strength.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..errors import FormatError, RangeError
from ..geometry import TriangleMesh
from .scan import SurfaceScan, occluded_everywhere
from .weights import SampleWeights, SamplerConfig

MAGIC = b"SDFS"
VERSION = 1

_RECORD = np.dtype(
    [
        ("position", "<f4", (3,)),
        ("sdf", "<f4"),
        ("normal", "<f4", (3,)),
        ("edge", "<f4"),
        ("value", "<f4"),
        ("is_surface", "u1"),
    ]
)


def tsdf_map(sdf, truncation: float = 0.10):
    """Map signed distance to the learning target: 0.5 on the surface, 1 at
    depth truncation inside, 0 at truncation outside, linear between."""
    if not truncation > 0:
        raise RangeError("truncation must be positive")
    s = np.asarray(sdf, dtype=np.float64)
    out = np.clip(0.5 - s / (2.0 * truncation), 0.0, 1.0)
    if np.isscalar(sdf):
        return float(out)
    return out


@dataclass(frozen=True)
class SampleSet:
    positions: np.ndarray  # (n, 3) float32
    sdf: np.ndarray  # (n,) float32
    normals: np.ndarray  # (n, 3) float32
    edge: np.ndarray  # (n,) float32
    value: np.ndarray  # (n,) float32 in [0, 1]
    is_surface: np.ndarray  # (n,) bool; True for weight-drawn points

    def __post_init__(self):
        object.__setattr__(self, "positions", np.ascontiguousarray(self.positions, dtype=np.float32))
        object.__setattr__(self, "sdf", np.ascontiguousarray(self.sdf, dtype=np.float32))
        object.__setattr__(self, "normals", np.ascontiguousarray(self.normals, dtype=np.float32))
        object.__setattr__(self, "edge", np.ascontiguousarray(self.edge, dtype=np.float32))
        object.__setattr__(self, "value", np.ascontiguousarray(self.value, dtype=np.float32))
        object.__setattr__(self, "is_surface", np.ascontiguousarray(self.is_surface, dtype=bool))
        n = len(self.positions)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise RangeError("positions must be (n, 3)")
        if self.normals.shape != (n, 3):
            raise RangeError("normals must match positions")
        for name in ("sdf", "edge", "value", "is_surface"):
            if getattr(self, name).shape != (n,):
                raise RangeError(f"{name} must be one value per sample")
        if n and (self.value.min() < 0.0 or self.value.max() > 1.0):
            raise RangeError("values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.positions)


def draw_samples(
    mesh: TriangleMesh, scan: SurfaceScan, weights: SampleWeights, cfg: SamplerConfig | None = None
) -> SampleSet:
    """Draw cfg.n_samples points: (1 - uniform_fraction) from the weight
    distribution with Gaussian perturbation, the rest uniform over the mesh
    bounds inflated by 3 sigma. Deterministic for a fixed cfg.seed."""
    cfg = cfg or SamplerConfig()
    rng = np.random.default_rng(cfg.seed)
    n_uniform = int(round(cfg.uniform_fraction * cfg.n_samples))
    n_surface = cfg.n_samples - n_uniform

    pick = rng.choice(len(weights.weight), size=n_surface, replace=True, p=weights.weight)
    surface = scan.points[pick] + rng.normal(0.0, cfg.surface_sigma, (n_surface, 3))

    bmin, bmax = mesh.bounds()
    pad = 3.0 * cfg.surface_sigma
    uniform = rng.uniform(bmin - pad, bmax + pad, (n_uniform, 3))

    positions = np.vstack([surface, uniform])
    dist, idx = cKDTree(scan.points).query(positions, workers=-1)
    inside = occluded_everywhere(scan, positions)
    sdf = np.where(inside, -dist, dist)

    return SampleSet(
        positions=positions,
        sdf=sdf,
        normals=scan.normals[idx],
        edge=scan.cloud.attributes["edge"][idx],
        value=tsdf_map(sdf.astype(np.float32), cfg.truncation),
        is_surface=np.arange(cfg.n_samples) < n_surface,
    )


def write_samples(samples: SampleSet) -> bytes:
    records = np.empty(len(samples), dtype=_RECORD)
    records["position"] = samples.positions
    records["sdf"] = samples.sdf
    records["normal"] = samples.normals
    records["edge"] = samples.edge
    records["value"] = samples.value
    records["is_surface"] = samples.is_surface.astype(np.uint8)
    return MAGIC + struct.pack("<II", VERSION, len(samples)) + records.tobytes()


def read_samples(data: bytes) -> SampleSet:
    if len(data) < 12:
        raise FormatError("sample container shorter than its header")
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}; expected {MAGIC!r}")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported sample container version {version}")
    body = data[12:]
    expected = count * _RECORD.itemsize
    if len(body) != expected:
        raise FormatError(f"expected {expected} record bytes, found {len(body)}")
    records = np.frombuffer(body, dtype=_RECORD)
    flags = records["is_surface"]
    if flags.size and flags.max() > 1:
        raise FormatError("is_surface flag must be 0 or 1")
    return SampleSet(
        positions=records["position"].copy(),
        sdf=records["sdf"].copy(),
        normals=records["normal"].copy(),
        edge=records["edge"].copy(),
        value=records["value"].copy(),
        is_surface=flags.astype(bool),
    )
