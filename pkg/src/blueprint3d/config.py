"""Project configuration: one commented YAML file drives every command.

The schema below is the published contract; `load_config` validates against
it before any field is touched, so typos surface as config errors with a
path into the document instead of deep attribute failures.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import yaml

from .errors import FormatError
from .field import EncoderConfig, FieldConfig, TrainConfig
from .recon import ReconstructConfig
from .sampling import SamplerConfig
from .views import AugmentConfig

_NONNEG = {"type": "number", "minimum": 0}
_POSINT = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "paths": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dataset_dir": {"type": "string"},
                "samples_dir": {"type": "string"},
                "checkpoints_dir": {"type": "string"},
            },
        },
        "sampler": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_samples": _POSINT,
                "surface_sigma": {"type": "number", "exclusiveMinimum": 0},
                "uniform_fraction": {"type": "number", "minimum": 0, "maximum": 1},
                "truncation": {"type": "number", "exclusiveMinimum": 0},
                "hull_resolution": {"type": "integer", "minimum": 2},
                "thickness_angle_threshold": {"type": "number", "minimum": 0, "maximum": 180},
                "edge_floor": _NONNEG,
                "hull_dist_normal_floor": _NONNEG,
                "dist_floor": _NONNEG,
                "hull_dist_scale": _NONNEG,
                "seed": {"type": "integer", "minimum": 0},
                "scan_cameras": {"type": "integer", "minimum": 4},
                "scan_resolution": {"type": "integer", "minimum": 16},
            },
        },
        "field": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mlp_hidden": {"type": "array", "items": _POSINT, "minItems": 1},
                "encoder": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "stacks": _POSINT,
                        "initial_downsample_steps": _POSINT,
                        "internal_downsample_steps": _POSINT,
                        "feature_depth": _POSINT,
                        "max_input_dim": {"type": "integer", "minimum": 2},
                    },
                },
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "learning_rate": _NONNEG,
                "iterations": {"type": "integer", "minimum": 0},
                "lam_value": _NONNEG,
                "lam_normal": _NONNEG,
                "lam_edge": _NONNEG,
                "batch_size": _POSINT,
                "minibatch": _POSINT,
                "seed": {"type": "integer", "minimum": 0},
                "optimizer": {"enum": ["sgd", "adam"]},
                "momentum": {"type": "number", "minimum": 0, "maximum": 1},
                "augment": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "noise_amplitude": _NONNEG,
                        "block_artifact_strength": _NONNEG,
                        "extra_line_count": {"type": "integer", "minimum": 0},
                        "window_removal": {"type": "boolean"},
                        "seed": {"type": "integer", "minimum": 0},
                    },
                },
            },
        },
        "reconstruct": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "grid_resolution": {"type": "integer", "minimum": 2},
                "iso": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "keep_largest": {"type": "boolean"},
            },
        },
    },
}

DEFAULT_CONFIG_TEXT = """\
# blueprint3d project configuration. Every key is optional; missing keys
# take the defaults shown here. Paths are resolved relative to this file.

paths:
  dataset_dir: data/dataset        # blueprint PNGs + view descriptors
  samples_dir: data/samples        # .sdfs sample files from `prep`
  checkpoints_dir: data/checkpoints

sampler:
  n_samples: 22000                 # points drawn per mesh
  surface_sigma: 0.01              # jitter around the surface, model units
  uniform_fraction: 0.1            # fraction drawn uniformly in the volume
  truncation: 0.1                  # distance ramp half-width
  hull_resolution: 128             # silhouette carving grid
  seed: 0

field:
  mlp_hidden: [256, 128, 64]
  encoder:
    stacks: 2
    initial_downsample_steps: 1
    internal_downsample_steps: 5
    feature_depth: 128
    max_input_dim: 512             # largest view dimension at train time

train:
  learning_rate: 0.01
  iterations: 2000
  lam_value: 1.0                   # loss weights: value / normal / edge
  lam_normal: 0.1
  lam_edge: 0.1
  minibatch: 512
  optimizer: sgd                   # sgd | adam
  seed: 0
  # augment:                       # enable blueprint augmentation per step
  #   noise_amplitude: 0.02
  #   extra_line_count: 2

reconstruct:
  grid_resolution: 256             # nodes across the model x extent
  iso: 0.5                         # lower (0.45) thickens the model
  keep_largest: true
"""


@dataclass(frozen=True)
class Paths:
    dataset_dir: Path = Path("data/dataset")
    samples_dir: Path = Path("data/samples")
    checkpoints_dir: Path = Path("data/checkpoints")


@dataclass(frozen=True)
class ProjectConfig:
    paths: Paths = field(default_factory=Paths)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    field_cfg: FieldConfig = field(default_factory=FieldConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    recon: ReconstructConfig = field(default_factory=ReconstructConfig)
    scan_cameras: int = 14
    scan_resolution: int = 160


def _build(section: dict, cls, **extra):
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {k: v for k, v in section.items() if k in known}
    kwargs.update(extra)
    return cls(**kwargs)


def load_config(path: str | Path | None = None) -> ProjectConfig:
    """Parse and validate a YAML config; None gives pure defaults.

    Relative paths inside the file resolve against the file's directory.
    """
    if path is None:
        return ProjectConfig()
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise FormatError(f"config {path} is not valid YAML: {e}") from e
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise FormatError(f"config {path} must be a mapping, got {type(doc).__name__}")
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "(top level)"
        raise FormatError(f"config {path}: {e.message} at {where}") from e

    base = path.parent
    p = doc.get("paths", {})
    paths = Paths(
        dataset_dir=base / p.get("dataset_dir", "data/dataset"),
        samples_dir=base / p.get("samples_dir", "data/samples"),
        checkpoints_dir=base / p.get("checkpoints_dir", "data/checkpoints"),
    )
    s = dict(doc.get("sampler", {}))
    scan_cameras = s.pop("scan_cameras", 14)
    scan_resolution = s.pop("scan_resolution", 160)
    sampler = _build(s, SamplerConfig)
    f = doc.get("field", {})
    encoder = _build(f.get("encoder", {}), EncoderConfig)
    field_cfg = FieldConfig(encoder=encoder, mlp_hidden=tuple(f.get("mlp_hidden", (256, 128, 64))))
    t = dict(doc.get("train", {}))
    aug = t.pop("augment", None)
    train = _build(t, TrainConfig, augment_views=_build(aug, AugmentConfig) if aug else None)
    recon = _build(doc.get("reconstruct", {}), ReconstructConfig)
    return ProjectConfig(
        paths=paths,
        sampler=sampler,
        field_cfg=field_cfg,
        train=train,
        recon=recon,
        scan_cameras=int(scan_cameras),
        scan_resolution=int(scan_resolution),
    )


def write_default_config(path: str | Path) -> None:
    """Write the commented default config; a starting point for editing."""
    Path(path).write_text(DEFAULT_CONFIG_TEXT)
