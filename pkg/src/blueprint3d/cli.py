"""Command line pipeline: prep, synth, train, reconstruct, eval, serve.

Exit codes: 0 success, 2 invalid input, 3 a blueprint needs manual view
review, 1 anything else. Every verb that produces numbers also renders a
figure next to the delimited output so a run can be judged at a glance.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import json
import sys
from pathlib import Path

import click

from .config import DEFAULT_CONFIG_TEXT, ProjectConfig, load_config
from .errors import (
    Blueprint3dError,
    ConfigMismatch,
    CutFailed,
    DecodeError,
    DegenerateMesh,
    DimensionError,
    EmptyHull,
    FormatError,
    IdentificationFailed,
    ManualRequired,
    MeshParseError,
    RangeError,
    SizeMismatch,
    TieUnresolved,
)
from .field import load_weights, save_weights, train
from .geometry import (
    euler_characteristic,
    is_watertight,
    load_mesh,
    normalize_mesh,
    save_mesh,
)
from .images import GrayImage, VectorImage
from .png import read_png, write_png
from .recon import (
    ReconstructConfig,
    enclosed_volume,
    eval_metrics,
    reconstruct,
    surface_sample,
)
from .sampling import (
    compute_weights,
    draw_samples,
    nearest_block,
    read_samples,
    scan_mesh,
    silhouette_views,
    visual_hull,
    write_samples,
)
from .views import extract_views, render_sheet, synth_blueprint, viewset_from_json
from . import report

_INPUT_ERRORS = (
    FormatError,
    RangeError,
    DimensionError,
    SizeMismatch,
    ConfigMismatch,
    MeshParseError,
    DecodeError,
    CutFailed,
    IdentificationFailed,
    TieUnresolved,
    DegenerateMesh,
    EmptyHull,
    FileNotFoundError,
    IsADirectoryError,
)

_REVIEW_HINT = (
    "run `blueprint3d serve` and review the views in the browser, "
    "then reconstruct from the saved descriptor"
)


def _guarded(f):
    """Map exceptions to the exit-code contract."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ManualRequired as e:
            click.echo(f"error: {e}", err=True)
            click.echo(f"manual review required: {_REVIEW_HINT}", err=True)
            sys.exit(3)
        except SizeMismatch as e:
            click.echo(f"error: {e}", err=True)
            click.echo(f"hint: {_REVIEW_HINT}", err=True)
            sys.exit(2)
        except _INPUT_ERRORS as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(2)
        except Blueprint3dError as e:
            click.echo(f"internal error: {e}", err=True)
            sys.exit(1)

    return wrapper


def _load_mesh_file(path: Path):
    fmt = path.suffix.lstrip(".").lower()
    if fmt not in ("obj", "stl", "ply"):
        raise FormatError(f"unsupported mesh format {path.suffix!r} for {path}")
    return load_mesh(path.read_bytes(), fmt)


def _read_gray_png(path: Path) -> GrayImage:
    img = read_png(path.read_bytes())
    if isinstance(img, VectorImage):
        # blueprint sheets are grayscale; average color scans down
        img = GrayImage(img.data.mean(axis=-1))
    return img


def _read_views_input(path: Path):
    """A blueprint PNG (auto extraction) or a saved descriptor JSON."""
    if path.suffix.lower() == ".png":
        return extract_views(_read_gray_png(path))
    if path.suffix.lower() == ".json":
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise FormatError(f"{path} is not valid JSON: {e}") from e
        if not isinstance(payload, dict) or "views" not in payload:
            raise FormatError(f"{path} is not a view descriptor (no 'views' key)")
        sheet = payload.get("sheet")
        if not sheet:
            raise FormatError(f"{path} names no 'sheet' image to crop from")
        sheet_path = (path.parent / sheet).resolve()
        if not sheet_path.exists():
            raise FormatError(f"descriptor {path} points at missing sheet {sheet_path}")
        try:
            return viewset_from_json(payload, _read_gray_png(sheet_path))
        except (KeyError, ValueError, TypeError) as e:
            raise FormatError(f"descriptor {path} is malformed: {e}") from e
    raise FormatError(f"expected a .png blueprint or .json descriptor, got {path}")


@click.group()
@click.option(
    "-c",
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="YAML project config; defaults apply without one.",
)
@click.version_option(package_name="blueprint3d")
@click.pass_context
def main(ctx, config_path):
    """Closed vehicle meshes from four-view orthographic blueprints."""
    try:
        ctx.obj = load_config(config_path)
    except (FormatError, RangeError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)


@main.command("init-config")
@click.argument("path", type=click.Path(dir_okay=False), default="blueprint3d.yaml")
def init_config(path):
    """Write a commented default config to PATH."""
    out = Path(path)
    if out.exists():
        click.echo(f"error: {out} already exists, not overwriting", err=True)
        sys.exit(2)
    out.write_text(DEFAULT_CONFIG_TEXT)
    click.echo(f"wrote {out}")


@main.command()
@click.argument("meshes", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (default: samples_dir from config).")
@click.option("--seed", type=int, default=None, help="Override sampler seed.")
@click.pass_obj
@_guarded
def prep(cfg: ProjectConfig, meshes, out_dir, seed):
    """Scan MESHES into adaptively weighted signed-distance samples.

    Writes one .sdfs sample file per mesh plus a weight-colored point
    cloud and diagnostic histograms.
    """
    out = Path(out_dir) if out_dir else cfg.paths.samples_dir
    out.mkdir(parents=True, exist_ok=True)
    s_cfg = cfg.sampler if seed is None else dataclasses.replace(cfg.sampler, seed=seed)
    failures = 0
    for path in map(Path, meshes):
        stem = path.stem
        try:
            mesh = _load_mesh_file(path)
            mesh, _ = normalize_mesh(mesh)
            scan = scan_mesh(mesh, n_cams=cfg.scan_cameras, resolution=cfg.scan_resolution)
            views = silhouette_views(mesh, resolution=2 * s_cfg.hull_resolution)
            hull = visual_hull(views, s_cfg.hull_resolution)
            weights = compute_weights(scan, hull, s_cfg)
            samples = draw_samples(mesh, scan, weights, s_cfg)
            (out / f"{stem}.sdfs").write_bytes(write_samples(samples))
            report.write_prep_report(out, stem, scan, weights, samples)
            click.echo(
                f"[{stem}] {samples.positions.shape[0]} samples, "
                f"weight nonuniformity {report.nonuniformity(weights):.1f}x "
                f"-> {out / (stem + '.sdfs')}"
            )
        except (Blueprint3dError, FileNotFoundError) as e:
            failures += 1
            click.echo(f"[{stem}] error: {e}", err=True)
    if failures:
        click.echo(f"{failures} of {len(meshes)} meshes failed", err=True)
        sys.exit(2)


@main.command()
@click.argument("meshes", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--resolution", type=int, default=512, show_default=True,
              help="Blueprint sheet resolution in pixels.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (default: dataset_dir from config).")
@click.pass_obj
@_guarded
def synth(cfg: ProjectConfig, meshes, resolution, out_dir):
    """Render MESHES into blueprint sheets with view descriptors."""
    if resolution < 64:
        raise RangeError(f"sheet resolution must be at least 64px, got {resolution}")
    out = Path(out_dir) if out_dir else cfg.paths.dataset_dir
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for path in map(Path, meshes):
        stem = path.stem
        try:
            mesh = _load_mesh_file(path)
            mesh, _ = normalize_mesh(mesh)
            views = synth_blueprint(mesh, resolution)
            sheet = render_sheet(views)
            png_name = f"{stem}_blueprint.png"
            (out / png_name).write_bytes(write_png(sheet))
            descriptor = views.to_json()
            descriptor["sheet"] = png_name
            (out / f"{stem}_views.json").write_text(json.dumps(descriptor, indent=2))
            click.echo(f"[{stem}] {sheet.width}x{sheet.height} sheet -> {out / png_name}")
        except (Blueprint3dError, FileNotFoundError) as e:
            failures += 1
            click.echo(f"[{stem}] error: {e}", err=True)
    if failures:
        click.echo(f"{failures} of {len(meshes)} meshes failed", err=True)
        sys.exit(2)


def _gather_dataset(dataset_dir: Path, samples_dir: Path):
    descriptors = sorted(dataset_dir.glob("*_views.json"))
    if not descriptors:
        raise FormatError(f"no *_views.json descriptors in {dataset_dir}")
    pairs = []
    for desc in descriptors:
        stem = desc.name[: -len("_views.json")]
        sample_path = samples_dir / f"{stem}.sdfs"
        if not sample_path.exists():
            raise FormatError(
                f"descriptor {desc} has no sample file {sample_path}; run "
                f"`blueprint3d prep` on the {stem} mesh first"
            )
        views = _read_views_input(desc)
        samples = read_samples(sample_path.read_bytes())
        pairs.append((stem, views, samples))
    return pairs


@main.command("train")
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True, file_okay=False),
              default=None, help="Directory of *_blueprint.png / *_views.json pairs.")
@click.option("--samples", "samples_dir", type=click.Path(exists=True, file_okay=False),
              default=None, help="Directory of *.sdfs sample files.")
@click.option("--out", "ckpt", type=click.Path(dir_okay=False), default=None,
              help="Checkpoint path (default: checkpoints_dir/model.pafw).")
@click.option("--iterations", type=int, default=None, help="Override config iteration count.")
@click.option("--learning-rate", type=float, default=None, help="Override config learning rate.")
@click.option("--seed", type=int, default=None, help="Override config training seed.")
@click.option("--resume", "resume_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Continue from an existing checkpoint.")
@click.option("--log-every", type=int, default=100, show_default=True)
@click.pass_obj
@_guarded
def train_cmd(cfg: ProjectConfig, dataset_dir, samples_dir, ckpt, iterations,
              learning_rate, seed, resume_path, log_every):
    """Fit the implicit field to blueprint/sample pairs."""
    dataset_dir = Path(dataset_dir) if dataset_dir else cfg.paths.dataset_dir
    samples_dir = Path(samples_dir) if samples_dir else cfg.paths.samples_dir
    ckpt = Path(ckpt) if ckpt else cfg.paths.checkpoints_dir / "model.pafw"
    if not dataset_dir.is_dir():
        raise FormatError(f"dataset directory {dataset_dir} does not exist")
    if not samples_dir.is_dir():
        raise FormatError(f"samples directory {samples_dir} does not exist")
    pairs = _gather_dataset(dataset_dir, samples_dir)
    click.echo(f"training on {len(pairs)} blueprints: {', '.join(s for s, _, _ in pairs)}")

    t_cfg = cfg.train
    overrides = {}
    if iterations is not None:
        overrides["iterations"] = iterations
    if learning_rate is not None:
        overrides["learning_rate"] = learning_rate
    if seed is not None:
        overrides["seed"] = seed
    if overrides:
        t_cfg = dataclasses.replace(t_cfg, **overrides)

    field_cfg = cfg.field_cfg
    params = None
    step_base = 0
    if resume_path:
        field_cfg, params = load_weights(resume_path)
        prior = ckpt.parent / "loss.csv"
        if prior.exists():
            with open(prior, newline="") as fh:
                rows = list(csv.reader(fh))[1:]
            if rows:
                step_base = int(rows[-1][0]) + 1
        click.echo(f"resuming from {resume_path} at step {step_base}")

    def progress(step, total):
        if step % log_every == 0 or step == t_cfg.iterations - 1:
            click.echo(f"step {step_base + step:6d}  loss {total:.5f}")

    params, curve = train([(v, s) for _, v, s in pairs], field_cfg, t_cfg,
                          params=params, on_step=progress)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_weights(ckpt, field_cfg, params)
    curve = [(step_base + s, *rest) for s, *rest in curve]
    csv_path, png_path = report.write_loss_report(ckpt.parent, curve, append=step_base > 0)
    click.echo(f"checkpoint -> {ckpt}")
    click.echo(f"loss curve -> {csv_path} and {png_path}")


@main.command("reconstruct")
@click.argument("blueprint", type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint", "ckpt", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Weights to use (default: checkpoints_dir/model.pafw).")
@click.option("--iso", type=float, default=None,
              help="Iso level in (0, 1); lower values thicken the model.")
@click.option("--resolution", type=int, default=None, help="Grid nodes across the x extent.")
@click.option("--keep-largest/--no-keep-largest", default=None,
              help="Drop every component but the largest-volume one.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Output mesh; format from suffix (.obj/.stl/.ply).")
@click.pass_obj
@_guarded
def reconstruct_cmd(cfg: ProjectConfig, blueprint, ckpt, iso, resolution, keep_largest, out_path):
    """Recover a closed mesh from BLUEPRINT (a .png sheet or .json descriptor)."""
    blueprint = Path(blueprint)
    ckpt = Path(ckpt) if ckpt else cfg.paths.checkpoints_dir / "model.pafw"
    if not ckpt.exists():
        raise FormatError(f"checkpoint {ckpt} does not exist; train one or pass --checkpoint")
    views = _read_views_input(blueprint)
    weights = load_weights(ckpt)
    r_cfg = cfg.recon
    overrides = {}
    if iso is not None:
        overrides["iso"] = iso
    if resolution is not None:
        overrides["grid_resolution"] = resolution
    if keep_largest is not None:
        overrides["keep_largest"] = keep_largest
    if overrides:
        r_cfg = dataclasses.replace(r_cfg, **overrides)
    mesh = reconstruct(views, weights, r_cfg)

    out = Path(out_path) if out_path else blueprint.with_name(
        blueprint.stem.removesuffix("_views").removesuffix("_blueprint") + "_recon.obj"
    )
    fmt = out.suffix.lstrip(".").lower() or "obj"
    if fmt not in ("obj", "stl", "ply"):
        raise FormatError(f"unsupported output mesh format {out.suffix!r}")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(save_mesh(mesh, fmt))
    if mesh.n_triangles == 0:
        click.echo(f"field is everywhere outside at iso {r_cfg.iso}: wrote empty mesh {out}")
        return
    closed = is_watertight(mesh)
    line = (
        f"{mesh.n_vertices} vertices, {mesh.n_triangles} triangles, "
        f"{'watertight' if closed else 'NOT watertight'}"
    )
    if closed:
        line += (
            f", euler {euler_characteristic(mesh)}, "
            f"volume {abs(enclosed_volume(mesh)):.4f}"
        )
    click.echo(line)
    click.echo(f"mesh -> {out}")


@main.command("eval")
@click.argument("recon_mesh", type=click.Path(exists=True, dir_okay=False))
@click.argument("truth_mesh", type=click.Path(exists=True, dir_okay=False))
@click.option("--samples", "n", type=int, default=10000, show_default=True,
              help="Surface samples per mesh for the Chamfer term.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".",
              help="Where metrics.csv and the figure land.")
@click.pass_obj
@_guarded
def eval_cmd(cfg: ProjectConfig, recon_mesh, truth_mesh, n, seed, out_dir):
    """Volumetric IoU and symmetric Chamfer distance between two closed meshes."""
    import numpy as np

    recon = _load_mesh_file(Path(recon_mesh))
    truth = _load_mesh_file(Path(truth_mesh))
    iou, chamfer = eval_metrics(recon, truth, n=n, seed=seed)
    # same draw as the metric's own, for the per-direction histograms
    rng = np.random.default_rng(seed)
    cloud_r = surface_sample(recon, n, rng)
    cloud_t = surface_sample(truth, n, rng)
    _, d_rt = nearest_block(cloud_t, cloud_r)
    _, d_tr = nearest_block(cloud_r, cloud_t)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, png_path = report.write_metrics_report(out, iou, chamfer, d_rt, d_tr)
    click.echo(f"IoU {iou:.4f}  Chamfer {chamfer:.5f}")
    click.echo(f"report -> {csv_path} and {png_path}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--store", "store_dir", type=click.Path(file_okay=False), default="service_store",
              show_default=True, help="Blueprint and job persistence directory.")
@click.pass_obj
def serve(cfg: ProjectConfig, host, port, store_dir):
    """Run the blueprint review and reconstruction HTTP service."""
    import uvicorn

    from .service import create_app

    app = create_app(Path(store_dir), cfg.paths.checkpoints_dir, recon_defaults=cfg.recon)
    click.echo(f"store at {Path(store_dir).resolve()}, checkpoints at {cfg.paths.checkpoints_dir}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
