"""Multi-command pipeline tool.

Commands: generate, assess, fuse, foreground extract|composite,
filter-blur, validate, preview. Logging goes to stderr; machine output
goes to files or stdout. Exit codes: 0 success, 1 validation failure,
2 usage or configuration error.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from .assess import (
    MetricMap,
    ThresholdConfig,
    fuse_labels,
    gc_l_score,
    geometric_consistency,
    visual_structural_similarity,
)
from .datasetio import (
    DatasetManifest,
    LabeledPair,
    PairRecord,
    RunConfig,
    flow_colorwheel_png,
    heatmap_png,
    read_disparity_png16,
    read_flo,
    read_image_png,
    read_mask_png,
    read_pfm,
    write_disparity_png16,
    write_flo,
    write_image_png,
    write_mask_png,
    write_pfm,
)
from .errors import FileFormatError, FlowforgeError, InvalidConfigError, InvalidInputError
from .foreground import (
    SegMaskSet,
    coincidence_matrices,
    composite,
    extract_foreground,
    load_asset,
    load_mask_set,
    match_masks,
    save_asset,
)
from .imagefilter import BlurConfig, filter_directory
from .labelgen import DisparityMap, FlowField, OcclusionMask
from .pipeline import generate_dataset, rc_mode_for_backend
from .scenefield import DepthMap

logger = logging.getLogger("flowforge")

EXIT_VALIDATION_FAILURE = 1
EXIT_USAGE = 2


def _fail_usage(message: str) -> "click.exceptions.UsageError":
    err = click.UsageError(message)
    err.exit_code = EXIT_USAGE
    return err


def _load_manifest(path: Path) -> DatasetManifest:
    if not path.exists():
        raise _fail_usage(f"manifest not found: {path}")
    try:
        return DatasetManifest.read(path)
    except FileFormatError as exc:
        raise _fail_usage(str(exc))


def _record(manifest: DatasetManifest, index: int) -> PairRecord:
    for rec in manifest.records:
        if rec.index == index:
            return rec
    raise _fail_usage(f"no pair with index {index} in manifest")


def _read_depth(root: Path, rel: str) -> DepthMap:
    values, valid = read_pfm(root / rel)
    safe = np.where(valid & (values > 0), values, 1.0)
    return DepthMap(safe.astype(np.float64), valid & (values > 0))


def _read_label(root: Path, rec: PairRecord):
    if rec.task == "stereo":
        return read_disparity_png16(root / rec.label)
    return read_flo(root / rec.label)


def _label_as_flow(label) -> FlowField:
    if isinstance(label, FlowField):
        return label
    values = np.stack([-label.values, np.zeros_like(label.values)], axis=-1)
    return FlowField(values, label.valid)


def _load_pair(root: Path, rec: PairRecord) -> LabeledPair:
    return LabeledPair(
        image1=read_image_png(root / rec.frame1),
        image2=read_image_png(root / rec.frame2),
        label=_read_label(root, rec),
        depth1=_read_depth(root, rec.masks["depth1"]),
        depth2=_read_depth(root, rec.masks["depth2"]),
    )


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging to stderr.")
def main(verbose: bool) -> None:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--jobs", type=int, default=1, show_default=True)
def generate(config_path: Path, out_dir: Path, seed: int | None, jobs: int) -> None:
    """Generate a labeled dataset from a run config."""
    try:
        cfg = RunConfig.load(config_path)
        if seed is not None:
            cfg = RunConfig.from_json({**_cfg_json(cfg), "seed": seed})
        manifest = generate_dataset(
            cfg, out_dir, base_dir=config_path.parent, jobs=max(jobs, 1)
        )
    except (InvalidConfigError, InvalidInputError, FileNotFoundError) as exc:
        raise _fail_usage(str(exc))
    except FlowforgeError as exc:
        logger.error("generation failed: %s", exc)
        sys.exit(EXIT_VALIDATION_FAILURE)
    click.echo(str(manifest))


def _cfg_json(cfg: RunConfig) -> dict:
    return {
        "scene": cfg.scene,
        "backend": cfg.backend,
        "task": cfg.task,
        "pairs": cfg.pairs,
        "seed": cfg.seed,
        "depth": cfg.depth,
        "baseline": cfg.baseline,
        "perturb_rotation": cfg.perturb_rotation,
        "perturb_translation": cfg.perturb_translation,
        "sampling": cfg.sampling,
        "thresholds": cfg.thresholds,
        "mask_selection": list(cfg.mask_selection),
        "occlusion_threshold": cfg.occlusion_threshold,
        "occlusion_margin": cfg.occlusion_margin,
        "fb_alpha": cfg.fb_alpha,
        "fb_beta": cfg.fb_beta,
        "foreground_max": cfg.foreground_max,
    }


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path), required=True)
@click.option("--index", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
def assess(manifest_path: Path, index: int, out_dir: Path) -> None:
    """Recompute VSS and GC maps for one stored pair; print its GC_l."""
    manifest = _load_manifest(manifest_path)
    rec = _record(manifest, index)
    root = manifest_path.parent
    try:
        pair = _load_pair(root, rec)
        occ = OcclusionMask(read_mask_png(root / rec.masks["occ"]))
    except (FileNotFoundError, FileFormatError) as exc:
        raise _fail_usage(f"cannot load pair {index}: {exc}")

    flow = _label_as_flow(pair.label)
    vss = visual_structural_similarity(pair.image1, pair.image2, flow)
    gc = geometric_consistency(
        pair.depth1, pair.depth2, rec.intrinsics, rec.pose1, rec.pose2
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    write_pfm(vss.values, out_dir / f"pair_{index:05d}_vss.pfm", valid=vss.valid)
    write_pfm(gc.values, out_dir / f"pair_{index:05d}_gc.pfm", valid=gc.valid)
    score = gc_l_score(gc, occ)
    click.echo(f"{score:.6f}")


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path), required=True)
@click.option("--index", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option(
    "--masks",
    "selection",
    default="rc,occ,vss,gc",
    show_default=True,
    help="Comma-separated mask subset to apply.",
)
@click.option("--backend", default="nerf_density", show_default=True)
def fuse(manifest_path: Path, index: int, out_dir: Path, selection: str, backend: str) -> None:
    """Re-fuse a stored pair's label from its serialized metric maps."""
    manifest = _load_manifest(manifest_path)
    rec = _record(manifest, index)
    root = manifest_path.parent
    label = _read_label(root, rec)
    masks = {
        "occ": OcclusionMask(read_mask_png(root / rec.masks["occ"])),
    }
    for name in ("rc", "gc", "vss"):
        values, valid = read_pfm(root / rec.masks[name])
        masks[name] = MetricMap(np.clip(values, 0, 1).astype(np.float64), valid)
    wanted = tuple(s for s in selection.split(",") if s)
    try:
        fused = fuse_labels(
            label, masks, ThresholdConfig(), rc_mode_for_backend(backend), wanted
        )
    except InvalidInputError as exc:
        raise _fail_usage(str(exc))
    out_dir.mkdir(parents=True, exist_ok=True)
    if rec.task == "stereo":
        out_label = out_dir / f"pair_{index:05d}_disp_fused.png"
        write_disparity_png16(DisparityMap(fused.values, fused.valid), out_label)
    else:
        out_label = out_dir / f"pair_{index:05d}_flow_fused.flo"
        write_flo(FlowField(fused.values, fused.valid), out_label)
    write_mask_png(fused.valid, out_dir / f"pair_{index:05d}_valid_fused.png")
    click.echo(str(out_label))


@main.group()
def foreground() -> None:
    """Flying-foreground extraction and compositing."""


@foreground.command()
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path), required=True)
@click.option("--index", type=int, default=0, show_default=True)
@click.option("--masks1", type=click.Path(path_type=Path), required=True)
@click.option("--masks2", type=click.Path(path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--backend", default="nerf_density", show_default=True)
def extract(
    manifest_path: Path, index: int, masks1: Path, masks2: Path, out_dir: Path, backend: str
) -> None:
    """Match segmentation masks across one pair and extract clean assets."""
    manifest = _load_manifest(manifest_path)
    rec = _record(manifest, index)
    root = manifest_path.parent
    pair = _load_pair(root, rec)
    try:
        set1 = load_mask_set(masks1)
        set2 = load_mask_set(masks2)
    except InvalidInputError as exc:
        raise _fail_usage(str(exc))

    flow_fwd = _label_as_flow(pair.label)
    from .labelgen import flow_from_depth

    flow_bwd = flow_from_depth(pair.depth2, rec.intrinsics, rec.pose2, rec.pose1)
    m12, m21 = coincidence_matrices(set1, set2, flow_fwd, flow_bwd)
    matches = match_masks(m12, m21)
    quality = {}
    for name in ("rc", "gc", "vss"):
        values, valid = read_pfm(root / rec.masks[name])
        quality[name] = MetricMap(np.clip(values, 0, 1).astype(np.float64), valid)

    cfg = ThresholdConfig()
    kept = 0
    for i, j in matches:
        asset = extract_foreground(
            pair, (i, j), set1, set2, quality, cfg, rc_mode=rc_mode_for_backend(backend)
        )
        if asset is None:
            continue
        save_asset(asset, out_dir / f"asset_{kept:03d}")
        kept += 1
    click.echo(json.dumps({"matches": len(matches), "assets": kept}))


@foreground.command("composite")
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path), required=True)
@click.option("--index", type=int, default=0, show_default=True)
@click.option(
    "--asset",
    "asset_dirs",
    type=click.Path(path_type=Path),
    multiple=True,
    required=True,
    help="Asset bundle directory (repeatable, at most twice).",
)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
def composite_cmd(
    manifest_path: Path, index: int, asset_dirs: tuple, seed: int, out_dir: Path
) -> None:
    """Overlay up to two stored assets onto a stored pair."""
    if len(asset_dirs) > 2:
        raise _fail_usage("at most two assets per composite")
    manifest = _load_manifest(manifest_path)
    rec = _record(manifest, index)
    root = manifest_path.parent
    pair = _load_pair(root, rec)
    assets = [load_asset(d) for d in asset_dirs]
    out = composite(pair, assets, seed=seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"pair_{index:05d}"
    write_image_png(out.image1, out_dir / f"{stem}_frame1.png")
    write_image_png(out.image2, out_dir / f"{stem}_frame2.png")
    if rec.task == "stereo":
        write_disparity_png16(out.label, out_dir / f"{stem}_disp.png")
    else:
        write_flo(out.label, out_dir / f"{stem}_flow.flo")
    write_mask_png(out.label.valid, out_dir / f"{stem}_valid.png")
    click.echo(str(out_dir / stem))


@main.command("filter-blur")
@click.option("--dir", "directory", type=click.Path(path_type=Path), required=True)
@click.option("--threshold", type=float, default=0.0, show_default=True)
@click.option("--report", "report_path", type=click.Path(path_type=Path), default=None)
@click.option("--edge-grad-threshold", type=float, default=0.1, show_default=True)
@click.option("--dilate-radius", type=int, default=3, show_default=True)
@click.option("--highpass-radius-fraction", type=float, default=0.25, show_default=True)
def filter_blur(
    directory: Path,
    threshold: float,
    report_path: Path | None,
    edge_grad_threshold: float,
    dilate_radius: int,
    highpass_radius_fraction: float,
) -> None:
    """Score images for blur and list keep/drop decisions."""
    if not directory.is_dir():
        raise _fail_usage(f"not a directory: {directory}")
    try:
        cfg = BlurConfig(
            edge_grad_threshold=edge_grad_threshold,
            dilate_radius=dilate_radius,
            highpass_radius_fraction=highpass_radius_fraction,
        )
    except InvalidInputError as exc:
        raise _fail_usage(str(exc))
    report = filter_directory(directory, cfg, threshold=threshold)
    if report_path is not None:
        report.write(report_path)
    click.echo(json.dumps(report.to_json(), sort_keys=True))


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path), required=True)
@click.option("--report", "report_path", type=click.Path(path_type=Path), default=None)
@click.option("--flow-tol", type=float, default=0.05, show_default=True,
              help="Max |stored - recomputed| label deviation in px.")
def validate(manifest_path: Path, report_path: Path | None, flow_tol: float) -> None:
    """Recompute labels and GC_l over a dataset; exit 1 on any failure."""
    from .labelgen import disparity_from_depth, flow_from_depth

    manifest = _load_manifest(manifest_path)
    root = manifest_path.parent
    results = []
    ok_all = True
    for rec in manifest.records:
        checks: dict[str, bool] = {}
        entry: dict = {"index": rec.index, "checks": checks}
        try:
            pair = _load_pair(root, rec)
            occ = OcclusionMask(read_mask_png(root / rec.masks["occ"]))
            checks["files_readable"] = True
        except (FileNotFoundError, FileFormatError, InvalidInputError) as exc:
            checks["files_readable"] = False
            entry["error"] = str(exc)
            results.append(entry)
            ok_all = False
            continue

        flow = flow_from_depth(pair.depth1, rec.intrinsics, rec.pose1, rec.pose2)
        if rec.task == "stereo":
            recomputed = disparity_from_depth(
                pair.depth1, _baseline_of(rec), rec.intrinsics.fx
            )
            both = pair.label.valid & recomputed.valid
            dev = np.abs(pair.label.values - recomputed.values)[both]
            checks["label_matches_geometry"] = bool(
                both.any() and dev.max() <= flow_tol + 1.0 / 256.0
            )
            vertical = np.abs(flow.values[..., 1])[flow.valid]
            checks["rectified_zero_vertical"] = bool(vertical.max() < 1e-3)
        else:
            both = pair.label.valid & flow.valid
            dev = np.abs(pair.label.values - flow.values)[both]
            checks["label_matches_geometry"] = bool(both.any() and dev.max() <= flow_tol)

        gc = geometric_consistency(
            pair.depth1, pair.depth2, rec.intrinsics, rec.pose1, rec.pose2
        )
        try:
            entry["gc_l"] = gc_l_score(gc, occ)
            checks["gc_l_defined"] = True
        except FlowforgeError:
            checks["gc_l_defined"] = False
        ok_all &= all(checks.values())
        results.append(entry)

    payload = {"ok": ok_all, "pairs": results}
    text = json.dumps(payload, indent=2, sort_keys=True)
    if report_path is not None:
        report_path.write_text(text + "\n")
    click.echo(text)
    if not ok_all:
        sys.exit(EXIT_VALIDATION_FAILURE)


def _baseline_of(rec: PairRecord) -> float:
    delta = rec.pose2.translation - rec.pose1.translation
    return float(np.linalg.norm(delta))


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path), required=True)
@click.option("--index", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
def preview(manifest_path: Path, index: int, out_dir: Path) -> None:
    """Write color-wheel / heatmap previews for one pair."""
    manifest = _load_manifest(manifest_path)
    rec = _record(manifest, index)
    root = manifest_path.parent
    label = _read_label(root, rec)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"pair_{index:05d}"
    if rec.task == "stereo":
        heatmap_png(label.values, out_dir / f"{stem}_disp.png", valid=label.valid)
    else:
        flow_colorwheel_png(label, out_dir / f"{stem}_flow.png")
    for name in ("rc", "gc", "vss"):
        values, valid = read_pfm(root / rec.masks[name])
        heatmap_png(values, out_dir / f"{stem}_{name}.png", valid=valid, vmax=1.0)
    click.echo(str(out_dir))


if __name__ == "__main__":
    main()
