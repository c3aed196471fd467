"""Sub-command handlers; each returns a JSON-compatible report or ``None``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
from pathlib import Path
from typing import Any

from octa_restore.config import load_config
from octa_restore.detect import (
    DetectorConfig,
    calibrate_detector,
    defect_indices,
    detect_defects,
    flow_sums,
)
from octa_restore.errors import ConfigError, EmptyDataset, IoFailure
from octa_restore.event_bus import EventBus
from octa_restore.fileio import write_atomic
from octa_restore.imaging import write_png
from octa_restore.metrics import (
    LayerBounds,
    ProjectionStatistic,
    enface_projection,
    evaluate,
    load_bounds,
    save_bounds,
)
from octa_restore.model import (
    TrainConfig,
    UNetConfig,
    build_training_set,
    infer_volume,
    load_params,
    save_params,
    train,
    write_loss_csv,
)
from octa_restore.patch import StitchPlan, plan_stitch
from octa_restore.repair import RepairMode, annotated_projection, repair_volume
from octa_restore.synth import (
    PhantomConfig,
    generate_phantom,
    inject_defects,
    parse_defects,
    spaced_defects,
)
from octa_restore.volume import (
    Volume,
    normalize,
    open_volume,
    parse_dims,
    read_volume,
    write_volume,
)

logger = logging.getLogger(__name__)

Report = dict[str, Any] | None

OCT_SUFFIX = ".oct.vol"
OCTA_SUFFIX = ".octa.vol"


def _write_json(data: Any, path: Path | str) -> None:
    write_atomic(path, [json.dumps(data, indent=2).encode("utf-8"), b"\n"])


def _detector_config(args: argparse.Namespace) -> DetectorConfig:
    return load_config(
        DetectorConfig,
        getattr(args, "dconfig", None),
        {
            "tau_l": getattr(args, "tau_l", None),
            "tau_u": getattr(args, "tau_u", None),
            "window_l": getattr(args, "window_l", None),
            "window_u": getattr(args, "window_u", None),
            "spread_mode": getattr(args, "spread", None),
        },
    )


def _bounds_for(args: argparse.Namespace, volume: Volume) -> LayerBounds | None:
    if getattr(args, "bounds", None) is None:
        return None
    return load_bounds(args.bounds, volume.n_scans, volume.n_lateral)


def _plan_for(args: argparse.Namespace, width: int) -> StitchPlan:
    return plan_stitch(width, args.patch, args.count, args.trim)


def cmd_synth(args: argparse.Namespace, bus: EventBus) -> Report:
    """Generate a phantom pair, optionally with injected defects."""
    cfg = load_config(PhantomConfig, args.config, {"seed": args.seed})
    oct_volume, octa_volume, truth = generate_phantom(cfg)
    if args.defects:
        octa_volume, truth = inject_defects(
            octa_volume,
            parse_defects(args.defects),
            args.motion_gain,
            truth=truth,
            seed=cfg.seed,
        )
    write_volume(oct_volume, args.out_oct)
    write_volume(octa_volume, args.out_octa)
    if args.truth:
        _write_json(truth.to_dict(), args.truth)
    if args.bounds_out:
        save_bounds(truth.bounds, args.bounds_out)
    return {
        "dims": list(cfg.dims),
        "seed": cfg.seed,
        "defects": {str(i): truth.defects[i].value for i in truth.defect_indices()},
    }


def cmd_detect(args: argparse.Namespace, bus: EventBus) -> Report:
    """Label every scan of an OCTA volume."""
    volume = read_volume(args.input)
    cfg = _detector_config(args)
    labels = detect_defects(volume, cfg)
    report = {
        "config": cfg.to_dict(),
        "defects": defect_indices(labels),
        "labels": [label.to_dict() for label in labels],
    }
    if args.report:
        _write_json(report, args.report)
    return report


def cmd_patchplan(args: argparse.Namespace, bus: EventBus) -> Report:
    """Print the stitch plan for a scan width."""
    return _plan_for(args, args.width).to_dict()


def _training_pairs(data_dir: Path) -> tuple[list[Volume], list[Volume]]:
    if not data_dir.is_dir():
        raise IoFailure(data_dir, "not a directory")
    oct_volumes: list[Volume] = []
    octa_volumes: list[Volume] = []
    for oct_path in sorted(data_dir.glob(f"*{OCT_SUFFIX}")):
        octa_path = oct_path.with_name(oct_path.name[: -len(OCT_SUFFIX)] + OCTA_SUFFIX)
        if not octa_path.exists():
            logger.warning("Skipping %s: no matching %s", oct_path.name, octa_path.name)
            continue
        oct_volumes.append(read_volume(oct_path))
        octa_volumes.append(read_volume(octa_path))
    if not oct_volumes:
        raise EmptyDataset(f"{data_dir}: no '*{OCT_SUFFIX}' / '*{OCTA_SUFFIX}' pairs")
    return oct_volumes, octa_volumes


def cmd_train(args: argparse.Namespace, bus: EventBus) -> Report:
    """Train a network on the volume pairs of a directory."""
    ucfg = load_config(UNetConfig, args.ucfg)
    overrides = {"seed": args.seed, "epochs": args.epochs}
    tcfg = load_config(TrainConfig, args.tcfg, overrides)
    oct_volumes, octa_volumes = _training_pairs(Path(args.data))
    dataset = build_training_set(
        oct_volumes,
        octa_volumes,
        dcfg=_detector_config(args),
        patches_per_scan=args.patches_per_scan,
        patch_width=args.patch,
        seed=tcfg.seed,
        pad_to=args.pad,
        spatial_multiple=ucfg.spatial_multiple,
    )
    result = train(dataset, ucfg, tcfg, bus=bus)
    save_params(result.params, args.out)
    if args.log:
        write_loss_csv(result.log, args.log)
    return {
        "patches": len(dataset),
        "epochs": len(result.log),
        "final_loss": result.log[-1].loss if result.log else None,
        "model": str(args.out),
    }


def _parse_scans(text: str | None) -> list[int] | None:
    if not text:
        return None
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(
            f"scan list {text!r} must be comma separated integers"
        ) from exc


def cmd_infer(args: argparse.Namespace, bus: EventBus) -> Report:
    """Generate OCTA scans from an OCT volume."""
    params = load_params(args.model)
    oct_volume = normalize(read_volume(args.oct))
    plan = _plan_for(args, oct_volume.n_lateral)
    generated = infer_volume(params, oct_volume, plan, _parse_scans(args.scans))
    write_volume(generated, args.out)
    return {"dims": list(generated.dims), "out": str(args.out)}


def cmd_repair(args: argparse.Namespace, bus: EventBus) -> Report:
    """Detect and replace defective OCTA scans."""
    oct_volume = read_volume(args.oct)
    octa_volume = read_volume(args.octa)
    params = load_params(args.model)
    plan = _plan_for(args, octa_volume.n_lateral)
    repaired, labels = repair_volume(
        oct_volume,
        octa_volume,
        params,
        _detector_config(args),
        plan,
        RepairMode(args.mode),
        jobs=args.jobs,
        bus=bus,
    )
    write_volume(repaired, args.out)
    if args.png:
        bounds = _bounds_for(args, repaired)
        write_png(annotated_projection(repaired, labels, bounds), args.png)
    return {
        "mode": args.mode,
        "replaced": defect_indices(labels, RepairMode(args.mode).kinds),
        "labels": [label.to_dict() for label in labels],
    }


def cmd_project(args: argparse.Namespace, bus: EventBus) -> Report:
    """Write the en-face projection of a volume as grayscale PNG."""
    volume = read_volume(args.input)
    image = enface_projection(
        volume, _bounds_for(args, volume), ProjectionStatistic(args.statistic)
    )
    write_png(image, args.png)
    return {"shape": list(image.shape), "png": str(args.png)}


def cmd_eval(args: argparse.Namespace, bus: EventBus) -> Report:
    """Compare two volumes with MAE / MSE / SSIM."""
    reference = read_volume(args.a)
    generated = read_volume(args.b)
    report = evaluate(
        reference, generated, _bounds_for(args, reference), _parse_scans(args.intact)
    )
    if args.report:
        _write_json(report, args.report)
    return report


def cmd_import(args: argparse.Namespace, bus: EventBus) -> Report:
    """Wrap a headerless float32 file into an OCTAVOL1 container."""
    volume = open_volume(args.raw, parse_dims(args.dims))
    write_volume(volume, args.out)
    return {"dims": list(volume.dims), "out": str(args.out)}


def cmd_calibrate(args: argparse.Namespace, bus: EventBus) -> Report:
    """Fit the detector coefficients on seeded phantoms with known defects."""
    base = _detector_config(args)
    phantom = load_config(PhantomConfig, args.config)
    corpus = []
    for k in range(args.phantoms):
        seed = args.seed + k
        cfg = dataclasses.replace(phantom, seed=seed)
        _, octa_volume, truth = generate_phantom(cfg)
        requests = spaced_defects(cfg.dims[0], args.n_blink, args.n_motion, seed=seed)
        octa_volume, truth = inject_defects(
            octa_volume, requests, truth=truth, seed=seed
        )
        corpus.append((flow_sums(octa_volume), truth.defect_mask))
    calibrated, scores = calibrate_detector(corpus, base)
    if args.out:
        _write_json(calibrated.to_dict(), args.out)
    return {"config": calibrated.to_dict(), "scores": scores.to_dict()}


__all__ = [
    "cmd_calibrate",
    "cmd_detect",
    "cmd_eval",
    "cmd_import",
    "cmd_infer",
    "cmd_patchplan",
    "cmd_project",
    "cmd_repair",
    "cmd_synth",
    "cmd_train",
]
