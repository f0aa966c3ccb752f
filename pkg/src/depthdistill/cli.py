"""
Command-line interface.

    depth-distill render default-boxes --resolution 128 --out scene/
    depth-distill refine --preset default-boxes --iters 500 --out run/
    depth-distill eval run/depth.pfm scene/depth_0000.pfm
    depth-distill rerun run/manifest.json

Exit codes: 0 success, 1 usage, 2 input format or configuration,
3 numerical failure (including a rerun whose output hashes changed).
"""

# Standard packages
import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

# Third-party packages
import numpy as np

# Local packages
import depthdistill
from depthdistill.core.config import config_from_document, config_to_document, read_document
from depthdistill.core.errors import (
    ConfigurationError,
    DegenerateFitError,
    DomainError,
    EmptyDomainError,
    FormatError,
    NoConsensusError,
    NumericalFailure,
    ReproducibilityError,
    UsageError,
)
from depthdistill.core.grids import DepthMap, Image
from depthdistill.core.io import (
    atomic_write,
    read_depth,
    read_image,
    read_intrinsics,
    read_relative,
    write_depth,
    write_image,
    write_intrinsics,
    write_pfm,
)
from depthdistill.core.utils import sha256_file
from depthdistill.losses.distill import (
    RansacConfig,
    align_least_squares,
    align_ransac,
    edges,
    invert_expert,
)
from depthdistill.metrics import depth_metrics, median_scale
from depthdistill.pointcloud import depth_to_cloud, write_ply
from depthdistill.refiner import RefineConfig, RefineInputs, TemporalFrame, refine
from depthdistill.synthscene import (
    PRESETS,
    ExpertSimConfig,
    expert_from_gt,
    preset,
    render_sequence,
    scene_from_document,
    scene_to_document,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser that raises UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclasses.dataclass
class RunRecord(object):
    """Files a command read and wrote, plus the config it ran with."""

    inputs: List[str] = dataclasses.field(default_factory=list)
    outputs: List[str] = dataclasses.field(default_factory=list)
    config: Optional[str] = None
    manifest: Optional[str] = None


def _emit(record: dict) -> None:
    print(json.dumps(record, sort_keys=True))


def _load_scene(name: str, resolution: Optional[int]):
    if name in PRESETS:
        return preset(name, resolution)
    path = Path(name)
    if not path.exists():
        raise ConfigurationError(
            f"{name!r} is neither a scene preset ({', '.join(sorted(PRESETS))}) nor a file"
        )
    spec = scene_from_document(read_document(path))
    return spec.with_resolution(resolution) if resolution else spec


# commands


def cmd_render(args, record: RunRecord) -> int:
    spec = _load_scene(args.scene, args.resolution)
    if Path(args.scene).exists():
        record.inputs.append(args.scene)
    out = Path(args.out)
    frames = args.frames if args.frames else list(range(spec.frames))
    for sample in render_sequence(spec, frames):
        tag = f"{sample.frame:04d}"
        paths = {
            f"left_{tag}.png": lambda p, s=sample: write_image(p, s.left),
            f"right_{tag}.png": lambda p, s=sample: write_image(p, s.right),
            f"depth_{tag}.pfm": lambda p, s=sample: write_depth(p, s.gt_depth),
            f"depth_right_{tag}.pfm": lambda p, s=sample: write_depth(p, s.gt_depth_right),
        }
        for name, writer in paths.items():
            writer(out / name)
            record.outputs.append(str(out / name))
    write_intrinsics(out / "intrinsics.txt", spec.intrinsics)
    document = scene_to_document(spec)
    atomic_write(out / "scene.ini", document.encode("utf-8"))
    record.outputs += [str(out / "intrinsics.txt"), str(out / "scene.ini")]
    record.config = document
    print(f"Rendered {len(frames)} frame(s) of {spec.name} into {out}")
    return EXIT_OK


def cmd_edges(args, record: RunRecord) -> int:
    depth = read_depth(args.depth)
    record.inputs.append(args.depth)
    gmap, alpha, boundary = edges(depth, args.quantile, args.sharpness)
    fraction = float(boundary.hard[boundary.valid].mean()) if boundary.valid.any() else 0.0
    if args.out:
        write_image(args.out, Image(boundary.hard.astype(float)))
        record.outputs.append(args.out)
    _emit({"alpha": alpha, "boundary_fraction": fraction, "quantile": args.quantile})
    return EXIT_OK


def cmd_align(args, record: RunRecord) -> int:
    raw = read_relative(args.expert)
    depth = read_depth(args.depth)
    record.inputs += [args.expert, args.depth]
    if args.space == "inverse":
        x = DepthMap(raw.data, np.isfinite(raw.data) & (raw.data != 0))
        y = DepthMap(np.where(depth.valid, 1.0 / np.where(depth.valid, depth.data, 1.0), 0.0), depth.valid)
    else:
        x = invert_expert(raw)
        y = depth

    if args.ransac:
        cfg = RansacConfig(args.iterations, args.threshold, args.min_inliers, args.seed)
        fit = align_ransac(x, y, cfg)
        record.config = config_to_document(cfg, "ransac")
    else:
        fit = align_least_squares(x, y)
    joint = x.valid & y.valid
    residual = (fit.params.apply(x.data) - y.data)[fit.inliers]
    result = {
        "a_s": fit.params.a_s,
        "a_t": fit.params.a_t,
        "space": args.space,
        "inliers": int(fit.inliers.sum()),
        "points": int(joint.sum()),
        "rmse": float(np.sqrt(np.mean(residual**2))) if residual.size else 0.0,
    }
    print(f"aligned: {fit.params}")
    _emit(result)
    if args.out:
        aligned = fit.aligned
        if args.space == "inverse":
            with np.errstate(divide="ignore"):
                ok = aligned.valid & (aligned.data > 0)
                aligned = DepthMap(np.where(ok, 1.0 / np.where(ok, aligned.data, 1.0), 0.0), ok)
        write_depth(args.out, aligned)
        record.outputs.append(args.out)
    return EXIT_OK


def _refine_config(args, record: RunRecord):
    document = None
    cfg = RefineConfig()
    expert_cfg = ExpertSimConfig()
    if args.config:
        document = read_document(args.config)
        record.inputs.append(args.config)
        cfg = config_from_document(document, RefineConfig, "refine")
        expert_cfg = config_from_document(document, ExpertSimConfig, "expert")
    if args.iters is not None:
        cfg = dataclasses.replace(cfg, iterations=args.iters)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg, expert_cfg


def _refine_inputs(args, cfg: RefineConfig, expert_cfg: ExpertSimConfig, record: RunRecord):
    expert = None
    if args.expert:
        expert = read_relative(args.expert)
        record.inputs.append(args.expert)

    if args.preset:
        spec = preset(args.preset, args.resolution)
        frames = [args.frame] + [args.frame + k for k in cfg.temporal_frames]
        samples = dict(zip(frames, render_sequence(spec, frames)))
        sample = samples[args.frame]
        if expert is None and cfg.dist_weight > 0:
            expert = expert_from_gt(sample.gt_depth, expert_cfg)
        neighbors = {k: samples[args.frame + k] for k in cfg.temporal_frames}
        inputs = RefineInputs.from_sample(sample, expert, neighbors, with_gt=cfg.supervised_weight > 0)
        return inputs, sample.gt_depth

    if not (args.left and args.right and args.intrinsics):
        raise UsageError("refine needs --preset, or --left, --right and --intrinsics")
    left, right = read_image(args.left), read_image(args.right)
    K = read_intrinsics(args.intrinsics)
    record.inputs += [args.left, args.right, args.intrinsics]
    temporal = []
    for spec_text in args.neighbor or []:
        offset, _, path = spec_text.partition(":")
        try:
            offset = int(offset)
        except ValueError:
            raise UsageError(f"--neighbor expects OFFSET:PATH, got {spec_text!r}")
        temporal.append(TemporalFrame(offset, read_image(path)))
        record.inputs.append(path)
    gt = None
    if args.gt:
        gt = read_depth(args.gt)
        record.inputs.append(args.gt)
    return RefineInputs(left, right, K, args.baseline, expert, tuple(temporal), gt), gt


def cmd_refine(args, record: RunRecord) -> int:
    cfg, expert_cfg = _refine_config(args, record)
    inputs, gt = _refine_inputs(args, cfg, expert_cfg, record)
    out = Path(args.out)

    traces = []
    result = refine(inputs, cfg, on_step=lambda r: traces.append(json.dumps(r.as_record(), sort_keys=True)))

    depth_path = out / "depth.pfm"
    trace_path = out / "trace.jsonl"
    config_path = out / "config.ini"
    write_depth(depth_path, result.depth)
    atomic_write(trace_path, "".join(t + "\n" for t in traces).encode("utf-8"))
    document = config_to_document(cfg, "refine") + "\n" + config_to_document(expert_cfg, "expert")
    atomic_write(config_path, document.encode("utf-8"))
    record.outputs += [str(depth_path), str(trace_path), str(config_path)]
    if result.poses:
        pose_path = out / "poses.json"
        poses = {str(k): T.matrix.tolist() for k, T in result.poses.items()}
        atomic_write(pose_path, json.dumps(poses, sort_keys=True, indent=2).encode("utf-8"))
        record.outputs.append(str(pose_path))
    record.config = document
    record.manifest = args.manifest or str(out / "manifest.json")

    summary = {"iterations": cfg.iterations, "depth": str(depth_path)}
    if result.trace:
        summary["l_total"] = result.trace[-1].l_total
    if gt is not None and gt.count:
        summary["metrics"] = depth_metrics(result.depth, gt).as_record()
    _emit(summary)
    return EXIT_OK


def cmd_eval(args, record: RunRecord) -> int:
    pred = read_depth(args.pred)
    gt = read_depth(args.gt)
    record.inputs += [args.pred, args.gt]
    factor = None
    if args.median_scale:
        pred, factor = median_scale(pred, gt)
    metrics = depth_metrics(pred, gt, cap=args.cap)
    print(metrics.format_table())
    result = metrics.as_record()
    if factor is not None:
        result["median_scale"] = factor
    _emit(result)
    if args.out:
        atomic_write(args.out, json.dumps(result, sort_keys=True, indent=2).encode("utf-8"))
        record.outputs.append(args.out)
    return EXIT_OK


def cmd_cloud(args, record: RunRecord) -> int:
    depth = read_depth(args.depth)
    image = read_image(args.image)
    K = read_intrinsics(args.intrinsics)
    record.inputs += [args.depth, args.image, args.intrinsics]
    cloud = depth_to_cloud(depth, image, K)
    write_ply(cloud, args.out, "ascii" if args.ascii else "binary_little_endian")
    record.outputs.append(args.out)
    print(f"Wrote {len(cloud)} points to {args.out}")
    return EXIT_OK


def cmd_expert(args, record: RunRecord) -> int:
    gt = read_depth(args.gt)
    record.inputs.append(args.gt)
    if args.config:
        model = config_from_document(read_document(args.config), ExpertSimConfig, "expert")
        record.inputs.append(args.config)
    else:
        model = ExpertSimConfig(
            args.scale, args.shift, args.gamma, args.blur, args.noise, args.outliers, args.seed
        )
    write_pfm(args.out, expert_from_gt(gt, model))
    record.outputs.append(args.out)
    record.config = config_to_document(model, "expert")
    print(f"Wrote simulated expert to {args.out}")
    return EXIT_OK


def _hashes(paths: Sequence[str]) -> Dict[str, str]:
    return {p: sha256_file(p) for p in paths}


def write_manifest(path: str, argv: Sequence[str], record: RunRecord) -> None:
    manifest = {
        "argv": list(argv),
        "cwd": os.getcwd(),
        "version": getattr(depthdistill, "__version__", "unknown"),
        "config": record.config,
        "inputs": _hashes(record.inputs),
        "outputs": _hashes(record.outputs),
    }
    atomic_write(path, json.dumps(manifest, sort_keys=True, indent=2).encode("utf-8"))
    log.info(f"Wrote manifest {path}")


def cmd_rerun(args, record: RunRecord) -> int:
    """Replay a manifest and compare output hashes."""
    try:
        manifest = json.loads(Path(args.manifest_file).read_text(encoding="utf-8"))
        argv, cwd = manifest["argv"], manifest["cwd"]
        expected_in, expected_out = manifest["inputs"], manifest["outputs"]
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"Malformed manifest {args.manifest_file}: {e}")

    previous = os.getcwd()
    os.chdir(cwd)
    try:
        changed = [p for p, h in expected_in.items() if not Path(p).exists() or sha256_file(p) != h]
        if changed:
            raise FormatError(f"Manifest inputs changed since the recorded run: {', '.join(changed)}")
        # replay without writing a manifest so the recorded one survives a mismatch
        replay = build_parser().parse_args(argv)
        code = replay.handler(replay, RunRecord())
        if code != EXIT_OK:
            return code
        actual = _hashes(list(expected_out))
    finally:
        os.chdir(previous)

    differ = [p for p, h in expected_out.items() if actual.get(p) != h]
    if differ:
        raise ReproducibilityError(f"Output hashes differ for: {', '.join(differ)}")
    print(f"Reproduced {len(expected_out)} output(s) from {args.manifest_file}")
    return EXIT_OK


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="depth-distill", description="Stereo depth refinement with structure distillation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log to stderr")
    common = ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="write a run manifest to this path")
    sub = parser.add_subparsers(dest="command", parser_class=ArgumentParser)
    sub.required = True

    p = sub.add_parser("render", parents=[common], help="render a synthetic stereo scene")
    p.add_argument("scene", help="preset name or scene document")
    p.add_argument("--frames", type=int, nargs="*", help="frame indices (default: all)")
    p.add_argument("--resolution", type=int, help="square resolution override")
    p.add_argument("--out", default="scene", help="output directory")
    p.set_defaults(handler=cmd_render)

    p = sub.add_parser("edges", parents=[common], help="occluding-boundary map of a depth file")
    p.add_argument("depth")
    p.add_argument("--quantile", type=float, default=0.95, help="turn-on level quantile")
    p.add_argument("--sharpness", type=float, default=50.0, help="soft-sign sharpness")
    p.add_argument("--out", help="write the hard boundary map as PNG")
    p.set_defaults(handler=cmd_edges)

    p = sub.add_parser("align", parents=[common], help="fit expert scale and shift to a depth map")
    p.add_argument("expert", help="relative expert map (.pfm or .npz)")
    p.add_argument("depth", help="reference depth (.pfm, .png or .npz)")
    p.add_argument("--ransac", action="store_true", help="robust fit")
    p.add_argument("--space", choices=("depth", "inverse"), default="depth",
                   help="fit inverted expert to depth, or raw expert to inverse depth")
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--threshold", type=float, default=0.05, help="inlier threshold")
    p.add_argument("--min-inliers", type=float, default=0.3, help="required inlier fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the aligned expert depth")
    p.set_defaults(handler=cmd_align)

    p = sub.add_parser("refine", parents=[common], help="refine depth for one stereo frame")
    p.add_argument("--preset", help="render this preset as input")
    p.add_argument("--resolution", type=int, help="preset resolution override")
    p.add_argument("--frame", type=int, default=0, help="preset frame to refine")
    p.add_argument("--left")
    p.add_argument("--right")
    p.add_argument("--intrinsics", help="fx fy cx cy sidecar")
    p.add_argument("--baseline", type=float, default=0.13)
    p.add_argument("--neighbor", action="append", help="temporal neighbor OFFSET:IMAGE")
    p.add_argument("--gt", help="ground-truth depth for the supervised term")
    p.add_argument("--expert", help="relative expert map")
    p.add_argument("--config", help="INI document with [refine], [distill], [ssim], [ransac], [expert]")
    p.add_argument("--iters", type=int, help="override the number of iterations")
    p.add_argument("--seed", type=int, help="override the seed")
    p.add_argument("--out", default="refine-out", help="output directory")
    p.set_defaults(handler=cmd_refine)

    p = sub.add_parser("eval", parents=[common], help="depth error and accuracy metrics")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--cap", type=float, help="ignore ground truth beyond this depth")
    p.add_argument("--median-scale", action="store_true", help="median-scale the prediction first")
    p.add_argument("--out", help="write the metrics record as JSON")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("cloud", parents=[common], help="textured point cloud as PLY")
    p.add_argument("depth")
    p.add_argument("image")
    p.add_argument("intrinsics")
    p.add_argument("--out", default="cloud.ply")
    p.add_argument("--ascii", action="store_true", help="ascii instead of binary PLY")
    p.set_defaults(handler=cmd_cloud)

    p = sub.add_parser("expert", parents=[common], help="simulate a relative expert map from ground truth")
    p.add_argument("gt")
    p.add_argument("--out", default="expert.pfm")
    p.add_argument("--config", help="INI document with an [expert] section")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--shift", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--blur", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--outliers", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_expert)

    p = sub.add_parser("rerun", help="replay a run manifest and verify output hashes")
    p.add_argument("manifest_file")
    p.set_defaults(handler=cmd_rerun)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            depthdistill.add_stderr_logger()
        record = RunRecord()
        code = args.handler(args, record)
        manifest = getattr(args, "manifest", None) or record.manifest
        if code == EXIT_OK and manifest:
            write_manifest(manifest, argv, record)
        return code
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as e:
        print(f"numerical failure in {e.term}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DegenerateFitError, NoConsensusError, EmptyDomainError, ReproducibilityError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FormatError, ConfigurationError, DomainError, OSError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
