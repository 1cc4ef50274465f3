"""Batch command-line front end.

Subcommands: makedata, gradcheck, reconstruct, eval, render, loss. Every
command is deterministic for fixed inputs (and seed, where applicable);
--threads only changes wall-clock time, never outputs. Exit codes: 0 success,
1 validation failure, 2 numerical failure (gradcheck/divergence).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import dataset as ds
from .camera import pose_from_dict, pose_to_dict, read_camera_json, default_sampling
from .consistency import DEPTH, MASK, VerificationImage, image_loss
from .evaluation import align_frames, best_threshold, pose_metrics, _resample_rotated
from .gradcheck import run_gradcheck
from .grid import OccupancyGrid, read_voxels, rotate_axis_aligned, write_voxels
from .imageio import read_pfm, read_pgm, write_pfm, write_pgm
from .reconstruct import (
    FullyKnown, InitSettings, KnownTranslation, ReconstructionError,
    ReconstructionProblem, Unknown, View, optimize_instance,
)
from .render import RenderSettings, render_depth, render_mask


def _parse_override(text):
    if "=" not in text:
        raise ValueError(f"override must look like key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _apply_override(config, key, value):
    parts = key.split(".")
    node = config
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def load_config(args, defaults=None):
    """Config file plus dotted-key --set overrides, echoed into outputs."""
    config = dict(defaults or {})
    if getattr(args, "config", None):
        with open(args.config) as f:
            loaded = json.load(f)
        for k, v in loaded.items():
            config[k] = v
    for item in getattr(args, "set", None) or []:
        key, value = _parse_override(item)
        _apply_override(config, key, value)
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    return config


def _write_json(path, doc):
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def cmd_makedata(args):
    config = load_config(args, ds.DEFAULT_MAKEDATA_CONFIG)
    manifest = ds.make_dataset(config, args.out)
    print(f"wrote {len(manifest.instances)} instances to {args.out}")
    return 0


def cmd_gradcheck(args):
    config = load_config(args, {"step": 1e-4, "tolerance": 1e-4, "inject_sign_flip": None})
    report = run_gradcheck(
        step=float(config["step"]),
        tol=float(config["tolerance"]),
        flip_sign=config["inject_sign_flip"],
    )
    for group, info in sorted(report["worst"].items()):
        status = "ok" if info["error"] < report["tolerance"] else "FAIL"
        print(f"{group:12s} worst rel err {info['error']:.3e} "
              f"(case seed={info['seed']}, {info['kind']}) [{status}]")
    print("PASS" if report["passed"] else "FAIL")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(os.path.join(args.out, "gradcheck.json"), report)
    return 0 if report["passed"] else 2


def _init_settings_from(config):
    fields = {}
    for name in ("n_hypotheses", "elevation_init", "learning_rate", "angle_rate_scale",
                 "translation_rate_scale", "adam_beta1", "adam_beta2", "adam_eps",
                 "warmup_steps", "total_steps", "temp_start", "temp_end", "pixel_stride"):
        if name in config.get("init", {}):
            fields[name] = config["init"][name]
    return InitSettings(**fields)


def _reconstruct_one(manifest, inst, mode, kind, init, out_dir, warnings):
    views = []
    for vr in inst.views:
        intr, pose = ds.load_gt_camera(manifest, vr)
        image = ds.load_observation(manifest, vr, kind)
        if mode == "known-pose":
            pk = FullyKnown(pose)
        elif mode == "known-translation":
            pk = KnownTranslation(tuple(pose.translation))
        elif mode == "unknown":
            pk = Unknown()
        else:
            raise ValueError(f"unknown mode {mode!r}")
        views.append(View(image=image, intrinsics=intr, pose_knowledge=pk))
    if mode == "unknown" and len(views) < 2:
        warnings.append(f"{inst.id}: unknown-pose reconstruction with fewer than 2 views")
    grid_dims = ds.load_gt_grid(manifest, inst).dims  # dataset fixes the resolution
    problem = ReconstructionProblem(
        views=views, grid_dims=grid_dims, sampling=manifest.sampling, init=init,
    )
    result = optimize_instance(problem)

    inst_dir = os.path.join(out_dir, inst.id)
    os.makedirs(inst_dir, exist_ok=True)
    write_voxels(os.path.join(inst_dir, "result.mvox"), result.grid)
    poses_doc = {
        "views": [
            {
                **pose_to_dict(pose),
                "selected_hypothesis": result.selected_hypothesis[i],
                "hypothesis_losses": (
                    None if result.hypothesis_losses[i] is None
                    else [float(x) for x in result.hypothesis_losses[i]]
                ),
            }
            for i, pose in enumerate(result.poses)
        ]
    }
    _write_json(os.path.join(inst_dir, "poses.json"), poses_doc)
    with open(os.path.join(inst_dir, "loss.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "total_loss"] + [f"view_{i}" for i in range(len(views))])
        for s in range(len(result.loss_trace)):
            writer.writerow([s, repr(result.loss_trace[s])]
                            + [repr(x) for x in result.per_view_trace[s]])
    return {
        "id": inst.id,
        "final_loss": float(result.loss_trace[-1]),
        "initial_loss": float(result.loss_trace[0]),
        "selected_hypothesis": result.selected_hypothesis,
    }


def cmd_reconstruct(args):
    manifest = ds.load_manifest(args.manifest)
    config = load_config(args, {"observation": manifest.observation, "init": {}})
    kind = config["observation"]
    init = _init_settings_from(config)
    os.makedirs(args.out, exist_ok=True)
    warnings = []
    mode = args.mode

    def work(inst):
        return _reconstruct_one(manifest, inst, mode, kind, init, args.out, warnings)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            summaries = list(pool.map(work, manifest.instances))
    else:
        summaries = [work(inst) for inst in manifest.instances]

    summary = {
        "mode": mode,
        "observation": kind,
        "effective_config": config,
        "instances": summaries,
        "warnings": sorted(warnings),
    }
    _write_json(os.path.join(args.out, "summary.json"), summary)
    print(f"reconstructed {len(summaries)} instances -> {args.out}")
    return 0


def cmd_eval(args):
    manifest = ds.load_manifest(args.manifest)
    preds, gts, pred_rots, gt_rots = [], [], [], []
    for inst in manifest.instances:
        result_path = os.path.join(args.results, inst.id, "result.mvox")
        if not os.path.exists(result_path):
            raise ValueError(f"no result for instance {inst.id} under {args.results}")
        preds.append(read_voxels(result_path))
        gts.append(ds.load_gt_grid(manifest, inst))
        with open(os.path.join(args.results, inst.id, "poses.json")) as f:
            poses_doc = json.load(f)
        for vr, pd in zip(inst.views, poses_doc["views"]):
            _, gt_pose = ds.load_gt_camera(manifest, vr)
            pred_rots.append(pose_from_dict(pd).rotation())
            gt_rots.append(gt_pose.rotation())

    mode = "exact24" if args.alignment == "exact24" else "euler"
    alignment = align_frames(preds, gts, mode=mode, step_deg=args.alignment_step)
    if mode == "exact24":
        aligned = [rotate_axis_aligned(p, alignment.rotation.astype(np.int64)) for p in preds]
    else:
        aligned = [_resample_rotated(p, alignment.rotation) for p in preds]
    tau, iou = best_threshold(aligned, gts)
    pm = pose_metrics(pred_rots, gt_rots, alignment.rotation)
    metrics = {
        "iou": iou,
        "tau": tau,
        "acc30": pm.acc_30,
        "med_err_deg": pm.med_err,
        "alignment": {
            "mode": mode,
            "rotation": [float(x) for x in np.asarray(alignment.rotation).ravel()],
            "mean_iou_after": alignment.mean_iou_after,
            "candidates_evaluated": alignment.candidates_evaluated,
        },
    }
    out_path = args.out or os.path.join(args.results, "metrics.json")
    if os.path.isdir(out_path):
        out_path = os.path.join(out_path, "metrics.json")
    _write_json(out_path, metrics)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


def _sampling_from_config(config, pose):
    if "n_samples" in config and "d_min" in config and "d_max" in config:
        from .camera import RaySampling

        return RaySampling(int(config["n_samples"]), float(config["d_min"]), float(config["d_max"]))
    distance = float(np.linalg.norm(pose.rotation() @ pose.translation))
    return default_sampling(distance, int(config.get("n_samples", 80)))


def cmd_render(args):
    config = load_config(args, {"oversample": 4, "threshold": 0.5})
    grid = read_voxels(args.grid)
    intr, pose = read_camera_json(args.camera)
    sampling = _sampling_from_config(config, pose)
    settings = RenderSettings(threshold=float(config["threshold"]),
                              oversample=int(config["oversample"]))
    os.makedirs(args.out, exist_ok=True)
    if args.kind in ("depth", "both"):
        depth = render_depth(grid, pose, intr, sampling, settings)
        write_pfm(os.path.join(args.out, "depth.pfm"), depth.values)
    if args.kind in ("mask", "both"):
        mask = render_mask(grid, pose, intr, sampling, settings)
        write_pgm(os.path.join(args.out, "mask.pgm"), mask.values)
    print(f"rendered {args.kind} -> {args.out}")
    return 0


def cmd_loss(args):
    config = load_config(args, {})
    grid = read_voxels(args.grid)
    intr, pose = read_camera_json(args.camera)
    sampling = _sampling_from_config(config, pose)
    if args.image.endswith(".pfm"):
        values = read_pfm(args.image)
        d_bg = float(config.get("d_bg", max(sampling.d_max, float(values.max()))))
        image = VerificationImage(DEPTH, values, d_bg=d_bg)
    elif args.image.endswith(".pgm"):
        image = VerificationImage(MASK, read_pgm(args.image))
    else:
        raise ValueError(f"cannot infer observation kind from {args.image!r}")
    loss = image_loss(grid, pose, intr, sampling, image, pixel_stride=args.stride)
    print(json.dumps({"loss": loss, "kind": image.kind, "pixel_stride": args.stride}))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="mvcrec",
                                     description="multi-view consistency reconstruction tools")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dotted-key config override (JSON-parsed value)")
        p.add_argument("--seed", type=int, default=None)
        if out_required:
            p.add_argument("--out", required=True, help="output directory")
        else:
            p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("makedata", help="generate a synthetic multi-view dataset")
    common(p, out_required=True)
    p.set_defaults(func=cmd_makedata)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    common(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("reconstruct", help="optimize shape (and poses) against a dataset")
    common(p, out_required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=["known-pose", "known-translation", "unknown"],
                   default="known-pose")
    p.add_argument("--threads", type=int, default=1,
                   help="instance-level parallelism (never changes results)")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", help="score reconstruction results against ground truth")
    common(p)
    p.add_argument("--results", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--alignment", choices=["exact24", "euler"], default="exact24")
    p.add_argument("--alignment-step", type=float, default=15.0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="render depth/mask for one grid and camera")
    common(p, out_required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--kind", choices=["depth", "mask", "both"], default="both")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("loss", help="evaluate the consistency loss for one view")
    common(p)
    p.add_argument("--grid", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--image", required=True, help="observation (.pfm depth or .pgm mask)")
    p.add_argument("--stride", type=int, default=1)
    p.set_defaults(func=cmd_loss)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ReconstructionError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
