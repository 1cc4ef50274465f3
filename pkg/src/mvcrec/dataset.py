"""Scene manifests and synthetic dataset generation.

A dataset directory holds one subdirectory per instance (ground-truth voxels
plus per-view camera JSON, depth PFM, and mask PGM) and a manifest.json tying
them together. All paths in the manifest are relative to its directory and
generation is byte-reproducible from the seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .camera import Intrinsics, RaySampling, look_at_camera, read_camera_json, write_camera_json
from .consistency import DEPTH, MASK, VerificationImage
from .grid import read_voxels, write_voxels
from .imageio import read_pfm, read_pgm, write_pfm, write_pgm
from .render import RenderSettings, render_depth, render_mask
from .shapes import generate_shape


@dataclass
class ViewRecord:
    camera_path: str
    depth_path: str | None = None
    mask_path: str | None = None


@dataclass
class InstanceRecord:
    id: str
    grid_path: str
    views: list


@dataclass
class SceneManifest:
    instances: list
    sampling: RaySampling
    observation: str  # which observation reconstruction consumes by default
    root: str = "."

    def instance_dir(self, inst):
        return os.path.join(self.root, os.path.dirname(inst.grid_path))

    def resolve(self, rel_path):
        return os.path.join(self.root, rel_path)


def save_manifest(path, manifest):
    doc = {
        "instances": [
            {
                "id": inst.id,
                "grid_path": inst.grid_path,
                "views": [
                    {k: v for k, v in (("camera_path", vr.camera_path),
                                       ("depth_path", vr.depth_path),
                                       ("mask_path", vr.mask_path)) if v is not None}
                    for vr in inst.views
                ],
            }
            for inst in manifest.instances
        ],
        "sampling": {
            "n_samples": manifest.sampling.n_samples,
            "d_min": manifest.sampling.d_min,
            "d_max": manifest.sampling.d_max,
        },
        "observation": manifest.observation,
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_manifest(path):
    with open(path) as f:
        doc = json.load(f)
    instances = []
    for inst in doc["instances"]:
        views = [
            ViewRecord(
                camera_path=v["camera_path"],
                depth_path=v.get("depth_path"),
                mask_path=v.get("mask_path"),
            )
            for v in inst["views"]
        ]
        if not all(v.depth_path or v.mask_path for v in views):
            raise ValueError(f"instance {inst['id']}: every view needs an observation")
        instances.append(InstanceRecord(id=inst["id"], grid_path=inst["grid_path"], views=views))
    s = doc["sampling"]
    sampling = RaySampling(int(s["n_samples"]), float(s["d_min"]), float(s["d_max"]))
    return SceneManifest(
        instances=instances,
        sampling=sampling,
        observation=doc.get("observation", DEPTH),
        root=os.path.dirname(os.path.abspath(path)),
    )


def load_observation(manifest, view_record, kind):
    """Read a view's depth or mask file as a VerificationImage."""
    if kind == DEPTH:
        if view_record.depth_path is None:
            raise ValueError("view has no depth observation")
        values = read_pfm(manifest.resolve(view_record.depth_path))
        # stored as float32; keep the invariant 0 < d <= d_bg bit-safe
        d_bg = max(manifest.sampling.d_max, float(values.max()))
        return VerificationImage(DEPTH, values, d_bg=d_bg)
    if kind == MASK:
        if view_record.mask_path is None:
            raise ValueError("view has no mask observation")
        return VerificationImage(MASK, read_pgm(manifest.resolve(view_record.mask_path)))
    raise ValueError(f"unknown observation kind {kind!r}")


DEFAULT_MAKEDATA_CONFIG = {
    "n_instances": 10,
    "n_views": 5,
    "grid_dims": 16,
    "image_size": 32,
    "focal_scale": 1.15,  # fu = fv = focal_scale * image_size
    "distance": 2.0,
    "azimuth_range": [0.0, 360.0],
    "elevation_range": [-20.0, 40.0],
    "family": "mixed",
    "translation_mode": "centered",  # or "jittered"
    "translation_jitter": 0.1,
    "n_samples": 32,
    "oversample": 4,
    "threshold": 0.5,
    "observation": "depth",
    "seed": 0,
}


def make_dataset(config, out_dir):
    """Generate shapes, cameras, and rendered depth+mask views under out_dir.

    Returns the manifest. Deterministic in the config (including "seed").
    """
    cfg = dict(DEFAULT_MAKEDATA_CONFIG)
    cfg.update(config or {})
    if cfg["translation_mode"] not in ("centered", "jittered"):
        raise ValueError(f"bad translation_mode {cfg['translation_mode']!r}")
    az_lo, az_hi = cfg["azimuth_range"]
    el_lo, el_hi = cfg["elevation_range"]
    if not (-90.0 < el_lo < el_hi < 90.0):
        raise ValueError(f"bad elevation range ({el_lo}, {el_hi})")
    d = int(cfg["grid_dims"])
    size = int(cfg["image_size"])
    intr = Intrinsics(cfg["focal_scale"] * size, cfg["focal_scale"] * size,
                      size / 2.0, size / 2.0, size, size)
    sampling = RaySampling(
        int(cfg["n_samples"]),
        cfg["distance"] - np.sqrt(3.0) / 2.0,
        cfg["distance"] + np.sqrt(3.0) / 2.0,
    )
    settings = RenderSettings(threshold=cfg["threshold"], oversample=int(cfg["oversample"]))
    jitter = cfg["translation_jitter"] if cfg["translation_mode"] == "jittered" else 0.0

    os.makedirs(out_dir, exist_ok=True)
    seeds = np.random.SeedSequence(int(cfg["seed"])).spawn(int(cfg["n_instances"]))
    instances = []
    for i, seq in enumerate(seeds):
        rng = np.random.default_rng(seq)
        inst_id = f"inst_{i:03d}"
        inst_dir = os.path.join(out_dir, inst_id)
        os.makedirs(inst_dir, exist_ok=True)
        grid = generate_shape((d, d, d), rng, family=cfg["family"], translation_jitter=jitter)
        grid_rel = os.path.join(inst_id, "gt.mvox")
        write_voxels(os.path.join(out_dir, grid_rel), grid)

        views = []
        for v in range(int(cfg["n_views"])):
            view_dir = os.path.join(inst_dir, f"view_{v:02d}")
            os.makedirs(view_dir, exist_ok=True)
            az = rng.uniform(az_lo, az_hi)
            el = rng.uniform(el_lo, el_hi)
            pose = look_at_camera(az, el, cfg["distance"])
            depth = render_depth(grid, pose, intr, sampling, settings)
            mask = render_mask(grid, pose, intr, sampling, settings)
            rel = lambda name: os.path.join(inst_id, f"view_{v:02d}", name)
            write_camera_json(os.path.join(out_dir, rel("camera.json")), intr, pose)
            write_pfm(os.path.join(out_dir, rel("depth.pfm")), depth.values)
            write_pgm(os.path.join(out_dir, rel("mask.pgm")), mask.values)
            views.append(ViewRecord(
                camera_path=rel("camera.json"),
                depth_path=rel("depth.pfm"),
                mask_path=rel("mask.pgm"),
            ))
        instances.append(InstanceRecord(id=inst_id, grid_path=grid_rel, views=views))

    manifest = SceneManifest(
        instances=instances, sampling=sampling,
        observation=cfg["observation"], root=os.path.abspath(out_dir),
    )
    save_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    with open(os.path.join(out_dir, "config.json"), "w") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def load_gt_grid(manifest, inst):
    return read_voxels(manifest.resolve(inst.grid_path))


def load_gt_camera(manifest, view_record):
    return read_camera_json(manifest.resolve(view_record.camera_path))
