"""Deterministic synthetic phantoms: non-overlapping spheres per class.

Models the triple-imbalance regime (a class can be rare per case, per
instance, and per voxel) so metric and gradient behavior can be tested
end to end against an exact manifest of what was planted.

Guarantees that make the manifest an oracle:

* sphere centers snap to voxel centers, so every instance has >= 1 voxel;
* any two spheres (same or different class) keep a center gap of at least
  r1 + r2 + 2 * voxel diagonal, so instances never overlap, never touch at
  26-connectivity, and each is recovered as exactly one connected component
  with the recorded voxel count (a digitized ball is 6-connected: stepping
  one voxel toward the center along the largest-offset axis cannot leave
  the ball);
* corruption acts per instance — drop with probability ``drop_prob``,
  erode by ``erode_voxels`` — so expected RQ/PQ are computable from the
  manifest alone;
* one RNG stream per case, seeded ``[seed, case_index]``, consumed in a
  frozen order (presence, count, radii/placements per class ascending,
  then drop draws), so outputs are bit-identical across runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import InputError
from .grid import GridShape, LabelVolume

__all__ = [
    "ClassSpec",
    "SynthSpec",
    "InstanceRecord",
    "SynthCase",
    "generate_case",
    "generate_dataset",
    "synth_generate",
]


@dataclass(frozen=True)
class ClassSpec:
    class_id: int
    presence: float  # probability the class appears in a case
    count_range: tuple[int, int]  # inclusive uniform integer range
    radius_range_mm: tuple[float, float]

    def __post_init__(self):
        if self.class_id < 1:
            raise InputError("class_id must be a foreground label (>= 1)")
        if not 0.0 <= self.presence <= 1.0:
            raise InputError("presence must lie in [0, 1]")
        if self.count_range[0] < 1 or self.count_range[0] > self.count_range[1]:
            raise InputError("count_range must satisfy 1 <= lo <= hi")
        if self.radius_range_mm[0] <= 0 or self.radius_range_mm[0] > self.radius_range_mm[1]:
            raise InputError("radius_range_mm must satisfy 0 < lo <= hi")


@dataclass(frozen=True)
class SynthSpec:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    classes: tuple[ClassSpec, ...] = ()
    num_cases: int = 1
    seed: int = 0
    drop_prob: float = 0.0
    erode_voxels: int = 0
    max_tries: int = 2000

    def __post_init__(self):
        if not self.classes:
            raise InputError("at least one ClassSpec required")
        if self.num_cases < 1:
            raise InputError("num_cases must be >= 1")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise InputError("drop_prob must lie in [0, 1]")
        if self.erode_voxels < 0:
            raise InputError("erode_voxels must be >= 0")
        ids = [c.class_id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise InputError("duplicate class_id in spec")

    @property
    def num_classes(self) -> int:
        return max(c.class_id for c in self.classes) + 1

    @property
    def grid(self) -> GridShape:
        return GridShape(self.dims, self.spacing)

    def to_json_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "spacing": list(self.spacing),
            "classes": [
                {
                    "class_id": c.class_id,
                    "presence": c.presence,
                    "count_range": list(c.count_range),
                    "radius_range_mm": list(c.radius_range_mm),
                }
                for c in self.classes
            ],
            "num_cases": self.num_cases,
            "seed": self.seed,
            "drop_prob": self.drop_prob,
            "erode_voxels": self.erode_voxels,
        }


@dataclass(frozen=True)
class InstanceRecord:
    class_id: int
    center_index: tuple[int, int, int]  # (z, y, x)
    radius_mm: float
    voxels: int
    dropped: bool
    pred_voxels: int

    def to_json_dict(self) -> dict:
        return {
            "class_id": self.class_id,
            "center_index": list(self.center_index),
            "radius_mm": self.radius_mm,
            "voxels": self.voxels,
            "dropped": self.dropped,
            "pred_voxels": self.pred_voxels,
        }


@dataclass(frozen=True)
class SynthCase:
    case_id: str
    gt: LabelVolume
    pred: LabelVolume
    instances: tuple[InstanceRecord, ...]


def _sphere_mask(dims, spacing, center, radius):
    """Boolean box mask and its grid offset for one digitized ball."""
    cz, cy, cx = center
    sz, sy, sx = spacing
    rz, ry, rx = (int(math.ceil(radius / s)) for s in (sz, sy, sx))
    z0, z1 = max(cz - rz, 0), min(cz + rz, dims[0] - 1)
    y0, y1 = max(cy - ry, 0), min(cy + ry, dims[1] - 1)
    x0, x1 = max(cx - rx, 0), min(cx + rx, dims[2] - 1)
    dz = (np.arange(z0, z1 + 1) - cz) * sz
    dy = (np.arange(y0, y1 + 1) - cy) * sy
    dx = (np.arange(x0, x1 + 1) - cx) * sx
    d2 = (dz**2)[:, None, None] + (dy**2)[None, :, None] + (dx**2)[None, None, :]
    return d2 <= radius * radius, (z0, y0, x0)


def _paint(volume, box, offset, value):
    z0, y0, x0 = offset
    view = volume[z0:z0 + box.shape[0], y0:y0 + box.shape[1], x0:x0 + box.shape[2]]
    view[box] = value


def generate_case(spec: SynthSpec, case_index: int) -> SynthCase:
    """One case: sample, place, and corrupt; RNG order is part of the contract."""
    rng = np.random.default_rng([spec.seed, case_index])
    dims, spacing = spec.dims, spec.spacing
    diag = math.sqrt(sum(s * s for s in spacing))
    gt = np.zeros(dims, dtype=np.uint8)

    placed: list[tuple[np.ndarray, float]] = []  # (center_mm, radius)
    plans: list[tuple[int, tuple[int, int, int], float, np.ndarray, tuple]] = []

    for cls in sorted(spec.classes, key=lambda c: c.class_id):
        if rng.random() >= cls.presence:
            continue
        lo, hi = cls.count_range
        count = int(rng.integers(lo, hi + 1))
        for _ in range(count):
            radius = float(rng.uniform(*cls.radius_range_mm))
            margins = [int(math.ceil(radius / s)) + 1 for s in spacing]
            for axis in range(3):
                if margins[axis] > dims[axis] - 1 - margins[axis]:
                    raise InputError(
                        f"class {cls.class_id}: radius {radius:.1f}mm does not fit "
                        f"grid {dims} at spacing {spacing}"
                    )
            for attempt in range(spec.max_tries):
                center = tuple(
                    int(rng.integers(margins[a], dims[a] - margins[a]))
                    for a in range(3)
                )
                center_mm = np.array(center, dtype=np.float64) * np.array(spacing)
                ok = all(
                    np.linalg.norm(center_mm - c_mm) > radius + r + 2.0 * diag
                    for c_mm, r in placed
                )
                if ok:
                    break
            else:
                raise InputError(
                    f"class {cls.class_id}: could not place a {radius:.1f}mm component "
                    f"after {spec.max_tries} tries"
                )
            placed.append((center_mm, radius))
            box, offset = _sphere_mask(dims, spacing, center, radius)
            _paint(gt, box, offset, cls.class_id)
            plans.append((cls.class_id, center, radius, box, offset))

    pred = np.zeros_like(gt)
    records = []
    struct = ndimage.generate_binary_structure(3, 1)
    for class_id, center, radius, box, offset in plans:
        dropped = bool(spec.drop_prob > 0 and rng.random() < spec.drop_prob)
        voxels = int(box.sum())
        pred_voxels = 0
        if not dropped:
            pbox = box
            if spec.erode_voxels > 0:
                pbox = ndimage.binary_erosion(box, structure=struct,
                                              iterations=spec.erode_voxels)
            _paint(pred, pbox, offset, class_id)
            pred_voxels = int(pbox.sum())
        records.append(InstanceRecord(
            class_id=class_id,
            center_index=center,
            radius_mm=radius,
            voxels=voxels,
            dropped=dropped,
            pred_voxels=pred_voxels,
        ))

    grid = spec.grid
    return SynthCase(
        case_id=f"case{case_index:03d}",
        gt=LabelVolume(grid, gt, spec.num_classes),
        pred=LabelVolume(grid, pred, spec.num_classes),
        instances=tuple(records),
    )


def generate_dataset(spec: SynthSpec) -> list[SynthCase]:
    return [generate_case(spec, i) for i in range(spec.num_cases)]


def synth_generate(spec: SynthSpec, out_dir, fmt: str = "raw") -> dict:
    """Write <id>_gt and <id>_pred volumes plus manifest.json; returns the manifest."""
    from .io import save_volume  # local import: io is optional for in-memory use

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = {"raw": ".raw", "nii": ".nii", "nii.gz": ".nii.gz"}.get(fmt)
    if ext is None:
        raise InputError(f"unknown output format {fmt!r}")

    manifest = {"spec": spec.to_json_dict(), "cases": []}
    for case in generate_dataset(spec):
        save_volume(case.gt, out / f"{case.case_id}_gt{ext}")
        save_volume(case.pred, out / f"{case.case_id}_pred{ext}")
        manifest["cases"].append({
            "case_id": case.case_id,
            "instances": [r.to_json_dict() for r in case.instances],
        })
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
