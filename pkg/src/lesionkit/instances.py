"""Instance decomposition: one-vs-rest maps, 3D connected components, regions.

Component indices are part of the downstream contract: they are assigned in
z-major first-encounter scan order (the order a C-contiguous raveled array is
read), and Voronoi tie-breaking in :mod:`lesionkit.geometry` depends on that
determinism.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InputError
from .grid import BinaryMask, GridShape, LabelVolume

__all__ = [
    "ComponentSet",
    "RegionSpec",
    "RegionStats",
    "DatasetStats",
    "BRATS_REGIONS",
    "one_vs_rest",
    "derive_region",
    "connected_components",
    "component_stats",
    "dataset_stats",
    "median_low",
]

_STRUCTURES = {
    6: ndimage.generate_binary_structure(3, 1),
    18: ndimage.generate_binary_structure(3, 2),
    26: ndimage.generate_binary_structure(3, 3),
}


@dataclass(frozen=True)
class ComponentSet:
    """Connected components of one binary mask.

    ``component_map`` holds 0 for non-foreground voxels and k in 1..K for
    voxels of component k; ``sizes_voxels[k-1]`` is |S_k|.
    """

    class_id: int
    connectivity: int
    shape: GridShape
    component_map: np.ndarray = field(repr=False)  # (d, h, w) int32
    num_components: int
    sizes_voxels: np.ndarray  # (K,) int64

    @property
    def sizes_mm3(self) -> np.ndarray:
        return self.sizes_voxels * self.shape.voxel_volume_mm3


@dataclass(frozen=True)
class RegionSpec:
    """A named union of raw labels (e.g. WT = {1, 2, 3})."""

    name: str
    label_set: frozenset[int]

    def __post_init__(self):
        labels = frozenset(int(v) for v in self.label_set)
        if not labels:
            raise InputError(f"region {self.name!r} has an empty label set")
        if any(v < 0 for v in labels):
            raise InputError(f"region {self.name!r} contains negative labels")
        object.__setattr__(self, "label_set", labels)


#: BraTS-METS hierarchy: whole tumor, tumor core, enhancing tumor, resection cavity.
BRATS_REGIONS = (
    RegionSpec("WT", frozenset({1, 2, 3})),
    RegionSpec("TC", frozenset({1, 3})),
    RegionSpec("ET", frozenset({3})),
    RegionSpec("RC", frozenset({4})),
)


def default_regions(num_classes: int) -> tuple[RegionSpec, ...]:
    """One singleton region per foreground class."""
    return tuple(RegionSpec(f"class_{c}", frozenset({c})) for c in range(1, num_classes))


def one_vs_rest(labels: LabelVolume, class_id: int) -> BinaryMask:
    """Binary map of one foreground class; all other classes become background."""
    if not 1 <= class_id < labels.num_classes:
        raise InputError(
            f"class_id must be in [1, {labels.num_classes}), got {class_id}"
        )
    return BinaryMask(labels.shape, labels.data == class_id)


def derive_region(labels: LabelVolume, spec: RegionSpec) -> BinaryMask:
    """Mask of voxels whose label belongs to the region's label set."""
    bad = [v for v in spec.label_set if v >= labels.num_classes]
    if bad:
        raise InputError(
            f"region {spec.name!r} labels {sorted(bad)} >= num_classes {labels.num_classes}"
        )
    mask = np.isin(labels.data, sorted(spec.label_set))
    return BinaryMask(labels.shape, mask)


def connected_components(mask: BinaryMask, connectivity: int = 26,
                         class_id: int = 0) -> ComponentSet:
    """Label connected foreground regions of a mask.

    Components are indexed 1..K in z-major first-encounter order, i.e. by the
    position of each component's first voxel in the raveled array.
    """
    if connectivity not in _STRUCTURES:
        raise InputError(f"connectivity must be one of 6/18/26, got {connectivity}")
    lab, n = ndimage.label(mask.data, structure=_STRUCTURES[connectivity])
    lab = lab.astype(np.int32)
    if n > 0:
        # enforce first-encounter ordering regardless of the labeling backend
        flat = lab.ravel()
        values, first_index = np.unique(flat[flat > 0], return_index=True)
        # np.unique(flat[flat>0]) indexes into the compressed array; recover
        # encounter order by sorting on those positions (order is preserved
        # under compression because it drops elements without reordering).
        order = np.argsort(first_index, kind="stable")
        remap = np.zeros(n + 1, dtype=np.int32)
        remap[values[order]] = np.arange(1, n + 1, dtype=np.int32)
        lab = remap[lab]
    sizes = np.bincount(lab.ravel(), minlength=n + 1)[1:].astype(np.int64)
    lab.setflags(write=False)
    return ComponentSet(
        class_id=class_id,
        connectivity=connectivity,
        shape=mask.shape,
        component_map=lab,
        num_components=int(n),
        sizes_voxels=sizes,
    )


def component_stats(comps: ComponentSet, shape: GridShape | None = None):
    """Per-component (index, voxel count, mm^3), ordered by index."""
    shape = shape or comps.shape
    vv = shape.voxel_volume_mm3
    return [
        (k + 1, int(comps.sizes_voxels[k]), float(comps.sizes_voxels[k] * vv))
        for k in range(comps.num_components)
    ]


def median_low(values) -> float | None:
    """Lower median: for even-length input, the lower of the two central
    values, so the reported size always belongs to an actual component."""
    vals = sorted(values)
    if not vals:
        return None
    return float(vals[(len(vals) - 1) // 2])


@dataclass(frozen=True)
class RegionStats:
    region: str
    cases_present: int
    fraction_present: float
    num_components: int
    median_component_mm3: float | None
    total_voxels: int


@dataclass(frozen=True)
class DatasetStats:
    num_cases: int
    connectivity: int
    regions: tuple[RegionStats, ...]

    def to_json_dict(self) -> dict:
        return {
            "num_cases": self.num_cases,
            "connectivity": self.connectivity,
            "regions": [
                {
                    "region": r.region,
                    "cases_present": r.cases_present,
                    "fraction": r.fraction_present,
                    "components": r.num_components,
                    "median_mm3": r.median_component_mm3,
                    "total_voxels": r.total_voxels,
                }
                for r in self.regions
            ],
        }

    def to_csv_rows(self) -> list[list]:
        rows = [["region", "cases_present", "fraction", "components", "median_mm3",
                 "total_voxels"]]
        for r in self.regions:
            rows.append([
                r.region,
                r.cases_present,
                f"{r.fraction_present:.6g}",
                r.num_components,
                "" if r.median_component_mm3 is None else f"{r.median_component_mm3:.6g}",
                r.total_voxels,
            ])
        return rows


def dataset_stats(cases, regions, connectivity: int = 26) -> DatasetStats:
    """Table-style dataset statistics: per region, case presence, component
    counts, pooled lower-median component size (mm^3) and total voxel count.

    ``cases`` is a sequence of LabelVolume; callers that care about
    deterministic reduction order should pass cases sorted by ID.
    """
    cases = list(cases)
    if not cases:
        raise InputError("dataset_stats needs at least one case")
    num_classes = cases[0].num_classes
    for v in cases:
        if v.num_classes != num_classes:
            raise InputError("all cases must share num_classes")

    rows = []
    for spec in regions:
        present = 0
        total_comps = 0
        total_vox = 0
        pooled_mm3: list[float] = []
        for vol in cases:
            mask = derive_region(vol, spec)
            n_fg = mask.num_true()
            if n_fg == 0:
                continue
            present += 1
            total_vox += n_fg
            comps = connected_components(mask, connectivity)
            total_comps += comps.num_components
            pooled_mm3.extend(comps.sizes_mm3.tolist())
        rows.append(RegionStats(
            region=spec.name,
            cases_present=present,
            fraction_present=present / len(cases),
            num_components=total_comps,
            median_component_mm3=median_low(pooled_mm3),
            total_voxels=total_vox,
        ))
    return DatasetStats(num_cases=len(cases), connectivity=connectivity, regions=tuple(rows))
