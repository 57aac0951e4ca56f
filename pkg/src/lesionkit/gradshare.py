"""Where does the training signal go?  Gradient mass per GT component.

For a given loss configuration, computes grad = d(total)/d(prob), then for
every GT connected component sums the gradient magnitude of that component's
class channel over the component's voxels.  Component masses are grouped by
(class, size stratum) and normalized to shares that sum to 1; whatever mass
falls outside all components (background and off-component voxels, across
all channels) is reported separately and stays out of the normalization.

L1 mass is the default; L2 (per-component Euclidean norm) sits behind a
flag since the choice of norm changes magnitudes but not the qualitative
ordering the report exists to expose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .grid import BinaryMask, LabelVolume, ProbVolume
from .instances import connected_components
from .losses import LossConfig, combined_loss
from .panoptic import SizeStrata

__all__ = ["GradShareReport", "gradient_share"]


@dataclass(frozen=True)
class GradShareReport:
    variant: str
    norm: str  # "l1" | "l2"
    cells: dict[tuple[int, str], float]  # (class, stratum) -> gradient mass
    shares: dict[tuple[int, str], float]  # same keys, normalized over cells
    background_mass: float
    total_mass: float

    def class_share(self, class_id: int) -> float:
        return sum(v for (c, _), v in self.shares.items() if c == class_id)

    def to_json_dict(self) -> dict:
        return {
            "variant": self.variant,
            "norm": self.norm,
            "cells": {
                f"c{c}/{stratum}": {"mass": self.cells[(c, stratum)],
                                    "share": self.shares[(c, stratum)]}
                for (c, stratum) in sorted(self.cells)
            },
            "background_mass": self.background_mass,
            "total_mass": self.total_mass,
        }


def _mass(values: np.ndarray, norm: str) -> float:
    if norm == "l1":
        return float(np.abs(values).sum())
    if norm == "l2":
        return float(np.sqrt((values * values).sum()))
    raise InputError(f"norm must be 'l1' or 'l2', got {norm!r}")


def gradient_share(prob: ProbVolume, labels: LabelVolume, cfg: LossConfig,
                   strata: SizeStrata = SizeStrata(),
                   norm: str = "l1") -> GradShareReport:
    """Share of gradient mass per (GT class, component size stratum)."""
    if norm not in ("l1", "l2"):
        raise InputError(f"norm must be 'l1' or 'l2', got {norm!r}")
    breakdown = combined_loss(prob, labels, cfg)
    grad = breakdown.grad
    voxel_mm3 = labels.shape.voxel_volume_mm3

    cells: dict[tuple[int, str], float] = {}
    component_total = 0.0
    for c in range(1, labels.num_classes):
        mask = BinaryMask(labels.shape, labels.data == c)
        comps = connected_components(mask, cfg.connectivity, class_id=c)
        if comps.num_components == 0:
            continue
        channel = grad[c]
        cm = comps.component_map
        for k in range(1, comps.num_components + 1):
            m = _mass(channel[cm == k], norm)
            stratum = strata.assign(comps.sizes_voxels[k - 1] * voxel_mm3)
            cells[(c, stratum)] = cells.get((c, stratum), 0.0) + m
            component_total += m

    residual = grad.copy()
    for c in range(1, labels.num_classes):
        residual[c][labels.data == c] = 0.0
    shares = {
        key: (value / component_total if component_total > 0 else 0.0)
        for key, value in cells.items()
    }
    return GradShareReport(
        variant=cfg.variant,
        norm=norm,
        cells=cells,
        shares=shares,
        background_mass=_mass(residual, norm),
        total_mass=_mass(grad, norm),
    )
