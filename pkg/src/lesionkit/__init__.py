"""lesionkit: instance-aware segmentation losses and lesion-level evaluation
for 3D label volumes.

The pieces, bottom up:

* :mod:`lesionkit.grid` — volume containers, softmax, logit backprop;
* :mod:`lesionkit.io` — raw+sidecar and minimal NIfTI-1 readers/writers;
* :mod:`lesionkit.instances` — one-vs-rest masks, connected components,
  label regions, dataset statistics;
* :mod:`lesionkit.geometry` — exact Euclidean distance transform and
  nearest-component Voronoi partition (anisotropic spacing, deterministic
  tie rule);
* :mod:`lesionkit.losses` — the loss family (global DC+CE, per-component
  blob/CC losses, inverse-size weighting) with exact analytic gradients;
* :mod:`lesionkit.panoptic` — Hungarian-matched PQ/RQ/SQ, size strata,
  region DSC, dataset aggregation;
* :mod:`lesionkit.synth` / :mod:`lesionkit.gradshare` / :mod:`lesionkit.cli`
  — synthetic phantoms, gradient-share analysis, command line.
"""

from .errors import InputError, LesionkitError
from .geometry import DistanceField, VoronoiPartition, edt, voronoi_partition
from .gradshare import GradShareReport, gradient_share
from .grid import BinaryMask, GridShape, LabelVolume, ProbVolume, backprop_logits, softmax
from .instances import (
    BRATS_REGIONS,
    ComponentSet,
    DatasetStats,
    RegionSpec,
    connected_components,
    dataset_stats,
    default_regions,
    derive_region,
    one_vs_rest,
)
from .io import load_fields, load_volume, save_fields, save_volume
from .losses import (
    VARIANTS,
    DomainMask,
    LossBreakdown,
    LossConfig,
    WeightMap,
    binary_ce,
    blob_domain,
    combined_loss,
    global_dc_ce,
    instance_loss,
    iwl_weight,
    shirokikh_weights,
    soft_dice,
)
from .panoptic import (
    DEFAULT_TAUS,
    CaseReport,
    DatasetReport,
    MatchResult,
    MeanStd,
    PanopticScores,
    RegionCaseResult,
    SizeStrata,
    aggregate_dataset,
    dsc_matrix,
    evaluate_case,
    format_mean_std,
    hungarian_match,
    mask_dsc,
    panoptic_scores,
)
from .synth import ClassSpec, SynthCase, SynthSpec, generate_case, generate_dataset, synth_generate

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "InputError",
    "LesionkitError",
    "GridShape",
    "LabelVolume",
    "ProbVolume",
    "BinaryMask",
    "softmax",
    "backprop_logits",
    "load_volume",
    "load_fields",
    "save_volume",
    "save_fields",
    "ComponentSet",
    "RegionSpec",
    "BRATS_REGIONS",
    "default_regions",
    "one_vs_rest",
    "derive_region",
    "connected_components",
    "dataset_stats",
    "DatasetStats",
    "DistanceField",
    "VoronoiPartition",
    "edt",
    "voronoi_partition",
    "VARIANTS",
    "LossConfig",
    "DomainMask",
    "LossBreakdown",
    "WeightMap",
    "soft_dice",
    "binary_ce",
    "global_dc_ce",
    "blob_domain",
    "iwl_weight",
    "shirokikh_weights",
    "instance_loss",
    "combined_loss",
    "SizeStrata",
    "MatchResult",
    "MeanStd",
    "PanopticScores",
    "RegionCaseResult",
    "DEFAULT_TAUS",
    "CaseReport",
    "DatasetReport",
    "mask_dsc",
    "dsc_matrix",
    "hungarian_match",
    "panoptic_scores",
    "evaluate_case",
    "aggregate_dataset",
    "format_mean_std",
    "ClassSpec",
    "SynthSpec",
    "SynthCase",
    "generate_case",
    "generate_dataset",
    "synth_generate",
    "GradShareReport",
    "gradient_share",
]
