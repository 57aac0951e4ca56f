"""Instance matching and lesion-level evaluation.

Per case and per region (whole tumor, tumor core, ..., or plain classes):

* region DSC on the derived binary masks;
* Hungarian matching of predicted vs. GT connected components, maximizing
  total DSC subject to a feasibility threshold tau (pairs below tau are
  forbidden up front, not post-filtered);
* recognition / segmentation / panoptic quality at each tau;
* size-stratified scores at tau = 0.5 (small < 500 mm^3, medium 500-5000,
  large > 5000; TP/FN stratified by the GT instance size, FP by the
  predicted size since no GT size exists for them).

Both-empty regions are marked absent and excluded from the per-case
foreground mean and from dataset aggregation; dataset aggregation reports
mean +/- population std over the cases where a value is defined.

Matching ties (equal total DSC) resolve to the lexicographically smallest
pair list, which makes reports reproducible across SciPy versions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError
from .grid import BinaryMask, LabelVolume
from .instances import (
    BRATS_REGIONS,
    ComponentSet,
    RegionSpec,
    connected_components,
    default_regions,
    derive_region,
)

__all__ = [
    "DEFAULT_TAUS",
    "SizeStrata",
    "MatchResult",
    "PanopticScores",
    "RegionCaseResult",
    "CaseReport",
    "DatasetReport",
    "mask_dsc",
    "dsc_matrix",
    "hungarian_match",
    "panoptic_scores",
    "evaluate_case",
    "aggregate_dataset",
    "format_mean_std",
]

DEFAULT_TAUS = (1e-6, 0.25, 0.5)
_TIE_TOL = 1e-9


@dataclass(frozen=True)
class SizeStrata:
    """Instance-size bins in mm^3: small < lo, medium [lo, hi], large > hi."""

    lo: float = 500.0
    hi: float = 5000.0
    names: tuple[str, ...] = ("small", "medium", "large")

    def assign(self, size_mm3: float) -> str:
        if size_mm3 < self.lo:
            return self.names[0]
        if size_mm3 <= self.hi:
            return self.names[1]
        return self.names[2]


@dataclass(frozen=True)
class MatchResult:
    tau: float
    pairs: tuple[tuple[int, int, float], ...]  # (pred idx, gt idx, dsc)
    fp: tuple[int, ...]  # unmatched predicted component indices
    fn: tuple[int, ...]  # unmatched GT component indices


@dataclass(frozen=True)
class PanopticScores:
    pq: float
    rq: float
    sq: float
    tp: int
    fp: int
    fn: int
    defined: bool = True

    def to_json_dict(self) -> dict:
        return {
            "pq": self.pq, "rq": self.rq, "sq": self.sq,
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "defined": self.defined,
        }


def mask_dsc(a: BinaryMask, b: BinaryMask) -> float:
    """Dice coefficient 2|a&b| / (|a|+|b|); 1.0 when both masks are empty."""
    if a.shape != b.shape:
        raise InputError(f"mask grids differ: {a.shape} vs {b.shape}")
    na, nb = a.num_true(), b.num_true()
    if na == 0 and nb == 0:
        return 1.0
    inter = int(np.count_nonzero(a.data & b.data))
    return 2.0 * inter / (na + nb)


def dsc_matrix(pred_comps: ComponentSet, gt_comps: ComponentSet) -> np.ndarray:
    """Pairwise DSC between predicted and GT components, (P, G).

    Intersections come from one joint bincount pass, so non-overlapping
    pairs are exactly 0.0 and nothing is computed for them.
    """
    if pred_comps.shape != gt_comps.shape:
        raise InputError("component sets live on different grids")
    n_pred = pred_comps.num_components
    n_gt = gt_comps.num_components
    matrix = np.zeros((n_pred, n_gt), dtype=np.float64)
    if n_pred == 0 or n_gt == 0:
        return matrix
    pm = pred_comps.component_map.ravel()
    gm = gt_comps.component_map.ravel()
    both = (pm > 0) & (gm > 0)
    if not both.any():
        return matrix
    joint = (pm[both].astype(np.int64) - 1) * n_gt + (gm[both].astype(np.int64) - 1)
    inter = np.bincount(joint, minlength=n_pred * n_gt).reshape(n_pred, n_gt)
    i, j = np.nonzero(inter)
    matrix[i, j] = 2.0 * inter[i, j] / (
        pred_comps.sizes_voxels[i] + gt_comps.sizes_voxels[j]
    )
    return matrix


def _completion_value(masked: np.ndarray, rows: list[int], cols: list[int]) -> float:
    """Best achievable total over a sub-matching (thresholded entries are 0)."""
    if not rows or not cols:
        return 0.0
    sub = masked[np.ix_(rows, cols)]
    ri, ci = linear_sum_assignment(sub, maximize=True)
    return float(sub[ri, ci].sum())


def hungarian_match(matrix, tau: float) -> MatchResult:
    """Maximum-total-DSC one-to-one matching with pairs below tau forbidden.

    Among matchings of equal (optimal) total, returns the lexicographically
    smallest pair list, built greedily: predicted components in ascending
    order each take the smallest GT partner that still permits an optimal
    completion (an empty completion, when already optimal, beats any pair).
    """
    mat = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if mat.size == 0:
        mat = mat.reshape(mat.shape[0], mat.shape[-1] if mat.ndim > 1 else 0)
    if mat.size and (mat.min() < 0.0 or mat.max() > 1.0):
        raise InputError("DSC matrix entries must lie in [0, 1]")
    n_pred, n_gt = mat.shape
    # zero-overlap pairs are never formed, even at tau = 0: they cannot raise
    # the total, and a "match" between disjoint components is meaningless
    feasible = (mat >= tau) & (mat > 0.0)
    masked = np.where(feasible, mat, 0.0)

    opt = _completion_value(masked, list(range(n_pred)), list(range(n_gt)))

    pairs: list[tuple[int, int, float]] = []
    used: set[int] = set()
    total = 0.0
    for i in range(n_pred):
        if total >= opt - _TIE_TOL:
            break  # empty suffix already optimal; it is the lex-smallest
        remaining_rows = list(range(i + 1, n_pred))
        for j in range(n_gt):
            if j in used or not feasible[i, j]:
                continue
            rest_cols = [c for c in range(n_gt) if c not in used and c != j]
            attained = total + mat[i, j] + _completion_value(masked, remaining_rows, rest_cols)
            if attained >= opt - _TIE_TOL:
                pairs.append((i, j, float(mat[i, j])))
                used.add(j)
                total += mat[i, j]
                break

    matched_pred = {i for i, _, _ in pairs}
    matched_gt = {j for _, j, _ in pairs}
    return MatchResult(
        tau=tau,
        pairs=tuple(pairs),
        fp=tuple(i for i in range(n_pred) if i not in matched_pred),
        fn=tuple(j for j in range(n_gt) if j not in matched_gt),
    )


def panoptic_scores(match: MatchResult) -> PanopticScores:
    """RQ = TP / (TP + FP/2 + FN/2), SQ = mean matched DSC, PQ = RQ * SQ.

    With no instances on either side the score is flagged undefined so
    aggregation can skip it.
    """
    tp, fp, fn = len(match.pairs), len(match.fp), len(match.fn)
    if tp + fp + fn == 0:
        return PanopticScores(0.0, 0.0, 0.0, 0, 0, 0, defined=False)
    rq = tp / (tp + 0.5 * fp + 0.5 * fn)
    sq = float(np.mean([d for _, _, d in match.pairs])) if tp else 0.0
    return PanopticScores(pq=rq * sq, rq=rq, sq=sq, tp=tp, fp=fp, fn=fn)


def _tau_key(tau: float) -> str:
    return f"{tau:g}"


def _scores_from_counts(tp: int, fp: int, fn: int, dscs: list[float]) -> PanopticScores:
    if tp + fp + fn == 0:
        return PanopticScores(0.0, 0.0, 0.0, 0, 0, 0, defined=False)
    rq = tp / (tp + 0.5 * fp + 0.5 * fn)
    sq = float(np.mean(dscs)) if dscs else 0.0
    return PanopticScores(pq=rq * sq, rq=rq, sq=sq, tp=tp, fp=fp, fn=fn)


@dataclass(frozen=True)
class RegionCaseResult:
    name: str
    absent: bool
    dsc: float | None
    per_tau: dict[str, PanopticScores]
    strata: dict[str, PanopticScores]  # at the stratification tau (0.5)

    def to_json_dict(self) -> dict:
        if self.absent:
            return {"name": self.name, "absent": True}
        return {
            "name": self.name,
            "absent": False,
            "dsc": self.dsc,
            "per_tau": {k: s.to_json_dict() for k, s in self.per_tau.items()},
            "strata": {k: s.to_json_dict() for k, s in self.strata.items()},
        }


@dataclass(frozen=True)
class CaseReport:
    case_id: str
    taus: tuple[float, ...]
    regions: dict[str, RegionCaseResult]
    fg_dsc: float | None
    fg_pq: dict[str, float | None]

    def to_json_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "taus": list(self.taus),
            "regions": {k: r.to_json_dict() for k, r in self.regions.items()},
            "foreground_mean": {
                "dsc": self.fg_dsc,
                "pq": self.fg_pq,
            },
        }


_STRATA_TAU = 0.5


def evaluate_case(pred_labels: LabelVolume, gt_labels: LabelVolume,
                  regions: tuple[RegionSpec, ...] | None = None,
                  taus: tuple[float, ...] = DEFAULT_TAUS,
                  connectivity: int = 26,
                  strata: SizeStrata = SizeStrata(),
                  case_id: str = "") -> CaseReport:
    """Region DSC plus per-tau and size-stratified panoptic scores for one case."""
    if pred_labels.shape != gt_labels.shape:
        raise InputError(
            f"pred grid {pred_labels.shape} does not match gt grid {gt_labels.shape}"
        )
    if pred_labels.num_classes != gt_labels.num_classes:
        raise InputError("pred/gt class counts differ")
    if regions is None:
        regions = default_regions(gt_labels.num_classes)

    voxel_mm3 = gt_labels.shape.voxel_volume_mm3
    results: dict[str, RegionCaseResult] = {}
    for region in regions:
        pred_mask = derive_region(pred_labels, region)
        gt_mask = derive_region(gt_labels, region)
        if pred_mask.num_true() == 0 and gt_mask.num_true() == 0:
            results[region.name] = RegionCaseResult(region.name, True, None, {}, {})
            continue
        dsc = mask_dsc(pred_mask, gt_mask)
        pred_comps = connected_components(pred_mask, connectivity)
        gt_comps = connected_components(gt_mask, connectivity)
        matrix = dsc_matrix(pred_comps, gt_comps)

        per_tau: dict[str, PanopticScores] = {}
        strata_scores: dict[str, PanopticScores] = {}
        for tau in taus:
            match = hungarian_match(matrix, tau)
            per_tau[_tau_key(tau)] = panoptic_scores(match)

        match = hungarian_match(matrix, _STRATA_TAU)
        gt_mm3 = gt_comps.sizes_voxels * voxel_mm3
        pred_mm3 = pred_comps.sizes_voxels * voxel_mm3
        counts = {name: {"tp": 0, "fp": 0, "fn": 0, "dscs": []} for name in strata.names}
        for i, j, d in match.pairs:
            cell = counts[strata.assign(gt_mm3[j])]
            cell["tp"] += 1
            cell["dscs"].append(d)
        for i in match.fp:
            counts[strata.assign(pred_mm3[i])]["fp"] += 1
        for j in match.fn:
            counts[strata.assign(gt_mm3[j])]["fn"] += 1
        for name in strata.names:
            c = counts[name]
            strata_scores[name] = _scores_from_counts(c["tp"], c["fp"], c["fn"], c["dscs"])

        results[region.name] = RegionCaseResult(region.name, False, dsc, per_tau, strata_scores)

    present = [r for r in results.values() if not r.absent]
    fg_dsc = float(np.mean([r.dsc for r in present])) if present else None
    fg_pq: dict[str, float | None] = {}
    for tau in taus:
        key = _tau_key(tau)
        vals = [r.per_tau[key].pq for r in present if r.per_tau[key].defined]
        fg_pq[key] = float(np.mean(vals)) if vals else None

    return CaseReport(case_id=case_id, taus=tuple(taus), regions=results,
                      fg_dsc=fg_dsc, fg_pq=fg_pq)


# ---------------------------------------------------------------------------
# dataset aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeanStd:
    mean: float | None
    std: float | None
    n: int

    def to_json_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n": self.n}


def _mean_std(values: list[float]) -> MeanStd:
    if not values:
        return MeanStd(None, None, 0)
    arr = np.asarray(values, dtype=np.float64)
    return MeanStd(float(arr.mean()), float(arr.std()), len(values))


def format_mean_std(ms: MeanStd) -> str:
    """Table-cell rendering: 3 decimals +/- 2, leading zero stripped (".751 ± .28")."""
    if ms.mean is None:
        return "absent"

    def strip(s: str) -> str:
        return s[1:] if s.startswith("0.") else s

    return f"{strip(f'{ms.mean:.3f}')} ± {strip(f'{ms.std:.2f}')}"


@dataclass(frozen=True)
class RegionAggregate:
    name: str
    n_present: int
    dsc: MeanStd
    per_tau: dict[str, dict[str, MeanStd]]  # tau -> {pq, rq, sq}
    strata: dict[str, dict] = field(default_factory=dict)  # stratum -> {pq: MeanStd, counts}


@dataclass(frozen=True)
class DatasetReport:
    n_cases: int
    taus: tuple[float, ...]
    rows: tuple[RegionAggregate, ...]  # region rows then the foreground-mean row

    def to_json_dict(self) -> dict:
        return {
            "n_cases": self.n_cases,
            "taus": list(self.taus),
            "rows": [
                {
                    "region": row.name,
                    "n_present": row.n_present,
                    "dsc": row.dsc.to_json_dict(),
                    "per_tau": {
                        k: {m: v.to_json_dict() for m, v in metrics.items()}
                        for k, metrics in row.per_tau.items()
                    },
                    "strata": {
                        k: {
                            "pq": cell["pq"].to_json_dict(),
                            "tp": cell["tp"], "fp": cell["fp"], "fn": cell["fn"],
                        }
                        for k, cell in row.strata.items()
                    },
                }
                for row in self.rows
            ],
        }

    def to_csv_rows(self, tau: float) -> list[list[str]]:
        """One table per tau: region rows x (DSC, PQ, RQ, SQ) mean/std columns."""
        key = _tau_key(tau)
        out = [[
            "region", "n", "dsc_mean", "dsc_std",
            "pq_mean", "pq_std", "rq_mean", "rq_std", "sq_mean", "sq_std",
            "dsc_cell", "pq_cell",
        ]]

        def num(x: float | None) -> str:
            return "" if x is None else f"{x:.9f}"

        for row in self.rows:
            metrics = row.per_tau.get(key, {})
            pq = metrics.get("pq", MeanStd(None, None, 0))
            rq = metrics.get("rq", MeanStd(None, None, 0))
            sq = metrics.get("sq", MeanStd(None, None, 0))
            out.append([
                row.name, str(row.n_present),
                num(row.dsc.mean), num(row.dsc.std),
                num(pq.mean), num(pq.std), num(rq.mean), num(rq.std),
                num(sq.mean), num(sq.std),
                format_mean_std(row.dsc), format_mean_std(pq),
            ])
        return out


def aggregate_dataset(case_reports: list[CaseReport]) -> DatasetReport:
    """Mean +/- population std per region and metric over the cases where the
    value is defined; a foreground-mean row (FG) closes the table."""
    if not case_reports:
        raise InputError("no case reports to aggregate")
    taus = case_reports[0].taus
    region_names = list(case_reports[0].regions.keys())
    strata_names: list[str] = []
    for report in case_reports:
        for r in report.regions.values():
            if not r.absent:
                strata_names = list(r.strata.keys())
                break
        if strata_names:
            break

    rows: list[RegionAggregate] = []
    for name in region_names:
        present = [rep.regions[name] for rep in case_reports if not rep.regions[name].absent]
        per_tau: dict[str, dict[str, MeanStd]] = {}
        for tau in taus:
            key = _tau_key(tau)
            defined = [r.per_tau[key] for r in present if r.per_tau[key].defined]
            per_tau[key] = {
                "pq": _mean_std([s.pq for s in defined]),
                "rq": _mean_std([s.rq for s in defined]),
                "sq": _mean_std([s.sq for s in defined]),
            }
        strata: dict[str, dict] = {}
        for sname in strata_names:
            defined = [r.strata[sname] for r in present if r.strata[sname].defined]
            strata[sname] = {
                "pq": _mean_std([s.pq for s in defined]),
                "tp": sum(s.tp for s in defined),
                "fp": sum(s.fp for s in defined),
                "fn": sum(s.fn for s in defined),
            }
        rows.append(RegionAggregate(
            name=name,
            n_present=len(present),
            dsc=_mean_std([r.dsc for r in present]),
            per_tau=per_tau,
            strata=strata,
        ))

    fg_per_tau: dict[str, dict[str, MeanStd]] = {}
    for tau in taus:
        key = _tau_key(tau)
        vals = [rep.fg_pq[key] for rep in case_reports if rep.fg_pq[key] is not None]
        fg_per_tau[key] = {
            "pq": _mean_std(vals),
            "rq": _mean_std([]),
            "sq": _mean_std([]),
        }
    fg_dsc = [rep.fg_dsc for rep in case_reports if rep.fg_dsc is not None]
    rows.append(RegionAggregate(
        name="FG",
        n_present=len(fg_dsc),
        dsc=_mean_std(fg_dsc),
        per_tau=fg_per_tau,
        strata={},
    ))

    return DatasetReport(n_cases=len(case_reports), taus=tuple(taus), rows=tuple(rows))
