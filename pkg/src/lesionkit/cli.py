"""Command-line interface.

Subcommands: ``loss``, ``eval``, ``stats``, ``synth``, ``gradshare``.
Global flags (before the subcommand): ``--threads``, ``--seed``,
``--format json|csv``, ``--connectivity 6|18|26``, ``--units mm|voxel``,
``--config FILE``.

A JSON config file supplies any flag by its long name (underscored);
explicit CLI flags override config values, which override built-in
defaults.

Exit codes: 0 success, 1 computation error, 2 input/validation error.
Failures emit one machine-readable JSON record on stderr.

All outputs are deterministic: per-case work may fan out over a thread
pool, but reports are reduced in sorted case-ID order and serialized with
sorted keys, so bytes never depend on the thread count.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .errors import InputError, LesionkitError
from .gradshare import gradient_share
from .grid import softmax
from .instances import BRATS_REGIONS, default_regions, dataset_stats
from .io import load_fields, load_volume, save_fields
from .losses import VARIANTS, LossConfig, combined_loss
from .panoptic import DEFAULT_TAUS, aggregate_dataset, evaluate_case
from .synth import ClassSpec, SynthSpec, synth_generate

__all__ = ["main"]

_VOLUME_EXTS = (".raw", ".nii", ".nii.gz")

_DEFAULTS = {
    "threads": 1,
    "seed": 0,
    "format": "json",
    "connectivity": 26,
    "units": "mm",
    "variant": "baseline",
    "alpha": 1.0,
    "beta": 1.0,
    "logits": False,
    "grad_out": None,
    "taus": "1e-6,0.25,0.5",
    "regions": "auto",
    "pattern": "auto",
    "norm": "l1",
    "num_cases": 20,
    "dims": "48,48,48",
    "spacing": "1,1,1",
    "drop_prob": 0.0,
    "erode": 0,
    "file_format": "raw",
    "preset": None,
    "classes": None,
}

_PRESETS = {
    # triple-imbalance regime: class 1 rare at case/instance/voxel level,
    # class 2 common with several large components per case
    "imbalanced": [
        {"class_id": 1, "presence": 0.1, "count_range": [1, 2], "radius_range_mm": [1.5, 3.0]},
        {"class_id": 2, "presence": 0.9, "count_range": [2, 4], "radius_range_mm": [4.0, 7.0]},
    ],
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesionkit",
        description="Instance-aware segmentation losses and lesion-level evaluation.",
    )
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--format", choices=("json", "csv"), default=None)
    parser.add_argument("--connectivity", type=int, choices=(6, 18, 26), default=None)
    parser.add_argument("--units", choices=("mm", "voxel"), default=None)
    parser.add_argument("--config", default=None, help="JSON file with flag defaults")

    sub = parser.add_subparsers(dest="command", required=True)

    p_loss = sub.add_parser("loss", help="loss breakdown + optional gradient dump")
    p_loss.add_argument("--pred", default=None, help="probability/logit channel family base")
    p_loss.add_argument("--labels", default=None)
    p_loss.add_argument("--out", default=None)
    p_loss.add_argument("--variant", choices=VARIANTS, default=None)
    p_loss.add_argument("--alpha", type=float, default=None)
    p_loss.add_argument("--beta", type=float, default=None)
    p_loss.add_argument("--logits", action=argparse.BooleanOptionalAction, default=None,
                        help="treat --pred files as logits and apply softmax")
    p_loss.add_argument("--grad-out", dest="grad_out", default=None,
                        help="channel-family base for the gradient dump")

    p_eval = sub.add_parser("eval", help="evaluate <id>_pred/<id>_gt pairs in a directory")
    p_eval.add_argument("--in", dest="in_dir", default=None)
    p_eval.add_argument("--out", dest="out_dir", default=None)
    p_eval.add_argument("--taus", default=None, help="comma-separated DSC thresholds")
    p_eval.add_argument("--regions", default=None, help="auto | brats | classes")

    p_stats = sub.add_parser("stats", help="dataset statistics over label volumes")
    p_stats.add_argument("--in", dest="in_dir", default=None)
    p_stats.add_argument("--out", default=None)
    p_stats.add_argument("--regions", default=None)
    p_stats.add_argument("--pattern", default=None,
                         help="glob for label files (default: *_gt.* when present)")

    p_synth = sub.add_parser("synth", help="generate a synthetic sphere dataset")
    p_synth.add_argument("--out", dest="out_dir", default=None)
    p_synth.add_argument("--preset", choices=sorted(_PRESETS), default=None)
    p_synth.add_argument("--classes", default=None, help="JSON list of class specs")
    p_synth.add_argument("--num-cases", dest="num_cases", type=int, default=None)
    p_synth.add_argument("--dims", default=None)
    p_synth.add_argument("--spacing", default=None)
    p_synth.add_argument("--drop-prob", dest="drop_prob", type=float, default=None)
    p_synth.add_argument("--erode", type=int, default=None)
    p_synth.add_argument("--file-format", dest="file_format",
                         choices=("raw", "nii", "nii.gz"), default=None)

    p_gs = sub.add_parser("gradshare", help="gradient mass per class and size stratum")
    p_gs.add_argument("--pred", default=None)
    p_gs.add_argument("--labels", default=None)
    p_gs.add_argument("--out", default=None)
    p_gs.add_argument("--variant", choices=VARIANTS, default=None)
    p_gs.add_argument("--alpha", type=float, default=None)
    p_gs.add_argument("--beta", type=float, default=None)
    p_gs.add_argument("--norm", choices=("l1", "l2"), default=None)
    p_gs.add_argument("--logits", action=argparse.BooleanOptionalAction, default=None)

    return parser


def _merge_config(args: argparse.Namespace) -> dict:
    merged = dict(_DEFAULTS)
    if args.config is not None:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise InputError("config file must hold a JSON object")
        merged.update(file_cfg)
    for key, value in vars(args).items():
        if key == "config" or value is None:
            continue
        merged[key] = value
    return merged


def _parse_floats(text, what: str) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    try:
        values = tuple(float(tok) for tok in str(text).split(",") if tok.strip())
    except ValueError as exc:
        raise InputError(f"cannot parse {what}: {text!r}") from exc
    if not values:
        raise InputError(f"{what} is empty")
    return values


def _parse_ints(text, what: str) -> tuple[int, ...]:
    return tuple(int(v) for v in _parse_floats(text, what))


def _resolve_regions(choice: str, num_classes: int):
    if choice == "brats" or (choice == "auto" and num_classes == 5):
        return BRATS_REGIONS
    if choice in ("auto", "classes"):
        return default_regions(num_classes)
    raise InputError(f"regions must be auto/brats/classes, got {choice!r}")


def _loss_config(cfg: dict) -> LossConfig:
    return LossConfig(
        variant=cfg["variant"],
        alpha=float(cfg["alpha"]),
        beta=float(cfg["beta"]),
        connectivity=int(cfg["connectivity"]),
        units=cfg["units"],
    )


def _write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, rows: list[list]):
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _load_prediction(cfg: dict):
    if cfg["logits"]:
        fields, shape = load_fields(cfg["pred"])
        return softmax(fields, shape)
    return load_volume(cfg["pred"], kind="probs")


def _require(cfg: dict, *keys: str):
    missing = [k for k in keys if cfg.get(k) in (None, "")]
    if missing:
        raise InputError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_loss(cfg: dict) -> int:
    _require(cfg, "pred", "labels", "out")
    labels = load_volume(cfg["labels"], kind="labels")
    prob = _load_prediction(cfg)
    breakdown = combined_loss(prob, labels, _loss_config(cfg))
    out = Path(cfg["out"])
    if cfg["format"] == "csv":
        rows = [["variant", "alpha", "beta", "global", "instance", "total"],
                [breakdown.variant, breakdown.alpha, breakdown.beta,
                 f"{breakdown.global_value:.12g}", f"{breakdown.instance_value:.12g}",
                 f"{breakdown.total:.12g}"],
                [],
                ["class", "component", "loss"]]
        for c, bd in sorted(breakdown.per_class.items()):
            for k, value in enumerate(bd.component_losses, start=1):
                rows.append([c, k, f"{value:.12g}"])
        _write_csv(out, rows)
    else:
        _write_json(out, breakdown.to_json_dict())
    if cfg["grad_out"]:
        save_fields(breakdown.grad, labels.shape, cfg["grad_out"])
    return 0


def _case_stem(name: str) -> tuple[str, str] | None:
    for ext in _VOLUME_EXTS:
        if name.endswith(ext):
            stem = name[: -len(ext)]
            for suffix in ("_pred", "_gt"):
                if stem.endswith(suffix):
                    return stem[: -len(suffix)], suffix[1:]
    return None


def _discover_pairs(in_dir: Path) -> dict[str, dict[str, Path]]:
    if not in_dir.is_dir():
        raise InputError(f"not a directory: {in_dir}")
    found: dict[str, dict[str, Path]] = {}
    for entry in sorted(in_dir.iterdir()):
        if not entry.is_file():
            continue
        parsed = _case_stem(entry.name)
        if parsed is None:
            continue
        case_id, role = parsed
        found.setdefault(case_id, {})[role] = entry
    return found


def _cmd_eval(cfg: dict) -> int:
    _require(cfg, "in_dir", "out_dir")
    taus = _parse_floats(cfg["taus"], "taus")
    found = _discover_pairs(Path(cfg["in_dir"]))
    pairs = {cid: f for cid, f in found.items() if "pred" in f and "gt" in f}
    for cid in sorted(set(found) - set(pairs)):
        roles = sorted(found[cid])
        print(json.dumps({"warning": "unpaired case skipped", "case_id": cid,
                          "present": roles}, sort_keys=True), file=sys.stderr)
    if not pairs:
        raise InputError(f"no <id>_pred/<id>_gt pairs found in {cfg['in_dir']}")

    case_ids = sorted(pairs)
    first_gt = load_volume(str(pairs[case_ids[0]]["gt"]), kind="labels")
    regions = _resolve_regions(cfg["regions"], first_gt.num_classes)
    connectivity = int(cfg["connectivity"])

    def run_one(cid: str):
        pred = load_volume(str(pairs[cid]["pred"]), kind="labels")
        gt = load_volume(str(pairs[cid]["gt"]), kind="labels")
        return evaluate_case(pred, gt, regions=regions, taus=taus,
                             connectivity=connectivity, case_id=cid)

    with ThreadPoolExecutor(max_workers=max(1, int(cfg["threads"]))) as pool:
        reports = list(pool.map(run_one, case_ids))

    out_dir = Path(cfg["out_dir"])
    for report in reports:  # already in sorted case-ID order
        _write_json(out_dir / "cases" / f"{report.case_id}.json", report.to_json_dict())
    dataset = aggregate_dataset(reports)
    _write_json(out_dir / "summary.json", dataset.to_json_dict())
    if cfg["format"] == "csv":
        for tau in taus:
            _write_csv(out_dir / f"summary_tau_{tau:g}.csv", dataset.to_csv_rows(tau))
    return 0


def _label_files(in_dir: Path, pattern: str) -> list[Path]:
    if not in_dir.is_dir():
        raise InputError(f"not a directory: {in_dir}")
    if pattern != "auto":
        return sorted(p for p in in_dir.glob(pattern) if p.is_file())
    gt = sorted(
        p for p in in_dir.iterdir()
        if p.is_file() and _case_stem(p.name) is not None and _case_stem(p.name)[1] == "gt"
    )
    if gt:
        return gt
    return sorted(
        p for p in in_dir.iterdir()
        if p.is_file() and any(p.name.endswith(e) for e in _VOLUME_EXTS)
    )


def _cmd_stats(cfg: dict) -> int:
    _require(cfg, "in_dir", "out")
    files = _label_files(Path(cfg["in_dir"]), cfg["pattern"])
    if not files:
        raise InputError(f"no label volumes found in {cfg['in_dir']}")

    with ThreadPoolExecutor(max_workers=max(1, int(cfg["threads"]))) as pool:
        cases = list(pool.map(lambda p: load_volume(str(p), kind="labels"), files))

    regions = _resolve_regions(cfg["regions"], cases[0].num_classes)
    stats = dataset_stats(cases, regions, connectivity=int(cfg["connectivity"]))
    out = Path(cfg["out"])
    if cfg["format"] == "csv":
        _write_csv(out, stats.to_csv_rows())
    else:
        _write_json(out, stats.to_json_dict())
    return 0


def _class_specs(cfg: dict) -> tuple[ClassSpec, ...]:
    if cfg["preset"] is not None:
        raw = _PRESETS[cfg["preset"]]
    elif cfg["classes"] is not None:
        raw = cfg["classes"]
        if isinstance(raw, str):
            try:
                raw = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise InputError(f"--classes is not valid JSON: {exc}") from exc
    else:
        raise InputError("synth needs --preset or --classes")
    if not isinstance(raw, list):
        raise InputError("class specs must form a JSON list")
    specs = []
    for item in raw:
        try:
            specs.append(ClassSpec(
                class_id=int(item["class_id"]),
                presence=float(item["presence"]),
                count_range=tuple(int(v) for v in item["count_range"]),
                radius_range_mm=tuple(float(v) for v in item["radius_range_mm"]),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad class spec {item!r}: {exc}") from exc
    return tuple(specs)


def _cmd_synth(cfg: dict) -> int:
    _require(cfg, "out_dir")
    spec = SynthSpec(
        dims=_parse_ints(cfg["dims"], "dims"),
        spacing=_parse_floats(cfg["spacing"], "spacing"),
        classes=_class_specs(cfg),
        num_cases=int(cfg["num_cases"]),
        seed=int(cfg["seed"]),
        drop_prob=float(cfg["drop_prob"]),
        erode_voxels=int(cfg["erode"]),
    )
    synth_generate(spec, cfg["out_dir"], fmt=cfg["file_format"])
    return 0


def _cmd_gradshare(cfg: dict) -> int:
    _require(cfg, "pred", "labels", "out")
    labels = load_volume(cfg["labels"], kind="labels")
    prob = _load_prediction(cfg)
    report = gradient_share(prob, labels, _loss_config(cfg), norm=cfg["norm"])
    out = Path(cfg["out"])
    if cfg["format"] == "csv":
        rows = [["class", "stratum", "mass", "share"]]
        for (c, stratum) in sorted(report.cells):
            rows.append([c, stratum, f"{report.cells[(c, stratum)]:.12g}",
                         f"{report.shares[(c, stratum)]:.12g}"])
        rows.append(["background", "", f"{report.background_mass:.12g}", ""])
        rows.append(["total", "", f"{report.total_mass:.12g}", ""])
        _write_csv(out, rows)
    else:
        _write_json(out, report.to_json_dict())
    return 0


_COMMANDS = {
    "loss": _cmd_loss,
    "eval": _cmd_eval,
    "stats": _cmd_stats,
    "synth": _cmd_synth,
    "gradshare": _cmd_gradshare,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _merge_config(args)
        return _COMMANDS[args.command](cfg)
    except InputError as exc:
        print(json.dumps({"error": "InputError", "message": str(exc)}, sort_keys=True),
              file=sys.stderr)
        return 2
    except OSError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)},
                         sort_keys=True), file=sys.stderr)
        return 2
    except LesionkitError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)},
                         sort_keys=True), file=sys.stderr)
        return 1
    except Exception as exc:  # computation failure: keep the record machine-readable
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)},
                         sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
