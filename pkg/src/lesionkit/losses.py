"""The instance-aware loss family, with exact analytic gradients.

Everything here is differentiated with respect to the per-class probability
fields (post-softmax); :func:`lesionkit.grid.backprop_logits` chains the
result back to logits when needed.

Building blocks
---------------
* soft Dice restricted to a voxel domain, with optional per-voxel weights
  entering the numerator/denominator sums once (single power);
* binary cross-entropy on a one-vs-rest channel, weight-normalized mean,
  probabilities clamped to [delta, 1-delta];
* the global multi-class DC+CE: per-foreground-class Dice averaged uniformly
  plus categorical cross-entropy over all voxels.

Per-component variants
----------------------
For each foreground class c with components S_1..S_K (one-vs-rest, so other
classes count as background):

* ``blob``: component k is scored on the full grid minus all *other*
  same-class components;
* ``cc``: component k is scored inside its Voronoi cell of the full grid;
* ``iwl_blob`` / ``iwl_cc``: same domains, but the component's own voxels are
  weighted by clamp(|domain| / |S_k|, 1, 2e5) while the rest of the domain
  keeps weight 1, which balances foreground against background mass within
  each component's spatial context.

Per-component losses average uniformly over components, then over the classes
that have at least one component, so rare classes contribute as much as
common ones.

Global reweighting variants (for comparison):

* ``invweight_global``: one weight map over components of the union of all
  foreground classes, w = N / ((K+1) * |C_i|) with background as the "+1"
  pseudo-component, multiplying both the Dice sums and the CE mean;
* ``invweight_local``: the same construction per one-vs-rest class, applied
  to that class's Dice and binary CE, averaged over foreground classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .geometry import voronoi_partition
from .grid import BinaryMask, GridShape, LabelVolume, ProbVolume
from .instances import ComponentSet, connected_components

__all__ = [
    "VARIANTS",
    "LossConfig",
    "WeightMap",
    "DomainMask",
    "LossBreakdown",
    "soft_dice",
    "binary_ce",
    "global_dc_ce",
    "blob_domain",
    "iwl_weight",
    "shirokikh_weights",
    "instance_loss",
    "combined_loss",
]

VARIANTS = (
    "baseline",
    "blob",
    "cc",
    "iwl_blob",
    "iwl_cc",
    "invweight_global",
    "invweight_local",
)
_INSTANCE_VARIANTS = ("blob", "cc", "iwl_blob", "iwl_cc")

DEFAULT_DICE_SMOOTH = 1e-5
DEFAULT_CE_CLIP = 1e-7
DEFAULT_WEIGHT_CLAMP = (1.0, 2e5)


@dataclass(frozen=True)
class LossConfig:
    variant: str = "baseline"
    alpha: float = 1.0
    beta: float = 1.0
    dice_smooth: float = DEFAULT_DICE_SMOOTH
    ce_clip: float = DEFAULT_CE_CLIP
    weight_clamp: tuple[float, float] = DEFAULT_WEIGHT_CLAMP
    connectivity: int = 26
    units: str = "mm"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InputError(f"unknown loss variant {self.variant!r}")
        if self.alpha < 0 or self.beta < 0 or (self.alpha == 0 and self.beta == 0):
            raise InputError("alpha and beta must be >= 0 and not both zero")
        if self.dice_smooth < 0:
            raise InputError("dice_smooth must be >= 0")
        if not 0 < self.ce_clip < 0.5:
            raise InputError("ce_clip must lie in (0, 0.5)")
        lo, hi = self.weight_clamp
        if lo > hi:
            raise InputError("weight_clamp lower bound exceeds upper bound")
        if self.connectivity not in (6, 18, 26):
            raise InputError(f"connectivity must be 6/18/26, got {self.connectivity}")
        if self.units not in ("mm", "voxel"):
            raise InputError(f"units must be 'mm' or 'voxel', got {self.units!r}")


@dataclass(frozen=True)
class WeightMap:
    shape: GridShape
    data: np.ndarray = field(repr=False)  # (d, h, w) float64 >= 0
    provenance: str = "uniform"


@dataclass(frozen=True)
class DomainMask:
    shape: GridShape
    data: np.ndarray = field(repr=False)  # (d, h, w) bool
    kind: str = "full"  # {"blob", "voronoi", "full"}


@dataclass(frozen=True)
class ClassInstanceBreakdown:
    num_components: int
    component_losses: tuple[float, ...]
    mean: float


@dataclass(frozen=True)
class LossBreakdown:
    variant: str
    alpha: float
    beta: float
    global_value: float
    instance_value: float
    total: float
    per_class: dict[int, ClassInstanceBreakdown]
    active_classes: tuple[int, ...]
    grad: np.ndarray = field(repr=False)  # (C, d, h, w) d(total)/d(prob)

    def to_json_dict(self) -> dict:
        return {
            "variant": self.variant,
            "alpha": self.alpha,
            "beta": self.beta,
            "global": self.global_value,
            "instance": self.instance_value,
            "total": self.total,
            "per_class": {
                str(c): {
                    "K": bd.num_components,
                    "components": list(bd.component_losses),
                }
                for c, bd in sorted(self.per_class.items())
            },
        }


# ---------------------------------------------------------------------------
# scalar building blocks (array-level; public wrappers below)
# ---------------------------------------------------------------------------

def _unpack_domain(domain, like):
    if domain is None:
        return None
    data = domain.data if isinstance(domain, (DomainMask, BinaryMask)) else np.asarray(domain)
    if data.shape != like.shape:
        raise InputError("domain shape does not match field shape")
    return data.astype(bool, copy=False)


def _unpack_weights(weights, like):
    if weights is None:
        return None
    data = weights.data if isinstance(weights, WeightMap) else np.asarray(weights, dtype=np.float64)
    if data.shape != like.shape:
        raise InputError("weight shape does not match field shape")
    if data.size and data.min() < 0:
        raise InputError("negative weights")
    return data


def soft_dice(pred, target, domain=None, weights=None, smooth: float = DEFAULT_DICE_SMOOTH):
    """Soft Dice loss 1 - (2*sum(w*p*g) + eps) / (sum(w*p) + sum(w*g) + eps)
    over a voxel domain.  Returns (value, grad w.r.t. pred); the gradient is
    zero outside the domain."""
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(target, dtype=np.float64)
    if p.shape != g.shape:
        raise InputError("pred/target shape mismatch")
    dom = _unpack_domain(domain, p)
    w = _unpack_weights(weights, p)

    if w is None:
        wp, wg = p, g
        w_eff = None
    else:
        wp, wg = w * p, w * g
        w_eff = w
    if dom is None:
        a = float((wp * g).sum())
        b = float(wp.sum() + wg.sum())
    else:
        a = float((wp * g)[dom].sum())
        b = float(wp[dom].sum() + wg[dom].sum())

    denom = b + smooth
    if denom == 0.0:
        return 0.0, np.zeros_like(p)
    value = 1.0 - (2.0 * a + smooth) / denom

    coeff_const = (2.0 * a + smooth) / (denom * denom)
    coeff_g = -2.0 / denom
    inner = coeff_const + coeff_g * g
    if w_eff is not None:
        inner = inner * w_eff
    if dom is None:
        grad = inner
    else:
        grad = np.where(dom, inner, 0.0)
    return value, grad


def binary_ce(pred, target, domain=None, weights=None, clip: float = DEFAULT_CE_CLIP):
    """Binary cross-entropy with probability clamp, weight-normalized mean
    over the domain.  Empty domains (zero total weight) score 0 with zero
    gradient; the gradient is also zero where the clamp saturates."""
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(target, dtype=np.float64)
    if p.shape != g.shape:
        raise InputError("pred/target shape mismatch")
    dom = _unpack_domain(domain, p)
    w = _unpack_weights(weights, p)

    pc = np.clip(p, clip, 1.0 - clip)
    ce = -(g * np.log(pc) + (1.0 - g) * np.log1p(-pc))
    dce = -g / pc + (1.0 - g) / (1.0 - pc)
    dce = np.where((p < clip) | (p > 1.0 - clip), 0.0, dce)

    if w is None:
        total_w = float(p.size if dom is None else dom.sum())
        wce = ce
        wdce = dce
    else:
        total_w = float(w.sum() if dom is None else w[dom].sum())
        wce = w * ce
        wdce = w * dce
    if total_w == 0.0:
        return 0.0, np.zeros_like(p)
    if dom is None:
        value = float(wce.sum()) / total_w
        grad = wdce / total_w
    else:
        value = float(wce[dom].sum()) / total_w
        grad = np.where(dom, wdce / total_w, 0.0)
    return value, grad


def _categorical_ce(prob, labels, weights, clip):
    """Mean (weight-normalized) of -log p_label over all voxels."""
    p_lab = np.take_along_axis(prob, labels[None].astype(np.int64), axis=0)[0]
    pc = np.clip(p_lab, clip, 1.0 - clip)
    nll = -np.log(pc)
    dnll = np.where((p_lab < clip) | (p_lab > 1.0 - clip), 0.0, -1.0 / pc)
    if weights is None:
        total_w = float(p_lab.size)
        value = float(nll.sum()) / total_w
        per_vox = dnll / total_w
    else:
        total_w = float(weights.sum())
        value = float((weights * nll).sum()) / total_w
        per_vox = weights * dnll / total_w
    grad = np.zeros_like(prob)
    np.put_along_axis(grad, labels[None].astype(np.int64), per_vox[None], axis=0)
    return value, grad


def _global_dc_ce_arrays(prob, labels, weights, smooth, clip):
    num_classes = prob.shape[0]
    grad = np.zeros_like(prob)
    dice_sum = 0.0
    n_fg = num_classes - 1
    for c in range(1, num_classes):
        val, gr = soft_dice(prob[c], labels == c, None, weights, smooth)
        dice_sum += val
        grad[c] += gr / n_fg
    ce_val, ce_grad = _categorical_ce(prob, labels, weights, clip)
    grad += ce_grad
    return dice_sum / n_fg + ce_val, grad


def _check_pair(prob: ProbVolume, labels: LabelVolume):
    if prob.shape != labels.shape:
        raise InputError(f"prob grid {prob.shape} does not match label grid {labels.shape}")
    if prob.num_classes != labels.num_classes:
        raise InputError(
            f"prob has {prob.num_classes} classes, labels declare {labels.num_classes}"
        )
    if not prob.normalized:
        raise InputError("loss inputs must be normalized probabilities (apply softmax)")


def global_dc_ce(prob: ProbVolume, labels: LabelVolume,
                 weights: WeightMap | None = None,
                 smooth: float = DEFAULT_DICE_SMOOTH,
                 clip: float = DEFAULT_CE_CLIP):
    """Global multi-class DC+CE: per-foreground-class soft Dice averaged
    uniformly (background excluded) plus categorical cross-entropy over all
    voxels (background included).  Returns (value, grad)."""
    _check_pair(prob, labels)
    w = None if weights is None else _unpack_weights(weights, prob.data[0])
    return _global_dc_ce_arrays(prob.data, labels.data, w, smooth, clip)


# ---------------------------------------------------------------------------
# per-component machinery
# ---------------------------------------------------------------------------

def blob_domain(comps: ComponentSet, k: int) -> DomainMask:
    """Everything except the voxels of same-class components other than k."""
    if not 1 <= k <= comps.num_components:
        raise InputError(f"component index {k} out of range 1..{comps.num_components}")
    cm = comps.component_map
    return DomainMask(comps.shape, (cm == 0) | (cm == k), kind="blob")


def iwl_weight(domain_size: int, component_size: int,
               clamp: tuple[float, float] = DEFAULT_WEIGHT_CLAMP) -> float:
    """Inverse-size component weight clamp(|domain| / |S_k|, lo, hi)."""
    if component_size <= 0:
        raise InputError("component_size must be >= 1")
    lo, hi = clamp
    return float(min(max(domain_size / component_size, lo), hi))


def _instance_parts(prob: np.ndarray, labels: LabelVolume, cfg: LossConfig):
    """Instance-loss value/grad plus per-class component losses.

    Averages uniformly over the components of each class, then over the
    classes that have at least one component.
    """
    num_classes = prob.shape[0]
    grad = np.zeros_like(prob)
    per_class: dict[int, ClassInstanceBreakdown] = {}
    active: list[int] = []
    class_means: list[float] = []
    use_voronoi = cfg.variant in ("cc", "iwl_cc")
    use_iwl = cfg.variant in ("iwl_blob", "iwl_cc")

    for c in range(1, num_classes):
        mask = BinaryMask(labels.shape, labels.data == c)
        comps = connected_components(mask, cfg.connectivity, class_id=c)
        if comps.num_components == 0:
            continue
        active.append(c)
        cm = comps.component_map
        cells = voronoi_partition(comps, cfg.units).cell_map if use_voronoi else None
        p = prob[c]
        g = mask.data.astype(np.float64)
        losses = []
        class_grad = np.zeros_like(p)
        for k in range(1, comps.num_components + 1):
            dom = (cells == k) if use_voronoi else ((cm == 0) | (cm == k))
            weights = None
            if use_iwl:
                wk = iwl_weight(int(dom.sum()), int(comps.sizes_voxels[k - 1]),
                                cfg.weight_clamp)
                weights = np.where(cm == k, wk, 1.0)
            dval, dgrad = soft_dice(p, g, dom, weights, cfg.dice_smooth)
            cval, cgrad = binary_ce(p, g, dom, weights, cfg.ce_clip)
            losses.append(dval + cval)
            class_grad += dgrad + cgrad
        mean_c = float(np.mean(losses))
        class_means.append(mean_c)
        per_class[c] = ClassInstanceBreakdown(
            num_components=comps.num_components,
            component_losses=tuple(losses),
            mean=mean_c,
        )
        grad[c] += class_grad / comps.num_components

    if not active:
        return 0.0, grad, per_class, tuple(active)
    grad /= len(active)
    return float(np.mean(class_means)), grad, per_class, tuple(active)


def instance_loss(prob: ProbVolume, labels: LabelVolume, cfg: LossConfig) -> LossBreakdown:
    """The instance term alone (unit coefficient): per-component DC+CE on
    blob or Voronoi domains, averaged per class then over active classes."""
    _check_pair(prob, labels)
    if cfg.variant not in _INSTANCE_VARIANTS:
        raise InputError(f"instance_loss undefined for variant {cfg.variant!r}")
    value, grad, per_class, active = _instance_parts(prob.data, labels, cfg)
    return LossBreakdown(
        variant=cfg.variant,
        alpha=cfg.alpha,
        beta=cfg.beta,
        global_value=0.0,
        instance_value=value,
        total=value,
        per_class=per_class,
        active_classes=active,
        grad=grad,
    )


# ---------------------------------------------------------------------------
# Shirokikh global/local inverse-size weighting
# ---------------------------------------------------------------------------

def _shirokikh_map(fg_mask: np.ndarray, shape: GridShape, connectivity: int) -> np.ndarray:
    """Per-voxel weight N / (P * |piece|), where the pieces are the connected
    components of fg_mask plus, when present, the background as one
    pseudo-component.  Weights sum to N (exactly, in real arithmetic)."""
    comps = connected_components(BinaryMask(shape, fg_mask), connectivity)
    n_vox = shape.num_voxels
    n_fg = int(comps.sizes_voxels.sum())
    n_bg = n_vox - n_fg
    pieces = comps.num_components + (1 if n_bg > 0 else 0)
    piece_size = np.empty(comps.num_components + 1, dtype=np.float64)
    piece_size[0] = n_bg if n_bg > 0 else 1.0  # slot unused when bg is empty
    piece_size[1:] = comps.sizes_voxels
    return n_vox / (pieces * piece_size[comps.component_map])


def shirokikh_weights(labels: LabelVolume, scope: str = "global",
                      connectivity: int = 26):
    """Inverse-component-size voxel weights w = N / ((K+1) * |C_i|).

    ``scope="global"`` builds one map from the components of the union of all
    foreground classes (background is the "+1" pseudo-component) and returns a
    WeightMap.  ``scope="local"`` builds one map per one-vs-rest foreground
    class and returns {class_id: WeightMap}.
    """
    if scope == "global":
        data = _shirokikh_map(labels.data > 0, labels.shape, connectivity)
        return WeightMap(labels.shape, data, provenance="shirokikh_global")
    if scope == "local":
        return {
            c: WeightMap(
                labels.shape,
                _shirokikh_map(labels.data == c, labels.shape, connectivity),
                provenance="shirokikh_local",
            )
            for c in range(1, labels.num_classes)
        }
    raise InputError(f"scope must be 'global' or 'local', got {scope!r}")


def _invweight_local_arrays(prob, labels: LabelVolume, cfg: LossConfig):
    """Per-class Shirokikh weighting applied to that class's one-vs-rest
    Dice + binary CE, averaged over foreground classes."""
    num_classes = prob.shape[0]
    grad = np.zeros_like(prob)
    n_fg = num_classes - 1
    total = 0.0
    for c in range(1, num_classes):
        g = labels.data == c
        w = _shirokikh_map(g, labels.shape, cfg.connectivity)
        dval, dgrad = soft_dice(prob[c], g, None, w, cfg.dice_smooth)
        cval, cgrad = binary_ce(prob[c], g, None, w, cfg.ce_clip)
        total += dval + cval
        grad[c] += (dgrad + cgrad) / n_fg
    return total / n_fg, grad


# ---------------------------------------------------------------------------
# combined loss
# ---------------------------------------------------------------------------

def combined_loss(prob: ProbVolume, labels: LabelVolume, cfg: LossConfig) -> LossBreakdown:
    """alpha * global + beta * instance, per the configured variant.

    ``baseline`` has no instance term; ``invweight_*`` are reweighted global
    losses (beta unused); the four instance variants add the per-component
    term.  ``beta == 0`` skips instance computation entirely, so the result
    is bit-identical to the baseline.
    """
    _check_pair(prob, labels)
    p = prob.data
    per_class: dict[int, ClassInstanceBreakdown] = {}
    active: tuple[int, ...] = ()
    ival = 0.0
    igrad = None

    if cfg.variant == "invweight_global":
        wmap = shirokikh_weights(labels, "global", cfg.connectivity)
        gval, ggrad = _global_dc_ce_arrays(p, labels.data, wmap.data,
                                           cfg.dice_smooth, cfg.ce_clip)
    elif cfg.variant == "invweight_local":
        gval, ggrad = _invweight_local_arrays(p, labels, cfg)
    else:
        gval, ggrad = _global_dc_ce_arrays(p, labels.data, None,
                                           cfg.dice_smooth, cfg.ce_clip)
        if cfg.variant in _INSTANCE_VARIANTS and cfg.beta != 0.0:
            ival, igrad, per_class, active = _instance_parts(p, labels, cfg)

    total = cfg.alpha * gval
    grad = cfg.alpha * ggrad
    if igrad is not None:
        total = total + cfg.beta * ival
        grad = grad + cfg.beta * igrad

    return LossBreakdown(
        variant=cfg.variant,
        alpha=cfg.alpha,
        beta=cfg.beta,
        global_value=float(gval),
        instance_value=float(ival),
        total=float(total),
        per_class=per_class,
        active_classes=active,
        grad=grad,
    )
