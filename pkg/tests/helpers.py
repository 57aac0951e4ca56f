"""Independent reference implementations used as test oracles.

Everything here is deliberately naive — flood fill, all-pairs distance
scans, permutation search, finite differences — and shares no code with the
package so that agreement is evidence, not tautology.
"""

from __future__ import annotations

import itertools
from collections import deque

import numpy as np

from lesionkit import GridShape, LabelVolume, ProbVolume

# ---------------------------------------------------------------------------
# connected components: breadth-first flood fill
# ---------------------------------------------------------------------------


def neighbor_offsets(connectivity: int):
    offs = []
    for dz in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dz == dy == dx == 0:
                    continue
                order = abs(dz) + abs(dy) + abs(dx)
                if connectivity == 6 and order > 1:
                    continue
                if connectivity == 18 and order > 2:
                    continue
                offs.append((dz, dy, dx))
    return offs


def flood_fill_components(mask: np.ndarray, connectivity: int) -> np.ndarray:
    """Component map with indices in z-major first-encounter scan order."""
    offs = neighbor_offsets(connectivity)
    out = np.zeros(mask.shape, dtype=np.int32)
    next_id = 0
    dims = mask.shape
    for z in range(dims[0]):
        for y in range(dims[1]):
            for x in range(dims[2]):
                if not mask[z, y, x] or out[z, y, x]:
                    continue
                next_id += 1
                queue = deque([(z, y, x)])
                out[z, y, x] = next_id
                while queue:
                    cz, cy, cx = queue.popleft()
                    for dz, dy, dx in offs:
                        nz, ny, nx = cz + dz, cy + dy, cx + dx
                        if (0 <= nz < dims[0] and 0 <= ny < dims[1]
                                and 0 <= nx < dims[2]
                                and mask[nz, ny, nx] and not out[nz, ny, nx]):
                            out[nz, ny, nx] = next_id
                            queue.append((nz, ny, nx))
    return out


# ---------------------------------------------------------------------------
# EDT / Voronoi: all-seeds scan with the canonical accumulation order
# ---------------------------------------------------------------------------


def brute_force_nearest(seed_ids: np.ndarray, spacing) -> tuple[np.ndarray, np.ndarray]:
    """Per voxel: (squared distance, id) of the nearest seed, ties to the
    smallest id.  Distances accumulate per-axis terms in x, y, z order —
    ((dx^2*sx^2) + (dy^2*sy^2)) + (dz^2*sz^2) — so floats are comparable
    bit-for-bit with a separable transform that sweeps the axes in that
    order."""
    sz, sy, sx = (float(s) for s in spacing)
    sz2, sy2, sx2 = sz * sz, sy * sy, sx * sx
    seeds = np.argwhere(seed_ids > 0)
    if seeds.size == 0:
        raise ValueError("no seeds")
    ids = seed_ids[seeds[:, 0], seeds[:, 1], seeds[:, 2]]
    order = np.argsort(ids, kind="stable")  # ascending id: first hit wins ties
    seeds, ids = seeds[order], ids[order]

    dims = seed_ids.shape
    zz, yy, xx = np.meshgrid(*(np.arange(n, dtype=np.int64) for n in dims), indexing="ij")
    best_d = np.full(dims, np.inf)
    best_id = np.zeros(dims, dtype=np.int32)
    for (pz, py, px), sid in zip(seeds, ids):
        d = ((xx - px) * (xx - px)) * sx2
        d = d + ((yy - py) * (yy - py)) * sy2
        d = d + ((zz - pz) * (zz - pz)) * sz2
        better = d < best_d  # strict: equal distance keeps the smaller id
        best_d[better] = d[better]
        best_id[better] = sid
    return best_d, best_id


# ---------------------------------------------------------------------------
# matching: exhaustive permutation search
# ---------------------------------------------------------------------------


def brute_force_match(matrix: np.ndarray, tau: float):
    """(max total, lexicographically smallest optimal pair list)."""
    mat = np.asarray(matrix, dtype=np.float64)
    n_pred, n_gt = mat.shape
    n = max(n_pred, n_gt)
    padded = np.zeros((n, n))
    padded[:n_pred, :n_gt] = mat

    best_total = -1.0
    best_pairs = None
    for perm in itertools.permutations(range(n)):
        pairs = []
        total = 0.0
        for i in range(n_pred):
            j = perm[i]
            if j < n_gt and mat[i, j] >= tau and mat[i, j] > 0.0:
                pairs.append((i, j))
                total += mat[i, j]
        if total > best_total + 1e-12:
            best_total, best_pairs = total, pairs
        elif abs(total - best_total) <= 1e-12 and pairs < best_pairs:
            best_pairs = pairs
    return best_total, best_pairs


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------


def central_difference_grad(func, prob_data: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """d func / d prob by central differences, one entry at a time.

    ``func`` maps a raw (C, d, h, w) array to a scalar.
    """
    work = np.array(prob_data, dtype=np.float64, copy=True)
    grad = np.zeros_like(work)
    flat = work.reshape(-1)
    out = grad.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + h
        up = func(work)
        flat[idx] = orig - h
        down = func(work)
        flat[idx] = orig
        out[idx] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> float:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / scale).max())


# ---------------------------------------------------------------------------
# random test data
# ---------------------------------------------------------------------------


def random_labels(rng: np.random.Generator, dims, num_classes: int,
                  spacing=(1.0, 1.0, 1.0), fg_fraction: float = 0.25) -> LabelVolume:
    """Blobby random labels: thresholded noise assigned to random classes."""
    shape = GridShape(tuple(dims), tuple(spacing))
    data = np.zeros(dims, dtype=np.int64)
    fg = rng.random(dims) < fg_fraction
    data[fg] = rng.integers(1, num_classes, size=int(fg.sum()))
    return LabelVolume(shape, data, num_classes)


def random_prob(rng: np.random.Generator, shape: GridShape, num_classes: int,
                margin: float = 0.01) -> ProbVolume:
    """Normalized probabilities with every entry in [margin, 1 - margin], so
    neither the cross-entropy clamp nor the [0, 1] bounds are ever active
    during finite-difference probing."""
    raw = rng.random((num_classes, *shape.dims)) + 0.2
    raw /= raw.sum(axis=0, keepdims=True)
    squeeze = 1.0 - num_classes * margin
    data = margin + squeeze * raw
    return ProbVolume(shape, data, normalized=True)


def sphere_labels(dims, spacing, centers_radii_classes, num_classes: int) -> LabelVolume:
    """Labels with explicit spheres: [(center zyx, radius mm, class), ...]."""
    shape = GridShape(tuple(dims), tuple(spacing))
    data = np.zeros(dims, dtype=np.int64)
    zz, yy, xx = np.meshgrid(*(np.arange(n) for n in dims), indexing="ij")
    for (cz, cy, cx), radius, cls in centers_radii_classes:
        d2 = (((zz - cz) * spacing[0]) ** 2 + ((yy - cy) * spacing[1]) ** 2
              + ((xx - cx) * spacing[2]) ** 2)
        data[d2 <= radius * radius] = cls
    return LabelVolume(shape, data, num_classes)
