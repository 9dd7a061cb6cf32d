import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import SplitError
from ..rng import Rng
from .dataset import MODALITIES

STD_FLOOR = 1e-8


def _floor_counts(ratios, n):
    # the epsilon keeps 0.7 * 50 from flooring to 34
    return [int(math.floor(r * n + 1e-9)) for r in ratios]


def split_counts(class_sizes, ratios):
    """Per-class split sizes.

    Each class gets floor(ratio * n_class). The leftover subjects are handed out
    class by class, each to the first split (train, val, test order) still short
    of its dataset-wide floor-plus-remainder target.
    """
    n = sum(class_sizes)
    target = _floor_counts(ratios, n)
    for k in range(n - sum(target)):
        target[k % len(ratios)] += 1
    counts = [_floor_counts(ratios, c) for c in class_sizes]
    deficit = [t - sum(c[j] for c in counts) for j, t in enumerate(target)]
    for c, size in zip(counts, class_sizes):
        for _ in range(size - sum(c)):
            j = next((j for j, d in enumerate(deficit) if d > 0), 0)
            c[j] += 1
            deficit[j] -= 1
    return counts


def split_dataset(ds, ratios=(0.70, 0.15, 0.15), seed=0):
    """Stratified, seeded train/val/test partition."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    rng = Rng(seed)
    labels = ds.labels
    ids = np.array(ds.ids, dtype=object)
    groups = [ids[labels == c] for c in (0, 1)]
    counts = split_counts([len(g) for g in groups], ratios)
    parts = [[], [], []]
    for cls, (g, cnt) in enumerate(zip(groups, counts)):
        shuffled = g[rng.permutation(len(g))]
        start = 0
        for j, k in enumerate(cnt):
            if k == 0:
                raise SplitError(f"{('train', 'val', 'test')[j]} split would have no class-{cls} subjects")
            parts[j].extend(shuffled[start:start + k].tolist())
            start += k
    # restore dataset order inside each split
    pos = {sid: i for i, sid in enumerate(ds.ids)}
    return tuple(ds.subset(sorted(p, key=pos.__getitem__)) for p in parts)


@dataclass
class NormalizationStats:
    """Per-feature (sequences) and per-channel (images) z-score parameters."""

    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    marker: str = ""

    def modalities(self):
        return tuple(m for m in MODALITIES if m in self.mean)

    def apply(self, modality, X):
        if modality not in self.mean:
            return np.asarray(X, dtype=np.float64)
        return (np.asarray(X, dtype=np.float64) - self.mean[modality]) / self.std[modality]

    def only(self, modality):
        return NormalizationStats({modality: self.mean[modality]}, {modality: self.std[modality]}, self.marker)


def fit_normalization(train):
    stats = NormalizationStats()
    for m in MODALITIES:
        _, X, _ = train.arrays(m)
        if len(X) == 0:
            continue
        flat = X.reshape(-1, X.shape[-1])
        stats.mean[m] = flat.mean(axis=0)
        stats.std[m] = np.maximum(flat.std(axis=0), STD_FLOOR)
    digest = hashlib.sha256("\n".join(train.ids).encode()).hexdigest()[:16]
    stats.marker = f"fit:{digest}"
    return stats


def apply_normalization(ds, stats):
    recs = []
    for r in ds.records:
        upd = {m: stats.apply(m, r.get(m)) for m in MODALITIES if r.get(m) is not None and m in stats.mean}
        recs.append(replace(r, **upd))
    return replace(ds, records=recs, normalized_with=stats.marker)


def fit_apply_normalization(train, *others):
    """Fit on ``train`` only; returns (stats, normalized train, *normalized others)."""
    stats = fit_normalization(train)
    return (stats, apply_normalization(train, stats)) + tuple(apply_normalization(o, stats) for o in others)
