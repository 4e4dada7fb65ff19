"""Dataset loading, label masking, standardization, and synthetic shift pairs.

File formats
------------
csv          one sample per row, integer label in the last column (-1 for
             unknown), features before it. Columns become samples on load.
sparse-index lines of the form ``label idx:val idx:val ...`` with 1-based
             feature indices; absent indices are zero.

All randomness goes through numpy's PCG64 generator seeded explicitly, so
masks and synthetic data reproduce bit-for-bit for a fixed seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .graph import UNKNOWN_LABEL, DomainDataset, copy_with

logger = logging.getLogger(__name__)

FORMATS = ("csv", "sparse-index")


class DatasetFormatError(ValueError):
    """Parse failure, carrying the offending line number when known."""


@dataclass(frozen=True)
class LabelMaskPolicy:
    """How many source labels stay visible, and how they are chosen.

    Stratified masking keeps at least ``min_per_class`` labels per class;
    the labeled count is then max(round(rate * n), C * min_per_class).
    """

    rate: float
    stratified: bool = True
    min_per_class: int = 1
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.rate <= 1.0):
            raise ValueError(f"rate must lie in (0, 1]; got {self.rate}")
        if self.min_per_class < 1:
            raise ValueError("min_per_class must be >= 1")


@dataclass(frozen=True)
class SyntheticShiftSpec:
    """Gaussian blob pair with a rotated-and-translated target domain.

    class_means has one column per class (m x C); the target applies a
    rotation by ``angle`` radians in the first two feature dimensions
    followed by the ``shift`` translation.
    """

    class_means: np.ndarray
    scale: float
    shift: np.ndarray
    angle: float
    per_class: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "class_means",
                           np.asarray(self.class_means, dtype=float))
        object.__setattr__(self, "shift", np.asarray(self.shift, dtype=float))
        if self.class_means.ndim != 2 or self.class_means.shape[1] < 2:
            raise ValueError("class_means must be (m, C) with C >= 2")
        if self.shift.shape != (self.class_means.shape[0],):
            raise ValueError("shift must have one entry per feature dimension")
        if self.per_class < 2:
            raise ValueError("need at least 2 samples per class per domain")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("covariance scale must be positive")
        if self.angle != 0.0 and self.class_means.shape[0] < 2:
            raise ValueError("rotation needs at least two feature dimensions")


def _parse_csv(lines, path):
    rows, labels = [], []
    width = None
    for lineno, raw in lines:
        toks = raw.split(",")
        if len(toks) < 2:
            raise DatasetFormatError(
                f"{path}:{lineno}: expected features plus a label column")
        if width is None:
            width = len(toks)
        elif len(toks) != width:
            raise DatasetFormatError(
                f"{path}:{lineno}: expected {width} columns, found {len(toks)}")
        try:
            rows.append([float(t) for t in toks[:-1]])
            labels.append(int(float(toks[-1])))
        except ValueError as exc:
            raise DatasetFormatError(f"{path}:{lineno}: {exc}") from exc
    return np.array(rows), np.array(labels, dtype=int), [ln for ln, _ in lines]


def _parse_sparse(lines, path):
    entries, labels = [], []
    width = 0
    for lineno, raw in lines:
        toks = raw.split()
        try:
            labels.append(int(float(toks[0])))
            pairs = []
            for tok in toks[1:]:
                idx_s, _, val_s = tok.partition(":")
                if not val_s:
                    raise ValueError(f"malformed index:value token {tok!r}")
                idx = int(idx_s)
                if idx < 1:
                    raise ValueError(f"feature indices are 1-based; got {idx}")
                pairs.append((idx, float(val_s)))
                width = max(width, idx)
            entries.append(pairs)
        except (ValueError, IndexError) as exc:
            raise DatasetFormatError(f"{path}:{lineno}: {exc}") from exc
    rows = np.zeros((len(entries), width))
    for i, pairs in enumerate(entries):
        for idx, val in pairs:
            rows[i, idx - 1] = val
    return rows, np.array(labels, dtype=int), [ln for ln, _ in lines]


def load_dataset(path, fmt: str = "csv", name: str | None = None) -> DomainDataset:
    """Load a dataset file; labels are remapped to dense ids in [0, C).

    The original label values are recorded in ``label_names`` (dense id ->
    original value); the unknown sentinel -1 passes through unmapped.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    with open(path, encoding="utf-8") as fh:
        lines = [(i + 1, ln.strip()) for i, ln in enumerate(fh)]
    lines = [(i, ln) for i, ln in lines if ln]
    if not lines:
        raise DatasetFormatError(f"{path}: empty dataset file")
    parser = _parse_csv if fmt == "csv" else _parse_sparse
    rows, raw_labels, linenos = parser(lines, path)

    bad = np.flatnonzero(~np.isfinite(rows).all(axis=1))
    if bad.size:
        raise DatasetFormatError(
            f"{path}:{linenos[bad[0]]}: non-finite feature value")

    known = sorted(set(raw_labels.tolist()) - {UNKNOWN_LABEL})
    remap = {orig: dense for dense, orig in enumerate(known)}
    labels = np.array([remap.get(v, UNKNOWN_LABEL) for v in raw_labels], dtype=int)
    return DomainDataset(
        features=rows.T,
        labels=labels,
        labeled_mask=labels != UNKNOWN_LABEL,
        name=name or str(path),
        label_names=tuple(known),
    )


def save_dataset(dataset: DomainDataset, path, fmt: str = "csv") -> None:
    """Write a dataset in one of the loadable formats (17-digit floats)."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    names = dataset.label_names
    with open(path, "w", encoding="utf-8") as fh:
        for col in range(dataset.n_samples):
            feats = dataset.features[:, col]
            lab = int(dataset.labels[col])
            orig = UNKNOWN_LABEL if lab == UNKNOWN_LABEL else (
                names[lab] if names is not None else lab)
            if fmt == "csv":
                fh.write(",".join(f"{v:.17g}" for v in feats) + f",{orig}\n")
            else:
                toks = [str(orig)] + [
                    f"{i + 1}:{v:.17g}" for i, v in enumerate(feats) if v != 0.0]
                fh.write(" ".join(toks) + "\n")


def _stratified_counts(class_sizes: np.ndarray, total: int, min_per_class: int) -> np.ndarray:
    """Per-class labeled counts: min_per_class each, remainder by largest quota."""
    c = class_sizes.size
    counts = np.full(c, min_per_class)
    spare = total - c * min_per_class
    if spare > 0:
        quota = spare * class_sizes / class_sizes.sum()
        counts = counts + np.floor(quota).astype(int)
        frac = quota - np.floor(quota)
        leftover = total - counts.sum()
        for idx in np.argsort(-frac, kind="stable"):
            if leftover <= 0:
                break
            counts[idx] += 1
            leftover -= 1
    # Cap at class size; push any overflow to classes with spare capacity.
    overflow = np.maximum(counts - class_sizes, 0).sum()
    counts = np.minimum(counts, class_sizes)
    while overflow > 0:
        room = np.flatnonzero(counts < class_sizes)
        if room.size == 0:
            break
        counts[room[0]] += 1
        overflow -= 1
    return counts


def mask_labels(dataset: DomainDataset, policy: LabelMaskPolicy) -> DomainDataset:
    """Hide all but a seeded sample of labels; reorder labeled columns first.

    The input must be fully labeled. True labels are kept in the
    ``true_labels`` shadow field for evaluation only; training reads only
    the masked ``labels``.
    """
    if not dataset.fully_labeled() or np.any(dataset.labels < 0):
        raise ValueError("mask_labels expects a fully labeled dataset")
    n = dataset.n_samples
    c = dataset.n_classes
    rng = np.random.Generator(np.random.PCG64(policy.seed))
    if policy.stratified:
        l = max(int(np.floor(policy.rate * n + 0.5)), c * policy.min_per_class)
        if l > n:
            raise ValueError(
                f"cannot keep {l} labels (C*min_per_class={c * policy.min_per_class}) "
                f"from only {n} samples")
        class_sizes = np.bincount(dataset.labels, minlength=c)
        if np.any(class_sizes[class_sizes > 0] < policy.min_per_class) or np.any(class_sizes == 0):
            raise ValueError("a class has fewer samples than min_per_class")
        counts = _stratified_counts(class_sizes, l, policy.min_per_class)
        picked = []
        for cls in range(c):
            members = np.flatnonzero(dataset.labels == cls)
            picked.append(rng.permutation(members)[:counts[cls]])
        labeled_idx = np.sort(np.concatenate(picked))
    else:
        l = max(int(np.floor(policy.rate * n + 0.5)), 1)
        labeled_idx = np.sort(rng.permutation(n)[:l])

    unlabeled_idx = np.setdiff1d(np.arange(n), labeled_idx)
    order = np.concatenate([labeled_idx, unlabeled_idx])
    labels = np.full(n, UNKNOWN_LABEL, dtype=int)
    labels[:labeled_idx.size] = dataset.labels[labeled_idx]
    mask = np.zeros(n, dtype=bool)
    mask[:labeled_idx.size] = True
    return DomainDataset(
        features=dataset.features[:, order].copy(),
        labels=labels,
        labeled_mask=mask,
        name=dataset.name,
        label_names=dataset.label_names,
        true_labels=dataset.labels[order].copy(),
    )


def standardize(fit_on: DomainDataset,
                apply_to: list[DomainDataset]) -> list[DomainDataset]:
    """Z-score features with statistics fit on the union of all datasets.

    The union is ``fit_on`` plus every dataset in ``apply_to`` (each counted
    once). Zero-variance features are centered and passed through unscaled.
    """
    pool = [fit_on]
    pool.extend(ds for ds in apply_to if ds is not fit_on)
    stacked = np.hstack([ds.features for ds in pool])
    mean = stacked.mean(axis=1)
    std = stacked.std(axis=1)
    flat = std < 1e-12
    if flat.any():
        logger.info("standardize: %d zero-variance feature(s) pass through centered",
                    int(flat.sum()))
    std = np.where(flat, 1.0, std)
    return [
        copy_with(ds, features=(ds.features - mean[:, None]) / std[:, None])
        for ds in apply_to
    ]


def generate_shift_pair(spec: SyntheticShiftSpec) -> tuple[DomainDataset, DomainDataset]:
    """Sample a source/target blob pair under the covariate shift spec.

    Source samples come straight from the class blobs; target samples are
    fresh draws from the same blobs, rotated in dimensions (1, 2) and then
    translated. Class priors are identical and everything is a pure
    function of the spec's seed.
    """
    m, c = spec.class_means.shape
    k = spec.per_class
    rng = np.random.Generator(np.random.PCG64(spec.seed))

    def blobs():
        cols = [spec.class_means[:, [cls]] + spec.scale * rng.standard_normal((m, k))
                for cls in range(c)]
        return np.hstack(cols)

    source_x = blobs()
    target_x = blobs()
    if spec.angle != 0.0:
        cos_a, sin_a = np.cos(spec.angle), np.sin(spec.angle)
        rot = target_x[:2].copy()
        target_x[0] = cos_a * rot[0] - sin_a * rot[1]
        target_x[1] = sin_a * rot[0] + cos_a * rot[1]
    target_x += spec.shift[:, None]
    labels = np.repeat(np.arange(c), k)
    mask = np.ones(c * k, dtype=bool)
    names = tuple(range(c))
    source = DomainDataset(source_x, labels.copy(), mask.copy(),
                           name="synthetic-source", label_names=names)
    target = DomainDataset(target_x, labels.copy(), mask.copy(),
                           name="synthetic-target", label_names=names)
    return source, target


def align_label_spaces(a: DomainDataset, b: DomainDataset) -> tuple[DomainDataset, DomainDataset]:
    """Remap two datasets onto the union of their original label values.

    Needed when the two domain files do not contain exactly the same set of
    classes; dense ids must agree for cross-domain evaluation.
    """
    names_a = a.label_names if a.label_names is not None else tuple(range(a.n_classes))
    names_b = b.label_names if b.label_names is not None else tuple(range(b.n_classes))
    union = tuple(sorted(set(names_a) | set(names_b)))
    if names_a == union and names_b == union:
        return a, b

    def remap(ds, names):
        table = {orig: union.index(orig) for orig in names}
        labels = np.array([UNKNOWN_LABEL if v < 0 else table[names[v]]
                           for v in ds.labels], dtype=int)
        true = None
        if ds.true_labels is not None:
            true = np.array([UNKNOWN_LABEL if v < 0 else table[names[v]]
                             for v in ds.true_labels], dtype=int)
        return copy_with(ds, labels=labels, label_names=union, true_labels=true)

    return remap(a, names_a), remap(b, names_b)
