"""Dataset ingestion, split construction, and the paired-order stream.

Split construction follows three rules: both tasks use the same number of
classes, both online-learning sequences carry causally corresponding classes
at every position, and the sequences expose samples without labels. Ground
truth rides along on a separate, simulation-only channel.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mapping import ClassMapping, transform
from .protocol import OracleTeacher
from .rng import RngState, derive_seed


class DataError(ValueError):
    pass


class IdxMagicError(DataError):
    pass


class IdxCountMismatchError(DataError):
    pass


class IdxTruncatedError(DataError):
    pass


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, H, W, C) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64
    class_names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def per_class_counts(self) -> list[int]:
        return [int(np.sum(self.labels == c)) for c in range(self.num_classes)]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(images=self.images[idx], labels=self.labels[idx],
                       class_names=self.class_names)


def _open_maybe_gz(path):
    p = Path(path)
    return gzip.open(p, "rb") if p.suffix == ".gz" else open(p, "rb")


def load_idx(images_path, labels_path, class_names=None) -> Dataset:
    """Parses the big-endian IDX pair (magic 2051 images / 2049 labels)."""
    with _open_maybe_gz(images_path) as f:
        header = f.read(16)
        if len(header) < 16:
            raise IdxTruncatedError(f"{images_path}: header shorter than 16 bytes")
        magic, n, rows, cols = struct.unpack(">IIII", header)
        if magic != 2051:
            raise IdxMagicError(f"{images_path}: magic {magic}, expected 2051")
        raw = f.read(n * rows * cols)
        if len(raw) < n * rows * cols:
            raise IdxTruncatedError(
                f"{images_path}: {len(raw)} pixel bytes, expected {n * rows * cols}")
    images = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows, cols, 1)
    images = images.astype(np.float32) / 255.0

    with _open_maybe_gz(labels_path) as f:
        header = f.read(8)
        if len(header) < 8:
            raise IdxTruncatedError(f"{labels_path}: header shorter than 8 bytes")
        magic, n_labels = struct.unpack(">II", header)
        if magic != 2049:
            raise IdxMagicError(f"{labels_path}: magic {magic}, expected 2049")
        raw = f.read(n_labels)
        if len(raw) < n_labels:
            raise IdxTruncatedError(f"{labels_path}: {len(raw)} label bytes, expected {n_labels}")
    if n_labels != n:
        raise IdxCountMismatchError(f"{n} images but {n_labels} labels")
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    if class_names is None:
        class_names = tuple(str(i) for i in range(int(labels.max()) + 1 if n else 0))
    return Dataset(images=images, labels=labels, class_names=tuple(class_names))


def load_image_directory(root) -> Dataset:
    """One subdirectory per class (lexicographic order), grayscale images."""
    from PIL import Image

    root = Path(root)
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise DataError(f"{root}: no class subdirectories")
    images, labels = [], []
    for idx, d in enumerate(class_dirs):
        files = sorted(p for p in d.iterdir() if p.is_file())
        if not files:
            raise DataError(f"{d}: class directory is empty")
        for p in files:
            try:
                with Image.open(p) as im:
                    arr = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
            except Exception as e:
                raise DataError(f"{p}: unreadable image ({e})") from None
            images.append(arr[:, :, None])
            labels.append(idx)
    return Dataset(images=np.stack(images), labels=np.array(labels, dtype=np.int64),
                   class_names=tuple(d.name for d in class_dirs))


def merge_and_select(parts, k: int) -> Dataset:
    """Merges dataset pools and keeps only examples of classes 0..k-1."""
    if isinstance(parts, Dataset):
        parts = [parts]
    if not parts:
        raise DataError("no datasets to merge")
    names = parts[0].class_names
    if any(p.class_names != names for p in parts):
        raise DataError("datasets to merge disagree on class names")
    if not 2 <= k <= len(names):
        raise ValueError(f"k must be in [2, {len(names)}], got {k}")
    images = np.concatenate([p.images for p in parts])
    labels = np.concatenate([p.labels for p in parts])
    keep = labels < k
    return Dataset(images=images[keep], labels=labels[keep], class_names=names[:k])


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resample with half-pixel-aligned sample centers."""
    h, w, c = image.shape

    def axis_coords(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        i0 = np.floor(src).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, (src - i0).astype(np.float32)

    r0, r1, rf = axis_coords(h, out_h)
    rows = image[r0] * (1.0 - rf)[:, None, None] + image[r1] * rf[:, None, None]
    c0, c1, cf = axis_coords(w, out_w)
    out = rows[:, c0] * (1.0 - cf)[None, :, None] + rows[:, c1] * cf[None, :, None]
    return out.astype(image.dtype, copy=False)


def resize_and_expand(image: np.ndarray, size=(40, 40), channels: int = 3) -> np.ndarray:
    """Grayscale H x W x 1 -> bilinear resize -> replicate to `channels`."""
    if image.ndim != 3 or image.shape[2] != 1:
        raise ValueError(f"expected a single-channel image, got shape {image.shape}")
    resized = resize_bilinear(image, size[0], size[1])
    return np.repeat(resized, channels, axis=2)


def transform_dataset(ds: Dataset, size=(40, 40), channels: int = 3) -> Dataset:
    images = np.stack([resize_and_expand(im, size, channels) for im in ds.images])
    return Dataset(images=images, labels=ds.labels, class_names=ds.class_names)


@dataclass(frozen=True)
class SampleStream:
    """Ordered samples with no label accessor; this is all the training loop sees."""

    images: np.ndarray

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.images[i]


@dataclass(frozen=True)
class HiddenTruth:
    """Simulation-only ground truth for both sides of the paired stream."""

    teacher_labels: np.ndarray
    student_labels: np.ndarray


class PairedStreamError(ValueError):
    pass


@dataclass(frozen=True)
class PairedStream:
    teacher: SampleStream
    student: SampleStream
    mapping: ClassMapping
    hidden: HiddenTruth | None = None

    def __post_init__(self):
        if len(self.teacher) != len(self.student):
            raise PairedStreamError(
                f"teacher stream has {len(self.teacher)} samples, student {len(self.student)}")
        if self.hidden is not None:
            ht, hs = self.hidden.teacher_labels, self.hidden.student_labels
            if len(ht) != len(self.teacher) or len(hs) != len(self.student):
                raise PairedStreamError("hidden truth length does not match the streams")
            idx_map = np.array(self.mapping.index_map, dtype=np.int64)
            if not np.array_equal(idx_map[ht], hs):
                bad = int(np.flatnonzero(idx_map[ht] != hs)[0])
                raise PairedStreamError(
                    f"identical-order rule violated at position {bad}: "
                    f"teacher class {int(ht[bad])} maps to {int(idx_map[ht[bad]])}, "
                    f"stream says {int(hs[bad])}")

    def __len__(self) -> int:
        return len(self.teacher)


@dataclass(frozen=True)
class SplitPlan:
    teacher_pretrain_per_class: int | list[int]
    semitrain_per_class: int | list[int] = 1
    ol_per_class: int | list[int] | None = None  # None: all remaining teacher examples
    seed: int = 0


@dataclass(frozen=True)
class SplitResult:
    teacher_pretrain: Dataset
    student_semitrain: Dataset
    stream: PairedStream
    teacher_ol_per_class: list[int]
    # index bookkeeping, used to verify disjointness
    teacher_pretrain_idx: np.ndarray
    teacher_ol_idx: np.ndarray
    student_semitrain_idx: np.ndarray
    student_ol_idx: np.ndarray

    def __iter__(self):
        return iter((self.teacher_pretrain, self.student_semitrain, self.stream))


def _per_class(value, k: int, what: str) -> list[int]:
    if isinstance(value, int):
        return [value] * k
    value = list(value)
    if len(value) != k:
        raise ValueError(f"{what} has {len(value)} entries for {k} classes")
    return [int(v) for v in value]


def build_splits(teacher_ds: Dataset, student_ds: Dataset, mapping: ClassMapping,
                 plan: SplitPlan) -> SplitResult:
    """Draws pretrain/semi-train subsets and assembles the paired stream.

    Sampling is without replacement and disjoint inside each dataset. The
    stream's class order is drawn once, then one teacher sample and one
    student sample of the corresponding classes are placed at each position.
    """
    k = len(mapping)
    if teacher_ds.num_classes < k or student_ds.num_classes < k:
        raise DataError(f"mapping names {k} classes but datasets provide "
                        f"{teacher_ds.num_classes} / {student_ds.num_classes}")
    pretrain_counts = _per_class(plan.teacher_pretrain_per_class, k, "teacher_pretrain_per_class")
    semi_counts = _per_class(plan.semitrain_per_class, k, "semitrain_per_class")
    if any(c < 1 for c in semi_counts):
        raise ValueError("semi-training needs at least one example per class")

    teacher_pools = []
    for c in range(k):
        pool = list(np.flatnonzero(teacher_ds.labels == c))
        RngState(derive_seed(plan.seed, f"teacher-pool-{c}")).shuffle(pool)
        if len(pool) < pretrain_counts[c]:
            raise DataError(
                f"teacher class {c} ({teacher_ds.class_names[c]}): "
                f"need {pretrain_counts[c]} pretrain examples, have {len(pool)} "
                f"(short {pretrain_counts[c] - len(pool)})")
        teacher_pools.append(pool)
    pretrain_idx = np.array(sorted(
        i for c in range(k) for i in teacher_pools[c][:pretrain_counts[c]]), dtype=np.int64)
    teacher_remaining = [pool[pretrain_counts[c]:] for c, pool in enumerate(teacher_pools)]

    if plan.ol_per_class is None:
        ol_counts = [len(r) for r in teacher_remaining]
    else:
        ol_counts = _per_class(plan.ol_per_class, k, "ol_per_class")
        for c in range(k):
            if ol_counts[c] > len(teacher_remaining[c]):
                raise DataError(
                    f"teacher class {c} ({teacher_ds.class_names[c]}): "
                    f"need {ol_counts[c]} stream examples, have {len(teacher_remaining[c])} "
                    f"(short {ol_counts[c] - len(teacher_remaining[c])})")

    student_pools = []
    for s in range(k):
        pool = list(np.flatnonzero(student_ds.labels == s))
        RngState(derive_seed(plan.seed, f"student-pool-{s}")).shuffle(pool)
        student_pools.append(pool)
    semi_idx = []
    for s in range(k):
        if len(student_pools[s]) < semi_counts[s]:
            raise DataError(
                f"student class {s} ({student_ds.class_names[s]}): "
                f"need {semi_counts[s]} semi-training examples, have {len(student_pools[s])}")
        semi_idx.extend(student_pools[s][:semi_counts[s]])
    semi_idx = np.array(sorted(semi_idx), dtype=np.int64)
    student_remaining = [pool[semi_counts[s]:] for s, pool in enumerate(student_pools)]

    for c in range(k):
        s = transform(mapping, c)
        if ol_counts[c] > len(student_remaining[s]):
            raise DataError(
                f"student class {s} ({student_ds.class_names[s]}): "
                f"need {ol_counts[c]} stream examples, have {len(student_remaining[s])} "
                f"(short {ol_counts[c] - len(student_remaining[s])})")

    order = [c for c in range(k) for _ in range(ol_counts[c])]
    RngState(derive_seed(plan.seed, "ol-order")).shuffle(order)

    t_cursor = [0] * k
    s_cursor = [0] * k
    t_idx, s_idx = [], []
    for c in order:
        s = transform(mapping, c)
        t_idx.append(teacher_remaining[c][t_cursor[c]])
        t_cursor[c] += 1
        s_idx.append(student_remaining[s][s_cursor[s]])
        s_cursor[s] += 1
    t_idx = np.array(t_idx, dtype=np.int64)
    s_idx = np.array(s_idx, dtype=np.int64)

    stream = PairedStream(
        teacher=SampleStream(teacher_ds.images[t_idx]),
        student=SampleStream(student_ds.images[s_idx]),
        mapping=mapping,
        hidden=HiddenTruth(teacher_labels=teacher_ds.labels[t_idx].copy(),
                           student_labels=student_ds.labels[s_idx].copy()),
    )
    return SplitResult(
        teacher_pretrain=teacher_ds.subset(pretrain_idx),
        student_semitrain=student_ds.subset(semi_idx),
        stream=stream,
        teacher_ol_per_class=ol_counts,
        teacher_pretrain_idx=pretrain_idx,
        teacher_ol_idx=t_idx,
        student_semitrain_idx=semi_idx,
        student_ol_idx=s_idx,
    )


def synth_task_pair(n_classes: int, samples_per_class: int, image_size: int = 8,
                    noise: float = 0.2, teacher_correctness: float = 1.0,
                    seed: int = 0):
    """Two independent blob-classification tasks plus an oracle teacher.

    Each class is a Gaussian bump at a class-specific location; samples add
    i.i.d. pixel noise. The oracle emits the true class of the paired teacher
    sample with probability `teacher_correctness`, else a uniformly wrong one.
    """
    if not 0.0 <= teacher_correctness <= 1.0:
        raise ValueError("teacher_correctness must be in [0, 1]")

    def make_task(tag: str, prefix: str) -> Dataset:
        rng = RngState(derive_seed(seed, tag))
        s = image_size
        grid_r, grid_c = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
        sigma = max(s / 5.0, 1.0)
        templates = []
        for _ in range(n_classes):
            cr = 1.0 + rng.uniform() * (s - 3.0)
            cc = 1.0 + rng.uniform() * (s - 3.0)
            bump = np.exp(-((grid_r - cr) ** 2 + (grid_c - cc) ** 2) / (2.0 * sigma ** 2))
            templates.append(bump.astype(np.float32))
        images = np.empty((n_classes * samples_per_class, s, s, 1), dtype=np.float32)
        labels = np.empty(n_classes * samples_per_class, dtype=np.int64)
        i = 0
        for c in range(n_classes):
            for _ in range(samples_per_class):
                px = templates[c] + noise * rng.normal(s * s).reshape(s, s).astype(np.float32)
                images[i, :, :, 0] = px
                labels[i] = c
                i += 1
        names = tuple(f"{prefix}{c}" for c in range(n_classes))
        return Dataset(images=images, labels=labels, class_names=names)

    teacher_ds = make_task("synth-teacher", "P")
    student_ds = make_task("synth-student", "Q")
    oracle = OracleTeacher(num_classes=n_classes, correctness=teacher_correctness,
                           rng=RngState(derive_seed(seed, "synth-oracle")))
    return teacher_ds, student_ds, oracle
