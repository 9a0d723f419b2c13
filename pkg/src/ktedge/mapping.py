"""Bijective teacher-class to student-class correspondence.

The mapping is the causal bridge between the two tasks: predicting teacher
class c licenses labeling the paired student sample with pairs[c]. It must be
a bijection, so a violation always means misconfiguration and is a hard error,
never a skipped sample.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field


class MappingError(ValueError):
    pass


class MappingSizeError(MappingError):
    """Teacher and student class lists differ in size."""


class NonBijectiveMappingError(MappingError):
    """A teacher class is unmapped or two teacher classes share a target."""


class UnmappedLabelError(MappingError):
    """A label outside the mapping's domain was presented."""


@dataclass(frozen=True)
class ClassMapping:
    teacher_classes: tuple[str, ...]
    student_classes: tuple[str, ...]
    pairs: dict[str, str]
    # teacher index -> student index, precomputed for the training loop
    index_map: tuple[int, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.teacher_classes)

    def canonical_json(self) -> str:
        return json.dumps(
            {"teacher_classes": list(self.teacher_classes),
             "student_classes": list(self.student_classes),
             "pairs": [[t, self.pairs[t]] for t in self.teacher_classes]},
            sort_keys=True, separators=(",", ":"))

    def digest(self) -> int:
        """64-bit hash of the canonical serialization, stable across runs."""
        h = hashlib.sha256(self.canonical_json().encode("utf-8")).digest()
        return int.from_bytes(h[:8], "big")


def build_class_mapping(teacher_classes, student_classes, pairs) -> ClassMapping:
    teacher = tuple(str(c) for c in teacher_classes)
    student = tuple(str(c) for c in student_classes)
    if len(teacher) != len(student):
        raise MappingSizeError(
            f"{len(teacher)} teacher classes vs {len(student)} student classes")
    if len(set(teacher)) != len(teacher) or len(set(student)) != len(student):
        raise MappingError("duplicate class names")
    pairs = {str(t): str(s) for t, s in pairs.items()}
    missing = [t for t in teacher if t not in pairs]
    if missing:
        raise NonBijectiveMappingError(f"teacher classes with no mapping: {missing}")
    unknown = [t for t in pairs if t not in teacher]
    if unknown:
        raise NonBijectiveMappingError(f"pairs name unknown teacher classes: {unknown}")
    targets = list(pairs.values())
    if len(set(targets)) != len(targets):
        dupes = sorted({s for s in targets if targets.count(s) > 1})
        raise NonBijectiveMappingError(f"student classes with multiple preimages: {dupes}")
    bad_targets = [s for s in targets if s not in student]
    if bad_targets:
        raise NonBijectiveMappingError(f"pairs name unknown student classes: {bad_targets}")

    index_map = tuple(student.index(pairs[t]) for t in teacher)
    return ClassMapping(teacher_classes=teacher, student_classes=student,
                        pairs=pairs, index_map=index_map)


def index_mapping(num_classes: int, teacher_classes=None, student_classes=None) -> ClassMapping:
    """Index-order pairing: teacher class i corresponds to student class i."""
    teacher = list(teacher_classes) if teacher_classes is not None else [str(i) for i in range(num_classes)]
    student = list(student_classes) if student_classes is not None else [str(i) for i in range(num_classes)]
    teacher, student = teacher[:num_classes], student[:num_classes]
    return build_class_mapping(teacher, student, dict(zip(teacher, student)))


def transform(mapping: ClassMapping, teacher_label):
    """Maps a teacher label (index or name) to the paired student label."""
    if isinstance(teacher_label, str):
        try:
            return mapping.pairs[teacher_label]
        except KeyError:
            raise UnmappedLabelError(f"teacher label {teacher_label!r} not in mapping") from None
    idx = int(teacher_label)
    if not 0 <= idx < len(mapping.index_map):
        raise UnmappedLabelError(f"teacher class index {idx} not in mapping")
    return mapping.index_map[idx]


def inverse_transform(mapping: ClassMapping, student_label):
    """Inverse of transform; total on the student classes by bijectivity."""
    if isinstance(student_label, str):
        for t, s in mapping.pairs.items():
            if s == student_label:
                return t
        raise UnmappedLabelError(f"student label {student_label!r} not in mapping")
    idx = int(student_label)
    for t_idx, s_idx in enumerate(mapping.index_map):
        if s_idx == idx:
            return t_idx
    raise UnmappedLabelError(f"student class index {idx} not in mapping")
