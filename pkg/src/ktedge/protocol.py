"""The online co-training loop: pseudo-labels via the class mapping.

Per stream position the teacher predicts on its own sample, the prediction is
mapped to a student-task label, and the student takes exactly one gradient
step on its paired sample. The teacher is never updated. When simulation
ground truth is available each step is also scored into one of four cases by
(student prediction correct?, received label correct?):

    case 1  (T, F)  bad   - correct student overruled by a wrong label
    case 2  (T, T)  fine
    case 3  (F, T)  fine  - wrong student corrected
    case 4  (F, F)  bad   - wrong student confirmed

The same loop can instead be supervised by the hidden ground truth
(``label_source="ground_truth"``), which realizes the expected-performance arm
that pseudo-label runs are compared against.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .adam import Adam
from .mapping import ClassMapping, transform
from .metrics import TrainingTrace, trace_update
from .models import Model, forward, train_step
from .rng import RngState


def teacher_predict(teacher: Model, x: np.ndarray) -> int:
    """argmax(softmax(logits)) in infer mode; ties go to the lowest index."""
    logits = forward(teacher, x, "infer")
    return int(np.argmax(logits))  # argmax of softmax == argmax of logits


@dataclass
class OracleTeacher:
    """Simulation stand-in for a pre-trained teacher.

    Emits the paired sample's true class with probability `correctness`,
    otherwise a uniformly chosen wrong class. Requires a stream with hidden
    truth; it exists so protocol behavior can be tested at chosen teacher
    quality without training anything.
    """

    num_classes: int
    correctness: float
    rng: RngState

    def emit(self, true_label: int) -> int:
        if self.correctness < 1.0 and self.rng.uniform() >= self.correctness:
            wrong = self.rng.randint(self.num_classes - 1)
            return wrong if wrong < true_label else wrong + 1
        return true_label


def step_case(student_correct: bool, pseudo_label_correct: bool) -> int:
    if student_correct:
        return 2 if pseudo_label_correct else 1
    return 3 if pseudo_label_correct else 4


@dataclass(frozen=True)
class StopCondition:
    threshold: float
    window: int = 1000
    cadence: int = 100

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")
        if self.window < 1 or self.cadence < 1:
            raise ValueError("window and cadence must be >= 1")


def stop_check(window_values, stop: StopCondition) -> bool:
    """True iff the window is fully populated and its accuracy >= threshold."""
    if len(window_values) < stop.window:
        return False
    return sum(window_values) / len(window_values) >= stop.threshold


@dataclass
class StepRecord:
    step: int
    teacher_pred: int
    pseudo_label: int
    student_pred: int
    loss: float
    truth: int | None = None          # simulation only
    case: int | None = None           # defined iff truth is present


@dataclass
class RunResult:
    student: Model
    trace: TrainingTrace
    records: list[StepRecord]
    case_counts: tuple[int, int, int, int]
    stop_reason: str                  # stream_exhausted | threshold_met | aborted
    steps: int
    abort_reason: str | None = None

    @property
    def teacher_correctness_rate(self) -> float:
        scored = sum(self.case_counts)
        return (self.case_counts[1] + self.case_counts[2]) / scored if scored else 0.0


class RunAborted(Exception):
    """Raised by a label provider to end the run with a partial result."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def drive_run(student: Model, stream, mapping: ClassMapping, adam: Adam,
              teacher_label_fn: Callable[[int, np.ndarray], int],
              trace_interval: int = 100, stop: StopCondition | None = None,
              label_source: str = "pseudo") -> RunResult:
    """Shared single-pass loop behind kt_run and the networked student client."""
    if label_source not in ("pseudo", "ground_truth"):
        raise ValueError(f"unknown label_source {label_source!r}")
    if len(stream.teacher) != len(stream.student):
        raise ValueError("paired stream desynchronized")  # PairedStream also enforces this
    hidden = stream.hidden
    if label_source == "ground_truth" and hidden is None:
        raise ValueError("ground_truth supervision needs a stream with hidden truth")

    records: list[StepRecord] = []
    cases = [0, 0, 0, 0]
    window: deque = deque(maxlen=stop.window) if stop else deque(maxlen=1)
    stop_reason = "stream_exhausted"
    abort_reason = None

    for i in range(len(stream.teacher)):
        try:
            t_pred = int(teacher_label_fn(i, stream.teacher[i]))
        except RunAborted as abort:
            stop_reason = "aborted"
            abort_reason = abort.reason
            break
        pseudo = int(transform(mapping, t_pred))

        if label_source == "ground_truth":
            label = int(hidden.student_labels[i])
        else:
            label = pseudo
        loss, logits = train_step(student, stream.student[i], label, adam)
        s_pred = int(np.argmax(logits))

        truth = int(hidden.student_labels[i]) if hidden is not None else None
        case = None
        if truth is not None:
            case = step_case(s_pred == truth, pseudo == truth)
            cases[case - 1] += 1
            correct = s_pred == truth
        else:
            correct = s_pred == pseudo  # deployment proxy: agreement with the label
        records.append(StepRecord(step=i, teacher_pred=t_pred, pseudo_label=pseudo,
                                  student_pred=s_pred, loss=loss, truth=truth, case=case))

        if stop is not None:
            window.append(1 if correct else 0)
            if (i + 1) % stop.cadence == 0 and stop_check(window, stop):
                stop_reason = "threshold_met"
                break

    trace = trace_update(TrainingTrace(interval=trace_interval), records)
    return RunResult(student=student, trace=trace, records=records,
                     case_counts=tuple(cases), stop_reason=stop_reason,
                     steps=len(records), abort_reason=abort_reason)


def kt_run(teacher, student: Model, stream, mapping: ClassMapping, adam: Adam,
           trace_interval: int = 100, stop: StopCondition | None = None,
           label_source: str = "pseudo") -> RunResult:
    """One pass over the paired stream with an in-process teacher.

    `teacher` is an infer-only Model or an OracleTeacher; it is never trained.
    The student must already know its class space (semi-trained, one example
    per class or more).
    """
    if isinstance(teacher, OracleTeacher):
        if stream.hidden is None:
            raise ValueError("an OracleTeacher needs a stream with hidden truth")
        if teacher.num_classes != len(mapping):
            raise ValueError("oracle class count does not match the mapping")
        truth_t = stream.hidden.teacher_labels

        def label_fn(i, _x):
            return teacher.emit(int(truth_t[i]))
    else:
        if teacher.num_classes != len(mapping):
            raise ValueError("teacher class count does not match the mapping")

        def label_fn(_i, x):
            return teacher_predict(teacher, x)

    if student.num_classes != len(mapping):
        raise ValueError("student class count does not match the mapping")
    return drive_run(student, stream, mapping, adam, label_fn,
                     trace_interval=trace_interval, stop=stop, label_source=label_source)
