"""ktedge: online co-training with class-mapped pseudo-labels.

A pre-trained teacher model labels its own sample stream; a fixed bijective
class mapping turns each prediction into a training label for the paired
student stream. This package provides the numeric kernel, the models, the
co-training loop with diagnostics, dataset/split tooling, metrics, a two-device
wire protocol, and a config-driven experiment CLI.
"""

from .adam import Adam, AdamState, adam_step
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (Dataset, PairedStream, SampleStream, SplitPlan, build_splits,
                   load_idx, load_image_directory, merge_and_select,
                   resize_and_expand, synth_task_pair)
from .mapping import ClassMapping, build_class_mapping, index_mapping, transform
from .metrics import ConfusionMatrix, MetricsReport, TrainingTrace, export, report, score
from .models import (Model, TrainSettings, build_mlp, build_simplified_squeezenet,
                     fit, forward, train_step)
from .protocol import (OracleTeacher, RunResult, StepRecord, StopCondition, kt_run,
                       step_case, stop_check, teacher_predict)
from .rng import RngState, derive_seed

__version__ = "0.1.0"

__all__ = [
    "Adam", "AdamState", "adam_step",
    "load_checkpoint", "save_checkpoint",
    "Dataset", "PairedStream", "SampleStream", "SplitPlan", "build_splits",
    "load_idx", "load_image_directory", "merge_and_select", "resize_and_expand",
    "synth_task_pair",
    "ClassMapping", "build_class_mapping", "index_mapping", "transform",
    "ConfusionMatrix", "MetricsReport", "TrainingTrace", "export", "report", "score",
    "Model", "TrainSettings", "build_mlp", "build_simplified_squeezenet",
    "fit", "forward", "train_step",
    "OracleTeacher", "RunResult", "StepRecord", "StopCondition", "kt_run",
    "step_case", "stop_check", "teacher_predict",
    "RngState", "derive_seed",
    "__version__",
]
