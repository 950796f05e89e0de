"""Coffee-leaf biotic stress classification and severity estimation.

A from-scratch numpy multi-task CNN (shared residual trunk, stress and
severity heads), HSV-based leaf preprocessing and severity labelling,
mixup/standard augmentation, confusion-matrix metrics and exact t-SNE.
"""

from .augment import AugmentConfig, LabeledSample, mixup_batch, standard_augment
from .checkpoint import Checkpoint
from .imaging import ImagingConfig, severity_class, severity_ratio_and_bin
from .labels import SeverityClass, StressClass
from .metrics import ConfusionMatrix, accuracy, macro_precision_recall
from .model import ArchConfig, MultiTaskNet, build_model, forward
from .tensor import RngStream, elementwise, matmul, reduce, rng_draw
from .train import LrSchedule, SgdConfig, TrainReport, lr_at_epoch, sgd_step, train
from .tsne import TsneConfig, run_tsne

__version__ = "0.1.0"
