"""Noise-ignoring-block training library.

Small-loss sample selection (co-teaching / JoCoR) augmented with a
transition-matrix-driven inter-class correlation loss that separates hard
samples from mislabeled ones.
"""

from .classifier import (ArchSpec, Classifier, OptimizerState, apply_update,
                         grad_overall, init_classifier, load_checkpoint,
                         load_parameters, make_optimizer, predict_proba,
                         save_checkpoint)
from .config import RunConfig, load_config, resolve
from .datasets import (BatchPlan, LabeledDataset, export_csv, generate_blobs,
                       load_cifar10, make_batch_plan, standardize,
                       subset_per_class)
from .losses import LossBreakdown, cross_entropy, ic_loss, overall_loss
from .metrics import (EpochRecord, accuracy, hard_vs_noisy_report,
                      label_precision, last_k_mean)
from .noise import CorruptionRecord, NoiseMatrix, build_noise_matrix, corrupt_labels
from .paradigms import (RunRecord, TrainerState, build_datasets, run,
                        run_coteaching, run_jocor)
from .selection import (SampleLosses, SelectionOutcome, criterion_losses,
                        keep_count, remember_rate, select_clean)
from .transition import (TransitionState, accumulate_batch, batch_class_row,
                         snapshot_epoch, soft_label, soft_labels_for)

__version__ = "0.1.0"
