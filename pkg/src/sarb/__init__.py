"""Multi-label learning with partially observed labels via representation blending.

The package trains a category-specific attention model on synthetic
feature-map datasets where only a fraction of the (sample, category)
labels are known, and complements the unknown entries by blending
representations: instance-to-instance within a batch, and against
per-category k-means prototypes.  Everything runs on a small tape-based
reverse-mode engine over float64 numpy arrays.
"""

from .autodiff import (NumericError, ShapeError, Var, backward, clip, cosine, einsum,
                       exp, log, matmul, no_grad, sigmoid, softmax, sqrt, where,
                       zero_grads)
from .config import ConfigError, TrainConfig, make_config, with_overrides
from .data import Dataset, DatasetSpec, batches, drop_labels, generate, load_dataset, save_dataset
from .gradcheck import GradCheckReport, grad_check
from .ilrb import BlendCoefficients, BlendedBatch, blend_batch, blend_pair, pair_assignment
from .losses import LossReport, classification_loss, partial_bce, total_loss
from .metrics import MetricReport, average_precision, classification_counts, evaluate_scores
from .model import ClassifierParams, CsrlParams, attention_map, classify, decouple
from .optim import Adam
from .plrb import (KMeansResult, PrototypeBank, blend_with_prototypes, build_bank,
                   collect_category_reps, contrastive_batch, contrastive_pair, kmeans)
from .serialize import load_arrays, save_arrays
from .train import RunRecord, SarbModel, evaluate_model, predict_scores, train
from .experiments import ablate, sweep

__version__ = "0.1.0"
