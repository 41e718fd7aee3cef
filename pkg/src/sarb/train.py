"""End-to-end training with the three-branch objective and blending schedule.

Each step scores the original batch, and once the blending schedule is
active also the instance-blended and prototype-blended branches, all
through the one shared classifier.  Prototypes are (re)built from the
partial labels at the blend-start epoch and every refresh interval after
it.  Everything is derived deterministically from the run seed, so a
(config, seed) pair reproduces its logs bit for bit.  Evaluation always
uses the plain branch only.
"""

from __future__ import annotations

import csv
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import backward, no_grad
from .config import TrainConfig
from .data import Dataset, batches, drop_labels, generate
from .ilrb import BlendCoefficients, blend_batch, pair_assignment
from .losses import partial_bce, total_loss
from .metrics import MetricReport, evaluate_scores
from .model import ClassifierParams, CsrlParams, classify, decouple
from .optim import Adam
from .plrb import PrototypeBank, blend_with_prototypes, build_bank, contrastive_batch, save_bank_csv
from .serialize import load_arrays, save_arrays

_DROP_TAG = 1009
_INIT_TAG = 1013
_MIX_TAG = 1033

TRAIN_LOG_COLUMNS = ("epoch", "step", "l_main", "l_ilrb", "l_plrb", "l_cst", "l_total")


class SarbModel:
    """Bundle of all trainable parameters, keyed for snapshots."""

    def __init__(self, config: TrainConfig, seed: int):
        rng = np.random.default_rng([seed, _INIT_TAG])
        c, d = config.n_categories, config.depth
        self.csrl = CsrlParams.init(c, d, rng)
        self.clf = ClassifierParams.init(c, d, rng)
        self.alpha = BlendCoefficients(c, fixed=config.alpha_fixed,
                                       shared=config.alpha_shared, name="ilrb.alpha")
        self.beta = BlendCoefficients(c, fixed=config.beta_fixed, name="plrb.beta")

    def named_params(self) -> dict:
        params = {}
        params.update(self.csrl.named())
        params.update(self.clf.named())
        params.update(self.alpha.named())
        params.update(self.beta.named())
        return params

    def no_decay_names(self) -> set:
        return {"ilrb.alpha.raw", "plrb.beta.raw"}

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_params().items()}

    def load_param_arrays(self, arrays: dict[str, np.ndarray]):
        for name, p in self.named_params().items():
            arr = arrays[name]
            if arr.shape != p.data.shape:
                raise ValueError(f"parameter {name}: shape {arr.shape} != {p.data.shape}")
            p.data[...] = arr


def predict_scores(model: SarbModel, dataset: Dataset, chunk: int = 512) -> np.ndarray:
    """Plain-branch scores for a dataset, no tape recording."""
    out = []
    with no_grad():
        for start in range(0, len(dataset), chunk):
            feats = dataset.features[start:start + chunk]
            out.append(classify(decouple(feats, model.csrl), model.clf).data)
    return np.concatenate(out, axis=0)


def evaluate_model(model: SarbModel, dataset: Dataset, threshold: float = 0.5,
                   known_proportion: float = 1.0) -> MetricReport:
    return evaluate_scores(predict_scores(model, dataset), dataset.labels,
                           threshold=threshold, known_proportion=known_proportion)


# -- mixup baselines ---------------------------------------------------------


def mixup_blend(features: np.ndarray, labels: np.ndarray, perm: np.ndarray,
                lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Position-wise convex blend of paired feature maps and known labels.

    Labels blend in target space ({+1 -> 1, -1 -> 0}) only where both
    entries are known; a pair with an unknown side stays unknown.  Equal
    known labels pass through unchanged, so lam=1 is the identity.
    """
    mixed = lam * features + (1.0 - lam) * features[perm]
    y_n, y_m = labels, labels[perm]
    out = np.zeros_like(labels)
    both = (y_n != 0.0) & (y_m != 0.0)
    same = both & (y_n == y_m)
    out[same] = y_n[same]
    differ = both & ~same
    t_n = (y_n + 1.0) / 2.0
    t_m = (y_m + 1.0) / 2.0
    v = lam * t_n + (1.0 - lam) * t_m
    out[differ] = np.where(v[differ] == 1.0, 1.0, np.where(v[differ] == 0.0, -1.0, v[differ]))
    return mixed, out


def baseline_mixup(features: np.ndarray, labels: np.ndarray, mix_alpha: float,
                   seed: int, step: int) -> tuple[np.ndarray, np.ndarray]:
    """One mixup draw for a batch: Beta(a, a) weight plus derangement pairing.

    Input- and feature-level mixup coincide here because samples are
    feature maps already; the mode only matters for bookkeeping.
    """
    rng = np.random.default_rng([seed, _MIX_TAG, step])
    lam = float(rng.beta(mix_alpha, mix_alpha))
    perm = pair_assignment(features.shape[0], seed, step)
    return mixup_blend(features, labels, perm, lam)


# -- run records ---------------------------------------------------------------


@dataclass
class EpochStats:
    epoch: int
    lr: float
    mean_main: float
    mean_ilrb: float
    mean_plrb: float
    mean_cst: float
    mean_total: float
    loss_variance: float


@dataclass
class RunRecord:
    config_hash: str
    seed: int
    proportion: float
    achieved_proportion: float
    epoch_stats: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    final_metrics: MetricReport | None = None
    proto_rebuild_epochs: list = field(default_factory=list)
    wall_time: float = 0.0
    model: SarbModel | None = None


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _rebuild_epochs(config: TrainConfig) -> list[int]:
    return [e for e in range(config.blend_start_epoch, config.epochs)
            if (e - config.blend_start_epoch) % config.proto_refresh == 0]


# -- checkpointing --------------------------------------------------------------


def save_checkpoint(path, model: SarbModel, adam: Adam, bank: PrototypeBank | None,
                    next_epoch: int, config_hash: str):
    arrays = {f"param.{k}": v for k, v in model.param_arrays().items()}
    arrays.update(adam.state_arrays())
    arrays["trainer.next_epoch"] = np.array([float(next_epoch)])
    arrays["meta.config_hash"] = np.frombuffer(config_hash.encode(), dtype=np.uint8).astype(np.float64)
    if bank is not None:
        arrays["bank.prototypes"] = bank.prototypes
        arrays["bank.valid"] = bank.valid.astype(np.float64)
        arrays["bank.built_at"] = np.array([float(bank.built_at_epoch)])
    save_arrays(path, arrays)


def load_checkpoint(path) -> dict:
    arrays = load_arrays(path)
    out = {
        "params": {k[len("param."):]: v for k, v in arrays.items() if k.startswith("param.")},
        "adam": {k: v for k, v in arrays.items() if k.startswith("adam.")},
        "next_epoch": int(arrays["trainer.next_epoch"][0]),
        "config_hash": bytes(arrays["meta.config_hash"].astype(np.uint8)).decode(),
        "bank": None,
    }
    if "bank.prototypes" in arrays:
        out["bank"] = PrototypeBank(arrays["bank.prototypes"],
                                    arrays["bank.valid"].astype(bool),
                                    built_at_epoch=int(arrays["bank.built_at"][0]))
    return out


# -- the training loop -----------------------------------------------------------


def train(config: TrainConfig, proportion: float, seed: int, dataset: Dataset | None = None,
          out_dir=None, resume_from=None) -> RunRecord:
    """Train one run at one known-label proportion; returns its record.

    The ground-truth dataset is generated from the run seed unless one is
    supplied.  The last ``eval_fraction`` of samples is held out with full
    labels for evaluation; the rest is label-dropped and trained on.
    """
    start = time.perf_counter()
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    if dataset is None:
        dataset = generate(config.dataset_spec(seed))
    train_full, eval_set = dataset.split(config.eval_fraction)
    partial, achieved = drop_labels(train_full, proportion, seed=[seed, _DROP_TAG],
                                    stratified=config.stratified)

    model = SarbModel(config, seed)
    lr_scale = None
    if config.blend_lr is not None and config.lr > 0:
        # the bounded blend coefficients get their own step size; at desk-scale
        # learning rates Adam's sign-following steps would otherwise saturate
        # their sigmoid within a few hundred steps
        lr_scale = {name: config.blend_lr / config.lr for name in model.no_decay_names()}
    adam = Adam(model.named_params(), lr=config.lr, weight_decay=config.weight_decay,
                no_decay=model.no_decay_names(), lr_scale=lr_scale)
    bank: PrototypeBank | None = None
    start_epoch = 0
    record = RunRecord(config_hash=config.hash(), seed=seed, proportion=proportion,
                       achieved_proportion=achieved)

    if resume_from is not None:
        state = load_checkpoint(resume_from)
        if state["config_hash"] != config.hash():
            warnings.warn("checkpoint was written under a different config")
        model.load_param_arrays(state["params"])
        adam.load_state_arrays(state["adam"])
        bank = state["bank"]
        start_epoch = state["next_epoch"]

    steps_per_epoch = math.ceil(len(partial) / config.batch_size)
    rebuild_at = set(_rebuild_epochs(config))
    use_blending = config.baseline == "none"
    events = []

    for epoch in range(start_epoch, config.epochs):
        adam.lr = config.lr_at(epoch)
        blending = use_blending and epoch >= config.blend_start_epoch
        if blending and config.plrb and epoch in rebuild_at:
            bank = build_bank(partial, model.csrl, config.k_prototypes, seed, epoch)
            record.proto_rebuild_epochs.append(epoch)
            events.append((epoch, "prototypes_rebuilt"))
            if not bank.any_valid:
                warnings.warn(f"no category has {config.k_prototypes} known positives; "
                              "prototype blending is inactive")
            if out_dir is not None:
                save_bank_csv(out_dir / "prototypes.csv", bank)

        totals = []
        for step, batch in enumerate(batches(partial, config.batch_size, seed, epoch)):
            global_step = epoch * steps_per_epoch + step
            n_batch = len(batch)
            adam.zero_grad()
            y = batch.labels

            l_cst_v = None
            l_ilrb = 0.0
            l_plrb = 0.0
            if config.baseline != "none" and n_batch >= 2:
                feats, y_mix = baseline_mixup(batch.features, y, config.mix_alpha,
                                              seed, global_step)
                scores = classify(decouple(feats, model.csrl), model.clf)
                l_main_v = partial_bce(y_mix, scores).mean()
                l_cls_v = l_main_v
            else:
                reps = decouple(batch.features, model.csrl)
                scores = classify(reps, model.clf)
                l_main_v = partial_bce(y, scores).mean()
                l_cls_v = l_main_v
                if blending and config.ilrb and n_batch >= 2:
                    perm = pair_assignment(n_batch, seed, global_step)
                    blended = blend_batch(reps, y, model.alpha, perm)
                    l_ilrb_v = partial_bce(blended.labels, classify(blended.reps, model.clf)).mean()
                    l_cls_v = l_cls_v + l_ilrb_v
                    l_ilrb = l_ilrb_v.item()
                if blending and config.plrb and bank is not None and bank.any_valid:
                    proto = blend_with_prototypes(reps, y, model.beta, bank, seed, global_step)
                    l_plrb_v = partial_bce(proto.labels, classify(proto.reps, model.clf)).mean()
                    l_cls_v = l_cls_v + l_plrb_v
                    l_plrb = l_plrb_v.item()
                    if n_batch >= 2:
                        l_cst_v = contrastive_batch(reps, y, config.contrastive_policy)

            loss = total_loss(l_cls_v, l_cst_v, config.contrastive_weight)
            backward(loss)
            adam.step()

            row = {"epoch": epoch, "step": step, "l_main": l_main_v.item(),
                   "l_ilrb": l_ilrb, "l_plrb": l_plrb,
                   "l_cst": l_cst_v.item() if l_cst_v is not None else 0.0,
                   "l_total": loss.item()}
            record.steps.append(row)
            totals.append(row["l_total"])

        if totals:
            arr = np.array(totals)
            epoch_rows = record.steps[-len(totals):]
            record.epoch_stats.append(EpochStats(
                epoch=epoch, lr=adam.lr,
                mean_main=float(np.mean([r["l_main"] for r in epoch_rows])),
                mean_ilrb=float(np.mean([r["l_ilrb"] for r in epoch_rows])),
                mean_plrb=float(np.mean([r["l_plrb"] for r in epoch_rows])),
                mean_cst=float(np.mean([r["l_cst"] for r in epoch_rows])),
                mean_total=float(arr.mean()), loss_variance=float(arr.var()),
            ))

    record.final_metrics = evaluate_model(model, eval_set, threshold=config.threshold,
                                          known_proportion=proportion)
    record.wall_time = time.perf_counter() - start

    if out_dir is not None:
        _write_csv(out_dir / "train_log.csv", TRAIN_LOG_COLUMNS,
                   [[r[c] for c in TRAIN_LOG_COLUMNS] for r in record.steps])
        mrow = record.final_metrics.row()
        _write_csv(out_dir / "metrics.csv", list(mrow), [list(mrow.values())])
        _write_csv(out_dir / "ap_per_category.csv", ("category", "ap", "excluded"),
                   [[c, float(record.final_metrics.per_category_ap[c]),
                     int(c in record.final_metrics.excluded_categories)]
                    for c in range(len(record.final_metrics.per_category_ap))])
        _write_csv(out_dir / "events.csv", ("epoch", "event"), events)
        save_checkpoint(out_dir / "checkpoint.bin", model, adam, bank,
                        next_epoch=config.epochs, config_hash=config.hash())
    record.model = model
    return record
