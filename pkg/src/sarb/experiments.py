"""Proportion sweeps and the ablation grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig, with_overrides
from .data import generate
from .train import RunRecord, _write_csv, train

METRIC_KEYS = ("mAP", "OP", "OR", "OF1", "CP", "CR", "CF1")


@dataclass
class SweepResult:
    records: dict = field(default_factory=dict)     # (proportion, seed) -> RunRecord
    per_proportion: dict = field(default_factory=dict)  # proportion -> mean metric row
    average: dict = field(default_factory=dict)     # mean over proportions of the means


def _mean_rows(rows: list[dict]) -> dict:
    return {k: float(np.mean([r[k] for r in rows])) for k in METRIC_KEYS}


def sweep(config: TrainConfig, proportions=None, seeds=None, out_dir=None,
          plots: bool = False) -> SweepResult:
    """Train per (proportion, seed) and aggregate the metric table.

    Datasets are generated once per seed and shared across proportions, so
    proportion effects are measured on identical data.
    """
    proportions = list(proportions if proportions is not None else config.proportions)
    seeds = list(seeds if seeds is not None else config.seeds)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    datasets = {seed: generate(config.dataset_spec(seed)) for seed in seeds}
    result = SweepResult()
    rows = []
    for proportion in proportions:
        for seed in seeds:
            run_dir = out_dir / f"p{proportion}_s{seed}" if out_dir is not None else None
            record = train(config, proportion, seed, dataset=datasets[seed], out_dir=run_dir)
            result.records[(proportion, seed)] = record
            rows.append({"proportion": proportion, "seed": seed,
                         **{k: record.final_metrics.row()[k] for k in METRIC_KEYS}})
        result.per_proportion[proportion] = _mean_rows(
            [r for r in rows if r["proportion"] == proportion])
    result.average = _mean_rows(list(result.per_proportion.values()))

    if out_dir is not None:
        table = [[r["proportion"], r["seed"]] + [r[k] for k in METRIC_KEYS] for r in rows]
        for proportion in proportions:
            mean = result.per_proportion[proportion]
            table.append([proportion, "mean"] + [mean[k] for k in METRIC_KEYS])
        table.append(["average", "mean"] + [result.average[k] for k in METRIC_KEYS])
        _write_csv(out_dir / "sweep_summary.csv", ("proportion", "seed") + METRIC_KEYS, table)
        if plots:
            from .plots import plot_map_vs_proportion

            plot_map_vs_proportion(result.per_proportion, out_dir / "map_vs_proportion.svg")
    return result


ABLATION_VARIANTS = (
    ("baseline", dict(ilrb=False, plrb=False)),
    ("ilrb", dict(plrb=False)),
    ("ilrb_fixed_alpha", dict(plrb=False, alpha_fixed=0.5)),
    ("plrb", dict(ilrb=False)),
    ("plrb_fixed_beta", dict(ilrb=False, beta_fixed=0.5)),
    ("full", dict()),
    ("ip_mixup", dict(ilrb=False, plrb=False, baseline="ip-mixup")),
    ("fm_mixup", dict(ilrb=False, plrb=False, baseline="fm-mixup")),
)


def ablate(config: TrainConfig, proportion: float = 0.1, seeds=None,
           out_dir=None) -> dict:
    """Run the standard variant grid at one proportion; returns mean rows.

    All variants share the per-seed dataset, partial labels, and parameter
    init, so differences isolate the blending modules themselves.
    """
    seeds = list(seeds if seeds is not None else config.seeds)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    datasets = {seed: generate(config.dataset_spec(seed)) for seed in seeds}
    results: dict[str, dict] = {}
    rows = []
    for name, overrides in ABLATION_VARIANTS:
        variant_cfg = with_overrides(config, **overrides)
        per_seed = []
        for seed in seeds:
            run_dir = out_dir / f"{name}_s{seed}" if out_dir is not None else None
            record = train(variant_cfg, proportion, seed, dataset=datasets[seed],
                           out_dir=run_dir)
            row = {k: record.final_metrics.row()[k] for k in METRIC_KEYS}
            per_seed.append(row)
            rows.append({"variant": name, "seed": seed, **row})
        results[name] = _mean_rows(per_seed)

    if out_dir is not None:
        table = [[r["variant"], r["seed"]] + [r[k] for k in METRIC_KEYS] for r in rows]
        for name, mean in results.items():
            table.append([name, "mean"] + [mean[k] for k in METRIC_KEYS])
        _write_csv(out_dir / "ablation_summary.csv", ("variant", "seed") + METRIC_KEYS, table)
    return results
