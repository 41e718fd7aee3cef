"""Command-line entry points: generate, train, sweep, evaluate, ablate.

Configuration comes from defaults, overlaid by an optional key=value file
(--config), overlaid by flags.  The SARB_SEED environment variable is the
seed fallback when --seed is not given.  Exit codes: 0 success, 2 config
error, 3 numeric failure (non-finite values during training).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .autodiff import NumericError
from .config import ConfigError, make_config, with_overrides
from .data import DatasetSpec, generate, load_dataset, save_dataset
from .experiments import ablate, sweep
from .metrics import evaluate_scores
from .train import SarbModel, load_checkpoint, predict_scores, train, _write_csv


def _env_seed() -> int:
    return int(os.environ.get("SARB_SEED", "0"))


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="flat key=value config file")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--lambda", dest="contrastive_weight", type=float,
                        help="contrastive loss weight")
    parser.add_argument("--ilrb", choices=["on", "off"])
    parser.add_argument("--plrb", choices=["on", "off"])
    parser.add_argument("--alpha-fixed", dest="alpha_fixed", type=float,
                        help="freeze the instance blend coefficient (disables learning)")
    parser.add_argument("--beta-fixed", dest="beta_fixed", type=float,
                        help="freeze the prototype blend coefficient")
    parser.add_argument("--alpha-shared", dest="alpha_shared", action="store_true",
                        default=None, help="one shared scalar instead of per-category")
    parser.add_argument("--blend-start-epoch", dest="blend_start_epoch", type=int)
    parser.add_argument("--proto-refresh", dest="proto_refresh", type=int)
    parser.add_argument("--k", dest="k_prototypes", type=int, help="prototypes per category")
    parser.add_argument("--contrastive-literal", dest="contrastive_literal",
                        action="store_true", default=None,
                        help="admit unknown-label pairs into the contrastive sum")
    parser.add_argument("--threshold", type=float)
    parser.add_argument("--baseline", choices=["none", "ip-mixup", "fm-mixup"])
    parser.add_argument("--stratified", action="store_true", default=None,
                        help="per-category stratified label dropping")
    parser.add_argument("--n", dest="n_samples", type=int)
    parser.add_argument("--c", dest="n_categories", type=int)
    parser.add_argument("--d", dest="depth", type=int)
    parser.add_argument("--snr", type=float)


def _config_from_args(args) -> "TrainConfig":
    overrides = {}
    for key in ("epochs", "batch_size", "lr", "contrastive_weight", "alpha_fixed",
                "beta_fixed", "alpha_shared", "blend_start_epoch", "proto_refresh",
                "k_prototypes", "threshold", "baseline", "stratified",
                "n_samples", "n_categories", "depth", "snr"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    for toggle in ("ilrb", "plrb"):
        value = getattr(args, toggle, None)
        if value is not None:
            overrides[toggle] = value == "on"
    if getattr(args, "contrastive_literal", None):
        overrides["contrastive_policy"] = "literal"
    if getattr(args, "seeds", None):
        overrides["seeds"] = tuple(int(s) for s in args.seeds.split(","))
    if getattr(args, "proportions", None):
        overrides["proportions"] = tuple(float(p) for p in args.proportions.split(","))
    return make_config(file=getattr(args, "config", None), **overrides)


def _load_or_generate(args, config, seed: int):
    if args.dataset_dir is not None and (Path(args.dataset_dir) / "features.bin").exists():
        return load_dataset(args.dataset_dir)
    return generate(config.dataset_spec(seed))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sarb", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset to --dataset-dir")
    p.add_argument("--dataset-dir", type=Path, required=True)
    p.add_argument("--n", dest="n_samples", type=int, default=2000)
    p.add_argument("--c", dest="n_categories", type=int, default=10)
    p.add_argument("--height", type=int, default=4)
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--d", dest="depth", type=int, default=16)
    p.add_argument("--positives-min", type=int, default=1)
    p.add_argument("--positives-max", type=int, default=3)
    p.add_argument("--snr", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=None)

    for name in ("train", "sweep", "ablate"):
        p = sub.add_parser(name)
        _add_config_flags(p)
        p.add_argument("--dataset-dir", type=Path, help="load dataset instead of generating")
        p.add_argument("--out-dir", type=Path, default=Path("sarb_out"))
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--plots", action="store_true", help="emit SVG plots")
        if name == "train":
            p.add_argument("--proportion", type=float, default=0.1,
                           help="known label proportion for the dropping simulation")
            p.add_argument("--resume-from", type=Path, help="continue from a checkpoint")
        if name == "sweep":
            p.add_argument("--proportions", type=str, help="comma list, e.g. 0.1,0.5,0.9")
            p.add_argument("--seeds", type=str, help="comma list of run seeds")
        if name == "ablate":
            p.add_argument("--proportion", type=float, default=0.1)
            p.add_argument("--seeds", type=str)

    p = sub.add_parser("evaluate", help="score a checkpoint against a dataset")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--dataset-dir", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, default=Path("sarb_out"))
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int, default=None)
    return parser


def _cmd_generate(args) -> int:
    seed = args.seed if args.seed is not None else _env_seed()
    spec = DatasetSpec(n_samples=args.n_samples, n_categories=args.n_categories,
                       height=args.height, width=args.width, depth=args.depth,
                       positives_min=args.positives_min, positives_max=args.positives_max,
                       snr=args.snr, seed=seed)
    try:
        spec.validate()
    except ValueError as err:
        raise ConfigError(str(err)) from None
    save_dataset(args.dataset_dir, generate(spec))
    print(f"wrote {spec.n_samples} samples to {args.dataset_dir}")
    return 0


def _cmd_train(args) -> int:
    config = _config_from_args(args)
    seed = args.seed if args.seed is not None else _env_seed()
    dataset = _load_or_generate(args, config, seed)
    record = train(config, args.proportion, seed, dataset=dataset,
                   out_dir=args.out_dir, resume_from=args.resume_from)
    row = record.final_metrics.row()
    print("  ".join(f"{k}={row[k]:.4f}" if isinstance(row[k], float) else f"{k}={row[k]}"
                    for k in row))
    if args.plots:
        from .plots import plot_loss_curve

        plot_loss_curve(record, args.out_dir / "loss_curve.svg")
    return 0


def _cmd_sweep(args) -> int:
    config = _config_from_args(args)
    result = sweep(config, out_dir=args.out_dir, plots=args.plots)
    for proportion, row in sorted(result.per_proportion.items()):
        print(f"proportion {proportion}: mAP={row['mAP']:.4f} OF1={row['OF1']:.4f} "
              f"CF1={row['CF1']:.4f}")
    print(f"average mAP over proportions: {result.average['mAP']:.4f}")
    return 0


def _cmd_ablate(args) -> int:
    config = _config_from_args(args)
    seeds = tuple(int(s) for s in args.seeds.split(",")) if args.seeds else None
    results = ablate(config, proportion=args.proportion, seeds=seeds, out_dir=args.out_dir)
    for name, row in results.items():
        print(f"{name:>18}: mAP={row['mAP']:.4f}")
    return 0


def _cmd_evaluate(args) -> int:
    config = make_config(file=args.config) if args.config else None
    dataset = load_dataset(args.dataset_dir)
    state = load_checkpoint(args.checkpoint)
    n_categories = state["params"]["csrl.queries"].shape[0]
    depth = state["params"]["csrl.queries"].shape[1]
    if config is None:
        config = make_config(n_categories=n_categories, depth=depth,
                             height=dataset.features.shape[1], width=dataset.features.shape[2])
    seed = args.seed if args.seed is not None else _env_seed()
    model = SarbModel(config, seed)
    model.load_param_arrays(state["params"])
    report = evaluate_scores(predict_scores(model, dataset), dataset.labels,
                             threshold=args.threshold)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    row = report.row()
    _write_csv(args.out_dir / "metrics.csv", list(row), [list(row.values())])
    print("  ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}"
                    for k, v in row.items()))
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "sweep": _cmd_sweep,
    "ablate": _cmd_ablate,
    "evaluate": _cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
