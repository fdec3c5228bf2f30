"""Command-line interface: the package's single human-facing entry point.

Config precedence is CLI flag > config file > built-in default, and the
effective configuration is echoed into every output directory. All
randomness descends from one root seed through named sub-streams.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import torch

from . import __version__
from .data_model import ModalityOrdering, read_manifest
from .errors import DataError, HiccapError
from .ingest import (
    PartitionSpec,
    annotation_agreement,
    dataset_stats,
    load_annotations,
    load_dataset,
    split_partitions,
)
from .model import ModelConfig, build_model
from .pretrain import CorruptionConfig, PretrainConfig, run_pretraining
from .train_eval import (
    OptimizerConfig,
    evaluate,
    finetune,
    load_checkpoint,
    mask_probe,
    predict_batches,
    save_checkpoint,
)

DEFAULT_SPLIT = {"train": 0.65, "val": 0.10, "test": 0.25}


def _setup_threads() -> None:
    threads = int(os.environ.get("HCA_THREADS", "1"))
    torch.set_num_threads(max(threads, 1))


def _load_config_file(path):
    if path is None:
        return {}
    path = Path(path)
    text = path.read_bytes()
    if path.suffix == ".toml":
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text.decode("utf-8"))
    return json.loads(text.decode("utf-8"))


def _merged(section: dict, **cli_overrides) -> dict:
    out = dict(section)
    for key, value in cli_overrides.items():
        if value is not None:
            out[key] = value
    return out


def _timestamp(args) -> dict:
    if getattr(args, "no_timestamps", False):
        return {}
    return {"generated_at": datetime.now(timezone.utc).isoformat()}


def _write_json(path: Path, obj: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _echo_config(out_dir: Path, payload: dict) -> None:
    _write_json(out_dir / "config.json", payload)


def _model_config(file_cfg: dict, dims, args) -> ModelConfig:
    section = _merged(
        file_cfg.get("model", {}),
        ordering=getattr(args, "ordering", None),
        init_seed=getattr(args, "seed", None),
    )
    section.setdefault("dims", dims)
    return ModelConfig.from_json(section)


def _optimizer_config(file_cfg: dict, args) -> OptimizerConfig:
    section = _merged(
        file_cfg.get("optimizer", {}),
        epochs=getattr(args, "epochs", None),
        initial_lr=getattr(args, "lr", None),
    )
    if "betas" in section:
        section["betas"] = tuple(section["betas"])
    return OptimizerConfig(**section)


def _split_spec(file_cfg: dict, seed: int) -> PartitionSpec:
    section = {**DEFAULT_SPLIT, **file_cfg.get("split", {})}
    group = section.pop("group_by_video", True)
    spec = PartitionSpec(train=section["train"], val=section["val"], test=section["test"], seed=seed)
    return spec, group


def _partitions(clips, file_cfg, seed):
    spec, group = _split_spec(file_cfg, seed)
    return split_partitions(clips, spec, group_by_video=group)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        clips = load_dataset(args.manifest)
    except DataError as exc:
        print(f"INVALID: {exc}", file=sys.stderr)
        return 2
    print(f"OK: {len(clips)} clips, zero violations")
    if not clips:
        print("warning: manifest lists no clips", file=sys.stderr)
    return 0


def cmd_stats(args) -> int:
    clips = load_dataset(args.manifest)
    table = dataset_stats(clips)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "stats.csv").write_text(table.to_csv())
        (out_dir / "stats.txt").write_text(table.to_text())
    print(table.to_text(), end="")
    if args.annotations:
        agreement = annotation_agreement(load_annotations(args.annotations))
        print(f"mean annotator-vs-majority kappa: {agreement['mean_kappa']:.4f}")
        if args.out:
            payload = {
                "mean_kappa": agreement["mean_kappa"],
                "per_annotator": {
                    k: {"kappa": v.kappa, "p_observed": v.p_observed, "p_expected": v.p_expected}
                    for k, v in agreement["per_annotator"].items()
                },
            }
            _write_json(Path(args.out) / "agreement.json", payload)
    return 0


def cmd_pretrain(args) -> int:
    file_cfg = _load_config_file(args.config)
    manifest = read_manifest(args.manifest)
    clips = load_dataset(args.manifest)
    seed = args.seed if args.seed is not None else int(file_cfg.get("seed", 0))
    train, val, _ = _partitions(clips, file_cfg, seed)

    model_cfg = _model_config(file_cfg, manifest.dims, args)
    model = build_model(model_cfg)
    corruption = CorruptionConfig(**_merged(file_cfg.get("corruption", {}), seed=seed, p=args.p))
    pre_cfg = PretrainConfig(
        epochs=args.epochs if args.epochs is not None else int(file_cfg.get("pretrain", {}).get("epochs", 30)),
        mode=args.mode or file_cfg.get("pretrain", {}).get("mode", "hybrid"),
        corruption=corruption,
        optimizer=_optimizer_config(file_cfg, args),
        seed=seed,
    )
    result = run_pretraining(model, train, val, pre_cfg)

    out_dir = Path(args.out)
    model.load_state_dict(result.best_state)
    save_checkpoint(out_dir / "pretrained.hckp", model, epoch=result.best_epoch)
    history = [dataclasses.asdict(h) for h in result.history]
    _write_json(out_dir / "history.json", {**_timestamp(args), "epochs": history,
                                           "best_epoch": result.best_epoch,
                                           "best_val_loss": result.best_val_loss})
    _echo_config(out_dir, {
        "command": "pretrain", "seed": seed, "manifest": str(args.manifest),
        "model": model_cfg.to_json(),
        "pretrain": {"epochs": pre_cfg.epochs, "mode": pre_cfg.mode, "p": corruption.p},
        "optimizer": dataclasses.asdict(pre_cfg.optimizer),
    })
    print(f"pretraining done: best epoch {result.best_epoch}, val loss {result.best_val_loss:.6f}")
    return 0


def cmd_finetune(args) -> int:
    file_cfg = _load_config_file(args.config)
    manifest = read_manifest(args.manifest)
    clips = load_dataset(args.manifest)
    seed = args.seed if args.seed is not None else int(file_cfg.get("seed", 0))
    train, val, test = _partitions(clips, file_cfg, seed)

    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
        model_cfg = model.config
    else:
        model_cfg = _model_config(file_cfg, manifest.dims, args)
        model = build_model(model_cfg)
    opt_cfg = _optimizer_config(file_cfg, args)
    result = finetune(model, train, val, args.task, opt_cfg, seed=seed,
                      select_metric=file_cfg.get("select_metric", "accuracy"))

    out_dir = Path(args.out)
    model.load_state_dict(result.best_state)
    save_checkpoint(out_dir / "finetuned.hckp", model, epoch=result.best_epoch)
    history = [dataclasses.asdict(h) for h in result.history]
    _write_json(out_dir / "history.json", {**_timestamp(args), "epochs": history,
                                           "best_epoch": result.best_epoch,
                                           "best_val_metric": result.best_metric})
    if test:
        report = evaluate(model, test, args.task)
        _write_json(out_dir / "test_metrics.json", {**_timestamp(args), **report.to_json()})
    _echo_config(out_dir, {
        "command": "finetune", "seed": seed, "task": args.task,
        "manifest": str(args.manifest), "from_checkpoint": args.checkpoint,
        "model": model_cfg.to_json(), "optimizer": dataclasses.asdict(opt_cfg),
    })
    print(f"fine-tuning done: best epoch {result.best_epoch}, val metric {result.best_metric:.4f}")
    return 0


def cmd_eval(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    clips = load_dataset(args.manifest)
    report = evaluate(model, clips, args.task)
    payload = {**_timestamp(args), **report.to_json()}
    if args.out:
        _write_json(Path(args.out) / "metrics.json", payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_mask_probe(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    clips = load_dataset(args.manifest)
    masked = _parse_mask(args.mask)
    report = mask_probe(model, clips, masked, task=args.task)
    payload = {**_timestamp(args), **report.to_json()}
    if args.out:
        _write_json(Path(args.out) / "mask_metrics.json", payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _parse_mask(text: str):
    by_initial = {"t": "text", "a": "audio", "v": "video"}
    try:
        return tuple(by_initial[c] for c in text)
    except KeyError:
        raise DataError(f"bad mask {text!r}: use letters from t, a, v")


def cmd_predict(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    clips = load_dataset(args.manifest)
    probs = predict_batches(model, clips, args.task)
    rows = []
    for i, clip in enumerate(clips):
        if args.task == "binary":
            rows.append({"clip_id": clip.clip_id, "probs": [float(p) for p in probs[i]]})
        else:
            from .data_model import CATEGORIES

            rows.append({
                "clip_id": clip.clip_id,
                "probs": {cat: [float(p) for p in probs[i, ci]] for ci, cat in enumerate(CATEGORIES)},
            })
    payload = {**_timestamp(args), "task": args.task, "predictions": rows}
    if args.out:
        _write_json(Path(args.out) / "predictions.json", payload)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_sweep_ordering(args) -> int:
    file_cfg = _load_config_file(args.config)
    manifest = read_manifest(args.manifest)
    clips = load_dataset(args.manifest)
    seed = args.seed if args.seed is not None else int(file_cfg.get("seed", 0))
    train, val, test = _partitions(clips, file_cfg, seed)
    opt_cfg = _optimizer_config(file_cfg, args)

    results = []
    for ordering in all_orderings():
        section = dict(file_cfg.get("model", {}))
        section["dims"] = dict(manifest.dims)
        section["ordering"] = ordering.to_string()
        section["init_seed"] = seed
        model = build_model(ModelConfig.from_json(section))
        fit = finetune(model, train, val, args.task, opt_cfg, seed=seed)
        model.load_state_dict(fit.best_state)
        report = evaluate(model, test or val, args.task)
        metric = report.macro_f1 if args.task == "multitask" else report.f1_per_class["positive"]
        results.append({"ordering": ordering.to_string(), "test_metric": metric,
                        "val_metric": fit.best_metric})
    results.sort(key=lambda r: -r["test_metric"])
    payload = {**_timestamp(args), "task": args.task, "seed": seed, "ranking": results}
    out_dir = Path(args.out)
    _write_json(out_dir / "ordering_sweep.json", payload)
    lines = ["ordering,test_metric,val_metric"]
    lines += [f"{r['ordering']},{r['test_metric']:.6f},{r['val_metric']:.6f}" for r in results]
    (out_dir / "ordering_sweep.csv").write_text("\n".join(lines) + "\n")
    for r in results:
        print(f"{r['ordering']:>15}  test={r['test_metric']:.4f}  val={r['val_metric']:.4f}")
    return 0


def all_orderings():
    """All 8 context orderings: two choices per target modality."""
    from .data_model import Modality

    others = {
        Modality.TEXT: (Modality.AUDIO, Modality.VIDEO),
        Modality.AUDIO: (Modality.TEXT, Modality.VIDEO),
        Modality.VIDEO: (Modality.TEXT, Modality.AUDIO),
    }
    orderings = []
    for bits in range(8):
        ctx = {}
        for mi, mod in enumerate((Modality.TEXT, Modality.AUDIO, Modality.VIDEO)):
            a, b = others[mod]
            ctx[mod] = (a, b) if not (bits >> mi) & 1 else (b, a)
        orderings.append(ModalityOrdering(ctx))
    return orderings


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hiccap", description=__doc__)
    parser.add_argument("--version", action="version", version=f"hiccap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, manifest=True, out_required=False):
        if manifest:
            p.add_argument("--manifest", required=True, help="dataset manifest JSON")
        p.add_argument("--config", help="JSON or TOML config file")
        p.add_argument("--seed", type=int, default=None, help="root seed for all sub-streams")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--no-timestamps", action="store_true", help="omit timestamps from reports")

    p = sub.add_parser("validate", help="load a manifest and report violations")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="dataset statistics as CSV and text")
    common(p)
    p.add_argument("--annotations", help="raw annotation votes JSON for agreement stats")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("pretrain", help="matching + contrastive pretraining")
    common(p, out_required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--mode", choices=["hybrid", "matching", "contrastive", "alternating"])
    p.add_argument("--p", type=float, default=None, help="corruption probability")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--ordering", help="context ordering, e.g. t:av,a:tv,v:ta")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="supervised fine-tuning")
    common(p, out_required=True)
    p.add_argument("--task", choices=["binary", "multitask"], default="multitask")
    p.add_argument("--checkpoint", help="warm start from a pretraining checkpoint")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--ordering", help="context ordering, e.g. t:av,a:tv,v:ta")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", choices=["binary", "multitask"], default="multitask")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mask-probe", help="evaluate with modalities zeroed out")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", choices=["binary", "multitask"], default="multitask")
    p.add_argument("--mask", required=True, help="modalities to mask, letters from t a v")
    p.set_defaults(func=cmd_mask_probe)

    p = sub.add_parser("sweep-ordering", help="train and rank all 8 context orderings")
    common(p, out_required=True)
    p.add_argument("--task", choices=["binary", "multitask"], default="multitask")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.set_defaults(func=cmd_sweep_ordering)

    p = sub.add_parser("predict", help="per-clip probabilities as JSON")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", choices=["binary", "multitask"], default="multitask")
    p.set_defaults(func=cmd_predict)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_threads()
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HiccapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
