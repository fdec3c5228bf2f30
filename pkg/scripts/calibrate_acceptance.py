#!/usr/bin/env python3
"""Dry-run the expensive acceptance experiments and print timings/metrics.

Used to pick dataset sizes, epochs, and learning rates that make the
directional results robust while staying inside the runtime budgets.
"""

import argparse
import tempfile
import time
from pathlib import Path

import torch

from hiccap import synth
from hiccap.ingest import PartitionSpec, load_dataset, split_partitions
from hiccap.model import ModelConfig, build_model
from hiccap.pretrain import CorruptionConfig, PretrainConfig, run_pretraining
from hiccap.train_eval import OptimizerConfig, evaluate, finetune

torch.set_num_threads(1)


def make_data(n, seed, latent_dim=0, out=None):
    out = Path(out or tempfile.mkdtemp())
    spec = synth.default_spec(n_clips=n, seed=seed, latent_dim=latent_dim)
    manifest = synth.generate(spec, out)
    clips = load_dataset(manifest)
    return split_partitions(clips, PartitionSpec(2 / 3, 1 / 6, 1 / 6, seed=seed))


def model_config(dims, seed, d_model=32, modalities=("text", "audio", "video")):
    return ModelConfig(
        dims=dims, d_model=d_model, recurrent_hidden=d_model,
        init_seed=seed, dtype="float32", modalities=modalities,
    )


DIMS = {"text": 32, "audio": 16, "video": 24}


def learnability(args):
    t0 = time.time()
    train, val, test = make_data(768, seed=101)
    model = build_model(model_config(DIMS, seed=0, d_model=args.d_model))
    cfg = OptimizerConfig(initial_lr=args.lr, epochs=args.epochs, batch_size=16)
    result = finetune(model, train, val, "multitask", cfg, seed=0, select_metric="macro_f1")
    model.load_state_dict(result.best_state)
    report = evaluate(model, test, "multitask")
    print(f"learnability: macro_f1={report.macro_f1:.4f} per-class={ {k: round(v,3) for k,v in report.f1_per_class.items()} }")
    print(f"  best epoch {result.best_epoch}, epochs run {len(result.history)}, {time.time()-t0:.1f}s")
    for h in result.history:
        print(f"    epoch {h.epoch}: train {h.train_loss:.4f} val_metric {h.val_metric:.4f}")


def ablation(args):
    arms = {
        "tav": ("text", "audio", "video"),
        "ta": ("text", "audio"), "tv": ("text", "video"), "av": ("audio", "video"),
        "t": ("text",), "a": ("audio",), "v": ("video",),
    }
    t0 = time.time()
    scores = {k: [] for k in arms}
    for seed in range(args.seeds):
        train, val, test = make_data(args.n, seed=300 + seed)
        for name, mods in arms.items():
            model = build_model(model_config(DIMS, seed=seed, d_model=args.d_model, modalities=mods))
            cfg = OptimizerConfig(initial_lr=args.lr, epochs=args.epochs, batch_size=16)
            fit = finetune(model, train, val, "multitask", cfg, seed=seed, select_metric="macro_f1")
            model.load_state_dict(fit.best_state)
            report = evaluate(model, test, "multitask")
            scores[name].append(report.macro_f1)
            print(f"  seed {seed} {name}: {report.macro_f1:.4f}")
    avg = {k: sum(v) / len(v) for k, v in scores.items()}
    tri = avg["tav"]
    best_bi = max(avg["ta"], avg["tv"], avg["av"])
    best_uni = max(avg["t"], avg["a"], avg["v"])
    print(f"ablation avgs: {avg}")
    print(f"tri={tri:.4f} best_bi={best_bi:.4f} best_uni={best_uni:.4f} "
          f"gap1={tri-best_bi:.4f} gap2={best_bi-best_uni:.4f} ({time.time()-t0:.1f}s)")


def pretrain_benefit(args):
    t0 = time.time()
    results = {m: [] for m in ("scratch", "matching", "contrastive", "hybrid")}
    for seed in range(args.seeds):
        train, val, test = make_data(768, seed=500 + seed, latent_dim=args.latent)
        budget = train[: max(1, len(train) // 10)]
        dims = DIMS
        for mode in results:
            model = build_model(model_config(dims, seed=seed, d_model=args.d_model))
            if mode != "scratch":
                pre_cfg = PretrainConfig(
                    epochs=args.pre_epochs, mode=mode,
                    corruption=CorruptionConfig(p=0.5, seed=seed),
                    optimizer=OptimizerConfig(initial_lr=args.pre_lr, batch_size=16),
                    seed=seed,
                )
                pre = run_pretraining(model, train, val, pre_cfg)
                model.load_state_dict(pre.best_state)
            cfg = OptimizerConfig(initial_lr=args.lr, epochs=args.ft_epochs, batch_size=16)
            fit = finetune(model, budget, val, "multitask", cfg, seed=seed, select_metric="macro_f1")
            model.load_state_dict(fit.best_state)
            report = evaluate(model, test, "multitask")
            results[mode].append(report.macro_f1)
            print(f"  seed {seed} {mode}: {report.macro_f1:.4f} ({time.time()-t0:.0f}s)")
    avg = {k: sum(v) / len(v) for k, v in results.items()}
    print(f"pretrain benefit avgs: {avg}")
    print(f"hybrid-scratch={avg['hybrid']-avg['scratch']:+.4f} "
          f"hybrid-matching={avg['hybrid']-avg['matching']:+.4f} "
          f"hybrid-contrastive={avg['hybrid']-avg['contrastive']:+.4f} ({time.time()-t0:.0f}s)")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("what", choices=["learnability", "ablation", "pretrain"])
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--lr", type=float, default=3e-3)
    parser.add_argument("--d-model", type=int, default=32)
    parser.add_argument("--n", type=int, default=320)
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--latent", type=int, default=12)
    parser.add_argument("--pre-epochs", type=int, default=8)
    parser.add_argument("--pre-lr", type=float, default=1e-3)
    parser.add_argument("--ft-epochs", type=int, default=25)
    args = parser.parse_args()
    {"learnability": learnability, "ablation": ablation, "pretrain": pretrain_benefit}[args.what](args)


if __name__ == "__main__":
    main()
