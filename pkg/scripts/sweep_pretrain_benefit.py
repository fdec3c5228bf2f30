#!/usr/bin/env python3
"""Mirror the pretraining-benefit acceptance protocol and sweep knobs."""

import argparse
import tempfile
import time
from pathlib import Path

import numpy as np
import torch

from hiccap import synth
from hiccap.ingest import PartitionSpec, load_dataset, split_partitions
from hiccap.model import ModelConfig, build_model
from hiccap.pretrain import CorruptionConfig, PretrainConfig, run_pretraining
from hiccap.train_eval import OptimizerConfig, evaluate, finetune

torch.set_num_threads(1)

DIMS = {"text": 32, "audio": 16, "video": 24}


def shared_signal_spec(n_clips, seed, noise, latent_dim, latent_scale):
    signals = {
        "mature_humor": synth.SignalPlan(subspaces={"text": (8, 9, 10, 11), "audio": (8, 9, 10, 11)}),
        "gory_humor": synth.SignalPlan(subspaces={"video": (0, 1, 2, 3), "audio": (0, 1, 2, 3)}),
        "slapstick_humor": synth.SignalPlan(subspaces={"audio": (4, 5, 6, 7), "video": (4, 5, 6, 7)}),
        "sarcasm": synth.SignalPlan(subspaces={"text": (0, 1, 2, 3), "video": (8, 9, 10, 11)}),
    }
    return synth.SynthSpec(
        n_clips=n_clips, seed=seed, dims=DIMS, signals=signals,
        noise_scale=noise, latent_dim=latent_dim, latent_scale=latent_scale,
    )


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--pre-epochs", type=int, default=10)
    ap.add_argument("--pre-lr", type=float, default=2e-3)
    ap.add_argument("--ft-epochs", type=int, default=10)
    ap.add_argument("--ft-lr", type=float, default=3e-3)
    ap.add_argument("--tau", type=float, default=0.2)
    ap.add_argument("--noise", type=float, default=0.35)
    ap.add_argument("--latent", type=int, default=12)
    ap.add_argument("--latent-scale", type=float, default=0.5)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--p", type=float, default=0.5)
    args = ap.parse_args()

    t0 = time.time()
    modes = ("scratch", "matching", "contrastive", "hybrid")
    scores = {m: [] for m in modes}
    for seed in range(args.seeds):
        out = Path(tempfile.mkdtemp())
        manifest = synth.generate(
            shared_signal_spec(768, 1000 + seed, args.noise, args.latent, args.latent_scale), out
        )
        train, val, test = split_partitions(
            load_dataset(manifest), PartitionSpec(2 / 3, 1 / 6, 1 / 6, seed=seed)
        )
        budget = train[: len(train) // 10]
        for mode in modes:
            model = build_model(ModelConfig(
                dims=DIMS, d_model=32, recurrent_hidden=32, init_seed=seed,
                dtype="float32", tau=args.tau,
            ))
            if mode != "scratch":
                pre = run_pretraining(model, train, val, PretrainConfig(
                    epochs=args.pre_epochs, mode=mode,
                    corruption=CorruptionConfig(p=args.p, seed=seed),
                    optimizer=OptimizerConfig(initial_lr=args.pre_lr, batch_size=16),
                    seed=seed,
                ))
                model.load_state_dict(pre.best_state)
            fit = finetune(model, budget, val, "multitask",
                           OptimizerConfig(initial_lr=args.ft_lr, epochs=args.ft_epochs, batch_size=16),
                           seed=seed, select_metric="macro_f1")
            model.load_state_dict(fit.best_state)
            score = evaluate(model, test, "multitask").macro_f1
            scores[mode].append(score)
            print(f"  seed {seed} {mode}: {score:.4f} ({time.time()-t0:.0f}s)", flush=True)
    avg = {m: float(np.mean(v)) for m, v in scores.items()}
    print("avgs:", {m: round(v, 4) for m, v in avg.items()})
    print(f"RESULT pre_ep={args.pre_epochs} pre_lr={args.pre_lr} tau={args.tau} "
          f"latent={args.latent}x{args.latent_scale} noise={args.noise} ft={args.ft_epochs}@{args.ft_lr}: "
          f"hyb-scr={avg['hybrid']-avg['scratch']:+.4f} "
          f"hyb-mat={avg['hybrid']-avg['matching']:+.4f} "
          f"hyb-con={avg['hybrid']-avg['contrastive']:+.4f} ({time.time()-t0:.0f}s)")


if __name__ == "__main__":
    main()
