#!/usr/bin/env python3
"""End-to-end demo on planted synthetic data.

Generates a labeled dataset and an aligned pretraining corpus, then
drives the CLI through validate, stats, pretrain, finetune, eval,
mask-probe, and predict. Everything lands under --workdir.
"""

import argparse
import json
import sys
from pathlib import Path

from hiccap import synth
from hiccap.cli import main as cli


def run(args_list):
    print("\n$ hiccap " + " ".join(args_list))
    code = cli(args_list)
    if code != 0:
        sys.exit(f"command failed with exit code {code}")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--workdir", default="planted_demo")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--clips", type=int, default=384)
    args = parser.parse_args()

    work = Path(args.workdir)
    data_dir = work / "data"
    corpus_dir = work / "corpus"

    print(f"generating {args.clips} labeled clips and a pretraining corpus ...")
    manifest = synth.generate(synth.default_spec(n_clips=args.clips, seed=args.seed), data_dir)
    corpus_manifest = synth.generate_aligned_corpus(
        synth.SynthSpec(n_clips=args.clips, seed=args.seed + 1, latent_dim=12, signals={}),
        corpus_dir,
    )

    config = {
        "model": {"d_model": 32, "recurrent_hidden": 32},
        "optimizer": {"initial_lr": 3e-3, "epochs": 10, "batch_size": 16},
        "split": {"train": 0.66, "val": 0.17, "test": 0.17},
    }
    config_path = work / "config.json"
    config_path.write_text(json.dumps(config, indent=2))

    run(["validate", "--manifest", str(manifest)])
    run(["stats", "--manifest", str(manifest), "--out", str(work / "stats")])
    run([
        "pretrain", "--manifest", str(corpus_manifest), "--config", str(config_path),
        "--seed", str(args.seed), "--epochs", "4", "--out", str(work / "pretrain"),
    ])
    run([
        "finetune", "--manifest", str(manifest), "--config", str(config_path),
        "--task", "multitask", "--seed", str(args.seed),
        "--checkpoint", str(work / "pretrain" / "pretrained.hckp"),
        "--out", str(work / "finetune"),
    ])
    checkpoint = str(work / "finetune" / "finetuned.hckp")
    run(["eval", "--checkpoint", checkpoint, "--manifest", str(manifest),
         "--task", "multitask", "--out", str(work / "eval")])
    run(["mask-probe", "--checkpoint", checkpoint, "--manifest", str(manifest),
         "--task", "multitask", "--mask", "t", "--out", str(work / "mask_t")])
    run(["predict", "--checkpoint", checkpoint, "--manifest", str(manifest),
         "--task", "multitask", "--out", str(work / "predictions")])
    print(f"\ndone; artifacts under {work}/")


if __name__ == "__main__":
    main()
