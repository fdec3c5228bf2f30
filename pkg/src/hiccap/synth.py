"""Planted-signal synthetic datasets for desk-scale experiments.

Each category gets a designated set of (modality, feature indices); when
a clip carries the category, a constant offset is added to those entries
before Gaussian noise. The final label is recomputed from the noisy
features (mean of the designated entries above threshold), so labels are
a pure function of what the model sees.

An optional alignment latent, shared across the three modalities of a
clip, stands in for the real cross-modal structure that matching and
contrastive pretraining exploit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from . import rng
from .data_model import (
    CATEGORIES,
    CHANNEL_OF_MODALITY,
    DatasetManifest,
    FeatureSequence,
    LabelSet,
    ManifestEntry,
    Modality,
    TextSource,
    write_feature_file,
    write_manifest,
)
from .errors import SchemaMismatchError


@dataclass(frozen=True)
class SignalPlan:
    """Where one category's evidence lives and how strong it is.

    ``active_fraction`` < 1 confines the offset to a random subset of
    timesteps (at least one), mimicking events that occupy moments of a
    clip rather than its whole length; the label still derives from the
    all-timestep mean, so thresholds should scale with the fraction.
    """

    subspaces: Mapping[str, tuple]  # modality key -> feature indices
    threshold: float = 0.5
    strength: float = 1.0
    prevalence: float = 0.4
    active_fraction: float = 1.0

    def __post_init__(self):
        object.__setattr__(
            self, "subspaces", {k: tuple(int(i) for i in v) for k, v in dict(self.subspaces).items()}
        )
        if self.strength <= 0:
            raise SchemaMismatchError("signal strength must be > 0")
        if not 0.0 <= self.prevalence <= 1.0:
            raise SchemaMismatchError("prevalence must lie in [0, 1]")
        if not 0.0 < self.active_fraction <= 1.0:
            raise SchemaMismatchError("active_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class SynthSpec:
    n_clips: int
    seed: int
    dims: Mapping[str, int] = field(
        default_factory=lambda: {"text": 32, "audio": 16, "video": 24}
    )
    t_ranges: Mapping[str, tuple] = field(
        default_factory=lambda: {"text": (4, 12), "audio": (4, 12), "video": (4, 12)}
    )
    signals: Mapping[str, SignalPlan] = field(default_factory=dict)
    noise_scale: float = 0.25
    latent_dim: int = 0  # > 0 turns on the shared cross-modal latent
    latent_scale: float = 0.5
    clips_per_video: int = 1

    def __post_init__(self):
        object.__setattr__(self, "dims", dict(self.dims))
        object.__setattr__(self, "t_ranges", {k: tuple(v) for k, v in dict(self.t_ranges).items()})
        object.__setattr__(self, "signals", dict(self.signals))
        for cat, plan in self.signals.items():
            if cat not in CATEGORIES:
                raise SchemaMismatchError(f"unknown category {cat!r}")
            for mod, idx in plan.subspaces.items():
                if max(idx, default=-1) >= self.dims[mod]:
                    raise SchemaMismatchError(f"{cat}: subspace indices exceed {mod} dim")


def default_signals() -> dict:
    """One category per modality pattern; mature humor lives jointly in
    text and audio so only trimodal fusion can cover all four."""
    return {
        "sarcasm": SignalPlan(subspaces={"text": (0, 1, 2, 3)}),
        "gory_humor": SignalPlan(subspaces={"video": (0, 1, 2, 3)}),
        "slapstick_humor": SignalPlan(subspaces={"audio": (0, 1, 2, 3)}),
        "mature_humor": SignalPlan(subspaces={"text": (8, 9, 10, 11), "audio": (8, 9, 10, 11)}),
    }


def default_spec(n_clips: int = 768, seed: int = 0, **overrides) -> SynthSpec:
    spec = SynthSpec(n_clips=n_clips, seed=seed, signals=default_signals())
    return replace(spec, **overrides) if overrides else spec


def _clip_features(spec: SynthSpec, index: int, labeled: bool):
    """Features, labels, and timestep counts for one clip, from its own stream."""
    stream = rng.numpy_rng(spec.seed, "clip", index)
    t = {m: int(stream.integers(spec.t_ranges[m][0], spec.t_ranges[m][1] + 1)) for m in spec.dims}
    feats = {m: np.zeros((t[m], spec.dims[m]), dtype=np.float64) for m in spec.dims}

    planned = {}
    if labeled:
        for cat in CATEGORIES:
            plan = spec.signals.get(cat)
            planned[cat] = bool(plan) and bool(stream.random() < plan.prevalence)
            if planned[cat]:
                for mod in sorted(plan.subspaces):
                    idx = list(plan.subspaces[mod])
                    if plan.active_fraction >= 1.0:
                        feats[mod][:, idx] += plan.strength
                    else:
                        n_active = max(1, int(round(plan.active_fraction * t[mod])))
                        steps = stream.choice(t[mod], size=n_active, replace=False)
                        feats[mod][np.ix_(sorted(steps), idx)] += plan.strength

    if spec.latent_dim > 0:
        latent = stream.normal(size=spec.latent_dim)
        for mod in spec.dims:
            embed_rng = rng.numpy_rng(spec.seed, "embed", mod)
            basis = embed_rng.normal(size=(spec.latent_dim, spec.dims[mod]))
            basis *= spec.latent_scale / np.sqrt(spec.latent_dim)
            feats[mod] += latent @ basis  # same latent image at every timestep

    if spec.noise_scale > 0:
        for mod in spec.dims:
            feats[mod] += stream.normal(scale=spec.noise_scale, size=feats[mod].shape)

    labels = None
    if labeled:
        flags = []
        pm = []
        for cat in CATEGORIES:
            plan = spec.signals.get(cat)
            if plan is None:
                flags.append(0)
                pm.append((0, 0, 0))
                continue
            pooled = np.concatenate(
                [feats[mod][:, list(idx)].ravel() for mod, idx in sorted(plan.subspaces.items())]
            )
            flag = int(pooled.mean() > plan.threshold)
            flags.append(flag)
            row = [0, 0, 0]
            for mod in plan.subspaces:
                row[CHANNEL_OF_MODALITY[Modality.from_key(mod)]] = flag
            pm.append(tuple(row))
        labels = LabelSet(categories=tuple(flags), per_modality=tuple(pm))

    sequences = {
        m: FeatureSequence(Modality.from_key(m), feats[m].astype(np.float32)) for m in spec.dims
    }
    return sequences, labels


def _write_dataset(spec: SynthSpec, out_dir, labeled: bool) -> Path:
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    entries = []
    for i in range(spec.n_clips):
        sequences, labels = _clip_features(spec, i, labeled)
        clip_id = f"clip_{i:05d}"
        video_id = f"video_{i // max(spec.clips_per_video, 1):05d}"
        paths = {}
        for mod, seq in sequences.items():
            rel = f"features/{clip_id}.{mod}.hcmf"
            write_feature_file(out_dir / rel, seq)
            paths[mod] = rel
        entries.append(
            ManifestEntry(
                clip_id=clip_id,
                video_id=video_id,
                text_path=paths["text"],
                text_source=TextSource.SUBTITLE,
                audio_path=paths["audio"],
                video_path=paths["video"],
                labels=labels,
            )
        )
    manifest = DatasetManifest(dims=spec.dims, clips=entries)
    manifest_path = out_dir / "manifest.json"
    write_manifest(manifest_path, manifest)
    (out_dir / "synth_spec.json").write_text(json.dumps(spec_to_json(spec), indent=2, sort_keys=True))
    return manifest_path


def generate(spec: SynthSpec, out_dir) -> Path:
    """Write a labeled planted-signal dataset; returns the manifest path."""
    return _write_dataset(spec, out_dir, labeled=True)


def generate_aligned_corpus(spec: SynthSpec, out_dir) -> Path:
    """Unlabeled corpus whose modalities share a per-clip latent."""
    if spec.latent_dim <= 0:
        raise SchemaMismatchError("aligned corpus needs latent_dim > 0")
    return _write_dataset(spec, out_dir, labeled=False)


def spec_to_json(spec: SynthSpec) -> dict:
    return {
        "n_clips": spec.n_clips,
        "seed": spec.seed,
        "dims": dict(spec.dims),
        "t_ranges": {k: list(v) for k, v in spec.t_ranges.items()},
        "signals": {
            cat: {
                "subspaces": {m: list(i) for m, i in plan.subspaces.items()},
                "threshold": plan.threshold,
                "strength": plan.strength,
                "prevalence": plan.prevalence,
                "active_fraction": plan.active_fraction,
            }
            for cat, plan in spec.signals.items()
        },
        "noise_scale": spec.noise_scale,
        "latent_dim": spec.latent_dim,
        "latent_scale": spec.latent_scale,
        "clips_per_video": spec.clips_per_video,
    }


def spec_from_json(obj: Mapping) -> SynthSpec:
    signals = {
        cat: SignalPlan(
            subspaces={m: tuple(i) for m, i in p["subspaces"].items()},
            threshold=p.get("threshold", 0.5),
            strength=p.get("strength", 1.0),
            prevalence=p.get("prevalence", 0.4),
            active_fraction=p.get("active_fraction", 1.0),
        )
        for cat, p in obj.get("signals", {}).items()
    }
    return SynthSpec(
        n_clips=int(obj["n_clips"]),
        seed=int(obj["seed"]),
        dims=obj.get("dims", {"text": 32, "audio": 16, "video": 24}),
        t_ranges={k: tuple(v) for k, v in obj.get("t_ranges", {}).items()}
        or {"text": (4, 12), "audio": (4, 12), "video": (4, 12)},
        signals=signals,
        noise_scale=float(obj.get("noise_scale", 0.25)),
        latent_dim=int(obj.get("latent_dim", 0)),
        latent_scale=float(obj.get("latent_scale", 0.5)),
        clips_per_video=int(obj.get("clips_per_video", 1)),
    )
