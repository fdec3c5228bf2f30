"""Full model assembly: encoders, fusion, heads, and loss parameters.

Modality subsets are supported so uni- and bi-modal ablation baselines
share the same code path: three modalities use the hierarchical
cross-attention heads, two use a single cross-attention stage per target,
one pools its encoded sequence directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np
import torch
from torch import nn

from . import rng as rng_mod
from .data_model import ClipRecord, Modality, ModalityOrdering, zero_sequence
from .encoders import EncoderConfig, build_encoder, init_uniform_by_fan_in
from .errors import ShapeMismatchError
from .hca import AttentionPool, CrossAttention, TriModalFusion
from .heads_losses import ContrastiveHead, MlpBlock, PositiveWeights, class_probabilities
from .data_model import CATEGORIES

MATCH_TASKS = ("vtm", "vam", "atm")
# concatenation order fed to each matching head
MATCH_PAIR = {"vtm": ("video", "text"), "vam": ("video", "audio"), "atm": ("audio", "text")}


@dataclass(frozen=True)
class ModelConfig:
    dims: Mapping[str, int]
    d_model: int = 256
    d_k: Optional[int] = None
    n_heads: int = 1
    pool_hidden: Optional[int] = None
    proj_dim: Optional[int] = None
    head_hidden: Optional[tuple] = None  # MLP hidden widths; None = (in/2, in/4)
    tau: float = 0.07
    recurrent_hidden: Optional[int] = None
    recurrent_layers: int = 1
    bidirectional: bool = False
    ordering: ModalityOrdering = field(default_factory=ModalityOrdering.default)
    modalities: tuple = ("text", "audio", "video")
    init_seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "dims", dict(self.dims))
        mods = tuple(self.modalities)
        if not mods or any(m not in ("text", "audio", "video") for m in mods):
            raise ShapeMismatchError(f"bad modality subset {mods}")
        object.__setattr__(self, "modalities", mods)
        if self.head_hidden is not None:
            object.__setattr__(self, "head_hidden", tuple(int(h) for h in self.head_hidden))

    @property
    def torch_dtype(self):
        return {"float32": torch.float32, "float64": torch.float64}[self.dtype]

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            d_model=self.d_model,
            recurrent_hidden=self.recurrent_hidden,
            recurrent_layers=self.recurrent_layers,
            bidirectional=self.bidirectional,
        )

    def to_json(self) -> dict:
        return {
            "dims": dict(self.dims),
            "d_model": self.d_model,
            "d_k": self.d_k,
            "n_heads": self.n_heads,
            "pool_hidden": self.pool_hidden,
            "proj_dim": self.proj_dim,
            "head_hidden": list(self.head_hidden) if self.head_hidden else None,
            "tau": self.tau,
            "recurrent_hidden": self.recurrent_hidden,
            "recurrent_layers": self.recurrent_layers,
            "bidirectional": self.bidirectional,
            "ordering": self.ordering.to_string(),
            "modalities": list(self.modalities),
            "init_seed": self.init_seed,
            "dtype": self.dtype,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ModelConfig":
        obj = dict(obj)
        if "ordering" in obj and isinstance(obj["ordering"], str):
            obj["ordering"] = ModalityOrdering.from_string(obj["ordering"])
        if "modalities" in obj:
            obj["modalities"] = tuple(obj["modalities"])
        if obj.get("head_hidden"):
            obj["head_hidden"] = tuple(obj["head_hidden"])
        elif "head_hidden" in obj:
            obj["head_hidden"] = None
        return cls(**obj)


@dataclass
class ClipBatch:
    """Padded per-modality tensors plus validity masks."""

    features: Mapping[str, torch.Tensor]  # (B, Tmax, D_raw)
    masks: Mapping[str, torch.Tensor]  # (B, Tmax) bool
    lengths: Mapping[str, torch.Tensor]  # (B,) long
    labels: Optional[torch.Tensor] = None  # (B, 4) category flags
    binary: Optional[torch.Tensor] = None  # (B,)
    clip_ids: Sequence[str] = ()

    @property
    def size(self) -> int:
        return next(iter(self.features.values())).shape[0]


def collate(
    records: Sequence[ClipRecord],
    dims: Mapping[str, int],
    dtype=torch.float32,
    masked_modalities: Sequence[str] = (),
) -> ClipBatch:
    """Pad clip records into a batch; absent text becomes one zero step.

    ``masked_modalities`` swaps in the same single zero timestep used for
    absent text, which is how the masking probes silence a channel.
    """
    features, masks, lengths = {}, {}, {}
    for mod in ("text", "audio", "video"):
        seqs = []
        for r in records:
            if mod in masked_modalities:
                seqs.append(zero_sequence(Modality.from_key(mod), int(dims[mod])).data)
                continue
            seq = r.sequence(Modality.from_key(mod))
            if seq is None:
                seqs.append(zero_sequence(Modality.from_key(mod), int(dims[mod])).data)
            else:
                seqs.append(seq.data)
        t_max = max(s.shape[0] for s in seqs)
        batch = np.zeros((len(seqs), t_max, int(dims[mod])), dtype=np.float32)
        mask = np.zeros((len(seqs), t_max), dtype=bool)
        for i, s in enumerate(seqs):
            batch[i, : s.shape[0]] = s
            mask[i, : s.shape[0]] = True
        features[mod] = torch.from_numpy(batch).to(dtype)
        masks[mod] = torch.from_numpy(mask)
        lengths[mod] = torch.tensor([s.shape[0] for s in seqs], dtype=torch.long)

    labels = binary = None
    if all(r.labels is not None for r in records) and records:
        labels = torch.tensor([list(r.labels.categories) for r in records], dtype=torch.long)
        binary = torch.tensor([r.labels.binary for r in records], dtype=torch.long)
    return ClipBatch(
        features=features,
        masks=masks,
        lengths=lengths,
        labels=labels,
        binary=binary,
        clip_ids=[r.clip_id for r in records],
    )


class BiModalFusion(nn.Module):
    """Plain cross-attention between two modalities, pooled per target."""

    def __init__(self, mods, d_model, d_k=None, n_heads=1, pool_hidden=None, dtype=torch.float32):
        super().__init__()
        self.mods = tuple(mods)
        self.attn = nn.ModuleDict(
            {m: CrossAttention(d_model, d_k, n_heads, dtype=dtype) for m in self.mods}
        )
        self.pools = nn.ModuleDict(
            {m: AttentionPool(d_model, pool_hidden, dtype=dtype) for m in self.mods}
        )

    def forward(self, sequences, masks=None):
        masks = masks or {}
        a, b = self.mods
        pooled = {}
        for target, context in ((a, b), (b, a)):
            refined = self.attn[target](sequences[target], sequences[context], masks.get(context))
            pooled[target], _ = self.pools[target](refined, masks.get(target))
        return pooled


class UniModalPool(nn.Module):
    def __init__(self, mod, d_model, pool_hidden=None, dtype=torch.float32):
        super().__init__()
        self.mod = mod
        self.pool = AttentionPool(d_model, pool_hidden, dtype=dtype)

    def forward(self, sequences, masks=None):
        masks = masks or {}
        pooled, _ = self.pool(sequences[self.mod], masks.get(self.mod))
        return {self.mod: pooled}


class HiccapModel(nn.Module):
    """Everything learnable, initialized deterministically from one seed."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        dtype = config.torch_dtype
        enc_cfg = config.encoder_config()
        self.encoders = nn.ModuleDict(
            {
                mod: build_encoder(Modality.from_key(mod), int(config.dims[mod]), enc_cfg, dtype=dtype)
                for mod in config.modalities
            }
        )
        mods = config.modalities
        if len(mods) == 3:
            self.fusion = TriModalFusion(
                config.d_model, config.ordering, config.d_k, config.n_heads,
                config.pool_hidden, dtype=dtype,
            )
        elif len(mods) == 2:
            self.fusion = BiModalFusion(
                mods, config.d_model, config.d_k, config.n_heads, config.pool_hidden, dtype=dtype
            )
        else:
            self.fusion = UniModalPool(mods[0], config.d_model, config.pool_hidden, dtype=dtype)

        joint = config.d_model * len(mods)
        self.binary_head = MlpBlock(joint, 2, hidden=config.head_hidden, dtype=dtype)
        self.task_heads = nn.ModuleList(
            [MlpBlock(joint, 2, hidden=config.head_hidden, dtype=dtype) for _ in CATEGORIES]
        )
        self.task_weights = PositiveWeights(CATEGORIES, dtype=dtype)

        if len(mods) == 3:
            self.matching_heads = nn.ModuleDict(
                {t: MlpBlock(2 * config.d_model, 2, hidden=config.head_hidden, dtype=dtype) for t in MATCH_TASKS}
            )
            self.matching_weights = PositiveWeights(MATCH_TASKS, dtype=dtype)
            self.contrastive = ContrastiveHead(
                config.d_model, config.proj_dim, config.tau, dtype=dtype
            )

        init_uniform_by_fan_in(self, rng_mod.torch_generator(config.init_seed, "init"))

    # -- forward paths ------------------------------------------------

    def pooled_representations(self, batch: ClipBatch) -> dict:
        sequences = {
            mod: self.encoders[mod](batch.features[mod], batch.lengths[mod])
            for mod in self.config.modalities
        }
        masks = {mod: batch.masks[mod] for mod in self.config.modalities}
        return self.fusion(sequences, masks)

    def joint_representation(self, pooled: dict) -> torch.Tensor:
        return torch.cat([pooled[m] for m in self.config.modalities], dim=-1)

    def binary_logits(self, batch: ClipBatch) -> torch.Tensor:
        return self.binary_head(self.joint_representation(self.pooled_representations(batch)))

    def task_logits(self, batch: ClipBatch) -> torch.Tensor:
        joint = self.joint_representation(self.pooled_representations(batch))
        return torch.stack([head(joint) for head in self.task_heads], dim=1)  # (B, 4, 2)

    def matching_logits(self, pooled: dict) -> dict:
        out = {}
        for task in MATCH_TASKS:
            first, second = MATCH_PAIR[task]
            out[task] = self.matching_heads[task](
                torch.cat([pooled[first], pooled[second]], dim=-1)
            )
        return out

    def predict_probabilities(self, batch: ClipBatch, task: str) -> torch.Tensor:
        if task == "binary":
            return class_probabilities(self.binary_logits(batch))
        if task == "multitask":
            return class_probabilities(self.task_logits(batch))
        raise ValueError(f"unknown task {task!r}")

    # -- bookkeeping ----------------------------------------------------

    def set_bn_updates(self, enabled: bool) -> None:
        from .heads_losses import RunningBatchNorm

        for module in self.modules():
            if isinstance(module, RunningBatchNorm):
                module.update_running = enabled


def build_model(config: ModelConfig) -> HiccapModel:
    return HiccapModel(config)


def tiny_config(seed: int = 0, dtype: str = "float64", **overrides) -> ModelConfig:
    """Small widths for gradient checks and fast unit tests."""
    base = ModelConfig(
        dims={"text": 6, "audio": 5, "video": 7},
        d_model=8,
        recurrent_hidden=8,
        init_seed=seed,
        dtype=dtype,
    )
    return replace(base, **overrides) if overrides else base
