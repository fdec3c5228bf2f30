"""Self-supervised pretraining: batch corruption and the hybrid loop.

Corruption draws per sample, in sample order, from one counter-based
stream (scheme ``philox4x64-v1``): the candidate modality (uniform over
text/audio/video as 0/1/2), the replacement coin (uniform double < p),
and the donor offset (uniform over the other N-1 samples; the raw draw j
maps to donor j if j < own index else j + 1). The donor draw is consumed
even when the coin says keep, so the stream position never depends on
outcomes. Single-sample batches consume no draws: there is no donor to
take a replacement from.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from . import rng as rng_mod
from .data_model import ClipRecord, Modality
from .errors import NonFiniteLossError, SchemaMismatchError
from .heads_losses import cross_entropy_loss
from .model import MATCH_TASKS, ClipBatch, HiccapModel, collate
from .train_eval import OptimizerConfig, build_optimizer

MODALITY_DRAW_ORDER = (Modality.TEXT, Modality.AUDIO, Modality.VIDEO)

# labels (vtm, vam, atm) induced by replacing one modality
LABELS_BY_REPLACEMENT = {
    None: (1, 1, 1),
    Modality.TEXT: (0, 1, 0),
    Modality.AUDIO: (1, 0, 0),
    Modality.VIDEO: (0, 0, 1),
}


@dataclass(frozen=True)
class CorruptionConfig:
    p: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise SchemaMismatchError(f"replacement probability {self.p} outside [0, 1]")


@dataclass
class CorruptedBatch:
    """Triplets after replacement plus the induced matching labels."""

    records: list  # ClipRecords with possibly swapped modalities
    labels: np.ndarray  # (N, 3) int: vtm, vam, atm
    replaced: list  # per sample: (Modality | None, donor index | None)

    @property
    def aligned_index(self) -> np.ndarray:
        return np.flatnonzero(self.labels.all(axis=1))


def corrupt_batch(
    records: Sequence[ClipRecord], cfg: CorruptionConfig, stream: np.random.Generator
) -> CorruptedBatch:
    """Per sample: maybe replace one modality with a donor's copy."""
    n = len(records)
    out_records = []
    labels = np.ones((n, 3), dtype=np.int64)
    replaced = []
    for i, record in enumerate(records):
        if n == 1:
            out_records.append(record)
            replaced.append((None, None))
            continue
        modality = MODALITY_DRAW_ORDER[int(stream.integers(3))]
        coin = bool(stream.random() < cfg.p)
        raw_donor = int(stream.integers(n - 1))
        donor = raw_donor if raw_donor < i else raw_donor + 1
        if not coin:
            out_records.append(record)
            replaced.append((None, None))
            continue
        donor_seq = records[donor].sequence(modality)
        fields = {"text": record.text, "audio": record.audio, "video": record.video}
        fields[modality.key] = donor_seq
        text_source = records[donor].text_source if modality == Modality.TEXT else record.text_source
        out_records.append(
            ClipRecord(
                clip_id=record.clip_id,
                source_video_id=record.source_video_id,
                text=fields["text"],
                text_source=text_source,
                audio=fields["audio"],
                video=fields["video"],
                labels=record.labels,
            )
        )
        labels[i] = LABELS_BY_REPLACEMENT[modality]
        replaced.append((modality, donor))
    return CorruptedBatch(records=out_records, labels=labels, replaced=replaced)


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 30
    mode: str = "hybrid"  # hybrid | matching | contrastive | alternating
    corruption: CorruptionConfig = field(default_factory=CorruptionConfig)
    optimizer: OptimizerConfig = None  # type: ignore[assignment]
    seed: int = 0
    # "clean": the contrastive term runs on an uncorrupted forward of the
    # same batch (positives are true same-clip pairs). "aligned": it runs
    # on the corruption survivors only, sharing the matching forward.
    contrastive_inputs: str = "clean"

    def __post_init__(self):
        if self.mode not in ("hybrid", "matching", "contrastive", "alternating"):
            raise SchemaMismatchError(f"unknown pretraining mode {self.mode!r}")
        if self.contrastive_inputs not in ("clean", "aligned"):
            raise SchemaMismatchError(f"unknown contrastive input policy {self.contrastive_inputs!r}")
        if self.optimizer is None:
            object.__setattr__(self, "optimizer", OptimizerConfig())


@dataclass
class StepResult:
    total: float
    matching: float
    contrastive: float
    contrastive_skipped: bool


def _phase_losses(
    model: HiccapModel,
    corrupted: CorruptedBatch,
    batch: ClipBatch,
    mode: str,
    clean_batch: Optional[ClipBatch] = None,
):
    """Matching and contrastive terms for one already-collated batch.

    With a ``clean_batch`` the contrastive term runs on that uncorrupted
    forward; otherwise it falls back to the corruption survivors of the
    shared forward, skipping (flagged) when none survived.
    """
    use_matching = mode in ("hybrid", "matching")
    use_contrastive = mode in ("hybrid", "contrastive")
    zero = torch.zeros((), dtype=next(model.parameters()).dtype)

    matching_loss = zero
    pooled = None
    if use_matching:
        pooled = model.pooled_representations(batch)
        logits = model.matching_logits(pooled)
        golds = torch.from_numpy(corrupted.labels)
        per_task = [cross_entropy_loss(logits[t], golds[:, ti]) for ti, t in enumerate(MATCH_TASKS)]
        matching_loss = model.matching_weights(per_task)

    contrastive_loss = zero
    skipped = False
    if use_contrastive:
        if clean_batch is not None:
            clean_pooled = model.pooled_representations(clean_batch)
            contrastive_loss, _ = model.contrastive(
                clean_pooled["audio"], clean_pooled["video"], clean_pooled["text"]
            )
        else:
            if pooled is None:
                pooled = model.pooled_representations(batch)
            aligned = corrupted.aligned_index
            if len(aligned) == 0:
                skipped = True
            else:
                idx = torch.from_numpy(aligned)
                contrastive_loss, _ = model.contrastive(
                    pooled["audio"][idx], pooled["video"][idx], pooled["text"][idx]
                )
    return matching_loss, contrastive_loss, skipped


def pretrain_step(
    model: HiccapModel,
    corrupted: CorruptedBatch,
    optimizer: torch.optim.Optimizer,
    mode: str = "hybrid",
    originals: Optional[Sequence[ClipRecord]] = None,
) -> StepResult:
    """One optimizer step on matching + contrastive losses.

    When ``originals`` (the pre-corruption records) are given, the
    contrastive term runs on their clean forward, so every sample
    contributes a true positive pair. Without them it falls back to the
    corruption survivors; an all-corrupted batch then skips the term and
    flags it.
    """
    batch = collate(corrupted.records, model.config.dims, dtype=model.config.torch_dtype)
    clean_batch = None
    if originals is not None and mode in ("hybrid", "contrastive"):
        clean_batch = collate(originals, model.config.dims, dtype=model.config.torch_dtype)
    matching_loss, contrastive_loss, skipped = _phase_losses(
        model, corrupted, batch, mode, clean_batch
    )
    total = matching_loss + contrastive_loss
    if not torch.isfinite(total):
        raise NonFiniteLossError("pretraining loss is not finite")
    optimizer.zero_grad()
    total.backward()
    optimizer.step()
    return StepResult(
        total=float(total.detach()),
        matching=float(matching_loss.detach()),
        contrastive=float(contrastive_loss.detach()),
        contrastive_skipped=skipped,
    )


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    contrastive_skips: int


@dataclass
class PretrainResult:
    history: list
    best_epoch: int
    best_val_loss: float
    best_state: dict


def _batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _epoch_mode(cfg: PretrainConfig, epoch: int) -> str:
    if cfg.mode != "alternating":
        return cfg.mode
    return "matching" if epoch % 2 == 0 else "contrastive"


def _mode_corruption(cfg: PretrainConfig, mode: str) -> CorruptionConfig:
    """Contrastive-only training runs on clean batches; corruption exists
    to mint matching labels and would just shrink the positive set."""
    if mode == "contrastive":
        return CorruptionConfig(p=0.0, seed=cfg.corruption.seed)
    return cfg.corruption


def evaluate_pretrain_loss(
    model: HiccapModel, clips: Sequence[ClipRecord], cfg: PretrainConfig, epoch: int,
    batch_size: int,
) -> float:
    """Validation pretraining loss with its own deterministic corruption."""
    mode = _epoch_mode(cfg, epoch)
    corruption = _mode_corruption(cfg, mode)
    model.eval()
    total = 0.0
    n_batches = 0
    order = np.arange(len(clips))
    with torch.no_grad():
        for bi, idx in enumerate(_batches(len(clips), batch_size, order)):
            originals = [clips[i] for i in idx]
            stream = rng_mod.philox(cfg.seed, "val-corrupt", epoch, bi)
            corrupted = corrupt_batch(originals, corruption, stream)
            batch = collate(corrupted.records, model.config.dims, dtype=model.config.torch_dtype)
            clean_batch = None
            if cfg.contrastive_inputs == "clean" and mode in ("hybrid", "contrastive"):
                clean_batch = collate(originals, model.config.dims, dtype=model.config.torch_dtype)
            matching_loss, contrastive_loss, _ = _phase_losses(
                model, corrupted, batch, mode, clean_batch
            )
            total += float(matching_loss + contrastive_loss)
            n_batches += 1
    return total / max(n_batches, 1)


def run_pretraining(
    model: HiccapModel,
    train_clips: Sequence[ClipRecord],
    val_clips: Sequence[ClipRecord],
    cfg: PretrainConfig,
) -> PretrainResult:
    """Epoch loop; the best checkpoint is the lowest validation loss."""
    if len(model.config.modalities) != 3:
        raise SchemaMismatchError("pretraining needs all three modalities")
    optimizer = build_optimizer(model, cfg.optimizer)
    batch_size = cfg.optimizer.batch_size
    history = []
    best_state = copy.deepcopy(model.state_dict())
    best_val = float("inf")
    best_epoch = -1

    for epoch in range(cfg.epochs):
        mode = _epoch_mode(cfg, epoch)
        corruption = _mode_corruption(cfg, mode)
        model.train()
        order = rng_mod.numpy_rng(cfg.seed, "shuffle", epoch).permutation(len(train_clips))
        epoch_loss = 0.0
        skips = 0
        n_batches = 0
        for bi, idx in enumerate(_batches(len(train_clips), batch_size, order)):
            originals = [train_clips[i] for i in idx]
            stream = rng_mod.philox(cfg.seed, "corrupt", epoch, bi)
            corrupted = corrupt_batch(originals, corruption, stream)
            result = pretrain_step(
                model, corrupted, optimizer, mode,
                originals=originals if cfg.contrastive_inputs == "clean" else None,
            )
            epoch_loss += result.total
            skips += int(result.contrastive_skipped)
            n_batches += 1
        val_loss = (
            evaluate_pretrain_loss(model, val_clips, cfg, epoch, batch_size) if val_clips else 0.0
        )
        history.append(
            EpochRecord(
                epoch=epoch,
                train_loss=epoch_loss / max(n_batches, 1),
                val_loss=val_loss,
                contrastive_skips=skips,
            )
        )
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())

    return PretrainResult(
        history=history, best_epoch=best_epoch, best_val_loss=best_val, best_state=best_state
    )
