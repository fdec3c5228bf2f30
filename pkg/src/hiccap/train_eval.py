"""Fine-tuning loop, evaluation, masking probes, and checkpoint IO.

Checkpoint container, little-endian: magic "HCKP" | u32 version=1 |
u32 tensor count | per tensor (u32 name length, UTF-8 name, u32 rank,
u32 dims..., float32 payload) | u32 metadata length | metadata JSON.
Model parameters, batch-norm running statistics, and optimizer moment
tensors all travel as named float32 tensors; integer state (steps,
epoch, learning rates) and the model config ride in the metadata.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
import torch

from . import rng as rng_mod
from .data_model import CATEGORIES, ClipRecord
from .errors import (
    AllMaskedError,
    EmptyPartitionError,
    NoLabelsError,
    NonFiniteLossError,
    SchemaMismatchError,
)
from .heads_losses import cross_entropy_loss
from .metrics import AgreementStats, average_precision, confusion_counts, f1
from .model import ClipBatch, HiccapModel, ModelConfig, build_model, collate

CHECKPOINT_MAGIC = b"HCKP"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class OptimizerConfig:
    """Decoupled-weight-decay adaptive moments plus a plateau scheduler."""

    initial_lr: float = 1e-4
    weight_decay: float = 0.02
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    plateau_factor: float = 0.5
    plateau_patience: int = 2
    min_lr: float = 1e-8
    batch_size: int = 16
    epochs: int = 30

    def __post_init__(self):
        if self.initial_lr <= 0:
            raise SchemaMismatchError("learning rate must be > 0")
        if not 0.0 < self.plateau_factor < 1.0:
            raise SchemaMismatchError("plateau factor must lie in (0, 1)")


def build_optimizer(model: torch.nn.Module, cfg: OptimizerConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        model.parameters(),
        lr=cfg.initial_lr,
        betas=cfg.betas,
        eps=cfg.eps,
        weight_decay=cfg.weight_decay,
    )


def build_scheduler(optimizer, cfg: OptimizerConfig):
    return torch.optim.lr_scheduler.ReduceLROnPlateau(
        optimizer, mode="min", factor=cfg.plateau_factor,
        patience=cfg.plateau_patience, min_lr=cfg.min_lr,
    )


# ---------------------------------------------------------------------------
# metrics report
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    task: str
    n_clips: int
    f1_per_class: Mapping[str, float]
    macro_f1: Optional[float]
    average_precision: Mapping[str, float]
    confusion: Mapping[str, tuple]  # name -> (tp, fp, fn, tn)
    accuracy: Mapping[str, float]
    mean_accuracy: float
    masked: tuple = ()
    agreement: Optional[AgreementStats] = None

    def to_json(self) -> dict:
        out = {
            "task": self.task,
            "n_clips": self.n_clips,
            "f1_per_class": dict(self.f1_per_class),
            "macro_f1": self.macro_f1,
            "average_precision": dict(self.average_precision),
            "confusion": {k: list(v) for k, v in self.confusion.items()},
            "accuracy": dict(self.accuracy),
            "mean_accuracy": self.mean_accuracy,
            "masked": list(self.masked),
        }
        if self.agreement is not None:
            out["agreement"] = {
                "p_observed": self.agreement.p_observed,
                "p_expected": self.agreement.p_expected,
                "kappa": self.agreement.kappa,
            }
        return out


def _binary_report(preds, golds, scores, n, masked=()) -> MetricsReport:
    score = f1(preds, golds, positive_class=1)
    conf = confusion_counts(preds, golds, positive_class=1)
    acc = float(np.mean(np.asarray(preds) == np.asarray(golds)))
    ap = average_precision(scores, golds)
    return MetricsReport(
        task="binary",
        n_clips=n,
        f1_per_class={"positive": score},
        macro_f1=None,
        average_precision={"positive": ap},
        confusion={"positive": conf},
        accuracy={"binary": acc},
        mean_accuracy=acc,
        masked=tuple(masked),
    )


def _multitask_report(preds, golds, scores, n, masked=()) -> MetricsReport:
    f1s, aps, confs, accs = {}, {}, {}, {}
    for ci, cat in enumerate(CATEGORIES):
        p = [row[ci] for row in preds]
        g = [row[ci] for row in golds]
        s = [row[ci] for row in scores]
        f1s[cat] = f1(p, g, positive_class=1)
        aps[cat] = average_precision(s, g)
        confs[cat] = confusion_counts(p, g, positive_class=1)
        accs[cat] = float(np.mean(np.asarray(p) == np.asarray(g)))
    macro = float(np.mean(list(f1s.values())))
    return MetricsReport(
        task="multitask",
        n_clips=n,
        f1_per_class=f1s,
        macro_f1=macro,
        average_precision=aps,
        confusion=confs,
        accuracy=accs,
        mean_accuracy=float(np.mean(list(accs.values()))),
        masked=tuple(masked),
    )


def predict_batches(
    model: HiccapModel,
    clips: Sequence[ClipRecord],
    task: str,
    batch_size: int = 64,
    masked: Sequence[str] = (),
):
    """Eval-mode probabilities for every clip, in clip order."""
    model.eval()
    outputs = []
    with torch.no_grad():
        for start in range(0, len(clips), batch_size):
            chunk = clips[start : start + batch_size]
            batch = collate(
                chunk, model.config.dims, dtype=model.config.torch_dtype, masked_modalities=masked
            )
            outputs.append(model.predict_probabilities(batch, task))
    return torch.cat(outputs, dim=0)


def evaluate(
    model: HiccapModel,
    clips: Sequence[ClipRecord],
    task: str,
    batch_size: int = 64,
    masked: Sequence[str] = (),
) -> MetricsReport:
    """Argmax-thresholded metrics over a labeled partition."""
    if not clips:
        raise EmptyPartitionError("cannot evaluate an empty partition")
    if any(c.labels is None for c in clips):
        raise NoLabelsError("evaluation needs labels on every clip")
    probs = predict_batches(model, clips, task, batch_size, masked)
    if task == "binary":
        golds = [c.labels.binary for c in clips]
        preds = probs.argmax(dim=-1).tolist()
        scores = probs[:, 1].tolist()
        return _binary_report(preds, golds, scores, len(clips), masked)
    golds = [list(c.labels.categories) for c in clips]
    preds = probs.argmax(dim=-1).tolist()  # (B, 4)
    scores = probs[:, :, 1].tolist()
    return _multitask_report(preds, golds, scores, len(clips), masked)


def mask_probe(model: HiccapModel, clips: Sequence[ClipRecord], masked, task: str = "multitask") -> MetricsReport:
    """Re-evaluate with some modalities silenced to a single zero timestep."""
    masked = tuple(sorted(set(masked)))
    if not masked:
        raise AllMaskedError("mask set must name at least one modality")
    if any(m not in ("text", "audio", "video") for m in masked):
        raise SchemaMismatchError(f"unknown modalities in mask {masked}")
    if len(masked) >= 3:
        raise AllMaskedError("masking every modality leaves nothing to evaluate")
    return evaluate(model, clips, task, masked=masked)


# ---------------------------------------------------------------------------
# fine-tuning
# ---------------------------------------------------------------------------


@dataclass
class FinetuneEpoch:
    epoch: int
    train_loss: float
    val_loss: float
    val_metric: float
    lr: float


@dataclass
class FinetuneResult:
    history: list
    best_epoch: int
    best_metric: float
    best_state: dict


def _task_losses(model: HiccapModel, batch: ClipBatch, task: str) -> torch.Tensor:
    if task == "binary":
        return cross_entropy_loss(model.binary_logits(batch), batch.binary)
    logits = model.task_logits(batch)
    per_task = [cross_entropy_loss(logits[:, ci], batch.labels[:, ci]) for ci in range(len(CATEGORIES))]
    return model.task_weights(per_task)


def validation_loss(model: HiccapModel, clips, task: str, batch_size: int) -> float:
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(clips), batch_size):
            batch = collate(
                clips[start : start + batch_size], model.config.dims, dtype=model.config.torch_dtype
            )
            total += float(_task_losses(model, batch, task))
            count += 1
    return total / max(count, 1)


def finetune(
    model: HiccapModel,
    train_clips: Sequence[ClipRecord],
    val_clips: Sequence[ClipRecord],
    task: str,
    cfg: OptimizerConfig,
    seed: int = 0,
    select_metric: str = "accuracy",  # or "macro_f1"
    max_steps: Optional[int] = None,
) -> FinetuneResult:
    """Supervised training with plateau scheduling on validation loss.

    The returned best state maximizes the selection metric on the
    validation partition (mean accuracy across tasks by default).
    """
    if task not in ("binary", "multitask"):
        raise ValueError(f"unknown task {task!r}")
    if not train_clips or not val_clips:
        raise EmptyPartitionError("fine-tuning needs non-empty train and val partitions")
    if any(c.labels is None for c in train_clips + list(val_clips)):
        raise NoLabelsError("fine-tuning needs labels on every clip")

    optimizer = build_optimizer(model, cfg)
    scheduler = build_scheduler(optimizer, cfg)
    history = []
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    best_metric = -float("inf")
    best_epoch = -1
    steps = 0

    for epoch in range(cfg.epochs):
        model.train()
        order = rng_mod.numpy_rng(seed, "shuffle", epoch).permutation(len(train_clips))
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            if max_steps is not None and steps >= max_steps:
                break
            idx = order[start : start + cfg.batch_size]
            batch = collate(
                [train_clips[i] for i in idx], model.config.dims, dtype=model.config.torch_dtype
            )
            loss = _task_losses(model, batch, task)
            if not torch.isfinite(loss):
                raise NonFiniteLossError(f"training loss became non-finite at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach())
            n_batches += 1
            steps += 1

        val_loss = validation_loss(model, val_clips, task, cfg.batch_size)
        report = evaluate(model, val_clips, task, batch_size=max(cfg.batch_size, 64))
        metric = report.mean_accuracy if select_metric == "accuracy" else (
            report.macro_f1 if report.macro_f1 is not None else report.f1_per_class["positive"]
        )
        scheduler.step(val_loss)
        history.append(
            FinetuneEpoch(
                epoch=epoch,
                train_loss=epoch_loss / max(n_batches, 1),
                val_loss=val_loss,
                val_metric=metric,
                lr=optimizer.param_groups[0]["lr"],
            )
        )
        if metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        if max_steps is not None and steps >= max_steps:
            break

    return FinetuneResult(
        history=history, best_epoch=best_epoch, best_metric=best_metric, best_state=best_state
    )


# ---------------------------------------------------------------------------
# checkpoint IO
# ---------------------------------------------------------------------------


def _write_tensor(fh, name: str, tensor: torch.Tensor) -> None:
    data = tensor.detach().to(torch.float32).cpu().numpy().astype("<f4")
    name_b = name.encode("utf-8")
    fh.write(struct.pack("<I", len(name_b)))
    fh.write(name_b)
    fh.write(struct.pack("<I", data.ndim))
    fh.write(struct.pack(f"<{data.ndim}I", *data.shape) if data.ndim else b"")
    fh.write(np.ascontiguousarray(data).tobytes())


def _read_tensor(buf, offset: int):
    (name_len,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    name = buf[offset : offset + name_len].decode("utf-8")
    offset += name_len
    (rank,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    dims = struct.unpack_from(f"<{rank}I", buf, offset) if rank else ()
    offset += 4 * rank
    count = int(np.prod(dims)) if dims else 1
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=offset).reshape(dims)
    offset += 4 * count
    return name, data, offset


def save_checkpoint(
    path,
    model: HiccapModel,
    optimizer: Optional[torch.optim.Optimizer] = None,
    epoch: int = 0,
    metrics: Optional[Mapping] = None,
) -> None:
    if model.config.torch_dtype != torch.float32:
        raise SchemaMismatchError("checkpoints store float32 payloads; model must be float32")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    tensors = [(f"model/{name}", value) for name, value in model.state_dict().items()]
    meta: dict = {
        "epoch": int(epoch),
        "metrics": dict(metrics or {}),
        "model_config": model.config.to_json(),
        "config_hash": config_hash(model.config),
        "optimizer": None,
    }
    if optimizer is not None:
        name_of = {id(p): n for n, p in model.named_parameters()}
        steps, lrs = {}, [g["lr"] for g in optimizer.param_groups]
        for group in optimizer.param_groups:
            for p in group["params"]:
                state = optimizer.state.get(p)
                if not state:
                    continue
                pname = name_of[id(p)]
                tensors.append((f"optim/exp_avg/{pname}", state["exp_avg"]))
                tensors.append((f"optim/exp_avg_sq/{pname}", state["exp_avg_sq"]))
                steps[pname] = float(state["step"])
        meta["optimizer"] = {"steps": steps, "lrs": lrs}

    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(tensors)))
        for name, tensor in tensors:
            _write_tensor(fh, name, tensor)
        meta_b = json.dumps(meta, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(meta_b)))
        fh.write(meta_b)


def read_checkpoint(path):
    """Raw tensors and metadata from a checkpoint container."""
    buf = Path(path).read_bytes()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise SchemaMismatchError(f"{path}: bad checkpoint magic {buf[:4]!r}")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise SchemaMismatchError(f"{path}: unsupported checkpoint version {version}")
    (count,) = struct.unpack_from("<I", buf, 8)
    offset = 12
    tensors = {}
    for _ in range(count):
        name, data, offset = _read_tensor(buf, offset)
        tensors[name] = data
    (meta_len,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    meta = json.loads(buf[offset : offset + meta_len].decode("utf-8"))
    return tensors, meta


def load_checkpoint(path, model: Optional[HiccapModel] = None):
    """Rebuild (or refresh) a model from a checkpoint; returns (model, meta)."""
    tensors, meta = read_checkpoint(path)
    if model is None:
        model = build_model(ModelConfig.from_json(meta["model_config"]))
    state = {}
    for name, data in tensors.items():
        if name.startswith("model/"):
            state[name[len("model/") :]] = torch.from_numpy(data.copy())
    model.load_state_dict(state)
    return model, meta


def load_optimizer_state(path, model: HiccapModel, optimizer: torch.optim.Optimizer) -> None:
    tensors, meta = read_checkpoint(path)
    opt_meta = meta.get("optimizer")
    if not opt_meta:
        return
    params = dict(model.named_parameters())
    for pname, step in opt_meta["steps"].items():
        p = params[pname]
        optimizer.state[p] = {
            "step": torch.tensor(float(step)),
            "exp_avg": torch.from_numpy(tensors[f"optim/exp_avg/{pname}"].copy()),
            "exp_avg_sq": torch.from_numpy(tensors[f"optim/exp_avg_sq/{pname}"].copy()),
        }
    for group, lr in zip(optimizer.param_groups, opt_meta["lrs"]):
        group["lr"] = lr


def config_hash(config: ModelConfig) -> str:
    import hashlib

    blob = json.dumps(config.to_json(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]
