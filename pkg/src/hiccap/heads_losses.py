"""Classification heads, matching heads, contrastive projections, losses.

Every learnable loss weight (the four task weights, the three matching
weights, the three contrastive pair weights) is kept as a raw parameter
passed through softplus, so effective weights stay positive no matter
where the optimizer drives the raw values.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import torch
from torch import nn
import torch.nn.functional as F

from .errors import ShapeMismatchError, ZeroVectorError

# softplus(RAW_UNIT_WEIGHT) == 1, so effective weights start at 1
RAW_UNIT_WEIGHT = math.log(math.e - 1.0)


class RunningBatchNorm(nn.Module):
    """Feature-wise batch normalization with explicit running statistics.

    Train mode normalizes with the biased batch statistics and updates the
    running buffers; eval mode, and train mode on singleton batches
    (degenerate variance), use the running statistics. Setting
    ``update_running`` to False makes train-mode forwards side-effect free,
    which finite-difference checks rely on.
    """

    def __init__(self, num_features: int, momentum: float = 0.1, eps: float = 1e-5, dtype=torch.float32):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.update_running = True
        self.weight = nn.Parameter(torch.ones(num_features, dtype=dtype))
        self.bias = nn.Parameter(torch.zeros(num_features, dtype=dtype))
        self.register_buffer("running_mean", torch.zeros(num_features, dtype=dtype))
        self.register_buffer("running_var", torch.ones(num_features, dtype=dtype))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 2 or x.shape[1] != self.weight.shape[0]:
            raise ShapeMismatchError(f"expected (B, {self.weight.shape[0]}), got {tuple(x.shape)}")
        if self.training and x.shape[0] > 1:
            mean = x.mean(dim=0)
            var = x.var(dim=0, unbiased=False)
            if self.update_running:
                with torch.no_grad():
                    self.running_mean.mul_(1 - self.momentum).add_(self.momentum * mean)
                    self.running_var.mul_(1 - self.momentum).add_(self.momentum * var)
        else:
            mean = self.running_mean
            var = self.running_var
        x_hat = (x - mean) / torch.sqrt(var + self.eps)
        return self.weight * x_hat + self.bias


class MlpBlock(nn.Module):
    """Three affine layers: affine-BN-ReLU twice, then a bare affine."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        hidden: Optional[Sequence[int]] = None,
        dtype=torch.float32,
    ):
        super().__init__()
        if out_dim < 1:
            raise ShapeMismatchError("output width must be >= 1")
        h1, h2 = hidden or (max(in_dim // 2, 1), max(in_dim // 4, 1))
        self.fc1 = nn.Linear(in_dim, h1, dtype=dtype)
        self.bn1 = RunningBatchNorm(h1, dtype=dtype)
        self.fc2 = nn.Linear(h1, h2, dtype=dtype)
        self.bn2 = RunningBatchNorm(h2, dtype=dtype)
        self.fc3 = nn.Linear(h2, out_dim, dtype=dtype)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 2 or x.shape[1] != self.fc1.in_features:
            raise ShapeMismatchError(f"expected (B, {self.fc1.in_features}), got {tuple(x.shape)}")
        x = F.relu(self.bn1(self.fc1(x)))
        x = F.relu(self.bn2(self.fc2(x)))
        return self.fc3(x)


def mlp_block(x: torch.Tensor, params: MlpBlock, mode: str = "eval") -> torch.Tensor:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    was_training = params.training
    params.train(mode == "train")
    try:
        return params(x)
    finally:
        params.train(was_training)


def class_probabilities(logits: torch.Tensor) -> torch.Tensor:
    return torch.softmax(logits, dim=-1)


def binary_forward(r_text, r_audio, r_video, head: MlpBlock) -> torch.Tensor:
    """Concatenated representations through one head; returns (B, 2) probs."""
    logits = head(torch.cat([r_text, r_audio, r_video], dim=-1))
    return class_probabilities(logits)


def multitask_forward(r_text, r_audio, r_video, heads: Sequence[MlpBlock]) -> torch.Tensor:
    """Independent heads over the same concatenation; returns (B, n_tasks, 2)."""
    joint = torch.cat([r_text, r_audio, r_video], dim=-1)
    return torch.stack([class_probabilities(h(joint)) for h in heads], dim=1)


def matching_forward(r_a: torch.Tensor, r_b: torch.Tensor, head: MlpBlock) -> torch.Tensor:
    """Pair representations through a matching head; class 1 means matched."""
    logits = head(torch.cat([r_a, r_b], dim=-1))
    return class_probabilities(logits)


def task_loss(probs: torch.Tensor, gold) -> torch.Tensor:
    """Negative log probability of the gold class; batched inputs average."""
    probs = torch.as_tensor(probs)
    if probs.dim() == 1:
        return -torch.log(probs[int(gold)])
    gold = torch.as_tensor(gold, dtype=torch.long)
    picked = probs.gather(1, gold.view(-1, 1)).squeeze(1)
    return -torch.log(picked).mean()


def cross_entropy_loss(logits: torch.Tensor, golds: torch.Tensor) -> torch.Tensor:
    """Mean -log softmax(logits)[gold], computed in log space."""
    return F.cross_entropy(logits, golds.long())


class PositiveWeights(nn.Module):
    """Softplus-parameterized positive weights, one per named objective."""

    def __init__(self, names: Sequence[str], dtype=torch.float32):
        super().__init__()
        self.names = tuple(names)
        self.raw = nn.Parameter(torch.full((len(self.names),), RAW_UNIT_WEIGHT, dtype=dtype))

    def weights(self) -> torch.Tensor:
        return F.softplus(self.raw)

    def forward(self, losses: Sequence[torch.Tensor]) -> torch.Tensor:
        if len(losses) != len(self.names):
            raise ShapeMismatchError(f"expected {len(self.names)} losses, got {len(losses)}")
        stacked = torch.stack(list(losses))
        return (self.weights() * stacked).sum()


def multitask_total(losses: Sequence[torch.Tensor], state: PositiveWeights) -> torch.Tensor:
    return state(losses)


def matching_total(losses: Sequence[torch.Tensor], state: PositiveWeights) -> torch.Tensor:
    return state(losses)


class PairProjection(nn.Module):
    """Projection stack into one shared cross-modal space, unit-norm rows."""

    def __init__(self, in_dim: int, out_dim: int, dtype=torch.float32):
        super().__init__()
        self.stack = MlpBlock(in_dim, out_dim, hidden=(in_dim, in_dim), dtype=dtype)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        projected = self.stack(z)
        norms = projected.norm(dim=-1, keepdim=True)
        if (norms < 1e-12).any():
            raise ZeroVectorError("projection produced a zero row; cannot normalize")
        return projected / norms


def project_pair(z: torch.Tensor, stack: PairProjection) -> torch.Tensor:
    return stack(z)


def nce_loss(u: torch.Tensor, u_prime: torch.Tensor, tau: float) -> torch.Tensor:
    """Batch-pooled noise-contrastive loss over unit-norm rows.

    -log of the summed positive-pair exponentials over the sum including
    every cross-sample pairing: one log over pooled sums, not a
    per-sample mean. Non-negative; exactly zero for a single-row batch.
    """
    if u.shape != u_prime.shape:
        raise ShapeMismatchError(f"row sets differ in shape: {tuple(u.shape)} vs {tuple(u_prime.shape)}")
    if tau <= 0:
        raise ValueError("temperature must be > 0")
    sims = (u @ u_prime.T) / tau  # (N, N)
    numerator = torch.logsumexp(torch.diagonal(sims), dim=0)
    denominator = torch.logsumexp(sims.reshape(-1), dim=0)
    return denominator - numerator


class ContrastiveHead(nn.Module):
    """Pairwise projection stacks with learnable pair weights."""

    PAIRS = ("av", "at", "vt")

    def __init__(self, d_model: int, proj_dim: Optional[int] = None, tau: float = 0.07, dtype=torch.float32):
        super().__init__()
        self.tau = tau
        proj_dim = proj_dim or d_model
        self.projections = nn.ModuleDict(
            {pair: PairProjection(d_model, proj_dim, dtype=dtype) for pair in self.PAIRS}
        )
        self.pair_weights = PositiveWeights(self.PAIRS, dtype=dtype)

    def pair_loss(self, pair: str, z_first: torch.Tensor, z_second: torch.Tensor) -> torch.Tensor:
        proj = self.projections[pair]
        return nce_loss(proj(z_first), proj(z_second), self.tau)

    def forward(self, z_audio: torch.Tensor, z_video: torch.Tensor, z_text: torch.Tensor):
        losses = [
            self.pair_loss("av", z_audio, z_video),
            self.pair_loss("at", z_audio, z_text),
            self.pair_loss("vt", z_video, z_text),
        ]
        total = self.pair_weights(losses)
        return total, {pair: loss for pair, loss in zip(self.PAIRS, losses)}


def contrastive_total(z_audio, z_video, z_text, state: ContrastiveHead) -> torch.Tensor:
    total, _ = state(z_audio, z_video, z_text)
    return total
