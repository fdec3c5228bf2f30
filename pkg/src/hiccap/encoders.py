"""Per-modality encoders mapping raw feature sequences to a common width.

Audio and video go through a gated recurrent (LSTM) stage emitting the
full hidden-state sequence, then a linear map to ``d_model``; text gets a
per-timestep affine projection of its contextual embeddings. Output
length always equals input length.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from .data_model import FeatureSequence, Modality
from .errors import EmptySequenceError, WrongModalityError


@dataclass(frozen=True)
class EncoderConfig:
    d_model: int = 256
    recurrent_hidden: Optional[int] = None  # defaults to d_model
    recurrent_layers: int = 1
    bidirectional: bool = False

    def __post_init__(self):
        hidden = self.recurrent_hidden or self.d_model
        if self.d_model < 1 or hidden < 1 or self.recurrent_layers < 1:
            raise ValueError("encoder widths and layer counts must be >= 1")
        object.__setattr__(self, "recurrent_hidden", hidden)


@dataclass(frozen=True)
class EncodedSequence:
    modality: Modality
    data: torch.Tensor  # (T, d_model)

    @property
    def length(self) -> int:
        return int(self.data.shape[0])


def init_uniform_by_fan_in(module: nn.Module, generator: torch.Generator) -> None:
    """Seeded U(-1/sqrt(fan_in), 1/sqrt(fan_in)) over every parameter.

    Biases reuse the bound of the weight they pair with; LSTM recurrent
    weights use the hidden width as fan-in.
    """
    with torch.no_grad():
        for name, param in sorted(module.named_parameters(), key=lambda kv: kv[0]):
            if param.dim() >= 2:
                fan_in = param.shape[-1]
            else:
                owner = module
                for part in name.split(".")[:-1]:
                    owner = getattr(owner, part)
                if isinstance(owner, nn.LSTM):
                    fan_in = owner.hidden_size
                elif isinstance(owner, nn.Linear):
                    fan_in = owner.in_features
                else:
                    fan_in = param.shape[0]
            bound = 1.0 / float(fan_in) ** 0.5
            param.uniform_(-bound, bound, generator=generator)


class _SeqEncoder(nn.Module):
    """Shared surface: batched forward plus single-sequence encode()."""

    expected_modality: Modality

    def encode(self, seq: FeatureSequence) -> EncodedSequence:
        if seq.modality != self.expected_modality:
            raise WrongModalityError(
                f"expected {self.expected_modality.key}, got {seq.modality.key}"
            )
        if seq.length < 1:
            raise EmptySequenceError("cannot encode an empty sequence")
        dtype = next(self.parameters()).dtype
        x = torch.from_numpy(seq.data.copy()).to(dtype).unsqueeze(0)
        out = self.forward(x)
        return EncodedSequence(seq.modality, out.squeeze(0))


class RecurrentEncoder(_SeqEncoder):
    """LSTM over raw features, then a linear map to the model width."""

    def __init__(self, modality: Modality, in_dim: int, cfg: EncoderConfig, dtype=torch.float32):
        super().__init__()
        self.expected_modality = modality
        self.lstm = nn.LSTM(
            in_dim,
            cfg.recurrent_hidden,
            num_layers=cfg.recurrent_layers,
            batch_first=True,
            bidirectional=cfg.bidirectional,
            dtype=dtype,
        )
        out_width = cfg.recurrent_hidden * (2 if cfg.bidirectional else 1)
        self.proj = nn.Linear(out_width, cfg.d_model, dtype=dtype)
        self.bidirectional = cfg.bidirectional

    def forward(self, x: torch.Tensor, lengths: Optional[torch.Tensor] = None) -> torch.Tensor:
        """(B, T, in_dim) -> (B, T, d_model).

        With padding, unidirectional outputs at valid positions are
        untouched by the tail; bidirectional runs require lengths so the
        reverse pass never reads padding.
        """
        if self.bidirectional and lengths is not None:
            packed = nn.utils.rnn.pack_padded_sequence(
                x, lengths.cpu(), batch_first=True, enforce_sorted=False
            )
            states, _ = self.lstm(packed)
            states, _ = nn.utils.rnn.pad_packed_sequence(
                states, batch_first=True, total_length=x.shape[1]
            )
        else:
            states, _ = self.lstm(x)
        return self.proj(states)


class TextProjection(_SeqEncoder):
    """Row-wise affine map of contextual token embeddings."""

    expected_modality = Modality.TEXT

    def __init__(self, in_dim: int, cfg: EncoderConfig, dtype=torch.float32):
        super().__init__()
        self.proj = nn.Linear(in_dim, cfg.d_model, dtype=dtype)

    def forward(self, x: torch.Tensor, lengths: Optional[torch.Tensor] = None) -> torch.Tensor:
        return self.proj(x)


def build_encoder(modality: Modality, in_dim: int, cfg: EncoderConfig, dtype=torch.float32):
    if modality == Modality.TEXT:
        return TextProjection(in_dim, cfg, dtype=dtype)
    return RecurrentEncoder(modality, in_dim, cfg, dtype=dtype)


def encode_audio(seq: FeatureSequence, encoder: RecurrentEncoder) -> EncodedSequence:
    if encoder.expected_modality != Modality.AUDIO:
        raise WrongModalityError("encoder is not the audio encoder")
    return encoder.encode(seq)


def encode_video(seq: FeatureSequence, encoder: RecurrentEncoder) -> EncodedSequence:
    if encoder.expected_modality != Modality.VIDEO:
        raise WrongModalityError("encoder is not the video encoder")
    return encoder.encode(seq)


def encode_text(seq: FeatureSequence, encoder: TextProjection) -> EncodedSequence:
    return encoder.encode(seq)
