"""Feature encoders behind small pluggable interfaces.

The lightweight defaults are deterministic signal-processing encoders
that run anywhere and emit the conventional widths (text 768, audio 128,
video 1024). The heavyweight pretrained wrappers register under their
own names and raise EncoderUnavailable when their dependencies or
weights are missing; reimplementing those networks is out of scope.

Conventions: audio frames cover 0.96 s hops (so a 60 s clip yields 62
frames); video segments cover 16 source frames; text yields one row per
subtitle cue or generated caption.
"""

from __future__ import annotations

import hashlib
import re
from typing import Callable, Iterable, Sequence

import numpy as np


class EncoderUnavailable(Exception):
    pass


# ---------------------------------------------------------------------------
# text
# ---------------------------------------------------------------------------


class HashedTextEncoder:
    """Feature-hashed bag of words, one row per text snippet."""

    name = "hashed-bow"
    dim = 768

    def encode(self, snippets: Sequence[str]) -> np.ndarray:
        rows = np.zeros((max(len(snippets), 1), self.dim), dtype=np.float32)
        for i, snippet in enumerate(snippets):
            tokens = re.findall(r"[a-z0-9']+", snippet.lower())
            for token in tokens:
                digest = hashlib.sha256(token.encode("utf-8")).digest()
                slot = int.from_bytes(digest[:4], "little") % self.dim
                sign = 1.0 if digest[4] % 2 == 0 else -1.0
                rows[i, slot] += sign
            if tokens:
                rows[i] /= float(len(tokens))
        return rows


# ---------------------------------------------------------------------------
# audio
# ---------------------------------------------------------------------------


class FilterbankAudioEncoder:
    """Log filterbank energies over 0.96 s frames."""

    name = "log-filterbank"
    dim = 128
    frame_seconds = 0.96

    def encode(self, waveform: np.ndarray, rate: int) -> np.ndarray:
        frame_len = max(int(self.frame_seconds * rate), 1)
        n_frames = max(len(waveform) // frame_len, 1)
        rows = np.zeros((n_frames, self.dim), dtype=np.float32)
        # log-spaced triangular bands over the frame spectrum
        for f in range(n_frames):
            chunk = waveform[f * frame_len : (f + 1) * frame_len]
            if len(chunk) == 0:
                chunk = np.zeros(frame_len, dtype=np.float32)
            spectrum = np.abs(np.fft.rfft(chunk))
            edges = np.unique(
                np.geomspace(1, len(spectrum), num=self.dim + 1).astype(int)
            )
            bands = np.zeros(self.dim, dtype=np.float64)
            for b in range(min(self.dim, len(edges) - 1)):
                lo, hi = edges[b], max(edges[b + 1], edges[b] + 1)
                bands[b] = spectrum[lo:hi].mean() if hi <= len(spectrum) else 0.0
            rows[f] = np.log(bands + 1e-6).astype(np.float32)
        return rows


# ---------------------------------------------------------------------------
# video
# ---------------------------------------------------------------------------


class GridStatsVideoEncoder:
    """Spatial grid statistics per 16-frame segment, projected to 1024."""

    name = "grid-stats"
    dim = 1024
    frames_per_segment = 16
    grid = 4

    def __init__(self):
        rng = np.random.default_rng(20240601)  # fixed basis, part of the encoder
        raw_dim = self.grid * self.grid * 3 * 2 + 2  # mean+std per cell, motion, brightness
        self._basis = rng.normal(size=(raw_dim, self.dim)).astype(np.float32) / np.sqrt(raw_dim)

    def _segment_stats(self, frames: Sequence[np.ndarray]) -> np.ndarray:
        stack = np.stack(frames)  # (F, H, W, 3)
        h_edges = np.linspace(0, stack.shape[1], self.grid + 1).astype(int)
        w_edges = np.linspace(0, stack.shape[2], self.grid + 1).astype(int)
        stats = []
        for gi in range(self.grid):
            for gj in range(self.grid):
                cell = stack[:, h_edges[gi]:h_edges[gi + 1], w_edges[gj]:w_edges[gj + 1], :]
                stats.extend(cell.mean(axis=(0, 1, 2)))
                stats.extend(cell.std(axis=(0, 1, 2)))
        motion = float(np.abs(np.diff(stack.mean(axis=(1, 2, 3)))).mean()) if len(frames) > 1 else 0.0
        brightness = float(stack.mean())
        stats.extend([motion, brightness])
        return np.asarray(stats, dtype=np.float32)

    def encode(self, frames: Iterable[np.ndarray]) -> np.ndarray:
        frames = list(frames)
        if not frames:
            return np.zeros((1, self.dim), dtype=np.float32)
        rows = []
        for start in range(0, len(frames), self.frames_per_segment):
            segment = frames[start : start + self.frames_per_segment]
            rows.append(self._segment_stats(segment) @ self._basis)
        return np.stack(rows).astype(np.float32)


# ---------------------------------------------------------------------------
# captioning
# ---------------------------------------------------------------------------


class StubCaptioner:
    """Deterministic template caption from coarse visual statistics.

    Stands in for a dense-captioning transformer; the interface (frames
    in, caption out) is everything extraction relies on.
    """

    name = "stub"

    def caption(self, frames: Sequence[np.ndarray]) -> str:
        if not frames:
            return "an empty scene"
        stack = np.stack([f.mean(axis=(0, 1)) for f in frames])  # (F, 3)
        brightness = float(stack.mean())
        motion = float(np.abs(np.diff(stack.mean(axis=1))).mean()) if len(frames) > 1 else 0.0
        tone = "bright" if brightness > 0.55 else "dim" if brightness > 0.25 else "dark"
        pace = "rapid" if motion > 0.05 else "steady" if motion > 0.005 else "still"
        dominant = "red green blue".split()[int(np.argmax(stack.mean(axis=0)))]
        return f"a {tone} {dominant} scene with {pace} motion"


def load_pretrained_captioner(name: str) -> Callable:
    """Wrap a heavyweight captioner if its package and weights exist."""
    raise EncoderUnavailable(
        f"pretrained captioner {name!r} is not installed; use the stub or plug a callable"
    )


DEFAULT_ENCODERS = {
    "text": HashedTextEncoder,
    "audio": FilterbankAudioEncoder,
    "video": GridStatsVideoEncoder,
}
