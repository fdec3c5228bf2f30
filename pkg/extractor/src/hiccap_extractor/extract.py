"""Clip segmentation and feature extraction into the HCMF format.

A job covers one source video (plus optional WAV audio track and SRT
subtitles) cut into fixed-length clips. Text for each clip comes from
subtitles when present, otherwise from the captioner when enabled,
otherwise the clip ships without text and the manifest records that.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import media, subtitles
from .encoders import DEFAULT_ENCODERS, StubCaptioner
from .formats import write_feature_file, write_manifest


class DimDrift(Exception):
    pass


@dataclass
class ExtractionJob:
    media_path: Path
    out_dir: Path
    audio_path: Optional[Path] = None
    subtitle_path: Optional[Path] = None
    clip_seconds: float = 60.0
    min_tail_seconds: float = 1.0
    captioner: Optional[object] = field(default_factory=StubCaptioner)
    encoders: dict = field(default_factory=lambda: {k: cls() for k, cls in DEFAULT_ENCODERS.items()})
    video_id: Optional[str] = None

    def __post_init__(self):
        self.media_path = Path(self.media_path)
        self.out_dir = Path(self.out_dir)
        if self.video_id is None:
            self.video_id = self.media_path.stem

    def clip_windows(self) -> list:
        """Non-overlapping [start, end) windows covering the source."""
        info = media.probe_video(self.media_path)
        duration = info.duration
        windows = []
        n_full = int(duration // self.clip_seconds)
        for i in range(n_full):
            windows.append((i * self.clip_seconds, (i + 1) * self.clip_seconds))
        tail = duration - n_full * self.clip_seconds
        if tail >= self.min_tail_seconds:
            windows.append((n_full * self.clip_seconds, duration))
        return windows


def extract_clip(job: ExtractionJob, clip_index: int) -> dict:
    """Write the three feature files for one clip; returns its manifest entry."""
    windows = job.clip_windows()
    start, end = windows[clip_index]
    clip_id = f"{job.video_id}_{clip_index:04d}"

    frames = list(media.read_frames(job.media_path, start, end))
    if not frames:
        raise media.DecodeError(f"{job.media_path}: no frames in window [{start}, {end})")

    video_feats = job.encoders["video"].encode(frames)

    if job.audio_path is not None:
        waveform, rate = media.read_wav(job.audio_path)
        chunk = media.audio_window(waveform, rate, start, end)
    else:
        rate = 16000
        chunk = np.zeros(int((end - start) * rate), dtype=np.float32)
    audio_feats = job.encoders["audio"].encode(chunk, rate)

    text_source = "none"
    text_feats = None
    if job.subtitle_path is not None:
        cues = subtitles.cues_in_window(subtitles.parse_srt(job.subtitle_path), start, end)
        if cues:
            text_feats = job.encoders["text"].encode([c.text for c in cues])
            text_source = "subtitle"
    if text_feats is None and job.captioner is not None:
        caption = job.captioner.caption(frames)
        text_feats = job.encoders["text"].encode([caption])
        text_source = "caption"

    rel = {}
    for modality, feats in (("audio", audio_feats), ("video", video_feats)):
        rel[modality] = f"features/{clip_id}.{modality}.hcmf"
        write_feature_file(job.out_dir / rel[modality], modality, feats)
    if text_feats is not None:
        rel["text"] = f"features/{clip_id}.text.hcmf"
        write_feature_file(job.out_dir / rel["text"], "text", text_feats)

    return {
        "clip_id": clip_id,
        "video_id": job.video_id,
        "text_path": rel.get("text"),
        "text_source": text_source,
        "audio_path": rel["audio"],
        "video_path": rel["video"],
        "labels": None,
    }


def extract_all(job: ExtractionJob, clip_indices=None) -> list:
    windows = job.clip_windows()
    indices = range(len(windows)) if clip_indices is None else clip_indices
    return [extract_clip(job, i) for i in indices]


def build_manifest(jobs_entries: list, out_path, dims: Optional[dict] = None) -> Path:
    """Aggregate clip entries into one manifest; enforce stable dims.

    ``jobs_entries`` is a list of (entry dict, dims dict) pairs as
    produced by ``entry_dims``; the first clip pins the declared widths
    and any later divergence aborts the build.
    """
    declared = dict(dims) if dims else {}
    clips = []
    for entry, entry_dims in jobs_entries:
        for modality, width in entry_dims.items():
            if width is None:
                continue
            if modality not in declared:
                declared[modality] = width
            elif width != declared[modality]:
                raise DimDrift(
                    f"clip {entry['clip_id']!r}: {modality} width {width} "
                    f"!= declared {declared[modality]}"
                )
        clips.append(entry)
    for modality, cls in DEFAULT_ENCODERS.items():
        declared.setdefault(modality, cls.dim)
    return write_manifest(out_path, declared, clips)


def entry_dims(job: ExtractionJob, entry: dict) -> dict:
    """Feature widths of one extracted clip, read back from its files."""
    import struct

    dims = {}
    for modality in ("text", "audio", "video"):
        rel = entry.get(f"{modality}_path")
        if rel is None:
            dims[modality] = None
            continue
        header = (job.out_dir / rel).read_bytes()[:17]
        dims[modality] = struct.unpack("<I", header[13:17])[0]
    return dims
