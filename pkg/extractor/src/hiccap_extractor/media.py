"""Media access: video frames via OpenCV, audio via WAV files.

Audio rides in a separate WAV track because the bundled OpenCV decoder
handles only the visual stream; pipelines that remux containers should
drop the track next to the video.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np


class DecodeError(Exception):
    pass


@dataclass(frozen=True)
class VideoInfo:
    fps: float
    frame_count: int
    width: int
    height: int

    @property
    def duration(self) -> float:
        return self.frame_count / self.fps if self.fps > 0 else 0.0


def probe_video(path) -> VideoInfo:
    path = Path(path)
    if not path.exists():
        raise DecodeError(f"video file not found: {path}")
    cap = cv2.VideoCapture(str(path))
    try:
        if not cap.isOpened():
            raise DecodeError(f"cannot open video: {path}")
        fps = cap.get(cv2.CAP_PROP_FPS) or 0.0
        frames = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        width = int(cap.get(cv2.CAP_PROP_FRAME_WIDTH))
        height = int(cap.get(cv2.CAP_PROP_FRAME_HEIGHT))
    finally:
        cap.release()
    if fps <= 0 or frames <= 0:
        raise DecodeError(f"video has no readable timing metadata: {path}")
    return VideoInfo(fps=fps, frame_count=frames, width=width, height=height)


def read_frames(path, start_sec: float, end_sec: float):
    """Yield float32 RGB frames in [0, 1] for the given time window."""
    info = probe_video(path)
    first = int(np.floor(start_sec * info.fps))
    last = min(int(np.ceil(end_sec * info.fps)), info.frame_count)
    cap = cv2.VideoCapture(str(path))
    try:
        cap.set(cv2.CAP_PROP_POS_FRAMES, first)
        for _ in range(first, last):
            ok, frame = cap.read()
            if not ok:
                break
            rgb = cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)
            yield rgb.astype(np.float32) / 255.0
    finally:
        cap.release()


def read_wav(path) -> tuple:
    """(mono float32 waveform in [-1, 1], sample rate)."""
    path = Path(path)
    if not path.exists():
        raise DecodeError(f"audio file not found: {path}")
    try:
        with wave.open(str(path), "rb") as fh:
            rate = fh.getframerate()
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            raw = fh.readframes(fh.getnframes())
    except wave.Error as exc:
        raise DecodeError(f"cannot decode WAV {path}: {exc}") from exc
    if width == 2:
        samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    elif width == 1:
        samples = (np.frombuffer(raw, dtype=np.uint8).astype(np.float32) - 128.0) / 128.0
    elif width == 4:
        samples = np.frombuffer(raw, dtype="<i4").astype(np.float32) / 2147483648.0
    else:
        raise DecodeError(f"unsupported WAV sample width {width} in {path}")
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return samples, rate


def audio_window(waveform: np.ndarray, rate: int, start_sec: float, end_sec: float) -> np.ndarray:
    lo = int(start_sec * rate)
    hi = min(int(end_sec * rate), len(waveform))
    if lo >= len(waveform):
        return np.zeros(max(int((end_sec - start_sec) * rate), 1), dtype=np.float32)
    chunk = waveform[lo:hi]
    want = int((end_sec - start_sec) * rate)
    if len(chunk) < want:  # pad the tail with silence
        chunk = np.concatenate([chunk, np.zeros(want - len(chunk), dtype=np.float32)])
    return chunk
