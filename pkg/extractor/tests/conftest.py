import wave
from pathlib import Path

import cv2
import numpy as np
import pytest

FPS = 8
SIZE = (64, 48)  # (width, height)
DURATION = 120  # a 2-minute sample video


def write_sample_video(path: Path, seconds=DURATION) -> Path:
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*"MJPG"), FPS, SIZE
    )
    if not writer.isOpened():
        raise RuntimeError("cv2 VideoWriter failed to open")
    n = seconds * FPS
    xs = np.linspace(0, 1, SIZE[0])[None, :, None]
    ys = np.linspace(0, 1, SIZE[1])[:, None, None]
    for i in range(n):
        phase = i / n
        frame = np.zeros((SIZE[1], SIZE[0], 3), dtype=np.float32)
        frame += xs * (0.3 + 0.7 * phase)  # brightens over time
        frame += ys * (1.0 - phase)
        frame[..., 1] *= 0.5 + 0.5 * np.sin(2 * np.pi * 3 * phase)
        frame = (np.clip(frame, 0, 1) * 255).astype(np.uint8)
        writer.write(cv2.cvtColor(frame, cv2.COLOR_RGB2BGR))
    writer.release()
    return path


def write_sample_wav(path: Path, seconds=DURATION, rate=16000) -> Path:
    t = np.arange(seconds * rate) / rate
    tone = 0.4 * np.sin(2 * np.pi * (220 + 200 * t / seconds) * t)
    rng = np.random.default_rng(7)
    noise = 0.05 * rng.standard_normal(len(t))
    samples = np.clip(tone + noise, -1, 1)
    pcm = (samples * 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())
    return path


def write_sample_srt(path: Path) -> Path:
    # cues only inside the first minute; the second clip has no dialogue
    path.write_text(
        "1\n00:00:02,000 --> 00:00:06,500\nWell, that went exactly as planned.\n\n"
        "2\n00:00:20,000 --> 00:00:24,000\nWatch out for the <i>banana peel</i>!\n\n"
        "3\n00:00:48,500 --> 00:00:55,000\nI am absolutely fine. Totally fine.\n"
    )
    return path


@pytest.fixture(scope="session")
def sample_media(tmp_path_factory):
    root = tmp_path_factory.mktemp("media")
    return {
        "video": write_sample_video(root / "sample.avi"),
        "audio": write_sample_wav(root / "sample.wav"),
        "subs": write_sample_srt(root / "sample.srt"),
    }
