"""Minimal SubRip (.srt) parsing: cue windows and their text."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

_TIME = re.compile(r"(\d+):(\d+):(\d+)[,.](\d+)\s*-->\s*(\d+):(\d+):(\d+)[,.](\d+)")


@dataclass(frozen=True)
class Cue:
    start: float
    end: float
    text: str


def _seconds(h, m, s, ms) -> float:
    return int(h) * 3600 + int(m) * 60 + int(s) + int(ms) / 1000.0


def parse_srt(path) -> list:
    cues = []
    text = Path(path).read_text(encoding="utf-8", errors="replace")
    for block in re.split(r"\n\s*\n", text.strip()):
        lines = [ln.strip() for ln in block.splitlines() if ln.strip()]
        if not lines:
            continue
        match = None
        body_start = 0
        for i, line in enumerate(lines[:2]):
            match = _TIME.search(line)
            if match:
                body_start = i + 1
                break
        if not match:
            continue
        start = _seconds(*match.groups()[:4])
        end = _seconds(*match.groups()[4:])
        body = " ".join(lines[body_start:])
        body = re.sub(r"<[^>]+>", "", body).strip()
        if body:
            cues.append(Cue(start=start, end=end, text=body))
    return cues


def cues_in_window(cues, start: float, end: float) -> list:
    return [c for c in cues if c.end > start and c.start < end]
