"""Core domain types and the on-disk formats they serialize to.

Feature file format (one file per modality per clip), little-endian:

    magic "HCMF" | u32 version=1 | u8 modality {0=text,1=audio,2=video}
    | u32 T | u32 D | T*D float32 row-major

Manifest: JSON with ``{version, dims: {text, audio, video}, clips: [...]}``
where each clip entry is ``{clip_id, video_id, text_path|null, text_source,
audio_path, video_path, labels|null}``. Label objects are
``{categories: [4 x 0/1], per_modality: [4 x [3 x 0/1]]|null, binary: 0/1}``
with categories ordered (mature_humor, gory_humor, slapstick_humor,
sarcasm) and per-modality channels ordered (dialogue, sound, video).

All types are immutable after construction and safe to share across
threads; feature matrices are marked read-only.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import MissingFileError, SchemaMismatchError

FEATURE_MAGIC = b"HCMF"
FEATURE_VERSION = 1
MANIFEST_VERSION = 1

CATEGORIES = ("mature_humor", "gory_humor", "slapstick_humor", "sarcasm")
LABEL_CHANNELS = ("dialogue", "sound", "video")

# Conventional widths of the usual contextual-text / audio-frame / video
# -segment extractors; manifests may declare anything.
DEFAULT_DIMS = {"text": 768, "audio": 128, "video": 1024}


class Modality(enum.IntEnum):
    TEXT = 0
    AUDIO = 1
    VIDEO = 2

    @property
    def key(self) -> str:
        return self.name.lower()

    @classmethod
    def from_key(cls, key: str) -> "Modality":
        return cls[key.upper()]


MODALITIES = (Modality.TEXT, Modality.AUDIO, Modality.VIDEO)
# label channel i describes how category evidence shows up in modality i
CHANNEL_OF_MODALITY = {Modality.TEXT: 0, Modality.AUDIO: 1, Modality.VIDEO: 2}


class TextSource(enum.Enum):
    SUBTITLE = "subtitle"
    CAPTION = "caption"
    NONE = "none"


@dataclass(frozen=True)
class FeatureSequence:
    """Time-major dense matrix of one modality's features."""

    modality: Modality
    data: np.ndarray  # (T, D) float32, read-only

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise SchemaMismatchError(f"feature matrix must be 2-d, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def length(self) -> int:
        return int(self.data.shape[0])

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])


def zero_sequence(modality: Modality, dim: int) -> FeatureSequence:
    """Single all-zeros timestep; placeholder for absent or masked input."""
    return FeatureSequence(modality, np.zeros((1, dim), dtype=np.float32))


@dataclass(frozen=True)
class LabelSet:
    """Multi-hot category flags with an optional per-modality breakdown.

    ``binary`` is stored (it round-trips through JSON) so validation can
    detect files that disagree with the OR of the categories.
    """

    categories: tuple  # 4 x 0/1
    per_modality: Optional[tuple] = None  # 4 x (3 x 0/1)
    binary: Optional[int] = None

    def __post_init__(self):
        cats = tuple(int(c) for c in self.categories)
        if len(cats) != len(CATEGORIES):
            raise SchemaMismatchError(f"expected {len(CATEGORIES)} category flags, got {len(cats)}")
        object.__setattr__(self, "categories", cats)
        if self.per_modality is not None:
            pm = tuple(tuple(int(v) for v in row) for row in self.per_modality)
            if len(pm) != len(CATEGORIES) or any(len(row) != len(LABEL_CHANNELS) for row in pm):
                raise SchemaMismatchError("per_modality must be 4 x 3 flags")
            object.__setattr__(self, "per_modality", pm)
        if self.binary is None:
            object.__setattr__(self, "binary", derive_binary_flags(cats))
        else:
            object.__setattr__(self, "binary", int(self.binary))

    def to_json(self) -> dict:
        return {
            "categories": list(self.categories),
            "per_modality": [list(r) for r in self.per_modality] if self.per_modality else None,
            "binary": self.binary,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "LabelSet":
        return cls(
            categories=obj["categories"],
            per_modality=obj.get("per_modality"),
            binary=obj.get("binary"),
        )


def derive_binary_flags(categories: Sequence[int]) -> int:
    return int(any(int(c) for c in categories))


def derive_binary(labels: LabelSet) -> int:
    """Presence of any category at all."""
    return derive_binary_flags(labels.categories)


@dataclass(frozen=True)
class ClipRecord:
    """One 60-second clip: per-modality feature sequences plus labels."""

    clip_id: str
    source_video_id: str
    text: Optional[FeatureSequence]
    text_source: TextSource
    audio: FeatureSequence
    video: FeatureSequence
    labels: Optional[LabelSet] = None

    def sequence(self, modality: Modality) -> Optional[FeatureSequence]:
        return {Modality.TEXT: self.text, Modality.AUDIO: self.audio, Modality.VIDEO: self.video}[
            modality
        ]


@dataclass(frozen=True)
class ManifestEntry:
    clip_id: str
    video_id: str
    text_path: Optional[str]
    text_source: TextSource
    audio_path: str
    video_path: str
    labels: Optional[LabelSet]


@dataclass(frozen=True)
class DatasetManifest:
    dims: Mapping[str, int]  # keys "text", "audio", "video"
    clips: tuple
    version: int = MANIFEST_VERSION

    def __post_init__(self):
        object.__setattr__(self, "dims", dict(self.dims))
        object.__setattr__(self, "clips", tuple(self.clips))
        ids = [c.clip_id for c in self.clips]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise SchemaMismatchError(f"duplicate clip_ids in manifest: {dupes}")

    def dim_of(self, modality: Modality) -> int:
        return int(self.dims[modality.key])


@dataclass(frozen=True)
class ModalityOrdering:
    """Per target modality, the order its two context modalities are applied."""

    contexts: Mapping[Modality, tuple]

    def __post_init__(self):
        ctx = {}
        for target, pair in dict(self.contexts).items():
            target = Modality(target)
            first, second = (Modality(m) for m in pair)
            if first == second or target in (first, second):
                raise SchemaMismatchError(
                    f"ordering for {target.key}: contexts must be the two other modalities"
                )
            ctx[target] = (first, second)
        object.__setattr__(self, "contexts", ctx)

    @classmethod
    def default(cls) -> "ModalityOrdering":
        return cls(
            {
                Modality.TEXT: (Modality.AUDIO, Modality.VIDEO),
                Modality.AUDIO: (Modality.TEXT, Modality.VIDEO),
                Modality.VIDEO: (Modality.TEXT, Modality.AUDIO),
            }
        )

    def to_string(self) -> str:
        parts = []
        for target in MODALITIES:
            if target in self.contexts:
                first, second = self.contexts[target]
                parts.append(f"{target.key[0]}:{first.key[0]}{second.key[0]}")
        return ",".join(parts)

    @classmethod
    def from_string(cls, text: str) -> "ModalityOrdering":
        """Parse e.g. ``t:av,a:tv,v:ta`` (target:first+second initials)."""
        by_initial = {"t": Modality.TEXT, "a": Modality.AUDIO, "v": Modality.VIDEO}
        ctx = {}
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            try:
                target_s, pair = part.split(":")
                ctx[by_initial[target_s]] = (by_initial[pair[0]], by_initial[pair[1]])
            except (ValueError, KeyError, IndexError):
                raise SchemaMismatchError(f"bad ordering spec {part!r}, want e.g. t:av")
        return cls(ctx)


# ---------------------------------------------------------------------------
# feature file IO
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIBII")


def write_feature_file(path, seq: FeatureSequence) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(
        FEATURE_MAGIC, FEATURE_VERSION, int(seq.modality), seq.length, seq.dim
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(seq.data, dtype="<f4").tobytes())


def read_feature_file(path) -> FeatureSequence:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise SchemaMismatchError(f"{path}: truncated header")
    magic, version, mod_code, t, d = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise SchemaMismatchError(f"{path}: bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise SchemaMismatchError(f"{path}: unsupported version {version}")
    if mod_code not in (0, 1, 2):
        raise SchemaMismatchError(f"{path}: unknown modality code {mod_code}")
    expected = _HEADER.size + 4 * t * d
    if len(raw) != expected:
        raise SchemaMismatchError(f"{path}: payload size {len(raw)} != expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(t, d)
    return FeatureSequence(Modality(mod_code), data.astype(np.float32))


# ---------------------------------------------------------------------------
# manifest IO
# ---------------------------------------------------------------------------


def manifest_to_json(manifest: DatasetManifest) -> dict:
    return {
        "version": manifest.version,
        "dims": {k: int(v) for k, v in manifest.dims.items()},
        "clips": [
            {
                "clip_id": c.clip_id,
                "video_id": c.video_id,
                "text_path": c.text_path,
                "text_source": c.text_source.value,
                "audio_path": c.audio_path,
                "video_path": c.video_path,
                "labels": c.labels.to_json() if c.labels is not None else None,
            }
            for c in manifest.clips
        ],
    }


def manifest_from_json(obj: Mapping) -> DatasetManifest:
    try:
        if int(obj["version"]) != MANIFEST_VERSION:
            raise SchemaMismatchError(f"unsupported manifest version {obj['version']}")
        dims = {k: int(obj["dims"][k]) for k in ("text", "audio", "video")}
        clips = [
            ManifestEntry(
                clip_id=str(c["clip_id"]),
                video_id=str(c["video_id"]),
                text_path=c.get("text_path"),
                text_source=TextSource(c.get("text_source", "none")),
                audio_path=c["audio_path"],
                video_path=c["video_path"],
                labels=LabelSet.from_json(c["labels"]) if c.get("labels") else None,
            )
            for c in obj["clips"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaMismatchError(f"malformed manifest: {exc}") from exc
    return DatasetManifest(dims=dims, clips=clips)


def write_manifest(path, manifest: DatasetManifest) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest_to_json(manifest), indent=2, sort_keys=True))


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise MissingFileError("<manifest>", str(path))
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaMismatchError(f"{path}: not valid JSON: {exc}") from exc
    return manifest_from_json(obj)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def validate_clip(record: ClipRecord, manifest_dims: Mapping[str, int]) -> list:
    """Check every type invariant; returns violation strings, empty if clean."""
    violations = []

    def check_seq(seq: FeatureSequence, modality: Modality):
        name = modality.key
        if seq.modality != modality:
            violations.append(f"{name}: modality code {seq.modality.key} does not match slot")
        if seq.length < 1:
            violations.append(f"{name}: T must be >= 1")
        declared = int(manifest_dims[name])
        if seq.dim != declared:
            violations.append(f"{name}: D {seq.dim} != declared {declared}")
        if not np.isfinite(seq.data).all():
            violations.append(f"{name}: non-finite entries")

    if record.text_source == TextSource.NONE:
        if record.text is not None:
            violations.append("text must be absent when text_source is none")
    else:
        if record.text is None:
            violations.append(f"text must be present when text_source is {record.text_source.value}")
    if record.text is not None:
        check_seq(record.text, Modality.TEXT)
    check_seq(record.audio, Modality.AUDIO)
    check_seq(record.video, Modality.VIDEO)

    labels = record.labels
    if labels is not None:
        if labels.binary != derive_binary(labels):
            violations.append("binary != OR(categories)")
        if labels.per_modality is not None:
            for ci, cat in enumerate(CATEGORIES):
                expected = int(any(labels.per_modality[ci]))
                if labels.categories[ci] != expected:
                    violations.append(f"{cat}: category flag != OR(per_modality)")
    return violations
