"""Dataset loading, annotation aggregation, and deterministic partitioning."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import rng
from .data_model import (
    CATEGORIES,
    LABEL_CHANNELS,
    ClipRecord,
    DatasetManifest,
    LabelSet,
    Modality,
    TextSource,
    derive_binary,
    read_feature_file,
    read_manifest,
    validate_clip,
)
from .errors import (
    DimMismatchError,
    EvenAnnotatorCountError,
    InvariantViolationError,
    MissingFileError,
    NoLabelsError,
    SchemaMismatchError,
)
from .metrics import cohens_kappa


@dataclass(frozen=True)
class AnnotationSet:
    """Raw votes of all annotators on one clip."""

    clip_id: str
    annotators: tuple
    votes: tuple  # one LabelSet per annotator

    def __post_init__(self):
        if len(self.votes) < 1:
            raise SchemaMismatchError(f"clip {self.clip_id!r}: needs at least one vote")
        if len(self.annotators) != len(self.votes):
            raise SchemaMismatchError(f"clip {self.clip_id!r}: annotator/vote count mismatch")
        with_pm = [v.per_modality is not None for v in self.votes]
        if any(with_pm) and not all(with_pm):
            raise SchemaMismatchError(
                f"clip {self.clip_id!r}: votes must uniformly include or omit per-modality flags"
            )
        object.__setattr__(self, "annotators", tuple(self.annotators))
        object.__setattr__(self, "votes", tuple(self.votes))


@dataclass(frozen=True)
class PartitionSpec:
    train: float
    val: float
    test: float
    seed: int

    def __post_init__(self):
        for name, r in (("train", self.train), ("val", self.val), ("test", self.test)):
            if not 0.0 <= r <= 1.0:
                raise SchemaMismatchError(f"ratio {name}={r} outside [0, 1]")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise SchemaMismatchError("partition ratios must sum to 1")


def load_dataset(manifest_path) -> list:
    """Load and validate every clip in a manifest.

    Returns ClipRecords in manifest order. Any invariant violation in any
    clip aborts the load; bad data should never reach training.
    """
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    base = manifest_path.parent
    records = []
    for entry in manifest.clips:
        def load(rel_path, slot: Modality):
            path = base / rel_path
            if not path.exists():
                raise MissingFileError(entry.clip_id, str(path))
            seq = read_feature_file(path)
            if seq.modality != slot:
                raise SchemaMismatchError(
                    f"clip {entry.clip_id!r}: {path} holds {seq.modality.key}, expected {slot.key}"
                )
            return seq

        text = load(entry.text_path, Modality.TEXT) if entry.text_path else None
        audio = load(entry.audio_path, Modality.AUDIO)
        video = load(entry.video_path, Modality.VIDEO)
        record = ClipRecord(
            clip_id=entry.clip_id,
            source_video_id=entry.video_id,
            text=text,
            text_source=entry.text_source,
            audio=audio,
            video=video,
            labels=entry.labels,
        )
        for modality, seq in (("text", text), ("audio", audio), ("video", video)):
            if seq is not None and seq.dim != int(manifest.dims[modality]):
                raise DimMismatchError(
                    f"clip {entry.clip_id!r}: {modality} D={seq.dim}, "
                    f"manifest declares {manifest.dims[modality]}"
                )
        violations = validate_clip(record, manifest.dims)
        if violations:
            raise InvariantViolationError(entry.clip_id, violations)
        records.append(record)
    return records


def majority_vote(ann: AnnotationSet) -> LabelSet:
    """Flag-wise strict majority across an odd number of annotators.

    When votes carry per-modality flags the majority runs per
    (category, modality) cell and category flags are re-derived as the OR
    over modalities; the binary flag is always re-derived.
    """
    n = len(ann.votes)
    if n % 2 == 0:
        raise EvenAnnotatorCountError(f"clip {ann.clip_id!r}: {n} annotators, need an odd count")
    half = n / 2.0

    if ann.votes[0].per_modality is not None:
        pm = []
        for ci in range(len(CATEGORIES)):
            row = []
            for mi in range(len(LABEL_CHANNELS)):
                votes = sum(v.per_modality[ci][mi] for v in ann.votes)
                row.append(int(votes > half))
            pm.append(tuple(row))
        categories = tuple(int(any(row)) for row in pm)
        return LabelSet(categories=categories, per_modality=tuple(pm))

    categories = tuple(
        int(sum(v.categories[ci] for v in ann.votes) > half) for ci in range(len(CATEGORIES))
    )
    return LabelSet(categories=categories)


def load_annotations(path) -> list:
    """Annotation JSON: ``[{clip_id, annotators?, votes: [label obj, ...]}]``."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError("<annotations>", str(path))
    try:
        raw = json.loads(path.read_text())
        sets = []
        for item in raw:
            votes = tuple(LabelSet.from_json(v) for v in item["votes"])
            annotators = tuple(item.get("annotators") or [f"a{i}" for i in range(len(votes))])
            sets.append(AnnotationSet(clip_id=str(item["clip_id"]), annotators=annotators, votes=votes))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaMismatchError(f"malformed annotations: {exc}") from exc
    return sets


def annotation_agreement(annotation_sets: Sequence[AnnotationSet]) -> dict:
    """Agreement of each annotator against the majority vote.

    Flattens every flag the annotator voted on (per-modality cells when
    present, otherwise category flags) across all clips into one pair of
    label strings and computes kappa, then averages over annotators.
    """
    majorities = {a.clip_id: majority_vote(a) for a in annotation_sets}
    by_annotator: dict = {}
    for ann in annotation_sets:
        maj = majorities[ann.clip_id]
        for name, vote in zip(ann.annotators, ann.votes):
            mine, theirs = by_annotator.setdefault(name, ([], []))
            if vote.per_modality is not None:
                for ci in range(len(CATEGORIES)):
                    for mi in range(len(LABEL_CHANNELS)):
                        mine.append(vote.per_modality[ci][mi])
                        theirs.append(maj.per_modality[ci][mi])
            else:
                for ci in range(len(CATEGORIES)):
                    mine.append(vote.categories[ci])
                    theirs.append(maj.categories[ci])
    per_annotator = {}
    for name, (mine, theirs) in sorted(by_annotator.items()):
        per_annotator[name] = cohens_kappa(mine, theirs)
    mean_kappa = float(np.mean([s.kappa for s in per_annotator.values()]))
    return {"per_annotator": per_annotator, "mean_kappa": mean_kappa}


# ---------------------------------------------------------------------------
# partitioning
# ---------------------------------------------------------------------------


def _group_units(clips: Sequence[ClipRecord], group_by_video: bool):
    """Split units: lists of clip indices that must stay together."""
    if not group_by_video:
        return [[i] for i in range(len(clips))]
    groups: dict = {}
    for i, clip in enumerate(clips):
        groups.setdefault(clip.source_video_id, []).append(i)
    return [groups[k] for k in sorted(groups)]


def _unit_stratum(clips, unit) -> int:
    flags = [clips[i].labels.binary if clips[i].labels is not None else 0 for i in unit]
    ones = sum(flags)
    return int(ones * 2 >= len(flags))  # majority, ties go to the positive class


def split_partitions(
    clips: Sequence[ClipRecord],
    spec: PartitionSpec,
    group_by_video: bool = True,
    stratify: bool = True,
):
    """Deterministic (train, val, test) split.

    Global sizes are floor allocations of the ratios with the remainder
    going to train. Units are whole videos by default so clips of one
    video never straddle partitions; per-partition quotas are spread over
    the binary-label strata by largest remainder. With single-clip units
    the quotas are met exactly; multi-clip videos make them best-effort.
    """
    n = len(clips)
    n_val = int(np.floor(spec.val * n))
    n_test = int(np.floor(spec.test * n))

    units = _group_units(clips, group_by_video)
    strata: dict = {}
    for unit in units:
        key = _unit_stratum(clips, unit) if stratify else 0
        strata.setdefault(key, []).append(unit)

    stratum_keys = sorted(strata)
    stratum_sizes = {k: sum(len(u) for u in strata[k]) for k in stratum_keys}

    def quotas(total: int) -> dict:
        if n == 0:
            return {k: 0 for k in stratum_keys}
        raw = {k: total * stratum_sizes[k] / n for k in stratum_keys}
        floor = {k: int(np.floor(raw[k])) for k in stratum_keys}
        short = total - sum(floor.values())
        # hand leftovers to the largest fractional remainders, stable order
        order = sorted(stratum_keys, key=lambda k: (-(raw[k] - floor[k]), k))
        for k in order[:short]:
            floor[k] += 1
        return floor

    val_quota = quotas(n_val)
    test_quota = quotas(n_test)

    shuffle_rng = rng.numpy_rng(spec.seed, "split")
    train_idx, val_idx, test_idx = [], [], []
    for key in stratum_keys:
        unit_list = list(strata[key])
        shuffle_rng.shuffle(unit_list)
        got_val = got_test = 0
        for unit in unit_list:
            size = len(unit)
            if got_test + size <= test_quota[key]:
                test_idx.extend(unit)
                got_test += size
            elif got_val + size <= val_quota[key]:
                val_idx.extend(unit)
                got_val += size
            else:
                train_idx.extend(unit)

    def pick(indices):
        return [clips[i] for i in sorted(indices)]

    return pick(train_idx), pick(val_idx), pick(test_idx)


# ---------------------------------------------------------------------------
# dataset statistics
# ---------------------------------------------------------------------------

_STAT_FIELDS = ("words", "length", "frames")
_STAT_NAMES = ("max", "min", "avg", "med")


@dataclass(frozen=True)
class StatsTable:
    """Sequence-length statistics per binary class plus category counts."""

    class_counts: Mapping[int, int]
    rows: Mapping[tuple, Mapping[int, float]]  # (field, stat) -> {class: value}
    category_counts: Mapping[str, int]

    def to_csv(self) -> str:
        lines = ["field,stat,C0,C1"]
        for field in _STAT_FIELDS:
            for stat in _STAT_NAMES:
                row = self.rows[(field, stat)]
                lines.append(f"{field},{stat},{row[0]:g},{row[1]:g}")
        lines.append(f"clips,count,{self.class_counts[0]},{self.class_counts[1]}")
        for cat in CATEGORIES:
            lines.append(f"category_{cat},count,,{self.category_counts[cat]}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        out = [f"{'':>10} {'stat':>5} {'C0':>10} {'C1':>10}"]
        for field in _STAT_FIELDS:
            for stat in _STAT_NAMES:
                row = self.rows[(field, stat)]
                out.append(f"{field:>10} {stat:>5} {row[0]:>10.2f} {row[1]:>10.2f}")
        out.append(f"{'clips':>10} {'count':>5} {self.class_counts[0]:>10} {self.class_counts[1]:>10}")
        out.append("")
        out.append("category counts: " + ", ".join(f"{c}={self.category_counts[c]}" for c in CATEGORIES))
        return "\n".join(out) + "\n"


def dataset_stats(clips: Sequence[ClipRecord]) -> StatsTable:
    """Max/min/avg/median timestep counts per modality, split by binary class."""
    if any(c.labels is None for c in clips):
        raise NoLabelsError("dataset statistics need labels on every clip")

    per_class = {0: {f: [] for f in _STAT_FIELDS}, 1: {f: [] for f in _STAT_FIELDS}}
    category_counts = {c: 0 for c in CATEGORIES}
    class_counts = {0: 0, 1: 0}
    for clip in clips:
        klass = derive_binary(clip.labels)
        class_counts[klass] += 1
        per_class[klass]["words"].append(clip.text.length if clip.text is not None else 0)
        per_class[klass]["length"].append(clip.audio.length)
        per_class[klass]["frames"].append(clip.video.length)
        for ci, cat in enumerate(CATEGORIES):
            category_counts[cat] += clip.labels.categories[ci]

    rows = {}
    for field in _STAT_FIELDS:
        for stat in _STAT_NAMES:
            rows[(field, stat)] = {}
            for klass in (0, 1):
                vals = per_class[klass][field]
                if not vals:
                    rows[(field, stat)][klass] = 0.0
                    continue
                fn = {"max": np.max, "min": np.min, "avg": np.mean, "med": np.median}[stat]
                rows[(field, stat)][klass] = float(fn(vals))
    return StatsTable(class_counts=class_counts, rows=rows, category_counts=category_counts)
