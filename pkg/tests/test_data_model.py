import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiccap.data_model import (
    CATEGORIES,
    ClipRecord,
    DatasetManifest,
    FeatureSequence,
    LabelSet,
    ManifestEntry,
    ModalityOrdering,
    Modality,
    TextSource,
    derive_binary,
    manifest_from_json,
    manifest_to_json,
    read_feature_file,
    validate_clip,
    write_feature_file,
    zero_sequence,
)
from hiccap.errors import SchemaMismatchError

DIMS = {"text": 6, "audio": 4, "video": 5}


def clip(categories=(0, 0, 0, 0), binary=None, text_source=TextSource.SUBTITLE, with_text=True,
         audio_d=4, per_modality=None):
    r = np.random.default_rng(0)
    text = FeatureSequence(Modality.TEXT, r.normal(size=(3, 6)).astype(np.float32)) if with_text else None
    return ClipRecord(
        clip_id="c0",
        source_video_id="v0",
        text=text,
        text_source=text_source,
        audio=FeatureSequence(Modality.AUDIO, r.normal(size=(2, audio_d)).astype(np.float32)),
        video=FeatureSequence(Modality.VIDEO, r.normal(size=(4, 5)).astype(np.float32)),
        labels=LabelSet(categories=categories, binary=binary, per_modality=per_modality),
    )


class TestValidateClip:
    def test_clean_clip_has_no_violations(self):
        assert validate_clip(clip(categories=(0, 1, 0, 0)), DIMS) == []

    def test_binary_inconsistent_with_categories(self):
        violations = validate_clip(clip(categories=(0, 0, 0, 1), binary=0), DIMS)
        assert violations == ["binary != OR(categories)"]

    def test_text_present_under_none_source(self):
        bad = clip(text_source=TextSource.NONE, with_text=True)
        assert any("text must be absent" in v for v in validate_clip(bad, DIMS))

    def test_dim_mismatch_flagged(self):
        violations = validate_clip(clip(audio_d=3), DIMS)
        assert any("audio: D 3 != declared 4" in v for v in violations)

    def test_per_modality_must_or_to_category(self):
        bad = clip(categories=(1, 0, 0, 0), per_modality=((0, 0, 0), (0, 0, 0), (0, 0, 0), (0, 0, 0)))
        assert any("OR(per_modality)" in v for v in validate_clip(bad, DIMS))

    def test_nonfinite_entries_flagged(self):
        data = np.full((2, 4), np.nan, dtype=np.float32)
        c = clip()
        bad = ClipRecord(
            clip_id=c.clip_id, source_video_id=c.source_video_id, text=c.text,
            text_source=c.text_source, audio=FeatureSequence(Modality.AUDIO, data),
            video=c.video, labels=c.labels,
        )
        assert any("non-finite" in v for v in validate_clip(bad, DIMS))


class TestDeriveBinary:
    @pytest.mark.parametrize(
        "cats,expected",
        [((0, 0, 0, 0), 0), ((0, 1, 0, 0), 1), ((1, 1, 1, 1), 1)],
    )
    def test_or_of_flags(self, cats, expected):
        assert derive_binary(LabelSet(categories=cats)) == expected

    @given(st.tuples(*[st.integers(0, 1)] * 4))
    def test_matches_stored_binary_when_derived(self, cats):
        labels = LabelSet(categories=cats)
        assert labels.binary == derive_binary(labels)
        assert derive_binary(labels) == derive_binary(labels)  # idempotent


class TestFeatureFileRoundTrip:
    @settings(max_examples=50, deadline=None)
    @given(
        t=st.integers(1, 7),
        d=st.integers(1, 9),
        seed=st.integers(0, 2**32 - 1),
        mod=st.sampled_from(list(Modality)),
    )
    def test_bit_for_bit(self, tmp_path_factory, t, d, seed, mod):
        r = np.random.default_rng(seed)
        seq = FeatureSequence(mod, r.normal(size=(t, d)).astype(np.float32))
        path = tmp_path_factory.mktemp("ff") / "x.hcmf"
        write_feature_file(path, seq)
        back = read_feature_file(path)
        assert back.modality == seq.modality
        assert back.data.tobytes() == seq.data.tobytes()

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "bad.hcmf"
        p.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(SchemaMismatchError):
            read_feature_file(p)

    def test_truncated_payload_rejected(self, tmp_path):
        p = tmp_path / "trunc.hcmf"
        seq = zero_sequence(Modality.AUDIO, 4)
        write_feature_file(p, seq)
        p.write_bytes(p.read_bytes()[:-2])
        with pytest.raises(SchemaMismatchError):
            read_feature_file(p)


class TestManifest:
    def entry(self, cid="a"):
        return ManifestEntry(
            clip_id=cid, video_id="v", text_path=None, text_source=TextSource.NONE,
            audio_path="a.hcmf", video_path="v.hcmf", labels=None,
        )

    def test_duplicate_clip_ids_rejected(self):
        with pytest.raises(SchemaMismatchError):
            DatasetManifest(dims=DIMS, clips=[self.entry("a"), self.entry("a")])

    def test_json_round_trip(self):
        m = DatasetManifest(dims=DIMS, clips=[self.entry("a"), self.entry("b")])
        back = manifest_from_json(manifest_to_json(m))
        assert back == m


class TestModalityOrdering:
    def test_default_excludes_target(self):
        ordering = ModalityOrdering.default()
        for target, (a, b) in ordering.contexts.items():
            assert target not in (a, b) and a != b

    def test_string_round_trip(self):
        ordering = ModalityOrdering.from_string("t:va,a:vt,v:at")
        assert ModalityOrdering.from_string(ordering.to_string()) == ordering

    def test_rejects_target_in_contexts(self):
        with pytest.raises(SchemaMismatchError):
            ModalityOrdering({Modality.TEXT: (Modality.TEXT, Modality.AUDIO)})

    def test_rejects_duplicate_contexts(self):
        with pytest.raises(SchemaMismatchError):
            ModalityOrdering({Modality.TEXT: (Modality.AUDIO, Modality.AUDIO)})


def test_feature_matrices_are_immutable():
    seq = zero_sequence(Modality.TEXT, 3)
    with pytest.raises(ValueError):
        seq.data[0, 0] = 1.0
