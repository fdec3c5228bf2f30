import numpy as np
import pytest

from hiccap import synth
from hiccap.data_model import CATEGORIES, read_manifest, validate_clip
from hiccap.errors import SchemaMismatchError
from hiccap.ingest import load_dataset


def test_noiseless_strong_signal_matches_plan(tmp_path):
    spec = synth.default_spec(n_clips=40, seed=3, noise_scale=0.0)
    manifest = synth.generate(spec, tmp_path)
    clips = load_dataset(manifest)
    for i, clip in enumerate(clips):
        stream_planned = []
        # replay the per-clip plan: same stream, same draw order
        from hiccap import rng

        stream = rng.numpy_rng(spec.seed, "clip", i)
        for m in spec.dims:
            stream.integers(spec.t_ranges[m][0], spec.t_ranges[m][1] + 1)
        for cat in CATEGORIES:
            plan = spec.signals[cat]
            stream_planned.append(int(stream.random() < plan.prevalence))
        assert list(clip.labels.categories) == stream_planned


def test_same_seed_bitwise_identical(tmp_path):
    spec = synth.default_spec(n_clips=6, seed=9)
    m1 = synth.generate(spec, tmp_path / "a")
    m2 = synth.generate(spec, tmp_path / "b")
    for e1, e2 in zip(read_manifest(m1).clips, read_manifest(m2).clips):
        for attr in ("text_path", "audio_path", "video_path"):
            b1 = ((tmp_path / "a") / getattr(e1, attr)).read_bytes()
            b2 = ((tmp_path / "b") / getattr(e2, attr)).read_bytes()
            assert b1 == b2
    assert m1.read_text() == m2.read_text()


def test_generated_files_pass_validation(tmp_path):
    manifest_path = synth.generate(synth.default_spec(n_clips=12, seed=1), tmp_path)
    clips = load_dataset(manifest_path)  # raises on any violation
    manifest = read_manifest(manifest_path)
    for clip in clips:
        assert validate_clip(clip, manifest.dims) == []


def test_prevalence_within_three_points_at_2000(tmp_path):
    spec = synth.default_spec(n_clips=2000, seed=17)
    clips = load_dataset(synth.generate(spec, tmp_path))
    flags = np.array([c.labels.categories for c in clips])
    for ci, cat in enumerate(CATEGORIES):
        target = spec.signals[cat].prevalence
        assert abs(flags[:, ci].mean() - target) <= 0.03, cat


def test_aligned_corpus_needs_latent(tmp_path):
    spec = synth.default_spec(n_clips=4, seed=0)
    with pytest.raises(SchemaMismatchError):
        synth.generate_aligned_corpus(spec, tmp_path)


def test_aligned_corpus_zero_noise_is_exact_linear_image(tmp_path):
    spec = synth.SynthSpec(n_clips=5, seed=2, latent_dim=8, noise_scale=0.0, signals={})
    clips = load_dataset(synth.generate_aligned_corpus(spec, tmp_path))
    for clip in clips:
        # every timestep carries the same latent image
        for seq in (clip.text, clip.audio, clip.video):
            assert np.allclose(seq.data, seq.data[0])
    assert all(c.labels is None for c in clips)


def test_matched_pairs_separable_by_least_squares_probe(tmp_path):
    """A least-squares text-to-audio map separates matched from mismatched.

    Matched pairs share a latent, so the cross-modal relation is linear
    and the regression residual is small; swapping in another clip's
    audio (what corruption does) breaks the relation.
    """
    spec = synth.SynthSpec(n_clips=256, seed=5, latent_dim=16, noise_scale=0.25, signals={})
    clips = load_dataset(synth.generate_aligned_corpus(spec, tmp_path))
    pt = np.stack([c.text.data.mean(axis=0) for c in clips])
    pa = np.stack([c.audio.data.mean(axis=0) for c in clips])
    n = len(clips)
    k = n // 2
    probe, *_ = np.linalg.lstsq(pt[:k], pa[:k], rcond=None)

    rng = np.random.default_rng(0)

    def residuals(rows, swap):
        target = pa[swap] if swap is not None else pa[rows]
        return np.linalg.norm(target - pt[rows] @ probe, axis=1)

    train_rows = np.arange(k)
    train_swap = (train_rows + 1 + rng.integers(0, k - 1, size=k)) % k
    threshold = 0.5 * (
        residuals(train_rows, None).mean() + residuals(train_rows, train_swap).mean()
    )

    test_rows = np.arange(k, n)
    test_swap = (test_rows - k + 1 + rng.integers(0, n - k - 1, size=n - k)) % (n - k) + k
    matched = residuals(test_rows, None)
    mismatched = residuals(test_rows, test_swap)
    accuracy = 0.5 * (np.mean(matched < threshold) + np.mean(mismatched >= threshold))
    assert accuracy > 0.95


def test_spec_json_round_trip(tmp_path):
    spec = synth.default_spec(n_clips=10, seed=4, latent_dim=3)
    back = synth.spec_from_json(synth.spec_to_json(spec))
    assert back == spec
