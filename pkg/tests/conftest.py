import numpy as np
import pytest
import torch

from hiccap import synth
from hiccap.data_model import FeatureSequence, LabelSet, Modality
from hiccap.ingest import load_dataset

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """48 planted clips with the default signal layout, loaded once."""
    out = tmp_path_factory.mktemp("synth48")
    manifest = synth.generate(synth.default_spec(n_clips=48, seed=11), out)
    return load_dataset(manifest)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def make_seq(modality=Modality.AUDIO, t=4, d=8, seed=0, scale=1.0):
    r = np.random.default_rng(seed)
    return FeatureSequence(modality, (scale * r.normal(size=(t, d))).astype(np.float32))


def make_labels(categories=(0, 1, 0, 0), per_modality=None, binary=None):
    return LabelSet(categories=categories, per_modality=per_modality, binary=binary)
