import numpy as np
import pytest

from eegfactor.data import SynthConfig, synthesize_sparse_dataset
from eegfactor.nets import NetConfig


def small_net_config(**overrides):
    """A shrunken geometry that keeps every layer >= 1 but runs in milliseconds."""
    kw = dict(
        n_eeg_channels=4,
        n_timesamples=64,
        n_classes=3,
        n_feature_maps=3,
        temporal_kernel=8,
        spatial_kernel=4,
        pool_kernel=10,
        pool_stride=5,
        dropout_p=0.5,
        hidden_sizes=(16, 12, 8),
    )
    kw.update(overrides)
    return NetConfig(**kw)


@pytest.fixture
def tiny_net():
    return small_net_config()


@pytest.fixture(scope="session")
def tiny_ds():
    cfg = SynthConfig(
        n_classes=3,
        trials_per_class=5,
        n_resting=4,
        n_channels=4,
        trial_samples=64,
        sample_rate_hz=64.0,
        seed=3,
    )
    return synthesize_sparse_dataset(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
