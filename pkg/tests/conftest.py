"""
Shared fixtures: small synthetic datasets, model specs and a results store
"""

import numpy as np
import pytest

from tcc_saliency_audit.config import CampaignConfig, ModelConfig, SynthConfig, TrainConfig, reset_config
from tcc_saliency_audit.data_io import FrameSequence, Illuminant, kfold_split, synth_generate
from tcc_saliency_audit.logger import LoggerManager
from tcc_saliency_audit.model_zoo import ModelSpec
from tcc_saliency_audit.results import ResultsStore


@pytest.fixture(autouse=True)
def _fresh_config():
    reset_config()
    yield
    reset_config()
    LoggerManager.reset()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def sequence(rng: np.random.Generator) -> FrameSequence:
    """Three 16x16 frames under a warm cast"""
    frames = [rng.uniform(0.1, 0.9, size=(16, 16, 3)).astype(np.float32) for _ in range(3)]
    return FrameSequence(frames=frames, ground_truth=Illuminant((0.6, 0.5, 0.3)), id="seq_a")


@pytest.fixture
def tiny_synth() -> SynthConfig:
    return SynthConfig(num_sequences=8, num_frames=3, height=16, width=16)


@pytest.fixture
def dataset(tiny_synth: SynthConfig):
    data = synth_generate(tiny_synth, seed=7)
    return data.with_manifest(kfold_split(data.manifest, k=2, seed=0))


@pytest.fixture
def model_cfg() -> ModelConfig:
    return ModelConfig(hidden_size=4, attention_width=4, input_height=16, input_width=16)


@pytest.fixture
def quick_train() -> TrainConfig:
    return TrainConfig(epochs=2, learning_rate=1e-3, augment=False, seed=0)


@pytest.fixture
def campaign_cfg() -> CampaignConfig:
    return CampaignConfig(specs=["C-S"], folds=2, spatial_threshold=0.5)


@pytest.fixture
def store(tmp_path) -> ResultsStore:
    return ResultsStore(str(tmp_path / "out"))


def small_spec(label: str, **overrides) -> ModelSpec:
    base = dict(hidden_size=4, attention_width=4)
    base.update(overrides)
    return ModelSpec.from_label(label, **base)


@pytest.fixture
def make_spec():
    return small_spec
