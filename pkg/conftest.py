"""공용 pytest 픽스처 (작은 합성 데이터와 짧은 학습 설정)"""

import numpy as np
import pytest

from losses import LossWeights
from synthgen import RegionSpec, generate
from trainer import TrainConfig


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 긴 학습 (수 분 소요, -m slow로 실행)")


def pytest_collection_modifyitems(config, items):
    if config.option.markexpr:
        return
    skip_slow = pytest.mark.skip(reason="긴 학습은 -m slow로 실행")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def small_spec():
    return RegionSpec(k_I=2, k_II=2, k_III=2, k_IV=2, noise_std=0.3)


@pytest.fixture
def small_dataset(small_spec):
    """도메인 3개, 클래스 3개, 8차원"""
    return generate(small_spec, n_domains=3, n_classes=3, n_per_domain=60, seed=0)


@pytest.fixture
def quick_config():
    return TrainConfig(
        steps=30,
        batch_size=16,
        lr_mask=1e-2,
        lr_rest=1e-2,
        weights=LossWeights(),
        sma_start=10,
        log_every=10,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
