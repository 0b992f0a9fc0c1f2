"""합성 데이터 생성기 테스트"""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.spatial.distance import pdist

from errors import ConfigError, UnknownDomainError
from synthgen import RegionSpec, generate, split_leave_one_out, split_single_source


def test_same_seed_same_samples(small_spec):
    a = generate(small_spec, 3, 3, 30, seed=11)
    b = generate(small_spec, 3, 3, 30, seed=11)
    c = generate(small_spec, 3, 3, 30, seed=12)
    assert a.same_samples(b)
    assert not a.same_samples(c)


def test_default_layout():
    spec = RegionSpec()
    data = generate(spec, n_domains=4, n_classes=4, n_per_domain=100, seed=0)
    assert data.dims == 32
    assert data.n_samples == 400
    assert data.region_of_dim.count("III") == 8
    assert list(data.dims_in("I")) == list(range(8))
    assert list(data.dims_in("III", "IV")) == list(range(16, 32))


def test_labels_balanced_in_every_domain(small_dataset):
    for k in small_dataset.domains:
        counts = np.bincount(small_dataset.y[small_dataset.d == k], minlength=3)
        assert counts.tolist() == [20, 20, 20]


def test_class_means_are_separated(small_spec):
    data = generate(small_spec, 2, 5, 10, seed=3)
    assert pdist(data.latent.class_means).min() >= small_spec.class_separation - 1e-9
    assert pdist(data.latent.class_patterns).min() >= small_spec.class_separation - 1e-9


def test_region_three_scales_stay_positive(small_spec):
    data = generate(small_spec, 5, 2, 4, seed=0)
    assert np.all(data.latent.domain_scales >= 0.5)
    assert np.all(data.latent.domain_scales <= 1.5)


def test_region_four_class_means_shared_across_domains():
    spec = RegionSpec(k_I=1, k_II=1, k_III=1, k_IV=3, noise_std=0.3)
    data = generate(spec, n_domains=3, n_classes=2, n_per_domain=400, seed=5)
    cols = data.dims_in("IV")
    for k in range(3):
        for c in range(2):
            rows = (data.d == k) & (data.y == c)
            assert_allclose(data.x[rows][:, cols].mean(axis=0), data.latent.class_means[c], atol=0.1)


def test_random_orthogonal_mixing():
    spec = RegionSpec(k_I=2, k_II=2, k_III=2, k_IV=2, mixing="random-orthogonal")
    data = generate(spec, 2, 2, 10, seed=1)
    M = data.latent.mixing_matrix
    assert_allclose(M @ M.T, np.eye(8), atol=1e-12)
    assert data.mixing == "random-orthogonal"


@pytest.mark.parametrize("spec", [
    RegionSpec(k_III=0, k_IV=0),
    RegionSpec(k_I=-1),
    RegionSpec(mixing="shuffle"),
    RegionSpec(noise_std=-0.1),
])
def test_invalid_region_spec(spec):
    with pytest.raises(ConfigError):
        generate(spec, 2, 2, 10, seed=0)


def test_too_few_samples_per_domain(small_spec):
    with pytest.raises(ConfigError):
        generate(small_spec, 2, 4, 3, seed=0)


def test_leave_one_out_split(small_dataset):
    train, test = split_leave_one_out(small_dataset, 1)
    assert train.n_domains == 2
    assert train.domain_map == (0, 2)
    assert sorted(set(train.d.tolist())) == [0, 1]
    assert test.domain_map == (1,)
    assert set(test.d.tolist()) == {0}
    assert train.n_samples + test.n_samples == small_dataset.n_samples


def test_leave_one_out_unknown_domain(small_dataset):
    with pytest.raises(UnknownDomainError):
        split_leave_one_out(small_dataset, 7)


def test_leave_one_out_needs_a_training_domain(small_dataset):
    only = small_dataset.select_domains([2])
    with pytest.raises(ConfigError):
        split_leave_one_out(only, 0)


def test_select_no_domains(small_dataset):
    with pytest.raises(ConfigError):
        small_dataset.select_domains([])


def test_single_source_split(small_dataset):
    train, test = split_single_source(small_dataset, 2)
    assert train.n_domains == 1
    assert train.domain_map == (2,)
    assert test.domain_map == (0, 1)


def test_single_source_needs_other_domains(small_spec):
    data = generate(small_spec, 1, 2, 10, seed=0)
    with pytest.raises(ConfigError):
        split_single_source(data, 0)
