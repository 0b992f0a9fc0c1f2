"""평가 지표와 실험 실행기 테스트"""

import json

import numpy as np
import pytest

from errors import ContractError
from evaluator import (
    ABLATION_VARIANTS,
    MANIFEST_VERSION,
    accuracy,
    disentangler_accounting,
    estimate_label_information,
    label_entropy,
    mask_recovery,
    mask_type_grid,
    prediction_parity,
    recovery_scores,
    region3_experiment,
    results_frame,
    run_ablation,
    run_tasks,
    seed_statistics,
    sensitivity_sweep,
    sufficiency_sweep,
    write_manifest,
    _make_tasks,
)
from model import MASK_KEY, init_model
from synthgen import RegionSpec, generate, split_leave_one_out
from trainer import model_options_for, with_overrides


@pytest.fixture
def tiny_config(quick_config):
    return with_overrides(quick_config, steps=6, sma_start=3, log_every=3)


@pytest.fixture
def probe_params(small_dataset):
    return init_model(model_options_for(small_dataset, probe=True), 0)


def test_recovery_scores_by_hand():
    scores = recovery_scores([1, 1, 0, 0], ["I", "III", "III", "IV"])
    assert scores.precision == pytest.approx(0.5)
    assert scores.recall == pytest.approx(1 / 3)
    assert scores.f1 == pytest.approx(0.4)
    assert (scores.n_on, scores.n_target) == (2, 3)


def test_empty_mask_has_undefined_precision():
    scores = recovery_scores([0, 0, 0], ["I", "III", "IV"])
    assert scores.precision is None
    assert scores.recall == 0.0
    assert scores.f1 is None


def test_no_hits_gives_zero_f1():
    scores = recovery_scores([1, 0], ["I", "IV"])
    assert scores.precision == 0.0
    assert scores.f1 == 0.0


def test_recovery_is_permutation_equivariant(rng):
    regions = np.array(["I", "II", "III", "IV"] * 3)
    mask = rng.integers(0, 2, size=regions.size)
    perm = rng.permutation(regions.size)
    assert recovery_scores(mask, regions.tolist()) == recovery_scores(mask[perm], regions[perm].tolist())


def test_recovery_width_mismatch():
    with pytest.raises(ContractError):
        recovery_scores([1, 0], ["I", "II", "III"])


def test_mask_recovery_perfect_mask(small_dataset, probe_params):
    logits = np.where(np.isin(small_dataset.region_of_dim, ["III", "IV"]), -5.0, 5.0)
    probe_params.arrays[MASK_KEY] = logits
    scores = mask_recovery(probe_params, small_dataset)
    assert scores.precision == 1.0
    assert scores.recall == 1.0
    assert scores.f1 == pytest.approx(1.0)


def test_initial_all_on_mask_has_full_recall(small_dataset, probe_params):
    scores = mask_recovery(probe_params, small_dataset)
    assert scores.recall == 1.0
    assert scores.precision == pytest.approx(4 / 8)


def test_mask_recovery_refuses_learned_encoder(small_dataset):
    params = init_model(model_options_for(small_dataset, feature_dim=8, hidden_layers=1, hidden_width=4), 0)
    with pytest.raises(ContractError):
        mask_recovery(params, small_dataset)


def test_mask_recovery_refuses_mixed_dimensions():
    spec = RegionSpec(k_I=2, k_II=2, k_III=2, k_IV=2, mixing="random-orthogonal")
    data = generate(spec, 2, 2, 10, seed=0)
    params = init_model(model_options_for(data, probe=True), 0)
    with pytest.raises(ContractError):
        mask_recovery(params, data)


def test_information_of_independent_features_is_small(rng):
    labels = np.arange(2000) % 4
    features = rng.standard_normal((2000, 5))
    estimate = estimate_label_information(features, labels)
    assert 0.0 <= estimate.value <= 0.05
    assert not estimate.degenerate


def test_information_of_one_hot_features_is_entropy():
    labels = np.arange(2000) % 4
    features = np.eye(4)[labels]
    estimate = estimate_label_information(features, labels)
    assert estimate.entropy == pytest.approx(np.log(4))
    assert estimate.value == pytest.approx(np.log(4), abs=0.05)
    assert estimate.value <= estimate.entropy


def test_information_with_single_label_is_degenerate(rng):
    estimate = estimate_label_information(rng.standard_normal((300, 3)), np.zeros(300, dtype=int))
    assert estimate.degenerate
    assert estimate.value == 0.0


def test_information_needs_enough_samples(rng):
    with pytest.raises(ContractError):
        estimate_label_information(rng.standard_normal((150, 3)), np.arange(150) % 2)


def test_label_entropy():
    assert label_entropy(np.array([0, 1, 0, 1])) == pytest.approx(np.log(2))
    assert label_entropy(np.array([3, 3])) == 0.0


def test_zero_classifier_scores_chance(small_dataset, probe_params):
    probe_params.arrays["f.W"][:] = 0.0
    probe_params.arrays["f.b"][:] = 0.0
    assert accuracy(probe_params, small_dataset) == pytest.approx(1 / 3)


def test_accuracy_rejects_width_mismatch(small_dataset):
    other = generate(RegionSpec(k_I=1, k_II=1, k_III=1, k_IV=1), 2, 2, 10, seed=0)
    params = init_model(model_options_for(other, probe=True), 0)
    with pytest.raises(ContractError):
        accuracy(params, small_dataset)


def test_saturated_mask_gives_matching_predictions(small_dataset, probe_params, rng):
    probe_params.arrays[MASK_KEY] = rng.choice([-8.0, 8.0], size=small_dataset.dims)
    assert prediction_parity(probe_params, small_dataset.x) >= 0.95


def test_disentangler_accounting(small_dataset, probe_params, rng):
    probe_params.arrays[MASK_KEY] = rng.choice([-3.0, 3.0], size=small_dataset.dims)
    report = disentangler_accounting(probe_params, small_dataset.x)
    assert report.mask_params == 8
    assert report.two_encoder_params == 2 * (64 + 8)
    assert report.inner_product == 0.0
    assert report.reconstruction_error == 0.0
    assert len(report.lines()) == 4


def test_tiny_ablation(small_dataset, tiny_config):
    report = run_ablation(small_dataset, tiny_config, {"probe": True}, seeds=(0,))
    frame = report.to_frame()
    assert frame["variant"].tolist() == [name for name, *_ in ABLATION_VARIANTS]
    assert [c for c in frame.columns if c.startswith("domain_")] == ["domain_0", "domain_1", "domain_2"]
    assert frame["mean"].between(0.0, 1.0).all()
    assert len(report.runs) == 8 * 3
    assert report.row("Full").use_msr and report.row("Full").use_puri
    assert not report.row("Baseline").use_it

    stats = seed_statistics(report.runs)
    assert list(stats.columns) == ["variant", "domain", "min", "max", "mean", "std"]
    assert len(stats) == 8 * 3
    assert (stats["std"] == 0.0).all()


def test_ablation_needs_two_domains(small_dataset, tiny_config):
    with pytest.raises(ContractError):
        run_ablation(small_dataset.select_domains([0]), tiny_config, {"probe": True}, seeds=(0,))


def test_region3_rows(small_dataset, tiny_config):
    rows = region3_experiment(small_dataset, tiny_config, {"probe": True}, seeds=(0,))
    assert [r.variant for r in rows] == ["A", "B"]
    assert [r.purification for r in rows] == ["label", "domain"]
    for r in rows:
        assert 0.0 <= r.accuracy <= 1.0
        assert r.recall_III is not None


def test_region3_needs_region_three(tiny_config):
    data = generate(RegionSpec(k_I=2, k_II=2, k_III=0, k_IV=2), 2, 2, 20, seed=0)
    with pytest.raises(ContractError):
        region3_experiment(data, tiny_config, {"probe": True}, seeds=(0,))


def test_mask_type_grid(small_dataset, tiny_config):
    frame = mask_type_grid(small_dataset, tiny_config, {"probe": True}, seeds=(0,))
    assert len(frame) == 4
    assert set(zip(frame["train_mask"], frame["infer_mask"])) == {
        ("hard", "hard"), ("hard", "soft"), ("soft", "hard"), ("soft", "soft")
    }


def test_sensitivity_with_custom_grid(small_dataset, tiny_config):
    frame = sensitivity_sweep(small_dataset, tiny_config, {"probe": True}, seeds=(0,),
                              grid={"alpha": (1.0, 2.0), "gamma": (0.5,)})
    assert frame["parameter"].tolist() == ["alpha", "alpha", "gamma"]
    assert frame["value"].tolist() == [1.0, 2.0, 0.5]


def test_sufficiency_sweep_frame(small_spec, quick_config):
    data = generate(small_spec, 3, 3, 210, seed=0)
    train_set, test_set = split_leave_one_out(data, 0)
    config = with_overrides(quick_config, steps=20, sma_start=5)
    sweep = sufficiency_sweep(train_set, test_set, config, {"probe": True}, n_checkpoints=4)
    assert list(sweep.frame.columns) == ["step", "it_l", "info_z", "info_z_star", "gap", "mask_on"]
    assert sweep.frame["step"].tolist() == [5, 10, 15, 20]
    assert (sweep.frame["it_l"] >= -1e-12).all()
    assert np.isnan(sweep.spearman) or -1.0 <= sweep.spearman <= 1.0


def test_sufficiency_sweep_needs_two_snapshots(small_dataset, quick_config):
    train_set, test_set = split_leave_one_out(small_dataset, 0)
    with pytest.raises(ContractError):
        sufficiency_sweep(train_set, test_set, quick_config, {"probe": True}, n_checkpoints=1)


def test_parallel_runs_match_sequential(small_dataset, tiny_config):
    tasks = _make_tasks(small_dataset, [("Full", tiny_config)], {"probe": True}, seeds=(0, 1))
    sequential = results_frame(run_tasks(tasks, jobs=1))
    parallel = results_frame(run_tasks(tasks, jobs=2))
    assert sequential.equals(parallel)


def test_manifest_contents(tmp_path):
    path = tmp_path / "out" / "manifest.json"
    write_manifest(path, "ablate", {"alpha": 9.0}, "abc", (0, 1), ["ablation.csv"], {"elapsed": 1.5})
    manifest = json.loads(path.read_text(encoding="utf-8"))
    assert manifest["version"] == MANIFEST_VERSION
    assert manifest["command"] == "ablate"
    assert manifest["config"] == {"alpha": 9.0}
    assert manifest["seeds"] == [0, 1]
    assert manifest["outputs"] == ["ablation.csv"]
    assert manifest["elapsed"] == 1.5
