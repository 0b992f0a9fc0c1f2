"""
평가 모듈.
보지 않은 도메인 정확도, 마스크 영역 복원, 프로브 기반 정보량 추정과
ablation / 영역 III / 마스크 방식 / 민감도 / 충분성 실험을 담당합니다.
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.special import log_softmax, softmax
from scipy.stats import spearmanr

from errors import ContractError
from grad import GradCheckReport, Tape, Tensor, check_gradient
from losses import Batch, ObjectiveConfig, insure_objective, it_label_loss
from model import MASK_KEY, MASK_MODES, ModelParams, disentangle, encode, infer, predict
from synthgen import SynthDataset, split_leave_one_out, split_single_source
from trainer import TrainConfig, model_options_for, train, with_overrides

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (0, 1, 2, 3, 4)
CLASS_RELEVANT = ("III", "IV")
MANIFEST_VERSION = "INSURE-MANIFEST v1"

# 프로브 설정
PROBE_MIN_SAMPLES = 200
PROBE_L2 = 1e-4
PROBE_HOLDOUT = 0.2

# (이름, msr, IT, Puri)
ABLATION_VARIANTS = [
    ("Baseline", False, False, False),
    ("+msr", True, False, False),
    ("+IT", False, True, False),
    ("+Puri", False, False, True),
    ("+msr+IT", True, True, False),
    ("+msr+Puri", True, False, True),
    ("+IT+Puri", False, True, True),
    ("Full", True, True, True),
]

SENSITIVITY_GRID = {
    "alpha": (5.0, 7.0, 9.0, 12.0, 15.0),
    "beta": (0.5, 0.7, 1.0, 1.2, 1.5),
    "gamma": (0.5, 0.7, 1.0, 1.2, 1.5),
}


# ---------------------------------------------------------------------------
# 정확도 / 마스크 복원
# ---------------------------------------------------------------------------

def _check_width(params: ModelParams, dataset: SynthDataset):
    if params.options.input_dim != dataset.dims:
        raise ContractError(f"모델 입력 폭 {params.options.input_dim} != 데이터 차원 {dataset.dims}")


def accuracy(params: ModelParams, dataset: SynthDataset, mask_mode: str = "hard") -> float:
    """f(z*) argmax 정확도 (결정적 인코딩)"""
    _check_width(params, dataset)
    if dataset.n_samples == 0:
        return float("nan")
    return float(np.mean(predict(params, dataset.x, mask_mode) == dataset.y))


def prediction_parity(params: ModelParams, x: np.ndarray) -> float:
    """hard/soft 추론 예측이 일치하는 샘플 비율"""
    hard = predict(params, x, "hard")
    soft = predict(params, x, "soft")
    return float(np.mean(hard == soft))


@dataclass(frozen=True)
class MaskRecovery:
    """마스크 on 차원과 정답 영역의 일치도 (정의되지 않으면 None)"""
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    n_on: int
    n_target: int

    def as_row(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def recovery_scores(
    mask_on: np.ndarray,
    region_of_dim: Sequence[str],
    target: Iterable[str] = CLASS_RELEVANT,
) -> MaskRecovery:
    """이진 마스크와 차원별 영역 목록으로 precision/recall/f1 계산"""
    mask_on = np.asarray(mask_on, dtype=bool)
    if mask_on.shape != (len(region_of_dim),):
        raise ContractError(f"마스크 폭 {mask_on.shape} != 영역 수 {len(region_of_dim)}")
    target = set(target)
    truth = np.array([r in target for r in region_of_dim], dtype=bool)
    hits = int(np.sum(mask_on & truth))
    n_on, n_target = int(mask_on.sum()), int(truth.sum())

    precision = hits / n_on if n_on else None
    recall = hits / n_target if n_target else None
    f1 = None
    if precision is not None and recall is not None:
        f1 = 0.0 if hits == 0 else 2 * precision * recall / (precision + recall)
    return MaskRecovery(precision, recall, f1, n_on, n_target)


def mask_recovery(
    params: ModelParams,
    dataset: SynthDataset,
    target: Iterable[str] = CLASS_RELEVANT,
) -> MaskRecovery:
    """
    하드 마스크가 켠 차원을 정답 영역과 비교

    인코더가 항등(probe)이고 혼합이 없을 때만 마스크 차원이 원래 차원과 대응합니다.
    """
    if not params.options.probe:
        raise ContractError("마스크 복원은 probe 모드에서만 의미가 있습니다 (인코더가 차원을 섞음)")
    if dataset.mixing != "identity":
        raise ContractError(f"mixing={dataset.mixing} 데이터는 차원별 정답이 관측 차원과 대응하지 않습니다")
    if not dataset.has_ground_truth:
        raise ContractError("정답 영역이 없는 데이터셋입니다")
    _check_width(params, dataset)
    return recovery_scores(params.hard_mask() > 0.5, dataset.region_of_dim, target)


# ---------------------------------------------------------------------------
# 정보량 추정 (프로브 교차 엔트로피)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InformationEstimate:
    """Î(feature; y) = H(y) - CE_holdout (nats)"""
    value: float
    entropy: float
    holdout_ce: float
    degenerate: bool = False


def label_entropy(labels: np.ndarray) -> float:
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p)))


def _standardize(train: np.ndarray, test: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std[std < 1e-12] = 1.0
    return (train - mean) / std, (test - mean) / std


def fit_probe(features: np.ndarray, labels: np.ndarray, n_classes: int, l2: float = PROBE_L2) -> tuple[np.ndarray, np.ndarray]:
    """L2 정규화 다항 로지스틱 회귀 (L-BFGS)"""
    n, k = features.shape
    onehot = np.eye(n_classes)[labels]

    def objective(theta: np.ndarray) -> tuple[float, np.ndarray]:
        W = theta[:k * n_classes].reshape(k, n_classes)
        b = theta[k * n_classes:]
        logits = features @ W + b
        logp = log_softmax(logits, axis=1)
        loss = -np.sum(onehot * logp) / n + 0.5 * l2 * np.sum(W * W)
        delta = (softmax(logits, axis=1) - onehot) / n
        grad_W = features.T @ delta + l2 * W
        return loss, np.concatenate([grad_W.ravel(), delta.sum(axis=0)])

    theta0 = np.zeros(k * n_classes + n_classes)
    result = minimize(objective, theta0, jac=True, method="L-BFGS-B", options={"maxiter": 500})
    if not result.success:
        logger.debug(f"프로브 최적화 미수렴: {result.message}")
    theta = result.x
    return theta[:k * n_classes].reshape(k, n_classes), theta[k * n_classes:]


def estimate_label_information(
    features: np.ndarray,
    labels: np.ndarray,
    split_seed: int = 0,
    n_classes: Optional[int] = None,
) -> InformationEstimate:
    """
    프로브 분류기로 상호정보량 추정

    Args:
        features: (n, k) 특징
        labels: (n,) 정수 라벨
        split_seed: 80/20 분할 시드
        n_classes: 클래스 수 (생략하면 labels.max()+1)

    Returns:
        InformationEstimate (값은 [0, H(y)]로 잘림)
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.shape[0]
    if n < PROBE_MIN_SAMPLES:
        raise ContractError(f"정보량 추정에는 샘플이 {PROBE_MIN_SAMPLES}개 이상 필요합니다 (현재 {n})")
    if features.ndim != 2 or features.shape[0] != n:
        raise ContractError(f"특징 형태 {features.shape}와 라벨 수 {n} 불일치")

    entropy = label_entropy(labels)
    if np.unique(labels).size < 2:
        return InformationEstimate(0.0, 0.0, 0.0, degenerate=True)

    n_classes = n_classes or int(labels.max()) + 1
    order = np.random.default_rng(split_seed).permutation(n)
    n_test = int(round(n * PROBE_HOLDOUT))
    test_rows, train_rows = order[:n_test], order[n_test:]

    x_train, x_test = _standardize(features[train_rows], features[test_rows])
    W, b = fit_probe(x_train, labels[train_rows], n_classes)
    logp = log_softmax(x_test @ W + b, axis=1)
    holdout_ce = float(-np.mean(logp[np.arange(n_test), labels[test_rows]]))

    value = float(np.clip(entropy - holdout_ce, 0.0, entropy))
    return InformationEstimate(value, entropy, holdout_ce)


@dataclass(frozen=True)
class SufficiencyPoint:
    """한 스냅샷의 it_label_loss와 정보량 차이"""
    it_label: float
    info_z: float
    info_z_star: float

    @property
    def gap(self) -> float:
        return self.info_z - self.info_z_star


def evaluate_it_label(params: ModelParams, x: np.ndarray, mask_mode: str = "hard") -> float:
    """결정적 인코딩에서 D_KL[f(z) ‖ f(z*)] 배치 평균"""
    tape = Tape()
    leaves = params.constants(tape)
    enc = encode(leaves, params.options, tape.constant(x), stochastic=False)
    z_star, _ = disentangle(enc.z, leaves[MASK_KEY], mask_mode)
    return it_label_loss(leaves, enc.z, z_star).item()


def sufficiency_point(params: ModelParams, dataset: SynthDataset, split_seed: int = 0) -> SufficiencyPoint:
    view = infer(params, dataset.x)
    n_classes = dataset.n_classes
    return SufficiencyPoint(
        it_label=evaluate_it_label(params, dataset.x),
        info_z=estimate_label_information(view.z, dataset.y, split_seed, n_classes).value,
        info_z_star=estimate_label_information(view.z_star, dataset.y, split_seed, n_classes).value,
    )


# ---------------------------------------------------------------------------
# 분리기 비교
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DisentanglerReport:
    """이진 마스크 분리기와 두 인코더 분리기의 파라미터 수, 직교성, 무손실성"""
    mask_params: int
    two_encoder_params: int
    inner_product: float
    reconstruction_error: float

    def lines(self) -> list[str]:
        return [
            f"마스크 분리기 파라미터: {self.mask_params}",
            f"두 인코더 분리기 파라미터: {self.two_encoder_params}",
            f"평균 |<z*, z′>|: {self.inner_product:.3e}",
            f"최대 |z* + z′ - z|: {self.reconstruction_error:.3e}",
        ]


def disentangler_accounting(params: ModelParams, x: np.ndarray, mask_mode: str = "hard") -> DisentanglerReport:
    k = params.options.k
    view = infer(params, x, mask_mode)
    inner = np.abs(np.sum(view.z_star * view.z_prime, axis=1))
    return DisentanglerReport(
        mask_params=k,
        two_encoder_params=2 * (k * k + k),
        inner_product=float(inner.mean()) if inner.size else 0.0,
        reconstruction_error=float(np.max(np.abs(view.z_star + view.z_prime - view.z))) if inner.size else 0.0,
    )


# ---------------------------------------------------------------------------
# 실험 실행기
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunTask:
    """독립 학습 한 번 (프로세스 간 전달 가능)"""
    order: int
    label: str
    domain: int
    seed: int
    config: TrainConfig
    model_kwargs: dict
    train_set: SynthDataset
    test_set: SynthDataset


@dataclass
class RunResult:
    order: int
    label: str
    domain: int
    seed: int
    accuracy: dict[str, float]  # 추론 마스크 방식별
    parity: float
    recovery: dict[str, Optional[float]] = field(default_factory=dict)


def protocol_splits(dataset: SynthDataset, mode: str) -> list[tuple[int, SynthDataset, SynthDataset]]:
    """다중 소스는 leave-one-domain-out, 단일 소스는 도메인 하나로 학습"""
    splitter = split_single_source if mode == "single-dg" else split_leave_one_out
    splits = []
    for domain in dataset.domains:
        train_set, test_set = splitter(dataset, domain)
        splits.append((dataset.domain_map[domain], train_set, test_set))
    return splits


def run_task(task: RunTask) -> RunResult:
    """학습 후 SMA 스냅샷으로 평가"""
    options = model_options_for(task.train_set, **task.model_kwargs)
    trained, _ = train(task.config, options, task.train_set)
    params = trained.inference_params
    result = RunResult(
        order=task.order,
        label=task.label,
        domain=task.domain,
        seed=task.seed,
        accuracy={mode: accuracy(params, task.test_set, mode) for mode in MASK_MODES},
        parity=prediction_parity(params, task.test_set.x),
    )
    if options.probe and task.test_set.has_ground_truth and task.test_set.mixing == "identity":
        for region in ("III", "IV"):
            if task.test_set.dims_in(region).size:
                result.recovery[region] = mask_recovery(params, task.test_set, (region,)).recall
        result.recovery["precision"] = mask_recovery(params, task.test_set).precision
    return result


def run_tasks(tasks: list[RunTask], jobs: int = 1) -> list[RunResult]:
    """작업 실행 (jobs > 1이면 프로세스 병렬), 결과는 작업 순서대로 정렬"""
    results: list[RunResult] = []
    if jobs <= 1:
        for task in tasks:
            results.append(run_task(task))
            logger.debug(f"완료: {task.label} 도메인 {task.domain} seed {task.seed}")
    else:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            futures = {executor.submit(run_task, task): task for task in tasks}
            for future in as_completed(futures):
                task = futures[future]
                results.append(future.result())
                logger.debug(f"완료: {task.label} 도메인 {task.domain} seed {task.seed}")
    return sorted(results, key=lambda r: r.order)


def _make_tasks(
    dataset: SynthDataset,
    variants: list[tuple[str, TrainConfig]],
    model_kwargs: dict,
    seeds: Sequence[int],
) -> list[RunTask]:
    tasks = []
    for label, config in variants:
        for domain, train_set, test_set in protocol_splits(dataset, config.mode):
            for seed in seeds:
                tasks.append(RunTask(
                    order=len(tasks),
                    label=label,
                    domain=domain,
                    seed=seed,
                    config=with_overrides(config, seed=seed),
                    model_kwargs=dict(model_kwargs),
                    train_set=train_set,
                    test_set=test_set,
                ))
    return tasks


def results_frame(results: list[RunResult]) -> pd.DataFrame:
    """실행 결과 한 줄씩"""
    rows = []
    for r in results:
        row = {"label": r.label, "domain": r.domain, "seed": r.seed}
        row.update({f"acc_{mode}": acc for mode, acc in r.accuracy.items()})
        row["parity"] = r.parity
        row.update({f"recovery_{k}": v for k, v in r.recovery.items()})
        rows.append(row)
    return pd.DataFrame(rows)


def _mean_table(frame: pd.DataFrame, column: str = "acc_hard") -> pd.DataFrame:
    """label × domain 평균 정확도 표와 mean 열"""
    table = frame.pivot_table(index="label", columns="domain", values=column, aggfunc="mean", sort=False)
    table.columns = [f"domain_{c}" for c in table.columns]
    table["mean"] = table.mean(axis=1)
    return table.reset_index()


# ---------------------------------------------------------------------------
# Ablation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AblationRow:
    variant: str
    use_msr: bool
    use_it: bool
    use_puri: bool
    accuracies: dict[int, float]
    mean: float

    def as_row(self) -> dict:
        row = {"variant": self.variant, "msr": self.use_msr, "it": self.use_it, "puri": self.use_puri}
        row.update({f"domain_{d}": acc for d, acc in self.accuracies.items()})
        row["mean"] = self.mean
        return row


@dataclass
class AblationReport:
    rows: list[AblationRow]
    runs: list[RunResult]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.as_row() for row in self.rows])

    def row(self, variant: str) -> AblationRow:
        for r in self.rows:
            if r.variant == variant:
                return r
        raise KeyError(variant)


def ablation_configs(base: TrainConfig) -> list[tuple[str, TrainConfig]]:
    return [
        (name, with_overrides(base, use_msr=msr, use_it=it, use_puri=puri))
        for name, msr, it, puri in ABLATION_VARIANTS
    ]


def run_ablation(
    dataset: SynthDataset,
    base_config: TrainConfig,
    model_kwargs: Optional[dict] = None,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    jobs: int = 1,
) -> AblationReport:
    """
    손실 항 조합 8가지를 leave-one-domain-out으로 학습하고 평균 정확도 표 생성

    Returns:
        AblationReport (variant 순서 고정)
    """
    if dataset.n_domains < 2:
        raise ContractError("ablation에는 도메인이 2개 이상 필요합니다")
    variants = ablation_configs(base_config)
    tasks = _make_tasks(dataset, variants, model_kwargs or {}, seeds)
    logger.info(f"ablation: 변형 {len(variants)}개 × 도메인 {dataset.n_domains}개 × seed {len(seeds)}개 "
                f"= {len(tasks)}회 학습")
    results = run_tasks(tasks, jobs)

    frame = results_frame(results)
    table = _mean_table(frame).set_index("label")
    rows = []
    for name, msr, it, puri in ABLATION_VARIANTS:
        accs = {int(c.split("_")[1]): float(table.at[name, c]) for c in table.columns if c.startswith("domain_")}
        rows.append(AblationRow(name, msr, it, puri, accs, float(table.at[name, "mean"])))
        logger.info(f"{name:>10}: 평균 정확도 {rows[-1].mean:.4f}")
    return AblationReport(rows, results)


def seed_statistics(results: list[RunResult], column: str = "acc_hard") -> pd.DataFrame:
    """변형 × 보지 않은 도메인별 seed 통계 (min/max/mean/std)"""
    frame = results_frame(results)
    stats = (
        frame.groupby(["label", "domain"], sort=False)[column]
        .agg(["min", "max", "mean", lambda s: float(np.std(s.to_numpy()))])
        .reset_index()
    )
    stats.columns = ["variant", "domain", "min", "max", "mean", "std"]
    return stats


# ---------------------------------------------------------------------------
# 영역 III 실험
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Region3Row:
    variant: str
    purification: str
    accuracy: float
    recall_III: Optional[float]
    recall_IV: Optional[float]

    def as_row(self) -> dict:
        return {
            "variant": self.variant,
            "purification": self.purification,
            "accuracy": self.accuracy,
            "recall_III": self.recall_III,
            "recall_IV": self.recall_IV,
        }


def _mean_or_none(values: list[Optional[float]]) -> Optional[float]:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def region3_experiment(
    dataset: SynthDataset,
    config: TrainConfig,
    model_kwargs: Optional[dict] = None,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    jobs: int = 1,
) -> list[Region3Row]:
    """
    라벨 분류기 정화(z*가 영역 III 유지)와 도메인 분류기 정화(z*가 영역 III 버림) 비교

    Returns:
        두 줄 (label 정화, domain 정화)
    """
    if not dataset.has_ground_truth or dataset.dims_in("III").size == 0:
        raise ContractError("영역 III 차원이 없으면 이 실험은 의미가 없습니다")
    variants = [
        ("A", with_overrides(config, purification="label", use_puri=True)),
        ("B", with_overrides(config, purification="domain", use_puri=True)),
    ]
    results = run_tasks(_make_tasks(dataset, variants, model_kwargs or {}, seeds), jobs)

    rows = []
    for label, cfg in variants:
        mine = [r for r in results if r.label == label]
        rows.append(Region3Row(
            variant=label,
            purification=cfg.purification,
            accuracy=float(np.mean([r.accuracy["hard"] for r in mine])),
            recall_III=_mean_or_none([r.recovery.get("III") for r in mine]),
            recall_IV=_mean_or_none([r.recovery.get("IV") for r in mine]),
        ))
        logger.info(f"영역 III 실험 {label} ({cfg.purification} 정화): 정확도 {rows[-1].accuracy:.4f}")
    return rows


# ---------------------------------------------------------------------------
# 마스크 방식 / 민감도
# ---------------------------------------------------------------------------

def mask_type_grid(
    dataset: SynthDataset,
    config: TrainConfig,
    model_kwargs: Optional[dict] = None,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    jobs: int = 1,
) -> pd.DataFrame:
    """학습(hard/soft) × 추론(hard/soft) 평균 정확도 4줄"""
    variants = [(mode, with_overrides(config, train_mask=mode)) for mode in MASK_MODES]
    results = run_tasks(_make_tasks(dataset, variants, model_kwargs or {}, seeds), jobs)
    rows = []
    for train_mode in MASK_MODES:
        mine = [r for r in results if r.label == train_mode]
        for infer_mode in MASK_MODES:
            rows.append({
                "train_mask": train_mode,
                "infer_mask": infer_mode,
                "accuracy": float(np.mean([r.accuracy[infer_mode] for r in mine])),
            })
    return pd.DataFrame(rows)


def sensitivity_sweep(
    dataset: SynthDataset,
    config: TrainConfig,
    model_kwargs: Optional[dict] = None,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    jobs: int = 1,
    grid: Optional[dict[str, Sequence[float]]] = None,
) -> pd.DataFrame:
    """α, β, γ를 하나씩 바꾸며 평균 정확도 측정 (나머지는 설정값 고정)"""
    grid = grid or SENSITIVITY_GRID
    variants = [
        (f"{name}={value:g}", with_overrides(config, **{name: float(value)}))
        for name, values in grid.items()
        for value in values
    ]
    results = run_tasks(_make_tasks(dataset, variants, model_kwargs or {}, seeds), jobs)
    rows = []
    for label, _ in variants:
        name, value = label.split("=")
        accs = [r.accuracy["hard"] for r in results if r.label == label]
        rows.append({"parameter": name, "value": float(value), "accuracy": float(np.mean(accs))})
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# 충분성 (it_label_loss와 정보량 차이)
# ---------------------------------------------------------------------------

@dataclass
class SufficiencySweep:
    frame: pd.DataFrame
    spearman: float


def sufficiency_sweep(
    train_set: SynthDataset,
    test_set: SynthDataset,
    config: TrainConfig,
    model_kwargs: Optional[dict] = None,
    n_checkpoints: int = 10,
    split_seed: int = 0,
) -> SufficiencySweep:
    """
    한 번 학습하며 스냅샷을 n_checkpoints개 이상 모으고,
    보지 않은 데이터에서 it_label_loss와 Î(z;y) - Î(z*;y)의 순위 상관을 계산
    """
    if n_checkpoints < 2:
        raise ContractError("스냅샷이 2개 이상 필요합니다")
    options = model_options_for(train_set, **(model_kwargs or {}))
    every = max(1, config.steps // n_checkpoints)
    snapshots: list[tuple[int, ModelParams]] = []
    train(config, options, train_set,
          on_checkpoint=lambda step, params: snapshots.append((step, params)),
          checkpoint_every=every)

    rows = []
    for step, params in snapshots:
        point = sufficiency_point(params, test_set, split_seed)
        rows.append({
            "step": step,
            "it_l": point.it_label,
            "info_z": point.info_z,
            "info_z_star": point.info_z_star,
            "gap": point.gap,
            "mask_on": params.mask_on_count(),
        })
        logger.debug(f"step {step}: it_l={point.it_label:.4f} gap={point.gap:.4f}")
    frame = pd.DataFrame(rows)

    rho = float("nan")
    if len(frame) >= 2 and frame["it_l"].nunique() > 1 and frame["gap"].nunique() > 1:
        rho = float(spearmanr(frame["it_l"], frame["gap"]).correlation)
    logger.info(f"스냅샷 {len(frame)}개, Spearman ρ = {rho:.3f}")
    return SufficiencySweep(frame, rho)


# ---------------------------------------------------------------------------
# 보고서 파일
# ---------------------------------------------------------------------------

def write_frame(frame: pd.DataFrame, path: Union[str, Path]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.info(f"표 저장: {path} ({len(frame)}줄)")


def write_manifest(
    path: Union[str, Path],
    command: str,
    config: dict,
    config_hash: str,
    seeds: Sequence[int],
    outputs: Sequence[str] = (),
    extra: Optional[dict] = None,
):
    """실행 재현에 필요한 정보 (해석된 설정 전체 포함)"""
    manifest = {
        "version": MANIFEST_VERSION,
        "command": command,
        "config_hash": config_hash,
        "config": config,
        "seeds": list(seeds),
        "outputs": list(outputs),
    }
    if extra:
        manifest.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False, default=str), encoding='utf-8')
    logger.info(f"매니페스트 저장: {path}")


# ---------------------------------------------------------------------------
# 전체 목적 함수 기울기 검사
# ---------------------------------------------------------------------------

def gradcheck_objective(
    params: ModelParams,
    batch: Batch,
    objective: ObjectiveConfig,
    seed: int = 0,
    tol: float = 1e-4,
) -> GradCheckReport:
    """
    한 미니배치의 전체 손실 그래프를 유한 차분과 비교

    IB 샘플링과 배치 섞기는 매 평가마다 같은 seed로 다시 만들어 그래프가 동일합니다.
    α, β는 최종값을 사용합니다.
    """
    weights = objective.weights

    def build(tape: Tape, leaves: dict) -> Tensor:
        rng = np.random.default_rng(seed)
        loss, _ = insure_objective(tape, leaves, params.options, batch, objective,
                                   weights.alpha, weights.beta, rng)
        return loss

    report = check_gradient(build, params.arrays, tol=tol)
    logger.info(report.summary())
    return report
