"""
INSURE 학습 루프.
인코더, 마스크, 두 분류기를 Adam으로 함께 최적화하고 SMA(단순 이동 평균) 스냅샷을 유지합니다.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np
import pandas as pd

from errors import ConfigError, NumericFault, TrainingAborted
from grad import Tape
from losses import Batch, LossBreakdown, LossWeights, ObjectiveConfig, insure_objective
from model import MASK_KEY, ModelOptions, ModelParams, init_model
from synthgen import SynthDataset

logger = logging.getLogger(__name__)

MODES = ("multi-dg", "single-dg")

# 단계별 지표 CSV 열 순서
METRIC_COLUMNS = [
    "step", "dis", "it_l", "it_d", "puri", "msr", "ib", "total",
    "alpha", "beta", "gamma", "mask_on",
]


@dataclass(frozen=True)
class TrainConfig:
    """학습 설정"""
    steps: int = 5000
    batch_size: int = 32
    lr_mask: float = 3.5e-4
    lr_rest: float = 5e-5
    weights: LossWeights = field(default_factory=LossWeights)
    sma_start: int = 100
    mode: str = "multi-dg"
    seed: int = 0
    use_msr: bool = True
    use_it: bool = True
    use_puri: bool = True
    purification: str = "label"
    train_mask: str = "hard"
    log_every: int = 500

    @property
    def horizon(self) -> int:
        """지수 스케줄 기간 T (= 전체 step 수)"""
        return self.steps

    @property
    def objective(self) -> ObjectiveConfig:
        return ObjectiveConfig(
            weights=self.weights,
            single_dg=self.mode == "single-dg",
            use_msr=self.use_msr,
            use_it=self.use_it,
            use_puri=self.use_puri,
            purification=self.purification,
            mask_mode=self.train_mask,
        )

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"알 수 없는 mode: {self.mode}")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps와 batch_size는 양수여야 합니다")
        if not self.sma_start < self.steps:
            raise ConfigError(f"sma_start({self.sma_start})는 steps({self.steps})보다 작아야 합니다")
        if self.lr_mask <= 0 or self.lr_rest <= 0:
            raise ConfigError("학습률은 양수여야 합니다")
        self.objective.validate()


def schedule_weight(step: int, horizon: int, final: float) -> float:
    """지수 증가 스케줄 final·(2/(1+exp(-10·step/T)) - 1), step 0에서 0"""
    if horizon == 0:
        return final
    progress = step / horizon
    return final * (2.0 / (1.0 + math.exp(-10.0 * progress)) - 1.0)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """1차/2차 모멘트와 step 카운터"""
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: Union[float, dict[str, float]],
    state: AdamState,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """
    편향 보정된 Adam 업데이트 한 번

    Args:
        params: {이름: 배열}
        grads: {이름: 기울기}
        lr: 공통 학습률 또는 파라미터별 학습률
        state: 이전 상태 (변경하지 않음)

    Returns:
        (새 파라미터, 새 상태)
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericFault(f"기울기 {name}에 유한하지 않은 값이 있어 step을 중단합니다")

    t = state.t + 1
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, value in params.items():
        g = grads[name]
        m = beta1 * state.m.get(name, np.zeros_like(value)) + (1.0 - beta1) * g
        v = beta2 * state.v.get(name, np.zeros_like(value)) + (1.0 - beta2) * (g * g)
        rate = lr[name] if isinstance(lr, dict) else lr
        new_params[name] = value - rate * (m / bc1) / (np.sqrt(v / bc2) + eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(new_m, new_v, t)


# ---------------------------------------------------------------------------
# SMA
# ---------------------------------------------------------------------------

@dataclass
class SmaState:
    """파라미터 산술 평균 스냅샷"""
    snapshot: Optional[dict[str, np.ndarray]] = None
    count: int = 0

    @property
    def started(self) -> bool:
        return self.count > 0


def sma_update(state: SmaState, params: dict[str, np.ndarray], step: int, sma_start: int) -> SmaState:
    """step(1부터)이 sma_start 이상이면 현재 파라미터를 누적 평균에 반영"""
    if step < sma_start:
        return state
    count = state.count + 1
    if state.snapshot is None:
        return SmaState({k: v.copy() for k, v in params.items()}, count)
    snapshot = {k: avg + (params[k] - avg) / count for k, avg in state.snapshot.items()}
    return SmaState(snapshot, count)


def sma_params(state: SmaState) -> Optional[dict[str, np.ndarray]]:
    """평균 스냅샷, 아직 기여가 없으면 None (시작 전)"""
    if not state.started:
        logger.debug("SMA 아직 시작 전")
        return None
    return {k: v.copy() for k, v in state.snapshot.items()}


# ---------------------------------------------------------------------------
# 학습
# ---------------------------------------------------------------------------

@dataclass
class TrainedModel:
    raw: ModelParams
    sma: Optional[ModelParams]

    @property
    def inference_params(self) -> ModelParams:
        return self.sma if self.sma is not None else self.raw


@dataclass
class RunMetrics:
    """단계별 기록과 최종 평가"""
    steps: list[dict] = field(default_factory=list)
    final: dict = field(default_factory=dict)

    def record(self, step: int, breakdown: LossBreakdown, mask_on: int):
        row = {"step": step, **breakdown.as_row(), "mask_on": mask_on}
        self.steps.append(row)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.steps, columns=METRIC_COLUMNS)

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False)


def model_options_for(dataset: SynthDataset, **overrides) -> ModelOptions:
    return ModelOptions(
        input_dim=dataset.dims,
        n_classes=dataset.n_classes,
        n_domains=max(dataset.n_domains, 1),
        **overrides,
    )


def sample_batch(dataset: SynthDataset, batch_size: int, rng: np.random.Generator) -> Batch:
    """학습 세트 전체에서 균등 추출 (도메인 비율은 크기에 비례)"""
    replace_rows = dataset.n_samples < batch_size
    rows = rng.choice(dataset.n_samples, size=batch_size, replace=replace_rows)
    return Batch(dataset.x[rows], dataset.y[rows], dataset.d[rows])


CheckpointCallback = Callable[[int, ModelParams], None]


def train(
    config: TrainConfig,
    options: ModelOptions,
    train_set: SynthDataset,
    on_checkpoint: Optional[CheckpointCallback] = None,
    checkpoint_every: int = 0,
) -> tuple[TrainedModel, RunMetrics]:
    """
    INSURE 공동 학습

    Args:
        config: 학습 설정
        options: 네트워크 구조
        train_set: 학습 데이터 (다중 소스 모드는 도메인 2개 이상)
        on_checkpoint: (step, 파라미터 사본) 콜백
        checkpoint_every: 콜백 간격 (0이면 호출 안 함)

    Returns:
        (TrainedModel, RunMetrics)
    """
    config.validate()
    options.validate()
    if config.mode == "multi-dg" and train_set.n_domains < 2:
        raise ConfigError(f"다중 소스 학습에는 도메인이 2개 이상 필요합니다 (현재 {train_set.n_domains})")

    rng = np.random.default_rng(config.seed)
    params = init_model(options, config.seed)
    objective = config.objective
    lr = {name: (config.lr_mask if name == MASK_KEY else config.lr_rest) for name in params.arrays}
    adam = AdamState()
    sma = SmaState()
    metrics = RunMetrics()

    logger.info(f"학습 시작: {config.steps} steps, 배치 {config.batch_size}, 모드 {config.mode}, "
                f"마스크 차원 {options.k}")

    for step in range(1, config.steps + 1):
        alpha = schedule_weight(step - 1, config.horizon, config.weights.alpha)
        beta = schedule_weight(step - 1, config.horizon, config.weights.beta)
        batch = sample_batch(train_set, config.batch_size, rng)

        tape = Tape()
        leaves = params.leaves(tape)
        try:
            loss, breakdown = insure_objective(tape, leaves, options, batch, objective, alpha, beta, rng)
            grads = tape.backward(loss, leaves)
            new_arrays, adam = adam_step(params.arrays, grads, lr, adam)
        except NumericFault as e:
            logger.error(f"step {step}: {e}")
            raise TrainingAborted(step, params.copy(), str(e)) from e

        params = ModelParams(options, new_arrays)
        sma = sma_update(sma, params.arrays, step, config.sma_start)
        metrics.record(step, breakdown, params.mask_on_count())

        if step % config.log_every == 0 or step == config.steps:
            logger.info(f"step {step}: total={breakdown.total:.4f} dis={breakdown.dis:.4f} "
                        f"it_l={breakdown.it_l:.4f} puri={breakdown.puri:.4f} "
                        f"마스크 on={params.mask_on_count()}/{options.k}")
        else:
            logger.debug(f"step {step}: total={breakdown.total:.4f}")

        if on_checkpoint is not None and checkpoint_every > 0 and step % checkpoint_every == 0:
            on_checkpoint(step, params.copy())

    snapshot = sma_params(sma)
    trained = TrainedModel(
        raw=params,
        sma=ModelParams(options, snapshot) if snapshot is not None else None,
    )
    logger.info(f"학습 완료: SMA 기여 {sma.count}회")
    return trained, metrics


def with_overrides(config: TrainConfig, **changes) -> TrainConfig:
    """가중치 필드(alpha 등)와 학습 필드를 함께 덮어쓴 사본"""
    weight_keys = {"alpha", "beta", "gamma", "eps_ib"}
    weight_changes = {k: v for k, v in changes.items() if k in weight_keys}
    other = {k: v for k, v in changes.items() if k not in weight_keys}
    if weight_changes:
        other["weights"] = replace(config.weights, **weight_changes)
    return replace(config, **other)
