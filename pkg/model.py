"""
INSURE 네트워크 모듈.
정보 병목(IB) 헤드를 가진 확률적 인코더, 이진 마스크 분리기, 클래스 분류기 f와 도메인 분류기 g.
"""

import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np

import grad
from errors import ConfigError, ContractError, DatasetParseError, NumericFault, ShapeError
from grad import Tape, Tensor

logger = logging.getLogger(__name__)

MASK_KEY = "mask"
MASK_MODES = ("hard", "soft")
CHECKPOINT_VERSION = "INSURE-CKPT v1"


@dataclass(frozen=True)
class ModelOptions:
    """네트워크 구조 설정"""
    input_dim: int
    n_classes: int
    n_domains: int
    feature_dim: int = 0       # 0이면 input_dim 사용
    hidden_layers: int = 2
    hidden_width: int = 64
    probe: bool = False        # True면 인코더를 항등 함수로 대체 (IB 샘플링 없음)
    mask_init: float = -1.0    # σ(-1) < 0.5 이므로 처음엔 마스크 전체가 켜짐
    logvar_init: float = -6.0  # 분산 헤드 바이어스 초기값

    @property
    def k(self) -> int:
        if self.probe:
            return self.input_dim
        return self.feature_dim or self.input_dim

    def validate(self):
        if self.input_dim < 1 or self.n_classes < 1 or self.n_domains < 1:
            raise ConfigError(f"폭은 양수여야 합니다: {self}")
        if not self.probe and (self.hidden_layers < 0 or self.hidden_width < 1 or self.k < 1):
            raise ConfigError(f"인코더 폭은 양수여야 합니다: {self}")
        if self.probe and self.feature_dim not in (0, self.input_dim):
            raise ConfigError("probe 모드에서는 feature_dim이 입력 폭과 같아야 합니다")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelOptions":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


@dataclass(frozen=True)
class MaskMode:
    """학습/추론 시 마스크 방식"""
    train_mode: str = "hard"
    infer_mode: str = "hard"

    def validate(self):
        for mode in (self.train_mode, self.infer_mode):
            if mode not in MASK_MODES:
                raise ConfigError(f"알 수 없는 마스크 방식: {mode}")


@dataclass
class ModelParams:
    """모든 학습 파라미터 스냅샷 (값 의미론)"""
    options: ModelOptions
    arrays: dict[str, np.ndarray]

    @property
    def mask_logits(self) -> np.ndarray:
        return self.arrays[MASK_KEY]

    def copy(self) -> "ModelParams":
        return ModelParams(self.options, {k: v.copy() for k, v in self.arrays.items()})

    def leaves(self, tape: Tape) -> dict[str, Tensor]:
        """기울기를 받을 잎 노드로 등록"""
        return {k: tape.leaf(v, k) for k, v in self.arrays.items()}

    def constants(self, tape: Tape) -> dict[str, Tensor]:
        return {k: tape.constant(v) for k, v in self.arrays.items()}

    def hard_mask(self) -> np.ndarray:
        return grad.hard_mask_values(self.mask_logits)

    def mask_on_count(self) -> int:
        return int(self.hard_mask().sum())

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.arrays.values()))

    def equals(self, other: "ModelParams") -> bool:
        return (
            self.options == other.options
            and self.arrays.keys() == other.arrays.keys()
            and all(np.array_equal(v, other.arrays[k]) for k, v in self.arrays.items())
        )


@dataclass
class Encoding:
    z: Tensor
    mu: Tensor
    sigma: Optional[Tensor]  # probe 모드에서는 None


def encoder_layer_names(options: ModelOptions) -> list[str]:
    if options.probe:
        return []
    return [f"enc.{i}" for i in range(options.hidden_layers)] + ["enc.mu", "enc.logvar"]


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_model(options: ModelOptions, seed: int) -> ModelParams:
    """
    파라미터 초기화 (시드가 같으면 항상 같은 값)

    Args:
        options: 네트워크 구조
        seed: 난수 시드

    Returns:
        ModelParams (마스크 로짓은 mask_init 상수)
    """
    options.validate()
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}

    def affine(name: str, fan_in: int, fan_out: int):
        arrays[f"{name}.W"] = _uniform(rng, fan_in, (fan_in, fan_out))
        arrays[f"{name}.b"] = _uniform(rng, fan_in, (fan_out,))

    if not options.probe:
        width = options.input_dim
        for i in range(options.hidden_layers):
            affine(f"enc.{i}", width, options.hidden_width)
            width = options.hidden_width
        affine("enc.mu", width, options.k)
        affine("enc.logvar", width, options.k)
        arrays["enc.logvar.b"] = np.full(options.k, options.logvar_init)

    arrays[MASK_KEY] = np.full(options.k, options.mask_init, dtype=np.float64)
    affine("f", options.k, options.n_classes)
    affine("g", options.k, options.n_domains)
    return ModelParams(options, arrays)


def _affine(leaves: Mapping[str, Tensor], name: str, h: Tensor) -> Tensor:
    return grad.add_bias(grad.matmul(h, leaves[f"{name}.W"]), leaves[f"{name}.b"])


def encode(
    leaves: Mapping[str, Tensor],
    options: ModelOptions,
    x: Tensor,
    stochastic: bool,
    rng: Optional[np.random.Generator] = None,
) -> Encoding:
    """
    z = μ + σ⊙ε (재매개변수화) 또는 z = μ

    Args:
        leaves: 파라미터 텐서
        options: 네트워크 구조
        x: (n, input_dim) 입력
        stochastic: True면 ε ~ N(0, I) 샘플링
        rng: 샘플링용 난수 생성기

    Returns:
        Encoding(z, μ, σ)
    """
    if len(x.shape) != 2 or x.shape[1] != options.input_dim:
        raise ShapeError("encode", [x.shape], f"입력 폭 {options.input_dim} 필요")
    if options.probe:
        return Encoding(z=x, mu=x, sigma=None)

    h = x
    for i in range(options.hidden_layers):
        try:
            h = grad.tanh(_affine(leaves, f"enc.{i}", h))
        except NumericFault as e:
            raise NumericFault(f"인코더 {i}번 층: {e}") from e
    try:
        mu = _affine(leaves, "enc.mu", h)
        logvar = _affine(leaves, "enc.logvar", h)
        sigma = grad.exp(grad.scale(logvar, 0.5))
    except NumericFault as e:
        raise NumericFault(f"인코더 {options.hidden_layers}번 층(헤드): {e}") from e

    if not stochastic:
        return Encoding(z=mu, mu=mu, sigma=sigma)
    if rng is None:
        raise ContractError("확률적 인코딩에는 rng가 필요합니다")
    eps = x.tape.constant(rng.standard_normal(mu.shape))
    return Encoding(z=mu + sigma * eps, mu=mu, sigma=sigma)


def _tile_rows(vector: Tensor, n: int) -> Tensor:
    """(k,) 벡터를 (n, k)로 복제 (ones(n,1) @ v(1,k))"""
    k = vector.shape[0]
    ones = vector.tape.constant(np.ones((n, 1)))
    return grad.matmul(ones, grad.reshape(vector, (1, k)))


def disentangle(z: Tensor, mask_logits: Tensor, mode: str = "hard") -> tuple[Tensor, Tensor]:
    """
    z를 클래스 관련 z* 와 보조 특징 z′로 분리

    hard: z* = z⊙m, z′ = z⊙(1-m)   (m은 STE 이진 마스크)
    soft: z* = z⊙(1-σ(m̃)), z′ = z⊙σ(m̃)

    Returns:
        (z*, z′)
    """
    if len(z.shape) != 2 or len(mask_logits.shape) != 1 or z.shape[1] != mask_logits.shape[0]:
        raise ShapeError("disentangle", [z.shape, mask_logits.shape])
    if mode not in MASK_MODES:
        raise ConfigError(f"알 수 없는 마스크 방식: {mode}")

    n = z.shape[0]
    if mode == "hard":
        m = _tile_rows(grad.ste_mask(mask_logits), n)
        keep = z.tape.constant(np.ones(z.shape))
        return z * m, z * (keep - m)

    s = _tile_rows(grad.sigmoid(mask_logits), n)
    keep = z.tape.constant(np.ones(z.shape))
    return z * (keep - s), z * s


def class_logits(leaves: Mapping[str, Tensor], feat: Tensor) -> Tensor:
    return _affine(leaves, "f", feat)


def domain_logits(leaves: Mapping[str, Tensor], feat: Tensor) -> Tensor:
    return _affine(leaves, "g", feat)


def classify_label(leaves: Mapping[str, Tensor], feat: Tensor) -> Tensor:
    """f(feat)의 softmax 확률"""
    return grad.softmax(class_logits(leaves, feat))


def classify_domain(leaves: Mapping[str, Tensor], feat: Tensor) -> Tensor:
    """g(feat)의 softmax 확률"""
    return grad.softmax(domain_logits(leaves, feat))


@dataclass
class FeatureView:
    """추론용 특징 (numpy 값)"""
    z: np.ndarray
    z_star: np.ndarray
    z_prime: np.ndarray
    class_proba: np.ndarray


def infer(params: ModelParams, x: np.ndarray, mask_mode: str = "hard") -> FeatureView:
    """결정적 인코딩(μ)으로 z, z*, z′ 과 f(z*) 확률 계산"""
    tape = Tape()
    leaves = params.constants(tape)
    enc = encode(leaves, params.options, tape.constant(x), stochastic=False)
    z_star, z_prime = disentangle(enc.z, leaves[MASK_KEY], mask_mode)
    proba = classify_label(leaves, z_star)
    return FeatureView(enc.z.value, z_star.value, z_prime.value, proba.value)


def predict(params: ModelParams, x: np.ndarray, mask_mode: str = "hard") -> np.ndarray:
    """z*에 대한 f의 argmax 예측"""
    return np.argmax(infer(params, x, mask_mode).class_proba, axis=1)


# ---------------------------------------------------------------------------
# 체크포인트
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    raw: ModelParams
    sma: Optional[ModelParams]
    config_hash: str
    step: int = 0

    @property
    def inference_params(self) -> ModelParams:
        """추론에는 SMA 스냅샷을 우선 사용"""
        return self.sma if self.sma is not None else self.raw


def save_checkpoint(
    path: Union[str, Path],
    raw: ModelParams,
    sma: Optional[ModelParams],
    config_hash: str,
    step: int = 0,
):
    meta = {
        "version": CHECKPOINT_VERSION,
        "config_hash": config_hash,
        "options": raw.options.to_dict(),
        "has_sma": sma is not None,
        "step": step,
    }
    payload = {f"raw.{k}": v for k, v in raw.arrays.items()}
    if sma is not None:
        payload.update({f"sma.{k}": v for k, v in sma.arrays.items()})
    with open(path, 'wb') as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **payload)
    logger.info(f"체크포인트 저장: {path}")


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    with np.load(path, allow_pickle=False) as archive:
        if "meta" not in archive.files:
            raise DatasetParseError(f"체크포인트 메타데이터 없음: {path}")
        meta = json.loads(str(archive["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise DatasetParseError(f"체크포인트 버전 불일치: {meta.get('version')}")
        options = ModelOptions.from_dict(meta["options"])
        groups: dict[str, dict[str, np.ndarray]] = {"raw": {}, "sma": {}}
        for key in archive.files:
            if key == "meta":
                continue
            group, name = key.split(".", 1)
            groups[group][name] = archive[key].copy()
    sma = ModelParams(options, groups["sma"]) if meta.get("has_sma") else None
    return Checkpoint(
        raw=ModelParams(options, groups["raw"]),
        sma=sma,
        config_hash=meta["config_hash"],
        step=int(meta.get("step", 0)),
    )
