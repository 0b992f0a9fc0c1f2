"""
INSURE 손실 항과 가중 합.

    L = L_dis + α(t)·(L_IT_l + L_IT_d) + β(t)·L_puri + γ·L_msr
    L_dis = CE(f(z*), y) + CE(g(z′), d) + ε_ib·KL[q(z|x) ‖ N(0, I)]
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

import grad
from errors import ConfigError, ContractError, DomainError, NumericFault
from grad import Tape, Tensor
from model import (
    MASK_KEY,
    MASK_MODES,
    ModelOptions,
    class_logits,
    classify_domain,
    classify_label,
    disentangle,
    domain_logits,
    encode,
)

logger = logging.getLogger(__name__)

PURIFICATIONS = ("label", "domain")


class PurificationWarning(UserWarning):
    """짝 정화 손실을 계산할 수 없는 배치 (크기 1)"""


@dataclass(frozen=True)
class LossWeights:
    """손실 가중치 (다중 소스 기본값 α=9, β=1, γ=1)"""
    alpha: float = 9.0
    beta: float = 1.0
    gamma: float = 1.0
    eps_ib: float = 1e-5

    @classmethod
    def single_dg(cls) -> "LossWeights":
        return cls(alpha=10.0, beta=1.0, gamma=1.0, eps_ib=0.0)

    def validate(self):
        for name in ("alpha", "beta", "gamma", "eps_ib"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}는 음수일 수 없습니다: {getattr(self, name)}")


@dataclass
class LossBreakdown:
    """한 step의 손실 항별 값과 적용된 가중치"""
    dis: float
    it_l: float
    it_d: float
    puri: float
    msr: float
    ib: float
    total: float
    alpha: float
    beta: float
    gamma: float

    def as_row(self) -> dict[str, float]:
        return dict(self.__dict__)


@dataclass
class LossTerms:
    """가중 합 직전의 손실 항 (None이면 제외된 항)"""
    dis: Tensor
    it_l: Optional[Tensor] = None
    it_d: Optional[Tensor] = None
    puri: Optional[Tensor] = None
    msr: Optional[Tensor] = None
    ib: Optional[Tensor] = None  # dis에 이미 포함됨, 기록용


@dataclass(frozen=True)
class ObjectiveConfig:
    """목적 함수 구성 (절제 실험 스위치 포함)"""
    weights: LossWeights = field(default_factory=LossWeights)
    single_dg: bool = False
    use_msr: bool = True
    use_it: bool = True
    use_puri: bool = True
    purification: str = "label"  # label: f 기반 정화, domain: g 기반 변형
    mask_mode: str = "hard"

    def validate(self):
        self.weights.validate()
        if self.purification not in PURIFICATIONS:
            raise ConfigError(f"알 수 없는 purification: {self.purification}")
        if self.mask_mode not in MASK_MODES:
            raise ConfigError(f"알 수 없는 마스크 방식: {self.mask_mode}")
        if self.single_dg and self.purification == "domain":
            raise ConfigError("단일 소스 모드에는 도메인 분류기가 없어 domain 정화를 쓸 수 없습니다")


@dataclass
class Batch:
    x: np.ndarray
    y: np.ndarray
    d: np.ndarray

    def __len__(self):
        return int(self.x.shape[0])


def one_hot(labels: np.ndarray, n: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n):
        raise ContractError(f"라벨 범위 밖: [{labels.min()}, {labels.max()}] (클래스 {n}개)")
    out = np.zeros((labels.size, n))
    out[np.arange(labels.size), labels] = 1.0
    return out


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """배치 평균 교차 엔트로피 (log-softmax 기반)"""
    targets = logits.tape.constant(one_hot(labels, logits.shape[1]))
    picked = grad.reduce_sum(targets * grad.log_softmax(logits), axis=1)
    return -grad.reduce_mean(picked)


def gaussian_kl(mu: Tensor, sigma: Tensor) -> Tensor:
    """
    D_KL[N(μ, diag σ²) ‖ N(0, I)] = 0.5·Σ_j (μ_j² + σ_j² - log σ_j² - 1), 배치 평균

    Args:
        mu: (n, k)
        sigma: (n, k), 모든 원소 양수
    """
    if np.any(sigma.value <= 0):
        raise DomainError("σ는 모든 원소가 양수여야 합니다")
    var = grad.square(sigma)
    inner = grad.square(mu) + var - grad.log(var)
    per_sample = grad.reduce_mean(grad.reduce_sum(inner, axis=1))
    k = mu.tape.constant(float(mu.shape[1]))
    return grad.scale(per_sample - k, 0.5)


def disentangle_loss(
    leaves: Mapping[str, Tensor],
    z_star: Tensor,
    z_prime: Tensor,
    y: np.ndarray,
    d: np.ndarray,
    mu: Optional[Tensor] = None,
    sigma: Optional[Tensor] = None,
    eps_ib: float = 0.0,
    include_domain: bool = True,
) -> Tensor:
    """L_dis = CE(f(z*), y) + CE(g(z′), d) + ε_ib·KL"""
    loss = cross_entropy(class_logits(leaves, z_star), y)
    if include_domain:
        loss = loss + cross_entropy(domain_logits(leaves, z_prime), d)
    if eps_ib > 0 and mu is not None and sigma is not None:
        loss = loss + grad.scale(gaussian_kl(mu, sigma), eps_ib)
    return loss


def kl_between_logits(reference: Tensor, logits: Tensor) -> Tensor:
    """배치 평균 D_KL[softmax(reference) ‖ softmax(logits)], reference는 기울기 차단"""
    ref = grad.detach(reference)
    p = grad.softmax(ref)
    gap = grad.log_softmax(ref) - grad.log_softmax(logits)
    return grad.reduce_mean(grad.reduce_sum(p * gap, axis=1))


def it_label_loss(leaves: Mapping[str, Tensor], z: Tensor, z_star: Tensor) -> Tensor:
    """D_KL[f(z) ‖ f(z*)] - z*가 라벨 정보를 충분히 담도록"""
    return kl_between_logits(class_logits(leaves, z), class_logits(leaves, z_star))


def it_domain_loss(leaves: Mapping[str, Tensor], z: Tensor, z_prime: Tensor) -> Tensor:
    """D_KL[g(z) ‖ g(z′)] - z′가 도메인 정보를 충분히 담도록"""
    return kl_between_logits(domain_logits(leaves, z), domain_logits(leaves, z_prime))


def msr_loss(mask_logits: Tensor) -> Tensor:
    """마스크 희소성 정규화 Σ_i (1 - σ(m̃_i))"""
    k = mask_logits.tape.constant(float(mask_logits.shape[0]))
    return k - grad.reduce_sum(grad.sigmoid(mask_logits))


def cyclic_pairs(perm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """섞인 순서에서 i와 (i+1 mod B)를 짝지음 (항상 i ≠ j)"""
    perm = np.asarray(perm, dtype=np.int64)
    return perm, np.roll(perm, -1)


def _select_rows(t: Tensor, index: np.ndarray) -> Tensor:
    picker = np.zeros((index.size, t.shape[0]))
    picker[np.arange(index.size), index] = 1.0
    return grad.matmul(t.tape.constant(picker), t)


def _paired_purification(
    classify: Callable[[Tensor], Tensor],
    keep: Tensor,
    swap: Tensor,
    perm: Optional[np.ndarray],
) -> Tensor:
    batch_size = keep.shape[0]
    if batch_size < 2:
        warnings.warn("배치 크기 1에서는 짝 정화 손실이 0입니다", PurificationWarning, stacklevel=3)
        return keep.tape.constant(0.0)
    if perm is None:
        perm = np.arange(batch_size)
    a, b = cyclic_pairs(perm)
    keep_a, keep_b = _select_rows(keep, a), _select_rows(keep, b)
    swap_a, swap_b = _select_rows(swap, a), _select_rows(swap, b)
    first = grad.reduce_mean(grad.square(classify(keep_a) - classify(keep_a + swap_b)), axis=1)
    second = grad.reduce_mean(grad.square(classify(keep_b) - classify(keep_b + swap_a)), axis=1)
    return grad.reduce_mean(first + second)


def purification_label_loss(
    leaves: Mapping[str, Tensor],
    z_star: Tensor,
    z_prime: Tensor,
    perm: Optional[np.ndarray] = None,
) -> Tensor:
    """
    짝 정화 손실: 평균_i [ MSE(f(z*_i), f(z*_i + z′_j)) + MSE(f(z*_j), f(z*_j + z′_i)) ]

    Args:
        perm: 배치 내 섞기 순서. None이면 원래 순서
    """
    return _paired_purification(lambda feat: classify_label(leaves, feat), z_star, z_prime, perm)


def purification_domain_loss(
    leaves: Mapping[str, Tensor],
    z_star: Tensor,
    z_prime: Tensor,
    perm: Optional[np.ndarray] = None,
) -> Tensor:
    """g 기반 짝 정화: z*와 z′의 역할을 바꾼 purification_label_loss"""
    return _paired_purification(lambda feat: classify_domain(leaves, feat), z_prime, z_star, perm)


def total_loss(terms: LossTerms, alpha: float, beta: float, gamma: float) -> tuple[Tensor, LossBreakdown]:
    """
    L = L_dis + α·(L_IT_l + L_IT_d) + β·L_puri + γ·L_msr

    Returns:
        (스칼라 손실 텐서, LossBreakdown)
    """
    values: dict[str, float] = {}
    for name in ("dis", "it_l", "it_d", "puri", "msr", "ib"):
        term = getattr(terms, name)
        value = 0.0 if term is None else term.item()
        if not np.isfinite(value):
            raise NumericFault(f"손실 항 {name}이 유한하지 않습니다: {value}")
        values[name] = value

    total = terms.dis
    for term, weight in ((terms.it_l, alpha), (terms.it_d, alpha), (terms.puri, beta), (terms.msr, gamma)):
        if term is not None:
            total = total + grad.scale(term, weight)

    breakdown = LossBreakdown(total=total.item(), alpha=alpha, beta=beta, gamma=gamma, **values)
    return total, breakdown


def insure_objective(
    tape: Tape,
    leaves: Mapping[str, Tensor],
    options: ModelOptions,
    batch: Batch,
    config: ObjectiveConfig,
    alpha: float,
    beta: float,
    rng: Optional[np.random.Generator] = None,
) -> tuple[Tensor, LossBreakdown]:
    """
    한 배치에 대한 전체 목적 함수 그래프 구성

    rng는 IB 샘플링 ε과 정화 손실의 배치 섞기에 순서대로 사용됩니다.
    단일 소스 모드에서는 CE(g(z′), d), L_IT_d, IB 항이 빠집니다.
    """
    ib_active = (not config.single_dg) and (not options.probe) and config.weights.eps_ib > 0
    x = tape.constant(batch.x)
    enc = encode(leaves, options, x, stochastic=ib_active and rng is not None, rng=rng)
    z_star, z_prime = disentangle(enc.z, leaves[MASK_KEY], config.mask_mode)

    dis = disentangle_loss(leaves, z_star, z_prime, batch.y, batch.d, include_domain=not config.single_dg)
    ib = None
    if ib_active:
        ib = grad.scale(gaussian_kl(enc.mu, enc.sigma), config.weights.eps_ib)
        dis = dis + ib

    terms = LossTerms(dis=dis, ib=ib)
    if config.use_it:
        terms.it_l = it_label_loss(leaves, enc.z, z_star)
        if not config.single_dg:
            terms.it_d = it_domain_loss(leaves, enc.z, z_prime)
    if config.use_puri:
        perm = rng.permutation(len(batch)) if rng is not None else None
        if config.purification == "label":
            terms.puri = purification_label_loss(leaves, z_star, z_prime, perm)
        else:
            terms.puri = purification_domain_loss(leaves, z_star, z_prime, perm)
    if config.use_msr:
        terms.msr = msr_loss(leaves[MASK_KEY])

    return total_loss(terms, alpha, beta, config.weights.gamma)
