"""
벤 다이어그램 네 영역(I~IV)을 정답으로 갖는 합성 다중 도메인 분류 데이터 생성 모듈.

영역 의미:
  I   - 도메인 특화, 클래스 무관  (도메인별 평균만 다름)
  II  - 도메인 불변, 클래스 무관  (모든 샘플이 같은 분포)
  III - 도메인 특화, 클래스 관련  (클래스 패턴에 도메인별 배율 적용)
  IV  - 도메인 불변, 클래스 관련  (클래스 평균이 도메인 간 공유)
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import ortho_group

from errors import ConfigError, UnknownDomainError

logger = logging.getLogger(__name__)

REGIONS = ("I", "II", "III", "IV")
MIXINGS = ("identity", "random-orthogonal")

# 영역 III의 도메인 배율 범위 (부호 보존)
SCALE_RANGE = (0.5, 1.5)


@dataclass(frozen=True)
class RegionSpec:
    """영역별 차원 수와 잡음 설정"""
    k_I: int = 8
    k_II: int = 8
    k_III: int = 8
    k_IV: int = 8
    noise_std: float = 0.3
    mixing: str = "identity"
    min_separation: float = 1.0  # 클래스 평균 간 최소 거리 하한 (4·noise_std와 큰 쪽 사용)
    domain_shift: float = 1.0    # 영역 I 도메인 평균의 표준편차

    @property
    def dims(self) -> int:
        return self.k_I + self.k_II + self.k_III + self.k_IV

    @property
    def class_separation(self) -> float:
        return max(4.0 * self.noise_std, self.min_separation)

    def region_of_dim(self) -> tuple[str, ...]:
        counts = (self.k_I, self.k_II, self.k_III, self.k_IV)
        return tuple(r for r, k in zip(REGIONS, counts) for _ in range(k))

    def validate(self):
        counts = (self.k_I, self.k_II, self.k_III, self.k_IV)
        if any(k < 0 for k in counts):
            raise ConfigError(f"영역 차원 수는 음수일 수 없습니다: {counts}")
        if sum(counts) < 1:
            raise ConfigError("차원이 하나 이상 필요합니다")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std는 음수일 수 없습니다: {self.noise_std}")
        if self.mixing not in MIXINGS:
            raise ConfigError(f"알 수 없는 mixing: {self.mixing} (가능: {', '.join(MIXINGS)})")
        if self.k_III + self.k_IV == 0 or self.class_separation <= 0:
            raise ConfigError("클래스 분리가 0입니다 (영역 III/IV 차원 또는 분리 거리 필요)")


@dataclass
class LatentParams:
    """생성에 사용된 잠재 파라미터"""
    class_means: np.ndarray      # (C, k_IV)
    class_patterns: np.ndarray   # (C, k_III)
    domain_scales: np.ndarray    # (N, k_III)
    domain_means: np.ndarray     # (N, k_I)
    shared_mean: np.ndarray      # (k_II,)
    mixing_matrix: np.ndarray    # (D, D)


@dataclass
class SynthDataset:
    """라벨이 붙은 다중 도메인 샘플과 차원별 정답 영역"""
    x: np.ndarray
    y: np.ndarray
    d: np.ndarray
    n_classes: int
    n_domains: int
    region_of_dim: Optional[tuple[str, ...]]
    generator_seed: int
    mixing: str = "identity"
    domain_map: tuple[int, ...] = ()  # 조밀 인덱스 -> 원래 도메인 인덱스
    latent: Optional[LatentParams] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.d = np.asarray(self.d, dtype=np.int64)
        if not self.domain_map:
            self.domain_map = tuple(range(self.n_domains))

    @property
    def dims(self) -> int:
        return int(self.x.shape[1])

    @property
    def n_samples(self) -> int:
        return int(self.x.shape[0])

    @property
    def has_ground_truth(self) -> bool:
        return self.region_of_dim is not None

    @property
    def domains(self) -> list[int]:
        return sorted(int(v) for v in np.unique(self.d))

    def dims_in(self, *regions: str) -> np.ndarray:
        """지정한 영역에 속한 차원 인덱스"""
        if self.region_of_dim is None:
            return np.zeros(0, dtype=np.int64)
        return np.array([i for i, r in enumerate(self.region_of_dim) if r in regions], dtype=np.int64)

    def same_samples(self, other: "SynthDataset") -> bool:
        """샘플, 정답 영역, 시드가 비트 단위로 같은지"""
        return (
            self.x.shape == other.x.shape
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.d, other.d)
            and self.region_of_dim == other.region_of_dim
            and self.generator_seed == other.generator_seed
            and self.n_classes == other.n_classes
            and self.n_domains == other.n_domains
            and tuple(self.domain_map) == tuple(other.domain_map)
            and self.mixing == other.mixing
        )

    def select_domains(self, keep: list[int]) -> "SynthDataset":
        """지정한 도메인만 남기고 도메인 인덱스를 0부터 다시 매김"""
        keep = sorted(keep)
        if not keep:
            raise ConfigError("남길 도메인이 없습니다")
        rows = np.isin(self.d, keep)
        remap = np.full(max(self.n_domains, max(keep) + 1), -1, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        return replace(
            self,
            x=self.x[rows].copy(),
            y=self.y[rows].copy(),
            d=remap[self.d[rows]],
            n_domains=len(keep),
            domain_map=tuple(self.domain_map[k] for k in keep),
        )


def _separated_means(rng: np.random.Generator, n: int, k: int, separation: float) -> np.ndarray:
    """쌍별 거리가 separation 이상인 평균 벡터 n개"""
    means = rng.standard_normal((n, k))
    if k == 0 or n < 2:
        return means
    closest = pdist(means).min()
    if closest < separation:
        means *= separation / max(closest, 1e-12)
    return means


def _mixing_matrix(rng: np.random.Generator, dims: int, mixing: str) -> np.ndarray:
    if mixing == "identity" or dims < 2:
        return np.eye(dims)
    return ortho_group.rvs(dims, random_state=rng)


def generate(
    spec: RegionSpec,
    n_domains: int,
    n_classes: int,
    n_per_domain: int,
    seed: int,
) -> SynthDataset:
    """합성 데이터셋 생성

    Args:
        spec: 영역 설정
        n_domains: 도메인 수 (다중 소스 DG는 2 이상)
        n_classes: 클래스 수 (2 이상)
        n_per_domain: 도메인당 샘플 수 (클래스 수 이상, 라벨은 균등 분배)
        seed: 난수 시드

    Returns:
        SynthDataset
    """
    spec.validate()
    if n_domains < 1:
        raise ConfigError(f"도메인 수는 1 이상이어야 합니다: {n_domains}")
    if n_classes < 2:
        raise ConfigError(f"클래스 수는 2 이상이어야 합니다: {n_classes}")
    if n_per_domain < n_classes:
        raise ConfigError("모든 도메인에 모든 클래스가 들어가도록 n_per_domain >= n_classes 필요")

    rng = np.random.default_rng(seed)
    sep = spec.class_separation
    latent = LatentParams(
        class_means=_separated_means(rng, n_classes, spec.k_IV, sep),
        class_patterns=_separated_means(rng, n_classes, spec.k_III, sep),
        domain_scales=rng.uniform(*SCALE_RANGE, size=(n_domains, spec.k_III)),
        domain_means=rng.normal(0.0, spec.domain_shift, size=(n_domains, spec.k_I)),
        shared_mean=rng.standard_normal(spec.k_II),
        mixing_matrix=_mixing_matrix(rng, spec.dims, spec.mixing),
    )

    y = np.tile(np.arange(n_per_domain) % n_classes, n_domains)
    d = np.repeat(np.arange(n_domains), n_per_domain)
    n = y.size

    def noise(k: int) -> np.ndarray:
        return spec.noise_std * rng.standard_normal((n, k))

    u = np.concatenate([
        latent.domain_means[d] + noise(spec.k_I),
        np.broadcast_to(latent.shared_mean, (n, spec.k_II)) + noise(spec.k_II),
        latent.domain_scales[d] * latent.class_patterns[y] + noise(spec.k_III),
        latent.class_means[y] + noise(spec.k_IV),
    ], axis=1)
    x = u if spec.mixing == "identity" else u @ latent.mixing_matrix.T

    logger.info(f"합성 데이터 생성: 도메인 {n_domains}, 클래스 {n_classes}, "
                f"샘플 {n}, 차원 {spec.dims} (seed={seed})")
    return SynthDataset(
        x=x, y=y, d=d,
        n_classes=n_classes,
        n_domains=n_domains,
        region_of_dim=spec.region_of_dim(),
        generator_seed=seed,
        mixing=spec.mixing,
        latent=latent,
    )


def split_leave_one_out(dataset: SynthDataset, target_domain: int) -> tuple[SynthDataset, SynthDataset]:
    """target_domain을 테스트로 떼어내고 나머지로 학습 세트 구성"""
    domains = dataset.domains
    if target_domain not in domains:
        raise UnknownDomainError(f"도메인 {target_domain} 없음 (가능: {domains})")
    rest = [k for k in domains if k != target_domain]
    if not rest:
        raise ConfigError(f"도메인 {target_domain}을 빼면 학습할 도메인이 남지 않습니다")
    train = dataset.select_domains(rest)
    test = dataset.select_domains([target_domain])
    return train, test


def split_single_source(dataset: SynthDataset, source_domain: int) -> tuple[SynthDataset, SynthDataset]:
    """단일 소스 DG: source_domain 하나로 학습하고 나머지 전체로 테스트"""
    domains = dataset.domains
    if source_domain not in domains:
        raise UnknownDomainError(f"도메인 {source_domain} 없음 (가능: {domains})")
    others = [k for k in domains if k != source_domain]
    if not others:
        raise ConfigError("테스트할 다른 도메인이 없습니다")
    return dataset.select_domains([source_domain]), dataset.select_domains(others)
