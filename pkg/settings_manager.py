"""
실행 설정 관리 (INSURE-CONFIG v1 텍스트 형식).

    INSURE-CONFIG v1
    # 주석
    steps = 5000
    mode = multi-dg
"""

import hashlib
import logging
from pathlib import Path
from typing import Any, Optional, Union

from errors import ConfigError
from losses import LossWeights
from model import ModelOptions
from synthgen import RegionSpec
from trainer import TrainConfig

logger = logging.getLogger(__name__)

CONFIG_MAGIC = "INSURE-CONFIG v1"

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


class RunConfig:
    """평평한 key = value 설정 (알 수 없는 키는 거부)"""

    DEFAULT_SETTINGS: dict[str, Any] = {
        # 합성 데이터
        "k_I": 8,
        "k_II": 8,
        "k_III": 8,
        "k_IV": 8,
        "noise_std": 0.3,
        "mixing": "identity",
        "min_separation": 1.0,
        "domain_shift": 1.0,
        "n_domains": 4,
        "n_classes": 4,
        "n_per_domain": 250,
        "data_seed": 0,
        # 모델
        "probe": True,
        "feature_dim": 0,
        "hidden_layers": 2,
        "hidden_width": 64,
        "mask_init": -1.0,
        "logvar_init": -6.0,
        # 학습
        "mode": "multi-dg",
        "steps": 5000,
        "batch_size": 32,
        "lr_mask": 3.5e-4,
        "lr_rest": 5e-5,
        "alpha": 9.0,
        "beta": 1.0,
        "gamma": 1.0,
        "eps_ib": 1e-5,
        "sma_start": 100,
        "seed": 0,
        "use_msr": True,
        "use_it": True,
        "use_puri": True,
        "purification": "label",
        "train_mask": "hard",
        "infer_mask": "hard",
        "log_every": 500,
        # 실험
        "seeds": "0,1,2,3,4",
        "jobs": 1,
        "n_checkpoints": 10,
    }

    # 단일 소스 모드에서 사용자가 지정하지 않은 키에 적용
    SINGLE_DG_PRESETS: dict[str, Any] = {
        "alpha": 10.0,
        "eps_ib": 0.0,
        "lr_mask": 5e-3,
    }

    def __init__(self, filepath: Optional[Union[str, Path]] = None):
        self.filepath = Path(filepath) if filepath is not None else None
        self._settings = self.DEFAULT_SETTINGS.copy()
        self._explicit: set[str] = set()
        if self.filepath is not None:
            self._load()

    def _load(self):
        """설정 파일 로드 (기본값 위에 병합)"""
        if not self.filepath.exists():
            raise FileNotFoundError(f"설정 파일 없음: {self.filepath}")
        text = self.filepath.read_text(encoding='utf-8')
        self.update(self.parse(text))
        logger.debug(f"설정 로드: {self.filepath} ({len(self._explicit)}개 키)")

    @classmethod
    def parse(cls, text: str) -> dict[str, str]:
        """텍스트를 {키: 원문 값}으로 (형식 오류는 ConfigError)"""
        lines = text.splitlines()
        if not lines or lines[0].strip() != CONFIG_MAGIC:
            raise ConfigError(f"설정 첫 줄이 '{CONFIG_MAGIC}'가 아닙니다")
        values: dict[str, str] = {}
        for number, raw in enumerate(lines[1:], start=2):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ConfigError(f"{number}번째 줄: 'key = value' 형식이 아닙니다: {raw.strip()}")
            key, value = (part.strip() for part in line.split('=', 1))
            values[key] = value
        return values

    def _coerce(self, key: str, value: Any) -> Any:
        if key not in self.DEFAULT_SETTINGS:
            raise ConfigError(f"알 수 없는 설정 키: {key}")
        default = self.DEFAULT_SETTINGS[key]
        if not isinstance(value, str):
            if isinstance(default, bool) and not isinstance(value, bool):
                raise ConfigError(f"{key}: 불리언 값이 필요합니다 ({value!r})")
            if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
                return float(value)
            if type(value) is not type(default):
                raise ConfigError(f"{key}: {type(default).__name__} 값이 필요합니다 ({value!r})")
            return value
        try:
            if isinstance(default, bool):
                lowered = value.lower()
                if lowered in _TRUE:
                    return True
                if lowered in _FALSE:
                    return False
                raise ValueError(value)
            if isinstance(default, int):
                return int(value)
            if isinstance(default, float):
                return float(value)
        except ValueError:
            raise ConfigError(f"{key}: {type(default).__name__}로 변환할 수 없는 값 '{value}'")
        return value

    def _save(self, path: Union[str, Path]):
        Path(path).write_text(self.dump(), encoding='utf-8')
        logger.info(f"설정 저장: {path}")

    def save(self, path: Optional[Union[str, Path]] = None):
        """해석된 설정 전체를 파일로 저장"""
        target = path or self.filepath
        if target is None:
            raise ConfigError("저장할 경로가 없습니다")
        self._save(target)

    def get(self, key: str, default: Any = None) -> Any:
        """설정값 조회 (단일 소스 기본값 반영)"""
        return self.get_all().get(key, default)

    def get_all(self) -> dict[str, Any]:
        """해석된 모든 설정"""
        settings = self._settings.copy()
        if settings["mode"] == "single-dg":
            for key, value in self.SINGLE_DG_PRESETS.items():
                if key not in self._explicit:
                    settings[key] = value
        return settings

    def set(self, key: str, value: Any):
        """설정값 변경"""
        self._settings[key] = self._coerce(key, value)
        self._explicit.add(key)

    def update(self, new_settings: dict[str, Any]):
        """여러 설정값 변경 (하나라도 잘못되면 아무것도 바꾸지 않음)"""
        coerced = {key: self._coerce(key, value) for key, value in new_settings.items()}
        self._settings.update(coerced)
        self._explicit.update(coerced)

    def apply_overrides(self, pairs: list[str]):
        """CLI --set key=value 목록 적용"""
        updates = {}
        for pair in pairs:
            if '=' not in pair:
                raise ConfigError(f"--set 형식은 key=value 입니다: {pair}")
            key, value = (part.strip() for part in pair.split('=', 1))
            updates[key] = value
        self.update(updates)

    def dump(self) -> str:
        """정렬된 정규 텍스트 (해시 계산에도 사용)"""
        settings = self.get_all()
        lines = [CONFIG_MAGIC]
        for key in sorted(settings):
            value = settings[key]
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.dump().encode('utf-8')).hexdigest()

    # -- 타입별 보기 ---------------------------------------------------------

    def seeds(self) -> list[int]:
        raw = self.get("seeds")
        try:
            seeds = [int(s) for s in str(raw).split(',') if s.strip()]
        except ValueError:
            raise ConfigError(f"seeds 형식 오류: {raw}")
        if not seeds:
            raise ConfigError("seeds가 비어 있습니다")
        return seeds

    def region_spec(self) -> RegionSpec:
        s = self.get_all()
        spec = RegionSpec(
            k_I=s["k_I"], k_II=s["k_II"], k_III=s["k_III"], k_IV=s["k_IV"],
            noise_std=s["noise_std"],
            mixing=s["mixing"],
            min_separation=s["min_separation"],
            domain_shift=s["domain_shift"],
        )
        spec.validate()
        return spec

    def generation_options(self) -> dict[str, int]:
        """generate()의 나머지 인자"""
        s = self.get_all()
        return {
            "n_domains": s["n_domains"],
            "n_classes": s["n_classes"],
            "n_per_domain": s["n_per_domain"],
            "seed": s["data_seed"],
        }

    def loss_weights(self) -> LossWeights:
        s = self.get_all()
        weights = LossWeights(alpha=s["alpha"], beta=s["beta"], gamma=s["gamma"], eps_ib=s["eps_ib"])
        weights.validate()
        return weights

    def train_config(self) -> TrainConfig:
        s = self.get_all()
        config = TrainConfig(
            steps=s["steps"],
            batch_size=s["batch_size"],
            lr_mask=s["lr_mask"],
            lr_rest=s["lr_rest"],
            weights=self.loss_weights(),
            sma_start=s["sma_start"],
            mode=s["mode"],
            seed=s["seed"],
            use_msr=s["use_msr"],
            use_it=s["use_it"],
            use_puri=s["use_puri"],
            purification=s["purification"],
            train_mask=s["train_mask"],
            log_every=max(1, s["log_every"]),
        )
        config.validate()
        return config

    def model_kwargs(self) -> dict[str, Any]:
        """데이터에서 정해지는 폭을 제외한 ModelOptions 인자"""
        s = self.get_all()
        return {
            "probe": s["probe"],
            "feature_dim": s["feature_dim"],
            "hidden_layers": s["hidden_layers"],
            "hidden_width": s["hidden_width"],
            "mask_init": s["mask_init"],
            "logvar_init": s["logvar_init"],
        }

    def model_options(self, input_dim: int, n_classes: int, n_domains: int) -> ModelOptions:
        options = ModelOptions(input_dim=input_dim, n_classes=n_classes, n_domains=n_domains, **self.model_kwargs())
        options.validate()
        return options
