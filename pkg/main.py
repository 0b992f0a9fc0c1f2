"""
INSURE 도메인 일반화 실험실
메인 진입점 - 데이터 생성, 학습, 평가, 실험 표 작성을 명령 하나로 실행합니다.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from dataset_io import load_dataset, save_dataset
from errors import (
    ConfigError,
    ContractError,
    DatasetParseError,
    GradientCheckFailed,
    InsureError,
    TrainingAborted,
    UnknownDomainError,
)
from evaluator import (
    accuracy,
    disentangler_accounting,
    gradcheck_objective,
    mask_recovery,
    mask_type_grid,
    prediction_parity,
    region3_experiment,
    results_frame,
    run_ablation,
    seed_statistics,
    sensitivity_sweep,
    sufficiency_sweep,
    write_frame,
    write_manifest,
)
from losses import Batch
from model import MASK_KEY, ModelOptions, init_model, load_checkpoint, save_checkpoint
from settings_manager import RunConfig
from synthgen import RegionSpec, SynthDataset, generate, split_leave_one_out, split_single_source
from trainer import train

logger = logging.getLogger("insure")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INSURE-CONFIG 파일")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="설정 덮어쓰기 (반복 가능)")
    common.add_argument("--seed", type=int, help="이 명령의 난수 시드")
    common.add_argument("--verbose", action="store_true", help="DEBUG 로그 출력")

    parser = argparse.ArgumentParser(prog="insure", description="INSURE 도메인 일반화 실험실")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="합성 데이터셋 생성")
    p.add_argument("--out", required=True, help="출력 데이터셋 파일")

    p = sub.add_parser("train", parents=[common], help="모델 학습")
    p.add_argument("--data", required=True)
    p.add_argument("--holdout-domain", type=int, help="학습에서 제외할 도메인 (다중 소스)")
    p.add_argument("--source-domain", type=int, help="학습에 쓸 도메인 (단일 소스)")
    p.add_argument("--mode", choices=("multi-dg", "single-dg"))
    p.add_argument("--out-dir", default="runs/train")

    p = sub.add_parser("eval", parents=[common], help="체크포인트 평가")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--domain", type=int, help="이 도메인만 평가")
    p.add_argument("--mask-mode", choices=("hard", "soft"))

    for name, help_text in (("ablate", "손실 항 ablation 표"),
                            ("region3", "영역 III 효과 검증"),
                            ("mask-types", "학습/추론 마스크 방식 비교"),
                            ("sensitivity", "α, β, γ 민감도")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--data", help="데이터셋 파일 (생략하면 설정으로 생성)")
        p.add_argument("--out-dir", default=f"runs/{name}")
        p.add_argument("--jobs", type=int, help="동시 학습 프로세스 수")

    p = sub.add_parser("sufficiency", parents=[common], help="it_label_loss와 정보량 차이의 순위 상관")
    p.add_argument("--data", help="데이터셋 파일 (생략하면 설정으로 생성)")
    p.add_argument("--holdout-domain", type=int, default=0)
    p.add_argument("--checkpoints", type=int, help="스냅샷 수 (기본: 설정의 n_checkpoints)")
    p.add_argument("--out-dir", default="runs/sufficiency")

    p = sub.add_parser("gradcheck", parents=[common], help="전체 손실 기울기 검사")
    p.add_argument("--tol", type=float, default=1e-4)
    return parser


class InsureLab:
    """명령 실행기"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = RunConfig(args.config) if args.config else RunConfig()
        self.config.apply_overrides(args.set)
        if getattr(args, "mode", None):
            self.config.set("mode", args.mode)
        if getattr(args, "jobs", None) is not None:
            self.config.set("jobs", args.jobs)
        if args.seed is not None:
            if args.command == "gen-data":
                self.config.set("data_seed", args.seed)
            else:
                self.config.set("seed", args.seed)
                self.config.set("seeds", str(args.seed))

    def run(self) -> int:
        handler = getattr(self, "cmd_" + self.args.command.replace("-", "_"))
        return handler()

    # -- 공통 -----------------------------------------------------------------

    def _dataset(self) -> SynthDataset:
        if getattr(self.args, "data", None):
            return load_dataset(self.args.data)
        logger.info("데이터 파일이 없어 설정으로 생성합니다")
        return generate(self.config.region_spec(), **self.config.generation_options())

    def _out_dir(self) -> Path:
        out = Path(self.args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return out

    def _manifest(self, out: Path, outputs: list[str], extra: Optional[dict] = None):
        write_manifest(
            out / "manifest.json",
            command=self.args.command,
            config=self.config.get_all(),
            config_hash=self.config.config_hash(),
            seeds=self.config.seeds() if self.args.command not in ("train", "sufficiency") else [self.config.get("seed")],
            outputs=outputs,
            extra=extra,
        )

    # -- 명령 -----------------------------------------------------------------

    def cmd_gen_data(self) -> int:
        spec = self.config.region_spec()
        dataset = generate(spec, **self.config.generation_options())
        save_dataset(dataset, self.args.out)
        print(f"영역 차원: I={spec.k_I}, II={spec.k_II}, III={spec.k_III}, IV={spec.k_IV} "
              f"(총 {spec.dims}, mixing={spec.mixing})")
        print(f"샘플 {dataset.n_samples}개, 도메인 {dataset.n_domains}개, 클래스 {dataset.n_classes}개")
        return EXIT_OK

    def _train_split(self, dataset: SynthDataset) -> tuple[SynthDataset, Optional[SynthDataset]]:
        mode = self.config.get("mode")
        if mode == "single-dg":
            source = self.args.source_domain
            if dataset.n_domains == 1 and source in (None, dataset.domains[0]):
                return dataset, None
            if source is None:
                raise ConfigError("단일 소스 모드에는 --source-domain이 필요합니다")
            return split_single_source(dataset, source)
        if self.args.holdout_domain is None:
            return dataset, None
        return split_leave_one_out(dataset, self.args.holdout_domain)

    def cmd_train(self) -> int:
        dataset = load_dataset(self.args.data)
        train_set, test_set = self._train_split(dataset)
        config = self.config.train_config()
        options = self.config.model_options(train_set.dims, train_set.n_classes, train_set.n_domains)
        out = self._out_dir()
        config_hash = self.config.config_hash()

        try:
            trained, metrics = train(config, options, train_set)
        except TrainingAborted as e:
            save_checkpoint(out / "checkpoint_last_good.npz", e.last_good, None, config_hash, e.step - 1)
            raise

        save_checkpoint(out / "checkpoint.npz", trained.raw, trained.sma, config_hash, config.steps)
        if test_set is not None:
            infer_mode = self.config.get("infer_mask")
            metrics.final["heldout_accuracy"] = accuracy(trained.inference_params, test_set, infer_mode)
            print(f"보지 않은 도메인 정확도: {metrics.final['heldout_accuracy']:.4f}")
        metrics.final["mask_on"] = trained.inference_params.mask_on_count()
        metrics.to_csv(out / "metrics.csv")
        self._manifest(out, ["checkpoint.npz", "metrics.csv"], {"final": metrics.final})
        return EXIT_OK

    def cmd_eval(self) -> int:
        checkpoint = load_checkpoint(self.args.checkpoint)
        dataset = load_dataset(self.args.data)
        if self.args.domain is not None:
            if self.args.domain not in dataset.domains:
                raise UnknownDomainError(f"도메인 {self.args.domain} 없음 (가능: {dataset.domains})")
            dataset = dataset.select_domains([self.args.domain])
        params = checkpoint.inference_params
        mode = self.args.mask_mode or self.config.get("infer_mask")

        print(f"정확도 ({mode} 마스크): {accuracy(params, dataset, mode):.4f}")
        print(f"hard/soft 예측 일치율: {prediction_parity(params, dataset.x):.4f}")
        print(f"마스크 on: {params.mask_on_count()}/{params.options.k}")
        if params.options.probe and dataset.has_ground_truth and dataset.mixing == "identity":
            rec = mask_recovery(params, dataset)
            fmt = lambda v: "없음" if v is None else f"{v:.3f}"
            print(f"마스크 복원 (III∪IV): precision={fmt(rec.precision)} recall={fmt(rec.recall)} f1={fmt(rec.f1)}")
        for line in disentangler_accounting(params, dataset.x, mode).lines():
            print(line)
        return EXIT_OK

    def cmd_ablate(self) -> int:
        dataset = self._dataset()
        report = run_ablation(dataset, self.config.train_config(), self.config.model_kwargs(),
                              self.config.seeds(), self.config.get("jobs"))
        out = self._out_dir()
        write_frame(report.to_frame(), out / "ablation.csv")
        write_frame(seed_statistics(report.runs), out / "seed_stats.csv")
        write_frame(results_frame(report.runs), out / "runs.csv")
        self._manifest(out, ["ablation.csv", "seed_stats.csv", "runs.csv"])
        print(report.to_frame().to_string(index=False))
        return EXIT_OK

    def cmd_region3(self) -> int:
        dataset = self._dataset()
        rows = region3_experiment(dataset, self.config.train_config(), self.config.model_kwargs(),
                                  self.config.seeds(), self.config.get("jobs"))
        out = self._out_dir()
        frame = pd.DataFrame([r.as_row() for r in rows])
        write_frame(frame, out / "region3.csv")
        self._manifest(out, ["region3.csv"])
        print(frame.to_string(index=False))
        return EXIT_OK

    def cmd_mask_types(self) -> int:
        dataset = self._dataset()
        frame = mask_type_grid(dataset, self.config.train_config(), self.config.model_kwargs(),
                               self.config.seeds(), self.config.get("jobs"))
        out = self._out_dir()
        write_frame(frame, out / "mask_types.csv")
        self._manifest(out, ["mask_types.csv"])
        print(frame.to_string(index=False))
        return EXIT_OK

    def cmd_sensitivity(self) -> int:
        dataset = self._dataset()
        frame = sensitivity_sweep(dataset, self.config.train_config(), self.config.model_kwargs(),
                                  self.config.seeds(), self.config.get("jobs"))
        out = self._out_dir()
        write_frame(frame, out / "sensitivity.csv")
        self._manifest(out, ["sensitivity.csv"])
        print(frame.to_string(index=False))
        return EXIT_OK

    def cmd_sufficiency(self) -> int:
        dataset = self._dataset()
        train_set, test_set = split_leave_one_out(dataset, self.args.holdout_domain)
        n_checkpoints = self.args.checkpoints or self.config.get("n_checkpoints")
        sweep = sufficiency_sweep(train_set, test_set, self.config.train_config(),
                               self.config.model_kwargs(), n_checkpoints)
        out = self._out_dir()
        write_frame(sweep.frame, out / "sufficiency.csv")
        self._manifest(out, ["sufficiency.csv"], {"spearman": sweep.spearman})
        print(f"Spearman ρ(it_label_loss, Î(z;y) - Î(z*;y)) = {sweep.spearman:.3f}")
        return EXIT_OK

    def cmd_gradcheck(self) -> int:
        """도메인 2개, 배치 8, k=16 미니 문제에서 전체 손실 검사"""
        seed = self.config.get("seed")
        spec = RegionSpec(k_I=4, k_II=4, k_III=4, k_IV=4, noise_std=self.config.get("noise_std"))
        data = generate(spec, n_domains=2, n_classes=2, n_per_domain=4, seed=seed)
        options = ModelOptions(
            input_dim=data.dims, n_classes=data.n_classes, n_domains=data.n_domains,
            feature_dim=16, hidden_layers=1, hidden_width=8,
        )
        params = init_model(options, seed)
        # 마스크를 임계값 근처에 흩어 두 방향 기울기를 모두 확인
        params.arrays[MASK_KEY] = np.random.default_rng(seed).normal(0.0, 1.0, size=options.k)
        objective = self.config.train_config().objective
        report = gradcheck_objective(params, Batch(data.x, data.y, data.d), objective, seed, self.args.tol)
        print(report.summary())
        if not report.passed:
            raise GradientCheckFailed(report)
        return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    """메인 함수"""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="[%(name)s] %(message)s",
        force=True,
    )

    logger.info("=" * 50)
    logger.info(f"  INSURE 도메인 일반화 실험실 - {args.command}")
    logger.info("=" * 50)

    try:
        return InsureLab(args).run()
    except (ConfigError, ContractError, DatasetParseError, UnknownDomainError, FileNotFoundError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_USAGE
    except TrainingAborted as e:
        logger.error(f"{e} (마지막 정상 파라미터 저장됨)")
        return EXIT_FAILED
    except GradientCheckFailed as e:
        logger.error(f"기울기 검사 실패: {e}")
        return EXIT_FAILED
    except InsureError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
