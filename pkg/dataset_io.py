"""
합성 데이터셋 텍스트 형식(INSURE-SYNTH v1)을 읽고 쓰는 모듈.

형식:
    INSURE-SYNTH v1
    dims: 32
    regions: I,I,...,IV      (정답이 없으면 생략하거나 none)
    seed: 0
    n_domains: 4
    n_classes: 4
    mixing: identity
    domain_map: 0,1,2,3
    samples: 1000
    d,y,x_1,...,x_k          (샘플당 한 줄)
"""

import logging
import re
from pathlib import Path
from typing import Optional, Union

import numpy as np

from errors import DatasetParseError
from synthgen import REGIONS, SynthDataset

logger = logging.getLogger(__name__)

MAGIC = "INSURE-SYNTH v1"


class DatasetFileParser:
    """INSURE-SYNTH 파일 파서"""

    # key: value 헤더 라인
    HEADER_PATTERN = re.compile(r'^([a-z_]+):\s*(.*)$')

    # d,y,x_1,... 데이터 라인 (정수 두 개로 시작)
    ROW_PATTERN = re.compile(r'^-?\d+,-?\d+(,.*)?$')

    REQUIRED_KEYS = ("dims", "seed", "n_domains", "n_classes")

    def parse(self, text: str) -> SynthDataset:
        """
        파일 내용을 파싱하여 SynthDataset 반환

        Args:
            text: 파일 전체 텍스트

        Returns:
            SynthDataset (regions가 없으면 region_of_dim=None)
        """
        lines = text.split('\n')
        if not lines or lines[0].strip() != MAGIC:
            raise DatasetParseError(f"헤더가 '{MAGIC}'가 아닙니다", 1)

        header: dict[str, str] = {}
        line_no = 1
        for line_no in range(2, len(lines) + 1):
            line = lines[line_no - 1].strip()
            match = self.HEADER_PATTERN.match(line)
            if not match:
                break
            header[match.group(1)] = match.group(2).strip()
        else:
            line_no = len(lines) + 1

        for key in self.REQUIRED_KEYS:
            if key not in header:
                raise DatasetParseError(f"헤더 키 '{key}' 누락", line_no)

        dims = self._int(header, "dims", line_no)
        n_domains = self._int(header, "n_domains", line_no)
        n_classes = self._int(header, "n_classes", line_no)
        seed = self._int(header, "seed", line_no)
        regions = self._parse_regions(header.get("regions"), dims, line_no)
        domain_map = self._parse_domain_map(header.get("domain_map"), n_domains, line_no)

        rows_x, rows_y, rows_d = [], [], []
        last_line = line_no
        for offset, raw in enumerate(lines[line_no - 1:]):
            current = line_no + offset
            line = raw.strip()
            if not line:
                continue
            last_line = current
            d, y, x = self._parse_row(line, dims, current)
            if not 0 <= d < n_domains or not 0 <= y < n_classes:
                raise DatasetParseError(f"라벨 범위 밖 (d={d}, y={y})", current)
            rows_d.append(d)
            rows_y.append(y)
            rows_x.append(x)

        if "samples" in header:
            expected = self._int(header, "samples", line_no)
            if expected != len(rows_x):
                raise DatasetParseError(
                    f"샘플 수 불일치: 헤더 {expected}, 실제 {len(rows_x)} (잘린 파일?)", last_line
                )

        if regions is None:
            logger.warning("정답 영역 없음 - 학습 전용으로 로드합니다")

        return SynthDataset(
            x=np.array(rows_x, dtype=np.float64).reshape(len(rows_x), dims),
            y=np.array(rows_y, dtype=np.int64),
            d=np.array(rows_d, dtype=np.int64),
            n_classes=n_classes,
            n_domains=n_domains,
            region_of_dim=regions,
            generator_seed=seed,
            mixing=header.get("mixing", "identity"),
            domain_map=domain_map,
        )

    def _int(self, header: dict[str, str], key: str, line_no: int) -> int:
        try:
            return int(header[key])
        except ValueError:
            raise DatasetParseError(f"'{key}' 값이 정수가 아닙니다: {header[key]}", line_no)

    def _parse_regions(self, value: Optional[str], dims: int, line_no: int) -> Optional[tuple[str, ...]]:
        """정답 영역 목록 (없거나 none이면 None)"""
        if value is None or value.lower() == "none":
            return None
        regions = tuple(r.strip() for r in value.split(',')) if value else ()
        if len(regions) != dims:
            raise DatasetParseError(f"regions 길이 {len(regions)} != dims {dims}", line_no)
        unknown = set(regions) - set(REGIONS)
        if unknown:
            raise DatasetParseError(f"알 수 없는 영역: {sorted(unknown)}", line_no)
        return regions

    def _parse_domain_map(self, value: Optional[str], n_domains: int, line_no: int) -> tuple[int, ...]:
        if not value:
            return tuple(range(n_domains))
        try:
            mapping = tuple(int(v) for v in value.split(','))
        except ValueError:
            raise DatasetParseError(f"domain_map 형식 오류: {value}", line_no)
        if len(mapping) != n_domains:
            raise DatasetParseError(f"domain_map 길이 {len(mapping)} != n_domains {n_domains}", line_no)
        return mapping

    def _parse_row(self, line: str, dims: int, line_no: int) -> tuple[int, int, list[float]]:
        """단일 데이터 라인 파싱"""
        if not self.ROW_PATTERN.match(line):
            raise DatasetParseError(f"데이터 라인 형식 오류: {line[:40]}", line_no)
        parts = line.split(',')
        if len(parts) != dims + 2:
            raise DatasetParseError(f"열 수 {len(parts)} != {dims + 2} (dims 불일치)", line_no)
        try:
            return int(parts[0]), int(parts[1]), [float(v) for v in parts[2:]]
        except ValueError as e:
            raise DatasetParseError(f"숫자 변환 실패: {e}", line_no)


def format_dataset(dataset: SynthDataset) -> str:
    """SynthDataset을 INSURE-SYNTH 텍스트로 직렬화 (float repr로 비트 단위 보존)"""
    out = [MAGIC, f"dims: {dataset.dims}"]
    if dataset.region_of_dim is not None:
        out.append(f"regions: {','.join(dataset.region_of_dim)}")
    out += [
        f"seed: {dataset.generator_seed}",
        f"n_domains: {dataset.n_domains}",
        f"n_classes: {dataset.n_classes}",
        f"mixing: {dataset.mixing}",
        f"domain_map: {','.join(str(v) for v in dataset.domain_map)}",
        f"samples: {dataset.n_samples}",
    ]
    for d, y, row in zip(dataset.d.tolist(), dataset.y.tolist(), dataset.x.tolist()):
        out.append(f"{d},{y}," + ",".join(repr(v) for v in row))
    return "\n".join(out) + "\n"


def save_dataset(dataset: SynthDataset, path: Union[str, Path]):
    path = Path(path)
    path.write_text(format_dataset(dataset), encoding='utf-8')
    logger.info(f"데이터셋 저장: {path} ({dataset.n_samples}개 샘플)")


def load_dataset(path: Union[str, Path]) -> SynthDataset:
    path = Path(path)
    dataset = DatasetFileParser().parse(path.read_text(encoding='utf-8'))
    logger.info(f"데이터셋 로드: {path} ({dataset.n_samples}개 샘플, 도메인 {dataset.n_domains})")
    return dataset
