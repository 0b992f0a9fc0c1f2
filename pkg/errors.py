"""
INSURE 실험실 전체에서 공유하는 예외 정의.
"""

from typing import Any, Optional


class InsureError(Exception):
    """모든 실험실 예외의 기반 클래스"""


class ShapeError(InsureError, ValueError):
    """연산 입력의 모양이 맞지 않음 (conformance error)"""

    def __init__(self, op: str, shapes: list[tuple[int, ...]], detail: str = ""):
        self.op = op
        self.shapes = shapes
        shape_text = ", ".join(str(tuple(s)) for s in shapes)
        message = f"{op}: 모양 불일치 {shape_text}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class ContractError(InsureError, ValueError):
    """함수 사전 조건 위반"""


class NumericFault(InsureError, ArithmeticError):
    """NaN/Inf 발생"""


class DomainError(InsureError, ValueError):
    """수학적 정의역 밖의 입력 (예: σ ≤ 0)"""


class ConfigError(InsureError, ValueError):
    """설정 값 오류"""


class UnknownDomainError(InsureError, LookupError):
    """데이터셋에 없는 도메인 인덱스"""


class DatasetParseError(InsureError, ValueError):
    """데이터셋 파일 파싱 실패"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"{line_number}번째 줄: {message}"
        super().__init__(message)


class TrainingAborted(InsureError):
    """학습 중 손실이 유한하지 않아 중단됨"""

    def __init__(self, step: int, last_good: Any, reason: str):
        self.step = step
        self.last_good = last_good
        super().__init__(f"step {step}에서 학습 중단: {reason}")


class GradientCheckFailed(InsureError):
    """해석적 기울기와 유한 차분 기울기가 어긋남"""

    def __init__(self, report: Any):
        self.report = report
        super().__init__(report.summary())
