"""
역전파(reverse-mode) 자동 미분 모듈.
Tape에 연산을 기록 순서대로 쌓고, 스칼라 출력에서 역순으로 기울기를 전파합니다.
이진 마스크용 straight-through estimator(STE) 연산과 유한 차분 기울기 검사를 포함합니다.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

import numpy as np
from scipy.special import expit
from scipy.special import log_softmax as _log_softmax
from scipy.special import softmax as _softmax

from errors import ContractError, NumericFault, ShapeError

logger = logging.getLogger(__name__)

Array = np.ndarray


@dataclass
class Node:
    """Tape에 기록된 연산 하나"""
    op: str
    parents: tuple[int, ...]
    value: Array
    attrs: dict[str, Any] = field(default_factory=dict)
    name: str = ""
    grad: Optional[Array] = None  # 역전파 시 채워지는 기울기 슬롯


class Tensor:
    """Tape 노드를 가리키는 핸들 (값은 Tape가 소유)"""

    __slots__ = ("tape", "index")

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> Array:
        return self.tape.nodes[self.index].value

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.value.shape)

    @property
    def data(self) -> Array:
        """행 우선(row-major) 평탄화 값"""
        return self.value.ravel()

    @property
    def grad(self) -> Array:
        node = self.tape.nodes[self.index]
        return node.grad if node.grad is not None else np.zeros_like(node.value)

    def item(self) -> float:
        if self.value.size != 1:
            raise ContractError(f"스칼라가 아닌 텐서 {self.shape}에 item() 호출")
        return float(self.value.reshape(()))

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __repr__(self):
        return f"Tensor(op={self.tape.nodes[self.index].op}, shape={self.shape})"


# ---------------------------------------------------------------------------
# 연산 정의: forward(inputs, **attrs), vjp(grad, inputs, out, **attrs), check(inputs, **attrs)
# ---------------------------------------------------------------------------

def _same_shape(op: str, xs: list[Array], **_):
    if xs[0].shape != xs[1].shape:
        raise ShapeError(op, [x.shape for x in xs])


def _check_matmul(xs, **_):
    a, b = xs
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", [a.shape, b.shape])


def _check_bias(xs, **_):
    a, b = xs
    if a.ndim != 2 or b.ndim != 1 or a.shape[1] != b.shape[0]:
        raise ShapeError("add_bias", [a.shape, b.shape])


def _check_axis(op: str):
    def check(xs, axis=None, **_):
        if axis is not None and not -xs[0].ndim <= axis < xs[0].ndim:
            raise ShapeError(op, [xs[0].shape], f"axis={axis}")
    return check


def _check_rowwise(op: str):
    def check(xs, **_):
        if xs[0].ndim < 1:
            raise ShapeError(op, [xs[0].shape], "최소 1차원 필요")
    return check


def _check_concat(xs, axis=0, **_):
    ref = xs[0]
    for x in xs[1:]:
        if x.ndim != ref.ndim:
            raise ShapeError("concat", [v.shape for v in xs])
        for dim in range(ref.ndim):
            if dim != axis % ref.ndim and x.shape[dim] != ref.shape[dim]:
                raise ShapeError("concat", [v.shape for v in xs])


def _check_reshape(xs, shape=(), **_):
    if int(np.prod(shape)) != xs[0].size:
        raise ShapeError("reshape", [xs[0].shape, tuple(shape)])


def _reduce_grad(g, a, axis):
    if axis is None:
        return np.broadcast_to(g, a.shape).copy()
    return np.broadcast_to(np.expand_dims(g, axis), a.shape).copy()


def _concat_vjp(g, xs, out, axis=0):
    splits = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return tuple(np.split(g, splits, axis=axis))


def _ste_forward(xs, surrogate=False):
    s = expit(xs[0])
    if surrogate:
        return 1.0 - s
    # σ(m̃) < 0.5 일 때 켜짐, 0.5 동점은 꺼짐
    return (s < 0.5).astype(np.float64)


def _ste_vjp(g, xs, out, surrogate=False):
    s = expit(xs[0])
    return (-g * s * (1.0 - s),)


@dataclass(frozen=True)
class OpSpec:
    forward: Callable[..., Array]
    vjp: Callable[..., tuple]
    check: Optional[Callable[..., None]] = None


OPS: dict[str, OpSpec] = {
    "matmul": OpSpec(
        lambda xs: xs[0] @ xs[1],
        lambda g, xs, out: (g @ xs[1].T, xs[0].T @ g),
        _check_matmul,
    ),
    "add": OpSpec(
        lambda xs: xs[0] + xs[1],
        lambda g, xs, out: (g, g),
        lambda xs, **kw: _same_shape("add", xs),
    ),
    "sub": OpSpec(
        lambda xs: xs[0] - xs[1],
        lambda g, xs, out: (g, -g),
        lambda xs, **kw: _same_shape("sub", xs),
    ),
    "mul": OpSpec(
        lambda xs: xs[0] * xs[1],
        lambda g, xs, out: (g * xs[1], g * xs[0]),
        lambda xs, **kw: _same_shape("mul", xs),
    ),
    "add_bias": OpSpec(
        lambda xs: xs[0] + xs[1],
        lambda g, xs, out: (g, g.sum(axis=0)),
        _check_bias,
    ),
    "scale": OpSpec(
        lambda xs, factor=1.0: xs[0] * factor,
        lambda g, xs, out, factor=1.0: (g * factor,),
    ),
    "sigmoid": OpSpec(
        lambda xs: expit(xs[0]),
        lambda g, xs, out: (g * out * (1.0 - out),),
    ),
    "tanh": OpSpec(
        lambda xs: np.tanh(xs[0]),
        lambda g, xs, out: (g * (1.0 - out * out),),
    ),
    "exp": OpSpec(
        lambda xs: np.exp(xs[0]),
        lambda g, xs, out: (g * out,),
    ),
    "log": OpSpec(
        lambda xs: np.log(xs[0]),
        lambda g, xs, out: (g / xs[0],),
    ),
    "square": OpSpec(
        lambda xs: xs[0] * xs[0],
        lambda g, xs, out: (2.0 * xs[0] * g,),
    ),
    "softmax": OpSpec(
        lambda xs: _softmax(xs[0], axis=-1),
        lambda g, xs, out: (out * (g - (g * out).sum(axis=-1, keepdims=True)),),
        _check_rowwise("softmax"),
    ),
    "log_softmax": OpSpec(
        lambda xs: _log_softmax(xs[0], axis=-1),
        lambda g, xs, out: (g - np.exp(out) * g.sum(axis=-1, keepdims=True),),
        _check_rowwise("log_softmax"),
    ),
    "sum": OpSpec(
        lambda xs, axis=None: np.sum(xs[0], axis=axis),
        lambda g, xs, out, axis=None: (_reduce_grad(g, xs[0], axis),),
        _check_axis("sum"),
    ),
    "mean": OpSpec(
        lambda xs, axis=None: np.mean(xs[0], axis=axis),
        lambda g, xs, out, axis=None: (
            _reduce_grad(g, xs[0], axis) / (xs[0].size if axis is None else xs[0].shape[axis]),
        ),
        _check_axis("mean"),
    ),
    "concat": OpSpec(
        lambda xs, axis=0: np.concatenate(xs, axis=axis),
        _concat_vjp,
        _check_concat,
    ),
    "reshape": OpSpec(
        lambda xs, shape=(): xs[0].reshape(shape),
        lambda g, xs, out, shape=(): (g.reshape(xs[0].shape),),
        _check_reshape,
    ),
    "ste_mask": OpSpec(_ste_forward, _ste_vjp),
}


class Tape:
    """연산 기록 테이프 (단일 작성자)

    Args:
        surrogate_mask: True면 ste_mask의 순전파가 이진값 대신 대리 함수 1 - σ(m̃)를 사용
        frozen: detach 노드 값을 재생(replay)할 목록. 기울기 검사에서 기준 분포를 고정할 때 사용
    """

    def __init__(self, surrogate_mask: bool = False, frozen: Optional[list[Array]] = None):
        self.nodes: list[Node] = []
        self.surrogate_mask = surrogate_mask
        self._frozen = frozen
        self._detached: list[Array] = []

    def __len__(self):
        return len(self.nodes)

    def _append(self, node: Node) -> Tensor:
        self.nodes.append(node)
        return Tensor(self, len(self.nodes) - 1)

    def leaf(self, value, name: str = "") -> Tensor:
        """학습 파라미터 등 기울기를 받을 입력 노드"""
        arr = np.array(value, dtype=np.float64)
        return self._append(Node("leaf", (), arr, name=name))

    def constant(self, value) -> Tensor:
        """기울기가 필요 없는 상수 노드"""
        arr = np.array(value, dtype=np.float64)
        return self._append(Node("const", (), arr))

    def detach(self, t: Tensor) -> Tensor:
        """기울기 전파를 끊은 복사본 (frozen이 있으면 기록된 값을 재생)"""
        position = len(self._detached)
        if self._frozen is not None:
            if position >= len(self._frozen):
                raise ContractError(f"재생할 detach 값이 부족합니다 ({position})")
            value = self._frozen[position]
            if value.shape != t.value.shape:
                raise ShapeError("detach", [value.shape, t.value.shape])
        else:
            value = t.value.copy()
        self._detached.append(value)
        return self._append(Node("detach", (), value))

    def detached_values(self) -> list[Array]:
        return list(self._detached)

    def evaluate(self, op: str, *parents: Tensor, **attrs) -> Tensor:
        """연산을 계산하고 테이프에 기록

        Returns:
            순전파 결과 텐서
        """
        spec = OPS.get(op)
        if spec is None:
            raise ContractError(f"지원하지 않는 연산: {op}")
        for p in parents:
            if p.tape is not self:
                raise ContractError(f"{op}: 다른 테이프의 텐서가 섞였습니다")
        inputs = [p.value for p in parents]
        if spec.check is not None:
            spec.check(inputs, **attrs)
        with np.errstate(all="ignore"):
            out = np.asarray(spec.forward(inputs, **attrs), dtype=np.float64)
        if not np.all(np.isfinite(out)):
            raise NumericFault(f"{op} 결과에 유한하지 않은 값 (노드 {len(self.nodes)})")
        return self._append(Node(op, tuple(p.index for p in parents), out, attrs))

    def backward(self, output: Tensor, wrt: Optional[Mapping[str, Tensor]] = None) -> dict:
        """스칼라 출력에서 역전파

        Args:
            output: 스칼라 텐서
            wrt: {이름: 잎 텐서}. None이면 모든 leaf 노드에 대해 {노드 인덱스: 기울기}

        Returns:
            잎별 기울기 (경로가 없는 잎은 0)
        """
        if output.tape is not self:
            raise ContractError("다른 테이프의 출력으로 역전파할 수 없습니다")
        if output.value.size != 1:
            raise ContractError(f"스칼라가 아닌 출력 {output.shape}은 역전파할 수 없습니다")

        for node in self.nodes:
            node.grad = None
        self.nodes[output.index].grad = np.ones_like(output.value)

        for i in range(output.index, -1, -1):
            node = self.nodes[i]
            if node.grad is None or not node.parents:
                continue
            inputs = [self.nodes[p].value for p in node.parents]
            with np.errstate(all="ignore"):
                parent_grads = OPS[node.op].vjp(node.grad, inputs, node.value, **node.attrs)
            for p, g in zip(node.parents, parent_grads):
                parent = self.nodes[p]
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=np.float64)
                else:
                    parent.grad = parent.grad + g

        if wrt is None:
            return {
                i: (n.grad if n.grad is not None else np.zeros_like(n.value))
                for i, n in enumerate(self.nodes) if n.op == "leaf"
            }
        return {name: t.grad for name, t in wrt.items()}


# ---------------------------------------------------------------------------
# 함수형 인터페이스
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    return a.tape.evaluate("matmul", a, b)


def add(a: Tensor, b: Tensor) -> Tensor:
    return a.tape.evaluate("add", a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return a.tape.evaluate("sub", a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return a.tape.evaluate("mul", a, b)


def add_bias(a: Tensor, bias: Tensor) -> Tensor:
    return a.tape.evaluate("add_bias", a, bias)


def scale(a: Tensor, factor: float) -> Tensor:
    return a.tape.evaluate("scale", a, factor=float(factor))


def sigmoid(a: Tensor) -> Tensor:
    return a.tape.evaluate("sigmoid", a)


def tanh(a: Tensor) -> Tensor:
    return a.tape.evaluate("tanh", a)


def exp(a: Tensor) -> Tensor:
    return a.tape.evaluate("exp", a)


def log(a: Tensor) -> Tensor:
    return a.tape.evaluate("log", a)


def square(a: Tensor) -> Tensor:
    return a.tape.evaluate("square", a)


def softmax(a: Tensor) -> Tensor:
    return a.tape.evaluate("softmax", a)


def log_softmax(a: Tensor) -> Tensor:
    return a.tape.evaluate("log_softmax", a)


def reduce_sum(a: Tensor, axis: Optional[int] = None) -> Tensor:
    return a.tape.evaluate("sum", a, axis=axis)


def reduce_mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    return a.tape.evaluate("mean", a, axis=axis)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    return tensors[0].tape.evaluate("concat", *tensors, axis=axis)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    return a.tape.evaluate("reshape", a, shape=tuple(shape))


def detach(a: Tensor) -> Tensor:
    return a.tape.detach(a)


def ste_mask(logits: Tensor) -> Tensor:
    """이진 마스크 m = 1[σ(m̃) < 0.5], 역전파는 대리 함수 1 - σ(m̃)의 미분을 사용"""
    return logits.tape.evaluate("ste_mask", logits, surrogate=logits.tape.surrogate_mask)


def hard_mask_values(logits: Array) -> Array:
    """테이프 없이 이진 마스크 값만 계산"""
    return (expit(np.asarray(logits, dtype=np.float64)) < 0.5).astype(np.float64)


# ---------------------------------------------------------------------------
# 유한 차분 기울기 검사
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    """기울기 검사 결과"""
    max_rel_error: float
    tol: float
    worst: Optional[tuple[str, int]]
    n_coords: int
    failure: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.failure is None and self.max_rel_error < self.tol

    def summary(self) -> str:
        if self.failure is not None:
            return f"실패: {self.failure}"
        status = "통과" if self.passed else "실패"
        where = f" (최대 오차 좌표 {self.worst[0]}[{self.worst[1]}])" if self.worst else ""
        return (f"{status}: 최대 상대 오차 {self.max_rel_error:.3e} / 허용치 {self.tol:.1e}, "
                f"좌표 {self.n_coords}개{where}")

    @classmethod
    def compare(
        cls,
        analytic: Mapping[str, Array],
        numeric: Mapping[str, Array],
        tol: float,
        floor: float = 1e-4,
    ) -> "GradCheckReport":
        """좌표별 상대 오차 |a - n| / max(|a|, |n|, floor)의 최댓값으로 판정"""
        worst, max_err, count = None, 0.0, 0
        for name, a in analytic.items():
            a = np.asarray(a, dtype=np.float64).ravel()
            n = np.asarray(numeric[name], dtype=np.float64).ravel()
            if a.shape != n.shape:
                raise ShapeError("check_gradient", [a.shape, n.shape], name)
            count += a.size
            if a.size == 0:
                continue
            rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
            idx = int(np.argmax(rel))
            if rel[idx] > max_err or worst is None:
                max_err, worst = float(rel[idx]), (name, idx)
        return cls(max_rel_error=max_err, tol=tol, worst=worst, n_coords=count)


Builder = Callable[[Tape, dict[str, Tensor]], Tensor]


def check_gradient(
    build: Builder,
    params: Mapping[str, Array],
    tol: float = 1e-4,
    step: float = 1e-5,
) -> GradCheckReport:
    """역전파 기울기를 중앙 유한 차분 (f(θ+h) - f(θ-h)) / 2h 와 비교

    마스크는 대리 함수 경로로 계산하고, detach된 기준 분포는 기준점 값으로 고정합니다.

    Args:
        build: (tape, 잎 텐서 dict) -> 스칼라 손실. 호출마다 같은 그래프를 만들어야 함
        params: {이름: 배열}
        tol: 허용 상대 오차
        step: 유한 차분 간격 h

    Returns:
        GradCheckReport
    """
    if step <= 0:
        raise ContractError(f"유한 차분 간격은 양수여야 합니다: {step}")
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    base = Tape(surrogate_mask=True)
    leaves = {k: base.leaf(v, k) for k, v in params.items()}
    out = build(base, leaves)
    analytic = base.backward(out, leaves)
    frozen = base.detached_values()

    def evaluate_at(name: str, flat_index: int, delta: float) -> float:
        perturbed = dict(params)
        arr = params[name].copy()
        arr.flat[flat_index] += delta
        perturbed[name] = arr
        tape = Tape(surrogate_mask=True, frozen=frozen)
        try:
            return build(tape, {k: tape.leaf(v, k) for k, v in perturbed.items()}).item()
        except NumericFault:
            return float("nan")

    numeric: dict[str, Array] = {}
    for name, value in params.items():
        grad = np.zeros_like(value)
        for i in range(value.size):
            plus = evaluate_at(name, i, step)
            minus = evaluate_at(name, i, -step)
            if not (np.isfinite(plus) and np.isfinite(minus)):
                logger.warning(f"섭동 결과가 유한하지 않음: {name}[{i}]")
                return GradCheckReport(
                    max_rel_error=float("inf"), tol=tol, worst=(name, i),
                    n_coords=value.size,
                    failure=f"{name}[{i}] 섭동에서 유한하지 않은 손실",
                )
            grad.flat[i] = (plus - minus) / (2.0 * step)
        numeric[name] = grad

    report = GradCheckReport.compare(analytic, numeric, tol)
    logger.debug(report.summary())
    return report
