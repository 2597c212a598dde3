"""
고정 그래프 역전파 유틸리티

실제 미분은 torch.autograd 가 수행한다. 여기서는
- 등록된 미분 가능 primitive 목록과 tape 기록
- tape 위의 구간 상수 연산(_NON_DIFFERENTIABLE 목록) 차단. 목록 밖 torch 연산은
  검사 없이 autograd 로 넘어가므로 미분 가능성 보장은 이 목록 범위로 한정된다
- ParamSet 그룹별 gradient 수집, adjoint/유한차분 검증
을 담당한다.
"""
import contextvars
import functools
import logging
from collections import Counter
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import torch
import torch.nn as nn
from torch.overrides import TorchFunctionMode

from app.domain.schema.error_schema import UnregisteredPrimitiveError

logger = logging.getLogger(__name__)

PARAM_GROUPS = ("stencil", "correction", "minn", "mann", "re_embedding", "pde")

# 등록된 primitive 이름 -> 함수
PRIMITIVES: Dict[str, Callable] = {}

_ACTIVE_TAPE: contextvars.ContextVar = contextvars.ContextVar("active_tape", default=None)

# 구간 상수 연산: gradient 가 거의 모든 곳에서 0 이라 tape 에 올 수 없음
_NON_DIFFERENTIABLE = {
    torch.round, torch.floor, torch.ceil, torch.sign, torch.argmax, torch.argmin,
    torch.Tensor.round, torch.Tensor.floor, torch.Tensor.ceil, torch.Tensor.sign,
    torch.Tensor.argmax, torch.Tensor.argmin,
}


def primitive(name: str):
    """미분 가능 primitive 등록 데코레이터 - 활성 tape 에 호출 이름을 기록"""

    def decorator(fn: Callable) -> Callable:
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            tape = _ACTIVE_TAPE.get()
            if tape is not None:
                tape.record(name)
            return fn(*args, **kwargs)

        PRIMITIVES[name] = wrapper
        return wrapper

    return decorator


class _DifferentiabilityGuard(TorchFunctionMode):
    """_NON_DIFFERENTIABLE 에 있는 연산만 거부하고 나머지는 그대로 통과시킨다"""

    def __torch_function__(self, func, types, args=(), kwargs=None):
        if func in _NON_DIFFERENTIABLE:
            raise UnregisteredPrimitiveError(getattr(func, "__name__", str(func)))
        return func(*args, **(kwargs or {}))


class Tape:
    """학습 샘플 하나의 primitive 호출 기록 (컨텍스트 매니저)"""

    def __init__(self, strict: bool = True):
        self.strict = strict
        self.ops: List[str] = []
        self._token = None
        self._guard: Optional[_DifferentiabilityGuard] = None

    def record(self, name: str) -> None:
        self.ops.append(name)

    def counts(self) -> Counter:
        return Counter(self.ops)

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        if self.strict:
            self._guard = _DifferentiabilityGuard()
            self._guard.__enter__()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._guard is not None:
            self._guard.__exit__(exc_type, exc, tb)
            self._guard = None
        _ACTIVE_TAPE.reset(self._token)


class ParamSet:
    """이름 있는 파라미터 그룹 (stencil, correction, minn, mann, re_embedding, pde)"""

    def __init__(self, groups: Dict[str, Dict[str, nn.Parameter]]):
        seen = set()
        for group, params in groups.items():
            if group not in PARAM_GROUPS:
                raise ValueError(f"unknown parameter group: {group}")
            for name in params:
                full = f"{group}.{name}"
                if full in seen:
                    raise ValueError(f"duplicate parameter name: {full}")
                seen.add(full)
        self.groups = groups

    @classmethod
    def from_modules(cls, modules: Dict[str, Optional[nn.Module]]) -> "ParamSet":
        groups = {}
        for group, module in modules.items():
            if module is None:
                groups[group] = {}
                continue
            groups[group] = dict(module.named_parameters())
        return cls(groups)

    def items(self) -> Iterator[Tuple[str, str, nn.Parameter]]:
        for group, params in self.groups.items():
            for name, param in params.items():
                yield group, name, param

    def trainable(self) -> List[Tuple[str, str, nn.Parameter]]:
        return [(g, n, p) for g, n, p in self.items() if p.requires_grad]

    def snapshot(self) -> Dict[str, torch.Tensor]:
        return {f"{g}.{n}": p.detach().clone() for g, n, p in self.items()}

    def load(self, snapshot: Dict[str, torch.Tensor]) -> None:
        with torch.no_grad():
            for g, n, p in self.items():
                p.copy_(snapshot[f"{g}.{n}"])

    def numel(self) -> Dict[str, int]:
        return {g: sum(p.numel() for p in params.values()) for g, params in self.groups.items()}


class AutodiffService:
    """tape 기반 gradient 계산과 검증"""

    def grad(
        self,
        loss_fn: Callable[..., torch.Tensor],
        params: ParamSet,
        *inputs,
        strict: bool = True,
    ) -> Dict[str, Dict[str, torch.Tensor]]:
        """dLoss/dθ (그룹별). tape 에 등장하지 않은 파라미터는 0 adjoint"""
        trainable = params.trainable()
        with Tape(strict=strict) as tape:
            loss = loss_fn(*inputs)
        grads = torch.autograd.grad(loss, [p for _, _, p in trainable], allow_unused=True)
        out: Dict[str, Dict[str, torch.Tensor]] = {g: {} for g in params.groups}
        for (group, name, param), g in zip(trainable, grads):
            out[group][name] = torch.zeros_like(param) if g is None else g
        logger.debug(f"🔧 tape 기록 {len(tape.ops)}개 primitive: {dict(tape.counts())}")
        return out

    def fd_gradient(self, loss_fn: Callable[[], torch.Tensor], param: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
        """중앙 유한차분 gradient (param 을 제자리에서 흔들었다가 복원)"""
        grad = torch.zeros_like(param)
        flat = param.data.view(-1)
        grad_flat = grad.view(-1)
        with torch.no_grad():
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                plus = float(loss_fn())
                flat[i] = orig - eps
                minus = float(loss_fn())
                flat[i] = orig
                grad_flat[i] = (plus - minus) / (2 * eps)
        return grad

    def adjoint_check(
        self,
        fn: Callable[[torch.Tensor], torch.Tensor],
        x: torch.Tensor,
        generator: Optional[torch.Generator] = None,
    ) -> float:
        """<J v, w> 와 <v, Jᵀ w> 의 상대 차이"""
        v = torch.randn(x.shape, dtype=x.dtype, generator=generator)
        out, jv = torch.autograd.functional.jvp(fn, x, v)
        w = torch.randn(out.shape, dtype=out.dtype, generator=generator)
        _, jtw = torch.autograd.functional.vjp(fn, x, w)
        lhs = float((jv * w).sum())
        rhs = float((v * jtw).sum())
        scale = max(abs(lhs), abs(rhs), 1e-300)
        return abs(lhs - rhs) / scale


# 싱글톤 인스턴스
autodiff_service = AutodiffService()
