"""
대칭 제약 학습형 유한차분 필터

커널 배열의 축 0 이 미분 방향이다 (k[i, j], i = 미분축 offset).
필터 파라미터는 고정 basis 텐서와의 선형결합으로 커널을 만든다.
"""
import math
from typing import Dict, List, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from app.config.settings import DTYPE
from app.domain.schema.error_schema import GridError
from app.domain.schema.stencil_schema import MomentTable
from app.domain.service.autodiff_service import primitive
from app.domain.service.field_service import field_service

MOMENT_MAX_ORDER = 6
MOMENT_TOL = 1e-10


def central_weights(order: int, taps: int) -> torch.Tensor:
    """taps 점 Taylor(Vandermonde) 계를 풀어 중앙차분 가중치를 구한다 (offset -h..h)"""
    half = taps // 2
    offsets = torch.arange(-half, half + 1, dtype=DTYPE)
    vander = torch.stack([offsets ** n for n in range(taps)])
    rhs = torch.zeros(taps, dtype=DTYPE)
    rhs[order] = float(math.factorial(order))
    return torch.linalg.solve(vander, rhs)


class _KernelFilter(nn.Module):
    order: int
    kernel_shape: Tuple[int, ...]

    def kernel(self) -> torch.Tensor:
        raise NotImplementedError

    def init_central(self) -> "_KernelFilter":
        raise NotImplementedError

    @property
    def radius(self) -> int:
        return self.kernel_shape[0] // 2

    def realize(self, dx: float) -> torch.Tensor:
        if dx <= 0:
            raise GridError(f"dx must be positive, got {dx}")
        return self.kernel() / dx ** self.order

    @primitive("stencil_apply")
    def apply(self, values: torch.Tensor, dx: float, axis: int = 0) -> torch.Tensor:
        """values [..., *spatial] 의 `axis` 배열축 방향 교차상관 (주기 패딩)"""
        ndim = len(self.kernel_shape)
        spatial = tuple(values.shape[values.dim() - ndim:])
        if any(n < self.kernel_shape[0] for n in spatial):
            raise GridError(f"grid {spatial} smaller than kernel {self.kernel_shape}")
        k = self.realize(dx)
        if ndim == 2 and axis == 1:
            k = k.t()
        flat = values.reshape((-1, 1) + spatial)
        padded = field_service.pad_tensor(flat, self.radius, ndim)
        conv = F.conv1d if ndim == 1 else F.conv2d
        out = conv(padded, k.reshape((1, 1) + tuple(k.shape)))
        return out.reshape(values.shape)

    def sum_rule_report(self, dx: float = 1.0) -> MomentTable:
        k = self.realize(dx).detach()
        ndim = k.dim()
        half = k.shape[0] // 2
        offs = torch.arange(-half, half + 1, dtype=DTYPE)
        moments: Dict[str, float] = {}
        vanishing: List[str] = []
        leading = None
        accuracy = None
        scale = float(k.abs().max()) if k.numel() else 0.0
        for total in range(MOMENT_MAX_ORDER + 1):
            qs = range(total + 1) if ndim == 2 else [0]
            for q in qs:
                p = total - q
                if ndim == 2:
                    weight = torch.outer(offs ** p, offs ** q)
                else:
                    weight = offs ** p
                value = float((k * weight).sum())
                key = f"{p},{q}"
                moments[key] = value
                if abs(value) <= MOMENT_TOL * max(scale, 1.0):
                    vanishing.append(key)
                    continue
                if leading is None:
                    leading = key
                if accuracy is None and total > self.order:
                    accuracy = total - self.order
        return MomentTable(
            derivative_order=self.order,
            moments=moments,
            vanishing=vanishing,
            leading=leading,
            accuracy_order=accuracy,
        )


class _BasisFilter(_KernelFilter):
    """kernel = Σ_p params[p]·basis[p] (대칭/중심 규칙이 basis 에 고정됨)"""

    def __init__(self, order: int, basis: torch.Tensor, trainable: bool = True):
        super().__init__()
        self.order = order
        self.kernel_shape = tuple(basis.shape[1:])
        self.register_buffer("basis", basis)
        self.params = nn.Parameter(torch.zeros(basis.shape[0], dtype=DTYPE), requires_grad=trainable)

    def kernel(self) -> torch.Tensor:
        return torch.einsum("p,p...->...", self.params, self.basis)

    def set_params(self, values: torch.Tensor) -> "_BasisFilter":
        with torch.no_grad():
            self.params.copy_(torch.as_tensor(values, dtype=DTYPE))
        return self


def _orbit_basis(reps: List[Tuple[int, int]], antisymmetric: bool) -> torch.Tensor:
    """5×5 축반사 궤도 basis. antisymmetric=True 면 축 0 방향 반사에 부호 반전"""
    basis = torch.zeros(len(reps), 5, 5, dtype=DTYPE)
    for n, (i, j) in enumerate(reps):
        for si in (1, -1):
            for sj in (1, -1):
                a, b = si * i, sj * j
                sign = si if antisymmetric else 1
                basis[n, a + 2, b + 2] = sign
        if not antisymmetric:
            # 중심 = -s
            basis[n, 2, 2] = -float(basis[n].sum())
    return basis


G2_ORBITS = [(1, 0), (2, 0), (1, 1), (1, 2), (2, 1), (2, 2)]
G1_ORBITS = [(1, 0), (2, 0), (1, 1), (1, 2), (2, 1), (2, 2)]


class SymmetricFilter2(_BasisFilter):
    """g″: 6 파라미터, 중심 -s, s = 4(a3+a4+a5+a6) + 2(a1+a2)"""

    def __init__(self, trainable: bool = True):
        super().__init__(2, _orbit_basis(G2_ORBITS, antisymmetric=False), trainable)
        self.init_central()

    def init_central(self) -> "SymmetricFilter2":
        w = central_weights(2, 5)
        return self.set_params(torch.stack([w[3], w[4]] + [torch.zeros((), dtype=DTYPE)] * 4))


class AntisymmetricFilter1(_BasisFilter):
    """g′: 미분축 반대칭, 횡축 대칭, 6 파라미터"""

    def __init__(self, trainable: bool = True):
        super().__init__(1, _orbit_basis(G1_ORBITS, antisymmetric=True), trainable)
        self.init_central()

    def init_central(self) -> "AntisymmetricFilter1":
        w = central_weights(1, 5)
        return self.set_params(torch.stack([w[3], w[4]] + [torch.zeros((), dtype=DTYPE)] * 4))


def _tap_basis(order: int, taps: int) -> torch.Tensor:
    half = taps // 2
    basis = torch.zeros(half, taps, dtype=DTYPE)
    for o in range(1, half + 1):
        basis[o - 1, half + o] = 1.0
        if order % 2:
            basis[o - 1, half - o] = -1.0
        else:
            basis[o - 1, half - o] = 1.0
            basis[o - 1, half] = -2.0
    return basis


class Tap1D(_BasisFilter):
    """1D 탭 필터: 홀수 차수는 반대칭, 짝수 차수는 대칭(중심 = -2Σc)"""

    def __init__(self, order: int, taps: int = 5, trainable: bool = True):
        if order not in (1, 2, 3):
            raise ValueError(f"derivative order must be 1, 2 or 3, got {order}")
        if taps not in (5, 7):
            raise ValueError(f"taps must be 5 or 7, got {taps}")
        super().__init__(order, _tap_basis(order, taps), trainable)
        self.taps = taps
        self.init_central()

    def init_central(self) -> "Tap1D":
        w = central_weights(self.order, self.taps)
        return self.set_params(w[self.taps // 2 + 1:])


class FreeFilter(_KernelFilter):
    """구조 제약 없는 필터 (Model B): 전체 커널이 파라미터"""

    def __init__(self, template: _BasisFilter):
        super().__init__()
        self.order = template.order
        self.kernel_shape = template.kernel_shape
        self.weight = nn.Parameter(template.kernel().detach().clone())

    def kernel(self) -> torch.Tensor:
        return self.weight

    def init_central(self) -> "FreeFilter":
        return self


class StencilBank(nn.Module):
    """PDE Block 의 학습형 ∇̂, ∇̂² (2D) 또는 ∂x, ∂xx, ∂xxx (1D)

    mode: "symmetric" (기본), "free" (Model B), "fixed" (Model D, 학습 안 함)
    """

    def __init__(self, ndim: int, mode: str = "symmetric", independent_axis_filters: bool = False):
        super().__init__()
        if mode not in ("symmetric", "free", "fixed"):
            raise ValueError(f"unknown stencil mode: {mode}")
        self.ndim = ndim
        self.mode = mode
        self.independent_axis_filters = independent_axis_filters and ndim == 2
        trainable = mode != "fixed"

        def build(factory):
            f = factory(trainable)
            return FreeFilter(f) if mode == "free" else f

        if ndim == 1:
            self.filters = nn.ModuleDict({
                "d1": build(lambda t: Tap1D(1, 5, t)),
                "d2": build(lambda t: Tap1D(2, 5, t)),
                "d3": build(lambda t: Tap1D(3, 7, t)),
            })
        else:
            filters = {
                "g1": build(lambda t: AntisymmetricFilter1(t)),
                "g2": build(lambda t: SymmetricFilter2(t)),
            }
            if self.independent_axis_filters:
                filters["g1_y"] = build(lambda t: AntisymmetricFilter1(t))
                filters["g2_y"] = build(lambda t: SymmetricFilter2(t))
            self.filters = nn.ModuleDict(filters)

    def _filter(self, axis: int, order: int) -> _KernelFilter:
        if self.ndim == 1:
            return self.filters[f"d{order}"]
        if order not in (1, 2):
            raise ValueError(f"2D stencils provide orders 1 and 2, got {order}")
        name = f"g{order}"
        # 배열축 0 = y
        if self.independent_axis_filters and axis == 0:
            name += "_y"
        return self.filters[name]

    def partial(self, values: torch.Tensor, dx: Tuple[float, ...], axis: int, order: int) -> torch.Tensor:
        return self._filter(axis, order).apply(values, dx[axis], axis)

    def gradient(self, values: torch.Tensor, dx: Tuple[float, ...]) -> Tuple[torch.Tensor, ...]:
        """(∂x, ∂y) 순서 - 2D 배열축은 [y, x]"""
        if self.ndim == 1:
            return (self.partial(values, dx, 0, 1),)
        return self.partial(values, dx, 1, 1), self.partial(values, dx, 0, 1)

    def laplacian(self, values: torch.Tensor, dx: Tuple[float, ...]) -> torch.Tensor:
        out = self.partial(values, dx, 0, 2)
        for axis in range(1, self.ndim):
            out = out + self.partial(values, dx, axis, 2)
        return out
