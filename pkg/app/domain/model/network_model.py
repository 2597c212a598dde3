"""
보정 네트워크 블록

- SpectralConvNet : Correction Block / M_iNN (Fourier 층 L개 + lift P + projection Q)
- MacroNet        : M_aNN (주기 패딩 dilated conv encoder-decoder, skip 연결)
- ReEmbedding     : Re_embb = (1/Re)·(a ⊗ b)

모든 블록은 주기 격자에서 shift-equivariant 하고, 마지막 층이 0 으로 초기화되어
학습 전 보정량은 0 이다.
"""
from typing import List, Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from app.config.settings import CDTYPE, DTYPE
from app.domain.schema.error_schema import ShapeError
from app.domain.service.autodiff_service import primitive


def _activation(name: str) -> nn.Module:
    if name == "gelu":
        return nn.GELU()
    if name == "relu":
        return nn.ReLU()
    raise ValueError(f"unknown activation: {name}")


def _pointwise(ndim: int, c_in: int, c_out: int) -> nn.Module:
    conv = nn.Conv1d if ndim == 1 else nn.Conv2d
    return conv(c_in, c_out, kernel_size=1, dtype=DTYPE)


def _zero_(module: nn.Module) -> nn.Module:
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()
    return module


class SpectralConv(nn.Module):
    """K(φ)z = iFFT(R_φ · FFT(z)) - 유지 모드만 가중치 곱"""

    def __init__(self, ndim: int, c_in: int, c_out: int, modes: int, generator: Optional[torch.Generator] = None):
        super().__init__()
        self.ndim = ndim
        self.c_in, self.c_out, self.modes = c_in, c_out, modes
        scale = 1.0 / (c_in * c_out)
        shape = (c_in, c_out) + (modes,) * ndim
        # 2D 는 ky 양/음 두 블록
        n_blocks = 1 if ndim == 1 else 2
        self.weights = nn.ParameterList([
            nn.Parameter(scale * torch.randn(shape, dtype=CDTYPE, generator=generator))
            for _ in range(n_blocks)
        ])

    @primitive("spectral_conv")
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.c_in:
            raise ShapeError(f"spectral conv expects {self.c_in} channels, got {x.shape[1]}")
        spatial = tuple(x.shape[2:])
        dims = tuple(range(-self.ndim, 0))
        x_ft = torch.fft.rfftn(x, dim=dims)
        out_ft = torch.zeros((x.shape[0], self.c_out) + tuple(x_ft.shape[2:]), dtype=CDTYPE)
        if self.ndim == 1:
            m = min(self.modes, x_ft.shape[-1])
            out_ft[..., :m] = torch.einsum("bix,iox->box", x_ft[..., :m], self.weights[0][..., :m])
        else:
            # 음/양 ky 블록이 겹치지 않도록 격자에 맞춰 모드 수 제한
            my = max(1, min(self.modes, spatial[0] // 2))
            mx = min(self.modes, x_ft.shape[-1])
            w_pos = self.weights[0][..., :my, :mx]
            w_neg = self.weights[1][..., :my, :mx]
            out_ft[:, :, :my, :mx] = torch.einsum("bixy,ioxy->boxy", x_ft[:, :, :my, :mx], w_pos)
            out_ft[:, :, -my:, :mx] = torch.einsum("bixy,ioxy->boxy", x_ft[:, :, -my:, :mx], w_neg)
        return torch.fft.irfftn(out_ft, s=spatial, dim=dims)


class SpectralConvNet(nn.Module):
    """v⁰ = P(x), v^{l+1} = σ(W^l v^l + K(φ)v^l), out = Q(v^L)

    Q 는 width → proj → out 의 두 pointwise 층이며 마지막 층은 0 초기화.
    """

    def __init__(
        self,
        ndim: int,
        in_channels: int,
        out_channels: int,
        width: int = 16,
        modes: int = 12,
        layers: int = 4,
        projection: int = 64,
        activation: str = "gelu",
        generator: Optional[torch.Generator] = None,
    ):
        super().__init__()
        self.ndim = ndim
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.lift = _pointwise(ndim, in_channels, width)
        self.spectral = nn.ModuleList([SpectralConv(ndim, width, width, modes, generator) for _ in range(layers)])
        self.bypass = nn.ModuleList([_pointwise(ndim, width, width) for _ in range(layers)])
        self.act = _activation(activation)
        self.proj_hidden = _pointwise(ndim, width, projection)
        self.proj_out = _zero_(_pointwise(ndim, projection, out_channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != self.ndim + 2 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"expected [B, {self.in_channels}, *spatial({self.ndim}D)], got {tuple(x.shape)}"
            )
        v = self.lift(x)
        for spectral, bypass in zip(self.spectral, self.bypass):
            v = self.act(bypass(v) + spectral(v))
        return self.proj_out(self.act(self.proj_hidden(v)))


class _PeriodicConvBlock(nn.Module):
    def __init__(self, ndim: int, c_in: int, c_out: int, dilation: int, activation: str):
        super().__init__()
        conv = nn.Conv1d if ndim == 1 else nn.Conv2d
        self.conv = conv(
            c_in, c_out, kernel_size=3, dilation=dilation, padding=dilation,
            padding_mode="circular", dtype=DTYPE,
        )
        self.act = _activation(activation)

    @primitive("periodic_conv")
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(self.conv(x))


class MacroNet(nn.Module):
    """M_aNN: 입력 {u_k, Δt, dx} → 상태 채널 수의 보정량

    해상도를 줄이지 않는 encoder-decoder. level l 의 conv 는 dilation 2^l 로
    수용영역을 넓히고, decoder 는 같은 level 의 encoder 출력과 concat 한다.
    """

    def __init__(
        self,
        ndim: int,
        state_channels: int,
        hidden: Sequence[int] = (32, 32, 64, 128),
        blocks: int = 2,
        activation: str = "gelu",
    ):
        super().__init__()
        self.ndim = ndim
        self.state_channels = state_channels
        hidden = list(hidden)
        c_in = state_channels + 2
        self.encoder = nn.ModuleList()
        for level, h in enumerate(hidden):
            stage = []
            for b in range(blocks):
                stage.append(_PeriodicConvBlock(ndim, c_in, h, 2 ** level, activation))
                c_in = h
            self.encoder.append(nn.Sequential(*stage))
        self.decoder = nn.ModuleList()
        for level in reversed(range(len(hidden) - 1)):
            h = hidden[level]
            stage = [_PeriodicConvBlock(ndim, c_in + h, h, 2 ** level, activation)]
            for _ in range(blocks - 1):
                stage.append(_PeriodicConvBlock(ndim, h, h, 2 ** level, activation))
            c_in = h
            self.decoder.append(nn.Sequential(*stage))
        self.head = _zero_(_pointwise(ndim, c_in, state_channels))

    def inputs(self, u: torch.Tensor, dt: float, dx: float) -> torch.Tensor:
        """u [B, C, *spatial] 에 Δt, dx 상수 채널을 붙인다"""
        const = torch.ones_like(u[:, :1])
        return torch.cat([u, const * dt, const * dx], dim=1)

    def forward(self, u: torch.Tensor, dt: float, dx: float) -> torch.Tensor:
        if u.dim() != self.ndim + 2 or u.shape[1] != self.state_channels:
            raise ShapeError(f"expected [B, {self.state_channels}, *spatial], got {tuple(u.shape)}")
        h = self.inputs(u, dt, dx)
        skips: List[torch.Tensor] = []
        for stage in self.encoder:
            h = stage(h)
            skips.append(h)
        skips.pop()
        for stage in self.decoder:
            h = stage(torch.cat([h, skips.pop()], dim=1))
        return self.head(h)


class ReEmbedding(nn.Module):
    """Re_embb = (1/Re)·(a ⊗ b), a·b 는 격자 한 변 길이의 학습 벡터 (1 로 시작)"""

    def __init__(self, shape: Sequence[int]):
        super().__init__()
        ny, nx = shape
        self.a = nn.Parameter(torch.ones(ny, dtype=DTYPE))
        self.b = nn.Parameter(torch.ones(nx, dtype=DTYPE))

    def forward(self, re: torch.Tensor) -> torch.Tensor:
        """re: 스칼라 또는 [B] → [B, 1, ny, nx] (스칼라면 [1, 1, ny, nx])"""
        re = torch.as_tensor(re, dtype=DTYPE).reshape(-1, 1, 1, 1)
        return (1.0 / re) * torch.outer(self.a, self.b)


# ---------- 보정 연산 ----------

def correct(net: Optional[SpectralConvNet], u: torch.Tensor) -> torch.Tensor:
    """Correction Block: û = ū + net(ū). net 이 없으면 û = ū"""
    if net is None:
        return u
    if u.shape[1] != net.out_channels:
        raise ShapeError(f"correction net expects {net.out_channels} channels, got {u.shape[1]}")
    return u + net(u)


def minn_correct(net: Optional[SpectralConvNet], u: torch.Tensor, features: Optional[torch.Tensor] = None) -> torch.Tensor:
    """M_iNN 의 가산 보정량. 입력 = [ū, Ξ] 채널 concat"""
    if net is None:
        return torch.zeros_like(u)
    x = u if features is None else torch.cat([u, features], dim=1)
    if x.shape[1] != net.in_channels:
        raise ShapeError(f"M_iNN expects {net.in_channels} input channels, got {x.shape[1]}")
    return net(x)


def mann_correct(net: Optional[MacroNet], u: torch.Tensor, dt: float, dx: float) -> torch.Tensor:
    if net is None:
        return torch.zeros_like(u)
    return net(u, dt, dx)
