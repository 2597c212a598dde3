import logging
import math
import threading
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import pandas as pd
import torch

from app.config.settings import DTYPE, SPECTRUM_K_SCALE
from app.domain.schema.error_schema import ShapeError
from app.domain.schema.field_schema import Field, Grid
from app.domain.service.autodiff_service import primitive

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WaveNumbers:
    """rfftn 배치에 맞춘 축별 파수 (2π/L 스케일)"""
    k: Tuple[torch.Tensor, ...]
    k_odd: Tuple[torch.Tensor, ...]
    k2: torch.Tensor
    zero_mode: torch.Tensor


class SpectralService:
    """Fourier 공간 연산: Poisson, 스펙트럴 미분, 에너지 스펙트럼

    변환 규약: 정방향 비정규화, 역방향 축마다 1/N
    """

    def __init__(self):
        self._cache: Dict[Tuple, WaveNumbers] = {}
        self._lock = threading.Lock()

    def wavenumbers(self, grid: Grid) -> WaveNumbers:
        key = (grid.shape, grid.domain_length)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        with self._lock:
            if key not in self._cache:
                self._cache[key] = self._build(grid)
            return self._cache[key]

    def _build(self, grid: Grid) -> WaveNumbers:
        ks, ks_odd = [], []
        for axis, (n, length) in enumerate(zip(grid.shape, grid.domain_length)):
            last = axis == grid.ndim - 1
            freq = torch.fft.rfftfreq(n, d=1.0 / n, dtype=DTYPE) if last else torch.fft.fftfreq(n, d=1.0 / n, dtype=DTYPE)
            k = freq * (2 * math.pi / length)
            k_odd = k.clone()
            if n % 2 == 0:
                # Nyquist 모드는 홀수 차수 미분에서 0
                nyquist = (freq.abs() == n // 2)
                k_odd[nyquist] = 0.0
            view = [1] * grid.ndim
            view[axis] = -1
            ks.append(k.reshape(view))
            ks_odd.append(k_odd.reshape(view))
        k2 = sum(k ** 2 for k in ks)
        zero_mode = k2 == 0
        return WaveNumbers(k=tuple(ks), k_odd=tuple(ks_odd), k2=k2, zero_mode=zero_mode)

    @staticmethod
    def _dims(grid: Grid) -> Tuple[int, ...]:
        return tuple(range(-grid.ndim, 0))

    def forward(self, values: torch.Tensor, grid: Grid) -> torch.Tensor:
        return torch.fft.rfftn(values, dim=self._dims(grid))

    def inverse(self, spectrum: torch.Tensor, grid: Grid) -> torch.Tensor:
        return torch.fft.irfftn(spectrum, s=grid.shape, dim=self._dims(grid))

    # ---------- 미분 ----------

    @primitive("spectral_derivative")
    def derivative(self, values: torch.Tensor, grid: Grid, axis: int, order: int) -> torch.Tensor:
        """iFFT((iφ)^order · FFT(f)), 홀수 차수는 Nyquist 0"""
        if order not in (1, 2, 3):
            raise ValueError(f"order must be 1, 2 or 3, got {order}")
        wn = self.wavenumbers(grid)
        k = wn.k_odd[axis] if order % 2 else wn.k[axis]
        return self.inverse(self.forward(values, grid) * (1j * k) ** order, grid)

    def spectral_derivative(self, f: Field, axis: int, order: int) -> Field:
        return f.with_values(self.derivative(f.values, f.grid, axis, order))

    @primitive("spectral_laplacian")
    def laplacian(self, values: torch.Tensor, grid: Grid) -> torch.Tensor:
        wn = self.wavenumbers(grid)
        return self.inverse(-wn.k2 * self.forward(values, grid), grid)

    def divergence(self, velocity: torch.Tensor, grid: Grid) -> torch.Tensor:
        """velocity [..., 2, Ny, Nx] (채널 0 = u(x방향), 1 = v(y방향))"""
        return self.derivative(velocity[..., 0, :, :], grid, 1, 1) + self.derivative(velocity[..., 1, :, :], grid, 0, 1)

    # ---------- Poisson ----------

    @primitive("poisson_solve")
    def poisson(self, source: torch.Tensor, grid: Grid) -> torch.Tensor:
        """Δp = source, p*(0,0) = 0 (평균 0 게이지)"""
        if grid.ndim != 2:
            raise ShapeError(f"Poisson solve requires a 2D grid, got ndim={grid.ndim}")
        wn = self.wavenumbers(grid)
        denom = torch.where(wn.zero_mode, torch.ones_like(wn.k2), -wn.k2)
        p_hat = self.forward(source, grid) / denom
        p_hat = torch.where(wn.zero_mode, torch.zeros_like(p_hat), p_hat)
        return self.inverse(p_hat, grid)

    def solve_poisson(self, source: Field) -> Field:
        if source.grid.ndim != 2 or source.channels != 1:
            raise ShapeError("solve_poisson expects a single-channel 2D field")
        return source.with_values(self.poisson(source.values, source.grid))

    def pressure(self, velocity: torch.Tensor, grid: Grid, stencils=None) -> torch.Tensor:
        """ψ(u) = 2(u_x v_y − u_y v_x). stencils 가 주어지면 학습 필터로 미분"""
        if velocity.shape[-3] != 2:
            raise ShapeError(f"pressure source needs 2 velocity channels, got {velocity.shape[-3]}")
        u, v = velocity[..., 0, :, :], velocity[..., 1, :, :]
        if stencils is None:
            ux, uy = self.derivative(u, grid, 1, 1), self.derivative(u, grid, 0, 1)
            vx, vy = self.derivative(v, grid, 1, 1), self.derivative(v, grid, 0, 1)
        else:
            ux, uy = stencils.gradient(u, grid.dx)
            vx, vy = stencils.gradient(v, grid.dx)
        return 2.0 * (ux * vy - uy * vx)

    def pressure_source(self, u: Field) -> Field:
        if u.channels != 2:
            raise ShapeError(f"pressure_source expects 2 channels, got {u.channels}")
        psi = self.pressure(u.values, u.grid)
        return Field(grid=u.grid, values=psi.unsqueeze(0))

    @primitive("leray_project")
    def leray_project(self, velocity: torch.Tensor, grid: Grid) -> torch.Tensor:
        """무발산 성분만 남김 (홀수 미분과 같은 Nyquist 규칙의 파수 사용)"""
        wn = self.wavenumbers(grid)
        kx, ky = wn.k_odd[1], wn.k_odd[0]
        kk = kx ** 2 + ky ** 2
        safe = torch.where(kk == 0, torch.ones_like(kk), kk)
        u_hat = self.forward(velocity[..., 0, :, :], grid)
        v_hat = self.forward(velocity[..., 1, :, :], grid)
        dot = (kx * u_hat + ky * v_hat) / safe
        dot = torch.where(kk == 0, torch.zeros_like(dot), dot)
        u_new = self.inverse(u_hat - kx * dot, grid)
        v_new = self.inverse(v_hat - ky * dot, grid)
        return torch.stack([u_new, v_new], dim=-3)

    # ---------- 에너지 스펙트럼 ----------

    def energy_spectrum_tensor(self, velocity: torch.Tensor, grid: Grid) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        E(k) = Σ_{|k'|∈[k-½Δk,k+½Δk)} ½(|û|²+|v̂|²), Σ E = ½·mean(u²+v²)

        k 는 물리 파수 2π·m/L, 셸 폭 Δk 는 가장 작은 기본 파수 2π/max(L).
        2π 도메인이면 Δk = 1 이라 정수 셸과 같다.
        """
        if grid.ndim != 2 or velocity.shape[-3] != 2:
            raise ShapeError("energy spectrum needs a 2-channel 2D field")
        ny, nx = grid.shape
        ly, lx = grid.domain_length
        total = ny * nx
        spec = torch.fft.fft2(velocity, dim=(-2, -1)) / total
        energy = 0.5 * (spec[..., 0, :, :].abs() ** 2 + spec[..., 1, :, :].abs() ** 2)
        ky = (2 * math.pi / ly) * torch.fft.fftfreq(ny, d=1.0 / ny, dtype=DTYPE).reshape(-1, 1)
        kx = (2 * math.pi / lx) * torch.fft.fftfreq(nx, d=1.0 / nx, dtype=DTYPE).reshape(1, -1)
        dk = 2 * math.pi / max(ly, lx)
        bins = torch.floor(torch.sqrt(kx ** 2 + ky ** 2) / dk + 0.5).to(torch.long).reshape(-1)
        n_bins = int(bins.max()) + 1
        flat = energy.reshape(energy.shape[:-2] + (-1,))
        out = torch.zeros(flat.shape[:-1] + (n_bins,), dtype=DTYPE)
        out = out.index_add(out.dim() - 1, bins, flat)
        return dk * torch.arange(n_bins, dtype=DTYPE), out

    def energy_spectrum(self, u: Field) -> Tuple[torch.Tensor, torch.Tensor]:
        return self.energy_spectrum_tensor(u.values, u.grid)

    def spectrum_frame(self, k: torch.Tensor, energy: torch.Tensor, k_scale: int = SPECTRUM_K_SCALE) -> pd.DataFrame:
        """CSV 컬럼: k, E(k), k^5·E(k)"""
        k_np = k.numpy()
        e_np = energy.numpy()
        return pd.DataFrame({"k": k_np, "E(k)": e_np, f"k^{k_scale}*E(k)": k_np ** k_scale * e_np})


# 싱글톤 인스턴스
spectral_service = SpectralService()
