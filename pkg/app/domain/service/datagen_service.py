"""
고해상도 기준해 생성 → coarse 데이터셋

- KdV     : 적분인자(Lawson) RK4 pseudospectral, 2/3 dealiasing
- Burgers : 4차 중앙차분 + RK4 (PDE Block 의 고정 필터 재사용)
- GS      : 4차 중앙차분 + RK4
- NSE     : 와도-유선함수 pseudospectral RK4, 2/3 dealiasing
"""
import asyncio
import logging
import math
from typing import Callable, Optional, Tuple

import torch

from app.config.settings import CFL_LIMIT, DTYPE, MPD_THREADS
from app.domain.schema.dataset_schema import DatasetMeta, GenSpec, IcOptions, TrajectoryDataset
from app.domain.schema.error_schema import SolverDivergedError
from app.domain.schema.field_schema import Field, Grid
from app.domain.schema.physics_schema import PdeSystem, SystemTag
from app.domain.service.field_service import field_service
from app.domain.service.physics_service import StepContext, physics_service
from app.domain.service.spectral_service import spectral_service

logger = logging.getLogger(__name__)


def _dealias_mask(grid: Grid) -> torch.Tensor:
    """rfftn 배치의 2/3 규칙 마스크"""
    masks = []
    for axis, n in enumerate(grid.shape):
        last = axis == grid.ndim - 1
        freq = torch.fft.rfftfreq(n, d=1.0 / n, dtype=DTYPE) if last else torch.fft.fftfreq(n, d=1.0 / n, dtype=DTYPE)
        view = [1] * grid.ndim
        view[axis] = -1
        masks.append((freq.abs() < n / 3.0).reshape(view))
    mask = masks[0]
    for m in masks[1:]:
        mask = mask & m
    return mask


class _ReferenceSolver:
    """fine 격자 적분기 공통 인터페이스 (state 는 내부 표현)"""

    def __init__(self, system: PdeSystem, grid: Grid, dt: float):
        self.system = system
        self.grid = grid
        self.dt = dt

    def init(self, u0: torch.Tensor):
        raise NotImplementedError

    def step(self, state):
        raise NotImplementedError

    def observe(self, state) -> torch.Tensor:
        raise NotImplementedError


class _KdvSpectralSolver(_ReferenceSolver):
    """û_t = i k³ û − ½ i k FFT(u²): 선형항은 적분인자로 정확히 처리"""

    def __init__(self, system: PdeSystem, grid: Grid, dt: float):
        super().__init__(system, grid, dt)
        k = spectral_service.wavenumbers(grid).k_odd[0]
        self.k = k
        linear = 1j * k ** 3
        self.e = torch.exp(linear * dt)
        self.e2 = torch.exp(linear * dt / 2)
        self.mask = _dealias_mask(grid)

    def _nonlinear(self, u_hat: torch.Tensor) -> torch.Tensor:
        u = torch.fft.irfft(u_hat * self.mask, n=self.grid.shape[0])
        return -0.5j * self.k * torch.fft.rfft(u * u) * self.mask

    def init(self, u0: torch.Tensor) -> torch.Tensor:
        return torch.fft.rfft(u0[0])

    def step(self, u_hat: torch.Tensor) -> torch.Tensor:
        dt, e, e2 = self.dt, self.e, self.e2
        k1 = dt * self._nonlinear(u_hat)
        k2 = dt * self._nonlinear(e2 * (u_hat + 0.5 * k1))
        k3 = dt * self._nonlinear(e2 * u_hat + 0.5 * k2)
        k4 = dt * self._nonlinear(e * u_hat + e2 * k3)
        return e * u_hat + (e * k1 + 2.0 * e2 * (k2 + k3) + k4) / 6.0

    def observe(self, u_hat: torch.Tensor) -> torch.Tensor:
        return torch.fft.irfft(u_hat, n=self.grid.shape[0]).unsqueeze(0)


class _FiniteDifferenceSolver(_ReferenceSolver):
    """PDE Block 의 고정 4차 필터 + RK4 (Burgers, GS)"""

    def __init__(self, system: PdeSystem, grid: Grid, dt: float):
        super().__init__(system, grid, dt)
        self.ctx = StepContext.bare(system, grid, cfl_limit=CFL_LIMIT)

    def init(self, u0: torch.Tensor) -> torch.Tensor:
        return u0.unsqueeze(0)

    def step(self, u: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return u + physics_service.rk4_step(self.ctx, u, self.dt).increment

    def observe(self, u: torch.Tensor) -> torch.Tensor:
        return u[0]


class _VorticitySolver(_ReferenceSolver):
    """ω_t + (u·∇)ω = ν Δω + curl f − γ ω, Δψ = −ω, u = ∂yψ, v = −∂xψ"""

    def __init__(self, system: PdeSystem, grid: Grid, dt: float):
        super().__init__(system, grid, dt)
        wn = spectral_service.wavenumbers(grid)
        self.ky, self.kx = wn.k_odd[0], wn.k_odd[1]
        self.k2 = wn.k2
        self.safe_k2 = torch.where(wn.zero_mode, torch.ones_like(wn.k2), wn.k2)
        self.mask = _dealias_mask(grid)
        forcing = system.forcing
        self.drag = forcing.drag
        fx_hat = spectral_service.forward(forcing.static_field(grid)[0], grid)
        self.curl_f = -1j * self.ky * fx_hat
        self.nu = 1.0 / system.re

    def _velocity_hat(self, w_hat: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        psi_hat = w_hat / self.safe_k2
        psi_hat = torch.where(self.k2 == 0, torch.zeros_like(psi_hat), psi_hat)
        return 1j * self.ky * psi_hat, -1j * self.kx * psi_hat

    def _rate(self, w_hat: torch.Tensor) -> torch.Tensor:
        u_hat, v_hat = self._velocity_hat(w_hat)
        inv = lambda z: spectral_service.inverse(z * self.mask, self.grid)
        u, v = inv(u_hat), inv(v_hat)
        wx, wy = inv(1j * self.kx * w_hat), inv(1j * self.ky * w_hat)
        advection = spectral_service.forward(u * wx + v * wy, self.grid) * self.mask
        return -advection - (self.nu * self.k2 + self.drag) * w_hat + self.curl_f

    def init(self, u0: torch.Tensor) -> torch.Tensor:
        u_hat = spectral_service.forward(u0[0], self.grid)
        v_hat = spectral_service.forward(u0[1], self.grid)
        return 1j * self.kx * v_hat - 1j * self.ky * u_hat

    def step(self, w_hat: torch.Tensor) -> torch.Tensor:
        dt = self.dt
        r1 = self._rate(w_hat)
        r2 = self._rate(w_hat + 0.5 * dt * r1)
        r3 = self._rate(w_hat + 0.5 * dt * r2)
        r4 = self._rate(w_hat + dt * r3)
        return w_hat + (dt / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4)

    def observe(self, w_hat: torch.Tensor) -> torch.Tensor:
        u_hat, v_hat = self._velocity_hat(w_hat)
        return torch.stack([spectral_service.inverse(u_hat, self.grid), spectral_service.inverse(v_hat, self.grid)])


_SOLVERS = {
    SystemTag.KDV: _KdvSpectralSolver,
    SystemTag.BURGERS: _FiniteDifferenceSolver,
    SystemTag.GS: _FiniteDifferenceSolver,
    SystemTag.NSE: _VorticitySolver,
}


class DatagenService:
    """초기조건 샘플링, fine 시뮬레이션, 다운샘플링"""

    # ---------- 초기조건 ----------

    def sample_ic(self, system: PdeSystem, grid: Grid, seed: int, options: Optional[IcOptions] = None) -> Field:
        options = options or IcOptions()
        g = torch.Generator().manual_seed(seed)
        tag = system.tag
        if tag == SystemTag.KDV:
            if options.kind == "soliton":
                center = options.soliton_center
                if center is None:
                    center = grid.domain_length[0] / 4
                return self.soliton_ic(grid, options.soliton_speed, center)
            values = self._kdv_sines(grid, g, options)
        elif tag == SystemTag.BURGERS:
            values = self._band_limited(grid, g, options.burgers_max_wavenumber, options.burgers_peak)
        elif tag == SystemTag.GS:
            values = self._gs_patches(grid, g, options)
        else:
            values = self._divergence_free_noise(grid, g, options)
        return Field(grid=grid, values=values)

    def soliton_ic(self, grid: Grid, c: float, x0: float) -> Field:
        """u = 3c·sech²(√c/2·(x − x0)), 주기 도메인에서 가장 가까운 상 사용"""
        length = grid.domain_length[0]
        x = grid.coords(0)
        shift = torch.remainder(x - x0 + length / 2, length) - length / 2
        u = 3.0 * c / torch.cosh(0.5 * math.sqrt(c) * shift) ** 2
        return Field(grid=grid, values=u.unsqueeze(0))

    def _kdv_sines(self, grid: Grid, g: torch.Generator, options: IcOptions) -> torch.Tensor:
        x = grid.coords(0)
        length = grid.domain_length[0]
        u = torch.zeros_like(x)
        for _ in range(options.kdv_terms):
            amp = (2.0 * torch.rand((), generator=g, dtype=DTYPE) - 1.0) * options.kdv_amplitude
            l = int(torch.randint(1, options.kdv_max_wavenumber + 1, (), generator=g))
            phase = 2.0 * math.pi * torch.rand((), generator=g, dtype=DTYPE)
            u = u + amp * torch.sin(2.0 * math.pi * l * x / length + phase)
        return u.unsqueeze(0)

    def _random_spectrum(self, grid: Grid, g: torch.Generator, channels: int) -> torch.Tensor:
        shape = (channels,) + tuple(grid.shape[:-1]) + (grid.shape[-1] // 2 + 1,)
        real = torch.randn(shape, generator=g, dtype=DTYPE)
        imag = torch.randn(shape, generator=g, dtype=DTYPE)
        return torch.complex(real, imag)

    def _integer_k(self, grid: Grid) -> torch.Tensor:
        """rfftn 배치의 정수 파수 크기 |k|"""
        wn = spectral_service.wavenumbers(grid)
        k2 = sum((k * length / (2 * math.pi)) ** 2 for k, length in zip(wn.k, grid.domain_length))
        return torch.sqrt(k2)

    def _band_limited(self, grid: Grid, g: torch.Generator, k_max: int, peak: float) -> torch.Tensor:
        spec = self._random_spectrum(grid, g, 2)
        k = self._integer_k(grid)
        keep = (k <= k_max) & (k > 0)
        values = spectral_service.inverse(spec * keep, grid)
        return peak * values / values.abs().max()

    def _gs_patches(self, grid: Grid, g: torch.Generator, options: IcOptions) -> torch.Tensor:
        ny, nx = grid.shape
        values = torch.zeros((2, ny, nx), dtype=DTYPE)
        values[0] = 1.0
        size = max(1, int(round(options.gs_patch_fraction * min(ny, nx))))
        for _ in range(options.gs_patches):
            iy = int(torch.randint(0, ny, (), generator=g))
            ix = int(torch.randint(0, nx, (), generator=g))
            rows = torch.arange(iy, iy + size) % ny
            cols = torch.arange(ix, ix + size) % nx
            values[0][rows[:, None], cols[None, :]] = 0.5
            values[1][rows[:, None], cols[None, :]] = 0.25
        if options.gs_noise > 0:
            values = values + options.gs_noise * torch.randn(values.shape, generator=g, dtype=DTYPE)
        return values.clamp(0.0, 1.2)

    def _divergence_free_noise(self, grid: Grid, g: torch.Generator, options: IcOptions) -> torch.Tensor:
        spec = self._random_spectrum(grid, g, 2)
        k = self._integer_k(grid)
        envelope = torch.exp(-0.5 * (k - options.nse_peak_wavenumber) ** 2)
        envelope = torch.where(k == 0, torch.zeros_like(envelope), envelope)
        values = spectral_service.inverse(spec * envelope, grid)
        values = spectral_service.leray_project(values, grid)
        return options.nse_max_velocity * values / values.abs().max()

    # ---------- 시뮬레이션 ----------

    def reference_solver(self, spec: GenSpec) -> _ReferenceSolver:
        return _SOLVERS[spec.system.tag](spec.system, spec.fine_grid, spec.dt)

    def _check_fine(self, spec: GenSpec, u: torch.Tensor, step: int) -> None:
        if not bool(torch.isfinite(u).all()):
            raise SolverDivergedError(
                f"fine-grid solver unstable at step {step} (non-finite values); reduce dt (now {spec.dt})",
                step=step,
            )
        if spec.system.advective:
            cfl = float(u.abs().max()) * spec.dt / spec.fine_grid.min_dx
            if cfl > CFL_LIMIT:
                raise SolverDivergedError(
                    f"fine-grid CFL {cfl:.3f} exceeds {CFL_LIMIT} at step {step}; reduce dt (now {spec.dt})",
                    last_state=u,
                    step=step,
                )

    def fine_trajectory(self, spec: GenSpec, seed: int, record_every: int = 1) -> torch.Tensor:
        """warmup 이후 record_every 스텝마다 기록한 fine 궤적 [T, C, *fine]"""
        solver = self.reference_solver(spec)
        u0 = self.sample_ic(spec.system, spec.fine_grid, seed, spec.ic).values
        state = solver.init(u0)
        for n in range(spec.warmup_steps):
            state = solver.step(state)
        frames = [solver.observe(state)]
        self._check_fine(spec, frames[0], 0)
        for n in range(1, spec.total_fine_steps + 1):
            state = solver.step(state)
            if n % record_every == 0:
                frame = solver.observe(state)
                self._check_fine(spec, frame, n)
                frames.append(frame)
        return torch.stack(frames)

    def simulate(self, spec: GenSpec, seed: int) -> torch.Tensor:
        """coarse 궤적 [n_snapshots, C, *coarse]"""
        fine = self.fine_trajectory(spec, seed, record_every=spec.time_stride)
        return field_service.coarsen_tensor(fine, spec.space_factor, spec.system.ndim)

    async def generate_async(self, spec: GenSpec) -> TrajectoryDataset:
        n_total = spec.n_train + spec.n_test
        semaphore = asyncio.Semaphore(MPD_THREADS)
        logger.info(
            f"🔧 데이터 생성 시작: {spec.system.tag.value} {spec.fine_shape}→{spec.coarse_grid.shape}, "
            f"궤적 {spec.n_train}+{spec.n_test}개, Δt={spec.dt_macro}"
        )

        async def run(index: int) -> torch.Tensor:
            async with semaphore:
                traj = await asyncio.to_thread(self.simulate, spec, spec.seed + index)
                logger.info(f"✅ 궤적 {index + 1}/{n_total} 완료")
                return traj

        trajectories = await asyncio.gather(*[run(i) for i in range(n_total)])
        data = torch.stack(trajectories)
        grid = spec.coarse_grid
        meta = DatasetMeta(
            system=spec.system,
            shape=list(data.shape),
            dt=spec.dt_macro,
            dx=list(grid.dx),
            domain_length=list(grid.domain_length),
            n_train=spec.n_train,
            n_test=spec.n_test,
            seed=spec.seed,
        )
        return TrajectoryDataset(meta=meta, data=data)

    def generate(self, spec: GenSpec) -> TrajectoryDataset:
        return asyncio.run(self.generate_async(spec))


# 싱글톤 인스턴스
datagen_service = DatagenService()
