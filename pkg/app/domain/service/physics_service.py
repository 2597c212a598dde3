"""
Physics Block: 학습형 PDE 잔차 B, Poisson Block, RK4/Euler 마이크로 적분기

텐서 규약: 상태 u 는 [B, C, *spatial], 2D 채널 0 = x 방향 속도(또는 GS 의 u).
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import torch

from app.config.settings import CFL_LIMIT, DTYPE
from app.domain.model.network_model import SpectralConvNet, correct, minn_correct
from app.domain.model.stencil_model import StencilBank
from app.domain.schema.error_schema import ShapeError, SolverDivergedError
from app.domain.schema.field_schema import Grid
from app.domain.schema.physics_schema import PdeSystem, SystemTag
from app.domain.service.autodiff_service import primitive
from app.domain.service.spectral_service import spectral_service

logger = logging.getLogger(__name__)

# NSE M_iNN 특징 채널 순서: p(1), ∇̂û(4), ∇̂²û(2), ∇̂p(2), f(2), Re(1)
NSE_FEATURE_CHANNELS = 12


@dataclass
class StepContext:
    """마이크로 스텝 하나에 필요한 연산자/네트워크 묶음"""
    system: PdeSystem
    grid: Grid
    stencils: StencilBank
    lambdas: Dict[str, torch.Tensor] = field(default_factory=dict)
    correction: Optional[SpectralConvNet] = None
    minn: Optional[SpectralConvNet] = None
    re_embb: Optional[torch.Tensor] = None
    use_poisson: bool = True
    pressure_source: str = "spectral"
    poisson_stop_gradient: bool = False
    leray: bool = False
    integrator: str = "rk4"
    cfl_limit: float = CFL_LIMIT

    @classmethod
    def bare(cls, system: PdeSystem, grid: Grid, stencils: Optional[StencilBank] = None, **kwargs) -> "StepContext":
        """보정 네트워크 없이 중앙차분 필터만 쓰는 순수 물리 컨텍스트"""
        if stencils is None:
            stencils = StencilBank(system.ndim, mode="fixed")
        lambdas = {k: torch.tensor(v, dtype=DTYPE) for k, v in system.lambdas().items()}
        return cls(system=system, grid=grid, stencils=stencils, lambdas=lambdas, **kwargs)

    def lam(self, name: str) -> torch.Tensor:
        if name in self.lambdas:
            return self.lambdas[name]
        return torch.tensor(self.system.lambdas()[name], dtype=DTYPE)


@dataclass
class StepResult:
    increment: torch.Tensor
    cfl_number: float = 0.0
    cfl_violation: bool = False


@dataclass
class MicroResult:
    state: torch.Tensor
    delta: torch.Tensor
    cfl_violation: bool = False


def rk4_increment(rate: Callable[[torch.Tensor], torch.Tensor], u: torch.Tensor, dt: float,
                  first_slope: Optional[torch.Tensor] = None) -> torch.Tensor:
    """(δt/6)(r1 + 2r2 + 2r3 + r4), 각 stage 에서 NaN 이면 SolverDivergedError"""
    r1 = rate(u) if first_slope is None else first_slope
    _check_finite(r1, u, 1)
    r2 = rate(u + 0.5 * dt * r1)
    _check_finite(r2, u, 2)
    r3 = rate(u + 0.5 * dt * r2)
    _check_finite(r3, u, 3)
    r4 = rate(u + dt * r3)
    _check_finite(r4, u, 4)
    return (dt / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4)


def euler_increment(rate: Callable[[torch.Tensor], torch.Tensor], u: torch.Tensor, dt: float,
                    first_slope: Optional[torch.Tensor] = None) -> torch.Tensor:
    r1 = rate(u) if first_slope is None else first_slope
    _check_finite(r1, u, 1)
    return dt * r1


def _check_finite(rate: torch.Tensor, state: torch.Tensor, stage: int) -> None:
    if not bool(torch.isfinite(rate).all()):
        raise SolverDivergedError(f"non-finite slope at stage {stage}", last_state=state.detach())


class PhysicsService:
    """시스템별 RHS 와 마이크로 스텝 합성"""

    # ---------- 외력 / 압력 ----------

    def forcing(self, ctx: StepContext, u: torch.Tensor) -> Optional[torch.Tensor]:
        if ctx.system.tag != SystemTag.NSE:
            return None
        return ctx.system.forcing.evaluate(ctx.grid, u)

    def poisson_block(self, ctx: StepContext, u: torch.Tensor) -> torch.Tensor:
        """p = solve_poisson(ψ(ū)) → [B, 1, ny, nx]"""
        if ctx.system.tag != SystemTag.NSE:
            raise ShapeError(f"Poisson block is only defined for NSE, got {ctx.system.tag.value}")
        stencils = ctx.stencils if ctx.pressure_source == "stencil" else None
        psi = spectral_service.pressure(u, ctx.grid, stencils)
        p = spectral_service.poisson(psi, ctx.grid).unsqueeze(1)
        return p.detach() if ctx.poisson_stop_gradient else p

    def _pressure(self, ctx: StepContext, u: torch.Tensor) -> Optional[torch.Tensor]:
        if ctx.system.tag != SystemTag.NSE:
            return None
        if not ctx.use_poisson:
            return torch.zeros_like(u[:, :1])
        return self.poisson_block(ctx, u)

    def viscosity_plane(self, ctx: StepContext, u: torch.Tensor) -> torch.Tensor:
        """NSE 확산 계수 평면 Re_embb (없으면 1/Re 상수)"""
        if ctx.re_embb is not None:
            plane = ctx.re_embb
        else:
            plane = torch.full((1, 1) + tuple(ctx.grid.shape), 1.0 / ctx.system.re, dtype=DTYPE)
        return ctx.lam("re_scale") * plane

    # ---------- RHS ----------

    @primitive("pde_rhs")
    def rhs(self, ctx: StepContext, u: torch.Tensor, u_hat: Optional[torch.Tensor] = None,
            p: Optional[torch.Tensor] = None) -> torch.Tensor:
        """학습형 B: 비선형 계수는 ū, 미분은 û 에 적용"""
        tag = ctx.system.tag
        if u.dim() != ctx.grid.ndim + 2 or u.shape[1] != ctx.system.channels:
            raise ShapeError(f"{tag.value} state must be [B, {ctx.system.channels}, *grid], got {tuple(u.shape)}")
        if u_hat is None:
            u_hat = u
        d = ctx.stencils
        dx = ctx.grid.dx

        if tag == SystemTag.KDV:
            ux = d.partial(u_hat, dx, 0, 1)
            uxxx = d.partial(u_hat, dx, 0, 3)
            return -u * ux - uxxx

        if tag == SystemTag.GS:
            a, b = u[:, 0:1], u[:, 1:2]
            lap = d.laplacian(u_hat, dx)
            reaction = a * b * b
            alpha, kappa = ctx.lam("alpha"), ctx.lam("kappa")
            du = ctx.lam("d_u") * lap[:, 0:1] - reaction + alpha * (1.0 - a)
            dv = ctx.lam("d_v") * lap[:, 1:2] + reaction - (alpha + kappa) * b
            return torch.cat([du, dv], dim=1)

        gx, gy = d.gradient(u_hat, dx)
        advection = u[:, 0:1] * gx + u[:, 1:2] * gy
        lap = d.laplacian(u_hat, dx)
        if tag == SystemTag.BURGERS:
            return ctx.lam("nu") * lap - advection

        if p is None:
            raise ShapeError("NSE right-hand side requires the pressure field p")
        px, py = d.gradient(p, dx)
        grad_p = torch.cat([px, py], dim=1)
        return self.viscosity_plane(ctx, u) * lap - advection - grad_p + self.forcing(ctx, u)

    def evaluate(self, ctx: StepContext, u: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, Optional[torch.Tensor]]:
        """B(ū) 와 함께 û, p 반환"""
        u_hat = correct(ctx.correction, u)
        p = self._pressure(ctx, u)
        return self.rhs(ctx, u, u_hat, p), u_hat, p

    def slope(self, ctx: StepContext, u: torch.Tensor) -> torch.Tensor:
        return self.evaluate(ctx, u)[0]

    # ---------- 적분 ----------

    def cfl_number(self, ctx: StepContext, u: torch.Tensor, dt: float) -> float:
        if not ctx.system.advective:
            return 0.0
        return float(u.detach().abs().max()) * dt / ctx.grid.min_dx

    def rk4_step(self, ctx: StepContext, u: torch.Tensor, dt: float,
                 first_slope: Optional[torch.Tensor] = None) -> StepResult:
        if dt <= 0:
            raise ValueError(f"δt must be positive, got {dt}")
        cfl = self.cfl_number(ctx, u, dt)
        increment_fn = euler_increment if ctx.integrator == "euler" else rk4_increment
        increment = increment_fn(lambda s: self.slope(ctx, s), u, dt, first_slope)
        return StepResult(increment=increment, cfl_number=cfl, cfl_violation=cfl > ctx.cfl_limit)

    # ---------- M_iNN 특징 ----------

    def features(self, ctx: StepContext, u: torch.Tensor, u_hat: torch.Tensor,
                 p: Optional[torch.Tensor]) -> Optional[torch.Tensor]:
        """Ξ(p, ∇̂û, ∇̂²û, ∇̂p, f, Re_embb). NSE 외에는 None"""
        if ctx.system.tag != SystemTag.NSE:
            return None
        d, dx = ctx.stencils, ctx.grid.dx
        gx, gy = d.gradient(u_hat, dx)
        # (∂x u, ∂y u, ∂x v, ∂y v)
        grad_u = torch.cat([gx[:, 0:1], gy[:, 0:1], gx[:, 1:2], gy[:, 1:2]], dim=1)
        lap = d.laplacian(u_hat, dx)
        px, py = d.gradient(p, dx)
        f = self.forcing(ctx, u)
        re = self.viscosity_plane(ctx, u).expand(u.shape[0], 1, *ctx.grid.shape)
        return torch.cat([p, grad_u, lap, px, py, f, re], dim=1)

    def micro_step(self, ctx: StepContext, u: torch.Tensor, dt: float) -> MicroResult:
        """δū = ∫(B + f) + M_iNN(ū, Ξ), ū_{m+1} = ū_m + δū"""
        r1, u_hat, p = self.evaluate(ctx, u)
        step = self.rk4_step(ctx, u, dt, first_slope=r1)
        delta = step.increment
        if ctx.minn is not None:
            delta = delta + minn_correct(ctx.minn, u, self.features(ctx, u, u_hat, p))
        state = u + delta
        if ctx.leray:
            state = spectral_service.leray_project(state, ctx.grid)
            delta = state - u
        if not bool(torch.isfinite(state).all()):
            raise SolverDivergedError("non-finite state after micro step", last_state=u.detach())
        return MicroResult(state=state, delta=delta, cfl_violation=step.cfl_violation)


# 싱글톤 인스턴스
physics_service = PhysicsService()
