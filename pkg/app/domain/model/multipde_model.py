"""
MultiPdeModel - 매크로 스텝 합성과 롤아웃

u_{k+1} = u_k + Σ_{m=1..M} δū_m + M_aNN(u_k, Δt, dx)

ablation flag 9개(Model A~I)는 런타임 스위치다.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import torch
import torch.nn as nn

from app.config.settings import DTYPE
from app.domain.model.network_model import MacroNet, ReEmbedding, SpectralConvNet, mann_correct
from app.domain.model.stencil_model import StencilBank
from app.domain.schema.error_schema import ShapeError, SolverDivergedError
from app.domain.schema.physics_schema import ModelConfig, PdeSystem, SystemTag
from app.domain.service.autodiff_service import ParamSet
from app.domain.service.physics_service import NSE_FEATURE_CHANNELS, StepContext, physics_service
from app.domain.service.spectral_service import spectral_service

logger = logging.getLogger(__name__)


@dataclass
class MacroResult:
    state: torch.Tensor
    cfl_violation: bool = False


@dataclass
class RolloutResult:
    """예측 [B, n, C, *spatial] (u_0 제외). 발산 시 n < steps"""
    states: torch.Tensor
    steps_requested: int
    diverged: bool = False
    diverged_step: Optional[int] = None
    cfl_flags: List[bool] = field(default_factory=list)

    @property
    def steps_completed(self) -> int:
        return int(self.states.shape[1])


class MultiPdeModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        system = config.system
        flags = config.flags
        ndim, channels = system.ndim, system.channels

        # 초기화 난수는 전역 RNG 상태와 분리
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed)
            generator = torch.Generator().manual_seed(config.seed)

            self.stencils = StencilBank(ndim, config.stencil_mode, config.independent_axis_filters)
            self.correction = None
            if not flags.no_correction:
                c = config.correction
                self.correction = SpectralConvNet(
                    ndim, channels, channels, c.width, c.modes, c.layers, c.projection, config.act, generator
                )
            self.minn = None
            if not flags.no_minn:
                m = config.minn
                extra = NSE_FEATURE_CHANNELS if system.tag == SystemTag.NSE else 0
                self.minn = SpectralConvNet(
                    ndim, channels + extra, channels, m.width, m.modes, m.layers, m.projection, config.act, generator
                )
            self.mann = None
            if not (flags.no_mann or flags.physics_only):
                self.mann = MacroNet(ndim, channels, config.mann_hidden, config.mann_blocks, config.act)
            self.re_embedding = ReEmbedding(config.grid.shape) if system.tag == SystemTag.NSE else None

        self.pde = nn.ParameterDict({
            name: nn.Parameter(torch.tensor(value, dtype=DTYPE), requires_grad=config.trainable_lambda)
            for name, value in system.lambdas().items()
        })
        logger.info(
            f"🔧 MultiPdeModel 생성: system={system.tag.value}, grid={config.grid.shape}, "
            f"stencil={config.stencil_mode}, integrator={self.integrator}"
        )

    @property
    def integrator(self) -> str:
        return "euler" if self.config.flags.euler else self.config.scheme.integrator

    def param_set(self) -> ParamSet:
        return ParamSet.from_modules({
            "stencil": self.stencils,
            "correction": self.correction,
            "minn": self.minn,
            "mann": self.mann,
            "re_embedding": self.re_embedding,
            "pde": self.pde,
        })

    # ---------- 컨텍스트 ----------

    def context(self, system: Optional[PdeSystem] = None, batch: int = 1) -> StepContext:
        """system 을 바꾸면 (Re/외력 일반화 실험) 같은 가중치로 다른 λ 를 쓴다"""
        system = system or self.config.system
        if system.tag != self.config.system.tag:
            raise ShapeError(f"model built for {self.config.system.tag.value}, got {system.tag.value}")
        lambdas = {}
        for name, value in system.lambdas().items():
            param = self.pde[name]
            # 학습된 λ 는 그대로, 다른 system 이 주어지면 비율만큼 스케일
            base = self.config.system.lambdas()[name]
            lambdas[name] = param if value == base else param * (value / base)
        re_embb = None
        if self.re_embedding is not None:
            re_embb = self.re_embedding(torch.full((batch,), system.re, dtype=DTYPE))
        return StepContext(
            system=system,
            grid=self.config.grid,
            stencils=self.stencils,
            lambdas=lambdas,
            correction=self.correction,
            minn=self.minn,
            re_embb=re_embb,
            use_poisson=not self.config.flags.no_poisson,
            pressure_source=self.config.pressure_source,
            poisson_stop_gradient=self.config.poisson_stop_gradient,
            leray=self.config.use_leray,
            integrator=self.integrator,
            cfl_limit=self.config.cfl_limit,
        )

    def _check_state(self, u: torch.Tensor) -> None:
        expected = (self.config.system.channels,) + tuple(self.config.grid.shape)
        if u.dim() != len(expected) + 1 or tuple(u.shape[1:]) != expected:
            raise ShapeError(f"state must be [B, {', '.join(map(str, expected))}], got {tuple(u.shape)}")

    # ---------- 매크로 스텝 ----------

    def macro_step(self, u: torch.Tensor, system: Optional[PdeSystem] = None,
                   ctx: Optional[StepContext] = None) -> MacroResult:
        self._check_state(u)
        ctx = ctx or self.context(system, u.shape[0])
        scheme = self.config.scheme
        flags = self.config.flags
        cfl_violation = False

        out = u
        if not flags.no_physics:
            state = u
            for _ in range(scheme.micro_steps):
                micro = physics_service.micro_step(ctx, state, scheme.dt_micro)
                cfl_violation = cfl_violation or micro.cfl_violation
                state = micro.state
            # u_k + Σδū == 마지막 마이크로 상태
            out = state
        if self.mann is not None:
            out = out + mann_correct(self.mann, u, scheme.dt_macro, self.config.grid.min_dx)
            if ctx.leray:
                out = spectral_service.leray_project(out, ctx.grid)
        if not bool(torch.isfinite(out).all()):
            raise SolverDivergedError("non-finite state after macro step", last_state=u.detach())
        return MacroResult(state=out, cfl_violation=cfl_violation)

    def forward(self, u: torch.Tensor) -> torch.Tensor:
        return self.macro_step(u).state

    def rollout(self, u0: torch.Tensor, steps: int, system: Optional[PdeSystem] = None,
                truncate: bool = True) -> RolloutResult:
        """자기회귀 롤아웃. truncate=True 면 발산 시 그 직전까지 잘라 반환"""
        if steps < 1:
            raise ValueError(f"steps must be >= 1, got {steps}")
        self._check_state(u0)
        ctx = self.context(system, u0.shape[0])
        states: List[torch.Tensor] = []
        flags: List[bool] = []
        diverged_step = None
        u = u0
        for k in range(steps):
            try:
                result = self.macro_step(u, ctx=ctx)
            except SolverDivergedError as e:
                if not truncate:
                    e.step = k
                    raise
                diverged_step = k
                logger.warning(f"⚠️ 롤아웃 발산: step {k + 1}/{steps} 에서 중단")
                break
            u = result.state
            states.append(u)
            flags.append(result.cfl_violation)
        if any(flags):
            logger.warning(f"⚠️ CFL 경고: {sum(flags)}/{len(flags)} 스텝에서 CFL 한계 {ctx.cfl_limit} 초과")
        if states:
            stacked = torch.stack(states, dim=1)
        else:
            stacked = u0.new_zeros((u0.shape[0], 0) + tuple(u0.shape[1:]))
        return RolloutResult(
            states=stacked,
            steps_requested=steps,
            diverged=diverged_step is not None,
            diverged_step=diverged_step,
            cfl_flags=flags,
        )
