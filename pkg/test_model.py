"""
MultiPdeModel 테스트: 매크로 스텝 합성, 롤아웃, ablation 스위치, fine 솔버와의 일치
"""
import math

import pytest
import torch

from app.config.settings import DTYPE
from app.domain.model.multipde_model import MultiPdeModel
from app.domain.schema.dataset_schema import GenSpec, IcOptions
from app.domain.schema.error_schema import ShapeError, SolverDivergedError
from app.domain.schema.physics_schema import ModelConfig, NetConfig, PdeSystem, StepScheme
from app.domain.service.datagen_service import datagen_service
from app.domain.service.physics_service import physics_service
from app.domain.service.spectral_service import spectral_service
from conftest import smooth_burgers_state, tiny_model_config


def _gs_uniform(shape=(8, 8)) -> torch.Tensor:
    return torch.stack([torch.ones(shape, dtype=DTYPE), torch.zeros(shape, dtype=DTYPE)]).unsqueeze(0)


def _manual_physics(model: MultiPdeModel, u: torch.Tensor) -> torch.Tensor:
    ctx = model.context(batch=u.shape[0])
    state = u
    for _ in range(model.config.scheme.micro_steps):
        state = physics_service.micro_step(ctx, state, model.config.scheme.dt_micro).state
    return state


# ---------- 고정점 / 합성 ----------

def test_zero_networks_keep_gs_fixed_point(gs_model):
    u = _gs_uniform()
    result = gs_model.rollout(u, 100)
    assert not result.diverged
    assert result.steps_completed == 100
    assert torch.allclose(result.states[:, -1], u, atol=1e-10)


def test_no_mann_macro_step_is_sum_of_micro_increments():
    model = MultiPdeModel(tiny_model_config("burgers", variant="model-g"))
    assert model.mann is None
    u = smooth_burgers_state(model.config.grid, batch=2)
    ctx = model.context(batch=2)
    total = torch.zeros_like(u)
    state = u
    for _ in range(4):
        micro = physics_service.micro_step(ctx, state, model.config.scheme.dt_micro)
        total = total + micro.delta
        state = micro.state
    with torch.no_grad():
        out = model.macro_step(u).state
    assert torch.allclose(out, u + total, atol=1e-13)


def test_zero_head_mann_adds_nothing(burgers_model):
    u = smooth_burgers_state(burgers_model.config.grid)
    with torch.no_grad():
        assert torch.equal(burgers_model(u), _manual_physics(burgers_model, u))


def test_rollout_single_step_equals_macro_step(burgers_model):
    u = smooth_burgers_state(burgers_model.config.grid, batch=3)
    with torch.no_grad():
        rollout = burgers_model.rollout(u, 1)
        step = burgers_model.macro_step(u).state
    assert rollout.states.shape == (3, 1, 2, 8, 8)
    assert torch.equal(rollout.states[:, 0], step)


def test_rollout_feeds_predictions_back(burgers_model):
    u = smooth_burgers_state(burgers_model.config.grid)
    with torch.no_grad():
        states = burgers_model.rollout(u, 3).states
        second = burgers_model.macro_step(states[:, 0]).state
    assert torch.equal(states[:, 1], second)


def _perturb(module: torch.nn.Module, seed: int, scale: float = 0.05) -> None:
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.add_(scale * torch.randn(p.shape, generator=g, dtype=p.dtype))


def test_rollouts_concatenate(burgers_model):
    _perturb(burgers_model.mann, seed=1)
    u = smooth_burgers_state(burgers_model.config.grid, batch=2)
    with torch.no_grad():
        head = burgers_model.rollout(u, 2).states
        tail = burgers_model.rollout(head[:, -1], 3).states
        whole = burgers_model.rollout(u, 5).states
    assert torch.equal(torch.cat([head, tail], dim=1), whole)


def test_physics_only_ignores_macro_network():
    full = MultiPdeModel(tiny_model_config("burgers"))
    physics_only = MultiPdeModel(tiny_model_config("burgers", variant="model-c"))
    assert physics_only.mann is None
    assert not list(physics_only.param_set().groups["mann"])
    u = smooth_burgers_state(full.config.grid)
    with torch.no_grad():
        before = physics_only(u)
        _perturb(full.mann, seed=2)
        assert not torch.equal(full(u), _manual_physics(full, u))
        assert torch.equal(physics_only(u), before)
        assert torch.equal(physics_only(u), _manual_physics(full, u))


def test_rollout_rejects_zero_steps(burgers_model):
    with pytest.raises(ValueError):
        burgers_model.rollout(smooth_burgers_state(burgers_model.config.grid), 0)


def test_wrong_state_shape_raises(burgers_model):
    with pytest.raises(ShapeError):
        burgers_model.macro_step(torch.zeros((1, 2, 16, 16), dtype=DTYPE))


# ---------- 발산 ----------

def _blowup_state() -> torch.Tensor:
    u = torch.full((1, 2, 8, 8), 1e200, dtype=DTYPE)
    u[0, :, ::2] = -1e200
    return u


def test_rollout_truncates_on_divergence(burgers_model):
    with torch.no_grad():
        result = burgers_model.rollout(_blowup_state(), 5)
    assert result.diverged
    assert result.diverged_step == 0
    assert result.steps_completed == 0
    assert result.steps_requested == 5


def test_rollout_without_truncation_raises_with_step(burgers_model):
    with pytest.raises(SolverDivergedError) as info:
        with torch.no_grad():
            burgers_model.rollout(_blowup_state(), 5, truncate=False)
    assert info.value.step == 0


# ---------- ablation 스위치 ----------

@pytest.mark.parametrize(
    "variant, check",
    [
        ("model-a", lambda m: not m.context().use_poisson),
        ("model-b", lambda m: m.config.stencil_mode == "free"),
        ("model-c", lambda m: m.mann is None and m.correction is not None),
        ("model-d", lambda m: m.config.stencil_mode == "fixed" and not any(p.requires_grad for p in m.stencils.parameters())),
        ("model-e", lambda m: m.correction is None),
        ("model-f", lambda m: m.minn is None),
        ("model-g", lambda m: m.mann is None and m.minn is not None),
        ("model-i", lambda m: m.integrator == "euler"),
    ],
)
def test_ablation_variant_switches(variant, check):
    tag = "nse" if variant == "model-a" else "burgers"
    length = 2 * math.pi if tag == "nse" else 1.0
    model = MultiPdeModel(tiny_model_config(tag, length=length, variant=variant))
    assert check(model)
    assert model.config.flags.variant == variant


def test_no_physics_variant_is_mann_only():
    model = MultiPdeModel(tiny_model_config("burgers", variant="model-h"))
    u = smooth_burgers_state(model.config.grid)
    with torch.no_grad():
        # 0 초기화 head 라 출력 == 입력
        assert torch.equal(model(u), u)
        torch.nn.init.normal_(model.mann.head.weight, std=0.1)
        expected = u + model.mann(u, model.config.scheme.dt_macro, model.config.grid.min_dx)
        assert torch.allclose(model(u), expected, atol=1e-14)


def test_euler_variant_matches_forward_euler():
    model = MultiPdeModel(tiny_model_config("burgers", variant="model-i", micro_steps=1))
    u = smooth_burgers_state(model.config.grid)
    ctx = model.context()
    with torch.no_grad():
        expected = u + 0.01 * physics_service.slope(ctx, u)
        assert torch.allclose(model(u), expected, atol=1e-14)


# ---------- NSE ----------

def test_nse_model_layout(nse_model):
    assert nse_model.minn.in_channels == 14
    assert nse_model.re_embedding is not None
    assert nse_model.config.use_leray
    names = {f"{g}.{n}" for g, n, _ in nse_model.param_set().items()}
    assert "pde.re_scale" in names
    assert "re_embedding.a" in names


def test_nse_rollout_stays_divergence_free(nse_model):
    grid = nse_model.config.grid
    g = torch.Generator().manual_seed(3)
    u = spectral_service.leray_project(0.5 * torch.randn((1, 2, 16, 16), generator=g, dtype=DTYPE), grid)
    with torch.no_grad():
        states = nse_model.rollout(u, 3).states
    assert float(spectral_service.divergence(states[:, -1], grid).abs().max()) < 1e-10


def test_context_rescales_lambdas_for_other_system():
    model = MultiPdeModel(tiny_model_config("burgers"))
    ctx = model.context(PdeSystem(tag="burgers", nu=0.004))
    assert math.isclose(float(ctx.lam("nu")), 0.004, rel_tol=1e-14)
    with pytest.raises(ShapeError):
        model.context(PdeSystem(tag="gs"))


def test_trainable_lambda_flag():
    frozen = MultiPdeModel(tiny_model_config("burgers"))
    assert not frozen.pde["nu"].requires_grad
    trainable = MultiPdeModel(tiny_model_config("burgers", trainable_lambda=True))
    assert trainable.pde["nu"].requires_grad


def test_same_seed_same_weights():
    a = MultiPdeModel(tiny_model_config("burgers", seed=7))
    b = MultiPdeModel(tiny_model_config("burgers", seed=7))
    for (name, pa), (_, pb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert torch.equal(pa, pb), name


# ---------- fine 솔버와 비교 ----------

def test_physics_only_step_tracks_fine_burgers_solver():
    spec = GenSpec(
        system=PdeSystem(tag="burgers"),
        fine_shape=(100, 100),
        domain_length=(1.0, 1.0),
        dt=1e-3,
        n_train=1,
        n_test=0,
        space_factor=4,
        time_stride=10,
        n_snapshots=2,
        ic=IcOptions(burgers_max_wavenumber=2),
    )
    reference = datagen_service.simulate(spec, seed=0)
    grid = spec.coarse_grid
    config = ModelConfig(
        system=spec.system,
        grid=grid,
        scheme=StepScheme(dt_macro=spec.dt_macro, micro_steps=4),
        flags={"physics_only": True},
        correction=NetConfig(width=4, modes=3, layers=1, projection=4),
        minn=NetConfig(width=4, modes=3, layers=1, projection=4),
    )
    model = MultiPdeModel(config)
    with torch.no_grad():
        predicted = model(reference[0:1])[0]
    error = torch.linalg.norm(predicted - reference[1]) / torch.linalg.norm(reference[1])
    assert float(error) < 5e-2
