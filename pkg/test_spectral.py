"""
Fourier 연산 테스트: Poisson, 압력 소스 ψ, 스펙트럴 미분, Leray 투영, 에너지 스펙트럼
"""
import math

import pytest
import torch

from app.config.settings import DTYPE
from app.domain.schema.error_schema import ShapeError
from app.domain.schema.field_schema import Field, Grid
from app.domain.service.spectral_service import spectral_service

TWO_PI = 2 * math.pi


def _grid(n: int = 32) -> Grid:
    return Grid(shape=(n, n), domain_length=(TWO_PI, TWO_PI))


def _velocity(grid: Grid, u, v) -> Field:
    return Field(grid=grid, values=torch.stack([u, v]))


def _band_limited(grid: Grid, seed: int, k_max: int = 6) -> torch.Tensor:
    g = torch.Generator().manual_seed(seed)
    y, x = grid.mesh()
    out = torch.zeros(grid.shape, dtype=DTYPE)
    for _ in range(8):
        kx, ky = (int(v) for v in torch.randint(-k_max, k_max + 1, (2,), generator=g))
        amp, phase = torch.randn(2, generator=g, dtype=DTYPE)
        out = out + amp * torch.cos(kx * x + ky * y + phase)
    return out


def test_poisson_sine_eigenfunction():
    grid = _grid()
    y, x = grid.mesh()
    source = Field(grid=grid, values=(-2 * torch.sin(x) * torch.sin(y)).unsqueeze(0))
    p = spectral_service.solve_poisson(source)
    assert float((p.values[0] - torch.sin(x) * torch.sin(y)).abs().max()) < 1e-10


def test_poisson_constant_source_gives_zero():
    grid = _grid()
    p = spectral_service.solve_poisson(Field(grid=grid, values=torch.full((1, 32, 32), 3.0, dtype=DTYPE)))
    assert float(p.values.abs().max()) < 1e-12


def test_poisson_oblique_mode():
    grid = _grid()
    y, x = grid.mesh()
    k1, k2 = 3, 5
    source = -(k1 ** 2 + k2 ** 2) * torch.cos(k1 * x + k2 * y)
    p = spectral_service.poisson(source, grid)
    assert float((p - torch.cos(k1 * x + k2 * y)).abs().max()) < 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_poisson_residual_on_random_sources(seed):
    grid = _grid(64)
    psi = _band_limited(grid, seed)
    p = spectral_service.poisson(psi, grid)
    residual = spectral_service.laplacian(p, grid) - (psi - psi.mean())
    assert float(residual.abs().max()) < 1e-10
    assert abs(float(p.mean())) < 1e-12


def test_poisson_requires_2d_single_channel():
    grid_1d = Grid(shape=(16,), domain_length=(1.0,))
    with pytest.raises(ShapeError):
        spectral_service.poisson(torch.zeros(16, dtype=DTYPE), grid_1d)
    with pytest.raises(ShapeError):
        spectral_service.solve_poisson(Field(grid=_grid(), values=torch.zeros(2, 32, 32, dtype=DTYPE)))


def test_pressure_source_shear_flow_is_zero():
    grid = _grid()
    y, x = grid.mesh()
    psi = spectral_service.pressure_source(_velocity(grid, torch.sin(y), torch.zeros_like(y)))
    assert float(psi.values.abs().max()) < 1e-12


def test_pressure_source_analytic():
    grid = _grid()
    y, x = grid.mesh()
    psi = spectral_service.pressure_source(_velocity(grid, torch.sin(x), torch.cos(y)))
    assert float((psi.values[0] + 2 * torch.cos(x) * torch.sin(y)).abs().max()) < 1e-10


def test_pressure_source_constant_field():
    grid = _grid()
    psi = spectral_service.pressure_source(Field(grid=grid, values=torch.full((2, 32, 32), 1.5, dtype=DTYPE)))
    assert float(psi.values.abs().max()) < 1e-12


def test_pressure_source_rejects_scalar_field():
    with pytest.raises(ShapeError):
        spectral_service.pressure_source(Field(grid=_grid(), values=torch.zeros(1, 32, 32, dtype=DTYPE)))


def test_spectral_first_derivative():
    grid = Grid(shape=(64,), domain_length=(TWO_PI,))
    x = grid.coords(0)
    out = spectral_service.spectral_derivative(Field(grid=grid, values=torch.sin(x).unsqueeze(0)), 0, 1)
    assert float((out.values[0] - torch.cos(x)).abs().max()) < 1e-10


def test_spectral_third_derivative():
    grid = Grid(shape=(64,), domain_length=(TWO_PI,))
    x = grid.coords(0)
    out = spectral_service.spectral_derivative(Field(grid=grid, values=torch.sin(2 * x).unsqueeze(0)), 0, 3)
    assert float((out.values[0] + 8 * torch.cos(2 * x)).abs().max()) < 1e-9


@pytest.mark.parametrize("axis, order", [(0, 1), (1, 1), (0, 2), (1, 3)])
def test_spectral_derivative_is_linear(axis, order):
    grid = _grid()
    f, g = _band_limited(grid, 1), _band_limited(grid, 2)
    a, b = 2.5, -0.75
    lhs = spectral_service.derivative(a * f + b * g, grid, axis, order)
    rhs = a * spectral_service.derivative(f, grid, axis, order) + b * spectral_service.derivative(g, grid, axis, order)
    assert float((lhs - rhs).abs().max()) < 1e-9 * max(1.0, float(rhs.abs().max()))


@pytest.mark.parametrize("order", [1, 2, 3])
def test_spectral_derivative_of_constant(order):
    grid = _grid()
    f = Field(grid=grid, values=torch.full((1, 32, 32), 7.0, dtype=DTYPE))
    for axis in (0, 1):
        assert float(spectral_service.spectral_derivative(f, axis, order).values.abs().max()) < 1e-10


def test_spectral_derivative_axis_convention():
    grid = _grid()
    y, x = grid.mesh()
    u = torch.sin(x) * torch.cos(2 * y)
    dx = spectral_service.derivative(u, grid, 1, 1)
    dy = spectral_service.derivative(u, grid, 0, 1)
    assert float((dx - torch.cos(x) * torch.cos(2 * y)).abs().max()) < 1e-10
    assert float((dy + 2 * torch.sin(x) * torch.sin(2 * y)).abs().max()) < 1e-10


def test_leray_projection_is_divergence_free_and_idempotent():
    grid = _grid()
    g = torch.Generator().manual_seed(3)
    velocity = torch.randn((2, 2, 32, 32), generator=g, dtype=DTYPE)
    projected = spectral_service.leray_project(velocity, grid)
    assert float(spectral_service.divergence(projected, grid).abs().max()) < 1e-10
    again = spectral_service.leray_project(projected, grid)
    assert torch.allclose(again, projected, atol=1e-12)


def test_leray_keeps_solenoidal_field():
    grid = _grid()
    y, x = grid.mesh()
    velocity = torch.stack([torch.sin(y), torch.cos(x)])
    assert torch.allclose(spectral_service.leray_project(velocity, grid), velocity, atol=1e-12)


def test_energy_spectrum_single_mode():
    grid = _grid()
    y, x = grid.mesh()
    k, e = spectral_service.energy_spectrum(_velocity(grid, torch.sin(3 * y), torch.zeros_like(y)))
    assert math.isclose(float(e[3]), 0.25, rel_tol=1e-12)
    assert float(e.sum() - e[3]) < 1e-20
    assert k[3] == 3


def test_energy_spectrum_uses_physical_wavenumbers():
    grid = Grid(shape=(32, 32), domain_length=(1.0, 1.0))
    y, x = grid.mesh()
    k, e = spectral_service.energy_spectrum(_velocity(grid, torch.sin(TWO_PI * 3 * y), torch.zeros_like(y)))
    assert math.isclose(float(e[3]), 0.25, rel_tol=1e-12)
    assert float(e.sum() - e[3]) < 1e-20
    assert math.isclose(float(k[3]), 3 * TWO_PI, rel_tol=1e-12)


def test_energy_spectrum_two_modes():
    grid = _grid()
    y, x = grid.mesh()
    _, e = spectral_service.energy_spectrum(_velocity(grid, torch.sin(3 * y), torch.sin(3 * x)))
    assert math.isclose(float(e[3]), 0.5, rel_tol=1e-12)


def test_energy_spectrum_zero_field():
    grid = _grid()
    _, e = spectral_service.energy_spectrum(Field(grid=grid, values=torch.zeros(2, 32, 32, dtype=DTYPE)))
    assert float(e.abs().max()) == 0.0


def test_energy_spectrum_parseval():
    grid = _grid()
    velocity = torch.randn((2, 32, 32), generator=torch.Generator().manual_seed(0), dtype=DTYPE)
    _, e = spectral_service.energy_spectrum_tensor(velocity, grid)
    assert math.isclose(float(e.sum()), 0.5 * float((velocity ** 2).sum(0).mean()), rel_tol=1e-12)


def test_spectrum_frame_columns():
    grid = _grid()
    y, x = grid.mesh()
    k, e = spectral_service.energy_spectrum(_velocity(grid, torch.sin(3 * y), torch.zeros_like(y)))
    frame = spectral_service.spectrum_frame(k, e)
    assert list(frame.columns) == ["k", "E(k)", "k^5*E(k)"]
    assert math.isclose(frame.loc[3, "k^5*E(k)"], 243 * 0.25, rel_tol=1e-12)
