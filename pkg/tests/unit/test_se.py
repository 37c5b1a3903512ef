import itertools
import logging
import math

import numpy as np
import pytest

import ewaldbench.se as se
from ewaldbench.core import generate_system
from ewaldbench.kspace import se_influence
from ewaldbench.models import EwaldSplit, ParticleSystem, RealGrid
from ewaldbench.oracle import fourier_space_sum


def _relative_rms(test: np.ndarray, ref: np.ndarray) -> float:
    return math.sqrt(np.mean((test - ref) ** 2) / np.mean(ref ** 2))


def test_make_se_params_warns_for_wide_window(caplog):
    """Targets ewaldbench.se.make_se_params in ewaldbench/se.py."""
    with caplog.at_level(logging.WARNING, logger="ewaldbench.se"):
        params = se.make_se_params(8, 8, 10.0, 1.0)

    assert params.eta >= 1
    assert "eta" in caplog.text


def test_make_se_params_rejects_support_above_grid():
    """Targets ewaldbench.se.make_se_params validation in ewaldbench/se.py."""
    with pytest.raises(ValueError):
        se.make_se_params(8, 10, 1.0, 1.0)


def test_fgg_tables_match_direct_exponentials():
    """Targets ewaldbench.se.fgg_precompute in ewaldbench/se.py."""
    system = generate_system("uniform", 30, 2.0, seed=7)
    params = se.make_se_params(32, 12, 6.0, 2.0)

    tables = se.fgg_precompute(system, params)
    direct = np.exp(-params.gaussian_exponent * tables.offsets ** 2)

    assert tables.factors.shape == (30, 3, 12)
    assert np.allclose(tables.factors, direct, rtol=1e-13, atol=0)
    assert np.all(np.abs(tables.offsets) <= params.w + 1e-12)
    assert tables.exp_count == 12 + 9 * 30
    assert tables.exp_count < 12 ** 3 * 30


def test_fgg_particle_on_grid_point_has_unit_centre_factor():
    """Targets ewaldbench.se.fgg_precompute in ewaldbench/se.py."""
    system = ParticleSystem(box_length=8.0, positions=[[2.5, 2.5, 2.5]], charges=[0.0])
    params = se.make_se_params(16, 8, 1.0, 8.0)

    tables = se.fgg_precompute(system, params)

    assert np.allclose(tables.factors[0, :, 8 // 2 - 1], 1.0)
    assert np.all(tables.indices[0, :, 8 // 2 - 1] == 5)


def test_spread_se_zero_charges_gives_zero_grid():
    """Targets ewaldbench.se.spread_se in ewaldbench/se.py."""
    system = ParticleSystem(box_length=1.0, positions=[[0.2, 0.3, 0.4], [0.6, 0.1, 0.9]], charges=[0.0, 0.0])
    params = se.make_se_params(16, 6, 5.0, 1.0)

    grid = se.spread_se(system, params, se.fgg_precompute(system, params))

    assert np.all(grid.values == 0.0)


def test_spread_se_unit_charge_integrates_to_one():
    """Targets ewaldbench.se.spread_se in ewaldbench/se.py."""
    system = ParticleSystem(box_length=1.0, positions=[[0.31, 0.52, 0.77]], charges=[1.0])
    params = se.make_se_params(64, 16, 13.0, 1.0)

    grid = se.spread_se(system, params, se.fgg_precompute(system, params))

    assert params.eta < 1
    assert grid.values.sum() * params.h ** 3 == pytest.approx(1.0, abs=1e-6)


def test_spread_se_matches_naive_gaussian_sum():
    """Targets ewaldbench.se.spread_se in ewaldbench/se.py."""
    L, M, P = 1.5, 12, 6
    system = ParticleSystem(box_length=L, positions=[[0.1, 1.4, 0.7], [0.8, 0.05, 1.2]], charges=[1.0, -0.5])
    params = se.make_se_params(M, P, 4.0, L)
    a, h = params.gaussian_exponent, params.h
    norm = (a / math.pi) ** 1.5

    expected = np.zeros((M, M, M))
    for x, q in zip(system.positions, system.charges):
        base = np.floor(x / h).astype(int)
        for shift in itertools.product(range(-P // 2 + 1, P // 2 + 1), repeat=3):
            node = base + np.array(shift)
            r2 = np.sum((node * h - x) ** 2)
            expected[tuple(np.mod(node, M))] += q * norm * math.exp(-a * r2)

    grid = se.spread_se(system, params, se.fgg_precompute(system, params))

    assert np.allclose(grid.values, expected, rtol=1e-12, atol=1e-12)


def test_gather_se_zero_grid_gives_zero_fields():
    """Targets ewaldbench.se.gather_se in ewaldbench/se.py."""
    system = generate_system("uniform", 10, 1.0, seed=1)
    params = se.make_se_params(16, 6, 5.0, 1.0)
    grid = RealGrid(values=np.zeros((16, 16, 16)), box_length=1.0)

    potentials, forces = se.gather_se(grid, system, params, se.fgg_precompute(system, params))

    assert np.all(potentials == 0.0)
    assert np.all(forces == 0.0)


def test_gather_se_is_adjoint_of_spread_se():
    """Targets ewaldbench.se.gather_se in ewaldbench/se.py."""
    system = generate_system("uniform", 20, 2.0, seed=2)
    params = se.make_se_params(24, 8, 4.0, 2.0)
    tables = se.fgg_precompute(system, params)
    field = np.random.default_rng(5).standard_normal((24, 24, 24))

    spread = se.spread_se(system, params, tables)
    potentials, _ = se.gather_se(RealGrid(values=field, box_length=2.0), system, params, tables)

    lhs = np.sum(spread.values * field) * params.h ** 3
    rhs = np.dot(system.charges, potentials) / (4 * math.pi)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_se_kspace_matches_direct_fourier_sum():
    """Targets ewaldbench.se.se_kspace in ewaldbench/se.py."""
    system = generate_system("uniform", 50, 2.0, seed=11)
    xi, M, P = 4.0, 40, 16

    result = se.se_kspace(system, M, P, xi)
    reference = fourier_space_sum(system, EwaldSplit(xi=xi, r_c=1.0, k_inf=M // 2))

    assert _relative_rms(result.potentials, reference.potentials) < 1e-7
    assert _relative_rms(result.forces, reference.forces) < 1e-7
    assert result.energy == pytest.approx(reference.energy, rel=1e-7)
    assert set(result.timings) == {"spread", "fft", "solve", "ifft", "gather"}


def test_se_kspace_force_is_energy_gradient():
    """Targets ewaldbench.se.se_kspace force formula in ewaldbench/se.py."""
    system = generate_system("uniform", 10, 2.0, seed=3)
    xi, M, P = 3.0, 32, 16
    h = 2.0 / M
    delta = 1e-5 * h

    forces = se.se_kspace(system, M, P, xi).forces
    for particle, dim in ((0, 0), (3, 1), (7, 2)):
        plus = system.positions.copy()
        minus = system.positions.copy()
        plus[particle, dim] += delta
        minus[particle, dim] -= delta
        e_plus = se.se_kspace(system.with_positions(plus), M, P, xi).energy
        e_minus = se.se_kspace(system.with_positions(minus), M, P, xi).energy
        numeric = -(e_plus - e_minus) / (2 * delta)
        assert numeric == pytest.approx(forces[particle, dim], rel=1e-4, abs=1e-6)


def test_se_kspace_threads_do_not_change_result():
    """Targets ewaldbench.se.se_kspace threading in ewaldbench/se.py."""
    system = generate_system("uniform", 60, 1.0, seed=9)

    single = se.se_kspace(system, 16, 8, 6.0, threads=1)
    threaded = se.se_kspace(system, 16, 8, 6.0, threads=4)

    assert np.allclose(single.potentials, threaded.potentials, rtol=1e-12, atol=1e-12)
    assert np.allclose(single.forces, threaded.forces, rtol=1e-12, atol=1e-12)


def test_se_influence_and_windows_recover_ewald_kernel():
    """Targets ewaldbench.se window/influence split in ewaldbench/se.py."""
    params = se.make_se_params(16, 8, 2.0, 3.0)
    multiplier = se_influence(16, 3.0, 2.0, params.eta)
    k2 = (2 * math.pi / 3.0) ** 2

    window = math.exp(-params.eta * k2 / (8 * 2.0 ** 2))
    assert window ** 2 * multiplier[1, 0, 0] == pytest.approx(math.exp(-k2 / 16.0) / k2)
