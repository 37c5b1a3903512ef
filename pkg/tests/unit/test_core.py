import numpy as np
import pytest

import ewaldbench.core as core
from ewaldbench.models import FieldResult


def test_generate_uniform_is_deterministic_and_neutral():
    """Targets ewaldbench.core.generate_system in ewaldbench/core.py."""
    first = core.generate_system("uniform", 3000, 3.1074, seed=1)
    second = core.generate_system("uniform", 3000, 3.1074, seed=1)
    other = core.generate_system("uniform", 3000, 3.1074, seed=2)

    assert np.array_equal(first.positions, second.positions)
    assert not np.array_equal(first.positions, other.positions)
    assert first.total_charge == 0.0
    assert first.density == pytest.approx(100.0, rel=1e-3)
    assert np.all((first.positions >= 0) & (first.positions < 3.1074))


def test_generate_cloud_wall_populations():
    """Targets ewaldbench.core.generate_system cloud_wall in ewaldbench/core.py."""
    L = 10.0
    system = core.generate_system("cloud_wall", 1200, L, seed=3)
    x = system.positions

    near_wall = np.abs(x[:, 0] - 0.1 * L) <= 0.005 * L + 1e-12
    in_cloud = np.linalg.norm(x - [0.3 * L, L / 2, L / 2], axis=1) <= 0.1 * L + 1e-12

    assert system.is_neutral
    assert near_wall.sum() == 480
    assert in_cloud.sum() == 120
    assert np.all(system.charges[near_wall] == 1.0)
    assert np.all(system.charges[in_cloud] == -1.0)


def test_generate_isolated_clouds_leave_box_mostly_empty():
    """Targets ewaldbench.core.generate_system isolated_clouds in ewaldbench/core.py."""
    L = 4.0
    system = core.generate_system("isolated_clouds", 200, L, seed=0)
    centre_y = np.abs(system.positions[:, 1] - L / 2)

    assert system.is_neutral
    assert np.all(centre_y <= 0.08 * L + 1e-12)


@pytest.mark.parametrize("kind,n,L", [("uniform", 7, 1.0), ("uniform", 0, 1.0), ("uniform", 4, 0.0), ("lattice", 4, 1.0)])
def test_generate_system_rejects_bad_arguments(kind, n, L):
    """Targets ewaldbench.core.generate_system validation in ewaldbench/core.py."""
    with pytest.raises(ValueError):
        core.generate_system(kind, n, L, seed=0)


def test_subsample_is_neutral_subset():
    """Targets ewaldbench.core.subsample in ewaldbench/core.py."""
    system = core.generate_system("uniform", 400, 5.0, seed=4)

    sample = core.subsample(system, 50, seed=1)

    assert sample.n == 50
    assert sample.is_neutral
    assert sample.box_length == system.box_length
    rows = {tuple(p) for p in system.positions}
    assert all(tuple(p) in rows for p in sample.positions)
    with pytest.raises(ValueError):
        core.subsample(system, 401)


def test_min_image_displacement_examples():
    """Targets ewaldbench.core.min_image_displacement in ewaldbench/core.py."""
    L = 10.0

    assert np.allclose(core.min_image_displacement([9.5, 0.0, 0.0], [0.5, 0.0, 0.0], L), [-1.0, 0.0, 0.0])
    assert np.allclose(core.min_image_displacement([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], L), 0.0)
    assert np.allclose(core.min_image_displacement([0.0, 0.0, 0.0], [5.0, 0.0, 0.0], L), [-5.0, 0.0, 0.0])


def test_min_image_displacement_is_antisymmetric_and_bounded():
    """Targets ewaldbench.core.min_image_displacement in ewaldbench/core.py."""
    rng = np.random.default_rng(0)
    a = rng.uniform(0, 3.0, size=(100, 3))
    b = rng.uniform(0, 3.0, size=(100, 3))

    d = core.min_image_displacement(a, b, 3.0)
    back = core.min_image_displacement(b, a, 3.0)

    assert np.all((d >= -1.5) & (d < 1.5))
    interior = np.abs(np.abs(d) - 1.5) > 1e-9
    assert np.allclose(d[interior], -back[interior])


def test_rms_error_identical_results_is_zero():
    """Targets ewaldbench.core.rms_error in ewaldbench/core.py."""
    result = FieldResult(potentials=[1.0, -2.0], forces=[[1.0, 0, 0], [0, 1.0, 0]], energy=3.0)

    report = core.rms_error(result, result)

    assert report.abs_rms_potential == 0.0
    assert report.abs_rms_force == 0.0
    assert report.rel_rms_force == 0.0


def test_rms_error_single_particle_example():
    """Targets ewaldbench.core.rms_error in ewaldbench/core.py."""
    test = FieldResult(potentials=[1.1], forces=[[0.0, 0.0, 0.0]], energy=0.0)
    ref = FieldResult(potentials=[1.0], forces=[[0.0, 0.0, 0.0]], energy=0.0)

    report = core.rms_error(test, ref)

    assert report.abs_rms_potential == pytest.approx(0.1)
    assert report.rel_rms_potential == pytest.approx(0.1)
    assert report.abs_rms_force == 0.0


def test_rms_error_force_rms_runs_over_components_and_is_symmetric():
    """Targets ewaldbench.core.rms_error in ewaldbench/core.py."""
    a = FieldResult(potentials=[0.0, 0.0], forces=[[1.0, 0, 0], [0, 0, 0]], energy=1.0)
    b = FieldResult(potentials=[0.0, 0.0], forces=[[0.0, 0, 0], [0, 0, 0]], energy=0.5)

    forward = core.rms_error(a, b)
    backward = core.rms_error(b, a)

    assert forward.abs_rms_force == pytest.approx(np.sqrt(1.0 / 6.0))
    assert forward.abs_rms_force == backward.abs_rms_force
    assert forward.abs_rms_energy == pytest.approx(0.5)


def test_rms_error_rejects_different_sizes():
    """Targets ewaldbench.core.rms_error validation in ewaldbench/core.py."""
    a = FieldResult(potentials=[0.0], forces=[[0, 0, 0]], energy=0.0)
    b = FieldResult(potentials=[0.0, 1.0], forces=[[0, 0, 0], [0, 0, 0]], energy=0.0)

    with pytest.raises(ValueError):
        core.rms_error(a, b)
