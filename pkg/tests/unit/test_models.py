import logging
import math

import numpy as np
import pytest
from pydantic import ValidationError

import ewaldbench.models as models


def test_particle_system_wraps_positions_into_box():
    """Targets ewaldbench.models.ParticleSystem in ewaldbench/models.py."""
    system = models.ParticleSystem(
        box_length=10.0,
        positions=[[10.5, -0.5, 3.0], [1.0, 2.0, 3.0]],
        charges=[1.0, -1.0],
    )

    assert np.allclose(system.positions[0], [0.5, 9.5, 3.0])
    assert np.all((system.positions >= 0) & (system.positions < 10.0))
    assert system.n == 2
    assert system.is_neutral


def test_particle_system_arrays_are_read_only():
    """Targets ewaldbench.models.ParticleSystem in ewaldbench/models.py."""
    system = models.ParticleSystem(box_length=1.0, positions=[[0.1, 0.2, 0.3]], charges=[0.0])

    with pytest.raises(ValueError):
        system.positions[0, 0] = 0.5


def test_particle_system_rejects_length_mismatch():
    """Targets ewaldbench.models.ParticleSystem validation in ewaldbench/models.py."""
    with pytest.raises(ValidationError):
        models.ParticleSystem(box_length=1.0, positions=[[0.1, 0.2, 0.3]], charges=[1.0, -1.0])
    with pytest.raises(ValidationError):
        models.ParticleSystem(box_length=1.0, positions=[[0.1, 0.2]], charges=[1.0])


def test_particle_system_warns_when_not_neutral(caplog):
    """Targets ewaldbench.models.ParticleSystem neutrality warning in ewaldbench/models.py."""
    with caplog.at_level(logging.WARNING, logger="ewaldbench.models"):
        system = models.ParticleSystem(box_length=2.0, positions=[[0.1, 0.2, 0.3]], charges=[1.0])

    assert not system.is_neutral
    assert "not charge neutral" in caplog.text


def test_particle_system_derived_quantities():
    """Targets ewaldbench.models.ParticleSystem properties in ewaldbench/models.py."""
    system = models.ParticleSystem(
        box_length=2.0,
        positions=[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [0.5, 0.5, 0.5]],
        charges=[2.0, -1.0, -1.0],
    )

    assert system.charge_squared_sum == pytest.approx(6.0)
    assert system.density == pytest.approx(3 / 8)
    moved = system.translated([1.5, 0.0, 0.0])
    assert np.allclose(moved.positions[1], [0.5, 1.0, 1.0])


def test_field_result_combine_sums_parts_and_timings():
    """Targets ewaldbench.models.FieldResult.combine in ewaldbench/models.py."""
    a = models.FieldResult(potentials=[1.0, 2.0], forces=np.ones((2, 3)), energy=1.5, timings={"real": 0.1})
    b = models.FieldResult(potentials=[0.5, -1.0], forces=np.ones((2, 3)), energy=-0.5,
                           timings={"real": 0.2, "fft": 0.3})

    total = models.FieldResult.combine([a, b])

    assert np.allclose(total.potentials, [1.5, 1.0])
    assert np.allclose(total.forces, 2.0)
    assert total.energy == pytest.approx(1.0)
    assert total.timings == pytest.approx({"real": 0.3, "fft": 0.3})


def test_field_result_subset_resums_energy():
    """Targets ewaldbench.models.FieldResult.subset in ewaldbench/models.py."""
    result = models.FieldResult(potentials=[1.0, 2.0, 3.0], forces=np.zeros((3, 3)), energy=0.0)

    part = result.subset([0, 2], np.array([1.0, -1.0, 2.0]))

    assert np.array_equal(part.targets, [0, 2])
    assert np.allclose(part.potentials, [1.0, 3.0])
    assert part.energy == pytest.approx(0.5 * (1.0 + 6.0))


def test_field_result_without_drift_zeroes_net_force():
    """Targets ewaldbench.models.FieldResult.without_drift in ewaldbench/models.py."""
    forces = np.array([[1.0, 0.0, 2.0], [3.0, -1.0, 0.0]])
    result = models.FieldResult(potentials=[0.0, 0.0], forces=forces, energy=0.0)

    assert np.allclose(result.net_force(), [4.0, -1.0, 2.0])
    assert np.allclose(result.without_drift().net_force(), 0.0, atol=1e-15)


def test_field_result_scaled_multiplies_everything():
    """Targets ewaldbench.models.FieldResult.scaled in ewaldbench/models.py."""
    result = models.FieldResult(potentials=[1.0], forces=[[1.0, 2.0, 3.0]], energy=-2.0)

    scaled = result.scaled(10.0)

    assert scaled.potentials[0] == 10.0
    assert np.allclose(scaled.forces, [[10.0, 20.0, 30.0]])
    assert scaled.energy == -20.0


def test_field_result_rejects_mismatched_rows():
    """Targets ewaldbench.models.FieldResult validation in ewaldbench/models.py."""
    with pytest.raises(ValidationError):
        models.FieldResult(potentials=[1.0, 2.0], forces=np.zeros((3, 3)), energy=0.0)


def test_se_grid_params_window_shape():
    """Targets ewaldbench.models.SEGridParams in ewaldbench/models.py."""
    params = models.SEGridParams(M=144, P=24, xi=3.5, box_length=10.0)

    assert params.eta == pytest.approx(0.5, rel=1e-3)
    assert params.gaussian_exponent == pytest.approx(2 * 3.5 ** 2 / params.eta)
    assert models.SEGridParams(M=32, P=16, xi=1.0, box_length=1.0).m_shape == pytest.approx(6.7359, abs=1e-3)


def test_se_grid_params_width_is_quarter_box_when_grid_is_twice_support():
    """Targets ewaldbench.models.SEGridParams.w in ewaldbench/models.py."""
    params = models.SEGridParams(M=16, P=8, xi=2.0, box_length=4.0)

    assert params.w == pytest.approx(1.0)
    assert params.h == pytest.approx(0.25)


@pytest.mark.parametrize("M,P", [(16, 5), (15, 4), (8, 10)])
def test_se_grid_params_rejects_bad_mesh(M, P):
    """Targets ewaldbench.models.SEGridParams validation in ewaldbench/models.py."""
    with pytest.raises(ValidationError):
        models.SEGridParams(M=M, P=P, xi=1.0, box_length=1.0)


def test_spme_grid_params_rejects_order_above_grid():
    """Targets ewaldbench.models.SPMEGridParams validation in ewaldbench/models.py."""
    with pytest.raises(ValidationError):
        models.SPMEGridParams(M=4, p=5, xi=1.0, box_length=1.0)
    assert models.SPMEGridParams(M=8, p=5, xi=1.0, box_length=2.0).h == pytest.approx(0.25)


def test_runtime_model_calibrated_needs_positive_constants():
    """Targets ewaldbench.models.RuntimeModel validation in ewaldbench/models.py."""
    assert models.RuntimeModel().calibrated is False
    with pytest.raises(ValidationError, match="c_fft"):
        models.RuntimeModel(c_ns=1e-8, c_force=1e-8, c_fft=0.0, c_solve=1e-9, c_spga=1e-9, calibrated=True)


def test_tuned_params_validates_mesh():
    """Targets ewaldbench.models.TunedParams validation in ewaldbench/models.py."""
    split = models.EwaldSplit(xi=1.0, r_c=1.0, k_inf=8)
    common = dict(method="spme", split=split, M=16, predicted_real_time=0.1,
                  predicted_fourier_time=0.2, abs_tol=1e-3, reference_rms=1.0)

    assert models.TunedParams(p=5, **common).predicted_total_time == pytest.approx(0.3)
    with pytest.raises(ValidationError):
        models.TunedParams(p=4, **common)
    with pytest.raises(ValidationError):
        models.TunedParams(**{**common, "method": "se", "M": 8}, P=10)


def test_calibration_report_holdout_ratio():
    """Targets ewaldbench.models.CalibrationReport.holdout_ratio in ewaldbench/models.py."""
    model = models.RuntimeModel(c_ns=1, c_force=1, c_fft=1, c_solve=1, c_spga=1, calibrated=True)
    report = models.CalibrationReport(model=model, holdout_predicted=0.3, holdout_measured=0.2)

    assert report.holdout_ratio == pytest.approx(1.5)
    assert math.isfinite(report.holdout_ratio)
