import math

import numpy as np
import pytest

import ewaldbench.pipeline as pipeline
from ewaldbench.core import generate_system
from ewaldbench.models import EwaldSplit
from ewaldbench.oracle import direct_total


def test_evaluate_direct_equals_oracle_total():
    """Targets ewaldbench.pipeline.evaluate direct method in ewaldbench/pipeline.py."""
    system = generate_system("uniform", 40, 2.0, seed=31)
    split = EwaldSplit(xi=3.0, r_c=1.0, k_inf=12)

    result = pipeline.evaluate(system, "direct", split)
    reference = direct_total(system, split)

    assert np.allclose(result.potentials, reference.potentials, rtol=1e-13, atol=1e-13)
    assert np.allclose(result.forces, reference.forces, rtol=1e-13, atol=1e-13)
    assert set(result.timings) == set(pipeline.STAGES)
    assert result.targets is None


@pytest.mark.parametrize("method", ["se", "spme"])
def test_evaluate_mesh_methods_agree_with_oracle(method):
    """Targets ewaldbench.pipeline.evaluate mesh methods in ewaldbench/pipeline.py."""
    system = generate_system("uniform", 60, 2.0, seed=32)
    split = EwaldSplit(xi=4.0, r_c=1.0, k_inf=24)
    mesh = {"P": 16} if method == "se" else {"p": 7}

    result = pipeline.evaluate(system, method, split, M=48, **mesh)
    reference = direct_total(system, split)
    error = math.sqrt(np.mean((result.forces - reference.forces) ** 2) / np.mean(reference.forces ** 2))

    assert error < 1e-5
    assert set(result.timings) == set(pipeline.STAGES)
    assert result.timings["real"] > 0


def test_evaluate_rejects_unknown_method_and_missing_mesh():
    """Targets ewaldbench.pipeline.evaluate validation in ewaldbench/pipeline.py."""
    system = generate_system("uniform", 10, 1.0, seed=0)
    split = EwaldSplit(xi=4.0, r_c=0.5, k_inf=8)

    with pytest.raises(ValueError, match="Unknown method"):
        pipeline.evaluate(system, "p3m", split)
    with pytest.raises(ValueError, match="support"):
        pipeline.evaluate(system, "se", split, M=16)
    with pytest.raises(ValueError, match="order"):
        pipeline.evaluate(system, "spme", split, M=16)


def test_evaluate_uses_shell_sum_beyond_half_box(monkeypatch):
    """Targets ewaldbench.pipeline.evaluate real-space dispatch in ewaldbench/pipeline.py."""
    system = generate_system("uniform", 10, 1.0, seed=0)
    calls = []

    def fail_neighbors(*args, **kwargs):
        calls.append("neighbors")
        raise AssertionError("neighbour list must not be used for r_c > L/2")

    monkeypatch.setattr(pipeline, "neighbor_real_space", fail_neighbors)
    result = pipeline.evaluate(system, "se", EwaldSplit(xi=3.0, r_c=0.8, k_inf=8), M=16, P=8)

    assert calls == []
    assert result.n == 10


def test_reference_split_targets_fixed_neighbour_count():
    """Targets ewaldbench.pipeline.reference_split in ewaldbench/pipeline.py."""
    system = generate_system("uniform", 8000, 4.3089, seed=1)

    split = pipeline.reference_split(system)

    neighbors = 4 / 3 * math.pi * split.r_c ** 3 * system.density
    assert neighbors == pytest.approx(pipeline.REFERENCE_NEIGHBORS, rel=1e-9)
    assert split.xi * split.r_c == pytest.approx(pipeline.REFERENCE_XI_RC)
    assert 2 * split.k_inf >= pipeline.REFERENCE_SUPPORT


def test_estimate_reference_rms_is_close_to_true_rms():
    """Targets ewaldbench.pipeline.estimate_reference_rms in ewaldbench/pipeline.py."""
    system = generate_system("uniform", 200, 3.0, seed=33)
    split = EwaldSplit(xi=3.0, r_c=1.5, k_inf=20)
    reference = direct_total(system, split)
    true_force = math.sqrt(np.mean(np.sum(reference.forces ** 2, axis=1)))
    true_potential = math.sqrt(np.mean(reference.potentials ** 2))

    assert pipeline.estimate_reference_rms(system, "force") == pytest.approx(true_force, rel=0.05)
    assert pipeline.estimate_reference_rms(system, "potential") == pytest.approx(true_potential, rel=0.05)
    assert pipeline.estimate_reference_rms(system, "energy") == pytest.approx(abs(reference.energy), rel=0.05)
