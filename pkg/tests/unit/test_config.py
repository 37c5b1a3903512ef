import pytest
from pydantic import ValidationError

import ewaldbench.config as config
from ewaldbench.exceptions import SystemFileError


def test_parse_key_values_skips_comments_and_blank_lines():
    """Targets ewaldbench.config.parse_key_values in ewaldbench/config.py."""
    values = config.parse_key_values("# header\n\nthreads = 4\nlog_level=INFO\n")

    assert values == {"threads": "4", "log_level": "INFO"}


def test_parse_key_values_rejects_line_without_separator():
    """Targets ewaldbench.config.parse_key_values error path in ewaldbench/config.py."""
    with pytest.raises(SystemFileError, match="cfg:2"):
        config.parse_key_values("threads=2\nnonsense\n", source="cfg")


def test_load_settings_defaults(monkeypatch):
    """Targets ewaldbench.config.load_settings defaults in ewaldbench/config.py."""
    monkeypatch.setattr(config.os, "cpu_count", lambda: 6)

    settings = config.load_settings(environ={})

    assert settings.threads == 6
    assert settings.shape_constant == config.SHAPE_CONSTANT
    assert settings.reference_tol == config.DEFAULT_REFERENCE_TOL
    assert settings.max_grid == config.DEFAULT_MAX_GRID


def test_load_settings_precedence(tmp_path):
    """Targets ewaldbench.config.load_settings precedence in ewaldbench/config.py."""
    path = tmp_path / "bench.cfg"
    path.write_text("threads=2\nmax_grid=256\nlog_level=INFO\n", encoding="utf-8")

    from_file = config.load_settings(str(path), environ={})
    from_env = config.load_settings(str(path), environ={config.THREADS_ENV_VAR: "3"})
    from_flags = config.load_settings(str(path), overrides={"threads": 8, "log_level": None},
                                      environ={config.THREADS_ENV_VAR: "3"})

    assert (from_file.threads, from_file.max_grid, from_file.log_level) == (2, 256, "INFO")
    assert from_env.threads == 3
    assert from_flags.threads == 8
    assert from_flags.log_level == "INFO"


def test_load_settings_rejects_unknown_keys(tmp_path):
    """Targets ewaldbench.config.load_settings unknown-key path in ewaldbench/config.py."""
    path = tmp_path / "bench.cfg"
    path.write_text("threds=2\n", encoding="utf-8")

    with pytest.raises(SystemFileError, match="threds"):
        config.load_settings(str(path), environ={})


def test_load_settings_missing_file_and_bad_values(tmp_path):
    """Targets ewaldbench.config.load_settings error paths in ewaldbench/config.py."""
    with pytest.raises(SystemFileError):
        config.load_settings(str(tmp_path / "missing.cfg"), environ={})
    with pytest.raises(ValidationError):
        config.load_settings(overrides={"reference_tol": 1e-16}, environ={})
