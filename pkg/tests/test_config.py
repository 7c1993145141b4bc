import logging

from patternflow.core.config import Settings, settings
from patternflow.main import log_level


def test_defaults():
    fresh = Settings(_env_file=None)
    assert fresh.DEFAULT_EPSILON == 0.05
    assert fresh.SAMPLER_BATCH_SIZE == 32
    assert fresh.DEBUG is False
    assert fresh.LOG_LEVEL == "INFO"


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("WORKERS", "4")
    monkeypatch.setenv("LOG_LEVEL", "warning")
    fresh = Settings(_env_file=None)
    assert fresh.WORKERS == 4
    assert fresh.LOG_LEVEL == "warning"


def test_unknown_variables_are_ignored(monkeypatch):
    monkeypatch.setenv("ENVIRONMENT", "production")
    fresh = Settings(_env_file=None)
    assert not hasattr(fresh, "ENVIRONMENT")
    assert "ENVIRONMENT" not in fresh.model_dump()


def test_log_level_follows_settings(monkeypatch):
    monkeypatch.setattr(settings, "DEBUG", False)
    monkeypatch.setattr(settings, "LOG_LEVEL", "warning")
    assert log_level() == logging.WARNING
    assert log_level(verbose=True) == logging.DEBUG

    monkeypatch.setattr(settings, "LOG_LEVEL", "chatty")
    assert log_level() == logging.INFO


def test_debug_forces_debug_logging(monkeypatch):
    monkeypatch.setattr(settings, "DEBUG", True)
    monkeypatch.setattr(settings, "LOG_LEVEL", "ERROR")
    assert log_level() == logging.DEBUG
