from rmcorr.config import Settings, get_settings


def test_defaults(monkeypatch):
    for name in ("RMCORR_MAX_PURE_QUBITS", "RMCORR_THREADS", "RMCORR_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    get_settings.cache_clear()
    settings = get_settings()
    assert settings.max_pure_qubits == Settings().max_pure_qubits == 22
    assert settings.threads == 1
    assert settings.log_level == "INFO"


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("RMCORR_PERMUTATION_CAP", "100")
    monkeypatch.setenv("RMCORR_THREADS", "0")
    monkeypatch.setenv("RMCORR_LOG_LEVEL", "debug")
    get_settings.cache_clear()
    settings = get_settings()
    assert settings.permutation_cap == 100
    assert settings.threads == 1
    assert settings.log_level == "DEBUG"


def test_bad_integer_falls_back(monkeypatch, caplog):
    monkeypatch.setenv("RMCORR_HAAR_PARTY_QUBITS", "many")
    get_settings.cache_clear()
    assert get_settings().haar_party_qubits == 5
    assert "Ignoring non-integer" in caplog.text
