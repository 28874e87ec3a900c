import math

from rmcorr import verify
from rmcorr.verify import CHECKS, run_identity_suite


def test_identity_suite_passes():
    """Every exact identity holds to its tolerance."""
    results = run_identity_suite()
    assert [r.name for r in results] == [name for name, _, _ in CHECKS]
    failed = [(r.name, r.max_error, r.detail) for r in results if not r.passed]
    assert failed == []


def test_raising_check_is_recorded_as_failure(monkeypatch):
    """An exception inside a check becomes a failed result, not a crash."""

    def broken():
        raise RuntimeError("boom")

    monkeypatch.setattr(verify, "CHECKS", [("broken", broken, 1e-12)])
    [result] = run_identity_suite()
    assert not result.passed
    assert math.isnan(result.max_error)
    assert "boom" in result.detail
