import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from rmcorr.ensembles import (
    CLIFFORD_1Q,
    HAAR_1Q,
    HAAR_NQ,
    IDENTITY,
    N_CLIFFORD_1Q,
    EnsembleError,
    LocalUnitarySetting,
    clifford_1q,
    clifford_group_1q,
    clifford_words,
    export_clifford_table,
    sample_setting,
    twirl,
    verify_perm_sums,
    weingarten_table,
    weingarten_twirl,
)
from rmcorr.qcore import CapExceededError, random_pure_state, swap_operator

X_WEIGHT = np.diag([2.0, -1.0, -1.0, 2.0])


def test_clifford_table_size_and_identity():
    """24 elements, index 0 is the identity with the empty word."""
    group = clifford_group_1q()
    assert len(group) == N_CLIFFORD_1Q
    assert_allclose(clifford_1q(0), np.eye(2))
    assert clifford_words()[0] == ""
    assert len(set(clifford_words())) == N_CLIFFORD_1Q


def test_clifford_elements_are_distinct_up_to_phase():
    """|tr(C_i^dagger C_j)| equals 2 only on the diagonal."""
    group = clifford_group_1q()
    for i, a in enumerate(group):
        assert_allclose(a.conj().T @ a, np.eye(2), atol=1e-12)
        for b in group[i + 1:]:
            assert abs(np.trace(a.conj().T @ b)) < 2 - 1e-9


def test_clifford_table_is_closed():
    """Every product of two elements is an element up to phase."""
    group = np.stack(clifford_group_1q())
    for a in group:
        for b in group:
            products = np.einsum("nji,jk->nik", group.conj(), a @ b)
            overlaps = np.abs(products.trace(axis1=1, axis2=2))
            assert overlaps.max() == pytest.approx(2.0)


@pytest.mark.parametrize("index", [-1, 24])
def test_clifford_index_range(index):
    """Indices outside [0, 24) are rejected."""
    with pytest.raises(EnsembleError):
        clifford_1q(index)


def test_clifford_sampling_is_uniform():
    """Each index appears within five binomial std devs of N/24."""
    n = 100_000
    indices = sample_setting(n, CLIFFORD_1Q, seed=1).clifford_indices
    counts = np.bincount(indices, minlength=N_CLIFFORD_1Q)
    p = 1 / N_CLIFFORD_1Q
    assert np.all(np.abs(counts - n * p) <= 5 * np.sqrt(n * p * (1 - p)))


def test_sample_setting_is_deterministic():
    """Same seed, same setting; the identity ensemble draws index 0 everywhere."""
    assert sample_setting(5, seed=3).clifford_indices == sample_setting(5, seed=3).clifford_indices
    assert sample_setting(4, IDENTITY).clifford_indices == (0, 0, 0, 0)
    with pytest.raises(EnsembleError):
        sample_setting(0)
    with pytest.raises(EnsembleError):
        sample_setting(2, "clifford2q")


def test_haar_settings():
    """Haar settings hold unitary matrices; party sampling needs groups and obeys the cap."""
    setting = sample_setting(2, HAAR_1Q, seed=4)
    for _, matrix in setting.factors():
        assert_allclose(matrix.conj().T @ matrix, np.eye(2), atol=1e-12)
    grouped = sample_setting(3, HAAR_NQ, seed=4, groups=[(0, 1), (2,)])
    assert [m.shape for _, m in grouped.factors()] == [(4, 4), (2, 2)]
    with pytest.raises(EnsembleError):
        sample_setting(3, HAAR_NQ, seed=4)
    with pytest.raises(CapExceededError):
        sample_setting(6, HAAR_NQ, seed=4, groups=[tuple(range(6))])


def test_setting_validation():
    """Non-unitary matrices and out-of-range indices are rejected."""
    with pytest.raises(EnsembleError):
        LocalUnitarySetting(HAAR_1Q, 1, matrices=(np.array([[1.0, 1.0], [0.0, 1.0]]),))
    with pytest.raises(EnsembleError):
        LocalUnitarySetting(CLIFFORD_1Q, 2, clifford_indices=(0, 30))
    with pytest.raises(EnsembleError):
        LocalUnitarySetting(CLIFFORD_1Q, 2, clifford_indices=(0,))


def test_setting_json_forms():
    """Clifford settings serialize as index lists, Haar settings as matrices."""
    clifford = LocalUnitarySetting(CLIFFORD_1Q, 3, clifford_indices=(1, 0, 23))
    assert clifford.to_json() == [1, 0, 23]
    restored = LocalUnitarySetting.from_json([1, 0, 23], CLIFFORD_1Q, 3)
    assert restored.clifford_indices == (1, 0, 23)

    haar = sample_setting(2, HAAR_NQ, seed=8, groups=[(0, 1)])
    again = LocalUnitarySetting.from_json(json.loads(json.dumps(haar.to_json())), HAAR_NQ, 2)
    assert again.groups == ((0, 1),)
    assert_allclose(again.matrices[0], haar.matrices[0])
    with pytest.raises(EnsembleError):
        LocalUnitarySetting.from_json({"qubits": [0]}, HAAR_NQ, 1)


def test_twirl_of_x_weight_is_swap():
    """The two-copy outcome weight twirls exactly to SWAP."""
    result = twirl(X_WEIGHT, CLIFFORD_1Q, t=2)
    assert result.std_error is None
    assert result.n_samples == N_CLIFFORD_1Q
    assert np.max(np.abs(result.operator - swap_operator(2))) <= 1e-12


def test_twirl_of_pure_pair():
    """A pure product pair twirls to (I + S)/6."""
    psi = random_pure_state(1, seed=2).vector()
    projector = np.outer(psi, psi.conj())
    twirled = twirl(np.kron(projector, projector), CLIFFORD_1Q, t=2).operator
    assert_allclose(twirled, (np.eye(4) + swap_operator(2)) / 6, atol=1e-12)


def test_single_copy_twirl_is_depolarizing():
    """One copy: the twirl of A is tr(A) I/2."""
    rng = np.random.default_rng(5)
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    assert_allclose(twirl(a, CLIFFORD_1Q, t=1).operator, np.trace(a) * np.eye(2) / 2, atol=1e-12)


def test_twirl_is_idempotent():
    """Twirling twice changes nothing."""
    x = np.random.default_rng(6).normal(size=(4, 4))
    once = twirl(x, CLIFFORD_1Q, t=2).operator
    assert_allclose(twirl(once, CLIFFORD_1Q, t=2).operator, once, atol=1e-12)


def test_twirl_design_order():
    """Clifford is a 3-design only; the identity ensemble twirls nothing."""
    twirl(np.eye(8), CLIFFORD_1Q, t=3)
    with pytest.raises(EnsembleError):
        twirl(np.eye(16), CLIFFORD_1Q, t=4)
    with pytest.raises(EnsembleError):
        twirl(np.eye(2), IDENTITY, t=1)
    with pytest.raises(EnsembleError):
        twirl(np.eye(3), CLIFFORD_1Q, t=1)


@pytest.mark.parametrize("ensemble_id", [CLIFFORD_1Q, HAAR_1Q])
def test_single_qubit_twirl_rejects_other_dimensions(ensemble_id):
    """Asking a single-qubit ensemble for d=3 fails instead of twirling at d=2."""
    with pytest.raises(EnsembleError, match="d=3"):
        twirl(np.eye(9), ensemble_id, t=2, d=3)
    assert twirl(np.eye(4), ensemble_id, t=2, d=2, n_samples=10).operator.shape == (4, 4)


def test_haar_monte_carlo_matches_clifford_twirl():
    """Sampled Haar twirl agrees with the exact Clifford twirl entrywise."""
    x = np.random.default_rng(7).normal(size=(4, 4))
    exact = twirl(x, CLIFFORD_1Q, t=2).operator
    sampled = twirl(x, HAAR_1Q, t=2, n_samples=10_000, seed=3)
    assert sampled.std_error is not None
    assert np.all(np.abs(sampled.operator - exact) <= 5 * sampled.std_error + 1e-12)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_weingarten_table(d):
    """Symmetric coefficients whose rows sum to 1/(d(d+1))."""
    table = weingarten_table(2, d)
    assert_allclose(table.coefficients, table.coefficients.T)
    assert_allclose(table.row_sums(), 1 / (d * (d + 1)))
    assert table.coefficient((0, 1), (0, 1)) == pytest.approx(1 / (d**2 - 1))
    assert table.coefficient((0, 1), (1, 0)) == pytest.approx(-1 / (d * (d**2 - 1)))


def test_weingarten_limits():
    """Only t <= 2 and d >= 2 are tabulated."""
    assert weingarten_table(1, 3).coefficient((0,), (0,)) == pytest.approx(1 / 3)
    with pytest.raises(EnsembleError):
        weingarten_table(3, 2)
    with pytest.raises(EnsembleError):
        weingarten_table(2, 1)


def test_weingarten_twirl_matches_clifford():
    """The exact Haar twirl equals the Clifford twirl on two qubit copies."""
    x = np.random.default_rng(8).normal(size=(4, 4)) + 1j
    assert_allclose(weingarten_twirl(x, 2, 2), twirl(x, CLIFFORD_1Q, t=2).operator, atol=1e-12)
    assert_allclose(weingarten_twirl(X_WEIGHT, 2, 2), swap_operator(2), atol=1e-12)


@pytest.mark.parametrize("d, expected", [
    (2, (18, 36, 144)),
    (3, (60, 108, 456)),
    (4, (140, 240, 1080)),
    (5, (270, 450, 2160)),
])
def test_permutation_sums(d, expected):
    """Enumerated permutation sums equal their closed forms."""
    report = verify_perm_sums(d)
    assert report.passed
    assert report.closed_form == expected
    assert_allclose(report.enumerated, expected, atol=1e-8)


def test_permutation_sums_cap():
    """Dimensions whose four-copy operators exceed the cap raise."""
    with pytest.raises(CapExceededError):
        verify_perm_sums(7)


def test_export_clifford_table(tmp_path):
    """The export has one record per element, identity first."""
    out = export_clifford_table(str(tmp_path / "cliffords.jsonl"))
    records = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(records) == N_CLIFFORD_1Q
    assert records[0]["word"] == "I"
    assert records[0]["matrix_re"] == [[1.0, 0.0], [0.0, 1.0]]
