import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from rmcorr.ensembles import HAAR_1Q, HAAR_NQ, LocalUnitarySetting
from rmcorr.qcore import (
    CapExceededError,
    Partition,
    QuantumState,
    StateError,
    apply_product_unitary,
    bell_diagonal_state,
    bell_product_mixture,
    compose,
    depolarize,
    from_bitstrings,
    hamming_weight,
    make_state,
    outcome_distribution,
    partial_trace,
    partial_transpose,
    permutation_operator,
    permutations,
    qubit_mask,
    random_mixed_state,
    realignment,
    sample_outcomes,
    swap_operator,
    tensor,
    to_bitstrings,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
I2 = np.eye(2, dtype=complex)


@pytest.mark.parametrize("kind, n", [
    ("zero", 3), ("plus", 4), ("ghz", 5), ("w", 4), ("bell", 2), ("mes", 4),
    ("product_random", 3), ("pure_random", 3),
])
def test_named_states_are_normalized(kind, n):
    """Every named state is a unit vector labelled with its kind and size."""
    state = make_state(kind, n, seed=1)
    assert state.is_pure
    assert np.linalg.norm(state.vector()) == pytest.approx(1.0)
    assert state.label == f"{kind}{n}"


def test_ghz_and_w_amplitudes():
    """GHZ has weight on the two extreme basis states, W on single excitations."""
    ghz = make_state("ghz", 3).vector()
    assert_allclose(np.abs(ghz[[0, 7]]) ** 2, [0.5, 0.5])
    w = make_state("w", 3).vector()
    assert_allclose(np.abs(w[[4, 2, 1]]) ** 2, [1 / 3] * 3)


def test_mes_amplitudes():
    """|Psi+> on 2+2 qubits pairs basis states i of A with i of B."""
    mes = make_state("mes", 4).vector()
    assert_allclose(mes[[0, 5, 10, 15]], [0.5] * 4)
    assert np.count_nonzero(np.abs(mes) > 1e-12) == 4


@pytest.mark.parametrize("kind, n", [("nope", 2), ("ghz", 0), ("bell", 3), ("mes", 3)])
def test_make_state_rejects_bad_requests(kind, n):
    """Unknown kinds and incompatible sizes raise StateError."""
    with pytest.raises(StateError):
        make_state(kind, n)


def test_pure_qubit_cap(monkeypatch):
    """The pure-state cap is read from the environment."""
    monkeypatch.setenv("RMCORR_MAX_PURE_QUBITS", "4")
    from rmcorr.config import get_settings

    get_settings.cache_clear()
    with pytest.raises(CapExceededError):
        make_state("zero", 5)
    assert make_state("zero", 4).n_qubits == 4


@pytest.mark.parametrize("data", [
    np.array([1.0, 1.0, 0.0, 0.0]),
    np.array([[1.0, 0.5], [0.0, 0.0]]),
    np.array([[1.5, 0.0], [0.0, -0.5]]),
    np.zeros((2, 2, 2)),
    np.array([1.0, 0.0, 0.0]),
])
def test_invalid_state_data(data):
    """Unnormalized, non-Hermitian, non-positive or misshapen data is rejected."""
    n = 2 if data.shape[0] in (3, 4) else 1
    with pytest.raises(StateError):
        QuantumState(n, data)


def test_partial_trace_of_ghz_is_maximally_mixed(ghz3):
    """Every single-qubit marginal of GHZ3 is I/2."""
    for q in range(3):
        assert_allclose(partial_trace(ghz3, [q]).density_matrix(), np.eye(2) / 2, atol=1e-12)


def test_partial_trace_keeps_requested_order():
    """Kept qubits appear in the order given, not in ascending order."""
    zero = np.array([1.0, 0.0])
    plus = np.array([1.0, 1.0]) / np.sqrt(2)
    state = QuantumState(2, np.kron(zero, plus))
    reduced = partial_trace(state, [1, 0]).density_matrix()
    assert_allclose(reduced, np.kron(np.outer(plus, plus), np.outer(zero, zero)), atol=1e-12)


def test_partial_trace_of_mixed_state(ghz3):
    """Depolarized GHZ3 reduces to the mixture of the reduced GHZ and I/4."""
    noisy = depolarize(ghz3, 0.3)
    reduced = partial_trace(noisy, [0, 2]).density_matrix()
    expected = 0.7 * np.diag([0.5, 0.0, 0.0, 0.5]) + 0.3 * np.eye(4) / 4
    assert_allclose(reduced, expected, atol=1e-12)


def test_partial_trace_rejects_bad_subsets(ghz3):
    """Repeated, empty or out-of-range subsets raise StateError."""
    for keep in ([], [0, 0], [3]):
        with pytest.raises(StateError):
            partial_trace(ghz3, keep)


def test_partial_transpose_of_bell(bell):
    """The partial transpose of a Bell state has eigenvalue -1/2."""
    eigenvalues = np.linalg.eigvalsh(partial_transpose(bell, [1]))
    assert_allclose(eigenvalues, [-0.5, 0.5, 0.5, 0.5], atol=1e-12)


def test_realignment_of_product_operator():
    """R(a ⊗ b) is the outer product of the row-major vectorizations."""
    rng = np.random.default_rng(4)
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    b = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    result = realignment(np.kron(a, b), Partition.from_sizes([1, 2]))
    assert result.shape == (4, 16)
    assert_allclose(result, np.outer(a.reshape(-1), b.reshape(-1)), atol=1e-12)


def test_swap_operator_exchanges_copies():
    """SWAP on two qubits maps |01> to |10>."""
    swap = swap_operator(2)
    assert swap[2, 1] == 1.0
    assert swap[1, 2] == 1.0
    assert_allclose(swap @ swap, np.eye(4))


@pytest.mark.parametrize("d", [2, 3])
def test_permutation_operators_compose(d):
    """W_pi W_sigma equals W_{pi sigma} for every pair in S_3."""
    for pi, sigma in itertools.product(permutations(3), repeat=2):
        left = permutation_operator(pi, d).matrix @ permutation_operator(sigma, d).matrix
        assert_allclose(left, permutation_operator(compose(pi, sigma), d).matrix)


def test_permutation_operator_cap():
    """t * d^t above the cap raises instead of allocating."""
    with pytest.raises(CapExceededError):
        permutation_operator((1, 0, 3, 2), 7)
    with pytest.raises(StateError):
        permutation_operator((0, 0), 2)


def test_apply_product_unitary_with_explicit_matrices():
    """X on qubit 0 sends |00> to |10>."""
    setting = LocalUnitarySetting(HAAR_1Q, 2, matrices=(X, I2))
    rotated = apply_product_unitary(make_state("zero", 2), setting)
    assert_allclose(np.abs(rotated.vector()) ** 2, [0, 0, 1, 0], atol=1e-12)


def test_apply_product_unitary_conjugates_masked_qubits():
    """The mask applies the entrywise conjugate, so S acts as S* on |+>."""
    s_gate = np.diag([1.0, 1j])
    setting = LocalUnitarySetting(HAAR_1Q, 1, matrices=(s_gate,))
    rotated = apply_product_unitary(make_state("plus", 1), setting, conjugate_mask=[True])
    assert_allclose(rotated.vector(), np.array([1.0, -1j]) / np.sqrt(2), atol=1e-12)


def test_apply_product_unitary_mixed_matches_pure(ghz3):
    """Conjugating the density matrix agrees with rotating the vector."""
    rng = np.random.default_rng(2)
    from rmcorr.ensembles import sample_setting

    setting = sample_setting(3, HAAR_1Q, rng)
    pure = apply_product_unitary(ghz3, setting).density_matrix()
    mixed = apply_product_unitary(depolarize(ghz3, 0.0), setting).density_matrix()
    assert_allclose(pure, mixed, atol=1e-12)


def test_mask_may_not_split_a_group_factor():
    """A conjugate mask that cuts through a multi-qubit factor is an error."""
    setting = LocalUnitarySetting(HAAR_NQ, 2, matrices=(np.eye(4),), groups=((0, 1),))
    with pytest.raises(StateError):
        apply_product_unitary(make_state("zero", 2), setting, conjugate_mask=[False, True])


def test_sample_outcomes_is_deterministic():
    """The same seed yields the same shots; a point mass always yields its outcome."""
    probs = outcome_distribution(make_state("plus", 3))
    first = sample_outcomes(probs, 50, seed=9)
    second = sample_outcomes(probs, 50, seed=9)
    assert np.array_equal(first, second)
    assert np.all(sample_outcomes(np.array([0.0, 1.0, 0.0, 0.0]), 20, seed=1) == 1)


@pytest.mark.parametrize("probs", [np.array([0.5, 0.6]), np.array([-0.1, 1.1]), np.ones((2, 2))])
def test_sample_outcomes_rejects_bad_distributions(probs):
    """Only a 1-D probability vector is accepted."""
    with pytest.raises(StateError):
        sample_outcomes(probs, 5)


def test_bitstring_helpers():
    """Qubit 0 is the leftmost character and the most significant bit."""
    assert to_bitstrings([5, 0], 3) == ["101", "000"]
    assert from_bitstrings(["101", "011"], 3).tolist() == [5, 3]
    assert qubit_mask([0], 3) == 4
    assert qubit_mask([1, 2], 3) == 3
    assert hamming_weight(np.array([0, 1, 3, 7, 8])).tolist() == [0, 1, 2, 3, 1]
    with pytest.raises(StateError):
        from_bitstrings(["12"], 2)


@pytest.mark.parametrize("text, groups", [
    ("1|1|1", ((0,), (1,), (2,))),
    ("2|1", ((0, 1), (2,))),
    ("q:0,2|1", ((0, 2), (1,))),
])
def test_partition_parse(text, groups):
    """Both the size form and the explicit form parse, and str() round-trips."""
    partition = Partition.parse(text)
    assert partition.groups == groups
    assert Partition.parse(str(partition)) == partition


@pytest.mark.parametrize("text", ["a|b", "q:0,0|1", "q:0|"])
def test_partition_parse_errors(text):
    """Malformed or overlapping partitions raise StateError."""
    with pytest.raises(StateError):
        Partition.parse(text)


def test_partition_helpers():
    """Equal splits differ by at most one qubit; coverage is exact."""
    partition = Partition.equal(5, 2)
    assert partition.sizes == (3, 2)
    assert partition.dims == (8, 4)
    assert partition.covers(5)
    assert not Partition.singletons([0, 2]).covers(3)
    with pytest.raises(StateError):
        Partition.equal(2, 3)
    with pytest.raises(StateError):
        Partition.singletons([0, 5]).check_within(3)


def test_bell_product_mixture_purity():
    """Purity of the Bell/product mixture is 1 - 1.5p + 1.5p^2."""
    p = 0.4
    assert bell_product_mixture(p).purity() == pytest.approx(1 - 1.5 * p + 1.5 * p**2)


def test_bell_diagonal_validation():
    """Coefficients outside the tetrahedron give a negative eigenvalue."""
    assert bell_diagonal_state(0.5, -0.5, 0.5).purity() == pytest.approx((1 + 0.75) / 4)
    with pytest.raises(StateError):
        bell_diagonal_state(1.0, 1.0, 1.0)


def test_tensor_and_random_mixed(bell):
    """Tensor products keep purity; random mixed states are valid and mixed."""
    joined = tensor(bell, make_state("zero", 1))
    assert joined.n_qubits == 3
    assert joined.purity() == pytest.approx(1.0)
    mixed = random_mixed_state(2, seed=3)
    assert mixed.purity() < 1.0
    assert np.trace(mixed.density_matrix()).real == pytest.approx(1.0)
    assert np.linalg.eigvalsh(mixed.density_matrix())[0] > -1e-10
