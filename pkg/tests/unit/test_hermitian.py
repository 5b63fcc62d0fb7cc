"""
Test the Hermitian-form layer: H_q evaluation, the eigenvalue-sum criterion,
(P_q) certificates and the Hessian-based sanity bounds.
"""
import itertools
import math
import os
import tempfile

import numpy as np
import pytest

from dbarlab.errors import ConsistencyError, InvalidInputError, NormalizationError
from dbarlab.hermitian import (
    FormVector,
    HermitianMatrix,
    PqCertificate,
    catlin_bound,
    check_lemma5,
    complex_hessian,
    eigensum_monotonicity,
    example_pq_function,
    example_pq_hessian,
    frame_sums,
    hessian_form_hq,
    hormander_bound,
    min_q_eigensum,
    random_frames,
    sample_certificate,
    verify_pq_certificate,
)


def random_hermitian(n, rng):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return HermitianMatrix.from_array(a)


def brute_force_hq(H, n, q, coeffs):
    """Sum over all (j, k, K) with explicit permutation signs."""
    index = {J: i for i, J in enumerate(itertools.combinations(range(n), q))}

    def coefficient(seq):
        if len(set(seq)) < len(seq):
            return 0j
        perm = sorted(range(len(seq)), key=lambda t: seq[t])
        inversions = sum(1 for a in range(len(perm)) for b in range(a + 1, len(perm)) if perm[a] > perm[b])
        return (-1) ** inversions * coeffs[index[tuple(sorted(seq))]]

    total = 0j
    for K in itertools.combinations(range(n), q - 1):
        for j in range(n):
            for k in range(n):
                total += H.entries[j, k] * coefficient((j,) + K) * np.conj(coefficient((k,) + K))
    return total.real


def test_hq_identity_on_two_form():
    """H = I on C^3, u = dzbar_1 ^ dzbar_2: H_2(u) = 2."""
    H = HermitianMatrix(np.eye(3, dtype=complex))
    u = FormVector.from_dict(3, 2, {(0, 1): 1.0})
    assert hessian_form_hq(H, u) == pytest.approx(2.0, abs=1e-14)


def test_hq_q1_is_the_hermitian_form():
    """q = 1 reduces to <H u, u>."""
    H = HermitianMatrix(np.diag([3.0, 5.0]).astype(complex))
    u = FormVector.from_dict(2, 1, {(0,): 1.0})
    assert hessian_form_hq(H, u) == pytest.approx(3.0, abs=1e-14)


def test_hq_matches_brute_force_signs():
    """Random H and u in C^4 for q = 1, 2, 3 agree with explicit permutation sums."""
    rng = np.random.default_rng(7)
    for q in (1, 2, 3):
        H = random_hermitian(4, rng)
        coeffs = rng.standard_normal(math.comb(4, q)) + 1j * rng.standard_normal(math.comb(4, q))
        u = FormVector(4, q, coeffs)
        assert hessian_form_hq(H, u) == pytest.approx(brute_force_hq(H, 4, q, coeffs), rel=1e-12, abs=1e-12)


def test_hq_dimension_mismatch():
    """A form on C^3 against a 2x2 Hessian is rejected."""
    H = HermitianMatrix(np.eye(2, dtype=complex))
    u = FormVector.from_dict(3, 1, {(0,): 1.0})
    with pytest.raises(InvalidInputError):
        hessian_form_hq(H, u)


def test_form_vector_wrong_length():
    """Coefficient count must be binomial(n, q)."""
    with pytest.raises(InvalidInputError):
        FormVector(4, 2, np.ones(5))


def test_non_hermitian_rejected():
    """HermitianMatrix refuses a non-Hermitian array."""
    with pytest.raises(InvalidInputError):
        HermitianMatrix(np.array([[1.0, 2.0], [0.0, 1.0]], dtype=complex))


def test_lemma5_random_suite():
    """100 random 4x4 Hessians, q = 1, 2, 3: frame sums bounded below, eigenvector frames attain equality."""
    rng = np.random.default_rng(0)
    for trial in range(100):
        H = random_hermitian(4, rng)
        for q in (1, 2, 3):
            report = check_lemma5(H, q, M=min_q_eigensum(H, q), frames=200, seed=trial)
            assert report.frames_above_bound
            assert report.equality_frame_found
            assert report.satisfied


def test_lemma5_diagonal_example():
    """diag(1, 2, 3), q = 2 has q-eigensum 3 and every frame sum is at least 3."""
    H = HermitianMatrix(np.diag([1.0, 2.0, 3.0]).astype(complex))
    report = check_lemma5(H, 2, M=3.0, frames=1000)
    assert report.min_eigensum == pytest.approx(3.0, abs=1e-14)
    assert report.min_frame_sum >= 3.0 - 1e-9
    assert report.satisfied


def test_lemma5_unsatisfied_target():
    """A target above the eigensum is reported as not satisfied, without raising."""
    H = HermitianMatrix(np.diag([1.0, 2.0, 3.0]).astype(complex))
    assert not check_lemma5(H, 1, M=1.5, frames=10).satisfied


def test_frames_are_orthonormal():
    """Sampled frames have orthonormal columns."""
    frames = random_frames(5, 3, 20, np.random.default_rng(1))
    gram = np.einsum("fjq,fjr->fqr", frames.conj(), frames)
    assert np.allclose(gram, np.eye(3)[None, :, :], atol=1e-12)


def test_unitary_invariance_of_eigensum():
    """Conjugating by a unitary leaves q-eigensums unchanged."""
    rng = np.random.default_rng(3)
    H = random_hermitian(4, rng)
    U = random_frames(4, 4, 1, rng)[0]
    for q in (1, 2, 3, 4):
        assert min_q_eigensum(H.conjugated(U), q) == pytest.approx(min_q_eigensum(H, q), abs=1e-10)


def test_eigensum_monotonicity_chain():
    """s_{q+1} = s_q + (q+1)-th eigenvalue up to rounding."""
    H = random_hermitian(5, np.random.default_rng(4))
    for q in range(1, 5):
        assert eigensum_monotonicity(H, q) < 1e-12


def test_example_function_has_zero_eigensum():
    """The (P_q) example family on C^3 with q = 2 has 2-eigensum 0 (diag(-1, 1, 1))."""
    H = example_pq_hessian(3, 2)
    assert min_q_eigensum(H, 2) == pytest.approx(0.0, abs=1e-14)
    fd = complex_hessian(example_pq_function(3, 2), [0.1 + 0.2j, -0.3j, 0.4])
    assert np.allclose(fd.entries, H.entries, atol=1e-6)


def test_complex_hessian_of_norm_squared():
    """d^2|z|^2/dz dzbar = identity."""
    fd = complex_hessian(lambda z: float(np.sum(np.abs(z) ** 2)), [0.3 + 0.1j, -0.2 + 0.5j])
    assert np.allclose(fd.entries, np.eye(2), atol=1e-8)


def test_certificate_pass_and_fail():
    """Samples of |z|^2 / 4 on the unit ball pass M = 0.2 and fail M = 0.3 (q = 1, eigenvalue 1/4)."""
    points = [[0.1, 0.2j], [0.5, 0.1], [-0.3j, 0.4]]
    cert = sample_certificate(lambda z: float(np.sum(np.abs(z) ** 2)) / 4, points, q=1, M=0.2)
    assert verify_pq_certificate(cert).passed
    cert.M = 0.3
    verdict = verify_pq_certificate(cert)
    assert not verdict.passed
    assert verdict.worst_margin == pytest.approx(-0.05, abs=1e-6)


def test_certificate_rejects_lambda_out_of_range():
    """lambda = 1.2 at a sample is a normalization error."""
    cert = sample_certificate(lambda z: 1.2, [[0.0, 0.0]], q=1, M=0.0)
    with pytest.raises(NormalizationError):
        verify_pq_certificate(cert)


def test_certificate_json_file_round_trip():
    """Certificates written to disk load with the same verdict."""
    points = [[0.2, 0.1j], [0.0, 0.3]]
    cert = sample_certificate(example_pq_function(2, 1), points, q=1, M=-1e-6)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "cert.json")
        with open(path, "w", encoding="utf-8") as f:
            f.write(cert.to_json())
        loaded = PqCertificate.load(path)
    assert verify_pq_certificate(loaded).passed == verify_pq_certificate(cert).passed


def test_certificate_malformed():
    """Missing keys surface as invalid input."""
    with pytest.raises(InvalidInputError):
        PqCertificate.from_dict({"q": 1, "M": 0.0, "samples": []})


def test_frame_sum_matches_trace():
    """For a unitary frame (q = n) the frame sum equals the trace."""
    rng = np.random.default_rng(5)
    H = random_hermitian(3, rng)
    frames = random_frames(3, 3, 4, rng)
    assert np.allclose(frame_sums(H, frames), np.trace(H.entries).real)


def test_catlin_and_hormander_bounds():
    """The bounds accept small left-hand sides and reject large ones."""
    assert catlin_bound(1.0, 1.0)
    assert not catlin_bound(3.0, 1.0)
    assert hormander_bound(norm_sq=math.pi, energy=1.0, q=1, diameter=4.0)
    assert not hormander_bound(norm_sq=100.0, energy=1.0, q=1, diameter=1.0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
