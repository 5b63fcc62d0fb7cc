"""
Test the Hartogs witness construction: base weight, sequence selection, the
radius-2 extension, fiber-reduced norms, energies and the epsilon sweep.
"""
import dataclasses
import math

import numpy as np
import pytest
from scipy.special import iv

from dbarlab.errors import InvalidInputError
from dbarlab.hartogs import (
    audit_sequences,
    base_weight,
    bessel_ratio,
    build_weight_spec,
    energy,
    fiber_weak_factor,
    first_frequency_exponent,
    minimal_multiplier,
    multiplier_bound,
    outer_profile,
    radial_correction,
    run_hartogs,
    select_sequences,
    vanishing_residual,
    violation_report,
    witness_form,
)
from dbarlab.planar import GridSet, annulus_mask, closed_disc_mask


@pytest.fixture(scope="module")
def annulus_run():
    """Annulus 0.3 <= |z| <= 0.7 at N = 48: two complement components, two stages."""
    W = annulus_mask(GridSet.unit_box(48), 0.3, 0.7)
    return run_hartogs(W, K=2, period_tol=1e-3)


def test_base_weight_zero_on_w_and_formula():
    """A single W node at the origin: phi = 0 there and exp(-1) at distance 1."""
    grid = GridSet.unit_box(4)
    mask = np.zeros(grid.shape, dtype=bool)
    mask[4, 4] = True
    phi = base_weight(grid.with_mask(mask))
    assert phi[4, 4] == 0.0
    assert phi[4, 8] == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert np.all(phi[~mask] > 0)


def test_base_weight_matches_brute_force():
    """Distance transform agrees with an O(N^2) nearest-point search on a 64^2 grid."""
    rng = np.random.default_rng(11)
    grid = GridSet.box(0.0, 1.0, 0.0, 1.0, 1.0 / 63)
    mask = np.zeros(grid.shape, dtype=bool)
    mask[rng.integers(0, 64, 25), rng.integers(0, 64, 25)] = True
    phi = base_weight(grid.with_mask(mask))
    pts = grid.z[mask]
    dist = np.min(np.abs(grid.z[..., None] - pts[None, None, :]), axis=-1)
    brute = np.where(mask, 0.0, np.exp(-1.0 / np.where(mask, 1.0, dist)))
    assert np.max(np.abs(phi - brute)) < 1e-12


def test_base_weight_rejects_empty():
    with pytest.raises(InvalidInputError):
        base_weight(GridSet.unit_box(8).empty())


def test_base_weight_vanishes_to_high_order():
    """First four raster differences of phi vanish on W at N = 64."""
    W = annulus_mask(GridSet.unit_box(64), 0.3, 0.7)
    assert vanishing_residual(base_weight(W), W) < 1e-12


def test_first_frequency_single_component():
    """int psi_1 = 1 gives n_1 = 8 and c_1 = 2 pi / 8."""
    n, c = select_sequences([1.0], [0.3])
    assert n == [8]
    assert c[0] == pytest.approx(2 * math.pi / 8, abs=1e-15)
    assert first_frequency_exponent(1.0) == 3


@pytest.mark.parametrize("sup_1,integral_2,sup_2", [(0.2, 0.5, 0.1), (0.2, 0.5, 5.0), (1e-3, 0.02, 0.4)])
def test_minimal_multiplier_matches_scan(sup_1, integral_2, sup_2):
    """The chosen multiplier is the first power of two passing the inequality in a direct scan."""
    c_1 = 2 * math.pi / 8
    bound = min(1.0, c_1 * sup_1 / sup_2, 1.0 / (8 * sup_2))
    assert multiplier_bound(3, c_1, sup_1, sup_2) == pytest.approx(bound, rel=1e-15)
    scan = next(2**d for d in range(1, 17) if 2 * math.pi / (2**d * 8 * integral_2) <= bound)
    assert 2 ** minimal_multiplier(3, c_1, sup_1, integral_2, sup_2) == scan


def test_sequences_pass_their_audit():
    """Toy data: every weight invariant re-checks, tail bound included."""
    integrals = [0.9, 0.4, 0.05, 0.3, 1e-4]
    sups = [0.3, 0.2, 0.1, 0.25, 0.01]
    n, c = select_sequences(integrals, sups)
    audit = audit_sequences(n, c, integrals, sups, components=[])
    assert audit.all_ok
    assert all(math.ldexp(c[j + 1] * sups[j + 1], n[j].bit_length() - 1) <= 1 + 1e-12 for j in range(len(n) - 1))


def test_sequences_reach_large_frequencies():
    """Tiny component masses give frequencies beyond 2^60 with c still in (0, 1]."""
    n, c = select_sequences([1e-19, 1e-22], [1e-20, 1e-24])
    assert n[0] >= 2**60
    assert n[1] % n[0] == 0
    assert all(0 < v <= 1 for v in c)


def test_radial_correction_matches_outer_profile():
    """R and r R' meet -(1/2) log(4 - r^2) at the match radius; the outer value at 1.9 is about 0.4708."""
    corr = radial_correction(mu=0.01, floor=0.02, need=np.zeros(20001), kappa=1.0)
    assert corr.R[-1] == pytest.approx(float(outer_profile(1.8)), abs=1e-6)
    slope = (corr.R[-1] - corr.R[-2]) / (corr.r[-1] - corr.r[-2])
    assert 1.8 * slope == pytest.approx(1.8**2 / (4 - 1.8**2), rel=2e-3)
    assert np.all(corr.s > 0)
    assert float(outer_profile(1.9)) == pytest.approx(0.4708, abs=1e-3)


def test_weight_spec_invariants(annulus_run):
    """Two components, audit passes, Delta_h Phi = phi~ to roundoff."""
    spec = annulus_run.spec
    assert spec.decomposition.count == 2
    assert spec.audit.all_ok
    assert spec.n[1] % spec.n[0] == 0
    assert spec.Phi_residual < 1e-8 * max(1.0, float(spec.phi_tilde.max()))


def test_extension_is_subharmonic_and_matches(annulus_run):
    """Delta_h Phi_ext > 0 on the shell, Phi_ext equals the outer profile beyond 1.8 and Phi inside D."""
    ext = annulus_run.spec.extension
    assert ext.report.min_laplacian > 0
    r = np.abs(ext.grid.z)
    outer = (r >= 1.8) & (r < 2.0)
    assert np.allclose(ext.values[outer], outer_profile(r[outer]), atol=1e-12)
    row, col = ext.offset
    ny, nx = annulus_run.spec.grid.shape
    inner = annulus_run.spec.grid.unit_disc().mask
    assert np.allclose(ext.values[row:row + ny, col:col + nx][inner], annulus_run.spec.Phi[inner], atol=1e-10)
    assert ext.report.diameter > 4.0


def test_witness_norms(annulus_run):
    """|f_k|^2 = pi, N0 inside its computable bracket, 0 < Nneg < N0, tight harmonicity gate."""
    for wf in annulus_run.forms:
        norms = wf.norms
        assert norms.f_norm_sq == pytest.approx(math.pi, abs=1e-4)
        assert norms.N0_lower - 1e-12 <= norms.N0 <= norms.N0_upper + 1e-12
        assert 0 < norms.Nneg < norms.N0
        assert norms.Nneg_scaled == pytest.approx(norms.Nneg * norms.n_k**2, rel=1e-12)
        assert wf.conjugate.harmonic_relative < 1e-6
        assert all(p.within_tolerance for p in norms.periods)


def test_second_stage_period_is_quantized(annulus_run):
    """Theta_2 winds once around the inner disc: period 2 pi n_2 / n_2."""
    periods = annulus_run.forms[1].norms.periods
    assert len(periods) == 1
    assert periods[0].period == pytest.approx(2 * math.pi, rel=1e-8)


def test_weak_norm_decays_like_inverse_square(annulus_run):
    """log-log slope of Nneg against n_k lies in [-2.3, -1.7]."""
    a, b = annulus_run.forms
    slope = math.log(b.norms.Nneg / a.norms.Nneg) / math.log(b.n_k / a.n_k)
    assert -2.3 <= slope <= -1.7


def test_energy_terms(annulus_run):
    """Q >= 0, first-term bound <= 1, gradient identity, uniform B and the Catlin checks."""
    for e in annulus_run.energies:
        assert e.Q >= 0 and e.boundary_term >= 0
        assert e.first_term <= e.first_term_bound + 1e-12
        assert e.first_term_bound <= 1 + 1e-12
        assert e.gradient_identity_ok
        assert e.ratio > 0
    assert annulus_run.energy_uniform
    assert all(row.ok for row in annulus_run.catlin)


def test_violation_verdicts(annulus_run):
    """Small epsilon falsifies the estimate; epsilon above every N0/Q detects nothing."""
    report = annulus_run.violation
    assert report.verdict == "falsified"
    eps, k, deficit = report.certificate
    assert eps < math.pi / (2 * max(e.Q for e in annulus_run.energies))
    assert deficit > 0
    row = next(r for r in report.rows if r.epsilon == eps)
    assert row.threshold_slope > 0
    assert row.defeated_up_to is not None
    finite = [t for r in report.rows for t in r.thresholds if math.isfinite(t)]
    assert report.C_values[-1] >= 10 * max(finite)
    assert row.max_deficits[-1] < 0
    assert not report.rows[-1].falsified
    assert all(m < 0 for m in report.rows[-1].max_deficits)

def test_gradient_identity_reads_theta_samples(annulus_run):
    """Scrambled Theta samples break the identity that the integrated Theta satisfies."""
    spec = annulus_run.spec
    wf = annulus_run.forms[0]
    assert energy(spec, wf).gradient_identity_ok
    rng = np.random.default_rng(5)
    theta = wf.conjugate.theta
    noise = np.where(np.isnan(theta), np.nan, 100 * rng.normal(size=theta.shape))
    scrambled = dataclasses.replace(wf, conjugate=dataclasses.replace(wf.conjugate, theta=noise))
    report = energy(spec, scrambled)
    assert not report.gradient_identity_ok
    assert report.gradient_identity_gap > report.gradient_identity_tol


@pytest.mark.parametrize("m", [0, 1, 3, 7])
def test_fiber_weak_factor_matches_bessel(m):
    """The continued fraction agrees with 1 - 2 (m + 1) I_{m+1}(R) / (R I_m(R))."""
    R = np.array([0.2, 0.7, 1.5, 3.0])
    exact = 1 - 2 * (m + 1) * iv(m + 1, R) / (R * iv(m, R))
    assert np.allclose(fiber_weak_factor(m, R), exact, rtol=1e-12, atol=0)
    assert np.allclose(bessel_ratio(m, R), iv(m + 1, R) / iv(m, R), rtol=1e-12, atol=0)


def test_fiber_weak_factor_large_order():
    """n^2 kappa_n tends to R^2 / 4 and stays finite far beyond 2^60."""
    R = np.array([0.5, 1.0, 2.0])
    m = 10**6
    asymptotic = m**2 * R**2 / (4 * (m + 1) * (m + 2))
    assert np.allclose(fiber_weak_factor(m, R, m), asymptotic, rtol=1e-5)
    huge = 2**90
    assert np.allclose(fiber_weak_factor(huge, R, huge), R**2 / 4, rtol=1e-9)
    with pytest.raises(InvalidInputError):
        bessel_ratio(1.0, np.array([0.0, 1.0]))



def test_violation_inconclusive_with_one_stage(annulus_run):
    report = violation_report(annulus_run.forms[:1], annulus_run.energies[:1])
    assert report.verdict == "inconclusive"
    assert report.certificate is None


def test_flat_weight_norm_formula():
    """Phi = 0: N0 = pi n / (n + 1) exactly, even at very large n."""
    W = closed_disc_mask(GridSet.unit_box(32), 0.97)
    spec = build_weight_spec(W, K=1, extend=False)
    assert spec.n[0] >= 2**40
    zero = np.zeros(spec.grid.shape)
    flat = dataclasses.replace(spec, Phi=zero, unit_potentials=[zero for _ in spec.unit_potentials])
    wf = witness_form(flat, 1)
    n = wf.n_k
    assert wf.norms.N0 == pytest.approx(math.pi * n / (n + 1), rel=1e-10)
    assert wf.norms.f_norm_sq == pytest.approx(math.pi, abs=1e-4)


def test_large_frequency_norms_stay_finite():
    """A thin outer component forces a huge n_1; every stored norm stays finite and moderate."""
    W = closed_disc_mask(GridSet.unit_box(32), 0.97)
    spec = build_weight_spec(W, K=1, extend=False)
    wf = witness_form(spec, 1)
    values = [wf.norms.N0, wf.norms.Nneg, wf.norms.Nneg_scaled, wf.norms.f_norm_sq]
    assert all(np.isfinite(v) and abs(v) < 1e10 for v in values)
    assert wf.norms.Nneg < 1e-20


def test_witness_rejects_stage_out_of_range(annulus_run):
    with pytest.raises(InvalidInputError):
        witness_form(annulus_run.spec, 3)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
