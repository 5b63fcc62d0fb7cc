"""
Test the wedge family: closed-form Gram entries against quadrature, the
restricted norm floor and the pairwise separation on the small sector.
"""
import math

import numpy as np
import pytest

from dbarlab.errors import InvalidInputError
from dbarlab.wedge import (
    DEFAULT_DELTA0,
    Sector,
    WedgeFamily,
    branch_arg,
    gram,
    restriction_norms,
    restriction_witness,
    sector_quadrature,
    wedge_norm,
)


def test_unit_norm_on_outer_wedge():
    """<f_j, f_j> on W_1 is 1 for every exponent."""
    family = WedgeFamily()
    for a in family.exponents(40):
        assert wedge_norm(family, family.outer, a, a).real == pytest.approx(1.0, abs=1e-12)


def test_restricted_diagonal_formula():
    """On W_0 cap D_r3 the squared norm is (alpha0/alpha)(r3/R)^(2 - 2a)."""
    family = WedgeFamily(R=1.5, alpha=2.0, alpha0=0.7, r3=0.4)
    for a in (0.3, 0.75, 0.99):
        expected = (0.7 / 2.0) * (0.4 / 1.5) ** (2 - 2 * a)
        assert wedge_norm(family, family.inner, a, a).real == pytest.approx(expected, rel=1e-12)


def test_closed_form_matches_quadrature():
    """Diagonal and off-diagonal entries agree with adaptive quadrature to 1e-8."""
    family = WedgeFamily()
    for sector in (family.outer, family.inner):
        for a_i, a_j in ((0.5, 0.5), (0.5, 0.75), (0.875, 0.9375)):
            closed = wedge_norm(family, sector, a_i, a_j)
            assert abs(sector_quadrature(family, sector, a_i, a_j) - closed) < 1e-8


def test_quadrature_near_unit_exponent():
    """Exponents 1 - 2^-18 and 1 - 2^-19 stay finite in the log-form integrand."""
    family = WedgeFamily()
    a_i, a_j = 1 - 2.0**-18, 1 - 2.0**-19
    assert abs(sector_quadrature(family, family.inner, a_i, a_j) - wedge_norm(family, family.inner, a_i, a_j)) < 1e-8


def test_gram_small_cases():
    """m = 1 on W_1 is [1]; larger Grams are Hermitian and positive semidefinite."""
    family = WedgeFamily()
    assert np.allclose(gram(family, family.outer, 1, audit=1).matrix, [[1.0]])
    result = gram(family, family.outer, 12, audit=3, seed=4)
    assert np.allclose(result.matrix, result.matrix.conj().T)
    assert result.min_eigenvalue >= -1e-10
    assert result.max_deviation < 1e-8
    assert len(result.audited) == 3


def test_consecutive_inner_products_tend_to_limit():
    """On W_1, |<f_j, f_{j+1}>| -> 2 sqrt(2) / 3 for the geometric schedule."""
    family = WedgeFamily()
    a = family.exponents(30)
    assert abs(wedge_norm(family, family.outer, a[28], a[29])) == pytest.approx(2 * math.sqrt(2) / 3, abs=1e-6)


def test_branch_cut_convention():
    """Points just left and right of the positive imaginary axis differ by 2 pi in argument."""
    left = branch_arg(np.exp(1j * (math.pi / 2 + 1e-9)))
    right = branch_arg(np.exp(1j * (math.pi / 2 - 1e-9)))
    assert right - left == pytest.approx(2 * math.pi, abs=1e-6)
    assert branch_arg(-1j) == pytest.approx(-math.pi / 2)


def test_restricted_norms_monotone_and_converge():
    """|f_j| on the small sector increases in j and reaches sqrt(alpha0/alpha) within 1e-6 by j = 40."""
    rows = restriction_norms(WedgeFamily(), 40)
    norms = [r.norm_restricted for r in rows]
    assert all(b > a for a, b in zip(norms, norms[1:]))
    assert norms[-1] == pytest.approx(math.sqrt(0.5), abs=1e-6)
    assert all(r.norm_W1 == pytest.approx(1.0, abs=1e-8) for r in rows)


def test_separation_certificate():
    """Every pair among j <= 20 is at least delta0 apart; the closest pair is (3, 4)."""
    report = restriction_witness(m=20)
    assert report.verdict == "no convergent subsequence"
    assert report.min_pairwise_distance >= DEFAULT_DELTA0
    assert report.min_pairwise_distance == pytest.approx(0.224877, abs=5e-5)
    assert report.closest_pair == (3, 4)
    assert report.norm_floor > 0
    assert report.audited_entries == 6
    assert report.max_quadrature_deviation < 1e-8


def test_consecutive_distance_bounded_below():
    """Consecutive distances on the small sector for j = 3..20 never drop below delta0."""
    rows = restriction_norms(WedgeFamily(), 20)
    assert min(r.min_pairwise_distance for r in rows[3:]) >= DEFAULT_DELTA0


def test_single_member_report():
    report = restriction_witness(m=1, audit=0)
    assert report.verdict == "norm floor only"
    assert report.min_pairwise_distance is None
    assert report.norm_floor == pytest.approx(math.sqrt(0.5 * 0.25 ** 1.0), rel=1e-12)


def test_invalid_geometry():
    with pytest.raises(InvalidInputError):
        WedgeFamily(alpha=1.0, alpha0=1.5)
    with pytest.raises(InvalidInputError):
        WedgeFamily(r3=2.0)
    with pytest.raises(InvalidInputError):
        Sector(1.0, 2 * math.pi)
    with pytest.raises(InvalidInputError):
        wedge_norm(WedgeFamily(), Sector(1.0, 1.0), 1.0, 1.0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
