"""
Bergman restriction from a circular wedge to a smaller truncated wedge.

The family f_j(z) = sqrt((2 - 2a_j) / alpha) R^(a_j - 1) z^(-a_j), with the branch cut
on the positive imaginary axis, has unit norm on the wedge W_1 of radius R and angle
alpha. Its members stay a fixed distance apart on W_0 cap D_r3 while their norms there
stay bounded below, so the restriction operator is not compact.

Wedges are centred on the negative imaginary axis.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import dblquad

from .errors import ConsistencyError, InvalidInputError
from .models import RestrictionRow, WedgeReport

logger = logging.getLogger(__name__)

AXIS = -math.pi / 2
# min over i != j of |f_i - f_j| on W_0 cap D_r3 for the default geometry (pair 3, 4)
DEFAULT_DELTA0 = 0.2248


@dataclass(frozen=True)
class Sector:
    """{r e^{i theta} : 0 < r < radius, |theta - AXIS| < angle / 2}."""
    radius: float
    angle: float

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidInputError("sector radius must be positive", field="radius")
        if not 0 < self.angle < 2 * math.pi:
            raise InvalidInputError("sector angle must lie in (0, 2 pi) to avoid the branch cut", field="angle")


def branch_arg(z) -> np.ndarray:
    """arg z in (-3 pi / 2, pi / 2], cut along the positive imaginary axis."""
    theta = np.angle(z)
    return np.where(theta > math.pi / 2, theta - 2 * math.pi, theta)


def geometric_exponents(m: int) -> List[float]:
    """a_j = 1 - 2^-j for j = 1..m."""
    return [1.0 - 2.0**-j for j in range(1, m + 1)]


@dataclass(frozen=True)
class WedgeFamily:
    R: float = 1.0
    alpha: float = math.pi / 2
    alpha0: float = math.pi / 4
    r3: float = 0.25
    a: List[float] = field(default_factory=lambda: geometric_exponents(40))

    def __post_init__(self):
        if not 0 < self.alpha0 <= self.alpha < 2 * math.pi:
            raise InvalidInputError("need 0 < alpha0 <= alpha < 2 pi", field="alpha0")
        if not 0 < self.r3 < self.R:
            raise InvalidInputError("need 0 < r3 < R", field="r3")
        a = list(self.a)
        if any(not 0 < x < 1 for x in a) or any(y <= x for x, y in zip(a, a[1:])):
            raise InvalidInputError("exponents must be strictly increasing in (0, 1)", field="a")

    @property
    def outer(self) -> Sector:
        return Sector(self.R, self.alpha)

    @property
    def inner(self) -> Sector:
        return Sector(self.r3, self.alpha0)

    def exponents(self, m: int) -> List[float]:
        if m < 1:
            raise InvalidInputError("m must be at least 1", field="m")
        if m > len(self.a):
            if list(self.a) != geometric_exponents(len(self.a)):
                raise InvalidInputError(f"family has only {len(self.a)} exponents", field="m")
            return geometric_exponents(m)
        return list(self.a[:m])

    def coefficient(self, a: float) -> float:
        return math.sqrt((2 - 2 * a) / self.alpha) * self.R ** (a - 1)

    def log_evaluate(self, a: float, log_r, z_unit) -> np.ndarray:
        """log f at the point exp(log_r) * z_unit, |z_unit| = 1."""
        return math.log(self.coefficient(a)) - a * (np.asarray(log_r) + 1j * branch_arg(z_unit))

    def evaluate(self, a: float, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return np.exp(self.log_evaluate(a, np.log(np.abs(z)), z))


def wedge_norm(family: WedgeFamily, sector: Sector, a_i: float, a_j: float) -> complex:
    """
    <f_i, f_j> over the sector in closed form.

    Args:
        family (WedgeFamily): normalization data (R, alpha)
        sector (Sector): integration sector
        a_i (float): exponent of the first function
        a_j (float): exponent of the second function

    Returns:
        complex: int f_i conj(f_j) dA
    """
    p = 2 - a_i - a_j
    if p <= 0:
        raise InvalidInputError("a_i + a_j must stay below 2", field="a")
    radial = family.coefficient(a_i) * family.coefficient(a_j) * sector.radius**p / p
    delta = a_i - a_j
    if delta == 0:
        angular = complex(sector.angle)
    else:
        angular = np.exp(-1j * delta * AXIS) * 2 * math.sin(delta * sector.angle / 2) / delta
    return complex(radial * angular)


def sector_quadrature(family: WedgeFamily, sector: Sector, a_i: float, a_j: float,
                      tol: float = 1e-12) -> complex:
    """
    <f_i, f_j> by 2-D adaptive quadrature of the pointwise functions.

    Uses s = r^p, p = 2 - a_i - a_j, which makes the radial weight bounded; the pointwise
    product is assembled in log form so exponents near 1 do not overflow.
    """
    p = 2 - a_i - a_j
    top = sector.radius**p
    lo, hi = AXIS - sector.angle / 2, AXIS + sector.angle / 2

    def integrand(s, theta, part):
        log_s = math.log(s)
        unit = np.exp(1j * theta)
        log_r = log_s / p
        exponent = (family.log_evaluate(a_i, log_r, unit) + np.conj(family.log_evaluate(a_j, log_r, unit))
                    + (2 / p - 1) * log_s - math.log(p))
        value = np.exp(exponent)
        return float(value.real if part == 0 else value.imag)

    re, _ = dblquad(lambda s, t: integrand(s, t, 0), lo, hi, 0.0, top, epsabs=tol, epsrel=tol)
    im, _ = dblquad(lambda s, t: integrand(s, t, 1), lo, hi, 0.0, top, epsabs=tol, epsrel=tol)
    return complex(re, im)


@dataclass
class GramResult:
    matrix: np.ndarray
    audited: List[Tuple[int, int]]
    max_deviation: float

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix).min())


def gram(family: WedgeFamily, sector: Sector, m: int, audit: int = 3, seed: int = 0,
         deviation_tol: float = 1e-6) -> GramResult:
    """Gram matrix of f_1..f_m over the sector, with ``audit`` random entries checked by quadrature."""
    a = family.exponents(m)
    G = np.empty((m, m), dtype=complex)
    for i in range(m):
        for j in range(i, m):
            G[i, j] = wedge_norm(family, sector, a[i], a[j])
            G[j, i] = np.conj(G[i, j])
    rng = np.random.default_rng(seed)
    audited: List[Tuple[int, int]] = []
    worst = 0.0
    for _ in range(audit):
        i, j = (int(x) for x in rng.integers(0, m, 2))
        quad = sector_quadrature(family, sector, a[i], a[j])
        deviation = abs(quad - G[i, j])
        worst = max(worst, deviation)
        audited.append((i + 1, j + 1))
        if deviation > deviation_tol:
            raise ConsistencyError(
                f"Gram entry ({i + 1}, {j + 1}) closed form {G[i, j]:.12g} vs quadrature {quad:.12g}"
            )
    return GramResult(matrix=G, audited=audited, max_deviation=worst)


def distances(G: np.ndarray) -> np.ndarray:
    """|f_i - f_j| from a Gram matrix."""
    d = np.real(np.diag(G))
    sq = d[:, None] + d[None, :] - 2 * np.real(G)
    return np.sqrt(np.maximum(sq, 0.0))


def _rows(a: List[float], outer: np.ndarray, inner: np.ndarray) -> List[RestrictionRow]:
    dist = distances(inner)
    return [RestrictionRow(j=j + 1, a_j=a[j], norm_W1=math.sqrt(outer[j, j].real),
                           norm_restricted=math.sqrt(inner[j, j].real),
                           min_pairwise_distance=float(dist[j, :j].min()) if j else None)
            for j in range(len(a))]


def restriction_norms(family: WedgeFamily, m: int, audit: int = 0, seed: int = 0) -> List[RestrictionRow]:
    """Per-j table: exponent, norm on W_1, norm on W_0 cap D_r3 and distance to earlier members."""
    outer = gram(family, family.outer, m, audit=audit, seed=seed).matrix
    inner = gram(family, family.inner, m, audit=audit, seed=seed + 1).matrix
    return _rows(family.exponents(m), outer, inner)


def restriction_witness(family: Optional[WedgeFamily] = None, m: int = 20, delta0: float = DEFAULT_DELTA0,
                        audit: int = 3, seed: int = 0) -> WedgeReport:
    """
    Certify that f_1..f_m has no Cauchy subsequence on W_0 cap D_r3.

    The verdict is positive when every pair is at least ``delta0`` apart there. With m = 1
    only the norm floor is reported.
    """
    family = family or WedgeFamily()
    outer = gram(family, family.outer, m, audit=audit, seed=seed)
    inner = gram(family, family.inner, m, audit=audit, seed=seed + 1)
    dist = distances(inner.matrix)
    rows = _rows(family.exponents(m), outer.matrix, inner.matrix)
    floor = min(r.norm_restricted for r in rows)
    closest, delta = None, None
    if m >= 2:
        masked = dist + np.diag(np.full(m, np.inf))
        i, j = np.unravel_index(int(np.argmin(masked)), masked.shape)
        delta = float(masked[i, j])
        closest = (int(min(i, j)) + 1, int(max(i, j)) + 1)
        verdict = "no convergent subsequence" if delta >= delta0 and floor > 0 else "not certified"
    else:
        verdict = "norm floor only"
    logger.info("wedge witness m=%d: delta=%s floor=%.6g", m, delta, floor)
    return WedgeReport(m=m, alpha=family.alpha, alpha0=family.alpha0, R=family.R, r3=family.r3, rows=rows,
                       norm_floor=floor, norm_limit=math.sqrt(family.alpha0 / family.alpha),
                       min_pairwise_distance=delta, closest_pair=closest, delta0=delta0, verdict=verdict,
                       audited_entries=len(outer.audited) + len(inner.audited),
                       max_quadrature_deviation=max(outer.max_deviation, inner.max_deviation))
