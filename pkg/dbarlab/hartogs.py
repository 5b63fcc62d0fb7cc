"""
Non-compactness witness on Hartogs domains.

Given a compact set W in the unit disc without fine interior, this module builds
the weight phi~ = sum c_j psi_j on the complement components, its Green potential
Phi with an extension to the disc of radius 2, and the witness forms

    u_k = f_k (wbar dzbar - 2 exp(-2 Phi) Phi_z dwbar),
    f_k = sqrt(n_k) v_k exp(n_k Phi + i Theta_k) w^(n_k - 1).

All integrals over the w-fiber are done in closed form first, so the factors
exp(n_k Phi) never appear numerically and frequencies up to 2^60 stay finite.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.integrate import cumulative_trapezoid

from .errors import ConstructionError, DbarLabNotice, InvalidInputError, PeriodError
from .hermitian import hormander_bound
from .models import (
    CatlinRow,
    EnergyReport,
    ExtensionReport,
    ViolationReport,
    ViolationRow,
    WeightAudit,
    WitnessNorms,
)
from .planar import (
    FOUR_CONNECTED,
    ComponentDecomposition,
    ConjugateResult,
    GridSet,
    RayleighSequence,
    complement_components,
    convolve_inverse_distance,
    convolve_log,
    discrete_green_potentials,
    discrete_laplacian,
    greens_potential,
    harmonic_conjugate,
    rayleigh_sequence,
    region_holes,
)

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
# components lighter than this would need frequencies beyond double range
MIN_COMPONENT_MASS = 1e-200
MATCH_RADIUS = 1.8
OUTER_RADIUS = 2.0


def _notice(message: str, sink: List[str]):
    sink.append(message)
    warnings.warn(message, DbarLabNotice, stacklevel=3)


def inverse_frequency(n: int) -> float:
    """1 / n for a power of two n, exact for any size."""
    return math.ldexp(1.0, 1 - n.bit_length())


# ------------------------------------------------------------------ base weight

def base_weight(W: GridSet) -> np.ndarray:
    """
    phi(z) = exp(-1 / dist(z, W)) on every grid node, zero on W.

    Distances come from the exact Euclidean distance transform of the raster.
    """
    if not W.mask.any():
        raise InvalidInputError("W must be non-empty", field="W")
    dist = ndimage.distance_transform_edt(~W.mask) * W.h
    phi = np.zeros(W.shape)
    off = ~W.mask
    phi[off] = np.exp(-1.0 / dist[off])
    return phi


def vanishing_residual(phi: np.ndarray, W: GridSet, orders: int = 4) -> float:
    """Largest undivided forward difference of orders 1..orders of phi, taken at nodes of W."""
    worst = 0.0
    for axis in (0, 1):
        diff = phi
        for p in range(1, orders + 1):
            diff = np.diff(diff, axis=axis)
            starts = W.mask[:-p, :] if axis == 0 else W.mask[:, :-p]
            if starts.any():
                worst = max(worst, float(np.max(np.abs(diff[starts]))))
    return worst


# ------------------------------------------------------------------ sequences

def _c_value(integral: float, exponent: int) -> float:
    """c = 2 pi / (2^exponent * integral) without forming 2^exponent as a float."""
    return math.ldexp(TWO_PI / integral, -exponent)


def first_frequency_exponent(integral: float) -> int:
    """Smallest e >= 0 with 2 pi / (2^e * integral) <= 1."""
    if integral <= 0:
        raise InvalidInputError("component integral must be positive", field="integral")
    e = 0
    while _c_value(integral, e) > 1.0:
        e += 1
    return e


def multiplier_bound(n_exponent: int, c: float, sup: float, sup_next: float) -> float:
    """min{1, c_j |psi_j| / |psi_{j+1}|, 1 / (n_j |psi_{j+1}|)} with n_j = 2^n_exponent."""
    return min(1.0, c * sup / sup_next, math.ldexp(1.0 / sup_next, -n_exponent))


def minimal_multiplier(n_exponent: int, c: float, sup: float, integral_next: float, sup_next: float,
                       max_doublings: int = 2000) -> int:
    """
    Smallest power of two m >= 2 such that c_{j+1} = 2 pi / (m n_j int psi_{j+1})
    satisfies the three-way bound. Returned as the exponent of m.
    """
    bound = multiplier_bound(n_exponent, c, sup, sup_next)
    for d in range(1, max_doublings + 1):
        if _c_value(integral_next, n_exponent + d) <= bound:
            return d
    raise ConstructionError(f"no multiplier up to 2^{max_doublings} satisfies the bound {bound:.3e}")


def select_sequences(integrals: Sequence[float], sups: Sequence[float]) -> Tuple[List[int], List[float]]:
    """
    Frequencies n_j (powers of two) and scalings c_j for components with the given
    raster integrals and sup norms of psi_j.

    Args:
        integrals (list): int psi_j dA, all positive
        sups (list): sup |psi_j|, all positive

    Returns:
        tuple: (n, c) with n_{j+1} / n_j a power of two >= 2
    """
    if len(integrals) != len(sups):
        raise InvalidInputError("integrals and sups differ in length", field="integrals")
    if any(s <= 0 for s in integrals) or any(s <= 0 for s in sups):
        raise InvalidInputError("component integrals and sups must be positive", field="integrals")
    exponents: List[int] = []
    c: List[float] = []
    for j, (integral, sup) in enumerate(zip(integrals, sups)):
        if j == 0:
            e = first_frequency_exponent(integral)
        else:
            e = exponents[-1] + minimal_multiplier(exponents[-1], c[-1], sups[j - 1], integral, sup)
        exponents.append(e)
        c.append(_c_value(integral, e))
    return [1 << e for e in exponents], c


def audit_sequences(n: Sequence[int], c: Sequence[float], integrals: Sequence[float], sups: Sequence[float],
                    components: Sequence[GridSet], skipped: Sequence[int] = (), rtol: float = 1e-12) -> WeightAudit:
    """Re-check the four weight invariants and disjointness independently of the selection."""
    exps = [v.bit_length() - 1 for v in n]
    mass_dev = max((abs(math.ldexp(cj * s, e) - TWO_PI) for cj, s, e in zip(c, integrals, exps)), default=0.0)
    sup_ok = all(c[j + 1] * sups[j + 1] <= c[j] * sups[j] * (1 + rtol) for j in range(len(c) - 1))
    tail_ok = all(math.ldexp(c[j + 1] * sups[j + 1], exps[j]) <= 1 + rtol for j in range(len(c) - 1))
    div_ok = all(n[j + 1] % n[j] == 0 and n[j + 1] > n[j] for j in range(len(n) - 1))
    if components:
        cover = np.sum([comp.mask.astype(np.int64) for comp in components], axis=0)
        disjoint = bool(np.all(cover <= 1))
    else:
        disjoint = True
    c_ok = all(0 < cj <= 1 + rtol for cj in c)
    return WeightAudit(n=list(n), c=list(c), integrals=list(integrals), sups=list(sups),
                       mass_deviation=mass_dev, mass_ok=mass_dev <= 1e-9 * TWO_PI,
                       sup_monotone_ok=sup_ok, tail_ok=tail_ok, divisibility_ok=div_ok,
                       disjoint_ok=disjoint, c_in_range_ok=c_ok, skipped_components=list(skipped))


# ------------------------------------------------------------------ weight spec

@dataclass(frozen=True)
class Extension:
    """Phi_ext on a grid covering the disc of radius 2 (NaN outside it)."""
    values: np.ndarray
    grid: GridSet
    offset: Tuple[int, int]
    report: ExtensionReport


@dataclass(frozen=True)
class WeightSpec:
    """
    The assembled weight and its potentials.

    ``unit_potentials[j]`` is the discrete Green potential of (2 pi / int psi_j) psi_j, so that
    Phi = sum_j unit_potentials[j] / n_j. Scaled tails n_k (Phi - Phi_k) are formed from
    the exact ratios n_k / n_j and never multiply by n_k directly.
    """
    W: GridSet
    phi: np.ndarray
    decomposition: ComponentDecomposition
    psi: List[np.ndarray]
    integrals: List[float]
    sups: List[float]
    c: List[float]
    n: List[int]
    unit_potentials: List[np.ndarray]
    phi_tilde: np.ndarray
    Phi: np.ndarray
    Phi_residual: float
    audit: WeightAudit
    rayleigh: RayleighSequence
    notices: List[str] = field(default_factory=list)
    extension: Optional[Extension] = None

    @property
    def grid(self) -> GridSet:
        return self.decomposition.disc

    @property
    def stages(self) -> int:
        return len(self.rayleigh.stages)

    @property
    def psi_tilde(self) -> List[np.ndarray]:
        return [cj * p for cj, p in zip(self.c, self.psi)]

    def _check_stage(self, k: int):
        if not 1 <= k <= len(self.n):
            raise InvalidInputError(f"stage {k} outside 1..{len(self.n)}", field="k")

    def _ratio(self, k: int, j: int) -> float:
        return inverse_frequency(self.n[j - 1] // self.n[k - 1])

    def phi_tilde_partial(self, k: int) -> np.ndarray:
        self._check_stage(k)
        return np.sum(self.psi_tilde[:k], axis=0)

    def Phi_partial(self, k: int) -> np.ndarray:
        """Phi_k = sum_{j <= k} U_j / n_j."""
        self._check_stage(k)
        return np.sum([u * inverse_frequency(n) for u, n in zip(self.unit_potentials[:k], self.n[:k])], axis=0)

    def scaled_tail_density(self, k: int) -> np.ndarray:
        """n_k (phi~ - phi~_k) = sum_{j > k} (n_k / n_j)(2 pi / int psi_j) psi_j."""
        self._check_stage(k)
        out = np.zeros(self.grid.shape)
        for j in range(k + 1, len(self.n) + 1):
            out += self._ratio(k, j) * (TWO_PI / self.integrals[j - 1]) * self.psi[j - 1]
        return out

    def scaled_tail_potential(self, k: int) -> np.ndarray:
        """n_k (Phi - Phi_k)."""
        self._check_stage(k)
        out = np.zeros(self.grid.shape)
        for j in range(k + 1, len(self.n) + 1):
            out += self._ratio(k, j) * self.unit_potentials[j - 1]
        return out


def _effective_decomposition(dec: ComponentDecomposition, keep: List[int]) -> ComponentDecomposition:
    components = [dec.components[i] for i in keep]
    removed = np.zeros(dec.W.shape, dtype=bool)
    W_masks = []
    for comp in components:
        removed |= comp.mask
        W_masks.append(dec.W.with_mask(dec.disc.mask & ~removed))
    return ComponentDecomposition(W=dec.W, disc=dec.disc, components=components, W_masks=W_masks)


def _covers_unit_square(W: GridSet) -> bool:
    x0, y0 = W.origin
    return x0 <= -1 + 1e-9 and y0 <= -1 + 1e-9 and W.x[-1] >= 1 - 1e-9 and W.y[-1] >= 1 - 1e-9


def build_weight_spec(W: GridSet, K: int, smooth: bool = False, extend: bool = True,
                      floor: Optional[float] = None) -> WeightSpec:
    """
    End-to-end constructor: components, base weight, sequences, potentials,
    Rayleigh functions on W_1 .. W_K and (optionally) the radius-2 extension.

    Args:
        W (GridSet): compact set inside the open unit disc, on a grid covering [-1, 1]^2
        K (int): number of witness stages
        smooth (bool): apply the Jacobi pass to the Rayleigh functions
        extend (bool): build the extension to the radius-2 disc
        floor (float): constant part of the radial Laplacian (see ``assemble_weight``)

    Returns:
        WeightSpec
    """
    if not _covers_unit_square(W):
        raise InvalidInputError("the grid of W must cover [-1, 1]^2", field="W")
    notices: List[str] = []
    phi = base_weight(W)
    dec = complement_components(W)
    integrals, sups, keep, skipped = [], [], [], []
    for i, comp in enumerate(dec.components):
        psi = np.where(comp.mask, phi, 0.0)
        integral = comp.integrate(psi)
        if integral <= MIN_COMPONENT_MASS:
            skipped.append(i + 1)
            _notice(f"component {i + 1} carries no weight (int psi = {integral:.3e}); skipped", notices)
            continue
        keep.append(i)
        integrals.append(integral)
        sups.append(float(psi.max()))
    if len(keep) < dec.count:
        dec = _effective_decomposition(dec, keep)
    psi_list = [np.where(comp.mask, phi, 0.0) for comp in dec.components]
    n, c = select_sequences(integrals, sups)
    audit = audit_sequences(n, c, integrals, sups, dec.components, skipped)
    if not audit.all_ok:
        raise ConstructionError(f"weight sequences fail their audit: {audit.model_dump()}")

    grid = dec.disc
    residual = 0.0
    unit_densities = [(TWO_PI / integral) * psi for integral, psi in zip(integrals, psi_list)]
    unit_potentials = [gp.values for gp in discrete_green_potentials(unit_densities, grid)]
    phi_tilde = np.sum([cj * p for cj, p in zip(c, psi_list)], axis=0) if psi_list else np.zeros(grid.shape)
    Phi = np.sum([u * inverse_frequency(nj) for u, nj in zip(unit_potentials, n)], axis=0) if n else np.zeros(grid.shape)
    lap = discrete_laplacian(Phi, grid.h)
    if psi_list:
        residual = float(np.nanmax(np.abs(lap - phi_tilde)))
    logger.info("weight built: %d components, n = %s", len(n), n)

    rayleigh = rayleigh_sequence(W, K, smooth=smooth, decomposition=dec)
    notices.extend(rayleigh.notices)
    spec = WeightSpec(W=W, phi=phi, decomposition=dec, psi=psi_list, integrals=integrals, sups=sups,
                      c=c, n=n, unit_potentials=unit_potentials, phi_tilde=phi_tilde, Phi=Phi,
                      Phi_residual=residual, audit=audit, rayleigh=rayleigh, notices=notices)
    if extend:
        spec = replace(spec, extension=assemble_weight(spec, floor=floor))
    return spec


# ------------------------------------------------------------------ extension to radius 2

def smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10 - 15 * t + 6 * t**2)


def bump(r: np.ndarray, a: float, b: float) -> np.ndarray:
    t = (np.asarray(r, dtype=float) - a) / (b - a)
    inside = (t > 0) & (t < 1)
    return np.where(inside, (4 * t * (1 - t)) ** 3, 0.0)


def outer_profile(r: np.ndarray) -> np.ndarray:
    """-(1/2) log(4 - r^2)."""
    return -0.5 * np.log(4.0 - np.asarray(r, dtype=float) ** 2)


@dataclass(frozen=True)
class RadialCorrection:
    """R(r) on [1, MATCH_RADIUS] with (r R')' = r s, R(1) = 0, R'(1) = mu."""
    r: np.ndarray
    R: np.ndarray
    s: np.ndarray
    a1: float
    c1: float


def radial_correction(mu: float, floor: float, need: np.ndarray, kappa: float,
                      samples: int = 20001) -> RadialCorrection:
    """
    Solve for the two bump amplitudes so R matches the outer profile to first order at
    MATCH_RADIUS. ``need`` is sampled on the same radii as the result.
    """
    r = np.linspace(1.0, MATCH_RADIUS, samples)
    inner = bump(r, 1.0, 1.4)
    late = bump(r, 1.72, MATCH_RADIUS)
    base = floor + kappa * need

    def integrate(s: np.ndarray, start: float) -> Tuple[float, float]:
        F = start + cumulative_trapezoid(r * s, r, initial=0.0)
        G = cumulative_trapezoid(F / r, r, initial=0.0)
        return F[-1], G[-1]

    F0, G0 = integrate(base, mu)
    F1, G1 = integrate(inner, 0.0)
    F2, G2 = integrate(late, 0.0)
    target_F = MATCH_RADIUS**2 / (4 - MATCH_RADIUS**2)
    target_G = float(outer_profile(MATCH_RADIUS))
    a1, c1 = np.linalg.solve([[F1, F2], [G1, G2]], [target_F - F0, target_G - G0])
    if a1 < 0 or c1 < 0:
        raise ConstructionError(
            f"radial correction needs negative amplitudes (a1={a1:.3e}, c1={c1:.3e}); "
            f"weight mass/(2 pi) = {mu:.3e} is too large to match the outer profile at r = {MATCH_RADIUS}"
        )
    s = base + a1 * inner + c1 * late
    F = mu + cumulative_trapezoid(r * s, r, initial=0.0)
    R = cumulative_trapezoid(F / r, r, initial=0.0)
    return RadialCorrection(r=r, R=R, s=s, a1=float(a1), c1=float(c1))


def _radial_envelope(values: np.ndarray, radius: np.ndarray, mask: np.ndarray, h: float,
                     r_fine: np.ndarray) -> np.ndarray:
    """Binned max of ``values`` over ``mask`` by radius, widened by one bin each way."""
    edges = np.arange(1.0, MATCH_RADIUS + h, h)
    env = np.zeros(edges.size)
    which = np.clip(((radius[mask] - 1.0) / h).astype(int), 0, edges.size - 1)
    np.maximum.at(env, which, values[mask])
    env = np.maximum(env, np.maximum(np.roll(env, 1), np.roll(env, -1)))
    return env[np.clip(((r_fine - 1.0) / h).astype(int), 0, edges.size - 1)]


def assemble_weight(spec: WeightSpec, floor: Optional[float] = None, kappa: float = 1.5,
                    max_doublings: int = 10) -> Extension:
    """
    Extend Phi to the disc of radius 2, strictly subharmonic off the unit disc and equal to
    -(1/2) log(4 - |z|^2) for |z| >= MATCH_RADIUS.

    The potential is recomputed on a padded grid and split as mu log r + H, mu = mass / 2 pi.
    Off the unit disc the extension is chi H + R(r), chi a cutoff from 1 at r = 1.15 to 0 at
    r = 1.45, and R the radial solution of (r R')' = r s with s built from a floor, the
    compensation kappa * need for -Delta_h(chi H), and two bumps fixing R and R' at the match radius.
    On failure of the node-wise check kappa doubles, at most ``max_doublings`` times.
    """
    grid = spec.grid
    big, (row, col) = grid.padded(OUTER_RADIUS)
    ny, nx = grid.shape
    density = np.zeros(big.shape)
    density[row:row + ny, col:col + nx] = spec.phi_tilde
    Phi_big = greens_potential(density, big).values
    # carry the exact discrete potential inside the original grid; the difference vanishes on its frame
    Phi_big[row:row + ny, col:col + nx] += spec.Phi - convolve_log(spec.phi_tilde, grid)
    h = big.h
    radius = np.abs(big.z)
    mass = float(density.sum() * h**2)
    mu = mass / TWO_PI
    with np.errstate(divide="ignore"):
        log_r = np.where(radius > 0, np.log(np.where(radius > 0, radius, 1.0)), 0.0)
    H = Phi_big - mu * log_r
    chi = 1.0 - smoothstep((radius - 1.15) / 0.3)
    cut = chi * H
    if floor is None:
        near = (radius > 0.9) & (radius < 1.0)
        floor = float(np.clip(density[near].max() if near.any() else 0.0, 0.01, 0.05))
    lap_cut = discrete_laplacian(cut, h)
    shell = (radius > 1.0) & (radius < OUTER_RADIUS - 2 * h) & np.isfinite(lap_cut)

    outside = radius > 1.0
    for doubling in range(max_doublings + 1):
        r_fine = np.linspace(1.0, MATCH_RADIUS, 20001)
        need = _radial_envelope(np.maximum(-np.nan_to_num(lap_cut), 0.0), radius,
                                shell & (radius < MATCH_RADIUS), h, r_fine)
        corr = radial_correction(mu, floor, need, kappa)
        R = np.interp(radius, corr.r, corr.R)
        outer = np.full(radius.shape, np.nan)
        inside_big = radius < OUTER_RADIUS
        outer[inside_big] = outer_profile(radius[inside_big])
        radial = np.where(radius >= MATCH_RADIUS, outer, R)
        values = np.where(outside, cut + radial, Phi_big)
        values[radius >= OUTER_RADIUS] = np.nan
        lap = discrete_laplacian(np.nan_to_num(values), h)
        min_lap = float(np.min(lap[shell])) if shell.any() else float("inf")
        if min_lap > 0:
            report = ExtensionReport(floor=floor, doublings=doubling, min_laplacian=min_lap,
                                     min_phi_ext=float(np.nanmin(values)),
                                     diameter=domain_diameter(float(np.nanmin(values))))
            logger.info("extension built: kappa=%g, min Delta_h = %.3e", kappa, min_lap)
            return Extension(values=values, grid=big, offset=(row, col), report=report)
        logger.debug("extension not subharmonic (min Delta_h = %.3e), doubling kappa", min_lap)
        kappa *= 2
    raise ConstructionError(f"extension not strictly subharmonic after {max_doublings} doublings "
                            f"(min Delta_h = {min_lap:.3e})")


def domain_diameter(min_phi: float) -> float:
    """Diameter bound of {|z| < 2, |w| < exp(-min Phi)}."""
    return math.sqrt((2 * OUTER_RADIUS) ** 2 + (2 * math.exp(-min_phi)) ** 2)


# ------------------------------------------------------------------ witness forms

def _midpoint(values: np.ndarray, h: float) -> Tuple[float, float]:
    """Midpoint sum with an error estimate from the every-other-node subgrid."""
    full = float(values.sum()) * h**2
    coarse = float(values[::2, ::2].sum()) * (2 * h) ** 2
    return full, abs(full - coarse)


@dataclass(frozen=True)
class StageFields:
    """Grid fields shared by the norm and energy computations of one stage."""
    v: np.ndarray
    v_zbar: np.ndarray
    Phi_z: np.ndarray
    tail_density: np.ndarray
    tail_gradient: np.ndarray
    fiber_ratio: float


@dataclass(frozen=True)
class WitnessForm:
    """u_k through its base-domain data; Theta is n_k times the conjugate of Phi_k on the region."""
    k: int
    n_k: int
    region: GridSet
    conjugate: ConjugateResult
    norms: WitnessNorms
    fields: StageFields

    @property
    def v(self) -> np.ndarray:
        return self.fields.v

    @property
    def Theta(self) -> np.ndarray:
        return self.conjugate.theta


def _carrier(mask: GridSet, v: np.ndarray) -> GridSet:
    """The 4-connected piece of the mask holding most of v's mass."""
    labels, count = ndimage.label(mask.mask, structure=FOUR_CONNECTED)
    if count <= 1:
        return mask
    mass = ndimage.sum_labels(v**2, labels, index=np.arange(1, count + 1))
    return mask.with_mask(labels == int(np.argmax(mass)) + 1)


def expected_periods(spec: WeightSpec, k: int, region: GridSet) -> List[float]:
    """2 pi n_k / n_j summed over the removed components D_j (j <= k) inside each hole."""
    out = []
    for hole in region_holes(region):
        total = 0.0
        for j in range(1, k + 1):
            if np.any(hole & spec.decomposition.components[j - 1].mask):
                total += TWO_PI * (spec.n[k - 1] // spec.n[j - 1])
        out.append(total)
    return out


def bessel_ratio(nu: float, R: np.ndarray, terms: Optional[int] = None) -> np.ndarray:
    """I_{nu+1}(R) / I_nu(R) from the backward continued fraction, stable for any order."""
    R = np.asarray(R, dtype=float)
    if np.any(R <= 0):
        raise InvalidInputError("Bessel ratio needs R > 0", field="R")
    if terms is None:
        terms = 64 + int(4 * float(R.max()))
    t = np.zeros_like(R)
    for i in range(terms, 0, -1):
        t = 1.0 / (2.0 * (nu + i) / R + t)
    return t


def fiber_weak_factor(m: int, R: np.ndarray, n: int = 1) -> np.ndarray:
    """
    n^2 <(I - Delta_w)^{-1} g, g> / |g|^2 for g = w^m on the disc |w| < R, Dirichlet on |w| = R.

    Equals n^2 R rho / (2 (m + 1) + R rho) with rho = I_{m+2}(R) / I_{m+1}(R), which tends to
    n^2 R^2 / (4 (m + 1) (m + 2)) as m grows. The factor n is folded in before any product
    can underflow.
    """
    R = np.asarray(R, dtype=float)
    mf = float(m)
    rho = bessel_ratio(mf + 1.0, R)
    nf = float(n)
    return (nf * R * rho) * (nf / (2.0 * (mf + 1.0) + R * rho))


def witness_form(spec: WeightSpec, k: int, period_tol: float = 1e-6) -> WitnessForm:
    """
    Stage-k witness with its fiber-reduced norms.

    |f_k|^2 = pi int |v|^2 and |u_k|^2 = pi int |v|^2 (r e^{-2 Phi} + 4 e^{-4 Phi} |Phi_z|^2) with
    r = n_k / (n_k + 1), from the closed-form radial integrals of |w|^(2 n_k - 2) and |w|^(2 n_k).
    The negative-order norm pairs each fiber component with (I - Delta_w)^{-1} on |w| < e^{-Phi},
    see ``fiber_weak_factor``; Theta_k periods come from the exact discrete flux.
    """
    if not 1 <= k <= spec.stages:
        raise InvalidInputError(f"stage {k} outside 1..{spec.stages}", field="k")
    stage = spec.rayleigh.stages[k - 1]
    n = spec.n[k - 1]
    grid = spec.grid
    h = grid.h
    v = stage.v
    region = _carrier(stage.mask, v)
    expected = expected_periods(spec, k, region)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DbarLabNotice)
        conj = harmonic_conjugate(spec.Phi_partial(k), region, n=float(n), expected_periods=expected,
                                  period_tol=period_tol, harmonic_tol=1e-6, period_method="flux")
    if not conj.single_valued:
        bad = ", ".join(f"hole {p.hole}: {p.period:.9g} vs {p.expected:.9g}" for p in conj.periods
                        if not p.within_tolerance)
        raise PeriodError(f"Theta_{k} is not single-valued modulo 2 pi ({bad})")

    Phi_y, Phi_x = np.gradient(spec.Phi, h)
    Phi_z = 0.5 * (Phi_x - 1j * Phi_y)
    v_y, v_x = np.gradient(v, h)
    T_y, T_x = np.gradient(spec.scaled_tail_potential(k), h)
    fields = StageFields(v=v, v_zbar=0.5 * (v_x + 1j * v_y), Phi_z=Phi_z,
                         tail_density=spec.scaled_tail_density(k), tail_gradient=0.5 * (T_x + 1j * T_y),
                         fiber_ratio=1.0 - 1.0 / (n + 1))

    e2 = np.exp(-2 * spec.Phi)
    weight = fields.fiber_ratio * e2 + 4 * e2**2 * np.abs(Phi_z) ** 2
    v2 = v**2
    f_norm, _ = _midpoint(math.pi * v2, h)
    N0, N0_err = _midpoint(math.pi * v2 * weight, h)
    on = stage.mask.mask
    support = v != 0
    R = np.exp(-spec.Phi[support])
    fiber = (fields.fiber_ratio * e2[support] * fiber_weak_factor(n, R, n)
             + 4 * e2[support] ** 2 * np.abs(Phi_z[support]) ** 2 * fiber_weak_factor(n - 1, R, n))
    scaled_density = np.zeros(grid.shape)
    scaled_density[support] = math.pi * v2[support] * fiber
    scaled, _ = _midpoint(scaled_density, h)
    norms = WitnessNorms(k=k, n_k=n, lam=stage.lam, f_norm_sq=f_norm, N0=N0, N0_err=N0_err,
                         N0_lower=f_norm * float(weight[on].min()), N0_upper=f_norm * float(weight[on].max()),
                         Nneg=scaled * inverse_frequency(n) ** 2, Nneg_scaled=scaled, periods=conj.periods)
    logger.debug("stage %d: n=%d N0=%.6g Nneg_scaled=%.6g", k, n, N0, scaled)
    return WitnessForm(k=k, n_k=n, region=region, conjugate=conj, norms=norms, fields=fields)


# ------------------------------------------------------------------ energy

def newtonian_bound(spec: WeightSpec, k: int) -> float:
    """sup over W_k of (n_k / 4 pi) int |phi~ - phi~_k|(w) / |z - w| dA(w)."""
    vals = convolve_inverse_distance(spec.scaled_tail_density(k), spec.grid) / (4 * math.pi)
    return float(vals[spec.rayleigh.stages[k - 1].mask.mask].max())


def energy(spec: WeightSpec, wf: WitnessForm, notices: Optional[List[str]] = None) -> EnergyReport:
    """
    |dbar u_k|^2 + |dbar* u_k|^2 from the Kohn-Morrey formula with rho = |w|^2 - exp(-2 Phi).

    Boundary term: 2 pi int n_k Phi_{z zbar} e^{-2 Phi} |v|^2 after integrating over the
    boundary circles with the measure d sigma / |grad rho|. Interior term:
    pi int [r e^{-2 Phi} |G|^2 + |v|^2 + 4 e^{-4 Phi} |(Phi_{z zbar} - 2 |Phi_z|^2) v + Phi_z G|^2]
    with G = v_zbar + v n_k (Phi - Phi_k)_zbar.
    """
    F = wf.fields
    h = spec.grid.h
    k, n = wf.k, wf.n_k
    v = F.v
    v2 = v**2
    e2 = np.exp(-2 * spec.Phi)
    n_levi = F.tail_density / 4
    Phi_zzbar = spec.phi_tilde / 4
    G = F.v_zbar + v * F.tail_gradient

    boundary, b_err = _midpoint(2 * math.pi * n_levi * e2 * v2, h)
    mixed = (Phi_zzbar - 2 * np.abs(F.Phi_z) ** 2) * v + F.Phi_z * G
    interior, i_err = _midpoint(
        math.pi * (F.fiber_ratio * e2 * np.abs(G) ** 2 + v2 + 4 * e2**2 * np.abs(mixed) ** 2), h)
    Q, Q_err = boundary + interior, b_err + i_err
    B, B_err = _midpoint(n_levi * v2 + v2 + np.abs(F.v_zbar) ** 2 + np.abs(v * F.tail_gradient) ** 2, h)
    first, _ = _midpoint(n_levi * v2, h)
    on = spec.rayleigh.stages[k - 1].mask.mask
    first_bound = float(F.tail_density[on].max())

    inner = ndimage.binary_erosion(wf.region.mask, structure=FOUR_CONNECTED)
    inner &= ~wf.region.frame()
    Phi_zbar = np.conj(F.Phi_z)
    theta_zbar = wf.conjugate.sample_zbar(h)
    E_theta = float(n) * Phi_zbar + 1j * theta_zbar
    if inner.any():
        gap = float(np.max(np.abs(E_theta - F.tail_gradient)[inner]))
        scale = float(np.max(np.abs(F.tail_gradient)[inner]))
        rep_floor = 64 * np.finfo(float).eps * float(n) * float(np.max(np.abs(Phi_zbar)[inner]))
        theta_scale = 0.5 * float(np.max(np.abs(wf.conjugate.theta_x + 1j * wf.conjugate.theta_y)[inner]))
    else:
        gap = scale = rep_floor = theta_scale = 0.0
    # across tree cuts the samples carry the summed cell circulation of the gradient field
    identity_tol = 1e-4 * max(1.0, scale) + rep_floor + 1e-2 * theta_scale
    identity_ok = gap <= identity_tol

    sup = newtonian_bound(spec, k)
    low = Q_err > 0.1 * Q
    if low:
        _notice(f"stage {k}: energy quadrature error {Q_err:.3e} exceeds 10% of Q = {Q:.3e}",
                notices if notices is not None else [])
    return EnergyReport(k=k, Q=Q, Q_err=Q_err, boundary_term=boundary, interior_term=interior, B=B, B_err=B_err,
                        ratio=Q / B if B > 0 else float("inf"), first_term=first, first_term_bound=first_bound,
                        gradient_identity_gap=gap, gradient_identity_floor=rep_floor,
                        gradient_identity_tol=identity_tol,
                        gradient_identity_ok=identity_ok, newtonian_sup=sup,
                        newtonian_constant=sup / first_bound if first_bound > 0 else None, low_confidence=low)


# ------------------------------------------------------------------ reports

def default_epsilons(N0: np.ndarray, Q: np.ndarray) -> List[float]:
    """Three values below pi / (2 max Q) and one above every N0_k / Q_k."""
    top = float(Q.max())
    return [math.pi / (8 * top), math.pi / (4 * top), math.pi / (2.5 * top), 2 * float(np.max(N0 / Q))]


def threshold_slope(n_k: Sequence[int], thresholds: Sequence[float]) -> Optional[float]:
    """Least-squares slope of log t_k against log n_k over the finite positive thresholds."""
    pts = [(math.log(n), math.log(t)) for n, t in zip(n_k, thresholds) if np.isfinite(t) and t > 0]
    if len(pts) < 2 or len({x for x, _ in pts}) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def violation_report(forms: Sequence[WitnessForm], energies: Sequence[EnergyReport],
                     epsilons: Optional[Sequence[float]] = None,
                     C_values: Optional[Sequence[float]] = None) -> ViolationReport:
    """
    Sweep the deficit |u_k|^2 - eps Q(u_k) - C Nneg_k over eps and C.

    The per-stage thresholds t_k = (N0_k - eps Q_k) / Nneg_k are the largest C that stage k
    defeats. The default C grid runs two decades past the largest finite threshold, so every
    row also shows where the deficit turns negative on this finite run. An epsilon falsifies
    the estimate when the thresholds increase with k at a positive log-log slope against n_k.
    The certificate is taken at the largest defeated C.
    Fewer than two stages, or Nneg not decreasing, gives an inconclusive verdict.
    """
    if len(forms) != len(energies):
        raise InvalidInputError("forms and energies differ in length", field="energies")
    if not forms:
        return ViolationReport(C_values=list(C_values or []), rows=[], verdict="inconclusive")
    ks = [f.k for f in forms]
    N0 = np.array([f.norms.N0 for f in forms])
    Q = np.array([e.Q for e in energies])
    Nneg = np.array([f.norms.Nneg for f in forms])
    n_k = [f.n_k for f in forms]
    eps_list = list(epsilons) if epsilons is not None else default_epsilons(N0, Q)

    with np.errstate(divide="ignore"):
        thresholds = {eps: np.where(Nneg > 0, (N0 - eps * Q) / Nneg, np.inf) for eps in eps_list}
    if C_values is None:
        finite = [t for ts in thresholds.values() for t in ts if np.isfinite(t) and t > 1]
        top = int(math.floor(math.log10(max(finite)))) if finite else 2
        C_values = [10.0**p for p in range(0, min(max(top, 0) + 2, 300) + 1)]
    C_values = list(C_values)

    decaying = len(forms) >= 2 and bool(np.all(np.diff(Nneg) < 0))
    rows = []
    for eps in eps_list:
        base = N0 - eps * Q
        deficits = [base - C * Nneg for C in C_values]
        maxima = [float(d.max()) for d in deficits]
        ts = thresholds[eps]
        growing = len(ts) >= 2 and bool(np.all(np.diff(ts) > 0))
        slope = threshold_slope(n_k, ts)
        defeated = [i for i, m in enumerate(maxima) if m > 0]
        falsified = decaying and growing and slope is not None and slope > 0 and bool(defeated)
        top_C = defeated[-1] if defeated else None
        best = int(np.argmax(deficits[top_C])) if top_C is not None else 0
        rows.append(ViolationRow(epsilon=eps, max_deficits=maxima, thresholds=[float(t) for t in ts],
                                 threshold_slope=slope, defeated_up_to=C_values[top_C] if top_C is not None else None,
                                 falsified=falsified, k=ks[best] if falsified else None,
                                 deficit=float(deficits[top_C][best]) if falsified else None))
    hits = [r for r in rows if r.falsified]
    if not decaying:
        verdict, certificate = "inconclusive", None
    elif hits:
        top_row = max(hits, key=lambda r: r.epsilon)
        verdict, certificate = "falsified", (top_row.epsilon, top_row.k, top_row.deficit)
    else:
        verdict, certificate = "not detected", None
    logger.info("compactness estimate sweep: %s", verdict)
    return ViolationReport(C_values=C_values, rows=rows, verdict=verdict, certificate=certificate)


def catlin_sanity(spec: WeightSpec, forms: Sequence[WitnessForm], energies: Sequence[EnergyReport],
                  q: int = 1) -> List[CatlinRow]:
    """(q / D^2) |u_k|^2 <= e Q(u_k) with D the diameter bound of the Hartogs domain."""
    if spec.extension is None:
        raise InvalidInputError("the diameter needs the radius-2 extension", field="spec")
    D = spec.extension.report.diameter
    return [CatlinRow(k=f.k, lhs=q * f.norms.N0 / D**2, rhs=math.e * e.Q,
                      ok=hormander_bound(f.norms.N0, e.Q, q, D))
            for f, e in zip(forms, energies)]


# ------------------------------------------------------------------ pipeline

@dataclass
class HartogsRun:
    spec: WeightSpec
    forms: List[WitnessForm]
    energies: List[EnergyReport]
    violation: ViolationReport
    catlin: List[CatlinRow]
    notices: List[str] = field(default_factory=list)

    @property
    def energy_uniform(self) -> bool:
        """max_k B_k / min_k max(B_k, 1) <= 10."""
        if not self.energies:
            return True
        Bs = [e.B for e in self.energies]
        return max(Bs) / min(max(b, 1.0) for b in Bs) <= 10

    def table(self) -> List[dict]:
        return [{"k": f.k, "n_k": f.n_k, "lam": f.norms.lam, "N0": f.norms.N0, "Q": e.Q, "B": e.B,
                 "Nneg": f.norms.Nneg, "Nneg_scaled": f.norms.Nneg_scaled}
                for f, e in zip(self.forms, self.energies)]


def run_hartogs(W: GridSet, K: int, epsilons: Optional[Sequence[float]] = None, smooth: bool = False,
                period_tol: float = 1e-6) -> HartogsRun:
    """Weight, witnesses for k = 1..K, energies, the epsilon sweep and the Catlin checks."""
    spec = build_weight_spec(W, K, smooth=smooth)
    notices = list(spec.notices)
    forms = [witness_form(spec, k, period_tol=period_tol) for k in range(1, spec.stages + 1)]
    energies = [energy(spec, wf, notices) for wf in forms]
    report = violation_report(forms, energies, epsilons)
    return HartogsRun(spec=spec, forms=forms, energies=energies, violation=report,
                      catlin=catlin_sanity(spec, forms, energies), notices=notices)
