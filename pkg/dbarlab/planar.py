"""
Planar potential theory on rasterized sets.

Component decomposition of D minus W, truncated sets W_k, Dirichlet ground
states (Rayleigh functions), logarithmic Green potentials and harmonic
conjugates with period verification.

Grid convention: node (i, j) sits at x = x0 + j*h, y = y0 + i*h; arrays are
indexed [row, column] = [y, x].
"""
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.interpolate import RectBivariateSpline
from scipy.signal import fftconvolve
from scipy.sparse.csgraph import breadth_first_order
from scipy.sparse.linalg import eigsh, factorized, spsolve
from scipy.special import jn_zeros

from .errors import DbarLabNotice, DegenerateDomainError, HarmonicityError, InvalidInputError
from .models import PeriodReport, RayleighEntry

logger = logging.getLogger(__name__)

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)
J0_FIRST_ZERO = float(jn_zeros(0, 1)[0])


@dataclass(frozen=True)
class GridSet:
    """
    Rasterized compact planar set.

    Attributes:
        mask: boolean array (rows = y, columns = x); True marks nodes in the set
        h: grid spacing
        origin: (x0, y0), coordinates of node (0, 0)
    """
    mask: np.ndarray
    h: float
    origin: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.h > 0:
            raise InvalidInputError(f"grid spacing must be positive, got {self.h}", field="h")
        m = np.asarray(self.mask, dtype=bool)
        if m.ndim != 2 or min(m.shape) < 1:
            raise InvalidInputError(f"mask must be a non-empty 2-D array, got shape {m.shape}", field="mask")
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def box(cls, xmin: float, xmax: float, ymin: float, ymax: float, h: float) -> "GridSet":
        """Empty set on the grid covering [xmin, xmax] x [ymin, ymax], endpoints included."""
        nx = int(round((xmax - xmin) / h)) + 1
        ny = int(round((ymax - ymin) / h)) + 1
        return cls(np.zeros((ny, nx), dtype=bool), h, (xmin, ymin))

    @classmethod
    def unit_box(cls, N: int, radius: float = 1.0) -> "GridSet":
        """Empty set on [-radius, radius]^2 with spacing 1/N."""
        return cls.box(-radius, radius, -radius, radius, 1.0 / N)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.h * np.arange(self.shape[1])

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.h * np.arange(self.shape[0])

    @property
    def z(self) -> np.ndarray:
        """Complex node coordinates, shape of the mask."""
        X, Y = np.meshgrid(self.x, self.y)
        return X + 1j * Y

    def with_mask(self, mask: np.ndarray) -> "GridSet":
        return GridSet(np.asarray(mask, dtype=bool), self.h, self.origin)

    def empty(self) -> "GridSet":
        return self.with_mask(np.zeros(self.shape, dtype=bool))

    def count(self) -> int:
        return int(self.mask.sum())

    def area(self) -> float:
        return self.count() * self.h**2

    def integrate(self, values: np.ndarray) -> float:
        """Midpoint-rule integral of ``values`` over the set."""
        return float(np.sum(np.where(self.mask, values, 0.0)) * self.h**2)

    def frame(self) -> np.ndarray:
        f = np.zeros(self.shape, dtype=bool)
        f[0, :] = f[-1, :] = f[:, 0] = f[:, -1] = True
        return f

    def unit_disc(self) -> "GridSet":
        """The open unit disc D rasterized on this grid."""
        return self.with_mask(np.abs(self.z) < 1.0)

    def padded(self, radius: float) -> Tuple["GridSet", Tuple[int, int]]:
        """
        Empty grid with the same spacing covering at least [-radius, radius]^2,
        aligned with this one. Returns it with the (row, column) offset of this grid inside it.
        """
        x0, y0 = self.origin
        left = int(math.ceil((x0 + radius) / self.h - 1e-9))
        below = int(math.ceil((y0 + radius) / self.h - 1e-9))
        right = int(math.ceil((radius - self.x[-1]) / self.h - 1e-9))
        above = int(math.ceil((radius - self.y[-1]) / self.h - 1e-9))
        left, below, right, above = (max(0, v) for v in (left, below, right, above))
        ny, nx = self.shape
        big = GridSet(np.zeros((ny + below + above, nx + left + right), dtype=bool), self.h,
                      (x0 - left * self.h, y0 - below * self.h))
        return big, (below, left)

    def save(self, path: str):
        """Write the mask as rows of 0/1 plus a JSON sidecar ``path + '.json'`` with h and origin."""
        with open(path, "w", encoding="utf-8") as f:
            for row in self.mask[::-1]:
                f.write("".join("1" if v else "0" for v in row) + "\n")
        with open(path + ".json", "w", encoding="utf-8") as f:
            json.dump({"h": self.h, "origin": list(self.origin)}, f)

    @classmethod
    def load(cls, path: str, h: Optional[float] = None, origin: Optional[Tuple[float, float]] = None) -> "GridSet":
        """
        Read a plain-text 0/1 mask. The top text row is the largest y.

        The sidecar ``path + '.json'`` supplies h and origin; without one the mask is
        centred on 0 with ``h`` (default: 2 / (columns - 1)).
        """
        try:
            with open(path, "r", encoding="utf-8") as f:
                rows = [line.strip() for line in f if line.strip()]
        except OSError as e:
            raise InvalidInputError(f"cannot read mask: {e}", field="mask") from e
        if not rows:
            raise InvalidInputError("mask file is empty", field="mask")
        if len({len(r) for r in rows}) != 1 or any(c not in "01" for r in rows for c in r):
            raise InvalidInputError("mask rows must be equal-length strings of 0/1", field="mask")
        mask = np.array([[c == "1" for c in r] for r in rows[::-1]], dtype=bool)
        try:
            with open(path + ".json", "r", encoding="utf-8") as f:
                side = json.load(f)
            h = float(side["h"])
            origin = tuple(side["origin"])
        except FileNotFoundError:
            ny, nx = mask.shape
            h = h or 2.0 / max(nx - 1, 1)
            origin = origin or (-(nx - 1) * h / 2, -(ny - 1) * h / 2)
        except (KeyError, ValueError, TypeError) as e:
            raise InvalidInputError(f"malformed sidecar: {e}", field="mask") from e
        return cls(mask, h, origin)


# ------------------------------------------------------------------ shape builders

def disc_mask(grid: GridSet, r: float, center: complex = 0j) -> GridSet:
    return grid.with_mask(np.abs(grid.z - center) < r)


def closed_disc_mask(grid: GridSet, r: float, center: complex = 0j) -> GridSet:
    return grid.with_mask(np.abs(grid.z - center) <= r)


def rectangle_mask(grid: GridSet, width: float, height: float, corner: complex = 0j) -> GridSet:
    """Open rectangle (corner, corner + width + i*height)."""
    z = grid.z - corner
    return grid.with_mask((z.real > 0) & (z.real < width) & (z.imag > 0) & (z.imag < height))


def square_mask(grid: GridSet, side: float, corner: complex = 0j) -> GridSet:
    return rectangle_mask(grid, side, side, corner)


def annulus_mask(grid: GridSet, r_in: float, r_out: float, center: complex = 0j) -> GridSet:
    a = np.abs(grid.z - center)
    return grid.with_mask((a >= r_in) & (a <= r_out))


def swiss_cheese_mask(
    grid: GridSet,
    radius: float = 0.8,
    holes: Tuple[Tuple[complex, float], ...] = ((0.35 + 0.3j, 0.16), (-0.4 + 0.25j, 0.13), (-0.2 - 0.42j, 0.11), (0.38 - 0.3j, 0.09)),
) -> GridSet:
    """Closed disc of ``radius`` with open discs removed: a compact W inside D."""
    z = grid.z
    m = np.abs(z) <= radius
    for c, r in holes:
        m &= np.abs(z - c) >= r
    return grid.with_mask(m)


def shape_grid(name: str, N: int) -> GridSet:
    """Built-in shapes at spacing 1/N: square, disc, rectangle, annulus, swiss-cheese."""
    if name == "square":
        return square_mask(GridSet.box(0.0, 1.0, 0.0, 1.0, 1.0 / N), 1.0)
    if name == "rectangle":
        return rectangle_mask(GridSet.box(0.0, 2.0, 0.0, 1.0, 1.0 / N), 2.0, 1.0)
    if name == "disc":
        return disc_mask(GridSet.unit_box(N), 1.0)
    if name == "annulus":
        return annulus_mask(GridSet.unit_box(N), 0.3, 0.7)
    if name in ("swiss-cheese", "swiss"):
        return swiss_cheese_mask(GridSet.unit_box(N))
    raise InvalidInputError(f"unknown shape '{name}'", field="shape")


# ------------------------------------------------------------------ components

@dataclass
class ComponentDecomposition:
    """
    Connected components D_j of D minus W and the truncated sets W_k.

    ``components[j-1]`` is D_j; ``W_masks[k-1]`` is W_k = D minus (D_1 u ... u D_k).
    """
    W: GridSet
    disc: GridSet
    components: List[GridSet]
    W_masks: List[GridSet]

    @property
    def count(self) -> int:
        return len(self.components)


def complement_components(W: GridSet) -> ComponentDecomposition:
    """
    Label the components of D minus W (4-connectivity), largest first.

    Ties in size are broken by the smallest (row, column) seed.
    """
    D = W.unit_disc()
    if np.any(W.mask & ~D.mask):
        raise InvalidInputError("W must lie inside the open unit disc", field="W")
    labels, count = ndimage.label(D.mask & ~W.mask, structure=FOUR_CONNECTED)
    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=count + 1)
    _, seeds = np.unique(flat, return_index=True)
    order = sorted(range(1, count + 1), key=lambda lab: (-sizes[lab], seeds[lab]))
    components = [W.with_mask(labels == lab) for lab in order]
    W_masks = []
    removed = np.zeros(W.shape, dtype=bool)
    for comp in components:
        removed |= comp.mask
        W_masks.append(W.with_mask(D.mask & ~removed))
    logger.debug("complement has %d components", count)
    return ComponentDecomposition(W=W, disc=D, components=components, W_masks=W_masks)


# ------------------------------------------------------------------ Laplacian and eigenpairs

def lap1d(n: int, h: float) -> sp.csr_matrix:
    """1-D negative Laplacian with homogeneous Dirichlet ends."""
    e = np.ones(n)
    return sp.spdiags([-e, 2 * e, -e], [-1, 0, 1], n, n, format="csr") / h**2


def lap2d(ny: int, nx: int, h: float) -> sp.csr_matrix:
    """5-point negative Laplacian on an ny x nx grid, row-major unknowns."""
    return (sp.kron(sp.identity(ny), lap1d(nx, h)) + sp.kron(lap1d(ny, h), sp.identity(nx))).tocsr()


def masked_laplacian(grid: GridSet, unknown: np.ndarray) -> Tuple[sp.csr_matrix, np.ndarray]:
    """Restriction of the grid Laplacian to ``unknown`` nodes; all other nodes are Dirichlet zeros."""
    idx = np.flatnonzero(unknown.ravel())
    L = lap2d(*grid.shape, grid.h)
    return L[idx][:, idx].tocsr(), idx


def discrete_laplacian(values: np.ndarray, h: float) -> np.ndarray:
    """Delta_h on interior nodes; the frame is set to NaN."""
    out = np.full(values.shape, np.nan)
    out[1:-1, 1:-1] = (
        values[2:, 1:-1] + values[:-2, 1:-1] + values[1:-1, 2:] + values[1:-1, :-2] - 4 * values[1:-1, 1:-1]
    ) / h**2
    return out


@dataclass
class DirichletEig:
    """
    Smallest Dirichlet eigenpair of a raster set.

    Attributes:
        lam: eigenvalue estimate (length^-2)
        v: eigenfunction on the full grid, zero off the set, discrete L2 norm 1
        residual: discrete L2 norm of (-Delta_h - lam) v
    """
    lam: float
    v: np.ndarray
    residual: float
    grid: GridSet


def _jacobi_pass(v: np.ndarray, unknown: np.ndarray, omega: float = 0.5) -> np.ndarray:
    p = np.pad(v, 1)
    avg = 0.25 * (p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2])
    return np.where(unknown, v + omega * (avg - v), 0.0)


def dirichlet_ground_state(mask: GridSet, smooth: bool = False) -> DirichletEig:
    """
    Smallest eigenpair of the 5-point Dirichlet Laplacian on the mask.

    Unknowns are mask nodes off the grid frame. Shift-invert Lanczos around 0.

    Args:
        mask (GridSet): the set
        smooth (bool): apply one Jacobi mollification pass to the eigenfunction

    Returns:
        DirichletEig
    """
    unknown = mask.mask & ~mask.frame()
    if not unknown.any():
        raise DegenerateDomainError("mask has no interior node", field="mask")
    A, idx = masked_laplacian(mask, unknown)
    size = idx.size
    if size <= 400:
        vals, vecs = np.linalg.eigh(A.toarray())
        lam, vec = float(vals[0]), vecs[:, 0]
    else:
        vals, vecs = eigsh(A, k=1, sigma=0.0, which="LM", v0=np.ones(size), tol=0.0)
        vec = vecs[:, 0]
        lam = float(vec @ (A @ vec) / (vec @ vec))
    h = mask.h
    vec = vec / (h * np.linalg.norm(vec))
    if vec.sum() < 0:
        vec = -vec
    residual = float(h * np.linalg.norm(A @ vec - lam * vec))
    v = np.zeros(mask.shape)
    v.ravel()[idx] = vec
    if smooth:
        v = _jacobi_pass(v, unknown)
        v /= h * np.linalg.norm(v)
    logger.debug("ground state on %d nodes: lambda=%.6f residual=%.2e", size, lam, residual)
    return DirichletEig(lam=lam, v=v, residual=residual, grid=mask)


def inscribed_disc_bound(W: GridSet) -> Optional[float]:
    """
    Continuum eigenvalue of the largest disc inside W's raster interior, or None
    when the raster interior is empty.
    """
    dist = ndimage.distance_transform_edt(W.mask) * W.h
    r = float(dist.max()) - W.h
    if r <= 0:
        return None
    return J0_FIRST_ZERO**2 / r**2


@dataclass
class RayleighStage:
    k: int
    mask: GridSet
    eig: DirichletEig

    @property
    def lam(self) -> float:
        return self.eig.lam

    @property
    def v(self) -> np.ndarray:
        return self.eig.v


@dataclass
class RayleighSequence:
    """Ground states on W_1, W_2, ... with the boundedness report."""
    stages: List[RayleighStage]
    decomposition: ComponentDecomposition
    lambda_bound: Optional[float]
    truncated: bool = False
    notices: List[str] = field(default_factory=list)

    @property
    def lambdas(self) -> List[float]:
        return [s.lam for s in self.stages]

    @property
    def max_lambda(self) -> float:
        return max(self.lambdas) if self.stages else float("nan")

    @property
    def monotone(self) -> bool:
        lams = self.lambdas
        return all(b >= a - 1e-9 * max(1.0, abs(a)) for a, b in zip(lams, lams[1:]))

    @property
    def lambda_bounded(self) -> bool:
        """Computable surrogate of lambda(W_k) <= lambda(int_f W) < infinity."""
        return self.lambda_bound is not None and bool(self.stages) and self.max_lambda <= self.lambda_bound

    def entries(self) -> List[RayleighEntry]:
        return [RayleighEntry(k=s.k, lam=s.lam, nodes=s.mask.count(), residual=s.eig.residual) for s in self.stages]


def _notice(message: str, sink: List[str]):
    sink.append(message)
    warnings.warn(message, DbarLabNotice, stacklevel=3)


def rayleigh_sequence(W: GridSet, K: int, smooth: bool = False,
                      decomposition: Optional[ComponentDecomposition] = None) -> RayleighSequence:
    """
    Dirichlet ground states on W_1 ... W_K.

    K above the component count is clamped; a W_k without interior nodes stops the
    sequence at the last valid stage. Both cases emit a notice.
    """
    if K < 0:
        raise InvalidInputError("K must be non-negative", field="K")
    dec = decomposition or complement_components(W)
    notices: List[str] = []
    truncated = False
    if K > dec.count:
        _notice(f"requested {K} stages but D minus W has {dec.count} components; using {dec.count}", notices)
        K, truncated = dec.count, True
    stages = []
    for k in range(1, K + 1):
        try:
            eig = dirichlet_ground_state(dec.W_masks[k - 1], smooth=smooth)
        except DegenerateDomainError:
            _notice(f"W_{k} has no interior node; sequence truncated to {k - 1} stages", notices)
            truncated = True
            break
        stages.append(RayleighStage(k=k, mask=dec.W_masks[k - 1], eig=eig))
    return RayleighSequence(stages=stages, decomposition=dec, lambda_bound=inscribed_disc_bound(W),
                            truncated=truncated, notices=notices)


# ------------------------------------------------------------------ Green potentials

def log_cell_mean(h: float) -> float:
    """Mean of log|z| over the square cell [-h/2, h/2]^2."""
    s = h / 2
    return math.log(s) + 0.5 * math.log(2.0) - 1.5 + math.pi / 4


def inverse_distance_cell_mean(h: float) -> float:
    """Mean of 1/|z| over the square cell [-h/2, h/2]^2."""
    s = h / 2
    return 2.0 * math.asinh(1.0) / s


def _offset_kernel(grid: GridSet, singular_value: float, radial) -> np.ndarray:
    ny, nx = grid.shape
    dy = grid.h * np.arange(-(ny - 1), ny)
    dx = grid.h * np.arange(-(nx - 1), nx)
    r = np.hypot(*np.meshgrid(dx, dy))
    with np.errstate(divide="ignore"):
        kernel = radial(r)
    kernel[ny - 1, nx - 1] = singular_value
    return kernel


def convolve_log(f: np.ndarray, grid: GridSet) -> np.ndarray:
    """Midpoint quadrature of int G(z - w) f(w) dA(w), G = log|z| / (2 pi)."""
    kernel = _offset_kernel(grid, log_cell_mean(grid.h) / (2 * math.pi), lambda r: np.log(r) / (2 * math.pi))
    return fftconvolve(f, kernel, mode="same") * grid.h**2


def convolve_inverse_distance(f: np.ndarray, grid: GridSet) -> np.ndarray:
    """Midpoint quadrature of int f(w) / |z - w| dA(w)."""
    kernel = _offset_kernel(grid, inverse_distance_cell_mean(grid.h), lambda r: 1.0 / r)
    return fftconvolve(f, kernel, mode="same") * grid.h**2


@dataclass
class GreenPotential:
    """Phi = G * f on the grid, with residual map Delta_h Phi - f (NaN on the frame)."""
    values: np.ndarray
    residual: np.ndarray
    source: np.ndarray
    grid: GridSet


def greens_potential(f: np.ndarray, grid: GridSet) -> GreenPotential:
    """
    Logarithmic potential of the grid density ``f``.

    Args:
        f (np.ndarray): samples, zero on the grid frame
        grid (GridSet): grid carrying spacing and origin

    Returns:
        GreenPotential
    """
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise InvalidInputError(f"density shape {f.shape} != grid shape {grid.shape}", field="f")
    if np.any(grid.frame() & (f != 0)):
        raise InvalidInputError("density must vanish on the grid frame", field="f")
    values = convolve_log(f, grid)
    return GreenPotential(values=values, residual=discrete_laplacian(values, grid.h) - f, source=f, grid=grid)


def _dirichlet_system(grid: GridSet) -> Tuple[sp.csr_matrix, np.ndarray]:
    return masked_laplacian(grid, ~grid.frame())


def _dirichlet_rhs(f: np.ndarray, boundary: np.ndarray, grid: GridSet,
                   idx: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    g = np.where(grid.frame(), boundary, 0.0)
    # -Delta_h u = -f  with frame values moved to the right-hand side
    p = np.pad(g, 1)
    neighbour_sum = p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2]
    return g, (-f + neighbour_sum / grid.h**2).ravel()[idx]


def poisson_dirichlet(f: np.ndarray, boundary: np.ndarray, grid: GridSet) -> np.ndarray:
    """Solve Delta_h u = f on interior nodes with u = boundary on the frame (sparse direct)."""
    A, idx = _dirichlet_system(grid)
    u, rhs = _dirichlet_rhs(f, boundary, grid, idx)
    u.ravel()[idx] = spsolve(A.tocsc(), rhs)
    return u


def discrete_green_potentials(densities: List[np.ndarray], grid: GridSet) -> List[GreenPotential]:
    """
    Potentials with Delta_h Phi = f exactly on every interior node.

    Frame values come from the logarithmic kernel; the interior is a Dirichlet solve
    sharing one sparse factorization across all densities. The node sum h^2 sum f over a
    set enclosed by the grid then equals the discrete flux of Phi out of it.
    """
    A, idx = _dirichlet_system(grid)
    solve = factorized(A.tocsc())
    out = []
    for f in densities:
        frame_values = greens_potential(f, grid).values
        u, rhs = _dirichlet_rhs(np.asarray(f, dtype=float), frame_values, grid, idx)
        u.ravel()[idx] = solve(rhs)
        out.append(GreenPotential(values=u, residual=discrete_laplacian(u, grid.h) - f, source=f, grid=grid))
    return out


# ------------------------------------------------------------------ harmonic conjugates

@dataclass
class ConjugateResult:
    """Theta on the region (NaN elsewhere), its gradient field and the period report."""
    theta: np.ndarray
    theta_x: np.ndarray
    theta_y: np.ndarray
    periods: List[PeriodReport]
    harmonic_residual: float
    harmonic_relative: float = 0.0

    @property
    def single_valued(self) -> bool:
        return all(p.within_tolerance for p in self.periods)

    def sample_zbar(self, h: float) -> np.ndarray:
        """
        Theta_zbar read off the Theta samples.

        Each neighbour difference of Theta is compared, modulo 2 pi, with the trapezoid
        increment of the gradient field; the mismatches of the two edges at a node correct
        the field there. NaN where a neighbour lies outside the region.
        """
        theta = self.theta
        estimates = []
        for axis, field in ((1, self.theta_x), (0, self.theta_y)):
            forward = np.roll(theta, -1, axis=axis) - theta
            backward = theta - np.roll(theta, 1, axis=axis)
            expected_forward = 0.5 * h * (field + np.roll(field, -1, axis=axis))
            expected_backward = 0.5 * h * (field + np.roll(field, 1, axis=axis))
            mismatch = _wrap_angle(forward - expected_forward) + _wrap_angle(backward - expected_backward)
            estimates.append(field + mismatch / (2 * h))
        return 0.5 * (estimates[0] + 1j * estimates[1])


def _wrap_angle(a: np.ndarray) -> np.ndarray:
    return np.remainder(a + math.pi, 2 * math.pi) - math.pi


def region_holes(region: GridSet) -> List[np.ndarray]:
    """Complement components of the region that do not reach the grid frame, in label order."""
    labels, count = ndimage.label(~region.mask, structure=FOUR_CONNECTED)
    touching = set(np.unique(labels[region.frame()]))
    return [labels == lab for lab in range(1, count + 1) if lab not in touching]


def _loop_around(hole: np.ndarray, region: GridSet, max_offset: int = 24) -> Optional[np.ndarray]:
    """Region nodes at distance ~offset from the hole, ordered counter-clockwise; None if no ring fits."""
    dist = ndimage.distance_transform_edt(~hole)
    rows, cols = np.nonzero(hole)
    cy, cx = rows.mean(), cols.mean()
    for offset in range(max_offset, 0, -1):
        ring = (dist >= offset) & (dist < offset + 1)
        band = dist < offset + 1
        if np.all(region.mask[band & ~hole]) and ring.any():
            r, c = np.nonzero(ring)
            order = np.argsort(np.arctan2(r - cy, c - cx), kind="stable")
            return np.stack([r[order], c[order]], axis=1)
    return None


_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(6)


def _loop_period(spline: RectBivariateSpline, loop: np.ndarray, grid: GridSet, n: float) -> float:
    pts = grid.origin[0] + grid.h * loop[:, 1] + 1j * (grid.origin[1] + grid.h * loop[:, 0])
    a, b = pts, np.roll(pts, -1)
    t = 0.5 * (_GAUSS_NODES + 1.0)
    q = a[:, None] + (b - a)[:, None] * t[None, :]
    phi_x = spline.ev(q.imag, q.real, dx=0, dy=1)
    phi_y = spline.ev(q.imag, q.real, dx=1, dy=0)
    d = (b - a)[:, None]
    integrand = -phi_y * d.real + phi_x * d.imag
    return float(n * np.sum(integrand * (0.5 * _GAUSS_WEIGHTS)[None, :]))


def _flux_period(Phi: np.ndarray, hole: np.ndarray, n: float) -> float:
    """n * sum of (Phi_q - Phi_p) over grid edges from p in the hole to q outside it."""
    total = 0.0
    for axis in (0, 1):
        for step in (1, -1):
            leaving = hole & ~np.roll(hole, -step, axis=axis)
            total += float(np.sum(np.roll(Phi, -step, axis=axis)[leaving] - Phi[leaving]))
    return n * total


def harmonic_conjugate(
    Phi: np.ndarray,
    region: GridSet,
    n: float = 1.0,
    basepoint: Optional[Tuple[int, int]] = None,
    harmonic_tol: float = 1e-2,
    period_tol: float = 1e-6,
    expected_periods: Optional[List[float]] = None,
    period_method: str = "loop",
) -> ConjugateResult:
    """
    Harmonic conjugate of n * Phi on a connected raster region.

    Theta integrates n(-Phi_y dx + Phi_x dy) along a breadth-first spanning tree
    from the basepoint. Periods around each hole come from closed-loop integration
    of the same differential on a ring polygon, with Gauss quadrature on a bicubic
    spline of Phi (``"loop"``), or from the discrete flux of Phi across the edges
    leaving the hole (``"flux"``). The flux period is exact for potentials with
    Delta_h Phi equal to their density, such as ``discrete_green_potentials``.

    Args:
        Phi (np.ndarray): samples on the full grid, finite on the region
        region (GridSet): connected region where Phi is harmonic
        n (float): multiplier
        basepoint (tuple): (row, column) node in the region; default first in row-major order
        harmonic_tol (float): bound on max |Delta_h Phi| over the region interior, relative to the
            largest |Phi_xx| + |Phi_yy| there
        period_tol (float): tolerance on the distance of each period to 2*pi*Z, or on the
            relative deviation from ``expected_periods`` when given
        expected_periods (list): optional expected period per hole, in hole order
        period_method (str): ``"loop"`` or ``"flux"``

    Returns:
        ConjugateResult
    """
    Phi = np.asarray(Phi, dtype=float)
    if Phi.shape != region.shape:
        raise InvalidInputError("Phi and region shapes differ", field="Phi")
    if period_method not in ("loop", "flux"):
        raise InvalidInputError(f"unknown period method '{period_method}'", field="period_method")
    if not region.mask.any():
        raise DegenerateDomainError("empty region", field="region")
    if not np.all(np.isfinite(Phi[region.mask])):
        raise InvalidInputError("Phi must be finite on the region", field="Phi")
    _, parts = ndimage.label(region.mask, structure=FOUR_CONNECTED)
    if parts != 1:
        raise InvalidInputError(f"region has {parts} connected pieces", field="region")

    safe = np.where(np.isfinite(Phi), Phi, 0.0)
    inner = ndimage.binary_erosion(region.mask, structure=FOUR_CONNECTED) & ~region.frame()
    lap = discrete_laplacian(safe, region.h)
    residual = float(np.max(np.abs(lap[inner]))) if inner.any() else 0.0
    # residual is measured against the size of the one-directional second differences
    d2x = np.zeros_like(safe)
    d2y = np.zeros_like(safe)
    d2x[:, 1:-1] = (safe[:, 2:] - 2 * safe[:, 1:-1] + safe[:, :-2]) / region.h**2
    d2y[1:-1, :] = (safe[2:, :] - 2 * safe[1:-1, :] + safe[:-2, :]) / region.h**2
    scale = float(np.max(np.abs(d2x[inner]) + np.abs(d2y[inner]))) if inner.any() else 0.0
    relative = residual / max(scale, 1e-300)
    if relative > harmonic_tol:
        raise HarmonicityError(
            f"max |Delta_h Phi| = {residual:.3e} exceeds {harmonic_tol:g} x second-difference scale {scale:.3e}",
            field="Phi",
        )

    phi_y, phi_x = np.gradient(safe, region.h)
    theta_x, theta_y = -n * phi_y, n * phi_x

    ny, nx = region.shape
    ids = -np.ones(region.shape, dtype=np.int64)
    cells = np.flatnonzero(region.mask.ravel())
    ids.ravel()[cells] = np.arange(cells.size)
    rows_i, cols_i = [], []
    for a, b in ((ids[:, :-1], ids[:, 1:]), (ids[:-1, :], ids[1:, :])):
        ok = (a >= 0) & (b >= 0)
        rows_i.append(a[ok])
        cols_i.append(b[ok])
    r = np.concatenate(rows_i)
    c = np.concatenate(cols_i)
    graph = sp.coo_matrix((np.ones(r.size), (r, c)), shape=(cells.size, cells.size)).tocsr()
    if basepoint is None:
        start = 0
    else:
        if not region.mask[basepoint]:
            raise InvalidInputError("basepoint is not in the region", field="basepoint")
        start = int(ids[basepoint])
    order, pred = breadth_first_order(graph, start, directed=False, return_predecessors=True)

    flat_tx, flat_ty = theta_x.ravel()[cells], theta_y.ravel()[cells]
    flat_rows, flat_cols = np.divmod(cells, nx)
    values = np.zeros(cells.size)
    h = region.h
    for node in order[1:]:
        p = pred[node]
        if flat_rows[node] == flat_rows[p]:
            step = (flat_cols[node] - flat_cols[p]) * h
            values[node] = values[p] + 0.5 * (flat_tx[node] + flat_tx[p]) * step
        else:
            step = (flat_rows[node] - flat_rows[p]) * h
            values[node] = values[p] + 0.5 * (flat_ty[node] + flat_ty[p]) * step
    theta = np.full(region.shape, np.nan)
    theta.ravel()[cells] = values

    periods: List[PeriodReport] = []
    holes = region_holes(region)
    if holes:
        spline = RectBivariateSpline(region.y, region.x, safe, kx=3, ky=3) if period_method == "loop" else None
        for i, hole in enumerate(holes):
            if spline is None:
                rim = ndimage.binary_dilation(hole, structure=FOUR_CONNECTED)
                if not np.all(np.isfinite(Phi[rim])):
                    raise InvalidInputError(f"Phi is not finite next to hole {i}", field="Phi")
                period = _flux_period(Phi, hole, n)
            else:
                loop = _loop_around(hole, region)
                if loop is None:
                    raise InvalidInputError(f"region too thin around hole {i} for a period loop", field="region")
                period = _loop_period(spline, loop, region, n)
            k = int(round(period / (2 * math.pi)))
            distance = abs(period - 2 * math.pi * k)
            expected = expected_periods[i] if expected_periods is not None and i < len(expected_periods) else None
            if expected is not None:
                rel = abs(period - expected) / max(abs(expected), 2 * math.pi)
                ok = rel <= period_tol
            else:
                rel = None
                ok = distance <= period_tol * 2 * math.pi
            periods.append(PeriodReport(hole=i, nodes=int(hole.sum()), period=period, nearest_multiple=k,
                                        distance_to_lattice=distance, expected=expected,
                                        relative_deviation=rel, within_tolerance=ok))
    bad = [p for p in periods if not p.within_tolerance]
    if bad:
        warnings.warn(
            "conjugate not single-valued after exponentiation: "
            + ", ".join(f"hole {p.hole} period {p.period:.9g}" for p in bad),
            DbarLabNotice,
            stacklevel=2,
        )
    return ConjugateResult(theta=theta, theta_x=theta_x, theta_y=theta_y, periods=periods, harmonic_residual=residual,
                           harmonic_relative=relative)
