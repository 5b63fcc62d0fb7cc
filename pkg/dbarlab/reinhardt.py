"""
Reinhardt domains through their logarithmic images.

A model is one of

* a product of unit balls, optionally scaled per coordinate (bidisc, ball, disc x ball),
* an H-representation {A x <= b} of the logarithmic image,
* a radial profile in C^2 giving the largest |z_2| over each |z_1| < r1_max.

Boundary varieties away from the coordinate hyperplanes are detected as affine pieces
of the log-image boundary. Moments mu(alpha) = int |z^alpha|^2 dV drive the Bergman
kernel and the commutators [P, zbar_j] in the orthonormal monomial basis.
"""
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations, combinations_with_replacement
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, Field, ValidationError, model_validator
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator
from scipy.optimize import linprog
from scipy.special import gammaln, logsumexp

from .errors import DbarLabNotice, InvalidInputError, NonPseudoconvexError
from .hermitian import hormander_bound
from .models import (
    CanonicalSolutionReport,
    CatlinRow,
    CommutatorReport,
    FlatPiece,
    KernelValue,
    ReinhardtVerdict,
)

logger = logging.getLogger(__name__)

DEFAULT_CUTOFF = 64
CONVEXITY_TOL = 1e-9
AFFINE_TOL = 1e-8
# cone generators with c.d above this make a moment diverge
DIVERGENCE_TOL = 1e-12


def _notice(message: str, sink: List[str]):
    sink.append(message)
    warnings.warn(message, DbarLabNotice, stacklevel=3)


# ---------------------------------------------------------------- models

@dataclass(frozen=True, eq=False)
class ReinhardtModel:
    """
    A Reinhardt domain in C^n.

    Exactly one of ``factors``, ``halfspaces`` or ``profile`` describes the log image.
    ``complete[j]`` is False when the boundary contains a piece of {z_j = 0}; coordinates
    in ``deleted`` have that hyperplane removed from the domain, which changes no
    L^2 quantity.
    """
    name: str
    n: int
    factors: Tuple[Tuple[int, ...], ...] = ()
    scale: Tuple[float, ...] = ()
    halfspaces: Optional[Tuple[np.ndarray, np.ndarray]] = None
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = None
    r1_max: float = 1.0
    complete: Tuple[bool, ...] = ()
    deleted: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.n < 2:
            raise InvalidInputError("Reinhardt models need n >= 2", field="n")
        given = sum(x is not None and x != () for x in (self.factors, self.halfspaces, self.profile))
        if given != 1:
            raise InvalidInputError("give exactly one of factors, halfspaces or profile", field="profile")
        if self.factors:
            coords = sorted(j for f in self.factors for j in f)
            if coords != list(range(self.n)):
                raise InvalidInputError("factors must partition the coordinates", field="factors")
            if not self.scale:
                object.__setattr__(self, "scale", (1.0,) * self.n)
            if len(self.scale) != self.n or min(self.scale) <= 0:
                raise InvalidInputError("scale needs n positive entries", field="scale")
        if self.halfspaces is not None:
            A, b = (np.asarray(x, dtype=float) for x in self.halfspaces)
            if A.ndim != 2 or A.shape[1] != self.n or b.shape != (A.shape[0],):
                raise InvalidInputError(f"H-representation must be (m, {self.n}) and (m,)", field="halfspaces")
            object.__setattr__(self, "halfspaces", (A, b))
        if self.profile is not None and self.n != 2:
            raise InvalidInputError("radial profiles describe domains in C^2", field="profile")
        if not self.complete:
            object.__setattr__(self, "complete", tuple(j not in self.deleted for j in range(self.n)))
        if len(self.complete) != self.n:
            raise InvalidInputError("one completeness flag per variable", field="complete")
        if any(not 0 <= j < self.n for j in self.deleted):
            raise InvalidInputError("deleted coordinates out of range", field="deleted")

    @property
    def kind(self) -> str:
        if self.factors:
            return "factors"
        return "hrep" if self.halfspaces is not None else "radial"

    @property
    def is_product(self) -> bool:
        """Product of one-variable domains."""
        if self.factors:
            return all(len(f) == 1 for f in self.factors)
        if self.halfspaces is not None:
            return bool(np.all(np.count_nonzero(self.halfspaces[0], axis=1) <= 1))
        return False

    def defining(self, x: np.ndarray) -> np.ndarray:
        """Negative exactly on the log image; x has shape (..., n)."""
        x = np.asarray(x, dtype=float)
        if self.factors:
            shifted = 2 * (x - np.log(np.asarray(self.scale)))
            return np.max([logsumexp(shifted[..., list(f)], axis=-1) for f in self.factors], axis=0)
        if self.halfspaces is not None:
            A, b = self.halfspaces
            return np.max(x @ A.T - b, axis=-1)
        with np.errstate(divide="ignore"):
            top = np.log(self.profile(np.exp(np.minimum(x[..., 0], math.log(self.r1_max)))))
        return np.maximum(x[..., 0] - math.log(self.r1_max), x[..., 1] - top)

    def upper_corner(self) -> np.ndarray:
        """Coordinate-wise supremum of the log image (capped at 6 where unbounded)."""
        if self.factors:
            return np.log(np.asarray(self.scale))
        if self.halfspaces is not None:
            A, b = self.halfspaces
            top = []
            for j in range(self.n):
                res = linprog(-np.eye(self.n)[j], A_ub=A, b_ub=b, bounds=[(None, None)] * self.n)
                top.append(-res.fun if res.status == 0 else 6.0)
            return np.array(top)
        r = np.linspace(0, self.r1_max, 2001)
        return np.array([math.log(self.r1_max), float(np.log(np.max(self.profile(r))))])


def ball_profile(r: np.ndarray) -> np.ndarray:
    return np.sqrt(np.clip(1 - np.asarray(r, dtype=float) ** 2, 0.0, None))


def polydisc(radii: Sequence[float], name: str = "polydisc") -> ReinhardtModel:
    return ReinhardtModel(name=name, n=len(radii), factors=tuple((j,) for j in range(len(radii))),
                          scale=tuple(float(r) for r in radii))


def ball(n: int = 2) -> ReinhardtModel:
    return ReinhardtModel(name="ball" if n == 2 else f"ball{n}", n=n, factors=(tuple(range(n)),))


def punctured_ball(n: int = 2) -> ReinhardtModel:
    """The unit ball minus {z_1 = 0}."""
    return ReinhardtModel(name="punctured_ball" if n == 2 else f"punctured_ball{n}", n=n,
                          factors=(tuple(range(n)),), deleted=(0,))


def radial_model(name: str, profile: Callable[[np.ndarray], np.ndarray], r1_max: float = 1.0,
                 complete: Tuple[bool, ...] = ()) -> ReinhardtModel:
    return ReinhardtModel(name=name, n=2, profile=profile, r1_max=r1_max, complete=complete)


def sampled_profile(r1: Sequence[float], r2: Sequence[float]) -> Tuple[Callable, float]:
    """
    Interpolate a sampled profile in log-log coordinates.

    Log-affine data stays exactly log-affine, so flat pieces survive interpolation.
    Returns the profile and r1_max.
    """
    r1, r2 = np.asarray(r1, dtype=float), np.asarray(r2, dtype=float)
    if r1.shape != r2.shape or r1.size < 3:
        raise InvalidInputError("need at least three (r1, r2) samples", field="radial")
    if np.any(np.diff(r1) <= 0) or r1[0] < 0:
        raise InvalidInputError("r1 samples must increase from >= 0", field="radial")
    keep = r1 > 0
    if np.any(r2[keep] <= 0):
        raise InvalidInputError("r2 must be positive wherever r1 > 0", field="radial")
    spline = PchipInterpolator(np.log(r1[keep]), np.log(r2[keep]), extrapolate=True)
    r1_max = float(r1[-1])

    def profile(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(r <= r1_max, np.exp(spline(np.log(np.maximum(r, 1e-300)))), 0.0)

    return profile, r1_max


BUILTINS: Dict[str, Callable[[int], ReinhardtModel]] = {
    "bidisc": lambda n: polydisc([1.0] * n, name="bidisc"),
    "rounded_bidisc": lambda n: polydisc([1.0] * n, name="rounded_bidisc"),
    "ball": ball,
    "punctured_ball": punctured_ball,
    "disc_times_ball": lambda n: ReinhardtModel(name="disc_times_ball", n=3, factors=((0,), (1, 2))),
}


def builtin(name: str, n: int = 2) -> ReinhardtModel:
    if name not in BUILTINS:
        raise InvalidInputError(f"unknown model {name!r}; built-ins are {sorted(BUILTINS)}", field="model")
    return BUILTINS[name](n)


class ReinhardtModelFile(BaseModel):
    """JSON layout of a model file."""
    name: Optional[str] = Field(default=None, description="Model name, or a built-in name")
    builtin: Optional[str] = Field(default=None, description="Built-in model to load")
    n: Optional[int] = Field(default=None, description="Complex dimension")
    factors: Optional[List[List[int]]] = Field(default=None, description="Coordinate groups of unit balls")
    scale: Optional[List[float]] = Field(default=None, description="Per-coordinate radii")
    hrep: Optional[Dict[str, List]] = Field(default=None, description="{'A': [[...]], 'b': [...]}")
    radial: Optional[Dict[str, List[float]]] = Field(default=None, description="{'r1': [...], 'r2': [...]}")
    complete: Optional[List[bool]] = Field(default=None, description="Completeness per variable")
    deleted: List[int] = Field(default_factory=list, description="Coordinates whose hyperplane is removed")

    @model_validator(mode="after")
    def _one_source(self):
        sources = [x for x in (self.builtin, self.factors, self.hrep, self.radial) if x is not None]
        if len(sources) > 1:
            raise ValueError("give one of builtin, factors, hrep or radial")
        if not sources and self.name not in BUILTINS:
            raise ValueError("model file needs builtin, factors, hrep or radial")
        return self

    def to_model(self) -> ReinhardtModel:
        if self.builtin is not None or (self.factors is None and self.hrep is None and self.radial is None):
            model = builtin(self.builtin or self.name, self.n or 2)
            return model if self.name is None else _renamed(model, self.name)
        name = self.name or "custom"
        complete = tuple(self.complete) if self.complete else ()
        if self.factors is not None:
            n = self.n or sum(len(f) for f in self.factors)
            return ReinhardtModel(name=name, n=n, factors=tuple(tuple(f) for f in self.factors),
                                  scale=tuple(self.scale or ()), complete=complete, deleted=tuple(self.deleted))
        if self.hrep is not None:
            A = np.asarray(self.hrep.get("A"), dtype=float)
            b = np.asarray(self.hrep.get("b"), dtype=float)
            n = self.n or (A.shape[1] if A.ndim == 2 else 0)
            return ReinhardtModel(name=name, n=n, halfspaces=(A, b), complete=complete, deleted=tuple(self.deleted))
        profile, r1_max = sampled_profile(self.radial.get("r1", []), self.radial.get("r2", []))
        return ReinhardtModel(name=name, n=2, profile=profile, r1_max=r1_max, complete=complete,
                              deleted=tuple(self.deleted))


def _renamed(model: ReinhardtModel, name: str) -> ReinhardtModel:
    return ReinhardtModel(name=name, n=model.n, factors=model.factors, scale=model.scale,
                          halfspaces=model.halfspaces, profile=model.profile, r1_max=model.r1_max,
                          complete=model.complete, deleted=model.deleted)


def load_model(source: Union[str, Path]) -> ReinhardtModel:
    """Load a model from a JSON file, or by built-in name."""
    if str(source) in BUILTINS:
        return builtin(str(source))
    path = Path(source)
    if not path.is_file():
        raise InvalidInputError(f"no model file or built-in named {source!r}", field="model")
    try:
        return ReinhardtModelFile.model_validate(json.loads(path.read_text())).to_model()
    except (ValidationError, json.JSONDecodeError) as e:
        raise InvalidInputError(f"malformed model file {path}: {e}", field="model") from e


# ---------------------------------------------------------------- log image

@dataclass(frozen=True)
class LogImage:
    model: ReinhardtModel
    convex: bool
    verdict: str
    pairs_tested: int
    max_violation: float

    def contains(self, x) -> np.ndarray:
        return self.model.defining(x) < 0


def _interior_samples(model: ReinhardtModel, count: int, rng: np.random.Generator,
                      depth: float = 6.0) -> np.ndarray:
    top = model.upper_corner()
    found: List[np.ndarray] = []
    total = 0
    for _ in range(200):
        x = rng.uniform(top - depth, top, size=(4 * count, model.n))
        inside = x[model.defining(x) < 0]
        found.append(inside)
        total += len(inside)
        if total >= count:
            break
    points = np.concatenate(found)[:count]
    if len(points) < 2:
        raise InvalidInputError(f"log image of {model.name} has no sampled interior points", field="model")
    return points


def log_image(model: ReinhardtModel, pairs: int = 1000, seed: int = 0) -> LogImage:
    """
    The logarithmic image with its convexity check.

    H-representations are convex by construction. Other models pass when the midpoint
    of every sampled pair of interior points lies inside up to ``CONVEXITY_TOL``.

    Raises:
        NonPseudoconvexError: a midpoint falls outside the image
    """
    if model.kind == "hrep":
        return LogImage(model, True, "pseudoconvex-compatible", 0, 0.0)
    rng = np.random.default_rng(seed)
    points = _interior_samples(model, 2 * pairs, rng)
    half = len(points) // 2
    mid = (points[:half] + points[half:2 * half]) / 2
    violation = float(np.max(model.defining(mid)))
    if violation > CONVEXITY_TOL:
        raise NonPseudoconvexError(
            f"log image of {model.name} is not convex: midpoint defect {violation:.3e}", field="model")
    return LogImage(model, True, "pseudoconvex-compatible", half, max(violation, 0.0))


@dataclass(frozen=True)
class RecessionCone:
    generators: List[np.ndarray]
    minus_e: List[bool]
    sampled: bool = False


def _null_space(M: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    if M.size == 0:
        return np.eye(M.shape[1])
    _, s, vt = np.linalg.svd(M)
    rank = int(np.sum(s > tol * max(1.0, s[0])))
    return vt[rank:].T


def _polyhedral_generators(A: np.ndarray, tol: float = 1e-10) -> List[np.ndarray]:
    """Generators of {d : A d <= 0}: a lineality basis with both signs, then extreme rays of the rest."""
    n = A.shape[1]
    lineality = _null_space(A)
    gens = [s * v for v in lineality.T for s in (1.0, -1.0)]
    k = lineality.shape[1]
    rows = range(A.shape[0])
    for S in combinations(rows, max(n - k - 1, 0)):
        M = np.vstack([A[list(S)].reshape(-1, n), lineality.T])
        ray = _null_space(M)
        if ray.shape[1] != 1:
            continue
        for d in (ray[:, 0], -ray[:, 0]):
            if np.all(A @ d <= tol) and not any(np.allclose(d, g, atol=1e-9) for g in gens):
                gens.append(d / np.linalg.norm(d))
    return gens


def recession_cone(model: ReinhardtModel, directions: int = 720, horizon: float = 50.0) -> RecessionCone:
    """
    Directions d with x + t d in the log image for all t >= 0.

    Products of balls have the closed negative orthant; H-representations give
    {A d <= 0} exactly. Radial profiles are probed along ``directions`` unit vectors
    from an interior point up to ``horizon``, and the boundary directions of the
    accepted arc are returned.
    """
    n = model.n
    if model.kind == "factors":
        gens = [-e for e in np.eye(n)]
        return RecessionCone(gens, [True] * n)
    if model.kind == "hrep":
        A = model.halfspaces[0]
        gens = _polyhedral_generators(A)
        return RecessionCone(gens, [bool(np.all(-A[:, j] <= 1e-12)) for j in range(n)])

    x0 = model.upper_corner() - 1.0
    if model.defining(x0) >= 0:
        x0 = _interior_samples(model, 1, np.random.default_rng(0))[0]
    t = np.linspace(0, horizon, 400)[1:]
    theta = np.linspace(-math.pi, math.pi, directions, endpoint=False)
    unit = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    ok = np.array([bool(np.all(model.defining(x0 + t[:, None] * d) < 0)) for d in unit])
    if ok.all():
        gens = [s * e for e in np.eye(2) for s in (1.0, -1.0)]
    else:
        edges = np.flatnonzero(ok & ~np.roll(ok, 1)).tolist() + np.flatnonzero(ok & ~np.roll(ok, -1)).tolist()
        gens = [unit[i] for i in sorted(set(edges))]
    minus_e = [bool(np.all(model.defining(x0 - t[:, None] * e) < 0)) for e in np.eye(2)]
    return RecessionCone(gens, minus_e, sampled=True)


# ---------------------------------------------------------------- flat pieces and verdicts

def _faces(A: np.ndarray, b: np.ndarray, q: int) -> List[FlatPiece]:
    """Proper faces of {A x <= b} of dimension >= q, each with a relative-interior point."""
    m, n = A.shape
    pieces = []
    for size in range(1, m + 1):
        for S in combinations(range(m), size):
            active = list(S)
            dim = n - int(np.linalg.matrix_rank(A[active]))
            if dim < q or dim == n:
                continue
            rest = [i for i in range(m) if i not in S]
            c = np.zeros(n + 1)
            c[-1] = -1.0
            A_ub = np.hstack([A[rest], np.ones((len(rest), 1))]) if rest else None
            res = linprog(c, A_ub=A_ub, b_ub=b[rest] if rest else None,
                          A_eq=np.hstack([A[active], np.zeros((len(active), 1))]), b_eq=b[active],
                          bounds=[(None, None)] * n + [(None, 1.0)])
            if res.status == 0 and -res.fun > 1e-9:
                pieces.append(FlatPiece(dimension=dim, source="face", active=active, point=res.x[:n].tolist()))
    return pieces


def profile_segments(model: ReinhardtModel, samples: int = 2001, depth: float = 3.0,
                     min_length: float = 0.1, tol: float = AFFINE_TOL) -> List[FlatPiece]:
    """
    Maximal intervals where x_2 = log rho(e^x_1) is affine within ``tol``.

    The sample covers x_1 in [log r1_max - depth, log r1_max); near x_1 -> -infinity every
    profile flattens, so only pieces of length >= ``min_length`` are reported.
    """
    top = math.log(model.r1_max) - 1e-3
    x = np.linspace(top - depth, top, samples)
    with np.errstate(divide="ignore"):
        y = np.log(model.profile(np.exp(x)))
    pieces = []
    i = 0
    while i < samples - 1:
        j = i + 1
        while j + 1 < samples:
            seg = slice(i, j + 2)
            chord = y[i] + (y[j + 1] - y[i]) * (x[seg] - x[i]) / (x[j + 1] - x[i])
            if not np.all(np.isfinite(y[seg])) or np.max(np.abs(y[seg] - chord)) > tol:
                break
            j += 1
        if x[j] - x[i] >= min_length and np.all(np.isfinite(y[i:j + 1])):
            mid = (i + j) // 2
            pieces.append(FlatPiece(dimension=1, source="segment", point=[float(x[mid]), float(y[mid])],
                                    interval=(float(x[i]), float(x[j]))))
        i = j if j > i + 1 else i + 1
    return pieces


def flat_piece_detector(model: ReinhardtModel, q: int) -> List[FlatPiece]:
    """
    Affine boundary pieces of the log image of dimension >= q.

    A piece of real dimension k yields a k-dimensional analytic variety in the boundary
    away from the coordinate hyperplanes. For a product of balls the proper faces are
    products with one factor on its boundary, of dimension n - dim(factor) since each
    factor boundary is strictly convex or a point.
    """
    if not 1 <= q <= model.n - 1:
        raise InvalidInputError(f"q must lie in 1..{model.n - 1}", field="q")
    if model.kind == "factors":
        pieces = []
        for f in model.factors:
            dim = model.n - len(f)
            if dim < q:
                continue
            point = np.log(np.asarray(model.scale)) - 1.0
            point[list(f)] = np.log(np.asarray(model.scale))[list(f)] - 0.5 * math.log(len(f))
            pieces.append(FlatPiece(dimension=dim, source="factor", active=list(f), point=point.tolist()))
        return pieces
    if model.kind == "hrep":
        return _faces(*model.halfspaces, q)
    if q != 1:
        raise InvalidInputError("radial profiles only carry one-dimensional pieces", field="q")
    return profile_segments(model)


def _check_flags(model: ReinhardtModel, cone: RecessionCone):
    for j, (flag, inside) in enumerate(zip(model.complete, cone.minus_e)):
        if flag and not inside:
            raise InvalidInputError(
                f"{model.name} is declared complete in z_{j + 1} but -e_{j + 1} is not in the recession cone",
                field="complete")


def compactness_verdict(model: ReinhardtModel, q: int, seed: int = 0) -> ReinhardtVerdict:
    """
    Decide compactness of N_q from boundary varieties.

    For q = n - 1 compactness holds exactly when no (n-1)-dimensional variety lies in the
    boundary off the coordinate hyperplanes. For smaller q a variety of dimension >= q
    off the hyperplanes rules compactness out, and no variety anywhere (including the
    hyperplane pieces flagged by incompleteness) gives compactness by sufficiency.
    """
    image = log_image(model, seed=seed)
    cone = recession_cone(model)
    _check_flags(model, cone)
    pieces = flat_piece_detector(model, q)
    hyperplane = [j + 1 for j, flag in enumerate(model.complete) if not flag]
    if q == model.n - 1:
        verdict, tag = ("non-compact" if pieces else "compact"), "Rmk10"
    elif pieces:
        verdict, tag = "non-compact", "Rmk9"
    else:
        verdict, tag = ("unknown" if hyperplane else "compact-by-sufficiency"), "Thm12"
    logger.info("%s q=%d: %s (%d flat pieces, hyperplane varieties %s)", model.name, q, verdict,
                len(pieces), hyperplane)
    return ReinhardtVerdict(model=model.name, n=model.n, q=q, verdict=verdict, tag=tag, convex=image.convex,
                            flat_pieces=pieces, hyperplane_varieties=hyperplane,
                            cone_generators=[[float(v) for v in g] for g in cone.generators],
                            minus_e_in_cone=cone.minus_e)


# ---------------------------------------------------------------- moments

def multi_indices(n: int, degree: int) -> np.ndarray:
    """All alpha in N^n with |alpha| <= degree, ordered by degree."""
    rows = []
    for d in range(degree + 1):
        for combo in combinations_with_replacement(range(n), d):
            rows.append(np.bincount(np.asarray(combo, dtype=int), minlength=n))
    return np.array(rows, dtype=int).reshape(-1, n)


def _log_ball_moments(model: ReinhardtModel, alphas: np.ndarray) -> np.ndarray:
    """pi^d prod beta_j! / (|beta| + d)! per ball factor, times the per-coordinate scaling."""
    out = np.zeros(len(alphas))
    for f in model.factors:
        beta = alphas[:, list(f)]
        d = len(f)
        out += d * math.log(math.pi) + gammaln(beta + 1).sum(axis=1) - gammaln(beta.sum(axis=1) + d + 1)
    return out + ((2 * alphas + 2) * np.log(np.asarray(model.scale))).sum(axis=1)


def _log_axis_moments(A: np.ndarray, b: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """Products of annuli and discs: r_j in (e^lo_j, e^hi_j)."""
    n = A.shape[1]
    hi, lo = np.full(n, np.inf), np.full(n, -np.inf)
    for a, beta in zip(A, b):
        if not a.any():
            continue
        j = int(np.flatnonzero(a)[0])
        if a[j] > 0:
            hi[j] = min(hi[j], beta / a[j])
        else:
            lo[j] = max(lo[j], beta / a[j])
    if np.any(~np.isfinite(hi)):
        return np.full(len(alphas), np.inf)
    c = 2 * alphas + 2
    with np.errstate(divide="ignore"):
        span = np.log1p(-np.exp(c * (lo - hi)))
    return (math.log(2 * math.pi) + c * hi + span - np.log(c)).sum(axis=1)


def _log_polygon_moment(model: ReinhardtModel, gens: List[np.ndarray], alpha: np.ndarray) -> float:
    """(2 pi)^2 int over the log image of exp(c . x), c = 2 alpha + 2."""
    A, b = model.halfspaces
    c = 2 * alpha + 2.0
    if any(float(c @ g) >= -DIVERGENCE_TOL for g in gens):
        return math.inf
    bounds = []
    for sign in (1.0, -1.0):
        res = linprog([sign, 0.0], A_ub=A, b_ub=b, bounds=[(None, None)] * 2)
        bounds.append(sign * res.fun if res.status == 0 else -sign * math.inf)
    lo_x, hi_x = bounds
    up, down = A[:, 1] > 0, A[:, 1] < 0
    # shift by the top corner so the integrand stays O(1)
    top = model.upper_corner()
    shift = float(c @ top)

    def inner(x1):
        hi = np.min((b[up] - A[up, 0] * x1) / A[up, 1])
        lo = np.max((b[down] - A[down, 0] * x1) / A[down, 1]) if down.any() else -np.inf
        if hi <= lo:
            return 0.0
        return math.exp(c[0] * x1 + c[1] * hi - shift) * -math.expm1(c[1] * (lo - hi)) / c[1]

    value, _ = quad(inner, lo_x, hi_x, epsabs=0.0, epsrel=1e-11, limit=200)
    return 2 * math.log(2 * math.pi) + shift + math.log(value) if value > 0 else -math.inf


def radial_moment(profile: Callable, r1_max: float, m: int, l: int) -> float:
    """(2 pi)^2 int_0^r1_max r^(2m+1) rho(r)^(2l+2) / (2l+2) dr by adaptive quadrature."""
    integrand = lambda r: r ** (2 * m + 1) * float(profile(r)) ** (2 * l + 2) / (2 * l + 2)
    value, _ = quad(integrand, 0.0, r1_max, epsabs=0.0, epsrel=1e-11, limit=400)
    return (2 * math.pi) ** 2 * value


def log_moments(model: ReinhardtModel, alphas: np.ndarray) -> np.ndarray:
    """log mu(alpha) row by row; +inf marks a divergent moment."""
    alphas = np.atleast_2d(np.asarray(alphas, dtype=int))
    if alphas.shape[1] != model.n or np.any(alphas < 0):
        raise InvalidInputError(f"multi-indices must be non-negative with {model.n} entries", field="alpha")
    if model.kind == "factors":
        return _log_ball_moments(model, alphas)
    if model.kind == "hrep":
        if model.is_product:
            return _log_axis_moments(*model.halfspaces, alphas)
        if model.n != 2:
            raise InvalidInputError("moments of non-product polyhedral images are available in C^2 only",
                                    field="model")
        gens = recession_cone(model).generators
        return np.array([_log_polygon_moment(model, gens, a) for a in alphas])
    out = []
    for m, l in alphas:
        value = radial_moment(model.profile, model.r1_max, int(m), int(l))
        out.append(math.log(value) if value > 0 else -math.inf)
    return np.array(out)


def moment(model: ReinhardtModel, alpha: Sequence[int]) -> float:
    """
    mu(alpha) = int |z^alpha|^2 dV.

    Returns ``math.inf`` with a notice when z^alpha is not square integrable.
    """
    value = float(log_moments(model, np.asarray([alpha]))[0])
    if value == math.inf:
        warnings.warn(f"moment {tuple(alpha)} of {model.name} diverges", DbarLabNotice, stacklevel=2)
        return math.inf
    return math.exp(value)


class MomentTable:
    """log mu(alpha) for every |alpha| <= degree; read-only after construction."""

    def __init__(self, model: ReinhardtModel, degree: int):
        self.model = model
        self.degree = degree
        self.indices = multi_indices(model.n, degree)
        self.log_mu = log_moments(model, self.indices)
        self.indices.setflags(write=False)
        self.log_mu.setflags(write=False)
        self._position = {tuple(int(v) for v in a): i for i, a in enumerate(self.indices)}

    def position(self, alpha) -> int:
        return self._position[tuple(int(v) for v in alpha)]

    def log(self, alpha) -> float:
        return float(self.log_mu[self.position(alpha)])

    def __getitem__(self, alpha) -> float:
        return math.exp(self.log(alpha))

    def pairing(self, holo: Sequence[int], anti: Sequence[int], holo2: Sequence[int], anti2: Sequence[int]) -> float:
        """<z^holo zbar^anti, z^holo2 zbar^anti2>; zero unless the rotation characters agree."""
        holo, anti, holo2, anti2 = (np.asarray(v, dtype=int) for v in (holo, anti, holo2, anti2))
        if np.any(holo - anti != holo2 - anti2):
            return 0.0
        return self[holo + anti2]


def moment_log_convexity(model: ReinhardtModel, degree: int = 12, samples: int = 200, seed: int = 0) -> float:
    """
    Smallest log mu(alpha) + log mu(beta) - 2 log mu((alpha + beta) / 2) over sampled pairs
    with alpha + beta even; non-negative by Cauchy-Schwarz.
    """
    table = MomentTable(model, degree)
    rng = np.random.default_rng(seed)
    worst = math.inf
    idx = table.indices
    for _ in range(samples):
        a, b = idx[rng.integers(len(idx))], idx[rng.integers(len(idx))]
        if np.any((a + b) % 2):
            b = b + (a + b) % 2
            if b.sum() > degree:
                continue
        worst = min(worst, table.log(a) + table.log(b) - 2 * table.log((a + b) // 2))
    return worst


# ---------------------------------------------------------------- kernel and commutators

def bergman_kernel_diag(model: ReinhardtModel, z: Sequence[complex], cutoff: int = DEFAULT_CUTOFF,
                        table: Optional[MomentTable] = None) -> KernelValue:
    """
    K(z, z) truncated to degrees <= cutoff, with a ratio-test tail bound.

    Args:
        model (ReinhardtModel): the domain
        z (Sequence[complex]): interior point
        cutoff (int): largest total degree
        table (Optional[MomentTable]): precomputed moments of degree >= cutoff

    Returns:
        KernelValue: the truncated sum, last shell ratio and tail bound
    """
    r = np.abs(np.asarray(z, dtype=complex))
    if r.shape != (model.n,):
        raise InvalidInputError(f"z needs {model.n} coordinates", field="z")
    if any(r[j] == 0 for j in model.deleted) or model.defining(np.log(np.maximum(r, 1e-300))) >= 0:
        raise InvalidInputError(f"z = {tuple(r)} is not an interior point of {model.name}", field="z")
    table = table if table is not None and table.degree >= cutoff else MomentTable(model, cutoff)
    idx = table.indices[table.indices.sum(axis=1) <= cutoff]
    log_mu = table.log_mu[: len(idx)]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_r = np.where(r > 0, np.log(np.maximum(r, 1e-300)), 0.0)
        log_terms = (2 * idx * log_r).sum(axis=1) - log_mu
    vanishing = np.any((idx > 0) & (r == 0), axis=1)
    terms = np.where(vanishing, 0.0, np.exp(log_terms))
    shells = np.bincount(idx.sum(axis=1), weights=terms, minlength=cutoff + 1)
    value = float(shells.sum())
    ratio, tail, converged = None, 0.0, True
    if cutoff >= 1 and shells[-2] > 0:
        ratio = float(shells[-1] / shells[-2])
        if ratio < 1:
            tail = float(shells[-1] * ratio / (1 - ratio))
        else:
            converged, tail = False, None
            warnings.warn(f"kernel of {model.name} at {tuple(r)}: shell ratio {ratio:.4f} >= 1 at degree {cutoff}",
                          DbarLabNotice, stacklevel=2)
    return KernelValue(model=model.name, z=r.tolist(), cutoff=cutoff, value=value, last_shell_ratio=ratio,
                       tail_bound=tail, converged=converged)


@dataclass
class OperatorMatrix:
    """
    An operator on holomorphic monomials up to a degree cutoff.

    Columns are indexed by the orthonormal basis e_alpha = z^alpha / sqrt(mu(alpha));
    rows by an orthonormal family in L^2 fixed by the operator.
    """
    basis: np.ndarray
    entries: sp.spmatrix
    singular_values: np.ndarray = field(init=False)

    def __post_init__(self):
        if sp.triu(self.entries, 1).nnz + sp.tril(self.entries, -1).nnz == 0:
            values = np.abs(self.entries.diagonal())
        else:
            values = np.linalg.svd(self.entries.toarray(), compute_uv=False)
        self.singular_values = np.sort(values)[::-1]


def _commutator_norms(table: MomentTable, j: int, cutoff: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    |[P, zbar_j] e_alpha|^2 = mu(alpha + e_j)/mu(alpha) - mu(alpha)/mu(alpha - e_j).

    [P, zbar_j] e_alpha = -(I - P)(zbar_j e_alpha) and the projection P(zbar_j z^alpha) is
    (mu(alpha)/mu(alpha - e_j)) z^(alpha - e_j), so the squared norm is what the
    orthogonal complement keeps of |zbar_j e_alpha|^2.
    """
    idx = table.indices[table.indices.sum(axis=1) <= cutoff]
    e = np.eye(table.model.n, dtype=int)[j]
    up = np.array([table.log(a + e) for a in idx])
    here = table.log_mu[: len(idx)]
    down = np.array([table.log(a - e) if a[j] > 0 else np.inf for a in idx])
    first = np.exp(up - here)
    return first - np.exp(here - down), first


def commutator_matrix(model: ReinhardtModel, j: int, cutoff: int = DEFAULT_CUTOFF, constant: bool = False,
                      table: Optional[MomentTable] = None, notices: Optional[List[str]] = None) -> OperatorMatrix:
    """
    [P, zbar_j] (or [P, 1] when ``constant``) on the holomorphic monomials of degree <= cutoff.

    The images -(I - P)(zbar_j e_alpha) carry distinct rotation characters, so they are
    mutually orthogonal and the matrix is diagonal in their normalized basis. When
    moments stop resolving the difference the cutoff is reduced with a notice.

    Args:
        model (ReinhardtModel): the domain
        j (int): 1-based coordinate of the multiplier zbar_j
        cutoff (int): largest total degree, at least 1
        constant (bool): use the constant multiplier instead
    """
    notices = notices if notices is not None else []
    if cutoff < 1:
        raise InvalidInputError("cutoff must be at least 1", field="cutoff")
    if not 1 <= j <= model.n:
        raise InvalidInputError(f"j must lie in 1..{model.n}", field="j")
    table = table if table is not None and table.degree > cutoff else MomentTable(model, cutoff + 1)
    basis = table.indices[table.indices.sum(axis=1) <= cutoff]
    if constant:
        return OperatorMatrix(basis, sp.diags(np.zeros(len(basis)), format="csr"))
    sq, first = _commutator_norms(table, j - 1, cutoff)
    bad = ~np.isfinite(sq) | (sq < -1e-12 * first)
    if bad.any():
        degree = int(basis[bad].sum(axis=1).min()) - 1
        if degree < 1:
            raise InvalidInputError(f"moments of {model.name} are unusable from degree 1", field="model")
        _notice(f"moment underflow at degree {degree + 1}; cutoff reduced to {degree}", notices)
        keep = basis.sum(axis=1) <= degree
        basis, sq = basis[keep], sq[keep]
    entries = sp.diags(-np.sqrt(np.maximum(sq, 0.0)), format="csr")
    return OperatorMatrix(basis, entries)


def commutator_report(model: ReinhardtModel, j: int, cutoff: int = DEFAULT_CUTOFF) -> CommutatorReport:
    """Singular values, the ratio on z_i^m for the first i != j, and the decay profile of [P, zbar_j]."""
    notices: List[str] = []
    op = commutator_matrix(model, j, cutoff, notices=notices)
    effective = int(op.basis.sum(axis=1).max())
    sigma = np.abs(op.entries.diagonal())
    i = 0 if j != 1 else 1
    axis = [float(sigma[k]) for k, a in enumerate(op.basis) if a.sum() == a[i]]
    degree = op.basis.sum(axis=1)
    decay = [float(sigma[degree >= d].max()) for d in range(effective + 1)]
    return CommutatorReport(model=model.name, j=j, cutoff=cutoff, effective_cutoff=effective,
                            singular_values=op.singular_values.tolist(), axis_ratios=axis, decay=decay,
                            notices=notices)


def canonical_solution_witness(model: Optional[ReinhardtModel] = None, m_max: int = 20,
                               cutoff: int = DEFAULT_CUTOFF) -> CanonicalSolutionReport:
    """
    Show that u = zbar_2 f(z_1) is the canonical solution of dbar u = f dzbar_2 for f = z_1^m.

    u is orthogonal to every holomorphic monomial, the family {zbar_2 z_1^m} is orthogonal,
    and |u| / |f| stays bounded below, so the solution operator is not compact.
    """
    model = model or builtin("bidisc")
    if model.n != 2 or not model.is_product:
        raise InvalidInputError("canonical solutions need a product domain in C^2", field="model")
    table = MomentTable(model, max(cutoff, m_max + 1))
    e2 = (0, 1)
    zero = (0, 0)
    worst = 0.0
    ratios = []
    for m in range(m_max + 1):
        f = (m, 0)
        norm = math.sqrt(table[f])
        for beta in table.indices[table.indices.sum(axis=1) <= cutoff]:
            worst = max(worst, abs(table.pairing(f, e2, beta, zero)) / (norm * math.sqrt(table[beta])))
        ratios.append(math.sqrt(table[(m, 1)] / table[f]))
    orthogonal = all(table.pairing((m, 0), e2, (k, 0), e2) == 0.0
                     for m in range(m_max + 1) for k in range(m_max + 1) if k != m)
    lower = min(ratios)
    certified = worst <= 1e-14 and orthogonal and lower > 0 and m_max >= 1
    conclusion = "non-compact" if certified else "inconclusive"
    logger.info("%s canonical solutions up to m=%d: ratios in [%.6g, %.6g], %s", model.name, m_max, lower,
                max(ratios), conclusion)
    return CanonicalSolutionReport(model=model.name, m_max=m_max, cutoff=cutoff, max_pairing=worst, ratios=ratios,
                                   ratio_lower=lower, ratio_upper=max(ratios), family_orthogonal=orthogonal,
                                   conclusion=conclusion)


def product_form_sanity(model: Optional[ReinhardtModel] = None, m_max: int = 20, q: int = 1) -> List[CatlinRow]:
    """
    (q / D^2) |u_m|^2 <= e Q(u_m) for u_m = z_1^m (1 - |z_2|^2 / s_2^2) dzbar_2 on a polydisc.

    u_m vanishes on {|z_2| = s_2}, so it lies in the domain of dbar*. dbar u_m = 0 and
    dbar* u_m = z_1^m zbar_2 / s_2^2, which gives |u_m|^2 = mu_1(m) pi s_2^2 / 3 and
    Q(u_m) = mu_1(m) pi / 2 with mu_1(m) = pi s_1^(2m+2) / (m + 1). D = 2 |s|.
    """
    model = model or builtin("bidisc")
    if model.n != 2 or not model.is_product or any(len(f) != 1 for f in model.factors):
        raise InvalidInputError("product-example forms need a polydisc in C^2", field="model")
    s1, s2 = model.scale if model.scale else (1.0, 1.0)
    D = 2 * math.sqrt(s1**2 + s2**2)
    rows = []
    for m in range(m_max + 1):
        mu1 = math.pi * s1 ** (2 * m + 2) / (m + 1)
        norm_sq = mu1 * math.pi * s2**2 / 3
        energy = mu1 * math.pi / 2
        rows.append(CatlinRow(k=m, lhs=q * norm_sq / D**2, rhs=math.e * energy,
                              ok=hormander_bound(norm_sq, energy, q, D)))
    return rows
