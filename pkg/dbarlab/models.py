"""
Pydantic models for experiment results and per-module reports.

Reports hold plain floats, ints, strings and lists so that ``model_dump_json``
is deterministic and can be written straight into report files.
"""
from typing import Any, Dict, List, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field


class ExperimentResult(BaseModel):
    """
    Wrapper for an experiment's output.

    Returned by ``ExperimentKit.execute()``, contains the report along with
    the statement tag it instantiates, collected notices and error information.
    """
    content: Any = Field(..., description="Experiment output: a report model, dict or list")
    experiment_name: str = Field(..., description="Name of the experiment that generated this output")
    tag: str = Field(default="", description="Statement tag the verdict instantiates (e.g. Thm10, Prop9)")
    verdict: Optional[str] = Field(default=None, description="Headline verdict string")
    metadata: Optional[Dict[str, Any]] = Field(default=None, description="Arguments of the run and written plot files")
    notices: List[str] = Field(default_factory=list, description="Non-fatal notices raised during the run")
    breaches: List[Dict[str, Any]] = Field(default_factory=list, description="Tolerance breaches with their magnitudes")
    tables: Dict[str, List[Dict[str, Any]]] = Field(default_factory=dict, description="CSV tables by file stem")
    error: Optional[str] = Field(default=None, description="Error message if the experiment failed")
    error_kind: Optional[str] = Field(default=None, description="'input', 'consistency' or 'internal' when error is set")

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @property
    def success(self) -> bool:
        return self.error is None


# ---------------------------------------------------------------- hermitian forms

class Lemma5Report(BaseModel):
    """Outcome of the random-frame test of the eigenvalue-sum criterion."""
    q: int
    M: float
    min_eigensum: float = Field(..., description="Sum of the q smallest eigenvalues")
    frames: int
    min_frame_sum: float = Field(..., description="Smallest frame sum over the sampled frames")
    frames_above_bound: bool = Field(..., description="Every frame sum >= min_eigensum - tol")
    equality_gap: float = Field(..., description="|frame sum of eigenvector frame - min_eigensum|")
    equality_frame_found: bool
    satisfied: bool = Field(..., description="min_eigensum >= M - tol")
    tolerance: float


class PqVerdict(BaseModel):
    """Verdict of a (P_q) certificate check."""
    passed: bool = Field(..., alias="pass")
    worst_sample_index: int
    worst_margin: float
    q: int
    M: float
    samples: int

    model_config = ConfigDict(populate_by_name=True)


# ---------------------------------------------------------------- planar potential

class RayleighEntry(BaseModel):
    """One row of the Rayleigh table: stage, eigenvalue and raster size."""
    k: int
    lam: float = Field(..., description="Smallest Dirichlet eigenvalue of W_k")
    nodes: int
    residual: float


class PeriodReport(BaseModel):
    """Period of a harmonic conjugate around one hole of its region."""
    hole: int
    nodes: int = Field(..., description="Raster size of the hole")
    period: float
    nearest_multiple: int = Field(..., description="Nearest integer k with period ~ 2*pi*k")
    distance_to_lattice: float = Field(..., description="|period - 2*pi*nearest_multiple|")
    expected: Optional[float] = None
    relative_deviation: Optional[float] = None
    within_tolerance: bool


# ---------------------------------------------------------------- hartogs witness

class WeightAudit(BaseModel):
    """Post-hoc check of the weight sequences."""
    n: List[int] = Field(..., description="Frequencies n_j")
    c: List[float] = Field(..., description="Scalings c_j")
    integrals: List[float] = Field(..., description="Raster integrals of psi_j")
    sups: List[float] = Field(..., description="Sup norms of psi_j")
    mass_deviation: float = Field(..., description="max_j |n_j * int psi~_j - 2 pi|")
    mass_ok: bool
    sup_monotone_ok: bool
    tail_ok: bool = Field(..., description="n_j * |psi~_{j+1}|_inf <= 1 for all j")
    divisibility_ok: bool
    disjoint_ok: bool
    c_in_range_ok: bool
    skipped_components: List[int] = Field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return all((self.mass_ok, self.sup_monotone_ok, self.tail_ok, self.divisibility_ok,
                    self.disjoint_ok, self.c_in_range_ok))


class ExtensionReport(BaseModel):
    """Diagnostics of the extension of Phi to the disc of radius 2."""
    floor: float = Field(..., description="Constant part of the radial Laplacian on 1 < r < r_match")
    doublings: int = Field(..., description="Compensation doublings used")
    min_laplacian: float = Field(..., description="min Delta_h Phi_ext over raster nodes with 1 < |z| < 2 - 2h")
    min_phi_ext: float
    diameter: float = Field(..., description="Diameter bound of the Hartogs domain")


class WitnessNorms(BaseModel):
    """Fiber-reduced norms of the witness form at stage k."""
    k: int
    n_k: int
    lam: float = Field(..., description="Dirichlet eigenvalue of W_k")
    f_norm_sq: float = Field(..., description="|f_k|^2 (equals pi up to quadrature)")
    N0: float = Field(..., description="|u_k|^2")
    N0_err: float
    N0_lower: float
    N0_upper: float
    Nneg: float = Field(..., description="Fiber (I - Delta_w)^{-1} pairing of u_k")
    Nneg_scaled: float = Field(..., description="Nneg * n_k^2")
    periods: List[PeriodReport] = Field(default_factory=list)


class EnergyReport(BaseModel):
    """Kohn-Morrey energy of the witness form and the dominating integral."""
    k: int
    Q: float
    Q_err: float
    boundary_term: float
    interior_term: float
    B: float
    B_err: float
    ratio: float = Field(..., description="Q / B_k")
    first_term: float = Field(..., description="int n_k |v_k|^2 Phi_{z zbar}")
    first_term_bound: float = Field(..., description="n_k |psi~_{k+1}|_inf on W_k")
    gradient_identity_gap: float
    gradient_identity_floor: float = Field(..., description="Double-precision representation floor of n_k * Phi")
    gradient_identity_tol: float = Field(default=0.0, description="Allowed gap, floor and Theta sampling error included")
    gradient_identity_ok: bool
    newtonian_sup: float
    newtonian_constant: Optional[float] = Field(default=None, description="newtonian_sup / (n_k |psi~_{k+1}|_inf)")
    low_confidence: bool


class ViolationRow(BaseModel):
    epsilon: float
    max_deficits: List[float] = Field(..., description="max over k of the deficit, one per C value")
    thresholds: List[float] = Field(default_factory=list, description="(N0_k - epsilon Q_k) / Nneg_k per stage")
    threshold_slope: Optional[float] = Field(default=None, description="log-log slope of the thresholds against n_k")
    defeated_up_to: Optional[float] = Field(default=None, description="Largest tested C with a positive deficit")
    falsified: bool
    k: Optional[int] = Field(default=None, description="Stage certifying the largest defeated C")
    deficit: Optional[float] = None


class ViolationReport(BaseModel):
    """Sweep of the compactness estimate over epsilon and C_epsilon."""
    C_values: List[float]
    rows: List[ViolationRow]
    verdict: str = Field(..., description="'falsified', 'not detected' or 'inconclusive'")
    certificate: Optional[Tuple[float, int, float]] = Field(default=None, description="(epsilon, k, deficit)")


class CatlinRow(BaseModel):
    """(q/D^2) |u|^2 <= e * Q for one form."""
    k: int
    lhs: float
    rhs: float
    ok: bool


# ---------------------------------------------------------------- wedge restriction

class RestrictionRow(BaseModel):
    """One member f_j of the wedge family."""
    j: int
    a_j: float
    norm_W1: float
    norm_restricted: float
    min_pairwise_distance: Optional[float] = Field(default=None, description="min over i < j of |f_i - f_j| on the small sector")


class WedgeReport(BaseModel):
    """Non-compactness witness for the Bergman restriction W_1 -> W_0 cap D_r3."""
    m: int
    alpha: float
    alpha0: float
    R: float
    r3: float
    rows: List[RestrictionRow]
    norm_floor: float = Field(..., description="min_j |f_j| on the small sector")
    norm_limit: float = Field(..., description="sqrt(alpha0 / alpha)")
    min_pairwise_distance: Optional[float] = None
    closest_pair: Optional[Tuple[int, int]] = None
    delta0: float
    verdict: str = Field(..., description="'no convergent subsequence', 'not certified' or 'norm floor only'")
    audited_entries: int = 0
    max_quadrature_deviation: float = 0.0


# ---------------------------------------------------------------- reinhardt domains

class FlatPiece(BaseModel):
    """A log-affine piece of the boundary of the logarithmic image."""
    dimension: int = Field(..., description="Real dimension in log coordinates, complex dimension of the variety")
    source: str = Field(..., description="'face', 'factor' or 'segment'")
    active: List[int] = Field(default_factory=list, description="Active constraints or the boundary factor")
    point: List[float] = Field(default_factory=list, description="A finite point of the piece")
    interval: Optional[Tuple[float, float]] = Field(default=None, description="x_1 range of a profile segment")


class ReinhardtVerdict(BaseModel):
    """Compactness verdict for N_q on a Reinhardt domain."""
    model: str
    n: int
    q: int
    verdict: str = Field(..., description="'compact', 'non-compact', 'compact-by-sufficiency' or 'unknown'")
    tag: str = Field(..., description="Statement the verdict instantiates")
    convex: bool
    flat_pieces: List[FlatPiece] = Field(default_factory=list)
    hyperplane_varieties: List[int] = Field(default_factory=list, description="j with a boundary variety inside {z_j = 0}")
    cone_generators: List[List[float]] = Field(default_factory=list)
    minus_e_in_cone: List[bool] = Field(default_factory=list)

    @property
    def compact(self) -> Optional[bool]:
        if self.verdict in ("compact", "compact-by-sufficiency"):
            return True
        if self.verdict == "non-compact":
            return False
        return None


class KernelValue(BaseModel):
    """Truncated Bergman kernel on the diagonal."""
    model: str
    z: List[float] = Field(..., description="|z_j| at the evaluation point")
    cutoff: int
    value: float
    last_shell_ratio: Optional[float] = None
    tail_bound: Optional[float] = None
    converged: bool


class CommutatorReport(BaseModel):
    """Singular values of [P, zbar_j] on holomorphic monomials up to a degree cutoff."""
    model: str
    j: int
    cutoff: int
    effective_cutoff: int
    singular_values: List[float]
    axis_ratios: List[float] = Field(..., description="|[P, zbar_j] e| / |e| for e = normalized z_i^m, i != j")
    decay: List[float] = Field(..., description="max singular value over basis vectors of degree >= d")
    notices: List[str] = Field(default_factory=list)


class CanonicalSolutionReport(BaseModel):
    """zbar_2 f(z_1) as canonical solutions on a product domain in C^2."""
    model: str
    m_max: int
    cutoff: int
    max_pairing: float = Field(..., description="max |<zbar_2 f, z^beta>| over f and |beta| <= cutoff")
    ratios: List[float] = Field(..., description="|zbar_2 f| / |f| per m")
    ratio_lower: float
    ratio_upper: float
    family_orthogonal: bool
    conclusion: str
