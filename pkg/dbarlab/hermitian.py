"""
Pointwise Hessian algebra: the form H_q, the eigenvalue-sum criterion and
property (P_q) certificate verification.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConsistencyError, InvalidInputError, NormalizationError
from .models import Lemma5Report, PqVerdict

logger = logging.getLogger(__name__)

EIGEN_RTOL = 1e-10


@dataclass(frozen=True)
class HermitianMatrix:
    """
    An n x n Hermitian matrix, stored exactly Hermitian.

    Attributes:
        entries: complex array of shape (n, n) with entries[j, k] == conj(entries[k, j])
    """
    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise InvalidInputError(f"expected a square matrix, got shape {a.shape}", field="hessian")
        if not np.array_equal(a, a.conj().T):
            raise InvalidInputError("matrix is not Hermitian as stored", field="hessian")
        object.__setattr__(self, "entries", a)

    @classmethod
    def from_array(cls, a, symmetrize: bool = True) -> "HermitianMatrix":
        """Build from any square array; ``symmetrize`` replaces a by (a + a^H)/2 first."""
        a = np.asarray(a, dtype=complex)
        if symmetrize and a.ndim == 2 and a.shape[0] == a.shape[1]:
            a = 0.5 * (a + a.conj().T)
        return cls(a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def eigh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Ascending eigenvalues and the matching unit eigenvectors (columns)."""
        return np.linalg.eigh(self.entries)

    def conjugated(self, U: np.ndarray) -> "HermitianMatrix":
        """U* H U, symmetrized against rounding."""
        return HermitianMatrix.from_array(U.conj().T @ self.entries @ U)


def _increasing_tuples(n: int, q: int) -> List[Tuple[int, ...]]:
    return list(combinations(range(n), q))


@dataclass
class FormVector:
    """
    Coefficients of a (0,q)-form at a point.

    ``coeffs[i]`` belongs to the i-th strictly increasing q-tuple of {0..n-1}
    in ``itertools.combinations`` order.
    """
    n: int
    q: int
    coeffs: np.ndarray
    _index: Dict[Tuple[int, ...], int] = field(init=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.q <= self.n:
            raise InvalidInputError(f"degree q={self.q} outside 1..{self.n}", field="q")
        self.coeffs = np.asarray(self.coeffs, dtype=complex).ravel()
        expected = math.comb(self.n, self.q)
        if self.coeffs.size != expected:
            raise InvalidInputError(
                f"expected binomial({self.n},{self.q})={expected} coefficients, got {self.coeffs.size}",
                field="coeffs",
            )
        self._index = {J: i for i, J in enumerate(_increasing_tuples(self.n, self.q))}

    @classmethod
    def from_dict(cls, n: int, q: int, values: Dict[Tuple[int, ...], complex]) -> "FormVector":
        """Build from {increasing tuple: coefficient}; missing tuples are zero."""
        tuples = _increasing_tuples(n, q)
        return cls(n, q, np.array([values.get(J, 0.0) for J in tuples], dtype=complex))

    def tuples(self) -> List[Tuple[int, ...]]:
        return list(self._index)

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def extended(self, j: int, K: Tuple[int, ...]) -> complex:
        """
        u_{jK} for an increasing (q-1)-tuple K.

        Zero when j is in K, otherwise the sign of the permutation sorting (j, K)
        times the stored coefficient of the sorted tuple.
        """
        if j in K:
            return 0j
        position = sum(1 for k in K if k < j)
        sign = -1.0 if position % 2 else 1.0
        J = tuple(sorted((j,) + tuple(K)))
        return sign * self.coeffs[self._index[J]]


def hessian_form_hq(H: HermitianMatrix, u: FormVector) -> float:
    """
    Evaluate H_q(H)(u) = sum'_{|K|=q-1} sum_{j,k} H[j,k] u_{jK} conj(u_{kK}).

    Args:
        H (HermitianMatrix): complex Hessian at a point
        u (FormVector): (0,q)-form coefficients at the same point

    Returns:
        The real value of the form.
    """
    if H.n != u.n:
        raise InvalidInputError(f"Hessian dimension {H.n} != form dimension {u.n}", field="u")
    total = 0j
    for K in _increasing_tuples(u.n, u.q - 1):
        w = np.array([u.extended(j, K) for j in range(u.n)])
        total += w @ H.entries @ w.conj()
    scale = np.linalg.norm(H.entries) * u.norm_sq() + 1e-300
    if abs(total.imag) > 1e-12 * max(scale, abs(total.real)):
        raise ConsistencyError(f"H_q has imaginary residue {total.imag:.3e}")
    return float(total.real)


def min_q_eigensum(H: HermitianMatrix, q: int) -> float:
    """Sum of the q smallest eigenvalues of H."""
    if not 1 <= q <= H.n:
        raise InvalidInputError(f"q={q} outside 1..{H.n}", field="q")
    return float(np.sum(np.linalg.eigvalsh(H.entries)[:q]))


def random_frames(n: int, q: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-like orthonormal q-frames in C^n via QR of complex Gaussian matrices, shape (count, n, q)."""
    z = rng.standard_normal((count, n, q)) + 1j * rng.standard_normal((count, n, q))
    Q, R = np.linalg.qr(z)
    d = np.diagonal(R, axis1=1, axis2=2)
    phases = d / np.where(np.abs(d) > 0, np.abs(d), 1.0)
    return Q * phases[:, None, :]


def frame_sums(H: HermitianMatrix, frames: np.ndarray) -> np.ndarray:
    """sum_j <H t^j, t^j> for each frame T of shape (n, q)."""
    HT = np.einsum("jk,fkq->fjq", H.entries, frames)
    return np.einsum("fjq,fjq->f", frames.conj(), HT).real


def check_lemma5(
    H: HermitianMatrix,
    q: int,
    M: float,
    frames: int = 10_000,
    seed: int = 0,
    tol: float = 1e-9,
) -> Lemma5Report:
    """
    Test the eigenvalue-sum criterion on sampled orthonormal frames.

    Args:
        H (HermitianMatrix): Hessian to test
        q (int): form degree
        M (float): lower bound target
        frames (int): number of random frames
        seed (int): RNG seed
        tol (float): comparison tolerance

    Returns:
        Lemma5Report
    """
    if frames < 1:
        raise InvalidInputError("need at least one frame", field="frames")
    smallest = min_q_eigensum(H, q)
    rng = np.random.default_rng(seed)
    sums = frame_sums(H, random_frames(H.n, q, frames, rng))
    _, vecs = H.eigh()
    eig_frame_sum = float(frame_sums(H, vecs[None, :, :q])[0])
    gap = abs(eig_frame_sum - smallest)
    scaled_tol = tol * max(1.0, np.abs(H.entries).max())
    return Lemma5Report(
        q=q,
        M=M,
        min_eigensum=smallest,
        frames=frames,
        min_frame_sum=float(sums.min()),
        frames_above_bound=bool(np.all(sums >= smallest - scaled_tol)),
        equality_gap=gap,
        equality_frame_found=gap <= scaled_tol,
        satisfied=smallest >= M - tol,
        tolerance=tol,
    )


def eigensum_monotonicity(H: HermitianMatrix, q: int) -> float:
    """
    Residual of s_{q+1} = s_q + (q+1)-th smallest eigenvalue, where s_q is the q-eigensum.

    Returns the absolute residual; it is a rounding-level number.
    """
    if not 1 <= q < H.n:
        raise InvalidInputError(f"q={q} must satisfy 1 <= q < {H.n}", field="q")
    evals = np.linalg.eigvalsh(H.entries)
    return abs(min_q_eigensum(H, q + 1) - (min_q_eigensum(H, q) + evals[q]))


@dataclass
class PqSample:
    point: np.ndarray
    lam: float
    hessian: HermitianMatrix


@dataclass
class PqCertificate:
    """
    A sampled property (P_q) certificate.

    Attributes:
        q: form degree
        M: lower bound target for every q-eigensum
        samples: points with the weight value and its complex Hessian
        tolerance: slack, includes the O(h^2) finite-difference error
    """
    q: int
    M: float
    samples: List[PqSample]
    tolerance: float = 0.0

    def __post_init__(self):
        if self.tolerance < 0:
            raise InvalidInputError("tolerance must be >= 0", field="tolerance")
        if not self.samples:
            raise InvalidInputError("certificate has no samples", field="samples")
        n = self.samples[0].hessian.n
        if not 1 <= self.q <= n:
            raise InvalidInputError(f"q={self.q} outside 1..{n}", field="q")
        for i, s in enumerate(self.samples):
            if s.hessian.n != n:
                raise InvalidInputError(f"sample {i} has dimension {s.hessian.n} != {n}", field="samples")

    @property
    def n(self) -> int:
        return self.samples[0].hessian.n

    def to_dict(self) -> dict:
        def pairs(a):
            return [[float(np.real(x)), float(np.imag(x))] for x in np.ravel(a)]
        return {
            "n": self.n,
            "q": self.q,
            "M": self.M,
            "tolerance": self.tolerance,
            "samples": [
                {"point": pairs(s.point), "lambda": s.lam, "hessian": pairs(s.hessian.entries)}
                for s in self.samples
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "PqCertificate":
        """Parse the JSON certificate layout; hessians are row-major [re, im] pairs."""
        try:
            n = int(data["n"])
            samples = []
            for i, s in enumerate(data["samples"]):
                flat = np.array([complex(re, im) for re, im in s["hessian"]])
                if flat.size != n * n:
                    raise InvalidInputError(f"sample {i}: expected {n * n} Hessian entries", field="samples")
                point = np.array([complex(re, im) for re, im in s["point"]])
                samples.append(PqSample(point, float(s["lambda"]), HermitianMatrix.from_array(flat.reshape(n, n))))
            return cls(q=int(data["q"]), M=float(data["M"]), samples=samples,
                       tolerance=float(data.get("tolerance", 0.0)))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, InvalidInputError):
                raise
            raise InvalidInputError(f"malformed certificate: {e}", field="cert") from e

    @classmethod
    def load(cls, path: str) -> "PqCertificate":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def verify_pq_certificate(cert: PqCertificate) -> PqVerdict:
    """
    Check every sample: lambda in [0, 1] and q-eigensum >= M - tolerance.

    Raises:
        NormalizationError: a sample has lambda outside [0, 1]
    """
    for i, s in enumerate(cert.samples):
        if not 0.0 <= s.lam <= 1.0:
            raise NormalizationError(f"sample {i} has lambda={s.lam} outside [0, 1]", field="samples")
    margins = np.array([min_q_eigensum(s.hessian, cert.q) - cert.M for s in cert.samples])
    worst = int(np.argmin(margins))
    logger.debug("verified %d samples, worst margin %.3e", len(margins), margins[worst])
    return PqVerdict(
        passed=bool(np.all(margins >= -cert.tolerance)),
        worst_sample_index=worst,
        worst_margin=float(margins[worst]),
        q=cert.q,
        M=cert.M,
        samples=len(margins),
    )


def complex_hessian(func: Callable[[np.ndarray], float], point: Sequence[complex], h: float = 1e-3) -> HermitianMatrix:
    """
    Centered finite-difference complex Hessian (d^2 f / dz_j dzbar_k) of a real function.

    Args:
        func (callable): real-valued function of a complex n-vector
        point (sequence): evaluation point in C^n
        h (float): difference step

    Returns:
        HermitianMatrix
    """
    z0 = np.asarray(point, dtype=complex)
    n = z0.size
    x0 = np.concatenate([z0.real, z0.imag])

    def f(x):
        return float(func(x[:n] + 1j * x[n:]))

    m = 2 * n
    R = np.zeros((m, m))
    f0 = f(x0)
    E = np.eye(m) * h
    for a in range(m):
        R[a, a] = (f(x0 + E[a]) - 2 * f0 + f(x0 - E[a])) / h**2
        for b in range(a + 1, m):
            R[a, b] = R[b, a] = (
                f(x0 + E[a] + E[b]) - f(x0 + E[a] - E[b]) - f(x0 - E[a] + E[b]) + f(x0 - E[a] - E[b])
            ) / (4 * h**2)
    xx, yy = R[:n, :n], R[n:, n:]
    xy, yx = R[:n, n:], R[n:, :n]
    return HermitianMatrix.from_array(0.25 * (xx + yy + 1j * (xy - yx)))


def sample_certificate(
    func: Callable[[np.ndarray], float],
    points: Sequence[Sequence[complex]],
    q: int,
    M: float,
    h: float = 1e-3,
    tolerance: float = 1e-6,
) -> PqCertificate:
    """Sample ``func`` and its finite-difference Hessian at ``points`` into a certificate."""
    samples = [
        PqSample(np.asarray(p, dtype=complex), float(func(np.asarray(p, dtype=complex))), complex_hessian(func, p, h))
        for p in points
    ]
    return PqCertificate(q=q, M=M, samples=samples, tolerance=tolerance)


def example_pq_function(n: int, q: int) -> Callable[[np.ndarray], float]:
    """-sum_{j<q}|z_j|^2 + (q-1) sum_{j>=q}|z_j|^2, a member of P_q(C^n) with q-eigensum 0."""
    if not 1 <= q <= n:
        raise InvalidInputError(f"q={q} outside 1..{n}", field="q")

    def lam(z):
        a = np.abs(np.asarray(z)) ** 2
        return float(-a[: q - 1].sum() + (q - 1) * a[q - 1:].sum())

    return lam


def example_pq_hessian(n: int, q: int) -> HermitianMatrix:
    """Exact complex Hessian of ``example_pq_function``."""
    return HermitianMatrix(np.diag([-1.0] * (q - 1) + [float(q - 1)] * (n - q + 1)).astype(complex))


def renormalized(func: Callable[[np.ndarray], float], points: Sequence[Sequence[complex]]) -> Callable[[np.ndarray], float]:
    """Affine rescaling of ``func`` into [0, 1] over ``points``."""
    values = np.array([func(np.asarray(p, dtype=complex)) for p in points])
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo if hi > lo else 1.0
    return lambda z: (func(z) - lo) / span


def catlin_bound(hq_integral: float, energy: float) -> bool:
    """int H_q(lambda)(u, u) <= e * (|dbar u|^2 + |dbar* u|^2) for a weight with 0 <= lambda <= 1."""
    return hq_integral <= math.e * energy * (1 + 1e-12)


def hormander_bound(norm_sq: float, energy: float, q: int, diameter: float) -> bool:
    """(q / D^2) |u|^2 <= e * (|dbar u|^2 + |dbar* u|^2), the lambda = |z|^2/D^2 case of the Catlin bound."""
    return (q / diameter**2) * norm_sq <= math.e * energy * (1 + 1e-12)
