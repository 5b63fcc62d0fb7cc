"""
Experiment registry and runner.

Experiments are methods marked with ``ExperimentKit.register_as_experiment``. The kit
discovers them, runs them with notices captured and failures wrapped into an
``ExperimentResult``, and reports every boundary to an optional ``TracingKit``.
"""
import csv
import inspect
import json
import logging
import math
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from functools import wraps
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ValidationError

from .errors import ConsistencyError, DbarLabNotice, InvalidInputError
from .hartogs import HartogsRun, build_weight_spec, catlin_sanity, energy, violation_report, witness_form
from .hermitian import (
    HermitianMatrix,
    PqCertificate,
    check_lemma5,
    eigensum_monotonicity,
    verify_pq_certificate,
)
from .models import ExperimentResult
from .observability import TracingKit
from .observability import plots
from .planar import GridSet, dirichlet_ground_state, shape_grid
from .reinhardt import (
    builtin,
    canonical_solution_witness,
    commutator_report,
    compactness_verdict,
    load_model,
    polydisc,
    product_form_sanity,
)
from .wedge import restriction_witness

logger = logging.getLogger(__name__)

SIGNIFICANT_DIGITS = 12

REFERENCE_EIGENVALUES = {
    "square": 2 * math.pi**2,
    "rectangle": 1.25 * math.pi**2,
    "disc": 2.404825557695773**2,
}
REFERENCE_TOLERANCE = {"square": 0.01, "rectangle": 0.01, "disc": 0.015}

# (model, n, q, expected compactness)
VERDICT_MATRIX = (
    ("bidisc", 2, 1, False),
    ("ball", 2, 1, True),
    ("punctured_ball", 2, 1, True),
    ("disc_times_ball", 3, 2, False),
    ("ball", 3, 1, True),
    ("ball", 3, 2, True),
)


def _plain(value: Any) -> Any:
    """JSON-ready copy with floats rounded to ``SIGNIFICANT_DIGITS`` and non-finite floats as strings."""
    if isinstance(value, BaseModel):
        return _plain(value.model_dump())
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return _plain(value.item())
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            return str(value)
        return float(f"{value:.{SIGNIFICANT_DIGITS}g}")
    return str(value)


def breach(quantity: str, value: float, tolerance: float, stage: Optional[str] = None) -> Dict[str, Any]:
    """A tolerance breach with its magnitude."""
    return {"quantity": quantity, "value": value, "tolerance": tolerance, "stage": stage}


@dataclass
class ExperimentOutput:
    """What an experiment method returns; ``ExperimentKit.execute`` turns it into an ExperimentResult."""
    report: Any
    verdict: str
    tables: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)
    breaches: List[Dict[str, Any]] = field(default_factory=list)
    tag: Optional[str] = None
    plots: List[str] = field(default_factory=list)


class ExperimentKit:
    """
    Registry of experiments discovered on a target object.

    Example::

        kit = ExperimentKit(DbarExperiments(seed=0))
        result = kit.execute("wedge", m=20)
        print(result.verdict)
    """

    def __init__(self, target: Optional[Any] = None, tracing: Optional[TracingKit] = None):
        """
        Args:
            target: object whose marked methods are the experiments (defaults to self)
            tracing: optional tracer receiving experiment, stage, notice and breach events
        """
        self._experiments: Dict[str, Callable] = {}
        self._tags: Dict[str, str] = {}
        self._target = target
        self.tracing = tracing
        if target is not None and tracing is not None and hasattr(target, "tracing"):
            target.tracing = tracing
        self._discover_experiments()

    @staticmethod
    def register_as_experiment(func: Optional[Callable] = None, *, name: Optional[str] = None,
                               tag: str = "") -> Callable:
        """
        Decorator marking a method as an experiment.

        Args:
            func: the method (when used without arguments)
            name: experiment name, defaults to the method name with dashes
            tag: statement tag the experiment's verdict instantiates
        """
        def decorator(f: Callable) -> Callable:
            @wraps(f)
            def wrapper(*args, **kwargs):
                return f(*args, **kwargs)

            wrapper._is_experiment = True
            wrapper._experiment_name = name or f.__name__.replace("_", "-")
            wrapper._experiment_tag = tag
            wrapper._original_func = f
            return wrapper

        if func is None:
            return decorator
        return decorator(func)

    def _discover_experiments(self):
        scan_target = self._target if self._target is not None else self
        for attr_name in dir(scan_target):
            if attr_name.startswith("_"):
                continue
            attr = getattr(scan_target, attr_name)
            if callable(attr) and getattr(attr, "_is_experiment", False):
                self._experiments[attr._experiment_name] = attr
                self._tags[attr._experiment_name] = attr._experiment_tag

    def get_experiments(self) -> Dict[str, Callable]:
        return self._experiments

    def list_experiments(self) -> List[Dict[str, str]]:
        """Name, tag and first docstring line of every experiment, sorted by name."""
        out = []
        for name in sorted(self._experiments):
            doc = inspect.getdoc(self._experiments[name]._original_func) or ""
            out.append({"name": name, "tag": self._tags[name], "summary": doc.split("\n", 1)[0]})
        return out

    def execute(self, name: str, **kwargs) -> ExperimentResult:
        """
        Run an experiment by name.

        Notices raised while it runs are collected; exceptions become ``error`` with
        ``error_kind`` 'input', 'consistency' or 'internal'.

        Args:
            name (str): experiment name
            **kwargs: arguments passed to the experiment

        Returns:
            ExperimentResult
        """
        arguments = _plain(kwargs)
        if name not in self._experiments:
            return ExperimentResult(content="", experiment_name=name, error=f"Experiment '{name}' not found",
                                    error_kind="input", metadata={"arguments": arguments})
        tag = self._tags[name]
        if self.tracing:
            self.tracing.start_experiment(name, arguments, metadata={"tag": tag})

        output, error, kind = None, None, None
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DbarLabNotice)
            try:
                output = self._experiments[name](**kwargs)
            except ConsistencyError as e:
                error, kind = str(e), "consistency"
            except (InvalidInputError, ValidationError, OSError) as e:
                error, kind = str(e), "input"
            except Exception as e:
                logger.exception("experiment %s failed", name)
                error, kind = f"{type(e).__name__}: {e}", "internal"

        notices: List[str] = []
        for w in caught:
            if issubclass(w.category, DbarLabNotice):
                message = str(w.message)
                if message not in notices:
                    notices.append(message)
            else:
                logger.warning("%s: %s", w.category.__name__, w.message)
        if self.tracing:
            for message in notices:
                self.tracing.record_notice(name, message)

        if error is not None:
            if self.tracing:
                self.tracing.record_error(name, error, metadata={"kind": kind})
                self.tracing.end_experiment(name, success=False)
            return ExperimentResult(content="", experiment_name=name, tag=tag, notices=notices, error=error,
                                    error_kind=kind, metadata={"arguments": arguments})

        if not isinstance(output, ExperimentOutput):
            output = ExperimentOutput(report=output, verdict="")
        breaches = [_plain(b) for b in output.breaches]
        if self.tracing:
            for b in output.breaches:
                self.tracing.record_breach(name, b["quantity"], b["value"], b["tolerance"], stage=b.get("stage"))
            self.tracing.end_experiment(name, result=output.verdict, metadata={"tag": output.tag or tag})
        return ExperimentResult(
            content=_plain(output.report),
            experiment_name=name,
            tag=output.tag or tag,
            verdict=output.verdict,
            metadata={"arguments": arguments, "plots": list(output.plots)},
            notices=notices,
            breaches=breaches,
            tables={stem: _plain(rows) for stem, rows in output.tables.items()},
        )


experiment = ExperimentKit.register_as_experiment


class DbarExperiments:
    """The experiments behind the command-line subcommands."""

    def __init__(self, seed: int = 0, out: Optional[Path] = None, plots: bool = False,
                 tracing: Optional[TracingKit] = None):
        self.seed = seed
        self.out = Path(out) if out is not None else None
        self.plots = plots
        self.tracing = tracing

    @contextmanager
    def _stage(self, experiment_name: str, stage: str, summary: Optional[Dict[str, Any]] = None):
        summary = {} if summary is None else summary
        if self.tracing:
            self.tracing.start_stage(experiment_name, stage)
        yield summary
        if self.tracing:
            self.tracing.end_stage(experiment_name, stage, result=summary or None)

    def _plot(self, kind: str, stem: str, *args, **kwargs) -> List[str]:
        if not (self.plots and self.out is not None):
            return []
        path = self.out / "plots" / f"{stem}.svg"
        writer = plots.heatmap if kind == "heatmap" else plots.line_plot
        written, notices = writer(*args[:1], path, *args[1:], **kwargs)
        for message in notices:
            warnings.warn(message, DbarLabNotice, stacklevel=2)
        return [written] if written else []

    # ------------------------------------------------------------ hermitian forms

    @experiment(name="lemma5", tag="Lemma5")
    def lemma5(self, count: int = 100, n: int = 4, frames: int = 2000, tol: float = 1e-9) -> ExperimentOutput:
        """Frame sums against q-eigensums on random Hermitian matrices, q = 1 .. n-1."""
        rng = np.random.default_rng(self.seed)
        rows, breaches = [], []
        worst_margin, worst_gap, worst_chain = math.inf, 0.0, 0.0
        for i in range(count):
            a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            H = HermitianMatrix.from_array(a)
            for q in range(1, n):
                report = check_lemma5(H, q, 0.0, frames=frames, seed=self.seed + i, tol=tol)
                chain = eigensum_monotonicity(H, q)
                margin = report.min_frame_sum - report.min_eigensum
                worst_margin, worst_gap = min(worst_margin, margin), max(worst_gap, report.equality_gap)
                worst_chain = max(worst_chain, chain)
                rows.append({"matrix": i, "q": q, "min_eigensum": report.min_eigensum,
                             "min_frame_sum": report.min_frame_sum, "equality_gap": report.equality_gap,
                             "frames_above_bound": report.frames_above_bound})
                if not report.frames_above_bound:
                    breaches.append(breach(f"frame sum below eigensum (matrix {i}, q={q})", -margin, tol))
                if not report.equality_frame_found:
                    breaches.append(breach(f"eigenvector frame gap (matrix {i}, q={q})", report.equality_gap, tol))
        verdict = "passed" if not breaches else f"failed ({len(breaches)} breaches)"
        summary = {"matrices": count, "n": n, "q": list(range(1, n)), "frames": frames,
                   "min_margin": worst_margin, "max_equality_gap": worst_gap,
                   "max_monotonicity_residual": worst_chain}
        return ExperimentOutput(report=summary, verdict=verdict, tables={"lemma5": rows}, breaches=breaches)

    @experiment(name="pq-check", tag="Lemma5")
    def pq_check(self, cert: str) -> ExperimentOutput:
        """Verify a (P_q) certificate file sample by sample."""
        verdict = verify_pq_certificate(PqCertificate.load(str(cert)))
        breaches = [] if verdict.passed else [breach("worst q-eigensum margin", verdict.worst_margin, 0.0)]
        return ExperimentOutput(report=verdict.model_dump(by_alias=True), verdict="pass" if verdict.passed else "fail",
                                breaches=breaches)

    # ------------------------------------------------------------ planar potential

    @experiment(name="dirichlet", tag="Thm10")
    def dirichlet(self, shape: Optional[str] = None, mask: Optional[str] = None, N: int = 256) -> ExperimentOutput:
        """Smallest Dirichlet eigenvalue of a built-in shape or a mask file."""
        if (shape is None) == (mask is None):
            raise InvalidInputError("give exactly one of shape or mask", field="shape")
        grid = shape_grid(shape, N) if shape is not None else GridSet.load(str(mask))
        label = shape or Path(mask).stem
        with self._stage("dirichlet", label):
            eig = dirichlet_ground_state(grid)
        row = {"shape": label, "N": N if shape else None, "h": grid.h, "nodes": grid.count(), "lam": eig.lam,
               "residual": eig.residual, "reference": REFERENCE_EIGENVALUES.get(label), "relative_error": None}
        breaches = []
        if row["reference"] is not None:
            row["relative_error"] = abs(eig.lam - row["reference"]) / row["reference"]
            if row["relative_error"] > REFERENCE_TOLERANCE[label]:
                breaches.append(breach(f"{label} eigenvalue vs continuum", row["relative_error"],
                                       REFERENCE_TOLERANCE[label]))
        x, y = grid.x, grid.y
        written = self._plot("heatmap", f"dirichlet_{label}", eig.v, f"ground state on {label}",
                             extent=(x[0], x[-1], y[0], y[-1]))
        tables = {"dirichlet": [row], "dirichlet_grid": grid_rows(grid, eig.v)}
        return ExperimentOutput(report=row, verdict=f"lambda={eig.lam:.6g}", tables=tables,
                                breaches=breaches, plots=written)

    # ------------------------------------------------------------ hartogs witness

    @experiment(name="hartogs", tag="Thm10")
    def hartogs(self, mask: Optional[str] = None, shape: str = "swiss", stages: int = 6, grid: int = 256,
                epsilons: Optional[Sequence[float]] = None, smooth: bool = False,
                period_tol: float = 1e-6) -> ExperimentOutput:
        """Witness forms u_1 .. u_K on a Hartogs domain over W and the compactness-estimate sweep."""
        W = GridSet.load(str(mask)) if mask is not None else shape_grid(shape, grid)
        with self._stage("hartogs", "weight"):
            spec = build_weight_spec(W, stages, smooth=smooth)
        notices = list(spec.notices)
        forms, energies = [], []
        for k in range(1, spec.stages + 1):
            with self._stage("hartogs", f"k={k}") as summary:
                wf = witness_form(spec, k, period_tol=period_tol)
                forms.append(wf)
                energies.append(energy(spec, wf, notices))
                summary.update({"n_k": wf.n_k, "N0": wf.norms.N0, "Q": energies[-1].Q})
        violation = violation_report(forms, energies, epsilons)
        run = HartogsRun(spec=spec, forms=forms, energies=energies, violation=violation,
                         catlin=catlin_sanity(spec, forms, energies), notices=notices)

        breaches = _hartogs_breaches(run, period_tol)
        slope = None
        ns = np.array([f.n_k for f in forms], dtype=float)
        nneg = np.array([f.norms.Nneg for f in forms])
        if len(forms) >= 2 and np.all(nneg > 0) and np.unique(ns).size > 1:
            slope = float(np.polyfit(np.log(ns), np.log(nneg), 1)[0])
        report = {
            "stages": run.table(),
            "rayleigh": [e.model_dump() for e in spec.rayleigh.entries()],
            "lambda_bounded": spec.rayleigh.lambda_bounded,
            "weights": spec.audit.model_dump(),
            "extension": spec.extension.report.model_dump() if spec.extension else None,
            "norms": [f.norms.model_dump() for f in forms],
            "energies": [e.model_dump() for e in energies],
            "energy_uniform": run.energy_uniform,
            "nneg_slope": slope,
            "violation": violation.model_dump(),
            "catlin": [r.model_dump() for r in run.catlin],
        }
        sweep = [{"epsilon": row.epsilon, "C": C, "max_deficit": d, "falsified": row.falsified}
                 for row in violation.rows for C, d in zip(violation.C_values, row.max_deficits)]
        tables = {
            "hartogs_stages": run.table(),
            "rayleigh": report["rayleigh"],
            "violation": sweep,
            "hartogs_catlin": [r.model_dump() for r in run.catlin],
        }
        written = []
        if forms:
            ks = [f.k for f in forms]
            written += self._plot("line", "hartogs_norms",
                                  {"N0": (ks, [f.norms.N0 for f in forms]), "Q": (ks, [e.Q for e in energies]),
                                   "Nneg": (ks, list(nneg))},
                                  "witness norms by stage", "k", "value", log_y=True)
            g = spec.grid
            written += self._plot("heatmap", "hartogs_phi", spec.Phi, "weight potential",
                                  extent=(g.x[0], g.x[-1], g.y[0], g.y[-1]))
        return ExperimentOutput(report=report, verdict=violation.verdict, tables=tables, breaches=breaches,
                                plots=written)

    # ------------------------------------------------------------ wedge restriction

    @experiment(name="wedge", tag="Prop9")
    def wedge(self, m: int = 20, audit: int = 3) -> ExperimentOutput:
        """Bergman restriction of the wedge family f_1 .. f_m and its separation."""
        with self._stage("wedge", f"m={m}"):
            report = restriction_witness(m=m, audit=audit, seed=self.seed)
        breaches = []
        if report.max_quadrature_deviation > 1e-8:
            breaches.append(breach("closed form vs quadrature", report.max_quadrature_deviation, 1e-8))
        rows = [r.model_dump() for r in report.rows]
        written = self._plot("line", "wedge_norms",
                             {"restricted": ([r.j for r in report.rows], [r.norm_restricted for r in report.rows]),
                              "limit": ([1, m], [report.norm_limit] * 2)},
                             "restriction norms", "j", "norm")
        return ExperimentOutput(report=report, verdict=report.verdict, tables={"wedge": rows}, breaches=breaches,
                                plots=written)

    # ------------------------------------------------------------ reinhardt domains

    @experiment(name="reinhardt", tag="Thm12")
    def reinhardt(self, model: str, q: int = 1) -> ExperimentOutput:
        """Compactness verdict for N_q on a Reinhardt model."""
        verdict = compactness_verdict(load_model(model), q, seed=self.seed)
        return ExperimentOutput(report=verdict, verdict=verdict.verdict, tag=verdict.tag,
                                tables={"reinhardt": [_verdict_row(verdict)]})

    @experiment(name="reinhardt-matrix", tag="Rmk10")
    def reinhardt_matrix(self) -> ExperimentOutput:
        """Verdicts on the built-in models against their known compactness."""
        rows, verdicts, breaches = [], [], []
        for name, n, q, expected in VERDICT_MATRIX:
            with self._stage("reinhardt-matrix", f"{name}{n} q={q}"):
                v = compactness_verdict(builtin(name, n), q, seed=self.seed)
            verdicts.append(v)
            rows.append({**_verdict_row(v), "expected_compact": expected, "matches": v.compact is expected})
            if v.compact is not expected:
                breaches.append(breach(f"{name}{n} q={q} verdict {v.verdict}", 1.0, 0.0))
        matched = sum(r["matches"] for r in rows)
        return ExperimentOutput(report={"verdicts": verdicts, "matched": matched, "total": len(rows)},
                                verdict=f"{matched}/{len(rows)} verdicts as expected",
                                tables={"reinhardt": rows}, breaches=breaches)

    @experiment(name="commutator", tag="Prop4")
    def commutator(self, model: str, j: int = 2, cutoff: int = 64) -> ExperimentOutput:
        """Singular values of [P, zbar_j] up to a degree cutoff, with the decay profile."""
        domain = load_model(model)
        with self._stage("commutator", f"cutoff={cutoff}"):
            report = commutator_report(domain, j, cutoff)
        for message in report.notices:
            warnings.warn(message, DbarLabNotice, stacklevel=2)
        decay = np.array(report.decay)
        degrees = np.arange(len(decay))
        tail = degrees >= len(decay) // 2
        slope = None
        if tail.sum() >= 2 and np.all(decay[tail] > 0):
            slope = float(np.polyfit(np.log(degrees[tail] + 1.0), np.log(decay[tail]), 1)[0])
        verdict = "decaying" if slope is not None and slope < -0.1 else "bounded below"
        content = {"report": report, "decay_slope": slope, "canonical": None}
        if domain.n == 2 and domain.is_product:
            content["canonical"] = canonical_solution_witness(domain, m_max=min(20, cutoff), cutoff=cutoff)
        tables = {
            "singular_values": [{"rank": i + 1, "sigma": s} for i, s in enumerate(report.singular_values)],
            "commutator_decay": [{"degree": int(d), "max_sigma": float(s)} for d, s in zip(degrees, decay)],
        }
        written = self._plot("line", f"commutator_{domain.name}_j{j}", {domain.name: (degrees, decay)},
                             f"[P, zbar_{j}] decay", "degree", "max singular value")
        return ExperimentOutput(report=content, verdict=verdict, tables=tables, plots=written)

    # ------------------------------------------------------------ diameter bound

    @experiment(name="eq3-sanity", tag="Eq3-sanity")
    def eq3_sanity(self, m_max: int = 20, q: int = 1) -> ExperimentOutput:
        """(q/D^2)|u|^2 <= e Q(u) on product-example forms over two polydiscs."""
        rows, breaches = [], []
        for domain in (builtin("bidisc"), polydisc([0.5, 2.0], name="polydisc_0.5x2")):
            for r in product_form_sanity(domain, m_max=m_max, q=q):
                rows.append({"model": domain.name, "m": r.k, "lhs": r.lhs, "rhs": r.rhs, "ok": r.ok})
                if not r.ok:
                    breaches.append(breach(f"{domain.name} m={r.k}", r.lhs, r.rhs))
        violations = sum(not r["ok"] for r in rows)
        return ExperimentOutput(report={"forms": len(rows), "violations": violations, "rows": rows},
                                verdict=f"{violations} violations", tables={"catlin": rows}, breaches=breaches)


def _verdict_row(v) -> Dict[str, Any]:
    return {"model": v.model, "n": v.n, "q": v.q, "verdict": v.verdict, "tag": v.tag,
            "flat_pieces": len(v.flat_pieces), "hyperplane_varieties": " ".join(map(str, v.hyperplane_varieties))}


def _hartogs_breaches(run: HartogsRun, period_tol: float) -> List[Dict[str, Any]]:
    out = []
    audit = run.spec.audit
    for flag in ("mass_ok", "sup_monotone_ok", "tail_ok", "divisibility_ok", "disjoint_ok", "c_in_range_ok"):
        if not getattr(audit, flag):
            value = audit.mass_deviation if flag == "mass_ok" else 1.0
            out.append(breach(f"weight audit {flag}", value, 0.0))
    for f in run.forms:
        stage = f"k={f.k}"
        deviation = abs(f.norms.f_norm_sq - math.pi)
        if deviation > 1e-4:
            out.append(breach("|f_k|^2 - pi", deviation, 1e-4, stage))
        for p in f.norms.periods:
            if not p.within_tolerance:
                out.append(breach(f"period around hole {p.hole}", p.relative_deviation or p.distance_to_lattice,
                                  period_tol, stage))
    for e in run.energies:
        stage = f"k={e.k}"
        if not e.gradient_identity_ok:
            out.append(breach("gradient identity", e.gradient_identity_gap, e.gradient_identity_tol,
                              stage))
        if e.first_term > e.first_term_bound * (1 + 1e-9):
            out.append(breach("first Kohn-Morrey term", e.first_term, e.first_term_bound, stage))
    for r in run.catlin:
        if not r.ok:
            out.append(breach("diameter bound", r.lhs, r.rhs, f"k={r.k}"))
    if not run.energy_uniform:
        Bs = [e.B for e in run.energies]
        out.append(breach("B_k spread", max(Bs) / min(max(b, 1.0) for b in Bs), 10.0))
    return out


# ---------------------------------------------------------------- suite and reports

def run_suite(kit: ExperimentKit, stages: int = 6, grid: int = 256, m: int = 20,
              cutoff: int = 64) -> List[ExperimentResult]:
    """The default suite: one tagged entry per statement."""
    return [
        kit.execute("lemma5"),
        kit.execute("hartogs", shape="swiss", stages=stages, grid=grid),
        kit.execute("wedge", m=m),
        kit.execute("reinhardt-matrix"),
        kit.execute("commutator", model="bidisc", j=2, cutoff=cutoff),
        kit.execute("eq3-sanity"),
    ]


def _dumps(data: Any) -> str:
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def grid_rows(grid: GridSet, values: np.ndarray) -> List[Dict[str, Any]]:
    """Long-format dump of a grid field: one (x, y, value) row per node of the set."""
    rows, cols = np.nonzero(grid.mask)
    return [{"x": grid.x[c], "y": grid.y[r], "value": values[r, c]} for r, c in zip(rows, cols)]


def write_csv(rows: Sequence[Dict[str, Any]], path: Path):
    """Rows as CSV; the header is the union of keys in first-seen order."""
    header: List[str] = []
    for row in rows:
        header += [k for k in row if k not in header]
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if v is None else v for k, v in row.items()})


def write_result(result: ExperimentResult, out: Path) -> List[Path]:
    """Write ``<experiment>.json`` and one CSV per table into ``out``; returns the written paths."""
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{result.experiment_name}.json"
    path.write_text(_dumps(_plain(result.model_dump())), encoding="utf-8")
    written = [path]
    for stem, rows in sorted(result.tables.items()):
        if rows:
            csv_path = out / f"{stem}.csv"
            write_csv(rows, csv_path)
            written.append(csv_path)
    return written


def report_bundle(results: Iterable[ExperimentResult], path: Optional[Path] = None) -> Dict[str, Any]:
    """
    Aggregate verdicts and their statement tags into one document.

    Args:
        results: experiment results, in run order
        path: where to write ``bundle.json`` (not written when None)

    Returns:
        The bundle as a dict
    """
    entries = []
    for r in results:
        entries.append({
            "experiment": r.experiment_name,
            "tag": r.tag,
            "verdict": r.verdict,
            "success": r.success,
            "error": r.error,
            "error_kind": r.error_kind,
            "notices": list(r.notices),
            "breaches": list(r.breaches),
            "arguments": (r.metadata or {}).get("arguments", {}),
        })
    bundle = _plain({"entries": entries, "count": len(entries), "tags": [e["tag"] for e in entries]})
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(_dumps(bundle), encoding="utf-8")
    return bundle
