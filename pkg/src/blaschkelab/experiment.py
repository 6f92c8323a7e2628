"""Ray degeneration experiment: solve along t * b and tabulate the ledger.

One row per ray parameter t: solve the structure equation for t * b,
compute areas, the entropy floor, both scaling upper bounds, orbit-count
entropy estimates for the solved and the flat comparison metric, and the
three checked inequalities.  A failing t produces an error row instead
of aborting; partial tables are the product of runs near resource caps.

Entropy estimates on ray rows use a pragmatic window [0.4, 0.9] * Q with
Q = half the largest orbit distance: the provable horizon collapses for
flat comparison metrics and for strongly stretched solved metrics, and
the truncation beyond it biases the fitted slope low.  Both radii are
reported per row so the bias is visible.  The sandwich upper bound is
calibrated against the background metric measured with the same window
rule, which cancels the common bias to first order, plus a stderr
margin.
"""

import io
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (
    ENTROPY_CONSTANT_DISCLAIMER,
    FLAT_COMPARISON_SCALE,
    area,
    area_sandwich,
    check_area_lemma,
    check_pointwise_bound,
    katok_lower_bound,
    ray_upper_bound,
    ray_upper_bound_alt,
)
from .cubic import constant_differential, differential_norm, flat_metric, poincare_series
from .entropy import (
    DEFAULT_WINDOW,
    build_cover_graph,
    estimate_entropy,
    horizon_radius,
    orbit_distances,
)
from .errors import (
    ConvergenceWarning,
    DomainError,
    GraphError,
    InsufficientData,
    IoError,
    MeshError,
    NonConvergence,
    ResourceError,
    SolverError,
)
from .fuchsian import octagon_group
from .mesh import MetricField, build_fundamental_mesh, build_torus_mesh
from .wang import blaschke_metric, solve_wang

log = logging.getLogger(__name__)

_ROW_ERRORS = (DomainError, ResourceError, MeshError, NonConvergence,
               SolverError, GraphError, InsufficientData)

#: flattened CSV column order; composite report fields expand in place
CSV_COLUMNS = (
    "t", "normB", "areaBlaschke", "areaFlat", "katokLower",
    "rayUpperBound", "rayUpperBoundAlt",
    "entropyEstimateBlaschke", "entropyEstimateFlat",
    "pointwiseGap", "lemmaGap", "sandwichLeftGap", "sandwichRightGap",
    "solverIterations",
    "horizonBlaschke", "windowLoBlaschke", "windowHiBlaschke", "sparseBlaschke",
    "horizonFlat", "windowLoFlat", "windowHiFlat", "sparseFlat",
    "error",
)

_DIAG_CSV_KEYS = ("horizonBlaschke", "windowLoBlaschke", "windowHiBlaschke",
                  "sparseBlaschke", "horizonFlat", "windowLoFlat",
                  "windowHiFlat", "sparseFlat")


@dataclass
class ExperimentConfig:
    """Inputs of the ray experiment; flat scalars so flags map one-to-one."""

    seedExponent: int = 0
    coefficients: tuple = None
    truncation: int = 4
    refinementLevel: int = 4
    graphRefinement: int = 1
    coverDepth: int = 6
    raySchedule: tuple = (0.0, 1.0, 4.0, 16.0, 64.0)
    solverTolerance: float = 1e-8
    fitSigmas: float = 2.0
    raySphereConstant: float = 1.0
    nodeCap: int = 40_000_000
    outputPath: str = None
    torusMode: bool = False
    graphConvergence: bool = True

    def validate(self):
        sched = tuple(float(t) for t in self.raySchedule)
        if len(sched) == 0:
            raise DomainError("raySchedule must be nonempty")
        if any(not math.isfinite(t) or t < 0 for t in sched):
            raise DomainError("raySchedule entries must be finite and >= 0")
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise DomainError("raySchedule must be strictly increasing")
        if self.coefficients is not None and len(self.coefficients) != 5:
            raise DomainError("coefficient vector must have length 5")
        if self.coefficients is None and not 0 <= int(self.seedExponent) <= 4:
            raise DomainError("seedExponent must lie in 0..4")
        if not 1 <= int(self.truncation) <= 8:
            raise DomainError("truncation must lie in 1..8")
        low = 1 if self.torusMode else 0
        if not low <= int(self.refinementLevel) <= 6:
            raise DomainError(f"refinementLevel must lie in {low}..6")
        if not low <= int(self.graphRefinement) <= int(self.refinementLevel):
            raise DomainError("graphRefinement must lie between "
                              f"{low} and refinementLevel")
        if not 1 <= int(self.coverDepth) <= 8:
            raise DomainError("coverDepth must lie in 1..8")
        if not 0 < float(self.solverTolerance) <= 1e-2:
            raise DomainError("solverTolerance must lie in (0, 1e-2]")
        if float(self.fitSigmas) < 0:
            raise DomainError("fitSigmas must be >= 0")
        if float(self.raySphereConstant) <= 0:
            raise DomainError("raySphereConstant must be positive")
        if int(self.nodeCap) < 1000:
            raise DomainError("nodeCap must be at least 1000")
        return self


@dataclass
class RayReportRow:
    """One ray parameter's results; None cells stay blank in the CSV."""

    t: float
    normB: float = None
    areaBlaschke: float = None
    areaFlat: float = None
    katokLower: float = None
    rayUpperBoundBothConventions: tuple = None
    entropyEstimateBlaschke: float = None
    entropyEstimateFlat: float = None
    pointwiseGap: float = None
    lemmaGap: float = None
    sandwichGaps: tuple = None
    solverIterations: int = None
    horizonDiagnostics: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    error: str = ""


def _restriction_indices(meshSolve, meshGraph):
    """Graph-mesh vertex index into the solve mesh (same chart points)."""
    if meshSolve.torus:
        nS = int(round(math.sqrt(len(meshSolve.positions)))) - 1
        nG = int(round(math.sqrt(len(meshGraph.positions)))) - 1
        step = nS // nG
        j, i = np.divmod(np.arange(len(meshGraph.positions)), nG + 1)
        idx = (j * step) * (nS + 1) + i * step
    else:
        # disk refinements append midpoints, so coarse vertices are a prefix
        idx = np.arange(len(meshGraph.positions))
    if not np.array_equal(meshSolve.positions[idx], meshGraph.positions):
        raise GraphError("graph mesh vertices are not a subset of the solve mesh")
    return idx


def _ray_estimate(cover):
    """Pragmatic-window estimate plus the provable horizon, as a dict."""
    dist = np.array([d for _, d in orbit_distances(cover)])
    pragmatic = 0.5 * float(dist.max())
    est = estimate_entropy(dist, pragmatic)
    return est, horizon_radius(cover)


def _diagnostics(tag, est, provable):
    return {
        f"horizon{tag}": provable,
        f"windowLo{tag}": est.window[0],
        f"windowHi{tag}": est.window[1],
        f"sparse{tag}": est.sparseWindow,
        f"stderr{tag}": est.stderr,
    }


class _Lab:
    """Meshes, group, base differential and baseline shared by all rows."""

    def __init__(self, cfg):
        self.cfg = cfg
        if cfg.torusMode:
            self.group = None
            self.meshSolve = build_torus_mesh(cfg.refinementLevel)
            self.meshGraph = build_torus_mesh(cfg.graphRefinement)
            self.bhat = constant_differential(self.meshSolve, 1.0)
        else:
            self.group = octagon_group()
            self.meshSolve = build_fundamental_mesh(self.group, cfg.refinementLevel)
            self.meshGraph = build_fundamental_mesh(self.group, cfg.graphRefinement)
            seed = cfg.coefficients if cfg.coefficients is not None else cfg.seedExponent
            self.bhat = poincare_series(self.group, seed, cfg.truncation, self.meshSolve)
        self.restrict = _restriction_indices(self.meshSolve, self.meshGraph)
        self.baseline, self.baselinePlus = self._background_estimates()

    def _cover(self, factorOnGraph, mesh=None):
        return build_cover_graph(mesh or self.meshGraph, MetricField(factorOnGraph),
                                 self.group, self.cfg.coverDepth, cap=self.cfg.nodeCap)

    def _background_estimates(self):
        """Baseline slope for calibration, optionally at two graph levels."""
        est, _ = _ray_estimate(self._cover(self.meshGraph.background_metric().factor))
        plus = None
        if self.cfg.graphConvergence and self.cfg.graphRefinement < self.cfg.refinementLevel:
            if self.cfg.torusMode:
                finer = build_torus_mesh(self.cfg.graphRefinement + 1)
            else:
                finer = build_fundamental_mesh(self.group, self.cfg.graphRefinement + 1)
            plus, _ = _ray_estimate(self._cover(finer.background_metric().factor, mesh=finer))
        return est, plus

    def entropy_upper(self, est):
        """Baseline-calibrated upper bound with a stderr margin."""
        return (est.slope + self.cfg.fitSigmas * est.stderr) / self.baseline.slope

    def row(self, t):
        cfg = self.cfg
        b = float(t) * self.bhat
        sol = solve_wang(self.meshSolve, b, cfg.solverTolerance)
        normB = differential_norm(b)
        solved = blaschke_metric(self.meshSolve, sol)
        areaB = area(self.meshSolve, solved)
        katok = katok_lower_bound(areaB) if not cfg.torusMode else 0.0

        coverB = self._cover(solved.factor[self.restrict])
        estB, horizonB = _ray_estimate(coverB)
        diag = _diagnostics("Blaschke", estB, horizonB)

        if normB > 0:
            flat_factor = FLAT_COMPARISON_SCALE * np.abs(
                b.vertexSamples[self.restrict]) ** (2.0 / 3.0)
            areaF = area(self.meshSolve, flat_metric(b, FLAT_COMPARISON_SCALE))
            estF, horizonF = _ray_estimate(self._cover(flat_factor))
            diag.update(_diagnostics("Flat", estF, horizonF))
            bounds = (ray_upper_bound(normB, cfg.raySphereConstant),
                      ray_upper_bound_alt(normB, cfg.raySphereConstant))
            flat_slope = estF.slope
        else:
            areaF, estF, bounds, flat_slope = 0.0, None, None, None

        pointwise = check_pointwise_bound(self.meshSolve, sol, b)
        lemma = check_area_lemma(self.meshSolve, sol, b)
        sandwich = area_sandwich(self.meshSolve, sol, b, self.entropy_upper(estB))
        diag["entropyUpper"] = sandwich.extras["entropyUpper"]
        diag["baselineSlope"] = self.baseline.slope
        if t == 0 and self.baselinePlus is not None:
            diag["slopeGraphRefinePlus"] = self.baselinePlus.slope

        return RayReportRow(
            t=float(t),
            normB=normB,
            areaBlaschke=areaB,
            areaFlat=areaF,
            katokLower=katok,
            rayUpperBoundBothConventions=bounds,
            entropyEstimateBlaschke=estB.slope,
            entropyEstimateFlat=flat_slope,
            pointwiseGap=pointwise.gap,
            lemmaGap=lemma.gap,
            sandwichGaps=(sandwich.extras["leftGap"], sandwich.extras["rightGap"]),
            solverIterations=sol.iterations,
            horizonDiagnostics=diag,
            reports={
                "pointwise": pointwise.serialize(prefix=f"t{t:g}."),
                "lemma": lemma.serialize(prefix=f"t{t:g}."),
                "sandwich": sandwich.serialize(prefix=f"t{t:g}."),
            },
        )


def run_ray_experiment(cfg, onRow=None):
    """All scheduled rows, in order; failures become error rows.

    Configuration problems raise DomainError before any computation;
    failures inside a row are captured into that row's error field and
    the run continues.  ``onRow`` is called with each finished row.
    """
    cfg.validate()
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        try:
            lab = _Lab(cfg)
        except _ROW_ERRORS as exc:
            # shared setup failed: every row inherits the failure
            log.warning("ray experiment setup failed: %s", exc)
            message = f"{type(exc).__name__}: {exc}"
            for t in cfg.raySchedule:
                rows.append(RayReportRow(t=float(t), error=message))
                if onRow is not None:
                    onRow(rows[-1])
            return rows
        for t in cfg.raySchedule:
            try:
                row = lab.row(float(t))
            except _ROW_ERRORS as exc:
                log.warning("ray row t=%g failed: %s", t, exc)
                row = RayReportRow(t=float(t), error=f"{type(exc).__name__}: {exc}")
            rows.append(row)
            if onRow is not None:
                onRow(row)
    return rows


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value.replace(",", ";").replace("\n", " ")
    return f"{float(value):.17g}"


def _record(row):
    pair = row.rayUpperBoundBothConventions or (None, None)
    gaps = row.sandwichGaps or (None, None)
    diag = row.horizonDiagnostics or {}
    values = [row.t, row.normB, row.areaBlaschke, row.areaFlat, row.katokLower,
              pair[0], pair[1], row.entropyEstimateBlaschke, row.entropyEstimateFlat,
              row.pointwiseGap, row.lemmaGap, gaps[0], gaps[1], row.solverIterations]
    values += [diag.get(key) for key in _DIAG_CSV_KEYS]
    values.append(row.error)
    return values


def render_csv(rows):
    """The ray table as CSV text; deterministic bytes for a given input."""
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in _record(row)))
    return "\n".join(lines) + "\n"


def render_report(rows, cfg=None):
    """Human-readable ledger: inequalities, diagnostics, disclaimers."""
    out = io.StringIO()
    print("ray degeneration report", file=out)
    print("=" * 23, file=out)
    if cfg is not None:
        print("", file=out)
        print("config:", file=out)
        for key in ("seedExponent", "coefficients", "truncation", "refinementLevel",
                    "graphRefinement", "coverDepth", "raySchedule", "solverTolerance",
                    "fitSigmas", "raySphereConstant", "torusMode"):
            print(f"  {key}={getattr(cfg, key)}", file=out)
    print("", file=out)
    print("tolerance classes: algebraic (1e-10), discretization (mesh-order,", file=out)
    print("measured from the background quadrature defect), estimator", file=out)
    print("(statistical, fit stderr).", file=out)
    print("", file=out)
    print(ENTROPY_CONSTANT_DISCLAIMER, file=out)
    print("", file=out)
    print("entropy estimates use the pragmatic window [0.4, 0.9] * Q with", file=out)
    print("Q = half the largest orbit distance; distances fitted beyond the", file=out)
    print("provable horizon bias the slope low.  Both radii appear below.", file=out)
    for row in rows:
        print("", file=out)
        print(f"--- t = {row.t:g} ---", file=out)
        if row.error:
            print(f"ERROR: {row.error}", file=out)
            continue
        for name in ("pointwise", "lemma", "sandwich"):
            print(row.reports[name], file=out)
        for key, value in sorted(row.horizonDiagnostics.items()):
            if isinstance(value, float):
                print(f"t{row.t:g}.{key}={value:.17g}", file=out)
            else:
                print(f"t{row.t:g}.{key}={value}", file=out)
    errors = sum(1 for row in rows if row.error)
    print("", file=out)
    print(f"rows: {len(rows)}  error rows: {errors}", file=out)
    return out.getvalue()


def render_svg(rows):
    """Log-log polyline of the solved-metric estimate against normB.

    Returns None when fewer than two rows carry positive values; the
    plot is optional by contract.
    """
    pts = [(row.normB, row.entropyEstimateBlaschke) for row in rows
           if not row.error and row.normB and row.entropyEstimateBlaschke
           and row.normB > 0 and row.entropyEstimateBlaschke > 0]
    if len(pts) < 2:
        return None
    xs = [math.log10(p[0]) for p in pts]
    ys = [math.log10(p[1]) for p in pts]
    W, H, margin = 480, 360, 50
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    sx = (W - 2 * margin) / (x1 - x0 if x1 > x0 else 1.0)
    sy = (H - 2 * margin) / (y1 - y0 if y1 > y0 else 1.0)
    path = " ".join(
        f"{margin + (x - x0) * sx:.3f},{H - margin - (y - y0) * sy:.3f}"
        for x, y in zip(xs, ys))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}">\n'
        f'<rect width="{W}" height="{H}" fill="white"/>\n'
        f'<line x1="{margin}" y1="{H - margin}" x2="{W - margin}" '
        f'y2="{H - margin}" stroke="black"/>\n'
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{H - margin}" stroke="black"/>\n'
        f'<text x="{W // 2}" y="{H - 10}" text-anchor="middle" '
        f'font-size="12">log10 normB [{x0:.3f}, {x1:.3f}]</text>\n'
        f'<text x="14" y="{H // 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {H // 2})">log10 entropy estimate '
        f'[{y0:.3f}, {y1:.3f}]</text>\n'
        f'<polyline points="{path}" fill="none" stroke="steelblue" '
        f'stroke-width="1.5"/>\n'
        "</svg>\n"
    )


def emit_report(rows, outputPath, cfg=None):
    """Write ray.csv, report.txt and (when plottable) entropy_vs_norm.svg.

    Refuses empty input before touching the filesystem; unwritable
    paths raise IoError.  Returns the written paths.
    """
    if not rows:
        raise DomainError("no rows to report")
    target = Path(outputPath)
    try:
        target.mkdir(parents=True, exist_ok=True)
        written = []
        out = target / "ray.csv"
        out.write_text(render_csv(rows))
        written.append(out)
        out = target / "report.txt"
        out.write_text(render_report(rows, cfg))
        written.append(out)
        svg = render_svg(rows)
        if svg is not None:
            out = target / "entropy_vs_norm.svg"
            out.write_text(svg)
            written.append(out)
    except OSError as exc:
        raise IoError(f"cannot write report under {outputPath}: {exc}") from exc
    return written
