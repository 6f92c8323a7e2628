"""HTTP face of the laboratory: pydantic models over the core calls.

Endpoints are pure compute: requests carry configuration, responses
carry numbers (no filesystem side effects), so a thin client can drive
everything and write its own files.  Exceptions from the core map to
4xx/5xx with the package error name in the detail string.
"""

import logging
import warnings
from contextlib import contextmanager

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .analysis import (
    FLAT_COMPARISON_SCALE,
    area,
    area_sandwich,
    check_area_lemma,
    check_pointwise_bound,
    katok_lower_bound,
)
from .cubic import constant_differential, differential_norm, flat_metric, poincare_series
from .entropy import build_cover_graph, estimate_entropy, horizon_radius, orbit_distances
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
from .experiment import ExperimentConfig, _restriction_indices, run_ray_experiment
from .fuchsian import octagon_group
from .mesh import MetricField, ScalarField, build_fundamental_mesh, build_torus_mesh
from .wang import ConformalFactorField, blaschke_metric, curvature, solve_wang

log = logging.getLogger(__name__)

app = FastAPI(title="blaschkelab", version="0.1.0")

_STATUS = {
    DomainError: 422,
    InsufficientData: 422,
    ResourceError: 413,
    MeshError: 500,
    GraphError: 500,
    SolverError: 500,
    NonConvergence: 500,
    IoError: 500,
}


@contextmanager
def _mapped_errors():
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            yield
    except tuple(_STATUS) as exc:
        code = _STATUS[type(exc)]
        raise HTTPException(status_code=code,
                            detail=f"{type(exc).__name__}: {exc}") from exc


_GROUP = None


def _group():
    global _GROUP
    if _GROUP is None:
        _GROUP = octagon_group()
    return _GROUP


def _mesh(torusMode, refinementLevel):
    if torusMode:
        return build_torus_mesh(refinementLevel)
    return build_fundamental_mesh(_group(), refinementLevel)


def _differential(mesh, torusMode, seedExponent, coefficients, truncation, t):
    if torusMode:
        return constant_differential(mesh, float(t))
    seed = tuple(coefficients) if coefficients is not None else int(seedExponent)
    return float(t) * poincare_series(_group(), seed, truncation, mesh)


class SolveRequest(BaseModel):
    torusMode: bool = False
    refinementLevel: int = Field(default=3, ge=0, le=6)
    seedExponent: int = Field(default=0, ge=0, le=4)
    coefficients: list[float] | None = None
    truncation: int = Field(default=4, ge=1, le=8)
    t: float = Field(default=1.0, ge=0)
    tolerance: float = Field(default=1e-8, gt=0, le=1e-2)
    includeField: bool = True


class SolveResponse(BaseModel):
    iterations: int
    finalResidualNorm: float
    supU: float
    kappaSup: float
    normB: float
    areaBlaschke: float
    areaFlat: float
    katokLower: float
    pointwiseGap: float
    lemmaGap: float
    identityResidual: float
    uValues: list[float] | None = None


@app.post("/solve", response_model=SolveResponse)
def solve(req: SolveRequest) -> SolveResponse:
    with _mapped_errors():
        mesh = _mesh(req.torusMode, req.refinementLevel)
        b = _differential(mesh, req.torusMode, req.seedExponent,
                          req.coefficients, req.truncation, req.t)
        sol = solve_wang(mesh, b, req.tolerance)
        solved = blaschke_metric(mesh, sol)
        areaB = area(mesh, solved)
        normB = differential_norm(b)
        areaF = area(mesh, flat_metric(b, FLAT_COMPARISON_SCALE)) if normB > 0 else 0.0
        pointwise = check_pointwise_bound(mesh, sol, b)
        lemma = check_area_lemma(mesh, sol, b)
        return SolveResponse(
            iterations=sol.iterations,
            finalResidualNorm=sol.finalResidualNorm,
            supU=float(np.max(np.abs(sol.u.values))),
            kappaSup=float(np.max(np.abs(curvature(mesh, sol).kappa.values))),
            normB=normB,
            areaBlaschke=areaB,
            areaFlat=areaF,
            katokLower=katok_lower_bound(areaB) if not req.torusMode else 0.0,
            pointwiseGap=pointwise.gap,
            lemmaGap=lemma.gap,
            identityResidual=lemma.extras["identityResidual"],
            uValues=sol.u.values.tolist() if req.includeField else None,
        )


class EntropyRequest(BaseModel):
    torusMode: bool = False
    metric: str = Field(default="background", pattern="^(background|blaschke|flat)$")
    refinementLevel: int = Field(default=3, ge=0, le=6)
    graphRefinement: int = Field(default=1, ge=0, le=6)
    coverDepth: int = Field(default=5, ge=1, le=8)
    seedExponent: int = Field(default=0, ge=0, le=4)
    coefficients: list[float] | None = None
    truncation: int = Field(default=4, ge=1, le=8)
    t: float = Field(default=1.0, ge=0)
    tolerance: float = Field(default=1e-8, gt=0, le=1e-2)
    windowMode: str = Field(default="horizon", pattern="^(horizon|pragmatic|explicit)$")
    windowLo: float | None = None
    windowHi: float | None = None
    nodeCap: int = Field(default=40_000_000, ge=1000)


class EntropyResponse(BaseModel):
    slope: float
    stderr: float
    windowLo: float
    windowHi: float
    horizonRadius: float
    fitRadius: float
    sparseWindow: bool
    tileCount: int
    counts: list[list[float]]


@app.post("/entropy", response_model=EntropyResponse)
def entropy(req: EntropyRequest) -> EntropyResponse:
    with _mapped_errors():
        if req.graphRefinement > req.refinementLevel and req.metric != "background":
            raise DomainError("graphRefinement must not exceed refinementLevel")
        graph_mesh = _mesh(req.torusMode, req.graphRefinement)
        group = None if req.torusMode else _group()
        if req.metric == "background":
            g = graph_mesh.background_metric()
        else:
            solve_mesh = _mesh(req.torusMode, req.refinementLevel)
            b = _differential(solve_mesh, req.torusMode, req.seedExponent,
                              req.coefficients, req.truncation, req.t)
            idx = _restriction_indices(solve_mesh, graph_mesh)
            if req.metric == "blaschke":
                sol = solve_wang(solve_mesh, b, req.tolerance)
                g = MetricField(blaschke_metric(solve_mesh, sol).factor[idx])
            else:
                g = MetricField(FLAT_COMPARISON_SCALE
                                * np.abs(b.vertexSamples[idx]) ** (2.0 / 3.0))
        cover = build_cover_graph(graph_mesh, g, group, req.coverDepth, cap=req.nodeCap)
        dist = np.array([d for _, d in orbit_distances(cover)])
        provable = horizon_radius(cover)
        if req.windowMode == "pragmatic":
            fit_radius = 0.5 * float(dist.max())
            est = estimate_entropy(dist, fit_radius)
        elif req.windowMode == "explicit":
            if req.windowLo is None or req.windowHi is None:
                raise DomainError("explicit window needs windowLo and windowHi")
            fit_radius = provable
            est = estimate_entropy(dist, provable, (req.windowLo, req.windowHi))
        else:
            fit_radius = provable
            est = estimate_entropy(dist, provable)
        return EntropyResponse(
            slope=est.slope,
            stderr=est.stderr,
            windowLo=est.window[0],
            windowHi=est.window[1],
            horizonRadius=provable,
            fitRadius=fit_radius,
            sparseWindow=est.sparseWindow,
            tileCount=len(cover.tiles),
            counts=[[r, float(n)] for r, n in est.counts],
        )


class RayRequest(BaseModel):
    seedExponent: int = Field(default=0, ge=0, le=4)
    coefficients: list[float] | None = None
    truncation: int = Field(default=4, ge=1, le=8)
    refinementLevel: int = Field(default=4, ge=0, le=6)
    graphRefinement: int = Field(default=1, ge=0, le=6)
    coverDepth: int = Field(default=6, ge=1, le=8)
    raySchedule: list[float] = Field(default=[0.0, 1.0, 4.0, 16.0, 64.0])
    solverTolerance: float = Field(default=1e-8, gt=0, le=1e-2)
    fitSigmas: float = Field(default=2.0, ge=0)
    raySphereConstant: float = Field(default=1.0, gt=0)
    nodeCap: int = Field(default=40_000_000, ge=1000)
    torusMode: bool = False
    graphConvergence: bool = True

    def to_config(self) -> ExperimentConfig:
        return ExperimentConfig(
            seedExponent=self.seedExponent,
            coefficients=tuple(self.coefficients) if self.coefficients is not None else None,
            truncation=self.truncation,
            refinementLevel=self.refinementLevel,
            graphRefinement=self.graphRefinement,
            coverDepth=self.coverDepth,
            raySchedule=tuple(self.raySchedule),
            solverTolerance=self.solverTolerance,
            fitSigmas=self.fitSigmas,
            raySphereConstant=self.raySphereConstant,
            nodeCap=self.nodeCap,
            torusMode=self.torusMode,
            graphConvergence=self.graphConvergence,
        )


class RayRowModel(BaseModel):
    t: float
    normB: float | None = None
    areaBlaschke: float | None = None
    areaFlat: float | None = None
    katokLower: float | None = None
    rayUpperBoundBothConventions: list[float] | None = None
    entropyEstimateBlaschke: float | None = None
    entropyEstimateFlat: float | None = None
    pointwiseGap: float | None = None
    lemmaGap: float | None = None
    sandwichGaps: list[float] | None = None
    solverIterations: int | None = None
    horizonDiagnostics: dict = {}
    reports: dict = {}
    error: str = ""


class RayResponse(BaseModel):
    rows: list[RayRowModel]
    errorRows: int


@app.post("/ray", response_model=RayResponse)
def ray(req: RayRequest) -> RayResponse:
    with _mapped_errors():
        rows = run_ray_experiment(req.to_config())
        models = [
            RayRowModel(
                t=row.t,
                normB=row.normB,
                areaBlaschke=row.areaBlaschke,
                areaFlat=row.areaFlat,
                katokLower=row.katokLower,
                rayUpperBoundBothConventions=(
                    list(row.rayUpperBoundBothConventions)
                    if row.rayUpperBoundBothConventions is not None else None),
                entropyEstimateBlaschke=row.entropyEstimateBlaschke,
                entropyEstimateFlat=row.entropyEstimateFlat,
                pointwiseGap=row.pointwiseGap,
                lemmaGap=row.lemmaGap,
                sandwichGaps=(list(row.sandwichGaps)
                              if row.sandwichGaps is not None else None),
                solverIterations=row.solverIterations,
                horizonDiagnostics=row.horizonDiagnostics,
                reports=row.reports,
                error=row.error,
            )
            for row in rows
        ]
        return RayResponse(rows=models, errorRows=sum(1 for r in rows if r.error))


class CheckRequest(BaseModel):
    torusMode: bool = False
    refinementLevel: int = Field(default=3, ge=0, le=6)
    seedExponent: int = Field(default=0, ge=0, le=4)
    coefficients: list[float] | None = None
    truncation: int = Field(default=4, ge=1, le=8)
    t: float = Field(default=1.0, ge=0)
    uValues: list[float]
    entropyUpper: float | None = None


class CheckReportModel(BaseModel):
    name: str
    lhs: float
    rhs: float
    gap: float
    tolerance: float
    toleranceClass: str
    holds: bool
    serialized: str


class CheckResponse(BaseModel):
    reports: list[CheckReportModel]
    allHold: bool


@app.post("/check", response_model=CheckResponse)
def check(req: CheckRequest) -> CheckResponse:
    with _mapped_errors():
        mesh = _mesh(req.torusMode, req.refinementLevel)
        if len(req.uValues) != mesh.canonicalCount:
            raise DomainError(
                f"uValues has {len(req.uValues)} entries; mesh has "
                f"{mesh.canonicalCount} canonical vertices")
        b = _differential(mesh, req.torusMode, req.seedExponent,
                          req.coefficients, req.truncation, req.t)
        sol = ConformalFactorField(u=ScalarField(np.asarray(req.uValues)),
                                   iterations=0, finalResidualNorm=float("nan"),
                                   residualHistory=())
        reports = [check_pointwise_bound(mesh, sol, b),
                   check_area_lemma(mesh, sol, b)]
        if req.entropyUpper is not None:
            reports.append(area_sandwich(mesh, sol, b, req.entropyUpper))
        models = [CheckReportModel(
            name=r.name, lhs=r.lhs, rhs=r.rhs, gap=r.gap, tolerance=r.tolerance,
            toleranceClass=r.toleranceClass, holds=r.holds, serialized=r.serialize())
            for r in reports]
        return CheckResponse(reports=models, allHold=all(r.holds for r in reports))


class MeshRequest(BaseModel):
    torusMode: bool = False
    refinementLevel: int = Field(default=3, ge=0, le=6)
    includeGeometry: bool = False


class MeshResponse(BaseModel):
    fullCount: int
    canonicalCount: int
    triangleCount: int
    edgeCount: int
    eulerCharacteristic: int
    boundaryPairCount: int
    backgroundAreaDefect: float
    positions: list[list[float]] | None = None
    triangles: list[list[int]] | None = None


@app.post("/mesh", response_model=MeshResponse)
def mesh_build(req: MeshRequest) -> MeshResponse:
    with _mapped_errors():
        mesh = _mesh(req.torusMode, req.refinementLevel)
        reference = 1.0 if mesh.torus else 4.0 * np.pi
        defect = abs(area(mesh, mesh.background_metric()) - reference)
        return MeshResponse(
            fullCount=mesh.fullCount,
            canonicalCount=mesh.canonicalCount,
            triangleCount=len(mesh.triangles),
            edgeCount=mesh.edgeCount,
            eulerCharacteristic=mesh.eulerCharacteristic,
            boundaryPairCount=len(mesh.boundaryPairs),
            backgroundAreaDefect=defect,
            positions=[[z.real, z.imag] for z in mesh.positions] if req.includeGeometry else None,
            triangles=mesh.triangles.tolist() if req.includeGeometry else None,
        )
