"""End-to-end acceptance scoreboard.

One test per numbered criterion.  Each test prints exactly one
``ACCEPTANCE n (...): PASS/FAIL`` line before asserting, so running with
``pytest tests/test_acceptance.py -s`` always shows the full scoreboard
even when a clause fails.

Two clauses fail by measurement, not by bugs, and are asserted faithfully
rather than loosened (see README for the numbers):

* criterion 4: the Blaschke entropy estimate at t=64 sits at 56% of its
  t=0 baseline, above the required 50%; halving first occurs near t=100.
* criterion 6: the genus-2 length-1 orbit distance error plateaus under
  refinement (direction-dependent overshoot of the fan triangulation)
  instead of halving.
"""
import math
import time

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from blaschkelab import analysis
from blaschkelab.cli import main
from blaschkelab.cubic import constant_differential, poincare_series
from blaschkelab.entropy import (
    build_cover_graph,
    cover_entropy,
    orbit_distances,
)
from blaschkelab.experiment import ExperimentConfig, run_ray_experiment
from blaschkelab.fuchsian import octagon_group
from blaschkelab.mesh import MetricField, build_fundamental_mesh, build_torus_mesh
from blaschkelab.wang import blaschke_metric, curvature, solve_wang

TRANSLATION_LENGTH = 2.0 * math.acosh(1.0 + math.sqrt(2.0))


def _verdict(number, name, ok, detail):
    state = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {number} ({name}): {state} {detail}")


@pytest.fixture(scope="module")
def group():
    return octagon_group()


@pytest.fixture(scope="module")
def ray_rows(group):
    """Full-budget ray run: k=0 seed, t in {0,1,4,16,64}, solve refinement 4,
    orbit graph refinement 1, cover depth 6.  Takes a couple of minutes."""
    rows = run_ray_experiment(ExperimentConfig())
    assert [row.error for row in rows] == [""] * 5
    return {row.t: row for row in rows}


def _report(row, which):
    """Parse one serialized inequality report into a {key: str} dict."""
    pairs = {}
    for line in row.reports[which].splitlines():
        key, _, value = line.partition("=")
        pairs[key.rsplit(".", 1)[-1]] = value
    return pairs


def test_acceptance_1_hyperbolic_baseline(group):
    start = time.monotonic()
    mesh = build_fundamental_mesh(group, 4)
    sol = solve_wang(mesh, constant_differential(mesh, 0.0), 1e-8)
    sup_u = float(np.max(np.abs(sol.u.values)))
    area = analysis.area(mesh, blaschke_metric(mesh, sol))
    area_err = abs(area / (4.0 * math.pi) - 1.0)

    graph_mesh = build_fundamental_mesh(group, 1)
    background = graph_mesh.background_metric()
    slopes = {}
    for depth in (5, 6):
        cover = build_cover_graph(graph_mesh, background, group, depth)
        slopes[depth] = cover_entropy(cover).slope
        del cover
    trend_ok = abs(slopes[6] - 1.0) <= abs(slopes[5] - 1.0) + 1e-12
    elapsed = time.monotonic() - start

    ok = (sup_u <= 1e-6 and area_err <= 0.01
          and 0.8 <= slopes[6] <= 1.2 and trend_ok)
    _verdict(1, "hyperbolic baseline", ok,
             f"sup|u|={sup_u:.3g} area={area:.6f} (err {area_err:.2%}) "
             f"slope d5={slopes[5]:.6f} d6={slopes[6]:.6f} "
             f"[{elapsed:.0f}s]")
    assert sup_u <= 1e-6
    assert area_err <= 0.01
    assert 0.8 <= slopes[6] <= 1.2
    # |slope - 1| must not grow with depth over the feasible range
    assert trend_ok


def test_acceptance_2_flat_torus_analytic():
    start = time.monotonic()
    mesh = build_torus_mesh(4)
    b = constant_differential(mesh, complex(math.cos(0.3), math.sin(0.3)))
    sol = solve_wang(mesh, b, 1e-12)
    u_err = float(np.max(np.abs(sol.u.values - math.log(2.0) / 6.0)))
    kappa_sup = float(np.max(np.abs(curvature(mesh, sol).kappa.values)))
    gap = abs(analysis.check_pointwise_bound(mesh, sol, b).gap)
    elapsed = time.monotonic() - start

    ok = u_err <= 1e-8 and kappa_sup <= 1e-6 and gap <= 1e-8
    _verdict(2, "flat torus analytic solution", ok,
             f"max|u-ln2/6|={u_err:.3g} sup|kappa|={kappa_sup:.3g} "
             f"|pointwise gap|={gap:.3g} [{elapsed:.1f}s]")
    assert u_err <= 1e-8
    assert kappa_sup <= 1e-6
    assert gap <= 1e-8


def test_acceptance_3_ray_inequalities(group, ray_rows):
    worst = {"pointwise": math.inf, "lemma": math.inf, "sandwich": math.inf}
    residuals = {}
    for t in (1.0, 4.0, 16.0, 64.0):
        row = ray_rows[t]
        pw, lm, sw = (_report(row, k) for k in ("pointwise", "lemma", "sandwich"))
        assert row.pointwiseGap >= -float(pw["tolerance"])
        assert pw["holds"] == "true"
        assert row.lemmaGap >= -float(lm["tolerance"])
        assert lm["holds"] == "true"
        assert sw["holds"] == "true"
        tol = float(sw["tolerance"])
        assert row.sandwichGaps[0] >= -tol and row.sandwichGaps[1] >= -tol
        residuals[t] = float(lm["identityResidual"])
        assert residuals[t] <= 1e-3
        worst["pointwise"] = min(worst["pointwise"], row.pointwiseGap)
        worst["lemma"] = min(worst["lemma"], row.lemmaGap)
        worst["sandwich"] = min(worst["sandwich"], min(row.sandwichGaps))

    # identity residual must shrink when the solve mesh is refined once
    mesh3 = build_fundamental_mesh(group, 3)
    bhat3 = poincare_series(group, 0, 4, mesh3)
    sol3 = solve_wang(mesh3, 4.0 * bhat3, 1e-8)
    coarse = analysis.check_area_lemma(mesh3, sol3, 4.0 * bhat3)
    res3 = coarse.extras["identityResidual"]
    ok = res3 > residuals[4.0]
    _verdict(3, "ray inequalities", ok,
             f"worst gaps pw={worst['pointwise']:.3g} lm={worst['lemma']:.3g} "
             f"sw={worst['sandwich']:.3g}; identity residual "
             f"r3={res3:.3g} -> r4={residuals[4.0]:.3g}")
    assert res3 > residuals[4.0]


def test_acceptance_4_degeneration_trend(ray_rows):
    schedule = [0.0, 1.0, 4.0, 16.0, 64.0]
    est = [ray_rows[t].entropyEstimateBlaschke for t in schedule]
    err = [ray_rows[t].horizonDiagnostics["stderrBlaschke"] for t in schedule]
    mono = all(b < a + (ea + eb)
               for a, b, ea, eb in zip(est, est[1:], err, err[1:]))
    bounds = [ray_rows[t].rayUpperBoundBothConventions for t in schedule[1:]]
    bounds_mono = all(b[0] < a[0] and b[1] < a[1]
                      for a, b in zip(bounds, bounds[1:]))

    # halving clause: estimate at t=64 under half the t=0 baseline,
    # with the fit stderr of both endpoints as the only slack
    target = 0.5 * (est[0] + err[0])
    halved = est[-1] - err[-1] <= target

    ok = mono and bounds_mono and halved
    _verdict(4, "degeneration trend", ok,
             f"estB {est[0]:.4f} -> {est[-1]:.4f} "
             f"(ratio {est[-1] / est[0]:.3f}, halving needs <= 0.5); "
             f"monotone={mono} bounds_monotone={bounds_mono}")
    assert mono
    assert bounds_mono
    assert halved, (
        f"estB(64)={est[-1]:.6f} (stderr {err[-1]:.3g}) stays above half the "
        f"t=0 baseline {est[0]:.6f}: the mean stretch over the fixed fit "
        f"window only reaches ~0.56 at t=64; halving first occurs near t=100")


def test_acceptance_5_constructed_factor_pairs(ray_rows):
    mesh = build_torus_mesh(3)
    n = len(mesh.positions)
    scale_ok = mono_ok = qi_ok = True
    a = 1.3
    for seed in (7, 11, 13):
        rng = np.random.default_rng(seed)
        base = np.exp(rng.uniform(-0.3, 0.3, size=n))
        s_base = cover_entropy(build_cover_graph(mesh, MetricField(base), None, 4)).slope
        s_scaled = cover_entropy(
            build_cover_graph(mesh, MetricField(16.0 * base), None, 4)).slope
        scale_ok &= abs(s_base - 4.0 * s_scaled) <= 1e-12

        bigger = base * np.exp(rng.uniform(0.0, 0.8, size=n))
        s_big = cover_entropy(build_cover_graph(mesh, MetricField(bigger), None, 4)).slope
        mono_ok &= s_big <= s_base + 1e-12

        near = base * np.exp(rng.uniform(-2 * math.log(a), 2 * math.log(a), size=n))
        s_near = cover_entropy(build_cover_graph(mesh, MetricField(near), None, 4)).slope
        qi_ok &= s_base / a - 1e-12 <= s_near <= s_base * a + 1e-12

    # flat comparison metric scales exactly, so its slope obeys t^(-1/3)
    e1 = ray_rows[1.0].entropyEstimateFlat
    se1 = ray_rows[1.0].horizonDiagnostics["stderrFlat"]
    flat_ok = True
    for t in (4.0, 16.0, 64.0):
        et = ray_rows[t].entropyEstimateFlat
        se_t = ray_rows[t].horizonDiagnostics["stderrFlat"]
        flat_ok &= abs(et * t ** (1.0 / 3.0) - e1) <= se_t * t ** (1.0 / 3.0) + se1

    ok = scale_ok and mono_ok and qi_ok and flat_ok
    _verdict(5, "constructed factor pairs", ok,
             f"t^2 scaling exact={scale_ok} monotone={mono_ok} "
             f"quasi-isometry={qi_ok} flat t^(-1/3)={flat_ok}")
    assert scale_ok
    assert mono_ok
    assert qi_ok
    assert flat_ok


def _brute_flat_cover(n, depth, basepoint):
    """Dijkstra on one big flat grid assembled without tile bookkeeping."""
    W = (2 * depth + 1) * n + 1
    gid = lambda i, j: i * W + j
    h = 1.0 / n
    rows, cols, data = [], [], []
    for i in range(W):
        for j in range(W):
            if i + 1 < W:
                rows.append(gid(i, j)), cols.append(gid(i + 1, j)), data.append(h)
            if j + 1 < W:
                rows.append(gid(i, j)), cols.append(gid(i, j + 1)), data.append(h)
            if i + 1 < W and j + 1 < W:
                rows.append(gid(i, j)), cols.append(gid(i + 1, j + 1)), data.append(h * math.sqrt(2.0))
    big = sp.coo_matrix((np.array(data), (np.array(rows), np.array(cols))),
                        shape=(W * W, W * W)).tocsr()
    bi = int(round((basepoint.real + depth) * n))
    bj = int(round((basepoint.imag + depth) * n))
    full = dijkstra(big, directed=False, indices=gid(bi, bj))
    return lambda p, q: full[gid(int(round((basepoint.real + p + depth) * n)),
                                 int(round((basepoint.imag + q + depth) * n)))]


def test_acceptance_6_cover_distance_oracles(group):
    mesh = build_torus_mesh(2)
    cover = build_cover_graph(mesh, MetricField(np.ones(25)), None, 1)
    oracle = _brute_flat_cover(4, 1, mesh.positions[cover.basepoint])
    torus_err = max(abs(d - oracle(p, q)) for (p, q), d in orbit_distances(cover))

    errs = {}
    for r in (1, 2):
        gm = build_fundamental_mesh(group, r)
        cov = build_cover_graph(gm, gm.background_metric(), group, 1)
        vals = [d for t, d in orbit_distances(cov) if len(t.word) == 1]
        errs[r] = max(abs(v - TRANSLATION_LENGTH) for v in vals)
    halved = errs[2] <= 0.5 * errs[1]

    ok = torus_err <= 1e-10 and halved
    _verdict(6, "cover distance oracles", ok,
             f"torus brute-force mismatch={torus_err:.3g}; genus-2 length-1 "
             f"error r1={errs[1]:.4f} r2={errs[2]:.4f} "
             f"(halving needs <= {0.5 * errs[1]:.4f})")
    assert torus_err <= 1e-10
    assert halved, (
        f"genus-2 distance error plateaus instead of halving: "
        f"{errs[2]:.4f} > 0.5*{errs[1]:.4f}; the fan triangulation's "
        f"direction-dependent overshoot does not refine away")


def test_acceptance_7_byte_identical_reruns(tmp_path, capsys):
    args = ["ray", "--truncation", "3", "--refine", "2", "--graph-refine", "1",
            "--depth", "4", "--ray", "0,1,4", "--tol", "1e-8"]
    outputs = []
    codes = []
    for run in ("first", "second"):
        out = tmp_path / run
        codes.append(main(args + ["--out", str(out)]))
        outputs.append((out / "ray.csv").read_bytes())
    capsys.readouterr()
    identical = outputs[0] == outputs[1]

    ok = identical and codes == [0, 0]
    _verdict(7, "byte-identical reruns", ok,
             f"exit codes={codes} csv bytes equal={identical} "
             f"({len(outputs[0])} bytes)")
    assert codes == [0, 0]
    assert identical
