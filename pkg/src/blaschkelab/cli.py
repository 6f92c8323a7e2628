"""Command-line client: every subcommand talks to the service layer.

By default requests are dispatched in-process (ASGI transport), so the
CLI works standalone with identical results; ``--server URL`` points the
same client at a remote instance.  File output always happens client
side.  Option precedence: built-in defaults, then ``--config`` file
entries (flat key=value lines), then explicit flags.
"""

import argparse
import math
import sys

from .errors import IoError
from .experiment import RayReportRow, emit_report

_FIELD_META_KEYS = ("torusMode", "refinementLevel", "seedExponent",
                    "coefficients", "truncation", "t")


def _client(server):
    import httpx

    if server:
        return httpx.Client(base_url=server, timeout=3600.0)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient

    from .service import app
    return TestClient(app, base_url="http://lab")


def _read_config(path):
    values = {}
    try:
        with open(path) as fh:
            for raw in fh:
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise IoError(f"config line {line!r} is not key=value")
                key, _, val = line.partition("=")
                values[key.strip()] = val.strip()
    except OSError as exc:
        raise IoError(f"cannot read config file {path}: {exc}") from exc
    return values


def _coerce(text, like):
    if isinstance(like, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    if isinstance(like, (list, tuple)):
        return [float(x) for x in text.split(",") if x.strip() != ""]
    return text


def _payload(defaults, config, flags):
    payload = dict(defaults)
    for key, raw in config.items():
        if key in payload:
            payload[key] = _coerce(raw, defaults[key])
    for key, value in flags.items():
        if value is not None:
            payload[key] = value
    return payload


def _post(client, path, payload):
    response = client.post(path, json=payload)
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        print(f"error: {detail}", file=sys.stderr)
        raise SystemExit(2 if response.status_code in (400, 422) else 1)
    return response.json()


def _print_kv(data, skip=()):
    for key, value in data.items():
        if key in skip or value is None:
            continue
        print(f"{key}={value}")


def _write_fields(path, payload, u_values):
    lines = [f"# {key}={payload[key]}" for key in _FIELD_META_KEYS if key in payload]
    lines += [f"{x:.17g}" for x in u_values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_fields(path):
    meta, values = {}, []
    try:
        with open(path) as fh:
            for raw in fh:
                line = raw.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, val = line[1:].strip().partition("=")
                    meta[key.strip()] = val.strip()
                else:
                    values.append(float(line))
    except OSError as exc:
        raise IoError(f"cannot read fields file {path}: {exc}") from exc
    return meta, values


def _add_common(parser):
    parser.add_argument("--server", help="service URL; defaults to in-process dispatch")
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--torus-mode", dest="torusMode", action="store_const",
                        const=True, help="flat torus test bed instead of genus 2")


def _solve_cmd(args):
    defaults = dict(torusMode=False, refinementLevel=3, seedExponent=0,
                    coefficients=None, truncation=4, t=1.0, tolerance=1e-8,
                    includeField=True)
    flags = dict(torusMode=args.torusMode, refinementLevel=args.refine,
                 seedExponent=args.k, truncation=args.truncation, t=args.t,
                 tolerance=args.tol)
    payload = _payload(defaults, _read_config(args.config) if args.config else {}, flags)
    with _client(args.server) as client:
        data = _post(client, "/solve", payload)
    _print_kv(data, skip=("uValues",))
    if args.out:
        _write_fields(args.out, payload, data["uValues"] or [])
        print(f"fields written to {args.out}")
    return 0


def _entropy_cmd(args):
    defaults = dict(torusMode=False, metric="background", refinementLevel=3,
                    graphRefinement=1, coverDepth=5, seedExponent=0,
                    coefficients=None, truncation=4, t=1.0, tolerance=1e-8,
                    windowMode="horizon", windowLo=None, windowHi=None,
                    nodeCap=40_000_000)
    flags = dict(torusMode=args.torusMode, metric=args.metric,
                 refinementLevel=args.refine, graphRefinement=args.graph_refine,
                 coverDepth=args.depth, seedExponent=args.k,
                 truncation=args.truncation, t=args.t, tolerance=args.tol,
                 windowMode=args.window_mode)
    if args.window:
        lo, hi = (float(x) for x in args.window.split(","))
        flags.update(windowMode="explicit", windowLo=lo, windowHi=hi)
    payload = _payload(defaults, _read_config(args.config) if args.config else {}, flags)
    with _client(args.server) as client:
        data = _post(client, "/entropy", payload)
    _print_kv(data, skip=("counts",))
    if args.out:
        lines = ["R,N,logN"] + [f"{r:.17g},{int(n)},{math.log(n):.17g}"
                                for r, n in data["counts"]]
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"counts written to {args.out}")
    return 0


def _ray_cmd(args):
    defaults = dict(seedExponent=0, coefficients=None, truncation=4,
                    refinementLevel=4, graphRefinement=1, coverDepth=6,
                    raySchedule=[0.0, 1.0, 4.0, 16.0, 64.0], solverTolerance=1e-8,
                    fitSigmas=2.0, raySphereConstant=1.0, nodeCap=40_000_000,
                    torusMode=False, graphConvergence=True)
    schedule = None
    if args.ray:
        schedule = [float(x) for x in args.ray.split(",") if x.strip() != ""]
    flags = dict(seedExponent=args.k, truncation=args.truncation,
                 refinementLevel=args.refine, graphRefinement=args.graph_refine,
                 coverDepth=args.depth, raySchedule=schedule,
                 solverTolerance=args.tol, torusMode=args.torusMode)
    config = _read_config(args.config) if args.config else {}
    payload = _payload(defaults, config, flags)
    out_dir = args.out or config.get("outputPath") or "ray_report"
    with _client(args.server) as client:
        data = _post(client, "/ray", payload)
    rows = []
    for item in data["rows"]:
        item.pop("errorRows", None)
        pair = item.get("rayUpperBoundBothConventions")
        gaps = item.get("sandwichGaps")
        rows.append(RayReportRow(
            **{**item,
               "rayUpperBoundBothConventions": tuple(pair) if pair else None,
               "sandwichGaps": tuple(gaps) if gaps else None}))
        tail = f"error: {rows[-1].error}" if rows[-1].error else (
            f"estB={rows[-1].entropyEstimateBlaschke:.6g}")
        print(f"t={rows[-1].t:g} {tail}")
    written = emit_report(rows, out_dir)
    for path in written:
        print(f"wrote {path}")
    return 0 if data["errorRows"] == 0 else 1


def _check_cmd(args):
    meta, values = _read_fields(args.fields)
    payload = dict(torusMode=meta.get("torusMode", "False").lower() in ("1", "true"),
                   refinementLevel=int(meta.get("refinementLevel", 3)),
                   seedExponent=int(meta.get("seedExponent", 0)),
                   truncation=int(meta.get("truncation", 4)),
                   t=float(meta.get("t", 1.0)),
                   uValues=values)
    coeffs = meta.get("coefficients", "")
    if coeffs and coeffs != "None":
        payload["coefficients"] = [float(x) for x in coeffs.strip("[]()").split(",")]
    if args.t is not None:
        payload["t"] = args.t
    if args.entropy_upper is not None:
        payload["entropyUpper"] = args.entropy_upper
    with _client(args.server) as client:
        data = _post(client, "/check", payload)
    for report in data["reports"]:
        print(report["serialized"])
        print()
    print(f"allHold={str(data['allHold']).lower()}")
    return 0 if data["allHold"] else 1


def _mesh_cmd(args):
    defaults = dict(torusMode=False, refinementLevel=3, includeGeometry=False)
    flags = dict(torusMode=args.torusMode, refinementLevel=args.refine,
                 includeGeometry=True if args.out else None)
    payload = _payload(defaults, _read_config(args.config) if args.config else {}, flags)
    with _client(args.server) as client:
        data = _post(client, "/mesh", payload)
    _print_kv(data, skip=("positions", "triangles"))
    if args.out:
        lines = ["kind,a,b,c"]
        lines += [f"v,{x:.17g},{y:.17g}," for x, y in data["positions"]]
        lines += [f"f,{a},{b},{c}" for a, b, c in data["triangles"]]
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"geometry written to {args.out}")
    return 0


def _serve_cmd(args):
    import uvicorn

    from .service import app
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="blaschkelab",
        description="numerical laboratory for entropy degeneration along cubic rays")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="one structure-equation solve with diagnostics")
    _add_common(p)
    p.add_argument("--k", type=int, help="basis seed index 0..4")
    p.add_argument("--truncation", type=int, help="series truncation length")
    p.add_argument("--refine", type=int, help="mesh refinement level")
    p.add_argument("--t", type=float, help="ray parameter")
    p.add_argument("--tol", type=float, help="solver tolerance")
    p.add_argument("--out", help="write the solved field for later checking")
    p.set_defaults(func=_solve_cmd)

    p = sub.add_parser("entropy", help="one orbit-growth estimate")
    _add_common(p)
    p.add_argument("--k", type=int, help="basis seed index 0..4")
    p.add_argument("--truncation", type=int, help="series truncation length")
    p.add_argument("--refine", type=int, help="solve mesh refinement level")
    p.add_argument("--graph-refine", type=int, help="cover graph refinement level")
    p.add_argument("--depth", type=int, help="cover depth (word length)")
    p.add_argument("--t", type=float, help="ray parameter")
    p.add_argument("--tol", type=float, help="solver tolerance")
    p.add_argument("--metric", choices=("background", "blaschke", "flat"))
    p.add_argument("--window-mode", choices=("horizon", "pragmatic"))
    p.add_argument("--window", help="explicit fit window lo,hi")
    p.add_argument("--out", help="write the counts table as CSV")
    p.set_defaults(func=_entropy_cmd)

    p = sub.add_parser("ray", help="full ray degeneration experiment")
    _add_common(p)
    p.add_argument("--k", type=int, help="basis seed index 0..4")
    p.add_argument("--truncation", type=int, help="series truncation length")
    p.add_argument("--refine", type=int, help="solve mesh refinement level")
    p.add_argument("--graph-refine", type=int, help="cover graph refinement level")
    p.add_argument("--depth", type=int, help="cover depth (word length)")
    p.add_argument("--ray", help="comma-separated ray parameters t1,t2,...")
    p.add_argument("--tol", type=float, help="solver tolerance")
    p.add_argument("--out", help="report directory")
    p.set_defaults(func=_ray_cmd)

    p = sub.add_parser("check", help="inequality ledger on saved fields")
    _add_common(p)
    p.add_argument("--fields", required=True, help="fields file from solve --out")
    p.add_argument("--t", type=float, help="override the saved ray parameter")
    p.add_argument("--entropy-upper", type=float,
                   help="entropy upper bound enabling the sandwich check")
    p.set_defaults(func=_check_cmd)

    p = sub.add_parser("mesh", help="build a mesh and report invariants")
    _add_common(p)
    p.add_argument("--refine", type=int, help="mesh refinement level")
    p.add_argument("--out", help="write vertex/triangle tables as CSV")
    p.set_defaults(func=_mesh_cmd)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_serve_cmd)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # raised by _post on server-reported errors
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
