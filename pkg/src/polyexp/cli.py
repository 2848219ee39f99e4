"""Command-line client of the transform service.

Every subcommand except `serve` talks HTTP to the FastAPI app: against a
remote server when --server (or POLYEXP_SERVER) is given, otherwise against
the app mounted in-process, so batch use needs no running daemon and file
paths resolve locally either way.

Exit codes: 0 success, 1 usage error, 2 numeric refusal (screw rejection,
no principal logarithm, memory-cap violation).

Transform JSON format: {"matrix": [[...4 rows of 4...]], "meta": {...}},
row-major.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2


def read_transform_json(path) -> list[list[float]]:
    doc = json.loads(Path(path).read_text())
    matrix = doc["matrix"] if isinstance(doc, dict) else doc
    if len(matrix) != 4 or any(len(r) != 4 for r in matrix):
        raise ValueError(f"{path}: matrix must be 4x4")
    return [[float(v) for v in row] for row in matrix]


def write_transform_json(matrix, path, meta: dict | None = None) -> None:
    doc = {"matrix": [[float(v) for v in row] for row in matrix], "meta": meta or {}}
    Path(path).write_text(json.dumps(doc, indent=2))


class _EmbeddedServer:
    """Local service instance for daemonless batch use: uvicorn on an
    ephemeral loopback port, running in a background thread."""

    def __init__(self):
        import socket
        import threading
        import time

        import uvicorn

        from .service import app

        with socket.socket() as sock:
            sock.bind(("127.0.0.1", 0))
            self.port = sock.getsockname()[1]
        config = uvicorn.Config(app, host="127.0.0.1", port=self.port,
                                log_level="error")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)
        self.thread.start()
        deadline = time.monotonic() + 10.0
        while not self.server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("embedded service failed to start")
            time.sleep(0.01)

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def stop(self):
        self.server.should_exit = True
        self.thread.join(timeout=5.0)


class ServiceClient:
    """httpx client bound to a remote server or to an embedded local one."""

    def __init__(self, server: str | None):
        server = server or os.environ.get("POLYEXP_SERVER")
        self._embedded = None
        if not server:
            self._embedded = _EmbeddedServer()
            server = self._embedded.url
        self.http = httpx.Client(base_url=server, timeout=600.0)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.http.close()
        if self._embedded is not None:
            self._embedded.stop()

    def post(self, path: str, payload: dict) -> dict:
        return post(self.http, path, payload)


def make_client(server: str | None) -> ServiceClient:
    return ServiceClient(server)


class NumericRefusal(RuntimeError):
    pass


def post(client: httpx.Client, path: str, payload: dict) -> dict:
    resp = client.post(path, json=payload)
    if resp.status_code == 409:
        detail = resp.json().get("detail", {})
        raise NumericRefusal(detail.get("error", "numeric failure"))
    if resp.status_code >= 400:
        raise ValueError(f"{path}: {resp.status_code} {resp.text}")
    return resp.json()


def _parse_times(spec: str) -> list[float]:
    return [float(tok) for tok in spec.split(",") if tok.strip()]


def cmd_exp(args, client) -> int:
    matrix = read_transform_json(args.infile)
    body = {"matrix": matrix, "t": args.t, "backend": args.backend}
    if args.s is not None:
        body["s"] = args.s
    out = client.post("/v1/exp", body)
    write_transform_json(out["matrix"], args.out,
                         meta={"t": args.t, "backend": args.backend})
    for k, v in out["diagnostics"].items():
        print(f"{k} = {v:.6e}", file=sys.stderr)
    return EXIT_OK


def cmd_log(args, client) -> int:
    matrix = read_transform_json(args.infile)
    out = client.post("/v1/log", {"matrix": matrix, "backend": args.backend})
    write_transform_json(out["matrix"], args.out, meta={"backend": args.backend})
    for k, v in out["diagnostics"].items():
        print(f"{k} = {v:.6e}", file=sys.stderr)
    return EXIT_OK


def cmd_eig(args, client) -> int:
    matrix = read_transform_json(args.infile)
    out = client.post("/v1/eig", {"matrix": matrix, "pitch_tol": args.pitch_tol})
    lam = out["lambdas"]
    print("eigenvalues:")
    for v in lam:
        print(f"  {v['re']:+.12f} {v['im']:+.12f}i")
    if out.get("screw"):
        s = out["screw"]
        print(f"screw report: axis=({s['axis'][0]:+.6f}, {s['axis'][1]:+.6f}, "
              f"{s['axis'][2]:+.6f}) angle={s['angle']:.6f} rad "
              f"pitch={s['pitch']:.6e} mm is_screw={s['is_screw']} "
              f"near_identity={s['near_identity']}")
    if out["near_identity"]:
        print("notice: near-identity input")
    print(f"verdict: {out['verdict']}")
    if args.report and out.get("cond") is not None:
        print(f"eigenbasis condition number: {out['cond']:.3e}")
    return EXIT_OK


def cmd_flow(args, client) -> int:
    body = {
        "scene_path": args.scene,
        "times": _parse_times(args.t),
        "backend": args.backend,
        "s": args.s,
        "out_prefix": args.out_prefix,
        "warp_volume": args.warp,
        "interp": args.interp,
        "threads": args.threads,
        "write_matrices": args.matrices,
    }
    out = client.post("/v1/flow", body)
    for p in out["fields"] + out["warps"]:
        print(p)
    print(f"fallback voxels: {out['fallback_voxels']}", file=sys.stderr)
    print(f"decompose: {out['decompose_seconds']:.3f}s; per-time: "
          + ", ".join(f"{s:.3f}s" for s in out["seconds_per_time"]),
          file=sys.stderr)
    return EXIT_OK


def cmd_bench(args, client) -> int:
    cfg = json.loads(Path(args.config).read_text()) if args.config else {}
    env_cap = os.environ.get("POLYEXP_MEMORY_CAP_BYTES")
    if env_cap and "memory_cap_bytes" not in cfg:
        cfg["memory_cap_bytes"] = int(env_cap)
    out = client.post("/v1/bench", cfg)
    from .bench import BenchRecord, emit_csv
    records = [BenchRecord(method=r["method"], grid_n=r["n"], s=r["s"],
                           repeats=r["repeats"], wall_time=r["wall_time_s"],
                           modeled_peak_bytes=r["modeled_peak_bytes"],
                           measured_error=r["max_error"])
               for r in out["records"]]
    emit_csv(records, args.csv)
    print(f"wrote {len(records)} records to {args.csv}", file=sys.stderr)
    return EXIT_OK


def cmd_synth(args, client) -> int:
    out = client.post("/v1/synth",
                      {"what": args.what, "seed": args.seed, "out_dir": args.out})
    for p in out["written"]:
        print(p)
    return EXIT_OK


def cmd_serve(args, _client) -> int:
    from .service import serve
    serve(host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polyexp",
                                 description="polyrigid transform toolkit (service client)")
    ap.add_argument("--server", help="service URL (default: in-process app; "
                                     "or POLYEXP_SERVER)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exp", help="write exp(t * log T)")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--backend", choices=["squaring", "eigen"], default="squaring")
    p.add_argument("--s", type=int, default=None)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_exp)

    p = sub.add_parser("log", help="write log T")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--backend", choices=["squaring", "eigen"], default="squaring")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_log)

    p = sub.add_parser("eig", help="eigenvalues, screw report, verdict")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--report", action="store_true")
    p.add_argument("--pitch-tol", type=float, default=1e-6)
    p.set_defaults(fn=cmd_eig)

    p = sub.add_parser("flow", help="evaluate the flow of a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--t", required=True, help="comma-separated times")
    p.add_argument("--backend", choices=["squaring", "eigen"], default="eigen")
    p.add_argument("--s", type=int, default=6)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--warp", default=None, help="scalar volume to warp")
    p.add_argument("--interp", choices=["trilinear", "cubic_bspline"],
                   default="trilinear")
    p.add_argument("--threads", type=int, default=0, help="0 = all cores")
    p.add_argument("--matrices", action="store_true",
                   help="also write per-voxel flow matrices")
    p.set_defaults(fn=cmd_flow)

    p = sub.add_parser("bench", help="run the grid benchmark sweep")
    p.add_argument("--config", default=None)
    p.add_argument("--csv", required=True)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("synth", help="materialize fixtures / scenes")
    p.add_argument("--what", choices=["fixtures", "scene", "grids"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    if args.command == "serve":
        return cmd_serve(args, None)
    try:
        with make_client(args.server) as client:
            return args.fn(args, client)
    except NumericRefusal as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
