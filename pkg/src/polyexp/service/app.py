"""FastAPI service wrapping the transform library.

Numeric refusals (screw motions, missing principal logarithms, memory-cap
violations) map to HTTP 409 with detail.kind = "numeric"; malformed requests
are regular validation errors. The flow and synth endpoints do file I/O on the
service host; the CLI runs the app in-process by default, so paths resolve on
the caller's machine unless a remote server is configured.
"""

from __future__ import annotations

import os
import sys
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import bench, eigen4, field, linalg, polyrigid, synth
from . import schemas

app = FastAPI(title="polyexp service", version="0.1.0")


def _numeric_error(exc: Exception) -> HTTPException:
    return HTTPException(status_code=409,
                         detail={"kind": "numeric", "error": str(exc)})


_NUMERIC_ERRORS = (linalg.SingularMatrixError, linalg.NoPrincipalLogError,
                   eigen4.ScrewMotionError, eigen4.IllConditionedEigenbasisError,
                   eigen4.HalfTurnError, bench.MemoryCapExceeded,
                   ArithmeticError, OverflowError)


@app.get("/v1/health")
def health():
    return {"status": "ok"}


@app.post("/v1/exp", response_model=schemas.MatrixResponse)
def exp_endpoint(req: schemas.ExpRequest):
    T = np.array(req.matrix, dtype=float)
    try:
        if req.backend == "squaring":
            L = linalg.logm_iss(T)
            cfg = (linalg.ExpmConfig(policy="fixed", s=req.s)
                   if req.s is not None else None)
            M = linalg.expm_pade_ss(req.t * L, cfg)
        else:
            dec = eigen4.eig_homogeneous(T)
            M = eigen4.frac_power(dec, req.t)
    except _NUMERIC_ERRORS as exc:
        raise _numeric_error(exc)
    return schemas.MatrixResponse(
        matrix=M.tolist(),
        diagnostics={"norm_inf": linalg.norm_inf(M), "norm_2": linalg.norm_2(M)})


@app.post("/v1/log", response_model=schemas.MatrixResponse)
def log_endpoint(req: schemas.LogRequest):
    T = np.array(req.matrix, dtype=float)
    try:
        if req.backend == "squaring":
            L = linalg.logm_iss(T)
        else:
            L = eigen4.logm_eig(eigen4.eig_homogeneous(T))
    except _NUMERIC_ERRORS as exc:
        raise _numeric_error(exc)
    return schemas.MatrixResponse(
        matrix=L.tolist(),
        diagnostics={"norm_inf": linalg.norm_inf(L), "norm_2": linalg.norm_2(L)})


@app.post("/v1/eig", response_model=schemas.EigResponse)
def eig_endpoint(req: schemas.EigRequest):
    T = np.array(req.matrix, dtype=float)
    screw = None
    try:
        report = eigen4.classify_screw(T, pitch_tol=req.pitch_tol)
        screw = schemas.ScrewInfo(axis=report.axis.tolist(), angle=report.angle,
                                  pitch=report.pitch, is_screw=report.is_screw,
                                  near_identity=report.near_identity)
    except (ValueError, eigen4.HalfTurnError):
        pass                      # not (near-)rigid: no screw reading
    try:
        dec = eigen4.eig_homogeneous(T, pitch_tol=req.pitch_tol)
    except _NUMERIC_ERRORS as exc:
        raise _numeric_error(exc)
    lam = dec.lambdas
    repeated = bool(abs(lam[2] - lam[3]) < 1e-6)
    if dec.near_identity:
        verdict = "near-identity: series evaluation, eigendecomposition skipped"
    elif repeated:
        verdict = "diagonalizable with repeated eigenvalue"
    else:
        verdict = "diagonalizable with four distinct eigenvalues"
    return schemas.EigResponse(
        lambdas=[schemas.ComplexPair(re=float(v.real), im=float(v.imag)) for v in lam],
        screw=screw, diagonalizable=True, repeated_unit_eigenvalue=repeated,
        near_identity=dec.near_identity,
        cond=None if dec.near_identity else dec.cond, verdict=verdict)


@app.post("/v1/flow", response_model=schemas.FlowResponse)
def flow_endpoint(req: schemas.FlowRequest):
    scene_path = Path(req.scene_path)
    if not scene_path.exists():
        raise HTTPException(status_code=404, detail=f"scene not found: {scene_path}")
    model = polyrigid.load_scene(scene_path)
    threads = req.threads or (os.cpu_count() or 1)
    volume = None
    if req.warp_volume:
        vol = field.read_field(req.warp_volume)
        if not isinstance(vol, field.ScalarField):
            raise HTTPException(status_code=409,
                                detail={"kind": "numeric",
                                        "error": "warp volume must be a scalar field"})
        volume = vol
    try:
        session = polyrigid.FlowSession(model, backend=req.backend, s=req.s,
                                        threads=threads,
                                        keep_matrices=req.write_matrices)
    except _NUMERIC_ERRORS as exc:
        raise _numeric_error(exc)

    out_prefix = Path(req.out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    fields, warps, per_time = [], [], []
    for t in req.times:
        t0 = time.perf_counter()
        res = session.evaluate(t)
        back = session.evaluate(-t) if volume is not None else None
        per_time.append(time.perf_counter() - t0)
        tag = f"{t:+.4f}".replace("+", "p").replace("-", "m").replace(".", "_")
        fp = Path(f"{out_prefix}_t{tag}.pgf")
        field.write_field(res.displacements, fp)
        fields.append(str(fp))
        if res.matrices is not None:
            mp = Path(f"{out_prefix}_t{tag}_mat.pgf")
            field.write_field(res.matrices, mp)
            fields.append(str(mp))
        if back is not None:
            # pull-back: each output voxel samples the source at the inverse flow
            warped = field.warp(volume, back.displacements, interp=req.interp)
            wp = Path(f"{out_prefix}_t{tag}_warp.pgf")
            field.write_field(warped, wp)
            warps.append(str(wp))
    return schemas.FlowResponse(fields=fields, warps=warps,
                                fallback_voxels=session.fallback_voxels,
                                seconds_per_time=per_time,
                                decompose_seconds=session.decompose_seconds)


@app.post("/v1/bench", response_model=schemas.BenchResponse)
def bench_endpoint(cfg: schemas.BenchConfig):
    records = []
    try:
        for method in cfg.methods:
            for n in cfg.sizes:
                rec = bench.bench_grid(n, method, s=cfg.s, repeats=cfg.repeats,
                                       memory_cap_bytes=cfg.memory_cap_bytes)
                records.append(rec)
    except bench.MemoryCapExceeded as exc:
        raise _numeric_error(exc)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return schemas.BenchResponse(records=[
        schemas.BenchRecordModel(method=r.method, n=r.grid_n, s=r.s,
                                 repeats=r.repeats, wall_time_s=r.wall_time,
                                 modeled_peak_bytes=r.modeled_peak_bytes,
                                 max_error=r.measured_error)
        for r in records])


@app.post("/v1/synth", response_model=schemas.SynthResponse)
def synth_endpoint(req: schemas.SynthRequest):
    out_dir = Path(req.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    if req.what == "fixtures":
        import json
        for fx in synth.fixtures():
            p = out_dir / f"{fx.name}.json"
            p.write_text(json.dumps({"matrix": fx.matrix.tolist(),
                                     "meta": {"name": fx.name,
                                              "provenance": fx.provenance}},
                                    indent=2))
            written.append(str(p))
    elif req.what == "scene":
        scene = synth.joint_scene(seed=req.seed)
        scene_path = out_dir / "scene.json"
        polyrigid.save_scene(scene.model, scene_path)
        written.append(str(scene_path))
        for c in scene.model.components:
            written.append(str(out_dir / f"{c.id}_mask.pgf"))
        vol_path = out_dir / "volume.pgf"
        field.write_field(scene.volume, vol_path)
        written.append(str(vol_path))
    elif req.what == "grids":
        scene = synth.joint_scene(seed=req.seed)
        for c, w in zip(scene.model.components, scene.model.weights):
            dp = out_dir / f"{c.id}_dist.pgf"
            field.write_field(c.dist_map, dp)
            written.append(str(dp))
            wp = out_dir / f"{c.id}_weight.pgf"
            field.write_field(w, wp)
            written.append(str(wp))
    return schemas.SynthResponse(written=written)


def serve(host: str = "127.0.0.1", port: int = 8000):
    import uvicorn
    uvicorn.run(app, host=host, port=port)
