"""Benchmarks of the two exponential-map backends on dense regular grids.

Wall times are machine-specific and are recorded as medians over repeats;
acceptance-style comparisons rely on orderings and on analytic models, never
on absolute seconds. Peak memory is modeled, not sampled: the model counts the
per-voxel working set of each backend (documented in the README and below) and
is exact and portable by construction.

Per-voxel byte model (8-byte reals, 16-byte complex entries, 4x4 matrices):
  squaring: current approximant + square buffer (2 x 128 B), Pade numerator,
            denominator and solve scratch (3 x 128 B), plus the s intermediate
            squares retained while the trajectory is assembled (s x 128 B);
            each timepoint re-runs the pipeline and adds one 128 B output.
  eigen:    eigenvalues (4 complex, 64 B), P and P^-1 (2 x 256 B), the diagonal
            power (64 B) and two complex product buffers (2 x 256 B); each
            additional timepoint adds only one 128 B output, the decomposition
            is reused.

Per-voxel 4x4-multiplication counts (the op-count model):
  squaring: 4 products for the Pade polynomials, 1 solve, s squarings, per
            timepoint; s=4 means exactly 4 squaring multiplications.
  eigen:    6 one-time multiplications to decompose and invert, then exactly
            2 multiplications per timepoint.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass

import numpy as np

from . import polyrigid
from .linalg import expm_pade_ss_batched, logm_iss, norm_2
from .synth import rot_z

ENV_MEMORY_CAP = "POLYEXP_MEMORY_CAP_BYTES"
DEFAULT_MEMORY_CAP = 8 << 30

_REAL_MAT = 16 * 8
_COMPLEX_MAT = 16 * 16
_COMPLEX_DIAG = 4 * 16


class MemoryCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class BenchRecord:
    method: str
    grid_n: int
    s: int
    repeats: int
    wall_time: float            # seconds, median over repeats
    modeled_peak_bytes: int
    measured_error: float       # max voxel 2-norm error against the analytic target


def resolve_memory_cap(cap: int | None = None) -> int:
    if cap is not None:
        return int(cap)
    env = os.environ.get(ENV_MEMORY_CAP)
    return int(env) if env else DEFAULT_MEMORY_CAP


def memory_model(method: str, n: int, s: int = 6, m_timepoints: int = 1) -> int:
    """Modeled peak workspace in bytes for exponentiating an n^3 grid."""
    voxels = n ** 3
    outputs = m_timepoints * _REAL_MAT
    if method == "squaring":
        per_voxel = (2 + 3 + s) * _REAL_MAT + outputs
    elif method == "eigen":
        per_voxel = _COMPLEX_DIAG + 2 * _COMPLEX_MAT + _COMPLEX_DIAG + 2 * _COMPLEX_MAT + outputs
    else:
        raise ValueError(f"unknown method {method!r}")
    return voxels * per_voxel


def op_model(method: str, s: int = 6, m_timepoints: int = 1) -> dict:
    """Per-voxel 4x4 multiplication counts: one-time setup cost, incremental
    cost per timepoint, and the total for m timepoints."""
    if method == "squaring":
        setup = 0
        per_timepoint = 4 + 1 + s      # Pade products, solve, squarings
    elif method == "eigen":
        setup = 6                      # decompose + invert the basis
        per_timepoint = 2              # P diag(...) then (...) P^-1
    else:
        raise ValueError(f"unknown method {method!r}")
    return {"setup": setup, "per_timepoint": per_timepoint,
            "squaring_multiplications": s if method == "squaring" else 0,
            "total": setup + m_timepoints * per_timepoint}


def expmap_error(T, backend: str) -> float:
    """epsilon = || exp(log T) - T ||_2 with both maps taken from one backend."""
    T = np.asarray(T, dtype=float)
    if backend == "squaring":
        from .linalg import expm_pade_ss
        return norm_2(expm_pade_ss(logm_iss(T)) - T)
    if backend == "eigen":
        from . import eigen4
        L = eigen4.logm_eig(eigen4.eig_homogeneous(T))
        return norm_2(eigen4.expm_eig(L) - T)
    raise ValueError(f"unknown backend {backend!r}")


def bench_grid(n: int, method: str, s: int = 6, repeats: int = 3,
               memory_cap_bytes: int | None = None) -> BenchRecord:
    """Fill an (n, n, n) grid with the velocity of a quarter-turn z-rotation,
    exponentiate every voxel with the chosen method, and record the median
    wall time, the modeled footprint, and the worst error against the analytic
    rotation. Refuses runs whose modeled footprint exceeds the memory cap."""
    cap = resolve_memory_cap(memory_cap_bytes)
    modeled = memory_model(method, n, s=s)
    if modeled > cap:
        raise MemoryCapExceeded(
            f"modeled footprint {modeled} bytes exceeds cap {cap} bytes")

    target = rot_z(np.pi / 4.0)
    V = logm_iss(target)
    voxels = n ** 3
    Ls = np.broadcast_to(V, (voxels, 4, 4))

    times = []
    worst = 0.0
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        if method == "squaring":
            out = np.empty((voxels, 4, 4))
            for sl in polyrigid._chunks(voxels, polyrigid.CHUNK):
                out[sl] = expm_pade_ss_batched(Ls[sl], s)
        elif method == "eigen":
            out = np.empty((voxels, 4, 4))
            for sl in polyrigid._chunks(voxels, polyrigid.CHUNK):
                dec = polyrigid.decompose_velocity_grid(Ls[sl])
                out[sl] = polyrigid.evaluate_velocity_grid(dec, 1.0)
        else:
            raise ValueError(f"unknown method {method!r}")
        times.append(time.perf_counter() - t0)
        diffs = out - target
        # max per-voxel Frobenius norm bounds the spectral norm from above
        frob = np.sqrt((diffs ** 2).sum(axis=(1, 2)))
        worst = float(max(worst, frob.max()))
    return BenchRecord(method=method, grid_n=n, s=s, repeats=max(1, repeats),
                       wall_time=float(np.median(times)),
                       modeled_peak_bytes=modeled, measured_error=worst)


CSV_COLUMNS = ["method", "n", "s", "repeats", "wall_time_s",
               "modeled_peak_bytes", "max_error"]


def emit_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([r.method, r.grid_n, r.s, r.repeats,
                        f"{r.wall_time:.9f}", r.modeled_peak_bytes,
                        f"{r.measured_error:.6e}"])


def read_csv(path) -> list[BenchRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(BenchRecord(
                method=row["method"], grid_n=int(row["n"]), s=int(row["s"]),
                repeats=int(row["repeats"]), wall_time=float(row["wall_time_s"]),
                modeled_peak_bytes=int(row["modeled_peak_bytes"]),
                measured_error=float(row["max_error"])))
    return out
