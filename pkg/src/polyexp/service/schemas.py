"""Request/response models for the transform service."""

from __future__ import annotations

import math

from pydantic import BaseModel, Field, field_validator

Matrix4 = list[list[float]]


def _validate_matrix(m: Matrix4) -> Matrix4:
    if len(m) != 4 or any(len(row) != 4 for row in m):
        raise ValueError("matrix must be 4x4")
    if any(not math.isfinite(v) for row in m for v in row):
        raise ValueError("matrix entries must be finite")
    return m


class ExpRequest(BaseModel):
    matrix: Matrix4
    t: float = 1.0
    backend: str = Field(default="squaring", pattern="^(squaring|eigen)$")
    s: int | None = Field(default=None, ge=0)       # fixed scaling factor; None = norm-adaptive

    _vm = field_validator("matrix")(_validate_matrix)


class LogRequest(BaseModel):
    matrix: Matrix4
    backend: str = Field(default="squaring", pattern="^(squaring|eigen)$")

    _vm = field_validator("matrix")(_validate_matrix)


class MatrixResponse(BaseModel):
    matrix: Matrix4
    diagnostics: dict[str, float] = {}


class EigRequest(BaseModel):
    matrix: Matrix4
    pitch_tol: float = Field(default=1e-6, gt=0)

    _vm = field_validator("matrix")(_validate_matrix)


class ComplexPair(BaseModel):
    re: float
    im: float


class ScrewInfo(BaseModel):
    axis: list[float]
    angle: float
    pitch: float
    is_screw: bool
    near_identity: bool


class EigResponse(BaseModel):
    lambdas: list[ComplexPair]
    screw: ScrewInfo | None = None
    diagonalizable: bool
    repeated_unit_eigenvalue: bool
    near_identity: bool
    cond: float | None = None
    verdict: str


class FlowRequest(BaseModel):
    scene_path: str
    times: list[float]
    backend: str = Field(default="eigen", pattern="^(squaring|eigen)$")
    s: int = Field(default=6, ge=0)
    out_prefix: str
    warp_volume: str | None = None
    interp: str = Field(default="trilinear", pattern="^(trilinear|cubic_bspline)$")
    threads: int = Field(default=0, ge=0)           # 0 = all cores
    write_matrices: bool = False


class FlowResponse(BaseModel):
    fields: list[str]
    warps: list[str]
    fallback_voxels: int
    seconds_per_time: list[float]
    decompose_seconds: float


class BenchConfig(BaseModel):
    methods: list[str] = ["squaring", "eigen"]
    sizes: list[int] = [30, 50, 70, 100]
    s: int = Field(default=6, ge=0)
    repeats: int = Field(default=3, ge=1)
    memory_cap_bytes: int | None = None


class BenchRecordModel(BaseModel):
    method: str
    n: int
    s: int
    repeats: int
    wall_time_s: float
    modeled_peak_bytes: int
    max_error: float


class BenchResponse(BaseModel):
    records: list[BenchRecordModel]


class SynthRequest(BaseModel):
    what: str = Field(pattern="^(fixtures|scene|grids)$")
    seed: int = 0
    out_dir: str


class SynthResponse(BaseModel):
    written: list[str]
