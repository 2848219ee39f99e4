"""Regular-grid containers, exact Euclidean distance transform, and warping.

Grid data is stored z-slowest / x-fastest: a scalar field is a C-contiguous
array indexed [z, y, x], vector fields [z, y, x, 3], matrix fields
[z, y, x, 4, 4]. Physical coordinates are origin + index * spacing (mm).

File format "PGF1" (little-endian): magic b"PGF1", u32 version = 1, u8 dtype
(0 = f64 scalar, 1 = u8 mask, 2 = f64 3-vector, 3 = f64 4x4 matrix),
u32 dims[3] (nx, ny, nz), f64 spacing[3], f64 origin[3], then the raw payload
ordered x-fastest (x, then y, then z), components contiguous per voxel.
No compression.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

MAGIC = b"PGF1"
VERSION = 1


@dataclass(frozen=True)
class Grid3:
    dims: tuple[int, int, int]         # (nx, ny, nz) voxels
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)   # mm / voxel
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)    # mm

    def __post_init__(self):
        if any(int(n) < 1 for n in self.dims):
            raise ValueError("grid dims must be >= 1")
        if any(s <= 0 for s in self.spacing):
            raise ValueError("grid spacing must be > 0")
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def shape_zyx(self) -> tuple[int, int, int]:
        nx, ny, nz = self.dims
        return (nz, ny, nx)

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def coordinates(self) -> np.ndarray:
        """Physical voxel-center coordinates, shape (nz, ny, nx, 3) in mm."""
        nx, ny, nz = self.dims
        sx, sy, sz = self.spacing
        ox, oy, oz = self.origin
        zz, yy, xx = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx),
                                 indexing="ij")
        return np.stack([ox + xx * sx, oy + yy * sy, oz + zz * sz], axis=-1)


def _check_payload(grid: Grid3, data: np.ndarray, trailing: tuple[int, ...]):
    if data.shape != grid.shape_zyx + trailing:
        raise ValueError(f"data shape {data.shape} does not match grid "
                         f"{grid.shape_zyx + trailing}")


@dataclass(frozen=True)
class ScalarField:
    grid: Grid3
    data: np.ndarray        # (nz, ny, nx) float64

    def __post_init__(self):
        object.__setattr__(self, "data", np.ascontiguousarray(self.data, dtype=np.float64))
        _check_payload(self.grid, self.data, ())


@dataclass(frozen=True)
class MaskField:
    grid: Grid3
    data: np.ndarray        # (nz, ny, nx) bool

    def __post_init__(self):
        object.__setattr__(self, "data", np.ascontiguousarray(self.data, dtype=bool))
        _check_payload(self.grid, self.data, ())


@dataclass(frozen=True)
class VectorField:
    grid: Grid3
    data: np.ndarray        # (nz, ny, nx, 3) float64

    def __post_init__(self):
        object.__setattr__(self, "data", np.ascontiguousarray(self.data, dtype=np.float64))
        _check_payload(self.grid, self.data, (3,))


@dataclass(frozen=True)
class MatField:
    grid: Grid3
    data: np.ndarray        # (nz, ny, nx, 4, 4) float64

    def __post_init__(self):
        object.__setattr__(self, "data", np.ascontiguousarray(self.data, dtype=np.float64))
        _check_payload(self.grid, self.data, (4, 4))


Field = ScalarField | MaskField | VectorField | MatField


# ---------------------------------------------------------------------------
# Exact Euclidean distance transform
# ---------------------------------------------------------------------------

def _edt_1d(f: np.ndarray, w2: float) -> np.ndarray:
    """Lower-envelope parabola pass: g[i] = min_j f[j] + w2 * (i - j)^2."""
    n = f.shape[0]
    g = np.empty(n)
    v = np.zeros(n, dtype=np.intp)     # parabola sites
    z = np.empty(n + 1)                # envelope boundaries
    k = 0
    z[0], z[1] = -np.inf, np.inf
    for q in range(1, n):
        if f[q] == np.inf:
            continue
        while True:
            p = v[k]
            if f[p] == np.inf:
                s = -np.inf
            else:
                s = ((f[q] + w2 * q * q) - (f[p] + w2 * p * p)) / (2.0 * w2 * (q - p))
            if s <= z[k]:
                k -= 1
                if k < 0:
                    k = 0
                    v[0] = q
                    z[0], z[1] = -np.inf, np.inf
                    break
            else:
                k += 1
                v[k] = q
                z[k], z[k + 1] = s, np.inf
                break
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        g[q] = np.inf if f[p] == np.inf else f[p] + w2 * (q - p) ** 2
    return g


def edt_squared(mask: MaskField) -> ScalarField:
    """Exact squared Euclidean distance (mm^2) from each voxel center to the
    nearest foreground voxel center, respecting anisotropic spacing.

    Separable squared-distance transform: one lower-envelope parabola pass per
    axis with weight spacing^2. Squared distances are exact sums of products,
    so with unit spacing they equal a brute-force nearest-foreground scan
    bit for bit.
    """
    if not mask.data.any():
        raise ValueError("empty mask")
    sq = np.where(mask.data, 0.0, np.inf)
    sx, sy, sz = mask.grid.spacing
    for axis, w in ((2, sx), (1, sy), (0, sz)):
        w2 = w * w
        moved = np.moveaxis(sq, axis, -1)
        flat = moved.reshape(-1, moved.shape[-1])
        for i in range(flat.shape[0]):
            flat[i] = _edt_1d(flat[i], w2)
        sq = np.moveaxis(flat.reshape(moved.shape), -1, axis)
    return ScalarField(mask.grid, sq)


def edt(mask: MaskField) -> ScalarField:
    """Exact Euclidean distance (mm) to the nearest foreground voxel center;
    the square root of edt_squared."""
    return ScalarField(mask.grid, np.sqrt(edt_squared(mask).data))


def edt_squared_bruteforce(mask: MaskField) -> np.ndarray:
    """O(n^2) reference: squared mm distance to the nearest foreground voxel."""
    if not mask.data.any():
        raise ValueError("empty mask")
    coords = mask.grid.coordinates().reshape(-1, 3)
    fg = coords[mask.data.reshape(-1)]
    out = np.empty(coords.shape[0])
    for i, c in enumerate(coords):
        d = fg - c
        out[i] = np.min(d[:, 0] ** 2 + d[:, 1] ** 2 + d[:, 2] ** 2)
    return out.reshape(mask.grid.shape_zyx)


# ---------------------------------------------------------------------------
# Warping
# ---------------------------------------------------------------------------

def _mapped_coordinates(deformation: VectorField | MatField) -> np.ndarray:
    """Physical sample coordinate per output voxel, shape (nz, ny, nx, 3).

    A VectorField holds per-voxel displacements u(x); the sample point is
    x + u(x). A MatField holds per-voxel homogeneous matrices M(x); the sample
    point is the mapped point M(x) . (x, 1)."""
    grid = deformation.grid
    coords = grid.coordinates()
    if isinstance(deformation, VectorField):
        return coords + deformation.data
    M = deformation.data
    pts = np.einsum("...ij,...j->...i", M[..., :3, :3], coords) + M[..., :3, 3]
    return pts


def _trilinear(volume: np.ndarray, idx: np.ndarray, cval: float) -> np.ndarray:
    """Vectorized trilinear sampling at fractional voxel indices (x, y, z)."""
    nz, ny, nx = volume.shape
    x, y, z = idx[..., 0], idx[..., 1], idx[..., 2]
    inside = (x >= 0) & (x <= nx - 1) & (y >= 0) & (y <= ny - 1) & (z >= 0) & (z <= nz - 1)
    x = np.clip(x, 0, nx - 1)
    y = np.clip(y, 0, ny - 1)
    z = np.clip(z, 0, nz - 1)
    x0 = np.minimum(np.floor(x).astype(np.intp), nx - 2) if nx > 1 else np.zeros_like(x, dtype=np.intp)
    y0 = np.minimum(np.floor(y).astype(np.intp), ny - 2) if ny > 1 else np.zeros_like(y, dtype=np.intp)
    z0 = np.minimum(np.floor(z).astype(np.intp), nz - 2) if nz > 1 else np.zeros_like(z, dtype=np.intp)
    fx, fy, fz = x - x0, y - y0, z - z0
    x1 = np.minimum(x0 + 1, nx - 1)
    y1 = np.minimum(y0 + 1, ny - 1)
    z1 = np.minimum(z0 + 1, nz - 1)
    c000 = volume[z0, y0, x0]; c100 = volume[z0, y0, x1]
    c010 = volume[z0, y1, x0]; c110 = volume[z0, y1, x1]
    c001 = volume[z1, y0, x0]; c101 = volume[z1, y0, x1]
    c011 = volume[z1, y1, x0]; c111 = volume[z1, y1, x1]
    c00 = c000 * (1 - fx) + c100 * fx
    c10 = c010 * (1 - fx) + c110 * fx
    c01 = c001 * (1 - fx) + c101 * fx
    c11 = c011 * (1 - fx) + c111 * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    out = c0 * (1 - fz) + c1 * fz
    return np.where(inside, out, cval)


def warp(volume: ScalarField, deformation: VectorField | MatField,
         interp: str = "trilinear", cval: float = 0.0) -> ScalarField:
    """Pull-back resampling: each output voxel reads the source volume at its
    mapped physical coordinate. Out-of-bounds samples take cval."""
    if deformation.grid != volume.grid:
        raise ValueError("incompatible grids")
    pts = _mapped_coordinates(deformation)
    spacing = np.array(volume.grid.spacing)
    origin = np.array(volume.grid.origin)
    idx = (pts - origin) / spacing      # fractional voxel indices (x, y, z)
    if interp == "trilinear":
        out = _trilinear(volume.data, idx, cval)
    elif interp == "cubic_bspline":
        zyx = np.stack([idx[..., 2], idx[..., 1], idx[..., 0]], axis=0)
        out = ndimage.map_coordinates(volume.data, zyx.reshape(3, -1), order=3,
                                      mode="constant", cval=cval,
                                      prefilter=True).reshape(volume.data.shape)
    else:
        raise ValueError(f"unknown interpolation {interp!r}")
    return ScalarField(volume.grid, out)


# ---------------------------------------------------------------------------
# PGF1 I/O
# ---------------------------------------------------------------------------

_DTYPE_CODES = {ScalarField: 0, MaskField: 1, VectorField: 2, MatField: 3}
_HEADER = struct.Struct("<IB3I3d3d")


def write_field(fld: Field, path) -> None:
    code = _DTYPE_CODES[type(fld)]
    nx, ny, nz = fld.grid.dims
    header = _HEADER.pack(VERSION, code, nx, ny, nz, *fld.grid.spacing, *fld.grid.origin)
    payload = fld.data.astype("<u1" if code == 1 else "<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header)
        fh.write(payload)


def read_field(path) -> Field:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError("bad magic")
    version, code, nx, ny, nz, sx, sy, sz, ox, oy, oz = _HEADER.unpack_from(raw, 4)
    if version != VERSION:
        raise ValueError("unsupported version")
    grid = Grid3((nx, ny, nz), (sx, sy, sz), (ox, oy, oz))
    body = raw[4 + _HEADER.size:]
    if code == 0:
        data = np.frombuffer(body, dtype="<f8").reshape(grid.shape_zyx)
        return ScalarField(grid, data)
    if code == 1:
        data = np.frombuffer(body, dtype="<u1").reshape(grid.shape_zyx)
        return MaskField(grid, data.astype(bool))
    if code == 2:
        data = np.frombuffer(body, dtype="<f8").reshape(grid.shape_zyx + (3,))
        return VectorField(grid, data)
    if code == 3:
        data = np.frombuffer(body, dtype="<f8").reshape(grid.shape_zyx + (4, 4))
        return MatField(grid, data)
    raise ValueError(f"unknown dtype code {code}")
