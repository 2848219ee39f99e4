"""Log-Euclidean fusion of rigid components into a stationary velocity field
and evaluation of the flow over a regular grid.

Each component carries a transform T_i, its precomputed logarithm, and a
spatial weight derived from the Euclidean distance map of its mask. After
normalization the weights form a partition of unity, the fused velocity is
L(x) = sum_i w_i(x) log(T_i), and the flow matrix at time t is exp(t L(x)).

Two grid backends are available. "squaring" runs the Pade scaling-and-squaring
exponential per voxel per time. "eigen" diagonalizes each voxel's velocity
once (eigenvalues mu_k of L, basis P) and then every additional time costs two
matrix multiplications: P diag(e^(t mu_k)) P^-1. Voxels whose velocity is not
cleanly diagonalizable fall back to the squaring kernel and are counted.

All per-voxel computations are independent, so the grid can be chunked and
processed by any number of workers with bitwise-identical results.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import linalg
from .field import Grid3, MaskField, MatField, ScalarField, VectorField, edt, read_field
from .linalg import expm_pade_ss_batched, logm_iss

FALLBACK_S = 6               # squaring factor used for per-voxel fallbacks
NEAR_ZERO_BLOCK = 1e-7       # rotation block below this takes the series branch
GROUP_TOL = 1e-8
COND_MAX = 1e8
CHUNK = 1 << 15


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InverseDistanceWeights:
    """w(dist) = 1 / (1 + alpha * dist^beta); preserves component shapes."""

    alpha: float = 0.5
    beta: float = 2.0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be > 0")

    variant = "inverse_distance"


@dataclass(frozen=True)
class ExponentialWeights:
    """w(dist) = 2 / (1 + exp(decay * dist)); decay in 1/mm."""

    decay: float = 0.1

    def __post_init__(self):
        if self.decay <= 0:
            raise ValueError("decay must be > 0")

    variant = "exponential"


WeightParams = InverseDistanceWeights | ExponentialWeights


def weight(params: WeightParams, dist):
    """Evaluate a weight function on distances (mm, >= 0). Returns values in
    (0, 1], equal to 1 at zero distance and strictly decreasing."""
    dist = np.asarray(dist, dtype=float)
    if (dist < 0).any():
        raise ValueError("distance must be >= 0")
    if isinstance(params, InverseDistanceWeights):
        out = 1.0 / (1.0 + params.alpha * dist ** params.beta)
    elif isinstance(params, ExponentialWeights):
        out = 2.0 / (1.0 + np.exp(params.decay * dist))
    else:
        raise TypeError(f"unknown weight params {params!r}")
    return out if out.shape else float(out)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Component:
    id: str
    transform: np.ndarray            # (4,4) rigid
    log_T: np.ndarray                # (4,4) precomputed logarithm
    dist_map: ScalarField            # mm, zero exactly on the component mask
    weight_params: WeightParams
    mask: MaskField | None = None


@dataclass(frozen=True)
class FusionModel:
    grid: Grid3
    components: list[Component]
    normalized: bool = False
    weights: list[ScalarField] | None = None   # filled by normalize()

    def __post_init__(self):
        for c in self.components:
            if c.dist_map.grid != self.grid:
                raise ValueError(f"component {c.id}: distance map grid mismatch")


def normalize(model: FusionModel) -> FusionModel:
    """Per-voxel weight normalization so the weights sum to one everywhere.
    Raw weights are strictly positive, so the denominator never vanishes."""
    raw = np.stack([weight(c.weight_params, c.dist_map.data) for c in model.components])
    total = raw.sum(axis=0)
    fields = [ScalarField(model.grid, w / total) for w in raw]
    return replace(model, normalized=True, weights=fields)


def frechet_mean(transforms, weights_, backend: str = "squaring",
                 logs=None) -> np.ndarray:
    """Log-Euclidean mean exp(sum_i w_i log T_i); weights must sum to 1."""
    weights_ = np.asarray(weights_, dtype=float)
    if abs(weights_.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    if logs is None:
        if backend == "squaring":
            logs = [logm_iss(T) for T in transforms]
        elif backend == "eigen":
            from . import eigen4
            logs = [eigen4.logm_eig(eigen4.eig_homogeneous(T)) for T in transforms]
        else:
            raise ValueError(f"unknown backend {backend!r}")
    V = sum(w * L for w, L in zip(weights_, logs))
    if backend == "squaring":
        return linalg.expm_pade_ss(V)
    from . import eigen4
    return eigen4.expm_eig(V)


def velocity_field(model: FusionModel) -> MatField:
    """Fused stationary velocity L(x) = sum_i w_i(x) log(T_i), one 4x4 matrix
    per voxel with an exactly zero bottom row."""
    if not model.normalized or model.weights is None:
        raise ValueError("model must be normalized first")
    logs = np.stack([c.log_T for c in model.components])
    w = np.stack([f.data for f in model.weights])
    L = np.einsum("kzyx,kij->zyxij", w, logs)
    L[..., 3, :] = 0.0
    return MatField(model.grid, L)


# ---------------------------------------------------------------------------
# Batched per-voxel eigendecomposition of velocity matrices
# ---------------------------------------------------------------------------

def _cubic_roots_batched(B: np.ndarray) -> np.ndarray:
    """Closed-form eigenvalues of a stack of real 3x3 blocks, shape (n, 3)
    complex, Cardano/trigonometric branches plus two Newton steps."""
    c2 = np.trace(B, axis1=-2, axis2=-1)
    c1 = 0.5 * (c2 * c2 - np.trace(B @ B, axis1=-2, axis2=-1))
    c0 = np.linalg.det(B)
    p = c1 - c2 * c2 / 3.0
    q = -c0 + c1 * c2 / 3.0 - 2.0 * c2 ** 3 / 27.0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3

    roots = np.empty(B.shape[:-2] + (3,), dtype=complex)
    pos = disc > 0.0
    # one real root + conjugate pair
    sq = np.sqrt(np.where(pos, disc, 1.0))
    u = np.cbrt(-q / 2.0 + sq)
    v = np.cbrt(-q / 2.0 - sq)
    roots[..., 0] = u + v
    roots[..., 1] = -(u + v) / 2.0 + 0.5j * np.sqrt(3.0) * (u - v)
    roots[..., 2] = np.conj(roots[..., 1])
    # three real roots (trigonometric branch)
    neg = ~pos
    pn = np.where(neg & (p < 0), p, -1.0)
    r = np.sqrt(-pn / 3.0)
    phi = np.arccos(np.clip(3.0 * q / (2.0 * pn * r), -1.0, 1.0))
    for k in range(3):
        real_k = 2.0 * r * np.cos((phi - 2.0 * np.pi * k) / 3.0)
        roots[..., k] = np.where(neg, real_k.astype(complex), roots[..., k])
    # p >= 0 with disc <= 0 only happens at the triple-root boundary
    triple = neg & (p >= 0)
    if triple.any():
        roots[triple] = np.cbrt(-q[triple])[..., None].astype(complex)

    roots += (c2 / 3.0)[..., None]
    # Newton polish
    for _ in range(2):
        x = roots
        f = ((x - c2[..., None]) * x + c1[..., None]) * x - c0[..., None]
        fp = (3.0 * x - 2.0 * c2[..., None]) * x + c1[..., None]
        step = np.where(np.abs(fp) > 1e-300, f / fp, 0.0)
        roots = x - step
    # re-symmetrize conjugate pairs produced by the Cardano branch
    pair_mean = 0.5 * (roots[..., 1] + np.conj(roots[..., 2]))
    roots[..., 1] = np.where(pos, pair_mean, roots[..., 1])
    roots[..., 2] = np.where(pos, np.conj(pair_mean), roots[..., 2])
    return roots


def _null_vectors_batched(N: np.ndarray) -> np.ndarray:
    """Unit null-ish vectors from the largest row cross product, (n, 3) complex."""
    c01 = np.cross(N[:, 0], N[:, 1])
    c12 = np.cross(N[:, 1], N[:, 2])
    c02 = np.cross(N[:, 0], N[:, 2])
    cands = np.stack([c01, c12, c02], axis=1)            # (n, 3, 3)
    norms = np.linalg.norm(cands, axis=2)
    best = norms.argmax(axis=1)
    v = cands[np.arange(len(N)), best]
    n = norms[np.arange(len(N)), best]
    n = np.where(n < 1e-300, 1.0, n)
    return v / n[:, None]


@dataclass(frozen=True)
class VelocityEigenGrid:
    """Per-voxel eigendecomposition of a velocity grid, reusable for any t.

    ok voxels evaluate as P diag(e^(t mu)) P^-1; series voxels (negligible
    rotation block) use the exact cubic series of the nilpotent-dominated
    exponential; fallback voxels re-run the squaring kernel per t.
    """

    lambdas: np.ndarray        # (n, 4) complex
    P: np.ndarray              # (n, 4, 4) complex
    P_inv: np.ndarray          # (n, 4, 4) complex
    ok: np.ndarray             # (n,) bool
    series: np.ndarray         # (n,) bool
    fallback: np.ndarray       # (n,) bool
    L_flat: np.ndarray         # (n, 4, 4) the velocities, for series/fallback

    @property
    def fallback_count(self) -> int:
        return int(self.fallback.sum())


def decompose_velocity_grid(Ls: np.ndarray, group_tol: float = GROUP_TOL,
                            cond_max: float = COND_MAX) -> VelocityEigenGrid:
    """Eigendecompose a stack of velocity matrices (n, 4, 4)."""
    n = Ls.shape[0]
    B = Ls[:, :3, :3]
    l = Ls[:, :3, 3]

    series = np.abs(B).sum(axis=2).max(axis=1) < NEAR_ZERO_BLOCK
    lambdas = np.zeros((n, 4), dtype=complex)
    P = np.broadcast_to(np.eye(4, dtype=complex), (n, 4, 4)).copy()
    P_inv = P.copy()
    fallback = np.zeros(n, dtype=bool)

    active = np.nonzero(~series)[0]
    if active.size:
        Ba = B[active]
        la = l[active]
        mu = _cubic_roots_batched(Ba)
        order = np.argsort(np.abs(mu), axis=1)[:, ::-1]       # anchor-closest last
        mu = np.take_along_axis(mu, order, axis=1)
        lam_a = np.concatenate([mu, np.zeros((len(active), 1), complex)], axis=1)

        Pa = np.zeros((len(active), 4, 4), dtype=complex)
        eye3 = np.eye(3, dtype=complex)
        for k in range(3):
            N = Ba.astype(complex) - mu[:, k, None, None] * eye3
            v = _null_vectors_batched(N)
            # one jittered inverse-iteration step
            jit = 1e-14 * (1.0 + np.abs(mu[:, k]))
            Nj = Ba.astype(complex) - (mu[:, k] + jit)[:, None, None] * eye3
            try:
                w = np.linalg.solve(Nj, v[..., None])[..., 0]
                wn = np.linalg.norm(w, axis=1)
                good = np.isfinite(wn) & (wn > 0)
                v = np.where(good[:, None], w / np.where(good, wn, 1.0)[:, None], v)
            except np.linalg.LinAlgError:
                pass
            Pa[:, :3, k] = v

        grouped = np.abs(mu[:, 2]) < group_tol
        u = np.empty((len(active), 3))
        bad = np.zeros(len(active), dtype=bool)
        if grouped.any():
            Bg = Ba[grouped]
            lg = la[grouped]
            # grouped voxels are rank-deficient by hypothesis (|mu_3| < group
            # tolerance); directions below 1e-8 * sigma_max carry no signal
            ug = -(np.linalg.pinv(Bg, rcond=1e-8) @ lg[..., None])[..., 0]
            resid = np.linalg.norm((Bg @ ug[..., None])[..., 0] + lg, axis=1)
            scale = np.maximum(1.0, np.linalg.norm(lg, axis=1))
            bad[grouped] = resid > 1e-9 * scale
            u[grouped] = ug
            lam_a[grouped, 2] = 0.0
        if (~grouped).any():
            Bng = Ba[~grouped]
            lng = la[~grouped]
            det = np.linalg.det(Bng)
            solvable = np.abs(det) > 1e-300
            ung = np.zeros_like(lng)
            if solvable.any():
                ung[solvable] = np.linalg.solve(
                    Bng[solvable], -lng[solvable][..., None])[..., 0]
            bad_ng = ~solvable
            bad[~grouped] |= bad_ng
            u[~grouped] = ung
        Pa[:, :3, 3] = u
        Pa[:, 3, 3] = 1.0
        v4n = np.linalg.norm(Pa[:, :, 3], axis=1)
        Pa[:, :, 3] /= v4n[:, None]

        with np.errstate(all="ignore"):
            conds = np.linalg.cond(Pa)
        bad |= ~np.isfinite(conds) | (conds > cond_max)

        Pia = np.broadcast_to(np.eye(4, dtype=complex), Pa.shape).copy()
        good_idx = np.nonzero(~bad)[0]
        if good_idx.size:
            try:
                Pia[good_idx] = np.linalg.inv(Pa[good_idx])
            except np.linalg.LinAlgError:
                for i in good_idx:
                    try:
                        Pia[i] = np.linalg.inv(Pa[i])
                    except np.linalg.LinAlgError:
                        bad[i] = True

        lambdas[active] = lam_a
        P[active] = Pa
        P_inv[active] = Pia
        fallback[active] = bad

    ok = ~series & ~fallback
    return VelocityEigenGrid(lambdas=lambdas, P=P, P_inv=P_inv, ok=ok,
                             series=series, fallback=fallback, L_flat=Ls)


def _series_exp(Ls: np.ndarray, t: float) -> np.ndarray:
    """exp(t L) for velocities with negligible rotation block: the cubic
    series is exact to well below round-off there."""
    tL = t * Ls
    tL2 = tL @ tL
    out = np.broadcast_to(np.eye(4), Ls.shape) + tL + tL2 / 2.0 + (tL2 @ tL) / 6.0
    return out


def evaluate_velocity_grid(dec: VelocityEigenGrid, t: float) -> np.ndarray:
    """Flow matrices exp(t L(x)) for every voxel, (n, 4, 4) real."""
    n = dec.lambdas.shape[0]
    out = np.empty((n, 4, 4))
    if dec.ok.any():
        lam = dec.lambdas[dec.ok]
        D = np.exp(t * lam)
        D[:, 3] = 1.0
        M = (dec.P[dec.ok] * D[:, None, :]) @ dec.P_inv[dec.ok]
        out[dec.ok] = M.real
    if dec.series.any():
        out[dec.series] = _series_exp(dec.L_flat[dec.series], t)
    if dec.fallback.any():
        out[dec.fallback] = expm_pade_ss_batched(t * dec.L_flat[dec.fallback], FALLBACK_S)
    out[:, 3, :] = 0.0
    out[:, 3, 3] = 1.0
    return out


# ---------------------------------------------------------------------------
# Flow
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeformationField:
    """Flow at one time: per-voxel displacements (mm) and, on request, the
    per-voxel flow matrices. fallback_voxels counts eigen-backend voxels that
    had to re-run the squaring kernel."""

    t: float
    backend: str
    displacements: VectorField
    matrices: MatField | None
    fallback_voxels: int


def _chunks(n: int, size: int) -> list[slice]:
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


class FlowSession:
    """Reusable flow evaluator over a fused model.

    With the eigen backend, constructing the session decomposes every voxel's
    velocity once; each evaluate(t) then costs two matrix multiplications per
    voxel. With the squaring backend the full kernel runs on every evaluate.
    Results are bitwise independent of the chunking / worker count.
    """

    def __init__(self, model: FusionModel, backend: str = "eigen",
                 s: int = FALLBACK_S, threads: int = 1,
                 keep_matrices: bool = False):
        if not model.normalized:
            raise ValueError("model must be normalized first")
        if backend not in ("eigen", "squaring"):
            raise ValueError(f"unknown backend {backend!r}")
        self.model = model
        self.backend = backend
        self.s = s
        self.threads = max(1, threads)
        self.keep_matrices = keep_matrices
        self.grid = model.grid
        self._Ls = velocity_field(model).data.reshape(-1, 4, 4)
        self._coords = self.grid.coordinates().reshape(-1, 3)
        self._slices = _chunks(self._Ls.shape[0], CHUNK)
        self._decs: list[VelocityEigenGrid] | None = None
        self.decompose_seconds = 0.0
        if backend == "eigen":
            import time as _time
            t0 = _time.perf_counter()
            decs: list[VelocityEigenGrid | None] = [None] * len(self._slices)

            def decompose(i: int):
                decs[i] = decompose_velocity_grid(self._Ls[self._slices[i]])

            self._run(decompose, range(len(self._slices)))
            self._decs = decs
            self.decompose_seconds = _time.perf_counter() - t0

    def _run(self, fn, jobs):
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                list(pool.map(fn, jobs))
        else:
            for j in jobs:
                fn(j)

    @property
    def fallback_voxels(self) -> int:
        if self._decs is None:
            return 0
        return sum(d.fallback_count for d in self._decs)

    def evaluate(self, t: float) -> DeformationField:
        t = float(t)
        n = self._Ls.shape[0]
        Ms = np.empty((n, 4, 4))

        def evaluate_chunk(i: int):
            sl = self._slices[i]
            if self.backend == "eigen":
                Ms[sl] = evaluate_velocity_grid(self._decs[i], t)
            else:
                Ms[sl] = expm_pade_ss_batched(t * self._Ls[sl], self.s)
                Ms[sl, 3, :] = 0.0
                Ms[sl, 3, 3] = 1.0

        self._run(evaluate_chunk, range(len(self._slices)))
        mapped = np.einsum("nij,nj->ni", Ms[:, :3, :3], self._coords) + Ms[:, :3, 3]
        disp = (mapped - self._coords).reshape(self.grid.shape_zyx + (3,))
        mats = (MatField(self.grid, Ms.reshape(self.grid.shape_zyx + (4, 4)))
                if self.keep_matrices else None)
        return DeformationField(t=t, backend=self.backend,
                                displacements=VectorField(self.grid, disp),
                                matrices=mats, fallback_voxels=self.fallback_voxels)


def flow_many(model: FusionModel, times, backend: str = "eigen",
              s: int = FALLBACK_S, threads: int = 1,
              keep_matrices: bool = False) -> list[DeformationField]:
    """Evaluate the flow at several times through one shared FlowSession."""
    session = FlowSession(model, backend=backend, s=s, threads=threads,
                          keep_matrices=keep_matrices)
    return [session.evaluate(t) for t in times]


def flow(model: FusionModel, t: float, backend: str = "eigen",
         s: int = FALLBACK_S, threads: int = 1,
         keep_matrices: bool = False) -> DeformationField:
    """Flow at a single time; see FlowSession / flow_many."""
    return flow_many(model, [t], backend=backend, s=s, threads=threads,
                     keep_matrices=keep_matrices)[0]


def trajectory(model: FusionModel, x, times, backend: str = "eigen") -> np.ndarray:
    """Trajectory of a physical point: its voxel's flow matrix applied to the
    homogeneous point at each requested time. Returns (len(times), 3)."""
    if not model.normalized:
        raise ValueError("model must be normalized first")
    x = np.asarray(x, dtype=float)
    grid = model.grid
    idx = np.rint((x - np.array(grid.origin)) / np.array(grid.spacing)).astype(int)
    idx = np.clip(idx, 0, np.array(grid.dims) - 1)
    L = velocity_field(model).data[idx[2], idx[1], idx[0]]
    xh = np.append(x, 1.0)
    pts = []
    if backend == "eigen":
        dec = decompose_velocity_grid(L[None])
        for t in times:
            M = evaluate_velocity_grid(dec, float(t))[0]
            pts.append((M @ xh)[:3])
    else:
        for t in times:
            M = linalg.expm_pade_ss(float(t) * L, linalg.ExpmConfig(policy="fixed", s=FALLBACK_S))
            pts.append((M @ xh)[:3])
    return np.array(pts)


# ---------------------------------------------------------------------------
# Scene JSON
# ---------------------------------------------------------------------------

def _weight_to_json(p: WeightParams) -> dict:
    if isinstance(p, InverseDistanceWeights):
        return {"variant": "inverse_distance", "alpha": p.alpha, "beta": p.beta}
    return {"variant": "exponential", "decay": p.decay}


def _weight_from_json(d: dict) -> WeightParams:
    if d["variant"] == "inverse_distance":
        return InverseDistanceWeights(alpha=d["alpha"], beta=d["beta"])
    if d["variant"] == "exponential":
        return ExponentialWeights(decay=d["decay"])
    raise ValueError(f"unknown weight variant {d.get('variant')!r}")


def save_scene(model: FusionModel, path, mask_dir=None) -> dict:
    """Write a scene description. Component masks are written as PGF1 files
    next to the scene (or under mask_dir) and referenced by relative path."""
    from .field import write_field
    path = Path(path)
    mask_dir = Path(mask_dir) if mask_dir else path.parent
    mask_dir.mkdir(parents=True, exist_ok=True)
    comps = []
    for c in model.components:
        if c.mask is None:
            raise ValueError(f"component {c.id} has no mask to serialize")
        mask_path = mask_dir / f"{c.id}_mask.pgf"
        write_field(c.mask, mask_path)
        comps.append({
            "id": c.id,
            "transform": np.asarray(c.transform).tolist(),
            "mask": str(mask_path.relative_to(path.parent)) if mask_path.is_relative_to(path.parent) else str(mask_path),
            "weight": _weight_to_json(c.weight_params),
        })
    doc = {
        "grid": {"dims": list(model.grid.dims), "spacing": list(model.grid.spacing),
                 "origin": list(model.grid.origin)},
        "components": comps,
    }
    path.write_text(json.dumps(doc, indent=2))
    return doc


def load_scene(path) -> FusionModel:
    """Load a scene description, recomputing distance maps from the masks and
    component logarithms with the squaring kernel; returns a normalized model."""
    path = Path(path)
    doc = json.loads(path.read_text())
    g = doc["grid"]
    grid = Grid3(tuple(g["dims"]), tuple(g["spacing"]), tuple(g["origin"]))
    comps = []
    for c in doc["components"]:
        T = np.array(c["transform"], dtype=float)
        mask = read_field(path.parent / c["mask"])
        if not isinstance(mask, MaskField):
            raise ValueError(f"component {c['id']}: mask file is not a mask field")
        comps.append(Component(
            id=c["id"], transform=T, log_T=logm_iss(T), dist_map=edt(mask),
            weight_params=_weight_from_json(c["weight"]), mask=mask))
    return normalize(FusionModel(grid=grid, components=comps))
