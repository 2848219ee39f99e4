"""Deterministic generators and embedded fixtures for tests and demos.

The three fixture matrices are per-bone rigid transforms between two poses of
an ankle joint (calcaneus, talus, tibia), transcribed digit for digit from
their published source. They are close to, but not exactly, orthonormal:
they come from intensity-based registration and were printed with finite
precision. Their eigenstructure is therefore delicate; see the tests.

joint_scene builds a three-bone synthetic scene whose per-bone rotations share
a common center, the way bones of a joint pivot about it. Axes through a
common point give every blended velocity matrix a common fixed point, which
keeps the fused field diagonalizable everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import polyrigid
from .field import Grid3, MaskField, ScalarField, edt
from .linalg import logm_iss
from .polyrigid import Component, ExponentialWeights, FusionModel, WeightParams
from .se3 import make_transform

_FIXTURES = {
    "T0": np.array([
        [0.9941718578, 0.1057560965, 0.02092652582, -10.089325],
        [-0.1060616449, 0.9942600131, 0.01407066546, 11.20823699],
        [-0.0193183478, -0.01620816253, 0.9996820092, 3.384391194],
        [0.0, 0.0, 0.0, 1.0]]),
    "T1": np.array([
        [0.9969449639, 0.07495416701, 0.02196962386, -7.610509439],
        [-0.0742572844, 0.9967576861, -0.03098434582, 8.603319055],
        [-0.02422079816, 0.02925828099, 0.9992784262, 0.1743830604],
        [0.0, 0.0, 0.0, 1.0]]),
    "T2": np.array([
        [0.9999853969, -0.002367701847, -0.004865686409, -0.5515243692],
        [0.002382844221, 0.9999923706, 0.003108616918, 0.1245495693],
        [0.004858288914, -0.003120165784, 0.9999833703, 0.09221866638],
        [0.0, 0.0, 0.0, 1.0]]),
}

_PROVENANCE = {
    "T0": "ankle example, calcaneus pose change between successive time frames",
    "T1": "ankle example, talus pose change between successive time frames",
    "T2": "ankle example, tibia pose change between successive time frames",
}


@dataclass(frozen=True)
class Fixture:
    name: str
    matrix: np.ndarray
    provenance: str


def fixture(name: str) -> np.ndarray:
    """Embedded reference transform T0, T1, or T2 (a fresh copy)."""
    if name not in _FIXTURES:
        raise KeyError(f"unknown fixture {name!r} (have {sorted(_FIXTURES)})")
    return _FIXTURES[name].copy()


def fixtures() -> list[Fixture]:
    return [Fixture(n, _FIXTURES[n].copy(), _PROVENANCE[n]) for n in ("T0", "T1", "T2")]


def axis_angle_rotation(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rot_z(theta: float, d=(0.0, 0.0, 0.0)) -> np.ndarray:
    """z-rotation by theta with translation d, as a homogeneous 4x4."""
    return make_transform(axis_angle_rotation((0.0, 0.0, 1.0), theta), d)


def screw_z(theta: float, d=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Same as rot_z; a screw motion whenever theta != 0 and d_z != 0."""
    return rot_z(theta, d)


def rotation_about_point(axis, angle: float, center) -> np.ndarray:
    """Rigid rotation whose fixed axis passes through the given point, so the
    translation along the axis is exactly zero."""
    R = axis_angle_rotation(axis, angle)
    center = np.asarray(center, dtype=float)
    return make_transform(R, center - R @ center)


def random_rigid(seed: int, max_angle_deg: float = 170.0,
                 max_trans_mm: float = 20.0) -> np.ndarray:
    """Deterministic random rigid transform; the rotation angle stays strictly
    below max_angle_deg so the principal logarithm exists."""
    rng = np.random.default_rng(seed)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, np.radians(max_angle_deg) * (1.0 - 1e-9))
    d = rng.uniform(-max_trans_mm, max_trans_mm, size=3)
    return make_transform(axis_angle_rotation(axis, angle), d)


def make_affine(scalings=(1.5, 1.5, 1.5), rotation_z_deg: float = 10.0,
                center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Simulated affine transform: isotropic-per-axis scaling composed with a
    z-rotation, pivoting about the given center."""
    A = axis_angle_rotation((0, 0, 1), np.radians(rotation_z_deg)) @ np.diag(scalings)
    center = np.asarray(center, dtype=float)
    return make_transform(A, center - A @ center)


def ellipsoid_mask(grid: Grid3, center, semi_axes) -> MaskField:
    """Voxels whose centers lie inside the axis-aligned ellipsoid (mm units)."""
    coords = grid.coordinates()
    rel = (coords - np.asarray(center, dtype=float)) / np.asarray(semi_axes, dtype=float)
    return MaskField(grid, (rel ** 2).sum(axis=-1) <= 1.0)


@dataclass(frozen=True)
class JointScene:
    model: FusionModel
    volume: ScalarField
    bones: list[dict]          # per bone: axis, angle, center, intensity, semi-axes
    joint_center: np.ndarray


_BONE_INTENSITIES = (200.0, 170.0, 140.0)
_TISSUE = 45.0


def _scene_volume(grid: Grid3, bones: list[dict], t: float) -> ScalarField:
    """Intensity volume with each bone moved to its pose at fraction t of its
    own rotation (built analytically from axis/angle; no matrix kernels).

    The air outside a soft-tissue ball is exactly zero, so pull-back samples
    that leave the volume read the same value they would inside."""
    coords = grid.coordinates()
    extent = np.array(grid.dims, dtype=float) * np.array(grid.spacing)
    center = np.array(grid.origin) + extent / 2.0
    edge = 1.25 * float(min(grid.spacing))   # sigmoid edge width in mm

    # static soft-tissue ball around the joint, fading to black well inside
    # the volume boundary
    r = np.linalg.norm(coords - center, axis=-1)
    tissue_radius = 0.34 * float(extent.min())
    vol = _TISSUE / (1.0 + np.exp((r - tissue_radius) / (1.5 * edge)))

    for bone in bones:
        R = axis_angle_rotation(bone["axis"], t * bone["angle"])
        c = bone["center"]
        # pull each voxel back to the bone's rest frame: R^-1 (y - c) + c
        rel = (coords - c) @ R + c - bone["position"]
        q = ((rel / bone["semi_axes"]) ** 2).sum(axis=-1)
        # approximate signed mm distance from the ellipsoid surface
        approx = (np.sqrt(q) - 1.0) * min(bone["semi_axes"])
        vol += (bone["intensity"] - _TISSUE) / (1.0 + np.exp(approx / edge))
    return ScalarField(grid, vol)


def joint_scene(grid: Grid3 | None = None, seed: int = 0,
                decay_per_mm: float = 10.0) -> JointScene:
    """Three disjoint ellipsoid bones rotating about distinct axes through a
    shared joint center, with a piecewise-smooth intensity volume and sharp
    exponential weights. Fully deterministic per seed."""
    if grid is None:
        grid = Grid3((32, 32, 32), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0))
    rng = np.random.default_rng(seed)
    extent = np.array(grid.dims, dtype=float) * np.array(grid.spacing)
    center = np.array(grid.origin) + extent / 2.0

    offsets = np.array([[-0.20, -0.04, -0.17], [0.04, 0.05, 0.02], [0.18, 0.0, 0.19]])
    semi = np.array([[0.14, 0.11, 0.09], [0.09, 0.12, 0.08], [0.10, 0.09, 0.14]])
    bones = []
    for k in range(3):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(0.06, 0.13) * (1 if k % 2 == 0 else -1)
        position = center + offsets[k] * extent
        bones.append({
            "axis": axis,
            "angle": float(angle),
            "center": center,
            "position": position,
            "semi_axes": semi[k] * extent,
            "intensity": _BONE_INTENSITIES[k],
        })

    components = []
    for k, bone in enumerate(bones):
        mask = ellipsoid_mask(grid, bone["position"], bone["semi_axes"])
        T = rotation_about_point(bone["axis"], bone["angle"], center)
        components.append(Component(
            id=f"bone{k}",
            transform=T,
            log_T=logm_iss(T),
            dist_map=edt(mask),
            weight_params=ExponentialWeights(decay=decay_per_mm),
            mask=mask,
        ))
    model = polyrigid.normalize(FusionModel(grid=grid, components=components))
    volume = _scene_volume(grid, bones, 0.0)
    return JointScene(model=model, volume=volume, bones=bones, joint_center=center)


def joint_scene_volume_at(scene: JointScene, t: float) -> ScalarField:
    """The scene's intensity volume with every bone at fraction t of its own
    motion; an analytic reference independent of any flow computation."""
    return _scene_volume(scene.model.grid, scene.bones, t)
