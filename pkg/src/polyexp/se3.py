"""Rigid-transform construction/decomposition and closed-form interpolation.

Euler convention: R = R_x(theta_x) . R_y(theta_y) . R_z(theta_z), so the first
row of R is [cos(ty)cos(tz), -cos(ty)sin(tz), sin(ty)]. The appendix-style
angle tables are only reproducible under this convention.

trig_interp evaluates the closed-form trigonometric path: each per-axis angle
alpha_i = atan2(sin theta_i, cos theta_i) is scaled by t inside its own
rotation factor and the translation is scaled linearly. For a single active
rotation axis (or a pure translation) this equals exp(t log T); for combined
multi-axis rotations the per-axis factors do not commute, so the path agrees
with exp(t log T) at the endpoints but generally differs in between. The
discrepancy can be measured with trig_vs_expm_gap; it is reported, not fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import eigen4, linalg
from .linalg import ExpmConfig, clamp_bottom_row, expm_pade_ss, inv4, logm_iss

GIMBAL_TOL = 1e-9


class GimbalLockError(ValueError):
    pass


@dataclass(frozen=True)
class EulerAngles:
    """Rotation angles about x, y, z in radians, normalized to (-pi, pi]."""

    theta_x: float
    theta_y: float
    theta_z: float

    @property
    def alphas(self) -> tuple[float, float, float]:
        return (float(np.arctan2(np.sin(self.theta_x), np.cos(self.theta_x))),
                float(np.arctan2(np.sin(self.theta_y), np.cos(self.theta_y))),
                float(np.arctan2(np.sin(self.theta_z), np.cos(self.theta_z))))


def rot_x(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rot_y(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def rot_z3(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


def make_transform(R: np.ndarray, d) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = d
    return T


def from_euler(angles: EulerAngles | tuple[float, float, float], d=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Homogeneous rigid transform with R = R_x R_y R_z and translation d."""
    if not isinstance(angles, EulerAngles):
        angles = EulerAngles(*angles)
    ax, ay, az = angles.alphas
    R = rot_x(ax) @ rot_y(ay) @ rot_z3(az)
    return make_transform(R, d)


def to_euler(T) -> EulerAngles:
    """Extract R = R_x R_y R_z angles; raises GimbalLockError near |theta_y| = pi/2."""
    T = linalg.as_mat4(T)
    R = T[:3, :3]
    if abs(abs(R[0, 2]) - 1.0) < GIMBAL_TOL:
        raise GimbalLockError("degenerate Euler extraction")
    theta_y = float(np.arctan2(R[0, 2], np.hypot(R[0, 0], R[0, 1])))
    theta_z = float(np.arctan2(-R[0, 1], R[0, 0]))
    theta_x = float(np.arctan2(-R[1, 2], R[2, 2]))
    return EulerAngles(theta_x, theta_y, theta_z)


def translation(T) -> np.ndarray:
    return np.asarray(T, dtype=float)[:3, 3].copy()


def trig_interp(T, t: float) -> np.ndarray:
    """Closed-form trigonometric path: per-axis angles and the translation
    scaled by t, assembled as R_x(t a_x) R_y(t a_y) R_z(t a_z) with t*d."""
    T = linalg.as_mat4(T)
    angles = to_euler(T)
    ax, ay, az = angles.alphas
    return from_euler(EulerAngles(t * ax, t * ay, t * az), t * translation(T))


def trig_vs_expm_gap(T, ts=(0.25, 0.5, 0.75)) -> float:
    """Largest 2-norm gap between the trigonometric path and exp(t log T) over
    the sampled interior times. Zero (to rounding) for single-axis rotations
    and pure translations; nonzero in general."""
    L = logm_iss(linalg.as_mat4(T))
    gap = 0.0
    for t in ts:
        gap = max(gap, linalg.norm_2(trig_interp(T, t) - expm_pade_ss(t * L)))
    return gap


def geodesic(T_a, T_b, t: float, backend: str = "squaring",
             cfg: ExpmConfig | None = None) -> np.ndarray:
    """Geodesic between two poses: gamma(t) = exp(t log(T_b T_a^-1)) . T_a.

    backend "squaring" uses the Pade scaling-and-squaring kernels; "eigen"
    decomposes the relative transform and scales its eigenvalues.
    """
    T_a = linalg.as_mat4(T_a)
    T_b = linalg.as_mat4(T_b)
    T_c = T_b @ inv4(T_a)
    if backend == "squaring":
        L = logm_iss(T_c)
        step = expm_pade_ss(t * L, cfg)
    elif backend == "eigen":
        dec = eigen4.eig_homogeneous(T_c)
        step = eigen4.frac_power(dec, t)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return clamp_bottom_row(step @ T_a)
