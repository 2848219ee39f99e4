"""Eigendecomposition of homogeneous 4x4 transformations.

A homogeneous matrix T = [[A, d], [0, 1]] is block triangular, so its spectrum
is the spectrum of the 3x3 linear block A plus the unit eigenvalue contributed
by the bottom row. The block eigenvalues are taken as the closed-form roots of
the cubic characteristic polynomial; eigenvectors come from row cross products
refined by inverse iteration. A rigid T with nontrivial rotation and nonzero
translation along its rotation axis (a screw motion) is not diagonalizable and
is rejected. When the unit eigenvalue is repeated (the rigid, pitch-free
case), the third eigenvector is the rotation's fixed-axis direction scaled by
tan(theta/2) and the fourth solves (A - I) u = -d on the rank-2 subspace.

The same machinery applies to velocity matrices L = [[B, l], [0, 0]] (zero
bottom row, anchor eigenvalue 0 instead of 1); see eig_velocity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .linalg import clamp_bottom_row, expm_taylor

DEFAULT_PITCH_TOL = 1e-6      # mm of translation along the rotation axis
DEFAULT_GROUP_TOL = 1e-8      # |lambda - anchor| below this joins the repeated pair
DEFAULT_COND_MAX = 1e8        # eigenbasis condition number acceptance ceiling
NEAR_IDENTITY_TOL = 1e-7      # ||T - I||_inf below this bypasses the eigensolver
RIGID_TOL = 1e-9


class ScrewMotionError(ValueError):
    """Raised when a screw transformation (nonzero pitch) is asked to diagonalize."""


class IllConditionedEigenbasisError(ValueError):
    """Raised when the eigenbasis condition number exceeds the acceptance ceiling;
    callers should fall back to the squaring backend."""


class HalfTurnError(ValueError):
    """Rotation by exactly pi: the fixed-axis tangent vector tan(theta/2)*s blows up."""


@dataclass(frozen=True)
class ScrewReport:
    axis: np.ndarray          # unit 3-vector (zeros when the rotation is trivial)
    angle: float              # radians, in [0, pi)
    pitch: float              # translation along the axis, mm
    is_screw: bool
    near_identity: bool


@dataclass(frozen=True)
class EigenDecomp4:
    """Immutable eigendecomposition T = P diag(lambdas) P^-1.

    anchor is 1.0 for group-domain (homogeneous transform) inputs and 0.0 for
    algebra-domain (velocity) inputs; lambdas[3] equals the anchor exactly.
    For near-identity / near-zero inputs the eigenbasis is skipped and series
    evaluation is used instead; such decompositions carry the source matrix.
    """

    lambdas: np.ndarray
    P: np.ndarray
    P_inv: np.ndarray
    cond: float
    anchor: float = 1.0
    near_identity: bool = False
    source: np.ndarray | None = field(default=None, compare=False)

    def reconstruct(self) -> np.ndarray:
        return _apply_spectral(self, self.lambdas)


def rotation_axis_angle(R: np.ndarray) -> tuple[np.ndarray, float]:
    """Axis (unit) and angle in [0, pi] of a rotation matrix."""
    cos_t = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    sin_t = 0.5 * np.linalg.norm(w)
    angle = float(np.arctan2(sin_t, cos_t))
    if sin_t > 1e-12:
        axis = w / (2.0 * sin_t)
    elif cos_t > 0.0:
        axis = np.zeros(3)
    else:
        # angle ~ pi: axis from the dominant column of R + I
        M = R + np.eye(3)
        j = int(np.argmax(np.abs(M).sum(axis=0)))
        axis = M[:, j] / np.linalg.norm(M[:, j])
    return axis, angle


def is_rigid(T, tol: float = RIGID_TOL) -> bool:
    T = np.asarray(T, dtype=float)
    if not linalg.is_homogeneous(T):
        return False
    R = T[:3, :3]
    if np.abs(R.T @ R - np.eye(3)).max() > tol:
        return False
    return abs(np.linalg.det(R) - 1.0) <= tol


def classify_screw(T, pitch_tol: float = DEFAULT_PITCH_TOL,
                   rigid_tol: float = 1e-6) -> ScrewReport:
    """Screw analysis of a (near-)rigid transform: rotation axis, angle, and
    the translation component along the axis (the pitch). A transform is a
    screw motion iff both the angle and the pitch are nonzero."""
    T = linalg.as_mat4(T)
    if not is_rigid(T, tol=rigid_tol):
        raise ValueError("not a rigid transform")
    R, d = T[:3, :3], T[:3, 3]
    axis, angle = rotation_axis_angle(R)
    if abs(angle - np.pi) <= 1e-12:
        raise HalfTurnError("half-turn: fixed-axis tangent vector undefined")
    near_identity = angle < 1e-8
    pitch = 0.0 if near_identity else float(d @ axis)
    is_screw = (not near_identity) and abs(pitch) > pitch_tol
    return ScrewReport(axis=axis, angle=angle, pitch=pitch,
                       is_screw=is_screw, near_identity=near_identity)


# ---------------------------------------------------------------------------
# Closed-form cubic eigenvalues of a real 3x3 block
# ---------------------------------------------------------------------------

def cubic_eigenvalues(A: np.ndarray) -> np.ndarray:
    """Roots of det(A - x I) for a real 3x3 matrix, by Cardano's formula with
    the trigonometric branch for three real roots, each polished by two Newton
    steps on the characteristic polynomial. Complex roots are returned as an
    exact conjugate pair."""
    c2 = float(np.trace(A))
    c1 = 0.5 * (c2 * c2 - float(np.trace(A @ A)))
    c0 = float(np.linalg.det(A))
    # depressed cubic y^3 + p y + q with x = y + c2/3
    p = c1 - c2 * c2 / 3.0
    q = -c0 + c1 * c2 / 3.0 - 2.0 * c2 ** 3 / 27.0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc > 0.0:
        sq = np.sqrt(disc)
        u = np.cbrt(-q / 2.0 + sq)
        v = np.cbrt(-q / 2.0 - sq)
        roots = [u + v + 0j, -(u + v) / 2.0 + 1j * (u - v) * np.sqrt(3.0) / 2.0]
        roots.append(roots[1].conjugate())
    elif p < 0.0:
        r = np.sqrt(-p / 3.0)
        phi = np.arccos(np.clip(3.0 * q / (2.0 * p * r), -1.0, 1.0))
        roots = [2.0 * r * np.cos((phi - 2.0 * np.pi * k) / 3.0) + 0j for k in range(3)]
    else:
        roots = [np.cbrt(-q) + 0j] * 3
    out = np.empty(3, dtype=complex)
    for i, x in enumerate(np.asarray(roots) + c2 / 3.0):
        for _ in range(2):
            f = ((x - c2) * x + c1) * x - c0
            fp = (3.0 * x - 2.0 * c2) * x + c1
            if abs(fp) > 1e-300:
                x = x - f / fp
        out[i] = x
    # keep complex roots an exact conjugate pair after polishing
    im = np.abs(out.imag) > 0
    if im.sum() == 2:
        a, b = np.nonzero(im)[0]
        mean = 0.5 * (out[a] + out[b].conjugate())
        out[a], out[b] = mean, mean.conjugate()
    return out


def _null_vector(N: np.ndarray) -> np.ndarray | None:
    """Approximate unit null vector of a singular-ish complex 3x3 matrix from
    the largest cross product of two rows."""
    crosses = [np.cross(N[0], N[1]), np.cross(N[1], N[2]), np.cross(N[0], N[2])]
    norms = [np.linalg.norm(c) for c in crosses]
    i = int(np.argmax(norms))
    if norms[i] < 1e-300:
        return None
    return crosses[i] / norms[i]


def _block_eigenpair(A: np.ndarray, mu: complex,
                     refine: int = 3) -> tuple[np.ndarray, complex]:
    """Unit eigenvector and polished eigenvalue of the 3x3 block.

    The cubic root only carries characteristic-polynomial accuracy (coefficient
    round-off amplified by the inverse of the root separation), so after a
    cross-product null-vector estimate the pair is polished by inverse
    iteration plus Rayleigh-quotient updates against the matrix itself."""
    Ac = A.astype(complex)
    v = _null_vector(Ac - mu * np.eye(3))
    if v is None:
        # A - mu I ~ 0: isotropic block, any direction is an eigenvector
        return np.array([1.0, 0.0, 0.0], dtype=complex), mu
    for _ in range(refine):
        try:
            w = np.linalg.solve(Ac - mu * np.eye(3), v)
        except np.linalg.LinAlgError:
            mu = mu + 1e-14 * (1.0 + abs(mu))
            continue
        nw = np.linalg.norm(w)
        if not np.isfinite(nw) or nw == 0.0:
            break
        v = w / nw
        mu = (v.conj() @ (Ac @ v)) / (v.conj() @ v)
    return v, mu


def _block_eigenvector(A: np.ndarray, mu: complex, refine: int = 3) -> np.ndarray:
    return _block_eigenpair(A, mu, refine)[0]


def _assemble(lambdas, P, anchor, source, cond_max) -> EigenDecomp4:
    condP = float(np.linalg.cond(P))
    if not np.isfinite(condP) or condP > cond_max:
        raise IllConditionedEigenbasisError("ill-conditioned eigenbasis")
    P_inv = np.linalg.inv(P)
    # one Newton step squares the inversion residual, which matters for
    # ill-conditioned bases near the acceptance ceiling
    P_inv = P_inv @ (2.0 * np.eye(4) - P @ P_inv)
    return EigenDecomp4(lambdas=np.asarray(lambdas, dtype=complex), P=P,
                        P_inv=P_inv, cond=condP, anchor=anchor, source=source)


def _eig_block_plus_row(T: np.ndarray, anchor: float, group_tol: float,
                        cond_max: float, pitch_tol: float) -> EigenDecomp4:
    """Shared eigendecomposition core for [[A, d], [0, anchor-row]] matrices.

    anchor = 1 for transforms (bottom row [0,0,0,1]), 0 for velocities
    (zero bottom row)."""
    A = T[:3, :3]
    d = T[:3, 3]
    mu = cubic_eigenvalues(A)
    order = np.argsort(np.abs(mu - anchor))[::-1]
    mu = mu[order]  # block root closest to the anchor goes to slot 2

    P = np.zeros((4, 4), dtype=complex)
    real_input = np.isrealobj(A)
    k = 0
    while k < 3:
        v, mu_k = _block_eigenpair(A, mu[k])
        P[:3, k] = v
        mu[k] = mu_k
        if (real_input and k < 2 and abs(mu_k.imag) > 0
                and abs(mu[k + 1] - mu_k.conjugate()) < 1e-6 * (1 + abs(mu_k))):
            # keep the complex pair exactly conjugate
            P[:3, k + 1] = v.conjugate()
            mu[k + 1] = mu_k.conjugate()
            k += 2
        else:
            k += 1
    lambdas = np.concatenate([mu, [anchor + 0j]])

    AmI = A - anchor * np.eye(3)
    if abs(mu[2] - anchor) < group_tol:
        # Repeated anchor eigenvalue. Diagonalizable iff d lies in the range
        # of (A - anchor I), i.e. zero translation along the fixed axis; the
        # fourth eigenvector is (u, eps) with (A - anchor I) u = -eps d, eps=1.
        # AmI is rank-deficient by hypothesis here: cut its near-null direction.
        lambdas[2] = anchor
        u, *_ = np.linalg.lstsq(AmI, -d, rcond=1e-8)
        residual = float(np.linalg.norm(AmI @ u + d))
        if residual > max(pitch_tol, 1e-12 * max(1.0, float(np.linalg.norm(d)))):
            raise ScrewMotionError(
                f"not diagonalizable: screw transformation "
                f"(axis translation residual {residual:.3e})")
        P[:3, 3] = u
        P[3, 3] = 1.0
    else:
        try:
            u = np.linalg.solve(AmI, -d)
        except np.linalg.LinAlgError as e:
            raise IllConditionedEigenbasisError("ill-conditioned eigenbasis") from e
        v4 = np.concatenate([u, [1.0]]).astype(complex)
        P[:, 3] = v4 / np.linalg.norm(v4)

    return _assemble(lambdas, P, anchor, T, cond_max)


def eig_homogeneous(T, pitch_tol: float = DEFAULT_PITCH_TOL,
                    group_tol: float = DEFAULT_GROUP_TOL,
                    cond_max: float = DEFAULT_COND_MAX) -> EigenDecomp4:
    """Eigendecomposition of a homogeneous 4x4 transform.

    Rejects rigid screw motions (nonzero translation along the rotation axis)
    with ScrewMotionError and hopeless eigenbases with
    IllConditionedEigenbasisError. Near-identity inputs skip the eigensolver
    entirely: frac_power then evaluates a first-order series, which avoids an
    arbitrarily ill-conditioned basis.
    """
    T = linalg.as_mat4(T)
    if not linalg.is_homogeneous(T):
        raise ValueError("matrix is not homogeneous (bottom row must be [0,0,0,1])")

    if linalg.norm_inf(T - np.eye(4)) < NEAR_IDENTITY_TOL:
        return EigenDecomp4(lambdas=np.ones(4, dtype=complex), P=np.eye(4, dtype=complex),
                            P_inv=np.eye(4, dtype=complex), cond=1.0, anchor=1.0,
                            near_identity=True, source=T)

    if is_rigid(T):
        report = classify_screw(T, pitch_tol=pitch_tol, rigid_tol=RIGID_TOL)
        if report.is_screw:
            raise ScrewMotionError(
                f"not diagonalizable: screw transformation (pitch {report.pitch:.3e})")
        if not report.near_identity:
            return _eig_rigid(T, report, group_tol, cond_max, pitch_tol)

    return _eig_block_plus_row(T, anchor=1.0, group_tol=group_tol,
                               cond_max=cond_max, pitch_tol=pitch_tol)


def _eig_rigid(T: np.ndarray, report: ScrewReport, group_tol: float,
               cond_max: float, pitch_tol: float) -> EigenDecomp4:
    """Rigid-specific path: block eigenvalues are {e^(i theta), e^(-i theta), 1};
    the repeated unit eigenvalue takes the fixed-axis tangent vector
    tan(theta/2) * s as v3 and the in-plane solution of (R - I) u = -d as v4."""
    R, d = T[:3, :3], T[:3, 3]
    theta = report.angle
    lam = np.exp(1j * theta)
    lambdas = np.array([lam, lam.conjugate(), 1.0, 1.0], dtype=complex)
    P = np.zeros((4, 4), dtype=complex)
    P[:3, 0] = _block_eigenvector(R, lam)
    P[:3, 1] = P[:3, 0].conjugate()
    P[:3, 2] = np.tan(theta / 2.0) * report.axis
    RmI = R - np.eye(3)
    u, *_ = np.linalg.lstsq(RmI, -d, rcond=1e-8)
    residual = float(np.linalg.norm(RmI @ u + d))
    if residual > max(pitch_tol, 1e-12 * max(1.0, float(np.linalg.norm(d)))):
        raise ScrewMotionError(
            f"not diagonalizable: screw transformation "
            f"(axis translation residual {residual:.3e})")
    P[:3, 3] = u
    P[3, 3] = 1.0
    return _assemble(lambdas, P, 1.0, T, cond_max)


def eig_velocity(L, group_tol: float = DEFAULT_GROUP_TOL,
                 cond_max: float = DEFAULT_COND_MAX,
                 pitch_tol: float = DEFAULT_PITCH_TOL) -> EigenDecomp4:
    """Eigendecomposition of a velocity matrix (zero bottom row, anchor 0).

    exp(t L) then costs two matrix multiplications per evaluation point:
    P diag(e^(t mu_k)) P^-1. Near-zero inputs take a series branch instead.
    """
    L = linalg.as_mat4(L)
    if np.abs(L[3]).max() != 0.0:
        raise ValueError("velocity matrix must have a zero bottom row")
    if linalg.norm_inf(L) < NEAR_IDENTITY_TOL:
        return EigenDecomp4(lambdas=np.zeros(4, dtype=complex), P=np.eye(4, dtype=complex),
                            P_inv=np.eye(4, dtype=complex), cond=1.0, anchor=0.0,
                            near_identity=True, source=L)
    return _eig_block_plus_row(L, anchor=0.0, group_tol=group_tol,
                               cond_max=cond_max, pitch_tol=pitch_tol)


# ---------------------------------------------------------------------------
# Functions of a decomposition
# ---------------------------------------------------------------------------

# Extended-precision accumulation keeps P f(D) P^-1 products from losing the
# last ~cond(P) * eps digits on ill-conditioned bases; falls back to double
# where the platform has no long-double type.
_LONG_COMPLEX = getattr(np, "complex256", np.complex128)


def _apply_spectral(dec: EigenDecomp4, scalars: np.ndarray) -> np.ndarray:
    """P diag(scalars) P^-1 with extended-precision products and an
    extra-refined inverse."""
    P = dec.P.astype(_LONG_COMPLEX)
    Pi = dec.P_inv.astype(_LONG_COMPLEX)
    eye = np.eye(4, dtype=_LONG_COMPLEX)
    for _ in range(2):
        Pi = Pi @ (2.0 * eye - P @ Pi)
    out = (P * scalars.astype(_LONG_COMPLEX)) @ Pi
    return out.astype(np.complex128)


def _check_principal_branch(lambdas: np.ndarray) -> None:
    negative_real = (np.abs(lambdas.imag) <= 1e-14 * np.abs(lambdas)) & (lambdas.real <= 0.0)
    if negative_real.any():
        raise linalg.NoPrincipalLogError("no principal logarithm")


def logm_eig(dec: EigenDecomp4) -> np.ndarray:
    """Principal logarithm from the eigendecomposition:
    log T = P diag(log lambda_1, log lambda_2, log lambda_3, 0) P^-1."""
    if dec.anchor != 1.0:
        raise ValueError("logm_eig expects a group-domain decomposition")
    if dec.near_identity:
        E = dec.source - np.eye(4)
        L = E - E @ E / 2.0 + E @ E @ E / 3.0
        L[3] = 0.0
        return L
    _check_principal_branch(dec.lambdas)
    logs = np.log(dec.lambdas.astype(_LONG_COMPLEX))
    logs[3] = 0.0
    L = _apply_spectral(dec, logs)
    imag_residue = float(np.abs(L.imag).max())
    scale = max(1.0, float(np.abs(L.real).max()))
    if imag_residue > 1e-10 * scale:
        raise IllConditionedEigenbasisError(
            f"imaginary residue {imag_residue:.3e} too large for a real logarithm")
    L = L.real
    L[3] = 0.0
    return L


def frac_power(dec: EigenDecomp4, t: float) -> np.ndarray:
    """T^t = P diag(lambda_k^t) P^-1 with principal scalar powers.

    t is any real number; t in [0,1] interpolates between the identity and T,
    and t = -1 gives the inverse. Near-identity decompositions evaluate the
    first-order series I + t (T - I) instead.
    """
    if dec.anchor != 1.0:
        raise ValueError("frac_power expects a group-domain decomposition")
    if dec.near_identity:
        return clamp_bottom_row(np.eye(4) + t * (dec.source - np.eye(4)))
    _check_principal_branch(dec.lambdas)
    powers = np.exp(t * np.log(dec.lambdas.astype(_LONG_COMPLEX)))
    powers[3] = 1.0
    M = _apply_spectral(dec, powers)
    imag_residue = float(np.abs(M.imag).max())
    if imag_residue > 1e-9 * max(1.0, float(np.abs(M.real).max())):
        raise IllConditionedEigenbasisError(
            f"imaginary residue {imag_residue:.3e} too large for a real power")
    return clamp_bottom_row(M.real)


def expm_eig(L, t: float = 1.0) -> np.ndarray:
    """exp(t L) through the eigendecomposition of the velocity matrix L."""
    dec = eig_velocity(L)
    if dec.near_identity:
        tL = t * dec.source
        return clamp_bottom_row(expm_taylor(tL, 4))
    exps = np.exp(t * dec.lambdas.astype(_LONG_COMPLEX))
    exps[3] = 1.0
    M = _apply_spectral(dec, exps)
    imag_residue = float(np.abs(M.imag).max())
    if imag_residue > 1e-9 * max(1.0, float(np.abs(M.real).max())):
        raise IllConditionedEigenbasisError(
            f"imaginary residue {imag_residue:.3e} too large for a real exponential")
    return clamp_bottom_row(M.real)
