"""Dense 4x4 matrix algebra and the two reference matrix-function kernels.

Exponential: scaling and squaring with diagonal Pade approximants.
Logarithm: inverse scaling and squaring (repeated principal square roots,
then a Gauss-Legendre Pade approximant of log near the identity).

All functions are pure and operate on plain numpy arrays of shape (4, 4),
float64 for real matrices and complex128 for complex ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

I4 = np.eye(4)

_BOTTOM_ROW = np.array([0.0, 0.0, 0.0, 1.0])


class SingularMatrixError(ValueError):
    pass


class NoPrincipalLogError(ValueError):
    pass


def as_mat4(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {M.shape}")
    if not np.isfinite(M).all():
        raise ValueError("non-finite matrix")
    return M


def is_homogeneous(M, tol: float = 0.0) -> bool:
    return bool(np.abs(np.asarray(M)[3] - _BOTTOM_ROW).max() <= tol)


def clamp_bottom_row(M: np.ndarray) -> np.ndarray:
    """Force the homogeneous bottom row [0,0,0,1] exactly."""
    M = np.array(M, dtype=float)
    M[3] = _BOTTOM_ROW
    return M


def norm_inf(M) -> float:
    """Operator infinity norm (max absolute row sum)."""
    return float(np.abs(np.asarray(M)).sum(axis=1).max())


def norm_2(M) -> float:
    """Spectral norm, via the largest eigenvalue of M^H M."""
    M = np.asarray(M)
    G = M.conj().T @ M
    w = np.linalg.eigvalsh(G)
    return float(np.sqrt(max(w[-1], 0.0)))


def inv4(M) -> np.ndarray:
    """Inverse of a real 4x4 matrix; raises SingularMatrixError when |det| is tiny."""
    M = as_mat4(M)
    scale = max(1.0, norm_inf(M)) ** 4
    det = np.linalg.det(M)
    if abs(det) <= 1e-12 * scale:
        raise SingularMatrixError("singular matrix")
    return np.linalg.inv(M)


def cinv4(M) -> np.ndarray:
    """Inverse of a complex 4x4 matrix; raises SingularMatrixError when |det| is tiny."""
    M = np.asarray(M, dtype=complex)
    if M.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {M.shape}")
    scale = max(1.0, float(np.abs(M).sum(axis=1).max())) ** 4
    det = np.linalg.det(M)
    if abs(det) <= 1e-12 * scale:
        raise SingularMatrixError("singular matrix")
    return np.linalg.inv(M)


# ---------------------------------------------------------------------------
# Exponential
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpmConfig:
    """Configuration for the scaling-and-squaring exponential.

    policy "fixed": scale by exactly 2**s.
    policy "norm-adaptive": scale by 2**max(s, ceil(log2(||M||_inf)) + 1), which
    guarantees ||M / 2**s_eff||_inf <= 1/2; s acts as the floor (default 6).
    """

    pade_degree: int = 6
    policy: str = "norm-adaptive"
    s: int = 6

    def __post_init__(self):
        if self.pade_degree < 1:
            raise ValueError("pade_degree must be >= 1")
        if self.s < 0:
            raise ValueError("s must be >= 0")
        if self.policy not in ("fixed", "norm-adaptive"):
            raise ValueError(f"unknown scaling policy {self.policy!r}")

    def effective_s(self, nrm_inf: float) -> int:
        if self.policy == "fixed":
            return self.s
        if nrm_inf <= 0.0:
            return self.s
        return max(self.s, int(math.ceil(math.log2(nrm_inf))) + 1)


@lru_cache(maxsize=None)
def pade_coefficients(m: int) -> tuple[float, ...]:
    """Coefficients c_i of the degree-m diagonal Pade numerator of exp,
    p_m(x) = sum_i c_i x^i with c_i = (2m-i)! m! / ((2m)! (m-i)! i!)."""
    cs = []
    for i in range(m + 1):
        num = math.factorial(2 * m - i) * math.factorial(m)
        den = math.factorial(2 * m) * math.factorial(m - i) * math.factorial(i)
        cs.append(num / den)
    return tuple(cs)


def expm_taylor(M, n_terms: int) -> np.ndarray:
    """Truncated power series sum_{n=0}^{n_terms} M^n / n!.

    Independent reference for both production backends. The caller is expected
    to keep ||M|| moderate; a numeric overflow raises instead of returning junk.
    """
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    M = as_mat4(M)
    acc = np.eye(4)
    term = np.eye(4)
    with np.errstate(over="raise", invalid="raise"):
        try:
            for n in range(1, n_terms + 1):
                term = term @ M / n
                acc = acc + term
        except FloatingPointError as e:
            raise OverflowError("series diverged numerically") from e
    if not np.isfinite(acc).all():
        raise OverflowError("series diverged numerically")
    return acc


def _pade_exp(A: np.ndarray, m: int) -> np.ndarray:
    """Diagonal [m/m] Pade approximant of exp(A); batched over leading axes."""
    c = pade_coefficients(m)
    eye = np.broadcast_to(np.eye(4), A.shape)
    # Split p_m(A) into even part V and odd part U so q_m(A) = V - U.
    pows = {0: eye, 1: A}
    top = 1
    U = c[1] * A
    V = c[0] * eye
    for i in range(2, m + 1):
        while top < i:
            pows[top + 1] = pows[top] @ A
            top += 1
        if i % 2:
            U = U + c[i] * pows[i]
        else:
            V = V + c[i] * pows[i]
    return np.linalg.solve(V - U, V + U)


def expm_pade_ss(M, cfg: ExpmConfig | None = None) -> np.ndarray:
    """Matrix exponential by scaling and squaring: e^M = (r_m(M / 2^s))^(2^s).

    If M has a zero bottom row (a homogeneous generator), the result's bottom
    row is clamped to [0,0,0,1] exactly.
    """
    M = as_mat4(M)
    cfg = cfg or ExpmConfig()
    s = cfg.effective_s(norm_inf(M))
    R = _pade_exp(M / (2.0 ** s), cfg.pade_degree)
    for _ in range(s):
        R = R @ R
    if np.abs(M[3]).max() == 0.0:
        R = clamp_bottom_row(R)
    return R


def expm_pade_ss_batched(Ms: np.ndarray, s: int, m: int = 6) -> np.ndarray:
    """Scaling-and-squaring exponential over a stack of (n, 4, 4) matrices
    with a fixed scaling factor. Used by the grid backends; per-element results
    are identical to expm_pade_ss with a fixed policy."""
    R = _pade_exp(Ms / (2.0 ** s), m)
    for _ in range(s):
        R = R @ R
    return R


# ---------------------------------------------------------------------------
# Logarithm
# ---------------------------------------------------------------------------

def _sqrtm_db(T: np.ndarray, maxit: int = 60) -> np.ndarray:
    """Principal square root by the Denman-Beavers iteration."""
    X = T.copy()
    Y = np.eye(4)
    for _ in range(maxit):
        try:
            Xi = np.linalg.inv(X)
            Yi = np.linalg.inv(Y)
        except np.linalg.LinAlgError as e:
            raise ArithmeticError("sqrt iteration failed") from e
        Xn = 0.5 * (X + Yi)
        Yn = 0.5 * (Y + Xi)
        if not np.isfinite(Xn).all():
            raise ArithmeticError("sqrt iteration failed")
        if np.abs(Xn - X).max() <= 1e-15 * max(1.0, np.abs(Xn).max()):
            return Xn
        X, Y = Xn, Yn
    raise ArithmeticError("sqrt iteration failed")


@lru_cache(maxsize=None)
def _gauss_legendre_01(m: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    nodes, weights = np.polynomial.legendre.leggauss(m)
    return tuple(0.5 * (nodes + 1.0)), tuple(0.5 * weights)


def _log_near_identity(X: np.ndarray, m: int) -> np.ndarray:
    """Pade-type approximant of log(X) for X near I, from the integral form
    log(I+E) = int_0^1 E (I + x E)^-1 dx evaluated by m-node Gauss-Legendre."""
    E = X - np.eye(4)
    L = np.zeros((4, 4))
    nodes, weights = _gauss_legendre_01(m)
    for x, w in zip(nodes, weights):
        L += w * (E @ np.linalg.inv(np.eye(4) + x * E))
    return L


def logm_iss(T, tol: float = 1e-12) -> np.ndarray:
    """Principal matrix logarithm by inverse scaling and squaring.

    Square-roots T until it is close to the identity, applies a near-identity
    log approximant, and scales back by 2^k. Requires an invertible input with
    no eigenvalue on the closed negative real axis. tol is the target accuracy
    of the round trip expm(logm(T)) = T and selects the reduction threshold
    and approximant degree.
    """
    T = as_mat4(T)
    scale = max(1.0, norm_inf(T)) ** 4
    if abs(np.linalg.det(T)) <= 1e-12 * scale:
        raise SingularMatrixError("singular matrix")
    ev = np.linalg.eigvals(T)
    on_negative_axis = (np.abs(ev.imag) <= 1e-14 * np.abs(ev)) & (ev.real <= 0.0)
    if on_negative_axis.any():
        raise NoPrincipalLogError("no principal logarithm")

    theta, m = (0.35, 6) if tol >= 1e-8 else (0.2, 8)
    X = T.copy()
    k = 0
    while norm_inf(X - np.eye(4)) > theta:
        X = _sqrtm_db(X)
        k += 1
        if k > 40:
            raise ArithmeticError("sqrt iteration failed")
    L = _log_near_identity(X, m) * (2.0 ** k)
    if np.abs(T[3] - _BOTTOM_ROW).max() == 0.0:
        L[3] = 0.0
    return L
