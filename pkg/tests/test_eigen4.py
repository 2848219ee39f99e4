import numpy as np
import pytest

from polyexp import eigen4
from polyexp.eigen4 import (HalfTurnError, IllConditionedEigenbasisError,
                            ScrewMotionError, classify_screw, eig_homogeneous,
                            eig_velocity, expm_eig, frac_power, logm_eig)
from polyexp.linalg import expm_pade_ss, logm_iss, norm_2
from polyexp.synth import (axis_angle_rotation, fixture, random_rigid, rot_z,
                           screw_z, make_affine)
from polyexp.se3 import make_transform


def random_pitch_free(rng, lo=0.1, hi=3.0, trans=15.0):
    theta = rng.uniform(lo, hi)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    d = rng.uniform(-trans, trans, 3)
    d -= (d @ axis) * axis
    return make_transform(axis_angle_rotation(axis, theta), d), axis, theta


class TestClassifyScrew:
    def test_translation_orthogonal_to_axis(self):
        rep = classify_screw(rot_z(np.radians(30), (5.0, 2.0, 0.0)))
        assert np.allclose(rep.axis, [0, 0, 1])
        assert abs(rep.pitch) < 1e-12
        assert not rep.is_screw

    def test_axis_translation_is_screw(self):
        rep = classify_screw(rot_z(np.radians(30), (0.0, 0.0, 3.0)))
        assert rep.is_screw
        assert abs(rep.pitch - 3.0) < 1e-12

    def test_identity_near_identity(self):
        rep = classify_screw(np.eye(4))
        assert rep.near_identity
        assert not rep.is_screw

    def test_half_turn_raises(self):
        with pytest.raises(HalfTurnError):
            classify_screw(rot_z(np.pi))

    def test_non_rigid_rejected(self):
        with pytest.raises(ValueError, match="not a rigid"):
            classify_screw(np.diag([2.0, 1.0, 1.0, 1.0]))


class TestEigHomogeneous:
    def test_z_rotation_eigenvalues(self):
        # spectrum of a pitch-free z-rotation: {e^(i t), e^(-i t), 1, 1}
        theta = np.pi / 3
        dec = eig_homogeneous(rot_z(theta, (2.0, -1.0, 0.0)))
        lam = sorted(dec.lambdas, key=lambda v: v.imag)
        assert abs(lam[0] - np.exp(-1j * theta)) < 1e-12
        assert abs(lam[3] - np.exp(1j * theta)) < 1e-12
        assert abs(lam[1] - 1) < 1e-12 and abs(lam[2] - 1) < 1e-12
        # four independent eigenvectors
        assert np.linalg.matrix_rank(dec.P, tol=1e-9) == 4

    def test_screw_rejected(self):
        with pytest.raises(ScrewMotionError, match="screw"):
            eig_homogeneous(screw_z(np.pi / 3, (0.0, 0.0, 1.0)))

    def test_fixture_t2_repeated_yet_diagonalizable(self):
        dec = eig_homogeneous(fixture("T2"))
        lam = dec.lambdas
        assert abs(lam[2] - 1.0) < 1e-6          # repeated unit eigenvalue
        assert abs(lam[3] - 1.0) == 0.0
        assert dec.cond < 1e8

    def test_fixture_t0_four_distinct(self):
        dec = eig_homogeneous(fixture("T0"))
        lam = dec.lambdas
        pair = sorted(lam[:2], key=lambda v: v.imag)
        assert abs(pair[0].conjugate() - pair[1]) < 1e-12
        assert abs(lam[2].imag) < 1e-12
        # the fixture's block determinant pins its real block eigenvalue
        A = fixture("T0")[:3, :3]
        det = np.linalg.det(A)
        assert abs(lam[2].real * abs(pair[0]) ** 2 - det) < 1e-9

    def test_near_identity_routes_to_series(self):
        T = np.eye(4)
        T[0, 3] = 1e-8
        dec = eig_homogeneous(T)
        assert dec.near_identity
        assert np.abs(frac_power(dec, 0.5) - (np.eye(4) + 0.5 * (T - np.eye(4)))).max() == 0.0

    def test_non_homogeneous_rejected(self):
        M = np.eye(4)
        M[3, 0] = 0.1
        with pytest.raises(ValueError, match="homogeneous"):
            eig_homogeneous(M)

    def test_reconstruction_invariant(self, rng):
        for _ in range(30):
            T, _, _ = random_pitch_free(rng)
            dec = eig_homogeneous(T)
            assert np.abs(dec.reconstruct() - T).max() < 1e-9

    def test_eigenvector_residuals(self, rng):
        for _ in range(10):
            T, _, _ = random_pitch_free(rng)
            dec = eig_homogeneous(T)
            res = np.abs(T @ dec.P - dec.P * dec.lambdas).max()
            assert res < 1e-9

    def test_conjugate_pair_closure(self, rng):
        for _ in range(10):
            T, _, _ = random_pitch_free(rng)
            lam = eig_homogeneous(T).lambdas
            conj = np.sort_complex(np.conj(lam))
            assert np.abs(np.sort_complex(lam) - conj).max() < 1e-12

    def test_pure_large_translation_not_diagonalizable(self):
        T = np.eye(4)
        T[:3, 3] = (5.0, -2.0, 7.0)
        with pytest.raises(ScrewMotionError):
            eig_homogeneous(T)


class TestScrewLaw:
    def test_accept_reject_split(self, rng):
        # diagonalizable iff the translation along the rotation axis vanishes
        n_acc = n_rej = 0
        for i in range(100):
            theta = rng.uniform(0.1, 3.0)
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            d = rng.uniform(-15, 15, 3)
            if i % 2 == 0:
                d = d - (d @ axis) * axis
            T = make_transform(axis_angle_rotation(axis, theta), d)
            pitch = abs(d @ axis)
            try:
                dec = eig_homogeneous(T)
                assert pitch <= 1e-6, f"accepted pitch {pitch}"
                assert np.abs(dec.reconstruct() - T).max() < 1e-9
                n_acc += 1
            except ScrewMotionError:
                assert pitch > 1e-6, f"rejected pitch {pitch}"
                n_rej += 1
        assert n_acc == 50 and n_rej == 50


class TestLogmEig:
    def test_identity(self):
        dec = eig_homogeneous(rot_z(0.3))
        L = logm_eig(dec)
        assert np.abs(expm_pade_ss(L) - rot_z(0.3)).max() < 1e-12

    def test_identity_matrix(self):
        assert np.abs(logm_eig(eig_homogeneous(np.eye(4)))).max() < 1e-15

    def test_cross_backend_quarter_turn(self):
        T = rot_z(np.pi / 4)
        L_eig = logm_eig(eig_homogeneous(T))
        L_iss = logm_iss(T)
        assert np.abs(L_eig - L_iss).max() < 1e-10

    def test_fixture_t0_round_trip(self):
        # cond(P) ~ 3e7 here; needs the Rayleigh-polished eigenpairs and the
        # extended-precision spectral products to clear 1e-9
        T0 = fixture("T0")
        L = logm_eig(eig_homogeneous(T0))
        assert np.abs(expm_pade_ss(L) - T0).max() < 1e-9

    def test_negative_axis_rejected(self):
        dec = eig_homogeneous(np.diag([-1.0, -2.0, 1.0, 1.0]).astype(float))
        with pytest.raises(Exception, match="no principal logarithm"):
            logm_eig(dec)


class TestFracPower:
    def test_endpoints(self, rng):
        T, _, _ = random_pitch_free(rng)
        dec = eig_homogeneous(T)
        assert np.abs(frac_power(dec, 0.0) - np.eye(4)).max() < 1e-12
        assert np.abs(frac_power(dec, 1.0) - T).max() < 1e-10

    def test_half_angle_rotation(self):
        dec = eig_homogeneous(rot_z(np.radians(30)))
        assert np.abs(frac_power(dec, 0.5) - rot_z(np.radians(15))).max() < 1e-12

    def test_fixture_t1_half_step_squares_back(self):
        T1 = fixture("T1")
        dec = eig_homogeneous(T1)
        half = frac_power(dec, 0.5)
        assert np.abs(half @ half - T1).max() < 1e-9

    def test_one_parameter_subgroup(self, rng):
        for _ in range(10):
            T, _, _ = random_pitch_free(rng)
            dec = eig_homogeneous(T)
            t1, t2 = rng.uniform(-1, 1, 2)
            lhs = frac_power(dec, t1 + t2)
            rhs = frac_power(dec, t2) @ frac_power(dec, t1)
            assert np.abs(lhs - rhs).max() < 1e-9

    def test_inverse_consistency(self, rng):
        for _ in range(10):
            T, _, _ = random_pitch_free(rng)
            dec = eig_homogeneous(T)
            t = rng.uniform(0.1, 1.0)
            assert np.abs(frac_power(dec, -t) @ frac_power(dec, t) - np.eye(4)).max() < 1e-9

    def test_cross_backend_sweep(self, rng):
        # 100 random non-screw rigids, rotation <= 170 degrees
        worst = 0.0
        for _ in range(100):
            T, _, _ = random_pitch_free(rng, lo=0.05, hi=np.radians(170))
            dec = eig_homogeneous(T)
            L = logm_iss(T)
            for t in np.arange(0.1, 1.0, 0.1):
                worst = max(worst, norm_2(frac_power(dec, t) - expm_pade_ss(t * L)))
        assert worst < 1e-8

    def test_determinant_interpolation_affine(self):
        # simulated affine: scalings 1.5 with a 10-degree rotation
        T = make_affine((1.5, 1.5, 1.5), 10.0, center=(4.0, 2.0, 1.0))
        dec = eig_homogeneous(T)
        detT = np.linalg.det(T)
        for t in (0.2, 0.5, 0.8):
            got = np.linalg.det(frac_power(dec, t))
            assert abs(got - detT ** t) < 1e-8


class TestVelocityDomain:
    def test_expm_eig_matches_squaring(self, rng):
        from conftest import random_rigid_log
        for _ in range(20):
            L = random_rigid_log(rng, max_angle=2.5)
            # remove the axis component of the translation so the velocity
            # is diagonalizable
            w = np.array([L[2, 1], L[0, 2], L[1, 0]])
            s = w / np.linalg.norm(w)
            L[:3, 3] -= (L[:3, 3] @ s) * s
            assert np.abs(expm_eig(L) - expm_pade_ss(L)).max() < 1e-10

    def test_screw_velocity_rejected(self):
        L = np.zeros((4, 4))
        L[0, 1], L[1, 0] = -1.0, 1.0
        L[2, 3] = 2.0       # translation along the rotation axis
        with pytest.raises(ScrewMotionError):
            eig_velocity(L)

    def test_near_zero_series(self):
        L = np.zeros((4, 4))
        L[0, 3] = 1e-9
        dec = eig_velocity(L)
        assert dec.near_identity
        E = expm_eig(L, 1.0)
        assert abs(E[0, 3] - 1e-9) < 1e-20

    def test_requires_zero_bottom_row(self):
        with pytest.raises(ValueError, match="zero bottom row"):
            eig_velocity(np.eye(4))


class TestCondGate:
    def test_ill_conditioned_raises(self):
        # rotation with pitch just below the screw tolerance but a unit-cluster
        # gap forced to zero: accepted; push cond_max down to force the gate
        T = rot_z(0.5, (3.0, 1.0, 0.0))
        with pytest.raises(IllConditionedEigenbasisError):
            eig_homogeneous(T, cond_max=1.0)
