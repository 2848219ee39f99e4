import numpy as np
import pytest

from polyexp.field import (Grid3, MaskField, MatField, ScalarField, VectorField,
                           edt, edt_squared, edt_squared_bruteforce, read_field,
                           warp, write_field)


def make_grid(n=8, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    return Grid3((n, n, n), spacing, origin)


class TestGrid3:
    def test_validation(self):
        with pytest.raises(ValueError):
            Grid3((0, 4, 4))
        with pytest.raises(ValueError):
            Grid3((4, 4, 4), (1.0, 0.0, 1.0))

    def test_coordinates(self):
        g = Grid3((2, 3, 4), (2.0, 1.0, 0.5), (10.0, 0.0, -1.0))
        c = g.coordinates()
        assert c.shape == (4, 3, 2, 3)
        assert np.array_equal(c[0, 0, 0], [10.0, 0.0, -1.0])
        assert np.array_equal(c[3, 2, 1], [12.0, 2.0, 0.5])


class TestEdt:
    def test_full_mask_zero(self):
        g = make_grid(4)
        m = MaskField(g, np.ones(g.shape_zyx, bool))
        assert np.abs(edt(m).data).max() == 0.0

    def test_single_voxel_pythagorean(self):
        g = make_grid(8)
        data = np.zeros(g.shape_zyx, bool)
        data[0, 0, 0] = True
        d = edt(MaskField(g, data))
        assert d.data[0, 4, 3] == 5.0      # 3-4-5 triangle, exact
        assert d.data[0, 0, 0] == 0.0

    def test_empty_mask_raises(self):
        g = make_grid(4)
        with pytest.raises(ValueError, match="empty mask"):
            edt(MaskField(g, np.zeros(g.shape_zyx, bool)))

    def test_bruteforce_equality_unit_spacing(self, rng):
        # exact algorithm: squared voxel distances match brute force bit for bit
        g = make_grid(16)
        for _ in range(5):
            data = rng.random(g.shape_zyx) < 0.02
            if not data.any():
                data[2, 3, 4] = True
            m = MaskField(g, data)
            got_sq = edt_squared(m).data
            ref_sq = edt_squared_bruteforce(m)
            assert np.abs(got_sq - ref_sq).max() == 0.0

    def test_bruteforce_anisotropic(self, rng):
        g = Grid3((9, 9, 9), (0.7, 1.3, 2.1))
        data = rng.random(g.shape_zyx) < 0.05
        data[4, 4, 4] = True
        m = MaskField(g, data)
        got = edt_squared(m).data
        ref = edt_squared_bruteforce(m)
        assert np.abs(got - ref).max() < 1e-10 * max(1.0, ref.max())

    def test_zero_on_foreground_positive_elsewhere(self, rng):
        g = make_grid(10)
        data = rng.random(g.shape_zyx) < 0.1
        data[5, 5, 5] = True
        m = MaskField(g, data)
        d = edt(m).data
        assert np.abs(d[m.data]).max() == 0.0
        assert (d[~m.data] > 0).all()

    def test_centro_symmetric_mask(self):
        g = make_grid(9)
        data = np.zeros(g.shape_zyx, bool)
        data[2, 3, 4] = data[6, 5, 4] = True       # symmetric about the center
        d = edt(MaskField(g, data)).data
        assert np.array_equal(d, d[::-1, ::-1, ::-1])


def smooth_volume(grid, rng):
    z, y, x = np.meshgrid(*[np.arange(n) for n in grid.shape_zyx], indexing="ij")
    return ScalarField(grid, np.sin(x / 3.0) + np.cos(y / 2.0) * np.sin(z / 4.0) + 2.0)


class TestWarp:
    def test_identity_bitwise(self, rng):
        g = make_grid(8)
        vol = ScalarField(g, rng.random(g.shape_zyx))
        zero = VectorField(g, np.zeros(g.shape_zyx + (3,)))
        out = warp(vol, zero, interp="trilinear")
        assert np.array_equal(out.data, vol.data)

    def test_integer_translation_shifts(self, rng):
        g = make_grid(8)
        vol = ScalarField(g, rng.random(g.shape_zyx))
        disp = np.zeros(g.shape_zyx + (3,))
        disp[..., 0] = 2.0      # sample 2 voxels to the right
        out = warp(vol, VectorField(g, disp), interp="trilinear")
        assert np.array_equal(out.data[:, :, :6], vol.data[:, :, 2:])
        assert np.abs(out.data[:, :, 6:]).max() == 0.0      # zero padding

    def test_matches_direct_sampler(self, rng):
        # independent oracle: per-voxel python trilinear interpolation
        g = make_grid(7)
        vol = smooth_volume(g, rng)
        disp = 0.8 * rng.standard_normal(g.shape_zyx + (3,))
        out = warp(vol, VectorField(g, disp), interp="trilinear").data

        coords = g.coordinates()
        ref = np.zeros(g.shape_zyx)
        for z in range(7):
            for y in range(7):
                for x in range(7):
                    px, py, pz = coords[z, y, x] + disp[z, y, x]
                    if not (0 <= px <= 6 and 0 <= py <= 6 and 0 <= pz <= 6):
                        continue
                    x0, y0, z0 = (min(int(np.floor(v)), 5) for v in (px, py, pz))
                    fx, fy, fz = px - x0, py - y0, pz - z0
                    acc = 0.0
                    for dz in (0, 1):
                        for dy in (0, 1):
                            for dx in (0, 1):
                                w = ((fx if dx else 1 - fx) * (fy if dy else 1 - fy)
                                     * (fz if dz else 1 - fz))
                                acc += w * vol.data[z0 + dz, y0 + dy, x0 + dx]
                    ref[z, y, x] = acc
        inb = ref != 0
        assert np.abs(out[inb] - ref[inb]).max() < 1e-12

    def test_linearity_trilinear(self, rng):
        g = make_grid(6)
        v1 = ScalarField(g, rng.random(g.shape_zyx))
        v2 = ScalarField(g, rng.random(g.shape_zyx))
        disp = VectorField(g, 0.5 * rng.standard_normal(g.shape_zyx + (3,)))
        a, b = 2.0, -3.0
        combo = ScalarField(g, a * v1.data + b * v2.data)
        lhs = warp(combo, disp).data
        rhs = a * warp(v1, disp).data + b * warp(v2, disp).data
        assert np.abs(lhs - rhs).max() < 1e-12

    def test_matrix_deformation(self, rng):
        g = make_grid(8)
        vol = smooth_volume(g, rng)
        T = np.eye(4)
        T[:3, 3] = (1.0, 0.0, 0.0)
        mats = np.broadcast_to(T, g.shape_zyx + (4, 4)).copy()
        out_m = warp(vol, MatField(g, mats))
        disp = np.zeros(g.shape_zyx + (3,))
        disp[..., 0] = 1.0
        out_v = warp(vol, VectorField(g, disp))
        assert np.array_equal(out_m.data, out_v.data)

    def test_cubic_bspline_identity_and_shift(self):
        # a cosine volume compatible with the prefilter's mirror extension:
        # identity resampling is exact at the nodes, and a fractional shift
        # is two orders of magnitude more accurate than trilinear
        n = 16
        g = make_grid(n)
        z, y, x = np.meshgrid(*[np.arange(float(n))] * 3, indexing="ij")
        f = lambda X, Y, Z: (np.cos(np.pi * 2 * X / (n - 1))
                             + 0.5 * np.cos(np.pi * Y / (n - 1))
                             * np.cos(np.pi * 3 * Z / (n - 1)))
        vol = ScalarField(g, f(x, y, z))
        zero = VectorField(g, np.zeros(g.shape_zyx + (3,)))
        assert np.abs(warp(vol, zero, interp="cubic_bspline").data
                      - vol.data).max() < 1e-12
        disp = np.full(g.shape_zyx + (3,), 0.31)
        out = warp(vol, VectorField(g, disp), interp="cubic_bspline").data
        lin = warp(vol, VectorField(g, disp), interp="trilinear").data
        exact = f(x + 0.31, y + 0.31, z + 0.31)
        core = (slice(1, n - 2),) * 3
        cubic_err = np.abs(out[core] - exact[core]).max()
        linear_err = np.abs(lin[core] - exact[core]).max()
        assert cubic_err < 1e-3
        assert cubic_err < linear_err / 50

    def test_grid_mismatch(self, rng):
        vol = ScalarField(make_grid(8), np.zeros((8, 8, 8)))
        disp = VectorField(make_grid(6), np.zeros((6, 6, 6, 3)))
        with pytest.raises(ValueError, match="incompatible grids"):
            warp(vol, disp)


class TestIO:
    @pytest.mark.parametrize("maker", [
        lambda g, rng: ScalarField(g, rng.random(g.shape_zyx)),
        lambda g, rng: MaskField(g, rng.random(g.shape_zyx) < 0.5),
        lambda g, rng: VectorField(g, rng.standard_normal(g.shape_zyx + (3,))),
        lambda g, rng: MatField(g, rng.standard_normal(g.shape_zyx + (4, 4))),
    ])
    def test_round_trip_bit_exact(self, tmp_path, rng, maker):
        g = Grid3((8, 8, 8), (0.5, 1.0, 2.0), (-1.0, 0.0, 3.0))
        fld = maker(g, rng)
        p = tmp_path / "f.pgf"
        write_field(fld, p)
        back = read_field(p)
        assert type(back) is type(fld)
        assert back.grid == fld.grid
        assert np.array_equal(back.data, fld.data)
        # byte-identical on re-write
        p2 = tmp_path / "g.pgf"
        write_field(back, p2)
        assert p.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.pgf"
        p.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ValueError, match="bad magic"):
            read_field(p)

    def test_unsupported_version(self, tmp_path, rng):
        g = make_grid(2)
        p = tmp_path / "v.pgf"
        write_field(ScalarField(g, np.zeros(g.shape_zyx)), p)
        raw = bytearray(p.read_bytes())
        raw[4] = 99
        p.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="unsupported version"):
            read_field(p)
