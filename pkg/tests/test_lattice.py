import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diraclab import lattice as lat
from oracles import gaussian_h1_sq


def test_make_grid_basic():
    g = lat.make_grid(8, 2 * np.pi)
    assert g.spacing == pytest.approx(2 * np.pi / 8)
    ints = np.sort(np.round(g.freq1d / (2 * np.pi / g.box_length)).astype(int))
    assert list(ints) == list(range(-4, 4))


def test_make_grid_spacing_exact():
    g = lat.make_grid(32, 20.0)
    assert g.spacing == 0.625


@pytest.mark.parametrize("n,L", [(12, 10.0), (0, 1.0), (4, 1.0), (16, -3.0), (16, 0.0)])
def test_make_grid_rejects(n, L):
    with pytest.raises(ValueError):
        lat.make_grid(n, L)


def test_frequency_grid_symmetry(grid16):
    f = grid16.freq1d
    # symmetric about 0 except the Nyquist row
    pos = np.sort(f[f > 0])
    neg = np.sort(-f[f < 0])
    assert np.allclose(pos, neg[:-1])  # the extra negative entry is Nyquist


def test_constant_field_dc_mode(grid16):
    c = np.array([1.0, 0.5j, -0.25, 0.0])
    u = lat.constant_spinor(grid16, c)
    uh = lat.to_momentum(u)
    assert np.allclose(uh.data[0, 0, 0], c * grid16.volume)
    mask = np.ones(uh.data.shape[:3], dtype=bool)
    mask[0, 0, 0] = False
    assert np.max(np.abs(uh.data[mask])) < 1e-10 * grid16.volume


def test_plane_wave_single_mode(grid16):
    w = np.array([0.0, 1.0, 0.0, 0.5])
    u = lat.plane_wave(grid16, (2, -1, 3), w)
    uh = lat.to_momentum(u)
    n = grid16.n
    idx = (2 % n, (-1) % n, 3 % n)
    assert np.allclose(uh.data[idx], w * grid16.volume)
    total = np.sum(np.abs(uh.data) ** 2)
    assert np.sum(np.abs(uh.data[idx]) ** 2) == pytest.approx(total, rel=1e-12)


def test_round_trip_and_parseval(grid16, rng):
    u = lat.random_smooth_field(grid16, rng, kmax=5, decay=0.5)
    um = lat.to_momentum(u)
    back = lat.to_position(um)
    assert lat.l2_distance(back, u) / lat.l2_norm(u) < 1e-12
    assert lat.charge(um) == pytest.approx(lat.charge(u), rel=1e-12)


def test_transform_space_guards(grid16):
    u = lat.zero_spinor(grid16)
    with pytest.raises(ValueError):
        lat.to_position(u)
    with pytest.raises(ValueError):
        lat.to_momentum(lat.to_momentum(u))


def test_sobolev_zero_order_is_charge(grid16, rng):
    u = lat.random_smooth_field(grid16, rng, kmax=4, decay=0.7)
    assert lat.sobolev_norm(u, 0.0) == pytest.approx(np.sqrt(lat.charge(u)), rel=1e-12)


def test_sobolev_rejects_out_of_range(grid16):
    u = lat.zero_spinor(grid16)
    for s in (-0.1, 2.1):
        with pytest.raises(ValueError):
            lat.sobolev_norm(u, s)


def test_sobolev_gaussian_h1_vs_radial_quadrature():
    # wide box so periodization error is negligible
    g = lat.make_grid(64, 20.0)
    u = lat.gaussian_spinor(g, (0, 0, 0), 1.0, (1, 0, 0, 0))
    expected = gaussian_h1_sq(1.0)
    assert lat.sobolev_norm(u, 1.0) ** 2 == pytest.approx(expected, rel=1e-4)


def test_sobolev_plane_wave_multiplier(grid16):
    w = (1.0, 0.0, 0.0, 0.0)
    u = lat.plane_wave(grid16, (3, 0, 0), w)
    xi = 2 * np.pi / grid16.box_length * 3
    expected = (1 + xi**2) ** 0.5 * lat.l2_norm(u)
    assert lat.sobolev_norm(u, 1.0) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(s1=st.floats(0.0, 2.0), s2=st.floats(0.0, 2.0), seed=st.integers(0, 2**31))
def test_sobolev_monotone_in_sigma(s1, s2, seed):
    g = lat.make_grid(8, 6.0)
    u = lat.random_smooth_field(g, np.random.default_rng(seed), kmax=2, decay=0.4)
    lo, hi = min(s1, s2), max(s1, s2)
    assert lat.sobolev_norm(u, lo) <= lat.sobolev_norm(u, hi) * (1 + 1e-13)


@settings(max_examples=20, deadline=None)
@given(alpha_re=st.floats(-3, 3), alpha_im=st.floats(-3, 3), seed=st.integers(0, 2**31))
def test_norm_linearity(alpha_re, alpha_im, seed):
    g = lat.make_grid(8, 6.0)
    u = lat.random_smooth_field(g, np.random.default_rng(seed), kmax=2, decay=0.4)
    a = complex(alpha_re, alpha_im)
    au = lat.SpinorField(g, a * u.data, u.space)
    for s in (0.0, 1.0, 1.4):
        expect = abs(a) * lat.sobolev_norm(u, s)
        assert lat.sobolev_norm(au, s) == pytest.approx(expect, rel=1e-12, abs=1e-13)


def test_homogeneous_norm_drops_zero_mode(grid16):
    u = lat.constant_spinor(grid16, (1, 0, 0, 0))
    assert lat.homogeneous_sobolev_norm(u, 1.0) == 0.0


def test_translate_exact_on_plane_wave(grid16):
    u = lat.plane_wave(grid16, (1, 2, 0), (1, 0, 0, 0))
    shift = np.array([0.3, -0.7, 1.1])
    v = lat.translate(u, shift)
    xi = 2 * np.pi / grid16.box_length * np.array([1, 2, 0])
    expected = u.data * np.exp(1j * xi @ shift)
    assert np.max(np.abs(v.data - expected)) < 1e-12


def test_spectral_upsample_preserves_values(grid16, rng):
    u = lat.random_smooth_field(grid16, rng, kmax=4, decay=0.7)
    fine = lat.spectral_upsample(u, 2)
    assert np.max(np.abs(fine.data[::2, ::2, ::2] - u.data)) < 1e-10
    assert lat.charge(fine) == pytest.approx(lat.charge(u), rel=1e-12)


def test_checkpoint_round_trip(tmp_path, grid16, rng):
    u = lat.random_smooth_field(grid16, rng, kmax=3, decay=0.6)
    path = tmp_path / "state.dns"
    lat.write_checkpoint(path, u, 0.375, [0.5, -0.3], [10.0, 20.0],
                         [[0, 0, 0], [1, 2, 3]], [[0.1, 0, 0], [0, -0.1, 0]])
    v, t, Z, m, q, qd = lat.read_checkpoint(path)
    assert t == 0.375
    assert np.array_equal(Z, [0.5, -0.3])
    assert np.array_equal(m, [10.0, 20.0])
    assert np.array_equal(q, [[0, 0, 0], [1, 2, 3]])
    assert np.array_equal(qd, [[0.1, 0, 0], [0, -0.1, 0]])
    assert np.array_equal(v.data, u.data)


def test_checkpoint_layout_bytes(tmp_path, grid16):
    # magic, version, n, then little-endian doubles; data x-major component-minor
    u = lat.zero_spinor(grid16)
    u.data[0, 0, 0, 1] = 2.0 + 3.0j
    path = tmp_path / "layout.dns"
    lat.write_checkpoint(path, u, 1.5)
    blob = path.read_bytes()
    assert blob[:4] == b"DNS1"
    import struct

    version, n = struct.unpack_from("<II", blob, 4)
    L, t, n_nuc = struct.unpack_from("<ddI", blob, 12)
    assert (version, n, n_nuc) == (1, 16, 0)
    assert (L, t) == (12.0, 1.5)
    header = 4 + 8 + 20
    first_entries = np.frombuffer(blob[header:header + 64], dtype="<f8")
    # component-minor: entry 1 of point (0,0,0) sits at doubles 2,3
    assert first_entries[2] == 2.0 and first_entries[3] == 3.0


def test_checkpoint_rejects_bad_magic(tmp_path):
    p = tmp_path / "junk.dns"
    p.write_bytes(b"XXXX" + b"\x00" * 64)
    with pytest.raises(ValueError):
        lat.read_checkpoint(p)
