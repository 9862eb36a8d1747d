"""Spectrum arithmetic, screen statistics, and the structure-function law."""

import numpy as np
import pytest

from skysim.modes import Grid2D, SamplingError, make_grid
from skysim.turbulence import (
    PhaseScreen,
    TurbulenceSpec,
    generate_screen,
    kolmogorov_psd,
    omega_to_fried,
    phase_structure_theory,
    read_screen,
    structure_function,
    write_screen,
)

W0 = 0.9375e-3


class TestPsd:
    def test_value(self):
        expected = 0.023 * 0.01 ** (-5 / 3) * 100.0 ** (-11 / 3)
        assert kolmogorov_psd(100.0, 0.01) == pytest.approx(expected, rel=1e-12)

    def test_frequency_scaling(self):
        ratio = kolmogorov_psd(2.0, 0.01) / kolmogorov_psd(1.0, 0.01)
        assert ratio == pytest.approx(2.0 ** (-11 / 3), rel=1e-12)

    def test_fried_scaling(self):
        ratio = kolmogorov_psd(1.0, 0.005) / kolmogorov_psd(1.0, 0.01)
        assert ratio == pytest.approx(2.0 ** (5 / 3), rel=1e-12)

    def test_infinite_r0_is_quiet(self):
        assert kolmogorov_psd(1.0, np.inf) == 0.0

    def test_nonpositive_frequency_rejected(self):
        with pytest.raises(ValueError):
            kolmogorov_psd(0.0, 0.01)
        with pytest.raises(ValueError):
            kolmogorov_psd(np.array([1.0, -2.0]), 0.01)


class TestOmegaToFried:
    def test_ell_zero(self):
        assert omega_to_fried(1.0, 0, W0) == pytest.approx(2 * W0)

    def test_higher_mode(self):
        # effective radius doubles at |ell| = 3, so r0 doubles too
        assert omega_to_fried(2.0, 3, W0) == pytest.approx(2 * W0)

    def test_zero_strength(self):
        assert omega_to_fried(0.0, 0, W0) == np.inf

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            omega_to_fried(-0.5, 0, W0)


def spec128(seed, r0_px=16.0, n_sub=5):
    grid = Grid2D(n=128, dx=1.0)
    return TurbulenceSpec(r0=r0_px, grid=grid, seed=seed, n_subharmonics=n_sub)


class TestGenerateScreen:
    def test_deterministic(self):
        a = generate_screen(spec128(42))
        b = generate_screen(spec128(42))
        assert np.array_equal(a.phase, b.phase)

    def test_seed_sensitivity(self):
        a = generate_screen(spec128(1))
        b = generate_screen(spec128(2))
        assert not np.allclose(a.phase, b.phase)

    def test_spatial_mean_removed(self):
        s = generate_screen(spec128(7))
        assert abs(s.phase.mean()) < 1e-12 * s.phase.std()

    def test_fried_scaling_law(self):
        # Phase amplitudes scale as r0**(-5/6); halving the variance-rate
        # exponent base means r0 -> r0 * 2**(-3/5) multiplies the screen
        # by exactly sqrt(2) for the same seed.
        s1 = generate_screen(spec128(11, r0_px=16.0))
        s2 = generate_screen(spec128(11, r0_px=16.0 * 2 ** (-3 / 5)))
        scale = np.abs(s1.phase).max()
        assert np.allclose(s2.phase, np.sqrt(2) * s1.phase, atol=1e-10 * scale)

    def test_ensemble_mean_near_zero(self):
        screens = np.stack(
            [generate_screen(spec128(3000 + k, n_sub=2)).phase for k in range(200)]
        )
        pixel_mean = screens.mean(axis=0)
        pixel_sig = screens.std(axis=0) / np.sqrt(200)
        frac_outside = np.mean(np.abs(pixel_mean) > 3 * pixel_sig)
        assert frac_outside < 0.015

    def test_unresolvable_r0_rejected(self):
        with pytest.raises(SamplingError):
            generate_screen(spec128(0, r0_px=1.5))

    def test_infinite_r0_gives_flat_screen(self):
        s = generate_screen(spec128(5, r0_px=np.inf))
        assert np.all(s.phase == 0.0)

    def test_bad_spec_rejected(self):
        grid = Grid2D(n=128, dx=1.0)
        with pytest.raises(ValueError):
            TurbulenceSpec(r0=-1.0, grid=grid, seed=0)
        with pytest.raises(ValueError):
            TurbulenceSpec(r0=1.0, grid=grid, seed=0, n_subharmonics=9)
        with pytest.raises(ValueError):
            TurbulenceSpec(r0=1.0, grid=grid, seed=-1)


class TestStructureFunction:
    def test_inertial_range_agreement(self):
        # Ensemble estimate against 6.88 (r/r0)^(5/3) across lags 4..16 px.
        screens = [generate_screen(spec128(3000 + k)) for k in range(150)]
        seps = np.array([4.0, 8.0, 16.0])
        d = structure_function(screens, seps)
        ratio = d / phase_structure_theory(seps, 16.0)
        assert np.all(ratio > 0.90) and np.all(ratio < 1.10)

    def test_subharmonics_restore_large_scale_power(self):
        with_sub = [generate_screen(spec128(9000 + k, n_sub=5)) for k in range(120)]
        without = [generate_screen(spec128(9000 + k, n_sub=0)) for k in range(120)]
        sep = 32.0  # a quarter of the grid extent
        d_with = structure_function(with_sub, [sep])[0]
        d_without = structure_function(without, [sep])[0]
        d_th = phase_structure_theory(sep, 16.0)
        assert d_with > d_without
        assert abs(d_with / d_th - 1) < abs(d_without / d_th - 1)

    def test_needs_fifty_screens(self):
        screens = [generate_screen(spec128(k)) for k in range(3)]
        with pytest.raises(ValueError, match="50"):
            structure_function(screens, [4.0])

    def test_mixed_statistics_rejected(self):
        screens = [generate_screen(spec128(k)) for k in range(50)]
        screens[10] = generate_screen(spec128(10, r0_px=8.0))
        with pytest.raises(ValueError, match="mixed"):
            structure_function(screens, [4.0])

    def test_separation_bounds(self):
        screens = [generate_screen(spec128(k, n_sub=0)) for k in range(50)]
        with pytest.raises(ValueError):
            structure_function(screens, [0.2])
        with pytest.raises(ValueError):
            structure_function(screens, [100.0])


class TestScreenIO:
    def test_round_trip(self, tmp_path):
        s = generate_screen(spec128(123))
        path = tmp_path / "screen.skyp"
        write_screen(s, path)
        back = read_screen(path)
        assert back.spec == s.spec
        assert np.array_equal(back.phase, s.phase)

    def test_header_layout(self, tmp_path):
        s = generate_screen(spec128(1))
        path = tmp_path / "screen.skyp"
        write_screen(s, path)
        raw = path.read_bytes()
        assert raw[:4] == b"SKYP"
        assert len(raw) == 36 + 128 * 128 * 8

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.skyp"
        path.write_bytes(b"WHAT" + b"\x00" * 64)
        with pytest.raises(ValueError, match="magic"):
            read_screen(path)

    def test_truncated_rejected(self, tmp_path):
        s = generate_screen(spec128(1))
        path = tmp_path / "screen.skyp"
        write_screen(s, path)
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(ValueError, match="truncated"):
            read_screen(path)
