"""Tests for the skyrmion-number pipeline."""

import numpy as np
import pytest

from skysim.modes import make_grid
from skysim.states import DensityMatrix4, catalog, make_state
from skysim.topology import (
    DegenerateFieldError,
    aperture_mask,
    bloch_field,
    fibonacci_sphere,
    mode_pair,
    pick_centroid,
    plaquette_sum,
    skyrmion_number,
    solid_angle,
    spatial_density,
)

W0 = 0.9375e-3
GRID = make_grid(256, 16 * W0)


def number_for(state, n=256, **kwargs):
    rho = DensityMatrix4.from_pure(state)
    grid = GRID if n == 256 else make_grid(n, 16 * W0)
    return skyrmion_number(rho, state, grid, W0, **kwargs)


class TestGeometryHelpers:
    def test_fibonacci_sphere_unit_and_balanced(self):
        dirs = fibonacci_sphere(128)
        assert dirs.shape == (128, 3)
        assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)
        assert np.linalg.norm(dirs.mean(axis=0)) < 0.02

    def test_solid_angle_octant(self):
        a = np.array([1.0, 0.0, 0.0])
        b = np.array([0.0, 1.0, 0.0])
        c = np.array([0.0, 0.0, 1.0])
        assert solid_angle(a, b, c) == pytest.approx(np.pi / 2, abs=1e-12)

    def test_solid_angle_orientation_flips_sign(self):
        a = np.array([1.0, 0.0, 0.0])
        b = np.array([0.0, 1.0, 0.0])
        c = np.array([0.0, 0.0, 1.0])
        assert solid_angle(a, c, b) == pytest.approx(-np.pi / 2, abs=1e-12)

    def test_aperture_radius_scales_with_mode_order(self):
        small = aperture_mask(GRID, make_state(0, 1), W0)
        large = aperture_mask(GRID, make_state(2, 3), W0)
        assert large.sum() > small.sum()

    def test_mode_pair_windings(self):
        state = make_state(0, 3)
        u0, u1 = mode_pair(state, GRID, W0)
        assert abs(u0[128, 128]) > 0
        assert abs(u1[128, 128]) == pytest.approx(0.0, abs=1e-30)


class TestSpatialDensity:
    def test_shape_and_hermiticity(self):
        state = make_state(0, 1)
        rho_r = spatial_density(DensityMatrix4.from_pure(state), state, GRID, W0)
        assert rho_r.shape == (256, 256, 2, 2)
        assert np.allclose(rho_r, np.conj(np.swapaxes(rho_r, -1, -2)), atol=1e-18)

    def test_weight_is_branch_intensity_mix(self):
        state = make_state(0, 1)
        rho_r = spatial_density(DensityMatrix4.from_pure(state), state, GRID, W0)
        _, weight = bloch_field(rho_r)
        u0, u1 = mode_pair(state, GRID, W0)
        expected = 0.5 * (np.abs(u0) ** 2 + np.abs(u1) ** 2)
        assert np.allclose(weight, expected, atol=1e-12)

    def test_channel_must_be_2x2(self):
        state = make_state(0, 1)
        with pytest.raises(ValueError, match="2x2"):
            spatial_density(
                DensityMatrix4.from_pure(state), state, GRID, W0, channel=np.eye(3)
            )


class TestSkyrmionNumbers:
    def test_full_catalog_hits_targets(self):
        for name, state in catalog().items():
            target = sum(state.ells_a)
            n = number_for(state)
            assert n == pytest.approx(target, abs=0.02), name

    def test_imbalanced_state_uses_octant_fallback(self):
        state = make_state(2, 3)
        _, details = number_for(state, return_details=True)
        assert details["estimator"] == "octant"

    def test_balanced_state_uses_global_centroid(self):
        _, details = number_for(make_state(0, 1), return_details=True)
        assert details["estimator"] == "global"
        assert details["coverage_margin"] >= np.cos(np.deg2rad(30))
        assert details["coverage_profile"].shape == (128,)
        assert details["excluded_fraction"] <= 0.20

    def test_grid_convergence(self):
        for state in (make_state(0, 1), make_state(2, 3)):
            coarse = number_for(state, n=256)
            fine = number_for(state, n=512)
            assert abs(fine - coarse) <= 0.01

    def test_relative_phase_leaves_number_invariant(self):
        base = number_for(make_state(0, 1))
        for phase in (-np.pi / 2, np.pi / 3, 0.9 * np.pi):
            assert number_for(make_state(0, 1, phase)) == pytest.approx(
                base, abs=1e-6
            )

    def test_partner_arm_channel_leaves_number_invariant(self):
        e = np.array(
            [[0.9 + 0.1j, 0.35 - 0.2j], [-0.15 + 0.3j, 0.75 + 0.05j]]
        )
        for state in (make_state(0, 1), make_state(2, 3)):
            base = number_for(state)
            turned = number_for(state, channel=e)
            assert turned == pytest.approx(base, abs=1e-3)

    def test_maximally_mixed_state_is_degenerate(self):
        state = make_state(0, 1)
        rho = DensityMatrix4(np.eye(4, dtype=complex) / 4)
        with pytest.raises(DegenerateFieldError):
            skyrmion_number(rho, state, GRID, W0)

    def test_rotated_unit_field_same_wrapping(self):
        state = make_state(0, 2)
        rho = DensityMatrix4.from_pure(state)
        rho_r = spatial_density(rho, state, GRID, W0)
        b, _ = bloch_field(rho_r)
        mag = np.linalg.norm(b, axis=-1)
        keep = mag > 1e-3 * mag.max()
        unit = np.where(keep[..., None], b / np.maximum(mag, 1e-300)[..., None], 0.0)
        base = plaquette_sum(unit, keep)
        angle = 0.7
        rot = np.array(
            [
                [np.cos(angle), 0, np.sin(angle)],
                [0, 1, 0],
                [-np.sin(angle), 0, np.cos(angle)],
            ]
        )
        assert plaquette_sum(unit @ rot.T, keep) == pytest.approx(base, abs=1e-10)


class TestCentroidEstimator:
    def test_shift_equivariance_on_synthetic_texture(self):
        n = 128
        coords = (np.arange(n) - n / 2) * (8.0 / n)
        x, y = np.meshgrid(coords, coords, indexing="xy")
        r = np.hypot(x, y)
        phi = np.arctan2(y, x)
        polar = np.clip(r / 2.0, 0, 1) * np.pi
        m = np.exp(-(((r - 1.2) / 1.5) ** 2)) + 1e-12
        b0 = np.stack(
            [
                m * np.sin(polar) * np.cos(phi),
                m * np.sin(polar) * np.sin(phi),
                m * np.cos(polar),
            ],
            axis=-1,
        )
        ap = r <= 3.9
        vectors = b0[ap].reshape(-1, 3)
        weights = m[ap].ravel()
        shift = np.array([0.0, 0.0, 0.3])
        eps = 1e-3 * np.linalg.norm(vectors + shift, axis=-1).max()
        base_c, _, _ = pick_centroid(vectors, weights, eps)
        moved_c, tag, _ = pick_centroid(vectors + shift, weights, eps)
        assert tag == "global"
        assert np.linalg.norm(moved_c - shift - base_c) < 1e-12

    def test_zero_field_degenerate_tag(self):
        vectors = np.zeros((100, 3))
        center, tag, _ = pick_centroid(vectors, np.ones(100), eps=1.0)
        assert tag == "degenerate"
        assert np.allclose(center, 0.0)
