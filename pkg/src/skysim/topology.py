"""Skyrmion number of the biphoton polarization-like texture.

The two logical branches carry distinct spatial modes, so conditioning
the two-qubit state on transverse position leaves a position-dependent
2x2 density matrix whose Bloch vector field wraps the sphere an integer
number of times. That wrapping number is the topological observable.

The normalized field direction depends on the reference point the raw
Bloch vectors are measured from. The reference must sit inside the
closed surface the field traces out; a sphere-coverage test validates
the intensity-weighted global centroid and falls back to per-octant
centroids when the global one lands on or outside the surface, which
happens for states whose branch intensities are strongly imbalanced
across the aperture.

The wrapping number itself comes from summing signed spherical-triangle
solid angles over grid plaquettes, which is exactly integer-valued for
a field that closes over the sphere, independent of the triangulation.
"""

from __future__ import annotations

import numpy as np

from skysim.modes import Grid2D, LGMode, lg_field
from skysim.states import BipartitePureState, DensityMatrix4

__all__ = [
    "DegenerateFieldError",
    "fibonacci_sphere",
    "solid_angle",
    "mode_pair",
    "spatial_density",
    "bloch_field",
    "aperture_mask",
    "pick_centroid",
    "plaquette_sum",
    "skyrmion_number",
]

_N_DIRECTIONS = 128
_COVERAGE_GAP_DEG = 30.0
_MIN_PIXELS = 8
_EXCLUSION_SCALE = 1e-3
_MAX_EXCLUDED = 0.20


class DegenerateFieldError(RuntimeError):
    """The Bloch field does not define a sphere wrapping.

    Raised for isotropic states (no transverse texture at all) and for
    fields where no admissible reference point passes the coverage
    test, or where too many pixels sit at the reference point.
    """


def fibonacci_sphere(count: int = _N_DIRECTIONS) -> np.ndarray:
    """Near-uniform unit directions used for the coverage test."""
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    r = np.sqrt(1 - z * z)
    phi = np.pi * (1 + 5**0.5) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


_DIRS = fibonacci_sphere()
_COS_GAP = np.cos(np.deg2rad(_COVERAGE_GAP_DEG))


def solid_angle(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Signed solid angle of spherical triangles over unit vectors."""
    num = np.einsum("...i,...i->...", a, np.cross(b, c))
    den = (
        1.0
        + np.einsum("...i,...i->...", a, b)
        + np.einsum("...i,...i->...", b, c)
        + np.einsum("...i,...i->...", c, a)
    )
    return 2.0 * np.arctan2(num, den)


def mode_pair(
    state: BipartitePureState, grid: Grid2D, w0: float
) -> tuple[np.ndarray, np.ndarray]:
    """Spatial modes carrying the two logical branches.

    The winding difference between the two is the wrapping target:
    branch 1 maps to the conjugate-index mode, so the pair differ by
    ell_a1 + ell_a2 units of azimuthal winding.
    """
    u0 = lg_field(LGMode(ell=-state.ell_a1, w0=w0), grid).amplitude
    u1 = lg_field(LGMode(ell=+state.ell_a2, w0=w0), grid).amplitude
    return u0, u1


def spatial_density(
    rho: DensityMatrix4,
    state: BipartitePureState,
    grid: Grid2D,
    w0: float,
    channel: np.ndarray | None = None,
) -> np.ndarray:
    """Position-conditioned 2x2 density, shape (n, n, 2, 2).

    An optional 2x2 channel matrix acts on the partner-arm indices
    before conditioning, with trace renormalization.
    """
    r4 = rho.matrix.reshape(2, 2, 2, 2)
    if channel is not None:
        e = np.asarray(channel, dtype=complex)
        if e.shape != (2, 2):
            raise ValueError(f"channel must be 2x2, got {e.shape}")
        r4 = np.einsum("jk,ikml,nl->ijmn", e, r4, e.conj())
        trace = np.einsum("ijij->", r4).real
        if trace <= 0:
            raise ValueError("channel annihilates the state")
        r4 = r4 / trace
    u0, u1 = mode_pair(state, grid, w0)
    modes = np.stack([u0, u1], axis=-1)
    return np.einsum("...i,...m,ijmn->...jn", modes, modes.conj(), r4)


def bloch_field(rho_r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized Bloch vectors and per-pixel weight (local trace)."""
    b = np.stack(
        [
            2 * np.real(rho_r[..., 0, 1]),
            -2 * np.imag(rho_r[..., 0, 1]),
            np.real(rho_r[..., 0, 0] - rho_r[..., 1, 1]),
        ],
        axis=-1,
    )
    weight = np.real(rho_r[..., 0, 0] + rho_r[..., 1, 1])
    return b, weight


def aperture_mask(grid: Grid2D, state: BipartitePureState, w0: float) -> np.ndarray:
    """Disk covering both branch modes out to three effective radii."""
    x, y = grid.meshgrid()
    ell_max = max(abs(state.ell_a1), abs(state.ell_a2))
    radius = 3 * w0 * np.sqrt(ell_max + 1)
    return np.hypot(x, y) <= radius


def _coverage_margin(vectors: np.ndarray, center: np.ndarray, eps: float):
    """Worst-direction coverage of the centered, normalized vectors.

    Returns (margin, per-direction max dot) or (-inf, None) when fewer
    than the minimum pixel count survives centering.
    """
    d = vectors - center
    mag = np.linalg.norm(d, axis=-1)
    keep = mag >= eps
    if keep.sum() < _MIN_PIXELS:
        return -np.inf, None
    u = d[keep] / mag[keep, None]
    profile = (u @ _DIRS.T).max(axis=0)
    return float(profile.min()), profile


def pick_centroid(vectors: np.ndarray, weights: np.ndarray, eps: float):
    """Reference point for normalizing the Bloch field.

    Tries the weighted global centroid first; if the centered field
    fails the coverage test, tries the weighted centroid of each sign
    octant and keeps the one with the best coverage margin.

    Returns (center, tag, margin) with tag in "global", "octant",
    "degenerate".
    """
    total = weights.sum()
    center = (
        (vectors * weights[:, None]).sum(axis=0) / total
        if total > 0
        else np.zeros(3)
    )
    margin, _ = _coverage_margin(vectors, center, eps)
    if margin >= _COS_GAP:
        return center, "global", margin
    best, best_margin = None, -np.inf
    for sx in (-1, 1):
        for sy in (-1, 1):
            for sz in (-1, 1):
                sel = (
                    (np.sign(vectors[:, 0]) == sx)
                    & (np.sign(vectors[:, 1]) == sy)
                    & (np.sign(vectors[:, 2]) == sz)
                )
                if sel.sum() < _MIN_PIXELS:
                    continue
                cand = (vectors[sel] * weights[sel, None]).sum(
                    axis=0
                ) / weights[sel].sum()
                m, _ = _coverage_margin(vectors, cand, eps)
                if m > best_margin:
                    best_margin, best = m, cand
    if best is None or best_margin < _COS_GAP:
        return center, "degenerate", max(margin, best_margin)
    return best, "octant", best_margin


def plaquette_sum(unit_field: np.ndarray, keep: np.ndarray) -> float:
    """Total wrapping from two spherical triangles per grid plaquette.

    Only plaquettes with all four corners kept contribute; the split is
    (p00, p10, p11) and (p00, p11, p01) with p10 one step along x.
    """
    corners = keep[:-1, :-1] & keep[:-1, 1:] & keep[1:, 1:] & keep[1:, :-1]
    t1 = solid_angle(unit_field[:-1, :-1], unit_field[:-1, 1:], unit_field[1:, 1:])
    t2 = solid_angle(unit_field[:-1, :-1], unit_field[1:, 1:], unit_field[1:, :-1])
    return float(((t1 + t2) * corners).sum() / (4 * np.pi))


def skyrmion_number(
    rho: DensityMatrix4,
    state: BipartitePureState,
    grid: Grid2D,
    w0: float,
    channel: np.ndarray | None = None,
    return_details: bool = False,
):
    """Sphere-wrapping number of the position-conditioned Bloch field.

    Raises DegenerateFieldError when the field carries no texture or
    when more than 20% of aperture pixels collapse onto the reference
    point. With return_details=True also returns a dict with the
    estimator tag, excluded fraction, reference point, coverage margin,
    and the per-direction coverage profile.
    """
    rho_r = spatial_density(rho, state, grid, w0, channel=channel)
    b, weight = bloch_field(rho_r)
    ap = aperture_mask(grid, state, w0)
    mag = np.linalg.norm(b, axis=-1)
    peak = mag[ap].max()
    if peak <= 0:
        raise DegenerateFieldError("Bloch field vanishes over the whole aperture")
    eps = _EXCLUSION_SCALE * peak
    center, tag, margin = pick_centroid(b[ap], weight[ap], eps)
    if tag == "degenerate":
        raise DegenerateFieldError(
            f"no reference point covers the sphere (best margin {margin:.3f})"
        )
    shifted = b - center
    dist = np.linalg.norm(shifted, axis=-1)
    keep = ap & (dist >= eps)
    excluded = 1.0 - keep[ap].mean()
    if excluded > _MAX_EXCLUDED:
        raise DegenerateFieldError(
            f"{excluded:.1%} of aperture pixels sit at the reference point"
        )
    unit = np.where(
        keep[..., None], shifted / np.maximum(dist, 1e-300)[..., None], 0.0
    )
    number = plaquette_sum(unit, keep)
    if not return_details:
        return number
    _, profile = _coverage_margin(b[ap], center, eps)
    details = {
        "estimator": tag,
        "excluded_fraction": float(excluded),
        "center": center,
        "coverage_margin": float(margin),
        "coverage_profile": profile,
        "kept_pixels": int(keep.sum()),
    }
    return number, details
