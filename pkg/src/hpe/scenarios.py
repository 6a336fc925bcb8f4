"""Initial vorticity for the built-in scenarios.

Every profile is written down analytically so refinement studies have an
exact reference. Gaussians are paired with a negative mirror image, which
makes the sampled field vanish on the wall to machine precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .field import BlobSet, GridField, read_field

SCENARIOS = ("single_vortex_wall", "wall_dipole", "shear_layer", "gaussian_patch", "from_file")
DEFAULT_MODE = {
    "single_vortex_wall": "blob",
    "wall_dipole": "blob",
    "shear_layer": "blob",
    "gaussian_patch": "grid",
    "from_file": "grid",
}


@dataclass(frozen=True, eq=False)
class Scenario:
    """Initial data plus the grids the run is observed on.

    ``omega0`` always holds a gridded sample of the initial vorticity. Blob
    runs also carry ``blobs`` and sample diagnostics on ``diag_grid``.
    """

    name: str
    mode: str
    omega0: GridField
    blobs: BlobSet | None
    diag_grid: GridField
    probe_centers: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def is_zero(self) -> bool:
        if self.blobs is not None:
            return not np.any(self.blobs.circulations)
        return not np.any(self.omega0.values)


def odd_gaussian(amplitude: float, sigma: float, center) -> callable:
    """``A exp(-|x - c|^2 / s^2)`` minus its reflection across the wall."""
    c1, c2 = center

    def fn(X1, X2):
        r2 = (X1 - c1) ** 2
        return amplitude * (np.exp(-(r2 + (X2 - c2) ** 2) / sigma**2)
                            - np.exp(-(r2 + (X2 + c2) ** 2) / sigma**2))

    return fn


def empty_grid(x1_range, height: float, h: float) -> GridField:
    n1 = int(round((x1_range[1] - x1_range[0]) / h))
    n2 = int(round(height / h))
    return GridField.from_function(lambda a, b: np.zeros_like(a),
                                   (x1_range[0], x1_range[0] + n1 * h), n2 * h, n1, n2)


def cell_center_blobs(fn, x1_range, height: float, h: float, core_factor: float,
                      rel_threshold: float = 1e-6) -> BlobSet:
    """One blob per cell of side ``h`` carrying ``fn(center) h^2``.

    Cell centers never coincide with grid nodes, so node-sampled
    diagnostics do not lock onto the particle lattice.
    """
    n1 = int(round((x1_range[1] - x1_range[0]) / h))
    n2 = int(round(height / h))
    xc = x1_range[0] + h * (np.arange(n1) + 0.5)
    yc = h * (np.arange(n2) + 0.5)
    X1, X2 = np.meshgrid(xc, yc)
    W = fn(X1, X2)
    peak = float(np.max(np.abs(W))) if W.size else 0.0
    keep = np.abs(W) > rel_threshold * peak if peak > 0 else np.zeros(W.shape, bool)
    return BlobSet(np.column_stack([X1[keep], X2[keep]]), W[keep] * h * h, (core_factor * h) ** 2)


def _probe_grid(x1s, x2s) -> np.ndarray:
    return np.array([(a, b) for a in x1s for b in x2s], dtype=float)


def single_vortex_wall(*, circulation: float = 2.0 * math.pi, height: float = 1.0,
                       core: float = 0.0, diag_h: float = 0.1) -> Scenario:
    """One point vortex at ``(0, d)``; its image drives it along the wall."""
    blobs = BlobSet([[0.0, height]], [circulation], core * core)
    diag = empty_grid((-8.0, 2.0), 2.0 * height + 1.0, diag_h)
    om = diag.with_values(np.zeros(diag.shape), name="omega0")
    probes = _probe_grid((-0.5, 0.5), (0.5 * height, 1.5 * height))
    return Scenario("single_vortex_wall", "blob", om, blobs, diag, probes,
                    dict(circulation=circulation, height=height, core=core))


def wall_dipole(*, amplitude: float = 8.0, sigma: float = 0.4, height: float = 1.2,
                separation: float = 0.6, blob_h: float = 0.1, core_factor: float = 1.5,
                diag_h: float = 0.05, mode: str = "blob") -> Scenario:
    """Counter-rotating Gaussian pair heading for the wall.

    The positive (clockwise) member sits at ``x1 = -separation`` so the pair
    self-propels toward ``x2 = 0``. The setup is mirror-antisymmetric about
    ``x1 = 0``.
    """
    left = odd_gaussian(amplitude, sigma, (-separation, height))
    right = odd_gaussian(amplitude, sigma, (separation, height))

    def fn(X1, X2):
        return left(X1, X2) - right(X1, X2)

    half = separation + 6.0 * sigma
    top = height + 6.0 * sigma
    box = max(half, 0.5 * top)
    om = GridField.from_function(fn, (-box, box), 2.0 * box, int(round(2 * box / blob_h)),
                                 int(round(2 * box / blob_h)), name="omega0")
    blobs = cell_center_blobs(fn, (-box, box), 2.0 * box, blob_h, core_factor) if mode == "blob" else None
    diag = empty_grid((-4.0, 4.0), 4.0, diag_h)
    probes = _probe_grid((-0.9, -0.3, 0.3, 0.9), (0.6, 1.0, 1.4, 1.8))
    return Scenario("wall_dipole", mode, om, blobs, diag if mode == "blob" else om, probes,
                    dict(amplitude=amplitude, sigma=sigma, height=height, separation=separation,
                         blob_h=blob_h, core_factor=core_factor))


def gaussian_patch(*, amplitude: float = 1.0, sigma: float = 0.5, height: float = 2.0,
                   n: int = 128, width: float = 6.4, mode: str = "grid", core_factor: float = 1.5) -> Scenario:
    """Single odd-symmetrized Gaussian on a ``width x width`` window."""
    fn = odd_gaussian(amplitude, sigma, (0.0, height))
    om = GridField.from_function(fn, (-0.5 * width, 0.5 * width), width, n, n, name="omega0")
    h = om.spacing
    blobs = cell_center_blobs(fn, (-0.5 * width, 0.5 * width), width, h, core_factor) if mode == "blob" else None
    probes = _probe_grid((-0.5 * sigma, 0.5 * sigma), (height - 0.5 * sigma, height + 0.5 * sigma))
    return Scenario("gaussian_patch", mode, om, blobs, om, probes,
                    dict(amplitude=amplitude, sigma=sigma, height=height, n=n, width=width))


def shear_layer(*, amplitude: float = 2.0, thickness: float = 0.2, height: float = 1.0,
                length: float = 1.5, perturbation: float = 0.05, wavenumber: int = 2,
                blob_h: float = 0.1, core_factor: float = 1.5, diag_h: float = 0.1,
                mode: str = "blob", seed: int = 0) -> Scenario:
    """Localized ``sech^2`` shear layer with a seeded sinusoidal ripple.

    ``A sech^2((x2 - y0) / w) exp(-(x1 / L)^4) (1 + eps cos(k x1 + phi))``
    minus its mirror image; ``phi`` is drawn from ``seed``.
    """
    phase = float(np.random.default_rng(seed).uniform(0.0, 2.0 * math.pi))
    k = wavenumber * math.pi / length

    def layer(X1, X2, y0):
        return amplitude / np.cosh((X2 - y0) / thickness) ** 2

    def fn(X1, X2):
        env = np.exp(-((X1 / length) ** 4)) * (1.0 + perturbation * np.cos(k * X1 + phase))
        return env * (layer(X1, X2, height) - layer(X1, X2, -height))

    half = 2.5 * length
    top = 2.0 * half
    n = int(round(2 * half / blob_h))
    om = GridField.from_function(fn, (-half, half), top, n, n, name="omega0")
    blobs = cell_center_blobs(fn, (-half, half), top, blob_h, core_factor) if mode == "blob" else None
    diag = empty_grid((-half, half), top, diag_h) if mode == "blob" else om
    probes = _probe_grid((-0.5 * length, 0.0, 0.5 * length), (height - thickness, height + thickness))
    return Scenario("shear_layer", mode, om, blobs, diag, probes,
                    dict(amplitude=amplitude, thickness=thickness, height=height, length=length,
                         perturbation=perturbation, phase=phase))


def from_file(path, *, mode: str = "grid", core_factor: float = 1.5) -> Scenario:
    """Initial vorticity from a field file written by :func:`hpe.field.write_field`."""
    f = read_field(path)
    if not isinstance(f, GridField):
        raise ConfigError(f"{path}: initial field must start on the wall (x2 = 0)")
    om = f.with_values(f.values, name="omega0")
    blobs = None
    if mode == "blob":
        h = om.spacing
        X1, X2 = om.mesh()
        keep = om.values != 0.0
        keep[0, :] = False
        blobs = BlobSet(np.column_stack([X1[keep], X2[keep]]), om.values[keep] * h * h,
                        (core_factor * h) ** 2)
    x0, x1, _, top = om.window()
    probes = _probe_grid((x0 + 0.4 * (x1 - x0), x0 + 0.6 * (x1 - x0)), (0.4 * top, 0.6 * top))
    return Scenario("from_file", mode, om, blobs, om, probes, dict(path=str(path)))
