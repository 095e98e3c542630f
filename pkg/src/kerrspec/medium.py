"""Thin-film optical response and assembly of the observable spectrum.

A single Lorentz oscillator models the linear susceptibility of the well,

    chi(Delta) = f / (Delta - delta_res - i gamma/2),

sharing its width and resonance offset with the exciton mode.  Absorption
follows one of two modes: "thin_film_proportional" takes a(Delta)
proportional to Im chi with a unit-peak normalisation scaled by a_max (f
cancels in the ratio), while "slab" models a radiatively coupled sheet with
r = i xi / (1 - i xi), t = 1 + r, xi = slab_phase_thickness * chi.  The
observable spectrum is scale * a(Delta) * S_internal(Delta) + background.
"""

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, ModelInconsistencyError
from .spectra import SpectrumSeries

ABSORPTION_MODES = ("thin_film_proportional", "slab")


@dataclass(frozen=True)
class MediumParams:
    """Susceptibility, absorption-model and output-assembly parameters.

    f                     oscillator strength (arbitrary units, >= 0)
    delta_res             resonance offset from the laser (meV)
    gamma                 oscillator width (meV), same as the mode decay rate
    mode                  absorption model, one of ABSORPTION_MODES
    slab_phase_thickness  dimensionless xi scale (slab mode)
    a_max                 peak absorption in (0, 1] (thin-film mode)
    background            additive detection background (>= 0)
    scale                 overall output scale (> 0)
    """

    f: float
    delta_res: float
    gamma: float
    mode: str = "thin_film_proportional"
    slab_phase_thickness: float = 0.05
    a_max: float = 0.9
    background: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.f < 0:
            raise ValueError(f"f must be >= 0, got {self.f}")
        if not 0.0 < self.a_max <= 1.0:
            raise ValueError(f"a_max must be in (0, 1], got {self.a_max}")
        if self.background < 0:
            raise ValueError(f"background must be >= 0, got {self.background}")
        if self.scale <= 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")
        if self.mode not in ABSORPTION_MODES:
            raise ValueError(f"mode must be one of {ABSORPTION_MODES}, got {self.mode!r}")


def susceptibility(delta, m):
    """Lorentz-oscillator susceptibility at detuning delta (scalar or array)."""
    return m.f / (np.asarray(delta, dtype=float) - m.delta_res - 0.5j * m.gamma)


def absorption_values(delta, m):
    """Absorption a(delta) as a raw array, without grid validation."""
    delta = np.asarray(delta, dtype=float)
    if m.f == 0.0:
        return np.zeros(delta.shape)
    if m.mode == "thin_film_proportional":
        hw2 = 0.25 * m.gamma * m.gamma
        return m.a_max * hw2 / ((delta - m.delta_res) ** 2 + hw2)
    xi = m.slab_phase_thickness * susceptibility(delta, m)
    r = 1j * xi / (1.0 - 1j * xi)
    t = 1.0 + r
    a = 1.0 - np.abs(t) ** 2 - np.abs(r) ** 2
    if a.min() < -1e-10 or a.max() > 1.0 + 1e-10:
        raise ModelInconsistencyError(
            f"slab absorption outside [0, 1]: range [{a.min():.3e}, {a.max():.3e}]"
        )
    return np.clip(a, 0.0, 1.0)


def absorption(delta_grid, m):
    """Absorption spectrum on a detuning grid."""
    grid = np.asarray(delta_grid, dtype=float)
    return SpectrumSeries(delta_grid=grid, values=absorption_values(grid, m), kind="absorption")


def output_spectrum(internal, m, absorption_series=None):
    """Observable spectrum scale * a * S_internal + background, pointwise on
    the internal spectrum's grid (coherent line included in the product).

    A precomputed absorption spectrum may be passed to avoid recomputation;
    it must share the internal spectrum's grid exactly.
    """
    if internal.kind != "internal":
        raise ValueError(f"expected an internal spectrum, got kind={internal.kind!r}")
    if absorption_series is None:
        a = absorption_values(internal.delta_grid, m)
    else:
        if absorption_series.kind != "absorption":
            raise ValueError("absorption_series must have kind='absorption'")
        matched_grids(internal, absorption_series)
        a = absorption_series.values
    vals = m.scale * a * internal.values + m.background
    return SpectrumSeries(delta_grid=internal.delta_grid, values=vals, kind="output")


def matched_grids(s1, s2, *, error=True):
    """Check that two spectra share an identical grid."""
    same = s1.delta_grid.shape == s2.delta_grid.shape and np.array_equal(
        s1.delta_grid, s2.delta_grid
    )
    if not same and error:
        raise GridMismatchError("spectra are defined on different grids")
    return same
