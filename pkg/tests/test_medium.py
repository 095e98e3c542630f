import numpy as np
import pytest

import kerrspec as ks
from kerrspec.errors import GridMismatchError, ModelInconsistencyError
from kerrspec.medium import MediumParams, absorption_values, matched_grids
from conftest import ref_params


def thin_film(f=1.0, delta_res=0.1, gamma=0.22, a_max=0.9, **kw):
    return MediumParams(f=f, delta_res=delta_res, gamma=gamma, a_max=a_max, **kw)


def test_susceptibility_on_resonance():
    m = thin_film(f=1.0, gamma=0.22)
    chi = ks.susceptibility(m.delta_res, m)
    assert chi == pytest.approx(2j / 0.22)
    assert chi.imag > 0


def test_susceptibility_zero_strength():
    m = thin_film(f=0.0)
    assert ks.susceptibility(0.3, m) == 0.0


def test_susceptibility_far_detuned_falloff():
    m = thin_film(f=1.0, delta_res=0.1, gamma=0.22)
    for delta in (100.0, -100.0):
        chi = ks.susceptibility(delta, m)
        assert abs(chi) == pytest.approx(m.f / abs(delta), rel=0.01)


def test_thin_film_lorentzian_shape():
    m = thin_film(a_max=1.0)
    grid = np.array([m.delta_res - m.gamma / 2, m.delta_res, m.delta_res + m.gamma / 2])
    a = absorption_values(grid, m)
    assert a[1] == pytest.approx(1.0)
    assert a[0] == pytest.approx(0.5)
    assert a[2] == pytest.approx(0.5)


def test_absorption_transparent_when_f_zero():
    grid = np.linspace(-1, 1, 11)
    for mode in ("thin_film_proportional", "slab"):
        m = MediumParams(f=0.0, delta_res=0.1, gamma=0.22, mode=mode)
        assert np.all(absorption_values(grid, m) == 0.0)


def test_thin_film_area():
    m = thin_film(a_max=0.9, gamma=0.22)
    grid = np.linspace(-300, 300, 2000001)
    area = np.trapezoid(absorption_values(grid, m), grid)
    assert area == pytest.approx(m.a_max * np.pi * m.gamma / 2, rel=0.01)


def test_slab_hand_evaluated_point():
    # xi = i at resonance when 2 * zeta * f / gamma = 1:
    # r = -1/2, t = 1/2, a = 1/2
    m = MediumParams(
        f=1.0, delta_res=0.0, gamma=0.22, mode="slab", slab_phase_thickness=0.11
    )
    xi = m.slab_phase_thickness * ks.susceptibility(0.0, m)
    assert xi == pytest.approx(1j)
    a = absorption_values(np.array([0.0]), m)
    assert a[0] == pytest.approx(0.5)


def test_slab_unphysical_parameters_raise():
    m = MediumParams(
        f=1.0, delta_res=0.0, gamma=0.22, mode="slab", slab_phase_thickness=-0.11
    )
    with pytest.raises(ModelInconsistencyError):
        absorption_values(np.linspace(-1, 1, 101), m)


def test_slab_range_is_physical():
    m = MediumParams(f=0.9, delta_res=0.09, gamma=0.22, mode="slab", slab_phase_thickness=0.05)
    a = absorption_values(np.linspace(-2, 2, 401), m)
    assert np.all(a >= 0.0) and np.all(a <= 0.5 + 1e-12)


def test_output_background_only_when_opaque_free():
    grid = np.linspace(-1, 1, 21)
    internal = ks.SpectrumSeries(grid, np.ones(21), "internal")
    m = MediumParams(f=0.0, delta_res=0.1, gamma=0.22, background=0.25, scale=3.0)
    out = ks.output_spectrum(internal, m)
    assert out.kind == "output"
    assert np.all(out.values == 0.25)


def test_output_grid_mismatch_raises():
    internal = ks.SpectrumSeries(np.linspace(-1, 1, 21), np.ones(21), "internal")
    absorb = ks.absorption(np.linspace(-1, 1, 31), thin_film())
    with pytest.raises(GridMismatchError):
        ks.output_spectrum(internal, thin_film(), absorb)
    assert matched_grids(internal, internal)


def test_output_rayleigh_pointwise_identity(ref_steady_24):
    liouv, rho = ref_steady_24
    internal = ks.internal_spectrum_with_rayleigh(liouv, rho, gamma_f=0.0107)
    m = thin_film(background=0.1, scale=2.0)
    out = ks.output_spectrum(internal, m)
    mid = internal.delta_grid.size // 2
    assert internal.delta_grid[mid] == 0.0
    a0 = absorption_values(np.array([0.0]), m)[0]
    assert out.values[mid] == m.scale * a0 * internal.values[mid] + m.background


def test_medium_makes_spectrum_asymmetric(ref_steady_24):
    liouv, rho = ref_steady_24
    spec = ks.incoherent_spectrum(liouv, rho)
    m = thin_film(delta_res=0.1)
    out_vals = absorption_values(spec.delta_grid, m) * spec.values
    assert ks.asymmetry_functional(spec.delta_grid, spec.values) < 0.01
    assert ks.asymmetry_functional(spec.delta_grid, out_vals) > 0.01


def test_rayleigh_absorption_decreases_with_resonance_offset():
    a0 = []
    for delta_res in (0.0, 0.05, 0.1, 0.2, 0.4):
        m = thin_film(delta_res=delta_res)
        a0.append(absorption_values(np.array([0.0]), m)[0])
    assert np.all(np.diff(a0) < 0)


def test_medium_params_validation():
    with pytest.raises(ValueError):
        MediumParams(f=-1.0, delta_res=0.1, gamma=0.22)
    with pytest.raises(ValueError):
        MediumParams(f=1.0, delta_res=0.1, gamma=0.0)
    with pytest.raises(ValueError):
        MediumParams(f=1.0, delta_res=0.1, gamma=0.22, a_max=1.5)
    with pytest.raises(ValueError):
        MediumParams(f=1.0, delta_res=0.1, gamma=0.22, mode="other")
    with pytest.raises(ValueError):
        MediumParams(f=1.0, delta_res=0.1, gamma=0.22, scale=0.0)
