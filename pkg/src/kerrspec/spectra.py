"""Stationary two-time correlations and emission spectra of the mode.

The spectrum axis is the detuning Delta = omega - omega_L (meV) in the
rotating frame of the drive.  The incoherent (coherently-scattered light
removed) spectrum is

    S_inc(Delta) = 2 Re int_0^inf dtau exp(-i Delta tau) [C(tau) - |<a>|^2]

with C(tau) = <a^(t) a(t+tau)> at stationarity.  It is evaluated through
the resolvent: one linear solve of (L - i Delta) y = v per frequency with
v = vec(rho_ss a^ - <a^> rho_ss), or equivalently through a spectral
decomposition of the generator (method="eig"), which prices all
frequencies at once.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .dynamics import DENSE_EXPM_LIMIT, propagator, trace_vector, vec
from .errors import GridTooShortError, ResolventError
from .fock import annihilation, expectation

SPECTRUM_KINDS = ("internal", "absorption", "output", "experimental")

# Detector resolution (Lorentzian FWHM, meV) used when none is specified.
DETECTOR_FWHM_DEFAULT = 0.0107

_GRID_UNIFORMITY_RTOL = 1e-12
_NEGATIVITY_RTOL = 1e-8


def default_delta_grid(half_span=1.5, points=2001):
    """Uniform detuning grid, symmetric about the drive frequency."""
    return np.linspace(-half_span, half_span, points)


@dataclass(frozen=True)
class SpectrumSeries:
    """Real intensity values on a strictly ascending detuning grid.

    Grids of internal, absorption and output spectra must be uniform (the
    detector convolution and the pointwise medium product rely on it);
    experimental grids only need to ascend.  An optional weights array
    carries per-point fit weights for experimental data.
    """

    delta_grid: np.ndarray
    values: np.ndarray
    kind: str
    weights: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.kind not in SPECTRUM_KINDS:
            raise ValueError(f"kind must be one of {SPECTRUM_KINDS}, got {self.kind!r}")
        grid = np.asarray(self.delta_grid, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "delta_grid", grid)
        object.__setattr__(self, "values", vals)
        if grid.ndim != 1 or vals.shape != grid.shape:
            raise ValueError("delta_grid and values must be 1-D arrays of equal length")
        if grid.size < 2:
            raise ValueError("spectrum needs at least two grid points")
        if not (np.isfinite(grid).all() and np.isfinite(vals).all()):
            raise ValueError("spectrum grid and values must be finite")
        d = np.diff(grid)
        if np.any(d <= 0):
            raise ValueError("delta_grid must be strictly ascending")
        if self.kind != "experimental":
            d0 = (grid[-1] - grid[0]) / (grid.size - 1)
            if np.abs(d - d0).max() > _GRID_UNIFORMITY_RTOL * abs(d0):
                raise ValueError("delta_grid must be uniform for this spectrum kind")
        floor = _NEGATIVITY_RTOL * max(float(vals.max()), 0.0) + 1e-20
        if vals.min() < -floor:
            raise ValueError(
                f"negative intensity {vals.min():.3e} below tolerance -{floor:.3e}"
            )
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            object.__setattr__(self, "weights", w)
            if w.shape != grid.shape:
                raise ValueError("weights must match the grid length")
            if not np.isfinite(w).all() or np.any(w < 0):
                raise ValueError("weights must be finite and nonnegative")

    @property
    def spacing(self):
        return (self.delta_grid[-1] - self.delta_grid[0]) / (self.delta_grid.size - 1)


@dataclass(frozen=True)
class CorrelationSeries:
    """C(tau) = <a^(t) a(t+tau)> on an ascending tau grid starting at 0.

    mean_field stores the stationary <a>; the long-time coherent level
    |<a>|^2 is derived from it.
    """

    tau_grid: np.ndarray
    values: np.ndarray
    mean_field: complex

    @property
    def coherent_level(self):
        return abs(self.mean_field) ** 2


def lorentzian(delta, fwhm):
    """Unit-area Lorentzian of the given FWHM, centred at zero."""
    hw = 0.5 * fwhm
    return (hw / np.pi) / (np.asarray(delta) ** 2 + hw * hw)


def _source_and_readout(L, rho_ss):
    """Stacked readout functional w (Tr[a .]) and fluctuation source v."""
    a = annihilation(L.dim)
    mean = expectation(a, rho_ss)
    w = vec(a.T)
    src = rho_ss @ a.conj().T - np.conj(mean) * rho_ss
    return a, mean, w, vec(src)


def two_time_correlation(L, rho_ss, tau_grid, *, tail_tol=1e-6):
    """C(tau) = Tr[a exp(L tau)(rho_ss a^)] on the given tau grid.

    The grid must start at 0 and ascend.  Verifies C(0) against <a^ a>, the
    stationarity bound |C(tau)| <= C(0), and that the tail has settled onto
    the coherent level; a drifting tail raises GridTooShortError.
    """
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or tau.size < 2:
        raise ValueError("tau_grid must be a 1-D array with at least two points")
    if tau[0] != 0.0:
        raise ValueError("tau_grid must start at 0")
    if np.any(np.diff(tau) <= 0):
        raise ValueError("tau_grid must be strictly ascending")

    a = annihilation(L.dim)
    mean = expectation(a, rho_ss)
    occ = expectation(a.conj().T @ a, rho_ss)
    w = vec(a.T)
    x = vec(rho_ss @ a.conj().T)

    n = L.dim * L.dim
    values = np.empty(tau.size, dtype=complex)
    values[0] = w @ x
    if n <= DENSE_EXPM_LIMIT:
        cache = {}
        for k in range(1, tau.size):
            dt = tau[k] - tau[k - 1]
            key = round(float(dt), 15)
            if key not in cache:
                cache[key] = propagator(L, dt)
            x = cache[key] @ x
            values[k] = w @ x
    else:
        from scipy.integrate import solve_ivp

        gen = L.generator
        sol = solve_ivp(
            lambda _, y: gen @ y,
            (0.0, float(tau[-1])),
            x,
            method="DOP853",
            rtol=1e-10,
            atol=1e-13 * max(1.0, float(np.abs(x).max())),
            t_eval=tau,
        )
        if not sol.success:
            raise RuntimeError(f"correlation integrator failed: {sol.message}")
        values = w @ sol.y

    c0 = values[0]
    if abs(c0.imag) > 1e-10 * max(1.0, abs(c0)):
        raise RuntimeError(f"C(0) not real: imaginary part {c0.imag:.3e}")
    if abs(c0 - occ) > 1e-8 * max(abs(occ), 1e-300):
        raise RuntimeError(
            f"C(0)={c0:.6e} inconsistent with steady occupation {occ:.6e}"
        )
    if np.abs(values).max() > c0.real + 1e-8:
        raise RuntimeError("correlation exceeds its equal-time value")
    coherent = abs(mean) ** 2
    tail = abs(values[-1] - coherent)
    if tail > tail_tol * c0.real + 1e-12:
        raise GridTooShortError(
            f"correlation tail residual {tail:.3e} at tau={tau[-1]:g} exceeds "
            f"{tail_tol:g} * C(0); extend the grid"
        )
    return CorrelationSeries(tau_grid=tau, values=values, mean_field=mean)


def incoherent_spectrum_values(L, rho_ss, deltas, *, method="solve", resid_tol=1e-6):
    """Incoherent spectrum evaluated on an arbitrary array of detunings.

    method "solve": one sparse-LU solve of the shifted generator per
    frequency, deflated against the stationary direction (the source is
    trace-free, so the true solution is too).  method "eig": spectral
    decomposition of the generator, then a vectorised sum over modes.
    """
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    if not np.isfinite(deltas).all():
        raise ValueError("detunings must be finite")
    _, _, w, v = _source_and_readout(L, rho_ss)
    n = L.dim * L.dim

    if np.linalg.norm(v) == 0.0:
        return np.zeros(deltas.shape)

    if method == "solve":
        gen_s = sp.csc_matrix(L.generator)
        eye = sp.identity(n, dtype=complex, format="csc")
        t = trace_vector(L.dim)
        rv = vec(rho_ss)
        vnorm = np.linalg.norm(v)
        gen_norm = sp.linalg.norm(gen_s)
        out = np.empty(deltas.size)
        for i, d in enumerate(deltas):
            shifted = (gen_s - 1j * d * eye).tocsc()
            try:
                y = splu(shifted).solve(v)
            except RuntimeError as exc:
                raise ResolventError(f"resolvent solve failed at Delta={d:g}: {exc}")
            # normwise backward error of the raw solve; checked before the
            # deflation below, which deliberately moves y along the
            # stationary direction that the shifted matrix cannot see
            m_norm = gen_norm + abs(d) * np.sqrt(n)
            denom = m_norm * np.linalg.norm(y) + vnorm
            resid = np.linalg.norm(shifted.dot(y) - v) / denom if denom > 0 else 0.0
            if resid > resid_tol:
                raise ResolventError(
                    f"resolvent backward error {resid:.3e} at Delta={d:g} exceeds {resid_tol:g}"
                )
            # the true solution is trace-free (the source is); remove any
            # stationary-direction pollution, which dominates near Delta = 0
            y = y - (t @ y) * rv
            out[i] = -2.0 * np.real(w @ y)
        return out

    if method == "eig":
        lam, vmat = np.linalg.eig(L.generator)
        coef = np.linalg.solve(vmat, v)
        g = (w @ vmat) * coef
        zero = np.abs(lam) < 1e-10
        if np.any(zero):
            spill = np.abs(g[zero]).sum()
            if spill > 1e-8 * (np.abs(g).sum() + 1e-300):
                raise ResolventError(
                    "stationary mode carries spectral weight; shift is singular"
                )
            g = g.copy()
            g[zero] = 0.0
        out = np.empty(deltas.size)
        chunk = max(1, int(4e6 // max(lam.size, 1)))
        for s in range(0, deltas.size, chunk):
            dd = deltas[s : s + chunk, None]
            out[s : s + chunk] = -2.0 * np.real((g / (lam[None, :] - 1j * dd)).sum(axis=1))
        return out

    raise ValueError(f"unknown spectrum method {method!r}")


def incoherent_spectrum(L, rho_ss, delta_grid=None, *, method="solve"):
    """Incoherent (coherent-line-free) emission spectrum of the mode."""
    grid = default_delta_grid() if delta_grid is None else np.asarray(delta_grid, float)
    vals = incoherent_spectrum_values(L, rho_ss, grid, method=method)
    return SpectrumSeries(delta_grid=grid, values=vals, kind="internal")


def _detector_kernel(grid, fwhm):
    """Detector Lorentzian sampled over half the grid width (never longer
    than the signal), renormalised so its discrete integral is exactly 1
    and convolution conserves area."""
    spacing = (grid[-1] - grid[0]) / (grid.size - 1)
    m = (grid.size - 1) // 2
    offsets = np.arange(-m, m + 1) * spacing
    kernel = lorentzian(offsets, fwhm)
    kernel /= kernel.sum() * spacing
    return kernel, spacing


def internal_spectrum_with_rayleigh(
    L,
    rho_ss,
    delta_grid=None,
    gamma_f=DETECTOR_FWHM_DEFAULT,
    *,
    method="solve",
    convolve_detector=False,
):
    """Full internal spectrum: incoherent part plus the coherently scattered
    line, the latter rendered as a detector Lorentzian of FWHM gamma_f with
    area |<a>|^2.

    By default only the coherent delta line is broadened by the detector;
    the broad incoherent part is left untouched (gamma_f is far below the
    mode linewidth, so its effect there is negligible).  Set
    convolve_detector=True to convolve the incoherent part as well.
    """
    if gamma_f <= 0:
        raise ValueError(f"detector FWHM must be > 0, got {gamma_f}")
    grid = default_delta_grid() if delta_grid is None else np.asarray(delta_grid, float)
    vals = incoherent_spectrum_values(L, rho_ss, grid, method=method)
    if convolve_detector:
        kernel, spacing = _detector_kernel(grid, gamma_f)
        vals = np.convolve(vals, kernel, mode="same") * spacing
    a = annihilation(L.dim)
    coherent = abs(expectation(a, rho_ss)) ** 2
    vals = vals + coherent * lorentzian(grid, gamma_f)
    return SpectrumSeries(delta_grid=grid, values=vals, kind="internal")


def spectrum_from_correlation(corr, deltas, *, reality_tol=1e-10):
    """Spectrum from the time-domain correlation (trapezoid transform).

    Extends C(tau) to negative lags by conjugate symmetry and integrates
    exp(-i Delta tau) [C - |<a>|^2] over the full lag range.  The result is
    real up to quadrature noise; an imaginary residue above reality_tol of
    the peak raises, otherwise it is discarded.
    """
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    tau = corr.tau_grid
    chat = corr.values - corr.coherent_level
    tau_full = np.concatenate((-tau[:0:-1], tau))
    c_full = np.concatenate((np.conj(chat[:0:-1]), chat))
    out = np.empty(deltas.size, dtype=complex)
    chunk = max(1, int(4e6 // max(tau_full.size, 1)))
    for s in range(0, deltas.size, chunk):
        dd = deltas[s : s + chunk, None]
        integrand = np.exp(-1j * dd * tau_full[None, :]) * c_full[None, :]
        out[s : s + chunk] = np.trapezoid(integrand, tau_full, axis=1)
    peak = np.abs(out.real).max()
    resid = np.abs(out.imag).max()
    if peak > 0 and resid > reality_tol * peak:
        raise RuntimeError(
            f"imaginary residue {resid:.3e} exceeds {reality_tol:g} of peak {peak:.3e}"
        )
    return out.real


def asymmetry_functional(delta_grid, values):
    """Integral of |S(Delta) - S(-Delta)| over the grid, normalised by the
    integral of S.  Requires a grid symmetric about zero."""
    grid = np.asarray(delta_grid, dtype=float)
    vals = np.asarray(values, dtype=float)
    if not np.allclose(grid, -grid[::-1], atol=1e-12, rtol=0.0):
        raise ValueError("asymmetry functional needs a grid symmetric about 0")
    total = np.trapezoid(vals, grid)
    if total <= 0:
        raise ValueError("asymmetry functional needs a positive total intensity")
    return float(np.trapezoid(np.abs(vals - vals[::-1]), grid) / total)
