"""Spectrum ingestion, forward model, least-squares objective and fitting.

The forward model chains the mode dynamics, the internal spectrum and the
medium response into the observable spectrum; the objective is weighted
least squares on linear intensities with the model interpolated linearly
onto the data grid.  Fits normalise the data to unit peak internally (the
scale parameter absorbs absolute units, removing the overall-intensity
gauge); everything reported is in original data units.
"""

import re
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import Bounds, least_squares, minimize

from .dynamics import build_liouvillian, converge_truncation, steady_state
from .errors import CoverageError
from .fock import CollectiveModelParams
from .medium import MediumParams, absorption
from .spectra import (
    DETECTOR_FWHM_DEFAULT,
    SpectrumSeries,
    internal_spectrum_with_rayleigh,
)
from .medium import output_spectrum

PARAM_NAMES = ("rabi", "kerr", "delta", "gamma", "f", "scale", "background")

DEFAULT_BOUNDS = {
    "rabi": (1e-6, 2.0),
    "kerr": (1e-6, 5.0),
    "delta": (-1.0, 1.0),
    "gamma": (1e-3, 2.0),
    "f": (0.0, 10.0),
    "scale": (1e-6, 1e3),
    "background": (0.0, 10.0),
}

OPTIMIZERS = ("nelder_mead", "levenberg_marquardt")

_FIELD_SPLIT = re.compile(r"[\t,]")


@dataclass(frozen=True)
class FitConfig:
    """Configuration of one spectral fit.

    free_params and fixed must partition the seven model parameters
    (rabi, kerr, delta, gamma, f, scale, background).  The detector width
    gamma_f is always fixed.  fock_dim may be an integer or "auto", in
    which case the truncation is converged at the initial parameters and
    re-verified at the optimum.
    """

    free_params: tuple
    initial: dict
    fixed: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    gamma_f: float = DETECTOR_FWHM_DEFAULT
    fock_dim: int | str = "auto"
    optimizer: str = "nelder_mead"
    max_evals: int = 2000
    tolerance: float = 1e-9
    medium_mode: str = "thin_film_proportional"
    a_max: float = 0.9
    slab_phase_thickness: float = 0.05
    model_grid: tuple | None = None
    n_model_points: int = 801
    exclude_window: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "free_params", tuple(self.free_params))
        free = set(self.free_params)
        fixed = set(self.fixed)
        if len(self.free_params) != len(free):
            raise ValueError("free_params contains duplicates")
        if free & fixed:
            raise ValueError(f"parameters both free and fixed: {sorted(free & fixed)}")
        if free | fixed != set(PARAM_NAMES):
            missing = set(PARAM_NAMES) - free - fixed
            extra = (free | fixed) - set(PARAM_NAMES)
            raise ValueError(
                f"free and fixed must partition {PARAM_NAMES}; "
                f"missing={sorted(missing)} unknown={sorted(extra)}"
            )
        for name in self.free_params:
            if name not in self.initial:
                raise ValueError(f"no initial value for free parameter {name!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.gamma_f <= 0:
            raise ValueError("gamma_f must be > 0")
        if self.fock_dim != "auto" and (
            int(self.fock_dim) != self.fock_dim or self.fock_dim < 2
        ):
            raise ValueError("fock_dim must be an integer >= 2 or 'auto'")
        for name in self.free_params:
            lo, hi = self.bound(name)
            x0 = self.initial[name]
            if not lo <= x0 <= hi:
                raise ValueError(
                    f"initial value {x0} of {name!r} outside bounds ({lo}, {hi})"
                )

    def bound(self, name):
        return tuple(self.bounds.get(name, DEFAULT_BOUNDS[name]))

    def value_map(self, theta=None):
        """Full parameter-name -> value map for a free-parameter vector."""
        vals = dict(self.fixed)
        vals.update({k: self.initial[k] for k in self.free_params})
        if theta is not None:
            vals.update(dict(zip(self.free_params, np.asarray(theta, float))))
        return vals


@dataclass(frozen=True)
class FitResult:
    """Outcome of a fit; scale and background are in data units."""

    params: dict
    collective: CollectiveModelParams
    medium: MediumParams
    laser_power: float | None
    chi2: float
    n_points: int
    uncertainties: dict
    converged: bool
    trace: tuple
    fock_dim: int
    data_peak: float
    diagnostics: str
    config: FitConfig

    @property
    def rabi(self):
        return self.params["rabi"]

    @property
    def kerr(self):
        return self.params["kerr"]


def load_spectrum(source, *, columns=None, weight_column=None, min_points=1):
    """Read a measured spectrum from a text file.

    Comment lines start with '#'; data rows hold tab- or comma-separated
    fields "delta_meV<sep>intensity[<sep>weight]".  Rows must all carry the
    same number of fields; with more than three fields the delta/intensity
    columns must be named explicitly via columns=(i, j).  The grid must
    ascend strictly and intensities must be finite and nonnegative.
    """
    rows = []
    with open(source, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f.strip() for f in _FIELD_SPLIT.split(line)]
            if len(fields) < 2:
                raise ValueError(f"line {ln}: expected tab- or comma-separated columns")
            rows.append((ln, fields))
    if not rows:
        raise ValueError(f"{source}: no data rows")

    n_fields = len(rows[0][1])
    for ln, fields in rows:
        if len(fields) != n_fields:
            raise ValueError(
                f"line {ln}: {len(fields)} fields, expected {n_fields} as in the first row"
            )
    if columns is None:
        if n_fields == 2:
            columns = (0, 1)
        elif n_fields == 3:
            columns = (0, 1)
            if weight_column is None:
                weight_column = 2
        else:
            raise ValueError(
                f"{source}: {n_fields} columns; pass columns=(i_delta, i_intensity)"
            )
    needed = set(columns) | ({weight_column} if weight_column is not None else set())
    if max(needed) >= n_fields:
        raise ValueError(f"{source}: column index {max(needed)} out of range")

    grid, vals, weights, lines = [], [], [], []
    for ln, fields in rows:
        try:
            d = float(fields[columns[0]])
            s = float(fields[columns[1]])
            w = float(fields[weight_column]) if weight_column is not None else None
        except ValueError:
            raise ValueError(f"line {ln}: non-numeric field")
        if not np.isfinite(d) or not np.isfinite(s) or (w is not None and not np.isfinite(w)):
            raise ValueError(f"line {ln}: non-finite value")
        if s < 0:
            raise ValueError(f"line {ln}: negative intensity {s}")
        if grid and d <= grid[-1]:
            raise ValueError(
                f"line {ln}: detuning {d} does not ascend past {grid[-1]}"
            )
        grid.append(d)
        vals.append(s)
        lines.append(ln)
        if w is not None:
            if w < 0:
                raise ValueError(f"line {ln}: negative weight {w}")
            weights.append(w)

    if len(grid) < min_points:
        raise ValueError(f"{source}: only {len(grid)} points, need at least {min_points}")
    return SpectrumSeries(
        delta_grid=np.asarray(grid),
        values=np.asarray(vals),
        kind="experimental",
        weights=np.asarray(weights) if weights else None,
    )


def assemble_params(values, *, fock_dim, laser_power=None, medium_mode="thin_film_proportional",
                    a_max=0.9, slab_phase_thickness=0.05):
    """Build (CollectiveModelParams, MediumParams) from a name -> value map.
    The oscillator shares the mode's detuning and width."""
    collective = CollectiveModelParams(
        delta=values["delta"],
        rabi=values["rabi"],
        kerr=values["kerr"],
        gamma=values["gamma"],
        laser_power=laser_power,
        fock_dim=int(fock_dim),
    )
    medium = MediumParams(
        f=values["f"],
        delta_res=values["delta"],
        gamma=values["gamma"],
        mode=medium_mode,
        slab_phase_thickness=slab_phase_thickness,
        a_max=a_max,
        background=values["background"],
        scale=values["scale"],
    )
    return collective, medium


def simulate_spectra(collective, medium, gamma_f=DETECTOR_FWHM_DEFAULT, delta_grid=None,
                     *, method="solve", convolve_detector=False):
    """Run the full pipeline once; returns (internal, absorption, output)."""
    liouv = build_liouvillian(collective)
    rho = steady_state(liouv)
    internal = internal_spectrum_with_rayleigh(
        liouv, rho, delta_grid, gamma_f, method=method, convolve_detector=convolve_detector
    )
    absorb = absorption(internal.delta_grid, medium)
    out = output_spectrum(internal, medium, absorb)
    return internal, absorb, out


def model_spectrum(collective, medium, gamma_f=DETECTOR_FWHM_DEFAULT, delta_grid=None,
                   *, method="solve", convolve_detector=False):
    """Observable model spectrum on a detuning grid."""
    return simulate_spectra(
        collective, medium, gamma_f, delta_grid,
        method=method, convolve_detector=convolve_detector,
    )[2]


def _model_grid_for(data, model_grid, n_model_points):
    """Uniform model grid covering the data grid."""
    if model_grid is not None:
        lo, hi, n = model_grid
        grid = np.linspace(float(lo), float(hi), int(n))
        eps = 1e-12 * max(1.0, abs(hi - lo))
        if data.delta_grid[0] < grid[0] - eps or data.delta_grid[-1] > grid[-1] + eps:
            raise CoverageError(
                f"data grid [{data.delta_grid[0]}, {data.delta_grid[-1]}] extends "
                f"beyond model grid [{grid[0]}, {grid[-1]}]"
            )
        return grid
    g = data.delta_grid
    d = np.diff(g)
    d0 = (g[-1] - g[0]) / (g.size - 1)
    if np.abs(d - d0).max() <= 1e-9 * abs(d0):
        return g.copy()
    return np.linspace(g[0], g[-1], int(n_model_points))


def model_on_data_grid(data, collective, medium, *, gamma_f=DETECTOR_FWHM_DEFAULT,
                       model_grid=None, n_model_points=801, method="solve"):
    """Model spectrum linearly interpolated onto the data grid."""
    grid = _model_grid_for(data, model_grid, n_model_points)
    model = model_spectrum(collective, medium, gamma_f, grid, method=method)
    return np.interp(data.delta_grid, model.delta_grid, model.values)


def objective(data, collective, medium, *, gamma_f=DETECTOR_FWHM_DEFAULT, weights=None,
              model_grid=None, n_model_points=801, method="solve"):
    """Weighted least-squares mismatch sum_k w_k (S_model_k - S_data_k)^2."""
    model_vals = model_on_data_grid(
        data, collective, medium, gamma_f=gamma_f,
        model_grid=model_grid, n_model_points=n_model_points, method=method,
    )
    w = np.ones(data.values.size) if weights is None else np.asarray(weights, float)
    return float(np.sum(w * (model_vals - data.values) ** 2))


def _apply_exclusion(data, window):
    if window is None:
        return data
    lo, hi = window
    keep = (data.delta_grid < lo) | (data.delta_grid > hi)
    if keep.sum() < 2:
        raise ValueError("exclusion window removes nearly all data")
    return SpectrumSeries(
        delta_grid=data.delta_grid[keep],
        values=data.values[keep],
        kind="experimental",
        weights=None if data.weights is None else data.weights[keep],
    )


def _resolve_fock_dim(config, laser_power):
    if config.fock_dim != "auto":
        return int(config.fock_dim), ""
    coll0, _ = assemble_params(
        config.value_map(), fock_dim=16, laser_power=laser_power,
        medium_mode=config.medium_mode, a_max=config.a_max,
        slab_phase_thickness=config.slab_phase_thickness,
    )
    d_star, _ = converge_truncation(coll0, 1e-6)
    return d_star, f"auto truncation converged at D={d_star}; "


def fit(data, config, *, laser_power=None, method="solve", _diag=""):
    """Fit the forward model to a measured spectrum.

    Deterministic given (data, config): both optimizers are derivative-free
    or use fixed finite-difference steps, and no randomness enters.  The
    residuals are formed on unit-peak data for conditioning, but parameters,
    chi2, trace and uncertainties are all reported in data units.
    """
    data = _apply_exclusion(data, config.exclude_window)
    if data.values.size < 16:
        raise ValueError(f"need at least 16 data points to fit, got {data.values.size}")
    peak = float(data.values.max())
    if peak <= 0:
        raise ValueError("data peak must be positive")
    data_norm = SpectrumSeries(
        delta_grid=data.delta_grid,
        values=data.values / peak,
        kind="experimental",
        weights=data.weights,
    )
    w = np.ones(data_norm.values.size) if data_norm.weights is None else data_norm.weights
    sqrt_w = np.sqrt(w)

    # internal gauge: residuals live on unit-peak data, parameters stay in
    # data units throughout (scale and background enter the model linearly,
    # so dividing them by the peak inside the evaluation is exact)
    def to_internal(vals):
        out = dict(vals)
        out["scale"] = out["scale"] / peak
        out["background"] = out["background"] / peak
        return out

    diagnostics = _diag
    fock_dim, note = _resolve_fock_dim(config, laser_power)
    diagnostics += note

    trace = []
    recording = [True]

    def model_vals(theta):
        coll, med = assemble_params(
            to_internal(config.value_map(theta)), fock_dim=fock_dim,
            laser_power=laser_power,
            medium_mode=config.medium_mode, a_max=config.a_max,
            slab_phase_thickness=config.slab_phase_thickness,
        )
        return model_on_data_grid(
            data_norm, coll, med, gamma_f=config.gamma_f,
            model_grid=config.model_grid, n_model_points=config.n_model_points,
            method=method,
        )

    def residuals(theta):
        r = sqrt_w * (model_vals(theta) - data_norm.values)
        if recording[0]:
            trace.append(float(np.sum(r * r)))
        return r

    def chi2_fn(theta):
        r = residuals(theta)
        return float(np.sum(r * r))

    free = config.free_params
    if not free:
        chi2 = chi2_fn(np.empty(0))
        theta_opt = np.empty(0)
        converged = True
        jac = None
        diagnostics += "no free parameters; returning initial values; "
    else:
        theta0 = np.array([config.initial[k] for k in free], dtype=float)
        lo = np.array([config.bound(k)[0] for k in free], dtype=float)
        hi = np.array([config.bound(k)[1] for k in free], dtype=float)
        if config.optimizer == "nelder_mead":
            res = minimize(
                chi2_fn,
                theta0,
                method="Nelder-Mead",
                bounds=Bounds(lo, hi),
                options={
                    "maxfev": config.max_evals,
                    "xatol": config.tolerance,
                    "fatol": config.tolerance,
                    "adaptive": True,
                },
            )
            theta_opt, chi2, converged, jac = res.x, float(res.fun), bool(res.success), None
            if not converged:
                diagnostics += f"optimizer stopped: {res.message}; "
        else:
            # Bound-constrained problems go through the trust-region variant;
            # the classic algorithm handles the unbounded case.
            unbounded = np.all(np.isinf(lo) | (lo <= -1e300)) and np.all(np.isinf(hi))
            res = least_squares(
                residuals,
                theta0,
                method="lm" if unbounded else "trf",
                bounds=(-np.inf, np.inf) if unbounded else (lo, hi),
                diff_step=1e-4,
                max_nfev=config.max_evals,
                xtol=config.tolerance,
                ftol=config.tolerance,
                gtol=config.tolerance,
            )
            theta_opt, chi2 = res.x, float(2.0 * res.cost)
            converged, jac = bool(res.success), res.jac
            if not converged:
                diagnostics += f"optimizer stopped: {res.message}; "
        for k, x, l, h in zip(free, theta_opt, lo, hi):
            if min(x - l, h - x) < 1e-8 * max(h - l, 1e-300):
                diagnostics += f"parameter {k} pinned at bound; "

    recording[0] = False

    if config.fock_dim == "auto" and free:
        coll_opt, _ = assemble_params(
            config.value_map(theta_opt), fock_dim=fock_dim, laser_power=laser_power,
            medium_mode=config.medium_mode, a_max=config.a_max,
            slab_phase_thickness=config.slab_phase_thickness,
        )
        d_check, _ = converge_truncation(coll_opt, 1e-6)
        if d_check > fock_dim:
            diagnostics += f"truncation grew to D={d_check} at the optimum; refitting; "
            refit_config = replace(
                config,
                fock_dim=d_check,
                initial={**config.initial, **dict(zip(free, (float(x) for x in theta_opt)))},
            )
            return fit(
                data, refit_config, laser_power=laser_power, method=method,
                _diag=diagnostics,
            )

    # sigma comes out in data units directly: the peak factors cancel
    # between the residual scale and chi2/(n-p)
    uncertainties = _uncertainties(
        free, theta_opt, chi2, data_norm.values.size, jac, chi2_fn
    )

    values = {k: float(v) for k, v in config.value_map(theta_opt if free else None).items()}
    collective, medium = assemble_params(
        values, fock_dim=fock_dim, laser_power=laser_power,
        medium_mode=config.medium_mode, a_max=config.a_max,
        slab_phase_thickness=config.slab_phase_thickness,
    )
    return FitResult(
        params=dict(values),
        collective=collective,
        medium=medium,
        laser_power=laser_power,
        chi2=chi2 * peak * peak,
        n_points=int(data_norm.values.size),
        uncertainties=uncertainties,
        converged=converged,
        trace=tuple(t * peak * peak for t in trace),
        fock_dim=fock_dim,
        data_peak=peak,
        diagnostics=diagnostics.strip(),
        config=config,
    )


def format_fit_report(result):
    """Render a fit result as a machine-parseable key=value document."""
    cfg = result.config
    lines = ["[fit]"]
    lines.append(f"converged = {result.converged}")
    lines.append(f"chi2 = {result.chi2!r}")
    lines.append(f"n_points = {result.n_points}")
    lines.append(f"optimizer = {cfg.optimizer}")
    lines.append(f"fock_dim = {result.fock_dim}")
    lines.append(f"data_peak = {result.data_peak!r}")
    lines.append(f"laser_power = {'' if result.laser_power is None else repr(result.laser_power)}")
    lines.append(f"diagnostics = {result.diagnostics}")
    lines.append("")
    lines.append("[parameters]")
    for name in PARAM_NAMES:
        lines.append(f"{name} = {result.params[name]!r}")
    lines.append(f"gamma_f = {cfg.gamma_f!r}")
    lines.append(f"delta_res = {result.params['delta']!r}")
    lines.append(f"mode = {cfg.medium_mode}")
    lines.append(f"a_max = {cfg.a_max!r}")
    lines.append(f"slab_phase_thickness = {cfg.slab_phase_thickness!r}")
    lines.append("")
    lines.append("[uncertainties]")
    for name in cfg.free_params:
        lines.append(f"{name} = {result.uncertainties.get(name, float('nan'))!r}")
    lines.append("")
    lines.append("[config]")
    lines.append(f"free = {','.join(cfg.free_params)}")
    lines.append(f"fixed = {','.join(sorted(cfg.fixed))}")
    for name in cfg.free_params:
        lo, hi = cfg.bound(name)
        lines.append(f"bounds_{name} = {lo!r},{hi!r}")
        lines.append(f"initial_{name} = {cfg.initial[name]!r}")
    for name in sorted(cfg.fixed):
        lines.append(f"fixed_{name} = {cfg.fixed[name]!r}")
    lines.append(f"max_evals = {cfg.max_evals}")
    lines.append(f"tolerance = {cfg.tolerance!r}")
    lines.append("")
    lines.append("[units]")
    lines.append("energy = meV")
    lines.append("laser_power = microwatt")
    lines.append("intensity = data units")
    lines.append("")
    return "\n".join(lines)


def read_fit_report(path):
    """Parse a fit report back into a {section: {key: value-string}} dict."""
    import configparser

    cp = configparser.ConfigParser()
    with open(path, "r", encoding="utf-8") as fh:
        cp.read_file(fh)
    return {section: dict(cp.items(section)) for section in cp.sections()}


def _uncertainties(free, theta, chi2, n_points, jac, chi2_fn):
    """Per-parameter standard errors from finite-difference curvature.

    Uses the optimizer's finite-difference Jacobian (Gauss-Newton curvature
    J^T J) when available, otherwise a central-difference Hessian of the
    objective.  Scaled by chi2 / (n - p)."""
    p = len(free)
    if p == 0:
        return {}
    dof = max(n_points - p, 1)
    s2 = chi2 / dof
    try:
        if jac is not None:
            curv = jac.T @ jac  # half the chi2 Hessian
            cov = s2 * np.linalg.inv(curv)
        else:
            h = np.empty((p, p))
            steps = 1e-4 * np.maximum(np.abs(theta), 1e-3)
            f0 = chi2
            for i in range(p):
                ei = np.zeros(p)
                ei[i] = steps[i]
                fp = chi2_fn(theta + ei)
                fm = chi2_fn(theta - ei)
                h[i, i] = (fp - 2 * f0 + fm) / steps[i] ** 2
                for j in range(i):
                    ej = np.zeros(p)
                    ej[j] = steps[j]
                    fpp = chi2_fn(theta + ei + ej)
                    fpm = chi2_fn(theta + ei - ej)
                    fmp = chi2_fn(theta - ei + ej)
                    fmm = chi2_fn(theta - ei - ej)
                    h[i, j] = h[j, i] = (fpp - fpm - fmp + fmm) / (4 * steps[i] * steps[j])
            cov = 2.0 * s2 * np.linalg.inv(h)
        sig = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        sig = np.full(p, np.nan)
    return {name: float(s) for name, s in zip(free, sig)}
