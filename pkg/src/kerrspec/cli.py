"""Command-line front end.

One command per invocation: simulate, fit, sf-test, oracle or convergence.
Every run is driven by a key=value config file with sections; command-line
--set section.key=value overrides take precedence.  Random phase draws
require an explicit seed in the config.  Output files are written
atomically (temp file plus rename) and numeric columns use full
round-trip precision.

Exit codes: 0 success, 2 validation failure, 3 numerical failure,
4 oracle scale-guard rejection.
"""

import argparse
import configparser
import os
import sys
import tempfile

import numpy as np

from . import fitting
from .collective import (
    MultiModeParams,
    collective_reduce,
    oracle_multimode_steady,
    random_phases,
    sf_ratio,
)
from .dynamics import build_liouvillian, converge_truncation, steady_state
from .errors import ScaleGuardError
from .fock import CollectiveModelParams
from .medium import MediumParams
from .spectra import DETECTOR_FWHM_DEFAULT, incoherent_spectrum

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_SCALE_GUARD = 4


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(prefix=".kerrspec-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Config:
    """Config file plus --set overrides, with typed accessors."""

    def __init__(self, path=None, overrides=()):
        self.cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        if path is not None:
            if not os.path.exists(path):
                raise ValueError(f"config file not found: {path}")
            with open(path, "r", encoding="utf-8") as fh:
                self.cp.read_file(fh)
        for item in overrides:
            try:
                target, value = item.split("=", 1)
                section, key = target.split(".", 1)
            except ValueError:
                raise ValueError(f"--set expects section.key=value, got {item!r}")
            if not self.cp.has_section(section):
                self.cp.add_section(section)
            self.cp.set(section, key.strip(), value.strip())

    def get(self, section, key, default=None):
        if self.cp.has_option(section, key):
            return self.cp.get(section, key)
        return default

    def require(self, section, key):
        if not self.cp.has_option(section, key):
            raise ValueError(f"config is missing [{section}] {key}")
        return self.cp.get(section, key)

    def getfloat(self, section, key, default=None):
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ValueError(f"[{section}] {key} must be a number, got {raw!r}")

    def getint(self, section, key, default=None):
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ValueError(f"[{section}] {key} must be an integer, got {raw!r}")

    def getbool(self, section, key, default=False):
        raw = self.get(section, key)
        if raw is None:
            return default
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"[{section}] {key} must be a boolean, got {raw!r}")


def _stage(name, func, *args, **kwargs):
    """Run one pipeline stage, naming it on failure."""
    try:
        return func(*args, **kwargs)
    except Exception as exc:
        raise type(exc)(f"stage {name}: {exc}") from exc


def _collective_from_config(cfg, section="model"):
    cfg.require(section, "gamma")
    return CollectiveModelParams(
        delta=cfg.getfloat(section, "delta", 0.0),
        rabi=cfg.getfloat(section, "rabi", 0.0),
        kerr=cfg.getfloat(section, "kerr", 0.0),
        gamma=cfg.getfloat(section, "gamma"),
        laser_power=cfg.getfloat(section, "laser_power", None),
        fock_dim=cfg.getint(section, "fock_dim", 40),
    )


def _medium_from_config(cfg, delta_res, gamma):
    return MediumParams(
        f=cfg.getfloat("medium", "f", 1.0),
        delta_res=cfg.getfloat("medium", "delta_res", delta_res),
        gamma=cfg.getfloat("medium", "gamma", gamma),
        mode=cfg.get("medium", "mode", "thin_film_proportional"),
        slab_phase_thickness=cfg.getfloat("medium", "slab_phase_thickness", 0.05),
        a_max=cfg.getfloat("medium", "a_max", 0.9),
        background=cfg.getfloat("medium", "background", 0.0),
        scale=cfg.getfloat("medium", "scale", 1.0),
    )


def _grid_from_config(cfg):
    lo = cfg.getfloat("grid", "min", -1.5)
    hi = cfg.getfloat("grid", "max", 1.5)
    n = cfg.getint("grid", "points", 2001)
    if not lo < hi or n < 2:
        raise ValueError(f"bad grid: min={lo} max={hi} points={n}")
    return np.linspace(lo, hi, n)


def _output_path(cfg, args, default):
    if getattr(args, "output", None):
        return args.output
    env_dir = os.environ.get("KERRSPEC_OUTPUT_DIR")
    path = cfg.get("io", "output", default)
    if path is None:
        raise ValueError("no output path given ([io] output or --output)")
    if env_dir and not os.path.isabs(path):
        return os.path.join(env_dir, path)
    return path


def _table(columns, header, fmt):
    sep = "," if fmt == "csv" else "\t"
    lines = [f"# {sep.join(header)}"]
    for row in zip(*columns):
        lines.append(sep.join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def cmd_simulate(cfg, args):
    params = _stage("parameters", _collective_from_config, cfg)
    medium = _stage(
        "parameters", _medium_from_config, cfg, params.delta, params.gamma
    )
    gamma_f = cfg.getfloat("detector", "gamma_f", DETECTOR_FWHM_DEFAULT)
    convolve = cfg.getbool("detector", "convolve", False)
    grid = _stage("grid", _grid_from_config, cfg)
    method = cfg.get("spectrum", "method", "solve")

    internal, absorb, out = _stage(
        "pipeline",
        fitting.simulate_spectra,
        params, medium, gamma_f, grid,
        method=method, convolve_detector=convolve,
    )
    path = _output_path(cfg, args, "simulate.csv")
    fmt = cfg.get("io", "format", "csv")
    header = ["delta_meV", "S_internal", "a", "S_output"]
    meta = [
        f"# kerrspec simulate: delta={params.delta!r} rabi={params.rabi!r} "
        f"kerr={params.kerr!r} gamma={params.gamma!r} gamma_f={gamma_f!r} "
        f"fock_dim={params.fock_dim}",
        f"# medium: mode={medium.mode} f={medium.f!r} delta_res={medium.delta_res!r} "
        f"a_max={medium.a_max!r} scale={medium.scale!r} background={medium.background!r}",
    ]
    body = _table(
        [internal.delta_grid, internal.values, absorb.values, out.values], header, fmt
    )
    _atomic_write(path, "\n".join(meta) + "\n" + body)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_fit(cfg, args):
    data_path = cfg.require("fit", "data")
    if not os.path.exists(data_path):
        raise ValueError(f"data file not found: {data_path}")
    data = fitting.load_spectrum(data_path)

    free = tuple(
        s.strip() for s in cfg.get("fit", "free", "rabi,kerr,delta,gamma").split(",") if s.strip()
    )
    initial, fixed, bounds = {}, {}, {}
    for name in fitting.PARAM_NAMES:
        if name in free:
            init = cfg.getfloat("fit", f"initial_{name}", None)
            if init is None:
                raise ValueError(f"[fit] initial_{name} required for free parameter")
            initial[name] = init
        else:
            val = cfg.getfloat("fit", f"fixed_{name}", None)
            fixed[name] = val if val is not None else _FIT_FIXED_DEFAULTS[name]
        raw_bounds = cfg.get("fit", f"bounds_{name}")
        if raw_bounds is not None:
            lo, hi = (float(x) for x in raw_bounds.split(","))
            bounds[name] = (lo, hi)
    exclude = None
    if cfg.get("fit", "exclude_min") is not None or cfg.get("fit", "exclude_max") is not None:
        exclude = (
            cfg.getfloat("fit", "exclude_min", -np.inf),
            cfg.getfloat("fit", "exclude_max", np.inf),
        )
    fock_dim = cfg.get("fit", "fock_dim", "auto")
    config = fitting.FitConfig(
        free_params=free,
        initial=initial,
        fixed=fixed,
        bounds=bounds,
        gamma_f=cfg.getfloat("detector", "gamma_f", DETECTOR_FWHM_DEFAULT),
        fock_dim="auto" if fock_dim == "auto" else int(fock_dim),
        optimizer=cfg.get("fit", "optimizer", "nelder_mead"),
        max_evals=cfg.getint("fit", "max_evals", 2000),
        tolerance=cfg.getfloat("fit", "tolerance", 1e-9),
        medium_mode=cfg.get("medium", "mode", "thin_film_proportional"),
        a_max=cfg.getfloat("medium", "a_max", 0.9),
        slab_phase_thickness=cfg.getfloat("medium", "slab_phase_thickness", 0.05),
        exclude_window=exclude,
    )
    result = fitting.fit(
        data, config, laser_power=cfg.getfloat("fit", "laser_power", None)
    )
    path = _output_path(cfg, args, "fit_report.txt")
    _atomic_write(path, fitting.format_fit_report(result))
    print(f"wrote {path} (chi2={result.chi2:.6g}, converged={result.converged})")
    return EXIT_OK


_FIT_FIXED_DEFAULTS = {
    "rabi": 0.1,
    "kerr": 0.1,
    "delta": 0.08,
    "gamma": 0.2,
    "f": 1.0,
    "scale": 1.0,
    "background": 0.0,
}


def _sf_record(path):
    report = fitting.read_fit_report(path)
    try:
        pars = report["parameters"]
        power_raw = report["fit"].get("laser_power", "")
    except KeyError as exc:
        raise ValueError(f"{path}: not a fit report ({exc})")
    if not power_raw:
        raise ValueError(f"{path}: fit report carries no laser_power")
    from types import SimpleNamespace

    return SimpleNamespace(
        laser_power=float(power_raw),
        rabi=float(pars["rabi"]),
        kerr=float(pars["kerr"]),
        path=path,
    )


def cmd_sf_test(cfg, args):
    paths = list(args.reports)
    raw = cfg.get("sf", "reports")
    if raw:
        paths.extend(p.strip() for p in raw.split(",") if p.strip())
    if len(paths) < 2:
        raise ValueError("sf-test needs at least two fit reports")
    records = [_sf_record(p) for p in paths]
    records.sort(key=lambda r: r.laser_power)
    margin = cfg.getfloat("sf", "margin", 0.15)
    threshold_sf = cfg.getfloat("sf", "threshold_sf", 0.25)

    pairs = [
        sf_ratio(records[i], records[i + 1], margin=margin, threshold_sf=threshold_sf)
        for i in range(len(records) - 1)
    ]
    classes = [p.classification for p in pairs]
    if all(c == "random_phase" for c in classes):
        overall = "random_phase"
    elif "superfluorescent" in classes and "random_phase" not in classes:
        overall = "superfluorescent"
    else:
        overall = "partial"

    lines = ["[sf-test]"]
    lines.append(f"n_reports = {len(records)}")
    lines.append(f"margin = {margin!r}")
    lines.append(f"threshold_sf = {threshold_sf!r}")
    lines.append(f"overall_verdict = {overall}")
    lines.append("")
    for i, (rep, rec_a, rec_b) in enumerate(zip(pairs, records[:-1], records[1:]), start=1):
        lines.append(f"[pair_{i}]")
        lines.append(f"report_low = {rec_a.path}")
        lines.append(f"report_high = {rec_b.path}")
        lines.append(f"power_low_uW = {rep.power_1!r}")
        lines.append(f"power_high_uW = {rep.power_2!r}")
        lines.append(f"lhs = {rep.lhs!r}")
        lines.append(f"kerr_ratio = {rep.kerr_ratio!r}")
        lines.append(f"agreement = {rep.agreement!r}")
        lines.append(f"classification = {rep.classification}")
        lines.append("")
    path = _output_path(cfg, args, "sf_report.txt")
    _atomic_write(path, "\n".join(lines))
    print(f"wrote {path} (overall: {overall})")
    return EXIT_OK


def cmd_oracle(cfg, args):
    n_modes = cfg.getint("oracle", "n_modes", 2)
    raw_phases = cfg.get("oracle", "phases", "0") or "0"
    if raw_phases.strip().lower() == "random":
        seed = cfg.get("oracle", "seed")
        if seed is None:
            raise ValueError("[oracle] phases=random requires an explicit seed")
        phases = random_phases(n_modes, int(seed))
    else:
        phases = tuple(float(x) for x in raw_phases.split(","))
        if len(phases) == 1:
            phases = phases * n_modes
    m = MultiModeParams(
        n_modes=n_modes,
        rabi_single=cfg.getfloat("oracle", "rabi_single", 0.03),
        phases=phases,
        kerr_single=cfg.getfloat("oracle", "kerr_single", 0.05),
        delta=cfg.getfloat("oracle", "delta", 0.08),
        gamma=cfg.getfloat("oracle", "gamma", 0.15),
        dim_per_mode=cfg.getint("oracle", "dim_per_mode", 4),
    )
    grid = np.linspace(
        cfg.getfloat("grid", "min", -1.5),
        cfg.getfloat("grid", "max", 1.5),
        cfg.getint("grid", "points", 241),
    )
    occ_oracle, spec_oracle = _stage(
        "multi-mode", oracle_multimode_steady, m, grid
    )
    coll = collective_reduce(m)
    liouv = _stage("collective generator", build_liouvillian, coll)
    rho = _stage("collective steady state", steady_state, liouv)
    from .fock import annihilation, expectation

    a = annihilation(coll.fock_dim)
    occ_coll = float(np.real(expectation(a.conj().T @ a, rho)))
    spec_coll = _stage("collective spectrum", incoherent_spectrum, liouv, rho, grid)

    occ_scale = max(abs(occ_oracle), abs(occ_coll), 1e-300)
    occ_dev = abs(occ_oracle - occ_coll) / occ_scale
    peak = max(spec_oracle.values.max(), spec_coll.values.max(), 1e-300)
    spec_dev = float(np.abs(spec_oracle.values - spec_coll.values).max() / peak)

    fmt = cfg.get("io", "format", "csv")
    meta = [
        "# kerrspec oracle comparison",
        f"# n_modes={m.n_modes} dim_per_mode={m.dim_per_mode} rabi_single={m.rabi_single!r}",
        f"# phases={','.join(repr(p) for p in m.phases)}",
        f"# collective: rabi={coll.rabi!r} kerr={coll.kerr!r} fock_dim={coll.fock_dim}",
        f"# occupation_multimode = {occ_oracle!r}",
        f"# occupation_collective = {occ_coll!r}",
        f"# occupation_rel_deviation = {occ_dev!r}",
        f"# spectrum_max_rel_deviation = {spec_dev!r}",
    ]
    body = _table(
        [grid, spec_oracle.values, spec_coll.values],
        ["delta_meV", "S_multimode", "S_collective"],
        fmt,
    )
    path = _output_path(cfg, args, "oracle.csv")
    _atomic_write(path, "\n".join(meta) + "\n" + body)
    print(
        f"wrote {path} (occupation deviation {occ_dev:.3e}, spectrum deviation {spec_dev:.3e})"
    )
    return EXIT_OK


def cmd_convergence(cfg, args):
    params = _collective_from_config(cfg)
    tol = cfg.getfloat("convergence", "tol", 1e-6)
    d_star, report = converge_truncation(params, tol)
    lines = ["[convergence]"]
    lines.append(f"converged_dim = {d_star}")
    lines.append(f"tol = {tol!r}")
    lines.append("")
    lines.append("# D, occupation, tail_population")
    for d, occ, tail in zip(report.dims, report.occupations, report.tails):
        lines.append(f"{d},{occ!r},{tail!r}")
    path = _output_path(cfg, args, "convergence.txt")
    _atomic_write(path, "\n".join(lines) + "\n")
    print(f"wrote {path} (D* = {d_star})")
    return EXIT_OK


def main(argv=None):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="key=value config file with sections")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config entry (repeatable)",
    )
    common.add_argument("--output", "-o", help="output file (overrides [io] output)")
    parser = argparse.ArgumentParser(
        prog="kerrspec",
        description="Driven Kerr-mode fluorescence spectra, fits and superfluorescence tests",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "fit", "oracle", "convergence"):
        sub.add_parser(name, parents=[common])
    sf = sub.add_parser("sf-test", parents=[common])
    sf.add_argument("reports", nargs="*", help="fit report files (two or more)")

    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "fit": cmd_fit,
        "sf-test": cmd_sf_test,
        "oracle": cmd_oracle,
        "convergence": cmd_convergence,
    }
    try:
        cfg = _Config(args.config, args.set)
        return handlers[args.command](cfg, args)
    except ScaleGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCALE_GUARD
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
