import numpy as np
import pytest

import kerrspec as ks
from kerrspec.cli import main
from kerrspec.fitting import (
    FitConfig,
    assemble_params,
    fit,
    format_fit_report,
    load_spectrum,
    model_spectrum,
    read_fit_report,
)
from conftest import POWER_SERIES


def write_config(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


SIM_CONFIG = """
[model]
delta = 0.1
rabi = 0.16
kerr = 0.45
gamma = 0.22
fock_dim = 16

[medium]
f = 1.0
a_max = 0.9
mode = thin_film_proportional
background = 0.0
scale = 1.0

[detector]
gamma_f = 0.0107

[grid]
min = -1.5
max = 1.5
points = 301

[io]
output = {out}
"""


def test_simulate_writes_aligned_columns(tmp_path):
    out = tmp_path / "sim.csv"
    cfg = write_config(tmp_path, "sim.ini", SIM_CONFIG.format(out=out))
    assert main(["simulate", "--config", cfg]) == 0
    rows = [
        line for line in out.read_text().splitlines() if line and not line.startswith("#")
    ]
    assert len(rows) == 301
    assert len(rows[0].split(",")) == 4


def test_simulate_output_roundtrips_exactly(tmp_path):
    out = tmp_path / "sim.csv"
    cfg = write_config(tmp_path, "sim.ini", SIM_CONFIG.format(out=out))
    assert main(["simulate", "--config", cfg]) == 0
    internal = load_spectrum(out, columns=(0, 1))
    absorb = load_spectrum(out, columns=(0, 2))
    output = load_spectrum(out, columns=(0, 3))

    p = ks.CollectiveModelParams(delta=0.1, rabi=0.16, kerr=0.45, gamma=0.22, fock_dim=16)
    m = ks.MediumParams(f=1.0, delta_res=0.1, gamma=0.22, a_max=0.9)
    grid = np.linspace(-1.5, 1.5, 301)
    ref_int, ref_abs, ref_out = ks.simulate_spectra(p, m, 0.0107, grid)
    # full-precision repr columns reproduce the arrays bit for bit
    assert np.array_equal(internal.values, ref_int.values)
    assert np.array_equal(absorb.values, ref_abs.values)
    assert np.array_equal(output.values, ref_out.values)
    assert np.array_equal(internal.delta_grid, grid)


def test_simulate_dark_input_gives_background(tmp_path):
    out = tmp_path / "dark.csv"
    cfg = write_config(tmp_path, "dark.ini", SIM_CONFIG.format(out=out))
    code = main(
        ["simulate", "--config", cfg, "--set", "model.rabi=0",
         "--set", "medium.background=0.125"]
    )
    assert code == 0
    s_int = load_spectrum(out, columns=(0, 1))
    s_out = load_spectrum(out, columns=(0, 3))
    assert np.all(s_int.values == 0.0)
    assert np.all(s_out.values == 0.125)


def test_simulate_linear_model_is_detector_line(tmp_path):
    out = tmp_path / "lin.csv"
    cfg = write_config(tmp_path, "lin.ini", SIM_CONFIG.format(out=out))
    assert main(["simulate", "--config", cfg, "--set", "model.kerr=0"]) == 0
    s = load_spectrum(out, columns=(0, 1))
    grid = s.delta_grid
    alpha2 = abs(-0.16 / (0.1 - 0.11j)) ** 2
    expected = alpha2 * ks.lorentzian(grid, 0.0107)
    assert np.abs(s.values - expected).max() < 1e-6 * expected.max()


def test_cli_validation_exit_code(tmp_path):
    cfg = write_config(tmp_path, "bad.ini", "[model]\ndelta = 0.1\n")
    assert main(["simulate", "--config", cfg]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.ini")]) == 2


def test_cli_scale_guard_exit_code(tmp_path):
    cfg = write_config(
        tmp_path,
        "oracle.ini",
        "[oracle]\nn_modes = 7\ndim_per_mode = 4\ngamma = 0.15\n"
        f"[io]\noutput = {tmp_path / 'o.csv'}\n",
    )
    assert main(["oracle", "--config", cfg]) == 4


def test_cli_oracle_random_phases_need_seed(tmp_path):
    cfg = write_config(
        tmp_path,
        "oracle.ini",
        "[oracle]\nn_modes = 2\nphases = random\ngamma = 0.15\n"
        f"[io]\noutput = {tmp_path / 'o.csv'}\n",
    )
    assert main(["oracle", "--config", cfg]) == 2
    assert main(["oracle", "--config", cfg, "--set", "oracle.seed=7"]) == 0


def test_cli_oracle_comparison_file(tmp_path):
    out = tmp_path / "oracle.csv"
    cfg = write_config(
        tmp_path,
        "oracle.ini",
        "[oracle]\n"
        "n_modes = 2\nrabi_single = 0.03\nphases = 0\nkerr_single = 0.05\n"
        "delta = 0.08\ngamma = 0.15\ndim_per_mode = 5\n"
        "[grid]\nmin = -1.2\nmax = 1.2\npoints = 61\n"
        f"[io]\noutput = {out}\n",
    )
    assert main(["oracle", "--config", cfg]) == 0
    text = out.read_text()
    dev = float(
        next(l for l in text.splitlines() if "occupation_rel_deviation" in l).split("=")[1]
    )
    assert dev < 1e-6
    spec_dev = float(
        next(l for l in text.splitlines() if "spectrum_max_rel_deviation" in l).split("=")[1]
    )
    assert spec_dev < 1e-4


def test_cli_convergence_report(tmp_path):
    out = tmp_path / "conv.txt"
    cfg = write_config(
        tmp_path,
        "conv.ini",
        "[model]\ndelta = 0.1\nrabi = 0.16\nkerr = 0.45\ngamma = 0.22\n"
        "[convergence]\ntol = 1e-6\n"
        f"[io]\noutput = {out}\n",
    )
    assert main(["convergence", "--config", cfg]) == 0
    assert "converged_dim = 16" in out.read_text()


def _echo_report(tmp_path, idx, power, rabi, kerr):
    vals = dict(rabi=rabi, kerr=kerr, delta=0.08, gamma=0.2, f=1.0, scale=1.0, background=0.01)
    grid = np.linspace(-1.0, 1.0, 61)
    coll, med = assemble_params(vals, fock_dim=12)
    spec = model_spectrum(coll, med, 0.0107, grid)
    data = ks.SpectrumSeries(grid, spec.values, "experimental")
    config = FitConfig(free_params=(), initial={}, fixed=vals, fock_dim=12)
    res = fit(data, config, laser_power=power)
    path = tmp_path / f"report_{idx}.txt"
    path.write_text(format_fit_report(res))
    return str(path)


def test_cli_sf_test_reference_series(tmp_path):
    paths = [
        _echo_report(tmp_path, i, p, r, k) for i, (p, r, k) in enumerate(POWER_SERIES)
    ]
    out = tmp_path / "sf.txt"
    # scrambled input order; the command sorts by power
    assert main(["sf-test", paths[2], paths[0], paths[1], "--output", str(out)]) == 0
    report = read_fit_report(out)
    assert report["sf-test"]["overall_verdict"] == "superfluorescent"
    assert float(report["pair_1"]["lhs"]) == pytest.approx(1.852, abs=1e-3)
    assert float(report["pair_1"]["kerr_ratio"]) == pytest.approx(2.050, abs=1e-3)
    assert float(report["pair_2"]["lhs"]) == pytest.approx(2.202, abs=1e-3)
    assert float(report["pair_2"]["kerr_ratio"]) == pytest.approx(2.195, abs=1e-3)


def test_cli_sf_test_equal_powers_random_phase(tmp_path):
    a = _echo_report(tmp_path, 0, 100.0, 0.05, 0.1)
    b = _echo_report(tmp_path, 1, 100.0, 0.05, 0.1)
    out = tmp_path / "sf.txt"
    assert main(["sf-test", a, b, "--output", str(out)]) == 0
    assert read_fit_report(out)["sf-test"]["overall_verdict"] == "random_phase"


def test_cli_sf_test_sqrt_power_scaling_is_random_phase(tmp_path):
    # drive amplitude growing like sqrt(power) keeps the ratio at one
    paths = [
        _echo_report(tmp_path, 0, 100.0, 0.05, 0.1),
        _echo_report(tmp_path, 1, 225.0, 0.075, 0.1),
    ]
    out = tmp_path / "sf.txt"
    assert main(["sf-test", *paths, "--output", str(out)]) == 0
    report = read_fit_report(out)
    assert float(report["pair_1"]["lhs"]) == pytest.approx(1.0, abs=1e-12)
    assert report["sf-test"]["overall_verdict"] == "random_phase"


def test_cli_sf_test_needs_two_reports(tmp_path):
    a = _echo_report(tmp_path, 0, 100.0, 0.05, 0.1)
    assert main(["sf-test", a]) == 2


def test_cli_fit_command(tmp_path):
    vals = dict(rabi=0.16, kerr=0.45, delta=0.09, gamma=0.22, f=0.9, scale=1.0, background=0.02)
    grid = np.linspace(-1.0, 1.0, 241)
    coll, med = assemble_params(vals, fock_dim=16)
    spec = model_spectrum(coll, med, 0.0107, grid)
    data_path = tmp_path / "data.csv"
    data_path.write_text(
        "\n".join(f"{float(d)!r},{float(s)!r}" for d, s in zip(grid, spec.values)) + "\n"
    )
    out = tmp_path / "fit.txt"
    cfg = write_config(
        tmp_path,
        "fit.ini",
        "[fit]\n"
        f"data = {data_path}\n"
        "free = rabi\n"
        "initial_rabi = 0.14\n"
        "fixed_kerr = 0.45\nfixed_delta = 0.09\nfixed_gamma = 0.22\n"
        "fixed_f = 0.9\nfixed_scale = 1.0\nfixed_background = 0.02\n"
        "optimizer = levenberg_marquardt\n"
        "fock_dim = 16\n"
        "laser_power = 310\n"
        f"[io]\noutput = {out}\n",
    )
    assert main(["fit", "--config", cfg]) == 0
    report = read_fit_report(out)
    assert float(report["parameters"]["rabi"]) == pytest.approx(0.16, rel=1e-4)
    assert report["fit"]["converged"] == "True"


def test_cli_fit_uses_fixed_defaults(tmp_path):
    # unspecified fixed parameters fall back to documented defaults
    vals = dict(rabi=0.16, kerr=0.45, delta=0.09, gamma=0.22, f=0.9, scale=1.0, background=0.02)
    grid = np.linspace(-1.0, 1.0, 101)
    coll, med = assemble_params(vals, fock_dim=12)
    spec = model_spectrum(coll, med, 0.0107, grid)
    data_path = tmp_path / "data.csv"
    data_path.write_text(
        "\n".join(f"{float(d)!r},{float(s)!r}" for d, s in zip(grid, spec.values)) + "\n"
    )
    cfg = write_config(
        tmp_path,
        "fit.ini",
        f"[fit]\ndata = {data_path}\nfree = \nfixed_gamma = 0.22\n"
        "fock_dim = 12\n"
        f"[io]\noutput = {tmp_path / 'fit.txt'}\n",
    )
    assert main(["fit", "--config", cfg]) == 0


def test_no_temp_files_left(tmp_path):
    out = tmp_path / "sim.csv"
    cfg = write_config(tmp_path, "sim.ini", SIM_CONFIG.format(out=out))
    assert main(["simulate", "--config", cfg]) == 0
    stray = [p for p in tmp_path.iterdir() if p.name.startswith(".kerrspec-")]
    assert stray == []
