import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from shadowtail.cli import main
from shadowtail.compare import ParetoSpec, absorbing_barrier_mean, soft_to_truncated_ratio, truncated_pareto_moment
from shadowtail.dual import DualTransform, phi
from shadowtail.gpd import empirical_mean_excess
from shadowtail.pipeline import load_sample, model_from_report, report_schema
from shadowtail.shadow import ShadowModel, expected_shortfall, mean_excess, shadow_mean, shadow_quantile

DATA = Path(__file__).parent / "data"
FIXTURE = DATA / "fixture_1000.csv"
GOLDEN = DATA / "golden_fit_report.json"
BOUNDS = ["--lower-bound", "1", "--upper-bound", "1e4"]


def run(argv, capsys):
    rc = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return rc, out, err


def without_timestamp(text):
    return [line for line in text.splitlines() if '"timestamp"' not in line]


def csv_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def fit_report(tmp_path, capsys):
    path = tmp_path / "fit.json"
    rc, _, _ = run(["fit", "--input", FIXTURE, *BOUNDS, "--output", path], capsys)
    assert rc == 0
    return path


# -- exit codes ---------------------------------------------------------------------------

def test_missing_upper_bound_is_usage_error(capsys):
    rc, _, err = run(["fit", "--input", FIXTURE, "--lower-bound", "1"], capsys)
    assert rc == 2
    assert "--upper-bound" in err


def test_unknown_command_and_no_command(capsys):
    assert run(["nope"], capsys)[0] == 2
    assert run([], capsys)[0] == 2


def test_threshold_flags_exclusive(capsys):
    rc, _, _ = run(["fit", "--input", FIXTURE, *BOUNDS, "--threshold", "5", "--threshold-quantile", "0.9"], capsys)
    assert rc == 2


def test_bound_violation_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("loss\n2\n3\n10000\n")
    rc, _, err = run(["fit", "--input", p, *BOUNDS], capsys)
    assert rc == 1
    assert "rows 3" in err


def test_parse_error_names_line(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("loss\n2\nthree\n")
    rc, _, err = run(["fit", "--input", p, *BOUNDS], capsys)
    assert rc == 1
    assert "line 3" in err


def test_missing_file(capsys):
    rc, _, err = run(["fit", "--input", DATA / "absent.csv", *BOUNDS], capsys)
    assert rc == 1 and "error" in err


def test_too_few_exceedances_exit_code(capsys):
    rc, _, err = run(["fit", "--input", FIXTURE, *BOUNDS, "--threshold-quantile", "0.99"], capsys)
    assert rc == 1 and "exceedances" in err


def test_bad_levels_are_usage_errors(capsys):
    assert run(["report", "--input", FIXTURE, *BOUNDS, "--var-levels", "0.95,1.2"], capsys)[0] == 2
    assert run(["report", "--input", FIXTURE, *BOUNDS, "--es-levels", "0"], capsys)[0] == 2


def test_workers_must_be_positive(capsys):
    assert run(["simulate", "--model", "alpha=1,sigma=1,L=0,H=10", "--n", "5", "--seed", "1", "--workers", "0"], capsys)[0] == 2


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "shadowtail", "compare", "--alpha", "0.7", "--sigma", "1", "--lower-bound", "0"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2


# -- fit and golden file ---------------------------------------------------------------------

def test_golden_fit_report(monkeypatch, capsys):
    monkeypatch.chdir(DATA)
    rc, out, _ = run(["fit", "--input", "fixture_1000.csv", *BOUNDS, "--threshold-quantile", "0.95", "--seed", "7"], capsys)
    assert rc == 0
    assert without_timestamp(out) == without_timestamp(GOLDEN.read_text())


def test_fit_exceedances_at_default_quantile(capsys):
    rc, out, _ = run(["fit", "--input", FIXTURE, *BOUNDS], capsys)
    report = json.loads(out)
    assert report["input"]["n_exceedances"] == 50
    assert report["input"]["threshold_quantile"] == 0.95
    jsonschema.validate(report, report_schema())


def test_fit_with_explicit_threshold(capsys):
    rc, out, _ = run(["fit", "--input", FIXTURE, *BOUNDS, "--threshold", "5"], capsys)
    report = json.loads(out)
    y = load_sample(FIXTURE).values
    assert report["input"]["threshold"] == 5.0
    assert report["input"]["threshold_quantile"] is None
    assert report["input"]["n_exceedances"] == int(np.count_nonzero(y > 5.0))


def test_fit_jsonl_input_same_fit(tmp_path, capsys):
    y = load_sample(FIXTURE).values
    p = tmp_path / "x.jsonl"
    p.write_text("".join("%.17g\n" % v for v in y))
    a = json.loads(run(["fit", "--input", FIXTURE, *BOUNDS], capsys)[1])
    b = json.loads(run(["fit", "--input", p, *BOUNDS], capsys)[1])
    assert a["fit"] == b["fit"]


def test_seed_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("SHADOW_SEED", "123")
    report = json.loads(run(["fit", "--input", FIXTURE, *BOUNDS], capsys)[1])
    assert report["provenance"]["seed"] == 123
    monkeypatch.setenv("SHADOW_SEED", "abc")
    assert run(["fit", "--input", FIXTURE, *BOUNDS], capsys)[0] == 2


def test_light_tail_report_has_warning(tmp_path, capsys):
    p = tmp_path / "flat.csv"
    p.write_text("".join("%.17g\n" % v for v in np.linspace(1.0, 2.0, 400)))
    rc, out, err = run(["fit", "--input", p, "--lower-bound", "0", "--upper-bound", "1e6", "--threshold", "1"], capsys)
    report = json.loads(out)
    assert rc == 0
    assert report["model"] is None and report["measures"] is None
    assert report["warnings"] and "power law" in report["warnings"][0]
    assert "warning" in err
    jsonschema.validate(report, report_schema())


# -- report ---------------------------------------------------------------------------------

def test_report_pass_throughs(fit_report, capsys):
    rc, out, _ = run(["report", "--report", fit_report, "--var-levels", "0.95", "--es-levels", "0.95"], capsys)
    assert rc == 0
    report = json.loads(out)
    m = model_from_report(report)
    var = shadow_quantile(m, 0.95)
    assert report["measures"]["var"] == [{"p": 0.95, "value": var}]
    assert report["measures"]["es"][0]["value"] == pytest.approx(var + mean_excess(m, var), rel=1e-12)
    assert report["measures"]["es"][0]["value"] == expected_shortfall(m, 0.95)
    assert report["measures"]["shadow_mean"] == shadow_mean(m)
    jsonschema.validate(report, report_schema())


def test_report_h_grid_monotone(fit_report, capsys):
    grid = "1e3,3e3,1e4,1e5,1e7"
    rc, out, _ = run(["report", "--report", fit_report, "--h-grid", grid], capsys)
    rows = json.loads(out)["sensitivity"]
    assert [r["H"] for r in rows] == [1e3, 3e3, 1e4, 1e5, 1e7]
    values = [r["shadow_mean"] for r in rows]
    assert all(a < b for a, b in zip(values, values[1:]))


def test_report_from_input_matches_report_from_fit(fit_report, capsys):
    a = json.loads(run(["report", "--report", fit_report], capsys)[1])
    b = json.loads(run(["report", "--input", FIXTURE, *BOUNDS], capsys)[1])
    assert a["measures"] == b["measures"]


def test_report_bootstrap_ci(capsys):
    argv = ["report", "--input", FIXTURE, *BOUNDS, "--bootstrap", "100", "--seed", "3"]
    rc, out, _ = run(argv, capsys)
    report = json.loads(out)
    ci = report["measures"]["shadow_mean_ci"]
    assert ci["lower"] <= report["measures"]["shadow_mean"] <= ci["upper"]
    assert ci["replicates"] == 100 and ci["seed"] == 3
    jsonschema.validate(report, report_schema())


def test_report_usage_errors(fit_report, capsys):
    assert run(["report"], capsys)[0] == 2
    assert run(["report", "--report", fit_report, "--input", FIXTURE], capsys)[0] == 2
    assert run(["report", "--report", fit_report, "--bootstrap", "100"], capsys)[0] == 2


# -- compare ----------------------------------------------------------------------------------

def test_compare_rows(capsys):
    rc, out, _ = run(["compare", "--alpha", "0.7", "--sigma", "1", "--lower-bound", "0", "--upper-bound", "100"], capsys)
    rows = {r["series"]: float(r["value"]) for r in csv_rows(out)}
    spec = ParetoSpec(0.7, 1.0, 0.0, 100.0)
    assert rows["truncated_mean"] == truncated_pareto_moment(spec, 1.0)
    assert rows["absorbing_barrier_mean"] == absorbing_barrier_mean(spec)
    assert rows["shadow_mean"] == shadow_mean(ShadowModel(0.7, 1.0, 0.0, 100.0, 0.0))
    assert rows["ratio"] == soft_to_truncated_ratio(0.7, 1.0, 0.0, 100.0)
    assert rows["ratio"] < 1 and rows["truncated_mean"] <= rows["absorbing_barrier_mean"]


def test_compare_h_curve(capsys):
    rc, out, _ = run(["compare", "--alpha", "0.7", "--sigma", "1", "--lower-bound", "0",
                      "--h-curve", "1e1,1e2,1e3,1e4,1e5,1e6"], capsys)
    ratios = [(float(r["H"]), float(r["value"])) for r in csv_rows(out) if r["series"] == "ratio"]
    assert [h for h, _ in ratios] == [1e1, 1e2, 1e3, 1e4, 1e5, 1e6]
    assert all(0 < r < 1 for _, r in ratios)


def test_compare_large_h_ratio(capsys):
    rc, out, _ = run(["compare", "--alpha", "2", "--sigma", "1", "--lower-bound", "0", "--upper-bound", "1e10"], capsys)
    ratio = [float(r["value"]) for r in csv_rows(out) if r["series"] == "ratio"][0]
    assert abs(ratio - 1.0) <= 1e-3


def test_compare_domain_error(capsys):
    rc, _, err = run(["compare", "--alpha", "-1", "--sigma", "1", "--lower-bound", "0", "--upper-bound", "10"], capsys)
    assert rc == 1


# -- simulate ----------------------------------------------------------------------------------

SIM = ["simulate", "--model", "alpha=0.5,sigma=1,L=1,H=1000", "--n", "2000"]


def test_simulate_needs_seed(monkeypatch, capsys):
    monkeypatch.delenv("SHADOW_SEED", raising=False)
    assert run(SIM, capsys)[0] == 2


def test_simulate_draws_bounded_and_exact(capsys):
    rc, out, _ = run([*SIM, "--seed", "4"], capsys)
    y = np.array([float(v) for v in out.split()])
    assert y.size == 2000 and y.max() < 1000.0 and y.min() > 1.0
    # seventeen significant digits round-trip every draw
    from shadowtail.simulate import SimConfig, sample_shadow_y
    assert np.array_equal(y, sample_shadow_y(ShadowModel(0.5, 1.0, 1.0, 1000.0, 1.0), SimConfig(4, 2000)))


def test_simulate_censoring(capsys):
    rc, out, _ = run([*SIM, "--seed", "4", "--censor-at", "10"], capsys)
    y = np.array([float(v) for v in out.split()])
    assert y.max() <= 10.0 and y.size < 2000


def test_simulate_apparent_tail(capsys):
    argv = ["simulate", "--model", "alpha=0.8,sigma=1,L=1,H=1e6", "--n", "100000", "--seed", "0",
            "--censor-at", "1e4", "--experiment", "apparent-tail"]
    rc, out, _ = run(argv, capsys)
    summary = json.loads(out)
    assert summary["naive_xi"] >= 1.0 and summary["naive_mean_finite"] is False
    assert summary["xi_gap_in_se"] <= 2.0
    assert summary["shadow_mean"] < 1e6


def test_simulate_apparent_tail_needs_censoring(capsys):
    argv = ["simulate", "--model", "alpha=0.8,sigma=1,L=1,H=1e6", "--n", "1000", "--seed", "0",
            "--experiment", "apparent-tail"]
    assert run(argv, capsys)[0] == 1


def test_simulate_bad_model_spec(capsys):
    assert run(["simulate", "--model", "alpha=1,sigma=1,L=0", "--n", "5", "--seed", "1"], capsys)[0] == 2
    assert run(["simulate", "--model", "alpha=1,sigma=1,L=0,H=5,k=2", "--n", "5", "--seed", "1"], capsys)[0] == 2


# -- diagnose -------------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def diagnose_rows():
    buf = io.StringIO()
    old = sys.stdout
    sys.stdout = buf
    try:
        assert main(["diagnose", "--input", str(FIXTURE), *BOUNDS]) == 0
    finally:
        sys.stdout = old
    return csv_rows(buf.getvalue())


def series(rows, space, tag):
    return [(float(r["threshold_or_y"]), float(r["value"])) for r in rows if r["space"] == space and r["series_tag"] == tag]


def test_diagnose_mean_excess_pass_through(diagnose_rows):
    y = load_sample(FIXTURE).values
    thresholds = np.sort(y)[y.size // 2 :: 5]
    assert series(diagnose_rows, "Y", "mean_excess") == empirical_mean_excess(y, thresholds)
    t = DualTransform(1.0, 1e4)
    assert series(diagnose_rows, "Z", "mean_excess") == empirical_mean_excess(phi(t, y), phi(t, thresholds))


def test_diagnose_survival_contrast(diagnose_rows):
    shadow = series(diagnose_rows, "Y", "shadow_survival")
    naive = series(diagnose_rows, "Y", "naive_survival")
    assert shadow and naive
    at_h = [s for v, s in shadow if v >= 1e4]
    assert at_h and all(s == 0.0 for s in at_h)
    assert all(s > 0.0 for v, s in shadow if v < 1e4)
    assert all(s > 0.0 for v, s in naive if v >= 1e4)
    values = [s for _, s in shadow]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_diagnose_empirical_survival(diagnose_rows):
    y = load_sample(FIXTURE).values
    for v, s in series(diagnose_rows, "Y", "empirical_survival")[::20]:
        assert s == np.count_nonzero(y > v) / y.size


def test_diagnose_empty_input(tmp_path, capsys):
    p = tmp_path / "empty.csv"
    p.write_text("loss\n")
    rc, _, err = run(["diagnose", "--input", p, *BOUNDS], capsys)
    assert rc == 1 and "no observations" in err


def test_diagnose_small_sample_skips_survival(tmp_path, capsys):
    p = tmp_path / "small.csv"
    p.write_text("".join(f"{v}\n" for v in range(2, 40)))
    rc, out, err = run(["diagnose", "--input", p, *BOUNDS], capsys)
    assert rc == 0 and "skipped" in err
    assert {r["series_tag"] for r in csv_rows(out)} == {"mean_excess"}


# -- reproducibility ---------------------------------------------------------------------------------

REPRO = [
    ["fit", "--input", FIXTURE, *BOUNDS, "--seed", "1"],
    ["report", "--input", FIXTURE, *BOUNDS, "--h-grid", "1e3,1e5", "--bootstrap", "100", "--seed", "2"],
    ["compare", "--alpha", "0.7", "--sigma", "1", "--lower-bound", "0", "--h-curve", "1e2,1e4"],
    ["simulate", "--model", "alpha=0.5,sigma=1,L=1,H=1000", "--n", "200000", "--seed", "9"],
    ["simulate", "--model", "alpha=0.8,sigma=1,L=1,H=1e6", "--n", "100000", "--seed", "1",
     "--censor-at", "1e4", "--experiment", "apparent-tail"],
    ["diagnose", "--input", FIXTURE, *BOUNDS],
]


@pytest.mark.parametrize("argv", REPRO, ids=lambda a: a[0] + ("-" + a[-1] if a[0] == "simulate" else ""))
def test_byte_identical_reruns(argv, monkeypatch, capsys):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    first = run(argv, capsys)
    second = run(argv, capsys)
    assert first[0] == 0
    assert first[1] == second[1]
    if "--workers" not in argv and argv[0] in ("report", "simulate"):
        parallel = run([*argv, "--workers", "4"], capsys)
        assert parallel[1] == first[1]
