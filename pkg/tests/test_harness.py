"""Experiment configuration, reports, exit codes and scaling fits."""

from __future__ import annotations

import json

import jsonschema
import numpy as np
import pytest

from reductionkit.cli import main
from reductionkit.exceptions import ConfigError
from reductionkit.fitting import loglog_fit, semilog_fit
from reductionkit.harness import (
    EXIT_ASSERTION,
    EXIT_CONFIG,
    EXIT_OK,
    EXPERIMENTS,
    SUMMARY_SCHEMA,
    Column,
    csv_text,
    format_value,
    parse_config,
    run,
    summary_document,
)

HUBBARD = """
[hubbard-exchange]
t = 1.0

[sweep]
name = U
values = 100, 1000, 10000
"""


# Configuration ----------------------------------------------------------------------


def test_defaults_and_overrides():
    config = parse_config("", "hubbard-exchange", seed=3, workers=2)
    assert config.params == {"t": 1.0, "U": 100.0}
    assert config.seed == 3 and config.workers == 2
    assert config.tolerances == {"gap_tol": 1e-10, "slope_tol": 0.02}
    swept = parse_config(HUBBARD, "hubbard-exchange")
    assert swept.sweep_name == "U" and swept.sweep_values == (100.0, 1000.0, 10000.0)


@pytest.mark.parametrize(
    "text",
    [
        "[hubbard-exchange]\nbogus = 1\n",
        "[hubbard-exchange]\nt = one\n",
        "[hubbard-exchange]\nt = nan\n",
        "[kp-band]\nwell = 8\n",
        "[run]\ncolour = red\n",
        "[run]\nworkers = 0\n",
        "[sweep]\nname = t\nvalues = 1 2 3\n",
        "[sweep]\nname = U\nvalues = 300 200 100\n",
        "[tolerances]\nunknown_tol = 1\n",
        "[hubbard-exchange]\nU = -1\n",
        "no section header\n",
    ],
)
def test_bad_configurations_are_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text, "hubbard-exchange")


def test_unknown_experiment():
    with pytest.raises(ConfigError):
        parse_config("", "no-such-experiment")


def test_every_experiment_accepts_its_defaults():
    for kind in EXPERIMENTS:
        assert parse_config("", kind).kind == kind


# Reports ----------------------------------------------------------------------------


def test_format_value():
    assert format_value(True) == "true"
    assert format_value(np.int64(7)) == "7"
    assert format_value(1 / 3) == "0.333333333333"
    assert format_value(np.float64(2.5e-13)) == "2.5e-13"
    assert format_value("Y") == "Y"


def test_csv_headers_carry_units_and_empty_tables_keep_them():
    columns = [Column("U", "energy"), Column("hit", "1")]
    assert csv_text(columns, []) == "U [energy],hit [1]\n"
    assert csv_text(columns, [(100.0, True)]).splitlines()[1] == "100,true"
    with pytest.raises(ValueError):
        csv_text(columns, [(1.0,)])


def test_run_writes_deterministic_valid_reports(tmp_path):
    contents = []
    for name in ("a", "b"):
        config = parse_config(HUBBARD, "hubbard-exchange", out=str(tmp_path / name))
        status, result, messages = run(config)
        assert status == EXIT_OK and not messages
        csv_bytes = (tmp_path / name / "hubbard-exchange.csv").read_bytes()
        json_bytes = (tmp_path / name / "hubbard-exchange.json").read_bytes()
        contents.append((csv_bytes, json_bytes))
        doc = json.loads(json_bytes)
        jsonschema.validate(doc, SUMMARY_SCHEMA)
        assert doc["passed"] and doc["fits"]["gap"]["npoints"] == 3
    assert contents[0] == contents[1]
    assert contents[0][0].decode().startswith("U [energy],exact_gap [energy]")


def test_parallel_sweep_keeps_order():
    serial = run(parse_config(HUBBARD, "hubbard-exchange"), write=False)[1]
    parallel = run(parse_config(HUBBARD, "hubbard-exchange", workers=3), write=False)[1]
    assert parallel.rows == serial.rows
    assert [r[0] for r in parallel.rows] == [100.0, 1000.0, 10000.0]


def test_summary_document_is_schema_checked():
    config = parse_config(HUBBARD, "hubbard-exchange")
    _, result, _ = run(config, write=False)
    doc = summary_document(config, result)
    doc["unexpected"] = 1
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(doc, SUMMARY_SCHEMA)


# Exit codes -------------------------------------------------------------------------


def test_failed_assertion_exits_with_one():
    text = HUBBARD.replace("100, 1000, 10000", "1, 2, 3")
    status, result, messages = run(parse_config(text, "hubbard-exchange"), write=False)
    # far from the strong-coupling regime the gap does not fall like 1 / U
    assert status == EXIT_ASSERTION and not result.passed
    assert any(m.startswith("FAIL gap slope") for m in messages)


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.ini"
    good.write_text(HUBBARD)
    assert main(["hubbard-exchange", "--config", str(good), "--out", str(tmp_path / "out")]) == EXIT_OK
    assert (tmp_path / "out" / "hubbard-exchange.json").exists()
    assert "PASS hubbard-exchange" in capsys.readouterr().out
    bad = tmp_path / "bad.ini"
    bad.write_text("[hubbard-exchange]\nbogus = 1\n")
    assert main(["hubbard-exchange", "--config", str(bad)]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err
    assert main(["hubbard-exchange", "--config", str(tmp_path / "missing.ini")]) == EXIT_CONFIG
    assert main(["no-such-experiment"]) == EXIT_CONFIG


def test_library_precondition_maps_to_config_error():
    # B / lambda = 5 is outside the perturbative regime the gadget compiler accepts
    config = parse_config("[gadget-verify]\nbfield = 5\n", "gadget-verify")
    status, result, messages = run(config, write=False)
    assert status == EXIT_CONFIG and result is None and messages


# Fits -------------------------------------------------------------------------------


def test_loglog_fit_recovers_power_law_and_drops_floor_points():
    x = np.array([1.0, 10.0, 100.0, 1000.0])
    fit = loglog_fit(zip(x, 3.0 * x**-2))
    assert fit.slope == pytest.approx(-2.0) and fit.r_squared == pytest.approx(1.0)
    floored = loglog_fit(zip(x, [1.0, 1e-2, 1e-4, 1e-16]))
    assert floored.excluded == 1 and floored.npoints == 3
    with pytest.raises(ValueError):
        loglog_fit([(1.0, 1.0), (2.0, 1e-20), (3.0, 1e-20)])
    with pytest.raises(ValueError):
        loglog_fit([(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)])


def test_semilog_fit_recovers_rate():
    x = np.linspace(5, 12, 8)
    fit = semilog_fit(zip(x, 2.0 * np.exp(-0.5 * x)))
    assert fit.slope == pytest.approx(-0.5)
    assert fit.intercept == pytest.approx(np.log(2.0))
