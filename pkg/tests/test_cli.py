"""Model files and the command-line interface."""
import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mshaz import ConfigurationError
from mshaz.cli import EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, EXIT_VERIFY, main
from mshaz.modelfile import json_schema, load_model, parse_model

MODELS = Path(__file__).resolve().parent.parent / "models"


def read_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], np.array(rows[1:], dtype=float)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


class TestModelFile:
    @pytest.mark.parametrize("path", sorted(MODELS.glob("*.yaml")), ids=lambda p: p.name)
    def test_bundled_models_validate(self, path):
        model = load_model(path)
        assert model.schema_version == 1

    def test_unknown_field_names_path(self):
        text = "kind: system\nsystem:\n  routes:\n    - type: sequential\n      rates: [1.0]\n      colour: red\n"
        with pytest.raises(ConfigurationError, match="system.routes.0.sequential.colour"):
            parse_model(text)

    def test_bad_value_names_path(self):
        text = "kind: system\nsystem:\n  routes:\n    - type: sequential\n      rates: [1.0, -2.0]\n"
        with pytest.raises(ConfigurationError, match="rates.1"):
            parse_model(text)

    def test_kind_section_mismatch(self):
        with pytest.raises(ConfigurationError, match="needs exactly the 'cascade' section"):
            parse_model("kind: cascade\nsystem:\n  routes: [{type: sequential, rates: [1]}]\n")

    def test_json_accepted(self):
        data = {"kind": "lifetime-risk", "lifetime_risk": {"mu": 0.1, "divisions": 1, "steps": 1, "cells": 1}}
        model = parse_model(json.dumps(data), ".json")
        assert model.lifetime_risk.mu == 0.1

    def test_unparseable(self):
        with pytest.raises(ConfigurationError):
            parse_model("kind: [unclosed")

    def test_schema_published(self):
        schema = json_schema()
        assert "kind" in schema["properties"]


class TestEval:
    def test_exponential(self, capsys):
        assert main(["eval", "--model", str(MODELS / "exponential.yaml")]) == EXIT_OK
        out = capsys.readouterr().out
        header, data = read_csv(out)
        assert header == ["t", "f", "F", "S", "h", "H"]
        np.testing.assert_allclose(data[:, 3], np.exp(-data[:, 0]), rtol=1e-15)
        assert "\r" not in out

    def test_moolgavkar_column(self, tmp_path):
        out = tmp_path / "curves.csv"
        assert main(["eval", "--model", str(MODELS / "moolgavkar_123.yaml"), "--out", str(out)]) == EXIT_OK
        _, data = read_csv(out.read_text(encoding="utf-8"))
        t = data[:, 0]
        np.testing.assert_allclose(data[:, 1], 3 * np.exp(-t) - 6 * np.exp(-2 * t) + 3 * np.exp(-3 * t), atol=1e-15)

    def test_overrides(self, capsys):
        assert main(["eval", "--model", str(MODELS / "exponential.yaml"), "--t-max", "2", "--points", "5"]) == EXIT_OK
        _, data = read_csv(capsys.readouterr().out)
        np.testing.assert_allclose(data[:, 0], [0, 0.5, 1.0, 1.5, 2.0])

    def test_seventeen_digits(self, capsys):
        main(["eval", "--model", str(MODELS / "exponential.yaml"), "--t-max", "1", "--points", "2"])
        last = capsys.readouterr().out.splitlines()[-1]
        assert last.split(",")[3] == format(np.exp(-1.0), ".17g")

    def test_malformed_exit_2(self, tmp_path, capsys):
        path = write(tmp_path, "bad.yaml", "kind: system\nsystem:\n  routes:\n    - type: sequential\n      rate: [1]\n")
        assert main(["eval", "--model", path]) == EXIT_INPUT
        err = capsys.readouterr().err
        assert "system.routes.0.sequential.rate" in err

    def test_missing_file(self, tmp_path, capsys):
        assert main(["eval", "--model", str(tmp_path / "nope.yaml")]) == EXIT_INPUT

    def test_bad_flags(self, capsys):
        assert main(["eval", "--model", str(MODELS / "exponential.yaml"), "--points", "1"]) == EXIT_INPUT
        assert main(["eval"]) == EXIT_INPUT

    def test_negative_density_exit_3(self, tmp_path, capsys):
        path = write(tmp_path, "neg.yaml", "kind: microenv\nmicroenv:\n  mu0: [1, 1]\n  mu1: [0.5, -2]\ngrid:\n  t_max: 3\n")
        assert main(["eval", "--model", path]) == EXIT_NUMERIC
        assert "negative density" in capsys.readouterr().err

    def test_improper_horizon_exit_3(self, tmp_path, capsys):
        path = write(tmp_path, "imp.yaml", "kind: microenv\nmicroenv:\n  mu0: [1, 1]\n  mu1: [0, 0]\ngrid:\n  t_max: 5\n")
        assert main(["eval", "--model", path]) == EXIT_NUMERIC


class TestOtherCommands:
    def test_simulate(self, capsys):
        assert main(["simulate", "--model", str(MODELS / "exponential.yaml"), "--samples", "1000"]) == EXIT_OK
        header, data = read_csv(capsys.readouterr().out)
        assert header == ["index", "t"] and data.shape == (1000, 2)
        assert np.all(data[:, 1] >= 0)

    def test_cascade_probabilities(self, capsys):
        assert main(["cascade", "--model", str(MODELS / "cascade_wildfire.yaml")]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "ordering,probability"
        probs = dict(line.split(",") for line in lines[1:])
        assert float(probs["A>B>C"]) == pytest.approx(1 / 1.02 / 1.01, rel=1e-12)
        assert sum(float(v) for v in probs.values()) == pytest.approx(1.0, abs=1e-12)

    def test_cascade_needs_cascade_kind(self, capsys):
        assert main(["cascade", "--model", str(MODELS / "exponential.yaml")]) == EXIT_INPUT

    def test_risk(self, capsys):
        assert main(["risk", "--model", str(MODELS / "lifetime_risk.yaml")]) == EXIT_OK
        header, data = read_csv(capsys.readouterr().out)
        assert header == ["exact", "approx", "rel_gap"]
        assert data[0, 1] == pytest.approx(1e8 * (1e-4) ** 3)
        assert data[0, 2] <= 1e-2


class TestVerify:
    def test_moolgavkar_passes(self, capsys):
        assert main(["verify", "--model", str(MODELS / "moolgavkar_123.yaml")]) == EXIT_OK
        out = capsys.readouterr().out
        assert "PASS route 0 closed-form vs grid convolution" in out
        assert out.rstrip().endswith("RESULT ALL PASS")

    @pytest.mark.parametrize("name", ["moolgavkar_123.yaml", "lifetime_risk.yaml", "microenv_m2.yaml"])
    def test_corrupted_coefficient_fails(self, name, capsys):
        code = main(["verify", "--model", str(MODELS / name), "--corrupt-coefficient", "1e-3"])
        out = capsys.readouterr().out
        assert code == EXIT_VERIFY
        assert "FAIL" in out and out.rstrip().endswith("RESULT FAILED")

    def test_cascade_report(self, capsys):
        assert main(["verify", "--model", str(MODELS / "cascade_wildfire.yaml")]) == EXIT_OK
        out = capsys.readouterr().out
        assert "race composition vs race Monte Carlo" in out
        assert "INFO product vs race survival gap" in out


class TestEntryPoint:
    def test_module_invocation_byte_identical(self, tmp_path):
        cmd = [sys.executable, "-m", "mshaz", "simulate", "--model", str(MODELS / "mixed_system.yaml"), "--samples", "20000"]
        a = subprocess.run(cmd, capture_output=True, check=True)
        b = subprocess.run(cmd, capture_output=True, check=True, env={"MSHAZ_THREADS": "1", "PATH": ""})
        assert a.stdout == b.stdout and len(a.stdout) > 0
