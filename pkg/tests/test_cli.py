"""Config loading, deterministic writers, and CLI subcommand behavior."""

import csv
import json
import subprocess
import sys
from fractions import Fraction

import pytest

from greenlab.cli import _cell, main, write_csv, write_json
from greenlab.config import (
    ExperimentConfig,
    config_from_dict,
    load_config,
)
from greenlab.errors import ConfigError
from greenlab.measure import EmpiricalMeasure
from greenlab.sphere import Chart


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------


class TestConfigLoading:
    def test_defaults_from_none(self):
        cfg = load_config(None)
        assert cfg.sampler.n_samples == 100_000
        assert cfg.map.numerator == [0.0, 0.0, 1.0]
        assert cfg.format == "both"

    def test_defaults_roundtrip_through_dict(self):
        cfg = ExperimentConfig()
        again = config_from_dict(cfg.to_dict())
        assert again.to_dict() == cfg.to_dict()

    def test_toml_overrides_named_fields_only(self, tmp_path):
        p = tmp_path / "exp.toml"
        p.write_text("[sampler]\nn_samples = 5000\nseed = 3\n")
        cfg = load_config(str(p))
        assert cfg.sampler.n_samples == 5000
        assert cfg.sampler.seed == 3
        assert cfg.sampler.burn_in == 50  # untouched default
        assert cfg.clt.n == 256

    def test_json_config(self, tmp_path):
        p = tmp_path / "exp.json"
        p.write_text(json.dumps({"workers": 2, "ldt": {"epsilon": 0.3}}))
        cfg = load_config(str(p))
        assert cfg.workers == 2
        assert cfg.ldt.epsilon == 0.3

    def test_unknown_top_level_field_named(self):
        with pytest.raises(ConfigError, match="corelations"):
            config_from_dict({"corelations": {}})

    def test_unknown_section_field_named(self):
        with pytest.raises(ConfigError, match="sampler.n_sample"):
            config_from_dict({"sampler": {"n_sample": 10}})

    def test_type_errors_name_the_field(self):
        with pytest.raises(ConfigError, match="clt.n"):
            config_from_dict({"clt": {"n": "many"}})
        with pytest.raises(ConfigError, match="ldt.epsilon"):
            config_from_dict({"ldt": {"epsilon": [1, 2]}})
        with pytest.raises(ConfigError, match="variance.bk_grid"):
            config_from_dict({"variance": {"bk_grid": 8}})
        with pytest.raises(ConfigError, match="out_dir"):
            config_from_dict({"out_dir": 3})

    def test_bool_is_not_an_integer(self):
        with pytest.raises(ConfigError, match="sampler.seed"):
            config_from_dict({"sampler": {"seed": True}})

    def test_format_validated(self):
        with pytest.raises(ConfigError, match="format"):
            config_from_dict({"format": "yaml"})

    def test_workers_validated(self):
        with pytest.raises(ConfigError, match="workers"):
            config_from_dict({"workers": 0})

    def test_bad_extension(self, tmp_path):
        p = tmp_path / "exp.yaml"
        p.write_text("x: 1")
        with pytest.raises(ConfigError, match="toml or .json"):
            load_config(str(p))

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("/nonexistent/exp.toml")

    def test_toml_syntax_error(self, tmp_path):
        p = tmp_path / "exp.toml"
        p.write_text("[sampler\nn_samples = 5")
        with pytest.raises(ConfigError):
            load_config(str(p))

    def test_empty_numerator_named(self):
        cfg = config_from_dict({"map": {"numerator": []}})
        with pytest.raises(ConfigError, match="map.numerator"):
            cfg.map.build()

    def test_complex_coefficients_as_pairs(self):
        cfg = config_from_dict({"map": {"numerator": [[-1.0, 0.0], 0, 1]}})
        fmap = cfg.map.build()  # z^2 - 1
        assert fmap.degree == 2

    def test_degenerate_map_wrapped_as_config_error(self):
        cfg = config_from_dict(
            {"map": {"numerator": [0, 1.0], "denominator": [0, 1.0]}}
        )
        with pytest.raises(ConfigError, match="map"):
            cfg.map.build()

    def test_observable_accessor_names_section(self):
        cfg = config_from_dict({"clt": {"psi": {"class": "nosuch"}}})
        with pytest.raises(ConfigError, match="clt.psi"):
            cfg.observable("clt.psi")

    def test_observable_accessor_builds(self):
        obs = ExperimentConfig().observable("correlations.phi")
        assert obs.kind == "trigpoly"

    def test_start_point_forms(self):
        cfg = config_from_dict({"sampler": {"start": "inf"}})
        assert cfg.sampler.start_point().chart is Chart.W
        cfg = config_from_dict({"sampler": {"start": [0.3, -0.2]}})
        assert cfg.sampler.start_point().coord == complex(0.3, -0.2)
        assert ExperimentConfig().sampler.start_point() is None

    def test_bad_start_named(self):
        cfg = config_from_dict({"sampler": {"start": "north pole"}})
        with pytest.raises(ConfigError, match="sampler.start"):
            cfg.sampler.start_point()


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------


class TestWriters:
    def test_cell_formats(self):
        assert _cell(0.1) == "0.10000000000000001"
        assert _cell(True) == "1"
        assert _cell(False) == "0"
        assert _cell(None) == ""
        assert _cell(Fraction(3, 8)) == "3/8"
        assert _cell(7) == "7"

    def test_csv_quotes_commas(self, tmp_path):
        p = tmp_path / "t.csv"
        write_csv(str(p), ["a", "b"], [["x, y", 1.5]])
        rows = list(csv.reader(open(p)))
        assert rows == [["a", "b"], ["x, y", "1.5"]]

    def test_json_fraction_encoding_and_key_order(self, tmp_path):
        p = tmp_path / "t.json"
        write_json(str(p), {"z": Fraction(1, 3), "a": 2})
        raw = p.read_text()
        assert raw.index('"a"') < raw.index('"z"')
        assert json.loads(raw) == {"z": [1, 3], "a": 2}

    def test_json_rewrite_identical(self, tmp_path):
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        payload = {"x": 0.1, "y": [1, 2.5], "s": "inf"}
        write_json(str(p1), payload)
        write_json(str(p2), payload)
        assert p1.read_bytes() == p2.read_bytes()


# ---------------------------------------------------------------------------
# subcommands, in process
# ---------------------------------------------------------------------------


def _small_config(tmp_path, **extra) -> str:
    """Config small enough for test speed, big enough to exercise chunking."""
    data = {
        "out_dir": str(tmp_path / "out"),
        "sampler": {"n_samples": 2000, "seed": 5},
        "correlations": {"n_max": 3, "n_orbits": 1500, "n_eval": 512},
        "variance": {"n_max": 4, "bk_grid": [4, 8], "n_orbits": 1500},
        "clt": {"n": 16, "n_orbits": 1500},
        "ldt": {"n_grid": [2, 4, 8], "n_orbits": 1500},
        "decompose": {"n_eval": 256, "gordin_n": 3},
    }
    for key, val in extra.items():
        data.setdefault(key, {}).update(val) if isinstance(val, dict) else data.update(
            {key: val}
        )
    p = tmp_path / "exp.json"
    p.write_text(json.dumps(data))
    return str(p)


class TestSubcommands:
    def test_oracle_suite_passes(self, tmp_path, capsys):
        out = tmp_path / "o"
        rc = main(["oracle-suite", "--out", str(out)])
        assert rc == 0
        text = capsys.readouterr().out
        assert "[PASS] oracle-suite" in text
        payload = json.loads((out / "oracle-suite.json").read_text())
        assert payload["ok"] is True
        assert payload["n_failed"] == 0
        assert payload["schema_version"] == 1
        rows = list(csv.reader(open(out / "oracle-suite.csv")))
        assert rows[0] == ["check", "ok", "detail"]
        assert len(rows) - 1 == payload["n_checks"]

    def test_green_matches_library(self, tmp_path):
        from greenlab.measure import green_function
        from greenlab.sphere import SpherePoint, make_rational_map

        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"green": {"points": [[4.0, 0.0]], "n_iter": 30}}))
        out = tmp_path / "g"
        rc = main(["green", "--config", str(cfg), "--out", str(out)])
        assert rc == 0
        rows = list(csv.reader(open(out / "green.csv")))
        fmap = make_rational_map((0, 0, 1), (1,))
        want = green_function(fmap, SpherePoint(4.0), 30).value
        assert float(rows[1][3]) == pytest.approx(want, abs=1e-12)

    def test_sample_writes_cloud_and_meta(self, tmp_path):
        cfg = _small_config(tmp_path)
        out = json.loads(open(cfg).read())["out_dir"]
        rc = main(["sample", "--config", cfg])
        assert rc == 0
        m = EmpiricalMeasure.from_csv(f"{out}/measure.csv")
        assert m.n == 2000
        assert m.meta["seed"] == 5
        payload = json.loads(open(f"{out}/sample.json").read())
        assert payload["meta"]["map_fingerprint"] == m.meta["map_fingerprint"]

    def test_config_echo_always_written(self, tmp_path):
        cfg = _small_config(tmp_path)
        out = json.loads(open(cfg).read())["out_dir"]
        main(["sample", "--config", cfg, "--format", "json"])
        echoed = json.loads(open(f"{out}/config.json").read())
        assert echoed["sampler"]["n_samples"] == 2000
        assert echoed["format"] == "json"

    def test_format_json_skips_csv(self, tmp_path):
        cfg = _small_config(tmp_path)
        out = json.loads(open(cfg).read())["out_dir"]
        rc = main(["ldt", "--config", cfg, "--format", "json"])
        assert rc == 0
        import os

        names = set(os.listdir(out))
        assert "ldt.json" in names
        assert "ldt.csv" not in names

    def test_format_csv_skips_json(self, tmp_path):
        cfg = _small_config(tmp_path)
        out = json.loads(open(cfg).read())["out_dir"]
        rc = main(["ldt", "--config", cfg, "--format", "csv"])
        assert rc == 0
        import os

        names = set(os.listdir(out))
        assert "ldt.csv" in names
        assert "ldt.json" not in names

    def test_flags_override_config(self, tmp_path):
        cfg = _small_config(tmp_path)
        out2 = tmp_path / "elsewhere"
        rc = main(["sample", "--config", cfg, "--seed", "9", "--out", str(out2)])
        assert rc == 0
        m = EmpiricalMeasure.from_csv(str(out2 / "measure.csv"))
        assert m.meta["seed"] == 9
        echoed = json.loads((out2 / "config.json").read_text())
        assert echoed["sampler"]["seed"] == 9

    def test_failed_check_exits_one(self, tmp_path, capsys):
        cfg = _small_config(tmp_path, clt={"ks_threshold": 1e-9, "n": 16, "n_orbits": 1500})
        rc = main(["clt", "--config", cfg])
        assert rc == 1
        assert "[FAIL] clt" in capsys.readouterr().out

    def test_coboundary_reported_as_detection(self, tmp_path):
        cfg = _small_config(
            tmp_path,
            sampler={"n_samples": 40_000, "seed": 5},
            clt={"psi": {"class": "trigpoly", "coeffs": [0, 1, -1]}, "n": 8, "n_orbits": 500},
        )
        out = json.loads(open(cfg).read())["out_dir"]
        rc = main(["clt", "--config", cfg])
        assert rc == 0
        payload = json.loads(open(f"{out}/clt.json").read())
        assert payload["coboundary_detected"] is True
        assert abs(payload["sigma2"]) < 0.01

    def test_config_error_exits_two(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"map": {"numerator": []}}))
        rc = main(["green", "--config", str(p)])
        assert rc == 2
        assert "map.numerator" in capsys.readouterr().err

    def test_bad_seed_exits_two(self, tmp_path):
        rc = main(["sample", "--seed", "-1", "--out", str(tmp_path / "x")])
        assert rc == 2

    def test_unknown_subcommand_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2


class TestDeterminism:
    def test_rerun_from_echoed_config_is_byte_identical(self, tmp_path):
        cfg = _small_config(tmp_path)
        out1 = json.loads(open(cfg).read())["out_dir"]
        assert main(["ldt", "--config", cfg]) == 0
        out2 = tmp_path / "redo"
        assert main(["ldt", "--config", f"{out1}/config.json", "--out", str(out2)]) == 0
        for name in ("ldt.csv", "ldt.json"):
            a = open(f"{out1}/{name}", "rb").read()
            b = (out2 / name).read_bytes()
            assert a == b

    def test_workers_do_not_change_artifacts(self, tmp_path):
        # n_samples and n_orbits above one 8192 chunk so threads really split
        base = {
            "sampler": {"n_samples": 20_000, "seed": 2},
            "ldt": {"n_grid": [2, 4], "n_orbits": 10_000},
        }
        p = tmp_path / "w.json"
        p.write_text(json.dumps(base))
        out1, out2 = tmp_path / "w1", tmp_path / "w4"
        assert main(["ldt", "--config", str(p), "--out", str(out1), "--workers", "1"]) == 0
        assert main(["ldt", "--config", str(p), "--out", str(out2), "--workers", "4"]) == 0
        for name in ("measure.csv", "ldt.csv", "ldt.json"):
            if name == "measure.csv":
                continue  # ldt does not persist the cloud
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_sample_workers_byte_identical(self, tmp_path):
        base = {"sampler": {"n_samples": 20_000, "seed": 2}}
        p = tmp_path / "w.json"
        p.write_text(json.dumps(base))
        out1, out2 = tmp_path / "s1", tmp_path / "s4"
        assert main(["sample", "--config", str(p), "--out", str(out1), "--workers", "1"]) == 0
        assert main(["sample", "--config", str(p), "--out", str(out2), "--workers", "4"]) == 0
        assert (out1 / "measure.csv").read_bytes() == (out2 / "measure.csv").read_bytes()


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        """python -m greenlab works as the installed binary."""
        proc = subprocess.run(
            [sys.executable, "-m", "greenlab", "oracle-suite", "--out", str(tmp_path / "o")],
            capture_output=True,
            text=True,
            timeout=120,
        )
        assert proc.returncode == 0
        assert "all 1 checks passed" in proc.stdout
