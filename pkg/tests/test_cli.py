import json

import pytest

from gaussdos.cli import main
from gaussdos.config import ConfigError, parse_config, serialize

MINIMAL = """\
[experiment]
kind = ids

[run]
energies = 0.0,1.0
"""


class TestParse:
    def test_minimal_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.kind == "ids"
        assert cfg.d == 1
        assert cfg.L == 16.0
        assert cfg.h == 0.125
        assert cfg.sigma == 1.0
        assert cfg.bc == "dirichlet"
        assert cfg.energies == [0.0, 1.0]
        assert cfg.M == 2
        assert cfg.workers >= 1

    def test_linspace_shorthand(self):
        cfg = parse_config(MINIMAL.replace("0.0,1.0", "-1:1:5"))
        assert cfg.energies == [-1.0, -0.5, 0.0, 0.5, 1.0]

    def test_json_equivalent(self):
        doc = {"experiment": {"kind": "localize"},
               "kernel": {"sigma": 4.0},
               "grid": {"L": 8.0, "h": 0.25},
               "run": {"M": 20, "low_window": [-5.0, 0.0],
                       "mid_window": [2.0, 4.0]}}
        cfg = parse_config(json.dumps(doc))
        assert cfg.sigma == 4.0
        assert cfg.low_window == [-5.0, 0.0]

    def test_zero_spacing_rejected(self):
        bad = MINIMAL + "\n[grid]\nh = 0\n"
        with pytest.raises(ConfigError) as err:
            parse_config(bad)
        assert any("spacing must be positive" in e for e in err.value.errors)

    def test_unknown_key_suggestion(self):
        bad = MINIMAL + "\n[kernel]\nsigma2 = 1.0\n"
        with pytest.raises(ConfigError) as err:
            parse_config(bad)
        assert any("did you mean 'sigma'" in e for e in err.value.errors)

    def test_collects_all_errors(self):
        bad = "[experiment]\nkind = nonsense\n\n[grid]\nh = -1\nd = 7\n"
        with pytest.raises(ConfigError) as err:
            parse_config(bad)
        assert len(err.value.errors) >= 3

    def test_missing_required_field(self):
        with pytest.raises(ConfigError) as err:
            parse_config("[experiment]\nkind = wegner-verify\n")
        assert any("energy_pairs" in e for e in err.value.errors)

    def test_round_trip(self):
        text = MINIMAL + "\n[run]\noffsets = 0;1;2\n"
        cfg = parse_config(MINIMAL)
        cfg.offsets = [[0], [4], [8]]
        cfg.energy_pairs = [[-0.5, 0.5, 0.5]]
        again = parse_config(serialize(cfg))
        assert again == cfg


class TestMain:
    def write(self, tmp_path, text):
        path = tmp_path / "exp.cfg"
        path.write_text(text)
        return str(path)

    def test_missing_file(self, tmp_path, capsys):
        assert main(["--config", str(tmp_path / "none.cfg")]) == 2
        assert "cannot read config" in capsys.readouterr().err

    def test_invalid_config_exit_2(self, tmp_path, capsys):
        path = self.write(tmp_path, "[experiment]\nkind = bogus\n")
        assert main(["--config", path]) == 2
        assert "kind must be one of" in capsys.readouterr().err

    def test_validity_window_violation_exit_2(self, tmp_path):
        text = MINIMAL.replace("0.0,1.0", "8.0") + "\n[grid]\nh = 0.25\nL = 8.0\n"
        path = self.write(tmp_path, text)
        out = tmp_path / "out"
        assert main(["--config", path, "--out", str(out)]) == 2

    def test_ids_run_writes_outputs(self, tmp_path):
        path = self.write(tmp_path, MINIMAL + "\n[grid]\nL = 8.0\n")
        out = tmp_path / "out"
        assert main(["--config", path, "--out", str(out), "--seed", "5"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["exit_status"] == 0
        assert manifest["master_seed"] == 5
        doc = json.loads((out / "ids.json").read_text())
        assert doc["energies"] == [0.0, 1.0]
        assert (out / "ids.csv").exists()

    def test_run_deterministic_across_workers(self, tmp_path):
        path = self.write(tmp_path, MINIMAL + "\n[grid]\nL = 8.0\n")
        bodies = []
        for workers, name in ((1, "a"), (3, "b")):
            out = tmp_path / name
            assert main(["--config", path, "--out", str(out),
                         "--workers", str(workers)]) == 0
            bodies.append((out / "ids.csv").read_bytes())
        assert bodies[0] == bodies[1]

    def test_covariance_check_run(self, tmp_path):
        text = """\
[experiment]
kind = covariance-check

[grid]
L = 8.0

[run]
M = 50
offsets = 0;4;8
"""
        path = self.write(tmp_path, text)
        out = tmp_path / "out"
        assert main(["--config", path, "--out", str(out)]) == 0
        doc = json.loads((out / "covariance.json").read_text())
        assert all(row["pass"] for row in doc["rows"])
