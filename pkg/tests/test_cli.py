import json

import numpy as np
import pytest

from particleops import RectDomain, load_particles
from particleops.cli import main, parse_dx_levels


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


class TestParseDxLevels:
    def test_dyadic_range(self):
        assert parse_dx_levels("2^-5..2^-7") == (2.0**-5, 2.0**-6, 2.0**-7)

    def test_comma_list(self):
        assert parse_dx_levels("0.1,0.05") == (0.1, 0.05)

    def test_increasing_range_rejected(self):
        with pytest.raises(ValueError):
            parse_dx_levels("2^-7..2^-5")


class TestGen:
    def test_writes_particles(self, tmp_path, capsys):
        out = tmp_path / "pts.csv"
        code, text = run_cli(capsys, "gen", "--dx", str(2.0**-5),
                             "--seed", "7", "--noise", "0.25",
                             "--out", str(out))
        assert code == 0
        assert "1521" in text
        domain = RectDomain(lower=(0.0, 0.0), upper=(1.0, 1.0), extension=0.1)
        ps = load_particles(out, domain, h=0.05)
        assert ps.n == 1521


class TestIndicators:
    def test_small_instance_exact(self, tmp_path, capsys):
        pts = tmp_path / "pts.csv"
        run_cli(capsys, "gen", "--dx", "0.3", "--seed", "1",
                "--noise", "0.2", "--out", str(pts))
        code, text = run_cli(capsys, "indicators", "--pts", str(pts),
                             "--m", "3", "--dx", "0.3", "--level", "0")
        assert code == 0
        header, row = text.strip().split("\n")
        assert header.startswith("level,dx,h,N,r_N,d_N_kind,d_N_value")
        assert header.endswith("c0_m3")
        fields = row.split(",")
        assert fields[5] == "exact"
        assert float(fields[6]) >= 0

    def test_large_instance_bound(self, tmp_path, capsys):
        pts = tmp_path / "pts.csv"
        run_cli(capsys, "gen", "--dx", str(2.0**-5), "--seed", "1",
                "--out", str(pts))
        code, text = run_cli(capsys, "indicators", "--pts", str(pts))
        assert code == 0
        assert "upper_bound" in text


class TestWeightsCommand:
    def test_check_i3_reports_renormalization(self, capsys):
        code, text = run_cli(capsys, "weights", "check", "--name", "I3")
        assert code == 0
        assert "renormalized" in text
        assert "pass" in text

    def test_check_all_catalog(self, capsys):
        for name in ("I1", "I2", "G1", "G2", "G3", "L1", "L2", "L3"):
            code, _ = run_cli(capsys, "weights", "check", "--name", name)
            assert code == 0, name

    def test_construct_reference(self, tmp_path, capsys):
        out = tmp_path / "w.json"
        code, text = run_cli(capsys, "weights", "construct", "--d", "2",
                             "--n", "3", "--p", "3", "--out", str(out))
        assert code == 0
        shape_line = [l for l in text.splitlines() if "shape" in l][0]
        shape = json.loads(shape_line.split(":", 1)[1])
        assert shape == pytest.approx([1.0, -3.75, 4.5, -1.75], abs=1e-12)
        data = json.loads(out.read_text())
        assert data["dim"] == 2


class TestConvergence:
    def test_small_run(self, tmp_path, capsys):
        out = tmp_path / "study.csv"
        code, text = run_cli(capsys, "convergence", "--m", "3",
                             "--weight", "I1", "--op", "interp",
                             "--dx-levels", "2^-5..2^-6", "--seed", "7",
                             "--out", str(out))
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0].startswith("dx,h,N,")
        assert len(lines) == 3
        assert (tmp_path / "study.dat").exists()
        assert "finest-pair observed rate" in text

    def test_config_file_mirrors_flags(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        out = tmp_path / "study.csv"
        cfg.write_text(json.dumps({
            "m": 3, "weight": "I1", "op": "interp",
            "dx-levels": "2^-5..2^-6", "seed": 7, "out": str(out),
        }))
        code, _ = run_cli(capsys, "convergence", "--config", str(cfg))
        assert code == 0
        via_config = out.read_text()
        code, _ = run_cli(capsys, "convergence", "--m", "3", "--weight", "I1",
                          "--op", "interp", "--dx-levels", "2^-5..2^-6",
                          "--seed", "7", "--out", str(out))
        assert out.read_text() == via_config

    def test_explicit_flag_wins_over_config(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        out = tmp_path / "study.csv"
        cfg.write_text(json.dumps({
            "m": 3, "weight": "I1", "op": "interp",
            "dx-levels": "2^-5..2^-6", "seed": 7, "out": str(out),
        }))
        code, _ = run_cli(capsys, "convergence", "--config", str(cfg),
                          "--weight", "I2")
        assert code == 0
        # I2 study differs from I1
        text_i2 = out.read_text()
        run_cli(capsys, "convergence", "--config", str(cfg))
        assert out.read_text() != text_i2


class TestCompatCheck:
    def test_passes_with_reference_seed(self, capsys):
        code, text = run_cli(capsys, "compat-check", "--seed", "11",
                             "--configs", "20")
        assert code == 0
        for name in ("sph-interp", "sph-grad", "sph-lap", "mps-grad",
                     "mps-lap"):
            assert name in text
        assert "FAIL" not in text

    def test_fails_with_absurd_tolerance(self, capsys):
        code, text = run_cli(capsys, "compat-check", "--seed", "11",
                             "--configs", "5", "--tol", "1e-30")
        assert code == 1
        assert "FAIL" in text
