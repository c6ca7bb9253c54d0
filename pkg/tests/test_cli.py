from __future__ import annotations

import json

from bitrank.cli import main

SMALL = [
    "--pop", "6", "--gens", "2", "--bo-iters", "1",
    "--seed", "0", "--synthetic", "--calib-size", "4",
]


class TestSearchCommand:
    def test_writes_report_directory(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(["search", *SMALL, "--out", str(out), "--no-figures"])
        assert code == 0
        assert (out / "summary.json").exists()
        stdout = json.loads(capsys.readouterr().out)
        assert stdout["status"] == "ok"

    def test_prints_summary_without_out(self, capsys):
        code = main(["search", *SMALL])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["best"]["config"]["bits"]

    def test_figures_written_by_default(self, tmp_path):
        out = tmp_path / "run"
        code = main(["search", *SMALL, "--out", str(out)])
        assert code == 0
        assert (out / "pareto.png").exists()

    def test_infeasible_budget_exit_code(self, tmp_path, capsys):
        code = main(["search", *SMALL, "--budget-bytes", "1"])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_config_file_plus_flag_override(self, tmp_path, capsys):
        cfg = tmp_path / "spec.json"
        cfg.write_text(json.dumps({"pop": 6, "gens": 1, "bo_iters": 1, "seed": 5,
                                   "calib_size": 4}))
        code = main(["search", "--config", str(cfg), "--seed", "0", "--synthetic"])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["seed"] == 0

    def test_env_seed_override(self, monkeypatch, capsys):
        monkeypatch.setenv("QR_SEED", "11")
        code = main(["search", *SMALL])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["seed"] == 11


class TestProfileCommand:
    def test_profile_only_outputs(self, tmp_path, capsys):
        out = tmp_path / "prof"
        code = main(["profile", *SMALL, "--out", str(out), "--no-figures"])
        assert code == 0
        profile = (out / "profile.csv").read_text().strip().splitlines()
        assert profile[0] == "layer,score,normalized"
        assert len(profile) > 1
        data = json.loads((out / "report.json").read_text())
        assert data["phases"] == {"phase1": True, "phase2": False, "phase3": False}


class TestPilotCommand:
    def test_ordering_and_files(self, tmp_path, capsys):
        out = tmp_path / "pilot"
        code = main(["pilot", "--out", str(out), "--no-figures"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["ordering_B>D>C>A"] is True
        rows = (out / "pilot.csv").read_text().strip().splitlines()
        assert len(rows) == 5

    def test_pilot_figure(self, tmp_path):
        out = tmp_path / "pilot"
        assert main(["pilot", "--out", str(out)]) == 0
        assert (out / "pilot.png").stat().st_size > 0


class TestReportCommand:
    def test_re_render(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["search", *SMALL, "--out", str(out), "--no-figures"]) == 0
        capsys.readouterr()
        dest = tmp_path / "rendered"
        code = main(["report", "--from", str(out), "--out", str(dest)])
        assert code == 0
        assert (dest / "pareto.csv").exists()
        assert (dest / "pareto.png").exists()
