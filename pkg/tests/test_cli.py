import json

import pytest

from posedrift.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    logs = root / "clean"
    rc = main(
        [
            "gen-clean",
            "--out",
            str(logs),
            "--runs",
            "4",
            "--seed",
            "80",
            "--duration",
            "3",
        ]
    )
    assert rc == 0
    bundle = root / "model.pdb"
    rc = main(
        ["train", "--logs", str(logs), "--out", str(bundle), "--max-epochs", "6"]
    )
    assert rc == 0
    return root, logs, bundle


class TestCli:
    def test_run_with_report(self, workspace, capsys):
        root, _, bundle = workspace
        report = root / "report.csv"
        rc = main(
            [
                "run",
                "--bundle",
                str(bundle),
                "--defense",
                "on",
                "--seed",
                "85",
                "--p",
                "0.5",
                "--duration",
                "3",
                "--report",
                str(report),
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "T-ATE" in out and "verdicts" in out
        header, row = report.read_text().strip().splitlines()
        assert header.startswith("t_ate_cm")

    def test_run_defense_off_no_bundle(self, workspace, capsys):
        rc = main(["run", "--defense", "off", "--seed", "86", "--duration", "3"])
        assert rc == 0
        assert "T-ATE" in capsys.readouterr().out

    def test_eval_between_logs(self, workspace, capsys, tmp_path):
        root, logs, bundle = workspace
        log_dir = tmp_path / "runs"
        rc = main(
            [
                "run",
                "--defense",
                "off",
                "--seed",
                "87",
                "--p",
                "0.25",
                "--duration",
                "3",
                "--logs",
                str(log_dir),
            ]
        )
        assert rc == 0
        run_log = next(log_dir.glob("run_*.jsonl.gz"))
        ref_log = next(log_dir.glob("ref_*.jsonl.gz"))
        rc = main(["eval", "--est", str(run_log), "--ref", str(ref_log)])
        assert rc == 0
        assert "T-ATE" in capsys.readouterr().out

    def test_attack_config_presets_and_env(self, workspace, capsys, monkeypatch):
        monkeypatch.setenv("ILLIXR_VIO_SPOOF_POSITION_DRIFT", "0.31")
        rc = main(["run", "--defense", "off", "--seed", "88", "--duration", "3", "--p", "1.0"])
        assert rc == 0

    def test_config_file_overrides_env(self, workspace, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("ILLIXR_VIO_SPOOF_PROBABILITY", "0.9")
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"attack": {"p": 0.0}}))
        rc = main(
            ["run", "--defense", "off", "--seed", "89", "--duration", "3", "--config", str(cfg)]
        )
        assert rc == 0
        assert "p=0" in capsys.readouterr().out

    def test_bench_reports_stages(self, workspace, capsys):
        _, _, bundle = workspace
        rc = main(["bench", "--bundle", str(bundle), "--windows", "60"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "load (once)" in out
        assert "per-frame total" in out

    def test_tcp_transport_run(self, workspace, capsys):
        _, _, bundle = workspace
        rc = main(
            [
                "run",
                "--defense",
                "on",
                "--bundle",
                str(bundle),
                "--seed",
                "90",
                "--duration",
                "3",
                "--transport",
                "tcp",
            ]
        )
        assert rc == 0
        assert "T-ATE" in capsys.readouterr().out
