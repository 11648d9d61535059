import csv
import json

import pytest

from cifuse.cli import main, parse_seeds


@pytest.fixture(scope="module")
def tiny_config_path(tmp_path_factory):
    cfg = {
        "duration": 0.5,
        "dt": 0.025,
        "turn_rate": 0.0,
        "diffusion": 0.1,
        "meas_noise": 0.05,
        "n_particles": 5,
        "tracker": "rbpf",
        "fusion_method": "modci",
        "init_mean": [0.0, 0.0, 1.0, 0.0],
        "nodes": [
            {"node_id": 1, "p_detect": 0.9, "chi": None, "clutter_density": 0.5},
            {"node_id": 2, "p_detect": 0.7, "chi": None, "clutter_density": 0.5},
        ],
        "processors": [{"proc_id": 3, "inputs": [1, 2]}],
        "targets": [{"birth": 0.0, "death": 0.5, "initial_state": [0.0, 0.0, 1.0, 0.0]}],
    }
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="module")
def dual_method_records(tiny_config_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("recs")
    rc = main(
        [
            "simulate",
            "--config",
            str(tiny_config_path),
            "--seeds",
            "0..2",
            "--method",
            "both",
            "--baseline-kf",
            "--out",
            str(out),
        ]
    )
    assert rc == 0
    return sorted(out.glob("record_seed*.json"))


class TestParseSeeds:
    def test_range(self):
        assert parse_seeds("3..6") == [3, 4, 5, 6]

    def test_comma_list(self):
        assert parse_seeds("1,5,9") == [1, 5, 9]

    def test_single(self):
        assert parse_seeds("42") == [42]

    def test_empty_range_rejected(self):
        with pytest.raises(ValueError):
            parse_seeds("5..3")


class TestSimulate:
    def test_writes_one_record_per_seed(self, dual_method_records):
        assert len(dual_method_records) == 3
        names = [p.name for p in dual_method_records]
        assert names == ["record_seed0.json", "record_seed1.json", "record_seed2.json"]

    def test_reproducible_bytes(self, tiny_config_path, tmp_path):
        for sub in ("a", "b"):
            rc = main(
                [
                    "simulate",
                    "--config",
                    str(tiny_config_path),
                    "--seeds",
                    "7",
                    "--out",
                    str(tmp_path / sub),
                ]
            )
            assert rc == 0
        assert (tmp_path / "a" / "record_seed7.json").read_bytes() == (
            tmp_path / "b" / "record_seed7.json"
        ).read_bytes()

    def test_builtin_config_name_resolves(self, tmp_path):
        rc = main(
            ["simulate", "--config", "one_target", "--seeds", "0", "--out", str(tmp_path), "--method", "ci"]
        )
        assert rc == 0

    def test_invalid_dt_exits_2_with_field_name(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(
            json.dumps(
                {
                    "duration": 1.0,
                    "dt": -0.025,
                    "nodes": [
                        {"node_id": 1, "p_detect": 0.9},
                        {"node_id": 2, "p_detect": 0.7},
                    ],
                    "processors": [{"proc_id": 3, "inputs": [1, 2]}],
                    "targets": [],
                }
            )
        )
        rc = main(["simulate", "--config", str(bad), "--seeds", "0", "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "dt" in capsys.readouterr().err

    def test_malformed_json_exits_2_with_line(self, tmp_path, capsys):
        bad = tmp_path / "broken.json"
        bad.write_text('{"duration": 1.0,\n  "dt": oops}')
        rc = main(["simulate", "--config", str(bad), "--seeds", "0", "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "line 2" in capsys.readouterr().err

    def test_missing_config_exits_2(self, tmp_path, capsys):
        rc = main(["simulate", "--config", "/nope/missing.json", "--seeds", "0", "--out", str(tmp_path)])
        assert rc == 2


class TestMetricsCommand:
    def test_single_record_table(self, dual_method_records, tmp_path):
        rc = main(["metrics", str(dual_method_records[0]), "--out", str(tmp_path)])
        assert rc == 0
        with open(tmp_path / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["algorithm"] for r in rows} >= {"kf", "rbpf", "ci", "modci"}
        assert set(rows[0]) == {"seed", "source", "algorithm", "mse", "mncm"}

    def test_aggregate_columns(self, dual_method_records, tmp_path):
        rc = main(["metrics", *map(str, dual_method_records), "--out", str(tmp_path)])
        assert rc == 0
        with open(tmp_path / "metrics_aggregate.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert set(rows[0]) == {
            "source",
            "algorithm",
            "seeds",
            "median_mse",
            "iqr_mse",
            "median_mncm",
            "iqr_mncm",
        }
        assert all(row["seeds"] == "3" for row in rows)

    def test_mixed_scenarios_exit_3(self, dual_method_records, tiny_config_path, tmp_path, capsys):
        other_dir = tmp_path / "other"
        rc = main(
            [
                "simulate",
                "--config",
                "one_target",
                "--seeds",
                "0",
                "--method",
                "ci",
                "--out",
                str(other_dir),
            ]
        )
        assert rc == 0
        rc = main(
            [
                "metrics",
                str(dual_method_records[0]),
                str(other_dir / "record_seed0.json"),
                "--out",
                str(tmp_path / "m"),
            ]
        )
        assert rc == 3
        assert "different scenario" in capsys.readouterr().err


class TestCompareCommand:
    def test_report_and_file(self, dual_method_records, tmp_path, capsys):
        report = tmp_path / "report.txt"
        rc = main(["compare", *map(str, dual_method_records), "--out", str(report)])
        assert rc == 0
        text = report.read_text()
        assert "MSE" in text and "MNCM" in text and "sign-test" in text
        assert "wins" in capsys.readouterr().out

    def test_single_method_records_exit_3(self, tiny_config_path, tmp_path, capsys):
        out = tmp_path / "single"
        rc = main(
            [
                "simulate",
                "--config",
                str(tiny_config_path),
                "--seeds",
                "0",
                "--method",
                "ci",
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        rc = main(["compare", str(out / "record_seed0.json")])
        assert rc == 3
        assert "both" in capsys.readouterr().err
