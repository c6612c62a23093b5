"""Experiment driver: config handling, BER aggregation, CSV output, CLI."""

import csv
import json
import os

import numpy as np
import pytest

from ppicsim import (
    BerRecord,
    ConfigError,
    ExperimentConfig,
    dump_weight_trajectories,
    example_preset,
    parse_config_file,
    run_experiment,
    write_results_csv,
)
from ppicsim.cli import main as cli_main


def tiny_config(**overrides):
    base = dict(users_sweep=(2,), gains=(16,), trials=25, seed=42, stages=2)
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfigValidation:
    @pytest.mark.parametrize(
        "field,value",
        [
            ("trials", 0),
            ("stages", 0),
            ("users_sweep", (0,)),
            ("users_sweep", ()),
            ("gains", (0,)),
            ("gains", ()),
            ("step_factors", (1.5,)),
            ("step_factors", ()),
            ("lms_step_factor", 0.0),
            ("channel_mode", "urban"),
            ("detector_modes", ("mmse",)),
            ("detector_modes", ()),
            ("chip_rate", 0.0),
            ("doppler_hz", -2.0),
            ("seed", -1),
        ],
    )
    def test_bad_field_named_in_message(self, field, value):
        config = tiny_config(**{field: value})
        with pytest.raises(ConfigError) as excinfo:
            config.validate()
        assert field.split("_")[0] in str(excinfo.value) or field in str(excinfo.value)

    def test_run_experiment_rejects_invalid(self):
        with pytest.raises(ConfigError, match="trials"):
            run_experiment(tiny_config(trials=0))


class TestConfigFile:
    def test_full_roundtrip(self, tmp_path):
        text = """
        # comment line
        users_sweep = 3, 5
        gains = 16, 32
        stages = 2
        snr_db = 0
        detector_modes = conventional, plms_ppic
        step_factors = 0.1, 0.5, 1.0
        lms_step_factor = 0.1
        channel_mode = unbalanced
        chip_rate = 1e6
        doppler_hz = 40
        trials = 10
        seed = 5
        """
        path = tmp_path / "exp.cfg"
        path.write_text("\n".join(line.strip() for line in text.splitlines()))
        config = parse_config_file(path)
        assert config.users_sweep == (3, 5)
        assert config.gains == (16, 32)
        assert config.detector_modes == ("conventional", "plms_ppic")
        assert config.step_factors == (0.1, 0.5, 1.0)
        assert config.channel_mode == "unbalanced"
        assert config.trials == 10

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("modulation = qpsk\n")
        with pytest.raises(ConfigError, match="modulation"):
            parse_config_file(path)

    def test_bad_value_names_key(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("trials = lots\n")
        with pytest.raises(ConfigError, match="trials"):
            parse_config_file(path)

    def test_missing_equals(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("trials 10\n")
        with pytest.raises(ConfigError):
            parse_config_file(path)


class TestPresets:
    def test_example_one_is_balanced_sweep(self):
        config = example_preset(1)
        assert config.channel_mode == "balanced"
        assert config.users_sweep == (5, 10, 15, 20, 25, 30)
        assert config.gains == (64, 256)
        assert config.stages == 2
        assert config.snr_db == 0.0
        assert len(config.step_factors) == 12

    def test_example_two_is_unbalanced(self):
        assert example_preset(2).channel_mode == "unbalanced"

    def test_example_three_is_rayleigh(self):
        config = example_preset(3)
        assert config.channel_mode == "rayleigh"
        assert config.stages == 3
        assert 35 in config.users_sweep

    def test_overrides(self):
        config = example_preset(1, trials=7, seed=99)
        assert config.trials == 7 and config.seed == 99

    def test_invalid_example(self):
        with pytest.raises(ConfigError):
            example_preset(4)


class TestRunExperiment:
    def test_single_user_noiseless_is_error_free(self):
        config = ExperimentConfig(
            users_sweep=(1,), gains=(64,), trials=100, seed=0, snr_db=float("inf")
        )
        for record in run_experiment(config):
            assert record.ber == 0.0
            assert record.bit_errors == 0

    def test_deterministic_repeat(self):
        config = tiny_config()
        assert run_experiment(config) == run_experiment(config)

    def test_worker_count_does_not_change_results(self):
        config = tiny_config(users_sweep=(2, 3), gains=(8, 16))
        assert run_experiment(config, workers=1) == run_experiment(config, workers=3)

    def test_single_step_bank_matches_fixed_step(self):
        config = tiny_config(trials=60, step_factors=(0.1,), lms_step_factor=0.1)
        records = run_experiment(config)
        lms = {(r.stage): r.ber for r in records if r.detector == "lms_ppic"}
        plms = {(r.stage): r.ber for r in records if r.detector == "plms_ppic"}
        assert lms == plms

    def test_record_shape_and_invariants(self):
        config = tiny_config(users_sweep=(3,), gains=(8,), trials=40)
        records = run_experiment(config)
        by_det = {}
        for r in records:
            by_det.setdefault(r.detector, []).append(r)
            assert r.bits_total == 40 * 3
            assert r.ber == r.bit_errors / r.bits_total
            assert 0.0 <= r.ber <= 1.0
        assert sorted(by_det) == ["conventional", "lms_ppic", "plms_ppic"]
        assert [r.stage for r in by_det["conventional"]] == [0]
        assert [r.stage for r in by_det["lms_ppic"]] == [0, 1, 2]
        assert [r.stage for r in by_det["plms_ppic"]] == [0, 1, 2]
        # the matched-filter front end is shared, so stage-0 rows agree
        assert by_det["conventional"][0].bit_errors == by_det["lms_ppic"][0].bit_errors
        assert by_det["conventional"][0].bit_errors == by_det["plms_ppic"][0].bit_errors

    def test_later_stage_does_not_hurt_where_errors_exist(self):
        # interference-limited cell with real errors: one cancelation stage
        # should not be worse than the front end beyond paired noise
        config = ExperimentConfig(users_sweep=(20,), gains=(64,), trials=2000, seed=1)
        records = run_experiment(config)
        for det in ("lms_ppic", "plms_ppic"):
            errs = {r.stage: r.bit_errors for r in records if r.detector == det}
            sigma = np.sqrt(errs[0] + errs[1])
            assert errs[1] <= errs[0] + 2 * sigma

    def test_progress_callback(self):
        seen = []
        config = tiny_config(users_sweep=(2, 3), gains=(8,))
        run_experiment(config, progress=lambda done, total, recs: seen.append((done, total)))
        assert seen == [(1, 2), (2, 2)]


class TestCsvOutput:
    def test_empty_records_header_only(self, tmp_path):
        path = tmp_path / "out.csv"
        write_results_csv([], path)
        lines = path.read_text().splitlines()
        assert lines == [
            "detector,stage,users,gain,snr_db,channel,trials,seed,bit_errors,bits_total,ber"
        ]

    def test_single_record_roundtrip(self, tmp_path):
        record = BerRecord(
            detector="plms_ppic",
            stage=2,
            users=10,
            gain=64,
            snr_db=0.0,
            channel="balanced",
            trials=100,
            seed=7,
            bit_errors=13,
            bits_total=1000,
            ber=13 / 1000,
        )
        path = tmp_path / "out.csv"
        write_results_csv([record], path)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        row = rows[0]
        assert row["detector"] == "plms_ppic"
        assert int(row["bit_errors"]) == 13
        assert float(row["ber"]) == int(row["bit_errors"]) / int(row["bits_total"])

    def test_ber_rederivable_from_real_run(self, tmp_path):
        records = run_experiment(tiny_config(trials=30))
        path = tmp_path / "out.csv"
        write_results_csv(records, path)
        with open(path) as fh:
            for row in csv.DictReader(fh):
                assert float(row["ber"]) == int(row["bit_errors"]) / int(row["bits_total"])

    def test_metadata_sidecar(self, tmp_path):
        config = tiny_config()
        path = tmp_path / "out.csv"
        write_results_csv(run_experiment(config), path, config)
        sidecar = json.loads((tmp_path / "out.csv.meta.json").read_text())
        for key in ("snr_convention", "noise_model", "code_family", "fading_model"):
            assert key in sidecar
        assert sidecar["config"]["seed"] == 42

    def test_unwritable_path_names_path(self, tmp_path):
        with pytest.raises(OSError, match="no/such"):
            write_results_csv([], tmp_path / "no" / "such" / "dir.csv")


class TestWeightDump:
    def test_files_and_columns(self, tmp_path):
        config = tiny_config(users_sweep=(2, 3), gains=(8,), trials=5)
        paths = dump_weight_trajectories(config, tmp_path)
        assert len(paths) == 2
        for path in paths:
            with open(path) as fh:
                rows = list(csv.DictReader(fh))
            users = 2 if "M2" in path else 3
            assert list(rows[0]) == ["n", "m", "re", "im", "winner_k"]
            assert len(rows) == 8 * users
            winners = {int(r["winner_k"]) for r in rows}
            assert winners <= set(range(len(config.step_factors)))

    def test_fixed_step_dump_has_no_winner(self, tmp_path):
        config = tiny_config(users_sweep=(2,), gains=(8,), trials=5)
        (path,) = dump_weight_trajectories(config, tmp_path, mode="lms_ppic")
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert {int(r["winner_k"]) for r in rows} == {-1}

    def test_requires_adaptive_detector(self, tmp_path):
        config = tiny_config(detector_modes=("conventional",))
        with pytest.raises(ConfigError):
            dump_weight_trajectories(config, tmp_path)


class TestCli:
    def test_bound_values(self, capsys):
        expectations = {
            1: 1.0,
            2: 0.2928932188134524755991556378951509607152,
            100: 0.005012562893380045265520178998793994821872,
        }
        for users, expected in expectations.items():
            assert cli_main(["bound", "--users", str(users)]) == 0
            printed = float(capsys.readouterr().out.strip())
            assert printed == pytest.approx(expected, abs=1e-9)

    def test_bound_rejects_zero_users(self, capsys):
        assert cli_main(["bound", "--users", "0"]) == 1
        assert "users" in capsys.readouterr().err

    def test_run_roundtrip(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(
            "users_sweep = 2\ngains = 8\ntrials = 10\nseed = 3\n"
            "detector_modes = conventional, plms_ppic\n"
        )
        out = tmp_path / "results.csv"
        assert cli_main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        assert out.exists() and (tmp_path / "results.csv.meta.json").exists()
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1 + 3  # conventional stage 0 + plms stages 0..2

    def test_run_bad_trials_exits_one(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("trials = 0\n")
        out = tmp_path / "results.csv"
        assert cli_main(["run", "--config", str(cfg), "--out", str(out)]) == 1
        assert "trials" in capsys.readouterr().err

    def test_run_missing_config_exits_one(self, tmp_path, capsys):
        out = tmp_path / "results.csv"
        assert cli_main(["run", "--config", str(tmp_path / "nope.cfg"), "--out", str(out)]) == 1

    def test_run_with_weight_dump(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("users_sweep = 2\ngains = 8\ntrials = 5\nseed = 3\n")
        out = tmp_path / "results.csv"
        dump = tmp_path / "weights"
        code = cli_main(
            ["run", "--config", str(cfg), "--out", str(out), "--dump-weights", str(dump)]
        )
        assert code == 0
        assert len(os.listdir(dump)) == 1

    def test_sweep_covers_preset_cells(self, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        code = cli_main(
            ["sweep", "--example", "1", "--trials", "2", "--seed", "1", "--out", str(out)]
        )
        assert code == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        cells = {(int(r["users"]), int(r["gain"])) for r in rows}
        assert cells == {(m, n) for m in (5, 10, 15, 20, 25, 30) for n in (64, 256)}
        detectors = {r["detector"] for r in rows}
        assert detectors == {"conventional", "lms_ppic", "plms_ppic"}
        # 1 conventional + 3 lms + 3 plms rows per cell
        assert len(rows) == 7 * 12

    def test_unknown_flag_shows_usage(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            cli_main(["bound", "--users", "2", "--frobnicate"])
        assert excinfo.value.code == 2
        assert "usage" in capsys.readouterr().err


def test_cli_selftest_passes(capsys):
    assert cli_main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "selftest" in out and "FAIL" not in out
