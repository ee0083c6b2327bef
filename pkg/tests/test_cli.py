"""End-to-end tests for the command-line interface.

Every subcommand is exercised through dispatch() so the exit-code
contract is what real shells observe: 0 success, 2 usage, 3 bad
configuration with the offending key named on stderr, 1 otherwise.
"""

import json

import numpy as np
import pytest

from lipem.bench import BenchReport
from lipem.cli import (
    RunConfig,
    dispatch,
    ingest_cmapss,
    load_dataset,
    write_report,
)
from lipem.errors import (
    DataNotFoundError,
    InvalidConfigurationError,
    ParseError,
)
from lipem.lip import Lip, read_records


class TestRunConfig:
    def test_no_path_gives_empty_config(self):
        cfg = RunConfig.load(None)
        assert cfg.section("em") == {}

    def test_known_sections_load(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"em": {"tau": 0.5}, "lip": {"p0": 0.02}}))
        cfg = RunConfig.load(str(path))
        assert cfg.section("em") == {"tau": 0.5}
        assert cfg.section("lip") == {"p0": 0.02}

    def test_unknown_section_names_itself(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"emm": {}}))
        with pytest.raises(InvalidConfigurationError) as err:
            RunConfig.load(str(path))
        assert err.value.key == "emm"

    def test_unknown_key_names_section_dot_key(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"em": {"learning_rate": 0.1}}))
        with pytest.raises(InvalidConfigurationError) as err:
            RunConfig.load(str(path))
        assert err.value.key == "em.learning_rate"

    def test_malformed_json_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(InvalidConfigurationError) as err:
            RunConfig.load(str(path))
        assert err.value.key == "config"

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(InvalidConfigurationError) as err:
            RunConfig.load(str(tmp_path / "absent.json"))
        assert err.value.key == "config"

    def test_non_object_document_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("[1, 2]")
        with pytest.raises(InvalidConfigurationError):
            RunConfig.load(str(path))

    def test_non_object_section_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"em": [1]}))
        with pytest.raises(InvalidConfigurationError) as err:
            RunConfig.load(str(path))
        assert err.value.key == "em"


class TestLoadDataset:
    def test_matrix_round_trip(self, tmp_path):
        rng = np.random.default_rng(42)
        arr = rng.normal(size=(7, 2))
        path = tmp_path / "data.txt"
        np.savetxt(path, arr)
        data = load_dataset(path)
        np.testing.assert_allclose(data.points, arr, rtol=1e-12)

    def test_single_column_promoted(self, tmp_path):
        path = tmp_path / "col.txt"
        np.savetxt(path, np.arange(5.0))
        assert load_dataset(path).points.shape == (5, 1)

    def test_non_numeric_raises_parse_error(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1.0 2.0\nfoo 3.0\n")
        with pytest.raises(ParseError):
            load_dataset(path)


class TestIngestCmapss:
    def test_fixture_engines_and_ordering(self, cmapss_dir):
        with pytest.warns(RuntimeWarning, match="expected 100 engines"):
            engines = ingest_cmapss(cmapss_dir / "train_FD001.txt")
        assert sorted(engines) == [1, 2, 3, 4, 5, 6]
        assert len(engines[1]) == 60
        assert len(engines[4]) == 120
        for data in engines.values():
            cycles = data.points[:, 0]
            assert np.all(np.diff(cycles) > 0)

    def test_sensor_nine_is_fourteenth_column(self, tmp_path):
        # unit 1, cycle 1, 3 settings, then sensors 1..21: sensor 9 sits
        # at whitespace column 14 (index 13)
        fields = [1, 1, 0.1, 0.2, 0.3] + [100 + s for s in range(1, 22)]
        path = tmp_path / "one.txt"
        path.write_text(" ".join(str(v) for v in fields) + "\n")
        with pytest.warns(RuntimeWarning):
            engines = ingest_cmapss(path)
        np.testing.assert_array_equal(engines[1].points, [[1.0, 109.0]])

    def test_wrong_column_count_reports_line(self, tmp_path):
        good = " ".join(["1"] * 26)
        bad = " ".join(["1"] * 25)
        path = tmp_path / "trunc.txt"
        path.write_text(good + "\n" + bad + "\n")
        with pytest.raises(ParseError) as err:
            ingest_cmapss(path)
        assert err.value.line_number == 2
        assert "26" in str(err.value)

    def test_non_numeric_field_reports_line(self, tmp_path):
        row = ["1", "x"] + ["0"] * 24
        path = tmp_path / "nan.txt"
        path.write_text(" ".join(row) + "\n")
        with pytest.raises(ParseError) as err:
            ingest_cmapss(path)
        assert err.value.line_number == 1

    def test_blank_lines_are_skipped(self, tmp_path):
        row = " ".join(["1"] * 26)
        path = tmp_path / "gaps.txt"
        path.write_text(row + "\n\n" + row.replace("1", "2", 1) + "\n")
        with pytest.warns(RuntimeWarning):
            engines = ingest_cmapss(path)
        assert sorted(engines) == [1, 2]

    def test_missing_file_names_download_instructions(self, tmp_path):
        with pytest.raises(DataNotFoundError) as err:
            ingest_cmapss(tmp_path / "train_FD001.txt")
        assert "train_FD001" in str(err.value)


def _grid_reports(methods=5, cutoffs=9):
    reports = []
    for m in range(methods):
        for i in range(cutoffs):
            reports.append(
                BenchReport.from_values(
                    f"method_{m}",
                    "rmse",
                    "cutoff",
                    round(0.9 - 0.1 * i, 2),
                    [float(m + i), float(m + i + 1)],
                )
            )
    return reports


class TestWriteReport:
    def test_empty_reports_write_header_only(self, tmp_path):
        paths = write_report([], tmp_path, "empty")
        csv = (tmp_path / "empty.csv").read_text()
        assert csv == "method,param,mean,stderr,replications\n"
        sidecar = json.loads((tmp_path / "empty.json").read_text())
        assert sidecar["reports"] == []
        assert [p.name for p in paths] == ["empty.csv", "empty.json"]

    def test_full_grid_row_count_and_order(self, tmp_path):
        write_report(_grid_reports(), tmp_path, "grid")
        lines = (tmp_path / "grid.csv").read_text().splitlines()
        assert lines[0] == "method,cutoff,mean,stderr,replications"
        assert len(lines) == 1 + 45
        keys = [
            (ln.split(",")[0], float(ln.split(",")[1])) for ln in lines[1:]
        ]
        assert keys == sorted(keys)

    def test_reruns_are_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        write_report(_grid_reports(), a, "grid", config_echo={"x": 1})
        write_report(_grid_reports(), b, "grid", config_echo={"x": 1})
        for name in ("grid.csv", "grid.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_curves_file_has_sorted_series(self, tmp_path):
        curves = {
            "x": np.array([0.0, 1.0]),
            "series": {"b": np.array([1.0, 2.0]), "a": np.array([3.0, 4.0])},
        }
        paths = write_report([], tmp_path, "plot", curves=curves)
        lines = (tmp_path / "plot_curves.csv").read_text().splitlines()
        assert lines[0] == "x,a,b"
        assert len(lines) == 3
        assert lines[1] == "0,3,1"
        assert paths[-1].name == "plot_curves.csv"

    def test_config_echo_lands_in_sidecar(self, tmp_path):
        write_report([], tmp_path, "cfg", config_echo={"alpha": [1, 2]})
        sidecar = json.loads((tmp_path / "cfg.json").read_text())
        assert sidecar["config"] == {"alpha": [1, 2]}


class TestExitCodes:
    def test_no_arguments_is_usage_error(self, capsys):
        assert dispatch([]) == 2
        capsys.readouterr()

    def test_unknown_subcommand_is_usage_error(self, capsys):
        assert dispatch(["transmogrify"]) == 2
        capsys.readouterr()

    def test_bad_config_key_exits_three_and_names_key(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"lip": {"p_zero": 0.01}}))
        records = tmp_path / "records.txt"
        records.write_text("")
        code = dispatch(
            [
                "fit-lip",
                "--records",
                str(records),
                "--sources",
                "3",
                "--config",
                str(cfg),
                "--out",
                str(tmp_path / "lip.txt"),
            ]
        )
        assert code == 3
        err = capsys.readouterr().err
        assert "lip.p_zero" in err
        assert err.startswith("error:")

    def test_missing_records_file_exits_one(self, tmp_path, capsys):
        code = dispatch(
            [
                "fit-lip",
                "--records",
                str(tmp_path / "absent.txt"),
                "--sources",
                "3",
                "--out",
                str(tmp_path / "lip.txt"),
            ]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestFitLipCommand:
    def test_empty_records_fit_writes_baseline_prior(self, tmp_path, capsys):
        records = tmp_path / "records.txt"
        records.write_text("")
        out = tmp_path / "lip.txt"
        code = dispatch(
            ["fit-lip", "--records", str(records), "--sources", "3", "--out", str(out)]
        )
        assert code == 0
        assert f"wrote {out} (3 sources)" in capsys.readouterr().out
        lip = Lip.read(out)
        np.testing.assert_allclose(lip.pi, np.full(3, 0.01), atol=1e-8)

    def test_fit_respects_config_p0(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"lip": {"p0": 0.2}}))
        records = tmp_path / "records.txt"
        records.write_text("")
        out = tmp_path / "lip.txt"
        code = dispatch(
            [
                "fit-lip",
                "--records",
                str(records),
                "--sources",
                "2",
                "--config",
                str(cfg),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        capsys.readouterr()
        np.testing.assert_allclose(Lip.read(out).pi, [0.2, 0.2], atol=1e-8)


class TestSimulateOracleCommand:
    def test_round_trip_through_records_file(self, tmp_path, capsys):
        out = tmp_path / "records.txt"
        code = dispatch(
            [
                "simulate-oracle",
                "--alpha",
                "0,1.0,-1.0",
                "--sizes",
                "2,2",
                "--count",
                "50",
                "--seed",
                "7",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        assert f"wrote {out} (50 records)" in capsys.readouterr().out
        records = read_records(out)
        assert len(records) == 50
        for rec in records:
            assert len(rec.subgroup) == 2
            assert set(rec.subgroup) <= {1, 2}
            assert rec.choice == 0 or rec.choice in rec.subgroup

    def test_same_seed_reproduces_file_bytes(self, tmp_path, capsys):
        args = [
            "simulate-oracle",
            "--alpha",
            "0,0.5,-0.5",
            "--count",
            "30",
            "--sizes",
            "2,2",
            "--seed",
            "11",
        ]
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        assert dispatch(args + ["--out", str(a)]) == 0
        assert dispatch(args + ["--out", str(b)]) == 0
        capsys.readouterr()
        assert a.read_bytes() == b.read_bytes()

    def test_oversized_subgroup_exits_three(self, tmp_path, capsys):
        code = dispatch(
            [
                "simulate-oracle",
                "--alpha",
                "0,1.0",
                "--sizes",
                "3",
                "--out",
                str(tmp_path / "r.txt"),
            ]
        )
        assert code == 3
        capsys.readouterr()


class TestRunEmCommand:
    def _write_datasets(self, tmp_path, rng):
        target = tmp_path / "target.txt"
        near = tmp_path / "near.txt"
        far = tmp_path / "far.txt"
        np.savetxt(target, rng.normal(0.0, 1.0, size=(4, 1)))
        np.savetxt(near, rng.normal(0.05, 1.0, size=(200, 1)))
        np.savetxt(far, rng.normal(5.0, 1.0, size=(200, 1)))
        return target, near, far

    def test_uniform_prior_run_writes_report(self, tmp_path, capsys):
        rng = np.random.default_rng(42)
        target, near, far = self._write_datasets(tmp_path, rng)
        out = tmp_path / "report.txt"
        code = dispatch(
            [
                "run-em",
                "--target",
                str(target),
                "--sources",
                str(near),
                str(far),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        stdout = capsys.readouterr().out
        assert "converged=" in stdout and "weights=[" in stdout
        text = out.read_text()
        assert text.startswith("# em run report")
        assert "# columns: t beta_1 beta_2 w_1 w_2 theta_1 delta_w" in text

    def test_prior_file_drives_the_run(self, tmp_path, capsys):
        rng = np.random.default_rng(42)
        target, near, far = self._write_datasets(tmp_path, rng)
        prior = tmp_path / "lip.txt"
        Lip(pi=np.array([0.9, 0.01]), provenance="file").write(prior)
        out = tmp_path / "report.txt"
        code = dispatch(
            [
                "run-em",
                "--target",
                str(target),
                "--sources",
                str(near),
                str(far),
                "--lip",
                str(prior),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        capsys.readouterr()
        rows = [
            ln
            for ln in out.read_text().splitlines()
            if ln and not ln.startswith("#")
        ]
        first = rows[0].split()
        # iteration zero echoes the prior before any update
        np.testing.assert_allclose(
            [float(first[3]), float(first[4])], [0.9, 0.01], rtol=1e-10
        )

    def test_prior_source_count_mismatch_exits_three(self, tmp_path, capsys):
        rng = np.random.default_rng(42)
        target, near, far = self._write_datasets(tmp_path, rng)
        prior = tmp_path / "lip.txt"
        Lip(pi=np.array([0.9]), provenance="file").write(prior)
        code = dispatch(
            [
                "run-em",
                "--target",
                str(target),
                "--sources",
                str(near),
                str(far),
                "--lip",
                str(prior),
                "--out",
                str(tmp_path / "r.txt"),
            ]
        )
        assert code == 3
        assert "[key: lip]" in capsys.readouterr().err


class TestBenchOracleMseCommand:
    def _run(self, tmp_path, capsys, out_name):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {"oracle": {"replications": 2000, "taus": [0.0], "n_weight_vectors": 2}}
            )
        )
        out = tmp_path / out_name
        code = dispatch(
            [
                "bench",
                "oracle-mse",
                "--config",
                str(cfg),
                "--seed",
                "42",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        return out, capsys.readouterr().out

    def test_closed_form_row_and_summary_line(self, tmp_path, capsys):
        out, stdout = self._run(tmp_path, capsys, "reports")
        lines = (out / "oracle_mse.csv").read_text().splitlines()
        assert lines[0] == "method,tau,mean,stderr,replications"
        closed = next(ln for ln in lines if ln.startswith("closed_form,"))
        assert closed.split(",")[2] == "0.00165562913907"
        assert any(ln.startswith("fixed_w1_predicted,") for ln in lines)
        assert any(ln.startswith("fixed_w2_mc,") for ln in lines)
        assert "tau=0 closed_form=0.00165562913907" in stdout
        payload = json.loads((out / "oracle_mse.json").read_text())
        assert abs(payload[0]["z_score"]) <= 4.0

    def test_reruns_are_byte_identical(self, tmp_path, capsys):
        first, _ = self._run(tmp_path, capsys, "run_a")
        second, _ = self._run(tmp_path, capsys, "run_b")
        for name in ("oracle_mse.csv", "oracle_mse.json"):
            assert (first / name).read_bytes() == (second / name).read_bytes()


class TestBenchGaussianCommand:
    def test_tiny_run_emits_all_three_files(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {"experiment": {"dims": [1], "replications": 3, "curve_points": 5}}
            )
        )
        out = tmp_path / "reports"
        code = dispatch(
            ["bench", "gaussian", "--config", str(cfg), "--out", str(out)]
        )
        assert code == 0
        stdout = capsys.readouterr().out
        for name in ("gaussian.csv", "gaussian.json", "gaussian_curves.csv"):
            assert (out / name).exists()
            assert name in stdout
        lines = (out / "gaussian.csv").read_text().splitlines()
        assert lines[0] == "method,dim,mean,stderr,replications"
        assert len(lines) == 1 + 5
        curves = (out / "gaussian_curves.csv").read_text().splitlines()
        assert len(curves) == 1 + 5
        sidecar = json.loads((out / "gaussian.json").read_text())
        assert sidecar["config"]["replications"] == 3

    def test_unknown_experiment_key_exits_three(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"experiment": {"dims": [1], "reps": 3}}))
        code = dispatch(
            ["bench", "gaussian", "--config", str(cfg), "--out", str(tmp_path / "r")]
        )
        assert code == 3
        assert "experiment.reps" in capsys.readouterr().err


class TestElicitCommand:
    def test_missing_context_exits_three(self, tmp_path, capsys):
        summaries = tmp_path / "summaries.json"
        summaries.write_text(json.dumps({"1": "first", "2": "second"}))
        code = dispatch(
            [
                "elicit",
                "--summaries",
                str(summaries),
                "--out",
                str(tmp_path / "records.txt"),
            ]
        )
        assert code == 3
        assert "[key: context]" in capsys.readouterr().err
