import csv
import json

import numpy as np
import pytest

from mnra import cli, experiments
from mnra.images import read_ppm, write_ppm
from mnra.problems import generate_low_nrank


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_defaults(self):
        spec = experiments.build_spec().resolved()
        assert spec.tau == 1.4 and spec.tol == 1e-8 and spec.xi == 1e-2
        assert spec.weights is None and spec.max_iter == 5000
        assert spec.shape == (20, 30, 40) and spec.ranks == (2, 2, 2)

    def test_image_defaults(self):
        spec = experiments.build_spec({"kind": "image"}).resolved()
        assert spec.xi == 1e-4 and spec.ranks == (30, 30, 3) and spec.sr == (0.3,)

    def test_override_beats_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"tau": 0.7, "seed": 5, "shape": [4, 5, 6]}))
        args = cli.build_parser().parse_args(["synthetic", "--config", str(path), "--tau", "1.0"])
        spec = cli.spec_from_args(args)
        assert spec.tau == 1.0 and spec.seed == 5 and spec.shape == (4, 5, 6)

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"taux": 1.0}))
        with pytest.raises(KeyError, match="taux"):
            experiments.load_config(path)

    def test_malformed_tau_names_field(self):
        with pytest.raises(ValueError, match="^tau:"):
            experiments.parse_field("tau", "abc")

    def test_sequence_parsing(self):
        assert experiments.parse_field("shape", "20x30x40") == (20, 30, 40)
        assert experiments.parse_field("sr", "0.3,0.6") == (0.3, 0.6)
        with pytest.raises(ValueError, match="ranks"):
            experiments.parse_field("ranks", [1.5, 2])

    @pytest.mark.parametrize(
        "fields",
        [dict(trials=0), dict(sr=(0.0,)), dict(kind="tau_sweep", taus=()), dict(kind="tau_sweep", taus=(2.0,)),
         dict(shape=(3, 3), ranks=(1, 1, 1)), dict(kind="other")],
    )
    def test_invalid_specs(self, fields):
        with pytest.raises(ValueError):
            experiments.ExperimentSpec(**fields).resolved()

    def test_auto_svd(self):
        spec = experiments.build_spec().resolved()
        assert spec.solver_config(1.4, 0, noisy_data=False).svd == "sketch"
        assert spec.solver_config(1.4, 0, noisy_data=True).svd == "exact"
        spec = experiments.build_spec(overrides={"svd": "exact"}).resolved()
        assert spec.solver_config(1.4, 0, noisy_data=False).svd == "exact"


class TestExitCodes:
    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["synthetic", "--bogus"])
        assert exc.value.code == 1

    def test_bad_value(self, capsys, tmp_path):
        assert cli.main(["synthetic", "--tau", "abc", "--out", str(tmp_path)]) == 1
        assert "tau" in capsys.readouterr().err

    def test_runtime_failure(self, capsys, tmp_path):
        missing = tmp_path / "missing.ppm"
        assert cli.main(["image", "--image", str(missing), "--out", str(tmp_path / "o")]) == 2


class TestSynthetic:
    ARGS = ["synthetic", "--shape", "8x9x10", "--ranks", "2x2x2", "--trials", "2"]

    def test_full_observation(self, tmp_path):
        out = tmp_path / "full"
        assert cli.main(self.ARGS + ["--sr", "1", "--solver", "ihtr", "--svd", "exact", "--out", str(out)]) == 0
        (row,) = read_rows(out / "summary.csv")
        assert float(row["mean_metric"]) <= 1e-8 and row["metric"] == "rel_err"

    def test_summary_deterministic_and_traces_flagged(self, tmp_path):
        runs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert cli.main(self.ARGS + ["--sr", "0.6", "--out", str(out)]) == 0
            runs.append(read_rows(out / "summary.csv"))
        strip = [[{k: v for k, v in r.items() if k != "mean_seconds"} for r in rows] for rows in runs]
        assert strip[0] == strip[1]
        assert list(runs[0][0]) == ["setting", "solver", "mean_iter", "mean_metric", "mean_seconds",
                                    "metric", "trials", "failures"]
        traces = sorted((tmp_path / "a" / "traces").glob("*.csv"))
        assert len(traces) == 4
        for path in traces:
            rows = read_rows(path)
            last = rows[-1]
            assert last["flag"] in ("converged", "max_iter")
            if last["flag"] == "converged":
                assert float(last["rel_change"]) < 1e-8

    def test_noisy_reports_nrmse(self, tmp_path):
        out = tmp_path / "noisy"
        assert cli.main(self.ARGS + ["--sigma", "0.02", "--solver", "ihtr", "--out", str(out)]) == 0
        (row,) = read_rows(out / "summary.csv")
        assert row["metric"] == "nrmse"


class TestTauSweep:
    def test_boundary_tau_recorded(self, tmp_path):
        out = tmp_path / "tau"
        argv = ["tau-sweep", "--shape", "6x6x7x7", "--ranks", "2x2x2x2", "--sr", "0.6", "--trials", "1",
                "--taus", "0.4,1.5", "--solver", "ihtr", "--out", str(out)]
        assert cli.main(argv) == 0
        rows = read_rows(out / "tau_sweep.csv")
        assert [float(r["tau"]) for r in rows] == [0.4, 1.5]
        assert all(int(r["trials"]) == 1 for r in rows)


class TestImage:
    def test_full_observation_recovers_target(self, tmp_path):
        t = generate_low_nrank((12, 10, 3), (3, 3, 2), seed=0)
        t = (t - t.min()) / (t.max() - t.min())
        src = tmp_path / "in.ppm"
        write_ppm(src, np.rint(t * 255).astype(np.uint8))
        out = tmp_path / "img"
        argv = ["image", "--image", str(src), "--ranks", "3x3x2", "--sr", "1", "--solver", "ihtr", "--out", str(out)]
        assert cli.main(argv) == 0
        (row,) = read_rows(out / "image_metrics.csv")
        assert float(row["rel_err"]) <= 1e-8
        diff = read_ppm(out / "recovered_ihtr_sr1.ppm").astype(int) - read_ppm(out / "target.ppm").astype(int)
        assert np.abs(diff).max() <= 1
