import json

import pytest

from ergmflow.cli import main


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    code = main(["synth", "--nodes", "50", "--seed", "11", "--out", str(out)])
    assert code == 0
    return out


def _fit_config(synth_dir, out, chain=None, estimator=None, model=None):
    config = {
        "seed": 7,
        "flows": str(synth_dir / "flows.csv"),
        "lagged_flows": str(synth_dir / "lagged_flows.csv"),
        "nodes": str(synth_dir / "nodes.csv"),
        "distances": str(synth_dir / "distances.csv"),
        "model": model or json.loads((synth_dir / "meta.json").read_text())["model"],
        "estimator": estimator or {"ridge_lambda": 0.01},
        "chain": chain or {"n_networks": 10, "burn_in": 4000, "thin": 1000},
        "out": str(out),
    }
    path = out / "config.json"
    out.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config))
    return path


class TestSynth:
    def test_files_written(self, synth_dir):
        for name in ("flows.csv", "lagged_flows.csv", "nodes.csv",
                     "distances.csv", "meta.json", "manifest.json"):
            assert (synth_dir / name).exists()
        meta = json.loads((synth_dir / "meta.json").read_text())
        assert meta["n_nodes"] == 50
        assert meta["edges"] > 0


class TestFit:
    def test_fit_converges_and_writes_reports(self, synth_dir, tmp_path):
        cfg = _fit_config(synth_dir, tmp_path / "run")
        code = main(["fit", "--config", str(cfg)])
        assert code == 0
        fit = json.loads((tmp_path / "run" / "fit.json").read_text())
        assert fit["converged"]
        assert len(fit["theta"]) == len(fit["labels"])
        assert (tmp_path / "run" / "coefficients.csv").exists()
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
        assert manifest["command"] == "fit"
        assert "config_sha256" in manifest
        # timestamps live only in the sidecar log
        assert "time" not in json.dumps(manifest).lower()

    def test_rerun_is_byte_identical(self, synth_dir, tmp_path):
        cfg_a = _fit_config(synth_dir, tmp_path / "a")
        cfg_b = _fit_config(synth_dir, tmp_path / "b")
        assert main(["fit", "--config", str(cfg_a)]) == 0
        assert main(["fit", "--config", str(cfg_b)]) == 0
        csv_a = (tmp_path / "a" / "coefficients.csv").read_bytes()
        csv_b = (tmp_path / "b" / "coefficients.csv").read_bytes()
        assert csv_a == csv_b

    def test_unknown_covariate_exits_2(self, synth_dir, tmp_path):
        model = {"terms": [{"kind": "sum"}, {"kind": "dyad", "covariate": "bogus"}]}
        cfg = _fit_config(synth_dir, tmp_path / "bad", model=model)
        assert main(["fit", "--config", str(cfg)]) == 2

    def test_missing_flow_file_exits_4(self, synth_dir, tmp_path):
        cfg_path = _fit_config(synth_dir, tmp_path / "gone")
        config = json.loads(cfg_path.read_text())
        config["flows"] = str(tmp_path / "nope.csv")
        cfg_path.write_text(json.dumps(config))
        assert main(["fit", "--config", str(cfg_path)]) == 4

    def test_nonconvergence_exits_3_with_report(self, synth_dir, tmp_path):
        cfg = _fit_config(synth_dir, tmp_path / "nc",
                          estimator={"ridge_lambda": 0.01, "max_iter": 1,
                                     "tol": 1e-14})
        assert main(["fit", "--config", str(cfg)]) == 3
        fit = json.loads((tmp_path / "nc" / "fit.json").read_text())
        assert not fit["converged"]

    def test_missing_model_exits_2(self, synth_dir, tmp_path):
        cfg_path = _fit_config(synth_dir, tmp_path / "nomodel")
        config = json.loads(cfg_path.read_text())
        del config["model"]
        cfg_path.write_text(json.dumps(config))
        assert main(["fit", "--config", str(cfg_path)]) == 2


@pytest.fixture(scope="module")
def fitted(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fitrun")
    cfg = _fit_config(synth_dir, out)
    assert main(["fit", "--config", str(cfg)]) == 0
    return cfg, out / "fit.json"


class TestGof:
    def test_writes_adequacy_files(self, fitted, tmp_path):
        cfg, fit_path = fitted
        code = main(["gof", "--config", str(cfg), "--fit", str(fit_path),
                     "--out", str(tmp_path / "gof")])
        assert code == 0
        payload = json.loads((tmp_path / "gof" / "adequacy.json").read_text())
        assert "in_correlation" in payload
        assert -1.0 <= payload["in_correlation"] <= 1.0
        header = (tmp_path / "gof" / "adequacy_in_volume.csv").read_text().splitlines()[0]
        assert header == "node_id,observed,median,min,max,q2.5,q97.5"
        assert (tmp_path / "gof" / "adequacy_out_volume.csv").exists()

    def test_missing_fit_file_exits_4(self, fitted, tmp_path):
        cfg, _fit_path = fitted
        code = main(["gof", "--config", str(cfg),
                     "--fit", str(tmp_path / "missing.json"),
                     "--out", str(tmp_path / "gof2")])
        assert code == 4


class TestSimulate:
    def test_writes_networks(self, fitted, tmp_path):
        cfg, fit_path = fitted
        code = main(["simulate", "--config", str(cfg), "--fit", str(fit_path),
                     "--out", str(tmp_path / "sims")])
        assert code == 0
        files = sorted((tmp_path / "sims").glob("sim_*.csv"))
        assert len(files) == 10
        assert files[0].read_text().splitlines()[0] == "origin,destination,count"

    def test_deterministic_outputs(self, fitted, tmp_path):
        cfg, fit_path = fitted
        for sub in ("s1", "s2"):
            assert main(["simulate", "--config", str(cfg), "--fit",
                         str(fit_path), "--out", str(tmp_path / sub)]) == 0
        a = (tmp_path / "s1" / "sim_004.csv").read_bytes()
        b = (tmp_path / "s2" / "sim_004.csv").read_bytes()
        assert a == b


class TestKnockout:
    def test_empty_label_set_is_noop(self, fitted, tmp_path):
        cfg, fit_path = fitted
        code = main(["knockout", "--config", str(cfg), "--fit", str(fit_path),
                     "--labels", "", "--out", str(tmp_path / "ko")])
        assert code == 0
        payload = json.loads((tmp_path / "ko" / "knockout.json").read_text())
        assert payload["pct_diff"] == 0.0

    def test_unknown_label_exits_2(self, fitted, tmp_path):
        cfg, fit_path = fitted
        code = main(["knockout", "--config", str(cfg), "--fit", str(fit_path),
                     "--labels", "nope", "--out", str(tmp_path / "ko2")])
        assert code == 2

    def test_real_knockout_reports_change(self, fitted, tmp_path):
        cfg, fit_path = fitted
        code = main(["knockout", "--config", str(cfg), "--fit", str(fit_path),
                     "--labels", "dyad:political_dissim,dyad:rural_dissim",
                     "--out", str(tmp_path / "ko3")])
        assert code == 0
        payload = json.loads((tmp_path / "ko3" / "knockout.json").read_text())
        assert payload["baseline_mean"] > 0
        assert payload["zeroed_labels"] == ["dyad:political_dissim",
                                            "dyad:rural_dissim"]


class TestSummarizeAndDissim:
    def test_summarize_prints_and_writes(self, synth_dir, tmp_path, capsys):
        code = main(["summarize", "--flows", str(synth_dir / "flows.csv"),
                     "--out", str(tmp_path / "sum")])
        assert code == 0
        out = capsys.readouterr().out
        assert "vertices" in out and "total_flow" in out
        text = (tmp_path / "sum" / "summary.csv").read_text()
        assert text.startswith("statistic,value")

    def test_dissim_writes_pairs(self, synth_dir, tmp_path):
        code = main(["dissim", "--nodes", str(synth_dir / "nodes.csv"),
                     "--out", str(tmp_path / "dis")])
        assert code == 0
        lines = (tmp_path / "dis" / "dissimilarity.csv").read_text().splitlines()
        assert lines[0] == "id_a,id_b,political_dissim,rural_dissim,racial_dissim"
        assert len(lines) == 1 + 50 * 49 // 2

    def test_summarize_missing_file_exits_4(self, tmp_path):
        assert main(["summarize", "--flows", str(tmp_path / "none.csv")]) == 4
