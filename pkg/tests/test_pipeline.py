import json
from pathlib import Path

import pytest
import yaml

from qnmcmc import cli
from qnmcmc.config import config_from_mapping, load_config
from qnmcmc.errors import ConfigError, NotFoundError
from qnmcmc.pipeline import report, run_pipeline

ROOT = Path(__file__).resolve().parents[1]
RESULT_FILES = ["chains.csv", "magnetization.csv", "histogram.csv", "autocorrelation.csv",
                "magnetization_summary.csv", "exact_histogram.csv"]


def small_spectral(out, **kw):
    data = {"master_seed": 3, "n_values": [3, 4], "betas": [0.5, 10.0], "instances": 2,
            "dataset": {"train_size": 80, "test_size": 20}, "made": {"epochs": 2}, "out_dir": str(out)}
    data.update(kw)
    return config_from_mapping(data)


def smoke(out, **kw):
    data = yaml.safe_load((ROOT / "configs" / "smoke.yaml").read_text())
    data.update(out_dir=str(out), **kw)
    return config_from_mapping(data)


def read_all(d, names):
    return {f: (Path(d) / "results" / f).read_bytes() for f in names}


def test_smoke_run_and_report(tmp_path):
    out = run_pipeline(smoke(tmp_path / "a"))
    for f in RESULT_FILES:
        assert (out / "results" / f).exists()
    summary = report(out)
    assert {r["proposal"] for r in summary["magnetization"]} == {"ssf", "uniform", "gns_optimized", "gns_fixed"}
    assert all(r["exact_mean"] == 0.0 for r in summary["magnetization"])
    for f in ("mhat2.csv", "histogram.csv", "autocorrelation_mean.csv", "summary.json"):
        assert (out / "report" / f).exists()
    header = (out / "results" / "chains.csv").read_text().splitlines()[0]
    assert header.startswith("master_seed,instance_seed,chain_seed")
    assert json.loads((out / "manifest.json").read_text())["status"] == "complete"
    for sub in ("instances", "qaoa", "datasets", "models", "chains"):
        assert any((out / sub).iterdir())


def test_smoke_is_byte_reproducible_across_workers(tmp_path):
    a = run_pipeline(smoke(tmp_path / "a"))
    b = run_pipeline(smoke(tmp_path / "b", workers=2))
    assert read_all(a, RESULT_FILES) == read_all(b, RESULT_FILES)


def test_spectral_sweep_and_ratios(tmp_path):
    out = run_pipeline(small_spectral(tmp_path / "s"))
    lines = (out / "results" / "spectral_gaps.csv").read_text().splitlines()
    assert lines[0] == "master_seed,instance_seed,chain_seed,n,beta,instance,proposal,gap,lambda2_modulus"
    assert len(lines) == 1 + 2 * 2 * 2 * 4
    summary = report(out)
    gaps = {}
    for ln in lines[1:]:
        r = ln.split(",")
        gaps[(r[3], r[4], r[5], r[6])] = float(r[7])
    for ln in (out / "report" / "gap_ratios.csv").read_text().splitlines()[1:]:
        beta, n, inst, _, prop, ratio = ln.split(",")
        assert float(ratio) == gaps[(n, beta, inst, prop)] / gaps[(n, beta, inst, "uniform")]
    assert {"cells", "temperature_ordering"} <= set(summary)


def test_resume_skips_finished_units(tmp_path):
    cfg = small_spectral(tmp_path / "r", n_values=[3], betas=[1.0])
    out = run_pipeline(cfg)
    first = (out / "results" / "spectral_gaps.csv").read_bytes()
    part = out / "parts" / "n03_i000.json"
    stamp = part.stat().st_mtime_ns
    (out / "parts" / "n03_i001.json").unlink()
    run_pipeline(cfg)
    assert part.stat().st_mtime_ns == stamp
    assert (out / "results" / "spectral_gaps.csv").read_bytes() == first


def test_changed_config_refuses_existing_directory(tmp_path):
    run_pipeline(small_spectral(tmp_path / "c", n_values=[3], instances=1))
    with pytest.raises(ConfigError):
        run_pipeline(small_spectral(tmp_path / "c", n_values=[3], instances=1, master_seed=9))


def test_empty_sweep_warns(tmp_path):
    out = run_pipeline(small_spectral(tmp_path / "e", instances=0))
    summary = report(out)
    assert summary["warnings"] and summary["cells"] == []


def test_report_lists_missing_artifacts(tmp_path):
    with pytest.raises(NotFoundError, match="config.json"):
        report(tmp_path)


def test_large_n_records_missing_oracle(tmp_path):
    cfg = smoke(tmp_path / "big", n_values=[21], instances=1, proposals=["uniform"],
                mcmc={"steps": 300, "chains": 2, "burn_in": 10, "max_lag": 5})
    out = run_pipeline(cfg)
    assert "no exact oracle" in (out / "results" / "magnetization_summary.csv").read_text()
    assert len((out / "results" / "exact_histogram.csv").read_text().splitlines()) == 1


def test_shipped_configs_validate():
    for path in sorted((ROOT / "configs").glob("*.yaml")):
        load_config(path)


def test_cli_round_trip(tmp_path, capsys):
    inst = tmp_path / "inst.json"
    assert cli.main(["generate", "--n", "5", "--seed", "2", "--out", str(inst)]) == 0
    assert cli.main(["qaoa", "--instance", str(inst), "--samples", "300", "--out", str(tmp_path / "q")]) == 0
    assert (tmp_path / "q" / "trace.csv").exists()
    assert cli.main(["train", "--dataset", str(tmp_path / "q" / "dataset.txt"), "--epochs", "3",
                     "--out", str(tmp_path / "m")]) == 0
    model = str(tmp_path / "m" / "model.json")
    assert cli.main(["mcmc", "--instance", str(inst), "--beta", "2", "--proposal", "gns", "--model", model,
                     "--steps", "3000", "--out", str(tmp_path / "c")]) == 0
    assert cli.main(["analyze", "--instance", str(inst), "--beta", "2", "--proposal", "gns", "--model", model,
                     "--out", str(tmp_path / "g")]) == 0
    assert (tmp_path / "g" / "gap.csv").read_text().startswith("n,beta,instance_seed,proposal,gap")
    assert cli.main(["analyze", "--instance", str(inst), "--beta", "2", "--proposal", "gns",
                     "--trace", str(tmp_path / "c" / "trace.npy"), "--burn-in", "500", "--max-lag", "50",
                     "--out", str(tmp_path / "d")]) == 0
    for f in ("mhat2.csv", "histogram.csv", "autocorrelation.csv"):
        assert (tmp_path / "d" / f).exists()
    assert "spectral gap" in capsys.readouterr().out


def test_cli_pipeline_with_overrides(tmp_path):
    out = tmp_path / "p"
    rc = cli.main(["pipeline", "--config", str(ROOT / "configs" / "smoke.yaml"), "--out", str(out),
                   "--master-seed", "11", "--set", "instances=1", "--set", "mcmc.write_traces=false"])
    assert rc == 0
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["master_seed"] == 11 and cfg["instances"] == 1 and not (out / "chains").exists()
    assert cli.main(["report", str(out)]) == 0


def test_cli_reports_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("mcmc: {stepz: 1}\n")
    assert cli.main(["pipeline", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "mcmc.stepz" in capsys.readouterr().err
    assert cli.main(["report", str(tmp_path / "nothing")]) == 2
