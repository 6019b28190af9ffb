"""End-to-end experiments: QAOA sampling -> MADE training -> MCMC/diagnostics.

Work is split into units, one per (n, instance). Every unit derives all of
its seeds from the master seed, writes its own artifacts and a result part;
parts are merged into sorted CSVs so output bytes do not depend on the
number of workers or on resumption.
"""
import csv
import json
import logging
import math
import shutil
import statistics
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import seeding
from .analysis import (
    aggregate_mhat2,
    autocorrelation,
    build_transition_matrix,
    exact_magnetization,
    exact_magnetization_distribution,
    first_lag_below,
    magnetization_histogram,
    magnetization_series,
    pooled_magnetization,
    spectral_gap,
    write_csv,
)
from .config import PROPOSALS, ExperimentConfig, config_from_mapping
from .errors import ConfigError, NotFoundError, UndefinedAutocorrelationError
from .made import MadeArchitecture, MadeModel, TrainConfig, train, write_dataset
from .mcmc import make_proposal, run_chain
from .qsim import (
    OptimizerConfig,
    build_cost_diagonal,
    energy_expectation,
    fixed_angles,
    optimize_params,
    run_qaoa,
    sample_bitstrings,
    to_instance_convention,
    write_trace_csv,
)
from .spinglass import ENUMERATION_CAP, BoltzmannTarget, generate_instance

log = logging.getLogger(__name__)

MODES = {"optimized": 0, "fixed_angle": 1}
PROPOSAL_MODE = {"gns_optimized": "optimized", "gns_fixed": "fixed_angle"}
NO_ORACLE = "no exact oracle"


def unit_key(n: int, i: int) -> str:
    return f"n{n:02d}_i{i:03d}"


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _bits(idx: np.ndarray, n: int) -> np.ndarray:
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.int8)


def _train_models(cfg: ExperimentConfig, inst, i: int, out: Path, key: str) -> dict:
    n = inst.n
    q = cfg.qaoa
    modes = sorted({PROPOSAL_MODE[p] for p in cfg.proposals if p in PROPOSAL_MODE}, key=MODES.get)
    if not modes:
        return {}
    diag = build_cost_diagonal(inst, cap=q.max_qubits)
    start = fixed_angles(q.p, q.angle_table, fallback=q.fallback,
                         gamma_max=q.ramp_gamma_max, beta_max=q.ramp_beta_max)
    if q.angle_convention == "sk":
        start = to_instance_convention(start, n)
    models = {}
    for mode in modes:
        mid = MODES[mode]
        init_energy = energy_expectation(run_qaoa(diag, start), diag)
        if mode == "optimized":
            params, final_energy, trace = optimize_params(diag, start, OptimizerConfig(q.gtol, q.maxiter))
            write_trace_csv(trace, out / "qaoa" / f"{key}_{mode}_trace.csv")
        else:
            params, final_energy, trace = start, init_energy, []
        _dump(out / "qaoa" / f"{key}_{mode}.json", {
            "mode": mode, "p": q.p, **params.to_dict(),
            "initial_energy": init_energy, "final_energy": final_energy,
            "iterations": max(len(trace) - 1, 0),
        })
        total = cfg.dataset.train_size + cfg.dataset.test_size
        sample_seed = seeding.derive_seed(cfg.master_seed, seeding.QAOA_SAMPLES, n, i, mid)
        bits = _bits(sample_bitstrings(run_qaoa(diag, params), total, sample_seed), n)
        write_dataset(bits, out / "datasets" / f"{key}_{mode}.txt")

        m = cfg.made
        arch = MadeArchitecture(n, m.hidden_layers, m.hidden_width_factor * n)
        init_seed = seeding.derive_seed(cfg.master_seed, seeding.MADE_INIT, n, i, mid)
        train_seed = seeding.derive_seed(cfg.master_seed, seeding.MADE_TRAIN, n, i, mid)
        tc = TrainConfig(m.learning_rate, m.batch_size, m.epochs, m.beta1, m.beta2, m.eps,
                         test_fraction=cfg.dataset.test_size / total, seed=train_seed)
        model, curves = train(MadeModel.initialize(arch, init_seed), bits, tc)
        model.save(out / "models" / f"{key}_{mode}.json", init_seed=init_seed, train_seed=train_seed,
                   qaoa_sample_seed=sample_seed)
        curves.write_csv(out / "models" / f"{key}_{mode}_loss.csv")
        models[mode] = model
    return models


def _proposal(name: str, n: int, models: dict):
    if name in PROPOSAL_MODE:
        return make_proposal("gns", n, models[PROPOSAL_MODE[name]])
    return make_proposal(name, n)


def _spectral_unit(cfg, inst, i, models) -> dict:
    rows = []
    for beta in cfg.betas:
        target = BoltzmannTarget(inst, beta)
        for name in cfg.proposals:
            rep = spectral_gap(build_transition_matrix(target, _proposal(name, inst.n, models)), target)
            rows.append({"beta": beta, "proposal": name, "gap": rep.gap,
                         "lambda2_modulus": rep.lambda2_modulus})
    return {"spectral": rows}


def _chain_unit(cfg, inst, i, models, out: Path, key: str) -> dict:
    n, mc = inst.n, cfg.mcmc
    result = {"chains": [], "mhat2": [], "histogram": [], "autocorrelation": [], "summary": []}
    for b_idx, beta in enumerate(cfg.betas):
        target = BoltzmannTarget(inst, beta)
        if n <= ENUMERATION_CAP:
            exact_m = exact_magnetization(target)
            exact_hist = exact_magnetization_distribution(target).tolist()
        else:
            exact_m, exact_hist = NO_ORACLE, None
        for name in cfg.proposals:
            prop = _proposal(name, n, models)
            pid = PROPOSALS.index(name)
            series, corr = [], []
            for c in range(mc.chains):
                seed = seeding.derive_seed(cfg.master_seed, seeding.CHAIN, n, i, b_idx, pid, c)
                chain = run_chain(target, prop, mc.steps, seed=seed)
                if mc.write_traces:
                    stem = out / "chains" / f"{key}_b{b_idx}_{name}_c{c:02d}"
                    stem.parent.mkdir(parents=True, exist_ok=True)
                    chain.write_trace_npy(f"{stem}.npy")
                    chain.write_summary(f"{stem}.json")
                s = magnetization_series(chain)
                series.append(s)
                values, counts = magnetization_histogram(chain, mc.burn_in)
                try:
                    cc = autocorrelation(s.values, mc.burn_in, mc.max_lag)
                except UndefinedAutocorrelationError:
                    cc = np.full(mc.max_lag + 1, np.nan)
                corr.append(cc)
                base = {"beta": beta, "proposal": name, "chain": c, "chain_seed": seed}
                result["chains"].append({**base, "acceptance_rate": chain.acceptance_rate,
                                         "final_mean_m": float(s.running_mean[-1]),
                                         "final_mhat2": float(s.mhat2[-1])})
                result["histogram"].append({**base, "counts": counts.tolist()})
                result["autocorrelation"].append({**base, "c": cc.tolist()})
            mean, std = aggregate_mhat2(series)
            steps = np.arange(1, mean.size + 1)[:: mc.mhat2_stride]
            result["mhat2"].append({"beta": beta, "proposal": name, "step": steps.tolist(),
                                    "mean": mean[steps - 1].tolist(), "std": std[steps - 1].tolist()})
            pooled = pooled_magnetization(series)
            c_mean = np.mean(np.vstack(corr), axis=0)
            result["summary"].append({
                "beta": beta, "proposal": name, **pooled, "exact_mean": exact_m,
                "exact_histogram": exact_hist,
                "lag_below_0.1": first_lag_below(c_mean, 0.1),
                "acceptance_rate": float(np.mean([r["acceptance_rate"] for r in result["chains"]
                                                  if r["proposal"] == name and r["beta"] == beta])),
            })
    return result


def run_unit(cfg_dict: dict, n: int, i: int) -> dict:
    """Run one (n, instance) unit and write its part file."""
    cfg = config_from_mapping(cfg_dict)
    out = Path(cfg.out_dir)
    key = unit_key(n, i)
    inst_seed = seeding.derive_seed(cfg.master_seed, seeding.INSTANCE, n, i)
    inst = generate_instance(n, inst_seed)
    for sub in ("instances", "qaoa", "datasets", "models", "parts"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    inst.save(out / "instances" / f"{key}.json")
    models = _train_models(cfg, inst, i, out, key)
    part = {"n": n, "instance": i, "instance_seed": inst_seed, "master_seed": cfg.master_seed}
    if cfg.kind == "spectral_gap_sweep":
        part.update(_spectral_unit(cfg, inst, i, models))
    else:
        part.update(_chain_unit(cfg, inst, i, models, out, key))
    _dump(out / "parts" / f"{key}.json", part)
    log.info("finished unit %s", key)
    return part


# ---------------------------------------------------------------------------
# merge
# ---------------------------------------------------------------------------

def _write_results(cfg: ExperimentConfig, parts: list, out: Path) -> None:
    res = out / "results"
    res.mkdir(parents=True, exist_ok=True)
    ms = cfg.master_seed
    if cfg.kind == "spectral_gap_sweep":
        rows = []
        for p in parts:
            for r in p["spectral"]:
                rows.append([ms, p["instance_seed"], "", p["n"], r["beta"], p["instance"], r["proposal"],
                             r["gap"], r["lambda2_modulus"]])
        write_csv(res / "spectral_gaps.csv", ["master_seed", "instance_seed", "chain_seed", "n", "beta",
                                              "instance", "proposal", "gap", "lambda2_modulus"], rows)
        return
    head = ["master_seed", "instance_seed", "chain_seed", "n", "beta", "instance", "proposal"]

    def prov(p, r):
        return [ms, p["instance_seed"], r.get("chain_seed", ""), p["n"], r["beta"], p["instance"], r["proposal"]]

    write_csv(res / "chains.csv", head + ["chain", "acceptance_rate", "final_mean_m", "final_mhat2"],
              [prov(p, r) + [r["chain"], r["acceptance_rate"], r["final_mean_m"], r["final_mhat2"]]
               for p in parts for r in p["chains"]])
    write_csv(res / "magnetization.csv", head + ["step", "mhat2_mean", "mhat2_std"],
              [prov(p, r) + [s, a, b] for p in parts for r in p["mhat2"]
               for s, a, b in zip(r["step"], r["mean"], r["std"])])
    rows = []
    for p in parts:
        n = p["n"]
        for r in p["histogram"]:
            for k, cnt in enumerate(r["counts"]):
                rows.append(prov(p, r) + [r["chain"], (2 * k - n) / n, cnt])
    write_csv(res / "histogram.csv", head + ["chain", "m_value", "count"], rows)
    write_csv(res / "autocorrelation.csv", head + ["chain", "tau", "c"],
              [prov(p, r) + [r["chain"], tau, c] for p in parts for r in p["autocorrelation"]
               for tau, c in enumerate(r["c"])])
    rows = []
    for p in parts:
        for r in p["summary"]:
            rows.append(prov(p, r) + [r["pooled_mean"], r["standard_error"], r["mhat2"], r["chain_mhat2_mean"],
                                      r["exact_mean"], "" if r["lag_below_0.1"] is None else r["lag_below_0.1"],
                                      r["acceptance_rate"]])
    write_csv(res / "magnetization_summary.csv",
              head + ["pooled_mean", "standard_error", "pooled_mhat2", "chain_mhat2_mean", "exact_mean",
                      "lag_below_0.1", "acceptance_rate"], rows)
    rows = []
    for p in parts:
        for r in p["summary"]:
            if r["exact_histogram"] is not None:
                n = p["n"]
                rows += [prov(p, r) + [(2 * k - n) / n, w] for k, w in enumerate(r["exact_histogram"])]
    write_csv(res / "exact_histogram.csv", head + ["m_value", "probability"], rows)


def run_pipeline(cfg: ExperimentConfig) -> Path:
    """Execute every unit of ``cfg`` (resuming finished ones) and merge results."""
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.json"
    fp = cfg.fingerprint()
    units = [(n, i) for n in sorted(cfg.n_values) for i in range(cfg.instances)]
    manifest = {"config_fingerprint": fp, "units": {}, "status": "running"}
    if manifest_path.exists():
        old = json.loads(manifest_path.read_text())
        if old.get("config_fingerprint") != fp:
            raise ConfigError("out_dir", f"{out} holds results of a different configuration")
        manifest["units"] = {k: v for k, v in old.get("units", {}).items()
                             if v == "done" and (out / "parts" / f"{k}.json").exists()}
    _dump(out / "config.json", cfg.to_dict())
    _dump(manifest_path, manifest)

    todo = [(n, i) for n, i in units if unit_key(n, i) not in manifest["units"]]
    cfg_dict = cfg.to_dict()

    def mark(n, i):
        manifest["units"][unit_key(n, i)] = "done"
        _dump(manifest_path, manifest)

    if cfg.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = {pool.submit(run_unit, cfg_dict, n, i): (n, i) for n, i in todo}
            for fut, (n, i) in futures.items():
                fut.result()
                mark(n, i)
    else:
        for n, i in todo:
            run_unit(cfg_dict, n, i)
            mark(n, i)

    parts = [json.loads((out / "parts" / f"{unit_key(n, i)}.json").read_text()) for n, i in units]
    _write_results(cfg, parts, out)
    manifest["status"] = "complete"
    _dump(manifest_path, manifest)
    return out


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _num(s: str):
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s if s != "" else None


def _median(xs):
    return statistics.median(xs) if xs else float("nan")


def report(out_dir) -> dict:
    """Aggregate a finished run into figure-ready tables and ``report/summary.json``."""
    out = Path(out_dir)
    required = [out / "config.json", out / "manifest.json"]
    missing = [str(p) for p in required if not p.exists()]
    if missing:
        raise NotFoundError("missing artifacts: " + ", ".join(missing))
    cfg = config_from_mapping(json.loads((out / "config.json").read_text()))
    res, rep = out / "results", out / "report"
    if cfg.kind == "spectral_gap_sweep":
        need = [res / "spectral_gaps.csv"]
    else:
        need = [res / f for f in ("magnetization.csv", "histogram.csv", "autocorrelation.csv",
                                  "magnetization_summary.csv", "chains.csv")]
    missing = [str(p) for p in need if not p.exists()]
    if missing:
        raise NotFoundError("missing artifacts: " + ", ".join(missing))
    rep.mkdir(parents=True, exist_ok=True)
    summary = {"kind": cfg.kind, "master_seed": cfg.master_seed, "warnings": []}
    if cfg.kind == "spectral_gap_sweep":
        summary.update(_spectral_report(_read_csv(need[0]), cfg, rep, summary["warnings"]))
    else:
        summary.update(_chain_report(res, rep))
    _dump(rep / "summary.json", summary)
    for w in summary["warnings"]:
        log.warning(w)
    return summary


def _spectral_report(rows, cfg, rep: Path, warnings: list) -> dict:
    if not rows:
        warnings.append("empty sweep: no spectral-gap rows")
    groups: dict = {}
    for r in rows:
        groups.setdefault((float(r["beta"]), int(r["n"]), r["proposal"]), []).append(float(r["gap"]))
    table = []
    for (beta, n, prop), gaps in sorted(groups.items()):
        logs = [math.log10(max(g, 1e-300)) for g in gaps]
        table.append([beta, n, prop, len(gaps), statistics.fmean(gaps), _median(gaps), statistics.fmean(logs)])
    header = ["beta", "n", "proposal", "instances", "mean_gap", "median_gap", "mean_log10_gap"]
    write_csv(rep / "gap_vs_n_by_beta.csv", header, table)
    low_t = max(cfg.betas) if cfg.betas else None
    write_csv(rep / "gap_vs_n.csv", header, [t for t in table if t[0] == low_t])

    by_inst: dict = {}
    for r in rows:
        by_inst.setdefault((float(r["beta"]), int(r["n"]), int(r["instance"]), r["instance_seed"]),
                           {})[r["proposal"]] = float(r["gap"])
    ratio_rows = []
    for (beta, n, inst, seed), gaps in sorted(by_inst.items()):
        for prop in ("gns_optimized", "gns_fixed"):
            if prop in gaps and "uniform" in gaps:
                u = gaps["uniform"]
                ratio_rows.append([beta, n, inst, seed, prop, gaps[prop] / u if u > 0 else float("inf")])
    write_csv(rep / "gap_ratios.csv", ["beta", "n", "instance", "instance_seed", "proposal", "ratio_to_uniform"],
              ratio_rows)

    cells = []
    for beta in sorted({k[0] for k in groups}):
        for n in sorted({k[1] for k in groups if k[0] == beta}):
            med = {p: _median(groups[(beta, n, p)]) for p in PROPOSALS if (beta, n, p) in groups}
            ratios = {p: _median([r[5] for r in ratio_rows if r[0] == beta and r[1] == n and r[4] == p])
                      for p in ("gns_optimized", "gns_fixed")
                      if any(r[4] == p and r[0] == beta and r[1] == n for r in ratio_rows)}
            classical = [med[p] for p in ("ssf", "uniform") if p in med]
            cell = {"beta": beta, "n": n, "median_gap": med, "median_ratio_to_uniform": ratios}
            if classical and "gns_optimized" in med:
                g = med["gns_optimized"]
                cell["classical_beats_gns"] = min(classical) > g
                cell["gns_beats_classical"] = g > max(classical)
            cells.append(cell)
    ordering = {}
    hi = [c["classical_beats_gns"] for c in cells if "classical_beats_gns" in c and c["beta"] <= 1]
    lo = [c["gns_beats_classical"] for c in cells if "gns_beats_classical" in c and c["beta"] >= 5]
    if hi:
        ordering["classical_wins_at_beta_le_1"] = all(hi)
    if lo:
        ordering["gns_wins_at_beta_ge_5"] = all(lo)
    return {"cells": cells, "temperature_ordering": ordering}


def _chain_report(res: Path, rep: Path) -> dict:
    shutil.copyfile(res / "magnetization.csv", rep / "mhat2.csv")
    shutil.copyfile(res / "histogram.csv", rep / "histogram.csv")
    rows = _read_csv(res / "autocorrelation.csv")
    acc: dict = {}
    for r in rows:
        acc.setdefault((float(r["beta"]), int(r["n"]), int(r["instance"]), r["proposal"], int(r["tau"])),
                       []).append(float(r["c"]))
    write_csv(rep / "autocorrelation_mean.csv", ["beta", "n", "instance", "proposal", "tau", "c_mean"],
              [list(k) + [statistics.fmean(v)] for k, v in sorted(acc.items())])
    summary_rows = _read_csv(res / "magnetization_summary.csv")
    return {"magnetization": [
        {k: _num(r[k]) for k in ("n", "beta", "instance", "proposal", "pooled_mean", "standard_error",
                           "pooled_mhat2", "exact_mean", "lag_below_0.1", "acceptance_rate")}
        for r in summary_rows]}
