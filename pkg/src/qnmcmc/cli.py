"""Command line entry point: ``qnmcmc <verb> ...``."""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import analysis, made, mcmc, qsim
from .config import apply_override, config_from_mapping
from .errors import ConfigError, NotFoundError
from .pipeline import report, run_pipeline
from .spinglass import BoltzmannTarget, SpinGlassInstance, generate_instance


def _out(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_generate(args):
    inst = generate_instance(args.n, args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    inst.save(args.out)
    print(f"wrote {args.out}")


def cmd_qaoa(args):
    inst = SpinGlassInstance.load(args.instance)
    out = _out(args.out)
    diag = qsim.build_cost_diagonal(inst, cap=args.max_qubits)
    params = qsim.fixed_angles(args.p, args.angle_table, fallback=True)
    if args.convention == "sk":
        params = qsim.to_instance_convention(params, inst.n)
    trace = []
    if args.mode == "optimized":
        params, _, trace = qsim.optimize_params(diag, params)
        qsim.write_trace_csv(trace, out / "trace.csv")
    state = qsim.run_qaoa(diag, params)
    e = qsim.energy_expectation(state, diag)
    (out / "angles.json").write_text(json.dumps({"mode": args.mode, **params.to_dict(), "energy": e}, indent=1))
    idx = qsim.sample_bitstrings(state, args.samples, args.seed)
    made.write_dataset(((idx[:, None] >> np.arange(inst.n)) & 1), out / "dataset.txt")
    print(f"<H_C> = {e:.6f}; wrote {args.samples} samples to {out / 'dataset.txt'}")


def cmd_train(args):
    data = made.read_dataset(args.dataset)
    D = data.shape[1]
    arch = made.MadeArchitecture(D, args.hidden_layers, args.width_factor * D)
    cfg = made.TrainConfig(args.lr, args.batch_size, args.epochs, test_fraction=args.test_fraction, seed=args.seed)
    model, curves = made.train(made.MadeModel.initialize(arch, args.seed + 1), data, cfg)
    out = _out(args.out)
    model.save(out / "model.json", init_seed=args.seed + 1, train_seed=args.seed)
    curves.write_csv(out / "loss.csv")
    print(f"final train loss {curves.train[-1]:.4f}, test loss {curves.test[-1]:.4f}")


def _load_proposal(args, n):
    model = made.MadeModel.load(args.model) if args.model else None
    return mcmc.make_proposal(args.proposal, n, model)


def cmd_mcmc(args):
    inst = SpinGlassInstance.load(args.instance)
    target = BoltzmannTarget(inst, args.beta)
    chain = mcmc.run_chain(target, _load_proposal(args, inst.n), args.steps, seed=args.seed)
    out = _out(args.out)
    if args.csv:
        chain.write_trace_csv(out / "trace.csv")
    else:
        chain.write_trace_npy(out / "trace.npy")
    chain.write_summary(out / "summary.json")
    print(f"acceptance rate {chain.acceptance_rate:.4f}")


def cmd_analyze(args):
    inst = SpinGlassInstance.load(args.instance)
    target = BoltzmannTarget(inst, args.beta)
    out = _out(args.out)
    if args.trace is None:
        P = analysis.build_transition_matrix(target, _load_proposal(args, inst.n))
        rep = analysis.spectral_gap(P, target)
        analysis.write_csv(out / "gap.csv", ["n", "beta", "instance_seed", "proposal", "gap"],
                           [[inst.n, args.beta, inst.seed, args.proposal, rep.gap]])
        print(f"spectral gap {rep.gap:.6g} (|lambda2| = {rep.lambda2_modulus:.12f})")
        return
    rec = np.load(args.trace)
    chain = mcmc.Chain(rec["state_index"], rec["energy"], rec["accepted"][1:], None, target, args.proposal)
    s = analysis.magnetization_series(chain)
    analysis.write_csv(out / "mhat2.csv", ["step", "mhat2"], zip(range(1, s.mhat2.size + 1), s.mhat2))
    vals, counts = analysis.magnetization_histogram(chain, args.burn_in)
    analysis.write_csv(out / "histogram.csv", ["m_value", "count"], zip(vals, counts))
    c = analysis.autocorrelation(s.values, args.burn_in, args.max_lag)
    analysis.write_csv(out / "autocorrelation.csv", ["tau", "c"], enumerate(c))
    print(f"final mhat2 {s.mhat2[-1]:.6g}; c(tau) < 0.1 at lag {analysis.first_lag_below(c)}")


def cmd_pipeline(args):
    data = yaml.safe_load(Path(args.config).read_text()) or {}
    if args.master_seed is not None:
        data["master_seed"] = args.master_seed
    if args.workers is not None:
        data["workers"] = args.workers
    if args.out is not None:
        data["out_dir"] = args.out
    for item in args.set or []:
        key, _, value = item.partition("=")
        apply_override(data, key, yaml.safe_load(value))
    out = run_pipeline(config_from_mapping(data))
    print(f"results in {out / 'results'}")


def cmd_report(args):
    summary = report(args.dir)
    print(json.dumps(summary, indent=1)[:4000])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qnmcmc", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("generate", help="draw a spin-glass instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("qaoa", help="run (and optionally optimise) QAOA, sample a dataset")
    p.add_argument("--instance", required=True)
    p.add_argument("--p", type=int, default=5)
    p.add_argument("--mode", choices=["optimized", "fixed_angle"], default="optimized")
    p.add_argument("--samples", type=int, default=1250)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--angle-table")
    p.add_argument("--convention", choices=["sk", "none"], default="sk")
    p.add_argument("--max-qubits", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_qaoa)

    p = sub.add_parser("train", help="train a MADE on a bitstring dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--hidden-layers", type=int, default=2)
    p.add_argument("--width-factor", type=int, default=2)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    for verb, func, helptext in (("mcmc", cmd_mcmc, "run one MH chain"),
                                 ("analyze", cmd_analyze, "spectral gap, or chain diagnostics with --trace")):
        p = sub.add_parser(verb, help=helptext)
        p.add_argument("--instance", required=True)
        p.add_argument("--beta", type=float, required=True)
        p.add_argument("--proposal", choices=["ssf", "uniform", "gns"], default="ssf")
        p.add_argument("--model")
        p.add_argument("--out", required=True)
        if verb == "mcmc":
            p.add_argument("--steps", type=int, default=100_000)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--csv", action="store_true", help="CSV trace instead of .npy")
        else:
            p.add_argument("--trace")
            p.add_argument("--burn-in", type=int, default=analysis.DEFAULT_BURN_IN)
            p.add_argument("--max-lag", type=int, default=1000)
        p.set_defaults(func=func)

    p = sub.add_parser("pipeline", help="run a full experiment from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--master-seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("report", help="summarise a finished pipeline run")
    p.add_argument("dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ConfigError, NotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
