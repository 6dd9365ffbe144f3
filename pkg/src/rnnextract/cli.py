"""Command-line entry point: ``rnnextract {train,extract,baseline,eval}``.

Every command reads an optional JSON config file; flags override its keys.
Reports embed the effective config and seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import abstraction, baselines, lstar, rnn, teacher
from .automata import Dfa, to_dot
from .corpus import LabeledDataset, agreement, get_language, from_dfa, make_train_set

log = logging.getLogger("rnnextract")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ACCURACY = 2
EXIT_CONTRACT = 3

DEFAULT_LENGTHS = list(range(0, 14)) + [16, 19, 22]
EVAL_LENGTHS = [10, 50, 100, 1000]

DEFAULTS = {
    "cell": "gru",
    "layers": 2,
    "hidden": 50,
    "train": {"lengths": DEFAULT_LENGTHS, "per_length_target": 200, "learning_rate": 0.005,
              "batch_size": 32, "max_epochs": 100, "target_accuracy": 1.0},
    "extract": {"initial_depth": abstraction.DEFAULT_DEPTH, "time_limit": 30.0,
                "starting_samples": "train"},
    "eval_lengths": EVAL_LENGTHS,
    "out": ".",
}


class ConfigError(Exception):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def load_config(args) -> dict:
    cfg = _merge(DEFAULTS, {})
    if args.config:
        try:
            cfg = _merge(cfg, json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    if args.time_limit is not None:
        cfg["extract"]["time_limit"] = args.time_limit
        cfg["train"]["time_limit"] = args.time_limit
    if args.initial_depth is not None:
        cfg["extract"]["initial_depth"] = args.initial_depth
    for key in ("language", "dfa_file", "weights", "dataset"):
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    if "seed" not in cfg:
        raise ConfigError("a seed is required (--seed or 'seed' in the config)")
    for key in ("dfa_file", "weights", "dataset"):
        if cfg.get(key) is not None and not Path(cfg[key]).exists():
            raise ConfigError(f"{key} {cfg[key]} does not exist")
    return cfg


def _seeds(seed: int, n: int) -> list:
    """Independent sub-seeds drawn from one generator per run."""
    return [int(x) for x in np.random.SeedSequence(seed).generate_state(n)]


def _language(cfg):
    if cfg.get("dfa_file"):
        return from_dfa(Dfa.loads(Path(cfg["dfa_file"]).read_text()), Path(cfg["dfa_file"]).stem)
    if cfg.get("language"):
        try:
            return get_language(cfg["language"])
        except ValueError as e:
            raise ConfigError(str(e)) from e
    raise ConfigError("need 'language' or 'dfa_file'")


def _load_net(cfg) -> rnn.RnnAcceptor:
    if not cfg.get("weights"):
        raise ConfigError("need 'weights' (--weights)")
    try:
        return rnn.load(Path(cfg["weights"]).read_text())
    except (ValueError, KeyError) as e:
        raise ConfigError(f"cannot load weights: {e}") from e


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1) + "\n")


def _starting_samples(cfg, net, seed):
    source = cfg["extract"].get("starting_samples", "train")
    if source == "train" and cfg.get("dataset"):
        ds = LabeledDataset.loads(Path(cfg["dataset"]).read_text(), net.alphabet)
        return teacher.default_starting_samples(net, ds.words())
    if source not in ("train", "sample"):
        raise ConfigError(f"unknown starting_samples source {source!r}")
    return teacher.default_starting_samples(net, seed=seed)


# -- commands ------------------------------------------------------------------

def cmd_train(cfg) -> int:
    lang = _language(cfg)
    tc = cfg["train"]
    data_seed, train_seed, dev_seed = _seeds(cfg["seed"], 3)
    ds = make_train_set(lang, tc["lengths"], tc["per_length_target"], data_seed)
    if len(ds) == 0:
        raise ConfigError("the train set is empty")
    try:
        tcfg = rnn.TrainConfig(seed=train_seed, learning_rate=tc["learning_rate"],
                               batch_size=tc["batch_size"], max_epochs=tc["max_epochs"],
                               target_accuracy=tc["target_accuracy"], time_limit=tc.get("time_limit"))
        result = rnn.train(cfg["cell"], cfg["layers"], cfg["hidden"], lang.alphabet, ds.words(),
                           ds.labels(), tcfg)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    out = _out_dir(cfg)
    (out / "weights.json").write_text(rnn.save(result.net))
    (out / "dataset.tsv").write_text(ds.dumps())
    dev = agreement(result.net, lang, cfg["eval_lengths"], 1000, dev_seed)
    _write_json(out / "train_report.json", {
        "config": cfg, "seed": cfg["seed"], "train_acc": result.accuracy, "epochs": result.epochs,
        "dev_acc": {str(k): v for k, v in dev.items()},
    })
    print(f"train accuracy {result.accuracy:.4f} after {result.epochs} epochs")
    return EXIT_OK if result.accuracy >= tc["target_accuracy"] else EXIT_ACCURACY


def cmd_extract(cfg) -> int:
    net = _load_net(cfg)
    ec = cfg["extract"]
    samples = _starting_samples(cfg, net, _seeds(cfg["seed"], 1)[0])
    try:
        res = teacher.extract(net, float(ec["time_limit"]), int(ec["initial_depth"]), samples)
    except lstar.ContractViolation as e:
        log.error("contract violation: %s", e)
        return EXIT_CONTRACT
    report = res.report()
    check = teacher.audit(report, net)
    report.update({"config": cfg, "seed": cfg["seed"],
                   "audit": {"violations": check.violations, "ok": check.ok}})
    out = _out_dir(cfg)
    (out / "dfa.json").write_text(res.dfa.dumps())
    (out / "dfa.dot").write_text(to_dot(res.dfa))
    _write_json(out / "extraction_report.json", report)
    print(f"converged={res.converged} states={res.dfa.n_states} time={res.elapsed:.2f}s")
    if not check.ok:
        log.error("audit found %d violations", len(check.violations))
        return EXIT_CONTRACT
    return EXIT_OK


def cmd_baseline(cfg, method: str, q: int, k: int) -> int:
    net = _load_net(cfg)
    out = _out_dir(cfg)
    seed_fit, seed_eval = _seeds(cfg["seed"], 2)
    limit = float(cfg["extract"]["time_limit"])
    if method in ("quant", "kmeans"):
        if method == "quant":
            p = baselines.quantization_for(net, q, seed_fit)
            params = {"q": q}
        else:
            samples = teacher.default_starting_samples(net, seed=seed_fit)
            walks = [tuple(int(x) for x in w) for w in
                     np.random.default_rng(seed_fit).integers(0, len(net.alphabet), size=(200, 20))]
            states = baselines.collect_states(net, list(samples) + walks)
            if k > len(states):
                raise ConfigError(f"k={k} exceeds the {len(states)} collected states")
            p = baselines.kmeans_fit(states, k, seed_fit)
            params = {"k": k}
        result = baselines.extract_abstraction(net, p, time_limit=limit)
        report = baselines.abstraction_report(result, method, params)
        rows = baselines.coverage_accuracy(result.dfa, net, cfg["eval_lengths"], 1000, seed_eval)
        (out / "coverage.csv").write_text(baselines.coverage_csv(rows))
        dfa_json = result.dfa.to_json()
        print(f"{method}: {result.dfa.n_states} states, {result.reason}")
    elif method == "randsample":
        samples = _starting_samples(cfg, net, seed_fit)
        t = baselines.SamplingTeacher(net, baselines.SamplingConfig(tuple(samples), seed=seed_fit),
                                      deadline=time.monotonic() + limit)
        res = lstar.run(t, limit, record_members=False)
        alphabet = net.alphabet
        report = {
            "method": method, "converged": res.converged, "elapsed_s": round(res.elapsed, 4),
            "n_states": res.dfa.n_states, "membership_queries": res.query_log.n_member,
            "equivalence_queries": [{
                "hypothesis_size": r["hypothesis_size"], "verdict": r["verdict"],
                "counterexample": None if r["counterexample"] is None else alphabet.decode(r["counterexample"]),
                "elapsed_ms": round(r["elapsed_ms"], 3),
            } for r in t.equivalence_records],
            "refinements": [],
        }
        dfa_json = res.dfa.to_json()
        (out / "dfa.dot").write_text(to_dot(res.dfa))
        print(f"randsample: {res.dfa.n_states} states, converged={res.converged}")
    else:
        raise ConfigError(f"unknown baseline method {method!r}")
    report.update({"dfa": dfa_json, "config": cfg, "seed": cfg["seed"]})
    _write_json(out / f"baseline_{method}.json", report)
    return EXIT_OK


def cmd_eval(cfg, lengths) -> int:
    if not cfg.get("dfa_path"):
        raise ConfigError("need --dfa")
    dfa = Dfa.loads(Path(cfg["dfa_path"]).read_text())
    if cfg.get("weights"):
        reference = _load_net(cfg)
    else:
        reference = _language(cfg)
    lengths = lengths or cfg["eval_lengths"]
    try:
        acc = agreement(dfa, reference, lengths, 1000, _seeds(cfg["seed"], 1)[0])
    except ValueError as e:
        raise ConfigError(str(e)) from e
    lines = ["length,accuracy"] + [f"{n},{a:.2f}" for n, a in acc.items()]
    text = "\n".join(lines) + "\n"
    if cfg.get("out") and cfg["out"] != ".":
        (_out_dir(cfg) / "eval.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--time-limit", type=float, dest="time_limit")
    common.add_argument("--initial-depth", type=int, dest="initial_depth")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rnnextract", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train an RNN acceptor on a language")
    p.add_argument("--language")
    p.add_argument("--dfa-file", dest="dfa_file")

    p = sub.add_parser("extract", parents=[common], help="extract a DFA with L* and refinement")
    p.add_argument("--weights")
    p.add_argument("--dataset", help="train set whose shortest words seed the teacher")

    p = sub.add_parser("baseline", parents=[common], help="run a comparison extractor")
    p.add_argument("method", choices=["quant", "kmeans", "randsample"])
    p.add_argument("--weights")
    p.add_argument("--dataset")
    p.add_argument("-q", type=int, default=2, help="quantization level")
    p.add_argument("-k", type=int, default=10, help="number of clusters")

    p = sub.add_parser("eval", parents=[common], help="agreement of a DFA with a network or language")
    p.add_argument("--dfa", dest="dfa_path", required=True)
    p.add_argument("--weights")
    p.add_argument("--language")
    p.add_argument("--dfa-file", dest="dfa_file")
    p.add_argument("--lengths", type=int, nargs="+")
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "extract":
            return cmd_extract(cfg)
        if args.command == "baseline":
            return cmd_baseline(cfg, args.method, args.q, args.k)
        cfg["dfa_path"] = args.dfa_path
        if not Path(args.dfa_path).exists():
            raise ConfigError(f"DFA file {args.dfa_path} does not exist")
        return cmd_eval(cfg, args.lengths)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except lstar.ContractViolation as e:
        print(f"contract violation: {e}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
