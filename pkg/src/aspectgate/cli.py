"""Command-line pipeline: stats, train, eval, predict, ablation.

Configuration precedence is built-in defaults, then a key=value config
file, then command-line flags.  Exit codes: 0 success, 1 usage error,
2 data error, 3 training divergence.  Output files are written via
temp-then-rename, so interrupted runs never leave partial artifacts.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .corpus import (DataError, dataset_stats, make_aspect_groups, parse_semeval_xml,
                     render_stats, build_embeddings, build_random_table,
                     tokenize_and_align)
from .evaluation import (evaluate, render_report, report_from_dict, report_to_dict,
                         summarize_runs)
from .model import forward_group, predict_label
from .training import (DOMAIN_LOSS_WEIGHT, VARIANTS, DivergenceError, TrainConfig,
                       atomic_write_text, load_model, save_checkpoint, train)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# gamma, lr and the per-domain loss weight follow the published training
# setup; the remaining values are unspecified there and chosen here
DEFAULTS = {
    "domain": "restaurant",
    "variant": "miad",
    "gamma": 2.0,
    "loss_weight": None,  # resolves per domain: restaurant 0.4, laptop 0.2
    "lr": 0.01,
    "hidden": 150,
    "batch": 32,
    "epochs": 30,
    "patience": 5,
    "seed": 0,
    "seeds": "0",
    "dev_fraction": 0.1,
    "include_target_gate": False,
    "jobs": 1,
}

_CONFIG_TYPES = {
    "train_xml": str, "test_xml": str, "embeddings": str, "out": str,
    "domain": str, "variant": str, "seeds": str,
    "gamma": float, "loss_weight": float, "lr": float, "dev_fraction": float,
    "hidden": int, "batch": int, "epochs": int, "patience": int, "seed": int,
    "jobs": int, "include_target_gate": lambda v: v.lower() in ("1", "true", "yes"),
}

_FLAG_ALIASES = {"lambda": "loss_weight"}


def _add_common_flags(parser):
    parser.add_argument("--train-xml", dest="train_xml")
    parser.add_argument("--test-xml", dest="test_xml")
    parser.add_argument("--embeddings", help="GloVe-format text file; omitted: "
                        "seeded random vectors")
    parser.add_argument("--domain", choices=sorted(DOMAIN_LOSS_WEIGHT))
    parser.add_argument("--variant", choices=[v.replace("_", "-") for v in VARIANTS])
    parser.add_argument("--gamma", type=float, help="focusing parameter (FL variants)")
    parser.add_argument("--lambda", dest="loss_weight", type=float,
                        help="neighbor-loss weight (default per domain: 0.4/0.2)")
    parser.add_argument("--lr", type=float, help="Adam learning rate")
    parser.add_argument("--hidden", type=int, help="hidden size per direction")
    parser.add_argument("--batch", type=int, help="batch size in sentences")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--patience", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--seeds", help="comma-separated seed list (ablation)")
    parser.add_argument("--dev-fraction", dest="dev_fraction", type=float)
    parser.add_argument("--include-target-gate", dest="include_target_gate",
                        action="store_const", const=True)
    parser.add_argument("--out")
    parser.add_argument("--config", help="key=value file, overridden by flags")


def _read_config_file(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such config file: {path}")
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        key = _FLAG_ALIASES.get(key, key)
        if key not in _CONFIG_TYPES:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _CONFIG_TYPES[key](raw.strip())
    return values


def _settings(args):
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        merged.update(_read_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("command", "config", "checkpoint", "sentence", "aspect"):
            continue
        if value is not None:
            merged[key] = value
    if isinstance(merged.get("variant"), str):
        merged["variant"] = merged["variant"].replace("-", "_")
    return merged


def _train_config(settings):
    return TrainConfig(
        domain=settings["domain"], variant=settings["variant"],
        gamma=settings["gamma"], loss_weight=settings["loss_weight"],
        learning_rate=settings["lr"], hidden_size=settings["hidden"],
        batch_size=settings["batch"], max_epochs=settings["epochs"],
        patience=settings["patience"], dev_fraction=settings["dev_fraction"],
        seed=settings["seed"], include_target_gate=settings["include_target_gate"])


def _require(settings, key, command):
    if not settings.get(key):
        raise UsageError(f"{command}: --{key.replace('_', '-')} is required")
    return settings[key]


def _load_table(settings, records):
    if settings.get("embeddings"):
        table = build_embeddings(records, settings["embeddings"], seed=settings["seed"])
    else:
        table = build_random_table(records, seed=settings["seed"])
    print(f"vocabulary {len(table.vocabulary)} tokens, "
          f"oov rate {table.oov_rate:.3f}", file=sys.stderr)
    return table


def _out_dir(settings, command):
    out = Path(_require(settings, "out", command))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_stats(args):
    settings = _settings(args)
    splits = {}
    for split in ("train", "test"):
        path = settings.get(f"{split}_xml")
        if path:
            splits[split] = dataset_stats(parse_semeval_xml(path).records)
    if not splits:
        raise UsageError("stats: provide --train-xml and/or --test-xml")
    text, csv = render_stats(splits)
    print(text)
    if settings.get("out"):
        out = _out_dir(settings, "stats")
        atomic_write_text(out / "stats.txt", text + "\n")
        atomic_write_text(out / "stats.csv", csv)
    return 0


def _train_once(settings, groups, table, config):
    result = train(config, groups, table)
    for line in result.warnings:
        print(f"warning: {line}", file=sys.stderr)
    return result


def cmd_train(args):
    settings = _settings(args)
    out = _out_dir(settings, "train")
    train_result = parse_semeval_xml(_require(settings, "train_xml", "train"))
    records = list(train_result.records)
    vocab_records = records + (
        parse_semeval_xml(settings["test_xml"]).records if settings.get("test_xml") else [])
    table = _load_table(settings, vocab_records)
    config = _train_config(settings)
    result = _train_once(settings, make_aspect_groups(records), table, config)
    save_checkpoint(out / "model.ckpt", result.params, config, table.vocabulary)
    atomic_write_text(out / "train.log", "\n".join(result.log_lines) + "\n")
    best = "" if result.best_dev_acc is None else f", best dev acc {result.best_dev_acc:.4f}"
    print(f"trained {config.variant} on {len(records)} sentences{best}")
    print(f"checkpoint: {out / 'model.ckpt'}")
    return 0


def cmd_eval(args):
    settings = _settings(args)
    if not args.checkpoint:
        raise UsageError("eval: --checkpoint is required")
    params, config, vocabulary = load_model(args.checkpoint)
    groups = make_aspect_groups(parse_semeval_xml(_require(settings, "test_xml", "eval")).records)
    report = evaluate(params, config.forward_variant, groups, vocabulary,
                      domain=config.domain, label=config.variant)
    text, csv = render_report([report])
    print(text)
    if settings.get("out"):
        out = _out_dir(settings, "eval")
        atomic_write_text(out / "report.txt", text + "\n")
        atomic_write_text(out / "report.csv", csv)
    return 0


def _parse_span(raw):
    try:
        start, _, end = raw.partition(":")
        start, end = int(start), int(end)
    except ValueError:
        raise UsageError(f"predict: bad aspect span {raw!r}, expected START:END") from None
    if start < 0 or end <= start:
        raise UsageError(f"predict: bad aspect span {raw!r}, expected 0 <= START < END")
    return start, end


def cmd_predict(args):
    if not args.checkpoint:
        raise UsageError("predict: --checkpoint is required")
    if not args.sentence:
        raise UsageError("predict: --sentence is required")
    if not args.aspect:
        raise UsageError("predict: at least one --aspect START:END is required")
    params, config, vocabulary = load_model(args.checkpoint)
    spans = [_parse_span(raw) for raw in args.aspect]
    for start, end in spans:
        if end > len(args.sentence):
            raise DataError(f"aspect span {start}:{end} exceeds the sentence length")
    raw_aspects = [(args.sentence[s:e], None, s, e) for s, e in spans]
    record = tokenize_and_align("cli", args.sentence, raw_aspects)
    if record is None or len(record.aspects) != len(spans):
        raise DataError("an aspect span covers no token of the sentence")
    for group in make_aspect_groups([record]):
        prob, _ = forward_group(params, config.forward_variant, group, vocabulary)
        print(f"{group.target.term}\t{predict_label(prob)}")
    return 0


def _ablation_payloads(settings, seeds):
    payloads = []
    for variant in VARIANTS:
        for seed in seeds:
            run = dict(settings)
            run["variant"] = variant
            run["seed"] = seed
            payloads.append(run)
    return payloads


def run_ablation_job(settings):
    """Train and evaluate one (variant, seed); self-contained for workers."""
    train_records = parse_semeval_xml(settings["train_xml"]).records
    test_records = parse_semeval_xml(settings["test_xml"]).records
    if settings.get("embeddings"):
        table = build_embeddings(train_records + test_records,
                                 settings["embeddings"], seed=settings["seed"])
    else:
        table = build_random_table(train_records + test_records, seed=settings["seed"])
    config = _train_config(settings)
    result = train(config, make_aspect_groups(train_records), table)
    report = evaluate(result.params, config.forward_variant,
                      make_aspect_groups(test_records), table.vocabulary,
                      domain=config.domain, label=config.variant, seed=config.seed)
    return report_to_dict(report), result.log_lines


def cmd_ablation(args):
    settings = _settings(args)
    out = _out_dir(settings, "ablation")
    _require(settings, "train_xml", "ablation")
    _require(settings, "test_xml", "ablation")
    try:
        seeds = [int(s) for s in str(settings["seeds"]).split(",") if s.strip() != ""]
    except ValueError:
        raise UsageError(f"ablation: bad --seeds {settings['seeds']!r}") from None
    if not seeds:
        raise UsageError("ablation: --seeds must name at least one seed")

    payloads = _ablation_payloads(settings, seeds)
    jobs = max(1, int(settings.get("jobs", 1)))
    results = []
    if jobs == 1:
        for payload in payloads:
            results.append(run_ablation_job(payload))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_ablation_job, payloads))

    logs_dir = out / "logs"
    logs_dir.mkdir(exist_ok=True)
    reports = []
    for payload, (report_dict, log_lines) in zip(payloads, results):
        report = report_from_dict(report_dict)
        reports.append(report)
        name = f"{payload['variant']}-seed{payload['seed']}.log"
        atomic_write_text(logs_dir / name, "\n".join(log_lines) + "\n")

    runs_csv = ["seed," + render_report([])[1].splitlines()[0]]
    for report in reports:
        _, csv = render_report([report])
        runs_csv.append(f"{report.seed}," + csv.splitlines()[1])
    atomic_write_text(out / "ablation_runs.csv", "\n".join(runs_csv) + "\n")

    summary = summarize_runs(reports)
    text, csv = render_report(summary)
    atomic_write_text(out / "ablation_summary.txt", text + "\n")
    atomic_write_text(out / "ablation_summary.csv", csv)
    print(text)
    return 0


def build_parser():
    parser = _Parser(prog="aspectgate", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    for name, help_text in (
            ("stats", "class / single-aspect / multi-aspect distribution table"),
            ("train", "train one variant and write a checkpoint"),
            ("eval", "evaluate a checkpoint on a test file"),
            ("predict", "label the aspects of one raw sentence"),
            ("ablation", "train every variant across a seed list")):
        p = sub.add_parser(name, help=help_text, add_help=True)
        _add_common_flags(p)
        if name in ("eval", "predict"):
            p.add_argument("--checkpoint")
        if name == "predict":
            p.add_argument("--sentence")
            p.add_argument("--aspect", action="append",
                           help="character span START:END; repeatable")
        if name == "ablation":
            p.add_argument("--jobs", type=int, help="parallel worker processes")
    return parser


_COMMANDS = {
    "stats": cmd_stats,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "ablation": cmd_ablation,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError(parser.format_usage())
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3


def entrypoint():
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
