"""
Argument parsing and subcommand dispatch.

Every subcommand accepts ``--config FILE`` plus one flag per config key; flags
win over the file, the file wins over the built-in defaults. Failures map to
exit codes: 1 usage, 2 data or file, 3 numeric.
"""

import argparse
import json
import logging
import sys
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, List, NoReturn, Optional, Sequence, Tuple

import pandas as pd

from src.align.spectral import (
    build_reweight,
    load_gaussian_spec,
    verify_correlation_alignment,
    verify_probability_alignment,
)
from src.config.config import Config
from src.config.schema import SCHEMA, CliConfig, parse_config
from src.data.dataset import MtsDataset
from src.data.ranking import rank_domain_pairs
from src.data.storage import list_domains, read_dataset, write_dataset
from src.data.synthetic import SyntheticDomainSpec, generate_domain, shift_sweep
from src.errors import DataError, EmptyInputError, NumericError, UsageError
from src.models.adapters import AdapterSpec
from src.models.checkpoint import load_model, save_model
from src.stats.hypothesis import correlation_shift_test, shift_rate
from src.training.experiments import (
    adapt_and_report,
    make_domain_pair,
    pretrain_model,
    run_ablation,
    run_adapter_comparison,
    run_gat_approx_study,
    run_pipeline,
    run_scaling_study,
    run_seeds,
    summarize,
)
from src.training.report import (
    EvalReport,
    format_report,
    read_report,
    report_stem,
    to_plain,
    write_json,
    write_report,
    write_table,
)
from src.training.voting import evaluate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

Handler = Callable[[argparse.Namespace, CliConfig], int]


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting on bad input."""

    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.prog}: error: {message}")


def _format_default(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, list):
        return ",".join(str(item) for item in value)
    return str(value)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    defaults = Config.get_defaults()
    parser.add_argument("--config", default=None, help="config file of 'key = value' lines (default: none)")
    parser.add_argument(
        "--output-dir",
        default=Config.get_runtime_settings()["output_dir"],
        help="directory for reports and tables (default: %(default)s)",
    )
    for key, spec in SCHEMA.items():
        parser.add_argument(
            f"--{key.replace('_', '-')}",
            dest=key,
            default=None,
            metavar=key.upper(),
            help=f"{spec.help} (default: {_format_default(defaults[key])})",
        )


def _seeds(settings: CliConfig) -> List[int]:
    return [settings["seed"] + k for k in range(settings["n_seeds"])]


def _print_json(payload: Dict[str, Any]) -> None:
    print(json.dumps(to_plain(payload), indent=2, sort_keys=True))


def _read_domains(directory: str) -> List[MtsDataset]:
    paths = list_domains(directory)
    if not paths:
        raise EmptyInputError(f"No .mts files in {directory}")
    return [read_dataset(path) for path in paths]


def _load_pair(args: argparse.Namespace, settings: CliConfig) -> Tuple[MtsDataset, MtsDataset]:
    if args.source is None and args.target is None:
        return make_domain_pair(settings, settings["seed"])
    if args.source is None or args.target is None:
        raise UsageError("--source and --target must be given together")
    return read_dataset(args.source), read_dataset(args.target)


# Handlers --------------------------------------------------------------------


def cmd_gen_data(args: argparse.Namespace, settings: CliConfig) -> int:
    spec = SyntheticDomainSpec.from_settings(settings)
    written: List[Path] = []
    if args.sweep:
        try:
            thetas = [float(item) for item in args.sweep.split(",") if item.strip()]
        except ValueError as e:
            raise UsageError(f"--sweep expects comma-separated angles: {e}") from e
        for dataset in shift_sweep(spec, thetas, settings["n_per_class"]):
            written.extend(write_dataset(dataset, Path(args.output) / dataset.domain_id))
    else:
        dataset = generate_domain(spec, settings["n_per_class"], Path(args.output).name)
        written.extend(write_dataset(dataset, args.output))
    _print_json({"written": [str(path) for path in written]})
    return EXIT_OK


def cmd_detect_shift(args: argparse.Namespace, settings: CliConfig) -> int:
    result = correlation_shift_test(read_dataset(args.source), read_dataset(args.target))
    _print_json(result.to_dict())
    return EXIT_OK


def cmd_shift_rate(args: argparse.Namespace, settings: CliConfig) -> int:
    _print_json(shift_rate(_read_domains(args.directory)))
    return EXIT_OK


def cmd_pair_rank(args: argparse.Namespace, settings: CliConfig) -> int:
    ranking = rank_domain_pairs(
        _read_domains(args.directory),
        settings["wasserstein_projections"],
        settings["seed"],
        settings["missing_label_penalty"],
        settings["normalize_ranking"],
    )
    representatives = {(p.source, p.target) for p in ranking.representatives}
    rows = []
    for group_index, group in enumerate(ranking.groups):
        for pair in group:
            rows.append(
                {
                    "rank": len(rows) + 1,
                    **pair.to_dict(),
                    "group": group_index,
                    "representative": (pair.source, pair.target) in representatives,
                }
            )
    table = pd.DataFrame(rows, columns=["rank", "source", "target", "distance", "group", "representative"])
    stem = report_stem("pair-rank", settings.config_hash(), settings["seed"])
    write_table(table, Path(args.output_dir) / f"{stem}.csv")
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_oracle_align(args: argparse.Namespace, settings: CliConfig) -> int:
    source = load_gaussian_spec(args.source)
    target = load_gaussian_spec(args.target)
    reweight = build_reweight(source, target)
    payload: Dict[str, Any] = {
        "population_corr_diff": verify_correlation_alignment(source, target, reweight.matrix),
    }
    payload.update(
        verify_probability_alignment(source, target, reweight, settings["oracle_samples"], settings["seed"])
    )
    _print_json(payload)
    return EXIT_OK


def cmd_pretrain(args: argparse.Namespace, settings: CliConfig) -> int:
    seed = settings["seed"]
    source = read_dataset(args.source) if args.source else make_domain_pair(settings, seed)[0]
    model, result = pretrain_model(settings, source, seed)
    stem = report_stem("pretrain", settings.config_hash(), seed)
    checkpoint = Path(args.out) if args.out else Path(args.output_dir) / f"{stem}.ckpt"
    checkpoint.parent.mkdir(parents=True, exist_ok=True)
    spec = AdapterSpec("none", settings["kernel_size"], settings["adapter_rank"], settings["window_len"])
    save_model(checkpoint, model, [], spec)
    accuracy = evaluate(
        model, [], source, settings["window_len"], settings["vote_count"], seed, settings["eval_batch_size"]
    )
    report = EvalReport(
        "pretrain",
        seed,
        source_accuracy=accuracy,
        config=settings.echo(),
        extra={"pretrain_loss": result.loss_curve, "checkpoint": str(checkpoint)},
    )
    write_report(report, args.output_dir, settings.config_hash())
    _print_json({"checkpoint": str(checkpoint), "source_accuracy": accuracy})
    return EXIT_OK


def cmd_adapt(args: argparse.Namespace, settings: CliConfig) -> int:
    config_hash = settings.config_hash()
    if args.checkpoint is None:
        if args.source or args.target or args.out:
            raise UsageError("--source, --target and --out need --checkpoint")
        reports = run_seeds(partial(run_pipeline, settings, command="adapt"), _seeds(settings), settings["workers"])
        for report in reports:
            write_report(report, args.output_dir, config_hash)
        summary = {
            "seeds": [r.seed for r in reports],
            "target_accuracy": summarize([r.target_accuracy for r in reports]),
            "baseline_accuracy": summarize([r.baseline_accuracy for r in reports]),
            "config": settings.echo(),
        }
        write_json(summary, Path(args.output_dir) / f"adapt-{config_hash}-summary.json")
        _print_json({k: v for k, v in summary.items() if k != "config"})
        return EXIT_OK

    model, _, _ = load_model(args.checkpoint)
    source, target = _load_pair(args, settings)
    adapters, report = adapt_and_report(settings, model, source, target, settings["seed"], "adapt", settings.echo())
    if args.out:
        spec = AdapterSpec(
            settings["adapter"], settings["kernel_size"], settings["adapter_rank"], settings["window_len"]
        )
        save_model(args.out, model, adapters, spec)
    write_report(report, args.output_dir, config_hash)
    _print_json(
        {
            "baseline_accuracy": report.baseline_accuracy,
            "source_accuracy": report.source_accuracy,
            "target_accuracy": report.target_accuracy,
        }
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, settings: CliConfig) -> int:
    model, adapters, spec = load_model(args.checkpoint)
    dataset = read_dataset(args.data, model.config.n_classes)
    accuracy = evaluate(
        model, adapters, dataset, spec.length, settings["vote_count"], settings["seed"], settings["eval_batch_size"]
    )
    _print_json(
        {
            "accuracy": accuracy,
            "adapter": spec.kind,
            "domain": dataset.domain_id,
            "samples": len(dataset),
            "vote_count": settings["vote_count"],
            "window_len": spec.length,
        }
    )
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace, settings: CliConfig) -> int:
    seeds = _seeds(settings)
    ladders = run_seeds(partial(run_ablation, settings), seeds, settings["workers"])
    table = pd.DataFrame(
        [{"seed": seed, **rung.to_dict()} for seed, ladder in zip(seeds, ladders) for rung in ladder],
        columns=["seed", "rung", "name", "target_accuracy"],
    )
    write_table(table, Path(args.output_dir) / f"{report_stem('ablate', settings.config_hash(), seeds[0])}.csv")
    means = table.groupby(["rung", "name"], sort=True)["target_accuracy"].mean().reset_index()
    print(means.to_string(index=False))
    return EXIT_OK


def cmd_gat_approx(args: argparse.Namespace, settings: CliConfig) -> int:
    table = run_gat_approx_study(settings)
    stem = report_stem("gat-approx", settings.config_hash(), settings["seed"])
    write_table(table, Path(args.output_dir) / f"{stem}.csv")
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_scaling(args: argparse.Namespace, settings: CliConfig) -> int:
    table = run_scaling_study(settings)
    stem = report_stem("scaling", settings.config_hash(), settings["seed"])
    write_table(table, Path(args.output_dir) / f"{stem}.csv")
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_compare_adapters(args: argparse.Namespace, settings: CliConfig) -> int:
    table = run_adapter_comparison(settings, settings["seed"])
    stem = report_stem("compare-adapters", settings.config_hash(), settings["seed"])
    write_table(table, Path(args.output_dir) / f"{stem}.csv")
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_report(args: argparse.Namespace, settings: CliConfig) -> int:
    print(format_report(read_report(args.path)))
    return EXIT_OK


# Parser ------------------------------------------------------------------------


def build_parser() -> CliParser:
    parser = CliParser(prog="cats-lab", description="Correlation-shift adaptation laboratory for time series")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=CliParser)
    commands.required = True

    def add(name: str, handler: Handler, help_text: str, with_config: bool = True) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text, description=help_text)
        sub.set_defaults(handler=handler)
        if with_config:
            _add_config_flags(sub)
        return sub

    sub = add("gen-data", cmd_gen_data, "generate a synthetic labelled domain as MTS1/MTSY files")
    sub.add_argument("output", help="output stem, or output directory with --sweep")
    sub.add_argument("--sweep", default=None, help="comma-separated rotation angles, one domain each (default: none)")

    sub = add("detect-shift", cmd_detect_shift, "rank test for a correlation shift between two datasets")
    sub.add_argument("source", help="source dataset (.mts path or stem)")
    sub.add_argument("target", help="target dataset (.mts path or stem)")

    sub = add("shift-rate", cmd_shift_rate, "fraction of domain pairs showing a correlation shift")
    sub.add_argument("directory", help="directory of .mts domains")

    sub = add("pair-rank", cmd_pair_rank, "rank domain pairs by per-class sliced Wasserstein distance")
    sub.add_argument("directory", help="directory of labelled .mts domains")

    sub = add("oracle-align", cmd_oracle_align, "verify the closed-form reweighting between two Gaussian specs")
    sub.add_argument("source", help="source GaussianSpec JSON")
    sub.add_argument("target", help="target GaussianSpec JSON")

    sub = add("pretrain", cmd_pretrain, "pretrain a backbone on the source domain")
    sub.add_argument("--source", default=None, help="source dataset (default: generated source domain)")
    sub.add_argument("--out", default=None, help="checkpoint path (default: <output-dir>/pretrain-<hash>-s<seed>.ckpt)")

    sub = add("adapt", cmd_adapt, "adapt to the target domain and report accuracies")
    sub.add_argument("--checkpoint", default=None, help="pretrained checkpoint (default: pretrain per seed)")
    sub.add_argument("--source", default=None, help="source dataset (default: generated pair)")
    sub.add_argument("--target", default=None, help="target dataset (default: generated pair)")
    sub.add_argument("--out", default=None, help="adapted checkpoint path (default: not written)")

    sub = add("eval", cmd_eval, "voting accuracy of a checkpoint on a labelled dataset")
    sub.add_argument("checkpoint", help="CKPT1 checkpoint")
    sub.add_argument("data", help="labelled dataset (.mts path or stem)")

    add("ablate", cmd_ablate, "seven-rung ablation ladder over n_seeds seeds")
    add("gat-approx", cmd_gat_approx, "fixed-attention regression error against scorer width")
    add("scaling", cmd_scaling, "closed-form parameter counts over d_model and window sweeps")
    add("compare-adapters", cmd_compare_adapters, "supervised CATS versus bottleneck adapter on target labels")

    sub = add("report", cmd_report, "pretty-print a report JSON", with_config=False)
    sub.add_argument("path", help="report JSON file")
    return parser


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse ``argv`` and run the chosen subcommand.

    Args:
        argv: Arguments without the program name (default: ``sys.argv[1:]``)

    Returns:
        Exit code: 0 success, 1 usage, 2 data or file, 3 numeric
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        overrides = {key: getattr(args, key, None) for key in SCHEMA}
        settings = parse_config(getattr(args, "config", None), overrides)
        logger.debug(f"Effective config {settings.config_hash()}: {settings.echo()}")
        return args.handler(args, settings)
    except SystemExit as e:
        return int(e.code or 0)
    except UsageError as e:
        sys.stderr.write(parser.format_usage())
        sys.stderr.write(f"{e}\n")
        return EXIT_USAGE
    except (DataError, OSError, ValueError, KeyError) as e:
        logger.error(f"Data error: {str(e)}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_DATA
    except (NumericError, ArithmeticError) as e:
        logger.error(f"Numeric failure: {str(e)}")
        sys.stderr.write(f"numeric failure: {e}\n")
        return EXIT_NUMERIC
    except Exception as e:
        logger.error(f"Unexpected failure: {str(e)}", exc_info=True)
        sys.stderr.write(f"error: {e}\n")
        return EXIT_DATA
