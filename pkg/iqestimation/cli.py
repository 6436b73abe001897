"""
Command-line front door.

Diagnostics go to stderr through logging; stdout only carries ``key=value``
lines. Exit codes: 0 success, 2 usage/configuration/validation errors,
3 I/O errors, 4 other runtime errors.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from iqestimation import __version__
from iqestimation.config import configure_logging, settings
from iqestimation.exceptions import (
    ConfigInvalid,
    CorpusError,
    EmptyRatings,
    IQEstimationError,
    RatingOutOfRange,
    SpecInvalid,
    TooFewDialogues,
    UnknownParam,
    UnlabeledCorpus,
)
from iqestimation.features import View
from iqestimation.pipeline import (
    ablation_pipeline,
    compare_pipeline,
    extract_pipeline,
    load_run_config,
    resolve_generator_spec,
    resolve_run_config,
    sweep_pipeline,
    synth_pipeline,
    train_eval_pipeline,
    validate_pipeline,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_RUNTIME = 4

USAGE_ERRORS = (
    ConfigInvalid,
    SpecInvalid,
    CorpusError,
    EmptyRatings,
    RatingOutOfRange,
    UnknownParam,
    TooFewDialogues,
    UnlabeledCorpus,
)


def exit_code(error: BaseException) -> int:
    if isinstance(error, USAGE_ERRORS):
        return EXIT_USAGE
    if isinstance(error, OSError):
        return EXIT_IO
    return EXIT_RUNTIME


def emit(**values) -> None:
    for key, value in values.items():
        if isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, float):
            value = format(value, ".6g")
        elif value is None:
            value = ""
        print(f"{key}={value}")


def _out_dir(args) -> Path:
    return Path(args.out_dir or settings.output.out_dir)


def _run_config(args, **overrides):
    values = load_run_config(args.config)
    return resolve_run_config(values, {"seed": args.seed, **overrides}, jobs=args.jobs)


# Commands


def cmd_validate(args) -> int:
    corpus, warnings = validate_pipeline(args.corpus)
    emit(
        dialogues=len(corpus),
        exchanges=corpus.exchange_count,
        labeled=corpus.is_labeled,
        warnings=len(warnings),
    )
    return EXIT_OK


def cmd_extract(args) -> int:
    run = _run_config(args)
    out = Path(args.out) if args.out else _out_dir(args) / "features.csv"
    matrix = extract_pipeline(args.corpus, run, out)
    emit(
        features=len(matrix.names),
        user_view_features=sum(1 for name in matrix.names if name.endswith(f":{View.USER.value}")),
        rows=len(matrix),
        out=out,
    )
    return EXIT_OK


def _emit_report(report, manifest) -> None:
    best = report.best()
    emit(rows=len(report.rows), best=best.config, uar=best.uar, kappa=best.kappa, rho=best.rho)
    emit(manifest=manifest.id)


def cmd_train_eval(args) -> int:
    run = _run_config(args)
    report, manifest = train_eval_pipeline(
        args.corpus,
        run,
        _out_dir(args),
        plot=args.plot,
        model_path=args.save_model,
        shuffled=args.shuffle_labels,
    )
    _emit_report(report, manifest)
    return EXIT_OK


def cmd_ablation(args) -> int:
    run = _run_config(args)
    report, manifest = ablation_pipeline(args.corpus, run, _out_dir(args), plot=args.plot)
    _emit_report(report, manifest)
    return EXIT_OK


def cmd_sweep(args) -> int:
    run = _run_config(args, n_min=args.n_min, n_max=args.n_max)
    report, manifest = sweep_pipeline(args.corpus, run, _out_dir(args), plot=args.plot)
    best = report.best()
    emit(rows=len(report.rows), best_n=best.n, uar=best.uar, rel_uar_vs_baseline=best.rel_uar_vs_baseline)
    emit(manifest=manifest.id)
    return EXIT_OK


def cmd_synth(args) -> int:
    values = load_run_config(args.config)
    spec = resolve_generator_spec(values, {"seed": args.seed, "dialogues": args.dialogues, "raters": args.raters})
    out = Path(args.out) if args.out else _out_dir(args) / "synth_corpus.csv"
    corpus, manifest = synth_pipeline(spec, out, _out_dir(args))
    emit(dialogues=len(corpus), exchanges=corpus.exchange_count, out=out, manifest=manifest.id)
    return EXIT_OK


def cmd_compare(args) -> int:
    result, manifest = compare_pipeline(args.runs_a, args.runs_b, args.a, args.b, out_dir=_out_dir(args))
    emit(statistic=result.statistic, n=result.n, p_value=result.p_value, method=result.method)
    if manifest is not None:
        emit(manifest=manifest.id)
    return EXIT_OK


COMMANDS: Dict[str, Callable] = {
    "validate": cmd_validate,
    "extract": cmd_extract,
    "train-eval": cmd_train_eval,
    "ablation": cmd_ablation,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Run configuration file (key = value lines)")
    common.add_argument("--seed", type=int, help="Master seed (overrides the configuration file)")
    common.add_argument("--out-dir", help="Directory for reports and manifest")
    common.add_argument("--jobs", type=int, default=settings.experiments.jobs, help="Worker processes")
    common.add_argument("--log-level", default=None, help="Logging level (default from settings)")

    parser = argparse.ArgumentParser(
        prog="iqestimation",
        description="Interaction Quality estimation workbench",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    validate = subparsers.add_parser("validate", parents=[common], help="Check a corpus CSV")
    validate.add_argument("corpus", type=Path)

    extract = subparsers.add_parser("extract", parents=[common], help="Write the feature matrix")
    extract.add_argument("corpus", type=Path)
    extract.add_argument("--out", help="Feature CSV path (default <out-dir>/features.csv)")

    for name, help_text in (
        ("train-eval", "Cross-validate one configuration"),
        ("ablation", "Parameter-level ablation for both feature sets"),
        ("sweep", "Window-size sweep"),
    ):
        sub = subparsers.add_parser(name, parents=[common], help=help_text)
        sub.add_argument("corpus", type=Path)
        sub.add_argument("--plot", action="store_true", help="Also render a PNG chart")
        if name == "train-eval":
            sub.add_argument("--save-model", type=Path, help="Train on the whole corpus and save the model")
            sub.add_argument("--shuffle-labels", action="store_true", help="Label-shuffled control run")
        if name == "sweep":
            sub.add_argument("--n-min", type=int)
            sub.add_argument("--n-max", type=int)

    synth = subparsers.add_parser("synth", parents=[common], help="Generate a synthetic corpus")
    synth.add_argument("--dialogues", type=int)
    synth.add_argument("--raters", type=int)
    synth.add_argument("--out", help="Corpus CSV path (default <out-dir>/synth_corpus.csv)")

    compare = subparsers.add_parser("compare", parents=[common], help="Wilcoxon test between two runs")
    compare.add_argument("runs_a", type=Path)
    compare.add_argument("runs_b", type=Path)
    compare.add_argument("--a", help="Row label in the first runs file")
    compare.add_argument("--b", help="Row label in the second runs file")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except (IQEstimationError, OSError) as e:
        code = exit_code(e)
        logger.error("%s: %s", type(e).__name__, e)
        return code
    except (ValueError, KeyError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
