"""
Benchmark command: one attack/defense evaluation or a sweep over one scale.
"""

import logging
import os
from argparse import Namespace
from typing import List, Optional, Tuple

from scoreag.cli import deps
from scoreag.cli.output import echo
from scoreag.core.exception_handlers import EXIT_OK, UsageError
from scoreag.io.results import write_json, write_manifest, write_metrics, write_task_results
from scoreag.services.eval_service import SWEEP_PARAMS, run_benchmark, sweep

# Set up logger
logger = logging.getLogger(__name__)


def parse_sweep(text: Optional[str]) -> Optional[Tuple[str, List[float]]]:
    """
    Parse ``param=v1,v2,...`` as given to ``--sweep``.

    Raises:
        UsageError: For an unknown parameter or a non-numeric value
    """
    if not text:
        return None
    param, sep, raw = text.partition("=")
    param = param.strip().replace("-", "_")
    if not sep or param not in SWEEP_PARAMS:
        raise UsageError(f"--sweep expects one of {', '.join(SWEEP_PARAMS)} as param=v1,v2,..., got {text!r}")
    try:
        values = [float(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--sweep values must be numbers, got {raw!r}")
    if not values:
        raise UsageError("--sweep needs at least one value")
    return param, values


def evaluate(args: Namespace) -> int:
    config = deps.get_config(args)
    requested = parse_sweep(args.sweep)
    if requested is None and config.eval.sweep is not None:
        requested = config.eval.sweep.param, list(config.eval.sweep.values)

    classifier = deps.get_classifier(config)
    score_model = deps.get_optional_score_model(config)
    _, evaluation = deps.get_splits(config)
    os.makedirs(config.out_dir, exist_ok=True)
    artifacts = []

    if requested is None:
        report, results = run_benchmark(config, classifier, evaluation, score_model)
        reports = [report]
        artifacts.append(write_json(os.path.join(config.out_dir, "metrics.json"), report))
        if results:
            artifacts.append(write_task_results(os.path.join(config.out_dir, "eval_results.csv"), results))
    else:
        param, values = requested
        logger.info(f"Sweeping {param} over {values}")
        if param != "epsilon" and score_model is None and config.eval.attack not in ("gas", "gat"):
            logger.warning(f"Sweeping {param} has no effect on attack={config.eval.attack}, defense=none")
        reports = sweep(config, param, values, classifier, evaluation, score_model)
        payload = [r.model_dump(mode="json") for r in reports]
        artifacts.append(write_json(os.path.join(config.out_dir, "metrics.json"), payload))

    artifacts.append(write_metrics(os.path.join(config.out_dir, "metrics.csv"), reports))
    write_manifest(config.out_dir, "eval", config, config.seed, artifacts)
    echo(args, reports)
    return EXIT_OK


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("eval", parents=parents, help="Benchmark an attack with an optional GAP defense")
    parser.add_argument(
        "--attack",
        dest="eval_attack",
        choices=["none", "fgsm", "pgd-l2", "pgd-linf", "gat", "gas"],
        help="Override eval.attack",
    )
    parser.add_argument("--defense", dest="eval_defense", choices=["none", "gap"], help="Override eval.defense")
    parser.add_argument("--sweep", default=None, help="Scale sweep, e.g. s_x=0,2,5,10")
    parser.add_argument("--epsilon", type=float, default=None, help="Override baseline.epsilon")
    parser.set_defaults(handler=evaluate)
