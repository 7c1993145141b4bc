"""
Command-line interface.

Exit codes: 0 success, 1 validation or parse error, 2 failed expectation or
invariant, 3 I/O error.
"""

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from pydantic import ValidationError

from patternflow.core.config import settings
from patternflow.core.errors import InvalidInputError, PatternFlowError, ProvenanceError
from patternflow.dynamics.flow import integrate
from patternflow.dynamics.sampler import train_sampler
from patternflow.dynamics.theory import bounds_report, verify_trajectory
from patternflow.models.models import FlowMode, Scenario
from patternflow.runner.case_studies import CASE_STUDIES, run_all_case_studies, run_case_study
from patternflow.runner.output import emit_csv, emit_svg, read_csv, read_summary, write_summary
from patternflow.runner.pipeline import run_pipeline
from patternflow.runner.scenarios import load_scenario_file
from patternflow.runner.sweep import run_gamma_sweep
from patternflow.schemas import SamplerConfig
from patternflow.utils import atomic_write_text, parse_float_list

logger = logging.getLogger("patternflow")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILED_CHECK = 2


class CliParser(argparse.ArgumentParser):
    """Usage errors are validation errors: exit 1, not argparse's default 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _print_json(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _run_dir(args, scenario_path: str) -> Path:
    return Path(args.out or settings.OUTPUT_DIR) / Path(scenario_path).stem


def _sampler_config(**fields) -> SamplerConfig:
    try:
        return SamplerConfig(**fields)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors())
        raise InvalidInputError(f"Invalid sampler settings: {problems}") from e


def _default_sampler_config(scenario: Scenario) -> SamplerConfig:
    return _sampler_config(
        learning_rate=scenario.step,
        steps=max(1, math.ceil(scenario.horizon / scenario.step)),
        beta=scenario.beta,
        seed=scenario.seed,
    )


def _write_run(trajectory, scenario: Scenario, run_dir: Path, svg: bool) -> None:
    emit_csv(trajectory, run_dir / "trajectory.csv")
    if svg:
        emit_svg(trajectory, ["acc"] + [f"pi_{i + 1}" for i in range(scenario.k)], run_dir / "trajectory.svg")
    write_summary(
        run_dir,
        {
            "scenario_digest": scenario.digest(),
            "mode": trajectory.mode.value,
            "converged": trajectory.converged,
            "samples": len(trajectory),
            "final_probs": [float(p) for p in trajectory.final_probs],
            "meta": trajectory.meta,
        },
    )


def cmd_simulate(args) -> int:
    scenario = load_scenario_file(args.scenario)
    if scenario.mode is FlowMode.SAMPLED:
        trajectory = train_sampler(scenario, _default_sampler_config(scenario))
    else:
        trajectory = integrate(scenario)
    run_dir = _run_dir(args, args.scenario)
    _write_run(trajectory, scenario, run_dir, args.svg)
    print(f"✅ {len(trajectory)} samples written to {run_dir}")
    print(f"   final probs: {np.array2string(trajectory.final_probs, precision=6)}")
    return EXIT_OK


def cmd_regime(args) -> int:
    scenario = load_scenario_file(args.scenario)
    report = bounds_report(scenario, args.epsilon)
    print(f"Regime:    {report.regime.value}{' (on boundary)' if report.on_boundary else ''}")
    print(f"Acc_ref:   {report.acc_ref:.12g}")
    if report.gamma is not None:
        print(f"gamma:     {report.gamma:.12g}")
    if report.t0_log10 is not None:
        raw = "overflow" if report.t0_overflow else f"{report.t0:.6g}"
        print(f"T0:        10^{report.t0_log10:.4f} ({raw})")
    if report.t1 is not None:
        note = " (already satisfied)" if report.t1_already_satisfied else ""
        print(f"T1(eps={report.epsilon:g}): {report.t1:.6g}{note}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    scenario = load_scenario_file(args.scenario)
    _print_json(bounds_report(scenario, args.epsilon).model_dump(mode="json"))
    return EXIT_OK


def cmd_case(args) -> int:
    if args.name == "all":
        reports = run_all_case_studies(args.out, args.workers)
    else:
        reports = {args.name: run_case_study(args.name, args.out)}
    failed = False
    for name, report in reports.items():
        status = "✅" if report.passed else "❌"
        print(f"{status} {name}: {report.regime.value}")
        for check in report.checks:
            if not check.passed:
                failed = True
                print(f"   - {check.name} failed (worst violation {check.worst_violation:.3g})")
    return EXIT_FAILED_CHECK if failed else EXIT_OK


def cmd_sample(args) -> int:
    scenario = load_scenario_file(args.scenario)
    if scenario.mode is not FlowMode.SAMPLED:
        logger.warning("Scenario mode is %s; training it as a sampled run", scenario.mode.value)
        scenario = replace(scenario, mode=FlowMode.SAMPLED)
    if args.seeds < 1:
        raise InvalidInputError("--seeds must be at least 1")
    run_dir = _run_dir(args, args.scenario)
    best = scenario.task.best_index
    hits = 0
    for offset in range(args.seeds):
        config = _sampler_config(
            batch_size=args.batch,
            learning_rate=args.lr,
            steps=args.steps,
            beta=scenario.beta,
            baseline=args.baseline,
            seed=scenario.seed + offset,
        )
        trajectory = train_sampler(scenario, config)
        target = run_dir / f"seed_{config.seed}" if args.seeds > 1 else run_dir
        _write_run(trajectory, scenario, target, svg=False)
        hits += int(np.argmax(trajectory.final_probs) == best)
    print(f"✅ {args.seeds} sampled run(s) written to {run_dir}")
    print(f"   argmax = {scenario.task.names[best]} in {hits}/{args.seeds} runs")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    scenario = load_scenario_file(args.scenario)
    report = run_pipeline(scenario, parse_float_list(args.p_sft), args.epsilon, args.horizon_cap)
    _print_json(report.model_dump(mode="json"))
    return EXIT_OK


def cmd_verify(args) -> int:
    scenario = load_scenario_file(args.scenario)
    csv_path = Path(args.trajectory)
    summary = read_summary(csv_path.parent)
    if summary is None:
        logger.warning("No summary next to %s; assuming it belongs to the scenario", csv_path)
        digest = scenario.digest()
    else:
        digest = summary.get("scenario_digest", "")
        if digest != scenario.digest():
            raise ProvenanceError(f"{csv_path} was produced from a different scenario")
    converged = bool(summary.get("converged", False)) if summary else False
    trajectory = read_csv(csv_path, scenario.mode, digest, converged)
    report = verify_trajectory(scenario, trajectory, args.epsilon)
    _print_json(report.model_dump(mode="json"))
    return EXIT_OK if report.passed else EXIT_FAILED_CHECK


def cmd_sweep(args) -> int:
    scenario = load_scenario_file(args.scenario)
    rows = run_gamma_sweep(scenario, parse_float_list(args.gammas), args.horizon_cap, args.workers)
    payload = [row.model_dump(mode="json") for row in rows]
    if args.out:
        path = atomic_write_text(Path(args.out) / f"{Path(args.scenario).stem}_sweep.json", json.dumps(payload, indent=2) + "\n")
        logger.info("Wrote sweep to %s", path)
    _print_json(payload)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog="patternflow", description="RLVR/SFT gradient-flow simulator")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS, help="Enable debug logging")
        p.set_defaults(handler=handler)
        return p

    p = add("simulate", cmd_simulate, "Integrate a scenario and write its trajectory")
    p.add_argument("scenario")
    p.add_argument("--out", default=None)
    p.add_argument("--svg", action="store_true")

    p = add("regime", cmd_regime, "Classify a scenario and print its bounds")
    p.add_argument("scenario")
    p.add_argument("--epsilon", type=float, default=settings.DEFAULT_EPSILON)

    p = add("bounds", cmd_bounds, "All applicable bounds as JSON")
    p.add_argument("scenario")
    p.add_argument("--epsilon", type=float, default=settings.DEFAULT_EPSILON)

    p = add("case", cmd_case, "Run a registered case study")
    p.add_argument("name", choices=list(CASE_STUDIES) + ["all"])
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=None)

    p = add("sample", cmd_sample, "Stochastic REINFORCE training runs")
    p.add_argument("scenario")
    p.add_argument("--batch", type=int, default=settings.SAMPLER_BATCH_SIZE)
    p.add_argument("--lr", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--baseline", choices=["none", "batch_mean"], default="none")
    p.add_argument("--out", default=None)

    p = add("pipeline", cmd_pipeline, "SFT-then-RLVR comparison")
    p.add_argument("scenario")
    p.add_argument("--p-sft", required=True, help="Comma separated, e.g. 0.9,0.05,0.05")
    p.add_argument("--epsilon", type=float, default=settings.DEFAULT_EPSILON)
    p.add_argument("--horizon-cap", type=float, default=None)

    p = add("verify", cmd_verify, "Re-run invariant checks on a stored trajectory")
    p.add_argument("trajectory")
    p.add_argument("scenario")
    p.add_argument("--epsilon", type=float, default=settings.DEFAULT_EPSILON)

    p = add("sweep", cmd_sweep, "Vary gamma and measure the entanglement time")
    p.add_argument("scenario")
    p.add_argument("--gammas", required=True, help="Comma separated, e.g. 2,4,6,8")
    p.add_argument("--horizon-cap", type=float, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None)
    return parser


def log_level(verbose: bool = False) -> int:
    if verbose or settings.DEBUG:
        return logging.DEBUG
    return getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(level=log_level(verbose), format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # --help exits 0, usage errors exit 1
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except PatternFlowError as e:
        logger.error("%s: %s", type(e).__name__, e.detail)
        print(f"❌ {e.detail}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print("\n👋 Interrupted")
        return 130


if __name__ == "__main__":
    sys.exit(main())
