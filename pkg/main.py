"""Rates, optima and an exact-repair simulator for repairable multiple-description storage.

Usage:
  main.py two-node --d1=<d> --d2=<d> [options]
  main.py three-node --d1=<d> --d2=<d> [options]
  main.py sweep --d2-min=<d> --d2-max=<d> --steps=<n> --out=<path> [--d1=<d>] [options]
  main.py oracle --nodes=<n> --d1=<d> --d2=<d> [options]
  main.py simulate --nodes=<n> --d1=<d> --d2=<d> [options]
  main.py entropy --config=<path> --expr=<expr> [options]
  main.py (-h | --help)

Options:
  -h --help              Show this screen.
  --format=<fmt>         Output format: text, json or csv [default: text].
  --grid=<n>             Coarse grid points of every rho search [default: 512].
  --workers=<n>          Threads for sweep rows, oracle columns or simulation trials [default: 1].
  --objective=<obj>      Oracle objective: distributed (min R + R_r) or repair-node (min R) [default: distributed].
  --rho-points=<n>       Oracle rho grid size [default: 201].
  --sigma-points=<n>     Oracle common-noise grid size [default: 25].
  --top-points=<n>       Oracle top-noise grid size [default: 3].
  --samples=<n>          Samples per simulated block [default: 10000].
  --trials=<n>           Simulated blocks [default: 10].
  --seed=<s>             Simulation seed [default: 0].
  --overhead=<bits>      Quantizer overhead allowance in bits per sample [default: 0.5].
  --out=<path>           Output file (sweep CSV, simulation JSON).
  --verbose              Log progress to stderr.
  --report-dir=<dir>     Also write a log report to <dir>/<uuid>.txt.

Expressions for entropy --expr: distributed, repair-node, modified-prp (aliases thm3, thm4, prop1).
"""
import csv
import io
import json
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from docopt import DocoptExit, docopt

from rate_region.closed_form import two_node_optimal
from rate_region.constants import DEFAULT_D1, FLOAT_SIG_DIGITS
from rate_region.entropy_engine import distortion_profile, rate_breakdown
from rate_region.errors import InvalidParametersError
from rate_region.models import ChannelParams, DistortionSpec, RatePoint, Scheme
from rate_region.optimizer import OptimizerConfig
from rate_region.region_explorer import OracleGrid, brute_force_oracle, sweep, three_node_regime_optima
from run_log.run_log import configure_logging
from storage_sim.repair_sim import SimConfig, run_experiment

logger = logging.getLogger("main")

FORMATS = ("text", "json", "csv")
EXPRESSIONS = {"distributed": Scheme.DISTRIBUTED, "thm3": Scheme.DISTRIBUTED,
               "repair-node": Scheme.REPAIR_NODE, "thm4": Scheme.REPAIR_NODE,
               "modified-prp": Scheme.MODIFIED_PRP, "prop1": Scheme.MODIFIED_PRP}
OBJECTIVES = {"distributed": Scheme.DISTRIBUTED, "repair-node": Scheme.REPAIR_NODE}
COMMANDS = ("two-node", "three-node", "sweep", "oracle", "simulate", "entropy")


class UsageError(Exception):
    """Flag values that parse but are out of range; reported with exit code 2."""


def fmt(value: Optional[float]) -> str:
    if value is None:
        return ""
    return format(value, f".{FLOAT_SIG_DIGITS}g")


def _float(args: Dict[str, Any], flag: str) -> float:
    try:
        return float(args[flag])
    except (TypeError, ValueError):
        raise UsageError(f"{flag} must be a number, got {args[flag]!r}")


def _int(args: Dict[str, Any], flag: str, minimum: int = 1) -> int:
    try:
        value = int(args[flag])
    except (TypeError, ValueError):
        raise UsageError(f"{flag} must be an integer, got {args[flag]!r}")
    if value < minimum:
        raise UsageError(f"{flag} must be >= {minimum}, got {value}")
    return value


def _spec(args: Dict[str, Any]) -> DistortionSpec:
    try:
        return DistortionSpec(d1=_float(args, "--d1"), d2=_float(args, "--d2"))
    except InvalidParametersError as e:
        raise UsageError(str(e))


def _nodes(args: Dict[str, Any]) -> int:
    nodes = _int(args, "--nodes", minimum=1)
    if nodes not in (2, 3):
        raise UsageError(f"--nodes must be 2 or 3, got {nodes}")
    return nodes


def _format(args: Dict[str, Any]) -> str:
    if args["--format"] not in FORMATS:
        raise UsageError(f"--format must be one of {', '.join(FORMATS)}, got {args['--format']!r}")
    return args["--format"]


def _optimizer(args: Dict[str, Any]) -> OptimizerConfig:
    try:
        return OptimizerConfig(grid_points=_int(args, "--grid"), workers=_int(args, "--workers"))
    except InvalidParametersError as e:
        raise UsageError(str(e))


def _csv(header: Sequence[str], rows: List[Sequence[Any]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return out.getvalue().rstrip("\n")


def _point_text(point: RatePoint) -> List[str]:
    lines = [f"r: {fmt(point.r)}", f"r_repair: {fmt(point.r_repair)}", f"r_total: {fmt(point.r_total)}"]
    if point.params is not None:
        lines.append(f"params: {point.params.to_json()}")
    return lines


def _point_row(label: str, point: Optional[RatePoint]) -> List[str]:
    if point is None:
        return [label, "", "", ""]
    return [label, fmt(point.r), fmt(point.r_repair), fmt(point.r_total)]


def cmd_two_node(args: Dict[str, Any]) -> int:
    spec, output = _spec(args), _format(args)
    point = two_node_optimal(spec)
    if output == "json":
        print(json.dumps(point.to_dict()))
    elif output == "csv":
        print(_csv(["regime", "r", "r_repair", "r_total"], [_point_row(point.regime.value, point)]))
    else:
        print("\n".join([f"regime: {point.regime.value}"] + _point_text(point)))
    return 0


def cmd_three_node(args: Dict[str, Any]) -> int:
    spec, output, cfg = _spec(args), _format(args), _optimizer(args)
    optima = three_node_regime_optima(spec, cfg)
    feasible = [point for point in optima.values() if point is not None]
    if not feasible:
        print(f"no three-node regime is feasible for d1={spec.d1}, d2={spec.d2}", file=sys.stderr)
        return 1
    best = min(feasible, key=lambda point: point.r_total)
    if output == "json":
        print(json.dumps({"best": best.to_dict(),
                          "regimes": {regime.value: point.to_dict() if point else None
                                      for regime, point in optima.items()}}))
    elif output == "csv":
        rows = [_point_row(regime.value, point) for regime, point in optima.items()]
        rows.append(_point_row("best", best))
        print(_csv(["regime", "r", "r_repair", "r_total"], rows))
    else:
        lines = []
        for regime, point in optima.items():
            if point is None:
                lines.append(f"{regime.value}: infeasible")
            else:
                note = " (transcription divergent)" if point.transcription_divergent else ""
                lines.append(f"{regime.value}: r={fmt(point.r)} r_repair={fmt(point.r_repair)} "
                             f"r_total={fmt(point.r_total)}{note}")
        lines.append(f"best regime: {best.regime.value}")
        lines.append(f"rho: {fmt(best.params.layers[0].rho)}")
        print("\n".join(lines + _point_text(best)))
    return 0


def cmd_sweep(args: Dict[str, Any]) -> int:
    d1 = _float(args, "--d1") if args["--d1"] is not None else DEFAULT_D1
    d2_min, d2_max = _float(args, "--d2-min"), _float(args, "--d2-max")
    steps, cfg = _int(args, "--steps"), _optimizer(args)
    if not 0 < d1 < 1 or not 0 < d2_min <= d2_max <= d1:
        raise UsageError(f"need 0 < d2-min <= d2-max <= d1 < 1, got {d2_min}, {d2_max}, {d1}")
    result = sweep(d1, list(np.linspace(d2_min, d2_max, steps)), cfg)
    with open(args["--out"], "w", newline="") as f:
        f.write(result.to_csv())
    print(f"wrote {len(result.rows)} rows to {args['--out']}")
    return 0


def cmd_oracle(args: Dict[str, Any]) -> int:
    spec, nodes, output = _spec(args), _nodes(args), _format(args)
    if args["--objective"] not in OBJECTIVES:
        raise UsageError(f"--objective must be one of {', '.join(OBJECTIVES)}, got {args['--objective']!r}")
    try:
        grid = OracleGrid(rho_points=_int(args, "--rho-points", minimum=2),
                          sigma_points=_int(args, "--sigma-points"),
                          top_points=_int(args, "--top-points", minimum=0),
                          workers=_int(args, "--workers"))
    except InvalidParametersError as e:
        raise UsageError(str(e))
    point = brute_force_oracle(spec, nodes, grid, OBJECTIVES[args["--objective"]])
    if output == "json":
        print(json.dumps(point.to_dict()))
    elif output == "csv":
        print(_csv(["regime", "r", "r_repair", "r_total"], [_point_row("oracle", point)]))
    else:
        print("\n".join(_point_text(point)))
    return 0


def cmd_simulate(args: Dict[str, Any]) -> int:
    spec, nodes, output = _spec(args), _nodes(args), _format(args)
    samples, trials = _int(args, "--samples"), _int(args, "--trials")
    seed, workers = _int(args, "--seed", minimum=0), _int(args, "--workers")
    overhead = _float(args, "--overhead")
    if overhead < 0:
        raise UsageError(f"--overhead must be >= 0, got {overhead}")

    cfg = SimConfig.from_spec(nodes, spec, block_len=samples, seed=seed, quantizer_overhead_bits=overhead)
    report = run_experiment(cfg, trials, workers=workers)
    if args["--out"]:
        with open(args["--out"], "w") as f:
            f.write(report.to_json())
    if output == "json":
        print(report.to_json())
    elif output == "csv":
        print(_csv(["per_node_bits", "bits_per_sample", "info_rate", "d1", "d2", "repair_exact_rate", "measured_rho"],
                   [[fmt(report.per_node_bits), fmt(report.bits_per_sample), fmt(report.info_rate),
                     fmt(report.empirical_d[1]), fmt(report.empirical_d[2]), fmt(report.repair_exact_rate),
                     fmt(report.measured_rho)]]))
    else:
        print("\n".join([
            f"bits per sample: {fmt(report.bits_per_sample)} (information rate {fmt(report.info_rate)})",
            f"d1: {fmt(report.empirical_d[1])} (target {fmt(spec.d1)}, ceiling {fmt(cfg.distortion_ceiling(1))})",
            f"d2: {fmt(report.empirical_d[2])} (target {fmt(spec.d2)}, ceiling {fmt(cfg.distortion_ceiling(2))})",
            f"repair exact rate: {fmt(report.repair_exact_rate)}",
            f"measured rho: {fmt(report.measured_rho) or 'n/a'}"]))
    return 0 if report.repair_exact_rate == 1.0 else 1


def cmd_entropy(args: Dict[str, Any]) -> int:
    output = _format(args)
    if args["--expr"] not in EXPRESSIONS:
        raise UsageError(f"--expr must be one of {', '.join(EXPRESSIONS)}, got {args['--expr']!r}")
    scheme = EXPRESSIONS[args["--expr"]]
    with open(args["--config"]) as f:
        text = f.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise UsageError(f"malformed JSON in {args['--config']}: {e}")
    params = ChannelParams.from_dict(doc)
    breakdown = rate_breakdown(params, scheme)
    distortions = distortion_profile(params, scheme)

    if output == "json":
        result = breakdown.to_dict()
        result["distortions"] = {str(m): d for m, d in distortions.items()}
        print(json.dumps(result))
    elif output == "csv":
        print(_csv(["layer", "common_rate", "private_rate", "repair_term", "repair_free",
                    "common_codebook_rate", "private_codebook_rate"],
                   [[terms.layer, fmt(terms.common_rate), fmt(terms.private_rate), fmt(terms.repair_term),
                     terms.repair_free, fmt(terms.common_codebook_rate), fmt(terms.private_codebook_rate)]
                    for terms in breakdown.layers]))
    else:
        lines = [f"scheme: {scheme.value}", f"r: {fmt(breakdown.r)}", f"r_repair: {fmt(breakdown.r_repair)}",
                 f"r_total: {fmt(breakdown.r + breakdown.r_repair)}", f"top_rate: {fmt(breakdown.top_rate)}"]
        for terms in breakdown.layers:
            lines.append(f"layer {terms.layer}: common_rate={fmt(terms.common_rate)} "
                         f"private_rate={fmt(terms.private_rate)} repair_term={fmt(terms.repair_term)} "
                         f"repair_free={terms.repair_free} common_codebook_rate={fmt(terms.common_codebook_rate)} "
                         f"private_codebook_rate={fmt(terms.private_codebook_rate)}")
        lines += [f"d{m}: {fmt(d)}" for m, d in distortions.items()]
        print("\n".join(lines))
    return 0


HANDLERS = {"two-node": cmd_two_node, "three-node": cmd_three_node, "sweep": cmd_sweep,
            "oracle": cmd_oracle, "simulate": cmd_simulate, "entropy": cmd_entropy}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = docopt(__doc__, argv=argv)
    except DocoptExit as e:
        print(e, file=sys.stderr)
        return 2
    configure_logging(verbose=args["--verbose"], report_dir=args["--report-dir"])
    command = next(name for name in COMMANDS if args[name])
    try:
        return HANDLERS[command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        logger.debug("%s failed", command, exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
