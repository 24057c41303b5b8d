"""Command-line entry point: ``shelby-audit <scenario> --config FILE``.

Exit status is 0 on success, 2 when a theorem-verification scenario runs
inside its hypotheses and its assertion fails, and 1 on operational errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from datetime import datetime, timezone
from fractions import Fraction

from . import __version__, kernel
from .commitments import CommitmentError
from .config import SCENARIOS, ConfigError, ScenarioConfig, build_config, load_config, parse_pairs
from .equilibrium import coalition_best_deviation, verify_nash, verify_strong_equilibrium, verify_uniqueness
from .model import (
    CoalitionSpec,
    HypothesisError,
    ParamError,
    ProtocolParams,
    check_conditions,
    collusive_profile,
    dishonest_profile,
    expected_utility,
    honest_profile,
)
from .simulator import SimulationConfigError, run_simulation

SCHEMA = "v1"
EXIT_OK, EXIT_ERROR, EXIT_ASSERTION = 0, 1, 2

log = logging.getLogger("shelby_audit")


def _num(x):
    """JSON-friendly number: a float when it round-trips, else an exact 'p/q' string."""
    if isinstance(x, Fraction):
        f = float(x)
        if Fraction(repr(f)) == x:
            return int(f) if x.denominator == 1 and abs(f) < 2**53 else f
        return str(x)
    return x


def params_echo(params: ProtocolParams) -> dict:
    return {k: _num(v) for k, v in vars(params).items()}


def _exact(value) -> dict:
    return {"value": float(value), "exact": str(Fraction(value))}


def _profile(cfg: ScenarioConfig):
    n = cfg.params.n
    if cfg.profile == "honest":
        return honest_profile(n), None
    if cfg.profile == "dishonest":
        return dishonest_profile(n), None
    if not cfg.members:
        raise ConfigError("profile = collusive needs members")
    spec = CoalitionSpec(frozenset(cfg.members), cfg.commitment, cfg.extension)
    return collusive_profile(n, spec.members), spec


# ---------------------------------------------------------------- scenarios


def scenario_check(cfg: ScenarioConfig):
    return check_conditions(cfg.params).to_json(), EXIT_OK, None


def scenario_calibrate(cfg: ScenarioConfig):
    p = cfg.params.exact()
    penalty = p.p_a * p.sigma_a
    out = {
        "storage_reward_to_cost": _exact(p.r_s / p.c_s) if p.c_s else None,
        "honest_vs_lazy_zero_margin": _exact((1 - p.epsilon) * p.r_a - p.c_a),
        "honest_beats_lazy_zero": (1 - p.epsilon) * p.r_a - p.c_a > 0,
        "false_one_expected_penalty": _exact(penalty),
        "cheating_disadvantage_ratio": _exact(penalty / p.r_a) if p.r_a else None,
        "reconstruction_ratio": _exact(p.p_s * p.k * p.c_read / p.c_s) if p.c_s else None,
    }
    return out, EXIT_OK, None


def scenario_simulate(cfg: ScenarioConfig):
    profile, spec = _profile(cfg)
    summary = run_simulation(cfg.params, profile, cfg.epochs, coalition=spec)
    furnishers = spec.members if (spec and spec.commitment and not spec.extension_mode) else ()
    analytic = [float(expected_utility(i, profile, cfg.params, furnishers=furnishers).total) for i in range(cfg.params.n)]
    out = summary.to_json()
    out["profile"] = cfg.profile
    out["analytic_mean_total"] = analytic
    return out, EXIT_OK, summary.utilities_csv()


def scenario_nash(cfg: ScenarioConfig):
    profile, _ = _profile(cfg)
    report = verify_nash(profile, cfg.params, exact=cfg.exact)
    return report.to_json(), EXIT_OK, None


def scenario_uniqueness(cfg: ScenarioConfig):
    report = verify_uniqueness(cfg.params, cfg.n_small, exact=cfg.exact)
    code = EXIT_ASSERTION if report.assertion_holds is False else EXIT_OK
    return report.to_json(), code, None


def _theorem_holds(report, commitment: bool, extension: bool) -> bool:
    if commitment and not extension:
        return report.bound_satisfied
    return report.strong_condition_holds


def scenario_coalition(cfg: ScenarioConfig):
    p = cfg.params
    if cfg.max_coalition is not None:
        strong = verify_strong_equilibrium(p, cfg.max_coalition, commitment=cfg.commitment, extension_mode=cfg.extension)
        out = strong.to_json()
        out["coalitions"] = [r.to_json() for r in strong.reports]
        holds = all(_theorem_holds(r, cfg.commitment, cfg.extension) for r in strong.reports)
        out["theorem_assertion_holds"] = holds if strong.hypotheses_satisfied else None
        failed = strong.hypotheses_satisfied and not holds
    else:
        if not cfg.members:
            raise ConfigError("coalition scenario needs members or max_coalition")
        spec = CoalitionSpec(frozenset(cfg.members), cfg.commitment, cfg.extension)
        report = coalition_best_deviation(spec, p)
        out = report.to_json()
        holds = _theorem_holds(report, cfg.commitment, cfg.extension)
        out["theorem_assertion_holds"] = holds if report.hypotheses_satisfied else None
        failed = report.hypotheses_satisfied and not holds
    return out, EXIT_ASSERTION if failed else EXIT_OK, None


RUNNERS = {
    "check": scenario_check,
    "simulate": scenario_simulate,
    "nash": scenario_nash,
    "uniqueness": scenario_uniqueness,
    "coalition": scenario_coalition,
    "calibrate": scenario_calibrate,
}


def run_scenario(cfg: ScenarioConfig, scenario: str | None = None):
    """Run one configured scenario; returns ``(results, exit_code, csv_text_or_None)``."""
    name = scenario or cfg.scenario
    if name not in RUNNERS:
        raise ConfigError(f"unknown or missing scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    return RUNNERS[name](cfg)


# ---------------------------------------------------------------- sweeps and output


def parse_sweep(items: list[str]) -> list[tuple[str, list[str]]]:
    out = []
    for item in items:
        key, sep, values = item.partition("=")
        if not sep or not key.strip() or not values.strip():
            raise ConfigError(f"bad --sweep {item!r}; expected key=v1,v2,...")
        out.append((key.strip(), [v.strip() for v in values.split(",") if v.strip()]))
    return out


def sweep_points(base_values: dict, sweep: list[tuple[str, list[str]]]):
    keys = [k for k, _ in sweep]
    for combo in itertools.product(*(vals for _, vals in sweep)):
        values = dict(base_values)
        values.update(zip(keys, combo))
        yield dict(zip(keys, combo)), values


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def results_csv(results) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["key", "value"])
    for key, value in _flatten(results):
        writer.writerow([key, value])
    return buf.getvalue()


def build_report(scenario: str, cfg: ScenarioConfig, results) -> dict:
    return {
        "schema": SCHEMA,
        "scenario": scenario,
        "params_echo": params_echo(cfg.params),
        "seed": cfg.params.seed,
        "results": results,
        "metadata": {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "backend": kernel.BACKEND,
            "version": __version__,
        },
    }


def _raw_values(cfg_path: str) -> tuple[dict, dict]:
    with open(cfg_path, encoding="utf-8") as fh:
        return parse_pairs(fh.read(), cfg_path)


class _Parser(argparse.ArgumentParser):
    # usage errors are operational (exit 1); 2 is reserved for failed assertions
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def main(argv: list[str] | None = None) -> int:
    parser = _Parser(prog="shelby-audit", description=__doc__.splitlines()[0])
    parser.add_argument("scenario", nargs="?", choices=SCENARIOS, help="scenario to run (default: the config's scenario key)")
    parser.add_argument("--config", required=True, help="flat key = value config file")
    parser.add_argument("-o", "--output", help="report path (default: config output key, else stdout)")
    parser.add_argument("--format", choices=("json", "csv"), help="report format")
    parser.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    parser.add_argument("--sweep", action="append", default=[], metavar="KEY=V1,V2", help="sweep a key over values; repeatable")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    try:
        cfg = load_config(args.config)
        scenario = args.scenario or cfg.scenario
        if scenario is None:
            raise ConfigError("no scenario given on the command line or in the config", source=args.config)
        fmt = args.format or cfg.format
        output = args.output or cfg.output
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg = cfg.with_params(seed=args.seed)

        if args.sweep:
            values, lines = _raw_values(args.config)
            if args.seed is not None:
                values["seed"] = str(args.seed)
            points = []
            code = EXIT_OK
            csv_rows = []
            for point, point_values in sweep_points(values, parse_sweep(args.sweep)):
                point_cfg = build_config(point_values, lines, args.config)
                results, point_code, _ = run_scenario(point_cfg, scenario)
                code = max(code, point_code)
                points.append({"point": point, "params_echo": params_echo(point_cfg.params), "results": results})
                csv_rows.append((point, results))
            report = build_report(scenario, cfg, {"sweep": points})
            csv_text = "".join(results_csv({"point": p, "results": r}) for p, r in csv_rows)
        else:
            results, code, csv_text = run_scenario(cfg, scenario)
            report = build_report(scenario, cfg, results)
            if csv_text is None:
                csv_text = results_csv(results)

        text = json.dumps(report, indent=2, ensure_ascii=False) + "\n" if fmt == "json" else csv_text
        if output:
            with open(output, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        if code == EXIT_ASSERTION:
            print(f"shelby-audit: {scenario} assertion failed", file=sys.stderr)
        return code
    except (ConfigError, HypothesisError, ParamError, SimulationConfigError, CommitmentError, OSError) as exc:
        print(f"shelby-audit: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
