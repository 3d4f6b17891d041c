"""Command line entry point: ``gibbslab run|list|schema|show-config``."""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources

from .config import ConfigError, load_config, schema
from .orlicz import DivergentIntegralError, NotNiceError
from .scenarios import REGISTRY, get
from .specification import TailContainmentError
from .sweep import SupportBudgetError, SupportConditionError

EXIT_FAIL = 1
EXIT_ERROR = 2


def default_config_text(name: str) -> str:
    get(name)
    return resources.files("gibbslab").joinpath("configs", f"{name}.yaml").read_text()


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, args.set or [], args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    from .runner import run
    try:
        result = run(cfg, args.out)
    except SupportBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except TailContainmentError as exc:
        print(f"error: tail containment failed: {exc}; widen the spin grid or lower epsilon",
              file=sys.stderr)
        return EXIT_ERROR
    except (SupportConditionError, NotNiceError, DivergentIntegralError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for line in result.verdicts():
        print(f"{cfg.scenario} {line}")
    print(f"artifacts: {result.out_dir} ({result.seconds:.1f} s)")
    return 0 if result.passed else EXIT_FAIL


def _cmd_list(args) -> int:
    width = max(len(n) for n in REGISTRY)
    for name, sc in REGISTRY.items():
        crits = ",".join(f"C{c}" for c in sc.criteria)
        print(f"{name:<{width}}  {crits:<4}  {sc.description}")
    return 0


def _cmd_schema(args) -> int:
    print(json.dumps(schema(), indent=2, sort_keys=True))
    return 0


def _cmd_show_config(args) -> int:
    try:
        sys.stdout.write(default_config_text(args.scenario))
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_ERROR
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gibbslab",
                                     description="Reproducible lattice spin-system experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the scenario named in a config file")
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--out", required=True, help="output directory for CSVs and manifest")
    p.add_argument("--seed", type=int, help="overrides sampler.seed")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config value, e.g. model.J=0.1 (repeatable)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("list", help="print the scenario registry")
    p.set_defaults(func=_cmd_list)

    p = sub.add_parser("schema", help="print the config JSON schema")
    p.set_defaults(func=_cmd_schema)

    p = sub.add_parser("show-config", help="print the bundled default config of a scenario")
    p.add_argument("scenario")
    p.set_defaults(func=_cmd_show_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
