"""Command-line entry point: ``pombo run | verify | enumerate``.

Exit codes: 0 success, 2 config error, 3 runtime failure, 4 verification failure.
"""

import argparse
import sys

from pombo.algorithms import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 2, 3, 4


def _parse_params(pairs):
    params = {}
    for item in pairs or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        try:
            params[key] = int(raw)
        except ValueError:
            try:
                params[key] = float(raw)
            except ValueError:
                raise ConfigError(f"--param {key}: expected a number, got {raw!r}") from None
    return params


def cmd_run(args):
    from pombo.harness import load_config, run_experiment

    spec = load_config(args.config)
    result = run_experiment(spec, workers=args.workers)
    for seed, err in sorted(result.failures.items()):
        print(f"seed {seed} failed: {err}", file=sys.stderr)
    print(f"wrote {len(result.seed_files)} seed traces and {result.aggregate_file}")
    return EXIT_OK


def cmd_verify(args):
    from pombo.acceptance import verify

    results = verify(args.level)
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    if failed:
        print("failed: " + ", ".join(f"{r.number} ({r.name})" for r in failed))
        return EXIT_VERIFY
    return EXIT_OK


def cmd_enumerate(args):
    from pombo.environments import ENVIRONMENTS, write_enumeration_csv
    from pombo.harness import make_env

    if args.env not in ENVIRONMENTS:
        raise ConfigError(f"unknown environment {args.env!r}; choose from {sorted(ENVIRONMENTS)}")
    try:
        env = make_env(args.env, args.seed, **_parse_params(args.param))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    write_enumeration_csv(env, args.out)
    print(f"wrote {env.size} points to {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="pombo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a multi-seed experiment from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--workers", type=int, default=None,
                     help="parallel seed workers (default: $POMBO_WORKERS or 1)")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run the acceptance criteria")
    ver.add_argument("--level", choices=("quick", "full"), default="quick")
    ver.set_defaults(func=cmd_verify)

    enum = sub.add_parser("enumerate", help="write every point of a small domain with its features and reward")
    enum.add_argument("--env", required=True)
    enum.add_argument("--out", required=True)
    enum.add_argument("--seed", type=int, default=0)
    enum.add_argument("--param", action="append", metavar="KEY=VALUE",
                      help="environment parameter, e.g. length=8 (repeatable)")
    enum.set_defaults(func=cmd_enumerate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which is the config-error code
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
