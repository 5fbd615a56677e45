"""Command-line driver.

Subcommands:

* ``run <case>`` — build and run one benchmark, writing the probe CSV,
  particle snapshots, and a run manifest to the output directory.
* ``list-cases`` — print the benchmark catalog.
* ``verify <case>`` — run a benchmark and grade its probes against the
  bundled reference values and structural-theory oracles, printing one
  PASS/FAIL line per check.

Exit codes: 0 success, 1 solver failure, 2 usage/configuration error,
3 verification failure.  Diagnostics go to standard error.
"""

import argparse
import os
import sys

EXIT_PASS = 0
EXIT_SOLVER_FAILURE = 1
EXIT_USAGE = 2
EXIT_VERIFY_FAILURE = 3

#: Environment variable naming the default base output directory.
OUT_ENV = "SHELLSPH_OUT"
DEFAULT_OUT_BASE = "shellsph-out"


def parse_config_file(path):
    """Read a flat ``key = value`` configuration file.

    One pair per line; blank lines and ``#`` comments are ignored.  Values
    stay strings — the case's configuration schema coerces them.
    """
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        from .errors import ConfigError
        raise ConfigError(f"cannot read config file {path}: {exc}")
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            from .errors import ConfigError
            raise ConfigError(
                f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="shellsph",
        description="Surface-particle shell solver benchmark driver.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add_case_flags(p):
        p.add_argument("case", help="benchmark case id (see list-cases)")
        p.add_argument("--resolution", type=int, default=None,
                       help="particles across the reference span")
        p.add_argument("--out", default=None,
                       help="output directory (default: "
                            f"${OUT_ENV}/<case> or ./{DEFAULT_OUT_BASE}/"
                            "<case>)")
        p.add_argument("--config", default=None, metavar="FILE",
                       help="flat key=value configuration file; CLI flags "
                            "override file values")
        p.add_argument("--threads", type=int, default=None,
                       help="thread cap for the compiled backend (the "
                            "bundled kernels are serial, so this caps the "
                            "runtime's thread pool)")
        p.add_argument("--seedless-deterministic", action="store_true",
                       help="force the bit-reproducible path: single "
                            "thread, byte-stable outputs")

    run_p = sub.add_parser("run", help="run one benchmark case")
    add_case_flags(run_p)

    sub.add_parser("list-cases", help="print the benchmark catalog")

    verify_p = sub.add_parser(
        "verify", help="run a case and grade it against references")
    add_case_flags(verify_p)
    return parser


def _apply_threads(args):
    threads = 1 if args.seedless_deterministic else args.threads
    if threads is None:
        return None
    if threads < 1:
        raise ValueError("--threads must be >= 1")
    # Must land before the compiled backend is imported to take effect on
    # the thread pool; an already-imported runtime is adjusted dynamically.
    os.environ["NUMBA_NUM_THREADS"] = str(threads)
    if "numba" in sys.modules:
        import numba
        try:
            numba.set_num_threads(threads)
        except ValueError:
            pass  # requested more than the pool started with; keep the cap
    return threads


def _resolve(args):
    from .cases import resolve_config
    file_values = parse_config_file(args.config) if args.config else {}
    flag_values = {}
    if args.resolution is not None:
        flag_values["resolution"] = args.resolution
    return resolve_config(args.case, file_values, flag_values)


def _out_dir(args, case):
    if args.out:
        return args.out
    base = os.environ.get(OUT_ENV) or DEFAULT_OUT_BASE
    return os.path.join(base, case)


def _run_extra(run, threads):
    extra = {"mode": run.series.meta.get("mode", ""),
             "steps": run.series.meta.get("steps", 0),
             "max_normal_drift":
                 repr(float(run.series.meta.get("max_normal_drift", 0.0)))}
    if threads is not None:
        extra["threads"] = threads
    return extra


def _cmd_run(args):
    threads = _apply_threads(args)
    from .outputs import write_outputs
    config = _resolve(args)
    from .cases import run_case
    run = run_case(config)
    out_dir = _out_dir(args, config.case)
    write_outputs(run.series, run.snapshots, out_dir, config=config,
                  extra=_run_extra(run, threads))
    final = {name: float(run.series.column(name)[-1])
             for name in run.series.channels}
    print(f"{config.case}: {run.series.meta.get('steps', 0)} steps, "
          f"outputs in {out_dir}")
    for name, value in final.items():
        print(f"  {name} = {value!r}")
    return EXIT_PASS


def _cmd_list_cases():
    from .cases import CASES
    for name, case in CASES.items():
        print(f"{name:24s} {case.description}")
    return EXIT_PASS


def _cmd_verify(args):
    threads = _apply_threads(args)
    config = _resolve(args)
    from .verification import verify_case
    report = verify_case(config)
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status} {report.case}/{check.name}: {check.detail}")
    if args.out:
        from .outputs import write_outputs
        write_outputs(report.run.series, report.run.snapshots, args.out,
                      config=config, extra=_run_extra(report.run, threads))
    failed = [c.name for c in report.checks if not c.passed]
    if failed:
        print(f"{report.case}: {len(failed)} of {len(report.checks)} "
              f"checks failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY_FAILURE
    print(f"{report.case}: all {len(report.checks)} checks passed")
    return EXIT_PASS


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    from .errors import (ConfigError, DegenerateNormalError, DivergedError,
                         IllConditionedSupportError,
                         InsufficientPeaksError,
                         InvertedConfigurationError, ProbeDistanceError)
    usage_errors = (ConfigError, ProbeDistanceError, ValueError)
    solver_errors = (DivergedError, DegenerateNormalError,
                     InvertedConfigurationError, IllConditionedSupportError,
                     InsufficientPeaksError)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "list-cases":
            return _cmd_list_cases()
        if args.command == "verify":
            return _cmd_verify(args)
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    except usage_errors as exc:
        print(f"shellsph: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except solver_errors as exc:
        print(f"shellsph: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE


if __name__ == "__main__":
    sys.exit(main())
