"""Command-line driver.

Usage::

    loopmoments PROGRAM --goal 1 --goal 2 [--format txt|tex|json]
                [--out PATH] [--max-closure N]
                [--verify --param b=2 --param "y(0)=0"
                 --iters 20 --trials 100000 --seed 0]

Exit codes: 0 success, 1 verification or configuration failure, 2 parse
error (including unreadable input and bad goals), 3 unsupported program
structure, 4 solver failure or moment-set blowup.  Diagnostics go to
stderr; the report goes to stdout and, when requested, to a file.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from typing import Sequence

from .frontend import ParseError, UnsupportedProgramError
from .moments import ClosureOverflowError
from .pipeline import GoalError, InvariantReport, analyze
from .recurrences import CyclicDependencyError, SolverError
from .report import FORMATS, emit
from .verifier import SimConfig, VerifierError, check, simulate

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_PARSE = 2
EXIT_UNSUPPORTED = 3
EXIT_SOLVER = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loopmoments",
        description=(
            "Compute exact closed-form moments of probabilistic loop "
            "programs, optionally cross-checked by simulation."
        ),
    )
    parser.add_argument("program", help="path to the loop program")
    parser.add_argument(
        "--goal",
        action="append",
        default=[],
        metavar="K|MONOMIAL",
        help="moment order for all variables (e.g. 2) or a specific "
        "monomial (e.g. x^2*y); repeatable, at least one required",
    )
    parser.add_argument("--format", choices=FORMATS, default="txt")
    parser.add_argument("--out", metavar="PATH", help="also write the report here")
    parser.add_argument(
        "--max-closure",
        type=int,
        default=10_000,
        metavar="N",
        help="cap on the number of tracked moments (default %(default)s)",
    )
    parser.add_argument(
        "--verify",
        action="store_true",
        help="simulate the program and check the closed forms statistically",
    )
    parser.add_argument(
        "--param",
        action="append",
        default=[],
        metavar="NAME=VALUE",
        help="exact parameter binding for --verify (VALUE may be 2, 1/2, 0.25)",
    )
    parser.add_argument("--iters", type=int, default=20, metavar="N",
                        help="iteration count checked by --verify (default %(default)s)")
    parser.add_argument("--trials", type=int, default=100_000, metavar="T",
                        help="simulation trials for --verify (default %(default)s)")
    parser.add_argument("--seed", type=int, default=0, metavar="S",
                        help="master RNG seed for --verify (default %(default)s)")
    return parser


def _parse_bindings(pairs: Sequence[str]) -> dict[str, Fraction]:
    bindings: dict[str, Fraction] = {}
    for pair in pairs:
        if "=" not in pair:
            raise VerifierError(f"--param expects NAME=VALUE, got {pair!r}")
        name, _, value = pair.partition("=")
        name = name.strip()
        try:
            bindings[name] = Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise VerifierError(f"cannot read {value!r} as an exact rational") from None
    return bindings


def run(
    program_path: str,
    goal_tokens: Sequence[str],
    fmt: str = "txt",
    out_path: str | None = None,
    *,
    max_closure: int = 10_000,
    verify: bool = False,
    bindings: dict[str, Fraction] | None = None,
    iters: int = 20,
    trials: int = 100_000,
    seed: int = 0,
) -> tuple[InvariantReport, str, int]:
    """Full pipeline for one CLI invocation.

    Returns the report, its rendering, and the exit code, and writes the
    rendering to ``out_path`` when given.  Raises the same exceptions the
    library raises; :func:`main` maps them to exit codes.
    """
    with open(program_path, "r", encoding="utf-8") as handle:
        source = handle.read()
    report = analyze(source, list(goal_tokens), name=program_path, max_closure=max_closure)
    code = EXIT_OK
    if verify:
        cfg = SimConfig(
            bindings=bindings or {},
            iterations=iters,
            trials=trials,
            seed=seed,
        )
        assert report.validated is not None
        estimates = simulate(report.validated, cfg, set(report.invariants))
        verification = check(report.invariants, estimates, cfg)
        report = report.with_verification(verification)
        if not verification.passed:
            code = EXIT_FAILURE
    rendered = emit(report, fmt)
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as handle:
            handle.write(rendered)
    return report, rendered, code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if not args.goal:
            raise GoalError("at least one goal is required (use --goal)")
        bindings = _parse_bindings(args.param)
        report, rendered, code = run(
            args.program,
            args.goal,
            args.format,
            args.out,
            max_closure=args.max_closure,
            verify=args.verify,
            bindings=bindings,
            iters=args.iters,
            trials=args.trials,
            seed=args.seed,
        )
    except OSError as exc:
        print(f"error: file access failed: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ParseError, GoalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except UnsupportedProgramError as exc:
        print(f"error: unsupported program structure: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (SolverError, CyclicDependencyError, ClosureOverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except VerifierError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    sys.stdout.write(rendered)
    if code == EXIT_FAILURE:
        print("verification failed; see report", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
