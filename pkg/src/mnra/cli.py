"""Command-line entry point.

Usage::

    mnra synthetic --shape 20x30x40 --ranks 2x2x2 --sr 0.6 --out results/t1
    mnra tau-sweep --trials 10 --out results/fig1
    mnra image --ranks 30x30x3 --sr 0.3 --solver ihtr --out results/img

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from . import experiments

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of experiment fields")
    p.add_argument("--shape", help="mode lengths, e.g. 20x30x40")
    p.add_argument("--ranks", help="n-rank bound, e.g. 2x2x2")
    p.add_argument("--sr", help="sampling ratio(s), comma separated")
    p.add_argument("--sigma", help="noise level")
    p.add_argument("--tau", help="step size (default 1.4)")
    p.add_argument("--taus", help="step sizes for tau-sweep, comma separated")
    p.add_argument("--solver", choices=experiments.SOLVERS,
                   help="ihtr (known rank), iht (predicted rank) or both")
    p.add_argument("--svd", choices=experiments.SVD_CHOICES,
                   help="exact, sketch, or auto (sketch only for noiseless synthetic data)")
    p.add_argument("--xi", help="rank-prediction threshold ratio")
    p.add_argument("--tol", help="relative-change stopping tolerance (default 1e-8)")
    p.add_argument("--max-iter", dest="max_iter", help="iteration cap (default 5000)")
    p.add_argument("--weights", help="mode weights summing to 1, comma separated")
    p.add_argument("--trials", help="repetitions per setting (default 10)")
    p.add_argument("--seed", help="base seed; trial t uses seed + t")
    p.add_argument("--out", help="output directory (default ./results)")
    p.add_argument("--image", help="binary PPM input (default: bundled 512x512 image)")
    p.add_argument("--sweeps", help="HOOI sweeps for image preprocessing (default 10)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mnra", description="Low n-rank tensor completion by iterative hard thresholding.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_text in [
        ("synthetic", "random completion problems (noiseless or noisy)"),
        ("tau-sweep", "step-size sensitivity study"),
        ("image", "color image inpainting"),
    ]:
        _add_common(sub.add_parser(name, help=help_text))
    return parser


def spec_from_args(args: argparse.Namespace) -> experiments.ExperimentSpec:
    config = experiments.load_config(args.config) if args.config else {}
    overrides = {"kind": args.command.replace("-", "_")}
    for key in experiments.spec_fields():
        value = getattr(args, key, None)
        if key != "kind" and value is not None:
            overrides[key] = value
    return experiments.build_spec(config, overrides).resolved()


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        spec = spec_from_args(args)
    except (KeyError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) else exc
        print(f"mnra: configuration error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    try:
        experiments.run(spec)
    except Exception as exc:  # noqa: BLE001
        logging.getLogger("mnra").debug("run failed", exc_info=True)
        print(f"mnra: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"results written to {spec.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
