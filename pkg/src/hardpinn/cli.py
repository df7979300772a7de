"""Command-line entry point: ``hardpinn run|ablate|sweep|validate <config.json>``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .config import OUTPUT_ENV, ConfigError, load_config
from .problems import REGISTRY

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="hardpinn", description="Hard-constraint PINN solver.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("config", help="run configuration (JSON)")
        sp.add_argument("-o", "--output-dir", help=f"output directory (overrides the config and ${OUTPUT_ENV})")
        return sp

    with_config("run", "train one model and write metrics, checkpoint and summary")
    with_config("ablate", "compare gradient oscillation with and without extra fields")
    sw = with_config("sweep", "grid over the hardness parameters")
    sw.add_argument("--beta-s", type=float, nargs="+", required=True)
    sw.add_argument("--beta-t", type=float, nargs="+", required=True)
    with_config("validate", "check a configuration and print it normalised")
    sub.add_parser("problems", help="list the built-in problems")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "problems":
        print("\n".join(sorted(REGISTRY)))
        return EXIT_OK
    from . import runner

    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            sys.stdout.write(cfg.to_json())
            return EXIT_OK
        out = args.output_dir
        if args.command == "run":
            res = runner.run(cfg, out)
            print(f"wrote {res.out_dir}")
            if res.summary["metrics"]:
                print(json.dumps(res.summary["metrics"], indent=2, sort_keys=True))
        elif args.command == "ablate":
            res = runner.ablate(cfg, out)
            print(f"wrote {res.out_dir}; fraction of ratio samples above 1: {res.summary['fraction_above_one']}")
        else:
            rows = runner.sweep(cfg, args.beta_s, args.beta_t, out)
            print(f"wrote {len(rows)} sweep rows")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # anything else is a runtime failure
        logging.getLogger(__name__).debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
