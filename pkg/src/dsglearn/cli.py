"""Command line entry point: ``generate``, ``run`` and ``report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DsgError, InvariantViolation
from .game import save_dsg
from .harness import build_scenario, load_config, report_manifest, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3
log = logging.getLogger("dsglearn")


def _scenario_from(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from exc
    scen = doc.get("scenario", doc) if isinstance(doc, dict) else None
    if not isinstance(scen, dict) or scen.get("kind") not in ("random", "table1", "poaching"):
        raise ConfigError(f"{path}: expected a scenario with kind random, table1 or poaching")
    return scen


def cmd_generate(args) -> int:
    if not args.config or not args.out:
        raise ConfigError("generate needs --config and --out")
    dsg, theta = build_scenario(_scenario_from(args.config), args.seed if args.seed is not None else 0)
    save_dsg(args.out, dsg, theta)
    log.info("wrote %s (%d states, p=%d)", args.out, dsg.num_states, dsg.p)
    return EXIT_OK


def cmd_run(args) -> int:
    if not args.config:
        raise ConfigError("run needs --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    manifest = run_experiment(cfg, args.out, threads=args.threads)
    log.info("wrote %d cells to %s", len(manifest["cells"]), args.out or cfg.output or "results")
    return EXIT_OK


def cmd_report(args) -> int:
    target = Path(args.config or args.out or "results")
    if target.is_dir():
        target = target / "manifest.json"
    if not target.exists():
        raise ConfigError(f"{target}: no manifest found")
    report = report_manifest(target)
    print(json.dumps(report, indent=1))
    return EXIT_OK if report["mistake_bound_pass"] else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dsglearn", description=__doc__)
    ap.add_argument("verb", choices=("generate", "run", "report"))
    ap.add_argument("--config", help="experiment/scenario JSON (report: manifest or run directory)")
    ap.add_argument("--out", help="output directory (run) or game file (generate)")
    ap.add_argument("--seed", type=int, help="override seed")
    ap.add_argument("--threads", type=int, default=1, help="worker processes for independent cells")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handlers = {"generate": cmd_generate, "run": cmd_run, "report": cmd_report}
    try:
        return handlers[args.verb](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except DsgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
