"""``coenet`` command line: generate, run, export."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .export import FORMATS, export_graph, read_graph
from .ingest import ConfigError, generate_synthetic, write_enrolments, write_students
from .pipeline import run_pipeline

log = logging.getLogger("coenet")


def _generate(args) -> int:
    try:
        gen = cfgmod.load_generator(args.config)
    except (ConfigError, KeyError, ValueError) as exc:
        print(f"invalid generator config: {exc}", file=sys.stderr)
        return 2
    cohort = generate_synthetic(gen, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "enrolments.csv", "w", encoding="utf-8", newline="") as fh:
        write_enrolments(cohort.records, fh)
    with open(out / "students.csv", "w", encoding="utf-8", newline="") as fh:
        write_students(cohort.students, fh)
    with open(out / "planted.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("standard_id,block\n")
        fh.writelines(f"{k},{v}\n" for k, v in cohort.planted.items())
    log.info("wrote %d records for %d students to %s", len(cohort.records), len(cohort.students), out)
    return 0


def _run(args) -> int:
    try:
        cfg = cfgmod.load(args.config)
    except cfgmod.ConfigValidationError as exc:
        print(exc, file=sys.stderr)
        return 2
    if args.rcp_threshold is not None or args.tau is not None or args.seed is not None:
        from dataclasses import replace
        cfg = replace(cfg,
                      rcp_threshold=cfg.rcp_threshold if args.rcp_threshold is None else args.rcp_threshold,
                      tau=cfg.tau if args.tau is None else args.tau,
                      seed=cfg.seed if args.seed is None else args.seed)
    outcome = run_pipeline(cfg, threads=args.threads)
    for s in outcome.manifest["slices"]:
        extra = f" communities={s.get('communities')} modularity={s.get('modularity')}" if s["status"] == "ok" else ""
        print(f"slice {s['id']}: {s['status']}{extra}")
    print(f"manifest: {outcome.manifest_path}")
    return outcome.exit_code


def _export(args) -> int:
    if args.run_dir:
        run_dir = Path(args.run_dir)
    elif args.config:
        try:
            run_dir = cfgmod.load(args.config).output_dir
        except cfgmod.ConfigValidationError as exc:
            print(exc, file=sys.stderr)
            return 2
    else:
        print("export needs --run-dir or --config", file=sys.stderr)
        return 2
    src = run_dir / args.slice / "rcp.json"
    if not src.exists():
        print(f"no pruned graph for slice {args.slice!r} at {src}", file=sys.stderr)
        return 1
    g, part = read_graph(src, "json")
    ext = {"graphml": ".graphml", "edge_csv": ".csv", "json": ".json"}[args.format]
    dest = Path(args.out) if args.out else run_dir / args.slice / f"export{ext}"
    export_graph(g, part, args.format, dest)
    print(dest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coenet", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic cohort (enrolments.csv, students.csv)")
    g.add_argument("--config", required=True, help="generator TOML file")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", default=".", help="output directory")
    g.set_defaults(func=_generate)

    r = sub.add_parser("run", help="run the full pipeline from a run config")
    r.add_argument("--config", required=True)
    r.add_argument("--rcp-threshold", type=float, default=None)
    r.add_argument("--tau", type=float, default=None, help="teleportation probability for visit rates")
    r.add_argument("--seed", type=int, default=None, help="override the master seed")
    r.add_argument("--threads", type=int, default=None, help="worker threads (capped by COENET_THREADS)")
    r.set_defaults(func=_run)

    e = sub.add_parser("export", help="re-export a slice's pruned graph with communities")
    e.add_argument("--slice", required=True)
    e.add_argument("--format", choices=FORMATS, default="graphml")
    e.add_argument("--run-dir")
    e.add_argument("--config")
    e.add_argument("--out")
    e.set_defaults(func=_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
