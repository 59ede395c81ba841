"""Command-line interface.

Subcommands: simulate, poll, ingest, features, stats, fit, bayes, audit,
report, plot, pipeline. Every run is seeded; rerunning a command with the
same inputs and seed reproduces its outputs byte for byte.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .bayes import Chains, fit_ordinal_next_rank
from .bayes.summary import DEFAULT_ROPE, summarize_draws
from .causal import AuditConfig, run_audit
from .errors import ConfigError, FeedAuditError
from .features import UnitTable, compute_unit_table, extract_dataset
from .feedsim import config_from_dict, run as run_sim
from .ingest import PollerConfig, ingest_dataset, load_dataset, poll_endpoint
from .jsonio import read_json, write_json, write_jsonl
from .modeling import build_rq2_ordinal
from .pipeline import load_feature_artifacts, run_fit, run_pipeline, stage_seed
from .plots import PLOT_KINDS, emit_plot_data
from .report import (
    render_table1,
    render_table2,
    render_table3,
    render_table4,
    render_table5,
    render_table6,
)
from .glm import FitResult


def _parse_rope(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError("rope expects two comma-separated bounds, e.g. -4.8,5")
    return float(parts[0]), float(parts[1])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feedaudit",
        description="ranked-feed audit toolkit (simulate, ingest, fit, audit)")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", type=Path, default=None,
                        help="JSON config file for the command")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--force", action="store_true")

    p = sub.add_parser("simulate", parents=[common],
                       help="run the feed simulator")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--ticks", type=int, default=None)

    p = sub.add_parser("poll", parents=[common],
                       help="poll an HTTP endpoint into a JSONL capture file")
    p.add_argument("--url", required=True)
    p.add_argument("--interval-min", type=float, default=2.0)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--backoff-base", type=float, default=1.0)
    p.add_argument("--cycles", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("ingest", parents=[common],
                       help="validate, sample, and persist a dataset directory")
    p.add_argument("--feed", type=Path, required=True)
    p.add_argument("--comments", type=Path, required=True)
    p.add_argument("--sample-n", type=int, default=-1,
                   help="posts to sample (-1 keeps all)")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("features", parents=[common],
                       help="extract feature rows, outcomes, and intervals")
    p.add_argument("--db", type=Path, required=True,
                   help="dataset directory from `ingest`")
    p.add_argument("--window-min", type=float, default=10.0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--intervals-out", type=Path, default=None)
    p.add_argument("--units-out", type=Path, default=None)

    p = sub.add_parser("stats", parents=[common],
                       help="descriptive geometric statistics table")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--units-out", type=Path, default=None)

    p = sub.add_parser("fit", parents=[common],
                       help="fit a descriptive regression family")
    p.add_argument("kind", choices=["rq1", "rq2-move", "rq3"])
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--intervals", type=Path, default=None)
    p.add_argument("--units", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("bayes", parents=[common],
                       help="Bayesian models and posterior summaries")
    p.add_argument("action", choices=["fit-ordinal", "summarize"])
    p.add_argument("--features", type=Path, default=None)
    p.add_argument("--units", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--summary", type=Path, default=None)
    p.add_argument("--chains", type=Path, default=None)
    p.add_argument("--param", default="mu_beta")
    p.add_argument("--rope", default="-4.8,5")
    p.add_argument("--n-ranks", type=int, default=None)
    p.add_argument("--n-chains", type=int, default=4)
    p.add_argument("--n-iter", type=int, default=2000)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--prose-prior", action="store_true")

    p = sub.add_parser("audit", parents=[common],
                       help="treatment effect through the matching pipeline")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--intervals", type=Path, default=None)
    p.add_argument("--treatment", required=True,
                   choices=["tc-w", "tc-s", "tu-w", "tu-s", "tr-w", "tr-s"])
    p.add_argument("--outcome", required=True,
                   choices=["top10", "top25", "top50", "move",
                            "rate", "und-rate", "und-prop"])
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("report", parents=[common],
                       help="render a fitted result as a paper-style table")
    p.add_argument("style", choices=["table1", "table2", "table3", "table4",
                                     "table5", "table6"])
    p.add_argument("--fit", type=Path, required=True,
                   help="fit/audit/units JSON matching the style")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--text", action="store_true",
                   help="also print the aligned-text rendering")

    p = sub.add_parser("plot", parents=[common],
                       help="emit tidy plot CSV (optionally an SVG)")
    p.add_argument("--kind", required=True, choices=list(PLOT_KINDS))
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--svg", type=Path, default=None)
    p.add_argument("--fit", type=Path, default=None)
    p.add_argument("--snapshots", type=Path, default=None)
    p.add_argument("--features", type=Path, default=None)
    p.add_argument("--posterior", type=Path, default=None)

    p = sub.add_parser("pipeline", parents=[common],
                       help="run simulate -> ingest -> features -> fits/audits")
    p.add_argument("--out", type=Path, required=True)

    return parser


def _load_config(args) -> dict:
    if args.config is None:
        return {}
    return read_json(args.config)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    cfg.setdefault("seed", args.seed)
    if args.ticks is not None:
        cfg["duration_ticks"] = args.ticks
    result = run_sim(config_from_dict(cfg))
    paths = result.write(args.out)
    print(f"wrote {len(result.snapshots)} snapshots, "
          f"{len(result.comments)} comments to {args.out}")
    for p in paths.values():
        print(f"  {p}")
    return 0


def cmd_poll(args) -> int:
    cfg = PollerConfig(endpoint_url=args.url, interval_minutes=args.interval_min,
                       max_retries=args.max_retries,
                       backoff_base_seconds=args.backoff_base,
                       output_path=args.out)
    n = poll_endpoint(cfg, n_cycles=args.cycles)
    print(f"appended {n} captures to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    report = ingest_dataset(args.feed, args.comments, args.sample_n,
                            args.seed, args.out)
    print(f"dataset at {args.out}: {report.n_feed_snapshots} feed snapshots, "
          f"{report.n_sampled_posts} sampled posts, "
          f"{report.n_comments} comments ({report.n_orphan_comments} orphans, "
          f"{len(report.gaps)} gaps)")
    return 0


def cmd_features(args) -> int:
    snapshots, index, sampled = load_dataset(args.db)
    dataset = extract_dataset(snapshots, index, sampled, args.window_min)
    write_jsonl(args.out, dataset.records())
    intervals_out = args.intervals_out or args.out.with_name("intervals.jsonl")
    write_jsonl(intervals_out, (iv.to_dict() for iv in dataset.intervals))
    units = compute_unit_table(dataset.rows)
    units_out = args.units_out or args.out.with_name("units.json")
    write_json(units_out, units.to_dict())
    print(f"wrote {len(dataset.rows)} feature rows to {args.out}, "
          f"{len(dataset.intervals)} intervals to {intervals_out}")
    return 0


def cmd_stats(args) -> int:
    rows, _, _, _ = load_feature_artifacts(args.features)
    units = compute_unit_table(rows)
    table = render_table1(units)
    args.out.write_text(table.to_csv_text(), encoding="utf-8")
    if args.units_out:
        write_json(args.units_out, units.to_dict())
    print(table.to_aligned_text())
    return 0


def cmd_fit(args) -> int:
    intervals_path = args.intervals or args.features.with_name("intervals.jsonl")
    units_path = args.units or args.features.with_name("units.json")
    rows, outcomes, intervals, units = load_feature_artifacts(
        args.features, intervals_path, units_path)
    if units is None:
        units = compute_unit_table(rows)
    payload = run_fit(args.kind, rows, outcomes, intervals, units)
    write_json(args.out, payload)
    print(f"wrote {args.kind} fit to {args.out}")
    return 0


def cmd_bayes(args) -> int:
    if args.action == "fit-ordinal":
        if not (args.features and args.out):
            raise ConfigError("fit-ordinal needs --features and --out")
        rows, outcomes, _, units = load_feature_artifacts(
            args.features, None, args.units)
        if units is None:
            units = compute_unit_table(rows)
        n_ranks = args.n_ranks or int(max(r.rank for r in rows))
        data = build_rq2_ordinal(rows, outcomes, units, n_ranks)
        posterior = fit_ordinal_next_rank(
            data.current, data.next_rank, data.X, data.feature_names,
            n_ranks=data.n_ranks, n_chains=args.n_chains, n_iter=args.n_iter,
            warmup=args.warmup, seed=args.seed,
            prose_prior=args.prose_prior, threads=args.threads)
        posterior.chains.save(args.out)
        if args.summary:
            table = render_table4(posterior.coefficient_table())
            args.summary.write_text(table.to_csv_text(), encoding="utf-8")
        print(f"wrote ordinal posterior to {args.out}")
        return 0
    if not (args.chains and args.out):
        raise ConfigError("summarize needs --chains and --out")
    chains = Chains.load(args.chains)
    summary = summarize_draws(chains.extract(args.param),
                              rope_bounds=_parse_rope(args.rope))
    write_json(args.out, summary.to_dict())
    print(f"wrote summary of {args.param} to {args.out}")
    return 0


def cmd_audit(args) -> int:
    intervals_path = args.intervals or args.features.with_name("intervals.jsonl")
    rows, outcomes, intervals, _ = load_feature_artifacts(
        args.features, intervals_path)
    overrides = _load_config(args)
    acfg = AuditConfig.from_dict({
        "seed": args.seed,
        **overrides,
        "treatment": args.treatment,
        "outcome": args.outcome,
    })
    acfg.threads = args.threads
    result = run_audit(rows, outcomes, intervals, acfg)
    write_json(args.out, result.to_dict())
    for name, summary in result.summaries.items():
        print(f"{args.treatment}/{args.outcome} {name}: "
              f"mean={summary.effect_mean:.2f}% "
              f"CI[{summary.ci95[0]:.2f}%, {summary.ci95[1]:.2f}%] "
              f"pd={summary.pd:.4f} rope={summary.rope_prob:.4f}")
    return 0


def cmd_report(args) -> int:
    payload = read_json(args.fit)
    if args.style == "table1":
        table = render_table1(UnitTable.from_dict(payload))
    elif args.style == "table2":
        fits = {k: FitResult.from_dict(v) for k, v in payload["fits"].items()}
        counts = {k: {"n_posts": v.extra.get("n_posts", "")}
                  for k, v in fits.items()}
        table = render_table2(fits, counts)
    elif args.style == "table3":
        table = render_table3(FitResult.from_dict(payload["fits"]["move"]))
    elif args.style == "table4":
        table = render_table4(payload["coefficients"])
    elif args.style == "table5":
        table = render_table5(FitResult.from_dict(payload["fits"]["engagement"]))
    else:
        reports = payload if isinstance(payload, list) else [payload["report"]]
        table = render_table6(reports)
    args.out.write_text(table.to_csv_text(), encoding="utf-8")
    if args.text:
        print(table.to_aligned_text())
    else:
        print(f"wrote {args.style} to {args.out}")
    return 0


def cmd_plot(args) -> int:
    sources = {}
    if args.kind == "trajectories":
        from .ingest import read_feed_stream

        if not args.snapshots:
            raise ConfigError("trajectories needs --snapshots")
        sources["snapshots"] = list(read_feed_stream(args.snapshots))
    elif args.kind in ("movement_prob", "engagement_by_rank"):
        if not args.fit:
            raise ConfigError(f"{args.kind} needs --fit")
        payload = read_json(args.fit)
        key = "move" if args.kind == "movement_prob" else "engagement"
        sources["fit"] = FitResult.from_dict(payload["fits"][key])
    elif args.kind == "cut_points":
        if not (args.posterior and args.features):
            raise ConfigError("cut_points needs --posterior and --features")
        from .bayes.ordinal import OrdinalPosterior

        chains = Chains.load(args.posterior)
        n_ranks = sum(1 for nm in chains.param_names
                      if nm.startswith("intercept_rank_"))
        feature_names = [nm[len("beta_"):] for nm in chains.param_names
                         if nm.startswith("beta_")]
        sources["posterior"] = OrdinalPosterior(
            chains=chains, n_ranks=n_ranks, feature_names=feature_names)
    elif args.kind == "next_rank_variance":
        if not args.features:
            raise ConfigError("next_rank_variance needs --features")
        rows, outcomes, _, _ = load_feature_artifacts(args.features)
        sources["rows"] = rows
        sources["outcomes"] = outcomes
    emit_plot_data(args.kind, args.out, svg_path=args.svg, **sources)
    print(f"wrote {args.kind} data to {args.out}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    if "seed" not in cfg:
        cfg["seed"] = args.seed
    manifest = run_pipeline(cfg, args.out, force=args.force,
                            threads=args.threads)
    print(f"pipeline complete: {len(manifest['artifacts'])} artifacts "
          f"in {args.out} (config {manifest['config_hash'][:12]})")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "poll": cmd_poll,
    "ingest": cmd_ingest,
    "features": cmd_features,
    "stats": cmd_stats,
    "fit": cmd_fit,
    "bayes": cmd_bayes,
    "audit": cmd_audit,
    "report": cmd_report,
    "plot": cmd_plot,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except FeedAuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
