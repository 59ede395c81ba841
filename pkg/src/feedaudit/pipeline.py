"""End-to-end orchestration: simulate -> ingest -> features -> fits/audits,
with a reproducibility manifest over every persisted artifact.

The manifest stores a hash of the resolved configuration, the package
version, and a sha256 digest per artifact; nothing time-dependent enters
any file, so a rerun under the same seed is byte-identical for any thread
count.
"""

from __future__ import annotations

import hashlib
import zlib
from pathlib import Path

from . import __version__
from .bayes.summary import DEFAULT_ROPE
from .causal import AuditConfig, run_audit
from .errors import ConfigError, PipelineStageError
from .features import (
    UnitTable,
    compute_unit_table,
    extract_dataset,
    feature_row_from_dict,
    outcome_from_dict,
)
from .feedsim import config_from_dict, run as run_sim
from .ingest import ingest_dataset, load_dataset
from .jsonio import dumps, read_jsonl, sha256_file, write_json, write_jsonl
from .modeling import (
    build_rq1,
    build_rq2_move,
    build_rq2_ordinal,
    build_rq3,
)
from .glm import fit_logistic, fit_multinomial, fit_negbin
from .bayes import fit_ordinal_next_rank
from .report import (
    render_table1,
    render_table2,
    render_table3,
    render_table4,
    render_table5,
    render_table6,
)
from .features import StationaryInterval


def stage_seed(base_seed: int, stage: str) -> int:
    """Deterministic per-stage seed fan-out from one global seed."""
    return (int(base_seed) * 1_000_003 + zlib.crc32(stage.encode())) % (2**31 - 1)


def load_feature_artifacts(features_path, intervals_path=None, units_path=None):
    """Read back the persisted feature stage (rows, outcomes, intervals, units)."""
    records = read_jsonl(features_path)
    rows = [feature_row_from_dict(r) for r in records]
    outcomes = [outcome_from_dict(r) for r in records]
    intervals = []
    if intervals_path and Path(intervals_path).exists():
        intervals = [StationaryInterval(**r) for r in read_jsonl(intervals_path)]
    units = None
    if units_path and Path(units_path).exists():
        from .jsonio import read_json
        units = UnitTable.from_dict(read_json(units_path))
    return rows, outcomes, intervals, units


def run_fit(kind: str, rows, outcomes, intervals, units: UnitTable) -> dict:
    """One descriptive fit family; returns JSON-ready fit payloads."""
    if kind == "rq1":
        out = {}
        for n, key in ((50, "top50"), (25, "top25"), (10, "top10")):
            design = build_rq1(rows, outcomes, units, n)
            fr = fit_logistic(design.dm, design.y)
            fr.extra["n_posts"] = design.n_posts
            fr.extra["top_n"] = n
            out[key] = fr.to_dict()
        return {"kind": "rq1", "fits": out}
    if kind == "rq2-move":
        design = build_rq2_move(rows, outcomes, units)
        fr = fit_multinomial(design.dm, design.y, baseline="none",
                             required_classes=("up", "down", "none"))
        fr.extra["ranks"] = design.ranks
        fr.extra["scaled_means"] = design.scaled_means
        return {"kind": "rq2-move", "fits": {"move": fr.to_dict()}}
    if kind == "rq3":
        design = build_rq3(intervals, rows, units)
        fr = fit_negbin(design.dm, design.y)
        fr.extra["ranks"] = design.ranks
        fr.extra["scaled_means"] = design.scaled_means
        fr.extra["n_intervals"] = design.n_intervals
        return {"kind": "rq3", "fits": {"engagement": fr.to_dict()}}
    raise ConfigError(f"unknown fit kind {kind!r}; expected rq1|rq2-move|rq3")


DEFAULT_PIPELINE = {
    "seed": 0,
    "sim": {"feed_size": 10, "duration_ticks": 60, "initial_posts": 10,
            "arrival_rate_new_posts": 0.5},
    "ingest": {"sample_n": -1},
    "features": {"window_minutes": 10.0},
    "fits": ["rq1", "rq2-move", "rq3"],
    "ordinal": {"enabled": False},
    "audits": [],
}


def run_pipeline(config: dict, out_dir, force: bool = False,
                 threads: int = 1) -> dict:
    """Execute all configured stages under one seed; returns the manifest."""
    cfg = {**DEFAULT_PIPELINE, **(config or {})}
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(
            f"output directory {out} is not empty; pass force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    seed = int(cfg.get("seed", 0))
    artifacts: list[Path] = []

    def _stage(name, fn):
        try:
            return fn()
        except Exception as exc:
            if isinstance(exc, PipelineStageError):
                raise
            raise PipelineStageError(name, exc) from exc

    # simulate
    def _simulate():
        sim_cfg = dict(cfg.get("sim", {}))
        sim_cfg.setdefault("seed", stage_seed(seed, "simulate"))
        result = run_sim(config_from_dict(sim_cfg))
        paths = result.write(out / "sim")
        artifacts.extend(paths.values())
        return paths

    sim_paths = _stage("simulate", _simulate)

    # ingest
    def _ingest():
        ds_dir = out / "dataset"
        ingest_dataset(sim_paths["snapshots"], sim_paths["comments"],
                       int(cfg.get("ingest", {}).get("sample_n", -1)),
                       stage_seed(seed, "ingest"), ds_dir)
        for name in ("snapshots.jsonl", "comments_labeled.jsonl",
                     "sample.json", "report.json"):
            artifacts.append(ds_dir / name)
        return ds_dir

    ds_dir = _stage("ingest", _ingest)

    # features
    def _features():
        snapshots, index, sampled = load_dataset(ds_dir)
        window = float(cfg.get("features", {}).get("window_minutes", 10.0))
        dataset = extract_dataset(snapshots, index, sampled, window)
        f_path = out / "features.jsonl"
        i_path = out / "intervals.jsonl"
        u_path = out / "units.json"
        write_jsonl(f_path, dataset.records())
        write_jsonl(i_path, (iv.to_dict() for iv in dataset.intervals))
        units = compute_unit_table(dataset.rows)
        write_json(u_path, units.to_dict())
        t1 = out / "table1.csv"
        t1.write_text(render_table1(units).to_csv_text(), encoding="utf-8")
        artifacts.extend([f_path, i_path, u_path, t1])
        return dataset, units

    dataset, units = _stage("features", _features)

    # descriptive fits
    table_renderers = {
        "rq1": lambda payload: ("table2.csv", render_table2(
            {k: _fit_from(payload["fits"][k]) for k in payload["fits"]},
            {k: {"n_posts": payload["fits"][k]["extra"]["n_posts"]}
             for k in payload["fits"]})),
        "rq2-move": lambda payload: ("table3.csv", render_table3(
            _fit_from(payload["fits"]["move"]))),
        "rq3": lambda payload: ("table5.csv", render_table5(
            _fit_from(payload["fits"]["engagement"]))),
    }
    for kind in cfg.get("fits", []):
        def _fit(kind=kind):
            payload = run_fit(kind, dataset.rows, dataset.outcomes,
                              dataset.intervals, units)
            path = out / f"fit_{kind.replace('-', '_')}.json"
            write_json(path, payload)
            artifacts.append(path)
            csv_name, table = table_renderers[kind](payload)
            tpath = out / csv_name
            tpath.write_text(table.to_csv_text(), encoding="utf-8")
            artifacts.append(tpath)

        _stage(f"fit:{kind}", _fit)

    # ordinal next-rank model
    ord_cfg = cfg.get("ordinal", {})
    if ord_cfg.get("enabled"):
        def _ordinal():
            data = build_rq2_ordinal(dataset.rows, dataset.outcomes, units,
                                     int(ord_cfg.get("n_ranks", 0))
                                     or int(max(r.rank for r in dataset.rows)))
            posterior = fit_ordinal_next_rank(
                data.current, data.next_rank, data.X, data.feature_names,
                n_ranks=data.n_ranks,
                n_chains=int(ord_cfg.get("n_chains", 4)),
                n_iter=int(ord_cfg.get("n_iter", 2000)),
                warmup=int(ord_cfg.get("warmup", 1000)),
                seed=stage_seed(seed, "ordinal"),
                prose_prior=bool(ord_cfg.get("prose_prior", False)),
                threads=threads)
            p_path = out / "posterior_ordinal.bin"
            posterior.chains.save(p_path)
            t_path = out / "table4.csv"
            t_path.write_text(
                render_table4(posterior.coefficient_table()).to_csv_text(),
                encoding="utf-8")
            artifacts.extend([p_path, t_path])

        _stage("ordinal", _ordinal)

    # audits
    reports = []
    for audit_dict in cfg.get("audits", []):
        def _audit(audit_dict=audit_dict):
            acfg = AuditConfig.from_dict({
                "seed": stage_seed(seed, f"audit:{audit_dict.get('treatment')}"
                                          f":{audit_dict.get('outcome')}"),
                **audit_dict})
            acfg.threads = threads
            result = run_audit(dataset.rows, dataset.outcomes,
                               dataset.intervals, acfg)
            path = out / f"audit_{acfg.treatment}_{acfg.outcome}.json"
            write_json(path, result.to_dict())
            artifacts.append(path)
            reports.append(result.report)

        _stage(f"audit:{audit_dict.get('treatment')}:{audit_dict.get('outcome')}",
               _audit)
    if reports:
        t6 = out / "table6.csv"
        t6.write_text(render_table6(reports).to_csv_text(), encoding="utf-8")
        artifacts.append(t6)

    # manifest
    manifest = {
        "version": __version__,
        "config_hash": hashlib.sha256(dumps(cfg).encode()).hexdigest(),
        "artifacts": {
            str(p.relative_to(out)): sha256_file(p)
            for p in sorted(set(artifacts))
        },
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def _fit_from(d: dict):
    from .glm import FitResult

    return FitResult.from_dict(d)
