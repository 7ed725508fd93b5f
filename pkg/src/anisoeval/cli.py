"""``anisoeval`` command line: ingest, evaluate, analyze, control."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import datapipe
from .analytics import analysis_report, build_score_matrix, rankings_for, rsa
from .core import (
    DEFAULT_DIMENSIONS, ModelDescriptor, WeightScheme, build_strata, default_schemes, matrix_to_csv, read_samples, validate_scheme,
    write_samples,
)
from .errors import AnisoEvalError, InconsistentDimensions, ValidationError
from .harness import anisotropic_cohort, isotropic_cohort, run_control, synthetic_population
from .oracle import EndpointResponder, SyntheticProfile, SyntheticResponder, endpoint_respond, hint_scorer
from .scheduler import EvaluationRun, SchedulerConfig, run_evaluation
from .scoring import HybridScorer, TemplateJudge, constant_judge

log = logging.getLogger("anisoeval")


@dataclass
class ProjectConfig:
    dataset_path: Path | None = None
    dimensions: list | None = None
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    schemes: list = field(default_factory=default_schemes)
    models: list = field(default_factory=list)
    output_dir: Path = Path("out")
    corpus_path: Path | None = None
    judge: ModelDescriptor | None = None
    control: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "ProjectConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        base = path.parent

        def resolve(p):
            return None if p is None else (base / p if not Path(p).is_absolute() else Path(p))

        models = []
        for m in d.get("models", []):
            models.append(SyntheticProfile.from_dict(m) if "ability" in m else ModelDescriptor.from_dict(m))
        dims = d.get("dimensions")
        if "schemes" in d:
            schemes = [WeightScheme.from_dict(s) for s in d["schemes"]]
        elif dims and not set(DEFAULT_DIMENSIONS) <= set(dims):
            # the named defaults are written over the standard dimensions
            schemes = [WeightScheme("uniform", {k: 1.0 / len(dims) for k in dims})]
        else:
            schemes = default_schemes()
        cfg = cls(
            dataset_path=resolve(d.get("dataset_path")),
            dimensions=dims,
            scheduler=SchedulerConfig.from_dict(d.get("scheduler", {})),
            schemes=schemes,
            models=models,
            output_dir=resolve(d.get("output_dir", "out")),
            corpus_path=resolve(d.get("corpus_path")),
            judge=ModelDescriptor.from_dict(d["judge"]) if d.get("judge") else None,
            control=d.get("control", {}),
        )
        if cfg.dimensions:
            for s in cfg.schemes:
                validate_scheme(s, cfg.dimensions)
        return cfg

    def model(self, model_id: str):
        for m in self.models:
            if getattr(m, "model_id", getattr(m, "id", None)) == model_id:
                return m
        raise ValidationError(f"model {model_id!r} is not configured")


def _write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


# --- commands ------------------------------------------------------------------------

def cmd_ingest(cfg: ProjectConfig, out: Path, corpus=None, private_anchor: int = 0, seed: int = 0) -> dict:
    if cfg.dataset_path is None:
        raise ValidationError("config has no dataset_path")
    samples = read_samples(cfg.dataset_path)
    if cfg.dimensions:
        build_strata(samples, cfg.dimensions)
    corpus = corpus if corpus is not None else cfg.corpus_path
    flags = []
    active = samples
    if corpus is not None:
        docs = datapipe.load_corpus(corpus)
        ngram = datapipe.NgramIndex.build(docs)
        semantic = datapipe.SemanticIndex(datapipe.hashed_trigram_embedding, docs)
        active, flags = datapipe.decontaminate(samples, ngram, semantic)
    private = []
    if private_anchor:
        active, private = datapipe.split_private_anchor(active, private_anchor, seed)
    out.mkdir(parents=True, exist_ok=True)
    write_samples(active, out / "dataset.active.jsonl", public=True)
    if private:
        write_samples(private, out / "private_anchor.jsonl")
    _write_text(out / "contamination.jsonl", "".join(json.dumps(f.to_dict(), ensure_ascii=False) + "\n" for f in flags))
    summary = {
        "input": len(samples),
        "active": len(active),
        "private_anchor": len(private),
        "flags": len(flags),
        "flagged_samples": len({f.sample_id for f in flags}),
        "stats": datapipe.dataset_stats(active),
    }
    _write_text(out / "ingest.json", _dump_json(summary))
    return summary


def _responder_and_scorer(cfg: ProjectConfig, model):
    if isinstance(model, SyntheticProfile):
        return SyntheticResponder(model), hint_scorer
    if model.endpoint is None:
        raise ValidationError(f"model {model.id!r} has no endpoint; configure a synthetic profile instead")
    if cfg.judge is not None:
        judge_desc = cfg.judge

        def complete(prompt):
            from .core import CapabilityCell, GoldAnswer, Sample
            probe = Sample("judge", CapabilityCell("judge", "judge"), "judge", prompt, "", GoldAnswer.string(""))
            return endpoint_respond(judge_desc, probe).content

        judge = TemplateJudge(complete)
    else:
        judge = constant_judge(0.0)
    return EndpointResponder(model), HybridScorer(judge_fn=judge)


def cmd_evaluate(cfg: ProjectConfig, model_id: str, out: Path, mode: str | None = None, seed: int | None = None,
                 dataset_path=None) -> EvaluationRun:
    path = dataset_path or cfg.dataset_path
    if path is None:
        raise ValidationError("no dataset given")
    dataset = read_samples(path)
    strata = build_strata(dataset, cfg.dimensions)
    sched = cfg.scheduler
    if mode is not None:
        sched = replace(sched, mode=mode)
    if seed is not None:
        sched = replace(sched, rng_seed=seed)
    model = cfg.model(model_id)
    responder, scorer = _responder_and_scorer(cfg, model)
    run = run_evaluation(model_id, dataset, strata, sched, responder, scorer)
    _write_text(out / run.run_filename(), run.to_jsonl())
    return run


def _print_run(run: EvaluationRun, stream=None):
    stream = stream or sys.stdout
    widths = run.halfwidths()
    print(f"model {run.model_id}  mode {run.mode}  seed {run.seed}", file=stream)
    for st in run.strata:
        acc = run.per_stratum[st.id]
        print(f"  {st.id:<20} {acc.mean:.4f} +/- {widths[st.id]:.4f}  n={acc.n}/{st.population_size}"
              f"  {run.stopped_reason[st.id]}", file=stream)
    mu, hw = run.estimate()
    print(f"  overall {mu:.4f} +/- {hw:.4f}", file=stream)
    print(f"  cost {run.total_cost:.6g} of {run.full_cost:.6g} (ratio {run.cost_ratio:.4f})", file=stream)


def load_runs(paths: Sequence[Path]) -> list[EvaluationRun]:
    runs = []
    for p in sorted(paths):
        runs.append(EvaluationRun.from_jsonl(Path(p).read_text(encoding="utf-8")))
    return runs


def cmd_analyze(runs: Sequence[EvaluationRun], schemes: Sequence[WeightScheme], out: Path, seed: int = 0) -> dict:
    if not runs:
        raise ValidationError("no run files")
    dims = [st.id for st in runs[0].strata]
    per_model: dict[str, list] = {}
    for r in runs:
        if [st.id for st in r.strata] != dims:
            raise InconsistentDimensions(f"run for {r.model_id!r} has dimensions {[st.id for st in r.strata]}, expected {dims}")
        per_model.setdefault(r.model_id, []).append([r.per_stratum[d].mean for d in dims])
    model_ids = sorted(per_model)
    raw = np.array([np.mean(per_model[m], axis=0) for m in model_ids], dtype=np.float64)
    matrix = build_score_matrix(model_ids, dims, raw)
    report = analysis_report(matrix, schemes, seed)

    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "analysis.json", _dump_json(report))
    _write_text(out / "score_matrix.raw.csv", matrix_to_csv(model_ids, dims, matrix.raw))
    _write_text(out / "score_matrix.normalized.csv", matrix_to_csv(model_ids, dims, matrix.normalized))
    rankings = rankings_for(matrix, schemes)
    row_of = {m: i for i, m in enumerate(model_ids)}
    for name, ranked in rankings.items():
        lines = [",".join(["rank", "model_id", "overall", *dims])]
        for r in ranked:
            vals = matrix.normalized[row_of[r.model_id]]
            lines.append(",".join([str(r.rank), r.model_id, repr(r.overall), *(repr(float(v)) for v in vals)]))
        _write_text(out / f"leaderboard.{name}.csv", "\n".join(lines) + "\n")
    trajectories, _ = rsa(rankings, seed=seed)
    names = [s.name for s in schemes]
    lines = [",".join(["model_id", *names, "rsa"])]
    for t in trajectories:
        lines.append(",".join([t.model_id, *(str(t.ranks[n]) for n in names), str(t.rsa)]))
    _write_text(out / "rank_trajectories.csv", "\n".join(lines) + "\n")
    return report


def cmd_control(cfg: ProjectConfig, out: Path, cohort_size: int | None = None, seed: int | None = None,
                workers: int | None = None, cohort: str | None = None) -> dict:
    ctl = cfg.control
    seed = cfg.scheduler.rng_seed if seed is None else seed
    size = cohort_size or ctl.get("cohort_size", 50)
    kind = cohort or ctl.get("cohort", "anisotropic")
    dims = cfg.dimensions or list(ctl.get("dimensions", [])) or None
    if cfg.dataset_path is not None:
        dataset = read_samples(cfg.dataset_path)
    else:
        dims = dims or list(DEFAULT_DIMENSIONS)
        dataset = synthetic_population(dims, ctl.get("samples_per_stratum", 500), ctl.get("costs"), seed)
    dim_ids = [st.id for st in build_strata(dataset, dims)]
    if kind == "configured":
        profiles = [m for m in cfg.models if isinstance(m, SyntheticProfile)]
        if not profiles:
            raise ValidationError("no synthetic profiles configured")
    elif kind == "anisotropic":
        profiles = anisotropic_cohort(size, dim_ids, seed)
    elif kind == "isotropic":
        profiles = isotropic_cohort(size, dim_ids, seed)
    else:
        raise ValidationError(f"unknown cohort kind {kind!r}")
    sched = replace(cfg.scheduler, rng_seed=seed)
    result = run_control(profiles, dataset, sched, cfg.schemes, dims,
                         workers=workers or ctl.get("workers", 1), iters=ctl.get("bootstrap_iters", 1000))
    report = dict(result.report, cohort=kind)
    _write_text(out / "control.json", _dump_json(report))
    return report


# --- argument parsing -----------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anisoeval", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path)

    ing = sub.add_parser("ingest", help="validate, decontaminate and store a dataset")
    common(ing)
    ing.add_argument("--corpus", type=Path)
    ing.add_argument("--private-anchor", type=int, default=0)

    ev = sub.add_parser("evaluate", help="run the sequential sampler for one model")
    common(ev)
    ev.add_argument("--model", required=True)
    ev.add_argument("--mode", choices=["dynamic", "full_set"])
    ev.add_argument("--dataset", type=Path)

    an = sub.add_parser("analyze", help="build score matrix, stability report and leaderboards")
    common(an)
    an.add_argument("runs", nargs="*", type=Path)

    ct = sub.add_parser("control", help="dynamic vs full-set control experiment on a synthetic cohort")
    common(ct)
    ct.add_argument("--cohort-size", type=int)
    ct.add_argument("--cohort", choices=["anisotropic", "isotropic", "configured"])
    ct.add_argument("--workers", type=int)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ProjectConfig.load(args.config)
        out = args.out or cfg.output_dir
        if args.command == "ingest":
            summary = cmd_ingest(cfg, out, args.corpus, args.private_anchor, args.seed or 0)
            print(_dump_json(summary), end="")
        elif args.command == "evaluate":
            run = cmd_evaluate(cfg, args.model, out, args.mode, args.seed, args.dataset)
            _print_run(run)
        elif args.command == "analyze":
            paths = args.runs or sorted(out.glob("*.run.jsonl"))
            report = cmd_analyze(load_runs(paths), cfg.schemes, out, args.seed or 0)
            print(_dump_json({"anisotropy": report["anisotropy"], "stability": report["stability"]}), end="")
        elif args.command == "control":
            report = cmd_control(cfg, out, args.cohort_size, args.seed, args.workers, args.cohort)
            keys = ("cohort", "cohort_size", "spearman_rho", "delta_rsa", "degenerate")
            summary = {k: report[k] for k in keys}
            summary["mean_rsa_dynamic"] = report["dynamic"]["mean_rsa"]
            summary["mean_rsa_full_set"] = report["full_set"]["mean_rsa"]
            summary["mean_cost_ratio"] = report["dynamic"]["mean_cost_ratio"]
            print(_dump_json(summary), end="")
    except AnisoEvalError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
