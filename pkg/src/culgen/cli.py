"""Command-line entry point.

Exit codes: 0 success, 1 bad input data, 2 configuration error, 3 client/transport error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import annotator, bias_audit, evaluation, report
from .backbone import ToyDenoiser
from .clients import FixtureVLMClient, OpenAIChatClient, RecordingVLMClient
from .config import RunConfig, load_config
from .countries import CountryVocabulary
from .cultural_db import generate_visual_elements, ingest, load_db, load_visual_elements, save_db, save_visual_elements
from .embeddings import ActionReason
from .errors import ConfigurationError, CulgenError, NotFoundError, TransportError
from .pipeline import Pipeline, pretrain_on_examples
from .projector import Adapter, load_checkpoint
from .scheduler import ScheduleConfig, ablation_flags
from .trainer import build_examples, load_training_manifest, smoothed, train

log = logging.getLogger("culgen")

EXIT_DATA, EXIT_CONFIG, EXIT_TRANSPORT = 1, 2, 3


# ---------------------------------------------------------------- run state helpers


def run_dir(cfg: RunConfig) -> Path:
    d = cfg.run_dir
    d.mkdir(parents=True, exist_ok=True)
    return d


def _save_json(obj, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def _visual_elements(cfg: RunConfig) -> dict:
    return load_visual_elements(cfg.data.visual_elements)


def get_db(cfg: RunConfig):
    index = cfg.run_dir / "db.json"
    if index.exists():
        return load_db(index)
    log.info("no ingested database in %s; reading %s", cfg.run_dir, cfg.data.db_manifest)
    return ingest(cfg.data.db_manifest, _visual_elements(cfg), cfg.data.check_images)


def training_examples(cfg: RunConfig, db):
    te, ie = cfg.encoders.build()
    rows = load_training_manifest(cfg.data.train_manifest)
    return build_examples(rows, db, te, ie, cfg.denoiser.latent_shape, cfg.train.seed)


def get_backbone(cfg: RunConfig, db=None) -> ToyDenoiser:
    if cfg.backbone.checkpoint:
        den = ToyDenoiser.load(cfg.backbone.checkpoint)
    elif (cfg.run_dir / "backbone.npz").exists():
        den = ToyDenoiser.load(cfg.run_dir / "backbone.npz")
    else:
        den = pretrain_backbone_cmd_impl(cfg, db)
    if den.config.cond_dim != cfg.encoders.text_dim:
        raise ConfigurationError(f"backbone expects {den.config.cond_dim}-d conditions, "
                                 f"encoders produce {cfg.encoders.text_dim}-d rows")
    return den


def pretrain_backbone_cmd_impl(cfg: RunConfig, db=None) -> ToyDenoiser:
    db = db if db is not None else get_db(cfg)
    examples = training_examples(cfg, db)
    log.info("pretraining toy backbone for %d steps", cfg.backbone.pretrain_steps)
    den, losses = pretrain_on_examples(examples, cfg.denoiser, cfg.backbone.pretrain_steps,
                                       cfg.backbone.pretrain_lr, cfg.backbone.seed)
    den.save(run_dir(cfg) / "backbone.npz")
    _save_json({"steps": len(losses), "final_loss": losses[-1] if losses else None, "checksum": den.checksum()},
               cfg.run_dir / "backbone.json")
    return den


def get_adapter(cfg: RunConfig, required: bool = False) -> Adapter:
    path = cfg.run_dir / "adapter.npz"
    if path.exists():
        return load_checkpoint(path)
    if required:
        raise ConfigurationError(f"no trained adapter at {path}; run `culgen train` first")
    log.warning("no trained adapter in %s; using a freshly initialised one", cfg.run_dir)
    return Adapter.init(cfg.encoders.text_dim, cfg.encoders.image_dim, seed=cfg.train.seed)


def get_pipeline(cfg: RunConfig, total_steps: int | None = None) -> Pipeline:
    db = get_db(cfg)
    schedule = cfg.schedule
    if total_steps is not None:
        schedule = ScheduleConfig(schedule.b1, schedule.b2, total_steps)
    return Pipeline(get_backbone(cfg, db), get_adapter(cfg), db, cfg.encoders, schedule)


def make_vlm(spec: str, record: str | None = None):
    kind, _, arg = spec.partition(":")
    if kind == "fixture":
        client = FixtureVLMClient.load(arg)
    elif kind == "openai":
        client = OpenAIChatClient(arg)
    else:
        raise ConfigurationError(f"unknown client {spec!r}; use fixture:PATH or openai:MODEL")
    return RecordingVLMClient(client, record) if record else client


def make_judge(spec: str):
    kind, _, arg = spec.partition(":")
    if kind == "mock":
        return bias_audit.mock_judge(arg)
    if kind == "openai":
        return OpenAIChatClient(arg)
    if kind == "fixture":
        return bias_audit.FixtureJudge(bias_audit.read_jsonl(arg), judge_id=Path(arg).stem)
    raise ConfigurationError(f"unknown judge {spec!r}; use mock:KIND, fixture:PATH or openai:MODEL")


def _results(cfg: RunConfig) -> Path:
    return run_dir(cfg) / "results"


def save_result(cfg: RunConfig, table: report.Table) -> Path:
    return report.save_table(table, _results(cfg))


# ---------------------------------------------------------------- commands


def cmd_ingest(cfg: RunConfig, args) -> int:
    manifest = args.manifest or cfg.data.db_manifest
    db = ingest(manifest, _visual_elements(cfg), cfg.data.check_images)
    path = save_db(db, run_dir(cfg) / "db.json")
    counts = db.counts()
    print(f"ingested {db.count()} records for {len(counts)} countries -> {path}")
    for country, n in counts.items():
        print(f"  {country}\t{n}")
    return 0


def cmd_visual_elements(cfg: RunConfig, args) -> int:
    client = OpenAIChatClient(args.model) if args.model else None
    if client is None:
        raise ConfigurationError("--model is required to generate visual elements")
    table = generate_visual_elements(args.countries, client)
    out = Path(args.out)
    save_visual_elements(table, out)
    print(f"wrote {len(table)} visual elements -> {out}")
    return 0


def cmd_pretrain(cfg: RunConfig, args) -> int:
    den = pretrain_backbone_cmd_impl(cfg)
    print(f"backbone ({den.n_parameters()} parameters) -> {cfg.run_dir / 'backbone.npz'}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    tcfg = cfg.train
    if args.steps is not None:
        tcfg = replace(tcfg, steps=args.steps)
    db = get_db(cfg)
    examples = training_examples(cfg, db)
    den = get_backbone(cfg, db)
    before = den.checksum()
    adapter = Adapter.init(cfg.encoders.text_dim, cfg.encoders.image_dim, seed=tcfg.seed)
    result = train(tcfg, examples, den, adapter, schedule=cfg.schedule, out_dir=run_dir(cfg))
    after = den.checksum()
    if before != after:  # pragma: no cover - would be a bug in the trainer
        raise CulgenError("backbone parameters changed during adapter training")
    sm = smoothed(result.losses, tcfg.smoothing_window) if result.losses else np.array([np.nan])
    summary = {"steps": len(result.losses), "optimizer_steps": result.optimizer_steps,
               "examples": len(examples), "initial_smoothed_loss": float(sm[min(tcfg.smoothing_window, sm.size) - 1]),
               "final_smoothed_loss": float(sm[-1]),
               "backbone_checksum": after}
    _save_json(summary, cfg.run_dir / "train.json")
    print(f"trained {summary['steps']} steps on {len(examples)} examples; "
          f"smoothed loss {summary['initial_smoothed_loss']:.4f} -> {summary['final_smoothed_loss']:.4f}")
    print(f"adapter -> {result.checkpoint}")
    return 0


def _parse_ar(args) -> ActionReason:
    if args.ar:
        return ActionReason.parse(args.ar)
    if args.action and args.reason:
        return ActionReason(args.action, args.reason)
    raise ConfigurationError("give --ar 'I should ... because ...' or both --action and --reason")


def cmd_generate(cfg: RunConfig, args) -> int:
    ar = _parse_ar(args)
    pipe = get_pipeline(cfg, args.steps)
    seed = cfg.seed if args.seed is None else args.seed
    gen = pipe.generate(ar, args.country, seed=seed, flags=ablation_flags(args.variant))
    slug = gen.country.lower().replace(" ", "_")
    stem = run_dir(cfg) / "samples" / f"gen_{args.variant}_{slug}_s{seed}"
    stem.parent.mkdir(parents=True, exist_ok=True)
    np.savez(f"{stem}.npz", latent=gen.latent)
    gen.image().save(f"{stem}.png")
    _save_json({"action": ar.action, "reason": ar.reason, "country": gen.country, "seed": seed,
                "variant": args.variant, "total_steps": pipe.schedule.total_steps,
                "retrieved": [r.id for r in gen.retrieval.selected], "reference": gen.retrieval.reference.id,
                "components": list(gen.retrieval.components), "trace": gen.trace}, Path(f"{stem}.json"))
    print(f"latent -> {stem}.npz, image -> {stem}.png")
    return 0


def _protocol(cfg: RunConfig) -> evaluation.EvalProtocol:
    statements = tuple(evaluation.load_statements(cfg.eval.statements))
    proto = evaluation.EvalProtocol(statements, tuple(cfg.eval.countries), cfg.seed)
    return proto.subset(cfg.eval.limit) if cfg.eval.limit else proto


def _scorer(cfg: RunConfig):
    if cfg.eval.scorer == "constant":
        return evaluation.ConstantScorer(1.0)
    return evaluation.ToyEmbeddingScorer(cfg.encoders.text_dim, cfg.encoders.image_grid, cfg.encoders.seed)


def _merge_scores(cfg: RunConfig, rows) -> Path:
    path = run_dir(cfg) / "scores.jsonl"
    done = {r.variant for r in rows}
    kept = [s for s in evaluation.read_scores(path) if s["variant"] not in done] if path.exists() else []
    merged = kept + [s for r in rows for s in r.samples]
    merged.sort(key=lambda s: (s["variant"], s["index"]))
    return evaluation.write_scores(merged, path)


def _run_variants(cfg: RunConfig, variants, limit) -> list:
    if limit is not None:
        cfg = replace(cfg, eval=replace(cfg.eval, limit=limit))
    proto = _protocol(cfg)
    pipe = get_pipeline(cfg)
    scorer = _scorer(cfg)
    rows = []
    for variant in variants:
        rows.append(evaluation.run_ablation(variant, proto, scorer, pipe, samples_dir=cfg.run_dir / "samples",
                                            max_workers=cfg.eval.workers))
    path = _merge_scores(cfg, rows)
    print("variant\taverage\tAR\tcountry\tn")
    for r in rows:
        print(f"{r.variant}\t{evaluation.report_round(r.average)}\t{evaluation.report_round(r.ar_score)}\t"
              f"{evaluation.report_round(r.country_score)}\t{r.n}")
    print(f"per-sample scores -> {path}")
    return rows


def cmd_eval_alignment(cfg: RunConfig, args) -> int:
    _run_variants(cfg, [args.variant], args.limit)
    return 0


def cmd_eval_ablation(cfg: RunConfig, args) -> int:
    variants = args.variants.split(",") if args.variants else list(cfg.eval.variants)
    for v in variants:
        ablation_flags(v)
    _run_variants(cfg, variants, args.limit)
    return 0


def _list_images(source: str) -> list:
    src = Path(source)
    if src.is_dir():
        files = sorted(p for p in src.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
        return [(p.stem, p) for p in files]
    rows = bias_audit.read_jsonl(src)
    out = []
    for row in rows:
        img = Path(row["image"])
        img = img if img.is_absolute() else src.parent / img
        out.append((row.get("id") or img.stem, img))
    return out


def cmd_annotate(cfg: RunConfig, args) -> int:
    items = _list_images(args.images)
    if not items:
        raise ConfigurationError(f"no images found in {args.images}")
    client = make_vlm(args.client, args.record)
    results = annotator.annotate_many(items, client, max_workers=args.workers)
    path = annotator.write_annotations(results, run_dir(cfg) / "annotations.jsonl")
    counts = annotator.distribution_report(results)
    save_result(cfg, report.counts_table(counts))
    print(f"annotated {len(results)} images -> {path}")
    if args.gold:
        gold = annotator.read_gold(args.gold)
        metrics = annotator.score_annotations(results, gold)
        grouped = annotator.score_annotations(results, gold, CountryVocabulary.default().region_map())
        table = {"recall": metrics["recall"], "p_at_1": metrics["p_at_1"],
                 "region_recall": grouped["recall"], "region_p_at_1": grouped["p_at_1"], "n": metrics["n"]}
        save_result(cfg, report.metrics_table(table))
        print("\t".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in table.items()))
    return 0


def cmd_audit_demographics(cfg: RunConfig, args) -> int:
    if args.profiles:
        profiles, topics = bias_audit.read_profiles(args.profiles)
    else:
        if not (args.images and args.analyzer and args.topics):
            raise ConfigurationError("give --profiles CSV, or --images, --analyzer and --topics together")
        kind, _, arg = args.analyzer.partition(":")
        if kind != "fixture":
            raise ConfigurationError("only fixture:PATH analyzers are available from the command line")
        analyzer = bias_audit.FixtureFaceAnalyzer.load(arg)
        with open(args.topics, encoding="utf-8") as fh:
            topics = {r["image_id"]: r["topic"] for r in csv.DictReader(fh)}
        profiles = [p for image_id, img in _list_images(args.images)
                    for p in bias_audit.profile_faces(img, analyzer, image_id)]
    for axis in ("race", "gender"):
        dt = bias_audit.tabulate_demographics(profiles, topics, axis)
        save_result(cfg, report.distribution_table(dt, args.source))
        overall = dt.rows["Overall"]
        print(f"{args.source} {axis} overall: " + ", ".join(f"{k} {v:.1f}%" for k, v in overall.items()))
    return 0


def cmd_audit_persuasion(cfg: RunConfig, args) -> int:
    if args.pairs:
        trials = [bias_audit.PairTrial.from_json(r) for r in bias_audit.read_jsonl(args.pairs)]
    elif args.bases:
        values = args.values.split(",") if args.values else list(
            bias_audit.RACES if args.attribute == "race" else bias_audit.GENDERS)
        trials = []
        for row in bias_audit.read_jsonl(args.bases):
            base = bias_audit.SwapBase(**row)
            trials += bias_audit.build_swap_pairs(base, values, bias_audit.TaggingImageEditor(),
                                                  bias_audit.SubstitutionTextEditor(), args.attribute)
        bias_audit.write_jsonl(trials, run_dir(cfg) / "pairs.jsonl")
    else:
        raise ConfigurationError("give --pairs JSONL or --bases JSONL")
    if not trials:
        raise ConfigurationError("no pair trials to judge")
    modalities = ["MLLM", "LLM"] if args.modality == "both" else [args.modality]
    verdicts = []
    for spec in args.judge:
        judge = make_judge(spec)
        for modality in modalities:
            verdicts += bias_audit.judge_all(trials, judge, modality)
    bias_audit.write_jsonl(verdicts, run_dir(cfg) / "verdicts.jsonl")
    for wt in bias_audit.aggregate_wins(verdicts):
        save_result(cfg, report.win_table(wt))
        save_result(cfg, report.win_table(wt, raw=True))
        print(f"{wt.judge_id} {wt.modality}: " + ", ".join(f"{v} {wt.rows['Overall'][v]:.2f}%" for v in wt.values)
              + f" (excluded {wt.excluded_invalid} invalid, {wt.excluded_incomplete} incomplete)")
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    d = run_dir(cfg)
    tables = report.load_tables(d / "results") if (d / "results").exists() else []
    scores = d / "scores.jsonl"
    if scores.exists():
        samples = evaluation.read_scores(scores)
        by_variant: dict = {}
        for s in samples:
            by_variant.setdefault(s["variant"], []).append(s)
        rows = [evaluation.summarize(v, by_variant[v]) for v in sorted(by_variant)]
        tables.append(report.ablation_table(rows))
    written = report.emit_report(tables, d)
    manifest = report.write_manifest(d, {"run_id": cfg.run_id, "config": cfg.to_dict()})
    print(f"wrote {len(written)} report files; manifest -> {manifest}")
    return 0


# ---------------------------------------------------------------- argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. train.steps=50 (repeatable)")
    common.add_argument("--run-id", help="results go to <runs_dir>/<run_id>")
    common.add_argument("--runs-dir")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="culgen", description="Culture-targeted ad generation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="build the cultural database from a manifest")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("visual-elements", parents=[common], help="ask a text model for one element per country")
    p.add_argument("--countries", nargs="+", required=True)
    p.add_argument("--model")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_visual_elements)

    p = sub.add_parser("pretrain-backbone", parents=[common], help="fit the toy frozen backbone")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", parents=[common], help="train the adapter with the backbone frozen")
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", parents=[common], help="generate one latent and its PNG")
    p.add_argument("--ar", help="'I should <action> because <reason>'")
    p.add_argument("--action")
    p.add_argument("--reason")
    p.add_argument("--country", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int, help="number of denoising steps T")
    p.add_argument("--variant", default="culgen")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("annotate", parents=[common], help="annotate ad images with target countries")
    p.add_argument("--images", required=True, help="image directory or JSONL manifest")
    p.add_argument("--client", required=True, help="fixture:PATH or openai:MODEL")
    p.add_argument("--gold", help="CSV with image_id,country")
    p.add_argument("--record", help="append live responses to this fixture file")
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=cmd_annotate)

    audit = sub.add_parser("audit", help="bias audits").add_subparsers(dest="audit", required=True)
    p = audit.add_parser("demographics", parents=[common], help="race and gender shares per topic")
    p.add_argument("--profiles", help="CSV image_id,topic,face_index,gender,race")
    p.add_argument("--images")
    p.add_argument("--analyzer", help="fixture:PATH")
    p.add_argument("--topics", help="CSV image_id,topic")
    p.add_argument("--source", default="generated")
    p.set_defaults(func=cmd_audit_demographics)

    p = audit.add_parser("persuasion", parents=[common], help="judge preferences over attribute swaps")
    p.add_argument("--pairs", help="JSONL of pair trials")
    p.add_argument("--bases", help="JSONL of base ads to edit into pairs")
    p.add_argument("--attribute", choices=["race", "gender"], default="race")
    p.add_argument("--values", help="comma-separated attribute values")
    p.add_argument("--judge", action="append", required=True, help="mock:KIND, fixture:PATH or openai:MODEL")
    p.add_argument("--modality", choices=["MLLM", "LLM", "both"], default="both")
    p.set_defaults(func=cmd_audit_persuasion)

    ev = sub.add_parser("eval", help="alignment evaluation").add_subparsers(dest="eval", required=True)
    p = ev.add_parser("alignment", parents=[common], help="score one variant over the protocol")
    p.add_argument("--variant", default="culgen")
    p.add_argument("--limit", type=int, help="use only the first N statements")
    p.set_defaults(func=cmd_eval_alignment)
    p = ev.add_parser("ablation", parents=[common], help="score several variants")
    p.add_argument("--variants", help="comma-separated; default from config")
    p.add_argument("--limit", type=int)
    p.set_defaults(func=cmd_eval_ablation)

    p = sub.add_parser("report", parents=[common], help="emit tables, charts and the manifest")
    p.set_defaults(func=cmd_report)
    return parser


def resolve_config(args) -> RunConfig:
    overrides = list(args.overrides)
    if args.run_id:
        overrides.append(f"run_id={args.run_id}")
    if args.runs_dir:
        overrides.append(f"runs_dir={args.runs_dir}")
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return args.func(cfg, args)
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CulgenError, NotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
