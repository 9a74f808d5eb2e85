"""Command line for the pipeline: build, augment, truncate, stats, eval,
overlap and import-lexicon."""
import argparse
import json
import logging
import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import config as settings
from config import PipelineConfig, apply_overrides, config_hash, load_config
from corpus_io import load_annotations, load_captions, load_narratives, load_questions, join, RawSample
from dal_augment import DalClients, DalConfig, TARGETS, TECHNIQUES as DAL_TECHNIQUES, origin_for, run_dal
from dav_augment import DavConfig, DavResources, TECHNIQUES as DAV_TECHNIQUES, run_dav
from errors import Diagnostics, PipelineError, UsageError
from evaluation import evaluate, load_predictions, load_report, overlap, save_report
from importance import make_scorer
from lexicon import (import_wordnet, load_color_set, load_embeddings, load_lexical_graph, load_object_classes,
                     load_question_types, read_word_list)
from reports import accuracy_table, export_xlsx, length_table, overlap_table, question_type_table, run_key
from services import ResponseCache, make_infill_client, make_translation_client
from triplet_builder import (DescriptionMode, Triplet, canonical_key, description_length_stats, make_triplets,
                             read_triplets, sample_seed, truncate_description, write_triplets)

logger = logging.getLogger(__name__)

DEFAULT_RATES = [round(i / 10, 1) for i in range(11)]
STATS_MODES = ["none", "captions:1", "captions:2", "captions:3", "captions:4", "captions:5", "narrative", "whole"]
DAL_ORIGIN = re.compile(r"^(eda|bt|cwr|cwi)_(q|d)$")


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ========== RUN PLUMBING ========== #

def shard_of(question_id, shards: int) -> int:
    return sample_seed(0, question_id, "shard") % shards


def run_sharded(items: Sequence[Any], key: Callable[[Any], Any], work: Callable, shards: int, workers: int,
                diagnostics: Diagnostics) -> Tuple[List[Triplet], Dict[str, int]]:
    """Partition by question id hash, run ``work(items, diagnostics)`` per shard,
    merge the outputs in canonical order"""
    partitions: List[List[Any]] = [[] for _ in range(shards)]
    for item in items:
        partitions[shard_of(key(item), shards)].append(item)

    def run(partition):
        shard_diagnostics = Diagnostics()
        output, counts = work(partition, shard_diagnostics)
        return output, counts, shard_diagnostics

    merged: List[Triplet] = []
    counts: Dict[str, int] = {}
    with ThreadPoolExecutor(max_workers=workers) as executor:
        for output, shard_counts, shard_diagnostics in executor.map(run, partitions):
            merged.extend(output)
            for name, count in shard_counts.items():
                counts[name] = counts.get(name, 0) + count
            diagnostics.merge(shard_diagnostics)
    return sorted(merged, key=canonical_key), counts


def output_header(config: PipelineConfig, command: str, **extra: Any) -> Dict[str, Any]:
    header = {"tool_version": settings.TOOL_VERSION, "seed": config.run.seed,
              "config_hash": config_hash(config), "command": command}
    header.update(extra)
    return header


def write_manifest(config: PipelineConfig, name: str, command: str, started: float, diagnostics: Diagnostics,
                   **fields: Any) -> str:
    manifest = output_header(config, command)
    manifest.update(fields)
    manifest["diagnostics"] = diagnostics.as_dict()
    manifest["wall_clock_seconds"] = round(time.perf_counter() - started, 3)
    path = os.path.join(config.run.out, f"{name}.manifest.json")
    os.makedirs(config.run.out, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, ensure_ascii=False)
    logger.info(f"Manifest written to {path}")
    return path


def _required(value: Optional[Any], key: str) -> Any:
    if not value:
        raise UsageError(f"Missing required setting '{key}' (config file or command-line flag)")
    return value


def load_samples(config: PipelineConfig, diagnostics: Diagnostics, require_narrative: bool) -> List[RawSample]:
    paths = config.paths
    questions = load_questions(_required(paths.questions, "paths.questions"), diagnostics)
    annotations = load_annotations(_required(paths.annotations, "paths.annotations"), diagnostics)
    captions = load_captions(_required(paths.captions, "paths.captions"), diagnostics)
    if require_narrative:
        _required(paths.narratives, "paths.narratives")
    narratives = load_narratives(paths.narratives, diagnostics) if paths.narratives else {}
    return join(questions, annotations, captions, narratives, diagnostics, require_narrative=require_narrative)


# ========== COMMANDS ========== #

def cmd_build(config: PipelineConfig, args) -> int:
    started = time.perf_counter()
    diagnostics = Diagnostics()
    mode = DescriptionMode.parse(config.build.mode)
    needs_narrative = config.build.require_narrative and mode.kind in ("narrative", "whole")
    samples = load_samples(config, diagnostics, needs_narrative)

    def work(partition, shard_diagnostics):
        return make_triplets(partition, mode, config.run.seed, shard_diagnostics), {}

    triplets, _ = run_sharded(samples, lambda s: s.question_id, work, config.run.shards, config.run.workers,
                              diagnostics)
    path = config.triplets_path()
    count = write_triplets(path, triplets, output_header(config, "build", mode=str(mode)))
    logger.info(f"Wrote {count} triplets to {path}")
    write_manifest(config, "build", "build", started, diagnostics, run="build", output=path, mode=str(mode),
                   counts={"original": count}, original=count, synthetic=0, total=count)
    return 0


def parse_augmentation(technique: str, target: Optional[str]) -> Tuple[str, List[str], Optional[str]]:
    """-> ("dav", techniques, None) or ("dal", [technique], target)"""
    names = [name.strip().lower() for name in technique.split(",") if name.strip()]
    if not names:
        raise UsageError("No augmentation technique given")
    if all(name in DAV_TECHNIQUES for name in names):
        return "dav", list(dict.fromkeys(names)), None
    if len(names) != 1:
        raise UsageError(f"Language techniques run one at a time, got '{technique}'")
    name = names[0]
    match = DAL_ORIGIN.match(name)
    if match:
        short = {v: k for k, v in TARGETS.items()}
        return "dal", [match.group(1)], short[match.group(2)]
    if name in DAL_TECHNIQUES:
        if target not in TARGETS:
            raise UsageError(f"Technique '{name}' needs --target question|description")
        return "dal", [name], target
    raise UsageError(f"Unknown augmentation technique '{technique}'")


def _graph(config: PipelineConfig, diagnostics: Diagnostics, required: bool):
    if not config.paths.lexicon:
        if required:
            raise UsageError("This technique needs paths.lexicon (see import-lexicon)")
        return None
    return load_lexical_graph(config.paths.lexicon, diagnostics)


def dav_resources(config: PipelineConfig, techniques: Sequence[str], diagnostics: Diagnostics) -> DavResources:
    paths = config.paths
    graph = _graph(config, diagnostics, required=any(t in ("hypernym", "hyponym") for t in techniques))
    dav_config = DavConfig(
        colors=load_color_set(paths.colors),
        question_types=load_question_types(paths.color_question_types),
        objects=load_object_classes(paths.objects, paths.object_aliases, graph),
        top_d=config.dav.top_d,
        top_j=config.dav.top_j,
        skip_no_majority=config.dav.skip_no_majority,
    )
    embeddings = None
    if "adversarial" in techniques:
        embeddings = load_embeddings(_required(paths.embeddings, "paths.embeddings"), diagnostics)
    scorer = None
    if any(t.startswith("css") for t in techniques):
        scorer = make_scorer(config.scorer, paths.stopwords)
    return DavResources(dav_config, graph, embeddings, scorer)


def dal_setup(config: PipelineConfig, technique: str, diagnostics: Diagnostics):
    stopwords = read_word_list(config.paths.stopwords or settings.resource_path("stopwords.txt"))
    dal_config = DalConfig(
        eda_rate=config.dal.eda_rate,
        eda_deletion_p=config.dal.eda_deletion_p,
        contextual_k=config.dal.contextual_k,
        stopwords=frozenset(word.lower() for word in stopwords),
    )
    cache = ResponseCache(config.run.cache_dir) if config.run.cache_dir else None
    clients = DalClients()
    if technique == "bt":
        clients.translation = make_translation_client(config.translation, config.dal.source_lang,
                                                      config.dal.pivot_lang, settings.OPENAI_API_KEY, cache)
    if technique in ("cwr", "cwi"):
        clients.infill = make_infill_client(config.infill, cache)
    graph = _graph(config, diagnostics, required=technique == "eda")
    return dal_config, clients, graph


def cmd_augment(config: PipelineConfig, args) -> int:
    started = time.perf_counter()
    diagnostics = Diagnostics()
    family, techniques, target = parse_augmentation(args.technique, args.target)
    originals = [t for t in read_triplets(config.triplets_path(), diagnostics) if t.origin == "original"]
    seed = config.run.seed

    if family == "dav":
        resources = dav_resources(config, techniques, diagnostics)
        name = run_key(techniques)

        def work(partition, shard_diagnostics):
            return run_dav(partition, techniques, resources, seed, shard_diagnostics, progress=False)
    else:
        dal_config, clients, graph = dal_setup(config, techniques[0], diagnostics)
        name = origin_for(techniques[0], target)

        def work(partition, shard_diagnostics):
            return run_dal(partition, techniques[0], target, dal_config, clients, graph, seed, shard_diagnostics,
                           progress=False)

    synthetic, counts = run_sharded(originals, lambda t: t.parent_question_id, work, config.run.shards,
                                    config.run.workers, diagnostics)
    path = os.path.join(config.run.out, f"augmented_{name}.jsonl")
    write_triplets(path, synthetic, output_header(config, "augment", run=name))
    total = len(originals) + len(synthetic)
    logger.info(f"{name}: {len(synthetic)} synthetic, {total} total")
    print(f"{'Input Data':<28}{'Num. Synthetic':>16}{'Num. Total':>14}")
    print(f"{name:<28}{len(synthetic):>16,}{total:>14,}")
    write_manifest(config, f"augment_{name}", "augment", started, diagnostics, run=name, output=path,
                   techniques=techniques, target=target, counts=counts, original=len(originals),
                   synthetic=len(synthetic), total=total)
    return 0


def parse_rates(text: Optional[str]) -> List[float]:
    if not text:
        return list(DEFAULT_RATES)
    try:
        rates = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"Bad rate list '{text}'")
    for rate in rates:
        if not 0 <= rate <= 1:
            raise UsageError(f"Truncation rate must be within [0, 1], got {rate}")
    return rates


def cmd_truncate(config: PipelineConfig, args) -> int:
    started = time.perf_counter()
    diagnostics = Diagnostics()
    rates = parse_rates(args.rates)
    triplets = read_triplets(config.triplets_path(), diagnostics)
    directory = os.path.join(config.run.out, "truncated")
    outputs = {}
    for rate in rates:
        truncated = [
            replace(t, description=tuple(truncate_description(
                t.description, rate, sample_seed(config.run.seed, t.question_id, "truncate"))))
            for t in triplets
        ]
        path = os.path.join(directory, f"rate_{rate:g}.jsonl")
        write_triplets(path, truncated, output_header(config, "truncate", rate=rate))
        outputs[f"{rate:g}"] = path
    logger.info(f"Wrote {len(outputs)} truncated files to {directory}")
    write_manifest(config, "truncate", "truncate", started, diagnostics, run="truncate", outputs=outputs,
                   rates=rates, original=len(triplets), synthetic=0, total=len(triplets))
    return 0


def cmd_stats(config: PipelineConfig, args) -> int:
    started = time.perf_counter()
    diagnostics = Diagnostics()
    modes = [DescriptionMode.parse(m) for m in (args.modes.split(",") if args.modes else STATS_MODES)]
    samples = load_samples(config, diagnostics, require_narrative=False)
    complete = [s for s in samples if not s.incomplete]
    rows = []
    for mode in modes:
        eligible = complete if mode.kind in ("narrative", "whole") else samples
        rows.extend(description_length_stats(eligible, [mode], config.run.seed))
    df = length_table(rows)
    print(df.to_string(index=False))
    os.makedirs(config.run.out, exist_ok=True)
    with open(os.path.join(config.run.out, "stats.json"), "w", encoding="utf-8") as f:
        json.dump(rows, f, indent=2, ensure_ascii=False)
    if args.xlsx:
        export_xlsx(args.xlsx, {"Description Lengths": df})
    write_manifest(config, "stats", "stats", started, diagnostics, run="stats", rows=rows,
                   original=len(samples), synthetic=0, total=len(samples))
    return 0


def cmd_eval(config: PipelineConfig, args) -> int:
    diagnostics = Diagnostics()
    annotations = load_annotations(_required(args.annotations or config.paths.annotations, "paths.annotations"),
                                   diagnostics)
    report = evaluate(load_predictions(args.predictions), annotations, official=not args.no_official,
                      diagnostics=diagnostics)
    baseline = load_report(args.baseline) if args.baseline else None
    if baseline is not None:
        report.with_gap(baseline)
    name = os.path.splitext(os.path.basename(args.predictions))[0]
    df = accuracy_table({name: report})
    print(df.to_string(index=False))
    path = args.report or os.path.join(config.run.out, f"eval_{name}.json")
    save_report(path, report)
    logger.info(f"Report written to {path}")
    if args.xlsx:
        export_xlsx(args.xlsx, {"Accuracy": df, "Question Types": question_type_table(report)})
    return 0


def cmd_overlap(config: PipelineConfig, args) -> int:
    annotations = load_annotations(_required(args.annotations or config.paths.annotations, "paths.annotations"))
    report = overlap(load_predictions(args.predictions_a), load_predictions(args.predictions_b), annotations,
                     normalize=args.normalize)
    df = overlap_table(report)
    print(df.to_string(index=False))
    path = args.report or os.path.join(config.run.out, "overlap.json")
    save_report(path, report)
    if args.xlsx:
        export_xlsx(args.xlsx, {"Overlap": df})
    return 0


def cmd_import_lexicon(config: PipelineConfig, args) -> int:
    output = args.output or config.paths.lexicon or os.path.join(config.run.out, "lexicon.tsv")
    vocabulary = read_word_list(args.vocabulary) if args.vocabulary else None
    count = import_wordnet(output, args.wordnet_dir, vocabulary)
    print(f"{count} relations written to {output}")
    return 0


COMMANDS = {
    "build": cmd_build, "augment": cmd_augment, "truncate": cmd_truncate, "stats": cmd_stats,
    "eval": cmd_eval, "overlap": cmd_overlap, "import-lexicon": cmd_import_lexicon,
}


# ========== PARSER ========== #

def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML pipeline config")
    common.add_argument("--seed", type=int, help="Global seed")
    common.add_argument("--shards", type=int, help="Number of question-id shards")
    common.add_argument("--workers", type=int, help="Shards processed in parallel")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")

    parser = ArgumentParser(prog="vqalang", description="Language-only VQA data pipeline")
    subparsers = parser.add_subparsers(dest="command")

    build = subparsers.add_parser("build", parents=[common], help="Join the corpora into triplets")
    build.add_argument("--mode", help="whole, narrative, none or captions:k")
    build.add_argument("--allow-missing-narrative", action="store_true",
                       help="Keep questions whose image has no narrative")

    augment = subparsers.add_parser("augment", parents=[common], help="Generate synthetic triplets")
    augment.add_argument("technique", help="e.g. hyponym, hypernym,hyponym, css, eda --target question, bt_q")
    augment.add_argument("--target", choices=sorted(TARGETS), help="Field rewritten by language techniques")
    augment.add_argument("--triplets", help="Built triplet file")
    augment.add_argument("--scorer", choices=["file", "service", "lexical_overlap"])
    augment.add_argument("--scores", help="Score file for --scorer file")
    augment.add_argument("--translation-client", choices=["identity", "dictionary", "service", "openai"])
    augment.add_argument("--infill-client", choices=["identity", "dictionary", "service"])
    augment.add_argument("--cache-dir", help="Response cache directory")

    truncate = subparsers.add_parser("truncate", parents=[common], help="Truncate descriptions at several rates")
    truncate.add_argument("--rates", help="Comma-separated rates (default 0.0,0.1,...,1.0)")
    truncate.add_argument("--triplets", help="Triplet file to truncate")

    stats = subparsers.add_parser("stats", parents=[common], help="Mean description length per mode")
    stats.add_argument("--modes", help="Comma-separated modes (default: all)")
    stats.add_argument("--xlsx", help="Also export the table to Excel")

    evaluate_cmd = subparsers.add_parser("eval", parents=[common], help="VQA accuracy of a prediction file")
    evaluate_cmd.add_argument("predictions")
    evaluate_cmd.add_argument("--annotations")
    evaluate_cmd.add_argument("--baseline", help="Baseline report for the Gap column")
    evaluate_cmd.add_argument("--report", help="Where to save the report")
    evaluate_cmd.add_argument("--no-official", action="store_true", help="Skip the official answer normalizer")
    evaluate_cmd.add_argument("--xlsx")

    overlap_cmd = subparsers.add_parser("overlap", parents=[common], help="Answer overlap of two systems")
    overlap_cmd.add_argument("predictions_a")
    overlap_cmd.add_argument("predictions_b")
    overlap_cmd.add_argument("--annotations")
    overlap_cmd.add_argument("--normalize", action="store_true", help="Apply the official answer normalizer")
    overlap_cmd.add_argument("--report")
    overlap_cmd.add_argument("--xlsx")

    lexicon = subparsers.add_parser("import-lexicon", parents=[common], help="Convert WordNet to a relation file")
    lexicon.add_argument("--wordnet-dir", help="Native WordNet dict directory (default: NLTK copy)")
    lexicon.add_argument("--vocabulary", help="Only import these words")
    lexicon.add_argument("--output")
    return parser


def resolve_config(args) -> PipelineConfig:
    config = load_config(args.config)
    apply_overrides(
        config,
        run__seed=args.seed, run__shards=args.shards, run__workers=args.workers, run__out=args.out,
        build__mode=getattr(args, "mode", None),
        build__require_narrative=False if getattr(args, "allow_missing_narrative", False) else None,
        paths__triplets=getattr(args, "triplets", None),
        scorer__kind=getattr(args, "scorer", None),
        scorer__path=getattr(args, "scores", None),
        translation__kind=getattr(args, "translation_client", None),
        infill__kind=getattr(args, "infill_client", None),
        run__cache_dir=getattr(args, "cache_dir", None),
    )
    if config.run.shards < 1 or config.run.workers < 1:
        raise UsageError("--shards and --workers must be >= 1")
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        level = (getattr(args, "log_level", None) or settings.LOG_LEVEL).upper()
        if not isinstance(logging.getLevelName(level), int):
            raise UsageError(f"Unknown log level '{level}'")
        logging.basicConfig(
            level=level,
            format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )
        if not args.command:
            raise UsageError(f"A command is required: {', '.join(COMMANDS)}")
        return COMMANDS[args.command](resolve_config(args), args)
    except PipelineError as e:
        logger.error(str(e))
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
