"""
Command-Line Interface
======================
Sub-commands:

    ingest      load (and optionally fetch) articles, write a normalized corpus
    candidates  score and write the candidate set for one target
    timeline    full pipeline for one target, writes timeline files + sidecars
    eval        run both prompt variants against gold labels and compare them
    cache       inspect or clear the response cache

Exit codes: 0 ok, 2 input/parse, 3 network/backend, 4 evaluation consistency,
1 anything else.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .config import RunConfig, build_config, validate_paths
from .data_cleaner import NewsArticle
from .data_loader import export_corpus, load_corpus, load_corpus_with_diagnostics, summarize_corpus
from .errors import ChronoweaveError, ConfigError, ConsistencyError
from .evaluate import (EvalReport, GoldLabel, build_report, compare_variants, derive_mock_gold,
                       eval_payload, format_report_table, load_gold, plot_variant_comparison,
                       write_gold)
from .fetcher import fetch_news_article
from .io_utils import atomic_write_text
from .llm import ResponseCache
from .parsing import RelevanceJudgment
from .pipeline import (candidates_to_dict, load_judgments, make_client, resolve_target,
                       run_target, write_run)
from .prompting import PromptVariant
from .retrieval import CandidateSet, select_candidates
from .timeline import EXPORT_FORMATS

logger = logging.getLogger('chronoweave')


def _banner(title: str) -> None:
    print("\n" + "=" * 70)
    print(f"  {title}")
    print("=" * 70)


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s',
                        stream=sys.stderr, force=True)
    logging.getLogger('httpx').setLevel(logging.WARNING)


def _overrides(args: argparse.Namespace) -> dict:
    """Nested RunConfig values from whichever flags this sub-command has."""
    get = lambda name: getattr(args, name, None)  # noqa: E731
    return {
        'corpus': {'path': get('corpus')},
        'target': {'id': get('target_id'), 'url': get('target_url')},
        'retrieval': {'window_days': get('window_days'), 'max_candidates': get('max_candidates'),
                      'halflife_days': get('halflife_days')},
        'prompting': {'variant': get('variant'), 'budget_tokens': get('budget_tokens')},
        'llm': {'backend': get('backend'), 'cache_dir': get('cache_dir'), 'model': get('model')},
        'output': {'out': get('out'), 'order': get('order'), 'formats': get('formats')},
    }


def _load_config(args: argparse.Namespace) -> RunConfig:
    return build_config(args.config, _overrides(args))


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_ingest(args: argparse.Namespace) -> int:
    config = _load_config(args)
    _banner('INGEST')

    articles: List[NewsArticle] = []
    loaded = duplicates = 0
    rejected = []
    if args.corpus is not None or not args.fetch:
        articles, diagnostics = load_corpus_with_diagnostics(config.corpus.path, strict=not args.lenient)
        loaded, duplicates, rejected = diagnostics.loaded, diagnostics.duplicates, diagnostics.rejected

    seen = {a.id for a in articles}
    for url in args.fetch or []:
        article = fetch_news_article(url)
        if article.id in seen:
            duplicates += 1
            continue
        seen.add(article.id)
        articles.append(article)
        loaded += 1
        print(f"  ✓ Fetched {url} -> {article.id}")

    output = Path(args.output) if args.output else config.output.out / 'corpus.jsonl'
    output.parent.mkdir(parents=True, exist_ok=True)
    export_corpus(articles, output)

    print(f"\n{loaded} loaded, {duplicates} duplicates, {len(rejected)} rejected")
    for line_no, reason in rejected:
        print(f"  line {line_no}: {reason}")

    summary = summarize_corpus(articles)
    if summary['date_range']:
        print(f"  Date range: {summary['date_range']['min']} to {summary['date_range']['max']}")
        print(f"  Sources: {len(summary['sources'])}")
    print(f"  ✓ Saved: {output}")
    return 0


def cmd_candidates(args: argparse.Namespace) -> int:
    config = _load_config(args)
    validate_paths(config)
    corpus = load_corpus(config.corpus.path)
    target = resolve_target(corpus, config.target)
    candidates = select_candidates(target, corpus, config.retrieval)

    _banner(f'CANDIDATES FOR: {target.title}')
    titles = {a.id: a for a in corpus}
    for rank, (cid, score) in enumerate(candidates.entries, start=1):
        article = titles[cid]
        print(f"  {rank:>3}. {score:.4f}  [{article.published_date.isoformat()}] {article.title}")

    config.output.out.mkdir(parents=True, exist_ok=True)
    path = atomic_write_text(
        config.output.out / 'candidates.json',
        json.dumps(candidates_to_dict(candidates, config.retrieval), indent=2, sort_keys=True) + '\n',
    )
    print(f"\n  ✓ Saved: {path}")
    return 0


def cmd_timeline(args: argparse.Namespace) -> int:
    config = _load_config(args)
    validate_paths(config)
    corpus = load_corpus(config.corpus.path)
    target = resolve_target(corpus, config.target)
    client = make_client(config)

    _banner(f'TIMELINE: {target.title}')
    run = run_target(config, client, corpus, target, config.prompting.variant,
                     progress=not args.quiet)
    written = write_run(run, config.output.out, config.output.formats, order=config.output.order)

    totals = run.diagnostics_totals()
    stats = client.stats.to_dict()
    print(f"\n  Variant: {run.variant.value}")
    print(f"  Candidates: {len(run.candidates.entries)}   Bundles: {len(run.results)}")
    print(f"  Timeline entries: {len(run.timeline.entries)}")
    print("  Diagnostics: " + ", ".join(f"{k}={v}" for k, v in totals.items()))
    print(f"  Backend calls: {stats['backend_calls']}   Cache hits: {stats['cache_hits']}   "
          f"Retries: {stats['retries']}")
    for name, path in written.items():
        print(f"  ✓ Saved {name}: {path}")
    return 0


def _eval_targets(corpus: Sequence[NewsArticle], config: RunConfig, args: argparse.Namespace,
                  gold: Optional[List[GoldLabel]],
                  judged: Optional[List[RelevanceJudgment]]) -> List[NewsArticle]:
    index = {a.id: a for a in corpus}
    if gold is not None:
        ids = sorted({g.target_id for g in gold})
    elif judged is not None:
        ids = sorted({j.target_id for j in judged})
    elif args.all_targets:
        return sorted(corpus, key=lambda a: (a.published_at, a.id))
    else:
        return [resolve_target(corpus, config.target)]
    missing = [i for i in ids if i not in index]
    if missing:
        raise ConsistencyError(f"target id(s) not in corpus: {', '.join(missing)}")
    return [index[i] for i in ids]


def cmd_eval(args: argparse.Namespace) -> int:
    if args.gold is None and not args.gold_from_mock:
        raise ConfigError('eval needs --gold FILE or --gold-from-mock')
    if (args.judgments_baseline is None) != (args.judgments_extended is None):
        raise ConfigError('--judgments-baseline and --judgments-extended go together')

    config = _load_config(args)
    variants = [PromptVariant.BASELINE_ONLY, PromptVariant.EXTENDED_TASK]
    validate_paths(config, variants)
    corpus = load_corpus(config.corpus.path)

    gold = load_gold(args.gold) if args.gold is not None else None
    judged: Dict[PromptVariant, List[RelevanceJudgment]] = {}
    if args.judgments_baseline is not None:
        judged[PromptVariant.BASELINE_ONLY] = load_judgments(args.judgments_baseline)
        judged[PromptVariant.EXTENDED_TASK] = load_judgments(args.judgments_extended)

    targets = _eval_targets(corpus, config, args, gold,
                            judged.get(PromptVariant.BASELINE_ONLY) if judged else None)
    candidate_sets: Dict[str, CandidateSet] = {
        t.id: select_candidates(t, corpus, config.retrieval) for t in targets
    }

    if gold is None:
        index = {a.id: a for a in corpus}
        gold = [g for t in targets for g in derive_mock_gold(t, candidate_sets[t.id], index)]

    _banner('EVALUATION: BASELINE vs EXTENDED')
    print(f"  Targets: {len(targets)}   Gold pairs: {len(gold)}")

    stats = None
    if not judged:
        client = make_client(config)
        for variant in variants:
            judged[variant] = []
            for target in targets:
                if not candidate_sets[target.id].entries:
                    continue
                run = run_target(config, client, corpus, target, variant,
                                 candidates=candidate_sets[target.id], progress=not args.quiet)
                judged[variant].extend(run.judgments)
        stats = client.stats.to_dict()

    reports: List[EvalReport] = [build_report(v, judged[v], gold) for v in variants]
    comparison = compare_variants(*reports)

    print()
    print(format_report_table(reports, comparison))
    if stats is not None:
        print(f"\n  Backend calls: {stats['backend_calls']}   Cache hits: {stats['cache_hits']}")

    out = config.output.out
    out.mkdir(parents=True, exist_ok=True)
    report_path = atomic_write_text(out / 'eval_report.json',
                                    json.dumps(eval_payload(reports, comparison), indent=2,
                                               sort_keys=True) + '\n')
    print(f"  ✓ Saved: {report_path}")
    if args.gold_from_mock and args.gold is None:
        print(f"  ✓ Saved: {write_gold(gold, out / 'gold.jsonl')}")
    if args.plot:
        plot_variant_comparison(reports, out / 'variant_comparison.png')
        print(f"  ✓ Saved: {out / 'variant_comparison.png'}")

    for r in reports:
        if r.parser_failure_rate > 0:
            logger.warning(f"{r.variant.value}: parser failure rate "
                           f"{r.parser_failure_rate:.2%}")
    return 0


def cmd_cache(args: argparse.Namespace) -> int:
    config = _load_config(args)
    cache = ResponseCache(config.llm.cache_dir)
    if args.cache_command == 'clear':
        removed = cache.clear()
        print(f"{removed} cache entries removed from {cache.directory}")
        return 0

    info = cache.inspect()
    print(f"Cache directory: {info['directory']}")
    print(f"  Entries: {info['entries']}   Bytes: {info['bytes']:,}")
    for backend, count in info['backends'].items():
        print(f"  {backend}: {count}")
    return 0


# ============================================================================
# ARGUMENT PARSING
# ============================================================================

def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=Path, help='YAML config file (key blocks mirror RunConfig)')
    common.add_argument('--backend', choices=['live', 'mock'], help='Completion backend')
    common.add_argument('--cache-dir', type=Path, help='Response cache directory (default ./.cache)')
    common.add_argument('--out', type=Path, help='Output directory')
    common.add_argument('--variant', choices=[v.value for v in PromptVariant],
                        help='Prompt variant (default extended)')
    common.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    common.add_argument('--quiet', action='store_true', help='Warnings only, no progress bar')
    return common


def _add_corpus_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--corpus', type=Path, help='JSON-lines corpus file')


def _add_target_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument('--target-id', help='Target article id')
    group.add_argument('--target-url', help='Target article url')


def _add_retrieval_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--window-days', type=int, help='Look-back window in days (default 365)')
    parser.add_argument('--max-candidates', type=int, help='Candidate cap per target (default 20)')
    parser.add_argument('--halflife-days', type=float, help='Recency decay constant in days (default 30)')


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog='chronoweave',
        description='Build background timelines for news articles with LLM relevance judgments.',
    )
    sub = parser.add_subparsers(dest='command', required=True)

    ingest = sub.add_parser('ingest', parents=[common], help='Normalize a corpus and fetch articles')
    _add_corpus_args(ingest)
    ingest.add_argument('--fetch', nargs='+', metavar='URL', help='Fetch and add these pages')
    ingest.add_argument('--lenient', action='store_true', help='Skip bad lines instead of failing')
    ingest.add_argument('--output', type=Path, help='Normalized corpus path (default <out>/corpus.jsonl)')
    ingest.set_defaults(func=cmd_ingest)

    candidates = sub.add_parser('candidates', parents=[common], help='Write the candidate set')
    _add_corpus_args(candidates)
    _add_target_args(candidates)
    _add_retrieval_args(candidates)
    candidates.set_defaults(func=cmd_candidates)

    timeline = sub.add_parser('timeline', parents=[common], help='Run the full pipeline')
    _add_corpus_args(timeline)
    _add_target_args(timeline)
    _add_retrieval_args(timeline)
    timeline.add_argument('--order', choices=['asc', 'desc'], help='Markdown/HTML entry order')
    timeline.add_argument('--formats', nargs='+', choices=list(EXPORT_FORMATS), help='Export formats')
    timeline.add_argument('--budget-tokens', type=int, help='Per-prompt token budget')
    timeline.add_argument('--model', help='Model name sent to the backend')
    timeline.set_defaults(func=cmd_timeline)

    evaluate = sub.add_parser('eval', parents=[common], help='Compare prompt variants on gold labels')
    _add_corpus_args(evaluate)
    _add_target_args(evaluate)
    _add_retrieval_args(evaluate)
    evaluate.add_argument('--gold', type=Path, help='Gold labels (JSON-lines)')
    evaluate.add_argument('--gold-from-mock', action='store_true',
                          help='Derive gold from the two-shared-title-terms rule')
    evaluate.add_argument('--all-targets', action='store_true',
                          help='With --gold-from-mock, evaluate every corpus article as a target')
    evaluate.add_argument('--judgments-baseline', type=Path, help='Saved baseline judgments.jsonl')
    evaluate.add_argument('--judgments-extended', type=Path, help='Saved extended judgments.jsonl')
    evaluate.add_argument('--budget-tokens', type=int, help='Per-prompt token budget')
    evaluate.add_argument('--model', help='Model name sent to the backend')
    evaluate.add_argument('--plot', action='store_true', help='Save a comparison bar chart')
    evaluate.set_defaults(func=cmd_eval)

    cache = sub.add_parser('cache', parents=[common], help='Inspect or clear the response cache')
    cache.add_argument('cache_command', choices=['inspect', 'clear'])
    cache.set_defaults(func=cmd_cache)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose, args.quiet)

    try:
        return args.func(args)
    except ChronoweaveError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print('interrupted', file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception(f"unexpected failure: {e}")
        return 1


if __name__ == '__main__':
    sys.exit(main())
