"""
Timeline Pipeline
=================
Runs the stages for one target article:

    retrieve -> chunk -> render -> complete -> parse -> assemble -> export

Bundle completions run concurrently up to the client's in-flight cap; every
other stage is sequential. Results are always collected in bundle order so
outputs do not depend on completion timing.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from tqdm import tqdm

from .config import RunConfig, TargetConfig
from .data_cleaner import NewsArticle
from .errors import ArticleLookupError, ConfigError, ConsistencyError, StoryError
from .io_utils import write_jsonl
from .llm import LlmClient, LlmRequest, LlmResponse, ResponseCache, RetryPolicy, get_backend
from .parsing import (BackgroundStory, ParseDiagnostics, RelevanceJudgment,
                      diagnostics_to_record, judgment_from_record, judgment_to_record,
                      parse_judgments, parse_story, story_to_record,
                      validate_story_citations)
from .prompting import (PromptBundle, PromptVariant, Template, build_snippets,
                        chunk_candidates, load_default_template, load_template,
                        render_prompt, template_overhead)
from .retrieval import CandidateSet, RetrievalParams, select_candidates
from .timeline import FORMAT_SUFFIXES, Timeline, assemble, export

logger = logging.getLogger(__name__)


@dataclass
class BundleResult:
    bundle: PromptBundle
    response: LlmResponse
    judgments: List[RelevanceJudgment]
    diagnostics: ParseDiagnostics
    story: Optional[BackgroundStory] = None
    story_error: Optional[str] = None


@dataclass
class TargetRun:
    """Everything produced for one target and one variant."""

    target: NewsArticle
    variant: PromptVariant
    candidates: CandidateSet
    results: List[BundleResult] = field(default_factory=list)
    timeline: Optional[Timeline] = None

    @property
    def judgments(self) -> List[RelevanceJudgment]:
        return [j for r in self.results for j in r.judgments]

    @property
    def stories(self) -> List[BackgroundStory]:
        return [r.story for r in self.results if r.story is not None]

    def diagnostics_totals(self) -> Dict[str, int]:
        totals = {'unparsed_lines': 0, 'missing_indices': 0, 'duplicate_indices': 0,
                  'citation_violations': 0, 'story_errors': 0}
        for r in self.results:
            totals['unparsed_lines'] += len(r.diagnostics.unparsed_lines)
            totals['missing_indices'] += len(r.diagnostics.missing_indices)
            totals['duplicate_indices'] += len(r.diagnostics.duplicate_indices)
            totals['citation_violations'] += len(r.diagnostics.citation_violations)
            totals['story_errors'] += r.story_error is not None
        return totals


# ============================================================================
# SETUP
# ============================================================================

def make_client(config: RunConfig, sleep=None) -> LlmClient:
    """Backend + on-disk cache + retry policy from the llm config block."""
    llm = config.llm
    kwargs = {}
    if llm.backend == 'live':
        kwargs = {'base_url': llm.base_url, 'timeout': llm.timeout_s}
    backend = get_backend(llm.backend, **kwargs)
    client_kwargs = {'sleep': sleep} if sleep is not None else {}
    return LlmClient(
        backend,
        ResponseCache(llm.cache_dir),
        max_in_flight=llm.max_in_flight,
        retry=RetryPolicy(max_retries=llm.max_retries),
        **client_kwargs,
    )


def resolve_target(corpus: Sequence[NewsArticle], selector: TargetConfig) -> NewsArticle:
    """
    Pick the target by id, else by url, else the most recent article
    (ties broken by the larger id).
    """
    if not corpus:
        raise ArticleLookupError(['<empty corpus>'])
    if selector.id:
        for article in corpus:
            if article.id == selector.id:
                return article
        raise ArticleLookupError([selector.id])
    if selector.url:
        matches = [a for a in corpus if a.url == selector.url]
        if not matches:
            raise ArticleLookupError([selector.url])
        return max(matches, key=lambda a: (a.published_at, a.id))
    return max(corpus, key=lambda a: (a.published_at, a.id))


def template_for(config: RunConfig, variant: PromptVariant) -> Template:
    path = config.prompting.templates.for_variant(variant)
    return load_template(path) if path is not None else load_default_template(variant)


def build_bundles(target: NewsArticle, corpus_index: Dict[str, NewsArticle],
                  candidates: CandidateSet, variant: PromptVariant,
                  template: Template, budget_tokens: int) -> List[PromptBundle]:
    """Snippets -> budgeted batches -> one rendered bundle per batch."""
    snippets = build_snippets(candidates, corpus_index)
    if not snippets:
        return []
    overhead = template_overhead(target, variant, template)
    batches = chunk_candidates(snippets, budget_tokens, overhead)
    bundles = [render_prompt(target, batch, variant, template) for batch in batches]
    logger.info(f"✓ {len(snippets)} snippets in {len(bundles)} bundle(s) "
                f"(overhead {overhead} tokens, budget {budget_tokens})")
    return bundles


# ============================================================================
# COMPLETION AND PARSING
# ============================================================================

def parse_bundle(bundle: PromptBundle, response: LlmResponse) -> BundleResult:
    """
    Judgments, optional story and merged diagnostics for one response.

    Only ExtendedTask bundles can yield a story.
    """
    judgments, diagnostics = parse_judgments(response.text, bundle)
    story = None
    story_error = None
    if bundle.variant is PromptVariant.EXTENDED_TASK:
        try:
            story = parse_story(response.text, bundle)
        except StoryError as e:
            story_error = str(e)
            logger.warning(f"Bundle {bundle.bundle_id[:8]}: {e}")
    if story is not None:
        diagnostics = diagnostics.merged(validate_story_citations(story, judgments))
    if not diagnostics.is_clean:
        logger.warning(f"Bundle {bundle.bundle_id[:8]}: {len(diagnostics.unparsed_lines)} unparsed line(s), "
                       f"{len(diagnostics.missing_indices)} missing index(es)")
    return BundleResult(bundle, response, judgments, diagnostics, story, story_error)


def complete_bundles(client: LlmClient, bundles: Sequence[PromptBundle], config: RunConfig,
                     progress: bool = True) -> List[BundleResult]:
    """
    Complete every bundle concurrently and parse the responses.

    Returns:
        One BundleResult per bundle, in bundle order
    """
    if not bundles:
        return []

    def request_for(bundle: PromptBundle) -> LlmRequest:
        return LlmRequest(
            model=config.llm.model,
            prompt=bundle.rendered,
            temperature=config.llm.temperature,
            max_output_tokens=config.llm.max_output_tokens,
        )

    responses: List[Optional[LlmResponse]] = [None] * len(bundles)
    with ThreadPoolExecutor(max_workers=config.llm.max_in_flight) as pool:
        futures = {pool.submit(client.complete, request_for(b)): i for i, b in enumerate(bundles)}
        for future in tqdm(as_completed(futures), total=len(futures), desc='Completing bundles',
                           disable=None if progress else True, leave=False):
            responses[futures[future]] = future.result()

    return [parse_bundle(b, r) for b, r in zip(bundles, responses)]


def run_target(config: RunConfig, client: LlmClient, corpus: Sequence[NewsArticle],
               target: NewsArticle, variant: PromptVariant,
               candidates: Optional[CandidateSet] = None, progress: bool = True) -> TargetRun:
    """
    Full pipeline for one target.

    Args:
        config: Run configuration
        client: Completion client
        corpus: All articles
        target: Target article
        variant: Prompt variant
        candidates: Reuse a candidate set (both eval variants share one)
        progress: Show the completion progress bar

    Returns:
        TargetRun with per-bundle results and the assembled timeline
    """
    corpus_index = {a.id: a for a in corpus}
    if candidates is None:
        candidates = select_candidates(target, corpus, config.retrieval)

    template = template_for(config, variant)
    bundles = build_bundles(target, corpus_index, candidates, variant,
                            template, config.prompting.budget_tokens)
    results = complete_bundles(client, bundles, config, progress=progress)

    run = TargetRun(target=target, variant=variant, candidates=candidates, results=results)
    stories = run.stories
    run.timeline = assemble(
        target,
        run.judgments,
        corpus_index,
        story=stories[0] if stories else None,
        variant=variant,
        generated_at=config.output.generated_at,
    )
    logger.info(f"✓ Timeline for {target.id[:8]}: {len(run.timeline.entries)} entries ({variant.value})")
    return run


# ============================================================================
# OUTPUTS
# ============================================================================

def candidates_to_dict(candidates: CandidateSet, params: RetrievalParams) -> dict:
    return {
        'target_id': candidates.target_id,
        'params': params.model_dump(),
        'entries': [{'article_id': cid, 'score': score} for cid, score in candidates.entries],
    }


def bundle_to_record(bundle: PromptBundle) -> dict:
    return {
        'bundle_id': bundle.bundle_id,
        'target_id': bundle.target_id,
        'variant': bundle.variant.value,
        'member_ids': bundle.member_ids,
        'template_id': bundle.template_id,
        'token_estimate': bundle.token_estimate,
        'rendered': bundle.rendered,
    }


def write_run(run: TargetRun, out_dir: Path, formats: Sequence[str], order: str = 'asc') -> Dict[str, Path]:
    """
    Write timeline exports and JSON-lines sidecars into `out_dir`.

    Every file is written atomically.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    written = {}
    for fmt in formats:
        written[fmt] = export(run.timeline, fmt, out_dir / f"timeline{FORMAT_SUFFIXES[fmt]}", order=order)

    written['bundles'] = write_jsonl(out_dir / 'bundles.jsonl',
                                     (bundle_to_record(r.bundle) for r in run.results))
    written['judgments'] = write_jsonl(out_dir / 'judgments.jsonl',
                                       (judgment_to_record(j) for j in run.judgments))
    written['diagnostics'] = write_jsonl(out_dir / 'diagnostics.jsonl', (
        diagnostics_to_record(r.bundle.bundle_id, run.target.id, r.diagnostics, r.story_error)
        for r in run.results
    ))
    written['stories'] = write_jsonl(out_dir / 'stories.jsonl',
                                     (story_to_record(s) for s in run.stories))
    return written


def load_judgments(path: Path) -> List[RelevanceJudgment]:
    """Read a judgments.jsonl file; any malformed line is a consistency error."""
    try:
        lines = Path(path).read_text(encoding='utf-8').splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read judgments file {path}: {e}") from e

    judgments = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            judgments.append(judgment_from_record(json.loads(line)))
        except (ValueError, TypeError) as e:
            raise ConsistencyError(f"{path}: line {line_no} is not a valid judgment ({e})") from e
    return judgments
