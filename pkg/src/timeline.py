"""
Timeline Assembly and Export
============================
Builds the final timeline (relevant context articles plus the target) and
writes it as JSON, Markdown or a static HTML page. Exports are byte-
deterministic for equal timelines.
"""

import html
import json
import logging
from datetime import date, datetime
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

from pydantic import BaseModel, ConfigDict, model_validator

from .data_cleaner import NewsArticle, collapse_whitespace, first_tokens
from .errors import ArticleLookupError, ConflictError, InputError
from .io_utils import atomic_write_text
from .parsing import BackgroundStory, Label, RelevanceJudgment
from .prompting import EXCERPT_TOKENS, PromptVariant

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 'v1'
EXPORT_FORMATS = ('json', 'markdown', 'html')
FORMAT_SUFFIXES = {'json': '.json', 'markdown': '.md', 'html': '.html'}


class TimelineEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    article_id: str
    date: date
    headline: str
    excerpt: str = ''
    is_target: bool = False


class Timeline(BaseModel):
    model_config = ConfigDict(frozen=True)

    target_id: str
    entries: tuple[TimelineEntry, ...]
    generated_at: datetime
    variant: PromptVariant
    story: Optional[BackgroundStory] = None

    @model_validator(mode='after')
    def _check_invariants(self) -> 'Timeline':
        targets = [e for e in self.entries if e.is_target]
        if len(targets) != 1 or targets[0].article_id != self.target_id:
            raise ValueError('timeline needs exactly one target entry matching target_id')
        ids = [e.article_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError('timeline entry ids must be unique')
        keys = [(e.date, e.article_id) for e in self.entries]
        if keys != sorted(keys):
            raise ValueError('timeline entries must be sorted by date, then id')
        if any(e.date > targets[0].date for e in self.entries):
            raise ValueError('no entry may be later than the target')
        return self

    @property
    def target_entry(self) -> TimelineEntry:
        return next(e for e in self.entries if e.is_target)


def _entry(article: NewsArticle, is_target: bool) -> TimelineEntry:
    return TimelineEntry(
        article_id=article.id,
        date=article.published_date,
        headline=article.title,
        excerpt=first_tokens(article.body, EXCERPT_TOKENS),
        is_target=is_target,
    )


def _dedup_key(entry: TimelineEntry) -> tuple:
    return entry.date, collapse_whitespace(entry.headline).casefold()


def assemble(target: NewsArticle, judgments: Iterable[RelevanceJudgment],
             corpus: Union[Sequence[NewsArticle], Dict[str, NewsArticle]],
             story: Optional[BackgroundStory] = None,
             variant: PromptVariant = PromptVariant.EXTENDED_TASK,
             generated_at: Optional[datetime] = None) -> Timeline:
    """
    Assemble the timeline for `target` from relevance judgments.

    Args:
        target: Target article (always the anchor entry)
        judgments: Judgments from every bundle of this target
        corpus: Articles, as a list or an id -> article mapping
        story: Optional background story, attached verbatim
        variant: Prompt variant that produced the judgments
        generated_at: Timestamp recorded in exports (defaults to the target's publication time)

    Returns:
        Timeline sorted by date, then article id
    """
    index = corpus if isinstance(corpus, dict) else {a.id: a for a in corpus}

    labels: Dict[str, Label] = {}
    conflicts = set()
    for j in judgments:
        if j.target_id != target.id:
            raise InputError(f"judgment for target {j.target_id} passed to timeline of {target.id}")
        previous = labels.setdefault(j.context_id, j.label)
        if previous is not j.label:
            conflicts.add(j.context_id)
    if conflicts:
        raise ConflictError(conflicts)

    relevant_ids = sorted(cid for cid, label in labels.items() if label is Label.RELEVANT)
    unresolved = [cid for cid in relevant_ids if cid not in index]
    if unresolved:
        raise ArticleLookupError(unresolved)

    target_entry = _entry(target, is_target=True)
    kept: Dict[tuple, TimelineEntry] = {}
    for cid in relevant_ids:
        if cid == target.id:
            continue
        entry = _entry(index[cid], is_target=False)
        key = _dedup_key(entry)
        if key == _dedup_key(target_entry):
            continue
        # relevant_ids is ascending, so the first entry per key has the smaller id
        kept.setdefault(key, entry)

    entries = sorted([target_entry, *kept.values()], key=lambda e: (e.date, e.article_id))
    dropped = len(relevant_ids) - (len(entries) - 1)
    if dropped:
        logger.info(f"  ✓ Merged {dropped} same-day duplicate headline(s)")

    return Timeline(
        target_id=target.id,
        entries=tuple(entries),
        generated_at=generated_at or target.published_at,
        variant=variant,
        story=story,
    )


# ============================================================================
# EXPORT
# ============================================================================

def timeline_to_dict(timeline: Timeline) -> dict:
    story = None
    if timeline.story is not None:
        story = {
            'target_id': timeline.story.target_id,
            'bundle_id': timeline.story.bundle_id,
            'text': timeline.story.text,
            'cited_indices': sorted(timeline.story.cited_indices),
        }
    return {
        'schema_version': SCHEMA_VERSION,
        'target_id': timeline.target_id,
        'generated_at': timeline.generated_at.isoformat(),
        'variant': timeline.variant.value,
        'entries': [
            {
                'article_id': e.article_id,
                'date': e.date.isoformat(),
                'headline': e.headline,
                'excerpt': e.excerpt,
                'is_target': e.is_target,
            }
            for e in timeline.entries
        ],
        'story': story,
    }


def render_json(timeline: Timeline) -> str:
    return json.dumps(timeline_to_dict(timeline), sort_keys=True, indent=2, ensure_ascii=False) + '\n'


def _ordered(timeline: Timeline, order: str) -> List[TimelineEntry]:
    if order not in ('asc', 'desc'):
        raise ValueError(f"order must be 'asc' or 'desc', got {order!r}")
    entries = list(timeline.entries)
    return entries[::-1] if order == 'desc' else entries


def render_markdown(timeline: Timeline, order: str = 'asc') -> str:
    lines = [f"# Timeline: {timeline.target_entry.headline}", '']
    for e in _ordered(timeline, order):
        lines.append(f"- **{e.date.isoformat()}** — {e.headline}")
    if timeline.story is not None:
        lines += ['', '## Background', '', timeline.story.text]
    return '\n'.join(lines) + '\n'


_HTML_STYLE = """body{font-family:Georgia,serif;max-width:46rem;margin:2rem auto;padding:0 1rem;color:#1f2933;background:#fbfaf7}
h1{font-size:1.6rem;border-bottom:2px solid #d9d4c7;padding-bottom:.4rem}
ol.timeline{list-style:none;padding:0;border-left:3px solid #c7b98f}
ol.timeline li{margin:0 0 1.1rem 0;padding-left:1rem}
ol.timeline li.target{font-weight:bold}
time{display:block;font-family:monospace;color:#6b5e3c}
p.excerpt{margin:.2rem 0 0;font-weight:normal;color:#52606d}
section.background{margin-top:2rem;white-space:pre-wrap}"""


def render_html(timeline: Timeline, order: str = 'asc') -> str:
    esc = html.escape
    headline = esc(timeline.target_entry.headline)
    items = []
    for e in _ordered(timeline, order):
        css = ' class="target"' if e.is_target else ''
        excerpt = f'\n    <p class="excerpt">{esc(e.excerpt)}</p>' if e.excerpt else ''
        items.append(
            f'  <li{css} id="a-{e.article_id}">\n'
            f'    <time datetime="{e.date.isoformat()}">{e.date.isoformat()}</time>\n'
            f'    {esc(e.headline)}{excerpt}\n'
            f'  </li>'
        )
    background = ''
    if timeline.story is not None:
        background = (f'<section class="background">\n<h2>Background</h2>\n'
                      f'<p>{esc(timeline.story.text)}</p>\n</section>\n')

    return (
        '<!DOCTYPE html>\n'
        '<html lang="en">\n<head>\n<meta charset="utf-8">\n'
        f'<title>Timeline: {headline}</title>\n'
        f'<style>\n{_HTML_STYLE}\n</style>\n</head>\n<body>\n'
        f'<h1>Timeline: {headline}</h1>\n'
        f'<ol class="timeline">\n' + '\n'.join(items) + '\n</ol>\n'
        + background +
        '</body>\n</html>\n'
    )


def export(timeline: Timeline, format: str, path: Union[str, Path], order: str = 'asc') -> Path:
    """
    Write `timeline` atomically in one of json, markdown or html.

    JSON is always chronological; `order` only affects markdown and html.
    """
    if format == 'json':
        text = render_json(timeline)
    elif format == 'markdown':
        text = render_markdown(timeline, order)
    elif format == 'html':
        text = render_html(timeline, order)
    else:
        raise ValueError(f"Unknown format: {format}. Choose from {list(EXPORT_FORMATS)}")

    out = atomic_write_text(path, text)
    logger.info(f"  ✓ Saved: {out}")
    return out


def load_timeline(path: Union[str, Path]) -> Timeline:
    """Reload a JSON export."""
    data = json.loads(Path(path).read_text(encoding='utf-8'))
    if data.get('schema_version') != SCHEMA_VERSION:
        raise InputError(f"unsupported timeline schema: {data.get('schema_version')!r}")
    data = {k: v for k, v in data.items() if k != 'schema_version'}
    return Timeline.model_validate(data)
