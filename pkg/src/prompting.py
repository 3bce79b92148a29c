"""
Prompt Rendering Module
=======================
Renders the two prompt variants over token-budgeted batches of context
snippets:

    BaselineOnly  - target task only (label every context item)
    ExtendedTask  - target task plus the background-story task

Templates are UTF-8 text files with double-brace placeholders. The output
format the model is asked for (numbered RELEVANT/IRRELEVANT lines, then a
"Background Story:" marker line) is what src.parsing reads back.
"""

import logging
import math
import re
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .data_cleaner import NewsArticle, first_tokens
from .errors import BudgetError, TemplateError
from .io_utils import canonical_json, hex_digest
from .retrieval import CandidateSet

logger = logging.getLogger(__name__)

TEMPLATES_DIR = Path(__file__).parent / 'templates'

EXCERPT_TOKENS = 60
DEFAULT_BUDGET_TOKENS = 3000
STORY_MARKER = 'Background Story:'
STORY_MARKER_ESCAPED = 'Background Story -'
EXTENDED_HEADER = '## Extended Task'

PLACEHOLDERS = frozenset({
    'target_title', 'target_date', 'target_excerpt',
    'context_list', 'task_instructions', 'extended_instructions',
})
REQUIRED_PLACEHOLDERS = frozenset({'target_title', 'target_date', 'context_list', 'task_instructions'})

_PLACEHOLDER_RE = re.compile(r'\{\{\s*([^{}]*?)\s*\}\}')

TARGET_TASK_BLOCK = """## Task
For each numbered item under "Context News", decide whether it is RELEVANT or IRRELEVANT to the Target News. An item is RELEVANT when it reports an earlier development that helps explain the background of the Target News; otherwise it is IRRELEVANT.
Answer with exactly one line per item, in item order, using this format:
<index>. <LABEL> - <one-sentence rationale>
where <LABEL> is either RELEVANT or IRRELEVANT. Do not skip any item and do not use any other label."""

EXTENDED_TASK_BLOCK = f"""{EXTENDED_HEADER}
After the label lines, write a line containing exactly:
{STORY_MARKER}
Below that line, write a short background story for the Target News using only the relevant Context News identified in the task above (the items you labeled RELEVANT). Cite every item you draw on by its index in square brackets, for example [2]. Do not cite items you labeled IRRELEVANT."""


class PromptVariant(str, Enum):
    BASELINE_ONLY = 'baseline'
    EXTENDED_TASK = 'extended'


class ContextSnippet(BaseModel):
    """One context article as shown to the model."""

    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=1)
    article_id: str
    date: str
    title: str
    excerpt: str = ''

    @model_validator(mode='after')
    def _check_excerpt(self) -> 'ContextSnippet':
        if len(self.excerpt.split()) > EXCERPT_TOKENS:
            raise ValueError(f'excerpt longer than {EXCERPT_TOKENS} tokens')
        return self


class Template(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    text: str
    placeholders: FrozenSet[str]
    template_id: str


class PromptBundle(BaseModel):
    """One rendered prompt: the unit sent per model call."""

    model_config = ConfigDict(frozen=True)

    bundle_id: str
    target_id: str
    variant: PromptVariant
    snippets: tuple[ContextSnippet, ...]
    template_id: str
    rendered: str
    token_estimate: int = Field(ge=0)

    @property
    def member_ids(self) -> List[str]:
        return [s.article_id for s in self.snippets]

    def snippet_at(self, index: int) -> ContextSnippet:
        return self.snippets[index - 1]


# ============================================================================
# TOKENS AND BATCHING
# ============================================================================

def estimate_tokens(text: str) -> int:
    """ceil(characters / 4), counting Unicode scalar values."""
    return math.ceil(len(text) / 4)


def escape_marker(text: str) -> str:
    """Article text must never carry the story marker into a prompt."""
    return text.replace(STORY_MARKER, STORY_MARKER_ESCAPED)


def render_snippet(snippet: ContextSnippet) -> str:
    """Context-list entry for one snippet (two lines)."""
    excerpt_line = f"   Excerpt: {escape_marker(snippet.excerpt)}".rstrip()
    return f"{snippet.index}. [{snippet.date}] {escape_marker(snippet.title)}\n{excerpt_line}"


def snippet_tokens(snippet: ContextSnippet) -> int:
    return estimate_tokens(render_snippet(snippet) + '\n')


def build_snippets(candidates: CandidateSet, corpus_index: Dict[str, NewsArticle]) -> List[ContextSnippet]:
    """ContextSnippets in candidate order, indexed 1..n."""
    snippets = []
    for i, article_id in enumerate(candidates.ids, start=1):
        article = corpus_index[article_id]
        snippets.append(ContextSnippet(
            index=i,
            article_id=article.id,
            date=article.published_date.isoformat(),
            title=article.title,
            excerpt=first_tokens(article.body, EXCERPT_TOKENS),
        ))
    return snippets


def chunk_candidates(snippets: Sequence[ContextSnippet], budget_tokens: int,
                     overhead_tokens: int,
                     estimator: Callable[[ContextSnippet], int] = snippet_tokens) -> List[List[ContextSnippet]]:
    """
    Greedy first-fit batching in input order.

    A new batch starts whenever the next snippet would push
    overhead + sum(estimates) over the budget. Indices are reassigned
    1..k within each batch.

    Examples:
        estimates [30, 30, 30, 30], overhead 10, budget 100 -> sizes [3, 1]
    """
    if budget_tokens < 1:
        raise ValueError('budget_tokens must be positive')
    if overhead_tokens < 0:
        raise ValueError('overhead_tokens must be non-negative')

    batches: List[List[ContextSnippet]] = []
    current: List[ContextSnippet] = []
    used = overhead_tokens

    for snippet in snippets:
        cost = estimator(snippet)
        if overhead_tokens + cost > budget_tokens:
            raise BudgetError(snippet.article_id, overhead_tokens + cost, budget_tokens)
        if current and used + cost > budget_tokens:
            batches.append(current)
            current = []
            used = overhead_tokens
        current.append(snippet)
        used += cost

    if current:
        batches.append(current)

    return [
        [s.model_copy(update={'index': i}) for i, s in enumerate(batch, start=1)]
        for batch in batches
    ]


# ============================================================================
# TEMPLATES
# ============================================================================

def parse_template(text: str, name: str, template_id: Optional[str] = None) -> Template:
    found = set(_PLACEHOLDER_RE.findall(text))
    unknown = sorted(found - PLACEHOLDERS)
    if unknown:
        raise TemplateError(f"unknown placeholder in {name}: {unknown[0]}", placeholder=unknown[0])
    return Template(
        name=name,
        text=text,
        placeholders=frozenset(found),
        template_id=template_id or hex_digest(text),
    )


def load_template(path: Union[str, Path]) -> Template:
    """
    Load a prompt template; template_id is the digest of the file bytes.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise TemplateError(f"cannot read template {path}: {e}") from e
    try:
        text = data.decode('utf-8')
    except UnicodeDecodeError as e:
        raise TemplateError(f"template {path} is not valid UTF-8") from e
    return parse_template(text, name=path.name, template_id=hex_digest(data))


def default_template_path(variant: PromptVariant) -> Path:
    return TEMPLATES_DIR / f"{variant.value}.tmpl"


def load_default_template(variant: PromptVariant) -> Template:
    return load_template(default_template_path(variant))


# ============================================================================
# RENDERING
# ============================================================================

def _check_placeholders(template: Template, variant: PromptVariant) -> None:
    required = set(REQUIRED_PLACEHOLDERS)
    if variant is PromptVariant.EXTENDED_TASK:
        required.add('extended_instructions')
    missing = sorted(required - template.placeholders)
    if missing:
        raise TemplateError(
            f"template {template.name} is missing placeholder: {missing[0]}",
            placeholder=missing[0],
        )


def render_text(target: NewsArticle, batch: Sequence[ContextSnippet],
                variant: PromptVariant, template: Template) -> str:
    """Fill the template; an empty batch yields the fixed overhead text."""
    _check_placeholders(template, variant)

    values = {
        'target_title': escape_marker(target.title),
        'target_date': target.published_date.isoformat(),
        'target_excerpt': escape_marker(first_tokens(target.body, EXCERPT_TOKENS)),
        'context_list': '\n'.join(render_snippet(s) for s in batch),
        'task_instructions': TARGET_TASK_BLOCK,
        'extended_instructions': EXTENDED_TASK_BLOCK if variant is PromptVariant.EXTENDED_TASK else '',
    }
    return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], template.text)


def template_overhead(target: NewsArticle, variant: PromptVariant, template: Template) -> int:
    """Token estimate of the template rendered with zero snippets."""
    return estimate_tokens(render_text(target, [], variant, template))


def bundle_digest(target_id: str, variant: PromptVariant, member_ids: Sequence[str],
                  template_id: str) -> str:
    return hex_digest(canonical_json([target_id, variant.value, list(member_ids), template_id]))


def render_prompt(target: NewsArticle, batch: Sequence[ContextSnippet],
                  variant: PromptVariant, template: Template) -> PromptBundle:
    """
    Render one prompt over a non-empty batch.

    Args:
        target: Target article
        batch: Snippets indexed 1..n
        variant: BaselineOnly or ExtendedTask
        template: Parsed template

    Returns:
        PromptBundle with its deterministic bundle_id
    """
    if not batch:
        raise ValueError('cannot render a prompt over an empty batch')
    indices = [s.index for s in batch]
    if indices != list(range(1, len(batch) + 1)):
        raise ValueError(f'snippet indices must be 1..{len(batch)}, got {indices}')

    rendered = render_text(target, batch, variant, template)
    member_ids = [s.article_id for s in batch]

    return PromptBundle(
        bundle_id=bundle_digest(target.id, variant, member_ids, template.template_id),
        target_id=target.id,
        variant=variant,
        snippets=tuple(batch),
        template_id=template.template_id,
        rendered=rendered,
        token_estimate=estimate_tokens(rendered),
    )
