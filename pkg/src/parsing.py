"""
Response Parsing Module
=======================
Turns completion text back into RelevanceJudgments and a BackgroundStory.

Parsing never fails on arbitrary text: every bundle snippet gets exactly one
judgment, and anything that could not be read lands in ParseDiagnostics.
Indices the model skipped or garbled default to Irrelevant so silence never
admits an article into the timeline.
"""

import re
from enum import Enum
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field

from .errors import BundleMismatchError, StoryError
from .prompting import STORY_MARKER, PromptBundle

UNPARSED_DEFAULT = 'unparsed-default'

_SEP = r'[.):\-]'
_JUDGMENT_RE = re.compile(
    rf'^\s*(\d{{1,9}})\s*{_SEP}\s*(RELEVANT|IRRELEVANT)\b(?:\s*{_SEP}\s*(.*?))?\s*$',
    re.IGNORECASE,
)
_INDEX_PREFIX_RE = re.compile(rf'^\s*(\d{{1,9}})\s*{_SEP}')
_CITATION_RE = re.compile(r'\[(\d{1,9})\]')


class Label(str, Enum):
    RELEVANT = 'relevant'
    IRRELEVANT = 'irrelevant'


class RelevanceJudgment(BaseModel):
    model_config = ConfigDict(frozen=True)

    target_id: str
    context_id: str
    label: Label
    rationale: Optional[str] = None
    source_index: int = Field(ge=1)
    bundle_id: str

    @property
    def is_default(self) -> bool:
        return self.rationale == UNPARSED_DEFAULT


class BackgroundStory(BaseModel):
    model_config = ConfigDict(frozen=True)

    target_id: str
    text: str = Field(min_length=1)
    cited_indices: FrozenSet[int] = frozenset()
    bundle_id: str


class ParseDiagnostics(BaseModel):
    model_config = ConfigDict(frozen=True)

    unparsed_lines: Tuple[Tuple[int, str], ...] = ()
    missing_indices: FrozenSet[int] = frozenset()
    duplicate_indices: FrozenSet[int] = frozenset()
    citation_violations: FrozenSet[int] = frozenset()

    @property
    def is_clean(self) -> bool:
        return not (self.unparsed_lines or self.missing_indices
                    or self.duplicate_indices or self.citation_violations)

    def merged(self, other: 'ParseDiagnostics') -> 'ParseDiagnostics':
        return ParseDiagnostics(
            unparsed_lines=self.unparsed_lines + other.unparsed_lines,
            missing_indices=self.missing_indices | other.missing_indices,
            duplicate_indices=self.duplicate_indices | other.duplicate_indices,
            citation_violations=self.citation_violations | other.citation_violations,
        )


def _split_regions(response_text: str) -> Tuple[List[str], Optional[List[str]]]:
    """Lines before the story marker, and lines after it (None when absent)."""
    lines = response_text.splitlines()
    for i, line in enumerate(lines):
        if line.strip() == STORY_MARKER:
            return lines[:i], lines[i + 1:]
    return lines, None


def parse_judgments(response_text: str,
                    bundle: PromptBundle) -> Tuple[List[RelevanceJudgment], ParseDiagnostics]:
    """
    Read "<index> <sep> <LABEL> [<sep> rationale]" lines before the story marker.

    Returns:
        (one judgment per snippet ordered by index, diagnostics)
    """
    n = len(bundle.snippets)
    label_region, _ = _split_regions(response_text)

    found = {}
    mentioned = set()
    unparsed = []
    duplicates = set()

    for line_no, line in enumerate(label_region, start=1):
        if not line.strip():
            continue

        m = _JUDGMENT_RE.match(line)
        if m is None:
            unparsed.append((line_no, line))
            prefix = _INDEX_PREFIX_RE.match(line)
            if prefix is not None and 1 <= int(prefix.group(1)) <= n:
                mentioned.add(int(prefix.group(1)))
            continue

        index = int(m.group(1))
        if not 1 <= index <= n:
            unparsed.append((line_no, line))
            continue

        mentioned.add(index)
        if index in found:
            duplicates.add(index)
            continue

        label = Label.RELEVANT if m.group(2).upper() == 'RELEVANT' else Label.IRRELEVANT
        rationale = (m.group(3) or '').strip() or None
        found[index] = (label, rationale)

    judgments = []
    for index in range(1, n + 1):
        label, rationale = found.get(index, (Label.IRRELEVANT, UNPARSED_DEFAULT))
        judgments.append(RelevanceJudgment(
            target_id=bundle.target_id,
            context_id=bundle.snippet_at(index).article_id,
            label=label,
            rationale=rationale,
            source_index=index,
            bundle_id=bundle.bundle_id,
        ))

    diagnostics = ParseDiagnostics(
        unparsed_lines=tuple(unparsed),
        missing_indices=frozenset(set(range(1, n + 1)) - mentioned),
        duplicate_indices=frozenset(duplicates),
    )
    return judgments, diagnostics


def parse_story(response_text: str, bundle: PromptBundle) -> Optional[BackgroundStory]:
    """
    Text after the "Background Story:" marker line, or None without a marker.

    Raises StoryError when the marker is present but nothing follows it.
    """
    _, story_region = _split_regions(response_text)
    if story_region is None:
        return None

    text = '\n'.join(story_region).strip()
    if not text:
        raise StoryError(f"empty background story in bundle {bundle.bundle_id}")

    cited = frozenset(int(k) for k in _CITATION_RE.findall(text))
    return BackgroundStory(
        target_id=bundle.target_id,
        text=text,
        cited_indices=cited,
        bundle_id=bundle.bundle_id,
    )


def validate_story_citations(story: BackgroundStory,
                             judgments: Sequence[RelevanceJudgment]) -> ParseDiagnostics:
    """Citations of items the judgments did not label Relevant."""
    mismatched = {j.bundle_id for j in judgments if j.bundle_id != story.bundle_id}
    if mismatched:
        raise BundleMismatchError(
            f"story bundle {story.bundle_id} checked against judgments of {sorted(mismatched)}"
        )
    relevant = {j.source_index for j in judgments if j.label is Label.RELEVANT}
    return ParseDiagnostics(citation_violations=frozenset(story.cited_indices - relevant))


def parser_failure_rate(judgments: Iterable[RelevanceJudgment]) -> float:
    """Share of judgments that had to be defaulted."""
    judgments = list(judgments)
    if not judgments:
        return 0.0
    return sum(j.is_default for j in judgments) / len(judgments)


# ============================================================================
# JSON-LINES RECORDS
# ============================================================================

def judgment_to_record(judgment: RelevanceJudgment) -> dict:
    return {
        'target_id': judgment.target_id,
        'context_id': judgment.context_id,
        'label': judgment.label.value,
        'rationale': judgment.rationale,
        'source_index': judgment.source_index,
        'bundle_id': judgment.bundle_id,
    }


def judgment_from_record(record: dict) -> RelevanceJudgment:
    return RelevanceJudgment.model_validate(record)


def diagnostics_to_record(bundle_id: str, target_id: str, diagnostics: ParseDiagnostics,
                          story_error: Optional[str] = None) -> dict:
    record = {
        'bundle_id': bundle_id,
        'target_id': target_id,
        'unparsed_lines': [[n, text] for n, text in diagnostics.unparsed_lines],
        'missing_indices': sorted(diagnostics.missing_indices),
        'duplicate_indices': sorted(diagnostics.duplicate_indices),
        'citation_violations': sorted(diagnostics.citation_violations),
    }
    if story_error is not None:
        record['story_error'] = story_error
    return record


def story_to_record(story: BackgroundStory) -> dict:
    return {
        'target_id': story.target_id,
        'bundle_id': story.bundle_id,
        'text': story.text,
        'cited_indices': sorted(story.cited_indices),
    }
