"""
Deterministic Mock Backend
==========================
Answers prompts rendered by src.prompting without any network access.

Rule: context item i is RELEVANT iff its title shares at least two terms
(src.retrieval.tokenize, as sets) with the target title. The same rule is
used to derive synthetic gold labels, so an end-to-end run scored against
mock gold must reach F1 = 1.0 unless parsing or assembly is broken.
"""

import re
from typing import List, Tuple

from ..errors import MockError
from ..prompting import EXTENDED_HEADER, STORY_MARKER
from ..retrieval import tokenize
from .base import LlmRequest, LlmResponse

MIN_SHARED_TERMS = 2

TARGET_HEADER = '## Target News'
CONTEXT_HEADER = '## Context News'

_TITLE_RE = re.compile(r'^Title:\s?(.*)$')
_ITEM_RE = re.compile(r'^(\d+)\.\s+\[(\d{4}-\d{2}-\d{2})\]\s+(.*)$')


def shared_terms(title_a: str, title_b: str) -> int:
    return len(set(tokenize(title_a)) & set(tokenize(title_b)))


def is_relevant_by_shared_terms(target_title: str, context_title: str) -> bool:
    return shared_terms(target_title, context_title) >= MIN_SHARED_TERMS


def _section(lines: List[str], header: str) -> List[str]:
    try:
        start = next(i for i, line in enumerate(lines) if line.strip() == header)
    except StopIteration:
        raise MockError(f"prompt has no '{header}' section")
    body = []
    for line in lines[start + 1:]:
        if line.startswith('## '):
            break
        body.append(line)
    return body


def parse_prompt(prompt: str) -> Tuple[str, List[Tuple[int, str, str]]]:
    """Extract (target_title, [(index, date, title), ...]) from a rendered prompt."""
    lines = prompt.splitlines()

    target_title = None
    for line in _section(lines, TARGET_HEADER):
        m = _TITLE_RE.match(line)
        if m:
            target_title = m.group(1).strip()
            break
    if not target_title:
        raise MockError("target section has no 'Title:' line")

    items = []
    for line in _section(lines, CONTEXT_HEADER):
        m = _ITEM_RE.match(line)
        if m:
            items.append((int(m.group(1)), m.group(2), m.group(3).strip()))
    if not items:
        raise MockError('context section lists no numbered items')

    return target_title, items


def mock_complete(request: LlmRequest) -> LlmResponse:
    """
    Deterministic answer in the exact label-line format, plus a background
    story citing every RELEVANT item when the prompt has an "## Extended Task"
    section.
    """
    target_title, items = parse_prompt(request.prompt)

    lines = []
    relevant = []
    for index, date, title in items:
        k = shared_terms(target_title, title)
        label = 'RELEVANT' if k >= MIN_SHARED_TERMS else 'IRRELEVANT'
        if label == 'RELEVANT':
            relevant.append((index, date, title))
        lines.append(f"{index}. {label} - shared terms: {k}")

    if any(line.strip() == EXTENDED_HEADER for line in request.prompt.splitlines()):
        lines.append('')
        lines.append(STORY_MARKER)
        if relevant:
            for index, date, title in relevant:
                safe_title = title.replace('[', '(').replace(']', ')')
                lines.append(f"On {date}, {safe_title} [{index}].")
        else:
            lines.append('None of the context items were judged relevant to the target news.')

    return LlmResponse(text='\n'.join(lines) + '\n', backend='mock', cached=False, latency_ms=0)


class MockBackend:
    """Backend adapter around mock_complete."""

    name = 'mock'

    def generate(self, request: LlmRequest) -> str:
        return mock_complete(request).text
