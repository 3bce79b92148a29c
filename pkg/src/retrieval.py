"""
Candidate Retrieval Module
==========================
Selects the context candidates for a target article before any model call.

Scoring is a lexical-temporal blend:

    score = w_lex * J + w_rec * exp(-days / halflife)

where J is the Jaccard similarity of the term sets built from the title plus
the first 50 body terms, and days is the whole number of days between the
two publication instants. Defaults: w_lex = 0.7, w_rec = 0.3, halflife 30.
"""

import logging
import math
import re
from typing import Iterable, List, Set, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .data_cleaner import NewsArticle
from .errors import ArticleLookupError, OrderingError

logger = logging.getLogger(__name__)

BODY_PREFIX_TERMS = 50

_SPLIT_RE = re.compile(r'[\W_]+')


class RetrievalParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    window_days: int = Field(default=365, ge=1)
    max_candidates: int = Field(default=20, ge=1)
    halflife_days: float = Field(default=30.0, gt=0)
    lexical_weight: float = Field(default=0.7, ge=0)
    recency_weight: float = Field(default=0.3, ge=0)

    @model_validator(mode='after')
    def _weights_sum_to_one(self) -> 'RetrievalParams':
        if abs(self.lexical_weight + self.recency_weight - 1.0) > 1e-9:
            raise ValueError('lexical_weight + recency_weight must equal 1')
        return self


class CandidateSet(BaseModel):
    """Scored candidates for one target, best first (ties by id ascending)."""

    model_config = ConfigDict(frozen=True)

    target_id: str
    entries: Tuple[Tuple[str, float], ...] = ()

    @model_validator(mode='after')
    def _check_entries(self) -> 'CandidateSet':
        ids = [article_id for article_id, _ in self.entries]
        if self.target_id in ids:
            raise ValueError('candidate set must not contain the target')
        keys = [(-score, article_id) for article_id, score in self.entries]
        if keys != sorted(keys):
            raise ValueError('entries must be sorted by score desc, id asc')
        return self

    @property
    def ids(self) -> List[str]:
        return [article_id for article_id, _ in self.entries]


def tokenize(text: str) -> List[str]:
    """
    Lowercase, split on runs of non-alphanumeric (Unicode) characters, drop
    terms shorter than 2.

    Examples:
        "EU Approves AI Act!" -> ["eu", "approves", "ai", "act"]
        "a b c" -> []
    """
    return [t for t in _SPLIT_RE.split(text.lower()) if len(t) >= 2]


def term_set(article: NewsArticle) -> Set[str]:
    """Terms of the title plus the first 50 body terms."""
    return set(tokenize(article.title)) | set(tokenize(article.body)[:BODY_PREFIX_TERMS])


def jaccard(a: Set[str], b: Set[str]) -> float:
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def days_between(earlier: NewsArticle, later: NewsArticle) -> int:
    """Whole days between two publication instants."""
    return (later.published_at - earlier.published_at).days


def _blend(j: float, days: int, params: RetrievalParams) -> float:
    score = params.lexical_weight * j + params.recency_weight * math.exp(-days / params.halflife_days)
    return min(1.0, max(0.0, score))


def score_candidate(target: NewsArticle, candidate: NewsArticle,
                    params: RetrievalParams) -> float:
    """
    Relevance prior of `candidate` for `target`, in [0, 1].

    Raises OrderingError when the candidate was published after the target.
    """
    if candidate.published_at > target.published_at:
        raise OrderingError(
            f"candidate {candidate.id} ({candidate.published_at.isoformat()}) is later than "
            f"target {target.id} ({target.published_at.isoformat()})"
        )
    j = jaccard(term_set(target), term_set(candidate))
    return _blend(j, days_between(candidate, target), params)


def in_window(target: NewsArticle, candidate: NewsArticle, params: RetrievalParams) -> bool:
    lower = target.published_at.timestamp() - params.window_days * 86400
    ts = candidate.published_at.timestamp()
    return lower <= ts <= target.published_at.timestamp()


def select_candidates(target: NewsArticle, corpus: Iterable[NewsArticle],
                      params: RetrievalParams) -> CandidateSet:
    """
    Score every in-window article and keep the top `max_candidates`.

    Args:
        target: Target article (must be in corpus by id)
        corpus: All articles
        params: Window, cap and decay settings

    Returns:
        CandidateSet ordered by score desc, id asc
    """
    corpus = list(corpus)
    if not any(a.id == target.id for a in corpus):
        raise ArticleLookupError([target.id])

    target_terms = term_set(target)
    scored = []
    seen = set()
    for article in corpus:
        if article.id == target.id or article.id in seen:
            continue
        seen.add(article.id)
        if not in_window(target, article, params):
            continue
        j = jaccard(target_terms, term_set(article))
        scored.append((article.id, _blend(j, days_between(article, target), params)))

    scored.sort(key=lambda entry: (-entry[1], entry[0]))
    top = scored[:params.max_candidates]

    logger.info(f"✓ {len(scored)} in-window candidates for {target.id[:8]}, kept {len(top)}")
    return CandidateSet(target_id=target.id, entries=tuple(top))
