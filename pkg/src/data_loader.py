"""
Corpus Loading Module
=====================
Reads and writes the JSON-lines corpus and summarizes it.

Corpus schema (one UTF-8 JSON object per line):
    required: url, title, published_at (strings)
    optional: body, lang, fetched_at
Unknown keys (including a stored "id") are ignored; ids are recomputed.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple, Union

import pandas as pd

from .data_cleaner import NewsArticle, normalize_article
from .errors import CorpusIOError, CorpusParseError, InputError
from .io_utils import write_jsonl

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ('url', 'title', 'published_at')


@dataclass
class CorpusDiagnostics:
    """Sidecar counts for one load."""

    loaded: int = 0
    duplicates: int = 0
    duplicate_ids: List[str] = field(default_factory=list)
    rejected: List[Tuple[int, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            'loaded': self.loaded,
            'duplicates': self.duplicates,
            'duplicate_ids': list(self.duplicate_ids),
            'rejected': [{'line': n, 'reason': r} for n, r in self.rejected],
        }


def _parse_line(line: str, line_no: int) -> NewsArticle:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise CorpusParseError(line_no, f"invalid JSON ({e.msg})") from e

    if not isinstance(record, dict):
        raise CorpusParseError(line_no, 'not a JSON object')

    missing = [k for k in REQUIRED_KEYS if not isinstance(record.get(k), str)]
    if missing:
        raise CorpusParseError(line_no, f"missing required field(s): {', '.join(missing)}")

    body = record.get('body')
    lang = record.get('lang')
    fetched_at = record.get('fetched_at')
    try:
        return normalize_article(
            url=record['url'],
            title=record['title'],
            body=body if isinstance(body, str) else None,
            published_at=record['published_at'],
            lang=lang if isinstance(lang, str) else None,
            fetched_at=fetched_at if isinstance(fetched_at, str) else None,
        )
    except InputError as e:
        raise CorpusParseError(line_no, str(e)) from e


def load_corpus_with_diagnostics(path: Union[str, Path],
                                 strict: bool = True) -> Tuple[List[NewsArticle], CorpusDiagnostics]:
    """
    Load a JSON-lines corpus.

    Args:
        path: Corpus file
        strict: Raise on the first bad line; otherwise record it as rejected

    Returns:
        (articles in file order with duplicate ids dropped keep-first, diagnostics)
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise CorpusIOError(f"cannot read corpus {path}: {e}") from e

    try:
        text = raw.decode('utf-8')
    except UnicodeDecodeError as e:
        raise CorpusIOError(f"corpus {path} is not valid UTF-8: {e}") from e

    articles: List[NewsArticle] = []
    seen = set()
    diagnostics = CorpusDiagnostics()

    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            article = _parse_line(line, line_no)
        except CorpusParseError as e:
            if strict:
                raise
            diagnostics.rejected.append((line_no, e.reason))
            continue

        if article.id in seen:
            diagnostics.duplicates += 1
            diagnostics.duplicate_ids.append(article.id)
            continue
        seen.add(article.id)
        articles.append(article)

    diagnostics.loaded = len(articles)
    logger.info(f"✓ Loaded {len(articles):,} articles from {path.name} "
                f"({diagnostics.duplicates} duplicates, {len(diagnostics.rejected)} rejected)")
    return articles, diagnostics


def load_corpus(path: Union[str, Path]) -> List[NewsArticle]:
    """Load a corpus strictly; see load_corpus_with_diagnostics."""
    articles, _ = load_corpus_with_diagnostics(path, strict=True)
    return articles


def article_to_record(article: NewsArticle) -> dict:
    record = {
        'id': article.id,
        'url': article.url,
        'title': article.title,
        'body': article.body,
        'source': article.source,
        'published_at': article.published_at.isoformat(),
    }
    if article.fetched_at is not None:
        record['fetched_at'] = article.fetched_at.isoformat()
    if article.lang is not None:
        record['lang'] = article.lang
    return record


def export_corpus(articles: List[NewsArticle], path: Union[str, Path]) -> Path:
    """Write articles as a normalized JSON-lines corpus (atomic)."""
    out = write_jsonl(path, (article_to_record(a) for a in articles))
    logger.info(f"✓ Wrote {len(articles):,} articles to {out}")
    return out


def summarize_corpus(articles: List[NewsArticle]) -> dict:
    """
    Generate a summary of the corpus.

    Returns:
        Dictionary with article count, date range and per-source counts
    """
    if not articles:
        return {'total_articles': 0, 'sources': {}, 'date_range': None}

    df = pd.DataFrame({
        'source': [a.source for a in articles],
        'published_at': [a.published_at for a in articles],
        'body_tokens': [len(a.body.split()) for a in articles],
    })

    return {
        'total_articles': len(df),
        'sources': df['source'].value_counts().sort_index().to_dict(),
        'date_range': {
            'min': df['published_at'].min().date().isoformat(),
            'max': df['published_at'].max().date().isoformat(),
        },
        'mean_body_tokens': float(df['body_tokens'].mean()),
    }
