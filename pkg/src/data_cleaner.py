"""
Article Normalization Module
============================
Turns raw article fields into a NewsArticle: collapses whitespace, strips
control characters, parses publication dates, derives the source domain
and computes the content id.
"""

import re
import unicodedata
from datetime import date, datetime, timezone
from email.utils import parsedate_to_datetime
from typing import Optional
from urllib.parse import urlsplit

from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .errors import ArticleValidationError, DateParseError
from .io_utils import hex_digest

_ISO_DATE_RE = re.compile(r'^\d{4}-\d{2}-\d{2}$')
_ISO_DATETIME_RE = re.compile(r'^\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}')
_HEX_ID_RE = re.compile(r'^[0-9a-f]{32}$')
_LANG_RE = re.compile(r'^[A-Za-z]{2,3}(-[A-Za-z0-9]{1,8})*$')

# Second-level labels under which registrations happen one level deeper
# (bbc.co.uk, abc.net.au, ...).
_SECOND_LEVEL_LABELS = {'co', 'com', 'net', 'org', 'gov', 'ac', 'edu', 'ne', 'or', 'go'}


class NewsArticle(BaseModel):
    """
    One normalized web news document.

    Plays both the "target" and the "context" role; the role is decided by
    the pipeline, not stored here.
    """

    model_config = ConfigDict(frozen=True)

    id: str
    url: str
    title: str
    body: str = ''
    source: str
    published_at: datetime
    fetched_at: Optional[datetime] = None
    lang: Optional[str] = None

    @field_validator('id')
    @classmethod
    def _check_id(cls, v: str) -> str:
        if not _HEX_ID_RE.match(v):
            raise ValueError('id must be 32 lowercase hex chars')
        return v

    @field_validator('title')
    @classmethod
    def _check_title(cls, v: str) -> str:
        if not v or v != v.strip() or any(unicodedata.category(ch) == 'Cc' for ch in v):
            raise ValueError('title must be non-empty, trimmed and free of control characters')
        return v

    @field_validator('published_at', 'fetched_at')
    @classmethod
    def _check_utc(cls, v: Optional[datetime]) -> Optional[datetime]:
        if v is None:
            return v
        if v.tzinfo is None:
            raise ValueError('datetimes must be timezone-aware')
        return v.astimezone(timezone.utc)

    @model_validator(mode='after')
    def _check_fetch_order(self) -> 'NewsArticle':
        if self.fetched_at is not None and self.published_at > self.fetched_at:
            raise ValueError('published_at must not be later than fetched_at')
        return self

    @property
    def published_date(self) -> date:
        return self.published_at.date()


# ============================================================================
# FIELD CLEANERS
# ============================================================================

def collapse_whitespace(text: str) -> str:
    """Collapse every whitespace run to one space and trim."""
    return ' '.join(text.split())


def clean_title(title: str) -> str:
    """
    Whitespace-collapsed title with control characters removed.

    Examples:
        "  EU \\t AI Act  " -> "EU AI Act"
    """
    text = collapse_whitespace(title)
    text = ''.join(ch for ch in text if unicodedata.category(ch) != 'Cc')
    return collapse_whitespace(text)


def first_tokens(text: str, limit: int) -> str:
    """First `limit` whitespace tokens of `text`, joined by single spaces."""
    return ' '.join(text.split()[:limit])


def parse_datetime(value: str) -> datetime:
    """
    Parse a publication timestamp into an aware UTC datetime.

    Accepted:
        "2023-06-01"                  -> 2023-06-01T00:00:00Z
        "2023-06-01T09:30:00+02:00"   -> 2023-06-01T07:30:00Z (offset required)
        "Thu, 01 Jun 2023 09:30:00 GMT"  (RFC 2822)
    Everything else raises DateParseError.
    """
    if not isinstance(value, str):
        raise DateParseError(str(value))
    text = value.strip()

    try:
        if _ISO_DATE_RE.match(text):
            d = date.fromisoformat(text)
            return datetime(d.year, d.month, d.day, tzinfo=timezone.utc)

        if _ISO_DATETIME_RE.match(text):
            iso = text[:-1] + '+00:00' if text.endswith(('Z', 'z')) else text
            parsed = datetime.fromisoformat(iso)
            if parsed.tzinfo is None:
                raise DateParseError(value)
            return parsed.astimezone(timezone.utc)

        parsed = parsedate_to_datetime(text)
    except DateParseError:
        raise
    except (ValueError, TypeError, IndexError) as e:
        raise DateParseError(value) from e

    if parsed is None:
        raise DateParseError(value)
    if parsed.tzinfo is None:
        # RFC 2822 "-0000" means UTC with unknown local offset
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def registrable_domain(url: str) -> str:
    """
    Lowercased registrable domain of `url`.

    Examples:
        "https://www.reuters.com/world/x" -> "reuters.com"
        "https://news.bbc.co.uk/a"        -> "bbc.co.uk"
    """
    host = (urlsplit(url).hostname or '').lower().rstrip('.')
    labels = [label for label in host.split('.') if label]
    if len(labels) <= 2 or all(label.isdigit() for label in labels):
        return '.'.join(labels)
    if len(labels[-1]) == 2 and labels[-2] in _SECOND_LEVEL_LABELS:
        return '.'.join(labels[-3:])
    return '.'.join(labels[-2:])


def is_language_tag(value: str) -> bool:
    return bool(_LANG_RE.match(value))


def validate_url(url: str) -> str:
    url = (url or '').strip()
    parts = urlsplit(url)
    if not parts.scheme or not parts.netloc:
        raise ArticleValidationError(f"url is not an absolute URI: {url!r}")
    return url


def article_id(url: str, title: str, published_date: date) -> str:
    """
    Content id: SHA-256 over "url\\ntitle\\nYYYY-MM-DD", truncated to 128 bits.

    Inputs must already be normalized; the result is stable across runs
    and platforms.
    """
    canonical = f"{url}\n{title}\n{published_date.isoformat()}"
    return hex_digest(canonical)


# ============================================================================
# NORMALIZATION
# ============================================================================

def normalize_article(url: str, title: str, body: Optional[str], published_at: str,
                      lang: Optional[str] = None,
                      fetched_at: Optional[str] = None) -> NewsArticle:
    """
    Build a NewsArticle from raw fields.

    Args:
        url: Absolute URI of the article
        title: Raw headline
        body: Raw body text (may be empty or None)
        published_at: Date string in one of the accepted formats
        lang: Optional BCP-47 tag
        fetched_at: Optional retrieval timestamp string

    Returns:
        Normalized, immutable NewsArticle
    """
    url = validate_url(url)

    if not isinstance(title, str):
        raise ArticleValidationError('title must be a string')
    title_clean = clean_title(title)
    if not title_clean:
        raise ArticleValidationError(f"empty title after trimming for {url}")

    body_clean = collapse_whitespace(body or '')
    published = parse_datetime(published_at)
    fetched = parse_datetime(fetched_at) if fetched_at else None

    if lang is not None:
        lang = lang.strip() or None
    if lang is not None and not is_language_tag(lang):
        raise ArticleValidationError(f"invalid language tag: {lang!r}")

    if fetched is not None and published > fetched:
        raise ArticleValidationError(
            f"published_at {published.isoformat()} is after fetched_at {fetched.isoformat()}"
        )

    return NewsArticle(
        id=article_id(url, title_clean, published.date()),
        url=url,
        title=title_clean,
        body=body_clean,
        source=registrable_domain(url),
        published_at=published,
        fetched_at=fetched,
        lang=lang,
    )
