"""
Web Fetch and Extraction Module
===============================
Single-URL fetch with a redirect cap and timeout, plus the paragraph-length
boilerplate heuristic that turns an HTML page into (title, body).
"""

import logging
from datetime import datetime, timezone
from typing import Optional, Tuple

import httpx
from bs4 import BeautifulSoup
from pydantic import BaseModel, ConfigDict, field_validator

from .data_cleaner import (NewsArticle, collapse_whitespace, is_language_tag,
                           normalize_article, parse_datetime)
from .errors import DateParseError, ExtractionError, FetchError, RedirectError

logger = logging.getLogger(__name__)

MAX_REDIRECTS = 5
DEFAULT_TIMEOUT_S = 20.0
MIN_PARAGRAPH_CHARS = 40
USER_AGENT = 'chronoweave/1.0 (+news timeline builder)'
HTML_TYPES = ('text/html', 'application/xhtml+xml')

_DATE_META = (
    {'property': 'article:published_time'},
    {'name': 'article:published_time'},
    {'itemprop': 'datePublished'},
    {'name': 'pubdate'},
    {'name': 'date'},
)


class RawDocument(BaseModel):
    """Response payload of one fetch."""

    model_config = ConfigDict(frozen=True)

    url: str
    content_type: str
    bytes: bytes
    retrieved_at: datetime

    @field_validator('bytes')
    @classmethod
    def _non_empty(cls, v: bytes) -> bytes:
        if len(v) == 0:
            raise ValueError('document payload is empty')
        return v


def fetch_article(url: str, timeout: float = DEFAULT_TIMEOUT_S,
                  transport: Optional[httpx.BaseTransport] = None) -> RawDocument:
    """
    Fetch one URL.

    Args:
        url: http(s) URL
        timeout: Seconds for connect/read
        transport: Optional httpx transport (tests pass a MockTransport)

    Returns:
        RawDocument with the final URL, MIME type and body bytes
    """
    if not url.lower().startswith(('http://', 'https://')):
        raise FetchError(url, cause='only http and https URLs can be fetched')

    client = httpx.Client(
        transport=transport,
        timeout=timeout,
        follow_redirects=True,
        max_redirects=MAX_REDIRECTS,
        headers={'User-Agent': USER_AGENT},
    )

    try:
        response = client.get(url)
    except httpx.TooManyRedirects as e:
        raise RedirectError(f"more than {MAX_REDIRECTS} redirects for {url}") from e
    except httpx.TimeoutException as e:
        raise FetchError(url, cause=f"timeout after {timeout}s") from e
    except httpx.HTTPError as e:
        raise FetchError(url, cause=str(e) or type(e).__name__) from e
    finally:
        client.close()

    if not 200 <= response.status_code < 300:
        raise FetchError(url, status=response.status_code)

    content_type = response.headers.get('content-type', 'application/octet-stream')
    content_type = content_type.split(';', 1)[0].strip().lower()

    if not response.content:
        raise FetchError(url, cause='empty response body')

    logger.info(f"✓ Fetched {url} ({len(response.content):,} bytes, {content_type})")
    return RawDocument(
        url=str(response.url),
        content_type=content_type,
        bytes=response.content,
        retrieved_at=datetime.now(timezone.utc),
    )


def _soup(raw: RawDocument) -> BeautifulSoup:
    if raw.content_type not in HTML_TYPES:
        raise ExtractionError(f"not an HTML document: {raw.content_type}")
    return BeautifulSoup(raw.bytes, 'html.parser')


def extract_main_text(raw: RawDocument) -> Tuple[str, str]:
    """
    Extract (title, body) from an HTML page.

    Title is the first non-empty of <title> or the first <h1>. Body keeps
    <p> elements of at least 40 characters, in document order, joined by a
    blank line.
    """
    soup = _soup(raw)

    candidates = []
    if soup.title is not None:
        candidates.append(soup.title.get_text())
    h1 = soup.find('h1')
    if h1 is not None:
        candidates.append(h1.get_text())

    title = next((collapse_whitespace(c) for c in candidates if collapse_whitespace(c)), None)
    if title is None:
        raise ExtractionError(f"no <title> or <h1> in {raw.url}")

    paragraphs = []
    for p in soup.find_all('p'):
        text = collapse_whitespace(p.get_text())
        if len(text) >= MIN_PARAGRAPH_CHARS:
            paragraphs.append(text)

    return title, '\n\n'.join(paragraphs)


def extract_published_at(raw: RawDocument) -> datetime:
    """
    Publication instant from common meta tags or <time datetime>.

    Falls back to the retrieval instant when nothing parseable is found.
    """
    soup = _soup(raw)

    values = []
    for attrs in _DATE_META:
        tag = soup.find('meta', attrs=attrs)
        if tag is not None and tag.get('content'):
            values.append(tag['content'])
    for tag in soup.find_all('time'):
        if tag.get('datetime'):
            values.append(tag['datetime'])

    for value in values:
        try:
            published = parse_datetime(value)
        except DateParseError:
            continue
        if published <= raw.retrieved_at:
            return published

    logger.warning(f"No publication date in {raw.url}; using retrieval time")
    return raw.retrieved_at


def fetch_news_article(url: str, timeout: float = DEFAULT_TIMEOUT_S,
                       transport: Optional[httpx.BaseTransport] = None) -> NewsArticle:
    """Fetch, extract and normalize one page into a NewsArticle."""
    raw = fetch_article(url, timeout=timeout, transport=transport)
    title, body = extract_main_text(raw)
    published = extract_published_at(raw)

    lang = None
    html = _soup(raw).find('html')
    if html is not None and is_language_tag(html.get('lang') or ''):
        lang = html['lang']

    return normalize_article(
        url=raw.url,
        title=title,
        body=body,
        published_at=published.isoformat(),
        lang=lang,
        fetched_at=raw.retrieved_at.isoformat(),
    )
