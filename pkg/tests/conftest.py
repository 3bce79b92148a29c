"""Shared fixtures: repo on sys.path, article factory, network guard."""

import json
import socket
import sys
from datetime import date
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from src.data_cleaner import normalize_article  # noqa: E402

SYNTHETIC_CORPUS = ROOT / 'data' / 'synthetic_corpus.jsonl'
GOLDEN = Path(__file__).parent / 'golden' / 'digests.json'


class NetworkDenied(OSError):
    pass


@pytest.fixture(autouse=True)
def deny_network(monkeypatch):
    """Any attempt to open a socket connection fails the test run loudly."""
    def refuse(*args, **kwargs):
        raise NetworkDenied('network access attempted during tests')

    monkeypatch.setattr(socket.socket, 'connect', refuse)
    monkeypatch.setattr(socket.socket, 'connect_ex', refuse)
    monkeypatch.setattr(socket, 'create_connection', refuse)
    monkeypatch.setattr(socket, 'getaddrinfo', refuse)


@pytest.fixture
def golden():
    return json.loads(GOLDEN.read_text(encoding='utf-8'))


def make_article(title, published_at='2023-06-01', body='', url=None, lang=None):
    slug = '-'.join(title.lower().split())[:60] or 'x'
    return normalize_article(
        url=url or f'https://news.example.com/{slug}/{published_at[:10]}',
        title=title,
        body=body,
        published_at=published_at,
        lang=lang,
    )


@pytest.fixture
def article():
    return make_article


@pytest.fixture
def synthetic_corpus_path():
    return SYNTHETIC_CORPUS


@pytest.fixture
def chip_corpus():
    """Small story thread plus unrelated items; the last article is the target."""
    return [
        make_article('Netherlands joins chip export curbs', '2023-01-28',
                     'Dutch officials agreed to align lithography controls with Washington.'),
        make_article('Storm floods coastal towns', '2023-03-02',
                     'Heavy rain flooded several towns overnight.'),
        make_article('US widens chip export ban', '2023-05-10',
                     'The Commerce Department widened the chip export ban to more processors.'),
        make_article('Football club wins cup', '2023-05-20', 'A late goal decided the final.'),
        make_article('Chip export ban widens to more countries', '2023-06-01',
                     'Licence requirements now cover more destinations for advanced chips.'),
    ]


def write_corpus(path: Path, records) -> Path:
    path.write_text(''.join(json.dumps(r) + '\n' for r in records), encoding='utf-8')
    return path


def record(title, published_at='2023-06-01', body='Body text.', url=None):
    slug = '-'.join(title.lower().split())
    return {'url': url or f'https://news.example.com/{slug}', 'title': title,
            'body': body, 'published_at': published_at}


def day(s: str) -> date:
    return date.fromisoformat(s)
