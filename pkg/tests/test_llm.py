import json
import threading
import time

import httpx
import pytest

from src.errors import BackendError, ConfigError, MockError, ProtocolError
from src.llm import (LiveBackend, LlmClient, LlmRequest, MockBackend, ResponseCache,
                     RetryPolicy, TransientBackendError, cache_key, get_backend, mock_complete)
from src.llm.base import PermanentBackendError
from src.llm.mock_backend import is_relevant_by_shared_terms
from src.parsing import parse_judgments, parse_story, validate_story_citations
from src.prompting import (STORY_MARKER, ContextSnippet, PromptVariant, load_default_template,
                           render_prompt)
from tests.conftest import make_article


class CountingBackend:
    name = 'stub'

    def __init__(self, failures=0, delay=0.0, exc=TransientBackendError):
        self.calls = 0
        self.failures = failures
        self.delay = delay
        self.exc = exc
        self._lock = threading.Lock()

    def generate(self, request):
        with self._lock:
            self.calls += 1
            call = self.calls
        if self.delay:
            time.sleep(self.delay)
        if call <= self.failures:
            raise self.exc('simulated failure')
        return f'answer for {request.prompt}'


def client_for(backend, tmp_path, **kwargs):
    return LlmClient(backend, ResponseCache(tmp_path / 'cache'), sleep=lambda s: None, **kwargs)


class TestCacheKey:
    def test_identical(self):
        assert cache_key(LlmRequest(model='m', prompt='p')) == cache_key(LlmRequest(model='m', prompt='p'))

    def test_temperature_matters(self):
        a = LlmRequest(model='m', prompt='p', temperature=0)
        b = LlmRequest(model='m', prompt='p', temperature=0.5)
        assert cache_key(a) != cache_key(b)

    @pytest.mark.parametrize('name', ['cache_key', 'cache_key_unicode'])
    def test_pinned(self, golden, name):
        g = golden[name]
        request = LlmRequest(model=g['model'], prompt=g['prompt'], temperature=g['temperature'],
                             max_output_tokens=g['max_output_tokens'])
        assert cache_key(request) == g['key']

    def test_empty_prompt_rejected(self):
        with pytest.raises(ValueError):
            LlmRequest(model='m', prompt='')


class TestClient:
    def test_second_call_cached(self, tmp_path):
        backend = CountingBackend()
        client = client_for(backend, tmp_path)
        request = LlmRequest(model='m', prompt='hello')
        first = client.complete(request)
        second = client.complete(request)
        assert not first.cached and second.cached
        assert first.text == second.text
        assert backend.calls == 1
        assert client.stats.cache_hits == 1

    def test_cache_survives_new_client(self, tmp_path):
        request = LlmRequest(model='m', prompt='hello')
        client_for(CountingBackend(), tmp_path).complete(request)
        backend = CountingBackend()
        assert client_for(backend, tmp_path).complete(request).cached
        assert backend.calls == 0

    def test_two_failures_then_success(self, tmp_path):
        backend = CountingBackend(failures=2)
        client = client_for(backend, tmp_path)
        response = client.complete(LlmRequest(model='m', prompt='x'))
        assert response.text == 'answer for x'
        assert client.stats.retries == 2
        assert backend.calls == 3

    def test_always_failing_four_attempts(self, tmp_path):
        backend = CountingBackend(failures=10)
        client = client_for(backend, tmp_path)
        with pytest.raises(BackendError) as exc:
            client.complete(LlmRequest(model='m', prompt='x'))
        assert backend.calls == 4
        assert exc.value.exit_code == 3
        assert not list((tmp_path / 'cache').glob('*.json'))

    def test_permanent_failure_not_retried(self, tmp_path):
        backend = CountingBackend(failures=10, exc=PermanentBackendError)
        with pytest.raises(BackendError):
            client_for(backend, tmp_path).complete(LlmRequest(model='m', prompt='x'))
        assert backend.calls == 1

    def test_retry_policy_configurable(self, tmp_path):
        backend = CountingBackend(failures=10)
        client = client_for(backend, tmp_path, retry=RetryPolicy(max_retries=1))
        with pytest.raises(BackendError):
            client.complete(LlmRequest(model='m', prompt='x'))
        assert backend.calls == 2

    def test_single_flight(self, tmp_path):
        backend = CountingBackend(delay=0.05)
        client = client_for(backend, tmp_path, max_in_flight=16)
        request = LlmRequest(model='m', prompt='same')
        results = []
        barrier = threading.Barrier(16)

        def worker():
            barrier.wait()
            results.append(client.complete(request).text)

        threads = [threading.Thread(target=worker) for _ in range(16)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

        assert backend.calls == 1
        assert len(results) == 16
        assert len(set(results)) == 1
        assert client.cache._key_locks == {}

    def test_inspect_and_clear(self, tmp_path):
        client = client_for(CountingBackend(), tmp_path)
        client.complete(LlmRequest(model='m', prompt='a'))
        client.complete(LlmRequest(model='m', prompt='b'))
        info = client.cache.inspect()
        assert info['entries'] == 2
        assert info['backends'] == {'stub': 2}
        assert client.cache.clear() == 2
        assert client.cache.inspect()['entries'] == 0

    def test_corrupt_entry_is_a_miss(self, tmp_path):
        request = LlmRequest(model='m', prompt='a')
        cache = ResponseCache(tmp_path / 'cache')
        cache.directory.mkdir(parents=True)
        cache.path_for(cache_key(request)).write_text('{broken', encoding='utf-8')
        backend = CountingBackend()
        LlmClient(backend, cache).complete(request)
        assert backend.calls == 1

    @pytest.mark.parametrize('payload', ['"just text"', '{"response": "text"}', '{"response": ["x"]}',
                                         '{"response": {"text": 3}}', '[1, 2]'])
    def test_malformed_entry_is_a_miss(self, tmp_path, payload):
        request = LlmRequest(model='m', prompt='a')
        cache = ResponseCache(tmp_path / 'cache')
        cache.directory.mkdir(parents=True)
        cache.path_for(cache_key(request)).write_text(payload, encoding='utf-8')
        assert cache.get(cache_key(request)) is None
        assert cache.inspect()['backends'] == {'unreadable': 1}
        backend = CountingBackend()
        assert LlmClient(backend, cache).complete(request).text
        assert backend.calls == 1

    def test_key_locks_released(self, tmp_path):
        cache = ResponseCache(tmp_path / 'cache')
        for i in range(100):
            with cache.lock(f'key-{i}'):
                pass
        with pytest.raises(RuntimeError):
            with cache.lock('failing'):
                raise RuntimeError('boom')
        assert cache._key_locks == {}


def bundle_for(target_title, titles, variant):
    target = make_article(target_title, '2023-06-01')
    snippets = [ContextSnippet(index=i, article_id=f'{i:032x}', date='2023-01-0' + str(i),
                               title=t, excerpt='some words here')
                for i, t in enumerate(titles, start=1)]
    return render_prompt(target, snippets, variant, load_default_template(variant))


class TestMockBackend:
    def test_shared_terms_rule(self):
        assert is_relevant_by_shared_terms('chip export ban widens', 'US widens chip export ban')
        assert not is_relevant_by_shared_terms('chip export ban widens', 'Storm floods towns')

    def test_labels(self):
        bundle = bundle_for('chip export ban widens',
                            ['US widens chip export ban', 'Storm floods towns'],
                            PromptVariant.BASELINE_ONLY)
        text = mock_complete(LlmRequest(model='mock', prompt=bundle.rendered)).text
        assert text.splitlines()[0].startswith('1. RELEVANT')
        assert text.splitlines()[1].startswith('2. IRRELEVANT')
        assert STORY_MARKER not in text

    def test_extended_story_cites_relevant(self):
        bundle = bundle_for('chip export ban widens',
                            ['US widens chip export ban', 'Storm floods towns',
                             'Chip export ban hits equipment makers'],
                            PromptVariant.EXTENDED_TASK)
        text = MockBackend().generate(LlmRequest(model='mock', prompt=bundle.rendered))
        judgments, _ = parse_judgments(text, bundle)
        story = parse_story(text, bundle)
        assert story.cited_indices == {1, 3}

    def test_marker_in_title_does_not_trigger_story(self):
        bundle = bundle_for('Background Story: chip export ban widens',
                            ['US widens chip export ban', 'Storm floods towns'],
                            PromptVariant.BASELINE_ONLY)
        text = mock_complete(LlmRequest(model='mock', prompt=bundle.rendered)).text
        assert parse_story(text, bundle) is None
        assert text.splitlines()[0].startswith('1. RELEVANT')
        assert validate_story_citations(story, judgments).citation_violations == frozenset()

    def test_deterministic(self):
        bundle = bundle_for('a b c', ['a b', 'c d'], PromptVariant.EXTENDED_TASK)
        request = LlmRequest(model='mock', prompt=bundle.rendered)
        assert mock_complete(request).text == mock_complete(request).text

    def test_unstructured_prompt(self):
        with pytest.raises(MockError):
            mock_complete(LlmRequest(model='mock', prompt='just some text'))


class TestLiveBackend:
    def backend(self, handler):
        return LiveBackend(base_url='https://llm.example.com/v1', api_key='secret',
                           transport=httpx.MockTransport(handler))

    def test_ok(self):
        seen = {}

        def handler(request):
            seen['auth'] = request.headers['authorization']
            seen['body'] = json.loads(request.content)
            return httpx.Response(200, json={'choices': [{'message': {'content': '1. RELEVANT'}}]})

        text = self.backend(handler).generate(LlmRequest(model='m', prompt='p', temperature=0.2))
        assert text == '1. RELEVANT'
        assert seen['auth'] == 'Bearer secret'
        assert seen['body']['messages'] == [{'role': 'user', 'content': 'p'}]
        assert seen['body']['temperature'] == 0.2

    @pytest.mark.parametrize('status', [408, 429, 500, 503])
    def test_transient_statuses(self, status):
        backend = self.backend(lambda r: httpx.Response(status))
        with pytest.raises(TransientBackendError):
            backend.generate(LlmRequest(model='m', prompt='p'))

    def test_permanent_status(self):
        backend = self.backend(lambda r: httpx.Response(401, text='bad key'))
        with pytest.raises(PermanentBackendError):
            backend.generate(LlmRequest(model='m', prompt='p'))

    def test_bad_payload(self):
        backend = self.backend(lambda r: httpx.Response(200, json={'unexpected': True}))
        with pytest.raises(ProtocolError):
            backend.generate(LlmRequest(model='m', prompt='p'))

    def test_retried_through_client(self, tmp_path):
        attempts = []

        def handler(request):
            attempts.append(1)
            if len(attempts) < 3:
                return httpx.Response(503)
            return httpx.Response(200, json={'choices': [{'message': {'content': 'ok'}}]})

        client = client_for(self.backend(handler), tmp_path)
        assert client.complete(LlmRequest(model='m', prompt='p')).text == 'ok'
        assert client.stats.retries == 2

    def test_missing_key(self, monkeypatch):
        monkeypatch.delenv('CHRONOWEAVE_API_KEY', raising=False)
        with pytest.raises(ConfigError):
            LiveBackend()

    def test_factory(self):
        assert get_backend('mock').name == 'mock'
        with pytest.raises(ValueError):
            get_backend('other')
