import json

import httpx
import pytest

import src.cli as cli
from src.fetcher import fetch_news_article
from tests.conftest import record, write_corpus

FILES = ('timeline.json', 'timeline.md', 'timeline.html', 'judgments.jsonl',
         'diagnostics.jsonl', 'stories.jsonl', 'bundles.jsonl')


@pytest.fixture
def run(tmp_path, synthetic_corpus_path):
    cache = tmp_path / 'cache'

    def invoke(*args, corpus=True):
        argv = list(args) + ['--cache-dir', str(cache), '--quiet']
        if corpus:
            argv += ['--corpus', str(synthetic_corpus_path)]
        return cli.main(argv)
    return invoke


class TestIngest:
    def test_ten_articles(self, tmp_path, capsys):
        path = write_corpus(tmp_path / 'c.jsonl', [record(f'Story {i}') for i in range(10)])
        code = cli.main(['ingest', '--corpus', str(path), '--out', str(tmp_path / 'out'), '--quiet'])
        assert code == 0
        assert '10 loaded, 0 duplicates' in capsys.readouterr().out
        assert len((tmp_path / 'out' / 'corpus.jsonl').read_text().splitlines()) == 10

    def test_bad_line(self, tmp_path, capsys):
        path = tmp_path / 'c.jsonl'
        path.write_text(json.dumps(record('A')) + '\n{oops\n', encoding='utf-8')
        code = cli.main(['ingest', '--corpus', str(path), '--out', str(tmp_path / 'out'), '--quiet'])
        assert code == 2
        assert 'line 2' in capsys.readouterr().err

    def test_lenient(self, tmp_path, capsys):
        path = tmp_path / 'c.jsonl'
        path.write_text(json.dumps(record('A')) + '\n{oops\n', encoding='utf-8')
        code = cli.main(['ingest', '--corpus', str(path), '--out', str(tmp_path / 'out'),
                         '--lenient', '--quiet'])
        assert code == 0
        assert '1 loaded, 0 duplicates, 1 rejected' in capsys.readouterr().out

    def test_unreachable_fetch(self, tmp_path, monkeypatch):
        def unreachable(request):
            raise httpx.ConnectError('connection refused', request=request)

        monkeypatch.setattr(cli, 'fetch_news_article',
                            lambda url: fetch_news_article(url, transport=httpx.MockTransport(unreachable)))
        code = cli.main(['ingest', '--fetch', 'https://unreachable.example/news',
                         '--out', str(tmp_path / 'out'), '--quiet'])
        assert code == 3


class TestTimeline:
    def test_deterministic_and_cached(self, tmp_path, run, capsys):
        outputs = []
        for i in range(5):
            out = tmp_path / f'out{i}'
            assert run('timeline', '--backend', 'mock', '--out', str(out)) == 0
            outputs.append({name: (out / name).read_bytes() for name in FILES})
            stdout = capsys.readouterr().out
            if i > 0:
                assert 'Backend calls: 0' in stdout
        assert all(o == outputs[0] for o in outputs[1:])

        timeline = json.loads(outputs[0]['timeline.json'])
        assert timeline['entries'][-1]['is_target']
        assert timeline['entries'][-1]['headline'] == 'US Tightens Chip Export Controls on Advanced AI Processors'
        assert len(timeline['entries']) > 1
        assert timeline['story'] is not None
        assert b'## Background' in outputs[0]['timeline.md']

    def test_baseline_has_no_story(self, tmp_path, run):
        out = tmp_path / 'out'
        assert run('timeline', '--backend', 'mock', '--variant', 'baseline', '--out', str(out)) == 0
        assert json.loads((out / 'timeline.json').read_text())['story'] is None
        assert '## Background' not in (out / 'timeline.md').read_text()
        assert '<h2>Background</h2>' not in (out / 'timeline.html').read_text()
        assert (out / 'stories.jsonl').read_text() == ''

    def test_desc_order(self, tmp_path, run):
        out = tmp_path / 'out'
        assert run('timeline', '--order', 'desc', '--formats', 'markdown', '--out', str(out)) == 0
        bullets = [l for l in (out / 'timeline.md').read_text().splitlines() if l.startswith('- ')]
        assert bullets[0].startswith('- **2023-10-17**')
        assert not (out / 'timeline.json').exists()

    def test_missing_corpus(self, tmp_path):
        code = cli.main(['timeline', '--corpus', str(tmp_path / 'none.jsonl'),
                         '--out', str(tmp_path / 'out'), '--quiet'])
        assert code == 2

    def test_unknown_target(self, tmp_path, run):
        assert run('timeline', '--target-id', 'f' * 32, '--out', str(tmp_path / 'out')) == 2

    def test_live_without_key(self, tmp_path, run, monkeypatch):
        monkeypatch.delenv('CHRONOWEAVE_API_KEY', raising=False)
        assert run('timeline', '--backend', 'live', '--out', str(tmp_path / 'out')) == 2


class TestEval:
    def test_mock_gold_is_perfect(self, tmp_path, run, capsys):
        out = tmp_path / 'out'
        assert run('eval', '--backend', 'mock', '--gold-from-mock', '--out', str(out)) == 0
        payload = json.loads((out / 'eval_report.json').read_text())
        for report in payload['reports']:
            assert report['precision'] == report['recall'] == report['f1'] == 1.0
            assert report['coverage'] == 1.0
            assert report['parser_failure_rate'] == 0.0
        assert payload['comparison']['delta_f1'] == 0.0
        assert payload['comparison']['p_value'] == 1.0
        assert (out / 'gold.jsonl').exists()
        assert 'baseline' in capsys.readouterr().out

    def test_all_targets(self, tmp_path, run):
        out = tmp_path / 'out'
        assert run('eval', '--gold-from-mock', '--all-targets', '--plot', '--out', str(out)) == 0
        payload = json.loads((out / 'eval_report.json').read_text())
        assert all(r['f1'] == 1.0 for r in payload['reports'])
        assert (out / 'variant_comparison.png').exists()

    def test_unjudged_gold_pair(self, tmp_path, run):
        first = tmp_path / 'first'
        assert run('eval', '--gold-from-mock', '--out', str(first)) == 0
        lines = (first / 'gold.jsonl').read_text().splitlines()
        extra = dict(json.loads(lines[0]), context_id='0' * 32)
        gold = tmp_path / 'gold.jsonl'
        gold.write_text('\n'.join(lines + [json.dumps(extra)]) + '\n')

        out = tmp_path / 'second'
        assert run('eval', '--gold', str(gold), '--out', str(out)) == 0
        payload = json.loads((out / 'eval_report.json').read_text())
        assert all(r['coverage'] < 1.0 for r in payload['reports'])

    def test_saved_judgments(self, tmp_path, run):
        base, ext = tmp_path / 'base', tmp_path / 'ext'
        assert run('timeline', '--variant', 'baseline', '--out', str(base)) == 0
        assert run('timeline', '--variant', 'extended', '--out', str(ext)) == 0
        out = tmp_path / 'out'
        assert run('eval', '--gold-from-mock', '--out', str(out),
                   '--judgments-baseline', str(base / 'judgments.jsonl'),
                   '--judgments-extended', str(ext / 'judgments.jsonl')) == 0
        payload = json.loads((out / 'eval_report.json').read_text())
        assert all(r['f1'] == 1.0 for r in payload['reports'])

    def test_corrupted_judgments(self, tmp_path, run):
        base = tmp_path / 'base'
        assert run('timeline', '--variant', 'baseline', '--out', str(base)) == 0
        corrupt = tmp_path / 'corrupt.jsonl'
        corrupt.write_text('{"target_id": "x", "label": "relevant"\nnot json\n')
        code = run('eval', '--gold-from-mock', '--out', str(tmp_path / 'out'),
                   '--judgments-baseline', str(base / 'judgments.jsonl'),
                   '--judgments-extended', str(corrupt))
        assert code == 4

    def test_duplicated_judgments(self, tmp_path, run):
        base = tmp_path / 'base'
        assert run('timeline', '--variant', 'baseline', '--out', str(base)) == 0
        text = (base / 'judgments.jsonl').read_text()
        doubled = tmp_path / 'doubled.jsonl'
        doubled.write_text(text + text)
        code = run('eval', '--gold-from-mock', '--out', str(tmp_path / 'out'),
                   '--judgments-baseline', str(base / 'judgments.jsonl'),
                   '--judgments-extended', str(doubled))
        assert code == 4

    def test_needs_gold(self, tmp_path, run):
        assert run('eval', '--out', str(tmp_path / 'out')) == 2


def test_cache_inspect_and_clear(tmp_path, run, capsys):
    assert run('timeline', '--out', str(tmp_path / 'out')) == 0
    capsys.readouterr()
    assert run('cache', 'inspect', corpus=False) == 0
    assert 'mock:' in capsys.readouterr().out
    assert run('cache', 'clear', corpus=False) == 0
    assert run('cache', 'inspect', corpus=False) == 0
    assert 'Entries: 0' in capsys.readouterr().out


def test_candidates(tmp_path, run):
    out = tmp_path / 'out'
    assert run('candidates', '--out', str(out)) == 0
    data = json.loads((out / 'candidates.json').read_text())
    assert len(data['entries']) == 20
    scores = [e['score'] for e in data['entries']]
    assert scores == sorted(scores, reverse=True)


def test_candidates_retrieval_flags(tmp_path, run):
    out = tmp_path / 'out'
    assert run('candidates', '--out', str(out), '--max-candidates', '5',
               '--window-days', '60', '--halflife-days', '10') == 0
    data = json.loads((out / 'candidates.json').read_text())
    assert data['params']['max_candidates'] == 5
    assert data['params']['window_days'] == 60
    assert data['params']['halflife_days'] == 10.0
    assert 0 < len(data['entries']) <= 5


def test_timeline_max_candidates_flag(tmp_path, run):
    out = tmp_path / 'out'
    assert run('timeline', '--max-candidates', '3', '--out', str(out)) == 0
    records = [json.loads(l) for l in (out / 'judgments.jsonl').read_text().splitlines()]
    assert len(records) == 3
