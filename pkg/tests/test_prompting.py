import numpy as np
import pytest

from src.errors import BudgetError, TemplateError
from src.prompting import (PLACEHOLDERS, STORY_MARKER, ContextSnippet, PromptVariant,
                           chunk_candidates, estimate_tokens, load_default_template,
                           load_template, parse_template, render_prompt, template_overhead)
from tests.conftest import make_article


def snippet(i, title='Item', excerpt='', article_id=None):
    return ContextSnippet(index=i, article_id=article_id or f'{i:032x}', date='2023-01-01',
                          title=title, excerpt=excerpt)


@pytest.mark.parametrize('text,expected', [('', 0), ('abcd', 1), ('x' * 9, 3), ('é' * 4, 1)])
def test_estimate_tokens(text, expected):
    assert estimate_tokens(text) == expected


class TestChunkCandidates:
    def test_thirty_each_overhead_ten(self):
        snippets = [snippet(i) for i in range(1, 5)]
        batches = chunk_candidates(snippets, 100, 10, estimator=lambda s: 30)
        assert [len(b) for b in batches] == [3, 1]
        assert [s.index for s in batches[1]] == [1]
        assert batches[1][0].article_id == snippets[3].article_id

    def test_large_budget_single_batch(self):
        snippets = [snippet(i) for i in range(1, 8)]
        batches = chunk_candidates(snippets, 10_000, 0)
        assert len(batches) == 1
        assert [s.article_id for s in batches[0]] == [s.article_id for s in snippets]

    def test_over_half_budget_one_per_batch(self):
        snippets = [snippet(i) for i in range(1, 5)]
        batches = chunk_candidates(snippets, 100, 0, estimator=lambda s: 51)
        assert [len(b) for b in batches] == [1, 1, 1, 1]

    def test_oversized_snippet(self):
        with pytest.raises(BudgetError) as exc:
            chunk_candidates([snippet(1, article_id='a' * 32)], 50, 10, estimator=lambda s: 41)
        assert 'a' * 32 in str(exc.value)

    def test_empty_input(self):
        assert chunk_candidates([], 100, 10) == []

    def test_random_batches_respect_budget(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            n = int(rng.integers(0, 25))
            costs = {f'{i:032x}': int(c) for i, c in enumerate(rng.integers(1, 60, size=n))}
            snippets = [snippet(i + 1, article_id=aid) for i, aid in enumerate(costs)]
            overhead = int(rng.integers(0, 40))
            budget = overhead + 60 + int(rng.integers(0, 200))
            batches = chunk_candidates(snippets, budget, overhead,
                                       estimator=lambda s: costs[s.article_id])
            for batch in batches:
                assert batch
                assert overhead + sum(costs[s.article_id] for s in batch) <= budget
                assert [s.index for s in batch] == list(range(1, len(batch) + 1))
            flat = [s.article_id for b in batches for s in b]
            assert flat == list(costs)


class TestTemplates:
    def test_all_placeholders(self, tmp_path):
        text = ' '.join('{{' + p + '}}' for p in sorted(PLACEHOLDERS))
        path = tmp_path / 't.tmpl'
        path.write_text(text, encoding='utf-8')
        assert load_template(path).placeholders == PLACEHOLDERS

    def test_unknown_placeholder(self):
        with pytest.raises(TemplateError) as exc:
            parse_template('Hello {{bogus}}', 'x.tmpl')
        assert exc.value.placeholder == 'bogus'
        assert 'bogus' in str(exc.value)

    def test_identical_files_equal_ids(self, tmp_path):
        a, b = tmp_path / 'a.tmpl', tmp_path / 'b.tmpl'
        a.write_bytes(b'{{target_title}}')
        b.write_bytes(b'{{target_title}}')
        assert load_template(a).template_id == load_template(b).template_id

    def test_missing_file(self, tmp_path):
        with pytest.raises(TemplateError):
            load_template(tmp_path / 'nope.tmpl')

    def test_extended_needs_extended_placeholder(self):
        target = make_article('Target', '2023-06-01')
        with pytest.raises(TemplateError) as exc:
            render_prompt(target, [snippet(1)], PromptVariant.EXTENDED_TASK,
                          load_default_template(PromptVariant.BASELINE_ONLY))
        assert exc.value.placeholder == 'extended_instructions'


class TestRenderPrompt:
    target = make_article('Chip export ban widens', '2023-06-01', 'Body of the target.')

    def render(self, variant, batch):
        return render_prompt(self.target, batch, variant, load_default_template(variant))

    def test_baseline_has_no_marker(self):
        bundle = self.render(PromptVariant.BASELINE_ONLY, [snippet(1), snippet(2)])
        assert 'RELEVANT or IRRELEVANT' in bundle.rendered
        assert STORY_MARKER not in bundle.rendered

    def test_extended_has_both_blocks(self):
        bundle = self.render(PromptVariant.EXTENDED_TASK, [snippet(1), snippet(2)])
        assert '## Task' in bundle.rendered
        assert '## Extended Task' in bundle.rendered
        assert STORY_MARKER in bundle.rendered

    def test_indices_listed(self):
        bundle = self.render(PromptVariant.BASELINE_ONLY, [snippet(1), snippet(2), snippet(3)])
        context = bundle.rendered.split('## Context News')[1].split('## Task')[0]
        numbered = [line.split('.')[0] for line in context.splitlines() if line[:1].isdigit()]
        assert numbered == ['1', '2', '3']

    def test_bundle_id_deterministic(self):
        batch = [snippet(1), snippet(2)]
        a = self.render(PromptVariant.EXTENDED_TASK, batch)
        b = self.render(PromptVariant.EXTENDED_TASK, batch)
        c = self.render(PromptVariant.BASELINE_ONLY, batch)
        assert a.bundle_id == b.bundle_id
        assert a.bundle_id != c.bundle_id

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            self.render(PromptVariant.BASELINE_ONLY, [])

    def test_non_contiguous_rejected(self):
        with pytest.raises(ValueError):
            self.render(PromptVariant.BASELINE_ONLY, [snippet(1), snippet(3)])

    def test_overhead_below_rendered(self):
        template = load_default_template(PromptVariant.EXTENDED_TASK)
        overhead = template_overhead(self.target, PromptVariant.EXTENDED_TASK, template)
        bundle = self.render(PromptVariant.EXTENDED_TASK, [snippet(1)])
        assert 0 < overhead < bundle.token_estimate

    def test_marker_iff_extended_random(self):
        rng = np.random.default_rng(3)
        words = ['chip', 'export', 'storm', 'vote', 'court', 'bank', 'trade']
        for _ in range(100):
            batch = [snippet(i, title=' '.join(rng.choice(words, size=3)),
                             excerpt=' '.join(rng.choice(words, size=int(rng.integers(0, 20)))))
                     for i in range(1, int(rng.integers(1, 6)) + 1)]
            for variant in PromptVariant:
                rendered = self.render(variant, batch).rendered
                assert (STORY_MARKER in rendered) == (variant is PromptVariant.EXTENDED_TASK)

    def test_marker_in_article_text_is_escaped(self):
        target = make_article('Background Story: chip export ban widens', '2023-06-01',
                              'Background Story: the ban began last year.')
        batch = [snippet(1, title='Background Story: US widens chip export ban',
                         excerpt='See Background Story: earlier curbs.')]
        for variant in PromptVariant:
            rendered = render_prompt(target, batch, variant, load_default_template(variant)).rendered
            assert rendered.count(STORY_MARKER) == (variant is PromptVariant.EXTENDED_TASK)
            assert 'Background Story - chip export ban widens' in rendered


def test_excerpt_token_cap():
    with pytest.raises(ValueError):
        snippet(1, excerpt=' '.join(['w'] * 61))
