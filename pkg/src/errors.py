"""
Error Hierarchy for the Timeline Pipeline
==========================================
Every failure the pipeline can report derives from ChronoweaveError and
carries the process exit code the CLI maps it to:

    0 ok, 2 input/parse, 3 network/backend, 4 evaluation consistency,
    1 everything else.
"""

from typing import Iterable, Optional


class ChronoweaveError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


# ============================================================================
# INPUT / PARSE ERRORS (exit 2)
# ============================================================================

class InputError(ChronoweaveError):
    exit_code = 2


class CorpusIOError(InputError):
    """Corpus file missing or unreadable."""


class CorpusParseError(InputError):
    """A corpus line is not a JSON object or lacks required keys."""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class DateParseError(InputError):
    def __init__(self, value: str):
        self.value = value
        super().__init__(f"unparseable date: {value!r}")


class ArticleValidationError(InputError):
    pass


class TemplateError(InputError):
    def __init__(self, message: str, placeholder: Optional[str] = None):
        self.placeholder = placeholder
        super().__init__(message)


class BudgetError(InputError):
    def __init__(self, article_id: str, tokens: int, budget: int):
        self.article_id = article_id
        super().__init__(
            f"snippet for article {article_id} needs {tokens} tokens, "
            f"budget is {budget}"
        )


class ExtractionError(InputError):
    pass


class ArticleLookupError(InputError):
    def __init__(self, article_ids: Iterable[str]):
        self.article_ids = sorted(article_ids)
        super().__init__(f"article id(s) not in corpus: {', '.join(self.article_ids)}")


class ConfigError(InputError):
    pass


# ============================================================================
# NETWORK / BACKEND ERRORS (exit 3)
# ============================================================================

class NetworkError(ChronoweaveError):
    exit_code = 3


class FetchError(NetworkError):
    def __init__(self, url: str, status: Optional[int] = None, cause: Optional[str] = None):
        self.url = url
        self.status = status
        self.cause = cause
        detail = f"HTTP {status}" if status is not None else cause
        super().__init__(f"fetch failed for {url}: {detail}")


class RedirectError(NetworkError):
    pass


class BackendError(NetworkError):
    def __init__(self, message: str, cause: Optional[BaseException] = None):
        self.cause = cause
        super().__init__(message)


class ProtocolError(NetworkError):
    pass


# ============================================================================
# EVALUATION CONSISTENCY (exit 4)
# ============================================================================

class ConsistencyError(ChronoweaveError):
    exit_code = 4


# ============================================================================
# EVERYTHING ELSE (exit 1)
# ============================================================================

class OrderingError(ChronoweaveError):
    """Candidate published after the target."""


class StoryError(ChronoweaveError):
    """Background story marker present but body empty."""


class BundleMismatchError(ChronoweaveError):
    pass


class ConflictError(ChronoweaveError):
    def __init__(self, context_ids: Iterable[str]):
        self.context_ids = sorted(context_ids)
        super().__init__(f"conflicting labels for context id(s): {', '.join(self.context_ids)}")


class MockError(ChronoweaveError):
    """Prompt handed to the mock backend lacks the structural markers."""


class OutputError(ChronoweaveError):
    pass
