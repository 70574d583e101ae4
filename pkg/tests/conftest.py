import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from corefseq.model import CorefAnnotation, Document, Span


@pytest.fixture
def paper_doc():
    """The running example: x = (a, b, c, d, e), one sentence."""
    return Document("paper-ex", tuple("abcde"), ((1, 6),))


@pytest.fixture
def paper_ann():
    """S = {(2,2,1), (5,5,2), (2,3,2)}: clusters {{b}, {(b,c), e}}."""
    return CorefAnnotation.from_spans([Span(2, 2, 1), Span(5, 5, 2), Span(2, 3, 2)])


@pytest.fixture
def two_token_doc():
    return Document("two", ("a", "b"), ((1, 3),))
