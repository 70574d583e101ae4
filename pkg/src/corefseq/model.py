"""Core document and annotation types shared by every other module.

Token indices are 1-based and inclusive on both ends throughout the
package; external formats (CoNLL columns, JSON records) convert at the
boundary.  All types here are immutable after construction and safe to
share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator, Optional, Sequence

# Tokens are compared by equality only, so anything hashable works.  The
# text pipeline uses strings; the generation bridge uses vocabulary ids.
Token = Hashable


class CorefDataError(ValueError):
    """Input data violates a structural contract."""


@dataclass(frozen=True)
class Document:
    """A tokenized document with sentence boundaries.

    sentence_bounds holds half-open (start, end) index pairs over 1-based
    token positions: a 5-token document with sentences of 3 and 2 tokens
    has bounds ((1, 4), (4, 6)).
    """

    doc_key: str
    tokens: tuple[Token, ...]
    sentence_bounds: tuple[tuple[int, int], ...]
    speakers: Optional[tuple[Optional[str], ...]] = None

    def __post_init__(self):
        n = len(self.tokens)
        if self.speakers is not None and len(self.speakers) != n:
            raise CorefDataError(
                f"{self.doc_key}: speakers length {len(self.speakers)} != {n} tokens")
        pos = 1
        for start, end in self.sentence_bounds:
            if start != pos or end <= start:
                raise CorefDataError(
                    f"{self.doc_key}: sentence bounds must be non-empty, contiguous, "
                    f"and start at 1; got {self.sentence_bounds}")
            pos = end
        if pos != n + 1:
            raise CorefDataError(
                f"{self.doc_key}: sentence bounds cover 1..{pos - 1}, document has {n} tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_sentences(cls, doc_key: str, sentences: Sequence[Sequence[Token]],
                       speakers: Optional[Sequence[Sequence[Optional[str]]]] = None,
                       ) -> "Document":
        tokens: list[Token] = []
        bounds = []
        for sent in sentences:
            bounds.append((len(tokens) + 1, len(tokens) + len(sent) + 1))
            tokens.extend(sent)
        spk = None
        if speakers is not None:
            spk = tuple(s for sent in speakers for s in sent)
        return cls(doc_key, tuple(tokens), tuple(bounds), spk)

    def token(self, i: int) -> Token:
        """Token at 1-based position i."""
        return self.tokens[i - 1]

    def sentence_of(self, i: int) -> int:
        """1-based sentence index containing token position i."""
        for idx, (start, end) in enumerate(self.sentence_bounds, start=1):
            if start <= i < end:
                return idx
        raise IndexError(f"token position {i} outside document of length {len(self)}")

    def sentence_tokens(self, idx: int) -> tuple[Token, ...]:
        start, end = self.sentence_bounds[idx - 1]
        return self.tokens[start - 1:end - 1]

    @property
    def num_sentences(self) -> int:
        return len(self.sentence_bounds)


@dataclass(frozen=True, order=True)
class Span:
    """A cluster-labeled token span, inclusive on both ends."""

    start: int
    end: int
    cluster: int

    def __post_init__(self):
        if self.start < 1 or self.end < self.start:
            raise CorefDataError(f"bad span ({self.start}, {self.end})")
        if self.cluster < 1:
            raise CorefDataError(f"cluster labels start at 1, got {self.cluster}")

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def _canonical_key(span: Span) -> tuple[int, int, int]:
    # Non-decreasing length, then start position, then cluster label.
    return (span.length, span.start, span.cluster)


@dataclass(frozen=True)
class CorefAnnotation:
    """A set of cluster-labeled spans over one document.

    Iteration follows the canonical order (shortest spans first, ties by
    start then cluster), which is also the order mentions are closed in a
    left-to-right linearization of nested spans.
    """

    spans: frozenset[Span]
    num_clusters: int

    @classmethod
    def from_spans(cls, spans: Iterable[Span]) -> "CorefAnnotation":
        """Build an annotation, inferring the cluster count from the labels."""
        sset = frozenset(spans)
        labels = {s.cluster for s in sset}
        return cls(sset, max(labels) if labels else 0)

    @classmethod
    def from_clusters(cls, clusters: Sequence[Sequence[tuple[int, int]]]) -> "CorefAnnotation":
        """Build from a list of clusters, each a list of (start, end) pairs."""
        spans = [Span(s, e, l) for l, cl in enumerate(clusters, start=1) for (s, e) in cl]
        return cls(frozenset(spans), len(clusters))

    def __iter__(self) -> Iterator[Span]:
        return iter(sorted(self.spans, key=_canonical_key))

    def __len__(self) -> int:
        return len(self.spans)

    def clusters(self) -> list[list[tuple[int, int]]]:
        """Spans grouped by cluster label 1..num_clusters, canonical order within."""
        out: list[list[tuple[int, int]]] = [[] for _ in range(self.num_clusters)]
        for span in self:
            out[span.cluster - 1].append((span.start, span.end))
        return out

    def mention_set(self) -> frozenset[tuple[int, int]]:
        return frozenset((s.start, s.end) for s in self.spans)

    def relabeled(self, mapping: dict[int, int], num_clusters: Optional[int] = None,
                  ) -> "CorefAnnotation":
        spans = frozenset(Span(s.start, s.end, mapping[s.cluster]) for s in self.spans)
        if num_clusters is None:
            num_clusters = max((sp.cluster for sp in spans), default=0)
        return CorefAnnotation(spans, num_clusters)


EMPTY_ANNOTATION = CorefAnnotation(frozenset(), 0)


@dataclass(frozen=True)
class SymbolTable:
    """Special symbols used by the sequence representations.

    integer_lexicon holds the ten digit tokens used to spell cluster
    integers in canonical decimal; cluster_ends holds the per-cluster
    mention-end family for the integer-free representation.  All entries
    must be distinct from each other and from document tokens.
    """

    mention_start: Token = "<m>"
    mention_end: Token = "</m>"
    separator: Token = "|"
    copy: Token = "<c>"
    new_cluster: Token = "<new>"
    seq_start: Token = "<s>"
    seq_end: Token = "</s>"
    sentence_start: Token = "<sentence>"
    sentence_end: Token = "</sentence>"
    cluster_ends: tuple[Token, ...] = tuple(f"</m_{l}>" for l in range(1, 65))
    integer_lexicon: tuple[Token, ...] = tuple(str(d) for d in range(10))

    def __post_init__(self):
        if len(self.integer_lexicon) != 10:
            raise CorefDataError("integer_lexicon must hold exactly the ten digit tokens")
        specials = self.all_specials()
        if len(specials) != 9 + len(self.cluster_ends) + 10:
            raise CorefDataError("special symbols must be pairwise distinct")
        object.__setattr__(self, "_cluster_end_index",
                           {tok: l for l, tok in enumerate(self.cluster_ends, start=1)})
        object.__setattr__(self, "_digit_value",
                           {tok: d for d, tok in enumerate(self.integer_lexicon)})

    @property
    def max_clusters(self) -> int:
        """Size of the integer-free </m_l> family."""
        return len(self.cluster_ends)

    def all_specials(self) -> frozenset[Token]:
        return frozenset((self.mention_start, self.mention_end, self.separator,
                          self.copy, self.new_cluster, self.seq_start, self.seq_end,
                          self.sentence_start, self.sentence_end)
                         ) | frozenset(self.cluster_ends) | frozenset(self.integer_lexicon)

    def reserved(self) -> frozenset[Token]:
        """Symbols that may never occur as document tokens.

        Digit tokens are excluded: documents legitimately contain numbers,
        and the codecs only read digits as cluster integers after a
        separator or inside the cluster-identity state.
        """
        return self.all_specials() - frozenset(self.integer_lexicon)

    def check_document(self, doc: Document) -> None:
        clash = self.reserved() & set(doc.tokens)
        if clash:
            raise CorefDataError(
                f"{doc.doc_key}: document tokens collide with special symbols: {sorted(map(str, clash))}")

    def cluster_end(self, l: int) -> Token:
        if not 1 <= l <= self.max_clusters:
            raise CorefDataError(
                f"cluster {l} exceeds the mention-end family size {self.max_clusters}")
        return self.cluster_ends[l - 1]

    def cluster_end_label(self, tok: Token) -> Optional[int]:
        return self._cluster_end_index.get(tok)

    def spell(self, n: int) -> tuple[Token, ...]:
        """Canonical decimal spelling of a positive integer."""
        return tuple(self.integer_lexicon[int(ch)] for ch in str(n))

    def parse_integer(self, toks: Sequence[Token]) -> Optional[int]:
        """Integer value of a digit-token sequence, or None if malformed."""
        if not toks or any(t not in self._digit_value for t in toks):
            return None
        digits = "".join(str(self._digit_value[t]) for t in toks)
        if digits[0] == "0":
            return None
        return int(digits)


DEFAULT_SYMBOLS = SymbolTable()


@dataclass(frozen=True)
class Segment:
    """A token window of a parent document with its restricted annotation."""

    parent_doc_key: str
    token_range: tuple[int, int]  # inclusive 1-based positions in the parent
    document: Document            # re-indexed to 1..len(segment)
    annotation: CorefAnnotation
    dropped_spans: int = 0

    @property
    def doc_key(self) -> str:
        return self.document.doc_key


@dataclass
class Violation:
    """One invariant violation found by validate(); data, not an exception."""

    code: str
    message: str
    warning: bool = False

    def __str__(self):
        return f"{'warning' if self.warning else 'violation'}[{self.code}]: {self.message}"


def validate(ann: CorefAnnotation, doc: Document) -> list[Violation]:
    """Check every annotation invariant against doc; return all findings.

    Spans sharing (start, end) but carrying different cluster labels are
    reported as warnings rather than violations: nothing downstream breaks
    on them, but they are unusual enough to surface.
    """
    out: list[Violation] = []
    for span in ann:
        if span.end > len(doc):
            out.append(Violation(
                "span-range", f"span ({span.start},{span.end}) exceeds document length {len(doc)}"))
        if span.cluster > ann.num_clusters:
            out.append(Violation(
                "label-range",
                f"cluster {span.cluster} outside 1..{ann.num_clusters}"))
    used = {s.cluster for s in ann.spans}
    for l in range(1, ann.num_clusters + 1):
        if l not in used:
            out.append(Violation("label-gap", f"cluster label {l} has no mention"))
    seen_pos: dict[tuple[int, int], int] = {}
    for span in ann:
        pos = (span.start, span.end)
        if pos in seen_pos and seen_pos[pos] != span.cluster:
            out.append(Violation(
                "shared-span",
                f"span {pos} appears in clusters {seen_pos[pos]} and {span.cluster}",
                warning=True))
        seen_pos.setdefault(pos, span.cluster)
    return out


def is_valid(ann: CorefAnnotation, doc: Document) -> bool:
    """True when validate() finds no hard violations (warnings allowed)."""
    return not any(not v.warning for v in validate(ann, doc))


def validate_triples(triples: Sequence[tuple[int, int, int]], doc: Document,
                     ) -> tuple[CorefAnnotation, list[Violation]]:
    """Validate raw (start, end, cluster) triples, then the built annotation.

    Duplicate triples can only be seen here: CorefAnnotation stores a set,
    so readers that take external lists funnel through this entry point.
    """
    out: list[Violation] = []
    seen: set[tuple[int, int, int]] = set()
    spans: list[Span] = []
    for t in triples:
        if t in seen:
            out.append(Violation("duplicate", f"triple {t} listed more than once"))
            continue
        seen.add(t)
        try:
            spans.append(Span(*t))
        except CorefDataError as exc:
            out.append(Violation("malformed", str(exc)))
    ann = CorefAnnotation.from_spans(spans)
    out.extend(validate(ann, doc))
    return ann, out


def restrict_annotation(ann: CorefAnnotation, start: int, end: int,
                        ) -> tuple[CorefAnnotation, int]:
    """Restrict ann to the inclusive token range [start, end].

    Spans fully inside the range are re-indexed to range-local positions;
    cluster labels are renumbered densely by first appearance in canonical
    order.  Spans crossing the boundary are dropped; the drop count is
    returned alongside the restricted annotation.
    """
    kept: list[Span] = []
    dropped = 0
    for span in ann:
        if span.start >= start and span.end <= end:
            kept.append(Span(span.start - start + 1, span.end - start + 1, span.cluster))
        else:
            dropped += 1
    relabel: dict[int, int] = {}
    for span in sorted(kept, key=_canonical_key):
        relabel.setdefault(span.cluster, len(relabel) + 1)
    spans = frozenset(Span(s.start, s.end, relabel[s.cluster]) for s in kept)
    return CorefAnnotation(spans, len(relabel)), dropped


def dense_relabel(ann: CorefAnnotation) -> CorefAnnotation:
    """Renumber cluster labels densely by first appearance in canonical order."""
    relabel: dict[int, int] = {}
    for span in ann:
        relabel.setdefault(span.cluster, len(relabel) + 1)
    return ann.relabeled(relabel, len(relabel))


def crossing_pairs(ann: CorefAnnotation) -> list[tuple[Span, Span]]:
    """Pairs of spans that overlap without nesting.

    Such pairs cannot be expressed with balanced mention brackets, so the
    linearizer rejects annotations containing them.
    """
    spans = sorted(ann.spans, key=lambda s: (s.start, -s.end))
    out = []
    for i, a in enumerate(spans):
        for b in spans[i + 1:]:
            if b.start > a.end:
                break
            if b.end > a.end:  # b starts inside a but ends outside
                out.append((a, b))
    return out
