"""Codecs between coreference annotations and token sequences.

Each scheme produces a decoder-input sequence z (the linearization) and an
action sequence y from which z is recoverable step by step.  Full schemes
interleave mention markup with every document token; the partial scheme
keeps only the tagged mentions and defers localization to the aligner.

Encoding is strict: it rejects anything the markup cannot express.
Decoding is forgiving: model output that violates the markup is repaired
where the spec's repair rules apply and rejected only on structural
corruption (budget exhausted or a source-token mismatch in a full scheme).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

from .model import (
    EMPTY_ANNOTATION,
    CorefAnnotation,
    CorefDataError,
    DEFAULT_SYMBOLS,
    Document,
    Span,
    SymbolTable,
    Token,
    crossing_pairs,
    dense_relabel,
    is_valid,
)


class SchemeKind(enum.Enum):
    FULL_TOKEN = "full-token"
    FULL_COPY = "full-copy"
    INTEGER_FREE = "integer-free"
    INTEGER_BEFORE = "integer-before"
    ANTECEDENT_STRING = "antecedent-string"
    PARTIAL_TOKEN = "partial"


# Kinds whose action sequence uses the copy symbol for source tokens.
COPY_ACTION_KINDS = frozenset({SchemeKind.FULL_COPY, SchemeKind.INTEGER_FREE,
                               SchemeKind.INTEGER_BEFORE})
# Kinds with constrained-decoding mask rules; the other two are
# encode/decode codecs only and go through the unconstrained path.
MASKABLE_KINDS = frozenset({SchemeKind.FULL_TOKEN, SchemeKind.FULL_COPY,
                            SchemeKind.INTEGER_FREE, SchemeKind.PARTIAL_TOKEN})


@dataclass(frozen=True)
class Scheme:
    """A sequence representation: a kind plus the sentence-marker flag."""

    kind: SchemeKind
    sentence_markers: bool = False

    def __post_init__(self):
        if self.sentence_markers and self.kind is not SchemeKind.PARTIAL_TOKEN:
            raise CorefDataError(
                "sentence markers are only defined for the partial scheme")

    @property
    def copy_action(self) -> bool:
        return self.kind in COPY_ACTION_KINDS

    @property
    def partial(self) -> bool:
        return self.kind is SchemeKind.PARTIAL_TOKEN

    @property
    def maskable(self) -> bool:
        return self.kind in MASKABLE_KINDS

    def name(self) -> str:
        return self.kind.value + ("+markers" if self.sentence_markers else "")

    @classmethod
    def parse(cls, kind: str, sentence_markers: bool = False) -> "Scheme":
        return cls(SchemeKind(kind), sentence_markers)


ALL_SCHEMES = tuple(
    [Scheme(k) for k in SchemeKind] + [Scheme(SchemeKind.PARTIAL_TOKEN, True)])


class LinearizeError(CorefDataError):
    """The annotation cannot be expressed under the requested scheme."""


class ParseError(CorefDataError):
    """The sequence is structurally corrupt beyond the repair rules."""

    def __init__(self, message: str, position: int):
        super().__init__(f"position {position}: {message}")
        self.position = position


@dataclass(frozen=True)
class LinearizedPair:
    """Decoder input z and action sequence y for one document.

    z runs <s> ... </s>; y holds one action per generation step and ends
    with </s>, so len(z) == len(y) + 1 and under token action y == z[1:].
    """

    z: tuple[Token, ...]
    y: tuple[Token, ...]
    scheme: Scheme
    doc_key: str = ""

    def __post_init__(self):
        if len(self.z) != len(self.y) + 1:
            raise CorefDataError("z must have exactly one more token than y")


@dataclass
class Diagnostics:
    """Repairs applied while parsing a sequence; data, not failures."""

    dropped_unclosed: int = 0      # mentions still open at </s> or </sentence>
    dropped_empty: int = 0         # mention with no content or no usable label
    clamped_labels: int = 0        # integer above next-new clamped down
    junk_tokens: int = 0           # tokens skipped or logged out of place
    stray_closers: int = 0         # closers with nothing to close
    ambiguous_antecedents: int = 0
    unresolved_antecedents: int = 0
    marker_defects: int = 0        # sentence-marker structure repairs
    merged_duplicates: int = 0     # identical triples collapsed after repair
    truncated: bool = False        # sequence ended without </s>
    notes: list[str] = field(default_factory=list)

    def total_repairs(self) -> int:
        return (self.dropped_unclosed + self.dropped_empty + self.clamped_labels
                + self.junk_tokens + self.stray_closers + self.unresolved_antecedents
                + self.marker_defects + self.merged_duplicates)

    def clean(self) -> bool:
        return self.total_repairs() == 0 and not self.truncated

    def merge(self, other: "Diagnostics") -> None:
        for name in ("dropped_unclosed", "dropped_empty", "clamped_labels",
                     "junk_tokens", "stray_closers", "ambiguous_antecedents",
                     "unresolved_antecedents", "marker_defects", "merged_duplicates"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.truncated = self.truncated or other.truncated
        self.notes.extend(other.notes)


@dataclass(frozen=True)
class PartialParse:
    """A parsed partial linearization, before alignment.

    Span coordinates index into `content`, the sequence of non-special
    tokens in emission order.  sentence_ranges are half-open ranges over
    content positions, one per <sentence>...</sentence> group (empty when
    the scheme carries no markers).
    """

    content: tuple[Token, ...]
    spans: tuple[Span, ...]
    sentence_ranges: tuple[tuple[int, int], ...]

    def annotation(self) -> CorefAnnotation:
        return CorefAnnotation.from_spans(self.spans)


ParsedSequence = Union[CorefAnnotation, PartialParse]

DEFAULT_REPAIR_BUDGET = 100


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

def _close_order_key(span: Span) -> tuple[int, int, int]:
    # Mentions close left to right; at one endpoint the innermost (shortest)
    # closes first; identical boundaries close the smaller cluster first.
    return (span.end, -span.start, span.cluster)


def _open_order_key(span: Span) -> tuple[int, int]:
    # At one start position the outermost (longest) opens first; identical
    # boundaries open the larger cluster first so it closes last.
    return (-span.length, -span.cluster)


def _emission_relabel(ann: CorefAnnotation) -> tuple[CorefAnnotation, list[Span]]:
    """Renumber clusters by first appearance in close order.

    Returns the relabeled annotation and its spans sorted in close order,
    which drives both the autoregressive integer rule (a new cluster always
    takes the next integer) and the integer-free <new> action.
    """
    order = sorted(ann.spans, key=_close_order_key)
    relabel: dict[int, int] = {}
    for span in order:
        relabel.setdefault(span.cluster, len(relabel) + 1)
    new_spans = [Span(s.start, s.end, relabel[s.cluster]) for s in order]
    return CorefAnnotation(frozenset(new_spans), len(relabel)), new_spans


def linearize(doc: Document, ann: CorefAnnotation, scheme: Scheme,
              symbols: SymbolTable = DEFAULT_SYMBOLS) -> LinearizedPair:
    """Encode an annotation as a (z, y) sequence pair under `scheme`."""
    if not doc.tokens:
        raise LinearizeError(f"{doc.doc_key}: cannot linearize an empty document")
    symbols.check_document(doc)
    if not is_valid(ann, doc):
        raise LinearizeError(f"{doc.doc_key}: annotation fails validation")
    crossings = crossing_pairs(ann)
    if crossings:
        a, b = crossings[0]
        raise LinearizeError(
            f"{doc.doc_key}: spans ({a.start},{a.end}) and ({b.start},{b.end}) "
            "overlap without nesting; bracket markup cannot express that")

    ann, close_order = _emission_relabel(ann)
    kind = scheme.kind
    if kind is SchemeKind.INTEGER_FREE and ann.num_clusters > symbols.max_clusters:
        raise LinearizeError(
            f"{doc.doc_key}: {ann.num_clusters} clusters exceed the "
            f"</m_l> family size {symbols.max_clusters}")
    if scheme.sentence_markers:
        for span in ann.spans:
            if doc.sentence_of(span.start) != doc.sentence_of(span.end):
                raise LinearizeError(
                    f"{doc.doc_key}: span ({span.start},{span.end}) crosses a "
                    "sentence boundary; incompatible with sentence markers")

    opens_at: dict[int, list[Span]] = {}
    closes_at: dict[int, list[Span]] = {}
    for span in ann.spans:
        opens_at.setdefault(span.start, []).append(span)
        closes_at.setdefault(span.end, []).append(span)
    for spans in opens_at.values():
        spans.sort(key=_open_order_key)
    for spans in closes_at.values():
        spans.sort(key=_close_order_key)

    first_close: dict[int, Span] = {}
    for span in close_order:
        first_close.setdefault(span.cluster, span)
    # Antecedent strings refer to the cluster's first mention in document
    # order, which is what a reader would call the antecedent.
    first_in_doc: dict[int, Span] = {}
    for span in sorted(ann.spans, key=lambda s: (s.start, s.end, s.cluster)):
        first_in_doc.setdefault(span.cluster, span)

    sm = symbols
    body: list[Token] = []
    depth = 0

    def emit_open(span: Span) -> None:
        body.append(sm.mention_start)
        if kind is SchemeKind.INTEGER_BEFORE:
            body.extend(sm.spell(span.cluster))
            body.append(sm.separator)

    def emit_close(span: Span) -> None:
        if kind is SchemeKind.INTEGER_FREE:
            body.append(sm.cluster_end(span.cluster))
        elif kind is SchemeKind.INTEGER_BEFORE:
            body.append(sm.mention_end)
        elif kind is SchemeKind.ANTECEDENT_STRING:
            first = first_in_doc[span.cluster]
            if first != span:
                body.append(sm.separator)
                body.extend(doc.tokens[first.start - 1:first.end - 1 + 1])
            body.append(sm.mention_end)
        else:
            body.append(sm.separator)
            body.extend(sm.spell(span.cluster))
            body.append(sm.mention_end)

    for sent_idx, (s_start, s_end) in enumerate(doc.sentence_bounds, start=1):
        if scheme.sentence_markers:
            body.append(sm.sentence_start)
        for pos in range(s_start, s_end):
            for span in opens_at.get(pos, ()):
                emit_open(span)
                depth += 1
            if not scheme.partial or depth > 0:
                body.append(doc.token(pos))
            for span in closes_at.get(pos, ()):
                emit_close(span)
                depth -= 1
        if scheme.sentence_markers:
            body.append(sm.sentence_end)

    z = (sm.seq_start, *body, sm.seq_end)
    y = _actions_for(z, scheme, symbols)
    return LinearizedPair(z=z, y=tuple(y), scheme=scheme, doc_key=doc.doc_key)


def _actions_for(z: Sequence[Token], scheme: Scheme, sm: SymbolTable) -> list[Token]:
    """Derive the action sequence from z (one action per step, ends </s>)."""
    if not scheme.copy_action:
        return list(z[1:])
    literal = frozenset((sm.mention_start, sm.mention_end, sm.separator, sm.seq_end,
                         sm.sentence_start, sm.sentence_end)) | frozenset(sm.integer_lexicon)
    y: list[Token] = []
    max_seen = 0
    for tok in z[1:]:
        label = sm.cluster_end_label(tok)
        if label is not None:
            if label > max_seen:
                y.append(sm.new_cluster)
                max_seen = label
            else:
                y.append(tok)
        elif tok in literal:
            y.append(tok)
        else:
            y.append(sm.copy)
    return y


def realize_action(action: Token, next_source: Optional[Token], max_seen: int,
                   sm: SymbolTable = DEFAULT_SYMBOLS) -> Token:
    """Map an action token to the z token it stands for.

    <c> realizes as the next unconsumed source token; <new> realizes as the
    next fresh cluster-end symbol; everything else is itself.
    """
    if action == sm.copy:
        if next_source is None:
            raise CorefDataError("copy action with the source exhausted")
        return next_source
    if action == sm.new_cluster:
        return sm.cluster_end(max_seen + 1)
    return action


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------

@dataclass
class _Open:
    start: int                 # document cursor (full) or content position (partial)
    sep_at: Optional[int] = None   # content length when | was seen (partial)
    digits: Optional[list[Token]] = None   # pending integer spelling
    label: Optional[int] = None    # integer-before: label fixed at open
    antecedent: Optional[list[Token]] = None


class _Budget:
    def __init__(self, limit: int, diagnostics: Diagnostics):
        self.limit = limit
        self.diag = diagnostics

    def spend(self, position: int, what: str) -> None:
        if self.diag.total_repairs() >= self.limit:
            raise ParseError(f"repair budget exhausted at {what}", position)


def delinearize(z: Sequence[Token], doc: Document, scheme: Scheme,
                symbols: SymbolTable = DEFAULT_SYMBOLS,
                repair_budget: int = DEFAULT_REPAIR_BUDGET,
                ) -> tuple[ParsedSequence, Diagnostics]:
    """Parse a z sequence back into an annotation.

    Full schemes return a CorefAnnotation in document coordinates (the
    source tokens in z must reproduce the document prefix exactly).  The
    partial scheme returns a PartialParse in linearization-local
    coordinates for the aligner.  Repairable defects are counted in the
    returned Diagnostics; corruption past the repair budget raises
    ParseError with the offending position.
    """
    if not z or z[0] != symbols.seq_start:
        raise ParseError("sequence must begin with the start symbol", 0)
    if scheme.partial:
        return _parse_partial(z, scheme, symbols, repair_budget)
    return _parse_full(z, doc, scheme, symbols, repair_budget)


def _parse_full(z, doc, scheme, sm, repair_budget):
    diag = Diagnostics()
    budget = _Budget(repair_budget, diag)
    kind = scheme.kind
    cluster_end_labels = {} if kind is not SchemeKind.INTEGER_FREE else None
    cursor = 1
    stack: list[_Open] = []
    triples: list[tuple[int, int, int]] = []
    surfaces: list[tuple[Token, ...]] = []   # parse-order mention surfaces
    mention_cluster: list[int] = []
    max_seen = 0
    ended = False
    digit_set = frozenset(sm.integer_lexicon)

    def in_identity() -> bool:
        if not stack:
            return False
        top = stack[-1]
        return top.digits is not None or top.antecedent is not None

    def junk(i, msg):
        diag.junk_tokens += 1
        budget.spend(i, msg)

    def close_mention(i: int, label: Optional[int], end: int) -> None:
        nonlocal max_seen
        top = stack.pop()
        if label is None or end < top.start:
            diag.dropped_empty += 1
            budget.spend(i, "dropped mention")
            return
        if label > max_seen + 1:
            diag.clamped_labels += 1
            budget.spend(i, "clamped label")
            label = max_seen + 1
        max_seen = max(max_seen, label)
        triples.append((top.start, end, label))
        surfaces.append(doc.tokens[top.start - 1:end])
        mention_cluster.append(label)

    def resolve_antecedent(i: int, toks: list[Token]) -> int:
        nonlocal max_seen
        matches = [k for k, surf in enumerate(surfaces) if list(surf) == toks]
        if not matches:
            diag.unresolved_antecedents += 1
            budget.spend(i, "unresolved antecedent")
            max_seen += 1
            return max_seen
        if len(matches) > 1:
            diag.ambiguous_antecedents += 1
        return mention_cluster[matches[0]]

    for i, tok in enumerate(z[1:], start=1):
        if ended:
            junk(i, "token after end symbol")
            continue
        if tok == sm.seq_end:
            ended = True
            continue
        family_label = sm.cluster_end_label(tok)

        if kind is SchemeKind.INTEGER_FREE:
            if tok == sm.mention_start:
                stack.append(_Open(start=cursor))
            elif family_label is not None or tok == sm.new_cluster:
                if not stack:
                    diag.stray_closers += 1
                    budget.spend(i, "mention end with no open mention")
                    continue
                if tok == sm.new_cluster:
                    junk(i, "raw <new> action in z")
                    close_mention(i, max_seen + 1, cursor - 1)
                else:
                    close_mention(i, family_label, cursor - 1)
            elif tok in (sm.separator, sm.mention_end, sm.copy,
                         sm.sentence_start, sm.sentence_end, sm.seq_start):
                junk(i, f"unexpected {tok!r}")
            else:
                cursor = _consume_source(i, tok, doc, cursor, diag)
            continue

        # Integer-after families: full-token/copy, integer-before, antecedent.
        if in_identity():
            top = stack[-1]
            if tok == sm.mention_end:
                if top.antecedent is not None:
                    if kind is SchemeKind.ANTECEDENT_STRING and top.antecedent:
                        close_mention(i, resolve_antecedent(i, top.antecedent), cursor - 1)
                    else:
                        close_mention(i, None, cursor - 1)
                else:
                    close_mention(i, sm.parse_integer(top.digits), cursor - 1)
            elif top.digits is not None and tok in digit_set:
                top.digits.append(tok)
            elif top.antecedent is not None and tok not in (
                    sm.mention_start, sm.separator, sm.seq_start, sm.copy,
                    sm.new_cluster, sm.sentence_start, sm.sentence_end):
                top.antecedent.append(tok)
            elif kind is SchemeKind.INTEGER_BEFORE and tok == sm.separator:
                # Digits collected right after <m>; | pins the label and
                # content begins at the current cursor.
                top.label = sm.parse_integer(top.digits)
                top.digits = None
                top.start = cursor
            else:
                junk(i, f"unexpected {tok!r} in cluster identity")
            continue

        if tok == sm.mention_start:
            opener = _Open(start=cursor)
            if kind is SchemeKind.INTEGER_BEFORE:
                opener.digits = []
            stack.append(opener)
        elif tok == sm.separator:
            if not stack:
                diag.stray_closers += 1
                budget.spend(i, "separator outside any mention")
                continue
            if kind is SchemeKind.ANTECEDENT_STRING:
                stack[-1].antecedent = []
            elif kind is SchemeKind.INTEGER_BEFORE:
                junk(i, "second separator in mention")
            else:
                stack[-1].digits = []
        elif tok == sm.mention_end:
            if not stack:
                diag.stray_closers += 1
                budget.spend(i, "mention end with no open mention")
                continue
            if kind is SchemeKind.ANTECEDENT_STRING:
                # No separator: a first mention opening a fresh cluster.
                max_seen += 1
                close_mention(i, max_seen, cursor - 1)
            elif kind is SchemeKind.INTEGER_BEFORE:
                close_mention(i, stack[-1].label, cursor - 1)
            else:
                close_mention(i, None, cursor - 1)
        elif tok in (sm.copy, sm.new_cluster, sm.sentence_start, sm.sentence_end,
                     sm.seq_start) or family_label is not None:
            junk(i, f"unexpected {tok!r}")
        else:
            cursor = _consume_source(i, tok, doc, cursor, diag)

    if not ended:
        diag.truncated = True
    if stack:
        diag.dropped_unclosed += len(stack)

    unique: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int, int]] = set()
    for t in triples:
        if t in seen:
            diag.merged_duplicates += 1
        else:
            seen.add(t)
            unique.append(t)
    ann = dense_relabel(CorefAnnotation.from_spans(Span(*t) for t in unique))
    return ann, diag


def _consume_source(i, tok, doc, cursor, diag) -> int:
    if cursor > len(doc):
        raise ParseError(
            f"source token {tok!r} beyond the end of the document", i)
    expected = doc.token(cursor)
    if tok != expected:
        raise ParseError(
            f"source token {tok!r} does not match document token {expected!r} "
            f"at position {cursor}", i)
    return cursor + 1


def _parse_partial(z, scheme, sm, repair_budget):
    diag = Diagnostics()
    budget = _Budget(repair_budget, diag)
    content: list[Token] = []
    stack: list[_Open] = []
    spans: list[Span] = []
    ranges: list[tuple[int, int]] = []
    sent_start: Optional[int] = None
    max_seen = 0
    ended = False
    digit_set = frozenset(sm.integer_lexicon)

    def junk(i, msg):
        diag.junk_tokens += 1
        budget.spend(i, msg)

    def drop_open_mentions(i):
        if stack:
            diag.dropped_unclosed += len(stack)
            budget.spend(i, "sentence closed over open mentions")
            stack.clear()

    def close_sentence(i):
        nonlocal sent_start
        drop_open_mentions(i)
        if sent_start is not None:
            ranges.append((sent_start, len(content) + 1))
            sent_start = None

    for i, tok in enumerate(z[1:], start=1):
        if ended:
            junk(i, "token after end symbol")
            continue
        if tok == sm.seq_end:
            ended = True
            continue
        if tok == sm.sentence_start:
            if not scheme.sentence_markers:
                junk(i, "sentence marker under a marker-free scheme")
                continue
            if sent_start is not None:
                diag.marker_defects += 1
                budget.spend(i, "sentence opened inside a sentence")
                close_sentence(i)
            sent_start = len(content) + 1
            continue
        if tok == sm.sentence_end:
            if not scheme.sentence_markers:
                junk(i, "sentence marker under a marker-free scheme")
                continue
            if sent_start is None:
                diag.marker_defects += 1
                budget.spend(i, "sentence close without open")
                continue
            close_sentence(i)
            continue
        if scheme.sentence_markers and sent_start is None:
            diag.marker_defects += 1
            budget.spend(i, "content outside sentence markers")
            sent_start = len(content) + 1

        in_identity = bool(stack) and stack[-1].sep_at is not None
        if tok == sm.mention_start:
            if in_identity:
                junk(i, "mention start in cluster identity")
                continue
            stack.append(_Open(start=len(content) + 1))
        elif tok == sm.separator:
            if not stack:
                diag.stray_closers += 1
                budget.spend(i, "separator outside any mention")
                continue
            if in_identity:
                junk(i, "second separator in mention")
                continue
            stack[-1].sep_at = len(content)
            stack[-1].digits = []
        elif tok == sm.mention_end:
            if not stack:
                diag.stray_closers += 1
                budget.spend(i, "mention end with no open mention")
                continue
            top = stack.pop()
            label = sm.parse_integer(top.digits) if top.digits is not None else None
            end = top.sep_at if top.sep_at is not None else len(content)
            if label is None or end < top.start:
                diag.dropped_empty += 1
                budget.spend(i, "dropped mention")
                continue
            if label > max_seen + 1:
                diag.clamped_labels += 1
                budget.spend(i, "clamped label")
                label = max_seen + 1
            max_seen = max(max_seen, label)
            spans.append(Span(top.start, end, label))
        elif in_identity and tok in digit_set:
            stack[-1].digits.append(tok)
        elif tok in (sm.copy, sm.new_cluster, sm.seq_start) or \
                sm.cluster_end_label(tok) is not None:
            junk(i, f"unexpected {tok!r}")
        else:
            if in_identity:
                # Appendix-level masks permit sentence tokens here; they are
                # alignable content but not part of the closing mention.
                diag.junk_tokens += 1
                budget.spend(i, "source token in cluster identity")
            content.append(tok)

    if not ended:
        diag.truncated = True
    if scheme.sentence_markers and sent_start is not None:
        diag.marker_defects += 1
        close_sentence(len(z))
    elif stack:
        diag.dropped_unclosed += len(stack)

    parse = PartialParse(tuple(content), tuple(spans), tuple(ranges))
    return parse, diag


# ---------------------------------------------------------------------------
# Serialization (newline-delimited records handled by corpus/cli)
# ---------------------------------------------------------------------------

def pair_to_record(pair: LinearizedPair) -> dict:
    return {
        "doc_key": pair.doc_key,
        "scheme": pair.scheme.kind.value,
        "sentence_markers": pair.scheme.sentence_markers,
        "z": list(pair.z),
        "y": list(pair.y),
    }


def pair_from_record(record: dict) -> LinearizedPair:
    scheme = Scheme.parse(record["scheme"], record.get("sentence_markers", False))
    return LinearizedPair(z=tuple(record["z"]), y=tuple(record["y"]),
                          scheme=scheme, doc_key=record.get("doc_key", ""))
