"""Corpus ingestion and preparation.

Readers and writers for the CoNLL-2012 column format and a newline-
delimited JSON record format, plus speaker insertion and overlapped
segmentation for long documents.  External formats use 0-based token
indices and arbitrary cluster ids; everything internal is 1-based with
dense cluster labels.
"""

from __future__ import annotations

import io
import json
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, TextIO, Union

from .model import (
    CorefAnnotation,
    CorefDataError,
    Document,
    Segment,
    Span,
    dense_relabel,
    restrict_annotation,
)

DocAnn = tuple[Document, CorefAnnotation]


@dataclass(frozen=True)
class PrepConfig:
    """Preparation knobs.

    Segment lengths are counted in document tokens by default; length_of
    can weigh tokens (e.g. by subword count) when a pretrained vocabulary
    is in play.
    """

    max_length: int = 2048
    overlap: int = 1024
    insert_speakers: bool = False
    sentence_markers: bool = False
    inference_max_length: int = 4096
    speaker_delimiters: tuple[str, str] = ("<speaker>", "</speaker>")
    length_of: Callable[[object], int] = lambda tok: 1

    def __post_init__(self):
        if not 0 <= self.overlap < self.max_length:
            raise CorefDataError("overlap must satisfy 0 <= overlap < max_length")


# ---------------------------------------------------------------------------
# CoNLL-2012 column format
# ---------------------------------------------------------------------------

_BEGIN_RE = re.compile(r"#begin document \((?P<name>.*?)\)(?:;\s*part\s*(?P<part>\d+))?")
_MARKER_RE = re.compile(r"^(?:\((?P<open>\d+)|(?P<close>\d+)\)|\((?P<single>\d+)\))$")

WORD_COLUMN = 3
SPEAKER_COLUMN = 9


def doc_key_of(name: str, part: Optional[str]) -> str:
    return f"{name}_{int(part)}" if part is not None else name


def read_conll(source: Union[str, TextIO]) -> list[DocAnn]:
    """Parse a CoNLL-2012 file into documents and annotations.

    Handles multi-line and nested "(n ... n)" markers (most recent open of
    a cluster closes first) and stacked "|"-joined markers.  Malformed
    nesting raises with the offending line number.
    """
    if isinstance(source, str):
        with open(source, encoding="utf-8") as handle:
            return read_conll(handle)

    docs: list[DocAnn] = []
    name = part = None
    sentences: list[list[str]] = []
    speakers: list[list[Optional[str]]] = []
    current_tokens: list[str] = []
    current_speakers: list[Optional[str]] = []
    open_marks: dict[int, list[int]] = {}
    triples: list[tuple[int, int, int]] = []
    pos = 0

    def flush_sentence():
        if current_tokens:
            sentences.append(list(current_tokens))
            speakers.append(list(current_speakers))
            current_tokens.clear()
            current_speakers.clear()

    def flush_document(lineno: int):
        nonlocal open_marks, triples, pos
        flush_sentence()
        if any(open_marks.values()):
            raise CorefDataError(
                f"line {lineno}: document {name!r} ends with unclosed mentions "
                f"for clusters {sorted(c for c, st in open_marks.items() if st)}")
        if not sentences:
            raise CorefDataError(f"line {lineno}: document {name!r} has no tokens")
        spk = speakers if any(s is not None for sent in speakers for s in sent) else None
        doc = Document.from_sentences(doc_key_of(name, part), sentences, spk)
        relabel: dict[int, int] = {}
        spans = []
        for start, end, ext in sorted(triples, key=lambda t: (t[0], t[1], t[2])):
            label = relabel.setdefault(ext, len(relabel) + 1)
            spans.append(Span(start, end, label))
        docs.append((doc, CorefAnnotation.from_spans(spans)))
        sentences.clear()
        speakers.clear()
        open_marks = {}
        triples = []
        pos = 0

    for lineno, line in enumerate(source, start=1):
        line = line.rstrip("\n")
        if line.startswith("#begin"):
            match = _BEGIN_RE.match(line)
            if not match:
                raise CorefDataError(f"line {lineno}: malformed #begin line")
            name, part = match.group("name"), match.group("part")
            continue
        if line.startswith("#end"):
            flush_document(lineno)
            name = part = None
            continue
        if not line.strip():
            flush_sentence()
            continue
        if name is None:
            raise CorefDataError(f"line {lineno}: token row outside any document")
        cols = line.split()
        if len(cols) < WORD_COLUMN + 2:
            raise CorefDataError(
                f"line {lineno}: expected at least {WORD_COLUMN + 2} columns, "
                f"got {len(cols)}")
        pos += 1
        current_tokens.append(cols[WORD_COLUMN])
        spk = cols[SPEAKER_COLUMN] if len(cols) > SPEAKER_COLUMN + 1 else None
        current_speakers.append(None if spk in (None, "-", "__") else spk)
        coref = cols[-1]
        if coref != "-":
            for item in coref.split("|"):
                match = _MARKER_RE.match(item)
                if not match:
                    raise CorefDataError(
                        f"line {lineno}: malformed coreference marker {item!r}")
                if match.group("open") is not None:
                    open_marks.setdefault(int(match.group("open")), []).append(pos)
                elif match.group("single") is not None:
                    cid = int(match.group("single"))
                    triples.append((pos, pos, cid))
                else:
                    cid = int(match.group("close"))
                    stack = open_marks.get(cid)
                    if not stack:
                        raise CorefDataError(
                            f"line {lineno}: close marker for cluster {cid} "
                            "with no matching open")
                    triples.append((stack.pop(), pos, cid))
    if name is not None:
        raise CorefDataError("file ended inside a document (missing #end)")
    return docs


def write_conll(target: Union[str, TextIO], items: Iterable[DocAnn]) -> None:
    """Write documents in CoNLL-2012 columns (word, speaker, coref).

    Marker order within a cell is canonical: opens outermost-first, then
    single-token mentions, then closes innermost-first.  Cluster ids are
    written 0-based.
    """
    if isinstance(target, str):
        with open(target, "w", encoding="utf-8") as handle:
            write_conll(handle, items)
            return

    for doc, ann in items:
        for span in ann.spans:
            if span.end > len(doc):
                raise CorefDataError(
                    f"{doc.doc_key}: span ({span.start},{span.end}) out of range")
        name, _, part = doc.doc_key.rpartition("_")
        if not name or not part.isdigit():
            name, part = doc.doc_key, "0"
        opens: dict[int, list[Span]] = {}
        closes: dict[int, list[Span]] = {}
        singles: dict[int, list[Span]] = {}
        for span in ann.spans:
            if span.start == span.end:
                singles.setdefault(span.start, []).append(span)
            else:
                opens.setdefault(span.start, []).append(span)
                closes.setdefault(span.end, []).append(span)
        print(f"#begin document ({name}); part {int(part):03d}", file=target)
        for s_idx, (s_start, s_end) in enumerate(doc.sentence_bounds):
            for offset, pos in enumerate(range(s_start, s_end)):
                marks = [f"({sp.cluster - 1}"
                         for sp in sorted(opens.get(pos, ()), key=lambda s: (-s.length, s.cluster))]
                marks += [f"({sp.cluster - 1})"
                          for sp in sorted(singles.get(pos, ()), key=lambda s: s.cluster)]
                marks += [f"{sp.cluster - 1})"
                          for sp in sorted(closes.get(pos, ()), key=lambda s: (s.length, s.cluster))]
                coref = "|".join(marks) if marks else "-"
                speaker = "-"
                if doc.speakers is not None and doc.speakers[pos - 1] is not None:
                    speaker = str(doc.speakers[pos - 1])
                cols = [name, str(int(part)), str(offset), str(doc.token(pos)),
                        "-", "-", "-", "-", "-", speaker, "*", coref]
                print(" ".join(cols), file=target)
            print(file=target)
        print("#end document", file=target)


# ---------------------------------------------------------------------------
# Annotation records (newline-delimited JSON)
# ---------------------------------------------------------------------------

def record_of(doc: Document, ann: CorefAnnotation) -> dict:
    record = {
        "doc_key": doc.doc_key,
        "sentences": [list(doc.sentence_tokens(i)) for i in range(1, doc.num_sentences + 1)],
        "clusters": [[[s - 1, e - 1] for s, e in cluster] for cluster in ann.clusters()],
    }
    if doc.speakers is not None:
        record["speakers"] = [
            list(doc.speakers[a - 1:b - 1]) for a, b in doc.sentence_bounds]
    return record


def record_to_doc_ann(record: dict) -> DocAnn:
    sentences = record["sentences"]
    shapes_match = ("speakers" not in record or record["speakers"] is None
                    or [len(s) for s in record["speakers"]] == [len(s) for s in sentences])
    if not shapes_match:
        raise CorefDataError(
            f"{record.get('doc_key', '?')}: speakers do not parallel sentences")
    doc = Document.from_sentences(record["doc_key"], sentences, record.get("speakers"))
    spans = []
    for label, cluster in enumerate(record.get("clusters", []), start=1):
        for start, end in cluster:
            if not 0 <= start <= end < len(doc):
                raise CorefDataError(
                    f"{record['doc_key']}: cluster span [{start},{end}] out of range")
            spans.append(Span(start + 1, end + 1, label))
    return doc, CorefAnnotation.from_spans(spans)


def read_records(source: Union[str, TextIO]) -> list[DocAnn]:
    if isinstance(source, str):
        with open(source, encoding="utf-8") as handle:
            return read_records(handle)
    return [record_to_doc_ann(json.loads(line))
            for line in source if line.strip()]


def write_records(target: Union[str, TextIO], items: Iterable[DocAnn]) -> None:
    if isinstance(target, str):
        with open(target, "w", encoding="utf-8") as handle:
            write_records(handle, items)
            return
    for doc, ann in items:
        print(json.dumps(record_of(doc, ann)), file=target)


def sniff_format(path: str) -> str:
    if path.endswith((".jsonl", ".json", ".jsonlines")):
        return "records"
    return "conll"


def read_corpus(path: str, fmt: Optional[str] = None) -> list[DocAnn]:
    fmt = fmt or sniff_format(path)
    if fmt == "records":
        return read_records(path)
    if fmt == "conll":
        return read_conll(path)
    raise CorefDataError(f"unknown corpus format {fmt!r}")


def write_corpus(path: str, items: Iterable[DocAnn], fmt: Optional[str] = None) -> None:
    fmt = fmt or sniff_format(path)
    if fmt == "records":
        write_records(path, items)
    elif fmt == "conll":
        write_conll(path, items)
    else:
        raise CorefDataError(f"unknown corpus format {fmt!r}")


# ---------------------------------------------------------------------------
# Speaker insertion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpeakerMap:
    """Position mapping between an original document and its spliced copy."""

    to_new: dict[int, int]       # original position -> spliced position
    to_original: dict[int, int]  # spliced position (real tokens only) -> original

    def map_annotation(self, ann: CorefAnnotation) -> CorefAnnotation:
        spans = frozenset(Span(self.to_new[s.start], self.to_new[s.end], s.cluster)
                          for s in ann.spans)
        return CorefAnnotation(spans, ann.num_clusters)

    def unmap_annotation(self, ann: CorefAnnotation,
                         ) -> tuple[CorefAnnotation, int]:
        """Back to original coordinates.  Endpoints that land on spliced
        speaker tokens are clamped inward; spans that vanish are dropped
        and tallied."""
        real = sorted(self.to_original)
        spans = []
        dropped = 0
        for span in ann.spans:
            start, end = span.start, span.end
            while start <= end and start not in self.to_original:
                start += 1
            while end >= start and end not in self.to_original:
                end -= 1
            if start > end:
                dropped += 1
                continue
            spans.append(Span(self.to_original[start], self.to_original[end],
                              span.cluster))
        ann_out = dense_relabel(CorefAnnotation.from_spans(spans))
        return ann_out, dropped


def insert_speakers(doc: Document, config: PrepConfig = PrepConfig(),
                    ) -> tuple[Document, SpeakerMap]:
    """Splice speaker names into the token stream at every speaker change.

    The name, wrapped in the configured delimiter tokens, is inserted
    before the first token of each maximal same-speaker run after the
    first.  A single-speaker document comes back unchanged.
    """
    if doc.speakers is None:
        identity = {i: i for i in range(1, len(doc) + 1)}
        return doc, SpeakerMap(identity, dict(identity))
    opener, closer = config.speaker_delimiters
    splices: dict[int, list[str]] = {}
    for pos in range(2, len(doc) + 1):
        spk = doc.speakers[pos - 1]
        if spk is not None and spk != doc.speakers[pos - 2]:
            splices[pos] = [opener, *str(spk).split(), closer]

    if not splices:
        identity = {i: i for i in range(1, len(doc) + 1)}
        return doc, SpeakerMap(identity, dict(identity))

    new_tokens: list = []
    new_speakers: list = []
    to_new: dict[int, int] = {}
    to_original: dict[int, int] = {}
    new_bounds: list[tuple[int, int]] = []
    for a, b in doc.sentence_bounds:
        bound_start = len(new_tokens) + 1
        for pos in range(a, b):
            for tok in splices.get(pos, ()):
                new_tokens.append(tok)
                new_speakers.append(doc.speakers[pos - 1])
            to_new[pos] = len(new_tokens) + 1
            to_original[len(new_tokens) + 1] = pos
            new_tokens.append(doc.token(pos))
            new_speakers.append(doc.speakers[pos - 1])
        new_bounds.append((bound_start, len(new_tokens) + 1))
    spliced = Document(doc.doc_key, tuple(new_tokens), tuple(new_bounds),
                       tuple(new_speakers))
    return spliced, SpeakerMap(to_new, to_original)


# ---------------------------------------------------------------------------
# Segmentation and merge
# ---------------------------------------------------------------------------

def segment(doc: Document, ann: CorefAnnotation, config: PrepConfig = PrepConfig(),
            ) -> list[Segment]:
    """Overlapped fixed-stride windows over the token sequence.

    Windows advance by max_length - overlap and stop once one reaches the
    end of the document, so a document no longer than max_length yields
    exactly one segment.
    """
    lengths = [config.length_of(tok) for tok in doc.tokens]
    n = len(doc)
    stride_budget = config.max_length - config.overlap
    segments: list[Segment] = []
    start = 1
    while True:
        end = start
        used = 0
        while end <= n and used + lengths[end - 1] <= config.max_length:
            used += lengths[end - 1]
            end += 1
        end -= 1
        if end < start:
            raise CorefDataError(
                f"{doc.doc_key}: token at position {start} alone exceeds "
                f"max_length {config.max_length}")
        restricted, dropped = restrict_annotation(ann, start, end)
        sub_doc = _slice_document(doc, start, end, len(segments))
        segments.append(Segment(doc.doc_key, (start, end), sub_doc, restricted,
                                dropped))
        if end >= n:
            return segments
        next_start = start
        used = 0
        while next_start <= end and used + lengths[next_start - 1] <= stride_budget:
            used += lengths[next_start - 1]
            next_start += 1
        start = max(next_start, start + 1)


def _slice_document(doc: Document, start: int, end: int, index: int) -> Document:
    tokens = doc.tokens[start - 1:end]
    bounds = []
    for a, b in doc.sentence_bounds:
        lo, hi = max(a, start), min(b - 1, end)
        if lo <= hi:
            bounds.append((lo - start + 1, hi - start + 2))
    speakers = doc.speakers[start - 1:end] if doc.speakers is not None else None
    return Document(f"{doc.doc_key}#seg{index}", tokens, tuple(bounds), speakers)


def merge_segment_predictions(pieces: Sequence[tuple[Segment, CorefAnnotation]],
                              ) -> CorefAnnotation:
    """Stitch per-segment predictions back into document coordinates.

    Identical spans predicted by two segments link their clusters (simple
    union-find); remaining clusters are renumbered densely.
    """
    parent: dict[tuple[int, int], tuple[int, int]] = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    span_owner: dict[tuple[int, int], tuple[int, int]] = {}
    span_nodes: list[tuple[tuple[int, int], tuple[int, int]]] = []
    for idx, (seg, ann) in enumerate(pieces):
        offset = seg.token_range[0] - 1
        for span in ann.spans:
            node = (idx, span.cluster)
            parent.setdefault(node, node)
            doc_span = (span.start + offset, span.end + offset)
            span_nodes.append((doc_span, node))
            if doc_span in span_owner:
                union(span_owner[doc_span], node)
            else:
                span_owner[doc_span] = node

    cluster_ids: dict[tuple[int, int], int] = {}
    triples = set()
    for doc_span, node in sorted(span_nodes, key=lambda it: (it[0], it[1])):
        root = find(node)
        label = cluster_ids.setdefault(root, len(cluster_ids) + 1)
        triples.add((*doc_span, label))
    return dense_relabel(CorefAnnotation.from_spans(Span(*t) for t in triples))


def write_predictions(target: Union[str, TextIO], items: Iterable[DocAnn],
                      fmt: str = "conll") -> None:
    """Emit predictions in the requested external format."""
    if fmt == "conll":
        write_conll(target, items)
    elif fmt == "records":
        write_records(target, items)
    else:
        raise CorefDataError(f"unknown prediction format {fmt!r}")
