"""Seeded random documents and annotations for tests and experiments.

All generators take a random.Random so every corpus is reproducible from
one seed.  Span sets are non-crossing by construction (nesting allowed),
matching what the bracket codecs can express.
"""

from __future__ import annotations

import random
import string
from typing import Optional, Sequence

from .model import CorefAnnotation, Document, Span, dense_relabel

DEFAULT_ALPHABET = tuple(string.ascii_lowercase[:12])


def random_document(rng: random.Random, doc_key: str = "synth",
                    min_tokens: int = 1, max_tokens: int = 60,
                    alphabet: Sequence[str] = DEFAULT_ALPHABET,
                    max_sentence_len: int = 12) -> Document:
    n = rng.randint(min_tokens, max_tokens)
    tokens = [rng.choice(alphabet) for _ in range(n)]
    bounds = []
    pos = 1
    while pos <= n:
        end = min(pos + rng.randint(1, max_sentence_len), n + 1)
        bounds.append((pos, end))
        pos = end
    return Document(doc_key, tuple(tokens), tuple(bounds))


def _conflicts(cand: tuple[int, int], kept: Sequence[tuple[int, int]]) -> bool:
    cs, ce = cand
    for ks, ke in kept:
        if cs < ks <= ce < ke or ks < cs <= ke < ce:
            return True
    return False


def random_annotation(rng: random.Random, doc: Document,
                      max_clusters: int = 8, max_spans: int = 12,
                      max_span_len: int = 4, within_sentence: bool = False,
                      allow_shared_spans: bool = False) -> CorefAnnotation:
    """A valid, non-crossing annotation over doc.

    within_sentence keeps every mention inside one sentence (required when
    sentence markers are in play).  allow_shared_spans occasionally puts
    one (start, end) position in two clusters, which validate() only warns
    about.
    """
    n = len(doc)
    target = rng.randint(0, max_spans)
    kept: list[tuple[int, int]] = []
    triples: set[tuple[int, int, int]] = set()
    for _ in range(target * 4):
        if len(kept) >= target:
            break
        length = min(rng.randint(1, max_span_len), n)
        if within_sentence:
            s_start, s_end = rng.choice(doc.sentence_bounds)
            if s_end - s_start < length:
                continue
            start = rng.randint(s_start, s_end - length)
        else:
            start = rng.randint(1, n - length + 1)
        cand = (start, start + length - 1)
        if _conflicts(cand, kept):
            continue
        cluster = rng.randint(1, max_clusters)
        if (*cand, cluster) in triples:
            continue
        if cand in {(s, e) for s, e, _ in triples} and not allow_shared_spans:
            continue
        kept.append(cand)
        triples.add((*cand, cluster))
    ann = CorefAnnotation.from_spans(Span(*t) for t in triples)
    return dense_relabel(ann)


def random_pair(rng: random.Random, doc_key: str = "synth", **kwargs,
                ) -> tuple[Document, CorefAnnotation]:
    doc_kwargs = {k: kwargs.pop(k) for k in
                  ("min_tokens", "max_tokens", "alphabet", "max_sentence_len")
                  if k in kwargs}
    doc = random_document(rng, doc_key, **doc_kwargs)
    return doc, random_annotation(rng, doc, **kwargs)


def random_corpus(seed: int, size: int, key_prefix: str = "synth", **kwargs,
                  ) -> list[tuple[Document, CorefAnnotation]]:
    rng = random.Random(seed)
    return [random_pair(rng, f"{key_prefix}-{i}", **kwargs) for i in range(size)]


def repeated_forms_corpus(seed: int, size: int = 20, sentences: int = 5,
                          sentence_len: int = 9, shared_vocab: int = 5,
                          shared_mention_rate: float = 0.3,
                          ) -> list[tuple[Document, CorefAnnotation]]:
    """Documents with a minority of repeated surface forms.

    Most tokens are unique to one position (mentions over them localize
    exactly even without sentence pairing); a small shared vocabulary
    recurs across sentences, and mentions drawn from it are ambiguous for
    a global alignment but not for a sentence-paired one.  Tokens are
    unique within each sentence and per-sentence mention multisets are
    unique across sentences.
    """
    rng = random.Random(seed)
    shared = [f"s{i}" for i in range(shared_vocab)]
    out = []
    for d in range(size):
        while True:
            sents = []
            fresh = 0
            for s_idx in range(sentences):
                n_shared = rng.randint(1, 2)
                picks = rng.sample(shared, n_shared)
                sent = []
                for _ in range(sentence_len - n_shared):
                    sent.append(f"u{d}_{fresh}")
                    fresh += 1
                for tok in picks:
                    sent.insert(rng.randrange(len(sent) + 1), tok)
                sents.append(sent)
            doc = Document.from_sentences(f"rep-{d}", sents)
            triples = []
            kept: list[tuple[int, int]] = []
            for s_start, s_end in doc.sentence_bounds:
                for _ in range(rng.randint(1, 3)):
                    if rng.random() < shared_mention_rate:
                        starts = [p for p in range(s_start, s_end)
                                  if doc.token(p) in shared]
                        if not starts:
                            continue
                        start, length = rng.choice(starts), 1
                    else:
                        length = rng.randint(1, 2)
                        if s_end - s_start < length:
                            continue
                        start = rng.randint(s_start, s_end - length)
                    cand = (start, start + length - 1)
                    if _conflicts(cand, kept) or cand in {(s, e) for s, e, _ in triples}:
                        continue
                    kept.append(cand)
                    triples.append((*cand, rng.randint(1, 3)))
            if not triples:
                continue
            ann = dense_relabel(CorefAnnotation.from_spans(Span(*t) for t in triples))
            if _sentence_multisets_unique(doc, ann):
                out.append((doc, ann))
                break
    return out


def _sentence_multisets_unique(doc: Document, ann: CorefAnnotation) -> bool:
    """True when no two sentences carry the same multiset of mention surfaces."""
    per_sentence: dict[int, list[tuple]] = {}
    for span in ann:
        sent = doc.sentence_of(span.start)
        if sent != doc.sentence_of(span.end):
            return False
        per_sentence.setdefault(sent, []).append(
            tuple(doc.tokens[span.start - 1:span.end]))
    seen = set()
    for forms in per_sentence.values():
        key = tuple(sorted(forms))
        if key in seen:
            return False
        seen.add(key)
    return True
