"""Mention recovery for partial linearizations via affine-gap alignment.

Tokens are matched with score +1 (equal) / -1 (unequal) and unaligned runs
of length n cost g(n) = -1 - p*(n-1), so a gap pays its opening once and p
per additional token.  Gotoh's three-matrix dynamic program finds an
optimal global alignment in O(T'K); end gaps are penalized like any other
gap, which matches how the worked accounting counts a leading gap.

Tie-breaking is deterministic: the backtrace prefers a match over either
gap and otherwise a source-side gap, which lands repeated surface forms on
their rightmost (densest) occurrence block.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .model import CorefAnnotation, CorefDataError, Document, Span, Token, dense_relabel
from .linearize import Diagnostics, PartialParse

Normalizer = Optional[Callable[[Token], Token]]


@dataclass(frozen=True)
class AlignmentProblem:
    """One source/target token alignment instance.

    `spans` are mention spans in target-local coordinates, carried through
    so a projection step can translate them once the alignment is known.
    gap_slope is the paper's p; the length-n gap cost is -1 - p*(n-1).
    """

    source: tuple[Token, ...]
    target: tuple[Token, ...]
    spans: tuple[Span, ...] = ()
    match: float = 1.0
    mismatch: float = -1.0
    gap_open: float = -1.0
    gap_slope: float = 0.0
    normalize: Normalizer = None

    def __post_init__(self):
        if self.gap_slope < 0:
            raise CorefDataError("gap slope p must be >= 0")
        if not self.source:
            raise CorefDataError("alignment needs a non-empty source")

    def gap_cost(self, n: int) -> float:
        return 0.0 if n == 0 else self.gap_open - self.gap_slope * (n - 1)


@dataclass(frozen=True)
class Alignment:
    """A monotone partial matching between source and target positions.

    pairs hold (source_index, target_index), 1-based, strictly increasing
    in both coordinates; every position appears at most once.
    """

    pairs: tuple[tuple[int, int], ...]
    score: float

    def source_of(self) -> dict[int, int]:
        return {t: s for s, t in self.pairs}

    def shifted(self, source_offset: int, target_offset: int) -> "Alignment":
        return Alignment(tuple((s + source_offset, t + target_offset)
                               for s, t in self.pairs), self.score)


_M, _X, _Y = 0, 1, 2  # match, source-side gap, target-side gap


def gotoh_align(problem: AlignmentProblem) -> Alignment:
    """Optimal affine-gap alignment of problem.target onto problem.source."""
    norm = problem.normalize or (lambda t: t)
    src = [norm(t) for t in problem.source]
    tgt = [norm(t) for t in problem.target]
    n, k = len(src), len(tgt)
    go, ge = problem.gap_open, -problem.gap_slope
    neg = -np.inf

    M = np.full((n + 1, k + 1), neg)
    X = np.full((n + 1, k + 1), neg)
    Y = np.full((n + 1, k + 1), neg)
    M[0, 0] = 0.0
    if k:
        Y[0, 1:] = go + ge * np.arange(k)

    # Substitution scores against the target, one source row at a time.
    tgt_arr = np.array(tgt, dtype=object) if k else None
    for i in range(1, n + 1):
        if k:
            s_row = np.where(tgt_arr == src[i - 1], problem.match, problem.mismatch
                             ).astype(float)
        prev_best = np.maximum(np.maximum(M[i - 1], X[i - 1]), Y[i - 1])
        if k:
            M[i, 1:] = s_row + prev_best[:-1]
        X[i] = np.maximum(M[i - 1] + go, np.maximum(X[i - 1] + ge, Y[i - 1] + go))
        # Y[i, j] = max(B[j-1] + go, Y[i, j-1] + ge) as a running maximum.
        if k:
            B = np.maximum(M[i], X[i])
            D = B[:-1] - ge * np.arange(k) + (go - ge)
            Y[i, 1:] = np.maximum.accumulate(D) + ge * np.arange(1, k + 1)

    finals = (M[n, k], X[n, k], Y[n, k])
    # argmax takes the first maximum, which encodes the M > X > Y preference.
    state = int(np.argmax(finals))
    score = float(finals[state])

    pairs: list[tuple[int, int]] = []
    i, j = n, k
    while i > 0 or j > 0:
        if state == _M:
            pairs.append((i, j))
            cands = (M[i - 1, j - 1], X[i - 1, j - 1], Y[i - 1, j - 1])
            i, j = i - 1, j - 1
        elif state == _X:
            cands = (M[i - 1, j] + go, X[i - 1, j] + ge, Y[i - 1, j] + go)
            i = i - 1
        else:
            cands = (M[i, j - 1] + go, X[i, j - 1] + go, Y[i, j - 1] + ge)
            j = j - 1
        state = int(np.argmax(cands))
    pairs.reverse()
    return Alignment(tuple(pairs), score)


@dataclass(frozen=True)
class ProjectionReport:
    """Outcome of projecting target-local mention spans onto the source."""

    annotation: CorefAnnotation
    dropped: int = 0     # spans with an unaligned endpoint
    merged: int = 0      # identical triples collapsed after projection


def project_mentions(alignment: Alignment, spans: Sequence[Span]) -> ProjectionReport:
    """Map target-local spans through the alignment into source coordinates.

    A span survives only if both endpoints are aligned; monotonicity of the
    matching keeps nesting intact.
    """
    source_of = alignment.source_of()
    triples: list[tuple[int, int, int]] = []
    dropped = 0
    for span in spans:
        s = source_of.get(span.start)
        e = source_of.get(span.end)
        if s is None or e is None:
            dropped += 1
            continue
        triples.append((s, e, span.cluster))
    merged = len(triples) - len(set(triples))
    ann = dense_relabel(CorefAnnotation.from_spans(Span(*t) for t in set(triples)))
    return ProjectionReport(ann, dropped, merged)


def sentence_constrained_align(doc: Document, parse: PartialParse,
                               gap_slope: float = 0.0,
                               normalize: Normalizer = None) -> Alignment:
    """Align each predicted sentence group to the source sentence of the
    same index and concatenate the per-sentence alignments.

    Surplus sentences on either side are left entirely unaligned and their
    tokens are charged as single gap runs.
    """
    if not parse.sentence_ranges:
        raise CorefDataError("parse carries no sentence markers")
    pairs: list[tuple[int, int]] = []
    score = 0.0
    n_pairs = min(doc.num_sentences, len(parse.sentence_ranges))
    for idx in range(n_pairs):
        s_start, s_end = doc.sentence_bounds[idx]
        t_start, t_end = parse.sentence_ranges[idx]
        sub_src = doc.tokens[s_start - 1:s_end - 1]
        sub_tgt = parse.content[t_start - 1:t_end - 1]
        if not sub_tgt:
            score += _gap(len(sub_src), gap_slope)
            continue
        sub = gotoh_align(AlignmentProblem(tuple(sub_src), tuple(sub_tgt),
                                           gap_slope=gap_slope, normalize=normalize))
        score += sub.score
        pairs.extend((s + s_start - 1, t + t_start - 1) for s, t in sub.pairs)
    surplus_src = len(doc) - (doc.sentence_bounds[n_pairs - 1][1] - 1)
    surplus_tgt = len(parse.content) - (parse.sentence_ranges[n_pairs - 1][1] - 1)
    score += _gap(surplus_src, gap_slope) + _gap(surplus_tgt, gap_slope)
    return Alignment(tuple(pairs), score)


def _gap(n: int, p: float) -> float:
    return 0.0 if n <= 0 else -1.0 - p * (n - 1)


def align_partial(doc: Document, parse: PartialParse, diagnostics: Diagnostics,
                  gap_slope: float = 0.0, normalize: Normalizer = None,
                  ) -> tuple[ProjectionReport, bool]:
    """Recover a document-coordinate annotation from a parsed partial
    linearization; returns the projection and whether the sentence-paired
    path was used (it falls back to one global alignment when the parse
    carries no usable markers)."""
    constrained = bool(parse.sentence_ranges) and diagnostics.marker_defects == 0
    if constrained:
        alignment = sentence_constrained_align(doc, parse, gap_slope, normalize)
    else:
        alignment = gotoh_align(AlignmentProblem(
            doc.tokens, parse.content, gap_slope=gap_slope, normalize=normalize))
    return project_mentions(alignment, parse.spans), constrained
