"""Coreference evaluation: MUC, B-cubed, CEAF (entity similarity phi4),
their average, and mention-level diagnostics.

Every metric accumulates precision/recall numerators and denominators over
the whole corpus before taking ratios, matching reference-scorer
aggregation (never a mean of per-document F1s).  Zero denominators yield
0.0 and are flagged in the report rather than raising.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import CorefAnnotation, CorefDataError, dense_relabel

Mention = tuple[int, int]
Cluster = frozenset[Mention]


@dataclass(frozen=True)
class ScoreOptions:
    """Scoring profile.  OntoNotes-style evaluation drops singleton
    clusters from both sides; PreCo/LitBank-style keeps them."""

    drop_singletons: bool = True

    @classmethod
    def profile(cls, name: str) -> "ScoreOptions":
        name = name.lower()
        if name in ("ontonotes", "conll"):
            return cls(drop_singletons=True)
        if name in ("preco", "litbank", "keep-singletons"):
            return cls(drop_singletons=False)
        raise CorefDataError(f"unknown scoring profile {name!r}")


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, p_num, p_den, r_num, r_den, flags: list[str],
                    name: str = "") -> "PRF":
        if p_den == 0:
            flags.append(f"{name}: zero precision denominator")
        if r_den == 0:
            flags.append(f"{name}: zero recall denominator")
        p = p_num / p_den if p_den else 0.0
        r = r_num / r_den if r_den else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f1)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.precision, self.recall, self.f1)


@dataclass
class ScoreReport:
    muc: PRF
    b_cubed: PRF
    ceaf_phi4: PRF
    conll_avg: float
    mention_detection: PRF
    num_documents: int
    num_gold_mentions: int
    num_pred_mentions: int
    flags: list[str] = field(default_factory=list)

    METRIC_ORDER = ("muc", "b_cubed", "ceaf_phi4")

    def metric(self, name: str) -> PRF:
        return getattr(self, name)

    def to_dict(self) -> dict:
        out = {}
        for name in self.METRIC_ORDER:
            prf = self.metric(name)
            out[name] = {"precision": prf.precision, "recall": prf.recall, "f1": prf.f1}
        out["conll_avg"] = self.conll_avg
        out["mention_detection"] = {
            "precision": self.mention_detection.precision,
            "recall": self.mention_detection.recall,
            "f1": self.mention_detection.f1,
        }
        out["num_documents"] = self.num_documents
        out["num_gold_mentions"] = self.num_gold_mentions
        out["num_pred_mentions"] = self.num_pred_mentions
        if self.flags:
            out["flags"] = list(self.flags)
        return out


def clusters_of(ann: CorefAnnotation, drop_singletons: bool) -> list[Cluster]:
    """Annotation as a list of mention-set clusters under the profile.

    A mention landing in two clusters (validate() warns about these) is
    kept only in the cluster that appears first canonically, since the
    metrics assume a partition.
    """
    placed: dict[Mention, int] = {}
    raw: dict[int, set[Mention]] = {}
    for span in ann:
        m = (span.start, span.end)
        if m in placed and placed[m] != span.cluster:
            continue
        placed[m] = span.cluster
        raw.setdefault(span.cluster, set()).add(m)
    out = [frozenset(c) for _, c in sorted(raw.items()) if c]
    if drop_singletons:
        out = [c for c in out if len(c) > 1]
    return out


# ---------------------------------------------------------------------------
# Per-document count functions: each returns (p_num, p_den, r_num, r_den)
# ---------------------------------------------------------------------------

def muc_counts(gold: Sequence[Cluster], pred: Sequence[Cluster]):
    """Link-based counting: a cluster of size n needs n-1 links; missing
    links are counted through the partition of each cluster by the other
    side (unclustered mentions count as their own parts)."""
    def half(a: Sequence[Cluster], b: Sequence[Cluster]):
        owner: dict[Mention, int] = {}
        for idx, cluster in enumerate(b):
            for m in cluster:
                owner[m] = idx
        num = den = 0
        for cluster in a:
            parts = {owner[m] for m in cluster if m in owner}
            parts_count = len(parts) + sum(1 for m in cluster if m not in owner)
            num += len(cluster) - parts_count
            den += len(cluster) - 1
        return num, den

    r_num, r_den = half(gold, pred)
    p_num, p_den = half(pred, gold)
    return p_num, p_den, r_num, r_den


def b_cubed_counts(gold: Sequence[Cluster], pred: Sequence[Cluster]):
    """Per-mention overlap averaging."""
    def half(a: Sequence[Cluster], b: Sequence[Cluster]):
        b_of: dict[Mention, Cluster] = {m: c for c in b for m in c}
        num = 0.0
        den = 0
        for cluster in a:
            for m in cluster:
                other = b_of.get(m)
                if other is not None:
                    num += len(cluster & other) / len(cluster)
            den += len(cluster)
        return num, den

    r_num, r_den = half(gold, pred)
    p_num, p_den = half(pred, gold)
    return p_num, p_den, r_num, r_den


def phi4(a: Cluster, b: Cluster) -> float:
    return 2.0 * len(a & b) / (len(a) + len(b))


def optimal_cluster_matching(gold: Sequence[Cluster], pred: Sequence[Cluster],
                             similarity: Callable[[Cluster, Cluster], float] = phi4,
                             ) -> tuple[list[tuple[int, int]], float]:
    """Maximum-weight one-to-one matching between the two cluster lists.

    Exact (Hungarian assignment on the similarity matrix).  Returns the
    matched index pairs (zero similarity pairs are dropped) and the total.
    """
    if not gold or not pred:
        return [], 0.0
    sim = np.zeros((len(gold), len(pred)))
    for i, g in enumerate(gold):
        for j, p in enumerate(pred):
            sim[i, j] = similarity(g, p)
    rows, cols = linear_sum_assignment(sim, maximize=True)
    pairs = [(int(i), int(j)) for i, j in zip(rows, cols) if sim[i, j] > 0.0]
    total = float(sim[rows, cols].sum())
    return pairs, total


def ceaf_phi4_counts(gold: Sequence[Cluster], pred: Sequence[Cluster]):
    _, total = optimal_cluster_matching(gold, pred, phi4)
    # phi4(c, c) == 1, so the self-similarity sums are the cluster counts.
    return total, len(pred), total, len(gold)


_COUNTERS = {
    "muc": muc_counts,
    "b_cubed": b_cubed_counts,
    "ceaf_phi4": ceaf_phi4_counts,
}


# ---------------------------------------------------------------------------
# Corpus-level scoring
# ---------------------------------------------------------------------------

def _check_keys(gold: Mapping[str, CorefAnnotation],
                pred: Mapping[str, CorefAnnotation]) -> None:
    missing = sorted(set(gold) - set(pred))
    extra = sorted(set(pred) - set(gold))
    if missing or extra:
        raise CorefDataError(
            "gold/pred document keys differ; "
            f"missing from pred: {missing[:5]}, unknown in pred: {extra[:5]}")


def score(gold: Mapping[str, CorefAnnotation], pred: Mapping[str, CorefAnnotation],
          options: ScoreOptions = ScoreOptions()) -> ScoreReport:
    """Score a predicted corpus against gold, accumulating counts corpus-wide."""
    _check_keys(gold, pred)
    flags: list[str] = []
    acc = {name: [0.0, 0.0, 0.0, 0.0] for name in _COUNTERS}
    det = [0.0, 0.0, 0.0, 0.0]
    n_gold = n_pred = 0
    for key in sorted(gold):
        g = clusters_of(gold[key], options.drop_singletons)
        p = clusters_of(pred[key], options.drop_singletons)
        for name, counter in _COUNTERS.items():
            for slot, value in enumerate(counter(g, p)):
                acc[name][slot] += value
        g_mentions = {m for c in g for m in c}
        p_mentions = {m for c in p for m in c}
        common = len(g_mentions & p_mentions)
        det[0] += common
        det[1] += len(p_mentions)
        det[2] += common
        det[3] += len(g_mentions)
        n_gold += len(g_mentions)
        n_pred += len(p_mentions)

    prfs = {name: PRF.from_counts(*acc[name], flags, name) for name in _COUNTERS}
    conll = sum(prfs[name].f1 for name in ScoreReport.METRIC_ORDER) / 3.0
    return ScoreReport(
        muc=prfs["muc"], b_cubed=prfs["b_cubed"], ceaf_phi4=prfs["ceaf_phi4"],
        conll_avg=conll,
        mention_detection=PRF.from_counts(*det, flags, "mention_detection"),
        num_documents=len(gold), num_gold_mentions=n_gold, num_pred_mentions=n_pred,
        flags=flags)


def mention_detection_f1(gold: Mapping[str, CorefAnnotation],
                         pred: Mapping[str, CorefAnnotation]) -> PRF:
    """Unlabeled mention detection: exact (start, end) set comparison."""
    _check_keys(gold, pred)
    flags: list[str] = []
    num = p_den = r_den = 0
    for key in gold:
        g = gold[key].mention_set()
        p = pred[key].mention_set()
        num += len(g & p)
        p_den += len(p)
        r_den += len(g)
    return PRF.from_counts(num, p_den, num, r_den, flags, "mention_detection")


def restrict_to_common_mentions(gold: CorefAnnotation, pred: CorefAnnotation,
                                ) -> tuple[CorefAnnotation, CorefAnnotation]:
    common = gold.mention_set() & pred.mention_set()

    def cut(ann: CorefAnnotation) -> CorefAnnotation:
        spans = frozenset(s for s in ann.spans if (s.start, s.end) in common)
        return dense_relabel(CorefAnnotation.from_spans(spans))

    return cut(gold), cut(pred)


def restricted_clustering_score(gold: Mapping[str, CorefAnnotation],
                                pred: Mapping[str, CorefAnnotation],
                                options: ScoreOptions = ScoreOptions()) -> ScoreReport:
    """Clustering quality over correctly recovered mentions only: both
    sides are filtered to the intersection of their mention sets (emptied
    clusters disappear), then scored as usual."""
    _check_keys(gold, pred)
    g_cut, p_cut = {}, {}
    any_common = False
    for key in gold:
        g_cut[key], p_cut[key] = restrict_to_common_mentions(gold[key], pred[key])
        any_common = any_common or bool(g_cut[key].spans)
    report = score(g_cut, p_cut, options)
    if not any_common:
        report.flags.append("restriction left no common mentions")
    return report
