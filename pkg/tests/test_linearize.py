import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corefseq.linearize import (
    ALL_SCHEMES,
    Diagnostics,
    LinearizeError,
    LinearizedPair,
    ParseError,
    PartialParse,
    Scheme,
    SchemeKind,
    delinearize,
    linearize,
    pair_from_record,
    pair_to_record,
)
from corefseq.model import (
    CorefAnnotation,
    CorefDataError,
    DEFAULT_SYMBOLS,
    Document,
    Span,
    dense_relabel,
    is_valid,
)
from corefseq.synth import random_pair

from oracles import partition_fingerprint, resolve_antecedents_bruteforce

FULL_SCHEMES = [Scheme(SchemeKind.FULL_TOKEN), Scheme(SchemeKind.FULL_COPY),
                Scheme(SchemeKind.INTEGER_FREE), Scheme(SchemeKind.INTEGER_BEFORE),
                Scheme(SchemeKind.ANTECEDENT_STRING)]


# ---------------------------------------------------------------------------
# Worked examples, frozen token for token
# ---------------------------------------------------------------------------

def test_full_linearization_running_example(paper_doc, paper_ann):
    pair = linearize(paper_doc, paper_ann, Scheme(SchemeKind.FULL_TOKEN))
    assert pair.z == ("<s>", "a", "<m>", "<m>", "b", "|", "1", "</m>", "c",
                      "|", "2", "</m>", "d", "<m>", "e", "|", "2", "</m>", "</s>")


def test_partial_linearization_running_example(paper_doc, paper_ann):
    pair = linearize(paper_doc, paper_ann, Scheme(SchemeKind.PARTIAL_TOKEN))
    assert pair.z == ("<s>", "<m>", "<m>", "b", "|", "1", "</m>", "c", "|", "2",
                      "</m>", "<m>", "e", "|", "2", "</m>", "</s>")


def test_token_action_example(two_token_doc):
    ann = CorefAnnotation.from_spans([Span(2, 2, 1)])
    pair = linearize(two_token_doc, ann, Scheme(SchemeKind.FULL_TOKEN))
    assert pair.y == ("a", "<m>", "b", "|", "1", "</m>", "</s>")
    assert pair.z == ("<s>", "a", "<m>", "b", "|", "1", "</m>", "</s>")


def test_copy_action_example(two_token_doc):
    ann = CorefAnnotation.from_spans([Span(2, 2, 1)])
    pair = linearize(two_token_doc, ann, Scheme(SchemeKind.FULL_COPY))
    assert pair.y == ("<c>", "<m>", "<c>", "|", "1", "</m>", "</s>")
    assert pair.z == ("<s>", "a", "<m>", "b", "|", "1", "</m>", "</s>")


def test_integer_free_example(two_token_doc):
    ann = CorefAnnotation.from_spans([Span(1, 1, 1), Span(2, 2, 1)])
    pair = linearize(two_token_doc, ann, Scheme(SchemeKind.INTEGER_FREE))
    assert pair.y == ("<m>", "<c>", "<new>", "<m>", "<c>", "</m_1>", "</s>")
    assert pair.z == ("<s>", "<m>", "a", "</m_1>", "<m>", "b", "</m_1>", "</s>")


def test_integer_before_places_label_first(two_token_doc):
    ann = CorefAnnotation.from_spans([Span(2, 2, 1)])
    pair = linearize(two_token_doc, ann, Scheme(SchemeKind.INTEGER_BEFORE))
    assert pair.z == ("<s>", "a", "<m>", "1", "|", "b", "</m>", "</s>")
    assert pair.y == ("<c>", "<m>", "1", "|", "<c>", "</m>", "</s>")


def test_antecedent_string_derived_example():
    doc = Document("ante", tuple("abcde"), ((1, 6),))
    ann = CorefAnnotation.from_spans([Span(2, 3, 1), Span(5, 5, 1)])
    pair = linearize(doc, ann, Scheme(SchemeKind.ANTECEDENT_STRING))
    assert pair.z == ("<s>", "a", "<m>", "b", "c", "</m>", "d",
                      "<m>", "e", "|", "b", "c", "</m>", "</s>")


def test_antecedent_string_singleton_has_no_back_reference(paper_doc):
    ann = CorefAnnotation.from_spans([Span(2, 2, 1)])
    pair = linearize(paper_doc, ann, Scheme(SchemeKind.ANTECEDENT_STRING))
    assert "|" not in pair.z


def test_empty_annotation_full_token(paper_doc):
    pair = linearize(paper_doc, CorefAnnotation.from_spans([]),
                     Scheme(SchemeKind.FULL_TOKEN))
    assert pair.z == ("<s>", "a", "b", "c", "d", "e", "</s>")
    assert pair.y == ("a", "b", "c", "d", "e", "</s>")


def test_sentence_markers_wrap_every_sentence():
    doc = Document("two-sent", tuple("abcd"), ((1, 3), (3, 5)))
    ann = CorefAnnotation.from_spans([Span(1, 1, 1)])
    pair = linearize(doc, ann, Scheme(SchemeKind.PARTIAL_TOKEN, True))
    assert pair.z == ("<s>", "<sentence>", "<m>", "a", "|", "1", "</m>",
                      "</sentence>", "<sentence>", "</sentence>", "</s>")


# ---------------------------------------------------------------------------
# Contract checks
# ---------------------------------------------------------------------------

def test_scheme_invariants():
    with pytest.raises(CorefDataError):
        Scheme(SchemeKind.FULL_COPY, sentence_markers=True)
    assert Scheme(SchemeKind.FULL_COPY).copy_action
    assert not Scheme(SchemeKind.PARTIAL_TOKEN).copy_action


def test_pair_length_relation(paper_doc, paper_ann):
    for scheme in ALL_SCHEMES:
        pair = linearize(paper_doc, paper_ann, scheme)
        assert len(pair.z) == len(pair.y) + 1
        assert pair.z[0] == "<s>" and pair.z[-1] == "</s>" and pair.y[-1] == "</s>"
        if not scheme.copy_action:
            assert pair.y == pair.z[1:]


def test_linearize_rejects_crossing(paper_doc):
    ann = CorefAnnotation.from_spans([Span(1, 3, 1), Span(2, 5, 2)])
    with pytest.raises(LinearizeError):
        linearize(paper_doc, ann, Scheme(SchemeKind.FULL_TOKEN))


def test_linearize_rejects_cluster_overflow_integer_free(paper_doc):
    from corefseq.model import SymbolTable
    tiny = SymbolTable(cluster_ends=("</m_1>",))
    ann = CorefAnnotation.from_spans([Span(1, 1, 1), Span(2, 2, 2)])
    with pytest.raises(LinearizeError):
        linearize(paper_doc, ann, Scheme(SchemeKind.INTEGER_FREE), tiny)


def test_linearize_rejects_cross_sentence_mention_with_markers():
    doc = Document("xs", tuple("abcd"), ((1, 3), (3, 5)))
    ann = CorefAnnotation.from_spans([Span(2, 3, 1)])
    with pytest.raises(LinearizeError):
        linearize(doc, ann, Scheme(SchemeKind.PARTIAL_TOKEN, True))


def test_linearize_rejects_symbol_collision():
    doc = Document("clash", ("a", "|"), ((1, 3),))
    with pytest.raises(CorefDataError):
        linearize(doc, CorefAnnotation.from_spans([]), Scheme(SchemeKind.FULL_TOKEN))


# ---------------------------------------------------------------------------
# Decoding and repairs
# ---------------------------------------------------------------------------

def test_roundtrip_running_example(paper_doc, paper_ann):
    for scheme in FULL_SCHEMES:
        pair = linearize(paper_doc, paper_ann, scheme)
        back, diag = delinearize(pair.z, paper_doc, scheme)
        assert diag.clean()
        assert partition_fingerprint(back) == partition_fingerprint(paper_ann), scheme


def test_partial_parse_local_coordinates():
    doc = Document("bb", tuple("abcdebb"), ((1, 8),))
    z = ("<s>", "<m>", "b", "|", "1", "</m>", "<m>", "b", "|", "1", "</m>", "</s>")
    parsed, diag = delinearize(z, doc, Scheme(SchemeKind.PARTIAL_TOKEN))
    assert isinstance(parsed, PartialParse)
    assert diag.clean()
    assert parsed.content == ("b", "b")
    assert [(s.start, s.end) for s in parsed.spans] == [(1, 1), (2, 2)]


def test_unclosed_mention_is_dropped(paper_doc):
    z = ("<s>", "a", "<m>", "b", "c", "d", "e", "</s>")
    ann, diag = delinearize(z, paper_doc, Scheme(SchemeKind.FULL_TOKEN))
    assert ann.spans == frozenset()
    assert diag.dropped_unclosed == 1


def test_separator_without_integer_drops_mention(paper_doc):
    z = ("<s>", "a", "<m>", "b", "|", "</m>", "c", "d", "e", "</s>")
    ann, diag = delinearize(z, paper_doc, Scheme(SchemeKind.FULL_TOKEN))
    assert ann.spans == frozenset()
    assert diag.dropped_empty == 1


def test_oversized_integer_clamped_to_new_cluster(paper_doc):
    z = ("<s>", "a", "<m>", "b", "|", "7", "</m>", "c", "d", "e", "</s>")
    ann, diag = delinearize(z, paper_doc, Scheme(SchemeKind.FULL_TOKEN))
    assert diag.clamped_labels == 1
    assert ann.spans == frozenset({Span(2, 2, 1)})


def test_source_prefix_mismatch_is_parse_error(paper_doc):
    z = ("<s>", "b", "</s>")
    with pytest.raises(ParseError):
        delinearize(z, paper_doc, Scheme(SchemeKind.FULL_TOKEN))


def test_repair_budget_exhausts(paper_doc):
    z = ("<s>",) + ("</m>",) * 10 + ("</s>",)
    with pytest.raises(ParseError):
        delinearize(z, paper_doc, Scheme(SchemeKind.FULL_TOKEN), repair_budget=3)


def test_truncated_sequence_flagged(paper_doc):
    z = ("<s>", "a", "b")
    ann, diag = delinearize(z, paper_doc, Scheme(SchemeKind.FULL_TOKEN))
    assert diag.truncated


def test_antecedent_ambiguity_prefers_earlier():
    # two prior mentions share the surface "b"; resolution links the earlier
    doc = Document("amb", ("b", "c", "b", "d", "b"), ((1, 6),))
    ann = CorefAnnotation.from_spans([Span(1, 1, 1), Span(3, 3, 2), Span(5, 5, 1)])
    scheme = Scheme(SchemeKind.ANTECEDENT_STRING)
    pair = linearize(doc, ann, scheme)
    back, diag = delinearize(pair.z, doc, scheme)
    assert diag.ambiguous_antecedents == 1
    # the earlier "b" is mention 1, so (5,5) joins cluster of (1,1)
    clusters = partition_fingerprint(back)
    assert (((1, 1), (5, 5)) in clusters) and (((3, 3),) in clusters)


@given(st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_antecedent_resolver_matches_bruteforce(seed):
    rng = random.Random(seed)
    doc, ann = random_pair(rng, max_tokens=14, alphabet=tuple("abc"),
                           max_clusters=3, max_spans=5, max_span_len=2)
    scheme = Scheme(SchemeKind.ANTECEDENT_STRING)
    pair = linearize(doc, ann, scheme)
    back, diag = delinearize(pair.z, doc, scheme)

    # reconstruct the mention stream exactly as emitted, then resolve with
    # the brute-force rule and compare partitions
    sm = DEFAULT_SYMBOLS
    mentions = []
    stack = []  # frames: {"content": [...], "antecedent": None | [...]}
    for tok in pair.z[1:-1]:
        if tok == sm.mention_start:
            stack.append({"content": [], "antecedent": None})
        elif tok == sm.separator:
            stack[-1]["antecedent"] = []
        elif tok == sm.mention_end:
            frame = stack.pop()
            ante = frame["antecedent"]
            mentions.append((tuple(frame["content"]),
                             tuple(ante) if ante else None))
        elif stack and stack[-1]["antecedent"] is not None:
            stack[-1]["antecedent"].append(tok)
        else:
            # a source token: part of every open mention's surface
            for frame in stack:
                frame["content"].append(tok)
    labels, _ = resolve_antecedents_bruteforce(
        [(s, a) for s, a in mentions])
    groups = {}
    for (surface, _), label in zip(mentions, labels):
        groups.setdefault(label, []).append(surface)
    got = {}
    for span in back:
        got.setdefault(span.cluster, []).append(
            tuple(doc.tokens[span.start - 1:span.end]))
    assert sorted(map(sorted, groups.values())) == sorted(map(sorted, got.values()))


# ---------------------------------------------------------------------------
# Properties
# ---------------------------------------------------------------------------

@given(st.integers(0, 10**6))
@settings(max_examples=120, deadline=None)
def test_roundtrip_integer_schemes(seed):
    rng = random.Random(seed)
    doc, ann = random_pair(rng, max_tokens=60, max_clusters=8,
                           allow_shared_spans=rng.random() < 0.3)
    for scheme in (Scheme(SchemeKind.FULL_TOKEN), Scheme(SchemeKind.FULL_COPY),
                   Scheme(SchemeKind.INTEGER_FREE), Scheme(SchemeKind.INTEGER_BEFORE)):
        pair = linearize(doc, ann, scheme)
        back, diag = delinearize(pair.z, doc, scheme)
        assert diag.clean()
        assert partition_fingerprint(back) == partition_fingerprint(ann)


@given(st.integers(0, 10**6))
@settings(max_examples=80, deadline=None)
def test_partial_not_longer_than_full(seed):
    rng = random.Random(seed)
    doc, ann = random_pair(rng, max_tokens=40)
    full = linearize(doc, ann, Scheme(SchemeKind.FULL_TOKEN))
    partial = linearize(doc, ann, Scheme(SchemeKind.PARTIAL_TOKEN))
    assert len(partial.z) <= len(full.z)
    covered = set()
    for span in ann.spans:
        covered.update(range(span.start, span.end + 1))
    if len(covered) == len(doc):
        assert len(partial.z) == len(full.z)
    else:
        assert len(partial.z) < len(full.z)


@given(st.integers(0, 10**6))
@settings(max_examples=80, deadline=None)
def test_token_action_shift_property(seed):
    rng = random.Random(seed)
    doc, ann = random_pair(rng, max_tokens=30)
    pair = linearize(doc, ann, Scheme(SchemeKind.FULL_TOKEN))
    assert pair.y == pair.z[1:]


def test_record_serialization_roundtrip(paper_doc, paper_ann):
    pair = linearize(paper_doc, paper_ann, Scheme(SchemeKind.FULL_COPY))
    again = pair_from_record(pair_to_record(pair))
    assert again == pair
