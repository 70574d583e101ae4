"""Command-line surface.

Commands compose over newline-delimited records: encode writes (z, y)
pairs, decode/align write annotation records, score/oracle-align write a
report record (and optionally render figures next to it).

Exit codes: 0 ok, 1 data error (single-line JSON record on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from multiprocessing import Pool
from typing import Iterable, Optional

from . import corpus as corpus_io
from .align import align_partial
from .decoding import (
    DecodeOptions,
    RandomScorer,
    ScriptedScorer,
    check_sequence,
    decode,
    MaskViolation,
)
from .linearize import (
    LinearizedPair,
    PartialParse,
    Scheme,
    SchemeKind,
    delinearize,
    linearize,
    pair_from_record,
    pair_to_record,
)
from .metrics import ScoreOptions, restricted_clustering_score, score as score_corpus
from .model import CorefAnnotation, CorefDataError, EMPTY_ANNOTATION
from .report import render_figure, render_table, report_record

DATA_ROOT_ENV = "COREFSEQ_DATA_ROOT"


def _resolve(path: Optional[str]) -> Optional[str]:
    if path in (None, "-"):
        return path
    if not os.path.exists(path) and not os.path.isabs(path):
        root = os.environ.get(DATA_ROOT_ENV)
        if root and os.path.exists(os.path.join(root, path)):
            return os.path.join(root, path)
    return path


def _out_handle(path: Optional[str]):
    if path in (None, "-"):
        return sys.stdout
    return open(path, "w", encoding="utf-8")


def _scheme_from_args(args) -> Scheme:
    return Scheme.parse(args.scheme, args.sentence_markers)


def _pmap(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with Pool(processes=jobs) as pool:
        return pool.map(fn, items)


# ---------------------------------------------------------------------------
# encode
# ---------------------------------------------------------------------------

def _encode_one(item):
    (doc, ann), scheme = item
    return pair_to_record(linearize(doc, ann, scheme))


def cmd_encode(args) -> int:
    scheme = _scheme_from_args(args)
    items = corpus_io.read_corpus(_resolve(args.corpus), args.format)
    records = _pmap(_encode_one, [(item, scheme) for item in items], args.jobs)
    with _out_handle(args.out) as out:
        for record in records:
            print(json.dumps(record), file=out)
    return 0


# ---------------------------------------------------------------------------
# decode / align
# ---------------------------------------------------------------------------

def _load_documents(path: str, fmt: Optional[str]) -> dict:
    """Documents only: gold clusters are discarded at load time so decode
    and align can never consult them."""
    return {doc.doc_key: doc for doc, _ in corpus_io.read_corpus(_resolve(path), fmt)}


def _decoded_annotation(pair: LinearizedPair, doc, args) -> CorefAnnotation:
    parsed, diag = delinearize(pair.z, doc, pair.scheme)
    if isinstance(parsed, PartialParse):
        result, _ = align_partial(doc, parsed, diag, gap_slope=args.gap_slope)
        return result.annotation
    return parsed


def cmd_decode(args) -> int:
    docs = _load_documents(args.corpus, args.format)
    trace = [] if args.trace else None
    outputs = []
    if args.scorer:
        scheme = _scheme_from_args(args)
        scorers = _load_scorers(args.scorer, args.seed)
        for key, doc in sorted(docs.items()):
            scorer = scorers(key)
            result = decode(doc, scorer, scheme,
                            options=DecodeOptions(beam_width=args.beam, trace=trace))
            outputs.append((doc, result.annotation))
    else:
        pairs = _read_pairs(_resolve(args.pairs))
        for pair in pairs:
            if pair.doc_key not in docs:
                raise CorefDataError(f"no document for doc_key {pair.doc_key!r}")
            doc = docs[pair.doc_key]
            if args.check_masks and pair.scheme.maskable:
                check_sequence(doc, pair.z, pair.scheme)
            outputs.append((doc, _decoded_annotation(pair, doc, args)))
    with _out_handle(args.out) as out:
        corpus_io.write_predictions(out, outputs, args.format_out)
    if trace is not None:
        with open(args.trace, "w", encoding="utf-8") as handle:
            for event in trace:
                print(json.dumps(event), file=handle)
    return 0


def _read_pairs(path: str) -> list[LinearizedPair]:
    with open(path, encoding="utf-8") as handle:
        return [pair_from_record(json.loads(line)) for line in handle if line.strip()]


def _load_scorers(spec: str, seed: int):
    if spec == "random":
        def factory(doc_key):
            return RandomScorer(seed ^ hash(doc_key) & 0xFFFF)
        return factory
    with open(_resolve(spec), encoding="utf-8") as handle:
        records = {rec.get("doc_key", ""): rec
                   for rec in (json.loads(line) for line in handle if line.strip())}

    def factory(doc_key):
        if doc_key not in records:
            raise CorefDataError(f"no scripted scores for doc_key {doc_key!r}")
        return ScriptedScorer(records[doc_key])
    return factory


def cmd_align(args) -> int:
    docs = _load_documents(args.corpus, args.format)
    outputs = []
    for pair in _read_pairs(_resolve(args.pairs)):
        if not pair.scheme.partial:
            raise CorefDataError("align expects partial-scheme pairs")
        doc = docs[pair.doc_key]
        parsed, diag = delinearize(pair.z, doc, pair.scheme)
        result, _ = align_partial(doc, parsed, diag, gap_slope=args.gap_slope)
        outputs.append((doc, result.annotation))
    with _out_handle(args.out) as out:
        corpus_io.write_predictions(out, outputs, args.format_out)
    return 0


# ---------------------------------------------------------------------------
# score / roundtrip / oracle-align
# ---------------------------------------------------------------------------

def _score_and_emit(gold, pred, args, extra) -> int:
    options = ScoreOptions.profile(args.profile)
    if getattr(args, "restricted", False):
        report = restricted_clustering_score(gold, pred, options)
    else:
        report = score_corpus(gold, pred, options)
    with _out_handle(args.out) as out:
        print(report_record(report, **extra), file=out)
    print(render_table(report), file=sys.stderr)
    if args.figures:
        path = render_figure(report, os.path.join(args.figures, extra.get(
            "figure_name", "scores.png")), title=extra.get("title"))
        print(f"figure: {path}", file=sys.stderr)
    return 0


def cmd_score(args) -> int:
    gold = {doc.doc_key: ann for doc, ann in
            corpus_io.read_corpus(_resolve(args.gold), args.format)}
    pred = {doc.doc_key: ann for doc, ann in
            corpus_io.read_corpus(_resolve(args.pred), args.format)}
    return _score_and_emit(gold, pred, args, {"title": "corpus score"})


def _roundtrip_one(item):
    (doc, ann), scheme, gap_slope = item
    pair = linearize(doc, ann, scheme)
    parsed, diag = delinearize(pair.z, doc, scheme)
    if isinstance(parsed, PartialParse):
        result, _ = align_partial(doc, parsed, diag, gap_slope=gap_slope)
        return doc.doc_key, ann, result.annotation
    return doc.doc_key, ann, parsed


def cmd_roundtrip(args) -> int:
    scheme = _scheme_from_args(args)
    items = corpus_io.read_corpus(_resolve(args.corpus), args.format)
    results = _pmap(_roundtrip_one,
                    [(item, scheme, args.gap_slope) for item in items], args.jobs)
    gold = {key: ann for key, ann, _ in results}
    pred = {key: back for key, _, back in results}
    status = _score_and_emit(gold, pred, args, {
        "title": f"roundtrip {scheme.name()}", "scheme": scheme.name()})
    if status:
        return status
    if not scheme.partial:
        report = score_corpus(gold, pred, ScoreOptions.profile(args.profile))
        if report.conll_avg < 1.0 - 1e-12:
            raise CorefDataError(
                f"full-scheme roundtrip is not perfect: {report.conll_avg}")
    return 0


def _oracle_align_one(item):
    (doc, ann), markers, gap_slope = item
    scheme = Scheme(SchemeKind.PARTIAL_TOKEN, markers)
    pair = linearize(doc, ann, scheme)
    parsed, diag = delinearize(pair.z, doc, scheme)
    result, _ = align_partial(doc, parsed, diag, gap_slope=gap_slope)
    return doc.doc_key, ann, result.annotation


def cmd_oracle_align(args) -> int:
    items = corpus_io.read_corpus(_resolve(args.corpus), args.format)
    results = _pmap(_oracle_align_one,
                    [(item, args.sentence_markers, args.gap_slope) for item in items],
                    args.jobs)
    gold = {key: ann for key, ann, _ in results}
    pred = {key: back for key, _, back in results}
    marker_note = "with" if args.sentence_markers else "without"
    return _score_and_emit(gold, pred, args, {
        "title": f"oracle alignment ({marker_note} sentence markers)",
        "sentence_markers": args.sentence_markers,
        "figure_name": f"oracle_align_{marker_note}_markers.png"})


def cmd_segment(args) -> int:
    config = corpus_io.PrepConfig(max_length=args.max_length, overlap=args.overlap)
    items = corpus_io.read_corpus(_resolve(args.corpus), args.format)
    with _out_handle(args.out) as out:
        for doc, ann in items:
            if args.insert_speakers:
                doc2, smap = corpus_io.insert_speakers(doc, config)
                doc, ann = doc2, smap.map_annotation(ann)
            for seg in corpus_io.segment(doc, ann, config):
                record = corpus_io.record_of(seg.document, seg.annotation)
                record["parent_doc_key"] = seg.parent_doc_key
                record["token_range"] = list(seg.token_range)
                record["dropped_spans"] = seg.dropped_spans
                print(json.dumps(record), file=out)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser(config: Optional[dict] = None) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corefseq",
        description="Coreference annotations as token sequences: codecs, "
                    "constrained decoding, alignment, and evaluation.")
    parser.add_argument("--config", help="JSON file of default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    def shared(p, scheme_default="full-copy"):
        p.add_argument("--scheme", default=scheme_default,
                       choices=[k.value for k in SchemeKind])
        p.add_argument("--sentence-markers", action="store_true")
        p.add_argument("--gap-slope", type=float, default=0.0)
        p.add_argument("--beam", type=int, default=4)
        p.add_argument("--profile", default="ontonotes")
        p.add_argument("--format", choices=["conll", "records"], default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("encode", help="corpus -> linearized (z, y) records")
    shared(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="sequences or scripted scores -> annotations")
    shared(p)
    p.add_argument("--corpus", required=True, help="document source (clusters ignored)")
    p.add_argument("--pairs", help="linearized-pair records to replay/repair")
    p.add_argument("--scorer", help="scripted-scorer records, or 'random'")
    p.add_argument("--check-masks", action="store_true",
                   help="verify replayed sequences against the masks")
    p.add_argument("--trace", help="write a decode trace to this path")
    p.add_argument("--format-out", choices=["conll", "records"], default="records")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("align", help="partial-scheme records -> annotations")
    shared(p, scheme_default="partial")
    p.add_argument("--corpus", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--format-out", choices=["conll", "records"], default="records")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("score", help="gold + predictions -> score report")
    shared(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--restricted", action="store_true",
                   help="score clustering over correctly recovered mentions only")
    p.add_argument("--figures", help="directory for rendered figures")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("roundtrip", help="encode -> decode -> score against gold")
    shared(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--figures")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("segment", help="corpus -> overlapped segment records")
    shared(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--max-length", type=int, default=2048)
    p.add_argument("--overlap", type=int, default=1024)
    p.add_argument("--insert-speakers", action="store_true")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("oracle-align",
                       help="gold partial linearization -> align -> score")
    shared(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--figures")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_oracle_align)

    if config:
        defaults = {key.replace("-", "_"): value for key, value in config.items()}
        for subparser in sub.choices.values():
            subparser.set_defaults(**defaults)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    config = None
    try:
        if known.config:
            with open(_resolve(known.config), encoding="utf-8") as handle:
                config = json.load(handle)
        parser = build_parser(config)
        args = parser.parse_args(argv)
        return args.func(args)
    except (CorefDataError, MaskViolation, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
