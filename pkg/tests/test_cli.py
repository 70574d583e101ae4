import json
import os
import subprocess
import sys

import pytest

from corefseq.cli import main
from corefseq.corpus import read_records, write_records
from corefseq.model import CorefAnnotation, Document
from corefseq.synth import random_corpus

from oracles import partition_fingerprint


@pytest.fixture
def corpus_path(tmp_path):
    path = str(tmp_path / "corpus.jsonl")
    write_records(path, random_corpus(11, 6, max_tokens=25, within_sentence=True))
    return path


def run(argv, capsys=None):
    return main(argv)


def read_jsonl(path):
    with open(path) as handle:
        return [json.loads(line) for line in handle if line.strip()]


def test_encode_writes_pair_records(corpus_path, tmp_path):
    out = str(tmp_path / "pairs.jsonl")
    assert main(["encode", "--corpus", corpus_path, "--scheme", "full-copy",
                 "--out", out]) == 0
    records = read_jsonl(out)
    assert len(records) == 6
    assert all(rec["scheme"] == "full-copy" for rec in records)
    assert all(rec["z"][0] == "<s>" and rec["z"][-1] == "</s>" for rec in records)


def test_encode_decode_score_pipeline(corpus_path, tmp_path):
    pairs = str(tmp_path / "pairs.jsonl")
    pred = str(tmp_path / "pred.jsonl")
    report = str(tmp_path / "report.jsonl")
    assert main(["encode", "--corpus", corpus_path, "--scheme", "full-token",
                 "--out", pairs]) == 0
    assert main(["decode", "--corpus", corpus_path, "--pairs", pairs,
                 "--check-masks", "--out", pred]) == 0
    assert main(["score", "--gold", corpus_path, "--pred", pred,
                 "--profile", "preco", "--out", report]) == 0
    payload = read_jsonl(report)[0]
    assert payload["conll_avg"] == 1.0


def test_decode_never_consults_gold(corpus_path, tmp_path):
    # identical decode output whether or not the corpus file carries clusters
    pairs = str(tmp_path / "pairs.jsonl")
    main(["encode", "--corpus", corpus_path, "--scheme", "full-copy",
          "--out", pairs])
    stripped = str(tmp_path / "stripped.jsonl")
    items = read_records(corpus_path)
    write_records(stripped, [(doc, CorefAnnotation.from_spans([]))
                             for doc, _ in items])
    out_full = str(tmp_path / "with_gold.jsonl")
    out_stripped = str(tmp_path / "without_gold.jsonl")
    assert main(["decode", "--corpus", corpus_path, "--pairs", pairs,
                 "--out", out_full]) == 0
    assert main(["decode", "--corpus", stripped, "--pairs", pairs,
                 "--out", out_stripped]) == 0
    assert open(out_full).read() == open(out_stripped).read()


def test_align_command(tmp_path):
    corpus = str(tmp_path / "c.jsonl")
    write_records(corpus, random_corpus(5, 4, max_tokens=20, within_sentence=True))
    pairs = str(tmp_path / "p.jsonl")
    pred = str(tmp_path / "a.jsonl")
    assert main(["encode", "--corpus", corpus, "--scheme", "partial",
                 "--sentence-markers", "--out", pairs]) == 0
    assert main(["align", "--corpus", corpus, "--pairs", pairs,
                 "--out", pred]) == 0
    assert len(read_jsonl(pred)) == 4


def test_roundtrip_command_integer_schemes(corpus_path, tmp_path):
    for scheme in ("full-token", "full-copy", "integer-free", "integer-before"):
        out = str(tmp_path / f"rt_{scheme}.jsonl")
        code = main(["roundtrip", "--corpus", corpus_path, "--scheme", scheme,
                     "--profile", "preco", "--out", out])
        assert code == 0, scheme
        assert read_jsonl(out)[0]["conll_avg"] == 1.0, scheme


def test_roundtrip_antecedent_string(tmp_path):
    # exact on a corpus whose mention surfaces are unambiguous; on an
    # ambiguous corpus the lossiness is reported as a data error
    import random
    from corefseq.synth import random_annotation

    rng = random.Random(0)
    unique = []
    for d in range(5):
        tokens = [f"w{d}_{i}" for i in range(20)]
        doc = Document(f"u-{d}", tuple(tokens), ((1, 11), (11, 21)))
        unique.append((doc, random_annotation(rng, doc, max_clusters=4)))
    path = str(tmp_path / "unique.jsonl")
    write_records(path, unique)
    out = str(tmp_path / "rt_ante.jsonl")
    assert main(["roundtrip", "--corpus", path, "--scheme", "antecedent-string",
                 "--profile", "preco", "--out", out]) == 0
    assert read_jsonl(out)[0]["conll_avg"] == 1.0

    ambiguous = str(tmp_path / "amb.jsonl")
    doc = Document("amb", ("b", "x", "b", "y", "b"), ((1, 6),))
    ann = CorefAnnotation.from_clusters([[(1, 1), (3, 3)], [(5, 5)]])
    write_records(ambiguous, [(doc, ann)])
    code = main(["roundtrip", "--corpus", ambiguous, "--scheme",
                 "antecedent-string", "--profile", "preco",
                 "--out", str(tmp_path / "rt_amb.jsonl")])
    assert code == 1


def test_oracle_align_marker_ordering(tmp_path):
    from corefseq.synth import repeated_forms_corpus
    corpus = str(tmp_path / "rep.jsonl")
    write_records(corpus, repeated_forms_corpus(3, size=12))
    with_m = str(tmp_path / "with.jsonl")
    without_m = str(tmp_path / "without.jsonl")
    assert main(["oracle-align", "--corpus", corpus, "--sentence-markers",
                 "--profile", "preco", "--out", with_m]) == 0
    assert main(["oracle-align", "--corpus", corpus,
                 "--profile", "preco", "--out", without_m]) == 0
    marked = read_jsonl(with_m)[0]["conll_avg"]
    unmarked = read_jsonl(without_m)[0]["conll_avg"]
    assert marked >= unmarked


def test_score_identity_is_perfect(corpus_path, tmp_path):
    report = str(tmp_path / "r.jsonl")
    assert main(["score", "--gold", corpus_path, "--pred", corpus_path,
                 "--profile", "preco", "--out", report]) == 0
    assert read_jsonl(report)[0]["conll_avg"] == 1.0


def test_score_figures_rendered(corpus_path, tmp_path):
    figdir = str(tmp_path / "figs")
    assert main(["score", "--gold", corpus_path, "--pred", corpus_path,
                 "--profile", "preco", "--figures", figdir,
                 "--out", str(tmp_path / "r.jsonl")]) == 0
    assert os.path.exists(os.path.join(figdir, "scores.png"))


def test_segment_command(tmp_path):
    corpus = str(tmp_path / "c.jsonl")
    write_records(corpus, random_corpus(9, 2, min_tokens=40, max_tokens=60))
    out = str(tmp_path / "segs.jsonl")
    assert main(["segment", "--corpus", corpus, "--max-length", "16",
                 "--overlap", "8", "--out", out]) == 0
    records = read_jsonl(out)
    assert all("parent_doc_key" in rec and "token_range" in rec for rec in records)
    assert len(records) >= 4


def test_data_error_exit_code_and_record(tmp_path, capsys):
    missing = str(tmp_path / "nope.jsonl")
    code = main(["encode", "--corpus", missing, "--out", "-"])
    assert code == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    payload = json.loads(err)
    assert "error" in payload and "message" in payload


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["encode"])  # missing --corpus
    assert exc.value.code == 2


def test_idempotent_over_seed(corpus_path, tmp_path):
    a = str(tmp_path / "a.jsonl")
    b = str(tmp_path / "b.jsonl")
    for out in (a, b):
        assert main(["decode", "--corpus", corpus_path, "--scorer", "random",
                     "--seed", "5", "--scheme", "full-copy", "--out", out]) == 0
    assert open(a).read() == open(b).read()


def test_scripted_scorer_file(tmp_path, corpus_path):
    items = read_records(corpus_path)
    script = str(tmp_path / "script.jsonl")
    with open(script, "w") as handle:
        for doc, _ in items:
            print(json.dumps({"doc_key": doc.doc_key, "steps": []}), file=handle)
    out = str(tmp_path / "pred.jsonl")
    assert main(["decode", "--corpus", corpus_path, "--scorer", script,
                 "--scheme", "full-token", "--out", out]) == 0
    assert len(read_jsonl(out)) == len(items)


def test_config_file_supplies_defaults(tmp_path, corpus_path):
    config = str(tmp_path / "cfg.json")
    with open(config, "w") as handle:
        json.dump({"scheme": "integer-free"}, handle)
    out = str(tmp_path / "pairs.jsonl")
    assert main(["--config", config, "encode", "--corpus", corpus_path,
                 "--out", out]) == 0
    assert read_jsonl(out)[0]["scheme"] == "integer-free"


def test_data_root_env_var(tmp_path, corpus_path, monkeypatch):
    monkeypatch.setenv("COREFSEQ_DATA_ROOT", os.path.dirname(corpus_path))
    out = str(tmp_path / "pairs.jsonl")
    assert main(["encode", "--corpus", os.path.basename(corpus_path),
                 "--out", out]) == 0


def test_jobs_flag_matches_sequential(corpus_path, tmp_path):
    seq = str(tmp_path / "seq.jsonl")
    par = str(tmp_path / "par.jsonl")
    assert main(["encode", "--corpus", corpus_path, "--out", seq]) == 0
    assert main(["encode", "--corpus", corpus_path, "--jobs", "2",
                 "--out", par]) == 0
    assert open(seq).read() == open(par).read()


def test_console_entry_point_help():
    proc = subprocess.run([sys.executable, "-m", "corefseq.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for command in ("encode", "decode", "align", "score", "roundtrip",
                    "segment", "oracle-align"):
        assert command in proc.stdout
