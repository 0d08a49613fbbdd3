import json
import subprocess
import sys

import numpy as np
import pytest

from archeval.cli import main
from archeval.evaluation import leave_one_out_crr
from archeval.index import load_index, save_index
from archeval.knowledge import seed_kb_path
from archeval.labels import PatternLabel
from archeval.synthetic import make_corpus, render_diagram

SEED_KB = str(seed_kb_path())


@pytest.fixture
def run(capsys):
    def _run(*argv):
        code = main([str(a) for a in argv])
        out, err = capsys.readouterr()
        return code, out, err
    return _run


@pytest.fixture(scope="module")
def micro_index_file(micro_index, tmp_path_factory):
    p = tmp_path_factory.mktemp("cli") / "micro.idx"
    save_index(micro_index, p)
    return p


class TestIndex:
    def test_micro_corpus(self, run, micro_corpus, tmp_path):
        out_idx, out_json = tmp_path / "m.idx", tmp_path / "build.json"
        code, out, _ = run("index", micro_corpus, out_idx, "--out", out_json)
        assert code == 0
        assert out.strip().splitlines()[-1] == "INDEXED 10 REJECTED 0"
        assert len(load_index(out_idx)) == 10
        assert json.loads(out_json.read_text())["rejected"] == []

    def test_unknown_label_dir(self, run, tmp_path):
        make_corpus(tmp_path, [PatternLabel.REST], per_class=1)
        (tmp_path / "fancy-pattern").mkdir()
        code, out, err = run("index", tmp_path, tmp_path / "x.idx")
        assert code == 2
        assert "fancy-pattern" in err
        assert all(l.value in err for l in PatternLabel)
        assert not (tmp_path / "x.idx").exists()

    def test_undersized_reported(self, run, tmp_path):
        corpus = tmp_path / "c"
        make_corpus(corpus, [PatternLabel.REST], per_class=2)
        render_diagram(PatternLabel.REST, np.random.default_rng(0), size=300).save(corpus / "rest" / "small.png")
        code, out, _ = run("index", corpus, tmp_path / "x.idx")
        assert code == 0
        assert any(l.startswith("REJECTED ") and "small.png" in l for l in out.splitlines())
        assert "INDEXED 2 REJECTED 1" in out

    def test_gate_override(self, run, tmp_path):
        corpus = tmp_path / "c"
        (corpus / "rest").mkdir(parents=True)
        render_diagram(PatternLabel.REST, np.random.default_rng(0), size=300).save(corpus / "rest" / "small.png")
        code, out, err = run("index", corpus, tmp_path / "x.idx", "--gate-override")
        assert code == 0 and "INDEXED 1 REJECTED 0" in out and "WARNING" in err

    def test_missing_root(self, run, tmp_path):
        code, _, err = run("index", tmp_path / "absent", tmp_path / "x.idx")
        assert code == 2

    def test_bad_config(self, run, micro_corpus, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"sift": {"octaves": 4, "bogus": 1}}))
        code, _, err = run("index", micro_corpus, tmp_path / "x.idx", "--config", cfg)
        assert code == 2 and "bogus" in err
        assert not (tmp_path / "x.idx").exists()

    def test_unwritable_output(self, run, micro_corpus, tmp_path):
        code, _, _ = run("index", micro_corpus, tmp_path / "no" / "such" / "dir.idx")
        assert code == 1


class TestEvaluate:
    def test_report(self, run, micro_index_file, micro_corpus, tmp_path):
        img = micro_corpus / "pipe-and-filter" / "pipe-and-filter_002.png"
        out_json = tmp_path / "r.json"
        code, out, _ = run("evaluate", micro_index_file, SEED_KB, img, "--out", out_json, "--top-k", 3)
        assert code == 0
        assert "pattern:   pipe-and-filter" in out
        assert "strengths: performance, availability, reliability" in out
        assert "recommended tactics:" in out
        data = json.loads(out_json.read_text())
        assert data["pattern"] == "pipe-and-filter" and len(data["evidence"]) == 3

    def test_missing_kb(self, run, micro_index_file, micro_corpus, tmp_path):
        kb = tmp_path / "missing-kb.txt"
        code, _, err = run("evaluate", micro_index_file, kb, micro_corpus / "layered" / "layered_000.png")
        assert code == 1 and str(kb) in err

    def test_low_confidence_banner(self, run, micro_index_file, tmp_path):
        img = tmp_path / "other.png"
        render_diagram(PatternLabel.MICROSERVICES, np.random.default_rng(4)).save(img)
        code, out, _ = run("evaluate", micro_index_file, SEED_KB, img, "--min-confidence", 0.0)
        assert code == 0 and "LOW CONFIDENCE" in out

    def test_gate_stage_error(self, run, micro_index_file, tmp_path):
        img = tmp_path / "small.png"
        render_diagram(PatternLabel.LAYERED, np.random.default_rng(4), size=200).save(img)
        code, _, err = run("evaluate", micro_index_file, SEED_KB, img, "--out", tmp_path / "r.json")
        assert code == 1 and "quality-gate" in err
        assert not (tmp_path / "r.json").exists()
        code, out, _ = run("evaluate", micro_index_file, SEED_KB, img, "--gate-override")
        assert code == 0 and "pattern:" in out

    def test_invalid_kb(self, run, micro_index_file, micro_corpus, tmp_path):
        kb = tmp_path / "kb.txt"
        kb.write_text("qa security\n")
        code, _, err = run("evaluate", micro_index_file, kb, micro_corpus / "layered" / "layered_000.png")
        assert code == 2

    def test_corrupt_index(self, run, micro_corpus, tmp_path):
        bad = tmp_path / "bad.idx"
        bad.write_bytes(b"ARPX\x01\x00")
        code, _, _ = run("evaluate", bad, SEED_KB, micro_corpus / "layered" / "layered_000.png")
        assert code == 1

    def test_flag_validation_before_io(self, run, tmp_path):
        code, _, _ = run("evaluate", tmp_path / "a", tmp_path / "b", tmp_path / "c", "--top-k", 0)
        assert code == 2


class TestCrr:
    def test_micro_corpus(self, run, micro_index_file, micro_index):
        code, out, _ = run("crr", micro_index_file)
        assert code == 0
        rep = leave_one_out_crr(micro_index)
        assert f"CRR {rep.crr:.2f}% ({rep.x}/10 correct at rank 1)" in out
        assert "genuine" in out and "imposter" in out

    def test_subset_curve_byte_identical(self, run, six_class_index, tmp_path):
        idx = tmp_path / "six.idx"
        save_index(six_class_index, idx)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        r1 = run("crr", idx, "--subset-curve", "--seed", 7, "--sample-cap", 4, "--out", a)
        r2 = run("crr", idx, "--subset-curve", "--seed", 7, "--sample-cap", 4, "--out", b)
        assert r1[0] == r2[0] == 0
        assert r1[1] == r2[1]
        assert a.read_bytes() == b.read_bytes()
        assert len(json.loads(a.read_text())["subset_curve"]["summary"]) == 5

    def test_single_class(self, run, micro_index, tmp_path):
        idx = tmp_path / "one.idx"
        keep = [i for i, l in enumerate(micro_index.labels) if l is PatternLabel.LAYERED]
        save_index(micro_index.subset(keep), idx)
        code, _, err = run("crr", idx, "--out", tmp_path / "o.json")
        assert code == 2
        assert not (tmp_path / "o.json").exists()

    def test_missing_index(self, run, tmp_path):
        assert run("crr", tmp_path / "none.idx")[0] == 1

    def test_bad_sample_cap(self, run, micro_index_file):
        assert run("crr", micro_index_file, "--sample-cap", 0)[0] == 2


class TestKbValidate:
    def test_seed(self, run):
        code, out, _ = run("kb-validate", SEED_KB)
        assert code == 0 and "14 patterns, 45 tactics" in out

    def test_conflict(self, run, tmp_path):
        text = seed_kb_path().read_text().replace(
            "pattern rest: strength scalability,", "pattern rest: strength security, scalability,")
        kb = tmp_path / "kb.txt"
        kb.write_text(text)
        code, _, err = run("kb-validate", kb)
        assert code == 2
        assert "rest" in err and "security" in err and "polarity conflict" in err

    def test_unreadable(self, run, tmp_path):
        assert run("kb-validate", tmp_path / "nope.txt")[0] == 1
        assert run("kb-validate", tmp_path)[0] == 1


class TestStats:
    def test_stats(self, run, micro_index_file, tmp_path):
        code, out, _ = run("stats", micro_index_file, "--out", tmp_path / "s.json")
        assert code == 0
        assert "records: 10" in out and "pipe-and-filter" in out
        data = json.loads((tmp_path / "s.json").read_text())
        assert data["scores"]["genuine"]["count"] == 40 and data["scores"]["imposter"]["count"] == 50


def test_usage_errors_exit_2(run):
    assert run("no-such-command")[0] == 2
    assert run("crr")[0] == 2


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "archeval.cli", "kb-validate", SEED_KB],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("OK ")
