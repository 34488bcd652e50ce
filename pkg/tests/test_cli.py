from __future__ import annotations

import json

import pytest

from vulnreach.cli import EXIT_CLEAN, EXIT_ERROR, EXIT_VULNERABLE, main
from vulnreach.fixtures import FIGURE1_ADVISORY, FIGURE1_ROOT, CorpusSpec, generate


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestAnalyze:
    def test_exit_codes(self, capsys, figure1_dir):
        base = ["analyze", "--corpus", str(figure1_dir), "--root", FIGURE1_ROOT]
        code, out, _ = run(capsys, *base, "--depth", "1")
        assert code == EXIT_CLEAN and "not vulnerable" in out
        code, out, _ = run(capsys, *base, "--depth", "max")
        assert code == EXIT_VULNERABLE and "C.Zeta()" in out
        code, out, _ = run(capsys, *base, "--level", "package", "--format", "json")
        assert code == EXIT_VULNERABLE and json.loads(out)["findings"][0]["chain"] is None

    def test_split_inputs(self, capsys, figure1_dir):
        code, out, _ = run(capsys, "analyze", "--root", FIGURE1_ROOT, "--format", "json",
                           "--registry", str(figure1_dir / "registry"),
                           "--advisories", str(figure1_dir / "advisories"),
                           "--graphs", str(figure1_dir / "graphs"),
                           "--patches", str(figure1_dir / "patches"))
        assert code == EXIT_VULNERABLE
        (f,) = json.loads(out)["findings"]
        assert f["chain"][-1] == ["org.example:c:1.0", "C.Zeta()"]

    def test_missing_inputs(self, capsys):
        code, _, err = run(capsys, "analyze", "--root", FIGURE1_ROOT)
        assert code == EXIT_ERROR and "--registry" in err

    def test_bad_depth_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["analyze", "--root", FIGURE1_ROOT, "--depth", "0"])
        assert exc.value.code == EXIT_ERROR


def test_resolve_stitch_analyze_with_deps(capsys, figure1_dir, tmp_path):
    deps = tmp_path / "deps.json"
    assert run(capsys, "resolve", "--root", FIGURE1_ROOT, "--registry", str(figure1_dir / "registry"),
               "--out", str(deps))[0] == EXIT_CLEAN
    assert len(json.loads(deps.read_text())["nodes"]) == 3
    code, out, _ = run(capsys, "resolve", "--root", FIGURE1_ROOT, "--registry",
                       str(figure1_dir / "registry"), "--format", "tree")
    assert out.splitlines()[0] == FIGURE1_ROOT

    whole = tmp_path / "whole.json"
    assert run(capsys, "stitch", "--root", FIGURE1_ROOT, "--graphs", str(figure1_dir / "graphs"),
               "--deps", str(deps), "--out", str(whole))[0] == EXIT_CLEAN
    doc = json.loads(whole.read_text())
    assert len(doc["nodes"]) == 6 and len(doc["edges"]) == 3 and doc["unresolved"] == []

    code, _, _ = run(capsys, "stitch", "--root", FIGURE1_ROOT, "--graphs", str(figure1_dir / "graphs"),
                     "--deps", str(deps), "--depth", "1")
    assert code == EXIT_CLEAN

    code, _, _ = run(capsys, "analyze", "--corpus", str(figure1_dir), "--deps", str(deps),
                     "--root", FIGURE1_ROOT)
    assert code == EXIT_VULNERABLE


def test_kb_commands(capsys, figure1_dir, tmp_path):
    code, out, _ = run(capsys, "kb", "load", "--dir", str(figure1_dir / "advisories"), "--out", str(tmp_path / "n"))
    assert code == EXIT_CLEAN and "loaded 1 advisories" in out
    assert (tmp_path / "n").is_dir()
    for by in ("year", "severity", "year-severity", "cwe"):
        code, out, _ = run(capsys, "kb", "stats", "--dir", str(figure1_dir / "advisories"), "--by", by)
        assert code == EXIT_CLEAN and out
    code, out, _ = run(capsys, "kb", "stats", "--dir", str(figure1_dir / "advisories"), "--by", "cwe",
                       "--format", "json")
    assert json.loads(out) == [{"cwe": "CWE-94", "advisories": 1, "High": 1}]


def test_affected_versions(capsys, figure1_dir, tmp_path):
    releases = tmp_path / "releases.txt"
    releases.write_text("1.0\n1.1\n0.9\n")
    code, out, _ = run(capsys, "affected-versions", "--project", "org.example:c",
                       "--releases", str(releases), "--advisories", str(figure1_dir / "advisories"))
    doc = json.loads(out)
    assert code == EXIT_CLEAN
    assert doc["total"] == 3 and doc["vulnerable"] == ["0.9", "1.0"]
    assert doc["advisories"][FIGURE1_ADVISORY]["lower_bound_absent"] is True
    code, out, _ = run(capsys, "affected-versions", "--project", "org.example:c",
                       "--registry", str(figure1_dir / "registry"), "--advisories", str(figure1_dir / "advisories"))
    assert json.loads(out)["vulnerable"] == ["1.0"]
    code, _, err = run(capsys, "affected-versions", "--project", "org.example:c",
                       "--advisories", str(figure1_dir / "advisories"))
    assert code == EXIT_ERROR and "--releases" in err


def test_run_and_reports(capsys, tmp_path):
    corpus = tmp_path / "corpus"
    code, out, _ = run(capsys, "fixtures", "generate", "--out", str(corpus), "--seed", "2", "--projects", "20",
                       "--roots", "10")
    assert code == EXIT_CLEAN and "10 roots" in out
    store = tmp_path / "store"
    code, _, _ = run(capsys, "run", "--corpus", str(corpus), "--store", str(store), "--k", "1,2,max",
                     "--workers", "2")
    assert code == EXIT_CLEAN
    assert sorted(json.loads((store / "index.json").read_text())["runs"]) == ["run-method", "run-package"]

    out_file = tmp_path / "impact.tsv"
    assert run(capsys, "report", "top-impact", "--runs", str(store / "run-package"), str(store / "run-method"),
               "--format", "tsv", "--out", str(out_file))[0] == EXIT_CLEAN
    assert out_file.read_text().startswith("CVE\tproject\tpotential")
    code, out, _ = run(capsys, "report", "coverage-curve", "--run", str(store / "run-method"))
    assert code == EXIT_CLEAN and "exact_level_advisories" in out
    code, out, _ = run(capsys, "report", "coverage-curve", "--run", str(store / "run-method"), "--format", "json")
    assert json.loads(out)[-1]["k"] == "max"
    code, out, _ = run(capsys, "report", "version-dist", "--advisories", str(corpus / "advisories"),
                       "--registry", str(corpus / "registry"), "--format", "tsv")
    assert code == EXIT_CLEAN and out.splitlines()[0] == "project\ttotal\tvulnerable\tpercent"

    # mismatched runs are an error, not a crash
    code, _, err = run(capsys, "report", "top-impact", "--runs", str(store / "run-method"), str(store / "run-package"))
    assert code == EXIT_ERROR and "expected package level" in err


def test_fixture_preset_and_errors(capsys, tmp_path):
    code, out, _ = run(capsys, "fixtures", "generate", "--preset", "figure1", "--out", str(tmp_path / "f"))
    assert code == EXIT_CLEAN and "1 advisories" in out
    code, _, err = run(capsys, "fixtures", "generate", "--preset", "figure1", "--out", str(tmp_path / "f"))
    assert code == EXIT_ERROR and "not empty" in err
    code, _, err = run(capsys, "fixtures", "generate", "--out", str(tmp_path / "g"), "--vulnerability-rate", "2")
    assert code == EXIT_ERROR


def test_unknown_root(capsys, figure1_dir):
    code, _, err = run(capsys, "analyze", "--corpus", str(figure1_dir), "--root", "g:nope:1")
    assert code == EXIT_ERROR and err.startswith("sca: error:")


def test_workers_do_not_change_output(tmp_path):
    corpus = generate(CorpusSpec(seed=4, project_count=20, root_count=12), tmp_path / "c").path
    for workers in ("1", "4"):
        assert main(["run", "--corpus", str(corpus), "--store", str(tmp_path / f"s{workers}"),
                     "--k", "", "--workers", workers]) == EXIT_CLEAN
    a = json.loads((tmp_path / "s1" / "run-method" / "result.json").read_text())
    b = json.loads((tmp_path / "s4" / "run-method" / "result.json").read_text())
    a.pop("created_at"), b.pop("created_at")
    assert a == b
