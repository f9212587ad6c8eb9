import csv
import json
import subprocess
import sys

import pytest

from latpat.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main


@pytest.fixture(scope="module")
def session_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("session")
    assert main(["generate", "--seed", "3", "--requests", "400", "-o", str(out)]) == EXIT_OK
    return out


class TestGenerate:
    def test_outputs(self, session_dir):
        truth = json.loads((session_dir / "ground_truth.json").read_text())
        assert set(truth["degradations"]) == {"A1", "A2"}
        assert truth["config"]["seed"] == 3 and len(truth["target_interval"]) == 2
        header = (session_dir / "traces.csv").read_text().splitlines()[0].split(",")
        assert header[-2:] == ["gethome_latency", "label"]

    def test_byte_identical(self, tmp_path, session_dir):
        main(["generate", "--seed", "3", "--requests", "400", "-o", str(tmp_path)])
        for name in ("traces.csv", "ground_truth.json"):
            assert (tmp_path / name).read_bytes() == (session_dir / name).read_bytes()

    def test_noised_without_async(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"topology": {"rpcs": [{"name": n} for n in "abc"]}}))
        assert main(["generate", "--config", str(cfg), "--noised", "-o", str(tmp_path / "o")]) == EXIT_CONFIG


class TestAnalyze:
    def run(self, session_dir, tmp_path, name, *extra):
        out = tmp_path / name
        code = main(["analyze", "--input", str(session_dir / "traces.csv"), "--generations", "15",
                     "--out", str(out), *extra])
        return code, out

    def test_report_and_determinism(self, session_dir, tmp_path):
        c1, a = self.run(session_dir, tmp_path, "a.json")
        c2, b = self.run(session_dir, tmp_path, "b.json")
        assert c1 == c2 == EXIT_OK and a.read_bytes() == b.read_bytes()
        report = json.loads(a.read_text())
        assert report["config"]["ga"]["generations"] == 15
        assert report["segmentation"]["segments"] and "metrics" in report
        assert None in report["thresholds"]["gethome"]  # +inf serialised as null

    def test_explicit_interval_and_bnb(self, session_dir, tmp_path):
        code, out = self.run(session_dir, tmp_path, "c.json", "--interval", "130:400",
                             "--method", "bnb", "--bnb-depth", "1")
        report = json.loads(out.read_text())
        assert code == EXIT_OK and report["config"]["interval"] == [130.0, 400.0]
        assert report["bnb"]["expanded"] > 0

    def test_exit_codes(self, session_dir, tmp_path):
        assert self.run(session_dir, tmp_path, "d.json", "--interval", "5000:6000")[0] == EXIT_DATA
        assert self.run(session_dir, tmp_path, "e.json", "--interval", "7:3")[0] == EXIT_CONFIG
        assert main(["analyze", "--input", str(tmp_path / "missing.csv")]) == EXIT_DATA
        bad = tmp_path / "bad.csv"
        bad.write_text("a,lat\n-1,3\n")
        assert main(["analyze", "--input", str(bad)]) == EXIT_DATA
        assert self.run(session_dir, tmp_path, "f.json", "--generations", "-1")[0] == EXIT_CONFIG


class TestBaseline:
    @pytest.mark.parametrize("method", ["kmeans", "hier", "meanshift"])
    def test_clusters(self, session_dir, tmp_path, method):
        out = tmp_path / f"{method}.json"
        assert main(["baseline", "--method", method, "--input", str(session_dir / "traces.csv"),
                     "--out", str(out)]) == EXIT_OK
        report = json.loads(out.read_text())
        assert report["clusters"] and 0 <= report["metrics"]["fscore"] <= 1

    def test_bad_k(self, session_dir, tmp_path):
        assert main(["baseline", "--method", "kmeans", "--k", "0", "--input",
                     str(session_dir / "traces.csv"), "--out", str(tmp_path / "k.json")]) == EXIT_CONFIG


class TestEvaluate:
    def test_rows(self, tmp_path):
        code = main(["evaluate", "--sessions", "5", "--requests", "200", "--methods", "kmeans,hier",
                     "-o", str(tmp_path)])
        assert code == EXIT_OK
        with open(tmp_path / "evaluation.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 10
        assert {r["method"] for r in rows} == {"kmeans", "hier"}
        assert {r["session"] for r in rows} == {str(s) for s in range(5)}
        summary = json.loads((tmp_path / "evaluation.json").read_text())["summary"]
        assert summary["kmeans"]["sessions"] == 5

    def test_labelled_input(self, session_dir, tmp_path):
        assert main(["evaluate", "--input", str(session_dir / "traces.csv"), "--method", "meanshift",
                     "-o", str(tmp_path)]) == EXIT_OK

    def test_unlabelled_input(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("a,lat\n1,2\n3,4\n")
        assert main(["evaluate", "--input", str(path), "-o", str(tmp_path / "o")]) == EXIT_DATA

    def test_unknown_method(self, tmp_path):
        assert main(["evaluate", "--methods", "dbscan", "-o", str(tmp_path)]) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "latpat", "generate", "--requests", "50",
                           "-o", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and (tmp_path / "traces.csv").exists()
