"""End-to-end against the orchestrator CLI: live workers, real execution.

The orchestrator package is exercised purely through its command-line
surface; this suite never imports it.
"""

import json
import subprocess
import sys

import pytest

ORCHESTRATOR = [sys.executable, "-m", "specforge.cli"]
WORKER_CMD = f"{sys.executable} -m sandbox_worker"


def _run(*argv):
    result = subprocess.run(
        [*ORCHESTRATOR, *argv], capture_output=True, text=True, timeout=300
    )
    assert result.returncode == 0, result.stderr
    return json.loads(result.stdout) if result.stdout.strip() else {}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    (root / "cities.csv").write_text(
        "city,population,area\n"
        "springfield,30000,12.5\n"
        "riverton,82000,40.1\n"
        "lakeside,5600,8.9\n"
        "hillview,47000,22.3\n"
    )
    (root / "sales.csv").write_text(
        "region,units,revenue\n"
        "north,12,1200.5\n"
        "south,7,640.0\n"
        "east,31,2980.25\n"
    )
    return root


@pytest.fixture(scope="module")
def executed(corpus, tmp_path_factory):
    work = tmp_path_factory.mktemp("work")
    paths = {name: work / f"{name}.ndr" for name in
             ("contexts", "intents", "candidates", "executions")}
    _run("mine-contexts", "--input-dir", str(corpus), "--out", str(paths["contexts"]))
    _run("gen-intents", "--contexts", str(paths["contexts"]),
         "--out", str(paths["intents"]), "--backend", "mock", "--n", "4")
    _run("gen-solutions", "--intents", str(paths["intents"]),
         "--contexts", str(paths["contexts"]), "--out", str(paths["candidates"]),
         "--backend", "mock", "--samples", "3")
    summary = _run(
        "execute", "--candidates", str(paths["candidates"]),
        "--intents", str(paths["intents"]), "--contexts", str(paths["contexts"]),
        "--out", str(paths["executions"]), "--worker-cmd", WORKER_CMD,
        "--workers", "2", "--timeout-ms", "20000",
    )
    return work, paths, summary


def test_live_execution_covers_every_candidate(executed):
    _, paths, summary = executed
    candidate_lines = paths["candidates"].read_text().strip().splitlines()
    n_candidates = len(candidate_lines) - 1  # header record
    assert summary["records"] == n_candidates
    assert sum(summary["status_histogram"].values()) == n_candidates


def test_live_execution_produces_real_successes(executed):
    _, _, summary = executed
    assert summary["status_histogram"].get("ok", 0) >= 1
    assert summary["execution_rate"] > 0


def test_traced_records_survive_downstream_stages(executed):
    work, paths, _ = executed
    specs = work / "specs.ndr"
    _run("derive-specs", "--executions", str(paths["executions"]),
         "--intents", str(paths["intents"]), "--candidates", str(paths["candidates"]),
         "--spec-type", "io_examples", "--out", str(specs))
    dataset = work / "dataset.ndr"
    stats = work / "stats.json"
    _run("build-dataset", "--executions", str(paths["executions"]),
         "--candidates", str(paths["candidates"]), "--intents", str(paths["intents"]),
         "--contexts", str(paths["contexts"]), "--specs", str(specs),
         "--cap", "2", "--out", str(dataset), "--stats", str(stats))
    report = json.loads(stats.read_text())
    assert report["examples"] >= 1
    for line in dataset.read_text().strip().splitlines()[1:]:
        record = json.loads(line)
        assert record["meta"]["executable"] is True


def test_error_report_over_live_records(executed):
    work, paths, _ = executed
    errors = work / "errors.json"
    _run("report", "--executions", str(paths["executions"]), "--out", str(errors))
    report = json.loads(errors.read_text())
    assert sum(report["counts"].values()) == report["total"]
