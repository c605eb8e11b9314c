"""Run ingest -> rollout -> reward audit -> evaluate -> confidence on the shipped fixtures.

Usage: python scripts/run_fixture_pipeline.py [--policy scripted:mixed] [--out runs/fixture]
"""

import argparse
import sys
from pathlib import Path

from oncv.cli import main as oncv


def step(*argv):
    print("$ oncv " + " ".join(argv), flush=True)
    code = oncv(list(argv))
    if code:
        sys.exit(code)


def run(policy: str, out: Path, group_size: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    index = str(out / "index.json")
    log = str(out / "rollout.jsonl")
    step("ingest", "--corpus", "fixture:corpus.jsonl", "--out", index)
    step("rollout", "--dataset", "fixture:dataset.jsonl", "--index", index, "--policy", policy,
         "--group-size", str(group_size), "--out", log)
    step("reward", "--log", log)
    step("evaluate", "--log", log, "--report", str(out / "report.json"))
    step("confidence", "--log", log, "--out", str(out / "confidence"))
    print((out / "report.txt").read_text())


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--policy", default="scripted:mixed")
    ap.add_argument("--group-size", type=int, default=3)
    ap.add_argument("--out", type=Path, default=Path("runs/fixture"))
    a = ap.parse_args()
    run(a.policy, a.out, a.group_size)
