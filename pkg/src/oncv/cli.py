"""Command-line entry point: ingest, rollout, reward, evaluate, filter, confidence."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__
from .confidence import bucket_records, precision_recall, records_from_log, tables_to_csv
from .corpus import CorpusIndex, ingest_corpus
from .data import iter_jsonl, load_dataset
from .datafilter import run_filter
from .evaluation import evaluate_log
from .policy import FIXTURE_DIR, HttpChatPolicy, ScriptedPolicy
from .protocol import Mode, parse_transcript, validate_format
from .reward import RewardBreakdown, final_reward
from .evaluation import sample_from_record
from .rollout import EpisodeConfig, content_hash, run_batch, write_rollout_log

# key -> (type, default, environment variable)
SETTINGS: dict[str, tuple[type, Any, Optional[str]]] = {
    "base_url": (str, None, "ONCV_BASE_URL"),
    "model": (str, "default", "ONCV_MODEL"),
    "api_key_env": (str, "ONCV_API_KEY", None),
    "timeout": (float, 60.0, "ONCV_TIMEOUT"),
    "retries": (int, 3, "ONCV_RETRIES"),
    "rate_limit": (float, None, "ONCV_RATE_LIMIT"),
    "temperature": (float, 0.8, None),
    "max_tokens": (int, 512, None),
    "max_searches": (int, 3, None),
    "max_turns": (int, 4, None),
    "top_k": (int, 3, None),
    "group_size": (int, 3, None),
    "epsilon_norm": (float, 1e-6, None),
    "distractors": (int, 3, None),
    "jobs": (int, os.cpu_count() or 1, "ONCV_JOBS"),
}


class CliError(Exception):
    pass


def read_config_file(path: Optional[str]) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    if not path:
        return {}
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{n}: expected 'key = value'")
        k, v = (x.strip() for x in line.split("=", 1))
        k = k.replace("-", "_")
        if k not in SETTINGS:
            raise CliError(f"{path}:{n}: unknown setting {k!r}")
        out[k] = v
    return out


def resolve_settings(args: argparse.Namespace) -> dict[str, Any]:
    """Effective settings: flag > config file > environment > default."""
    file_cfg = read_config_file(getattr(args, "config", None))
    out = {}
    for key, (typ, default, env) in SETTINGS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            value = flag
        elif key in file_cfg:
            value = file_cfg[key]
        elif env and os.environ.get(env):
            value = os.environ[env]
        else:
            value = default
        out[key] = typ(value) if value is not None else None
    return out


def make_policy(ref: Optional[str], settings: dict[str, Any]):
    ref = ref or settings["base_url"]
    if not ref:
        raise CliError("no policy given: pass scripted:NAME or a URL, or set base_url")
    if ref.startswith("scripted:"):
        return ScriptedPolicy.load(ref.split(":", 1)[1])
    if ref.startswith(("http://", "https://")):
        return HttpChatPolicy(
            base_url=ref,
            model=settings["model"],
            api_key_env=settings["api_key_env"],
            temperature=settings["temperature"],
            max_tokens=settings["max_tokens"],
            timeout=settings["timeout"],
            retries=settings["retries"],
            max_requests_per_second=settings["rate_limit"],
        )
    raise CliError(f"policy must be 'scripted:NAME' or an http(s) URL, got {ref!r}")


def _write_meta(path: Path, command: str, settings: dict, extra: dict) -> None:
    meta = {"command": command, "version": __version__, "settings": settings, "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()), **extra}
    path.with_name(path.name + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _resolve_fixture(path: str) -> str:
    if path.startswith("fixture:"):
        return str(FIXTURE_DIR / path.split(":", 1)[1])
    return path


def cmd_ingest(args, settings) -> dict:
    index = ingest_corpus(_resolve_fixture(args.corpus))
    index.save(args.out)
    return {"entries": len(index), "skipped_empty": index.skipped_empty, "out": args.out}


def _load_index(path: str) -> CorpusIndex:
    path = _resolve_fixture(path)
    if path.endswith(".jsonl"):
        return ingest_corpus(path)
    return CorpusIndex.load(path)


def cmd_rollout(args, settings) -> dict:
    samples = load_dataset(_resolve_fixture(args.dataset))
    index = _load_index(args.index)
    cfg = EpisodeConfig(
        max_searches=settings["max_searches"],
        max_turns=max(settings["max_turns"], settings["max_searches"] + 1),
        top_k=settings["top_k"],
        prompt_template=args.mode,
        temperature=settings["temperature"],
        max_tokens=settings["max_tokens"],
        distractors=settings["distractors"],
    )
    policy = make_policy(args.policy, settings)
    results = run_batch(
        samples, policy, index, cfg, group_size=settings["group_size"], jobs=settings["jobs"], epsilon_norm=settings["epsilon_norm"]
    )
    out = Path(args.out)
    write_rollout_log(out, results)
    records = [r.to_record() for r in results]
    digest = content_hash(records)
    _write_meta(out, "rollout", settings, {"policy": args.policy or settings["base_url"], "mode": args.mode, "content_hash": digest})
    return {
        "episodes": len(results),
        "failed": sum(r.error is not None for r in results),
        "mean_reward": (sum(r.reward.r_final for r in results) / len(results)) if results else None,
        "content_hash": digest,
        "out": str(out),
    }


def audit_log(path: str) -> list[dict]:
    """Recompute every reward from its transcript; return the mismatching fields."""
    diffs = []
    for n, rec in enumerate(iter_jsonl(path)):
        if rec.get("error"):
            expected = RewardBreakdown.zero(sample_from_record(rec).gold).to_dict()
        else:
            sample = sample_from_record(rec)
            traj = parse_transcript(rec["transcript"], Mode.STRICT, claim=sample.claim)
            verdict = validate_format(traj, require_plan=rec.get("mode", "online") == "online")
            expected = final_reward(traj, sample.gold, verdict).to_dict()
        logged = rec.get("reward") or {}
        for k, v in expected.items():
            if logged.get(k) != v:
                diffs.append({"line": n + 1, "claim_id": rec.get("claim_id"), "field": k, "logged": logged.get(k), "recomputed": v})
    return diffs


def cmd_reward(args, settings) -> dict:
    diffs = audit_log(_resolve_fixture(args.log))
    return {"diffs": diffs, "num_diffs": len(diffs), "ok": not diffs}


def cmd_evaluate(args, settings) -> dict:
    report = evaluate_log(_resolve_fixture(args.log), relax_nei=not args.strict_nei)
    out = Path(args.report)
    out.write_text(report.to_json(), encoding="utf-8")
    table = out.with_suffix(".txt") if out.suffix != ".txt" else out.with_name(out.name + ".table.txt")
    table.write_text(report.to_table(), encoding="utf-8")
    return {"report": str(out), "table": str(table), "overall": report.overall.to_dict() if report.overall else None}


def cmd_filter(args, settings) -> dict:
    judge = make_policy(args.judge, settings)
    index = _load_index(args.index)
    report = run_filter(
        load_dataset(_resolve_fixture(args.dataset)), judge, index, concurrency=settings["jobs"], out=args.out, distractors=settings["distractors"]
    )
    _write_meta(Path(args.out), "filter", settings, {"judge": args.judge or settings["base_url"], **report.to_dict()})
    return report.to_dict()


def cmd_confidence(args, settings) -> dict:
    records = records_from_log(iter_jsonl(_resolve_fixture(args.log)))
    buckets = bucket_records(records)
    pr = precision_recall(records) if records else {}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "confidence.json").write_text(json.dumps({"buckets": buckets, "precision_recall": pr}, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    b_csv, pr_csv = tables_to_csv(buckets, pr)
    (out / "buckets.csv").write_text(b_csv, encoding="utf-8")
    (out / "precision_recall.csv").write_text(pr_csv, encoding="utf-8")
    return {"records": len(records), "excluded": buckets["excluded"], "out": str(out)}


class _JsonErrorParser(argparse.ArgumentParser):
    def error(self, message):
        print(json.dumps({"error": "UsageError", "message": message, "command": self.prog}), file=sys.stderr)
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _JsonErrorParser(prog="oncv", description="Claim-verification rollouts, rewards and evaluation.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_JsonErrorParser)

    def common(sp):
        sp.add_argument("--config", help="key = value settings file")
        sp.add_argument("--jobs", type=int)

    sp = sub.add_parser("ingest", help="build and persist a corpus index")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("rollout", help="run grouped episodes and write a rollout log")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--index", required=True, help="index file or corpus .jsonl")
    sp.add_argument("--policy", help="http(s) URL or scripted:NAME (default: base_url setting)")
    sp.add_argument("--mode", choices=("online", "offline"), default="online")
    sp.add_argument("--group-size", dest="group_size", type=int)
    sp.add_argument("--max-searches", dest="max_searches", type=int)
    sp.add_argument("--max-turns", dest="max_turns", type=int)
    sp.add_argument("--top-k", dest="top_k", type=int)
    sp.add_argument("--model")
    sp.add_argument("--temperature", type=float)
    sp.add_argument("--max-tokens", dest="max_tokens", type=int)
    sp.add_argument("--timeout", type=float)
    sp.add_argument("--retries", type=int)
    sp.add_argument("--rate-limit", dest="rate_limit", type=float)
    sp.add_argument("--epsilon-norm", dest="epsilon_norm", type=float)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_rollout)

    sp = sub.add_parser("reward", help="recompute rewards from a log and report differences")
    sp.add_argument("--log", required=True)
    common(sp)
    sp.set_defaults(func=cmd_reward)

    sp = sub.add_parser("evaluate", help="accuracy and evidence metrics from a log")
    sp.add_argument("--log", required=True)
    sp.add_argument("--strict-nei", action="store_true", help="do not relax evidence requirements for NEI claims")
    sp.add_argument("--report", required=True)
    common(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("filter", help="keep samples the judge reproduces exactly")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--index", required=True)
    sp.add_argument("--judge", help="http(s) URL or scripted:NAME (default: base_url setting)")
    sp.add_argument("--model")
    sp.add_argument("--distractors", type=int)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_filter)

    sp = sub.add_parser("confidence", help="confidence buckets and precision/recall tables")
    sp.add_argument("--log", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    common(sp)
    sp.set_defaults(func=cmd_confidence)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = resolve_settings(args)
        result = args.func(args, settings)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}), file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, sort_keys=True))
    if args.command == "reward" and not result["ok"]:
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
