"""Command-line front end: run scenarios, compare variants, export traces.

Exit codes: 0 success, 2 configuration error, 3 golden-trace mismatch,
4 engine invariant violation.

Environment overrides (applied when the matching flag is absent):
``EDGEUNLEARN_SEED`` replaces the scenario's rng_seed and
``EDGEUNLEARN_OUTDIR`` replaces its output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .config import ConfigError, ScenarioConfig, parse_config
from .engine import (
    EngineInvariantError,
    ScenarioResult,
    UnknownChunkError,
    metrics_to_csv,
    run_scenario,
    variant_from_tag,
)
from .memory import MemoryStore, ModelCheckpoint
from .workload import generate_workload

__all__ = ["main", "cmd_run", "cmd_compare", "cmd_trace", "cmd_verify_figure8", "GOLDEN_VICTIMS", "GOLDEN_STORED"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRACE_MISMATCH = 3
EXIT_ENGINE = 4

# Embedded golden walkthrough for the capacity-8 Fibonacci replacement:
# inserting checkpoints 1..14 must evict exactly these victims, in order.
GOLDEN_CAPACITY = 8
GOLDEN_INSERTS = 14
GOLDEN_VICTIMS = (1, 2, 4, 7, 11, 13)
GOLDEN_STORED = frozenset({3, 5, 6, 8, 9, 10, 12, 14})


def _apply_overrides(config: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    updates: dict[str, object] = {}
    seed = args.seed if args.seed is not None else os.environ.get("EDGEUNLEARN_SEED")
    if seed is not None:
        try:
            updates["rng_seed"] = int(seed)
        except ValueError:
            raise ConfigError(f"seed override {seed!r} is not an integer") from None
    out = args.out if args.out is not None else os.environ.get("EDGEUNLEARN_OUTDIR")
    if out is not None:
        updates["out_dir"] = out
    return dataclasses.replace(config, **updates) if updates else config


def _run_config(config: ScenarioConfig, variants: list[str], audit: bool = False) -> ScenarioResult:
    stream = generate_workload(config.workload_config())
    return run_scenario(stream, variants, **config.engine_kwargs())


def _summary(config: ScenarioConfig, result: ScenarioResult) -> dict:
    totals = {}
    for tag in sorted({r.variant for r in result.records}):
        rows = [r for r in result.records if r.variant == tag]
        totals[tag] = {
            "rsn_cumulative": rows[-1].rsn_cumulative,
            "energy_joules": round(sum(r.energy_joules for r in rows), 6),
            "replacements": sum(r.replacements for r in rows),
            "drops": sum(r.drops for r in rows),
            "final_accuracy": rows[-1].accuracy,
        }
    config_echo = dataclasses.asdict(config)
    config_echo["variants"] = list(config.variants)
    return {"config": config_echo, "totals": totals}


def cmd_run(config: ScenarioConfig, variant: str | None) -> int:
    tag = variant or config.variants[0]
    variant_from_tag(tag)  # validate before running
    result = _run_config(config, [tag])
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"metrics_{tag}.csv").write_text(metrics_to_csv(result.records))
    (out / f"summary_{tag}.json").write_text(json.dumps(_summary(config, result), indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / f'metrics_{tag}.csv'}")
    return EXIT_OK


def cmd_compare(config: ScenarioConfig) -> int:
    result = _run_config(config, list(config.variants))
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.csv").write_text(metrics_to_csv(result.records))
    (out / "summary.json").write_text(json.dumps(_summary(config, result), indent=2, sort_keys=True) + "\n")
    for tag in config.variants:
        print(f"{tag}: rsn_cumulative={result.cumulative_rsn(tag)}")
    print(f"wrote {out / 'compare.csv'}")
    return EXIT_OK


def cmd_trace(config: ScenarioConfig, variant: str | None) -> int:
    tag = variant or config.variants[0]
    variant_from_tag(tag)
    result = _run_config(config, [tag])
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    events = result.runs[tag].store.events
    path = out / f"trace_{tag}.jsonl"
    path.write_text("".join(e.to_json() + "\n" for e in events))
    print(f"wrote {path} ({len(events)} events)")
    return EXIT_OK


def cmd_verify_figure8() -> int:
    """Replay the embedded capacity-8 walkthrough and diff the golden trace."""
    store = MemoryStore(GOLDEN_CAPACITY, policy="fibor")
    victims = []
    for cid in range(1, GOLDEN_INSERTS + 1):
        event = store.store(ModelCheckpoint(checkpoint_id=cid, lineage_id=(0, 0)))
        if event.kind == "replace":
            victims.append(event.evicted)
    stored = {c.checkpoint_id for c in store.resident_checkpoints()}
    ok = tuple(victims) == GOLDEN_VICTIMS and stored == GOLDEN_STORED
    print(f"victims:  {victims}")
    print(f"stored:   {sorted(stored)}")
    if not ok:
        print(f"expected victims {list(GOLDEN_VICTIMS)} and stored {sorted(GOLDEN_STORED)}")
        print("golden trace MISMATCH")
        return EXIT_TRACE_MISMATCH
    print("golden trace OK")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgeunlearn",
        description="Exact-unlearning simulator for memory-constrained devices.",
        epilog="Environment: EDGEUNLEARN_SEED overrides rng_seed, EDGEUNLEARN_OUTDIR overrides out_dir.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, with_variant: bool) -> None:
        p.add_argument("--config", required=True, help="scenario config file (key = value lines)")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--seed", type=int, help="rng seed override")
        if with_variant:
            p.add_argument("--variant", help="system variant tag (default: first in config)")

    add_common(sub.add_parser("run", help="run one variant, write its metrics CSV"), True)
    add_common(sub.add_parser("compare", help="run all configured variants on one shared workload"), False)
    add_common(sub.add_parser("trace", help="dump the replacement-event trace of one variant"), True)
    sub.add_parser("verify-figure8", help="check the embedded replacement golden trace")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "verify-figure8":
        return cmd_verify_figure8()
    try:
        config = _apply_overrides(parse_config(args.config), args)
        if args.command == "run":
            return cmd_run(config, args.variant)
        if args.command == "compare":
            return cmd_compare(config)
        if args.command == "trace":
            return cmd_trace(config, args.variant)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EngineInvariantError, UnknownChunkError) as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    raise SystemExit(main())
