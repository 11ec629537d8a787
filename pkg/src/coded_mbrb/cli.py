"""Experiment runner: seeded campaigns and parameter sweeps over the simulator.

A campaign is a grid over (nodes, drops, k, payload size, adversary strategy,
behavior spec, protocol) crossed with a seed range. Every expanded point must
pass model validation and the k-selection bounds before anything runs
(--allow-unsafe skips both). Each run emits one CSV row (and a JSON document
under --output); the process exits 0 only if every applicable verdict passed.

Exit codes: 0 ok, 1 verdict failure, 2 config error, 3 inconclusive run
(event cap hit). Failures take precedence over inconclusive runs.

Flags override values from --config (a flat key=value file); flag names and
file keys are identical. List-valued flags (comma-separated) form sweep axes.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import itertools
import sys
from dataclasses import dataclass
from pathlib import Path

from .codec import payload_digest16
from .metrics import RunMetrics, CSV_COLUMNS, auto_k, csv_row, run_json, validate_k
from .simnet import (
    ADVERSARY_STRATEGIES,
    BYZANTINE_BEHAVIORS,
    PROTOCOLS,
    SCHEDULER_POLICIES,
    ConfigError,
    SimConfig,
    Simulation,
)

EXIT_OK = 0
EXIT_VERDICT_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_INCONCLUSIVE = 3


def parse_size(text: str) -> int:
    """Byte size with optional binary suffix: '256', '64k'/'64KiB', '1m'/'1MiB'."""
    raw = text.strip().lower()
    for suffix, factor in (("kib", 1024), ("mib", 1024 ** 2), ("k", 1024), ("m", 1024 ** 2)):
        if raw.endswith(suffix):
            return int(raw[: -len(suffix)]) * factor
    return int(raw)


def parse_behavior_spec(spec: str, *, t: int, n: int, sender_id: int) -> tuple:
    """Turn a behavior spec into ((node_id, behavior), ...) assignments.

    '+'-joined entries; 'sender:NAME' targets the sender, bare 'NAME' claims
    the highest-numbered unassigned non-sender node. 'none' means no
    Byzantine nodes act (t still bounds the model). Without an explicit spec,
    all t Byzantine nodes crash.
    """
    if spec in ("", "none"):
        return ()
    entries = [e.strip() for e in spec.split("+") if e.strip()]
    if len(entries) > t:
        raise ConfigError(f"behavior spec {spec!r} names {len(entries)} nodes, t={t}")
    assignments = []
    taken = {sender_id}
    pool = [i for i in range(n, 0, -1) if i != sender_id]
    for entry in entries:
        if entry.startswith("sender:"):
            name = entry.split(":", 1)[1]
            if sender_id in (node for node, _ in assignments):
                raise ConfigError("sender assigned twice in behavior spec")
            assignments.append((sender_id, name))
            continue
        node = next((i for i in pool if i not in taken), None)
        if node is None:
            raise ConfigError(f"no node left for behavior {entry!r}")
        taken.add(node)
        assignments.append((node, entry))
    for _, name in assignments:
        if name not in BYZANTINE_BEHAVIORS:
            raise ConfigError(f"unknown behavior {name!r}")
    return tuple(sorted(assignments))


def default_behaviors(t: int, n: int, sender_id: int) -> tuple:
    pool = [i for i in range(n, 0, -1) if i != sender_id][:t]
    return tuple(sorted((i, "crash") for i in pool))


@dataclass(frozen=True)
class Campaign:
    """A validated grid of run configurations crossed with a seed range."""

    points: tuple            # tuple[SimConfig-without-seed templates]
    seeds: tuple

    @property
    def total_runs(self) -> int:
        return len(self.points) * len(self.seeds)


def build_campaign(args) -> Campaign:
    seeds = tuple(range(args.seed, args.seed + args.runs))
    if not seeds:
        raise ConfigError("need at least one seed (--runs >= 1)")
    points = []
    grid = itertools.product(
        args.nodes, args.drops, args.ecc_k, args.msg_size, args.adversary,
        args.behavior, args.protocol,
    )
    for n, d, k_spec, msg_size, adversary, behavior_spec, protocol in grid:
        t = args.byzantine
        k = auto_k(n, t, d, args.epsilon) if k_spec == "auto" else int(k_spec)
        if behavior_spec == "default":
            behaviors = default_behaviors(t, n, sender_id=1)
        else:
            behaviors = parse_behavior_spec(behavior_spec, t=t, n=n, sender_id=1)
        template = SimConfig(
            n=n,
            t=t,
            d=d,
            k=k,
            payload_len=msg_size,
            seed=0,
            epsilon=args.epsilon,
            adversary_strategy=adversary,
            byzantine_behavior=behaviors,
            scheduler_policy=args.scheduler,
            max_events=args.max_events,
            vc_scheme=args.vc_scheme,
            protocol=protocol,
            adversary_targets=tuple(args.targets),
            allow_unsafe=args.allow_unsafe,
            deep_checks=args.deep_checks,
        )
        points.append(template)
    campaign = Campaign(points=tuple(points), seeds=seeds)
    _validate_campaign(campaign)
    return campaign


def _validate_campaign(campaign: Campaign) -> None:
    problems = []
    for idx, point in enumerate(campaign.points):
        try:
            point.validate()
        except ConfigError as exc:
            problems.append(f"point {idx}: {exc}")
            continue
        if not point.allow_unsafe and point.protocol == "coded":
            check = validate_k(point.n, point.t, point.d, point.epsilon, point.k)
            if not check.ok:
                problems.append(f"point {idx}: {check.report()}")
    if problems:
        raise ConfigError("\n".join(problems))


def run_experiment(config: SimConfig) -> tuple[RunMetrics, Simulation]:
    """Run one seeded instance and return its checked metrics."""
    config.validate()
    sim = Simulation(config)
    metrics = sim.run_to_quiescence()
    return metrics, sim


def _run_point(task):
    point_idx, template, seed = task
    config = dataclasses.replace(template, seed=seed)
    metrics, sim = run_experiment(config)
    return point_idx, seed, config, metrics, payload_digest16(sim.payload)


def run_sweep(campaign: Campaign, output: Path | None, jobs: int = 1):
    """Execute the grid x seeds, write CSV/JSON artifacts, return (rows, exit code)."""
    tasks = [
        (point_idx, template, seed)
        for point_idx, template in enumerate(campaign.points)
        for seed in campaign.seeds
    ]
    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point, tasks))
    else:
        results = [_run_point(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))

    rows = [",".join(CSV_COLUMNS)]
    any_fail = False
    any_inconclusive = False
    for point_idx, seed, config, metrics, payload_digest in results:
        rows.append(",".join(csv_row(point_idx, seed, config.echo(), metrics)))
        any_fail = any_fail or not metrics.verdicts.all_ok
        any_inconclusive = any_inconclusive or metrics.inconclusive
        if output is not None:
            output.mkdir(parents=True, exist_ok=True)
            run_path = output / f"run_p{point_idx:04d}_s{seed}.json"
            run_path.write_text(run_json(config.echo(), metrics, payload_digest))
    if output is not None:
        output.mkdir(parents=True, exist_ok=True)
        (output / "sweep.csv").write_text("\n".join(rows) + "\n")

    if any_fail:
        code = EXIT_VERDICT_FAILURE
    elif any_inconclusive:
        code = EXIT_INCONCLUSIVE
    else:
        code = EXIT_OK
    return rows, code, results


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _size_list(text: str) -> list[int]:
    return [parse_size(x) for x in text.split(",") if x.strip()]


def _str_list(choices):
    def parse(text: str) -> list[str]:
        out = [x.strip() for x in text.split(",") if x.strip()]
        for item in out:
            if choices is not None and item not in choices:
                raise argparse.ArgumentTypeError(f"{item!r} not one of {choices}")
        return out

    return parse


def _k_list(text: str) -> list:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coded-mbrb",
        description="Run erasure-coded reliable-broadcast experiments.",
    )
    parser.add_argument("--config", type=Path, help="flat key=value file; flags override")
    parser.add_argument("--nodes", type=_int_list, default=[10], help="node counts (CSV axis)")
    parser.add_argument("--byzantine", type=int, default=0, help="Byzantine bound t")
    parser.add_argument("--drops", type=_int_list, default=[0], help="message-adversary budgets d (CSV axis)")
    parser.add_argument("--ecc-k", type=_k_list, default=["auto"], help="ECC thresholds, ints or 'auto' (CSV axis)")
    parser.add_argument("--epsilon", type=float, default=1.0, help="delivery-power slack")
    parser.add_argument("--msg-size", type=_size_list, default=[256], help="payload sizes, e.g. 256,64k,1m (CSV axis)")
    parser.add_argument("--seed", type=int, default=1, help="first seed")
    parser.add_argument("--runs", type=int, default=1, help="seeds per point")
    parser.add_argument("--adversary", type=_str_list(ADVERSARY_STRATEGIES), default=["random"], help="drop strategies (CSV axis)")
    parser.add_argument("--behavior", type=_k_list, default=["default"], help="behavior specs (CSV axis), e.g. 'sender:equivocate+garbage'")
    parser.add_argument("--scheduler", choices=SCHEDULER_POLICIES, default="random")
    parser.add_argument("--protocol", type=_str_list(PROTOCOLS), default=["coded"], help="protocols (CSV axis)")
    parser.add_argument("--vc-scheme", choices=("merkle", "constant-size-simulated"), default="merkle")
    parser.add_argument("--output", type=Path, help="directory for per-run JSON and sweep.csv")
    parser.add_argument("--allow-unsafe", action="store_true", help="skip model and k-selection validation")
    parser.add_argument("--max-events", type=int, default=500_000)
    parser.add_argument("--targets", type=_int_list, default=[], help="victim ids for the fixed-set adversary")
    parser.add_argument("--jobs", type=int, default=1, help="concurrent sweep points")
    parser.add_argument("--deep-checks", action="store_true", help="re-verify stores and channels during the run")
    return parser


_LIST_KEYS = {
    "nodes": _int_list,
    "drops": _int_list,
    "ecc-k": _k_list,
    "msg-size": _size_list,
    "behavior": _k_list,
    "targets": _int_list,
}


def _apply_config_file(parser: argparse.ArgumentParser, path: Path) -> None:
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    defaults = {}
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"bad config line: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        dest = key.replace("-", "_")
        if key in _LIST_KEYS:
            defaults[dest] = _LIST_KEYS[key](value)
        elif key == "adversary":
            defaults[dest] = _str_list(ADVERSARY_STRATEGIES)(value)
        elif key == "protocol":
            defaults[dest] = _str_list(PROTOCOLS)(value)
        elif key in ("byzantine", "seed", "runs", "max-events", "jobs"):
            defaults[dest] = int(value)
        elif key == "epsilon":
            defaults[dest] = float(value)
        elif key in ("allow-unsafe", "deep-checks"):
            defaults[dest] = value.lower() in ("1", "true", "yes")
        elif key == "output":
            defaults[dest] = Path(value)
        elif key in ("scheduler", "vc-scheme"):
            defaults[dest] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    parser.set_defaults(**defaults)


def main(argv=None) -> int:
    parser = build_parser()
    prelim, _ = parser.parse_known_args(argv)
    try:
        if prelim.config is not None:
            _apply_config_file(parser, prelim.config)
        args = parser.parse_args(argv)
        campaign = build_campaign(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except Exception as exc:  # argparse type errors reach here via SystemExit
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    rows, code, results = run_sweep(campaign, args.output, jobs=args.jobs)

    if campaign.total_runs == 1 and args.output is None:
        _, _, config, metrics, payload_digest = results[0]
        print(run_json(config.echo(), metrics, payload_digest), end="")
    else:
        for line in rows:
            print(line)
    failures = sum(1 for _, _, _, m, _ in results if not m.verdicts.all_ok)
    inconclusive = sum(1 for _, _, _, m, _ in results if m.inconclusive)
    print(
        f"# runs={len(results)} failures={failures} inconclusive={inconclusive} exit={code}",
        file=sys.stderr,
    )
    return code


if __name__ == "__main__":
    sys.exit(main())
