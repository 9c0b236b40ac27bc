#!/usr/bin/env python3
"""Generate a fleet of scenarios, run a simulated campaign, render reports.

Writes scenario JSON files under <out>/scenarios, drives the CLI's
simulate pipeline into an append-only store at <out>/store, then prints
where the session CSVs and report tables landed.  Everything is seeded,
so the same invocation reproduces the same store byte for byte.

    python3 scripts/run_simulated_campaign.py --out /tmp/campaign
    python3 scripts/run_simulated_campaign.py --out /tmp/campaign \
        --endpoints 12 --duration 900 --seed 42
"""
from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

from leolink import cli

POPS = [
    ("sttlwax1", 47.42, -122.47), ("atlagax1", 33.75, -84.39),
    ("dllstxx1", 32.78, -96.80), ("chcoilx1", 41.88, -87.63),
    ("lsancax1", 34.05, -118.24), ("nwyynyx1", 40.71, -74.01),
    ("frntdeu1", 50.11, 8.68), ("lgosnga1", 6.52, 3.38),
]
EVENT_KINDS = ("satellite_switch", "isl_reroute", "gs_switch")


def make_scenario(rng: random.Random, index: int, duration_s: int) -> dict:
    pop_code, lat, lon = POPS[index % len(POPS)]
    sat_rtt = rng.uniform(18.0, 30.0)

    # Scheduled sustained excursions on the 15 s grid, sized well above
    # twice the session spread so they are unambiguous in the report.
    events = []
    n_events = rng.randint(1, 1 + duration_s // 300)
    slot_max = max(1, (duration_s - 120) // 15)
    starts = sorted(rng.sample(range(4, slot_max), min(n_events, slot_max - 4)))
    last_end = 0
    for slot in starts:
        at_s = slot * 15
        duration = rng.choice((45, 60))
        if at_s < last_end or at_s + duration > duration_s:
            continue
        events.append({
            "at_s": at_s,
            "kind": rng.choice(EVENT_KINDS),
            "delta_ms": round(rng.uniform(26.0, 34.0), 1),
            "duration_s": duration,
        })
        last_end = at_s + duration + 30

    return {
        "schema": "leolink-scenario/1",
        "comment": f"generated fleet endpoint {index} behind {pop_code}",
        "seed": rng.randrange(2**31),
        "duration_s": duration_s,
        "hops": [
            {"label": "isp-edge", "address": f"10.{40 + index}.0.1",
             "ttl_expired": True, "echo": False},
            {"label": "pop-edge", "address": f"10.{40 + index}.7.1",
             "ttl_expired": True, "echo": False},
            {"label": "customer", "address": f"98.97.{120 + index}.9",
             "ttl_expired": True, "echo": True},
        ],
        "base_latencies_ms": [round(rng.uniform(0.5, 2.0), 2),
                              round(rng.uniform(1.5, 4.0), 2),
                              round(sat_rtt / 2.0, 2)],
        "satellite_segment": [2, 3],
        "jitter": {"dist": "gaussian", "sigma_ms": 0.5,
                   "satellite_sigma_ms": 1.5},
        "events": events,
        "endpoint": {"pop_code": pop_code,
                     "latitude": round(lat + rng.uniform(-1.5, 1.5), 4),
                     "longitude": round(lon + rng.uniform(-1.5, 1.5), 4),
                     "source": "generated"},
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="campaign output root")
    parser.add_argument("--endpoints", type=int, default=8)
    parser.add_argument("--duration", type=int, default=600,
                        help="session length in seconds")
    parser.add_argument("--seed", type=int, default=20260814)
    parser.add_argument("--partition", default="fleet")
    args = parser.parse_args()

    out = Path(args.out)
    scen_dir = out / "scenarios"
    scen_dir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)
    for i in range(args.endpoints):
        obj = make_scenario(rng, i, args.duration)
        path = scen_dir / f"endpoint_{i:02d}.json"
        path.write_text(json.dumps(obj, indent=2) + "\n")
    print(f"wrote {args.endpoints} scenarios to {scen_dir}")

    store = out / "store"
    code = cli.main(["simulate", "--scenarios", str(scen_dir),
                     "--out", str(store), "--duration", str(args.duration),
                     "--partition", args.partition])
    if code != 0:
        return code

    code = cli.main(["report", "--store", str(store),
                     "--partition", args.partition,
                     "--out", str(store / "reports")])
    if code != 0:
        return code

    print(f"store:   {store / args.partition}")
    print(f"reports: {store / 'reports'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
