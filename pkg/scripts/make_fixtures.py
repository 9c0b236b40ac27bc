#!/usr/bin/env python3
"""Regenerate the bundled scan-dataset fixtures under data/fixtures/.

The fixtures are synthetic but shaped like a real scan snapshot:

* scan_fixture.jsonl: 2,051 unique addresses; 1,790 carry the customer
  PTR pattern; 161 of those (9%) present a PEP vendor TLS certificate,
  leaving 1,629 measurable endpoints distributed across the twenty POP
  codes with the reference per-POP counts below.
* scan_small.jsonl: 100 customer records covering all POP codes, 9 of
  them behind a PEP (the quick-start dataset).
* geofeed.csv: overlapping prefixes exercising longest-prefix matching.
* oneweb_scan.jsonl: PTR/SOA blocklist-path records.

Deterministic: a fixed seed orders the rows, so re-running the script
reproduces the files byte for byte.
"""
from __future__ import annotations

import json
import random
from pathlib import Path

FIXTURES = Path(__file__).resolve().parent.parent / "data" / "fixtures"

# Reference per-POP measurable endpoint counts (after PEP exclusion).
COHORT_COUNTS = {
    "sttlwax1": 243, "atlagax1": 210, "dllstxx1": 186, "chcoilx1": 182,
    "lsancax1": 173, "sydyaus1": 148, "nwyynyx1": 144, "frntdeu1": 124,
    "dnvrcox1": 87, "lndngbr1": 56, "mdrdesp1": 20, "sntoch1": 19,
    "acklnzl1": 11, "lgosnga1": 6, "bgtacol1": 5, "limaper1": 3,
    "prthaus1": 3, "qrtomex1": 3, "splobra1": 3, "tkyojpn1": 3,
}
TOTAL_MEASURABLE = sum(COHORT_COUNTS.values())  # 1629
TOTAL_CUSTOMERS = 1790
TOTAL_RECORDS = 2051
PEP_COUNT = TOTAL_CUSTOMERS - TOTAL_MEASURABLE  # 161
STARLINK_ASN = 14593


def pep_extras() -> dict[str, int]:
    """Spread the PEP-fronted endpoints over POPs roughly proportionally."""
    extras = {c: round(n * PEP_COUNT / TOTAL_MEASURABLE) for c, n in COHORT_COUNTS.items()}
    biggest = max(COHORT_COUNTS, key=COHORT_COUNTS.get)
    extras[biggest] += PEP_COUNT - sum(extras.values())
    assert sum(extras.values()) == PEP_COUNT
    return extras


def ipv4_pool(n: int) -> list[str]:
    return [f"98.97.{i // 250}.{i % 250 + 1}" for i in range(n)]


def ipv6_pool(n: int) -> list[str]:
    return [f"2605:59c8:{i // 2000:x}:{i % 2000:x}::1" for i in range(n)]


def customer_rows(rng: random.Random) -> list[dict]:
    extras = pep_extras()
    rows: list[dict] = []
    # Mix address families like a real snapshot: about a third v6.
    n_v6 = TOTAL_CUSTOMERS // 3
    addrs = ipv4_pool(TOTAL_CUSTOMERS - n_v6) + ipv6_pool(n_v6)
    rng.shuffle(addrs)
    it = iter(addrs)
    for code, count in COHORT_COUNTS.items():
        for k in range(count + extras[code]):
            address = next(it)
            ptr = f"customer.{code}.pop.starlinkisp.net"
            # A few records exercise case and trailing-dot tolerance.
            style = rng.random()
            if style < 0.01:
                ptr = ptr.upper()
            elif style < 0.03:
                ptr = ptr + "."
            is_pep = k >= count  # the extras are the PEP-fronted ones
            if is_pep:
                tls = ["device.peplink.com"]
                services = [[443, "tcp"]]
            elif rng.random() < 0.4:
                tls = [f"router-{rng.randrange(10**6):06d}.local"]
                services = [[443, "tcp"], [80, "tcp"]]
            else:
                tls = []
                services = [[80, "tcp"]]
            rows.append({
                "address": address,
                "ptr": ptr,
                "soa": "starlinkisp.net",
                "tls_names": tls,
                "services": services,
                "asn": STARLINK_ASN,
            })
    return rows


def noise_rows(rng: random.Random) -> list[dict]:
    """Records that must not match the customer PTR pattern."""
    rows: list[dict] = []
    addrs = [f"203.0.{i // 250}.{i % 250 + 1}" for i in range(TOTAL_RECORDS - TOTAL_CUSTOMERS)]
    kinds = (
        ["no_ptr"] * 100
        + ["other_isp"] * 80
        + ["wrong_base"] * 40
        + ["wrong_label"] * 41
    )
    for address, kind in zip(addrs, kinds):
        if kind == "no_ptr":
            ptr = None
        elif kind == "other_isp":
            ptr = f"host-{rng.randrange(10**5)}.transit.example.net"
        elif kind == "wrong_base":
            code = rng.choice(list(COHORT_COUNTS))
            ptr = f"customer.{code}.pop.otherisp.net"
        else:
            code = rng.choice(list(COHORT_COUNTS))
            ptr = f"gateway.{code}.pop.starlinkisp.net"
        rows.append({
            "address": address,
            "ptr": ptr,
            "soa": "example.net" if ptr else None,
            "tls_names": ["cdn.example.net"] if rng.random() < 0.3 else [],
            "services": [[443, "tcp"]],
            "asn": rng.choice([13335, 15169, 3356]),
        })
    return rows


def write_jsonl(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
    print(f"wrote {path} ({len(rows)} rows)")


def make_scan_fixture() -> None:
    rng = random.Random(20260814)
    rows = customer_rows(rng) + noise_rows(rng)
    rng.shuffle(rows)
    assert len(rows) == TOTAL_RECORDS
    assert len({r["address"] for r in rows}) == TOTAL_RECORDS
    write_jsonl(FIXTURES / "scan_fixture.jsonl", rows)


def make_scan_small() -> None:
    rng = random.Random(99)
    codes = list(COHORT_COUNTS) * 5  # 100 records, 5 per POP
    rows = []
    pep_slots = set(rng.sample(range(100), 9))
    for i, code in enumerate(codes):
        rows.append({
            "address": f"98.96.{i // 200}.{i % 200 + 1}",
            "ptr": f"customer.{code}.pop.starlinkisp.net",
            "soa": "starlinkisp.net",
            "tls_names": ["device.peplink.com"] if i in pep_slots else [],
            "services": [[443, "tcp"]] if i in pep_slots else [[80, "tcp"]],
            "asn": STARLINK_ASN,
        })
    write_jsonl(FIXTURES / "scan_small.jsonl", rows)


def make_geofeed() -> None:
    lines = [
        "# prefix,country,region,city,latitude,longitude",
        "98.97.0.0/16,US,US-WA,Seattle,47.6062,-122.3321",
        "98.97.4.0/24,NG,NG-LA,Ajah,6.4698,3.5852",
        "98.96.0.0/12,US,US-CO,Denver,39.7392,-104.9903",
        "2605:59c8::/32,US,,,",
        "2605:59c8:0:100::/56,PE,PE-LIM,Lima,-12.0464,-77.0428",
        "not-a-prefix,XX,,,",
    ]
    path = FIXTURES / "geofeed.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {path}")


def make_oneweb() -> None:
    rows = [
        # Infrastructure names: blocked by the provider/RIR blocklist.
        {"address": "185.118.0.1", "ptr": "gw1.network.oneweb.net", "soa": "oneweb.net",
         "tls_names": [], "services": [[443, "tcp"]], "asn": 800},
        {"address": "185.118.0.2", "ptr": None, "soa": "ns.ripe.net",
         "tls_names": [], "services": [[22, "tcp"]], "asn": 800},
        {"address": "185.118.0.3", "ptr": "pool3.arin-managed.example", "soa": None,
         "tls_names": [], "services": [], "asn": 800},
        # Customer-looking names: neither provider nor RIR domains.
        {"address": "185.118.1.1", "ptr": "static-1.customer-isp.example", "soa": "customer-isp.example",
         "tls_names": [], "services": [[443, "tcp"]], "asn": 800},
        {"address": "185.118.1.2", "ptr": None, "soa": "smallbiz.example.org",
         "tls_names": ["mail.smallbiz.example.org"], "services": [[25, "tcp"]], "asn": 800},
        # No PTR, no SOA: unclassifiable.
        {"address": "185.118.2.1", "ptr": None, "soa": None,
         "tls_names": [], "services": [[443, "tcp"]], "asn": 800},
    ]
    write_jsonl(FIXTURES / "oneweb_scan.jsonl", rows)


if __name__ == "__main__":
    FIXTURES.mkdir(parents=True, exist_ok=True)
    make_scan_fixture()
    make_scan_small()
    make_geofeed()
    make_oneweb()
