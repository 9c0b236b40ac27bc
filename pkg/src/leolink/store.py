"""Campaign configuration and the append-only measurement store.

A campaign writes each endpoint's session under one partition directory
(normally the run date).  Session files are never rewritten: re-running
a campaign on the same date gets a fresh suffixed partition, and every
artifact records the hash of the configuration that produced it, so any
CSV in the store can be traced back to exact settings.

Layout::

    <root>/<partition>/<endpoint-address>/session.csv
    <root>/<partition>/<endpoint-address>/meta.json

Plain CSV plus a directory tree keeps the store greppable; the datasets
are small enough that a database would only get in the way.
"""
from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .discovery import Endpoint, PopLocation
from .probe import MeasurementSession, ProbeSample, SatLinkPath

SCHEMA_VERSION = 1
SESSION_FILENAME = "session.csv"
META_FILENAME = "meta.json"

TRANSPORTS = ("simnet", "raw")
SCHEDULES = ("once", "daily")

_PARTITION_SUFFIX_RE = re.compile(r"^(?P<base>.+)\.(?P<n>\d+)$")


class StoreError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class CampaignConfig:
    """Everything a campaign run needs, loadable from one JSON file.

    Tunable ranges: cadence_hz 1..10, duration_s 1..86400, concurrency
    1..64, probes_per_hop 1..10, max_ttl 1..64, timeout_s (0, 30],
    smoothing_window_s 1..120, jump_threshold_ms > 0, sigma thresholds
    positive with sustained >= standard.
    """

    transport: str
    output_dir: str
    scenario_dir: Optional[str] = None
    endpoints_file: Optional[str] = None
    partition_label: str = ""
    cadence_hz: int = 1
    duration_s: int = 600
    concurrency: int = 8
    jump_threshold_ms: float = 10.0
    probes_per_hop: int = 3
    max_ttl: int = 32
    timeout_s: float = 2.0
    smoothing_window_s: float = 15.0
    sustained_sigma: float = 2.0
    standard_sigma: float = 1.0
    protocol: str = "icmp"
    schedule: str = "once"
    exclude_file: Optional[str] = None

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        def bad(name: str, why: str) -> ConfigError:
            return ConfigError(f"{name}: {why}")

        if self.transport not in TRANSPORTS:
            raise bad("transport", f"must be one of {TRANSPORTS}")
        if self.transport == "simnet" and not self.scenario_dir:
            raise bad("scenario_dir", "required for the simnet transport")
        if self.transport == "raw" and not self.endpoints_file:
            raise bad("endpoints_file", "required for the raw transport")
        if not self.output_dir:
            raise bad("output_dir", "must be set")
        if not 1 <= int(self.cadence_hz) <= 10:
            raise bad("cadence_hz", "must be in 1..10")
        if not 1 <= int(self.duration_s) <= 86_400:
            raise bad("duration_s", "must be in 1..86400")
        if not 1 <= int(self.concurrency) <= 64:
            raise bad("concurrency", "must be in 1..64")
        if not self.jump_threshold_ms > 0:
            raise bad("jump_threshold_ms", "must be positive")
        if not 1 <= int(self.probes_per_hop) <= 10:
            raise bad("probes_per_hop", "must be in 1..10")
        if not 1 <= int(self.max_ttl) <= 64:
            raise bad("max_ttl", "must be in 1..64")
        if not 0 < float(self.timeout_s) <= 30:
            raise bad("timeout_s", "must be in (0, 30]")
        if not 1 <= float(self.smoothing_window_s) <= 120:
            raise bad("smoothing_window_s", "must be in 1..120")
        if not (self.standard_sigma > 0 and self.sustained_sigma >= self.standard_sigma):
            raise bad("sustained_sigma", "need sustained >= standard > 0")
        if self.protocol not in ("icmp", "udp", "tcp"):
            raise bad("protocol", "must be icmp, udp or tcp")
        if self.schedule not in SCHEDULES:
            raise bad("schedule", f"must be one of {SCHEDULES}")

    @classmethod
    def from_json(cls, path: str | Path) -> "CampaignConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load {path}: {exc}") from exc
        if not isinstance(obj, dict):
            raise ConfigError(f"{path}: top level must be an object")
        known = {f for f in cls.__dataclass_fields__}  # noqa: C416
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"{path}: unknown fields {sorted(unknown)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def config_hash(self) -> str:
        # Where the store lives does not change what was measured, so two
        # campaigns with the same probing parameters hash identically.
        fields = asdict(self)
        fields.pop("output_dir")
        blob = json.dumps(fields, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass(frozen=True)
class SessionRecord:
    partition: str
    address: str
    path: Path
    meta: dict


class MeasurementStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    def new_partition(self, label: str) -> str:
        """Create a fresh partition directory, suffixing on collision.

        Daily runs on the same date land in ``label``, ``label.1``,
        ``label.2``, ... so no run ever writes into another's tree.
        """
        if not label or "/" in label:
            raise StoreError(f"bad partition label: {label!r}")
        name = label
        n = 0
        while (self.root / name).exists():
            n += 1
            name = f"{label}.{n}"
        (self.root / name).mkdir(parents=True)
        return name

    def partition_dir(self, name: str) -> Path:
        return self.root / name

    def partitions(self) -> list[str]:
        if not self.root.is_dir():
            return []
        return sorted(p.name for p in self.root.iterdir() if p.is_dir())

    def write_session(
        self,
        partition: str,
        session: MeasurementSession,
        *,
        config_hash: str,
        extra_meta: Optional[dict] = None,
    ) -> Path:
        """Persist one session; refuses to touch an existing one."""
        endpoint_dir = self.root / partition / session.endpoint.address
        endpoint_dir.mkdir(parents=True, exist_ok=True)
        session_path = endpoint_dir / SESSION_FILENAME
        if session_path.exists():
            raise StoreError(f"{session_path} already exists; store is append-only")

        rows = []
        for samples in (session.terrestrial_samples, session.endpoint_samples):
            for s in samples:
                rtt = "" if s.rtt_us is None else f"{s.rtt_us:.1f}"
                lost = "true" if s.rtt_us is None else "false"
                rows.append((s.timestamp_ms, session.path.target,
                             s.target_ttl, rtt, lost))
        # the terrestrial hop's smaller TTL sorts first at equal
        # timestamps, matching the probe order within a tick
        rows.sort(key=lambda r: (r[0], r[2]))
        with open(session_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp_ms", "target", "hop_ttl", "rtt_us", "lost"])
            w.writerows(rows)

        ep = session.endpoint
        meta = {
            "schema_version": SCHEMA_VERSION,
            "config_hash": config_hash,
            "address": ep.address,
            "pop_code": ep.pop_code,
            "source": ep.source,
            "customer_location": list(ep.customer_location) if ep.customer_location else None,
            "pre_sat_ttl": session.path.pre_sat_ttl,
            "pre_sat_router": session.path.pre_sat_router,
            "post_sat_ttl": session.path.post_sat_ttl,
            "jump_ms": round(session.path.jump_ms, 3),
            "start_ms": session.start_ms,
            "duration_s": session.duration_s,
            "cadence_hz": session.cadence_hz,
            "n_terrestrial": len(session.terrestrial_samples),
            "n_endpoint": len(session.endpoint_samples),
            "terrestrial_loss_fraction": round(session.terrestrial_loss_fraction, 6),
        }
        if extra_meta:
            meta.update(extra_meta)
        with open(endpoint_dir / META_FILENAME, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return session_path

    def sessions(self, partition: Optional[str] = None) -> list[SessionRecord]:
        parts = [partition] if partition else self.partitions()
        out: list[SessionRecord] = []
        for part in parts:
            pdir = self.root / part
            if not pdir.is_dir():
                raise StoreError(f"no such partition: {part}")
            for epdir in sorted(p for p in pdir.iterdir() if p.is_dir()):
                spath = epdir / SESSION_FILENAME
                mpath = epdir / META_FILENAME
                if not spath.is_file():
                    continue
                meta = {}
                if mpath.is_file():
                    with open(mpath, encoding="utf-8") as fh:
                        meta = json.load(fh)
                out.append(SessionRecord(partition=part, address=epdir.name,
                                         path=spath, meta=meta))
        return out

    def read_session(self, record: SessionRecord) -> MeasurementSession:
        """Rebuild a MeasurementSession from one stored record."""
        meta = record.meta
        if meta.get("schema_version") != SCHEMA_VERSION:
            raise StoreError(
                f"{record.path}: schema {meta.get('schema_version')!r}, "
                f"expected {SCHEMA_VERSION}")
        loc = meta.get("customer_location")
        endpoint = Endpoint(
            address=meta["address"],
            pop_code=meta.get("pop_code", ""),
            pop_location=None,
            customer_location=tuple(loc) if loc else None,
            source=meta.get("source", "starlink_ptr"),
        )
        path = SatLinkPath(
            target=meta["address"],
            pre_sat_ttl=int(meta["pre_sat_ttl"]),
            pre_sat_router=meta["pre_sat_router"],
            post_sat_ttl=int(meta["post_sat_ttl"]),
            jump_ms=float(meta["jump_ms"]),
        )
        session = MeasurementSession(
            endpoint=endpoint, path=path,
            start_ms=int(meta["start_ms"]),
            duration_s=int(meta["duration_s"]),
            cadence_hz=int(meta["cadence_hz"]),
        )
        with open(record.path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                sample = ProbeSample(
                    timestamp_ms=int(row["timestamp_ms"]),
                    target_ttl=int(row["hop_ttl"]),
                    rtt_us=float(row["rtt_us"]) if row["rtt_us"] else None,
                )
                if sample.target_ttl == path.pre_sat_ttl:
                    session.terrestrial_samples.append(sample)
                elif sample.target_ttl == path.post_sat_ttl:
                    session.endpoint_samples.append(sample)
                else:
                    raise StoreError(
                        f"{record.path}: hop_ttl {sample.target_ttl} matches "
                        f"neither side of the recorded path")
        return session


def write_report_csv(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence],
    *,
    config_hash: str,
) -> None:
    """Report CSV with a provenance comment naming the config hash."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def read_report_csv(path: str | Path) -> tuple[str, list[str], list[list[str]]]:
    """Returns (config_hash, header, rows) for a report written above."""
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# config_hash="):
            raise StoreError(f"{path}: missing provenance comment")
        config_hash = first.split("=", 1)[1]
        reader = csv.reader(fh)
        header = next(reader, [])
        return config_hash, list(header), [list(r) for r in reader]
