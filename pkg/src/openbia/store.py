"""Append-only measurement history, one JSON-lines file per profile."""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from pathlib import Path

from .estimator import CompositionEstimate, ImpedanceReading, SubjectProfile
from .exceptions import InputError, NotFoundError, OrderingError

__all__ = [
    "HOME_ENV",
    "MeasurementRecord",
    "HistoryStore",
    "TrendStep",
    "TrendReport",
    "default_home",
    "record_measurement",
    "trend_report",
]

HOME_ENV = "OPENBIA_HOME"
_PROFILE_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]{0,127}$")


def default_home() -> Path:
    env = os.environ.get(HOME_ENV)
    return Path(env) if env else Path.home() / ".openbia"


@dataclass(frozen=True)
class MeasurementRecord:
    timestamp: float  # UTC seconds since the epoch
    profile: SubjectProfile
    reading: ImpedanceReading
    estimate: CompositionEstimate

    def to_json(self) -> str:
        doc = {
            "timestamp": self.timestamp,
            "profile": self.profile.to_dict(),
            "reading": self.reading.to_dict(),
            "estimate": self.estimate.to_dict(),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)

    @classmethod
    def from_json(cls, line: str) -> MeasurementRecord:
        doc = json.loads(line)
        return cls(
            timestamp=doc["timestamp"],
            profile=SubjectProfile.from_dict(doc["profile"]),
            reading=ImpedanceReading.from_dict(doc["reading"]),
            estimate=CompositionEstimate.from_dict(doc["estimate"]),
        )


class HistoryStore:
    """Directory of ``<profile_id>.jsonl`` files.

    Single writer, many readers. Records are only ever appended.
    """

    def __init__(self, root=None):
        self.root = Path(root) if root is not None else default_home() / "history"

    def path_for(self, profile_id) -> Path:
        if not _PROFILE_ID.match(profile_id or ""):
            raise InputError(
                f"profile id {profile_id!r} must be letters, digits, '.', '_' or '-'"
            )
        return self.root / f"{profile_id}.jsonl"

    def profiles(self):
        if not self.root.is_dir():
            return []
        return sorted(p.stem for p in self.root.glob("*.jsonl"))

    def read(self, profile_id) -> list:
        path = self.path_for(profile_id)
        if not path.exists():
            return []
        with path.open(encoding="utf-8") as fh:
            return [MeasurementRecord.from_json(line) for line in fh if line.strip()]

    def append(self, profile_id, record: MeasurementRecord):
        path = self.path_for(profile_id)
        existing = self.read(profile_id)
        if existing and not record.timestamp > existing[-1].timestamp:
            raise OrderingError(
                f"timestamp {record.timestamp} is not after the last record "
                f"({existing[-1].timestamp}) for {profile_id!r}"
            )
        self.root.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            fh.write(record.to_json() + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        return self


def record_measurement(store: HistoryStore, profile_id, record: MeasurementRecord) -> HistoryStore:
    return store.append(profile_id, record)


@dataclass(frozen=True)
class TrendStep:
    start: float
    end: float
    delta_ffm_kg: float
    delta_bf_pp: float
    bf_width_pp: float  # interval width at ``end``; 0 for point estimates


@dataclass(frozen=True)
class TrendReport:
    profile_id: str
    n_records: int
    steps: tuple
    net_ffm_kg: float
    net_bf_pp: float
    policies: tuple
    mixed_policies: bool

    def render(self):
        lines = [f"profile: {self.profile_id}", f"records: {self.n_records}"]
        for s in self.steps:
            width = f" (interval width {s.bf_width_pp:.2f} pp)" if s.bf_width_pp else ""
            lines.append(
                f"  {s.start:.0f} -> {s.end:.0f}: BF {s.delta_bf_pp:+.2f} pp, "
                f"FFM {s.delta_ffm_kg:+.2f} kg{width}"
            )
        lines.append(f"net change: BF {self.net_bf_pp:+.2f} pp, FFM {self.net_ffm_kg:+.2f} kg")
        if self.mixed_policies:
            lines.append(
                "warning: coding policies differ within this window ("
                + ", ".join(self.policies)
                + "); changes across them are not comparable"
            )
        return "\n".join(lines)


def _bf_width(estimate):
    return estimate.breakdown.bf_width if estimate.is_interval else 0.0


def trend_report(store: HistoryStore, profile_id, window=None) -> TrendReport:
    """Consecutive FFM and BF% changes within ``window = (since, until)``.

    Either bound may be None. Interval estimates are compared at their
    midpoints; their widths are carried alongside.
    """
    since, until = window if window is not None else (None, None)
    records = [
        r
        for r in store.read(profile_id)
        if (since is None or r.timestamp >= since) and (until is None or r.timestamp <= until)
    ]
    if not records:
        raise NotFoundError(f"no records for {profile_id!r} in the requested window")
    steps = []
    for prev, cur in zip(records, records[1:]):
        a, b = prev.estimate.point, cur.estimate.point
        steps.append(
            TrendStep(
                start=prev.timestamp,
                end=cur.timestamp,
                delta_ffm_kg=b.ffm_kg - a.ffm_kg,
                delta_bf_pp=b.bf_percent - a.bf_percent,
                bf_width_pp=_bf_width(cur.estimate),
            )
        )
    first, last = records[0].estimate.point, records[-1].estimate.point
    policies = tuple(dict.fromkeys(r.estimate.policy_used for r in records))
    return TrendReport(
        profile_id=profile_id,
        n_records=len(records),
        steps=tuple(steps),
        net_ffm_kg=last.ffm_kg - first.ffm_kg,
        net_bf_pp=last.bf_percent - first.bf_percent,
        policies=policies,
        mixed_policies=len(policies) >= 2,
    )
