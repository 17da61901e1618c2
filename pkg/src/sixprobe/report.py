"""Campaign report: per-prefix per-round records plus a recomputable summary.

Serialized as JSON lines so interrupted campaigns keep partial data; every
line is emitted with sorted keys so identical campaigns produce identical
bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .addrspace import non_aliased_hit_rate


@dataclass
class CampaignReport:
    header: dict = field(default_factory=dict)
    records: list[dict] = field(default_factory=list)  # per prefix per round
    series: list[dict] = field(default_factory=list)  # chronological rounds
    prefix_summaries: list[dict] = field(default_factory=list)
    partial: bool = False

    def compute_summary(self) -> dict:
        probes = sum(r["probes"] for r in self.records)
        actives = sum(r["actives"] for r in self.records)
        aliased = sum(r["aliased_hits"] for r in self.records)
        rate = non_aliased_hit_rate(probes, actives, aliased) if probes else 0.0
        return {
            "probes": probes,
            "actives": actives,
            "aliased_hits": aliased,
            "non_aliased_hit_rate": rate,
            "prefixes": len({r["prefix"] for r in self.records}),
            "partial": self.partial,
        }

    def round_rates(self) -> list[float]:
        """Non-aliased hit rate of each chronological probe round."""
        out = []
        for entry in self.series:
            if entry["probes"]:
                out.append(
                    (entry["actives"] - entry["aliased_hits"]) / entry["probes"]
                )
            else:
                out.append(0.0)
        return out

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_line("header", self.header))
            for rec in self.records:
                fh.write(_line("round", rec))
            for entry in self.series:
                fh.write(_line("series", entry))
            for summary in self.prefix_summaries:
                fh.write(_line("prefix_summary", summary))
            fh.write(_line("summary", self.compute_summary()))

    @classmethod
    def from_jsonl(cls, path) -> tuple["CampaignReport", dict]:
        report = cls()
        stored_summary: dict = {}
        with open(path, "r", encoding="utf-8") as fh:
            for raw in fh:
                raw = raw.strip()
                if not raw or raw.startswith("#"):
                    continue
                obj = json.loads(raw)
                kind = obj.pop("kind")
                if kind == "header":
                    report.header = obj
                elif kind == "round":
                    report.records.append(obj)
                elif kind == "series":
                    report.series.append(obj)
                elif kind == "prefix_summary":
                    report.prefix_summaries.append(obj)
                elif kind == "summary":
                    stored_summary = obj
                    report.partial = bool(obj.get("partial", False))
        return report, stored_summary

    def verify_file(self, stored_summary: dict) -> list[str]:
        """Mismatches between the stored summary and one recomputed from
        the per-round records; empty means consistent."""
        recomputed = self.compute_summary()
        problems = []
        for key, value in recomputed.items():
            if stored_summary.get(key) != value:
                problems.append(
                    f"{key}: stored {stored_summary.get(key)!r}, "
                    f"recomputed {value!r}"
                )
        return problems


def _line(kind: str, obj: dict) -> str:
    payload = {"kind": kind, **obj}
    return json.dumps(payload, sort_keys=True) + "\n"
