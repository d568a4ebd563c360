"""Run records: append-only event log, replay, and run reports.

Every observable thing a run does is appended to a single JSONL event log
with a gapless sequence number.  Reports and dashboard state are derived
from the log alone, so a saved log replays to exactly the same numbers a
live run produced.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping, Optional, Sequence

from . import accounting
from .vcs import Diff, apply_diff

__all__ = [
    "EventLog",
    "LogError",
    "RunReport",
    "encode_record",
    "merge_rows",
    "read_events",
    "read_json",
    "replay_files",
    "replay_issue_rows",
    "usage_rows",
    "write_json",
]


class LogError(Exception):
    """A log file is unreadable, out of order, or gappy."""


def encode_record(record: Mapping) -> str:
    """Canonical single-line encoding; identical runs yield identical bytes."""
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


class EventLog:
    """Append-only, sequence-numbered event sink.

    Records are kept in memory and, when a path is given, streamed to disk
    one JSON line at a time so a crashed run still leaves a usable log.
    """

    def __init__(self, path: Optional[str | Path] = None, start_seq: int = 0) -> None:
        self.path = Path(path) if path is not None else None
        self._records: list[dict] = []
        self._seq = start_seq
        self._fh: Optional[IO[str]] = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            mode = "a" if start_seq else "w"
            self._fh = self.path.open(mode, encoding="utf-8")

    @property
    def next_seq(self) -> int:
        return self._seq

    def append(self, kind: str, time: float, data: Mapping) -> dict:
        record = {"seq": self._seq, "t": round(float(time), 6), "kind": kind, "data": dict(data)}
        self._seq += 1
        self._records.append(record)
        if self._fh is not None:
            self._fh.write(encode_record(record) + "\n")
            self._fh.flush()
        return record

    def records(self) -> list[dict]:
        return list(self._records)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "EventLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_events(path: str | Path) -> list[dict]:
    """Load a JSONL event log, insisting on gapless ascending sequence numbers.

    A file may start at a nonzero sequence number: that is the shape of a
    log segment written by a resumed run.
    """
    records: list[dict] = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogError(f"line {lineno}: not valid JSON: {exc}") from exc
            for key in ("seq", "t", "kind", "data"):
                if key not in record:
                    raise LogError(f"line {lineno}: missing {key!r}")
            records.append(record)
    base = records[0]["seq"] if records else 0
    for i, record in enumerate(records):
        if record["seq"] != base + i:
            raise LogError(f"sequence gap: expected {base + i}, found {record['seq']}")
    return records


def stitch_records(segments: Sequence[Sequence[Mapping]]) -> list[dict]:
    """Join log segments into one timeline, later segments taking precedence.

    A resumed run restarts its log at the checkpoint's sequence number, so
    where segments overlap the earlier tail describes an abandoned timeline
    and is discarded.  The result must be contiguous from zero.
    """
    combined: list[dict] = []
    for segment in segments:
        rows = [dict(r) for r in segment]
        if not rows:
            continue
        start = rows[0]["seq"]
        if start > len(combined):
            raise LogError(f"segment starts at {start} but only {len(combined)} records precede it")
        combined = combined[:start]
        combined.extend(rows)
    for i, record in enumerate(combined):
        if record["seq"] != i:
            raise LogError(f"sequence gap after stitching: expected {i}, found {record['seq']}")
    return combined


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_json(path: str | Path, payload: Mapping) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


# -- derived views -----------------------------------------------------------------


def usage_rows(events: Iterable[Mapping]) -> list[dict]:
    """Per-agent usage in spawn order, taken from agent-end events."""
    rows = []
    for record in events:
        if record["kind"] != "agent-end":
            continue
        data = record["data"]
        rows.append(
            {
                "agent_id": data["agent"],
                "role": data["role"],
                "outcome": data["outcome"],
                "tokens_in": int(data["tokens_in"]),
                "tokens_out": int(data["tokens_out"]),
                "turns": int(data["turns"]),
                "time": record["t"],
            }
        )
    return rows


def usage_records(events: Iterable[Mapping]) -> list[accounting.UsageRecord]:
    return [
        accounting.UsageRecord(
            agent_id=row["agent_id"],
            role=row["role"],
            outcome=row["outcome"],
            tokens_in=row["tokens_in"],
            tokens_out=row["tokens_out"],
            turns=row["turns"],
        )
        for row in usage_rows(events)
    ]


def merge_rows(events: Iterable[Mapping]) -> list[dict]:
    """Per-merge churn rows in merge order, taken from pr-merged events."""
    rows = []
    for record in events:
        if record["kind"] != "pr-merged":
            continue
        data = record["data"]
        rows.append(
            {
                "pr": data["pr"],
                "author": data["author"],
                "author_role": data["author_role"],
                "time": record["t"],
                "added": int(data["added"]),
                "removed": int(data["removed"]),
                "code_files": int(data["code_files"]),
                "coord_files": int(data["coord_files"]),
                "decl_count": int(data["decl_count"]),
                "sorry_count": int(data["sorry_count"]),
            }
        )
    return rows


def replay_files(events: Sequence[Mapping]) -> dict[str, str]:
    """Reconstruct the shared branch tree by folding merged diffs.

    The run-start event carries the initial tree; every pr-merged event
    carries the exact diff it landed, so the fold is byte-faithful.
    """
    files: dict[str, str] = {}
    for record in events:
        if record["kind"] == "run-start":
            files = dict(record["data"].get("initial_files", {}))
        elif record["kind"] == "pr-merged":
            files = apply_diff(files, Diff.from_payload(record["data"]["diff"]))
    return files


def replay_issue_rows(events: Sequence[Mapping]) -> list[dict]:
    """Issue tracker rows as of the end of the log."""
    from . import issues as issues_mod

    files = replay_files(events)
    rows = []
    for issue in issues_mod.list_issues(files):
        rows.append(
            {
                "id": issue.id,
                "status": issue.status,
                "kind": issue.kind,
                "created_by": issue.created_by,
                "resolved_by": issue.resolved_by,
                "ref": issue.ref,
                "title": issue.title,
            }
        )
    return rows


@dataclass
class RunReport:
    """Everything a run claims about itself, derived purely from its log."""

    seed: str = ""
    corpus_hash: str = ""
    reason: str = ""
    duration: float = 0.0
    agents_spawned: int = 0
    agents_finished: int = 0
    roles: dict = field(default_factory=dict)
    outcomes: dict = field(default_factory=dict)
    tokens_in: int = 0
    tokens_out: int = 0
    turns: int = 0
    prs_opened: int = 0
    merges: int = 0
    returns: int = 0
    suppressed: int = 0
    failed_merges: int = 0
    staging_builds: int = 0
    staging_failures: int = 0
    final_decls: int = 0
    final_sorries: int = 0
    target_counts: dict = field(default_factory=dict)
    open_issues: int = 0
    resolved_issues: int = 0
    metrics: dict = field(default_factory=dict)

    @classmethod
    def from_events(cls, events: Sequence[Mapping]) -> "RunReport":
        report = cls()
        last_t = 0.0
        for record in events:
            kind = record["kind"]
            data = record["data"]
            last_t = record["t"]
            if kind == "run-start":
                report.seed = str(data.get("seed", ""))
                report.corpus_hash = data.get("corpus_hash", "")
            elif kind == "agent-start":
                report.agents_spawned += 1
                role = data["role"]
                report.roles[role] = report.roles.get(role, 0) + 1
            elif kind == "agent-end":
                report.agents_finished += 1
                outcome = data["outcome"]
                report.outcomes[outcome] = report.outcomes.get(outcome, 0) + 1
                report.tokens_in += int(data["tokens_in"])
                report.tokens_out += int(data["tokens_out"])
                report.turns += int(data["turns"])
            elif kind == "pr-opened":
                report.prs_opened += 1
            elif kind == "pr-merged":
                report.merges += 1
                report.final_decls = int(data["decl_count"])
                report.final_sorries = int(data["sorry_count"])
            elif kind == "pr-returned":
                report.returns += 1
            elif kind == "pr-suppressed":
                report.suppressed += 1
            elif kind == "pr-failed-merge":
                report.failed_merges += 1
            elif kind == "staging-build":
                report.staging_builds += 1
                if not data.get("ok", True):
                    report.staging_failures += 1
            elif kind == "run-end":
                report.reason = data.get("reason", "")
                report.metrics = dict(data.get("metrics", {}))
                report.target_counts = dict(data.get("targets", {}))
        report.duration = last_t
        issue_rows = replay_issue_rows(events)
        report.open_issues = sum(1 for row in issue_rows if row["status"] == "open")
        report.resolved_issues = sum(1 for row in issue_rows if row["status"] == "resolved")
        return report

    def to_payload(self) -> dict:
        return {
            "seed": self.seed,
            "corpus_hash": self.corpus_hash,
            "reason": self.reason,
            "duration": self.duration,
            "agents_spawned": self.agents_spawned,
            "agents_finished": self.agents_finished,
            "roles": dict(sorted(self.roles.items())),
            "outcomes": dict(sorted(self.outcomes.items())),
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
            "turns": self.turns,
            "prs_opened": self.prs_opened,
            "merges": self.merges,
            "returns": self.returns,
            "suppressed": self.suppressed,
            "failed_merges": self.failed_merges,
            "staging_builds": self.staging_builds,
            "staging_failures": self.staging_failures,
            "final_decls": self.final_decls,
            "final_sorries": self.final_sorries,
            "targets": dict(sorted(self.target_counts.items())),
            "open_issues": self.open_issues,
            "resolved_issues": self.resolved_issues,
            "metrics": dict(sorted(self.metrics.items())),
        }

    def render(self) -> str:
        payload = self.to_payload()
        lines = [
            f"seed            {payload['seed']}",
            f"corpus          {payload['corpus_hash']}",
            f"ended           {payload['reason']} at t={payload['duration']:.1f}s",
            f"agents          {payload['agents_spawned']} spawned, "
            f"{payload['agents_finished']} finished",
            "roles           "
            + ", ".join(f"{k}={v}" for k, v in payload["roles"].items()),
            "outcomes        "
            + ", ".join(f"{k}={v}" for k, v in payload["outcomes"].items()),
            f"tokens          {payload['tokens_in']} in, {payload['tokens_out']} out, "
            f"{payload['turns']} turns",
            f"review          {payload['prs_opened']} PRs, {payload['returns']} returns, "
            f"{payload['suppressed']} suppressed",
            f"merge queue     {payload['merges']} merged, {payload['failed_merges']} failed, "
            f"{payload['staging_builds']} staged builds "
            f"({payload['staging_failures']} red)",
            f"proof state     {payload['final_decls']} decls, {payload['final_sorries']} sorries",
            "targets         "
            + ", ".join(f"{k}={v}" for k, v in payload["targets"].items()),
            f"issues          {payload['open_issues']} open, {payload['resolved_issues']} resolved",
        ]
        return "\n".join(lines) + "\n"


def replay_report(path: str | Path) -> RunReport:
    return RunReport.from_events(read_events(path))
