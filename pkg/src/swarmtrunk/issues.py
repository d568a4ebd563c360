"""File-based issue tracker stored inside the repository.

Each issue is one markdown file under ``issues/`` named ``<uuid>.md``.  The
file opens with a fixed-order machine-readable header (``key: value`` lines),
then a blank line, then a free-form body.  Because issues are ordinary files,
they ride the same branch/PR/merge pipeline as proof sources and inherit its
conflict semantics; an issue exists in shared state only once the PR carrying
it merges.
"""

from __future__ import annotations

import random
import uuid
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional, Sequence

TRACKER_DIR = "issues"

STATUS_OPEN = "open"
STATUS_RESOLVED = "resolved"

KIND_PROVING_TASK = "proving-task"
KIND_BLOCKER = "blocker"
KIND_REFACTOR = "refactor"
KIND_GLOBAL = "global"
KIND_REPORT = "report"
KINDS = (KIND_PROVING_TASK, KIND_BLOCKER, KIND_REFACTOR, KIND_GLOBAL, KIND_REPORT)

UNRESOLVED = "-"
TRIAGE_PREFIX = "triage:"

_HEADER_KEYS = ("id", "status", "kind", "created_by", "resolved_by", "ref", "title")


class IssueError(Exception):
    """Base class for tracker failures."""


class MalformedIssueError(IssueError):
    """Issue file failed header validation."""


class UnknownIssueError(IssueError):
    """No issue with the given id in this snapshot."""


class AlreadyResolvedError(IssueError):
    """mark_resolved called on a resolved issue."""


@dataclass(frozen=True)
class Issue:
    """One tracker entry; ``ref`` optionally names a decl or target it is about."""

    id: str
    status: str
    kind: str
    created_by: str
    resolved_by: str
    ref: str
    title: str
    body: str

    @property
    def path(self) -> str:
        return issue_path(self.id)

    @property
    def open(self) -> bool:
        return self.status == STATUS_OPEN


def issue_path(issue_id: str) -> str:
    return f"{TRACKER_DIR}/{issue_id}.md"


def new_issue_id(rng: random.Random) -> str:
    """Deterministic v4-format uuid drawn from the caller's seeded stream."""
    return str(uuid.UUID(int=rng.getrandbits(128), version=4))


def render_issue(issue: Issue) -> str:
    """Serialize with a fixed key order so files are byte-stable."""
    head = [
        f"id: {issue.id}",
        f"status: {issue.status}",
        f"kind: {issue.kind}",
        f"created_by: {issue.created_by}",
        f"resolved_by: {issue.resolved_by}",
        f"ref: {issue.ref or UNRESOLVED}",
        f"title: {issue.title}",
    ]
    return "\n".join(head) + "\n\n" + issue.body.rstrip("\n") + "\n"


def parse_issue(text: str) -> Issue:
    """Parse an issue file; raises MalformedIssueError on any header defect."""
    lines = text.split("\n")
    header: dict[str, str] = {}
    body_start = None
    for i, line in enumerate(lines):
        if line == "":
            body_start = i + 1
            break
        if ": " not in line:
            raise MalformedIssueError(f"bad header line: {line!r}")
        key, value = line.split(": ", 1)
        if key not in _HEADER_KEYS:
            raise MalformedIssueError(f"unknown header key: {key!r}")
        if key in header:
            raise MalformedIssueError(f"repeated header key: {key!r}")
        header[key] = value
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise MalformedIssueError(f"missing header keys: {missing}")
    if header["status"] not in (STATUS_OPEN, STATUS_RESOLVED):
        raise MalformedIssueError(f"bad status: {header['status']!r}")
    if header["kind"] not in KINDS:
        raise MalformedIssueError(f"bad kind: {header['kind']!r}")
    if header["status"] == STATUS_RESOLVED and header["resolved_by"] == UNRESOLVED:
        raise MalformedIssueError("resolved issue without resolved_by")
    body = "\n".join(lines[body_start:]) if body_start is not None else ""
    return Issue(
        id=header["id"],
        status=header["status"],
        kind=header["kind"],
        created_by=header["created_by"],
        resolved_by=header["resolved_by"],
        ref="" if header["ref"] == UNRESOLVED else header["ref"],
        title=header["title"],
        body=body.rstrip("\n"),
    )


def make_issue(
    rng: random.Random,
    created_by: str,
    title: str,
    body: str,
    kind: str,
    ref: str = "",
) -> Issue:
    """Build a fresh open issue with a stream-deterministic id."""
    if kind not in KINDS:
        raise MalformedIssueError(f"bad kind: {kind!r}")
    return Issue(
        id=new_issue_id(rng),
        status=STATUS_OPEN,
        kind=kind,
        created_by=created_by,
        resolved_by=UNRESOLVED,
        ref=ref,
        title=title,
        body=body,
    )


def load_issues(files: Mapping[str, str]) -> dict[str, Issue]:
    """All parseable issues in a snapshot, keyed by id; malformed files are skipped."""
    out: dict[str, Issue] = {}
    for path in sorted(files):
        if not path.startswith(TRACKER_DIR + "/") or not path.endswith(".md"):
            continue
        try:
            issue = parse_issue(files[path])
        except MalformedIssueError:
            continue
        out[issue.id] = issue
    return out


def list_issues(
    files: Mapping[str, str],
    status: Optional[str] = None,
    kind: Optional[str] = None,
) -> list[Issue]:
    """Filtered listing, sorted by id for stable output."""
    issues = load_issues(files).values()
    out = [
        i
        for i in issues
        if (status is None or i.status == status) and (kind is None or i.kind == kind)
    ]
    return sorted(out, key=lambda i: i.id)


def render_issue_listing(items: Sequence[Issue]) -> str:
    lines = [f"{i.id[:8]} {i.status:8s} {i.kind:12s} {i.title}" for i in items]
    lines.append(f"total: {len(items)}")
    return "\n".join(lines) + "\n"


def mark_resolved(files: Mapping[str, str], issue_id: str, resolved_by: str) -> tuple[str, str]:
    """Return (path, new_content) flipping an issue to resolved.

    The caller stages the write on its own branch; the status change becomes
    shared state when that branch merges.
    """
    issues = load_issues(files)
    issue = issues.get(issue_id)
    if issue is None:
        raise UnknownIssueError(issue_id)
    if issue.status == STATUS_RESOLVED:
        raise AlreadyResolvedError(issue_id)
    updated = replace(issue, status=STATUS_RESOLVED, resolved_by=resolved_by)
    return updated.path, render_issue(updated)


def triage_stale(
    files: Mapping[str, str], statuses: Mapping[str, str], decl_names: frozenset[str]
) -> list[Issue]:
    """Open issues whose subject is already settled on the given snapshot.

    A proving task is stale once its target is proved or excluded; a blocker
    is stale once the decl it names exists.  Everything else never goes stale
    automatically.
    """
    stale: list[Issue] = []
    for issue in list_issues(files, status=STATUS_OPEN):
        if issue.kind == KIND_PROVING_TASK:
            if statuses.get(issue.ref) in ("proved", "excluded"):
                stale.append(issue)
        elif issue.kind == KIND_BLOCKER:
            if issue.ref and issue.ref in decl_names:
                stale.append(issue)
    return stale


def coherence_failures(
    files: Mapping[str, str], merged_pr_ids: Iterable[str]
) -> list[str]:
    """Resolved issues whose resolved_by is neither a merged PR nor a triage mark."""
    merged = set(merged_pr_ids)
    bad: list[str] = []
    for issue in list_issues(files, status=STATUS_RESOLVED):
        by = issue.resolved_by
        if by.startswith(TRIAGE_PREFIX):
            continue
        if by not in merged:
            bad.append(issue.id)
    return bad
