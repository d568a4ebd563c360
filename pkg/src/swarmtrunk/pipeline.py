"""Pull-request pipeline: dual review, merge queue, batching, bisection.

A pull request is identified by its branch name.  It moves through:

    under-review -> returned   (changes requested, or conflicts/build failure)
                 -> suppressed (either reviewer rejects it outright)
                 -> queued     (both lanes approve and a rebase preview is clean)
    queued       -> merged     (staged build passes; main fast-forwards)
                 -> returned   (conflict or staged build failure goes back to the author)
                 -> failed-merge (conflict, but the author is gone)

Main only ever advances by fast-forwarding to a branch rebased onto the
current main head, so each merge carries an exact diff against the previous
main state and the fold of merged diffs reproduces main byte for byte.

Batched merges stage up to ``batch_size`` queued PRs onto a throwaway staging
branch and run one build for the whole batch; on failure the batch is
bisected, so one broken PR among ``b`` costs at most ``2*log2(b) + 1`` staging
builds instead of ``b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

from .checker import CachingChecker
from .vcs import MAIN, Diff, InMemoryVCS

PR_UNDER_REVIEW = "under-review"
PR_RETURNED = "returned"
PR_QUEUED = "queued"
PR_MERGED = "merged"
PR_SUPPRESSED = "suppressed"
PR_FAILED_MERGE = "failed-merge"

PR_STATES = (
    PR_UNDER_REVIEW,
    PR_RETURNED,
    PR_QUEUED,
    PR_MERGED,
    PR_SUPPRESSED,
    PR_FAILED_MERGE,
)

LANE_MATH = "math"
LANE_ENG = "eng"
LANES = (LANE_MATH, LANE_ENG)

DECISION_APPROVE = "approve"
DECISION_REQUEST_CHANGES = "request-changes"
DECISION_REJECT = "reject"


@dataclass
class PullRequest:
    """One branch proposed for main; the branch name is the PR id."""

    branch: str
    author: str
    author_role: str
    title: str
    opened_at: float
    state: str = PR_UNDER_REVIEW
    revision: int = 0
    merge_attempts: int = 0
    ever_queued: bool = False
    verdicts: dict = field(default_factory=dict)
    feedback: list = field(default_factory=list)
    suppress_reason: str = ""
    merged_commit: str = ""

    @property
    def id(self) -> str:
        return self.branch

    def to_payload(self) -> dict:
        return {
            "branch": self.branch,
            "author": self.author,
            "author_role": self.author_role,
            "title": self.title,
            "opened_at": self.opened_at,
            "state": self.state,
            "revision": self.revision,
            "merge_attempts": self.merge_attempts,
            "ever_queued": self.ever_queued,
            "verdicts": dict(self.verdicts),
            "feedback": list(self.feedback),
            "suppress_reason": self.suppress_reason,
            "merged_commit": self.merged_commit,
        }

    @staticmethod
    def from_payload(data: Mapping) -> "PullRequest":
        pr = PullRequest(
            branch=data["branch"],
            author=data["author"],
            author_role=data["author_role"],
            title=data["title"],
            opened_at=data["opened_at"],
        )
        pr.state = data["state"]
        pr.revision = data["revision"]
        pr.merge_attempts = data["merge_attempts"]
        pr.ever_queued = data["ever_queued"]
        pr.verdicts = dict(data["verdicts"])
        pr.feedback = list(data["feedback"])
        pr.suppress_reason = data["suppress_reason"]
        pr.merged_commit = data["merged_commit"]
        return pr


def bisect_build_bound(batch: int) -> int:
    """Worst-case staging builds to isolate one broken PR in a batch."""
    if batch <= 1:
        return 1
    return 2 * math.ceil(math.log2(batch)) + 1


class MergePipeline:
    """Single-writer merge machinery over the shared repository."""

    def __init__(
        self,
        vcs: InMemoryVCS,
        checker: CachingChecker,
        clock: Callable[[], float] = lambda: 0.0,
        batch_size: int = 1,
        author_alive: Callable[[str], bool] = lambda author: True,
    ) -> None:
        if batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        self.vcs = vcs
        self.checker = checker
        self.clock = clock
        self.batch_size = batch_size
        self.author_alive = author_alive
        self.prs: dict[str, PullRequest] = {}
        self.queue: list[str] = []
        self.staging_builds = 0
        self._staging_seq = 0

    # -- intake and review ------------------------------------------------------

    def open_pr(self, branch: str, author: str, author_role: str, title: str) -> PullRequest:
        if branch in self.prs and self.prs[branch].state not in (
            PR_MERGED,
            PR_SUPPRESSED,
            PR_FAILED_MERGE,
        ):
            raise ValueError(f"branch {branch} already has an open PR")
        pr = PullRequest(branch, author, author_role, title, opened_at=self.clock())
        self.prs[branch] = pr
        return pr

    def resubmit(self, pr_id: str) -> PullRequest:
        pr = self.pr(pr_id)
        if pr.state != PR_RETURNED:
            raise ValueError(f"{pr_id} is {pr.state}, not returned")
        pr.state = PR_UNDER_REVIEW
        pr.verdicts = {}
        return pr

    def pr(self, pr_id: str) -> PullRequest:
        if pr_id not in self.prs:
            raise KeyError(f"no such PR: {pr_id}")
        return self.prs[pr_id]

    def record_verdict(
        self, pr_id: str, lane: str, decision: str, reason: str, reviewer: str
    ) -> Optional[str]:
        """Store one lane's verdict; resolves the round once both lanes are in.

        Returns the resulting PR state when the round resolved, else None.
        """
        if lane not in LANES:
            raise ValueError(f"unknown review lane {lane!r}")
        pr = self.pr(pr_id)
        if pr.state != PR_UNDER_REVIEW:
            raise ValueError(f"{pr_id} is not under review")
        pr.verdicts[lane] = {"decision": decision, "reason": reason, "reviewer": reviewer}
        if all(l in pr.verdicts for l in LANES):
            return self._resolve_round(pr)
        return None

    def _resolve_round(self, pr: PullRequest) -> str:
        decisions = {lane: pr.verdicts[lane]["decision"] for lane in LANES}
        reasons = [
            f"{lane}: {pr.verdicts[lane]['reason']}"
            for lane in LANES
            if pr.verdicts[lane]["decision"] != DECISION_APPROVE
        ]
        if DECISION_REJECT in decisions.values():
            pr.state = PR_SUPPRESSED
            pr.suppress_reason = "; ".join(reasons)
            return pr.state
        if DECISION_REQUEST_CHANGES in decisions.values():
            self._return_to_author(pr, "; ".join(reasons))
            return pr.state
        # Both approved: a clean rebase preview is required before queueing.
        status, _ = self.vcs.rebase_preview(pr.branch, MAIN)
        if not status.clean:
            detail = ", ".join(c.path for c in status.conflicts)
            self._return_to_author(pr, f"merge conflict with main on: {detail}")
            return pr.state
        pr.state = PR_QUEUED
        pr.ever_queued = True
        self.queue.append(pr.id)
        return pr.state

    def _return_to_author(self, pr: PullRequest, reason: str) -> None:
        pr.state = PR_RETURNED
        pr.revision += 1
        pr.feedback.append(reason)
        pr.verdicts = {}

    # -- merge queue --------------------------------------------------------------

    def queue_step(self) -> list[dict]:
        """Process the front of the queue: one batch, one staged build each try."""
        ready: list[PullRequest] = []
        while self.queue and len(ready) < self.batch_size:
            pr = self.pr(self.queue.pop(0))
            if pr.state == PR_QUEUED:
                ready.append(pr)
        events: list[dict] = []
        if ready:
            self._merge_batch(ready, events)
        return events

    def _merge_batch(self, prs: list[PullRequest], events: list[dict]) -> None:
        ok, survivors = self._staged_build(prs, events)
        if not survivors:
            return
        if ok:
            for pr in survivors:
                self._land(pr, events)
        elif len(survivors) == 1:
            self._requeue_or_fail(survivors[0], "staged build failed", events)
        else:
            mid = len(survivors) // 2
            self._merge_batch(survivors[:mid], events)
            self._merge_batch(survivors[mid:], events)

    def _staged_build(
        self, prs: list[PullRequest], events: list[dict]
    ) -> tuple[bool, list[PullRequest]]:
        """Stage a candidate set on a throwaway branch and build it once."""
        name = f"staging/{self._staging_seq}"
        self._staging_seq += 1
        self.vcs.create_branch_at(name, self.vcs.main_head())
        survivors: list[PullRequest] = []
        for pr in prs:
            status, plan = self.vcs.rebase_preview(pr.branch, name)
            if not status.clean:
                detail = ", ".join(c.path for c in status.conflicts)
                self._requeue_or_fail(pr, f"merge conflict on: {detail}", events)
                continue
            for message, author, files in plan:
                self.vcs.add_synthetic_commit(name, files, message, author, self.clock())
            survivors.append(pr)
        if not survivors:
            self.vcs.delete_branch(name)
            return False, []
        report = self.checker.check(self.vcs.snapshot(name).files)
        self.staging_builds += 1
        events.append(
            {
                "kind": "staging-build",
                "prs": [pr.id for pr in survivors],
                "ok": report.ok,
                "errors": len(report.errors),
            }
        )
        self.vcs.delete_branch(name)
        return report.ok, survivors

    def _requeue_or_fail(self, pr: PullRequest, reason: str, events: list[dict]) -> None:
        pr.merge_attempts += 1
        if self.author_alive(pr.author):
            self._return_to_author(pr, reason)
            events.append({"kind": "pr-returned", "pr": pr.id, "reason": reason})
        else:
            pr.state = PR_FAILED_MERGE
            events.append({"kind": "pr-failed-merge", "pr": pr.id, "reason": reason})

    def _land(self, pr: PullRequest, events: list[dict]) -> None:
        status = self.vcs.rebase_onto_main(pr.branch, timestamp=self.clock())
        if not status.clean:
            # The staged build validated this exact sequence; a conflict here
            # means the queue was raced, which the single-writer loop forbids.
            detail = ", ".join(c.path for c in status.conflicts)
            self._requeue_or_fail(pr, f"merge conflict on: {detail}", events)
            return
        head, diff = self.vcs.merge_to_main(pr.branch)
        pr.state = PR_MERGED
        pr.merged_commit = head
        report = self.checker.check(self.vcs.snapshot(MAIN).files)
        events.append(
            {
                "kind": "pr-merged",
                "pr": pr.id,
                "author": pr.author,
                "author_role": pr.author_role,
                "title": pr.title,
                "commit": head,
                "added": diff.added_lines,
                "removed": diff.removed_lines,
                "code_files": len(diff.code_paths),
                "coord_files": len(diff.coordination_paths),
                "main_ok": report.ok,
                "decl_count": report.decl_count,
                "sorry_count": report.sorry_count,
                "diff": diff.to_payload(),
            }
        )

    def abandon(self, pr_id: str, reason: str) -> PullRequest:
        """Suppress a PR whose author is gone; queued PRs stay queued.

        A queued PR still has a clean, build-validated branch, so it is left
        to the queue, which lands it or fails it against `author_alive`.
        """
        pr = self.pr(pr_id)
        if pr.state in (PR_UNDER_REVIEW, PR_RETURNED):
            pr.state = PR_SUPPRESSED
            pr.suppress_reason = reason
        return pr

    def queued_count(self) -> int:
        return sum(1 for pr_id in self.queue if self.prs[pr_id].state == PR_QUEUED)

    # -- introspection and checkpointing -------------------------------------------

    def open_count(self) -> int:
        return sum(
            1
            for pr in self.prs.values()
            if pr.state in (PR_UNDER_REVIEW, PR_RETURNED, PR_QUEUED)
        )

    def merged_ids(self) -> list[str]:
        return sorted(pr.id for pr in self.prs.values() if pr.state == PR_MERGED)

    def to_payload(self) -> dict:
        return {
            "prs": {pr_id: pr.to_payload() for pr_id, pr in sorted(self.prs.items())},
            "queue": list(self.queue),
            "staging_builds": self.staging_builds,
            "staging_seq": self._staging_seq,
            "batch_size": self.batch_size,
        }

    def restore_payload(self, data: Mapping) -> None:
        self.prs = {k: PullRequest.from_payload(v) for k, v in data["prs"].items()}
        self.queue = list(data["queue"])
        self.staging_builds = data["staging_builds"]
        self._staging_seq = data["staging_seq"]
        self.batch_size = data["batch_size"]
