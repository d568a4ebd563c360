"""Scripted agent sessions.

Each agent is a deterministic state machine (a *policy*) driven one turn at a
time.  A turn synthesizes token usage from a per-role lognormal profile, asks
the policy for exactly one action, and executes it against the tool host when
it is a tool call.  Policies never touch the repository directly, cannot see
each other's state, and coordinate only through the repository: issue files,
commits, and pull requests.

All policy state is JSON-serializable so a run can checkpoint between any two
turns and resume with identical behavior.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from . import issues as issues_mod
from .checker import parse_target_list
from .corpus import ChunkSpec, sketch_source
from .toolhost import ToolCall, ToolHost, ToolResult

# -- roles and outcomes ---------------------------------------------------------------

ROLE_SKETCHER = "sketcher"
ROLE_PROVER = "prover"
ROLE_MAINTAINER = "maintainer"
ROLE_MATH_REVIEWER = "math-reviewer"
ROLE_ENG_REVIEWER = "eng-reviewer"
ROLE_TRIAGE = "triage"
ROLE_SCAN = "scan"
ROLE_PROGRESS = "progress"
ROLE_STATUS = "status"

ROLES = (
    ROLE_SKETCHER,
    ROLE_PROVER,
    ROLE_MAINTAINER,
    ROLE_MATH_REVIEWER,
    ROLE_ENG_REVIEWER,
    ROLE_TRIAGE,
    ROLE_SCAN,
    ROLE_PROGRESS,
    ROLE_STATUS,
)

OUTCOME_MERGED = "merged"
OUTCOME_APPROVED = "approved"
OUTCOME_MAX_REVISIONS = "max-revisions"
OUTCOME_MAX_ITERATIONS = "max-iterations"
OUTCOME_NO_PR = "no-pr"
OUTCOME_NO_PR_BLOCKED = "no-pr-blocked"
OUTCOME_ABORTED = "aborted"

OUTCOMES = (
    OUTCOME_MERGED,
    OUTCOME_APPROVED,
    OUTCOME_MAX_REVISIONS,
    OUTCOME_MAX_ITERATIONS,
    OUTCOME_NO_PR,
    OUTCOME_NO_PR_BLOCKED,
    OUTCOME_ABORTED,
)

REVISION_CAP = 10
PR_LINE_CAP = 400
PR_FILE_CAP = 14


@dataclass(frozen=True)
class TokenProfile:
    """Per-turn lognormal means (tokens) for one role."""

    mean_in: float
    mean_out: float
    sigma: float = 0.5


# Per-turn means chosen to reproduce observed per-role input/output volume
# ratios from large production runs.
ROLE_TOKEN_PROFILES: dict[str, TokenProfile] = {
    ROLE_SKETCHER: TokenProfile(1_190.0, 7.0),
    ROLE_PROVER: TokenProfile(57_440.0, 446.0),
    ROLE_MAINTAINER: TokenProfile(54_980.0, 340.0),
    ROLE_MATH_REVIEWER: TokenProfile(25_440.0, 290.0),
    ROLE_ENG_REVIEWER: TokenProfile(17_900.0, 240.0),
    ROLE_TRIAGE: TokenProfile(39_910.0, 190.0),
    ROLE_SCAN: TokenProfile(60_900.0, 133.0),
    ROLE_PROGRESS: TokenProfile(60_950.0, 220.0),
    ROLE_STATUS: TokenProfile(60_900.0, 133.0),
}

ROLE_TURN_CAPS: dict[str, int] = {
    ROLE_SKETCHER: 256,
    ROLE_PROVER: 256,
    ROLE_MAINTAINER: 512,
    ROLE_MATH_REVIEWER: 128,
    ROLE_ENG_REVIEWER: 128,
    ROLE_TRIAGE: 512,
    ROLE_SCAN: 512,
    ROLE_PROGRESS: 128,
    ROLE_STATUS: 512,
}


class TokenSynthesizer:
    """Draws per-turn (input, output) token counts for one role."""

    def __init__(self, profile: TokenProfile) -> None:
        self.profile = profile
        half_var = 0.5 * profile.sigma * profile.sigma
        self._mu_in = math.log(profile.mean_in) - half_var
        self._mu_out = math.log(profile.mean_out) - half_var

    def draw(self, rng: random.Random) -> tuple[int, int]:
        tin = max(1, round(rng.lognormvariate(self._mu_in, self.profile.sigma)))
        tout = max(1, round(rng.lognormvariate(self._mu_out, self.profile.sigma)))
        return tin, tout


# -- actions -------------------------------------------------------------------------


@dataclass(frozen=True)
class ToolAction:
    """Run one tool against the host; `branch` overrides the session branch."""

    tool: str
    args: Mapping
    branch: Optional[str] = None

    def to_payload(self) -> dict:
        return {"kind": "tool", "tool": self.tool, "branch": self.branch}


@dataclass(frozen=True)
class SubmitPR:
    title: str

    def to_payload(self) -> dict:
        return {"kind": "submit", "title": self.title}


@dataclass(frozen=True)
class GiveUp:
    """End the session without a pull request."""

    reason: str

    def to_payload(self) -> dict:
        return {"kind": "give-up", "reason": self.reason}


@dataclass(frozen=True)
class ReportBlocked:
    """End without a PR, carrying the blocker so a followup can land it.

    The blocking issue was staged on the session's branch and will be
    discarded with it; `issue` carries the full content so the followup
    agent can recreate the identical file on a branch that merges.
    """

    reason: str
    helper: str
    helper_path: str
    issue: Mapping

    def to_payload(self) -> dict:
        return {
            "kind": "blocked",
            "reason": self.reason,
            "helper": self.helper,
            "helper_path": self.helper_path,
            "issue": dict(self.issue),
        }


@dataclass(frozen=True)
class Verdict:
    """A reviewer's final word on a pull request."""

    decision: str  # approve | request-changes | reject
    reason: str = ""

    def to_payload(self) -> dict:
        return {"kind": "verdict", "decision": self.decision, "reason": self.reason}


Action = object


# -- session ----------------------------------------------------------------------


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    role: str
    task: Mapping = field(default_factory=dict)

    @property
    def branch(self) -> str:
        return f"wt/{self.agent_id}"

    def to_payload(self) -> dict:
        return {"agent_id": self.agent_id, "role": self.role, "task": dict(self.task)}

    @staticmethod
    def from_payload(data: Mapping) -> "AgentSpec":
        return AgentSpec(data["agent_id"], data["role"], dict(data["task"]))


class Session:
    """One live agent: spec + policy + rng + usage counters."""

    def __init__(
        self,
        spec: AgentSpec,
        policy: "Policy",
        rng: random.Random,
        turn_cap: Optional[int] = None,
    ) -> None:
        self.spec = spec
        self.policy = policy
        self.rng = rng
        self.turn_cap = turn_cap if turn_cap is not None else ROLE_TURN_CAPS[spec.role]
        self.synth = TokenSynthesizer(ROLE_TOKEN_PROFILES[spec.role])
        self.turns = 0
        self.tokens_in = 0
        self.tokens_out = 0
        self.revisions = 0
        self.outcome: Optional[str] = None
        self.last_result: Optional[ToolResult] = None

    @property
    def agent_id(self) -> str:
        return self.spec.agent_id

    @property
    def branch(self) -> str:
        return self.spec.branch

    @property
    def exhausted(self) -> bool:
        return self.turns >= self.turn_cap

    def step(self, host: ToolHost) -> Action:
        """Run one turn: synthesize usage, pick an action, execute tool calls."""
        if self.outcome is not None:
            raise RuntimeError(f"session {self.agent_id} already finished")
        tin, tout = self.synth.draw(self.rng)
        self.tokens_in += tin
        self.tokens_out += tout
        self.turns += 1
        action = self.policy.next_action(self)
        if isinstance(action, ToolAction):
            call = ToolCall(
                tool=action.tool,
                args=dict(action.args),
                caller=self.agent_id,
                branch=action.branch or self.branch,
            )
            self.last_result = host.dispatch(call, rng=self.rng)
        return action

    def feedback(self, text: str) -> None:
        self.policy.on_feedback(self, text)

    def finish(self, outcome: str) -> None:
        if outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {outcome!r}")
        self.outcome = outcome

    def to_payload(self) -> dict:
        state = self.rng.getstate()
        return {
            "spec": self.spec.to_payload(),
            "policy": self.policy.to_payload(),
            "turn_cap": self.turn_cap,
            "turns": self.turns,
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
            "revisions": self.revisions,
            "outcome": self.outcome,
            "rng_state": [state[0], list(state[1]), state[2]],
        }

    @staticmethod
    def from_payload(data: Mapping) -> "Session":
        spec = AgentSpec.from_payload(data["spec"])
        policy = policy_from_payload(data["policy"])
        rng = random.Random()
        raw = data["rng_state"]
        rng.setstate((raw[0], tuple(raw[1]), raw[2]))
        session = Session(spec, policy, rng, turn_cap=data["turn_cap"])
        session.turns = data["turns"]
        session.tokens_in = data["tokens_in"]
        session.tokens_out = data["tokens_out"]
        session.revisions = data["revisions"]
        session.outcome = data["outcome"]
        return session


# -- policies ----------------------------------------------------------------------


def _parse_statuses(output: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in output.split("\n"):
        parts = line.split()
        if len(parts) == 2:
            out[parts[0]] = parts[1]
    return out


class Policy:
    """Deterministic per-role script; state must stay JSON-serializable."""

    name = "base"

    def __init__(self, task: Mapping, state: Optional[Mapping] = None) -> None:
        self.task = dict(task)
        self.state = dict(state) if state is not None else {"phase": "start"}

    def next_action(self, session: Session) -> Action:
        raise NotImplementedError

    def on_feedback(self, session: Session, text: str) -> None:
        if "conflict" in text:
            self.state["phase"] = "restart"
        else:
            self.state["phase"] = "resubmit"

    def to_payload(self) -> dict:
        return {"policy": self.name, "task": self.task, "state": self.state}


class SketcherPolicy(Policy):
    """Lay down a chapter skeleton and file one proving task per obligation."""

    name = ROLE_SKETCHER

    def _chunk(self) -> ChunkSpec:
        return ChunkSpec.from_payload(self.task["chunk"])

    def _obligations(self) -> list[str]:
        return [
            d.name
            for d in self._chunk().decls
            if d.kind == "thm" and d.target and not d.markers
        ]

    def next_action(self, session: Session) -> Action:
        phase = self.state["phase"]
        chunk = self._chunk()
        if phase == "start":
            self.state["phase"] = "write"
            return ToolAction("file.list", {})
        if phase in ("write", "restart"):
            if phase == "restart":
                self.state["phase"] = "write"
                return ToolAction("git.restart", {})
            self.state["phase"] = "check"
            return ToolAction("file.write", {"path": chunk.path, "content": sketch_source(chunk)})
        if phase == "check":
            self.state["phase"] = "verify"
            return ToolAction("check.build", {})
        if phase == "verify":
            result = session.last_result
            if result is None or not result.ok or not result.output.startswith("ok"):
                return GiveUp("sketch does not build")
            self.state["phase"] = "issues"
            self.state["issue_idx"] = 0
            return self.next_action(session)
        if phase == "issues":
            obligations = self._obligations()
            skip_rate = float(self.task.get("skip_rate", 0.0))
            idx = self.state["issue_idx"]
            while idx < len(obligations):
                name = obligations[idx]
                idx += 1
                self.state["issue_idx"] = idx
                if session.rng.random() < skip_rate:
                    continue  # forgot one; a progress audit will re-file it
                return ToolAction(
                    "issue.create",
                    {
                        "kind": "proving-task",
                        "title": f"prove {name}",
                        "ref": name,
                        "body": f"Prove {name} in {chunk.path}.",
                    },
                )
            self.state["phase"] = "commit"
            return self.next_action(session)
        if phase == "commit":
            self.state["phase"] = "submit"
            return ToolAction("git.commit", {"message": f"sketch {chunk.chapter}: {chunk.topic}"})
        if phase in ("submit", "resubmit"):
            self.state["phase"] = "submitted"
            return SubmitPR(f"sketch {chunk.chapter}")
        return GiveUp(f"sketcher in unexpected phase {phase!r}")


class ProverPolicy(Policy):
    """Close one proof obligation, or report precisely why it cannot close."""

    name = ROLE_PROVER

    def _decl_old(self, target: str, deps: Sequence[str]) -> str:
        joined = ",".join(deps)
        return f"thm {target} needs {joined}. sorry."

    def next_action(self, session: Session) -> Action:
        phase = self.state["phase"]
        target = self.task["target"]
        path = self.task["path"]
        deps = list(self.task.get("deps", ()))
        hidden = list(self.task.get("hidden", ()))
        if phase == "start":
            self.state["phase"] = "status"
            return ToolAction("file.read", {"path": path})
        if phase == "status":
            self.state["phase"] = "decide"
            names = [target] + deps + hidden
            return ToolAction("check.status", {"names": names})
        if phase == "decide":
            result = session.last_result
            if result is None or not result.ok:
                return GiveUp("could not read target status")
            statuses = _parse_statuses(result.output)
            pool = self.task.get("excluded_pool", [])
            if pool and session.rng.random() < float(self.task.get("rabbit_rate", 0.0)):
                self.state["rabbit"] = session.rng.choice(list(pool))
                self.state["phase"] = "rabbit-prove"
                return self.next_action(session)
            if statuses.get(target) == "proved":
                return GiveUp(f"{target} is already proved")
            if statuses.get(target) != "sorry":
                return GiveUp(f"{target} is not stated on main")
            missing = [h for h in hidden if statuses.get(h) == "absent"]
            if missing:
                self.state["helper"] = missing[0]
                self.state["phase"] = "block-issue"
                return self.next_action(session)
            unproved = [d for d in deps if statuses.get(d) != "proved"]
            if unproved:
                return GiveUp(f"blocked on unproved deps: {','.join(unproved)}")
            self.state["work_left"] = session.rng.randint(1, 3)
            self.state["phase"] = "work"
            return self.next_action(session)
        if phase == "work":
            if self.state.get("work_left", 0) > 0:
                self.state["work_left"] -= 1
                return ToolAction("ref.grep", {"pattern": target})
            self.state["phase"] = "prove"
            return self.next_action(session)
        if phase == "prove":
            self.state["phase"] = "resolve"
            old = self._decl_old(target, deps)
            return ToolAction(
                "file.replace",
                {"path": path, "old": old, "new": old.replace(" sorry.", " proof.")},
            )
        if phase == "resolve":
            result = session.last_result
            if result is None or not result.ok:
                return GiveUp(f"could not rewrite {target}: {result.output if result else ''}")
            self.state["phase"] = "check"
            return ToolAction("issue.resolve", {"id": self.task["issue_id"]})
        if phase == "check":
            # A stale proving task may already be resolved; the proof is
            # still worth landing, so carry on either way.
            self.state["phase"] = "verify"
            return ToolAction("check.build", {})
        if phase == "verify":
            result = session.last_result
            if result is None or not result.ok or not result.output.startswith("ok"):
                return GiveUp("proof does not build")
            self.state["phase"] = "commit"
            return self.next_action(session)
        if phase == "commit":
            self.state["phase"] = "submit"
            return ToolAction("git.commit", {"message": f"prove {target}"})
        if phase in ("submit", "resubmit"):
            self.state["phase"] = "submitted"
            rabbit = self.state.get("rabbit")
            return SubmitPR(f"prove {rabbit['name'] if rabbit else target}")
        if phase == "restart":
            self.state["phase"] = "status"
            return ToolAction("git.restart", {})
        if phase == "block-issue":
            helper = self.state["helper"]
            self.state["phase"] = "block-report"
            return ToolAction(
                "issue.create",
                {
                    "kind": "blocker",
                    "title": f"missing helper {helper}",
                    "ref": helper,
                    "body": f"{target} needs a supporting definition {helper} in {path}.",
                },
            )
        if phase == "block-report":
            result = session.last_result
            helper = self.state["helper"]
            issue_id = result.output if result is not None and result.ok else ""
            if not issue_id:
                return GiveUp(f"blocked on {helper} but could not file the blocker")
            issue = {
                "id": issue_id,
                "title": f"missing helper {helper}",
                "body": f"{target} needs a supporting definition {helper} in {path}.",
                "ref": helper,
                "kind": "blocker",
                "created_by": session.agent_id,
            }
            paths = self.task.get("hidden_paths", {})
            return ReportBlocked(
                reason=f"missing helper {helper}",
                helper=helper,
                helper_path=paths.get(helper, path),
                issue=issue,
            )
        if phase == "rabbit-prove":
            excl = self.state["rabbit"]
            self.state["phase"] = "rabbit-commit"
            old = self._decl_old(excl["name"], excl.get("deps", []))
            return ToolAction(
                "file.replace",
                {
                    "path": excl["path"],
                    "old": old,
                    "new": old.replace(" sorry.", " proof."),
                },
            )
        if phase == "rabbit-commit":
            excl = self.state["rabbit"]
            result = session.last_result
            if result is None or not result.ok:
                return GiveUp(f"wandered off to {excl['name']} and got lost")
            self.state["phase"] = "submit"
            return ToolAction("git.commit", {"message": f"prove {excl['name']}"})
        return GiveUp(f"prover in unexpected phase {phase!r}")

    def on_feedback(self, session: Session, text: str) -> None:
        if self.state.get("rabbit"):
            # Stubbornly resubmit the out-of-scope proof unchanged.
            self.state["phase"] = "resubmit"
        elif "conflict" in text:
            self.state["phase"] = "restart"
        else:
            self.state["phase"] = "resubmit"


class MaintainerPolicy(Policy):
    """Land missing helpers for blocked provers, or work a housekeeping issue."""

    name = ROLE_MAINTAINER

    def next_action(self, session: Session) -> Action:
        mode = self.task.get("mode", "helper")
        if mode == "helper":
            return self._helper_action(session)
        if mode == "post-issue":
            return self._post_issue_action(session)
        return self._refactor_action(session)

    # - helper followup -

    def _helper_action(self, session: Session) -> Action:
        phase = self.state["phase"]
        helper = self.task["helper"]
        path = self.task["helper_path"]
        issue = self.task["issue"]
        if phase in ("start", "restart"):
            if phase == "restart":
                self.state["phase"] = "start"
                return ToolAction("git.restart", {})
            self.state["phase"] = "decide"
            return ToolAction("check.status", {"names": [helper]})
        if phase == "decide":
            result = session.last_result
            if result is None or not result.ok:
                return GiveUp("could not check helper status")
            statuses = _parse_statuses(result.output)
            if statuses.get(helper) != "absent":
                return GiveUp(f"{helper} is already defined")
            if session.rng.random() < float(self.task.get("bad_tick_rate", 0.0)):
                # Marks the box without doing the work; a later blocked
                # prover will surface the gap again.
                self.state["forget_helper"] = True
            self.state["phase"] = "read"
            return self.next_action(session)
        if phase == "read":
            self.state["phase"] = "write-issue"
            return ToolAction("file.read", {"path": path})
        if phase == "write-issue":
            result = session.last_result
            if result is None or not result.ok:
                return GiveUp(f"cannot read {path}")
            self.state["chapter"] = result.output
            self.state["phase"] = "helper" if not self.state.get("forget_helper") else "resolve"
            content = issues_mod.render_issue(
                issues_mod.Issue(
                    id=issue["id"],
                    status="open",
                    kind=issue["kind"],
                    created_by=issue["created_by"],
                    resolved_by=issues_mod.UNRESOLVED,
                    ref=issue["ref"],
                    title=issue["title"],
                    body=issue["body"],
                )
            )
            return ToolAction(
                "file.write", {"path": issues_mod.issue_path(issue["id"]), "content": content}
            )
        if phase == "helper":
            content = self.state["chapter"]
            if not content.endswith("\n"):
                content += "\n"
            content += f"def {helper} needs .\n"
            self.state["phase"] = "resolve"
            return ToolAction("file.write", {"path": path, "content": content})
        if phase == "resolve":
            self.state["phase"] = "check"
            return ToolAction("issue.resolve", {"id": issue["id"]})
        if phase == "check":
            self.state["phase"] = "verify"
            return ToolAction("check.build", {})
        if phase == "verify":
            result = session.last_result
            if result is None or not result.ok or not result.output.startswith("ok"):
                return GiveUp("helper change does not build")
            self.state["phase"] = "commit"
            return self.next_action(session)
        if phase == "commit":
            self.state["phase"] = "submit"
            return ToolAction(
                "git.commit", {"message": f"add helper {helper} for {issue['ref']}"}
            )
        if phase in ("submit", "resubmit"):
            self.state["phase"] = "submitted"
            return SubmitPR(f"helper {helper}")
        return GiveUp(f"maintainer in unexpected phase {phase!r}")

    # - landing an operator-filed issue -

    def _post_issue_action(self, session: Session) -> Action:
        phase = self.state["phase"]
        title = self.task["title"]
        if phase in ("start", "restart"):
            if phase == "restart":
                self.state["phase"] = "start"
                return ToolAction("git.restart", {})
            self.state["phase"] = "check"
            return ToolAction(
                "issue.create",
                {
                    "kind": self.task.get("kind", "global"),
                    "title": title,
                    "body": self.task.get("body", ""),
                    "ref": self.task.get("ref", ""),
                },
            )
        if phase == "check":
            result = session.last_result
            if result is None or not result.ok:
                return GiveUp("could not file the requested issue")
            self.state["phase"] = "verify"
            return ToolAction("check.build", {})
        if phase == "verify":
            result = session.last_result
            if result is None or not result.ok or not result.output.startswith("ok"):
                return GiveUp("issue change does not build")
            self.state["phase"] = "commit"
            return self.next_action(session)
        if phase == "commit":
            self.state["phase"] = "submit"
            return ToolAction("git.commit", {"message": f"file issue: {title}"})
        if phase in ("submit", "resubmit"):
            self.state["phase"] = "submitted"
            return SubmitPR(f"issue: {title}")
        return GiveUp(f"maintainer in unexpected phase {phase!r}")

    # - housekeeping / refactor -

    def _refactor_action(self, session: Session) -> Action:
        phase = self.state["phase"]
        path = self.task["path"]
        marker = "# audited"
        if phase in ("start", "restart"):
            if phase == "restart":
                self.state["phase"] = "start"
                return ToolAction("git.restart", {})
            self.state["phase"] = "edit"
            return ToolAction("file.read", {"path": path})
        if phase == "edit":
            result = session.last_result
            if result is None or not result.ok:
                return GiveUp(f"cannot read {path}")
            content = result.output
            if not content.endswith("\n"):
                content += "\n"
            if f"{marker}\n" in content:
                content = content.replace(f"{marker}\n", "", 1)
            else:
                content += f"{marker}\n"
            self.state["phase"] = "resolve"
            return ToolAction("file.write", {"path": path, "content": content})
        if phase == "resolve":
            self.state["phase"] = "check"
            issue_id = self.task.get("issue_id")
            if issue_id:
                return ToolAction("issue.resolve", {"id": issue_id})
            return self.next_action(session)
        if phase == "check":
            self.state["phase"] = "verify"
            return ToolAction("check.build", {})
        if phase == "verify":
            result = session.last_result
            if result is None or not result.ok or not result.output.startswith("ok"):
                return GiveUp("refactor does not build")
            self.state["phase"] = "commit"
            return self.next_action(session)
        if phase == "commit":
            self.state["phase"] = "submit"
            return ToolAction("git.commit", {"message": f"tidy {path}"})
        if phase in ("submit", "resubmit"):
            self.state["phase"] = "submitted"
            return SubmitPR(f"tidy {path}")
        return GiveUp(f"maintainer in unexpected phase {phase!r}")


class _ReviewerPolicy(Policy):
    """Shared review scaffolding: read the diff, then judge the packet."""

    def _packet(self) -> Mapping:
        return self.task["packet"]

    def _pr_branch(self) -> str:
        return self.task["branch"]

    def next_action(self, session: Session) -> Action:
        phase = self.state["phase"]
        if phase == "start":
            self.state["phase"] = "read"
            return ToolAction("git.diff", {"against": "main"}, branch=self._pr_branch())
        if phase == "read":
            packet = self._packet()
            paths = list(packet.get("code_paths", ()))
            if paths:
                self.state["phase"] = "inspect"
                return ToolAction(
                    "file.read", {"path": paths[0]}, branch=self._pr_branch()
                )
            self.state["phase"] = "inspect"
            return self.next_action(session)
        if phase == "inspect":
            self.state["phase"] = "verdict"
            return ToolAction("check.build", {}, branch=self._pr_branch())
        if phase == "verdict":
            self.state["phase"] = "done"
            return self.judge(session)
        return Verdict("approve", "nothing further")

    def judge(self, session: Session) -> Verdict:
        raise NotImplementedError


class MathReviewerPolicy(_ReviewerPolicy):
    """Guards scope and proof state: no out-of-scope targets, no empty PRs."""

    name = ROLE_MATH_REVIEWER

    def judge(self, session: Session) -> Verdict:
        packet = self._packet()
        if packet.get("empty"):
            return Verdict("reject", "empty change")
        if self.task.get("request_always"):
            return Verdict("request-changes", "statements need another pass")
        out_of_scope = list(packet.get("proved_excluded", ()))
        if out_of_scope:
            return Verdict(
                "request-changes",
                f"out of scope: {','.join(out_of_scope)} is not on the roadmap",
            )
        rate = float(self.task.get("request_rate", 0.0))
        if int(packet.get("revision", 0)) == 0 and session.rng.random() < rate:
            return Verdict("request-changes", "tighten the statement wording")
        return Verdict("approve", "statements check out")


class EngReviewerPolicy(_ReviewerPolicy):
    """Guards size and hygiene: line cap, file cap, non-empty diffs."""

    name = ROLE_ENG_REVIEWER

    def judge(self, session: Session) -> Verdict:
        packet = self._packet()
        if packet.get("empty"):
            return Verdict("reject", "empty change")
        if self.task.get("request_always"):
            return Verdict("request-changes", "structure needs another pass")
        if int(packet.get("added", 0)) > PR_LINE_CAP:
            return Verdict("request-changes", f"over {PR_LINE_CAP} added lines; split it")
        if int(packet.get("code_files", 0)) > PR_FILE_CAP:
            return Verdict("request-changes", f"touches more than {PR_FILE_CAP} files")
        rate = float(self.task.get("request_rate", 0.0))
        if int(packet.get("revision", 0)) == 0 and session.rng.random() < rate:
            return Verdict("request-changes", "nit: tighten naming")
        return Verdict("approve", "mechanically sound")


class TriagePolicy(Policy):
    """Sweep the tracker: close issues whose work already landed."""

    name = ROLE_TRIAGE

    def next_action(self, session: Session) -> Action:
        phase = self.state["phase"]
        if phase in ("start", "restart"):
            if phase == "restart":
                self.state["phase"] = "start"
                return ToolAction("git.restart", {})
            self.state["phase"] = "statuses"
            return ToolAction("issue.list", {"status": "open", "full": 1})
        if phase == "statuses":
            result = session.last_result
            if result is None or not result.ok:
                return GiveUp("cannot list issues")
            entries = []
            for line in result.output.split("\n"):
                parts = line.split(maxsplit=4)
                if len(parts) >= 4 and parts[1] == "open":
                    ref = parts[3].removeprefix("ref=")
                    entries.append({"id": parts[0], "kind": parts[2], "ref": ref})
            self.state["entries"] = entries
            targets = parse_target_list(self.task["targets_text"])
            names = sorted({e["ref"] for e in entries if e["ref"] != "-"})
            self.state["excluded"] = sorted(t.name for t in targets if t.excluded)
            self.state["phase"] = "sweep"
            if not names:
                self.state["stale"] = []
                return self.next_action(session)
            self.state["names"] = names
            return ToolAction("check.status", {"names": names})
        if phase == "sweep":
            if "stale" not in self.state:
                result = session.last_result
                statuses = _parse_statuses(result.output if result and result.ok else "")
                excluded = set(self.state["excluded"])
                stale = []
                for entry in self.state["entries"]:
                    ref = entry["ref"]
                    if ref == "-":
                        continue
                    if entry["kind"] == "proving-task" and (
                        statuses.get(ref) == "proved" or ref in excluded
                    ):
                        stale.append(entry["id"])
                    elif entry["kind"] == "blocker" and statuses.get(ref, "absent") != "absent":
                        stale.append(entry["id"])
                self.state["stale"] = stale
            stale = self.state["stale"]
            if stale:
                issue_id = stale.pop(0)
                self.state["resolved_any"] = True
                return ToolAction(
                    "issue.resolve", {"id": issue_id, "by": f"triage:{session.agent_id}"}
                )
            if not self.state.get("resolved_any"):
                return GiveUp("no stale issues")
            self.state["phase"] = "commit"
            return self.next_action(session)
        if phase == "commit":
            self.state["phase"] = "submit"
            return ToolAction("git.commit", {"message": "triage sweep"})
        if phase in ("submit", "resubmit"):
            self.state["phase"] = "submitted"
            return SubmitPR("triage sweep")
        return GiveUp(f"triage in unexpected phase {phase!r}")


class ScanPolicy(Policy):
    """Read a sample of the tree and file housekeeping reports."""

    name = ROLE_SCAN

    def next_action(self, session: Session) -> Action:
        phase = self.state["phase"]
        if phase in ("start", "restart"):
            if phase == "restart":
                self.state["phase"] = "start"
                return ToolAction("git.restart", {})
            self.state["phase"] = "pick"
            return ToolAction("file.list", {})
        if phase == "pick":
            result = session.last_result
            if result is None or not result.ok:
                return GiveUp("cannot list files")
            code = [p for p in result.output.split("\n") if p.endswith(".toy")]
            if not code:
                return GiveUp("nothing to scan")
            count = min(len(code), session.rng.randint(2, 5))
            self.state["queue"] = session.rng.sample(code, count)
            self.state["flagged"] = []
            self.state["phase"] = "read"
            return self.next_action(session)
        if phase == "read":
            queue = self.state["queue"]
            if queue:
                path = queue.pop(0)
                if session.rng.random() < float(self.task.get("file_rate", 0.0)):
                    self.state["flagged"].append(path)
                return ToolAction("file.read", {"path": path})
            self.state["phase"] = "file-issues"
            return self.next_action(session)
        if phase == "file-issues":
            flagged = self.state["flagged"]
            if flagged:
                path = flagged.pop(0)
                self.state["filed_any"] = True
                return ToolAction(
                    "issue.create",
                    {
                        "kind": "refactor",
                        "title": f"tidy {path}",
                        "ref": "",
                        "body": f"Housekeeping sweep flagged {path}.",
                    },
                )
            if not self.state.get("filed_any"):
                return GiveUp("scan clean")
            self.state["phase"] = "commit"
            return self.next_action(session)
        if phase == "commit":
            self.state["phase"] = "submit"
            return ToolAction("git.commit", {"message": "file housekeeping reports"})
        if phase in ("submit", "resubmit"):
            self.state["phase"] = "submitted"
            return SubmitPR("scan findings")
        return GiveUp(f"scan in unexpected phase {phase!r}")


class ProgressPolicy(Policy):
    """Audit coverage: every open obligation should have a proving task."""

    name = ROLE_PROGRESS

    def next_action(self, session: Session) -> Action:
        phase = self.state["phase"]
        targets = parse_target_list(self.task["targets_text"])
        if phase in ("start", "restart"):
            if phase == "restart":
                self.state["phase"] = "start"
                return ToolAction("git.restart", {})
            self.state["phase"] = "issues"
            names = [t.name for t in targets if t.kind == "thm" and not t.excluded]
            self.state["names"] = names
            return ToolAction("check.status", {"names": names})
        if phase == "issues":
            result = session.last_result
            if result is None or not result.ok:
                return GiveUp("cannot read statuses")
            self.state["statuses"] = _parse_statuses(result.output)
            self.state["phase"] = "audit"
            return ToolAction("issue.list", {"status": "open", "full": 1})
        if phase == "audit":
            if "missing" not in self.state:
                result = session.last_result
                covered = set()
                if result is not None and result.ok:
                    for line in result.output.split("\n"):
                        parts = line.split(maxsplit=4)
                        if len(parts) >= 4 and parts[2] == "proving-task":
                            covered.add(parts[3].removeprefix("ref="))
                statuses = self.state["statuses"]
                self.state["missing"] = [
                    name
                    for name in self.state["names"]
                    if statuses.get(name) == "sorry" and name not in covered
                ]
            missing = self.state["missing"]
            if missing:
                name = missing.pop(0)
                self.state["filed_any"] = True
                return ToolAction(
                    "issue.create",
                    {
                        "kind": "proving-task",
                        "title": f"prove {name}",
                        "ref": name,
                        "body": f"Coverage audit: {name} has no open proving task.",
                    },
                )
            if not self.state.get("filed_any"):
                return GiveUp("coverage complete")
            self.state["phase"] = "commit"
            return self.next_action(session)
        if phase == "commit":
            self.state["phase"] = "submit"
            return ToolAction("git.commit", {"message": "re-file missing proving tasks"})
        if phase in ("submit", "resubmit"):
            self.state["phase"] = "submitted"
            return SubmitPR("progress audit")
        return GiveUp(f"progress in unexpected phase {phase!r}")


class StatusPolicy(Policy):
    """Read-only situation report; never opens a PR."""

    name = ROLE_STATUS

    def next_action(self, session: Session) -> Action:
        phase = self.state["phase"]
        if phase == "start":
            self.state["phase"] = "build"
            return ToolAction("issue.list", {"status": "open"})
        if phase == "build":
            result = session.last_result
            self.state["issues"] = result.output.split("\n")[-2:] if result else []
            self.state["phase"] = "report"
            return ToolAction("check.build", {})
        if phase == "report":
            result = session.last_result
            build = result.output if result is not None else "unknown"
            issues = " ".join(self.state.get("issues", []))
            return GiveUp(f"status: build={build}; issues={issues}".strip())
        return GiveUp("status report complete")


POLICY_REGISTRY: dict[str, type] = {
    ROLE_SKETCHER: SketcherPolicy,
    ROLE_PROVER: ProverPolicy,
    ROLE_MAINTAINER: MaintainerPolicy,
    ROLE_MATH_REVIEWER: MathReviewerPolicy,
    ROLE_ENG_REVIEWER: EngReviewerPolicy,
    ROLE_TRIAGE: TriagePolicy,
    ROLE_SCAN: ScanPolicy,
    ROLE_PROGRESS: ProgressPolicy,
    ROLE_STATUS: StatusPolicy,
}


def build_policy(role: str, task: Mapping) -> Policy:
    if role not in POLICY_REGISTRY:
        raise ValueError(f"no policy for role {role!r}")
    return POLICY_REGISTRY[role](task)


def policy_from_payload(data: Mapping) -> Policy:
    cls = POLICY_REGISTRY.get(data["policy"])
    if cls is None:
        raise ValueError(f"unknown policy {data['policy']!r}")
    return cls(data["task"], state=data["state"])


def build_session(spec: AgentSpec, seed: str) -> Session:
    """A fresh session with its own named rng stream."""
    policy = build_policy(spec.role, spec.task)
    rng = random.Random(f"{seed}/agent/{spec.agent_id}")
    return Session(spec, policy, rng)
