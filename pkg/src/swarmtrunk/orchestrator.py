"""The run loop: a simulated clock driving hundreds of agents over one repo.

Everything here is deterministic for a given (config, corpus) pair: the
event loop is a heap of (time, seq, callback), every random draw comes from
a stream named after the seed and the thing being decided, and all state
round-trips through plain JSON payloads for checkpoint and resume.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import random
import threading
from collections import deque
from dataclasses import dataclass, field, fields
from typing import Callable, Mapping, Optional

from . import issues as issues_mod
from .accounting import UsageRecord
from .agents import (
    OUTCOME_ABORTED,
    OUTCOME_APPROVED,
    OUTCOME_MAX_ITERATIONS,
    OUTCOME_MAX_REVISIONS,
    OUTCOME_MERGED,
    OUTCOME_NO_PR,
    OUTCOME_NO_PR_BLOCKED,
    REVISION_CAP,
    ROLE_ENG_REVIEWER,
    ROLE_MAINTAINER,
    ROLE_MATH_REVIEWER,
    ROLE_PROGRESS,
    ROLE_PROVER,
    ROLE_SCAN,
    ROLE_SKETCHER,
    ROLE_STATUS,
    ROLE_TRIAGE,
    AgentSpec,
    GiveUp,
    ReportBlocked,
    Session,
    SubmitPR,
    ToolAction,
    Verdict,
    build_session,
)
from .checker import (
    BODY_PROVED,
    STATUS_EXCLUDED,
    STATUS_PROVED,
    CachingChecker,
    parse_toy_file,
    render_target_list,
    status_counts,
    target_status,
)
from .control import EventLog, encode_record
from .corpus import Scenario, generate_scenario
from .pipeline import (
    LANE_ENG,
    LANE_MATH,
    PR_QUEUED,
    PR_RETURNED,
    PR_SUPPRESSED,
    PR_UNDER_REVIEW,
    MergePipeline,
    PullRequest,
)
from .toolhost import ToolHost
from .vcs import MAIN, InMemoryVCS, compute_diff

__all__ = ["RunConfig", "Run", "Task", "WorktreeGate"]


# -- configuration ------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Everything that shapes a run; JSON round-trippable."""

    seed: str = "0"
    # corpus shape (used when no explicit corpus is supplied)
    corpus_seed: int = 1
    chapters: int = 8
    decls_per_chapter: int = 10
    thm_ratio: float = 0.7
    excluded: int = 2
    hidden_helpers: int = 2
    duplicate_pairs: int = 1
    # capacity
    concurrency: int = 16
    worktree_capacity: int = 8
    batch_size: int = 4
    max_agents: int = 0  # 0 = unlimited
    max_time: float = 0.0  # simulated seconds; 0 = unlimited
    # behaviour
    dag_mode: bool = True
    revision_cap: int = REVISION_CAP
    sketch_skip_rate: float = 0.02
    rabbit_rate: float = 0.02
    bad_tick_rate: float = 0.02
    review_request_rate: float = 0.05
    review_always_request: bool = False
    scan_file_rate: float = 0.25
    triage_ratio: float = 0.02
    scan_ratio: float = 0.01
    progress_ratio: float = 0.012
    # latencies (simulated seconds)
    spawn_jitter: float = 30.0
    review_jitter: float = 5.0
    worktree_latency: float = 0.25
    turn_latency: float = 1.0
    merge_latency: float = 0.5
    pump_interval: float = 5.0
    checkpoint_interval: float = 0.0
    # retry behaviour for work that bounced
    backoff_base: float = 4.0
    backoff_cap: float = 240.0
    task_retry_cap: int = 40

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> "RunConfig":
        if self.chapters < 1 or self.decls_per_chapter < 1:
            raise ValueError("corpus must have at least one chapter and declaration")
        if self.concurrency < 1:
            raise ValueError("concurrency must be at least 1")
        if self.worktree_capacity < 1:
            raise ValueError("worktree_capacity must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.revision_cap < 1:
            raise ValueError("revision_cap must be at least 1")
        for name in (
            "thm_ratio",
            "sketch_skip_rate",
            "rabbit_rate",
            "bad_tick_rate",
            "review_request_rate",
            "scan_file_rate",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be within [0, 1]")
        return self

    def to_payload(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_payload(cls, data: Mapping) -> "RunConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**dict(data)).validate()


# -- scheduler tasks ----------------------------------------------------------------

TASK_SKETCH = "sketch"
TASK_PROVE = "prove"
TASK_HELPER = "maint-helper"
TASK_REFACTOR = "maint-refactor"
TASK_POST_ISSUE = "post-issue"
TASK_TRIAGE = "triage"
TASK_SCAN = "scan"
TASK_PROGRESS = "progress"
TASK_STATUS = "status"

_TASK_ROLE = {
    TASK_SKETCH: ROLE_SKETCHER,
    TASK_PROVE: ROLE_PROVER,
    TASK_HELPER: ROLE_MAINTAINER,
    TASK_REFACTOR: ROLE_MAINTAINER,
    TASK_POST_ISSUE: ROLE_MAINTAINER,
    TASK_TRIAGE: ROLE_TRIAGE,
    TASK_SCAN: ROLE_SCAN,
    TASK_PROGRESS: ROLE_PROGRESS,
    TASK_STATUS: ROLE_STATUS,
}

# Lower runs first.  Helpers outrank proofs so blocked provers stop bouncing.
_TASK_PRIORITY = {
    TASK_STATUS: 0,
    TASK_SKETCH: 1,
    TASK_HELPER: 2,
    TASK_PROVE: 3,
    TASK_REFACTOR: 4,
    TASK_POST_ISSUE: 4,
    TASK_TRIAGE: 5,
    TASK_SCAN: 6,
    TASK_PROGRESS: 6,
}

_OPS_RATIOS = {
    TASK_TRIAGE: "triage_ratio",
    TASK_SCAN: "scan_ratio",
    TASK_PROGRESS: "progress_ratio",
}

# Sweep-style duties run once per staffing decision instead of retrying until
# their (never-satisfied) completion condition is met.
_ONE_SHOT_TASKS = frozenset({TASK_TRIAGE, TASK_SCAN, TASK_PROGRESS, TASK_STATUS})


@dataclass
class Task:
    """One unit of schedulable work."""

    kind: str
    key: str
    payload: dict
    seq: int
    attempts: int = 0
    not_before: float = 0.0

    def to_payload(self) -> dict:
        return {
            "kind": self.kind,
            "key": self.key,
            "payload": dict(self.payload),
            "seq": self.seq,
            "attempts": self.attempts,
            "not_before": self.not_before,
        }

    @staticmethod
    def from_payload(data: Mapping) -> "Task":
        return Task(
            kind=data["kind"],
            key=data["key"],
            payload=dict(data["payload"]),
            seq=int(data["seq"]),
            attempts=int(data["attempts"]),
            not_before=float(data["not_before"]),
        )


# -- gates --------------------------------------------------------------------------


class WorktreeGate:
    """Caps how many worktree provisioning operations run at once.

    Creating a worktree takes `latency` simulated seconds and one of
    `capacity` slots; extra requests queue FIFO.  `peak` records the highest
    concurrency ever reached.
    """

    def __init__(
        self, schedule: Callable[[float, Callable[[], None]], None], capacity: int, latency: float
    ) -> None:
        self._schedule = schedule
        self.capacity = capacity
        self.latency = latency
        self.in_flight = 0
        self.peak = 0
        self._waiters: deque[tuple[Callable[[], None], Optional[Callable[[], None]]]] = deque()

    def request(
        self, done: Callable[[], None], began: Optional[Callable[[], None]] = None
    ) -> None:
        if self.in_flight < self.capacity:
            self._begin(done, began)
        else:
            self._waiters.append((done, began))

    def _begin(self, done: Callable[[], None], began: Optional[Callable[[], None]]) -> None:
        self.in_flight += 1
        self.peak = max(self.peak, self.in_flight)
        if began is not None:
            began()
        self._schedule(self.latency, lambda: self._finish(done))

    def _finish(self, done: Callable[[], None]) -> None:
        self.in_flight -= 1
        done()
        while self._waiters and self.in_flight < self.capacity:
            self._begin(*self._waiters.popleft())

    def clear(self) -> None:
        self._waiters.clear()


# -- per-agent runtime ----------------------------------------------------------------

ST_PROVISIONING = "provisioning"
ST_WAITING_SLOT = "waiting-slot"
ST_RUNNING = "running"
ST_AWAITING_REVIEW = "awaiting-review"
ST_AWAITING_MERGE = "awaiting-merge"
ST_DONE = "done"


@dataclass
class AgentRuntime:
    session: Session
    task_key: Optional[str]
    state: str
    has_worktree: bool = False
    pr_id: Optional[str] = None
    review_of: Optional[str] = None
    lane: Optional[str] = None
    reason: str = ""


# -- the run ------------------------------------------------------------------------


class Run:
    """One orchestrated swarm over one corpus."""

    def __init__(
        self,
        config: RunConfig,
        scenario: Optional[Scenario] = None,
        log: Optional[EventLog] = None,
        checkpoint_sink: Optional[Callable[[dict], None]] = None,
    ) -> None:
        self.config = config.validate()
        self.scenario = scenario or generate_scenario(
            config.corpus_seed,
            chapters=config.chapters,
            decls_per_chapter=config.decls_per_chapter,
            thm_ratio=config.thm_ratio,
            excluded=config.excluded,
            hidden_helpers=config.hidden_helpers,
            duplicate_pairs=config.duplicate_pairs,
        )
        self.log = log if log is not None else EventLog()
        self.checkpoint_sink = checkpoint_sink

        self._targets_text = render_target_list(self.scenario.targets)
        self._initial_files = {"targets.txt": self._targets_text}
        self.vcs = InMemoryVCS(self._initial_files)
        self.checker = CachingChecker()
        self.host = ToolHost(
            self.vcs,
            self.checker,
            targets=self.scenario.targets,
            reference=self._reference_files(),
            clock=lambda: self.now,
        )
        self.pipeline = MergePipeline(
            self.vcs,
            self.checker,
            clock=lambda: self.now,
            batch_size=config.batch_size,
            author_alive=self._author_alive,
        )

        # ground truth indexes the scheduler consults
        self._decl_info: dict[str, dict] = {}
        for chunk in self.scenario.chunks:
            for decl in chunk.decls:
                self._decl_info[decl.name] = {
                    "path": chunk.path,
                    "deps": list(decl.deps),
                    "kind": decl.kind,
                    "markers": sorted(decl.markers),
                }
        self._excluded_names = {t.name for t in self.scenario.targets if t.excluded}
        self._excluded_pool = [
            {
                "name": name,
                "path": self._decl_info[name]["path"],
                "deps": self._decl_info[name]["deps"],
            }
            for name in sorted(self._excluded_names)
        ]
        self._hidden_paths = {h.name: h.path for h in self.scenario.helpers}

        # clock
        self.now = 0.0
        self._heap: list[tuple[float, int, Callable[[], None]]] = []
        self._timer_seq = 0

        # sessions and capacity
        self.agents: dict[str, AgentRuntime] = {}
        self.concurrency = config.concurrency
        self._active: set[str] = set()
        self._slot_waiters: deque[tuple[str, Callable[[], None]]] = deque()
        self._live_sessions = 0
        self.peak_active = 0
        self.gate = WorktreeGate(self._schedule, config.worktree_capacity, config.worktree_latency)

        # scheduler
        self.pending: list[Task] = []
        self.in_flight: dict[str, str] = {}
        self._in_flight_tasks: dict[str, Task] = {}
        self._task_seq = 0
        self._tasked_issues: set[str] = set()
        self._ops_enqueued = {kind: 0 for kind in _OPS_RATIOS}
        self._spawn_seq = 0
        self.total_spawned = 0
        self.roles_spawned: dict[str, int] = {}

        # run state
        self._started = False
        self._finished = False
        self.finish_reason = ""
        self.paused = False
        self.draining = False
        self._final_sweep_filed = False
        self.stop_requested = False
        self.resume_count = 0
        self.merges = 0
        self.usage: list[UsageRecord] = []
        self._merge_scheduled = False
        self._pump_timer_live = False
        self._stall_ticks = 0
        self._main_cache: Optional[tuple] = None

        self._commands: deque[tuple[str, dict]] = deque()
        self._cmd_lock = threading.Lock()

    # -- construction helpers ---------------------------------------------------

    def _reference_files(self) -> dict[str, str]:
        files = {"targets.txt": self._targets_text}
        for chunk in self.scenario.chunks:
            files[f"chunks/{chunk.chapter}.json"] = (
                json.dumps(chunk.to_payload(), indent=2, sort_keys=True) + "\n"
            )
        return files

    # -- clock --------------------------------------------------------------------

    def _schedule(self, delay: float, fn: Callable[[], None]) -> None:
        self._timer_seq += 1
        heapq.heappush(self._heap, (self.now + max(0.0, delay), self._timer_seq, fn))

    def _emit(self, kind: str, data: Mapping) -> None:
        self.log.append(kind, self.now, data)

    def _jitter(self, agent_id: str, bound: float) -> float:
        rng = random.Random(f"{self.config.seed}/jit/{self.resume_count}/{agent_id}")
        return rng.uniform(0.0, bound)

    def _turn_delay(self, agent_id: str, turn: int) -> float:
        rng = random.Random(f"{self.config.seed}/lat/{agent_id}/{turn}")
        return rng.uniform(0.5, 1.5) * self.config.turn_latency

    # -- main state cache ----------------------------------------------------------

    def _main_state(self) -> tuple:
        head = self.vcs.main_head()
        if self._main_cache is None or self._main_cache[0] != head:
            files = self.vcs.snapshot(MAIN).files
            report = self.checker.check(files)
            proved = frozenset(d.name for d in report.decls if d.body == BODY_PROVED)
            issues = issues_mod.load_issues(files)
            self._main_cache = (head, files, report, proved, issues)
        return self._main_cache

    # -- lifecycle ------------------------------------------------------------------

    def _start(self) -> None:
        self._started = True
        self._emit(
            "run-start",
            {
                "seed": self.config.seed,
                "config": self.config.to_payload(),
                "corpus_hash": self.scenario.content_hash(),
                "chapters": len(self.scenario.chunks),
                "targets": len(self.scenario.targets),
                "initial_files": dict(self._initial_files),
            },
        )
        for chunk in self.scenario.chunks:
            self._enqueue(
                TASK_SKETCH,
                f"sketch:{chunk.path}",
                {"chunk": chunk.to_payload(), "skip_rate": self.config.sketch_skip_rate},
            )
        if self.config.max_time > 0:
            self._schedule(self.config.max_time - self.now, lambda: self._stop("time-limit"))
        if self.config.checkpoint_interval > 0:
            self._schedule(self.config.checkpoint_interval, self._checkpoint_tick)
        self._schedule(0.0, self._pump)

    def start(self) -> "Run":
        """Emit run-start and seed the schedule without driving the loop."""
        if not self._started:
            self._start()
        return self

    def run(self, until: Optional[float] = None) -> "Run":
        """Drive the event loop; returns when finished, paused dry, or past `until`."""
        if not self._started:
            self._start()
        while not self._finished:
            self._drain_commands()
            if self._finished:
                break
            if not self._heap:
                if self.paused:
                    break  # out of work but frozen; the operator decides
                self._finish("drained" if self.draining else "idle")
                break
            if until is not None and self._heap[0][0] > until:
                self.now = max(self.now, until)  # the window elapsed eventfree
                break
            t, _, fn = heapq.heappop(self._heap)
            self.now = t
            fn()
        return self

    @property
    def finished(self) -> bool:
        return self._finished

    def _finish(self, reason: str) -> None:
        if self._finished:
            return
        self._finished = True
        self.finish_reason = reason
        _, _, report, _, issues = self._main_state()
        statuses = target_status(report, self.scenario.targets)
        self._emit(
            "run-end",
            {
                "reason": reason,
                "targets": status_counts(statuses),
                "decls": report.decl_count,
                "sorries": report.sorry_count,
                "build_ok": report.ok,
                "open_issues": sum(1 for i in issues.values() if i.open),
                "metrics": {
                    "peak_active": self.peak_active,
                    "peak_worktree_creations": self.gate.peak,
                    "staging_builds": self.pipeline.staging_builds,
                    "merges": self.merges,
                    "spawned": self.total_spawned,
                    "concurrency": self.concurrency,
                    "worktree_capacity": self.gate.capacity,
                },
            },
        )

    def _stop(self, reason: str) -> None:
        if self._finished or self.stop_requested:
            return
        self.stop_requested = True
        for rt in list(self.agents.values()):
            if rt.session.outcome is not None:
                continue
            if rt.state == ST_AWAITING_MERGE:
                self._close(rt, OUTCOME_APPROVED, f"run ended ({reason}) before merge")
            else:
                self._close(rt, OUTCOME_ABORTED, f"run ended ({reason})")
        self._slot_waiters.clear()
        self.gate.clear()
        self._finish(reason)

    def _maybe_finish(self) -> None:
        if self._finished or not self._started or self.paused or self.stop_requested:
            return
        if self._live_sessions > 0:
            return
        if self.pipeline.queued_count() > 0:
            self._schedule_merge_pump()
            return
        if self._merge_scheduled:
            return
        if self.config.max_agents and self.total_spawned >= self.config.max_agents:
            self._finish("agent-budget")
            return
        if not self.pending:
            self._finish("drained" if self.draining else "idle")

    # -- operator commands ------------------------------------------------------------

    def submit_command(self, name: str, payload: Optional[Mapping] = None) -> None:
        """Thread-safe: queue an operator command for the run loop."""
        with self._cmd_lock:
            self._commands.append((name, dict(payload or {})))

    def _drain_commands(self) -> None:
        with self._cmd_lock:
            commands = list(self._commands)
            self._commands.clear()
        for name, payload in commands:
            self._apply_command(name, payload)

    def _apply_command(self, name: str, payload: Mapping) -> None:
        if self._finished:
            return
        if name == "pause":
            self.pause()
        elif name == "resume":
            self.resume()
        elif name == "set-concurrency":
            self.set_concurrency(int(payload["value"]))
        elif name == "spawn-status-agent":
            self.spawn_status_agent()
        elif name == "create-issue":
            self.file_issue(
                title=str(payload.get("title", "operator issue")),
                body=str(payload.get("body", "")),
                kind=str(payload.get("kind", issues_mod.KIND_GLOBAL)),
                ref=str(payload.get("ref", "")),
            )
        elif name == "stop":
            self._stop("stopped")
        else:
            raise ValueError(f"unknown operator command {name!r}")

    def pause(self) -> None:
        if self.paused or self._finished:
            return
        self.paused = True
        self._emit("pause", {})

    def resume(self) -> None:
        if not self.paused or self._finished:
            return
        self.paused = False
        self._emit("resume", {})
        self._pump()
        self._maybe_finish()

    def set_concurrency(self, value: int) -> None:
        value = max(1, int(value))
        self.concurrency = value
        self._emit("set-concurrency", {"value": value})
        self._pump()

    def spawn_status_agent(self) -> None:
        self._enqueue(TASK_STATUS, f"status:{self._task_seq}", {})
        self._pump()

    def file_issue(self, title: str, body: str = "", kind: str = "", ref: str = "") -> None:
        self._enqueue(
            TASK_POST_ISSUE,
            f"post-issue:{self._task_seq}",
            {
                "mode": "post-issue",
                "title": title,
                "body": body,
                "kind": kind or issues_mod.KIND_GLOBAL,
                "ref": ref,
            },
        )
        self._pump()

    # -- scheduler ----------------------------------------------------------------

    def _enqueue(self, kind: str, key: str, payload: Mapping) -> Task:
        self._task_seq += 1
        task = Task(kind=kind, key=key, payload=dict(payload), seq=self._task_seq)
        self.pending.append(task)
        return task

    def _has_task(self, key: str) -> bool:
        return key in self.in_flight or any(t.key == key for t in self.pending)

    def _enqueue_ops_deficits(self) -> None:
        for kind, ratio_field in _OPS_RATIOS.items():
            desired = math.floor(getattr(self.config, ratio_field) * self.total_spawned)
            while self._ops_enqueued[kind] < desired:
                self._ops_enqueued[kind] += 1
                payload: dict = {}
                if kind in (TASK_TRIAGE, TASK_PROGRESS):
                    payload = {"targets_text": self._targets_text}
                elif kind == TASK_SCAN:
                    payload = {"file_rate": self.config.scan_file_rate}
                self._enqueue(kind, f"{kind}:{self._task_seq}", payload)

    def _task_complete(self, task: Task) -> bool:
        _, files, report, proved, issues = self._main_state()
        if task.kind == TASK_SKETCH:
            return task.payload["chunk"]["path"] in files
        if task.kind == TASK_PROVE:
            if task.payload["target"] in proved:
                return True
            issue = issues.get(task.payload["issue_id"])
            return issue is not None and not issue.open
        if task.kind == TASK_HELPER:
            return task.payload["helper"] in report.decl_names
        if task.kind == TASK_REFACTOR:
            issue = issues.get(task.payload["issue_id"])
            return issue is not None and not issue.open
        return False

    def _task_eligible(self, task: Task) -> bool:
        _, files, _, proved, _ = self._main_state()
        if task.kind == TASK_SKETCH:
            return all(imp in files for imp in task.payload["chunk"]["imports"])
        if task.kind == TASK_PROVE and self.config.dag_mode:
            return all(dep in proved for dep in task.payload["deps"])
        return True

    def _next_task(self) -> Optional[Task]:
        done: list[Task] = []
        chosen: Optional[Task] = None
        for task in sorted(self.pending, key=lambda t: (_TASK_PRIORITY[t.kind], t.seq)):
            if self._task_complete(task):
                done.append(task)
                continue
            if task.not_before > self.now:
                continue
            if not self._task_eligible(task):
                continue
            chosen = task
            break
        for task in done:
            self.pending.remove(task)
        if chosen is not None:
            self.pending.remove(chosen)
        return chosen

    def _pump(self) -> None:
        if self._finished or self.stop_requested:
            return
        while self._slot_waiters and len(self._active) < self.concurrency:
            agent_id, fn = self._slot_waiters.popleft()
            rt = self.agents.get(agent_id)
            if rt is None or rt.session.outcome is not None:
                continue
            self._grant_slot(agent_id)
            fn()
        if self.paused:
            return
        if not self.draining:
            self._enqueue_ops_deficits()
        spawned = False
        while len(self._active) < self.concurrency:
            if self.config.max_agents and self.total_spawned >= self.config.max_agents:
                break
            task = self._next_task()
            if task is None:
                break
            self._spawn_for_task(task)
            spawned = True
        if spawned:
            self._stall_ticks = 0
        self._ensure_pump_timer()

    def _ensure_pump_timer(self) -> None:
        if self._pump_timer_live or self._finished or self.paused:
            return
        if not self.pending:
            return
        self._pump_timer_live = True
        self._schedule(self.config.pump_interval, self._pump_tick)

    def _pump_tick(self) -> None:
        self._pump_timer_live = False
        if self._finished:
            return
        before = self.total_spawned
        self._pump()
        progressing = (
            self.total_spawned > before
            or self._live_sessions > 0
            or self._merge_scheduled
            or self.paused
            or any(t.not_before > self.now for t in self.pending)
        )
        if progressing:
            self._stall_ticks = 0
        else:
            self._stall_ticks += 1
            if self._stall_ticks >= 3 and self.pending:
                for task in self.pending:
                    self._emit("task-dropped", {"task": task.key, "reason": "stalled"})
                self.pending.clear()
                self._finish("stalled")
                return
        self._maybe_finish()
        self._ensure_pump_timer()

    # -- slots ---------------------------------------------------------------------

    def _grant_slot(self, agent_id: str) -> None:
        self._active.add(agent_id)
        self.peak_active = max(self.peak_active, len(self._active))

    def _acquire_slot(self, agent_id: str, fn: Callable[[], None]) -> None:
        if len(self._active) < self.concurrency:
            self._grant_slot(agent_id)
            fn()
        else:
            rt = self.agents[agent_id]
            rt.state = ST_WAITING_SLOT
            self._slot_waiters.append((agent_id, fn))

    def _release_slot(self, agent_id: str) -> None:
        self._active.discard(agent_id)

    # -- spawning -------------------------------------------------------------------

    def _next_agent_id(self, role: str) -> str:
        agent_id = f"{role}-{self._spawn_seq:05d}"
        self._spawn_seq += 1
        return agent_id

    def _register(self, spec: AgentSpec, task_key: Optional[str], **kw) -> AgentRuntime:
        session = build_session(spec, self.config.seed)
        rt = AgentRuntime(session=session, task_key=task_key, state=ST_PROVISIONING, **kw)
        self.agents[spec.agent_id] = rt
        self._live_sessions += 1
        self.total_spawned += 1
        self.roles_spawned[spec.role] = self.roles_spawned.get(spec.role, 0) + 1
        return rt

    def _agent_task_payload(self, task: Task) -> dict:
        if task.kind == TASK_PROVE:
            target = task.payload["target"]
            info = self._decl_info[target]
            return {
                "issue_id": task.payload["issue_id"],
                "target": target,
                "path": info["path"],
                "deps": list(info["deps"]),
                "hidden": list(self.scenario.hidden_deps.get(target, ())),
                "hidden_paths": dict(self._hidden_paths),
                "rabbit_rate": self.config.rabbit_rate,
                "excluded_pool": [dict(e) for e in self._excluded_pool],
            }
        if task.kind == TASK_HELPER:
            return {
                "mode": "helper",
                "helper": task.payload["helper"],
                "helper_path": task.payload["helper_path"],
                "issue": dict(task.payload["issue"]),
                "bad_tick_rate": self.config.bad_tick_rate,
            }
        if task.kind == TASK_REFACTOR:
            return {
                "mode": "refactor",
                "path": task.payload["path"],
                "issue_id": task.payload["issue_id"],
            }
        return dict(task.payload)

    def _spawn_for_task(self, task: Task) -> None:
        role = _TASK_ROLE[task.kind]
        agent_id = self._next_agent_id(role)
        spec = AgentSpec(agent_id, role, self._agent_task_payload(task))
        rt = self._register(spec, task.key)
        self.in_flight[task.key] = agent_id
        self._in_flight_tasks[task.key] = task
        self._grant_slot(agent_id)
        self._emit("agent-start", {"agent": agent_id, "role": role, "task": task.key})
        jitter = self._jitter(agent_id, self.config.spawn_jitter)
        self._schedule(jitter, lambda: self._request_worktree(agent_id))

    def _request_worktree(self, agent_id: str) -> None:
        # The begin/ready pair makes gate concurrency auditable from the log
        # alone, without trusting the in-memory peak counter.
        self.gate.request(
            lambda: self._worktree_ready(agent_id),
            began=lambda: self._emit("worktree-begin", {"agent": agent_id}),
        )

    def _worktree_ready(self, agent_id: str) -> None:
        self._emit("worktree-ready", {"agent": agent_id})
        self._provisioned(agent_id)

    def _provisioned(self, agent_id: str) -> None:
        rt = self.agents.get(agent_id)
        if rt is None or rt.session.outcome is not None or self._finished:
            return
        branch = rt.session.branch
        if not self.vcs.has_branch(branch):
            self.vcs.create_worktree(branch, owner=agent_id)
        rt.has_worktree = True
        rt.state = ST_RUNNING
        self._schedule_turn(agent_id, self._turn_delay(agent_id, 0))

    def _spawn_reviewers(self, pr: PullRequest) -> None:
        packet = self._review_packet(pr)
        for role, lane in ((ROLE_MATH_REVIEWER, LANE_MATH), (ROLE_ENG_REVIEWER, LANE_ENG)):
            agent_id = self._next_agent_id(role)
            task = {
                "pr": pr.id,
                "branch": pr.branch,
                "lane": lane,
                "packet": packet,
                "request_rate": self.config.review_request_rate,
                "request_always": self.config.review_always_request,
            }
            spec = AgentSpec(agent_id, role, task)
            rt = self._register(spec, None, review_of=pr.id, lane=lane)
            rt.state = ST_WAITING_SLOT
            self.host.grant_review(agent_id, pr.branch)
            self._emit(
                "agent-start",
                {"agent": agent_id, "role": role, "task": f"review:{pr.id}", "lane": lane},
            )
            self._acquire_slot(agent_id, lambda aid=agent_id: self._reviewer_ready(aid))

    def _reviewer_ready(self, agent_id: str) -> None:
        rt = self.agents.get(agent_id)
        if rt is None or rt.session.outcome is not None:
            return
        rt.state = ST_RUNNING
        delay = self._jitter(agent_id, self.config.review_jitter)
        self._schedule_turn(agent_id, delay + self._turn_delay(agent_id, 0))

    # -- turns ----------------------------------------------------------------------

    def _schedule_turn(self, agent_id: str, delay: float) -> None:
        self._schedule(delay, lambda: self._turn(agent_id))

    def _turn(self, agent_id: str) -> None:
        rt = self.agents.get(agent_id)
        if rt is None or self._finished:
            return
        session = rt.session
        if session.outcome is not None or rt.state != ST_RUNNING:
            return
        if session.exhausted:
            self._close(rt, OUTCOME_MAX_ITERATIONS, "turn budget exhausted")
            return
        action = session.step(self.host)
        if isinstance(action, ToolAction):
            self._schedule_turn(agent_id, self._turn_delay(agent_id, session.turns))
        elif isinstance(action, SubmitPR):
            self._handle_submit(rt, action)
        elif isinstance(action, Verdict):
            self._handle_verdict(rt, action)
        elif isinstance(action, ReportBlocked):
            self._handle_blocked(rt, action)
        elif isinstance(action, GiveUp):
            self._close(rt, OUTCOME_NO_PR, action.reason)
        else:  # pragma: no cover - policies only emit the five action kinds
            raise RuntimeError(f"unknown action from {agent_id}: {action!r}")

    # -- PR flow -------------------------------------------------------------------

    def _handle_submit(self, rt: AgentRuntime, action: SubmitPR) -> None:
        session = rt.session
        branch = session.branch
        if branch in self.pipeline.prs and self.pipeline.prs[branch].state == PR_RETURNED:
            pr = self.pipeline.resubmit(branch)
        else:
            pr = self.pipeline.open_pr(
                branch, author=session.agent_id, author_role=session.spec.role, title=action.title
            )
        rt.state = ST_AWAITING_REVIEW
        rt.pr_id = pr.id
        self._emit(
            "pr-opened",
            {
                "pr": pr.id,
                "author": session.agent_id,
                "author_role": session.spec.role,
                "title": action.title,
                "revision": pr.revision,
            },
        )
        self._release_slot(session.agent_id)
        self._spawn_reviewers(pr)
        self._pump()

    def _review_packet(self, pr: PullRequest) -> dict:
        base = self.vcs.commit_object(self.vcs.merge_base(pr.branch)).files
        head = self.vcs.commit_object(self.vcs.head_of(pr.branch)).files
        diff = compute_diff(base, head)
        code_paths = list(diff.code_paths)
        proved_excluded: list[str] = []
        for path in code_paths:
            new_text = head.get(path)
            if new_text is None:
                continue
            old_decls = {d.name: d for d in parse_toy_file(path, base.get(path, "")).decls}
            for decl in parse_toy_file(path, new_text).decls:
                if decl.name not in self._excluded_names or decl.body != BODY_PROVED:
                    continue
                old = old_decls.get(decl.name)
                if old is None or old.body != BODY_PROVED:
                    proved_excluded.append(decl.name)
        return {
            "revision": pr.revision,
            "added": diff.added_lines,
            "removed": diff.removed_lines,
            "code_files": len(code_paths),
            "coord_files": len(diff.coordination_paths),
            "code_paths": code_paths,
            "proved_excluded": sorted(proved_excluded),
            "empty": diff.is_empty(),
        }

    def _handle_verdict(self, rt: AgentRuntime, action: Verdict) -> None:
        agent_id = rt.session.agent_id
        pr_id = rt.review_of or ""
        pr = self.pipeline.pr(pr_id)
        self.host.revoke_review(agent_id, pr.branch)
        self._emit(
            "pr-verdict",
            {
                "pr": pr_id,
                "lane": rt.lane,
                "decision": action.decision,
                "reason": action.reason,
                "reviewer": agent_id,
            },
        )
        resolution = None
        if pr.state == PR_UNDER_REVIEW:
            resolution = self.pipeline.record_verdict(
                pr_id, rt.lane or "", action.decision, action.reason, reviewer=agent_id
            )
        self._close(rt, OUTCOME_NO_PR, f"reviewed {pr_id}")
        if resolution is not None:
            self._on_review_resolved(pr_id, resolution)

    def _on_review_resolved(self, pr_id: str, state: str) -> None:
        pr = self.pipeline.pr(pr_id)
        if state == PR_SUPPRESSED:
            self._emit("pr-suppressed", {"pr": pr_id, "reason": pr.suppress_reason})
            author_rt = self.agents.get(pr.author)
            if author_rt is not None and author_rt.session.outcome is None:
                self._close(author_rt, OUTCOME_NO_PR, f"pr suppressed: {pr.suppress_reason}")
        elif state == PR_RETURNED:
            reason = pr.feedback[-1] if pr.feedback else "changes requested"
            self._emit("pr-returned", {"pr": pr_id, "reason": reason, "revision": pr.revision})
            self._author_returned(pr, reason)
        elif state == PR_QUEUED:
            self._emit("pr-queued", {"pr": pr_id, "depth": self.pipeline.queued_count()})
            author_rt = self.agents.get(pr.author)
            if author_rt is not None and author_rt.session.outcome is None:
                author_rt.state = ST_AWAITING_MERGE
            self._schedule_merge_pump()

    def _author_returned(self, pr: PullRequest, reason: str) -> None:
        author_rt = self.agents.get(pr.author)
        if author_rt is None or author_rt.session.outcome is not None:
            self.pipeline.abandon(pr.id, "author gone")
            return
        if pr.revision >= self.config.revision_cap:
            self.pipeline.abandon(pr.id, "revision budget exhausted")
            self._emit("pr-suppressed", {"pr": pr.id, "reason": "revision budget exhausted"})
            self._close(author_rt, OUTCOME_MAX_REVISIONS, reason)
            return
        session = author_rt.session
        session.revisions = pr.revision
        session.feedback(reason)
        agent_id = session.agent_id
        self._acquire_slot(agent_id, lambda: self._author_resumed(agent_id))

    def _author_resumed(self, agent_id: str) -> None:
        rt = self.agents.get(agent_id)
        if rt is None or rt.session.outcome is not None:
            return
        rt.state = ST_RUNNING
        self._schedule_turn(agent_id, self._turn_delay(agent_id, rt.session.turns))

    def _handle_blocked(self, rt: AgentRuntime, action: ReportBlocked) -> None:
        helper = action.helper
        key = f"{TASK_HELPER}:{helper}"
        _, _, report, _, _ = self._main_state()
        needed = helper not in report.decl_names and not self._has_task(key)
        if needed:
            self._enqueue(
                TASK_HELPER,
                key,
                {
                    "helper": helper,
                    "helper_path": action.helper_path,
                    "issue": dict(action.issue),
                },
            )
        self._emit(
            "agent-blocked",
            {
                "agent": rt.session.agent_id,
                "helper": helper,
                "issue": action.issue.get("id", ""),
                "followup": needed,
            },
        )
        self._close(rt, OUTCOME_NO_PR_BLOCKED, action.reason)

    # -- merge queue ----------------------------------------------------------------

    def _author_alive(self, author: str) -> bool:
        rt = self.agents.get(author)
        return rt is not None and rt.session.outcome is None

    def _schedule_merge_pump(self) -> None:
        if self._merge_scheduled or self._finished:
            return
        self._merge_scheduled = True
        self._schedule(self.config.merge_latency, self._merge_pump)

    def _merge_pump(self) -> None:
        self._merge_scheduled = False
        if self._finished:
            return
        events = self.pipeline.queue_step()
        merged: list[dict] = []
        returned: list[dict] = []
        for event in events:
            kind = event["kind"]
            data = {k: v for k, v in event.items() if k != "kind"}
            self._emit(kind, data)
            if kind == "pr-merged":
                merged.append(data)
            elif kind == "pr-returned":
                returned.append(data)
        if merged:
            self.merges += len(merged)
            # Follow-on work must hit the queue before author sessions close,
            # or the last close could see an empty scheduler and end the run.
            self._after_merges()
        for data in merged:
            author_rt = self.agents.get(data["author"])
            if author_rt is not None and author_rt.session.outcome is None:
                self._close(author_rt, OUTCOME_MERGED, f"merged as {data['commit'][:12]}")
        for data in returned:
            self._author_returned(self.pipeline.pr(data["pr"]), data["reason"])
        if self.pipeline.queued_count() > 0:
            self._schedule_merge_pump()
        self._pump()
        self._maybe_finish()

    def _after_merges(self) -> None:
        self._stall_ticks = 0
        _, files, report, _, issues = self._main_state()
        for issue_id in sorted(issues):
            issue = issues[issue_id]
            if issue.id in self._tasked_issues or not issue.open:
                continue
            self._tasked_issues.add(issue.id)
            if issue.kind == issues_mod.KIND_PROVING_TASK:
                target = issue.ref
                if target in self._decl_info and target not in self._excluded_names:
                    self._enqueue(
                        TASK_PROVE,
                        f"prove:{issue.id}",
                        {"issue_id": issue.id, "target": target,
                         "deps": list(self._decl_info[target]["deps"])},
                    )
            elif issue.kind == issues_mod.KIND_REFACTOR:
                path = issue.title.removeprefix("tidy ").strip()
                if path in files:
                    self._enqueue(
                        TASK_REFACTOR,
                        f"refactor:{issue.id}",
                        {"issue_id": issue.id, "path": path},
                    )
        statuses = target_status(report, self.scenario.targets)
        if not self.draining and statuses and all(
            s in (STATUS_PROVED, STATUS_EXCLUDED) for s in statuses.values()
        ):
            self.draining = True
            self._emit("drain", {"targets": status_counts(statuses)})
            self.pending = [t for t in self.pending if t.kind == TASK_HELPER]
            if not self._final_sweep_filed and any(i.open for i in issues.values()):
                self._final_sweep_filed = True
                self._enqueue(
                    TASK_TRIAGE, "triage:final", {"targets_text": self._targets_text}
                )

    # -- session teardown -------------------------------------------------------------

    def _close(self, rt: AgentRuntime, outcome: str, reason: str) -> None:
        session = rt.session
        if session.outcome is not None:
            return
        session.finish(outcome)
        rt.state = ST_DONE
        rt.reason = reason
        self._live_sessions -= 1
        agent_id = session.agent_id
        self._emit(
            "agent-end",
            {
                "agent": agent_id,
                "role": session.spec.role,
                "outcome": outcome,
                "reason": reason,
                "tokens_in": session.tokens_in,
                "tokens_out": session.tokens_out,
                "turns": session.turns,
                "task": rt.task_key or "",
            },
        )
        self.usage.append(
            UsageRecord(
                agent_id=agent_id,
                role=session.spec.role,
                outcome=outcome,
                tokens_in=session.tokens_in,
                tokens_out=session.tokens_out,
                turns=session.turns,
            )
        )
        if rt.review_of is not None:
            try:
                self.host.revoke_review(agent_id, self.pipeline.pr(rt.review_of).branch)
            except KeyError:  # pragma: no cover - PR records are never deleted
                pass
        # Aborted and approved-but-unmerged sessions keep their branch: a
        # resumed run may still land (or fail) the queued work honestly.
        keep_branch = outcome in (OUTCOME_ABORTED, OUTCOME_APPROVED)
        if rt.has_worktree and not keep_branch:
            self.vcs.drop_worktree(session.branch, delete_branch=True)
            rt.has_worktree = False
        self._release_slot(agent_id)
        if rt.task_key is not None:
            task = self._in_flight_tasks.pop(rt.task_key, None)
            self.in_flight.pop(rt.task_key, None)
            if task is not None and task.kind in _ONE_SHOT_TASKS and outcome != OUTCOME_ABORTED:
                # Periodic duties are staffed by the ratio counters; a finished
                # sweep is done even when it found nothing to act on.
                task = None
            if task is not None and outcome == OUTCOME_MERGED:
                # Landing the change is the task, whatever its kind.
                task = None
            if task is not None and not self._task_complete(task):
                if outcome in (OUTCOME_ABORTED, OUTCOME_APPROVED):
                    self.pending.append(task)
                else:
                    task.attempts += 1
                    if task.attempts > self.config.task_retry_cap:
                        self._emit(
                            "task-dropped", {"task": task.key, "reason": "retry budget exhausted"}
                        )
                    else:
                        backoff = min(
                            self.config.backoff_base * (2 ** (task.attempts - 1)),
                            self.config.backoff_cap,
                        )
                        task.not_before = self.now + backoff
                        self.pending.append(task)
        if not self.stop_requested:
            self._pump()
            self._maybe_finish()

    # -- checkpointing ----------------------------------------------------------------

    def checkpoint_payload(self) -> dict:
        sessions = []
        for rt in self.agents.values():
            if rt.session.outcome is not None:
                continue
            sessions.append(
                {
                    "session": rt.session.to_payload(),
                    "state": rt.state,
                    "task_key": rt.task_key,
                    "pr": rt.pr_id,
                    "review_of": rt.review_of,
                    "lane": rt.lane,
                    "has_worktree": rt.has_worktree,
                }
            )
        payload = {
            "version": 1,
            "time": self.now,
            "resume_count": self.resume_count,
            "event_seq": self.log.next_seq,
            "config": self.config.to_payload(),
            "scenario": self.scenario.to_payload(),
            "paused": self.paused,
            "draining": self.draining,
            "final_sweep_filed": self._final_sweep_filed,
            "concurrency": self.concurrency,
            "spawn_seq": self._spawn_seq,
            "task_seq": self._task_seq,
            "total_spawned": self.total_spawned,
            "roles_spawned": dict(sorted(self.roles_spawned.items())),
            "ops_enqueued": dict(sorted(self._ops_enqueued.items())),
            "merges": self.merges,
            "peak_active": self.peak_active,
            "peak_worktree_creations": self.gate.peak,
            "tasked_issues": sorted(self._tasked_issues),
            "pending": [t.to_payload() for t in sorted(self.pending, key=lambda t: t.seq)],
            "in_flight": {
                key: self._in_flight_tasks[key].to_payload()
                for key in sorted(self._in_flight_tasks)
            },
            "vcs": self.vcs.to_payload(),
            "pipeline": self.pipeline.to_payload(),
            "sessions": sessions,
        }
        # Detach from live state: nested task/session structures are shared
        # with the scheduler and would otherwise mutate under the caller.
        return json.loads(json.dumps(payload))

    def checkpoint_hash(self, payload: Optional[dict] = None) -> str:
        payload = payload if payload is not None else self.checkpoint_payload()
        canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]

    def _checkpoint_tick(self) -> None:
        if self._finished:
            return
        payload = self.checkpoint_payload()
        self._emit("checkpoint", {"hash": self.checkpoint_hash(payload)})
        if self.checkpoint_sink is not None:
            self.checkpoint_sink(payload)
        self._schedule(self.config.checkpoint_interval, self._checkpoint_tick)

    @classmethod
    def from_checkpoint(
        cls,
        payload: Mapping,
        log: Optional[EventLog] = None,
        checkpoint_sink: Optional[Callable[[dict], None]] = None,
        resume_sessions: bool = True,
    ) -> "Run":
        if payload.get("version") != 1:
            raise ValueError("unsupported checkpoint version")
        config = RunConfig.from_payload(payload["config"])
        scenario = Scenario.from_payload(payload["scenario"])
        run = cls(
            config,
            scenario=scenario,
            log=log if log is not None else EventLog(start_seq=int(payload["event_seq"])),
            checkpoint_sink=checkpoint_sink,
        )
        run.vcs = InMemoryVCS.from_payload(payload["vcs"])
        run.pipeline = MergePipeline(
            run.vcs,
            run.checker,
            clock=lambda: run.now,
            batch_size=config.batch_size,
            author_alive=run._author_alive,
        )
        run.pipeline.restore_payload(payload["pipeline"])
        run.host = ToolHost(
            run.vcs,
            run.checker,
            targets=run.scenario.targets,
            reference=run._reference_files(),
            clock=lambda: run.now,
        )

        run.now = float(payload["time"])
        run.resume_count = int(payload["resume_count"]) + 1
        run.paused = bool(payload["paused"])
        run.draining = bool(payload["draining"])
        run._final_sweep_filed = bool(payload["final_sweep_filed"])
        run.concurrency = int(payload["concurrency"])
        run._spawn_seq = int(payload["spawn_seq"])
        run._task_seq = int(payload["task_seq"])
        run.total_spawned = int(payload["total_spawned"])
        run.roles_spawned = dict(payload["roles_spawned"])
        run._ops_enqueued.update(payload["ops_enqueued"])
        run.merges = int(payload["merges"])
        run.peak_active = int(payload["peak_active"])
        run.gate.peak = int(payload["peak_worktree_creations"])
        run._tasked_issues = set(payload["tasked_issues"])
        run.pending = [Task.from_payload(t) for t in payload["pending"]]

        run._started = True
        run._emit(
            "run-resume",
            {
                "resume_count": run.resume_count,
                "sessions": len(payload["sessions"]),
                "resume_sessions": resume_sessions,
            },
        )

        for key, task_data in payload["in_flight"].items():
            task = Task.from_payload(task_data)
            if resume_sessions:
                run._in_flight_tasks[key] = task
            else:
                run.pending.append(task)

        for saved in payload["sessions"]:
            session = Session.from_payload(saved["session"])
            rt = AgentRuntime(
                session=session,
                task_key=saved["task_key"],
                state=saved["state"],
                has_worktree=bool(saved["has_worktree"]),
                pr_id=saved["pr"],
                review_of=saved["review_of"],
                lane=saved["lane"],
            )
            run.agents[session.agent_id] = rt
            run._live_sessions += 1
            if resume_sessions and rt.task_key is not None and rt.task_key in run._in_flight_tasks:
                run.in_flight[rt.task_key] = session.agent_id
            if not resume_sessions:
                run._close(rt, OUTCOME_ABORTED, "session not resumed")
                continue
            if rt.review_of is not None:
                run.host.grant_review(session.agent_id, run.pipeline.pr(rt.review_of).branch)
            if rt.state in (ST_PROVISIONING, ST_WAITING_SLOT, ST_RUNNING):
                rt.state = ST_PROVISIONING
                agent_id = session.agent_id
                if rt.review_of is not None:
                    run._acquire_slot(agent_id, lambda aid=agent_id: run._reviewer_ready(aid))
                else:
                    run._acquire_slot(
                        agent_id, lambda aid=agent_id: run._reprovision(aid)
                    )
            # awaiting-review sessions wake up when their reviewers finish;
            # awaiting-merge sessions wake up when the queue lands them.

        if run.pipeline.queued_count() > 0:
            run._schedule_merge_pump()
        if config.max_time > 0 and config.max_time > run.now:
            run._schedule(config.max_time - run.now, lambda: run._stop("time-limit"))
        if config.checkpoint_interval > 0:
            run._schedule(config.checkpoint_interval, run._checkpoint_tick)
        run._schedule(0.0, run._pump)
        run._schedule(0.0, run._maybe_finish)
        return run

    def _reprovision(self, agent_id: str) -> None:
        """Resumed sessions re-materialize their worktree through the gate."""
        rt = self.agents.get(agent_id)
        if rt is None or rt.session.outcome is not None:
            return
        rt.state = ST_PROVISIONING
        jitter = self._jitter(agent_id, self.config.spawn_jitter)
        self._schedule(jitter, lambda: self._request_worktree(agent_id))

    # -- views -------------------------------------------------------------------

    def state_summary(self) -> dict:
        _, _, report, _, issues = self._main_state()
        statuses = target_status(report, self.scenario.targets)
        return {
            "time": self.now,
            "seed": self.config.seed,
            "corpus_hash": self.scenario.content_hash(),
            "started": self._started,
            "finished": self._finished,
            "reason": self.finish_reason,
            "paused": self.paused,
            "draining": self.draining,
            "concurrency": self.concurrency,
            "worktree_capacity": self.gate.capacity,
            "active": len(self._active),
            "live_sessions": self._live_sessions,
            "spawned": self.total_spawned,
            "pending_tasks": len(self.pending),
            "open_prs": self.pipeline.open_count(),
            "queue_depth": self.pipeline.queued_count(),
            "merges": self.merges,
            "staging_builds": self.pipeline.staging_builds,
            "decls": report.decl_count,
            "sorries": report.sorry_count,
            "build_ok": report.ok,
            "targets": status_counts(statuses),
            "open_issues": sum(1 for i in issues.values() if i.open),
            "peak_active": self.peak_active,
            "peak_worktree_creations": self.gate.peak,
        }

    def agent_rows(self, live_only: bool = False) -> list[dict]:
        rows = []
        for agent_id, rt in self.agents.items():
            if live_only and rt.session.outcome is not None:
                continue
            session = rt.session
            rows.append(
                {
                    "agent": agent_id,
                    "role": session.spec.role,
                    "state": rt.state,
                    "outcome": session.outcome or "",
                    "reason": rt.reason,
                    "turns": session.turns,
                    "tokens_in": session.tokens_in,
                    "tokens_out": session.tokens_out,
                    "task": rt.task_key or (f"review:{rt.review_of}" if rt.review_of else ""),
                    "pr": rt.pr_id or "",
                }
            )
        return rows

    def queue_rows(self) -> list[dict]:
        order = {pr_id: i for i, pr_id in enumerate(self.pipeline.queue)}
        rows = []
        for pr_id in sorted(self.pipeline.prs):
            pr = self.pipeline.prs[pr_id]
            rows.append(
                {
                    "pr": pr.id,
                    "author": pr.author,
                    "author_role": pr.author_role,
                    "title": pr.title,
                    "state": pr.state,
                    "revision": pr.revision,
                    "merge_attempts": pr.merge_attempts,
                    "queue_position": order.get(pr_id, -1),
                    "opened_at": pr.opened_at,
                }
            )
        return rows

    def issue_rows(self) -> list[dict]:
        _, _, _, _, issues = self._main_state()
        rows = []
        for issue_id in sorted(issues):
            issue = issues[issue_id]
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

    def target_rows(self) -> list[dict]:
        _, _, report, _, _ = self._main_state()
        statuses = target_status(report, self.scenario.targets)
        return [
            {"name": t.name, "chapter": t.chapter, "kind": t.kind, "status": statuses[t.name]}
            for t in self.scenario.targets
        ]

    def report(self):
        from .control import RunReport

        return RunReport.from_events(self.log.records())
