"""HTTP control surface.

Serves either a live run (driven on a background thread and throttled to a
wall-clock pace) or a previously recorded event log, behind one small JSON
API.  The dashboard talks only to these routes:

    GET  /api/state            scheduler and repo summary
    GET  /api/agents[?live=1]  per-session rows
    GET  /api/queue            every pull request, with queue positions
    GET  /api/issues           tracker entries on the shared branch
    GET  /api/targets          per-declaration proof status
    GET  /api/report           end-of-run tallies derived from the log
    GET  /api/metrics/series   cumulative counters for charting
    GET  /api/events           raw log records (?since=SEQ&limit=N)
    GET  /api/stream           the same records as server-sent events
    POST /api/commands/NAME    operator controls on a live run

Command routes return 409 against a recorded log, which is read-only.
"""

from __future__ import annotations

import json
import threading
import time as wall
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Mapping, Optional, Sequence
from urllib.parse import parse_qs, urlparse

from . import accounting
from .control import RunReport, encode_record, read_events, usage_records
from .orchestrator import Run

__all__ = [
    "ApiServer",
    "LogSource",
    "ReadOnlySourceError",
    "RunDriver",
    "metrics_series",
]

COMMANDS = ("pause", "resume", "set-concurrency", "spawn-status-agent", "create-issue", "stop")


class ReadOnlySourceError(Exception):
    """A mutating command was sent to a recorded log."""


def _session_cost_micro(tokens_in: int, tokens_out: int, turns: int) -> tuple[int, int]:
    """(nocache, cached) micro-dollars for one finished session."""
    output = accounting.to_micro(accounting.DEFAULT_PRICES.per_token_out * tokens_out)
    if turns <= 0 or tokens_in <= 0:
        return output, output
    estimate = accounting.estimate_run_cost(1, turns, tokens_in, tokens_out)
    return estimate.total_nocache_micro, estimate.total_cache_micro


def metrics_series(events: Sequence[Mapping]) -> list[dict]:
    """Cumulative counters after every event that moves one of them.

    Costs are the sum of per-session estimates, in integer micro-dollars,
    so chart values can be compared exactly against the accounting model.
    """
    points: list[dict] = []
    pr_state: dict[str, str] = {}
    active = open_prs = queue_depth = merges = 0
    tokens_in = tokens_out = 0
    cost_nocache = cost_cached = 0
    for record in events:
        kind = record["kind"]
        data = record["data"]
        if kind == "agent-start":
            active += 1
        elif kind == "agent-end":
            active -= 1
            tokens_in += int(data["tokens_in"])
            tokens_out += int(data["tokens_out"])
            nocache, cached = _session_cost_micro(
                int(data["tokens_in"]), int(data["tokens_out"]), int(data["turns"])
            )
            cost_nocache += nocache
            cost_cached += cached
        elif kind == "pr-opened":
            pr = data["pr"]
            if pr_state.get(pr) != "open":
                open_prs += 1
            pr_state[pr] = "open"
        elif kind == "pr-queued":
            pr_state[data["pr"]] = "queued"
            queue_depth += 1
        elif kind == "pr-returned":
            if pr_state.get(data["pr"]) == "queued":
                queue_depth -= 1
            pr_state[data["pr"]] = "open"
        elif kind in ("pr-merged", "pr-failed-merge", "pr-suppressed"):
            pr = data["pr"]
            if pr_state.get(pr) == "queued":
                queue_depth -= 1
            if pr_state.get(pr) in ("open", "queued"):
                open_prs -= 1
            pr_state[pr] = "done"
            if kind == "pr-merged":
                merges += 1
        else:
            continue
        points.append(
            {
                "t": record["t"],
                "active": active,
                "open_prs": open_prs,
                "queue_depth": queue_depth,
                "merges": merges,
                "tokens_in": tokens_in,
                "tokens_out": tokens_out,
                "cost_nocache_micro": cost_nocache,
                "cost_cached_micro": cost_cached,
            }
        )
    return points


class RunDriver:
    """Owns a live run: advances it on a thread, serialises all access."""

    def __init__(self, run: Run, pace: float = 0.0, chunk: float = 5.0) -> None:
        if pace < 0:
            raise ValueError("pace must be >= 0 (simulated seconds per wall second)")
        self.run = run
        self.pace = pace
        self.chunk = chunk
        self._lock = threading.RLock()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    # - lifecycle -

    def start(self) -> "RunDriver":
        with self._lock:
            self.run.start()
        self._thread = threading.Thread(target=self._loop, name="run-driver", daemon=True)
        self._thread.start()
        return self

    def _loop(self) -> None:
        while not self._stop.is_set():
            with self._lock:
                if self.run.finished:
                    break
                before = self.run.now
                self.run.run(until=before + self.chunk)
                advanced = self.run.now > before or self.run.finished
            if self.pace > 0:
                wall.sleep(self.chunk / self.pace)
            elif not advanced:
                wall.sleep(0.02)  # paused or waiting on operator input
            else:
                wall.sleep(0)  # let request threads take the lock

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def join(self, timeout: Optional[float] = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)

    # - views (all under the run lock) -

    @property
    def finished(self) -> bool:
        with self._lock:
            return self.run.finished

    def state(self) -> dict:
        with self._lock:
            summary = self.run.state_summary()
            summary["mode"] = "live"
            return summary

    def agents(self, live_only: bool = False) -> list[dict]:
        with self._lock:
            return self.run.agent_rows(live_only=live_only)

    def queue(self) -> list[dict]:
        with self._lock:
            return self.run.queue_rows()

    def issues(self) -> list[dict]:
        with self._lock:
            return self.run.issue_rows()

    def targets(self) -> list[dict]:
        with self._lock:
            return self.run.target_rows()

    def events(self, since: int = 0, limit: int = 0) -> list[dict]:
        with self._lock:
            records = self.run.log.records()
        rows = [r for r in records if r["seq"] >= since]
        return rows[:limit] if limit else rows

    def report_payload(self) -> dict:
        with self._lock:
            records = self.run.log.records()
        return RunReport.from_events(records).to_payload()

    def metrics(self) -> list[dict]:
        with self._lock:
            records = self.run.log.records()
        return metrics_series(records)

    def submit(self, name: str, payload: Mapping) -> None:
        if name not in COMMANDS:
            raise ValueError(f"unknown command {name!r}")
        self.run.submit_command(name, payload)


class LogSource:
    """Read-only view over a finished run's event log."""

    def __init__(self, records: Sequence[Mapping]) -> None:
        self._records = [dict(r) for r in records]
        self._report = RunReport.from_events(self._records)
        self._usage = usage_records(self._records)

    @classmethod
    def from_path(cls, path) -> "LogSource":
        return cls(read_events(path))

    @property
    def finished(self) -> bool:
        return True

    def state(self) -> dict:
        report = self._report
        start = self._records[0]["data"] if self._records else {}
        config = start.get("config", {})
        return {
            "mode": "replay",
            "time": report.duration,
            "seed": report.seed,
            "corpus_hash": report.corpus_hash,
            "started": True,
            "finished": bool(report.reason),
            "reason": report.reason,
            "paused": False,
            "draining": False,
            "concurrency": config.get("concurrency", 0),
            "worktree_capacity": config.get("worktree_capacity", 0),
            "active": 0,
            "live_sessions": report.agents_spawned - report.agents_finished,
            "spawned": report.agents_spawned,
            "pending_tasks": 0,
            "open_prs": report.prs_opened - report.merges - report.suppressed
            - report.failed_merges,
            "queue_depth": 0,
            "merges": report.merges,
            "staging_builds": report.staging_builds,
            "decls": report.final_decls,
            "sorries": report.final_sorries,
            "build_ok": True,
            "targets": dict(report.target_counts),
            "open_issues": report.open_issues,
            "peak_active": report.metrics.get("peak_active", 0),
            "peak_worktree_creations": report.metrics.get("peak_worktree_creations", 0),
        }

    def agents(self, live_only: bool = False) -> list[dict]:
        if live_only:
            return []
        return [
            {
                "agent": u.agent_id,
                "role": u.role,
                "state": "done",
                "outcome": u.outcome,
                "reason": "",
                "turns": u.turns,
                "tokens_in": u.tokens_in,
                "tokens_out": u.tokens_out,
                "task": "",
                "pr": "",
            }
            for u in self._usage
        ]

    def queue(self) -> list[dict]:
        rows: dict[str, dict] = {}
        for record in self._records:
            kind = record["kind"]
            data = record["data"]
            if kind == "pr-opened":
                rows[data["pr"]] = {
                    "pr": data["pr"],
                    "author": data["author"],
                    "author_role": data["author_role"],
                    "title": data["title"],
                    "state": "under-review",
                    "revision": data.get("revision", 0),
                    "merge_attempts": 0,
                    "queue_position": -1,
                    "opened_at": record["t"],
                }
            elif kind == "pr-returned" and data["pr"] in rows:
                rows[data["pr"]]["state"] = "returned"
                rows[data["pr"]]["revision"] = data.get("revision", 0)
            elif kind == "pr-queued" and data["pr"] in rows:
                rows[data["pr"]]["state"] = "queued"
            elif kind == "pr-suppressed" and data["pr"] in rows:
                rows[data["pr"]]["state"] = "suppressed"
            elif kind == "pr-merged" and data["pr"] in rows:
                rows[data["pr"]]["state"] = "merged"
            elif kind == "pr-failed-merge" and data["pr"] in rows:
                rows[data["pr"]]["state"] = "failed-merge"
        return [rows[pr] for pr in sorted(rows)]

    def issues(self) -> list[dict]:
        from .control import replay_issue_rows

        return replay_issue_rows(self._records)

    def targets(self) -> list[dict]:
        from .checker import check, parse_target_list, target_status
        from .control import replay_files

        files = replay_files(self._records)
        targets = parse_target_list(files.get("targets.txt", ""))
        statuses = target_status(check(files), targets)
        return [
            {"name": t.name, "chapter": t.chapter, "kind": t.kind, "status": statuses[t.name]}
            for t in targets
        ]

    def events(self, since: int = 0, limit: int = 0) -> list[dict]:
        rows = [r for r in self._records if r["seq"] >= since]
        return rows[:limit] if limit else rows

    def report_payload(self) -> dict:
        return self._report.to_payload()

    def metrics(self) -> list[dict]:
        return metrics_series(self._records)

    def submit(self, name: str, payload: Mapping) -> None:
        raise ReadOnlySourceError("recorded logs do not accept commands")


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "swarmtrunk"

    # silence request logging; the event log is the record of note
    def log_message(self, fmt, *args):  # noqa: D102
        pass

    @property
    def source(self):
        return self.server.source  # type: ignore[attr-defined]

    def _send_json(self, payload, status: int = 200) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_OPTIONS(self) -> None:  # CORS preflight for dashboard dev servers
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self) -> None:
        url = urlparse(self.path)
        query = parse_qs(url.query)
        route = url.path.rstrip("/")
        try:
            if route == "/api/state":
                self._send_json(self.source.state())
            elif route == "/api/agents":
                live = query.get("live", ["0"])[0] in ("1", "true")
                self._send_json(self.source.agents(live_only=live))
            elif route == "/api/queue":
                self._send_json(self.source.queue())
            elif route == "/api/issues":
                self._send_json(self.source.issues())
            elif route == "/api/targets":
                self._send_json(self.source.targets())
            elif route == "/api/report":
                self._send_json(self.source.report_payload())
            elif route == "/api/metrics/series":
                self._send_json(self.source.metrics())
            elif route == "/api/events":
                since = int(query.get("since", ["0"])[0])
                limit = int(query.get("limit", ["0"])[0])
                self._send_json(self.source.events(since=since, limit=limit))
            elif route == "/api/stream":
                self._stream(int(query.get("since", ["0"])[0]))
            else:
                self._send_json({"error": f"no such route: {url.path}"}, status=404)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def do_POST(self) -> None:
        url = urlparse(self.path)
        prefix = "/api/commands/"
        if not url.path.startswith(prefix):
            self._send_json({"error": f"no such route: {url.path}"}, status=404)
            return
        name = url.path[len(prefix):].rstrip("/")
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            payload = json.loads(raw) if raw else {}
        except json.JSONDecodeError:
            self._send_json({"error": "body must be JSON"}, status=400)
            return
        if not isinstance(payload, dict):
            self._send_json({"error": "body must be a JSON object"}, status=400)
            return
        try:
            self.source.submit(name, payload)
        except ReadOnlySourceError as exc:
            self._send_json({"error": str(exc)}, status=409)
            return
        except (KeyError, ValueError) as exc:
            self._send_json({"error": str(exc)}, status=400)
            return
        self._send_json({"ok": True, "command": name}, status=202)

    def _stream(self, since: int) -> None:
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        cursor = since
        idle = 0.0
        while not self.server.closing.is_set():  # type: ignore[attr-defined]
            batch = self.source.events(since=cursor, limit=500)
            for record in batch:
                cursor = record["seq"] + 1
                chunk = (
                    f"id: {record['seq']}\n"
                    f"event: {record['kind']}\n"
                    f"data: {encode_record(record)}\n\n"
                )
                self.wfile.write(chunk.encode("utf-8"))
            if batch:
                self.wfile.flush()
                idle = 0.0
                continue
            if self.source.finished:
                self.wfile.write(b"event: eof\ndata: {}\n\n")
                self.wfile.flush()
                return
            wall.sleep(0.05)
            idle += 0.05
            if idle >= 2.0:  # keep intermediaries from dropping the socket
                self.wfile.write(b": ping\n\n")
                self.wfile.flush()
                idle = 0.0


class ApiServer:
    """Threaded HTTP server over a run driver or a recorded log."""

    def __init__(self, source, host: str = "127.0.0.1", port: int = 0) -> None:
        self.source = source
        self.httpd = ThreadingHTTPServer((host, port), _Handler)
        self.httpd.daemon_threads = True
        self.httpd.source = source  # type: ignore[attr-defined]
        self.httpd.closing = threading.Event()  # type: ignore[attr-defined]
        self._thread: Optional[threading.Thread] = None
        self._serving = False

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.httpd.server_address[:2]
        return str(host), int(port)

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> "ApiServer":
        self._serving = True
        self._thread = threading.Thread(
            target=self.httpd.serve_forever, name="api-server", daemon=True
        )
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._serving = True
        self.httpd.serve_forever()

    def stop(self) -> None:
        self.httpd.closing.set()  # type: ignore[attr-defined]
        if self._serving:
            # shutdown() parks until the serve loop acknowledges, so it must
            # only run when a loop was actually started.
            self.httpd.shutdown()
            self._serving = False
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
