"""HTTP control surface tests.

A recorded log must be fully browsable and strictly read-only; a live run
must accept operator commands and keep serving consistent views while it
advances.  Everything below talks to a real server over a loopback socket.
"""

from __future__ import annotations

import json
import time
import urllib.error
import urllib.request

import pytest

from swarmtrunk.api import ApiServer, LogSource, RunDriver, metrics_series
from swarmtrunk.control import EventLog, RunReport
from swarmtrunk.orchestrator import Run, RunConfig

CONFIG = dict(
    seed="api-run",
    corpus_seed=7,
    chapters=2,
    decls_per_chapter=4,
    thm_ratio=0.7,
    excluded=1,
    hidden_helpers=1,
    duplicate_pairs=0,
    concurrency=4,
    worktree_capacity=3,
    batch_size=2,
    sketch_skip_rate=0.0,
    rabbit_rate=0.0,
    bad_tick_rate=0.0,
    review_request_rate=0.0,
    triage_ratio=0.0,
    scan_ratio=0.0,
    progress_ratio=0.0,
)


def _get(url: str):
    with urllib.request.urlopen(url, timeout=10) as resp:
        return resp.status, json.loads(resp.read())


def _post(url: str, payload=None):
    body = json.dumps(payload or {}).encode()
    request = urllib.request.Request(
        url, data=body, headers={"Content-Type": "application/json"}, method="POST"
    )
    try:
        with urllib.request.urlopen(request, timeout=10) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


def _wait_for(predicate, timeout=30.0, interval=0.05):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        value = predicate()
        if value:
            return value
        time.sleep(interval)
    raise AssertionError("condition not reached in time")


@pytest.fixture(scope="module")
def finished_records():
    log = EventLog()
    Run(RunConfig(**CONFIG), log=log).run()
    return log.records()


@pytest.fixture(scope="module")
def replay_server(finished_records):
    server = ApiServer(LogSource(finished_records)).start()
    yield server
    server.stop()


# -- recorded logs -------------------------------------------------------------------


def test_replay_state_reflects_the_finished_run(replay_server, finished_records):
    status, state = _get(replay_server.url + "/api/state")
    report = RunReport.from_events(finished_records)
    assert status == 200
    assert state["mode"] == "replay"
    assert state["finished"] is True
    assert state["reason"] == "drained"
    assert state["merges"] == report.merges
    assert state["spawned"] == report.agents_spawned
    assert state["live_sessions"] == 0
    assert state["open_prs"] == 0


def test_replay_events_support_since_and_limit(replay_server, finished_records):
    _, everything = _get(replay_server.url + "/api/events")
    assert everything == finished_records
    _, tail = _get(replay_server.url + "/api/events?since=5")
    assert tail == finished_records[5:]
    _, window = _get(replay_server.url + "/api/events?since=5&limit=3")
    assert window == finished_records[5:8]


def test_replay_rows_are_consistent_with_the_log(replay_server, finished_records):
    report = RunReport.from_events(finished_records)
    _, agents = _get(replay_server.url + "/api/agents")
    assert len(agents) == report.agents_finished
    _, live = _get(replay_server.url + "/api/agents?live=1")
    assert live == []
    _, queue = _get(replay_server.url + "/api/queue")
    assert {row["state"] for row in queue} <= {"merged", "suppressed", "failed-merge"}
    assert sum(1 for row in queue if row["state"] == "merged") == report.merges
    _, targets = _get(replay_server.url + "/api/targets")
    assert {row["status"] for row in targets} <= {"proved", "excluded"}
    _, issues = _get(replay_server.url + "/api/issues")
    assert sum(1 for row in issues if row["status"] == "open") == report.open_issues


def test_replay_report_route_matches_the_derivation(replay_server, finished_records):
    _, payload = _get(replay_server.url + "/api/report")
    assert payload == RunReport.from_events(finished_records).to_payload()


def test_metrics_series_tracks_cumulative_counters(replay_server, finished_records):
    _, points = _get(replay_server.url + "/api/metrics/series")
    assert points == metrics_series(finished_records)
    report = RunReport.from_events(finished_records)
    last = points[-1]
    assert last["merges"] == report.merges
    assert last["tokens_in"] == report.tokens_in
    assert last["tokens_out"] == report.tokens_out
    assert last["active"] == 0
    assert last["open_prs"] == 0
    assert last["queue_depth"] == 0
    assert last["cost_cached_micro"] > 0
    merge_counts = [p["merges"] for p in points]
    assert merge_counts == sorted(merge_counts)
    assert all(p["active"] >= 0 and p["queue_depth"] >= 0 for p in points)


def test_replay_rejects_commands(replay_server):
    status, body = _post(replay_server.url + "/api/commands/pause")
    assert status == 409
    assert "read-only" in body["error"] or "commands" in body["error"]


def test_unknown_routes_are_404(replay_server):
    with pytest.raises(urllib.error.HTTPError) as excinfo:
        _get(replay_server.url + "/api/nope")
    assert excinfo.value.code == 404
    assert "no such route" in json.loads(excinfo.value.read())["error"]


def test_stream_replays_every_record_then_signals_eof(replay_server, finished_records):
    request = urllib.request.Request(replay_server.url + "/api/stream")
    events = []
    with urllib.request.urlopen(request, timeout=10) as resp:
        assert resp.headers["Content-Type"].startswith("text/event-stream")
        current = {}
        for raw in resp:
            line = raw.decode("utf-8").rstrip("\n")
            if line.startswith("id: "):
                current["id"] = int(line[4:])
            elif line.startswith("event: "):
                current["event"] = line[7:]
            elif line.startswith("data: "):
                current["data"] = line[6:]
            elif line == "":
                if current.get("event") == "eof":
                    break
                if current:
                    events.append(current)
                current = {}
    assert len(events) == len(finished_records)
    assert [e["id"] for e in events] == [r["seq"] for r in finished_records]
    assert json.loads(events[0]["data"])["kind"] == "run-start"


def test_log_source_loads_from_disk(tmp_path, finished_records):
    from swarmtrunk.control import encode_record

    path = tmp_path / "run.jsonl"
    path.write_text("".join(encode_record(r) + "\n" for r in finished_records))
    source = LogSource.from_path(path)
    assert source.report_payload() == LogSource(finished_records).report_payload()


# -- live runs -----------------------------------------------------------------------


@pytest.fixture()
def live_server():
    run = Run(RunConfig(**{**CONFIG, "seed": "api-live"}), log=EventLog())
    run.start()
    run.pause()
    driver = RunDriver(run).start()
    server = ApiServer(driver).start()
    yield server, driver
    server.stop()
    driver.stop()


def test_live_run_is_operator_controlled(live_server):
    server, driver = live_server
    status, state = _get(server.url + "/api/state")
    assert state["mode"] == "live"
    assert state["paused"] is True
    assert state["spawned"] == 0

    status, body = _post(server.url + "/api/commands/set-concurrency", {"value": 3})
    assert status == 202
    status, body = _post(server.url + "/api/commands/resume")
    assert status == 202

    _wait_for(lambda: _get(server.url + "/api/state")[1]["finished"])
    _, state = _get(server.url + "/api/state")
    assert state["reason"] == "drained"
    assert state["spawned"] > 0
    assert state["concurrency"] == 3
    _, report = _get(server.url + "/api/report")
    assert report["reason"] == "drained"
    assert report["agents_spawned"] == state["spawned"]


def test_live_commands_validate_names(live_server):
    server, _ = live_server
    status, body = _post(server.url + "/api/commands/self-destruct")
    assert status == 400
    assert "unknown command" in body["error"]


def test_live_events_grow_while_running(live_server):
    server, _ = live_server
    _post(server.url + "/api/commands/resume")
    first = _wait_for(lambda: _get(server.url + "/api/events")[1] or None)
    _wait_for(lambda: _get(server.url + "/api/state")[1]["finished"])
    _, final = _get(server.url + "/api/events")
    assert len(final) >= len(first)
    assert [r["seq"] for r in final] == list(range(len(final)))
