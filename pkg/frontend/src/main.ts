// Page shell: connects the typed API client and the event stream to the
// rendered panels. All logic lives in the imported modules; this file is
// browser-only wiring.

import { ApiClient, ApiError } from "./api.js";
import { openEventStream } from "./stream.js";
import { DashboardModel } from "./viewmodel.js";
import {
  renderAgentsTable,
  renderControls,
  renderCostChart,
  renderCosts,
  renderFeed,
  renderHeader,
  renderIssuesTable,
  renderQueueTable,
  renderReport,
  renderStatePanel,
  renderSwarmChart,
  renderTargetsBar,
} from "./panels.js";
import type { CommandName, EventRecord, StateSummary } from "./types.js";

const POLL_MS = 1500;

function apiBase(): string {
  const override = new URLSearchParams(window.location.search).get("api");
  if (override) return override;
  if (window.location.protocol.startsWith("http")) return window.location.origin;
  return "http://127.0.0.1:8642"; // opened from a file: point at the default serve port
}

function panel(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing panel #${id}`);
  return el;
}

async function boot(): Promise<void> {
  const api = new ApiClient(apiBase());
  const model = new DashboardModel();
  const els = {
    header: panel("header-status"),
    state: panel("state-panel"),
    controls: panel("controls-panel"),
    costs: panel("costs-panel"),
    swarmChart: panel("swarm-chart"),
    costChart: panel("cost-chart"),
    agents: panel("agents-panel"),
    queue: panel("queue-panel"),
    issues: panel("issues-panel"),
    targets: panel("targets-panel"),
    feed: panel("feed-panel"),
    report: panel("report-panel"),
    error: panel("error-line"),
  };
  let state: StateSummary | null = null;
  let dirty = false;

  const showError = (err: unknown): void => {
    els.error.textContent = err instanceof Error ? err.message : String(err);
  };
  const clearError = (): void => {
    els.error.textContent = "";
  };

  const redraw = (): void => {
    if (!state) return;
    els.header.innerHTML = renderHeader(state);
    els.state.innerHTML = renderStatePanel(state);
    els.controls.innerHTML = renderControls(state, state.mode === "replay");
    els.costs.innerHTML = renderCosts(model.latest());
    els.swarmChart.innerHTML = renderSwarmChart(model.series);
    els.costChart.innerHTML = renderCostChart(model.series);
    els.feed.innerHTML = renderFeed(model.recent);
  };

  const refreshTables = async (): Promise<void> => {
    const [agents, queue, issues, targets] = await Promise.all([
      api.agents(),
      api.queue(),
      api.issues(),
      api.targets(),
    ]);
    els.agents.innerHTML = renderAgentsTable(agents);
    els.queue.innerHTML = renderQueueTable(queue);
    els.issues.innerHTML = renderIssuesTable(issues);
    els.targets.innerHTML = renderTargetsBar(targets);
  };

  const refreshReport = async (): Promise<void> => {
    els.report.innerHTML = renderReport(await api.report());
  };

  const send = async (name: CommandName, payload: Record<string, unknown> = {}): Promise<void> => {
    try {
      await api.command(name, payload);
      clearError();
      state = await api.state();
      redraw();
    } catch (err) {
      showError(err instanceof ApiError ? `command ${name}: ${err.message}` : err);
    }
  };

  els.controls.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const command = target.dataset["command"] as CommandName | undefined;
    if (command) void send(command);
  });
  els.controls.addEventListener("change", (event) => {
    const target = event.target as HTMLInputElement;
    if (target.id === "concurrency") {
      void send("set-concurrency", { value: Number(target.value) });
    }
  });

  // Initial snapshot, then keep the counters live off the stream and the
  // row panels fresh off a slower poll.
  state = await api.state();
  model.ingestAll(await api.events());
  redraw();
  await refreshTables();
  await refreshReport();

  openEventStream(
    api.streamUrl(),
    (message) => {
      if (message.event === "eof") return;
      try {
        model.ingest(JSON.parse(message.data) as EventRecord);
        dirty = true;
      } catch {
        // a malformed frame is not worth tearing the page down for
      }
    },
    { since: model.lastSeq + 1 },
  );

  window.setInterval(() => {
    void (async () => {
      try {
        state = await api.state();
        clearError();
        if (dirty || state.mode === "live") {
          dirty = false;
          redraw();
          await refreshTables();
          if (state.finished) await refreshReport();
        }
      } catch (err) {
        showError(err);
      }
    })();
  }, POLL_MS);
}

void boot().catch((err: unknown) => {
  const line = document.getElementById("error-line");
  if (line) line.textContent = `failed to start: ${err instanceof Error ? err.message : err}`;
});
