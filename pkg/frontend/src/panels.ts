// Panel rendering: typed API payloads in, HTML strings out. The page shell
// assigns these to innerHTML; keeping them as pure string builders means
// the whole presentation layer tests without a browser.

import { svgChart } from "./charts.js";
import type { ChartSeries } from "./charts.js";
import { fmtCount, fmtDuration, fmtMicroDollars, fmtTokens } from "./format.js";
import { describeEvent } from "./viewmodel.js";
import type {
  AgentRow,
  EventRecord,
  IssueRow,
  QueueRow,
  ReportPayload,
  SeriesPoint,
  StateSummary,
  TargetRow,
} from "./types.js";

/** Escape text for safe interpolation into markup. */
export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

const esc = escapeHtml;

const stat = (label: string, value: string, cls = ""): string =>
  `<div class="stat ${cls}"><span class="stat-value">${value}</span><span class="stat-label">${esc(label)}</span></div>`;

const badge = (text: string, cls: string): string => `<span class="badge ${cls}">${esc(text)}</span>`;

/** Header strip: run identity plus lifecycle badges. */
export function renderHeader(state: StateSummary): string {
  const badges: string[] = [];
  badges.push(state.mode === "replay" ? badge("replay", "muted") : badge("live", "ok"));
  if (!state.started) badges.push(badge("not started", "muted"));
  if (state.paused) badges.push(badge("paused", "warn"));
  if (state.draining) badges.push(badge("draining", "warn"));
  if (state.finished) badges.push(badge(`finished: ${state.reason}`, "muted"));
  badges.push(state.build_ok ? badge("main builds", "ok") : badge("main broken", "bad"));
  return (
    `<span class="run-id">seed ${esc(state.seed)} · corpus ${esc(state.corpus_hash.slice(0, 10))}</span>` +
    `<span class="clock">t=${esc(fmtDuration(state.time))}</span>` +
    badges.join("")
  );
}

/** Main stat grid: scheduler, review pipeline, and repo counters. */
export function renderStatePanel(state: StateSummary): string {
  const targets = state.targets ?? {};
  const proved = targets["proved"] ?? 0;
  const total = Object.values(targets).reduce((a, b) => a + b, 0);
  return [
    stat("agents active", fmtCount(state.active)),
    stat("live sessions", fmtCount(state.live_sessions)),
    stat("spawned", fmtCount(state.spawned)),
    stat("pending tasks", fmtCount(state.pending_tasks)),
    stat("concurrency", fmtCount(state.concurrency)),
    stat(
      "worktrees (peak/cap)",
      `${fmtCount(state.peak_worktree_creations)}/${fmtCount(state.worktree_capacity)}`,
    ),
    stat("open PRs", fmtCount(state.open_prs)),
    stat("merge queue", fmtCount(state.queue_depth)),
    stat("merges", fmtCount(state.merges)),
    stat("staging builds", fmtCount(state.staging_builds)),
    stat("targets proved", `${fmtCount(proved)}/${fmtCount(total)}`),
    stat("declarations", fmtCount(state.decls)),
    stat("open proof gaps", fmtCount(state.sorries), state.sorries > 0 ? "warn" : ""),
    stat("open issues", fmtCount(state.open_issues)),
  ].join("");
}

/** Operator controls; `disabled` greys everything for replay sources. */
export function renderControls(state: StateSummary, disabled: boolean): string {
  const off = disabled || state.finished ? " disabled" : "";
  const pauseOff = state.paused ? " disabled" : "";
  const resumeOff = state.paused ? "" : " disabled";
  return (
    `<button data-command="pause"${off}${pauseOff}>pause</button>` +
    `<button data-command="resume"${off}${resumeOff}>resume</button>` +
    `<button data-command="spawn-status-agent"${off}>status agent</button>` +
    `<button data-command="stop" class="danger"${off}>stop</button>` +
    `<label class="slider">concurrency <input type="range" id="concurrency" min="1" max="64" ` +
    `value="${state.concurrency}"${off}/> <span id="concurrency-value">${state.concurrency}</span></label>`
  );
}

const tableShell = (headers: string[], body: string): string =>
  `<table><thead><tr>${headers.map((h) => `<th>${esc(h)}</th>`).join("")}</tr></thead><tbody>${body}</tbody></table>`;

const overflowNote = (hidden: number): string =>
  hidden > 0 ? `<p class="more">… and ${fmtCount(hidden)} more</p>` : "";

/** Agent table: live sessions first, newest spawn first inside each group. */
export function renderAgentsTable(rows: AgentRow[], limit = 24): string {
  const ordered = [...rows].sort((a, b) => {
    const liveA = a.outcome === "" ? 0 : 1;
    const liveB = b.outcome === "" ? 0 : 1;
    if (liveA !== liveB) return liveA - liveB;
    return b.agent.localeCompare(a.agent);
  });
  const shown = ordered.slice(0, limit);
  const body = shown
    .map(
      (r) =>
        `<tr class="${r.outcome === "" ? "live" : "done"}"><td>${esc(r.agent)}</td><td>${esc(r.role)}</td>` +
        `<td>${esc(r.outcome || r.state)}</td><td class="num">${fmtCount(r.turns)}</td>` +
        `<td class="num">${fmtTokens(r.tokens_in)}</td><td class="num">${fmtTokens(r.tokens_out)}</td>` +
        `<td>${esc(r.task)}</td><td>${esc(r.pr)}</td></tr>`,
    )
    .join("");
  return (
    tableShell(["agent", "role", "state", "turns", "in", "out", "task", "pr"], body) +
    overflowNote(rows.length - shown.length)
  );
}

/** Merge-queue table: queued PRs by position, then the rest, newest first. */
export function renderQueueTable(rows: QueueRow[], limit = 16): string {
  const ordered = [...rows].sort((a, b) => {
    const qa = a.queue_position < 0 ? Number.MAX_SAFE_INTEGER : a.queue_position;
    const qb = b.queue_position < 0 ? Number.MAX_SAFE_INTEGER : b.queue_position;
    if (qa !== qb) return qa - qb;
    return b.opened_at - a.opened_at;
  });
  const shown = ordered.slice(0, limit);
  const body = shown
    .map(
      (r) =>
        `<tr class="pr-${esc(r.state)}"><td>${r.queue_position >= 0 ? r.queue_position : ""}</td>` +
        `<td>${esc(r.pr)}</td><td>${esc(r.title)}</td><td>${esc(r.author)}</td>` +
        `<td>${esc(r.state)}</td><td class="num">${fmtCount(r.revision)}</td></tr>`,
    )
    .join("");
  return (
    tableShell(["#", "pr", "title", "author", "state", "rev"], body) +
    overflowNote(rows.length - shown.length)
  );
}

/** Issue tracker table; open entries first. */
export function renderIssuesTable(rows: IssueRow[], limit = 16): string {
  const ordered = [...rows].sort((a, b) => {
    if (a.status !== b.status) return a.status === "open" ? -1 : 1;
    return a.id.localeCompare(b.id);
  });
  const shown = ordered.slice(0, limit);
  const body = shown
    .map(
      (r) =>
        `<tr class="issue-${esc(r.status)}"><td>${esc(r.id)}</td><td>${esc(r.status)}</td>` +
        `<td>${esc(r.kind)}</td><td>${esc(r.title)}</td><td>${esc(r.ref)}</td></tr>`,
    )
    .join("");
  return (
    tableShell(["id", "status", "kind", "title", "ref"], body) +
    overflowNote(rows.length - shown.length)
  );
}

const TARGET_CLASSES: Record<string, string> = {
  proved: "ok",
  stated: "warn",
  missing: "bad",
  excluded: "muted",
};

/** Proof progress bar with per-status counts underneath. */
export function renderTargetsBar(rows: TargetRow[]): string {
  const counts = new Map<string, number>();
  for (const row of rows) counts.set(row.status, (counts.get(row.status) ?? 0) + 1);
  const total = rows.length;
  if (total === 0) return `<p class="more">no targets</p>`;
  const order = ["proved", "stated", "missing", "excluded"];
  const segments = order
    .filter((status) => (counts.get(status) ?? 0) > 0)
    .map((status) => {
      const width = ((counts.get(status) ?? 0) / total) * 100;
      return `<span class="seg ${TARGET_CLASSES[status] ?? ""}" style="width:${width.toFixed(2)}%"></span>`;
    })
    .join("");
  const labels = order
    .map((status) => `${status} ${fmtCount(counts.get(status) ?? 0)}`)
    .join(" · ");
  return `<div class="bar">${segments}</div><p class="bar-labels">${esc(labels)}</p>`;
}

/** Activity feed from the most recent log records, newest last. */
export function renderFeed(records: EventRecord[]): string {
  return records
    .map(
      (r) =>
        `<li><span class="feed-t">${esc(fmtDuration(r.t))}</span> ${esc(describeEvent(r))}</li>`,
    )
    .join("");
}

/** Cost strip from the latest series point: both bills plus the ratio. */
export function renderCosts(latest: SeriesPoint | null): string {
  if (!latest) return `<p class="more">no usage yet</p>`;
  const factor =
    latest.cost_cached_micro > 0
      ? (latest.cost_nocache_micro / latest.cost_cached_micro).toFixed(2)
      : "—";
  return [
    stat("tokens in", fmtTokens(latest.tokens_in)),
    stat("tokens out", fmtTokens(latest.tokens_out)),
    stat("bill, no cache", fmtMicroDollars(latest.cost_nocache_micro)),
    stat("bill, cached", fmtMicroDollars(latest.cost_cached_micro), "ok"),
    stat("cache saves", `${factor}x`),
  ].join("");
}

/** End-of-run report: outcome and role breakdowns plus pipeline totals. */
export function renderReport(report: ReportPayload): string {
  const pairs = (record: Record<string, number>): string =>
    Object.entries(record)
      .map(([k, v]) => `${esc(k)} ${fmtCount(v)}`)
      .join(" · ");
  return (
    `<dl>` +
    `<dt>agents</dt><dd>${fmtCount(report.agents_spawned)} spawned, ${fmtCount(report.agents_finished)} finished</dd>` +
    `<dt>outcomes</dt><dd>${pairs(report.outcomes)}</dd>` +
    `<dt>roles</dt><dd>${pairs(report.roles)}</dd>` +
    `<dt>review</dt><dd>${fmtCount(report.prs_opened)} PRs, ${fmtCount(report.returns)} returns, ${fmtCount(report.suppressed)} suppressed</dd>` +
    `<dt>merge queue</dt><dd>${fmtCount(report.merges)} merged in ${fmtCount(report.staging_builds)} staging builds (${fmtCount(report.staging_failures)} failed)</dd>` +
    `<dt>repo</dt><dd>${fmtCount(report.final_decls)} declarations, ${fmtCount(report.final_sorries)} gaps, issues ${fmtCount(report.open_issues)} open / ${fmtCount(report.resolved_issues)} resolved</dd>` +
    `<dt>usage</dt><dd>${fmtTokens(report.tokens_in)} in, ${fmtTokens(report.tokens_out)} out over ${fmtCount(report.turns)} turns</dd>` +
    `</dl>`
  );
}

/** Swarm chart: active agents, open PRs, and queue depth over time. */
export function renderSwarmChart(series: SeriesPoint[]): string {
  const pick = (y: (p: SeriesPoint) => number): { x: number; y: number }[] =>
    series.map((p) => ({ x: p.t, y: y(p) }));
  const drawn: ChartSeries[] = [
    { label: "active", color: "#4ea1ff", points: pick((p) => p.active) },
    { label: "open PRs", color: "#ffb347", points: pick((p) => p.open_prs) },
    { label: "queue", color: "#ff6b81", points: pick((p) => p.queue_depth) },
    { label: "merges", color: "#2ecc71", points: pick((p) => p.merges) },
  ];
  return svgChart(drawn);
}

/** Cost chart: both cumulative bills over time. */
export function renderCostChart(series: SeriesPoint[]): string {
  const drawn: ChartSeries[] = [
    {
      label: "no cache",
      color: "#ff6b81",
      points: series.map((p) => ({ x: p.t, y: p.cost_nocache_micro })),
    },
    {
      label: "cached",
      color: "#2ecc71",
      points: series.map((p) => ({ x: p.t, y: p.cost_cached_micro })),
    },
  ];
  return svgChart(drawn, { format: fmtMicroDollars });
}
