// Folds raw log records into the dashboard's working state: the same
// cumulative counter series the server exposes at /api/metrics/series,
// plus per-kind tallies, an outcome breakdown, and a short tail of recent
// events for the activity feed.
//
// The fold is an exact mirror of the server's: one point per record that
// moves a counter, costs as the running sum of per-session estimates in
// integer micro-dollars. Keeping it bit-for-bit compatible means a chart
// drawn from the live stream can be checked against the server's series
// endpoint, which the integration suite does.

import { sessionCostMicro } from "./costs.js";
import type { EventRecord, SeriesPoint } from "./types.js";

type PrState = "open" | "queued" | "done";

const asInt = (value: unknown): number => {
  const n = typeof value === "number" ? value : Number(value);
  return Number.isFinite(n) ? Math.trunc(n) : 0;
};

const asText = (value: unknown): string => (typeof value === "string" ? value : "");

/** Incremental version of the series fold; `step` returns a point when the
 * record moved a counter and null otherwise. */
export class SeriesFold {
  private prState = new Map<string, PrState>();
  private active = 0;
  private openPrs = 0;
  private queueDepth = 0;
  private merges = 0;
  private tokensIn = 0;
  private tokensOut = 0;
  private costNocache = 0;
  private costCached = 0;

  step(record: EventRecord): SeriesPoint | null {
    const data = record.data;
    switch (record.kind) {
      case "agent-start":
        this.active += 1;
        break;
      case "agent-end": {
        this.active -= 1;
        const tokensIn = asInt(data["tokens_in"]);
        const tokensOut = asInt(data["tokens_out"]);
        this.tokensIn += tokensIn;
        this.tokensOut += tokensOut;
        const cost = sessionCostMicro(tokensIn, tokensOut, asInt(data["turns"]));
        this.costNocache += cost.nocacheMicro;
        this.costCached += cost.cachedMicro;
        break;
      }
      case "pr-opened": {
        const pr = asText(data["pr"]);
        if (this.prState.get(pr) !== "open") this.openPrs += 1;
        this.prState.set(pr, "open");
        break;
      }
      case "pr-queued":
        this.prState.set(asText(data["pr"]), "queued");
        this.queueDepth += 1;
        break;
      case "pr-returned": {
        const pr = asText(data["pr"]);
        if (this.prState.get(pr) === "queued") this.queueDepth -= 1;
        this.prState.set(pr, "open");
        break;
      }
      case "pr-merged":
      case "pr-failed-merge":
      case "pr-suppressed": {
        const pr = asText(data["pr"]);
        const state = this.prState.get(pr);
        if (state === "queued") this.queueDepth -= 1;
        if (state === "open" || state === "queued") this.openPrs -= 1;
        this.prState.set(pr, "done");
        if (record.kind === "pr-merged") this.merges += 1;
        break;
      }
      default:
        return null;
    }
    return {
      t: record.t,
      active: this.active,
      open_prs: this.openPrs,
      queue_depth: this.queueDepth,
      merges: this.merges,
      tokens_in: this.tokensIn,
      tokens_out: this.tokensOut,
      cost_nocache_micro: this.costNocache,
      cost_cached_micro: this.costCached,
    };
  }
}

/** Fold a full record list into the cumulative counter series. */
export function foldSeries(events: EventRecord[]): SeriesPoint[] {
  const fold = new SeriesFold();
  const points: SeriesPoint[] = [];
  for (const record of events) {
    const point = fold.step(record);
    if (point) points.push(point);
  }
  return points;
}

/** How many recent events the activity feed keeps. */
export const FEED_LENGTH = 12;

/** Live working state for the dashboard, fed from the event stream. */
export class DashboardModel {
  readonly series: SeriesPoint[] = [];
  readonly kindCounts = new Map<string, number>();
  readonly outcomes = new Map<string, number>();
  readonly recent: EventRecord[] = [];
  lastSeq = -1;

  private fold = new SeriesFold();

  ingest(record: EventRecord): void {
    if (record.seq <= this.lastSeq) return; // replays after a reconnect
    this.lastSeq = record.seq;
    this.kindCounts.set(record.kind, (this.kindCounts.get(record.kind) ?? 0) + 1);
    if (record.kind === "agent-end") {
      const outcome = asText(record.data["outcome"]) || "unknown";
      this.outcomes.set(outcome, (this.outcomes.get(outcome) ?? 0) + 1);
    }
    const point = this.fold.step(record);
    if (point) this.series.push(point);
    this.recent.push(record);
    if (this.recent.length > FEED_LENGTH) this.recent.shift();
  }

  ingestAll(records: EventRecord[]): void {
    for (const record of records) this.ingest(record);
  }

  latest(): SeriesPoint | null {
    return this.series.length > 0 ? this.series[this.series.length - 1] : null;
  }
}

/** One-line human description of a log record, for the activity feed. */
export function describeEvent(record: EventRecord): string {
  const data = record.data;
  const agent = asText(data["agent"]);
  const pr = asText(data["pr"]);
  switch (record.kind) {
    case "run-start":
      return `run started (seed ${asText(data["seed"])})`;
    case "run-resume":
      return "run resumed from checkpoint";
    case "run-end":
      return `run ended: ${asText(data["reason"])}`;
    case "agent-start":
      return `${agent} started (${asText(data["role"])})`;
    case "agent-end":
      return `${agent} finished: ${asText(data["outcome"])}`;
    case "pr-opened":
      return `${pr} opened by ${asText(data["author"])}`;
    case "pr-returned":
      return `${pr} returned (${asText(data["reason"])})`;
    case "pr-queued":
      return `${pr} entered the merge queue`;
    case "pr-merged":
      return `${pr} merged`;
    case "pr-failed-merge":
      return `${pr} failed to merge`;
    case "pr-suppressed":
      return `${pr} suppressed by review`;
    case "worktree-begin":
      return `provisioning worktree for ${agent}`;
    case "worktree-ready":
      return `worktree ready for ${agent}`;
    case "pause":
      return "run paused";
    case "resume":
      return "run resumed";
    case "set-concurrency":
      return `concurrency set to ${asInt(data["value"])}`;
    case "checkpoint":
      return "checkpoint written";
    case "drain":
      return "draining: no new work";
    case "task-dropped":
      return `task dropped: ${asText(data["task"])}`;
    default:
      return record.kind;
  }
}
