// Typed mirrors of the JSON payloads served by the swarmtrunk HTTP API.
// The dashboard never reaches into the engine directly; these shapes are
// the whole contract.

/** One record from the append-only run log. */
export interface EventRecord {
  seq: number;
  t: number;
  kind: string;
  data: Record<string, unknown>;
}

/** GET /api/state — scheduler and repo summary. */
export interface StateSummary {
  mode?: "live" | "replay";
  time: number;
  seed: string;
  corpus_hash: string;
  started: boolean;
  finished: boolean;
  reason: string;
  paused: boolean;
  draining: boolean;
  concurrency: number;
  worktree_capacity: number;
  active: number;
  live_sessions: number;
  spawned: number;
  pending_tasks: number;
  open_prs: number;
  queue_depth: number;
  merges: number;
  staging_builds: number;
  decls: number;
  sorries: number;
  build_ok: boolean;
  targets: Record<string, number>;
  open_issues: number;
  peak_active: number;
  peak_worktree_creations: number;
}

/** GET /api/agents — one row per session the run has ever started. */
export interface AgentRow {
  agent: string;
  role: string;
  state: string;
  outcome: string;
  reason: string;
  turns: number;
  tokens_in: number;
  tokens_out: number;
  task: string;
  pr: string;
}

/** GET /api/queue — one row per pull request. */
export interface QueueRow {
  pr: string;
  author: string;
  author_role: string;
  title: string;
  state: string;
  revision: number;
  merge_attempts: number;
  queue_position: number;
  opened_at: number;
}

/** GET /api/issues — tracker entries as stored on the shared branch. */
export interface IssueRow {
  id: string;
  status: string;
  kind: string;
  created_by: string;
  resolved_by: string;
  ref: string;
  title: string;
}

/** GET /api/targets — proof status per declaration. */
export interface TargetRow {
  name: string;
  chapter: number;
  kind: string;
  status: string;
}

/** GET /api/report — end-of-run tallies rebuilt from the log. */
export interface ReportPayload {
  seed: string;
  corpus_hash: string;
  reason: string;
  duration: number;
  agents_spawned: number;
  agents_finished: number;
  roles: Record<string, number>;
  outcomes: Record<string, number>;
  tokens_in: number;
  tokens_out: number;
  turns: number;
  prs_opened: number;
  merges: number;
  returns: number;
  suppressed: number;
  failed_merges: number;
  staging_builds: number;
  staging_failures: number;
  final_decls: number;
  final_sorries: number;
  targets: Record<string, number>;
  open_issues: number;
  resolved_issues: number;
  metrics: Record<string, number>;
}

/** GET /api/metrics/series — cumulative counters after every moving event. */
export interface SeriesPoint {
  t: number;
  active: number;
  open_prs: number;
  queue_depth: number;
  merges: number;
  tokens_in: number;
  tokens_out: number;
  cost_nocache_micro: number;
  cost_cached_micro: number;
}

/** POST /api/commands/NAME — operator controls accepted on a live run. */
export type CommandName =
  | "pause"
  | "resume"
  | "set-concurrency"
  | "spawn-status-agent"
  | "create-issue"
  | "stop";

/** One parsed server-sent event from GET /api/stream. */
export interface StreamMessage {
  id: string;
  event: string;
  data: string;
}
