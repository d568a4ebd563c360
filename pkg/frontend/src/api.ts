// Thin typed client for the swarmtrunk HTTP API. Transport is injected so
// unit tests can stub it; everything else is URL assembly and JSON.

import type {
  AgentRow,
  CommandName,
  EventRecord,
  IssueRow,
  QueueRow,
  ReportPayload,
  SeriesPoint,
  StateSummary,
  TargetRow,
} from "./types.js";
import type { FetchLike } from "./stream.js";

/** An HTTP error answered by the API, carrying the server's message. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? (fetch as FetchLike);
  }

  /** Absolute URL of the server-sent event stream. */
  streamUrl(): string {
    return `${this.base}/api/stream`;
  }

  state(): Promise<StateSummary> {
    return this.get("/api/state");
  }

  agents(liveOnly = false): Promise<AgentRow[]> {
    return this.get(liveOnly ? "/api/agents?live=1" : "/api/agents");
  }

  queue(): Promise<QueueRow[]> {
    return this.get("/api/queue");
  }

  issues(): Promise<IssueRow[]> {
    return this.get("/api/issues");
  }

  targets(): Promise<TargetRow[]> {
    return this.get("/api/targets");
  }

  report(): Promise<ReportPayload> {
    return this.get("/api/report");
  }

  series(): Promise<SeriesPoint[]> {
    return this.get("/api/metrics/series");
  }

  events(since = 0, limit = 0): Promise<EventRecord[]> {
    const params = new URLSearchParams();
    if (since > 0) params.set("since", String(since));
    if (limit > 0) params.set("limit", String(limit));
    const query = params.toString();
    return this.get(query ? `/api/events?${query}` : "/api/events");
  }

  /** Send an operator command; resolves when the server accepts it. */
  async command(name: CommandName, payload: Record<string, unknown> = {}): Promise<void> {
    const response = await this.fetchFn(`${this.base}/api/commands/${name}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!response.ok) throw await this.toError(response);
  }

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(`${this.base}${path}`, {
      headers: { Accept: "application/json" },
    });
    if (!response.ok) throw await this.toError(response);
    return (await response.json()) as T;
  }

  private async toError(response: Response): Promise<ApiError> {
    let message = `HTTP ${response.status}`;
    try {
      const body = (await response.json()) as { error?: string };
      if (body && typeof body.error === "string") message = body.error;
    } catch {
      // non-JSON error body; keep the status line
    }
    return new ApiError(response.status, message);
  }
}
