// Incremental parser and reader for the server-sent event stream at
// GET /api/stream. The parser is pure and chunk-boundary safe, so it can
// be fed straight from a streaming fetch body in either the browser or
// node. The run log's records arrive one per message, with the record
// kind as the event name and the JSON record as the data line; the server
// signals completion with an `eof` event and keeps the socket warm with
// comment pings.

import type { StreamMessage } from "./types.js";

/**
 * Chunk-boundary-safe text/event-stream parser.
 *
 * Feed arbitrary string chunks to `push` and it returns every message
 * completed by that chunk. Field handling follows the format: one field
 * per line, an optional single space after the colon, multiple `data`
 * lines joined with newlines, `:` lines are comments, and a blank line
 * dispatches. An unterminated trailing message is never dispatched.
 */
export class SseParser {
  private buffer = "";
  private id = "";
  private event = "";
  private data: string[] = [];

  push(chunk: string): StreamMessage[] {
    this.buffer += chunk;
    const out: StreamMessage[] = [];
    for (;;) {
      const nl = this.buffer.search(/\r\n|\r|\n/);
      if (nl < 0) break;
      // a trailing CR might be half of a CRLF split across chunks
      if (this.buffer[nl] === "\r" && nl === this.buffer.length - 1) break;
      const line = this.buffer.slice(0, nl);
      const sep = this.buffer[nl] === "\r" && this.buffer[nl + 1] === "\n" ? 2 : 1;
      this.buffer = this.buffer.slice(nl + sep);
      const message = this.line(line);
      if (message) out.push(message);
    }
    return out;
  }

  private line(line: string): StreamMessage | null {
    if (line === "") {
      if (this.event === "" && this.data.length === 0) return null;
      const message: StreamMessage = {
        id: this.id,
        event: this.event || "message",
        data: this.data.join("\n"),
      };
      this.event = "";
      this.data = [];
      return message;
    }
    if (line.startsWith(":")) return null;
    const colon = line.indexOf(":");
    const field = colon < 0 ? line : line.slice(0, colon);
    let value = colon < 0 ? "" : line.slice(colon + 1);
    if (value.startsWith(" ")) value = value.slice(1);
    switch (field) {
      case "id":
        this.id = value;
        break;
      case "event":
        this.event = value;
        break;
      case "data":
        this.data.push(value);
        break;
      default:
        break; // unknown fields are ignored, per the format
    }
    return null;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface EventStreamOptions {
  /** Resume after this sequence number (passed as ?since=). */
  since?: number;
  /** Injected for tests; defaults to the global fetch. */
  fetchFn?: FetchLike;
}

export interface EventStreamHandle {
  /** Resolves when the server signals eof, the socket ends, or close(). */
  done: Promise<void>;
  close: () => void;
}

/**
 * Open the event stream and invoke `onMessage` for every parsed message,
 * including the final `eof`. Works on any fetch with a streaming body.
 */
export function openEventStream(
  url: string,
  onMessage: (message: StreamMessage) => void,
  options: EventStreamOptions = {},
): EventStreamHandle {
  const fetchFn = options.fetchFn ?? (fetch as FetchLike);
  const controller = new AbortController();
  const target = new URL(url);
  if (options.since !== undefined) {
    target.searchParams.set("since", String(options.since));
  }
  const done = (async () => {
    const response = await fetchFn(target.toString(), {
      headers: { Accept: "text/event-stream" },
      signal: controller.signal,
    });
    if (!response.ok || !response.body) {
      throw new Error(`stream failed: HTTP ${response.status}`);
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    try {
      for (;;) {
        const { value, done: ended } = await reader.read();
        if (ended) return;
        for (const message of parser.push(decoder.decode(value, { stream: true }))) {
          onMessage(message);
          if (message.event === "eof") {
            controller.abort();
            return;
          }
        }
      }
    } finally {
      reader.releaseLock();
    }
  })().catch((err: unknown) => {
    if (!controller.signal.aborted) throw err;
  });
  return { done, close: () => controller.abort() };
}
