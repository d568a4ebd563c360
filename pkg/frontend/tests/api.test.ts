import { describe, expect, it } from "vitest";
import { ApiClient, ApiError } from "../src/api.js";

interface Call {
  url: string;
  init?: RequestInit;
}

function stubClient(reply: unknown, status = 200): { api: ApiClient; calls: Call[] } {
  const calls: Call[] = [];
  const api = new ApiClient("http://host:1234/", async (url, init) => {
    calls.push({ url, init });
    return new Response(JSON.stringify(reply), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  });
  return { api, calls };
}

describe("ApiClient", () => {
  it("hits each read route and returns the decoded payload", async () => {
    const { api, calls } = stubClient([{ agent: "a1" }]);
    expect(await api.agents()).toEqual([{ agent: "a1" }]);
    expect(await api.agents(true)).toEqual([{ agent: "a1" }]);
    await api.state();
    await api.queue();
    await api.issues();
    await api.targets();
    await api.report();
    await api.series();
    expect(calls.map((c) => c.url)).toEqual([
      "http://host:1234/api/agents",
      "http://host:1234/api/agents?live=1",
      "http://host:1234/api/state",
      "http://host:1234/api/queue",
      "http://host:1234/api/issues",
      "http://host:1234/api/targets",
      "http://host:1234/api/report",
      "http://host:1234/api/metrics/series",
    ]);
  });

  it("builds the events query only from non-default arguments", async () => {
    const { api, calls } = stubClient([]);
    await api.events();
    await api.events(7);
    await api.events(7, 100);
    await api.events(0, 9);
    expect(calls.map((c) => c.url)).toEqual([
      "http://host:1234/api/events",
      "http://host:1234/api/events?since=7",
      "http://host:1234/api/events?since=7&limit=100",
      "http://host:1234/api/events?limit=9",
    ]);
  });

  it("posts commands as JSON", async () => {
    const { api, calls } = stubClient({ ok: true, command: "set-concurrency" }, 202);
    await api.command("set-concurrency", { value: 12 });
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("http://host:1234/api/commands/set-concurrency");
    expect(calls[0].init?.method).toBe("POST");
    expect(calls[0].init?.body).toBe('{"value":12}');
  });

  it("surfaces the server's error message with the status", async () => {
    const { api } = stubClient({ error: "recorded logs do not accept commands" }, 409);
    const failure = api.command("pause");
    await expect(failure).rejects.toBeInstanceOf(ApiError);
    await expect(api.command("pause")).rejects.toMatchObject({
      status: 409,
      message: "recorded logs do not accept commands",
    });
  });

  it("falls back to the status line when the error body is not JSON", async () => {
    const api = new ApiClient(
      "http://host:1234",
      async () => new Response("<html>boom</html>", { status: 500 }),
    );
    await expect(api.state()).rejects.toMatchObject({ status: 500, message: "HTTP 500" });
  });

  it("exposes the stream URL without a trailing slash problem", () => {
    expect(new ApiClient("http://host:1234///").streamUrl()).toBe("http://host:1234/api/stream");
  });
});
