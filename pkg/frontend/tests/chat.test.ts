import { beforeEach, describe, expect, it, vi } from "vitest";

import { Client } from "../src/api.js";
import { ChatView, openSnippetPanel } from "../src/chat.js";
import { jsonResponse } from "./fixtures.js";

function mountChat(): ChatView {
  const container = document.createElement("div");
  document.body.appendChild(container);
  return new ChatView(container, new Client(""), "rec001");
}

const REPLY = {
  session_id: "sess-1",
  response: 'The record flags 164889003 as severe.\nReference rhythms: "Atrial fibrillation is irregular."',
  citations: ["rhythms", "conduction"],
  degraded: false,
};

beforeEach(() => {
  document.body.innerHTML = "";
  vi.unstubAllGlobals();
});

describe("chat round trip against a mocked server", () => {
  it("shows the user bubble optimistically, then the reply with chips", async () => {
    let resolveFetch: (r: Response) => void = () => {};
    const pending = new Promise<Response>((resolve) => { resolveFetch = resolve; });
    vi.stubGlobal("fetch", vi.fn(() => pending));
    const view = mountChat();
    const sending = view.send("what is flagged?");
    // optimistic bubble is visible before the server answers
    expect(document.querySelectorAll(".message.user.pending")).toHaveLength(1);
    resolveFetch(jsonResponse(REPLY));
    await sending;
    const assistant = document.querySelector(".message.assistant")!;
    expect(assistant.querySelector("p")!.textContent).toContain("164889003");
    const chips = assistant.querySelectorAll(".citation-chip");
    expect([...chips].map((c) => c.textContent)).toEqual(["rhythms", "conduction"]);
    expect(view.sessionId).toBe("sess-1");
    expect(document.querySelector(".message.user.pending")).toBeNull();
  });

  it("renders an empty chips row when there are no citations", async () => {
    vi.stubGlobal("fetch", vi.fn(async () =>
      jsonResponse({ ...REPLY, citations: [], degraded: true })));
    const view = mountChat();
    await view.send("hello");
    const assistant = document.querySelector(".message.assistant")!;
    expect(assistant.classList.contains("degraded")).toBe(true);
    expect(assistant.querySelector(".citations")).not.toBeNull();
    expect(assistant.querySelector(".no-citations")?.textContent).toMatch(/degraded/);
  });

  it("recreates the session and retries once on a 404 session", async () => {
    const calls: Array<Record<string, unknown>> = [];
    vi.stubGlobal("fetch", vi.fn(async (_url: string, init?: RequestInit) => {
      const payload = JSON.parse(String(init?.body ?? "{}"));
      calls.push(payload);
      if (payload.session_id === "stale") {
        return jsonResponse({ detail: "unknown session" }, 404);
      }
      return jsonResponse({ ...REPLY, session_id: "fresh" });
    }));
    const view = mountChat();
    view.sessionId = "stale";
    await view.send("still there?");
    expect(calls).toHaveLength(2);
    expect(calls[0]).toMatchObject({ session_id: "stale" });
    expect(calls[1]).not.toHaveProperty("session_id");
    expect(calls[1]).toMatchObject({ record_id: "rec001" });
    expect(view.sessionId).toBe("fresh");
    expect(document.querySelector(".message.assistant")).not.toBeNull();
  });

  it("marks the bubble unsent with a retry affordance on network failure", async () => {
    const fetchMock = vi.fn(async () => { throw new TypeError("network down"); });
    vi.stubGlobal("fetch", fetchMock);
    const view = mountChat();
    await view.send("anyone home?");
    const bubble = document.querySelector(".message.user.unsent")!;
    expect(bubble).not.toBeNull();
    const retry = bubble.querySelector("button.retry") as HTMLButtonElement;
    expect(retry?.textContent).toBe("Retry");
    // the retry resends the same text once the network recovers
    fetchMock.mockImplementation(async () => jsonResponse(REPLY));
    retry.click();
    await vi.waitFor(() => {
      expect(document.querySelector(".message.assistant")).not.toBeNull();
    });
    expect(document.querySelector(".message.user.unsent")).toBeNull();
  });

  it("opens the snippet panel when a citation chip is clicked", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => jsonResponse(REPLY)));
    const view = mountChat();
    await view.send("cite something");
    const chip = document.querySelector(".citation-chip") as HTMLButtonElement;
    chip.click();
    const panel = document.getElementById("snippet-panel")!;
    expect(panel.hasAttribute("hidden")).toBe(false);
    expect(panel.querySelector("h3")?.textContent).toBe("rhythms");
    expect(panel.querySelector("blockquote")?.textContent).toContain("Atrial fibrillation");
  });

  it("deduplicates in-flight sends per session", async () => {
    let resolveFetch: (r: Response) => void = () => {};
    const pending = new Promise<Response>((resolve) => { resolveFetch = resolve; });
    const fetchMock = vi.fn(() => pending);
    vi.stubGlobal("fetch", fetchMock);
    const view = mountChat();
    const first = view.send("one");
    await view.send("two"); // ignored while the first is in flight
    expect(fetchMock).toHaveBeenCalledTimes(1);
    resolveFetch(jsonResponse(REPLY));
    await first;
  });
});

describe("snippet panel fallback", () => {
  it("falls back to a reference line when the message has no quote", () => {
    openSnippetPanel("doc-9", "plain answer with no quotes");
    const panel = document.getElementById("snippet-panel")!;
    expect(panel.querySelector("blockquote")?.textContent).toBe("Referenced document: doc-9");
  });
});
