// Typed client for the record/interpretation/chat HTTP API. The UI never
// computes scores or terms itself; everything shown comes from the server.

export type Term = "negligible" | "low" | "medium" | "high" | "severe";

export interface ReportEntry {
  class_code: string;
  score: number;
  label: 0 | 1;
  strength: number;
  term: Term;
}

export interface ChatReply {
  session_id: string;
  response: string;
  citations: string[];
  degraded: boolean;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function readJson(response: Response): Promise<unknown> {
  // a malformed body surfaces as SyntaxError for the caller to toast
  const text = await response.text();
  return JSON.parse(text);
}

export class Client {
  constructor(private base: string = "") {}

  async health(): Promise<{ status: string; model_version: string }> {
    const r = await fetch(`${this.base}/health`);
    if (!r.ok) throw new ApiError(r.status, "health check failed");
    return (await readJson(r)) as { status: string; model_version: string };
  }

  async uploadRecord(header: Blob, headerName: string, signal: Blob, signalName: string): Promise<string> {
    const form = new FormData();
    form.append("header", header, headerName);
    form.append("signal", signal, signalName);
    const r = await fetch(`${this.base}/records`, { method: "POST", body: form });
    if (!r.ok) throw new ApiError(r.status, `upload failed (${r.status})`);
    const body = (await readJson(r)) as { record_id: string };
    return body.record_id;
  }

  async interpret(recordId: string): Promise<ReportEntry[]> {
    const r = await fetch(`${this.base}/records/${encodeURIComponent(recordId)}/interpret`, {
      method: "POST",
    });
    if (!r.ok) throw new ApiError(r.status, `interpret failed (${r.status})`);
    return (await readJson(r)) as ReportEntry[];
  }

  async chat(
    message: string,
    opts: { sessionId?: string; recordId?: string; annotation?: string },
  ): Promise<ChatReply> {
    const payload: Record<string, string> = { message };
    if (opts.sessionId) payload.session_id = opts.sessionId;
    if (opts.recordId) payload.record_id = opts.recordId;
    if (opts.annotation) payload.annotation = opts.annotation;
    const r = await fetch(`${this.base}/chat`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!r.ok) throw new ApiError(r.status, `chat failed (${r.status})`);
    return (await readJson(r)) as ChatReply;
  }
}
