// Thin typed client over the session service HTTP API.

import type {
  CreateSessionRequest,
  SessionState,
  StreamEvent,
  SubmitAck,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let code = "http";
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const body = (await resp.json()) as { error?: { code?: string; message?: string } };
    if (body.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body: keep the status text
  }
  return new ApiError(resp.status, code, message);
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (!resp.ok) {
      throw await parseError(resp);
    }
    return (await resp.json()) as T;
  }

  createSession(req: CreateSessionRequest): Promise<SessionState> {
    return this.request<SessionState>("/sessions", {
      method: "POST",
      body: JSON.stringify(req),
    });
  }

  getSession(sessionId: string): Promise<SessionState> {
    return this.request<SessionState>(`/sessions/${sessionId}`);
  }

  submitTrial(
    sessionId: string,
    wordsCorrect: number,
    idempotencyKey: string,
    expected?: { block: number; attempt: number; trial: number },
  ): Promise<SubmitAck> {
    return this.request<SubmitAck>(`/sessions/${sessionId}/trials`, {
      method: "POST",
      body: JSON.stringify({
        words_correct: wordsCorrect,
        idempotency_key: idempotencyKey,
        expected,
      }),
    });
  }

  async exportLog(sessionId: string): Promise<string> {
    const resp = await fetch(`${this.baseUrl}/sessions/${sessionId}/export`);
    if (!resp.ok) {
      throw await parseError(resp);
    }
    return await resp.text();
  }

  eventsUrl(sessionId: string, since = 0): string {
    return `${this.baseUrl}/sessions/${sessionId}/events?since=${since}`;
  }
}

/**
 * Subscribe to the server-sent event stream with plain fetch, so the same
 * code runs in the browser and under node. Returns an abort function.
 */
export function subscribeEvents(
  url: string,
  onEvent: (event: StreamEvent) => void,
  onError?: (err: unknown) => void,
): () => void {
  const controller = new AbortController();

  (async () => {
    try {
      const resp = await fetch(url, {
        signal: controller.signal,
        headers: { accept: "text/event-stream" },
      });
      if (!resp.ok || resp.body === null) {
        throw new Error(`event stream failed: ${resp.status}`);
      }
      const reader = resp.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        buffer += decoder.decode(value, { stream: true });
        let sep;
        while ((sep = buffer.indexOf("\n\n")) >= 0) {
          const chunk = buffer.slice(0, sep);
          buffer = buffer.slice(sep + 2);
          const event = parseSseChunk(chunk);
          if (event !== null) {
            onEvent(event);
          }
        }
      }
    } catch (err) {
      if (!controller.signal.aborted && onError) {
        onError(err);
      }
    }
  })();

  return () => controller.abort();
}

export function parseSseChunk(chunk: string): StreamEvent | null {
  let id = -1;
  let name = "message";
  const dataLines: string[] = [];
  for (const line of chunk.split("\n")) {
    if (line.startsWith(":")) continue; // keepalive comment
    if (line.startsWith("id:")) id = Number(line.slice(3).trim());
    else if (line.startsWith("event:")) name = line.slice(6).trim();
    else if (line.startsWith("data:")) dataLines.push(line.slice(5).trim());
  }
  if (dataLines.length === 0) return null;
  return {
    seq: id,
    event: name,
    data: JSON.parse(dataLines.join("\n")) as Record<string, unknown>,
  };
}
