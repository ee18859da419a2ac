// Session view-model. Holds the latest server state plus console-local
// bookkeeping (in-flight guard, notices, stream cursor). All test logic
// lives server-side: this file never computes a level, a reversal or an SRT.

import { ApiClient, ApiError, subscribeEvents } from "./api.js";
import type { CreateSessionRequest, SessionState, StreamEvent } from "./types.js";

export interface Notice {
  kind: "info" | "warn" | "error";
  text: string;
}

export interface View {
  state: SessionState | null;
  busy: boolean;
  connected: boolean;
  notices: Notice[];
}

type Listener = (view: View) => void;

function randomKey(): string {
  const cryptoObj = globalThis.crypto;
  if (cryptoObj && "randomUUID" in cryptoObj) {
    return cryptoObj.randomUUID();
  }
  return `k-${Date.now()}-${Math.random().toString(36).slice(2)}`;
}

export class SessionController {
  private view: View = { state: null, busy: false, connected: false, notices: [] };
  private listeners: Listener[] = [];
  private unsubscribe: (() => void) | null = null;
  private trialKey: string | null = null;
  private keyedTrial: string | null = null;

  constructor(readonly api: ApiClient) {}

  getView(): View {
    return this.view;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    listener(this.view);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(patch: Partial<View>): void {
    this.view = { ...this.view, ...patch };
    for (const listener of this.listeners) {
      listener(this.view);
    }
  }

  private notice(kind: Notice["kind"], text: string): void {
    const notices = [...this.view.notices.slice(-4), { kind, text }];
    this.emit({ notices });
  }

  private setState(state: SessionState): void {
    const pending = state.pending;
    const pendingRef = pending
      ? `${pending.block}:${pending.attempt}:${pending.trial}`
      : null;
    // one idempotency key per pending trial: a double click reuses it and
    // the server records exactly one trial
    if (pendingRef !== this.keyedTrial) {
      this.keyedTrial = pendingRef;
      this.trialKey = pendingRef === null ? null : randomKey();
    }
    this.emit({ state });
  }

  async create(req: CreateSessionRequest): Promise<SessionState> {
    const state = await this.api.createSession(req);
    this.setState(state);
    this.listen();
    return state;
  }

  async load(sessionId: string): Promise<SessionState> {
    const state = await this.api.getSession(sessionId);
    this.setState(state);
    this.listen();
    return state;
  }

  async refresh(): Promise<void> {
    const state = this.view.state;
    if (state === null) return;
    this.setState(await this.api.getSession(state.session_id));
  }

  private listen(): void {
    const state = this.view.state;
    if (state === null) return;
    if (this.unsubscribe !== null) {
      this.unsubscribe();
    }
    this.unsubscribe = subscribeEvents(
      this.api.eventsUrl(state.session_id, state.last_seq + 1),
      (event) => this.onEvent(event),
      () => this.emit({ connected: false }),
    );
    this.emit({ connected: true });
  }

  stop(): void {
    if (this.unsubscribe !== null) {
      this.unsubscribe();
      this.unsubscribe = null;
    }
    this.emit({ connected: false });
  }

  private refreshQueued = false;

  private onEvent(event: StreamEvent): void {
    // every stream event triggers one coalesced state refresh: the console
    // displays server state, it does not accumulate its own
    if (event.event === "session-complete") {
      this.notice("info", "session complete");
    }
    if (!this.refreshQueued) {
      this.refreshQueued = true;
      queueMicrotask(() => {
        this.refreshQueued = false;
        void this.refresh().catch(() => this.emit({ connected: false }));
      });
    }
  }

  /**
   * Score the pending trial with the examiner's correct-word count.
   * Double clicks reuse the same idempotency key; conflicts surface as a
   * non-blocking notice; network failures re-enable the same trial.
   */
  async scoreTrial(wordsCorrect: number): Promise<void> {
    const state = this.view.state;
    const pending = state?.pending ?? null;
    if (state === null || pending === null || this.trialKey === null) {
      this.notice("warn", "no trial awaiting a score");
      return;
    }
    if (this.view.busy) {
      this.notice("warn", "already submitting this trial");
      return;
    }
    this.emit({ busy: true });
    try {
      const ack = await this.api.submitTrial(
        state.session_id,
        wordsCorrect,
        this.trialKey,
        { block: pending.block, attempt: pending.attempt, trial: pending.trial },
      );
      if (ack.replayed) {
        this.notice("warn", "duplicate submit ignored by the server");
      }
      if (ack.state) {
        this.setState(ack.state);
      } else {
        await this.refresh();
      }
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.notice("warn", `conflict: ${err.message}`);
        await this.refresh();
      } else if (err instanceof ApiError) {
        this.notice("error", err.message);
      } else {
        // network failure: same trial, same key, examiner may retry
        this.notice("error", "network failure, trial left unscored");
      }
    } finally {
      this.emit({ busy: false });
    }
  }

  exportLog(): Promise<string> {
    const state = this.view.state;
    if (state === null) {
      return Promise.reject(new Error("no session loaded"));
    }
    return this.api.exportLog(state.session_id);
  }
}
