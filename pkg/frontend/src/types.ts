// Wire types mirroring the session service's JSON. The console renders these
// verbatim; it never derives levels or reversals on its own.

export interface PendingTrial {
  block: number;
  attempt: number;
  trial: number;
  sentence_id: string;
  text: string;
  words_total: number;
  level: number;
  snr: number;
  is_training: boolean;
}

export interface TrackPoint {
  block: number;
  attempt: number;
  trial: number;
  sentence_id: string;
  level: number;
  snr: number;
  words_total: number;
  words_correct: number;
  is_training: boolean;
}

export interface ReversalMark {
  block: number;
  attempt: number;
  trial: number | null;
  kind: "reversal_positive" | "reversal_negative";
  level: number | null;
}

export interface RestartMark {
  block: number;
  attempt: number;
  trial: number | null;
}

export interface BlockResult {
  kind: string;
  block: number;
  attempt: number;
  srt: number | null;
  midpoints: number[];
  n_midpoints: number;
  valid: boolean;
}

export interface SessionState {
  session_id: string;
  created_at: string;
  patient: Record<string, unknown>;
  condition: string;
  config: Record<string, number>;
  status: "running" | "complete" | "failed";
  fail_reason: string | null;
  block: number;
  attempt: number;
  phase: string;
  scored_in_block: number;
  block_length: number;
  blocks: number;
  pending: PendingTrial | null;
  track: TrackPoint[];
  reversals: ReversalMark[];
  restarts: RestartMark[];
  block_srts: BlockResult[];
  last_seq: number;
}

export interface SubmitAck {
  replayed: boolean;
  scored?: PendingTrial;
  words_correct?: number;
  events?: Array<Record<string, unknown>>;
  state?: SessionState;
}

export interface StreamEvent {
  seq: number;
  event: string;
  data: Record<string, unknown>;
}

export interface CreateSessionRequest {
  patient: Record<string, unknown>;
  condition?: string;
  config?: Record<string, number>;
  seed?: number;
  session_id?: string;
  created_at?: string;
}
