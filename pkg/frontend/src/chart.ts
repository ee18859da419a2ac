// Pure chart geometry: level track, reversal markers, per-block SRT lines.
// Takes server state, returns plot coordinates; rendering is a separate
// concern and the numbers here are asserted against the exported log.

import type { SessionState } from "./types.js";

export interface ChartPoint {
  x: number;
  y: number;
  level: number;
  block: number;
  attempt: number;
  trial: number;
  isTraining: boolean;
  correct: number;
  total: number;
}

export interface ChartSegment {
  block: number;
  attempt: number;
  points: ChartPoint[];
}

export interface ReversalMarker {
  x: number;
  y: number;
  kind: "positive" | "negative";
}

export interface SrtLine {
  y: number;
  block: number;
  srt: number;
  valid: boolean;
  fromX: number;
  toX: number;
}

export interface ChartGeometry {
  width: number;
  height: number;
  segments: ChartSegment[];
  reversals: ReversalMarker[];
  srtLines: SrtLine[];
  yTicks: Array<{ y: number; label: string }>;
  levelRange: [number, number];
}

const MARGIN = { left: 42, right: 10, top: 8, bottom: 18 };

export function buildTrackGeometry(
  state: SessionState,
  width = 720,
  height = 260,
): ChartGeometry {
  const track = state.track;
  const levels = track.map((t) => t.level);
  for (const r of state.block_srts) {
    if (r.srt !== null) levels.push(r.srt);
  }
  const lo = levels.length > 0 ? Math.min(...levels) - 2 : 50;
  const hi = levels.length > 0 ? Math.max(...levels) + 2 : 80;
  const innerW = width - MARGIN.left - MARGIN.right;
  const innerH = height - MARGIN.top - MARGIN.bottom;
  const n = Math.max(track.length, 1);

  const xAt = (i: number): number =>
    MARGIN.left + (n === 1 ? innerW / 2 : (i / (n - 1)) * innerW);
  const yAt = (level: number): number =>
    MARGIN.top + (hi === lo ? innerH / 2 : ((hi - level) / (hi - lo)) * innerH);

  const segments: ChartSegment[] = [];
  const segmentIndex = new Map<string, ChartSegment>();
  const pointAt = new Map<string, ChartPoint>();
  track.forEach((t, i) => {
    const key = `${t.block}:${t.attempt}`;
    let segment = segmentIndex.get(key);
    if (segment === undefined) {
      segment = { block: t.block, attempt: t.attempt, points: [] };
      segmentIndex.set(key, segment);
      segments.push(segment);
    }
    const point: ChartPoint = {
      x: xAt(i),
      y: yAt(t.level),
      level: t.level,
      block: t.block,
      attempt: t.attempt,
      trial: t.trial,
      isTraining: t.is_training,
      correct: t.words_correct,
      total: t.words_total,
    };
    segment.points.push(point);
    pointAt.set(`${t.block}:${t.attempt}:${t.trial}`, point);
  });

  const reversals: ReversalMarker[] = [];
  for (const r of state.reversals) {
    const point = pointAt.get(`${r.block}:${r.attempt}:${r.trial}`);
    if (point !== undefined) {
      reversals.push({
        x: point.x,
        y: point.y,
        kind: r.kind === "reversal_positive" ? "positive" : "negative",
      });
    }
  }

  const srtLines: SrtLine[] = [];
  for (const result of state.block_srts) {
    if (result.srt === null) continue;
    const segment = segmentIndex.get(`${result.block}:${result.attempt}`);
    const first = segment?.points[0];
    const last = segment?.points[segment.points.length - 1];
    srtLines.push({
      y: yAt(result.srt),
      block: result.block,
      srt: result.srt,
      valid: result.valid,
      fromX: first ? first.x : MARGIN.left,
      toX: last ? last.x : width - MARGIN.right,
    });
  }

  const yTicks: Array<{ y: number; label: string }> = [];
  const step = hi - lo > 30 ? 10 : 5;
  for (let level = Math.ceil(lo / step) * step; level <= hi; level += step) {
    yTicks.push({ y: yAt(level), label: `${level}` });
  }

  return {
    width,
    height,
    segments,
    reversals,
    srtLines,
    yTicks,
    levelRange: [lo, hi],
  };
}

/** Level sequence encoded in the geometry, for comparison with the log. */
export function geometryLevels(geometry: ChartGeometry): number[] {
  const points = geometry.segments.flatMap((s) => s.points);
  return points.map((p) => p.level);
}
