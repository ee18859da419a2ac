import { describe, expect, it } from "vitest";

import { buildTrackGeometry, geometryLevels } from "../src/chart.js";
import type { SessionState, TrackPoint } from "../src/types.js";

function point(
  block: number,
  attempt: number,
  trial: number,
  level: number,
  training = false,
): TrackPoint {
  return {
    block,
    attempt,
    trial,
    sentence_id: `s${trial}`,
    level,
    snr: level - 65,
    words_total: 5,
    words_correct: 3,
    is_training: training,
  };
}

function fixture(): SessionState {
  return {
    session_id: "fix-1",
    created_at: "2026-01-01T00:00:00Z",
    patient: { code: "fix" },
    condition: "SV0",
    config: {},
    status: "running",
    fail_reason: null,
    block: 1,
    attempt: 2,
    phase: "small_step",
    scored_in_block: 3,
    block_length: 31,
    blocks: 6,
    pending: null,
    track: [
      point(1, 1, 1, 72, true),
      point(1, 1, 2, 72, true),      // attempt 1 ended in a restart
      point(1, 2, 1, 72, true),
      point(1, 2, 2, 72, true),
      point(1, 2, 3, 72, true),
      point(1, 2, 4, 72),
      point(1, 2, 5, 68),
      point(1, 2, 6, 64),
      point(1, 2, 7, 66),
    ],
    reversals: [
      { block: 1, attempt: 2, trial: 6, kind: "reversal_positive", level: 64 },
    ],
    restarts: [{ block: 1, attempt: 1, trial: 2 }],
    block_srts: [
      {
        kind: "block_result",
        block: 1,
        attempt: 2,
        srt: 65,
        midpoints: [65],
        n_midpoints: 1,
        valid: false,
      },
    ],
    last_seq: 12,
  };
}

describe("buildTrackGeometry", () => {
  it("segments the track at restarts", () => {
    const geometry = buildTrackGeometry(fixture());
    expect(geometry.segments.length).toBe(2);
    expect(geometry.segments[0]!.attempt).toBe(1);
    expect(geometry.segments[0]!.points.length).toBe(2);
    expect(geometry.segments[1]!.attempt).toBe(2);
    expect(geometry.segments[1]!.points.length).toBe(7);
  });

  it("preserves the level sequence exactly", () => {
    const geometry = buildTrackGeometry(fixture());
    expect(geometryLevels(geometry)).toEqual([72, 72, 72, 72, 72, 72, 68, 64, 66]);
  });

  it("places reversal markers on their trial's point", () => {
    const geometry = buildTrackGeometry(fixture());
    expect(geometry.reversals.length).toBe(1);
    const marker = geometry.reversals[0]!;
    const trial6 = geometry.segments[1]!.points[5]!;
    expect(marker.x).toBeCloseTo(trial6.x, 6);
    expect(marker.y).toBeCloseTo(trial6.y, 6);
    expect(marker.kind).toBe("positive");
  });

  it("draws one horizontal line per block result", () => {
    const geometry = buildTrackGeometry(fixture());
    expect(geometry.srtLines.length).toBe(1);
    const line = geometry.srtLines[0]!;
    expect(line.srt).toBe(65);
    expect(line.valid).toBe(false);
    expect(line.fromX).toBeLessThan(line.toX);
  });

  it("orders levels top-down on the y axis", () => {
    const geometry = buildTrackGeometry(fixture());
    const points = geometry.segments[1]!.points;
    const at72 = points[0]!;
    const at64 = points[5]!;
    expect(at64.y).toBeGreaterThan(at72.y);   // lower level sits lower
  });

  it("copes with an empty track", () => {
    const state = { ...fixture(), track: [], reversals: [], block_srts: [] };
    const geometry = buildTrackGeometry(state);
    expect(geometry.segments.length).toBe(0);
    expect(geometry.yTicks.length).toBeGreaterThan(0);
  });
});
