// UI state transitions, kept pure for testing.

import { FrontReportDto, SampleResponse } from "./schema.js";

export type Connection = "connecting" | "ok" | "down";

export interface UiState {
  omega: number[];
  points: number[][];
  meanReward: number[] | null;
  front: FrontReportDto | null;
  frontError: string | null;
  connection: Connection;
  lastRenderedSeq: number;
}

export function initialState(m: number): UiState {
  return {
    omega: Array(m).fill(1 / m),
    points: [],
    meanReward: null,
    front: null,
    frontError: null,
    connection: "connecting",
    lastRenderedSeq: 0,
  };
}

export function withOmega(state: UiState, omega: number[]): UiState {
  return { ...state, omega };
}

export function withSample(state: UiState, seq: number, resp: SampleResponse): UiState {
  if (seq < state.lastRenderedSeq) return state; // stale response, discard
  return {
    ...state,
    points: resp.points,
    meanReward: resp.mean_reward,
    omega: resp.omega,
    connection: "ok",
    lastRenderedSeq: seq,
  };
}

export function withFront(state: UiState, front: FrontReportDto): UiState {
  return { ...state, front, frontError: null, connection: "ok" };
}

export function withFrontError(state: UiState, message: string): UiState {
  return { ...state, front: null, frontError: message };
}

export function withConnectionDown(state: UiState): UiState {
  return { ...state, connection: "down" };
}

// Index of the front point whose preference tag is closest to the live omega;
// used to highlight the active operating point on the overlay.
export function activeFrontIndex(state: UiState): number | null {
  if (!state.front || state.front.points.length === 0) return null;
  let best = 0;
  let bestDist = Infinity;
  state.front.points.forEach((p, i) => {
    const match = p.label.match(/omega=\[([^\]]+)\]/);
    if (!match) return;
    const w = match[1].split(",").map(Number);
    const d = w.reduce((acc, v, j) => acc + (v - (state.omega[j] ?? 0)) ** 2, 0);
    if (d < bestDist) {
      bestDist = d;
      best = i;
    }
  });
  return bestDist === Infinity ? null : best;
}
