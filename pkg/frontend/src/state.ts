/**
 * Pure view-state reduction for the console.
 *
 * Every transition is driven by a gateway response or stream event; there
 * is no speculative local state and no client-side authorization. Keeping
 * this module DOM-free makes the console's behavior unit-testable and the
 * rendering layer trivial.
 */

import type { ApiError, RequestView } from "./api.js";

export interface QueueState {
  pending: RequestView[];
  recentDecisions: RequestView[];
  connected: boolean;
}

export const emptyQueue: QueueState = {
  pending: [],
  recentDecisions: [],
  connected: false,
};

const RECENT_LIMIT = 20;

interface StreamPayload {
  alerts?: RequestView[];
  request?: RequestView;
}

export function reduceQueue(
  state: QueueState,
  eventName: string,
  payload: StreamPayload,
): QueueState {
  switch (eventName) {
    case "snapshot": {
      // Connection (re)opened: the server replays everything still pending.
      return { ...state, connected: true, pending: payload.alerts ?? [] };
    }
    case "alert": {
      const request = payload.request!;
      if (state.pending.some((r) => r.request_id === request.request_id)) {
        return state;
      }
      return { ...state, pending: [...state.pending, request] };
    }
    case "decided":
    case "expired":
    case "cancelled": {
      const request = payload.request!;
      const pending = state.pending.filter(
        (r) => r.request_id !== request.request_id,
      );
      const recentDecisions = [request, ...state.recentDecisions].slice(
        0, RECENT_LIMIT,
      );
      return { ...state, pending, recentDecisions };
    }
    default:
      return state;
  }
}

export function markDisconnected(state: QueueState): QueueState {
  return state.connected ? { ...state, connected: false } : state;
}

export interface DecisionRender {
  kind: "decided" | "conflict" | "expired" | "error";
  message: string;
}

/** Map a decision response onto what the approver sees. 409 renders who won. */
export function renderDecision(
  status: number,
  body: RequestView | null,
  error: ApiError | null,
): DecisionRender {
  if (status === 200 && body) {
    return { kind: "decided", message: `${body.state} by ${body.decider_id}` };
  }
  if (status === 409) {
    const decider = (error?.details?.decider_id as string) ?? "someone else";
    return { kind: "conflict", message: `already decided by ${decider}` };
  }
  if (status === 410) {
    return { kind: "expired", message: "request expired before the decision" };
  }
  return {
    kind: "error",
    message: error ? `${error.code}: ${error.message}` : `HTTP ${status}`,
  };
}

/**
 * Countdown anchored on the server clock.
 *
 * A view fetched at local time `fetchedAtMs` carries `server_now_us`; the
 * remaining lifetime of anything with an absolute `..._at_us` deadline is
 * (deadline - server_now) minus however long ago we fetched. That keeps the
 * ticking display within one poll interval of the server's truth without
 * trusting the local wall clock to agree with the server's.
 */
export function remainingSeconds(
  deadlineUs: number,
  serverNowUs: number,
  fetchedAtMs: number,
  nowMs: number,
): number {
  const elapsedSinceFetchUs = (nowMs - fetchedAtMs) * 1000;
  return (deadlineUs - serverNowUs - elapsedSinceFetchUs) / 1_000_000;
}

export interface TrackedGrant {
  requestId: string;
  state: string;
  deciderId: string | null;
  patient: string;
  purpose: string;
  /** null when no grant exists (pending, denied, expired requests) */
  secondsLeft: number | null;
  revoked: boolean;
  token: string | null;
}

export function trackRequests(
  mine: RequestView[],
  fetchedAtMs: number,
  nowMs: number,
): TrackedGrant[] {
  return mine.map((request) => {
    let secondsLeft: number | null = null;
    let revoked = false;
    let token: string | null = null;
    if (request.grant && request.server_now_us !== undefined) {
      secondsLeft = remainingSeconds(
        request.grant.expires_at_us, request.server_now_us, fetchedAtMs, nowMs,
      );
      revoked = request.grant.revoked;
      token = request.grant.token;
    }
    return {
      requestId: request.request_id,
      state: request.state,
      deciderId: request.decider_id,
      patient: request.patient_scope,
      purpose: request.purpose,
      secondsLeft,
      revoked,
      token,
    };
  });
}

export function grantBadge(grant: TrackedGrant): string {
  if (grant.secondsLeft === null) return "";
  if (grant.revoked) return "revoked";
  if (grant.secondsLeft <= 0) return "expired";
  const total = Math.floor(grant.secondsLeft);
  const minutes = Math.floor(total / 60);
  const seconds = total % 60;
  return `${minutes}:${String(seconds).padStart(2, "0")}`;
}

export function ageSeconds(request: RequestView, serverNowUs: number): number {
  return Math.max(0, (serverNowUs - request.created_at_us) / 1_000_000);
}
