/**
 * Review-session state: a pure reducer over service responses and local
 * pending submissions. Replaying the same events always reproduces the
 * same state, which is what the tests do.
 */

import type { Decision, QueueItemView } from "./api.js";

export const BREAK_EVERY = 25; // labeled items between break reminders

export interface PendingSubmission {
  item_id: string;
  decision: Decision;
}

export interface SessionState {
  phase: "loading" | "item" | "empty" | "error";
  item: QueueItemView | null;
  /** item ids already submitted this session; guards double-presses */
  submitted: string[];
  /** submissions captured while offline, flushed when back online */
  pending: PendingSubmission[];
  labeledCount: number;
  breakDue: boolean;
  revealed: boolean;
  inlineError: string | null;
  retryBanner: boolean;
}

export const initialState: SessionState = {
  phase: "loading",
  item: null,
  submitted: [],
  pending: [],
  labeledCount: 0,
  breakDue: false,
  revealed: false,
  inlineError: null,
  retryBanner: false,
};

export type SessionEvent =
  | { kind: "item_loaded"; item: QueueItemView }
  | { kind: "queue_empty" }
  | { kind: "fetch_failed" }
  | { kind: "submit_ok"; item_id: string }
  | { kind: "submit_rejected"; message: string }
  | { kind: "submit_offline"; item_id: string; decision: Decision }
  | { kind: "pending_flushed"; item_ids: string[] }
  | { kind: "reveal" }
  | { kind: "break_acknowledged" };

export function reduce(state: SessionState, event: SessionEvent): SessionState {
  switch (event.kind) {
    case "item_loaded":
      return {
        ...state,
        phase: "item",
        item: event.item,
        // content-warning blur stays on until the annotator reveals
        revealed: !event.item.content_warning,
        inlineError: null,
        retryBanner: false,
      };
    case "queue_empty":
      return { ...state, phase: "empty", item: null, retryBanner: false };
    case "fetch_failed":
      return { ...state, phase: "error", retryBanner: true };
    case "submit_ok": {
      const labeled = state.labeledCount + 1;
      return {
        ...state,
        submitted: [...state.submitted, event.item_id],
        labeledCount: labeled,
        breakDue: labeled > 0 && labeled % BREAK_EVERY === 0,
        inlineError: null,
      };
    }
    case "submit_rejected":
      // no advance: the item stays on screen with the error inline
      return { ...state, inlineError: event.message };
    case "submit_offline":
      return {
        ...state,
        pending: [...state.pending, { item_id: event.item_id, decision: event.decision }],
        submitted: [...state.submitted, event.item_id],
      };
    case "pending_flushed":
      return {
        ...state,
        pending: state.pending.filter((p) => !event.item_ids.includes(p.item_id)),
        labeledCount: state.labeledCount + event.item_ids.length,
      };
    case "reveal":
      return { ...state, revealed: true };
    case "break_acknowledged":
      return { ...state, breakDue: false };
  }
}

/** A decision is submittable once per item per session. */
export function canSubmit(state: SessionState, itemId: string): boolean {
  return (
    state.phase === "item" &&
    state.item !== null &&
    state.item.item_id === itemId &&
    !state.submitted.includes(itemId)
  );
}
