/**
 * The review-session controller: fetch -> decide -> submit -> advance.
 *
 * Wraps the API client and the pure state reducer; every transition goes
 * through `reduce`, so the session can be replayed from its event list.
 * Submissions made while the service is unreachable are queued locally
 * and flushed on the next successful contact.
 */

import { ApiError, type Decision, type QueueApi } from "./api.js";
import { canSubmit, initialState, reduce, type SessionEvent, type SessionState } from "./state.js";

export class ReviewSession {
  state: SessionState = initialState;
  readonly events: SessionEvent[] = [];

  constructor(private readonly api: QueueApi) {}

  private apply(event: SessionEvent): void {
    this.events.push(event);
    this.state = reduce(this.state, event);
  }

  /** Pull the next item (or empty/error state) from the service. */
  async fetchNext(): Promise<void> {
    try {
      const item = await this.api.fetchNext();
      this.apply(item === null ? { kind: "queue_empty" } : { kind: "item_loaded", item });
    } catch {
      this.apply({ kind: "fetch_failed" });
    }
  }

  /**
   * Submit the decision for the item on screen, then auto-advance.
   * Double-presses on the same item are ignored client-side (the service
   * is idempotent anyway). Network failures queue the submission locally.
   */
  async submit(decision: Decision): Promise<void> {
    const item = this.state.item;
    if (!item || !canSubmit(this.state, item.item_id)) return;
    try {
      await this.flushPending();
      await this.api.submit(item.item_id, decision);
      this.apply({ kind: "submit_ok", item_id: item.item_id });
    } catch (error) {
      if (error instanceof ApiError) {
        // rejected by the service: show inline, do not advance
        this.apply({ kind: "submit_rejected", message: error.message });
        return;
      }
      // transport failure: keep it locally and advance optimistically
      this.apply({ kind: "submit_offline", item_id: item.item_id, decision });
    }
    await this.fetchNext();
  }

  /** Replay offline submissions; keeps whatever still fails. */
  async flushPending(): Promise<void> {
    if (this.state.pending.length === 0) return;
    const flushed: string[] = [];
    for (const pending of this.state.pending) {
      try {
        await this.api.submit(pending.item_id, pending.decision);
        flushed.push(pending.item_id);
      } catch (error) {
        if (error instanceof ApiError) {
          flushed.push(pending.item_id); // permanently rejected: drop it
        }
        // transport failure: still offline, keep the rest queued
        else break;
      }
    }
    if (flushed.length > 0) {
      this.apply({ kind: "pending_flushed", item_ids: flushed });
    }
  }

  reveal(): void {
    this.apply({ kind: "reveal" });
  }

  acknowledgeBreak(): void {
    this.apply({ kind: "break_acknowledged" });
  }
}
