/**
 * Keyboard shortcuts for the review queue: 1-4 map to the four-way
 * decision scale, certain-toxic down to certain-clean.
 */

import type { Decision } from "./api.js";

export const KEY_DECISIONS: Record<string, Decision> = {
  "1": "yes",
  "2": "maybe_yes",
  "3": "maybe_no",
  "4": "no",
};

export function decisionForKey(key: string): Decision | null {
  return KEY_DECISIONS[key] ?? null;
}

export interface KeyTarget {
  tagName?: string;
  isContentEditable?: boolean;
}

/** Ignore shortcut keys while the annotator is typing somewhere. */
export function shouldHandleKey(
  key: string,
  target: KeyTarget | null,
  modifiers: { ctrlKey?: boolean; metaKey?: boolean; altKey?: boolean } = {},
): boolean {
  if (modifiers.ctrlKey || modifiers.metaKey || modifiers.altKey) return false;
  if (!(key in KEY_DECISIONS)) return false;
  const tag = target?.tagName?.toUpperCase();
  if (tag === "INPUT" || tag === "TEXTAREA" || tag === "SELECT") return false;
  if (target?.isContentEditable) return false;
  return true;
}
