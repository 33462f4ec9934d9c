import { describe, expect, it } from "vitest";

import { ApiError, QueueApi, type QueueItemView } from "../src/api.js";
import { agreementRows, progressView } from "../src/dashboard.js";
import { formatCell, formatInterval, formatPercent } from "../src/format.js";
import { decisionForKey, shouldHandleKey } from "../src/keyboard.js";
import { ReviewSession } from "../src/queue.js";
import { canSubmit, initialState, reduce } from "../src/state.js";

function item(id = "anon_msg_000000000001", contentWarning = false): QueueItemView {
  return {
    item_id: id,
    text: "un message à relire",
    priority: 0.5,
    summary: "résumé",
    tones: [["Agressif", 70]],
    score: 7,
    justification: "ton hostile",
    model_decision: "toxic",
    content_warning: contentWarning,
  };
}

type Handler = (input: string, init?: RequestInit) => Promise<Response>;

/** Tiny scripted fetch: route handlers keyed by method+path prefix. */
function fakeFetch(routes: Record<string, (init?: RequestInit) => unknown>): Handler & {
  calls: string[];
} {
  const calls: string[] = [];
  const handler = (async (input: string, init?: RequestInit) => {
    const method = init?.method ?? "GET";
    const key = Object.keys(routes).find((k) => input.includes(k.split(" ")[1]) &&
      method === k.split(" ")[0]);
    calls.push(`${method} ${input}`);
    if (!key) {
      return new Response(JSON.stringify({ detail: "not found" }), { status: 404 });
    }
    const body = routes[key](init);
    if (body instanceof Response) return body;
    return new Response(JSON.stringify(body), { status: 200 });
  }) as Handler & { calls: string[] };
  handler.calls = calls;
  return handler;
}

describe("keyboard mapping", () => {
  it("maps 1-4 to the four-way scale", () => {
    expect(decisionForKey("1")).toBe("yes");
    expect(decisionForKey("2")).toBe("maybe_yes");
    expect(decisionForKey("3")).toBe("maybe_no");
    expect(decisionForKey("4")).toBe("no");
    expect(decisionForKey("5")).toBeNull();
  });

  it("ignores keys while typing or with modifiers", () => {
    expect(shouldHandleKey("1", { tagName: "INPUT" })).toBe(false);
    expect(shouldHandleKey("1", { tagName: "TEXTAREA" })).toBe(false);
    expect(shouldHandleKey("1", { isContentEditable: true })).toBe(false);
    expect(shouldHandleKey("1", null, { ctrlKey: true })).toBe(false);
    expect(shouldHandleKey("1", { tagName: "BODY" })).toBe(true);
  });
});

describe("state reducer", () => {
  it("renders an item and blurs flagged content", () => {
    const flagged = reduce(initialState, { kind: "item_loaded", item: item("a", true) });
    expect(flagged.phase).toBe("item");
    expect(flagged.revealed).toBe(false);
    const revealed = reduce(flagged, { kind: "reveal" });
    expect(revealed.revealed).toBe(true);

    const clean = reduce(initialState, { kind: "item_loaded", item: item("b", false) });
    expect(clean.revealed).toBe(true);
  });

  it("empty queue and fetch failure states", () => {
    expect(reduce(initialState, { kind: "queue_empty" }).phase).toBe("empty");
    const failed = reduce(initialState, { kind: "fetch_failed" });
    expect(failed.phase).toBe("error");
    expect(failed.retryBanner).toBe(true);
  });

  it("double submissions are blocked per item", () => {
    let state = reduce(initialState, { kind: "item_loaded", item: item("a") });
    expect(canSubmit(state, "a")).toBe(true);
    state = reduce(state, { kind: "submit_ok", item_id: "a" });
    expect(canSubmit(state, "a")).toBe(false);
  });

  it("a rejected submit shows inline error and does not advance", () => {
    let state = reduce(initialState, { kind: "item_loaded", item: item("a") });
    state = reduce(state, { kind: "submit_rejected", message: "unknown annotator" });
    expect(state.phase).toBe("item");
    expect(state.item?.item_id).toBe("a");
    expect(state.inlineError).toContain("unknown annotator");
  });

  it("break reminder fires every 25 labeled items", () => {
    let state = initialState;
    for (let i = 0; i < 25; i += 1) {
      state = reduce(state, { kind: "item_loaded", item: item(`i${i}`) });
      state = reduce(state, { kind: "submit_ok", item_id: `i${i}` });
    }
    expect(state.breakDue).toBe(true);
    state = reduce(state, { kind: "break_acknowledged" });
    expect(state.breakDue).toBe(false);
  });

  it("is a pure function of the event list (replayable)", () => {
    const events = [
      { kind: "item_loaded", item: item("a") },
      { kind: "submit_ok", item_id: "a" },
      { kind: "item_loaded", item: item("b", true) },
      { kind: "reveal" },
    ] as const;
    const run = () => events.reduce((s, e) => reduce(s, e), initialState);
    expect(run()).toEqual(run());
  });
});

describe("review session", () => {
  it("fetches, submits, advances", async () => {
    const items = [item("a"), item("b")];
    const submitted: string[] = [];
    const fetchImpl = fakeFetch({
      "GET /api/queue/next": () =>
        items.length > 0 ? items.shift()! : { empty: true },
      "POST /api/labels": (init) => {
        const body = JSON.parse(String(init?.body));
        submitted.push(`${body.item_id}:${body.decision}`);
        return { item_id: body.item_id, annotator_id: body.annotator_id,
                 decision: body.decision, ts: 0 };
      },
    });
    const session = new ReviewSession(new QueueApi("", "anna", fetchImpl));
    await session.fetchNext();
    expect(session.state.item?.item_id).toBe("a");
    await session.submit("maybe_yes");
    expect(submitted).toEqual(["a:maybe_yes"]);
    expect(session.state.item?.item_id).toBe("b");
    await session.submit("no");
    expect(session.state.phase).toBe("empty");
  });

  it("unreachable service raises the retry banner", async () => {
    const failing = (async () => {
      throw new TypeError("network down");
    }) as unknown as Handler;
    const session = new ReviewSession(new QueueApi("", "anna", failing));
    await session.fetchNext();
    expect(session.state.retryBanner).toBe(true);
  });

  it("offline submissions are queued locally and flushed", async () => {
    let online = false;
    const submitted: string[] = [];
    const fetchImpl = (async (input: string, init?: RequestInit) => {
      if (!online) throw new TypeError("offline");
      if ((init?.method ?? "GET") === "POST") {
        const body = JSON.parse(String(init?.body));
        submitted.push(`${body.item_id}:${body.decision}`);
        return new Response(JSON.stringify({ ...body, ts: 0 }), { status: 200 });
      }
      return new Response(JSON.stringify({ empty: true }), { status: 200 });
    }) as Handler;

    const session = new ReviewSession(new QueueApi("", "anna", fetchImpl));
    // hand the session an item, then go offline for the submit
    session.state = reduce(initialState, { kind: "item_loaded", item: item("a") });
    await session.submit("yes");
    expect(session.state.pending).toEqual([{ item_id: "a", decision: "yes" }]);
    expect(submitted).toEqual([]);

    online = true;
    await session.flushPending();
    expect(submitted).toEqual(["a:yes"]);
    expect(session.state.pending).toEqual([]);
  });

  it("double-press submits once", async () => {
    const submitted: string[] = [];
    const fetchImpl = fakeFetch({
      "GET /api/queue/next": () => ({ empty: true }),
      "POST /api/labels": (init) => {
        const body = JSON.parse(String(init?.body));
        submitted.push(body.item_id);
        return { ...body, ts: 0 };
      },
    });
    const session = new ReviewSession(new QueueApi("", "anna", fetchImpl));
    session.state = reduce(initialState, { kind: "item_loaded", item: item("a") });
    await Promise.all([]);
    await session.submit("yes");
    await session.submit("yes"); // second press: same item already submitted
    expect(submitted).toEqual(["a"]);
  });
});

describe("formatting", () => {
  it("renders interval strings as [lo, hi] percent", () => {
    expect(formatInterval([0.96, 0.994])).toBe("[96.0, 99.4%]");
    expect(formatInterval([0.0, 0.015])).toBe("[0.0, 1.5%]");
  });

  it("renders rates with one decimal below 10%", () => {
    expect(formatPercent(0.984)).toBe("98%");
    expect(formatPercent(0.076)).toBe("7.6%");
  });

  it("combines rate and interval", () => {
    expect(formatCell(1.0, [0.3423802275066532, 1.0])).toBe("100% [34.2, 100.0%]");
  });
});

describe("dashboard view models", () => {
  it("progress view", () => {
    const view = progressView({
      total: 50, auto_labeled: 35, in_queue: 5, human_resolved: 10,
      decisions: 12, annotators: ["a"],
    });
    expect(view.labeled).toBe(45);
    expect(view.remaining).toBe(5);
    expect(view.percentDone).toBeCloseTo(90);
  });

  it("zero labels give zero progress", () => {
    const view = progressView({
      total: 0, auto_labeled: 0, in_queue: 0, human_resolved: 0,
      decisions: 0, annotators: [],
    });
    expect(view.percentDone).toBe(0);
  });

  it("agreement rows keep the service's Wilson intervals", () => {
    const cell = (count: number, trials: number, rate: number,
                  interval: [number, number]) => ({ count, trials, rate, interval });
    const rows = agreementRows({
      pairs: 2,
      columns: {
        toxic: {
          grouped_yes: cell(2, 2, 1.0, [0.3423802275066532, 1.0]),
          yes: cell(2, 2, 1.0, [0.3423802275066532, 1.0]),
          maybe_yes: cell(0, 2, 0.0, [0.0, 0.6576197724933468]),
          grouped_no: cell(0, 2, 0.0, [0.0, 0.6576197724933468]),
          maybe_no: cell(0, 2, 0.0, [0.0, 0.6576197724933468]),
          no: cell(0, 2, 0.0, [0.0, 0.6576197724933468]),
        },
      },
    });
    expect(rows[0].response).toBe("grouped_yes");
    expect(rows[0].cells[0].text).toBe("100% [34.2, 100.0%]");
  });
});

describe("api client errors", () => {
  it("401 surfaces as ApiError with detail", async () => {
    const fetchImpl = (async () =>
      new Response(JSON.stringify({ detail: "unknown annotator 'ghost'" }),
        { status: 401 })) as Handler;
    const api = new QueueApi("", "ghost", fetchImpl);
    await expect(api.submit("anon_msg_000000000001", "yes")).rejects.toThrowError(ApiError);
  });
});
