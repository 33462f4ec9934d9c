/**
 * Integration against the live annotation service: spawns the Python
 * queue server on a free port with a generated fixture, then drives the
 * real UI modules (keyboard mapping -> session -> HTTP client) against it.
 *
 * The tests in this file share one service instance and run in order:
 * the two agreement annotators take the head of the priority queue first,
 * the keyboard and idempotence checks then work through the remainder.
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { QueueApi } from "../src/api.js";
import { agreementRows } from "../src/dashboard.js";
import { decisionForKey } from "../src/keyboard.js";
import { ReviewSession } from "../src/queue.js";

const PYTHON = process.env.TOXIPIPE_PYTHON ?? "python3";

// wilson_interval(2, 2, alpha=0.05) from the service's stats module;
// the dashboard cell must carry exactly this value
const WILSON_2_OF_2: [number, number] = [0.3423802275066532, 1.0];

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const server = createServer();
    server.listen(0, "127.0.0.1", () => {
      const address = server.address();
      if (address && typeof address === "object") {
        const port = address.port;
        server.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

function writeFixture(dir: string): string {
  // 8 queued items: toxic annotations routed to the human queue
  const script = `
import json
from toxipipe.synth import synthetic_annotation, synthetic_comment_text
import random

rng = random.Random(3)
rows = []
for i in range(8):
    text = synthetic_comment_text(rng, toxic=True)
    ann = synthetic_annotation(text)
    assert ann.score > 3, text
    rows.append({
        "id": f"anon_msg_{i:012x}",
        "text": text,
        "timestamp": "2021-01-01T00:00:00+00:00",
        "word_count": len(text.split()),
        "weak_signal": 0.5,
        "state": "preannotated",
        "annotation": ann.to_json_dict(),
    })
path = ${JSON.stringify(join(dir, "annotated.jsonl"))}
with open(path, "w", encoding="utf-8") as fh:
    for row in rows:
        fh.write(json.dumps(row, ensure_ascii=False) + "\\n")
print(path)
`;
  const result = spawnSync(PYTHON, ["-c", script], { encoding: "utf-8" });
  if (result.status !== 0) {
    throw new Error(`fixture generation failed: ${result.stderr}`);
  }
  return result.stdout.trim();
}

async function waitForService(base: string, timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${base}/api/stats/progress`);
      if (response.ok) return;
    } catch (error) {
      lastError = error;
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error(`service did not come up: ${lastError}`);
}

async function itemDecisions(
  base: string,
  itemId: string,
  annotator: string,
): Promise<string[]> {
  const detail = (await (await fetch(`${base}/api/items/${itemId}`)).json()) as {
    decisions: { annotator: string; decision: string }[];
  };
  return detail.decisions.filter((d) => d.annotator === annotator).map((d) => d.decision);
}

describe("review UI against the live service", () => {
  let child: ChildProcess;
  let base: string;

  beforeAll(async () => {
    const dir = mkdtempSync(join(tmpdir(), "review-ui-"));
    const fixture = writeFixture(dir);
    const port = await freePort();
    base = `http://127.0.0.1:${port}`;
    child = spawn(
      PYTHON,
      ["-m", "toxipipe.cli", "serve", "--data", dir, "--port", String(port),
       "--annotations", fixture, "--decisions-per-item", "2"],
      { stdio: ["ignore", "ignore", "ignore"] },
    );
    await waitForService(base);
  }, 60000);

  afterAll(() => {
    child?.kill("SIGTERM");
  });

  it("dashboard agreement cell equals the service stats value", async () => {
    // shared fixture: anna says yes, bob says maybe_yes, on the same two
    // items (bob is served exactly the items anna left one decision on)
    const anna = new ReviewSession(new QueueApi(base, "anna"));
    const bob = new ReviewSession(new QueueApi(base, "bob"));
    const annaItems: string[] = [];
    for (let i = 0; i < 2; i += 1) {
      await anna.fetchNext();
      annaItems.push(anna.state.item!.item_id);
      await anna.submit("yes");
    }
    const bobItems: string[] = [];
    for (let i = 0; i < 2; i += 1) {
      await bob.fetchNext();
      bobItems.push(bob.state.item!.item_id);
      await bob.submit(decisionForKey("2")!);
    }
    expect(bobItems.sort()).toEqual(annaItems.sort());

    const api = new QueueApi(base, "anna");
    const table = await api.agreement("anna", "bob");
    expect(table.pairs).toBe(2);
    const cell = table.columns["toxic"]["grouped_yes"];
    expect(cell.rate).toBe(1.0);
    expect(cell.interval[0]).toBeCloseTo(WILSON_2_OF_2[0], 12);
    expect(cell.interval[1]).toBeCloseTo(WILSON_2_OF_2[1], 12);

    const rows = agreementRows(table);
    const grouped = rows.find((row) => row.response === "grouped_yes")!;
    expect(grouped.cells[0].text).toBe("100% [34.2, 100.0%]");
  }, 30000);

  it("keyboard decisions 1-4 store the matching four-way values", async () => {
    const session = new ReviewSession(new QueueApi(base, "keys"));
    const stored: Record<string, string> = {};
    for (const key of ["1", "2", "3", "4"]) {
      await session.fetchNext();
      const item = session.state.item;
      expect(item).not.toBeNull();
      const decision = decisionForKey(key)!;
      stored[item!.item_id] = decision;
      await session.submit(decision);
    }
    for (const [itemId, expected] of Object.entries(stored)) {
      expect(await itemDecisions(base, itemId, "keys")).toEqual([expected]);
    }
  }, 30000);

  it("double-submit stores a single decision", async () => {
    const api = new QueueApi(base, "double");
    const session = new ReviewSession(api);
    await session.fetchNext();
    const itemId = session.state.item!.item_id;
    await session.submit("maybe_no");
    // the UI guard skips the repeat; also hit the API directly to prove
    // the service itself is idempotent
    await api.submit(itemId, "maybe_no");
    await api.submit(itemId, "maybe_no");
    const mine = await itemDecisions(base, itemId, "double");
    expect(mine).toEqual(["maybe_no"]);
  }, 30000);
});
