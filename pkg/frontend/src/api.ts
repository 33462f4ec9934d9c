/**
 * Typed client over the annotation-service HTTP API.
 *
 * Every mutation in the UI goes through these functions; nothing else
 * talks to the network, so the service API is the single write path.
 */

export type Decision = "yes" | "maybe_yes" | "maybe_no" | "no";

export interface QueueItemView {
  item_id: string;
  text: string;
  priority: number;
  summary: string;
  tones: [string, number][];
  score: number;
  justification: string;
  model_decision: "toxic" | "non_toxic";
  content_warning: boolean;
}

export interface SubmitResult {
  item_id: string;
  annotator_id: string;
  decision: Decision;
  ts: number;
}

export interface Progress {
  total: number;
  auto_labeled: number;
  in_queue: number;
  human_resolved: number;
  decisions: number;
  annotators: string[];
}

export interface AgreementCell {
  count: number;
  trials: number;
  rate: number;
  interval: [number, number];
}

export interface AgreementTable {
  pairs: number;
  columns: Record<string, Record<string, AgreementCell>>;
  warnings?: string[];
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class QueueApi {
  constructor(
    readonly baseUrl: string,
    readonly annotator: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  /** Next leased item, or null when the queue is empty. */
  async fetchNext(): Promise<QueueItemView | null> {
    const url = `${this.baseUrl}/api/queue/next?annotator=${encodeURIComponent(this.annotator)}`;
    const body = await asJson<QueueItemView | { empty: true }>(await this.fetchImpl(url));
    return "empty" in body ? null : body;
  }

  async submit(itemId: string, decision: Decision): Promise<SubmitResult> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/labels`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        item_id: itemId,
        annotator_id: this.annotator,
        decision,
      }),
    });
    return asJson<SubmitResult>(response);
  }

  async progress(): Promise<Progress> {
    return asJson<Progress>(await this.fetchImpl(`${this.baseUrl}/api/stats/progress`));
  }

  async agreement(a: string, b: string): Promise<AgreementTable> {
    const url = `${this.baseUrl}/api/stats/agreement?a=${encodeURIComponent(a)}&b=${encodeURIComponent(b)}`;
    return asJson<AgreementTable>(await this.fetchImpl(url));
  }
}
