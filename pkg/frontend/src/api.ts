/** Typed client for the annotation service.
 *
 * Submissions are idempotent server-side on the (session, utterance)
 * pair, so the client retries a failed POST with the same body until it
 * is acknowledged; a 409 means the answer is already recorded and is
 * treated as an acknowledgement.
 */

export const EMOTIONS = ["anger", "excitement", "neutral", "sadness"] as const;
export type Emotion = (typeof EMOTIONS)[number];

export interface SessionInfo {
  session: string;
  assessor: string;
  warmup_remaining: number;
  warmup_size: number;
  main_total: number;
}

export interface NextInfo {
  done: boolean;
  utterance_id: string | null;
  is_warmup: boolean;
  warmup_remaining: number;
}

export interface LabelResult {
  correct_label: Emotion;
}

export interface Stats {
  n_labels: number;
  overall_accuracy: number;
  mean_class_accuracy: number;
  confusion: number[][];
  emotions: Emotion[];
  coverage: Record<string, number>;
  per_assessor_accuracy: Record<string, number>;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    private baseUrl = "",
    private fetchImpl: FetchLike = fetch,
    private retryDelayMs = 250,
    private maxRetries = 5,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = (await resp.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  startSession(assessor: string): Promise<SessionInfo> {
    return this.request<SessionInfo>("/api/session", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ assessor }),
    });
  }

  next(session: string): Promise<NextInfo> {
    return this.request<NextInfo>(
      `/api/next?session=${encodeURIComponent(session)}`,
    );
  }

  audioUrl(utteranceId: string): string {
    return `${this.baseUrl}/api/audio/${encodeURIComponent(utteranceId)}`;
  }

  /** Submit one answer; retries network failures with the same body.
   * Returns null when the server reports the answer as already
   * recorded (double-submit or a retry of an acked-but-lost response).
   */
  async submitLabel(
    session: string,
    utteranceId: string,
    answer: Emotion,
  ): Promise<LabelResult | null> {
    let lastError: unknown = null;
    for (let attempt = 0; attempt <= this.maxRetries; attempt++) {
      try {
        return await this.request<LabelResult>("/api/label", {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify({
            session,
            utterance_id: utteranceId,
            answer,
          }),
        });
      } catch (err) {
        if (err instanceof ApiError) {
          if (err.status === 409) return null; // already recorded
          throw err; // 4xx/5xx other than conflict: not retryable here
        }
        lastError = err; // network failure: same idempotent body again
        await new Promise((r) => setTimeout(r, this.retryDelayMs));
      }
    }
    throw lastError instanceof Error
      ? lastError
      : new Error("label submission failed after retries");
  }

  stats(): Promise<Stats> {
    return this.request<Stats>("/api/stats");
  }
}
