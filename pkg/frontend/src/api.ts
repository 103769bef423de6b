// Typed client over the service HTTP API. All scoring and validation
// happens server-side; this module only moves JSON and raises typed errors.

export interface ErrorBody {
  error_code: string;
  message: string;
  detail: unknown;
}

export class ApiError extends Error {
  status: number;
  errorCode: string;
  detail: unknown;

  constructor(status: number, body: ErrorBody) {
    super(body.message);
    this.status = status;
    this.errorCode = body.error_code;
    this.detail = body.detail;
  }
}

export interface PaintingCard {
  painting_id: string;
  title: string;
  artist: string;
  date: string;
  image_url: string;
}

export interface Sample extends PaintingCard {
  label: string;
}

export interface Instruments {
  moods: { positive: string[]; negative: string[]; neutral: string };
  panas_items: string[];
  panas_range: [number, number];
  neutral_range: [number, number];
  phq4_items: number;
  phq4_range: [number, number];
  quality_variables: string[];
  quality_range: [number, number];
}

export interface Bootstrap {
  samples: Sample[];
  prompts: string[];
  instruments: Instruments;
}

export interface Recommendation extends PaintingCard {
  score: number;
  prompt: string;
}

export interface SessionView {
  session_id: string;
  participant_id: string;
  group: string;
  state: string;
  next_step: string | null;
  chosen_sample: string | null;
  recommendations: Recommendation[] | null;
  reflections: unknown[];
  completion_index: number | null;
  event_count: number;
}

export interface AffectBody {
  mood: string;
  panas: Record<string, number>;
  neutral_item: number;
}

export interface EngineInfo {
  engine_id: string;
  kind: string;
  status: string;
  m: number | null;
  previews: Record<string, (PaintingCard & { score: number })[]>;
}

export interface GateDecision {
  engine_id: string;
  mean_rating: number;
  veto_count: number;
  eligible: boolean;
  threshold: number;
  policy_version: string;
}

export interface RatingRecord {
  expert_id: string;
  engine_id: string;
  sample_id: string;
  rank: number;
  rating: number;
  comment: string;
}

export function newIdempotencyKey(): string {
  if (typeof crypto !== "undefined" && crypto.randomUUID) return crypto.randomUUID();
  return `k-${Date.now()}-${Math.random().toString(36).slice(2)}`;
}

export class Client {
  baseUrl: string;
  adminToken: string | null;

  constructor(baseUrl: string, adminToken: string | null = null) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.adminToken = adminToken;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.adminToken) headers["X-Admin-Token"] = this.adminToken;
    const resp = await fetch(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await resp.text();
    let parsed: unknown = null;
    try {
      parsed = text ? JSON.parse(text) : null;
    } catch {
      parsed = null;
    }
    if (!resp.ok) {
      const fallback: ErrorBody = {
        error_code: `http_${resp.status}`,
        message: text || resp.statusText,
        detail: null,
      };
      const errBody =
        parsed && typeof parsed === "object" && "error_code" in (parsed as object)
          ? (parsed as ErrorBody)
          : fallback;
      throw new ApiError(resp.status, errBody);
    }
    return parsed as T;
  }

  bootstrap(): Promise<Bootstrap> {
    return this.request("GET", "/samples");
  }

  imageUrl(paintingId: string): string {
    return `${this.baseUrl}/paintings/${paintingId}/image`;
  }

  createSession(body: Record<string, unknown>, key: string): Promise<SessionView> {
    return this.request("POST", "/sessions", { ...body, idempotency_key: key });
  }

  getSession(sid: string): Promise<SessionView> {
    return this.request("GET", `/sessions/${sid}`);
  }

  submitBaseline(sid: string, affect: AffectBody, phq4: number[], key: string): Promise<SessionView> {
    return this.request("POST", `/sessions/${sid}/baseline`, {
      ...affect,
      phq4,
      idempotency_key: key,
    });
  }

  submitPreference(sid: string, chosen: string, key: string): Promise<SessionView> {
    return this.request("POST", `/sessions/${sid}/preference`, { chosen, idempotency_key: key });
  }

  submitReflection(sid: string, i: number, text: string, key: string): Promise<SessionView> {
    return this.request("POST", `/sessions/${sid}/reflection/${i}`, {
      text,
      idempotency_key: key,
    });
  }

  submitPostAffect(sid: string, affect: AffectBody, key: string): Promise<SessionView> {
    return this.request("POST", `/sessions/${sid}/post-affect`, {
      ...affect,
      idempotency_key: key,
    });
  }

  submitQuality(sid: string, ratings: Record<string, number>, key: string): Promise<SessionView> {
    return this.request("POST", `/sessions/${sid}/ratings`, { ...ratings, idempotency_key: key });
  }

  engines(): Promise<{ engines: EngineInfo[] }> {
    return this.request("GET", "/engines");
  }

  submitGateRatings(ratings: RatingRecord[], threshold?: number): Promise<{ decisions: GateDecision[] }> {
    const body: Record<string, unknown> = { ratings };
    if (threshold !== undefined) body.threshold = threshold;
    return this.request("POST", "/gate/ratings", body);
  }

  gateDecisions(): Promise<{ decisions: GateDecision[] }> {
    return this.request("GET", "/gate/decisions");
  }
}
