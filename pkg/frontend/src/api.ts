/**
 * HTTP client for the teaching service's JSON API.
 *
 * Failures arrive as an envelope {"error": {"rule", "detail", ...}} with
 * a matching status code; they surface here as ApiError so views can
 * show the rule id next to the message.
 */

export interface InstructionItem {
  id: string;
  text: string;
  used: boolean;
  created_at: string;
}

export interface DemoItem {
  id: string;
  used: boolean;
  seq: number;
  steps: number;
  created_at: string;
}

export interface Snapshot {
  session: string;
  kind: "structured" | "dense";
  version: number;
  trained: boolean;
  submitted: boolean;
  summary_available: boolean;
  instructions: InstructionItem[];
  demos: DemoItem[];
  trials: number;
  rollouts: number;
  rollouts_total: number;
  events: number;
  eval: { columns: number; rows: number } | null;
}

export interface JobReport {
  job: string;
  session: string;
  kind: string;
  status: "queued" | "running" | "done" | "failed";
  progress: { phase?: string; done?: number; total?: number };
  version?: number;
  error?: { rule: string; detail: string };
}

export interface TrialPoint {
  at: string;
  version: number;
  track: number;
  eas: number;
  termination: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public rule: string,
    public detail: string,
    public extra: Record<string, unknown> = {},
  ) {
    super(`[${rule}] ${detail}`);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class Client {
  constructor(
    private base: string,
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(`${this.base}/api/v1${path}`, init);
    const data = await response.json();
    if (!response.ok) {
      const err = (data?.error ?? {}) as Record<string, unknown>;
      const { rule, detail, ...extra } = err;
      throw new ApiError(
        response.status,
        String(rule ?? "unknown"),
        String(detail ?? "request failed"),
        extra,
      );
    }
    return data as T;
  }

  createSession(options: {
    session?: string;
    kind: "structured" | "dense";
    instructions?: string[];
  }): Promise<Snapshot> {
    return this.call("POST", "/sessions", options);
  }

  session(id: string): Promise<Snapshot> {
    return this.call("GET", `/sessions/${id}`);
  }

  summary(id: string): Promise<{ summary: string | null; detail?: string }> {
    return this.call("GET", `/sessions/${id}/summary`);
  }

  history(id: string): Promise<{ rollouts: TrialPoint[] }> {
    return this.call("GET", `/sessions/${id}/history`);
  }

  addInstruction(id: string, text: string): Promise<Snapshot> {
    return this.call("POST", `/sessions/${id}/instructions`, { text });
  }

  removeInstruction(id: string, iid: string): Promise<Snapshot> {
    return this.call("DELETE", `/sessions/${id}/instructions/${iid}`);
  }

  setInstructionUsed(id: string, iid: string, used: boolean): Promise<Snapshot> {
    return this.call("POST", `/sessions/${id}/instructions/${iid}/used`, { used });
  }

  removeDemo(id: string, did: string): Promise<Snapshot> {
    return this.call("DELETE", `/sessions/${id}/demos/${did}`);
  }

  setDemoUsed(id: string, did: string, used: boolean): Promise<Snapshot> {
    return this.call("POST", `/sessions/${id}/demos/${did}/used`, { used });
  }

  train(id: string, config?: Record<string, unknown>): Promise<JobReport> {
    return this.call("POST", `/sessions/${id}/train?wait=1`, { config: config ?? {} });
  }

  job(id: string, jid: string): Promise<JobReport> {
    return this.call("GET", `/sessions/${id}/jobs/${jid}`);
  }

  submit(id: string): Promise<Snapshot> {
    return this.call("POST", `/sessions/${id}/submit`);
  }
}
