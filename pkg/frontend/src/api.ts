// Thin fetch wrappers over the service API. Every non-2xx response becomes
// an ApiError carrying the HTTP status and the server's "detail" message.

import type {
  Automation,
  EnvironmentSnapshot,
  FocusSelection,
  InjectResult,
  Scalar,
  SessionInfo,
  TickResult,
  TransitionMatrix,
  TurnResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

async function toError(response: Response): Promise<ApiError> {
  let detail = response.statusText || `HTTP ${response.status}`;
  try {
    const body = await response.json();
    if (body && typeof body.detail === "string") {
      detail = body.detail;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await fetch(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw await toError(response);
    }
    if (response.status === 204) {
      return undefined as T;
    }
    return (await response.json()) as T;
  }

  createSession(scenario: string): Promise<SessionInfo> {
    return this.request("POST", "/sessions", { scenario });
  }

  sendTurn(sessionId: string, text: string): Promise<TurnResponse> {
    return this.request("POST", `/sessions/${sessionId}/turn`, { text });
  }

  setFocus(sessionId: string, focus: FocusSelection | null): Promise<void> {
    return this.request("POST", `/sessions/${sessionId}/focus`, focus);
  }

  async transcript(sessionId: string): Promise<string> {
    const response = await fetch(`${this.baseUrl}/sessions/${sessionId}/transcript`);
    if (!response.ok) {
      throw await toError(response);
    }
    return response.text();
  }

  environment(scenario: string): Promise<EnvironmentSnapshot> {
    return this.request("GET", `/environments/${scenario}`);
  }

  fireEvent(
    scenario: string,
    entity: string,
    attribute: string,
    value: Scalar,
  ): Promise<InjectResult> {
    return this.request("POST", `/environments/${scenario}/events`, {
      entity,
      attribute,
      value,
    });
  }

  tick(scenario: string, seconds: number): Promise<TickResult> {
    return this.request("POST", `/environments/${scenario}/tick`, { seconds });
  }

  automations(scenario: string): Promise<{ automations: Automation[] }> {
    return this.request("GET", `/automations?scenario=${encodeURIComponent(scenario)}`);
  }

  transitions(): Promise<TransitionMatrix> {
    return this.request("GET", "/analytics/transitions");
  }
}
