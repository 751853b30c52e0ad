/**
 * Typed client over the gateway's HTTP+JSON surface.
 *
 * Every call returns the raw status alongside the parsed body; rendering
 * decisions (including all error handling) happen from those responses.
 * Nothing here grants, retries around, or otherwise softens a refusal:
 * the server is the only authorizer.
 */

export interface PrincipalView {
  id: string;
  display_name: string;
  kind: "user" | "super_user";
  role: "clinical" | "non_clinical" | "admin";
  privilege: "high" | "medium" | "low";
  active: boolean;
}

export interface GrantView {
  token: string | null;
  token_digest: string;
  expires_at_us: number;
  revoked: boolean;
}

export interface RequestView {
  request_id: string;
  user_id: string;
  patient_scope: string;
  purpose: string;
  state: "pending" | "approved" | "denied" | "expired" | "cancelled";
  created_at_us: number;
  alert_targets: string[];
  decided_at_us: number | null;
  decider_id: string | null;
  decision_channel: string | null;
  age_us?: number;
  grant?: GrantView;
  server_now_us?: number;
}

export interface SmfAlertView {
  rule_id: string;
  severity: string;
  involved: string[];
  evidence: number[];
  window_start_us: number;
  window_end_us: number;
}

export interface AuditEntryView {
  seq: number;
  ts_us: number;
  actor_id: string;
  kind: string;
  subject: string;
  detail: Record<string, string>;
}

export interface ApiError {
  code: string;
  message: string;
  details?: Record<string, unknown>;
}

export interface ApiResult<T> {
  status: number;
  body: T | null;
  error: ApiError | null;
}

export class GatewayClient {
  private token: string | null = null;
  principal: PrincipalView | null = null;

  constructor(readonly baseUrl: string) {}

  get sessionToken(): string | null {
    return this.token;
  }

  private async call<T>(
    method: string,
    path: string,
    body?: unknown,
    params?: Record<string, string>,
  ): Promise<ApiResult<T>> {
    const url = new URL(this.baseUrl + path);
    for (const [key, value] of Object.entries(params ?? {})) {
      url.searchParams.set(key, value);
    }
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const response = await fetch(url, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    let parsed: unknown = null;
    try {
      parsed = await response.json();
    } catch {
      parsed = null;
    }
    if (response.status >= 400) {
      const error = (parsed as { error?: ApiError } | null)?.error ?? {
        code: "unknown",
        message: `HTTP ${response.status}`,
      };
      return { status: response.status, body: null, error };
    }
    return { status: response.status, body: parsed as T, error: null };
  }

  async login(id: string, secret: string): Promise<ApiResult<{
    token: string;
    expires_at_us: number;
    principal: PrincipalView;
  }>> {
    const result = await this.call<{
      token: string;
      expires_at_us: number;
      principal: PrincipalView;
    }>("POST", "/login", { id, secret });
    if (result.body) {
      this.token = result.body.token;
      this.principal = result.body.principal;
    }
    return result;
  }

  alerts(): Promise<ApiResult<RequestView[]>> {
    return this.call("GET", "/alerts");
  }

  decide(requestId: string, verdict: "approve" | "deny"):
      Promise<ApiResult<RequestView>> {
    return this.call("POST", `/requests/${encodeURIComponent(requestId)}/${verdict}`);
  }

  submitRequest(patientId: string, purpose: string):
      Promise<ApiResult<RequestView>> {
    return this.call("POST", "/requests", { patient_id: patientId, purpose });
  }

  cancelRequest(requestId: string): Promise<ApiResult<RequestView>> {
    return this.call("POST", `/requests/${encodeURIComponent(requestId)}/cancel`);
  }

  myRequests(): Promise<ApiResult<RequestView[]>> {
    return this.call("GET", "/requests/mine");
  }

  enterPasscode(requestId: string, code: string): Promise<ApiResult<RequestView>> {
    return this.call("POST",
      `/requests/${encodeURIComponent(requestId)}/passcode`, { code });
  }

  mintPasscode(): Promise<ApiResult<{ code: string; expires_at_us: number }>> {
    return this.call("POST", "/passcodes");
  }

  smfAlerts(): Promise<ApiResult<SmfAlertView[]>> {
    return this.call("GET", "/audit/smf");
  }

  myAuditTrail(principalId: string): Promise<ApiResult<AuditEntryView[]>> {
    return this.call("GET", `/audit/report/${encodeURIComponent(principalId)}`);
  }

  /** Raw access for tests that replay endpoint calls with UI guards removed. */
  raw<T>(method: string, path: string, body?: unknown): Promise<ApiResult<T>> {
    return this.call<T>(method, path, body);
  }
}
