// Thin fetch wrapper over the hub's HTTP API. Every displayed number comes
// straight out of these responses; the console adds no computation of its own.

import type { Device, RulePayload } from "./composer.js";
import type { MonthlyAggregate } from "./charts.js";

export interface Rule {
  ruleId: string;
  trigger: { deviceId: string; eventName: string };
  actions: Record<string, unknown>[];
  enabled: boolean;
  createdAtUtcMs: number;
  fireCount: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message || code);
  }
}

export class HubApi {
  constructor(
    private readonly token: string,
    private readonly base: string = "",
  ) {}

  private async request(path: string, init: RequestInit = {}): Promise<Response> {
    const headers = new Headers(init.headers);
    headers.set("Authorization", `Bearer ${this.token}`);
    if (init.body !== undefined) {
      headers.set("Content-Type", "application/json");
    }
    const response = await fetch(this.base + path, { ...init, headers });
    if (!response.ok) {
      let code = "http-error";
      let message = response.statusText;
      try {
        const payload = await response.json();
        code = payload.error ?? code;
        message = payload.message ?? message;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, code, message);
    }
    return response;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    return (await this.request(path, init)).json() as Promise<T>;
  }

  devices(): Promise<Device[]> {
    return this.json("/devices");
  }

  rules(): Promise<Rule[]> {
    return this.json("/rules");
  }

  createRule(payload: RulePayload): Promise<Rule> {
    return this.json("/rules", { method: "POST", body: JSON.stringify(payload) });
  }

  deleteRule(ruleId: string): Promise<unknown> {
    return this.json(`/rules/${ruleId}`, { method: "DELETE" });
  }

  async alertLines(stream: string, from = 0): Promise<string[]> {
    const response = await this.request(`/streams/${stream}?from=${from}`);
    const text = await response.text();
    return text.length ? text.replace(/\n$/, "").split("\n") : [];
  }

  async blobObjectUrl(blobId: string): Promise<string> {
    const response = await this.request(`/blobs/${blobId}`);
    return URL.createObjectURL(await response.blob());
  }

  telemetryMonthly(metric: string, from: string, to: string): Promise<MonthlyAggregate[]> {
    return this.json(`/telemetry/${metric}/monthly?from=${from}&to=${to}`);
  }
}
