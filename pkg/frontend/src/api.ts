// Thin fetch client for the documented HTTP API. The server stays
// authoritative; this layer only shapes requests and surfaces status codes.

import type { ItemDetail, QueueResponse, Report, ResolutionBody } from "./types";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    if (!response.ok) {
      throw new ApiError(response.status, await response.text());
    }
    return (await response.json()) as T;
  }

  getQueue(status: "pending" | "resolved" | "all" = "pending"): Promise<QueueResponse> {
    return this.get<QueueResponse>(`/api/queue?status=${status}`);
  }

  getItem(itemId: string): Promise<ItemDetail> {
    return this.get<ItemDetail>(`/api/items/${itemId}`);
  }

  getReport(): Promise<Report> {
    return this.get<Report>("/api/report");
  }

  async postResolution(itemId: string, body: ResolutionBody): Promise<void> {
    const response = await this.fetchFn(`${this.baseUrl}/api/items/${itemId}/resolution`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      throw new ApiError(response.status, await response.text());
    }
  }
}
