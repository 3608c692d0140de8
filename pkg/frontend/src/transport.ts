// HTTP client plus the latest-only request gate the sliders drive.

import {
  FrontReportDto,
  InfoResponse,
  SampleRequest,
  SampleResponse,
  parseFrontReport,
  parseInfo,
  parseSampleResponse,
  validateSampleRequest,
} from "./schema.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (...args) => fetch(...args)
  ) {}

  private async post(path: string, body: unknown): Promise<unknown> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) throw new Error(`${path} failed: ${resp.status}`);
    return resp.json();
  }

  async info(): Promise<InfoResponse> {
    const resp = await this.fetchFn(`${this.baseUrl}/info`);
    if (!resp.ok) throw new Error(`/info failed: ${resp.status}`);
    return parseInfo(await resp.json());
  }

  async sample(req: SampleRequest): Promise<SampleResponse> {
    return parseSampleResponse(await this.post("/sample", validateSampleRequest(req)));
  }

  async front(grid_k: number, n_per_point: number): Promise<FrontReportDto> {
    return parseFrontReport(await this.post("/front", { grid_k, n_per_point }));
  }
}

export interface SequencedResult<T> {
  seq: number;
  value: T;
}

// At most one request in flight; while one is pending, newer requests replace
// the queued one, and results from superseded requests are never delivered.
export class LatestOnlyGate<Req, Res> {
  private seq = 0;
  private inFlight = false;
  private queued: { req: Req; seq: number } | null = null;

  constructor(
    private send: (req: Req) => Promise<Res>,
    private deliver: (result: SequencedResult<Res>) => void,
    private onError: (err: unknown) => void = () => {}
  ) {}

  get inFlightCount(): number {
    return this.inFlight ? 1 : 0;
  }

  request(req: Req): number {
    this.seq += 1;
    const tagged = { req, seq: this.seq };
    if (this.inFlight) {
      this.queued = tagged; // replaces any older queued request
    } else {
      void this.fire(tagged);
    }
    return tagged.seq;
  }

  private async fire(tagged: { req: Req; seq: number }): Promise<void> {
    this.inFlight = true;
    try {
      const value = await this.send(tagged.req);
      if (tagged.seq === this.seq) {
        this.deliver({ seq: tagged.seq, value });
      } // otherwise stale: a newer request owns the screen
    } catch (err) {
      if (tagged.seq === this.seq) this.onError(err);
    } finally {
      this.inFlight = false;
      const next = this.queued;
      this.queued = null;
      if (next) void this.fire(next);
    }
  }
}
