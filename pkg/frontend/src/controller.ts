// Glue between slider input, the latest-only transport gate, and the state.

import { SampleRequest, SampleResponse } from "./schema.js";
import { ServiceClient, LatestOnlyGate, SequencedResult } from "./transport.js";
import {
  UiState,
  initialState,
  withConnectionDown,
  withFront,
  withFrontError,
  withOmega,
  withSample,
} from "./state.js";
import { projectToSimplex } from "./simplex.js";

export interface ControllerOptions {
  samplesPerRequest?: number;
  frontGridK?: number;
  frontSamples?: number;
}

export class SliderController {
  state: UiState;
  readonly gate: LatestOnlyGate<SampleRequest, SampleResponse>;
  private listeners: Array<(s: UiState) => void> = [];

  constructor(
    private client: ServiceClient,
    m: number,
    private opts: ControllerOptions = {}
  ) {
    this.state = initialState(m);
    this.gate = new LatestOnlyGate<SampleRequest, SampleResponse>(
      (req) => this.client.sample(req),
      (res: SequencedResult<SampleResponse>) => {
        this.setState(withSample(this.state, res.seq, res.value));
      },
      () => this.setState(withConnectionDown(this.state))
    );
  }

  onChange(fn: (s: UiState) => void): void {
    this.listeners.push(fn);
  }

  private setState(next: UiState): void {
    this.state = next;
    for (const fn of this.listeners) fn(next);
  }

  // Raw slider values (any nonnegative scale) -> simplex -> one live request.
  onSliderChange(raw: number[]): void {
    const omega = projectToSimplex(raw);
    this.setState(withOmega(this.state, omega));
    this.gate.request({ omega, n: this.opts.samplesPerRequest ?? 256 });
  }

  async loadFront(): Promise<void> {
    try {
      const report = await this.client.front(
        this.opts.frontGridK ?? 5,
        this.opts.frontSamples ?? 256
      );
      this.setState(withFront(this.state, report));
    } catch (err) {
      this.setState(withFrontError(this.state, String(err)));
    }
  }
}
