// Wire types for the slider service. Field names are the service contract
// verbatim; the parse helpers reject anything that drifts from it.

export interface SampleRequest {
  omega: number[];
  n: number;
  seed?: number;
  steps?: number;
}

export interface SampleResponse {
  points: number[][];
  mean_reward: number[];
  omega: number[];
  checkpoint_id: string;
}

export interface FrontRequest {
  grid_k: number;
  n_per_point: number;
}

export interface FrontPointDto {
  label: string;
  values: number[];
}

export interface FrontReportDto {
  label: string;
  channels: string[];
  points: FrontPointDto[];
  nondominated_mask: boolean[];
  hypervolume: number;
  normalization: { min: number[]; max: number[]; degenerate: boolean[] };
}

export interface InfoResponse {
  checkpoint_id: string;
  m: number;
  reward_names: string[];
  data_dim: number;
  conditioning_mode: string;
}

export class SchemaError extends Error {}

function isNumberArray(x: unknown): x is number[] {
  return Array.isArray(x) && x.every((v) => typeof v === "number" && Number.isFinite(v));
}

function fail(what: string): never {
  throw new SchemaError(`malformed ${what}`);
}

export function validateSampleRequest(req: SampleRequest): SampleRequest {
  if (!isNumberArray(req.omega) || req.omega.length < 1) fail("sample request: omega");
  if (!Number.isInteger(req.n) || req.n < 1 || req.n > 2048) fail("sample request: n");
  if (req.seed !== undefined && !Number.isInteger(req.seed)) fail("sample request: seed");
  if (req.steps !== undefined && (!Number.isInteger(req.steps) || req.steps < 1)) {
    fail("sample request: steps");
  }
  return req;
}

export function parseSampleResponse(doc: unknown): SampleResponse {
  const d = doc as Partial<SampleResponse>;
  if (
    !d ||
    !Array.isArray(d.points) ||
    !d.points.every(isNumberArray) ||
    !isNumberArray(d.mean_reward) ||
    !isNumberArray(d.omega) ||
    typeof d.checkpoint_id !== "string"
  ) {
    fail("sample response");
  }
  return d as SampleResponse;
}

export function parseFrontReport(doc: unknown): FrontReportDto {
  const d = doc as Partial<FrontReportDto>;
  if (
    !d ||
    typeof d.label !== "string" ||
    !Array.isArray(d.channels) ||
    !d.channels.every((c) => typeof c === "string") ||
    !Array.isArray(d.points) ||
    !d.points.every(
      (p) => p && typeof (p as FrontPointDto).label === "string" && isNumberArray((p as FrontPointDto).values)
    ) ||
    !Array.isArray(d.nondominated_mask) ||
    !d.nondominated_mask.every((b) => typeof b === "boolean") ||
    typeof d.hypervolume !== "number" ||
    !d.normalization ||
    !isNumberArray(d.normalization.min) ||
    !isNumberArray(d.normalization.max)
  ) {
    fail("front report");
  }
  if (d.points!.length !== d.nondominated_mask!.length) fail("front report: mask length");
  return d as FrontReportDto;
}

export function parseInfo(doc: unknown): InfoResponse {
  const d = doc as Partial<InfoResponse>;
  if (
    !d ||
    typeof d.checkpoint_id !== "string" ||
    typeof d.m !== "number" ||
    !Array.isArray(d.reward_names) ||
    typeof d.data_dim !== "number" ||
    typeof d.conditioning_mode !== "string"
  ) {
    fail("info response");
  }
  return d as InfoResponse;
}
