// Typed client for the labeling service HTTP+JSON API. The UI performs no
// spectral math of its own: every count, mask and summary shown on screen is
// taken verbatim from these responses.

export type RleRun = [number, number]; // [start, length] over row-major pixels

export interface CubeInfo {
  id: string;
  status: string;
  rows?: number;
  cols?: number;
  bands?: number;
  wavelength_range?: [number, number];
  error?: string;
}

export interface SamResponse {
  mask_rle: RleRun[];
  count: number;
  threshold: number;
  ref: [number, number];
}

export interface Summary {
  normal_tissue: number;
  tumor_tissue: number;
  blood_vessel: number;
  background: number;
  total: number;
}

export type MapKind = "mv" | "omd" | "tmd";

export interface ServiceClient {
  listCubes(): Promise<CubeInfo[]>;
  rgbUrl(cubeId: string, gamma: number): string;
  computeSam(cubeId: string, ref: [number, number], threshold: number): Promise<SamResponse>;
  commitLabels(cubeId: string, maskRle: RleRun[], classCode: number): Promise<Summary>;
  undoLabels(cubeId: string): Promise<Summary>;
  getSummary(cubeId: string): Promise<Summary>;
  startClassify(cubeId: string, config: unknown): Promise<{ status: string }>;
  classifyStatus(cubeId: string): Promise<{ status: string; error?: string }>;
  mapUrl(cubeId: string, kind: MapKind): string;
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = `${response.status}`;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep the status code
    }
    throw new Error(detail);
  }
  return (await response.json()) as T;
}

export class HttpServiceClient implements ServiceClient {
  constructor(private readonly baseUrl: string = "") {}

  listCubes(): Promise<CubeInfo[]> {
    return fetch(`${this.baseUrl}/cubes`).then((r) => asJson<CubeInfo[]>(r));
  }

  rgbUrl(cubeId: string, gamma: number): string {
    return `${this.baseUrl}/cubes/${encodeURIComponent(cubeId)}/rgb?gamma=${gamma}`;
  }

  computeSam(cubeId: string, ref: [number, number], threshold: number): Promise<SamResponse> {
    return fetch(`${this.baseUrl}/cubes/${encodeURIComponent(cubeId)}/sam`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ ref, threshold }),
    }).then((r) => asJson<SamResponse>(r));
  }

  commitLabels(cubeId: string, maskRle: RleRun[], classCode: number): Promise<Summary> {
    return fetch(`${this.baseUrl}/cubes/${encodeURIComponent(cubeId)}/labels`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ mask_rle: maskRle, class: classCode }),
    }).then((r) => asJson<Summary>(r));
  }

  undoLabels(cubeId: string): Promise<Summary> {
    return fetch(`${this.baseUrl}/cubes/${encodeURIComponent(cubeId)}/labels/undo`, {
      method: "POST",
    }).then((r) => asJson<Summary>(r));
  }

  getSummary(cubeId: string): Promise<Summary> {
    return fetch(`${this.baseUrl}/cubes/${encodeURIComponent(cubeId)}/summary`).then((r) =>
      asJson<Summary>(r),
    );
  }

  startClassify(cubeId: string, config: unknown): Promise<{ status: string }> {
    return fetch(`${this.baseUrl}/cubes/${encodeURIComponent(cubeId)}/classify`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ config }),
    }).then((r) => asJson<{ status: string }>(r));
  }

  classifyStatus(cubeId: string): Promise<{ status: string; error?: string }> {
    return fetch(`${this.baseUrl}/cubes/${encodeURIComponent(cubeId)}/classify/status`).then((r) =>
      asJson<{ status: string; error?: string }>(r),
    );
  }

  mapUrl(cubeId: string, kind: MapKind): string {
    return `${this.baseUrl}/cubes/${encodeURIComponent(cubeId)}/maps/${kind}`;
  }
}

/** Expand [start, length] runs into a dense 0/1 mask of `size` pixels. */
export function decodeRle(runs: RleRun[], size: number): Uint8Array {
  const mask = new Uint8Array(size);
  for (const [start, length] of runs) {
    if (length < 1 || start < 0 || start + length > size) {
      throw new Error(`run [${start}, ${length}] outside mask of size ${size}`);
    }
    mask.fill(1, start, start + length);
  }
  return mask;
}
