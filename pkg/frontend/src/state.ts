// UI state machine for the labeling loop: pick a reference pixel, tune the
// threshold, assign a class, repeat. All service traffic funnels through one
// gate that keeps at most one SAM request in flight per cube and applies only
// the newest response (stale ones are discarded).

import { CubeInfo, RleRun, SamResponse, ServiceClient, Summary, decodeRle } from "./api.js";

export type ClassCode = 1 | 2 | 3 | 4;

export const CLASS_NAMES: Record<ClassCode, string> = {
  1: "normal_tissue",
  2: "tumor_tissue",
  3: "blood_vessel",
  4: "background",
};

// legend colors (tumor red, normal green, vessel blue, background black)
export const CLASS_COLORS: Record<ClassCode, [number, number, number]> = {
  1: [0, 255, 0],
  2: [255, 0, 0],
  3: [0, 0, 255],
  4: [0, 0, 0],
};

export const THRESHOLD_MIN = 0.0;
export const THRESHOLD_MAX = 0.5;
export const THRESHOLD_STEP = 0.005;
export const THRESHOLD_DEFAULT = 0.08;

export interface UiState {
  cube: CubeInfo | null;
  ref: [number, number] | null;
  thresholdRad: number;
  gamma: number;
  overlayAlpha: number; // 0..1
  activeClass: ClassCode;
  mask: Uint8Array | null; // decoded from the last SAM response
  maskRle: RleRun[] | null;
  maskCount: number | null; // always the service-reported count
  summary: Summary | null;
  notice: string;
  busy: boolean;
}

export function initialState(): UiState {
  return {
    cube: null,
    ref: null,
    thresholdRad: THRESHOLD_DEFAULT,
    gamma: 1.0,
    overlayAlpha: 0.5,
    activeClass: 1,
    mask: null,
    maskRle: null,
    maskCount: null,
    summary: null,
    notice: "",
    busy: false,
  };
}

type Listener = (state: UiState) => void;

export class LabelingController {
  readonly state: UiState = initialState();

  private listeners: Listener[] = [];
  private samInFlight = false;
  private pendingSam: { ref: [number, number]; threshold: number } | null = null;
  private samSeq = 0;

  constructor(private readonly client: ServiceClient) {}

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  async openCube(cube: CubeInfo): Promise<void> {
    this.state.cube = cube;
    this.state.ref = null;
    this.state.mask = null;
    this.state.maskRle = null;
    this.state.maskCount = null;
    this.state.notice = "";
    this.state.summary = await this.client.getSummary(cube.id);
    this.emit();
  }

  /** Click on the image: becomes the SAM reference pixel. Ignored without a cube. */
  selectReference(row: number, col: number): void {
    const cube = this.state.cube;
    if (!cube || cube.rows === undefined || cube.cols === undefined) return;
    if (row < 0 || col < 0 || row >= cube.rows || col >= cube.cols) return;
    this.state.ref = [row, col];
    this.launchSam();
  }

  setThreshold(value: number): void {
    this.state.thresholdRad = Math.min(THRESHOLD_MAX, Math.max(THRESHOLD_MIN, value));
    if (this.state.ref) this.launchSam();
    this.emit();
  }

  setGamma(value: number): void {
    this.state.gamma = value;
    this.emit();
  }

  setOverlayAlpha(value: number): void {
    this.state.overlayAlpha = Math.min(1, Math.max(0, value));
    this.emit();
  }

  setActiveClass(code: ClassCode): void {
    this.state.activeClass = code;
    this.emit();
  }

  /**
   * Debounced SAM request gate: at most one request in flight; while one is
   * running only the latest requested parameters are remembered, and a
   * response is applied only when it is still the newest one.
   */
  private launchSam(): void {
    const cube = this.state.cube;
    const ref = this.state.ref;
    if (!cube || !ref) return;
    this.pendingSam = { ref, threshold: this.state.thresholdRad };
    if (this.samInFlight) return;
    this.samInFlight = true;
    void (async () => {
      try {
        while (this.pendingSam) {
          const params = this.pendingSam;
          this.pendingSam = null;
          const seq = ++this.samSeq;
          let response: SamResponse;
          try {
            response = await this.client.computeSam(cube.id, params.ref, params.threshold);
          } catch (err) {
            this.state.notice = `SAM request failed: ${(err as Error).message}`;
            this.emit();
            continue;
          }
          if (seq !== this.samSeq) continue; // a newer request superseded this one
          const pixels = (cube.rows ?? 0) * (cube.cols ?? 0);
          this.state.mask = decodeRle(response.mask_rle, pixels);
          this.state.maskRle = response.mask_rle;
          this.state.maskCount = response.count; // service-reported, displayed as-is
          this.emit();
        }
      } finally {
        this.samInFlight = false;
      }
    })();
  }

  /** Wait until the SAM gate has drained (test helper; the UI just re-renders). */
  async settle(): Promise<void> {
    while (this.samInFlight || this.pendingSam) {
      await new Promise((resolve) => setTimeout(resolve, 0));
    }
  }

  /** Assign the current mask to the active class; overlay clears, summary refreshes. */
  async assignCurrent(): Promise<void> {
    const cube = this.state.cube;
    if (!cube) return;
    if (!this.state.maskRle || this.state.maskCount === null || this.state.maskCount === 0) {
      this.state.notice = "nothing selected: pick a reference pixel first";
      this.emit();
      return;
    }
    this.state.busy = true;
    try {
      this.state.summary = await this.client.commitLabels(
        cube.id,
        this.state.maskRle,
        this.state.activeClass,
      );
      this.state.mask = null;
      this.state.maskRle = null;
      this.state.maskCount = null;
      this.state.notice = "";
    } catch (err) {
      this.state.notice = `commit failed: ${(err as Error).message}`;
    } finally {
      this.state.busy = false;
    }
    this.emit();
  }

  async undo(): Promise<void> {
    const cube = this.state.cube;
    if (!cube) return;
    try {
      this.state.summary = await this.client.undoLabels(cube.id);
      this.state.notice = "";
    } catch (err) {
      this.state.notice = `undo failed: ${(err as Error).message}`;
    }
    this.emit();
  }
}
