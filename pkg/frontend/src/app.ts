// DOM wiring for the labeling tool page. Canvas drawing uses nearest-neighbor
// scaling (pixel identity matters when picking references); sliders drive the
// controller, which owns all service traffic.

import { CubeInfo, HttpServiceClient, MapKind } from "./api.js";
import { compositeOverlay } from "./overlay.js";
import {
  CLASS_COLORS,
  CLASS_NAMES,
  ClassCode,
  LabelingController,
  THRESHOLD_DEFAULT,
  THRESHOLD_MAX,
  THRESHOLD_MIN,
  THRESHOLD_STEP,
  UiState,
} from "./state.js";

const SCALE = 24;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startApp(): void {
  const client = new HttpServiceClient("");
  const controller = new LabelingController(client);

  const cubeSelect = el<HTMLSelectElement>("cube-select");
  const canvas = el<HTMLCanvasElement>("view");
  const thresholdSlider = el<HTMLInputElement>("threshold");
  const thresholdValue = el<HTMLSpanElement>("threshold-value");
  const gammaSlider = el<HTMLInputElement>("gamma");
  const alphaSlider = el<HTMLInputElement>("alpha");
  const countLabel = el<HTMLSpanElement>("mask-count");
  const summaryBody = el<HTMLTableSectionElement>("summary-body");
  const notice = el<HTMLDivElement>("notice");
  const mapImage = el<HTMLImageElement>("map-image");
  const mapNotice = el<HTMLDivElement>("map-notice");

  thresholdSlider.min = String(THRESHOLD_MIN);
  thresholdSlider.max = String(THRESHOLD_MAX);
  thresholdSlider.step = String(THRESHOLD_STEP);
  thresholdSlider.value = String(THRESHOLD_DEFAULT);

  let baseImage: HTMLImageElement | null = null;

  function redraw(state: UiState): void {
    const cube = state.cube;
    if (!cube || cube.rows === undefined || cube.cols === undefined || !baseImage) return;
    canvas.width = cube.cols * SCALE;
    canvas.height = cube.rows * SCALE;
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    ctx.imageSmoothingEnabled = false;
    // compose at native resolution, then scale once without smoothing
    const off = document.createElement("canvas");
    off.width = cube.cols;
    off.height = cube.rows;
    const offCtx = off.getContext("2d");
    if (!offCtx) return;
    offCtx.drawImage(baseImage, 0, 0, cube.cols, cube.rows);
    if (state.mask) {
      const data = offCtx.getImageData(0, 0, cube.cols, cube.rows);
      compositeOverlay(
        data.data,
        state.mask,
        state.overlayAlpha,
        CLASS_COLORS[state.activeClass],
      );
      offCtx.putImageData(data, 0, 0);
    }
    ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
    if (state.ref) {
      ctx.strokeStyle = "#ffffff";
      ctx.strokeRect(state.ref[1] * SCALE, state.ref[0] * SCALE, SCALE, SCALE);
    }
  }

  function renderSummary(state: UiState): void {
    const rows: string[] = [];
    const summary = state.summary;
    if (summary) {
      const colors: Record<string, string> = {
        tumor_tissue: "#e33",
        normal_tissue: "#3c3",
        blood_vessel: "#36e",
        background: "#000",
      };
      for (const code of [2, 1, 3, 4] as ClassCode[]) {
        const name = CLASS_NAMES[code];
        const value = summary[name as keyof typeof summary];
        rows.push(
          `<tr><td><span class="swatch" style="background:${colors[name]}"></span>${name}</td>` +
            `<td>${value}</td></tr>`,
        );
      }
      rows.push(`<tr><td>total</td><td>${summary.total}</td></tr>`);
    }
    summaryBody.innerHTML = rows.join("");
  }

  function reloadBaseImage(state: UiState): void {
    const cube = state.cube;
    if (!cube) return;
    const img = new Image();
    img.onload = () => {
      baseImage = img;
      redraw(controller.state);
    };
    img.src = client.rgbUrl(cube.id, state.gamma);
  }

  controller.subscribe((state) => {
    thresholdValue.textContent = `${state.thresholdRad.toFixed(3)} rad`;
    countLabel.textContent = state.maskCount === null ? "-" : String(state.maskCount);
    notice.textContent = state.notice;
    renderSummary(state);
    redraw(state);
  });

  cubeSelect.addEventListener("change", () => {
    const info = cubes.find((c) => c.id === cubeSelect.value);
    if (info && info.status === "ok") {
      void controller.openCube(info).then(() => reloadBaseImage(controller.state));
    }
  });

  canvas.addEventListener("click", (event) => {
    const bounds = canvas.getBoundingClientRect();
    const col = Math.floor(((event.clientX - bounds.left) / bounds.width) * (canvas.width / SCALE));
    const row = Math.floor(((event.clientY - bounds.top) / bounds.height) * (canvas.height / SCALE));
    controller.selectReference(row, col);
  });

  thresholdSlider.addEventListener("input", () => {
    controller.setThreshold(Number(thresholdSlider.value));
  });
  gammaSlider.addEventListener("input", () => {
    controller.setGamma(Number(gammaSlider.value));
    reloadBaseImage(controller.state);
  });
  alphaSlider.addEventListener("input", () => {
    controller.setOverlayAlpha(Number(alphaSlider.value));
  });

  for (const code of [1, 2, 3, 4] as ClassCode[]) {
    el<HTMLButtonElement>(`class-${code}`).addEventListener("click", () => {
      controller.setActiveClass(code);
      void controller.assignCurrent();
    });
  }
  el<HTMLButtonElement>("undo").addEventListener("click", () => void controller.undo());

  el<HTMLButtonElement>("classify").addEventListener("click", () => {
    const cube = controller.state.cube;
    if (!cube) return;
    void client.startClassify(cube.id, {}).then(() => {
      mapNotice.textContent = "classification running...";
      const poll = setInterval(() => {
        void client.classifyStatus(cube.id).then((status) => {
          if (status.status === "done") {
            clearInterval(poll);
            mapNotice.textContent = "";
            showMap("tmd");
          } else if (status.status === "error") {
            clearInterval(poll);
            mapNotice.textContent = `classification failed: ${status.error ?? ""}`;
          }
        });
      }, 1000);
    });
  });

  function showMap(kind: MapKind): void {
    const cube = controller.state.cube;
    if (!cube) return;
    mapImage.onerror = () => {
      mapNotice.textContent = "maps not available yet: run classification first";
      mapImage.removeAttribute("src");
    };
    mapImage.onload = () => {
      mapNotice.textContent =
        kind === "tmd" ? "TMD: mixed colors show the top-three class shares per cluster" : "";
    };
    mapImage.src = `${client.mapUrl(cube.id, kind)}?t=${Date.now()}`;
  }
  for (const kind of ["mv", "omd", "tmd"] as MapKind[]) {
    el<HTMLButtonElement>(`map-${kind}`).addEventListener("click", () => showMap(kind));
  }

  let cubes: CubeInfo[] = [];
  void client.listCubes().then((entries) => {
    cubes = entries;
    cubeSelect.innerHTML = entries
      .map((c) => `<option value="${c.id}" ${c.status !== "ok" ? "disabled" : ""}>${c.id}${c.status !== "ok" ? " (error)" : ""}</option>`)
      .join("");
    const first = entries.find((c) => c.status === "ok");
    if (first) {
      cubeSelect.value = first.id;
      void controller.openCube(first).then(() => reloadBaseImage(controller.state));
    }
  });
}

startApp();
