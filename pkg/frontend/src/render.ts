// Canvas drawing, written against a minimal 2D-context surface so tests can
// record draw calls without a DOM.

import { FrontReportDto } from "./schema.js";

export interface DrawSurface {
  width: number;
  height: number;
  clear(): void;
  circle(x: number, y: number, r: number, color: string): void;
  text(s: string, x: number, y: number, color: string): void;
  line(x0: number, y0: number, x1: number, y1: number, color: string): void;
}

export function canvasSurface(canvas: HTMLCanvasElement): DrawSurface {
  const ctx = canvas.getContext("2d")!;
  return {
    width: canvas.width,
    height: canvas.height,
    clear: () => ctx.clearRect(0, 0, canvas.width, canvas.height),
    circle: (x, y, r, color) => {
      ctx.beginPath();
      ctx.fillStyle = color;
      ctx.arc(x, y, r, 0, 2 * Math.PI);
      ctx.fill();
    },
    text: (s, x, y, color) => {
      ctx.fillStyle = color;
      ctx.font = "12px sans-serif";
      ctx.fillText(s, x, y);
    },
    line: (x0, y0, x1, y1, color) => {
      ctx.strokeStyle = color;
      ctx.beginPath();
      ctx.moveTo(x0, y0);
      ctx.lineTo(x1, y1);
      ctx.stroke();
    },
  };
}

const VIEW = { xMin: -2.5, xMax: 2.5, yMin: -2.5, yMax: 2.5 };

function toPixel(surface: DrawSurface, x: number, y: number): [number, number] {
  const px = ((x - VIEW.xMin) / (VIEW.xMax - VIEW.xMin)) * surface.width;
  const py = surface.height - ((y - VIEW.yMin) / (VIEW.yMax - VIEW.yMin)) * surface.height;
  return [px, py];
}

export function renderScatter(
  surface: DrawSurface,
  points: number[][],
  anchors: number[][] = []
): void {
  surface.clear();
  surface.line(...toPixel(surface, VIEW.xMin, 0), ...toPixel(surface, VIEW.xMax, 0), "#ddd");
  surface.line(...toPixel(surface, 0, VIEW.yMin), ...toPixel(surface, 0, VIEW.yMax), "#ddd");
  for (const a of anchors) {
    const [px, py] = toPixel(surface, a[0], a[1]);
    surface.circle(px, py, 6, "#e0a800");
  }
  for (const p of points) {
    const [px, py] = toPixel(surface, p[0], p[1]);
    surface.circle(px, py, 2.5, "#1f77b4");
  }
}

// Reward-space view: non-dominated points emphasized, hypervolume labeled,
// the active operating point ringed.
export function renderFront(
  surface: DrawSurface,
  report: FrontReportDto,
  activeIndex: number | null
): void {
  surface.clear();
  const values = report.points.map((p) => p.values);
  if (values.length === 0) {
    surface.text("no front data", 10, 20, "#666");
    return;
  }
  const mins = report.normalization.min;
  const maxs = report.normalization.max;
  const span = mins.map((lo, i) => Math.max(maxs[i] - lo, 1e-12));
  const margin = 30;
  const sx = (v: number) => margin + ((v - mins[0]) / span[0]) * (surface.width - 2 * margin);
  const sy = (v: number) =>
    surface.height - margin - ((v - mins[1]) / span[1]) * (surface.height - 2 * margin);

  const order = [...values.keys()].sort((a, b) => values[a][0] - values[b][0]);
  for (let k = 1; k < order.length; k++) {
    const a = values[order[k - 1]];
    const b = values[order[k]];
    surface.line(sx(a[0]), sy(a[1]), sx(b[0]), sy(b[1]), "#ccc");
  }
  values.forEach((v, i) => {
    const dominated = !report.nondominated_mask[i];
    surface.circle(sx(v[0]), sy(v[1]), dominated ? 3 : 5, dominated ? "#bbb" : "#d62728");
    if (i === activeIndex) {
      surface.circle(sx(v[0]), sy(v[1]), 8, "rgba(214,39,40,0.25)");
    }
  });
  surface.text(`HV = ${report.hypervolume.toFixed(4)}`, 10, 16, "#333");
  surface.text(report.channels.join(" vs "), 10, surface.height - 8, "#666");
}
