// Page wiring: sliders (or the barycentric picker for three rewards), the
// live sample cloud, and the front overlay.

import { SliderController } from "./controller.js";
import { canvasSurface, renderFront, renderScatter } from "./render.js";
import { barycentricWeights, sliderToOmega } from "./simplex.js";
import { activeFrontIndex } from "./state.js";
import { ServiceClient } from "./transport.js";

const SERVICE_URL =
  new URLSearchParams(window.location.search).get("service") ?? "http://127.0.0.1:8787";

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

async function boot(): Promise<void> {
  const client = new ServiceClient(SERVICE_URL);
  const banner = el<HTMLDivElement>("banner");
  const readout = el<HTMLDivElement>("reward-readout");
  const omegaLabel = el<HTMLDivElement>("omega-label");
  const scatter = canvasSurface(el<HTMLCanvasElement>("scatter"));
  const front = canvasSurface(el<HTMLCanvasElement>("front"));

  let info;
  try {
    info = await client.info();
  } catch {
    banner.textContent = "service unreachable — start it with: prefslider serve --checkpoint <ckpt>";
    banner.hidden = false;
    return;
  }
  el<HTMLDivElement>("title").textContent =
    `${info.reward_names.join(" / ")} — checkpoint ${info.checkpoint_id}`;

  const controller = new SliderController(client, info.m);
  controller.onChange((state) => {
    banner.hidden = state.connection !== "down";
    if (state.connection === "down") banner.textContent = "service unreachable — retrying on next input";
    omegaLabel.textContent = "preference: [" + state.omega.map((w) => w.toFixed(3)).join(", ") + "]";
    if (state.meanReward) {
      readout.textContent = info.reward_names
        .map((name, i) => `${name}: ${state.meanReward![i].toFixed(3)}`)
        .join("   ");
    }
    renderScatter(scatter, state.points, [[-1, 0], [1, 0]]);
    if (state.front) {
      renderFront(front, state.front, activeFrontIndex(state));
    } else if (state.frontError) {
      front.clear();
      front.text(`front unavailable: ${state.frontError}`, 10, 20, "#a00");
    }
  });

  if (info.m === 3) {
    el<HTMLDivElement>("slider-row").hidden = true;
    const tri = el<HTMLCanvasElement>("triangle");
    tri.hidden = false;
    const a = { x: tri.width / 2, y: 14 };
    const b = { x: 14, y: tri.height - 14 };
    const c = { x: tri.width - 14, y: tri.height - 14 };
    const surface = canvasSurface(tri);
    surface.line(a.x, a.y, b.x, b.y, "#888");
    surface.line(b.x, b.y, c.x, c.y, "#888");
    surface.line(c.x, c.y, a.x, a.y, "#888");
    tri.addEventListener("pointermove", (ev) => {
      if (ev.buttons !== 1) return;
      const rect = tri.getBoundingClientRect();
      const w = barycentricWeights(
        { x: ev.clientX - rect.left, y: ev.clientY - rect.top },
        a,
        b,
        c
      );
      if (w) controller.onSliderChange(w);
    });
  } else {
    const slider = el<HTMLInputElement>("omega-slider");
    slider.addEventListener("input", () => {
      controller.onSliderChange([...sliderToOmega(Number(slider.value))]);
    });
  }

  await controller.loadFront();
  controller.onSliderChange(Array(info.m).fill(1 / info.m));
}

void boot();
