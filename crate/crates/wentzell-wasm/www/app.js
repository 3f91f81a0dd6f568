// Demo page driver: owns one Simulator, animates frames, and renders the
// field heatmap, the radius silhouette, the norm history, and certificate
// reports. Plain ES module — load through any static file server after
// `wasm-pack build --target web --out-dir www/pkg`.

import init, { Simulator, example_config } from "./pkg/wentzell_wasm.js";

const el = (id) => document.getElementById(id);
const fieldCanvas = el("field");
const normCanvas = el("norms");
const fieldCtx = fieldCanvas.getContext("2d");
const normCtx = normCanvas.getContext("2d");

let sim = null;
let running = false;
let history = []; // {t, norm}
const FRAME_SPAN = 0.01; // simulated time per animation frame

function setStatus(text) {
  el("status").textContent = text;
}

// Blue → yellow heatmap for the field magnitude.
function colormap(v) {
  const x = Math.max(0, Math.min(1, v));
  return [Math.round(255 * x), Math.round(235 * x * x + 20 * x), Math.round(160 * (1 - x))];
}

function drawField() {
  const nx = sim.n_x();
  const nth = sim.n_theta();
  const mag = sim.field_magnitude();
  let max = 1e-12;
  for (const v of mag) max = Math.max(max, v);

  const img = fieldCtx.createImageData(nx, nth);
  for (let j = 0; j < nth; j++) {
    for (let i = 0; i < nx; i++) {
      const [r, g, b] = colormap(mag[i * nth + j] / max);
      const o = 4 * (j * nx + i);
      img.data[o] = r;
      img.data[o + 1] = g;
      img.data[o + 2] = b;
      img.data[o + 3] = 255;
    }
  }
  // Nearest-neighbour upscale of the node lattice onto the canvas.
  const off = new OffscreenCanvas(nx, nth);
  off.getContext("2d").putImageData(img, 0, 0);
  fieldCtx.imageSmoothingEnabled = false;
  fieldCtx.clearRect(0, 0, fieldCanvas.width, fieldCanvas.height);
  fieldCtx.drawImage(off, 0, 0, fieldCanvas.width, fieldCanvas.height);

  // Radius silhouette r(t, x), drawn over the heatmap.
  const radii = sim.radius_profile();
  let rMax = 1e-12;
  for (const r of radii) rMax = Math.max(rMax, r);
  fieldCtx.strokeStyle = "white";
  fieldCtx.lineWidth = 1.5;
  fieldCtx.beginPath();
  radii.forEach((r, i) => {
    const x = (i / (radii.length - 1)) * fieldCanvas.width;
    const y = fieldCanvas.height * (1 - 0.9 * (r / rMax));
    i === 0 ? fieldCtx.moveTo(x, y) : fieldCtx.lineTo(x, y);
  });
  fieldCtx.stroke();
}

function drawNorms() {
  const w = normCanvas.width;
  const h = normCanvas.height;
  normCtx.clearRect(0, 0, w, h);
  if (history.length < 2) return;
  const tMax = history[history.length - 1].t;
  let nMax = 1e-12;
  for (const p of history) nMax = Math.max(nMax, p.norm);
  normCtx.strokeStyle = "#d62728";
  normCtx.lineWidth = 1.5;
  normCtx.beginPath();
  history.forEach((p, i) => {
    const x = (p.t / Math.max(tMax, 1e-12)) * (w - 10) + 5;
    const y = h - 5 - (p.norm / nMax) * (h - 10);
    i === 0 ? normCtx.moveTo(x, y) : normCtx.lineTo(x, y);
  });
  normCtx.stroke();
}

function frame() {
  if (!sim) return;
  let summary;
  try {
    summary = JSON.parse(sim.advance(FRAME_SPAN));
  } catch (e) {
    running = false;
    el("toggle").textContent = "Run";
    setStatus(`solver error: ${e}`);
    return;
  }
  history.push({ t: summary.t, norm: summary.norm });
  drawField();
  drawNorms();
  setStatus(
    `t = ${summary.t.toFixed(4)}  ‖X‖ = ${summary.norm.toExponential(4)}` +
      `  ‖AX‖ = ${summary.graph_norm.toExponential(3)}` +
      `  picard sweeps/frame = ${summary.picard_iterations}  [${summary.status}]`
  );
  if (summary.status !== "running") {
    running = false;
    el("toggle").textContent = "Run";
    return;
  }
  if (running) requestAnimationFrame(frame);
}

function renderReport(json) {
  const report = JSON.parse(json);
  const rows = report.checks
    .map(
      (c) =>
        `<tr><td class="${c.passed ? "pass" : "fail"}">${c.passed ? "PASS" : "FAIL"}</td>` +
        `<td>${c.property}</td><td>${c.measured.toExponential(2)}</td>` +
        `<td>${c.tolerance.toExponential(1)}</td></tr>`
    )
    .join("");
  el("report").innerHTML =
    `<table><tr><th></th><th>certificate</th><th>measured</th><th>tolerance</th></tr>${rows}</table>`;
}

async function main() {
  await init();
  el("config").value = example_config();

  el("load").onclick = () => {
    running = false;
    el("toggle").textContent = "Run";
    try {
      sim = new Simulator(el("config").value);
    } catch (e) {
      sim = null;
      setStatus(`configuration rejected: ${e}`);
      return;
    }
    history = [];
    el("toggle").disabled = false;
    el("step").disabled = false;
    el("certify").disabled = false;
    el("report").innerHTML = "";
    setStatus("loaded; t = 0");
    drawField();
    drawNorms();
  };

  el("toggle").onclick = () => {
    running = !running;
    el("toggle").textContent = running ? "Pause" : "Run";
    if (running) requestAnimationFrame(frame);
  };

  el("step").onclick = () => {
    running = false;
    el("toggle").textContent = "Run";
    frame();
  };

  el("certify").onclick = () => {
    try {
      renderReport(sim.certificates());
    } catch (e) {
      setStatus(`certificates failed: ${e}`);
    }
  };
}

main();
