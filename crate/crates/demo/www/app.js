// Plain-JS glue for the evotide demo page. Expects the wasm-bindgen output
// under ./pkg (see build.sh).

import init, {
  intervention_weights,
  backtrack_probability_grid,
  reversion_masses,
  momentum_decay,
  simulate_run,
} from "./pkg/evotide_demo.js";

const colors = ["#4ec9b0", "#c678dd", "#56b6c2", "#98c379"];
const markerColors = { trigger: "#e06c75", backtrack: "#e5c07b", crossover: "#61afef" };

function $(id) {
  return document.getElementById(id);
}

// ---------------------------------------------------------------- panel 1

let grid = null;

function drawSurface() {
  const canvas = $("surface");
  const ctx = canvas.getContext("2d");
  const n = grid.length;
  const w = canvas.width;
  const h = canvas.height;
  const cell = Math.min(w, h) / n;
  const ox = 46;
  const oy = 8;
  const size = Math.min(w - ox - 10, h - oy - 34);
  ctx.clearRect(0, 0, w, h);
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      const p = grid[i][j];
      // Yellow (backtrack) to blue (crossover).
      const r = Math.round(229 * p + 40 * (1 - p));
      const g = Math.round(192 * p + 110 * (1 - p));
      const b = Math.round(123 * p + 220 * (1 - p));
      ctx.fillStyle = `rgb(${r},${g},${b})`;
      const x = ox + (j / n) * size;
      const y = oy + size - ((i + 1) / n) * size;
      ctx.fillRect(x, y, size / n + 1, size / n + 1);
    }
  }
  ctx.strokeStyle = "#2a3442";
  ctx.strokeRect(ox, oy, size, size);
  ctx.fillStyle = "#8b98a5";
  ctx.font = "12px system-ui";
  ctx.fillText("A_j (partner) →", ox + size / 2 - 40, oy + size + 18);
  ctx.save();
  ctx.translate(14, oy + size / 2 + 30);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText("A_i (triggered) →", 0, 0);
  ctx.restore();
  const ai = parseFloat($("ai").value);
  const aj = parseFloat($("aj").value);
  ctx.strokeStyle = "#ffffff";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.arc(ox + aj * size, oy + size - ai * size, 5, 0, Math.PI * 2);
  ctx.stroke();
  ctx.lineWidth = 1;
}

function updateWeights() {
  const ai = parseFloat($("ai").value);
  const aj = parseFloat($("aj").value);
  $("aiv").textContent = ai.toFixed(2);
  $("ajv").textContent = aj.toFixed(2);
  const out = JSON.parse(intervention_weights(ai, JSON.stringify([aj])));
  const c = out.crossover[0];
  $("weights-readout").innerHTML =
    `w_backtrack = <b>${out.backtrack.toFixed(4)}</b>   ` +
    `w_crossover = <b>${c.weight.toFixed(4)}</b>   similarity S = ${out.similarity.toFixed(3)}\n` +
    `P(backtrack) = <b>${out.p_backtrack.toFixed(4)}</b>   P(crossover) = <b>${c.probability.toFixed(4)}</b>`;
  drawSurface();
}

// ---------------------------------------------------------------- panel 2

function logScaleY(value, min, max, top, bottom) {
  const lo = Math.log10(Math.max(min, 1e-9));
  const hi = Math.log10(Math.max(max, min * 10));
  const t = (Math.log10(Math.max(value, 1e-9)) - lo) / (hi - lo || 1);
  return bottom - t * (bottom - top);
}

function runSimulation() {
  const request = {
    landscape: $("landscape").value,
    islands: parseInt($("islands").value, 10),
    iterations: 150,
    seed: parseInt($("seed").value, 10),
    mode: $("mode").value,
    epsilon_rel: parseFloat($("eps").value),
  };
  $("epsv").textContent = request.epsilon_rel.toFixed(2);
  const out = JSON.parse(simulate_run(JSON.stringify(request)));

  const canvas = $("run");
  const ctx = canvas.getContext("2d");
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  const ox = 40, oy = 10, right = w - 12, bottom = h - 22;

  let maxIter = 1, minBest = Infinity, maxBest = -Infinity;
  for (const isl of out.islands) {
    for (const p of isl.points) {
      maxIter = Math.max(maxIter, p.iteration);
      minBest = Math.min(minBest, Math.max(p.best, 1e-9));
      maxBest = Math.max(maxBest, p.best);
    }
  }
  if (!isFinite(minBest)) { minBest = 1e-3; maxBest = 1; }

  ctx.strokeStyle = "#2a3442";
  ctx.strokeRect(ox, oy, right - ox, bottom - oy);
  ctx.fillStyle = "#8b98a5";
  ctx.font = "11px system-ui";
  ctx.fillText("iteration →", right - 70, bottom + 14);
  ctx.fillText("best score (log)", ox + 4, oy + 12);

  out.islands.forEach((isl, k) => {
    ctx.strokeStyle = colors[k % colors.length];
    ctx.lineWidth = 1.6;
    ctx.beginPath();
    isl.points.forEach((p, i) => {
      const x = ox + (p.iteration / maxIter) * (right - ox);
      const y = logScaleY(p.best, minBest, maxBest, oy + 8, bottom - 4);
      if (i === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
    });
    ctx.stroke();
    for (const m of isl.markers) {
      const x = ox + (m.iteration / maxIter) * (right - ox);
      ctx.fillStyle = markerColors[m.kind] || "#fff";
      ctx.fillRect(x - 2, oy + 4 + k * 8, 4, 6);
    }
  });
  ctx.lineWidth = 1;

  // Momentum subplot.
  const mc = $("momentum");
  const mctx = mc.getContext("2d");
  mctx.clearRect(0, 0, mc.width, mc.height);
  const mbottom = mc.height - 14;
  mctx.strokeStyle = "#2a3442";
  mctx.strokeRect(ox, 4, right - ox, mbottom - 4);
  mctx.fillStyle = "#8b98a5";
  mctx.fillText("momentum", ox + 4, 14);
  const eps = request.epsilon_rel;
  const epsY = mbottom - eps * (mbottom - 8);
  mctx.strokeStyle = "#e06c75";
  mctx.setLineDash([4, 3]);
  mctx.beginPath();
  mctx.moveTo(ox, epsY);
  mctx.lineTo(right, epsY);
  mctx.stroke();
  mctx.setLineDash([]);
  out.islands.forEach((isl, k) => {
    mctx.strokeStyle = colors[k % colors.length];
    mctx.beginPath();
    isl.points.forEach((p, i) => {
      const x = ox + (p.iteration / maxIter) * (right - ox);
      const y = mbottom - p.momentum * (mbottom - 8);
      if (i === 0) mctx.moveTo(x, y); else mctx.lineTo(x, y);
    });
    mctx.stroke();
  });

  $("run-readout").innerHTML =
    `best score = <b>${out.best_score.toExponential(3)}</b> (payload ${out.best_payload})\n` +
    `finished: ${out.reason}   backtracks = <b>${out.backtracks}</b>   crossovers = <b>${out.crossovers}</b>`;
}

// ---------------------------------------------------------------- panel 3

function drawPowerlaw() {
  const snaps = parseInt($("snaps").value, 10);
  const alpha = parseFloat($("alpha").value);
  const beta = parseFloat($("beta").value);
  const eps = parseFloat($("eps2").value);
  $("snapsv").textContent = snaps;
  $("alphav").textContent = alpha.toFixed(1);
  $("betav").textContent = beta.toFixed(2);
  $("eps2v").textContent = eps.toFixed(2);

  const masses = JSON.parse(reversion_masses(snaps, alpha)).masses;
  const decay = JSON.parse(momentum_decay(beta, 80));

  const canvas = $("powerlaw");
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  const half = w / 2 - 16;
  const bottom = h - 26;

  // Bars: reversion mass per snapshot position.
  const bw = half / masses.length;
  ctx.fillStyle = "#8b98a5";
  ctx.font = "11px system-ui";
  ctx.fillText("P(revert to snapshot k)", 10, 14);
  masses.forEach((m, k) => {
    ctx.fillStyle = "#e5c07b";
    const bh = m * (bottom - 26);
    ctx.fillRect(10 + k * bw, bottom - bh, bw - 2, bh);
  });
  ctx.fillStyle = "#8b98a5";
  ctx.fillText("earliest →", 10, bottom + 14);

  // Curve: momentum decay with threshold crossing.
  const lx = w / 2 + 8;
  ctx.fillText(`momentum after k barren steps (β=${beta.toFixed(2)})`, lx, 14);
  ctx.strokeStyle = "#2a3442";
  ctx.strokeRect(lx, 20, half, bottom - 20);
  const epsY = bottom - eps * (bottom - 24);
  ctx.strokeStyle = "#e06c75";
  ctx.setLineDash([4, 3]);
  ctx.beginPath();
  ctx.moveTo(lx, epsY);
  ctx.lineTo(lx + half, epsY);
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.strokeStyle = "#4ec9b0";
  ctx.beginPath();
  let crossing = null;
  decay.forEach((m, k) => {
    const x = lx + (k / (decay.length - 1)) * half;
    const y = bottom - m * (bottom - 24);
    if (k === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
    if (crossing === null && m < eps) crossing = k;
  });
  ctx.stroke();
  $("decay-readout").innerHTML = crossing === null
    ? `threshold ${eps.toFixed(2)} not crossed within 80 barren steps`
    : `threshold ${eps.toFixed(2)} crossed after <b>${crossing}</b> barren steps: an intervention would fire there`;
}

// ---------------------------------------------------------------- boot

async function main() {
  await init();
  grid = JSON.parse(backtrack_probability_grid(96));
  updateWeights();
  runSimulation();
  drawPowerlaw();

  $("ai").addEventListener("input", updateWeights);
  $("aj").addEventListener("input", updateWeights);
  $("rerun").addEventListener("click", runSimulation);
  $("eps").addEventListener("input", () => $("epsv").textContent = parseFloat($("eps").value).toFixed(2));
  for (const id of ["snaps", "alpha", "beta", "eps2"]) {
    $(id).addEventListener("input", drawPowerlaw);
  }
}

main();
