import init, { Knobs, steadyProfile, gainKernel, closedLoop } from "./pkg/extruder_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c"];

function knobs() {
  const v = (id) => parseFloat(document.getElementById(id).value);
  return new Knobs(v("b") * 1e-3, v("tb"), v("hbar"), v("sr"), v("c"));
}

function extent(values) {
  let lo = Infinity, hi = -Infinity;
  for (const v of values) if (Number.isFinite(v)) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  if (lo === hi) { lo -= 1; hi += 1; }
  const pad = 0.05 * (hi - lo);
  return [lo - pad, hi + pad];
}

// lines: [{x, y, label, color, dashed}], refs: [{y, label}]
function draw(canvas, lines, opts) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, L = 70, R = 15, T = 15, B = 35;
  ctx.clearRect(0, 0, W, H);
  const [x0, x1] = extent(lines.flatMap((l) => Array.from(l.x)));
  const [y0, y1] = extent(lines.flatMap((l) => Array.from(l.y)).concat((opts.refs || []).map((r) => r.y)));
  const sx = (x) => L + ((x - x0) / (x1 - x0)) * (W - L - R);
  const sy = (y) => T + ((y1 - y) / (y1 - y0)) * (H - T - B);
  ctx.strokeStyle = "#444";
  ctx.strokeRect(L, T, W - L - R, H - T - B);
  ctx.fillStyle = "#222";
  ctx.font = "11px sans-serif";
  for (let k = 0; k <= 5; k++) {
    const xv = x0 + ((x1 - x0) * k) / 5, yv = y0 + ((y1 - y0) * k) / 5;
    ctx.textAlign = "center";
    ctx.fillText(xv.toPrecision(3), sx(xv), H - B + 14);
    ctx.textAlign = "right";
    ctx.fillText(yv.toPrecision(4), L - 4, sy(yv) + 4);
  }
  ctx.textAlign = "center";
  ctx.fillText(opts.xlabel, L + (W - L - R) / 2, H - 4);
  ctx.save();
  ctx.translate(12, T + (H - T - B) / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText(opts.ylabel, 0, 0);
  ctx.restore();
  for (const r of opts.refs || []) {
    ctx.strokeStyle = "#999";
    ctx.setLineDash([2, 3]);
    ctx.beginPath();
    ctx.moveTo(L, sy(r.y));
    ctx.lineTo(W - R, sy(r.y));
    ctx.stroke();
    ctx.textAlign = "left";
    ctx.fillStyle = "#666";
    ctx.fillText(r.label, L + 4, sy(r.y) - 3);
  }
  lines.forEach((l, i) => {
    ctx.strokeStyle = l.color || COLORS[i % COLORS.length];
    ctx.setLineDash(l.dashed ? [6, 4] : []);
    ctx.lineWidth = 1.6;
    ctx.beginPath();
    let down = false;
    l.x.forEach((x, j) => {
      const y = l.y[j];
      if (!Number.isFinite(y)) { down = false; return; }
      if (down) ctx.lineTo(sx(x), sy(y)); else ctx.moveTo(sx(x), sy(y));
      down = true;
    });
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.fillStyle = ctx.strokeStyle;
    ctx.textAlign = "right";
    ctx.fillText(l.label, W - R - 6, T + 14 + 14 * i);
  });
}

function report(id, text, isError) {
  const el = document.getElementById(id);
  el.textContent = text;
  el.className = isError ? "error" : "note";
}

function guarded(id, f) {
  return () => {
    try { f(); } catch (e) { report(id, String(e.message || e), true); }
  };
}

function showSteady() {
  const k = knobs();
  const c = steadyProfile(k, 401);
  draw(document.getElementById("steady"), [{ x: c.x(), y: c.temp(), label: "T_eq" }], {
    xlabel: "x (m)", ylabel: "T (°C)", refs: [{ y: c.t_melt, label: "T_m" }],
  });
  const hi = Number.isFinite(c.bound_hi) ? c.bound_hi.toFixed(2) : "∞";
  report("steady-info", `q_f* = ${c.q_f_star.toExponential(3)} W/m², admissible T_b − T_m in [${c.bound_lo.toExponential(2)}, ${hi}] K`);
}

function showKernel() {
  const k = knobs();
  const c = gainKernel(k, 301);
  // both grow like e^{d1 x}; a log scale keeps the shape readable
  const lg = (v) => Array.from(v, (y) => (y === 0 ? NaN : Math.log10(Math.abs(y))));
  draw(document.getElementById("kernel"), [
    { x: c.x(), y: lg(c.phi()), label: "log10 |φ(x)|" },
    { x: c.x(), y: lg(c.f()), label: "log10 |f(x)|", dashed: true },
  ], { xlabel: "x (m)", ylabel: "log10 magnitude" });
  report("kernel-info", `regime: ${c.regime()}`);
}

function showRun() {
  const k = knobs();
  const tEnd = parseFloat(document.getElementById("tend").value);
  const runs = [["backstepping", closedLoop(k, "output_feedback", tEnd)]];
  if (document.getElementById("with-pi").checked) runs.push(["PI", closedLoop(k, "pi", tEnd)]);
  const tm = steadyProfile(k, 2).t_melt;
  draw(document.getElementById("run-s"), runs.map(([n, r]) => ({ x: r.t(), y: r.s(), label: n })), {
    xlabel: "t (s)", ylabel: "s (m)", refs: [{ y: k.s_r, label: "s_r" }],
  });
  draw(document.getElementById("run-inlet"), runs.map(([n, r]) => ({ x: r.t(), y: r.inlet(), label: n })), {
    xlabel: "t (s)", ylabel: "T_s(0) (°C)", refs: [{ y: tm, label: "T_m" }],
  });
  report("run-info", runs.map(([n, r]) => {
    const settle = Number.isFinite(r.settling_time) ? `settled at ${r.settling_time.toFixed(1)} s` : "not settled";
    const stop = r.stopped() ? `, ${r.stopped()}` : "";
    return `${n}: ${settle}, validity ${r.validity_passed ? "kept" : "violated"}${stop}`;
  }).join(" | "));
}

await init();
document.getElementById("steady-btn").onclick = guarded("steady-info", showSteady);
document.getElementById("kernel-btn").onclick = guarded("kernel-info", showKernel);
document.getElementById("run-btn").onclick = guarded("run-info", showRun);
guarded("steady-info", showSteady)();
guarded("kernel-info", showKernel)();
