import init, { zero_run_explorer, dp_bound, hoeffding } from "./pkg/causal_mia_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const COLORS = { onerun: "#2ca02c", raw: "#d62728", corrected: "#1f77b4" };
let last = null;

function draw() {
  const cv = $("plot");
  const g = cv.getContext("2d");
  const m = 40, s = cv.width - 2 * m;
  const X = (f) => m + f * s;
  const Y = (t) => m + (1 - t) * s;
  g.clearRect(0, 0, cv.width, cv.height);
  g.strokeStyle = "#444";
  g.strokeRect(m, m, s, s);
  g.fillStyle = "#222";
  g.fillText("FPR", X(0.5) - 10, cv.height - 10);
  g.fillText("TPR", 5, Y(0.5));

  const line = (pts, color, dash) => {
    g.beginPath();
    g.setLineDash(dash);
    g.strokeStyle = color;
    pts.forEach(([f, t], i) => (i ? g.lineTo(X(f), Y(t)) : g.moveTo(X(f), Y(t))));
    g.stroke();
    g.setLineDash([]);
  };
  line([[0, 0], [1, 1]], "#999", [4, 4]);
  if ($("showBound").checked) {
    const b = JSON.parse(dp_bound(num("eps"), num("delta")));
    line(b.points, "#000", [8, 3]);
  }
  if (last) {
    for (const k of ["onerun", "raw", "corrected"]) line(last[k].points, COLORS[k], []);
  }
}

function show(err) {
  $("error").textContent = err ? String(err) : "";
}

function run() {
  try {
    last = JSON.parse(zero_run_explorer(num("dim"), num("n"), num("shift"), num("lambda"), num("seed")));
    const fmt = (k) => `${k.padEnd(10)} AUC ${last[k].auc.toFixed(3)}  Youden ${last[k].youden_sup.toFixed(3)}  ATE ${last[k].ate.toFixed(2)}`;
    $("stats").textContent = ["onerun", "raw", "corrected"].map(fmt).join("\n") +
      "\n\ngreen: one-run, red: zero-run raw,\nblue: zero-run oracle IPW";
    show(null);
  } catch (e) {
    show(e);
  }
  draw();
}

function updateHalfwidth() {
  try {
    const h = JSON.parse(hoeffding(num("n1"), num("n0"), num("t")));
    $("hw").textContent = `± ${h.halfwidth.toFixed(4)} at confidence ≥ ${h.confidence.toFixed(4)}`;
    show(null);
  } catch (e) {
    show(e);
  }
}

await init();
$("run").addEventListener("click", run);
for (const id of ["showBound", "eps", "delta"]) $(id).addEventListener("input", () => { try { draw(); show(null); } catch (e) { show(e); } });
for (const id of ["n1", "n0", "t"]) $(id).addEventListener("input", updateHalfwidth);
updateHalfwidth();
run();
