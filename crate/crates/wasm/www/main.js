import init, { shift_schedule, posterior_top1_curve, oracle_trajectories_2d } from "./pkg/flowscope_wasm.js";

const num = (id) => Number(document.getElementById(id).value);

function drawGrid() {
  const steps = num("grid-steps");
  const shift = num("grid-shift");
  const canvas = document.getElementById("grid");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  let v;
  try {
    v = shift_schedule(steps, shift, 0.2);
  } catch (e) {
    document.getElementById("grid-fraction").textContent = String(e);
    return;
  }
  const fraction = v[v.length - 1];
  document.getElementById("grid-fraction").textContent = `${(100 * fraction).toFixed(0)}% of steps in [0, 0.2]`;
  const pad = 10;
  const w = canvas.width - 2 * pad;
  ctx.fillStyle = "#eef";
  ctx.fillRect(pad, 10, 0.2 * w, 40);
  ctx.strokeStyle = "#225";
  for (const t of v.slice(0, -1)) {
    const x = pad + t * w;
    ctx.beginPath();
    ctx.moveTo(x, 15);
    ctx.lineTo(x, 45);
    ctx.stroke();
  }
}

function drawTop1() {
  const canvas = document.getElementById("top1");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const v = posterior_top1_curve(num("top1-n"), num("top1-d"), num("top1-mc"), 7n);
  const pad = 30;
  const w = canvas.width - 2 * pad;
  const h = canvas.height - 2 * pad;
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w, h);
  ctx.strokeStyle = "#c33";
  ctx.lineWidth = 2;
  ctx.beginPath();
  for (let i = 0; i < v.length; i += 2) {
    const x = pad + v[i] * w;
    const y = pad + (1 - v[i + 1]) * h;
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  }
  ctx.stroke();
  ctx.lineWidth = 1;
  ctx.fillStyle = "#444";
  ctx.fillText("t = 0", pad, canvas.height - 10);
  ctx.fillText("t = 1", pad + w - 25, canvas.height - 10);
  ctx.fillText("1", 15, pad + 4);
  ctx.fillText("0", 15, pad + h);
}

function drawTrajectories() {
  const canvas = document.getElementById("traj");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const r = oracle_trajectories_2d(num("traj-k"), num("traj-npc"), 100, 1.0, num("traj-paths"), 3n);
  const scale = canvas.width / 14;
  const px = (x) => canvas.width / 2 + x * scale;
  const py = (y) => canvas.height / 2 - y * scale;
  const paths = r.paths;
  const len = r.path_len;
  ctx.strokeStyle = "rgba(40, 90, 200, 0.45)";
  for (let p = 0; p < paths.length / (2 * len); p++) {
    ctx.beginPath();
    for (let k = 0; k < len; k++) {
      const o = 2 * (p * len + k);
      if (k === 0) ctx.moveTo(px(paths[o]), py(paths[o + 1]));
      else ctx.lineTo(px(paths[o]), py(paths[o + 1]));
    }
    ctx.stroke();
  }
  const pts = r.points;
  ctx.fillStyle = "#000";
  for (let i = 0; i < pts.length; i += 2) {
    ctx.beginPath();
    ctx.arc(px(pts[i]), py(pts[i + 1]), 3, 0, 2 * Math.PI);
    ctx.fill();
  }
  r.free();
}

await init();
for (const id of ["grid-steps", "grid-shift"]) {
  document.getElementById(id).addEventListener("input", drawGrid);
}
document.getElementById("top1-run").addEventListener("click", drawTop1);
document.getElementById("traj-run").addEventListener("click", drawTrajectories);
drawGrid();
drawTop1();
drawTrajectories();
