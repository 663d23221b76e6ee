import init, { Viewer, registrationTrials, friedmanTest, mannWhitneyTest } from "./pkg/navsim_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const FOV = 160;

function show(out, f) {
  try {
    out.classList.remove("err");
    out.textContent = f();
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message ?? e);
  }
}

function bindOutputs(ids) {
  for (const id of ids) {
    const sync = () => ($(`${id}-v`).value = $(id).value);
    $(id).addEventListener("input", sync);
    sync();
  }
}

function drawOverlay(ctx, o) {
  ctx.lineWidth = 1;
  if (o.target_px && o.target_radius_px > 0) {
    ctx.strokeStyle = "#f44";
    ctx.beginPath();
    ctx.arc(o.target_px[0] + 0.5, o.target_px[1] + 0.5, o.target_radius_px, 0, 2 * Math.PI);
    ctx.stroke();
  }
  if (o.axis_segment_px) {
    const [a, b] = o.axis_segment_px;
    ctx.strokeStyle = "#4c4";
    ctx.beginPath();
    ctx.moveTo(a[0] + 0.5, a[1] + 0.5);
    ctx.lineTo(b[0] + 0.5, b[1] + 0.5);
    ctx.stroke();
  }
  if (o.tip_px) {
    ctx.fillStyle = "#ff0";
    ctx.fillRect(o.tip_px[0] - 1, o.tip_px[1] - 1, 3, 3);
  }
}

function setupSlice(viewer) {
  const canvas = $("slice");
  const ctx = canvas.getContext("2d");
  const render = () => {
    show($("slice-info"), () => {
      const rgba = viewer.render($("plane").value, num("az"), num("el"), num("depth"), num("theta"), FOV);
      ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), FOV, FOV), 0, 0);
      const o = JSON.parse(viewer.overlay());
      drawOverlay(ctx, o);
      const r = o.target_radius_px ?? 0;
      return `tip to cyst centre ${o.distance_mm.toFixed(1)} mm\ncyst section radius ${r.toFixed(1)} mm`;
    });
  };
  for (const id of ["plane", "az", "el", "depth", "theta"]) $(id).addEventListener("input", render);
  render();
}

function summarize(values) {
  const sorted = [...values].sort((a, b) => a - b);
  const mean = values.reduce((s, v) => s + v, 0) / values.length;
  const q = (p) => sorted[Math.min(sorted.length - 1, Math.floor(p * sorted.length))];
  return `mean ${mean.toFixed(3)}  median ${q(0.5).toFixed(3)}  95th ${q(0.95).toFixed(3)}`;
}

function setupRegistration() {
  let seed = 1;
  $("run-reg").addEventListener("click", () => {
    show($("reg-out"), () => {
      const runs = JSON.parse(registrationTrials(num("beads"), num("sigma"), 200, BigInt(seed)));
      seed += 200;
      return [
        `FRE (mm)       ${summarize(runs.map((r) => r.fre_rms))}`,
        `TRE cyst (mm)  ${summarize(runs.map((r) => r.tre_mm))}`,
        `rotation (°)   ${summarize(runs.map((r) => r.rotation_error_deg))}`,
      ].join("\n");
    });
  });
}

function setupStats() {
  $("run-stats").addEventListener("click", () => {
    const lines = [];
    for (const [name, f] of [
      ["Friedman", () => friedmanTest($("matrix").value)],
      ["Mann-Whitney", () => mannWhitneyTest($("sample-a").value, $("sample-b").value)],
    ]) {
      try {
        const r = JSON.parse(f());
        lines.push(name === "Friedman"
          ? `Friedman  χ² ${r.chi2.toFixed(3)}  df ${r.df}  p ${r.p.toPrecision(3)}`
          : `Mann-Whitney  U ${r.u}  p ${r.p.toPrecision(3)} (${r.method})`);
      } catch (e) {
        lines.push(`${name}: ${e.message ?? e}`);
      }
    }
    $("stats-out").textContent = lines.join("\n");
  });
}

async function main() {
  await init();
  bindOutputs(["az", "el", "depth", "theta", "beads", "sigma"]);
  const viewer = new Viewer();
  setupSlice(viewer);
  setupRegistration();
  setupStats();
  $("status").textContent = "phantom loaded; drag the sliders.";
}

main().catch((e) => ($("status").textContent = `failed to start: ${e}`));
