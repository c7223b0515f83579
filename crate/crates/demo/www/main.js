import init, { simulate, accuracy_curve, success_curve } from "./pkg/inca_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

function chart(series, { logY = false, xLabel = "", yLabel = "" } = {}) {
  const W = 640, H = 300, L = 60, R = 130, T = 10, B = 40;
  const pts = series.flatMap((s) => s.points);
  const fy = (v) => (logY ? Math.log10(v) : v);
  const xs = pts.map((p) => p[0]), ys = pts.map((p) => fy(p[1]));
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (y0 === y1) { y0 -= 1; y1 += 1; }
  const px = (x) => L + ((x - x0) / (x1 - x0 || 1)) * (W - L - R);
  const py = (y) => H - B - ((fy(y) - y0) / (y1 - y0)) * (H - T - B);
  let svg = `<svg width="${W}" height="${H}" xmlns="http://www.w3.org/2000/svg">`;
  svg += `<line x1="${L}" y1="${H - B}" x2="${W - R}" y2="${H - B}" stroke="#444"/>`;
  svg += `<line x1="${L}" y1="${T}" x2="${L}" y2="${H - B}" stroke="#444"/>`;
  for (let i = 0; i <= 4; i++) {
    const yv = y0 + ((y1 - y0) * i) / 4;
    const label = logY ? `1e${yv.toFixed(1)}` : yv.toPrecision(3);
    const y = H - B - ((H - T - B) * i) / 4;
    svg += `<text x="${L - 4}" y="${y + 4}" font-size="10" text-anchor="end">${label}</text>`;
    const xv = x0 + ((x1 - x0) * i) / 4;
    svg += `<text x="${px(xv)}" y="${H - B + 14}" font-size="10" text-anchor="middle">${+xv.toPrecision(3)}</text>`;
  }
  svg += `<text x="${(L + W - R) / 2}" y="${H - 6}" font-size="11" text-anchor="middle">${xLabel}</text>`;
  svg += `<text x="12" y="${H / 2}" font-size="11" transform="rotate(-90 12 ${H / 2})" text-anchor="middle">${yLabel}</text>`;
  series.forEach((s, i) => {
    const c = s.color || COLORS[i % COLORS.length];
    const d = s.points.map((p) => `${px(p[0]).toFixed(1)},${py(p[1]).toFixed(1)}`).join(" ");
    svg += `<polyline fill="none" stroke="${c}" stroke-width="${s.width || 1.5}" points="${d}"/>`;
    if (s.label) svg += `<text x="${W - R + 8}" y="${T + 14 * (i + 1)}" font-size="11" fill="${c}">${s.label}</text>`;
  });
  return svg + "</svg>";
}

function guard(fn, out) {
  try {
    fn();
  } catch (e) {
    out.innerHTML = `<pre style="color:#b00">${e}</pre>`;
  }
}

function runSimulation() {
  guard(() => {
    const run = JSON.parse(simulate(num("sim-n"), num("sim-k"), num("sim-t"), num("sim-ind"), num("sim-delta"), num("sim-gamma"), BigInt(num("sim-seed"))));
    const dropped = run.online[run.online.length - 1].filter((b) => !b).length;
    $("sim-out").textContent =
      `estimate     ${run.estimate.toFixed(6)}\n` +
      `true mean    ${run.truth.toFixed(6)}\n` +
      `noisy mean   ${run.noisy_mean.toFixed(6)}\n` +
      `dropped out  ${dropped}`;
    const n = run.messages[0].length;
    const series = [];
    for (let i = 0; i < n; i++) {
      const online = run.online.map((row) => row[i]);
      series.push({
        points: run.messages.map((m, t) => [t, m[i]]),
        color: online[online.length - 1] ? "#1f77b4" : "#d62728",
        width: 0.8,
      });
    }
    $("sim-plot").innerHTML = chart(series, { xLabel: "iteration", yLabel: "message (red: dropped)" });
  }, $("sim-out"));
}

function runAccuracy() {
  guard(() => {
    const rows = JSON.parse(accuracy_curve(num("acc-n"), num("acc-eps"), num("acc-delta")));
    const methods = [...new Set(rows.map((r) => r.method))];
    const series = methods.map((m) => ({
      label: m,
      points: rows.filter((r) => r.method === m && r.metric === "mse").map((r) => [r.rho, r.value]).sort((a, b) => a[0] - b[0]),
    }));
    $("acc-plot").innerHTML = chart(series, { logY: true, xLabel: "corrupted fraction ρ", yLabel: "MSE" });
  }, $("acc-plot"));
}

function runSuccess() {
  const out = $("suc-out");
  out.textContent = "running…";
  setTimeout(() => guard(() => {
    const rows = JSON.parse(success_curve(num("suc-n"), num("suc-k"), num("suc-t"), num("suc-f"), num("suc-rho"), num("suc-trials"), 1n))
      .filter((r) => r.metric === "success_rate");
    let html = "";
    for (const method of [...new Set(rows.map((r) => r.method))]) {
      const ts = [...new Set(rows.map((r) => r.T))].sort((a, b) => a - b);
      const ks = [...new Set(rows.map((r) => r.k))].sort((a, b) => a - b);
      html += `<h3>${method}</h3><table><tr><th>k \\ T</th>${ts.map((t) => `<th>${t}</th>`).join("")}</tr>`;
      for (const k of ks) {
        html += `<tr><th>${k}</th>`;
        for (const t of ts) {
          const v = rows.find((r) => r.method === method && r.k === k && r.T === t)?.value ?? NaN;
          const shade = Math.round(255 - 155 * v);
          html += `<td style="background:rgb(${shade},${255},${shade})">${(100 * v).toFixed(0)}%</td>`;
        }
        html += "</tr>";
      }
      html += "</table>";
    }
    out.innerHTML = html;
  }, out), 10);
}

await init();
$("sim-run").onclick = runSimulation;
$("acc-run").onclick = runAccuracy;
$("suc-run").onclick = runSuccess;
runSimulation();
