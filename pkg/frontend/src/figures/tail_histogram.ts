import { readFileSync } from "fs";

import { numbers, readCsv, requireColumns, SchemaError } from "../csv.js";
import { DEFAULT_MARGINS, Svg, extent, linearScale } from "../svg.js";

/** Skeleton landing histogram in log density with the fitted exponential
 * envelope overlaid; the envelope constant comes from the report JSON, never
 * recomputed here. */
export function renderTailHistogram(histCsv: string, reportJson: string, out: string): void {
  const table = readCsv(histCsv);
  requireColumns(table, ["d", "density", "count"], histCsv);
  const report = JSON.parse(readFileSync(reportJson, "utf8"));
  const row = (report.rows ?? [])[0];
  if (!row || typeof row.c_hat !== "number") {
    throw new SchemaError(`${reportJson}: missing rows[0].c_hat`);
  }
  const cHat: number = row.c_hat;
  const d = numbers(table, "d");
  const dens = numbers(table, "density");
  const counts = numbers(table, "count");
  const logd = dens.map((v) => (v > 0 ? Math.log(v) : NaN));
  const W = 640;
  const H = 420;
  const m = DEFAULT_MARGINS;
  const svg = new Svg(W, H);
  const xs = linearScale(extent(d, 0.05), [m.left, W - m.right]);
  const envLo = Math.log(cHat) - xs.domain[1] / 16;
  const ys = linearScale(extent([...logd.filter(Number.isFinite), envLo, Math.log(cHat)]),
                         [H - m.bottom, m.top]);
  svg.axes(xs, ys, "drop distance d", "log density", m);
  const bw = d.length > 1 ? (d[1] - d[0]) : 0.5;
  for (let i = 0; i < d.length; i++) {
    if (!Number.isFinite(logd[i])) continue;
    const x0 = xs(d[i] - bw / 2);
    const x1 = xs(d[i] + bw / 2);
    svg.rect(x0, ys(logd[i]), x1 - x0 - 1, ys.range[0] - ys(logd[i]),
             counts[i] >= 50 ? "#9ecae1" : "#d9d9d9");
  }
  svg.polyline(
    [[xs(xs.domain[0]), ys(Math.log(cHat) - xs.domain[0] / 16)],
     [xs(xs.domain[1]), ys(Math.log(cHat) - xs.domain[1] / 16)]],
    "stroke:#d62728;stroke-width:1.6;stroke-dasharray:5 3");
  svg.text(W - m.right - 170, m.top + 12, "envelope log C - d/16", "font-size:10px;fill:#d62728");
  svg.save(out, [histCsv, reportJson], "skeleton landing tail");
}
