import { numbers, readCsv, requireColumns } from "../csv.js";
import { DEFAULT_MARGINS, Svg, extent, linearScale } from "../svg.js";

/** (t, p) path with the momentum-scale regime bands for the given mass ratio
 * shaded behind it: |p| > K/lam contracts, within [1/(K lam), K/lam] drifts,
 * below is the near-unbiased random walk. */
export function renderTrajectoryRegimes(input: string, out: string,
                                        lambda: number, K = 4): void {
  const table = readCsv(input);
  requireColumns(table, ["time", "kind", "x", "p", "H"], input);
  const t = numbers(table, "time");
  const p = numbers(table, "p");
  const W = 720;
  const H = 420;
  const m = DEFAULT_MARGINS;
  const svg = new Svg(W, H);
  const xs = linearScale(extent(t, 0.01), [m.left, W - m.right]);
  const pDom = extent(p, 0.1);
  const ys = linearScale(pDom, [H - m.bottom, m.top]);
  const hi = K / lambda;
  const lo = 1 / (K * lambda);
  const bands: Array<[number, number, string, string]> = [
    [lo, hi, "#fff3d6", "drift"],
    [-hi, -lo, "#fff3d6", ""],
    [-lo, lo, "#e8f5e9", "random walk"],
  ];
  if (pDom[1] > hi) bands.push([hi, pDom[1], "#fdecea", "contractive"]);
  if (pDom[0] < -hi) bands.push([pDom[0], -hi, "#fdecea", ""]);
  for (const [b0, b1, color, label] of bands) {
    const y0 = ys(Math.min(Math.max(b1, pDom[0]), pDom[1]));
    const y1 = ys(Math.min(Math.max(b0, pDom[0]), pDom[1]));
    if (y1 > y0) {
      svg.rect(m.left, y0, W - m.left - m.right, y1 - y0, color);
      if (label) svg.text(W - m.right - 90, y0 + 12, label, "font-size:10px;fill:#666");
    }
  }
  svg.axes(xs, ys, "t", "p", m);
  svg.polyline(t.map((v, i) => [xs(v), ys(p[i])] as [number, number]),
               "stroke:#1f77b4;stroke-width:1");
  svg.save(out, [input], `trajectory, lambda=${lambda}`);
}
