import { numbers, readCsv, requireColumns } from "../csv.js";
import { DEFAULT_MARGINS, Svg, extent, linearScale } from "../svg.js";

/** Solver output profile: u against the momentum coordinate. */
export function renderResolventProfile(input: string, out: string): void {
  const table = readCsv(input);
  requireColumns(table, ["p", "u"], input);
  const p = numbers(table, "p");
  const u = numbers(table, "u");
  const W = 640;
  const H = 400;
  const m = DEFAULT_MARGINS;
  const svg = new Svg(W, H);
  const xs = linearScale(extent(p, 0.02), [m.left, W - m.right]);
  const ys = linearScale(extent([0, ...u]), [H - m.bottom, m.top]);
  svg.axes(xs, ys, "p", "u(p)", m);
  const pts = p.map((v, i) => [xs(v), ys(u[i])] as [number, number]);
  svg.polyline(pts, "stroke:#1f77b4;stroke-width:1.6");
  svg.save(out, [input], "modulated resolvent profile");
}
