import { numbers, readCsv, requireColumns } from "../csv.js";
import { DEFAULT_MARGINS, Svg, linearScale } from "../svg.js";

function viridisish(t: number): string {
  // compact 5-stop interpolation, enough for a diagnostic heatmap
  const stops: Array<[number, number, number]> = [
    [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]];
  const x = Math.max(0, Math.min(0.9999, t)) * (stops.length - 1);
  const i = Math.floor(x);
  const f = x - i;
  const [r1, g1, b1] = stops[i];
  const [r2, g2, b2] = stops[i + 1];
  const c = (a: number, b: number) => Math.round(a + (b - a) * f);
  return `rgb(${c(r1, r2)},${c(g1, g2)},${c(b1, b2)})`;
}

/** Jump-kernel heatmap from a (p, p_prime, value) grid CSV. */
export function renderKernelHeatmap(input: string, out: string): void {
  const table = readCsv(input);
  requireColumns(table, ["p", "p_prime", "value"], input);
  const p = numbers(table, "p");
  const q = numbers(table, "p_prime");
  const v = numbers(table, "value");
  const pu = [...new Set(p)].sort((a, b) => a - b);
  const qu = [...new Set(q)].sort((a, b) => a - b);
  const W = 560;
  const H = 520;
  const m = DEFAULT_MARGINS;
  const svg = new Svg(W, H);
  const xs = linearScale([pu[0], pu[pu.length - 1]], [m.left, W - m.right]);
  const ys = linearScale([qu[0], qu[qu.length - 1]], [H - m.bottom, m.top]);
  const vmax = Math.max(...v) || 1;
  const cw = (xs.range[1] - xs.range[0]) / pu.length;
  const ch = (ys.range[0] - ys.range[1]) / qu.length;
  for (let i = 0; i < p.length; i++) {
    svg.rect(xs(p[i]) - cw / 2, ys(q[i]) - ch / 2, cw + 0.5, ch + 0.5, viridisish(v[i] / vmax));
  }
  svg.axes(xs, ys, "p", "p'", m);
  svg.save(out, [input], "collision kernel");
}
