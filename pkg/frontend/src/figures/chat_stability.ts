import { numbers, readCsv, requireColumns } from "../csv.js";
import { DEFAULT_MARGINS, PALETTE, Svg, extent, linearScale } from "../svg.js";

/** Fitted-constant stability: c-hat vs lambda per inequality (top panel) and
 * consecutive-halving ratios against the ceiling line (bottom panel). */
export function renderChatStability(input: string, out: string, ceiling = 1.5): void {
  const table = readCsv(input);
  requireColumns(table, ["inequality_id", "lambda", "c_hat", "ratio", "pass"], input);
  const ids = [...new Set(table.rows.map((r) => r.inequality_id))];
  const W = 640;
  const H = 480;
  const m = DEFAULT_MARGINS;
  const svg = new Svg(W, H);
  const midY = H / 2;

  const lams = numbers(table, "lambda");
  const xDom = extent(lams.map((v) => Math.log2(v)));
  const xs = linearScale(xDom, [m.left, W - m.right]);

  const cDom = extent(numbers(table, "c_hat"));
  const ysTop = linearScale([0, cDom[1]], [midY - 14, m.top]);
  svg.axes(xs, ysTop, "log2 lambda", "c_hat", m);
  ids.forEach((id, k) => {
    const rows = table.rows.filter((r) => r.inequality_id === id);
    const pts = rows.map((r) => [xs(Math.log2(Number(r.lambda))), ysTop(Number(r.c_hat))] as [number, number]);
    svg.polyline(pts, `stroke:${PALETTE[k % PALETTE.length]};stroke-width:1.6`);
    for (const [x, y] of pts) svg.circle(x, y, 2.4, PALETTE[k % PALETTE.length]);
    svg.text(W - m.right - 170, m.top + 14 * (k + 1), id, `font-size:10px;fill:${PALETTE[k % PALETTE.length]}`);
  });

  const ratios = table.rows.filter((r) => r.ratio !== "" && r.ratio !== undefined);
  const rVals = ratios.map((r) => Number(r.ratio));
  const ysBot = linearScale([0, Math.max(ceiling * 1.3, ...rVals, 0.1)], [H - m.bottom, midY + 20]);
  svg.line(m.left, ysBot(ceiling), W - m.right, ysBot(ceiling), "stroke:#d62728;stroke-dasharray:4 3;stroke-width:1.2");
  svg.text(W - m.right - 80, ysBot(ceiling) - 4, `ceiling ${ceiling}`, "font-size:10px;fill:#d62728");
  ids.forEach((id, k) => {
    const rows = ratios.filter((r) => r.inequality_id === id);
    for (const r of rows) {
      svg.circle(xs(Math.log2(Number(r.lambda))), ysBot(Number(r.ratio)), 2.6, PALETTE[k % PALETTE.length]);
    }
  });
  svg.line(m.left, ysBot.range[0], W - m.right, ysBot.range[0], "stroke:#333;stroke-width:1");
  svg.text(m.left, H - 8, "consecutive c_hat ratios vs ceiling");
  svg.save(out, [input], "fitted-constant stability");
}
