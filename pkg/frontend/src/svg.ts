import { createHash } from "crypto";
import { readFileSync, writeFileSync } from "fs";

/** Minimal server-side SVG builder: no DOM, deterministic output. */

export interface Margins {
  top: number;
  right: number;
  bottom: number;
  left: number;
}

export const DEFAULT_MARGINS: Margins = { top: 28, right: 16, bottom: 42, left: 56 };

export interface Scale {
  (v: number): number;
  domain: [number, number];
  range: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const fn = ((v: number) => r0 + ((v - d0) / span) * (r1 - r0)) as Scale;
  fn.domain = domain;
  fn.range = range;
  return fn;
}

export function extent(values: number[], pad = 0.05): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (Number.isFinite(v)) {
      lo = Math.min(lo, v);
      hi = Math.max(hi, v);
    }
  }
  if (!Number.isFinite(lo)) return [0, 1];
  if (lo === hi) return [lo - 1, hi + 1];
  const w = (hi - lo) * pad;
  return [lo - w, hi + w];
}

/** Round ticks covering the domain, roughly `count` of them. */
export function ticks([lo, hi]: [number, number], count = 6): number[] {
  const span = hi - lo;
  if (span <= 0) return [lo];
  const step0 = span / count;
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((s) => span / s <= count) ?? 10 * mag;
  const start = Math.ceil(lo / step) * step;
  const out: number[] = [];
  for (let v = start; v <= hi + 1e-12 * span; v += step) out.push(Number(v.toPrecision(12)));
  return out;
}

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export class Svg {
  private parts: string[] = [];
  constructor(readonly width: number, readonly height: number) {}

  raw(fragment: string): void {
    this.parts.push(fragment);
  }

  line(x1: number, y1: number, x2: number, y2: number, style: string): void {
    this.raw(`<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" style="${style}"/>`);
  }

  polyline(points: Array<[number, number]>, style: string): void {
    const pts = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.raw(`<polyline fill="none" points="${pts}" style="${style}"/>`);
  }

  rect(x: number, y: number, w: number, h: number, fill: string, extra = ""): void {
    this.raw(`<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}"${extra}/>`);
  }

  circle(cx: number, cy: number, r: number, fill: string): void {
    this.raw(`<circle cx="${fmt(cx)}" cy="${fmt(cy)}" r="${fmt(r)}" fill="${fill}"/>`);
  }

  text(x: number, y: number, s: string, style = "font-size:11px"): void {
    this.raw(`<text x="${fmt(x)}" y="${fmt(y)}" style="${style};font-family:sans-serif">${esc(s)}</text>`);
  }

  axes(xs: Scale, ys: Scale, xlabel: string, ylabel: string, m: Margins): void {
    const [x0, x1] = xs.range;
    const [y0, y1] = ys.range;
    this.line(x0, y0, x1, y0, "stroke:#333;stroke-width:1");
    this.line(x0, y0, x0, y1, "stroke:#333;stroke-width:1");
    for (const t of ticks(xs.domain)) {
      const x = xs(t);
      this.line(x, y0, x, y0 + 4, "stroke:#333;stroke-width:1");
      this.text(x - 10, y0 + 16, shortNum(t));
    }
    for (const t of ticks(ys.domain)) {
      const y = ys(t);
      this.line(x0 - 4, y, x0, y, "stroke:#333;stroke-width:1");
      this.text(6, y + 4, shortNum(t));
    }
    this.text((x0 + x1) / 2 - 20, this.height - 8, xlabel);
    this.raw(`<text x="14" y="${fmt((y0 + y1) / 2)}" transform="rotate(-90 14 ${fmt((y0 + y1) / 2)})" style="font-size:11px;font-family:sans-serif">${esc(ylabel)}</text>`);
  }

  /** Serialize with provenance metadata: sha256 of every input file. */
  render(inputPaths: string[], title: string): string {
    const hashes = inputPaths.map((p) => `${p.split("/").pop()}:${sha256File(p)}`);
    return [
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" height="${this.height}" viewBox="0 0 ${this.width} ${this.height}">`,
      `<metadata id="inputs">${esc(hashes.join(";"))}</metadata>`,
      `<rect width="${this.width}" height="${this.height}" fill="white"/>`,
      `<text x="10" y="16" style="font-size:12px;font-weight:bold;font-family:sans-serif">${esc(title)}</text>`,
      ...this.parts,
      "</svg>",
    ].join("\n");
  }

  save(out: string, inputPaths: string[], title: string): void {
    writeFileSync(out, this.render(inputPaths, title));
  }
}

export function sha256File(path: string): string {
  return createHash("sha256").update(readFileSync(path)).digest("hex");
}

function fmt(v: number): string {
  return Number.isInteger(v) ? String(v) : v.toFixed(2);
}

function shortNum(v: number): string {
  if (v !== 0 && (Math.abs(v) >= 1e4 || Math.abs(v) < 1e-3)) return v.toExponential(0);
  return String(Number(v.toPrecision(4)));
}

export const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
