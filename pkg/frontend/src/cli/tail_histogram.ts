import { renderTailHistogram } from "../figures/tail_histogram.js";
import { fail } from "./common.js";

const [hist, report, out] = process.argv.slice(2);
if (!hist || !report || !out) {
  fail("usage: tail_histogram <tail_probes.csv> <tail_report.json> <out.svg>");
}
renderTailHistogram(hist, report, out);
