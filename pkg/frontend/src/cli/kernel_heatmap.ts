import { renderKernelHeatmap } from "../figures/kernel_heatmap.js";
import { fail } from "./common.js";

const [input, out] = process.argv.slice(2);
if (!input || !out) fail("usage: kernel_heatmap <kernel_grid.csv> <out.svg>");
renderKernelHeatmap(input, out);
