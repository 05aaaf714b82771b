import { renderTrajectoryRegimes } from "../figures/trajectory_regimes.js";
import { fail } from "./common.js";

const args = process.argv.slice(2);
const lamIdx = args.indexOf("--lambda");
const lambda = lamIdx >= 0 ? Number(args.splice(lamIdx, 2)[1]) : NaN;
const [input, out] = args;
if (!input || !out || !Number.isFinite(lambda)) {
  fail("usage: trajectory_regimes <trajectory.csv> <out.svg> --lambda L");
}
renderTrajectoryRegimes(input, out, lambda);
