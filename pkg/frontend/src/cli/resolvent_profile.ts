import { renderResolventProfile } from "../figures/resolvent_profile.js";
import { fail } from "./common.js";

const [input, out] = process.argv.slice(2);
if (!input || !out) fail("usage: resolvent_profile <resolvent_nodes.csv> <out.svg>");
renderResolventProfile(input, out);
