import { renderChatStability } from "../figures/chat_stability.js";
import { fail } from "./common.js";

const [input, out] = process.argv.slice(2);
if (!input || !out) fail("usage: chat_stability <c_hat_table.csv> <out.svg>");
renderChatStability(input, out);
