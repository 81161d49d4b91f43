import { Console } from "./ui.js";
import { GatewayClient } from "./gateway.js";

const base = window.location.origin;
const root = document.getElementById("app");
if (root === null) throw new Error("missing #app element");

const console_ = new Console(root, new GatewayClient(base), window.localStorage, `${base}/api/events`);
console_.boot();
