// Bootstrap: base URL comes from ?api=... (defaults to same origin).

import { App } from "./app.js";
import { Client } from "./api.js";

const params = new URLSearchParams(window.location.search);
const client = new Client(params.get("api") ?? "");

const app = new App(client, {
  clusters: document.getElementById("clusters")!,
  upset: document.getElementById("upset")!,
  whatif: document.getElementById("whatif")!,
  sanity: document.getElementById("sanity")!,
  banner: document.getElementById("banner")!,
});

void app.start();
