import { Client } from "./api.js";
import { mountPatient } from "./patient.js";
import { mountExpert } from "./expert.js";

// same-origin by default; ?api=http://host:port overrides for development
function apiBase(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("api") ?? "";
}

function route(): void {
  const root = document.getElementById("app");
  if (!root) return;
  if (window.location.hash === "#/expert") {
    mountExpert(root, (token) => new Client(apiBase(), token));
  } else {
    mountPatient(root, new Client(apiBase()));
  }
}

window.addEventListener("hashchange", route);
route();
