// Expert review console: per engine x sample, the engine's top-3 previews
// are shown beside the sample and rated 1..5. Submission is blocked until
// every cell is rated; the gate verdicts table always reflects the server.

import { ApiError } from "./api.js";
import type { Bootstrap, Client, EngineInfo, GateDecision, RatingRecord, Sample } from "./api.js";
import { createStore } from "./store.js";
import { clear, el } from "./dom.js";

interface ExpertState {
  unlocked: boolean;
  engines: EngineInfo[];
  samples: Sample[];
  decisions: GateDecision[];
  error: string | null;
  submitted: boolean;
}

interface Cell {
  rating: number | null;
  comment: string;
}

const RATING_VALUES = [1, 2, 3, 4, 5];

export class ExpertApp {
  root: HTMLElement;
  makeClient: (token: string) => Client;
  client: Client | null = null;
  token = "";
  expertId = "";
  cells = new Map<string, Cell>();
  store = createStore<ExpertState>({
    unlocked: false,
    engines: [],
    samples: [],
    decisions: [],
    error: null,
    submitted: false,
  });

  constructor(root: HTMLElement, makeClient: (token: string) => Client) {
    this.root = root;
    this.makeClient = makeClient;
    this.store.subscribe(() => this.render());
    this.render();
  }

  cellKey(engineId: string, sampleId: string, rank: number): string {
    return `${engineId}|${sampleId}|${rank}`;
  }

  cell(key: string): Cell {
    let c = this.cells.get(key);
    if (!c) {
      c = { rating: null, comment: "" };
      this.cells.set(key, c);
    }
    return c;
  }

  // only similarity engines are gateable; the curated table is vetted by hand
  gateable(): EngineInfo[] {
    return this.store.get().engines.filter((e) => e.kind === "similarity");
  }

  missingCells(): string[] {
    const missing: string[] = [];
    for (const engine of this.gateable()) {
      for (const sample of this.store.get().samples) {
        for (const rank of [1, 2, 3]) {
          const key = this.cellKey(engine.engine_id, sample.painting_id, rank);
          if (this.cell(key).rating === null) missing.push(key);
        }
      }
    }
    return missing;
  }

  async unlock(): Promise<void> {
    const client = this.makeClient(this.token);
    try {
      const [engines, decisions, bootstrap] = await Promise.all([
        client.engines(),
        client.gateDecisions(),
        client.bootstrap() as Promise<Bootstrap>,
      ]);
      this.client = client;
      this.store.set({
        unlocked: true,
        engines: engines.engines,
        decisions: decisions.decisions,
        samples: bootstrap.samples,
        error: null,
      });
    } catch (err) {
      const message =
        err instanceof ApiError && err.status === 401
          ? "Access blocked: the admin token was not accepted."
          : "Could not reach the service.";
      this.store.set({ unlocked: false, error: message });
    }
  }

  async submitRatings(): Promise<void> {
    if (!this.client || this.missingCells().length > 0) return;
    const records: RatingRecord[] = [];
    for (const engine of this.gateable()) {
      for (const sample of this.store.get().samples) {
        for (const rank of [1, 2, 3]) {
          const c = this.cell(this.cellKey(engine.engine_id, sample.painting_id, rank));
          records.push({
            expert_id: this.expertId || "anonymous-expert",
            engine_id: engine.engine_id,
            sample_id: sample.painting_id,
            rank,
            rating: c.rating!,
            comment: c.comment,
          });
        }
      }
    }
    try {
      await this.client.submitGateRatings(records);
      const [decisions, engines] = await Promise.all([
        this.client.gateDecisions(),
        this.client.engines(),
      ]);
      this.store.set({
        decisions: decisions.decisions,
        engines: engines.engines,
        submitted: true,
        error: null,
      });
    } catch (err) {
      this.store.set({ error: err instanceof ApiError ? err.message : "submission failed" });
    }
  }

  render(): void {
    const state = this.store.get();
    clear(this.root);
    const shell = el("div", { class: "console" }, el("h1", {}, "Expert review console"));
    if (state.error) shell.append(el("div", { class: "banner", role: "alert" }, state.error));
    if (!state.unlocked) {
      shell.append(this.tokenForm());
      this.root.append(shell);
      return;
    }
    shell.append(this.decisionsTable(state.decisions));
    shell.append(this.ratingGrid(state));
    if (state.submitted) shell.append(el("p", { class: "fine" }, "Ratings submitted; verdicts refreshed."));
    this.root.append(shell);
  }

  private tokenForm(): HTMLElement {
    const tokenInput = el("input", {
      id: "admin-token",
      type: "password",
      value: this.token,
      oninput: (ev) => (this.token = (ev.target as HTMLInputElement).value),
    });
    const expertInput = el("input", {
      id: "expert-id",
      value: this.expertId,
      oninput: (ev) => (this.expertId = (ev.target as HTMLInputElement).value),
    });
    return el(
      "section",
      { class: "unlock" },
      el("label", { for: "expert-id" }, "Your expert id"),
      expertInput,
      el("label", { for: "admin-token" }, "Admin token"),
      tokenInput,
      el("button", { id: "unlock", onclick: () => void this.unlock() }, "Unlock"),
    );
  }

  private decisionsTable(decisions: GateDecision[]): HTMLElement {
    const table = el("table", { class: "decisions" });
    table.append(
      el(
        "tr",
        {},
        el("th", {}, "engine"),
        el("th", {}, "mean rating"),
        el("th", {}, "vetoes"),
        el("th", {}, "threshold"),
        el("th", {}, "verdict"),
      ),
    );
    for (const d of decisions) {
      table.append(
        el(
          "tr",
          { "data-engine": d.engine_id },
          el("td", {}, d.engine_id),
          el("td", { class: "mean" }, d.mean_rating.toFixed(3)),
          el("td", {}, String(d.veto_count)),
          el("td", {}, String(d.threshold)),
          el("td", { class: d.eligible ? "eligible" : "ineligible" }, d.eligible ? "eligible" : "ineligible"),
        ),
      );
    }
    return el("section", { class: "gate-view" }, el("h2", {}, "Gate verdicts"), table);
  }

  private ratingGrid(state: ExpertState): HTMLElement {
    const section = el("section", { class: "rating-grid" }, el("h2", {}, "Rate each engine's picks"));
    const missing = new Set(this.missingCells());
    for (const engine of this.gateable()) {
      const block = el("div", { class: "engine-block", "data-engine": engine.engine_id });
      block.append(el("h3", {}, `${engine.engine_id} (${engine.status})`));
      for (const sample of state.samples) {
        const row = el("div", { class: "sample-row", "data-sample": sample.painting_id });
        row.append(
          el(
            "figure",
            { class: "painting anchor" },
            el("img", { src: sample.image_url, alt: sample.title }),
            el("figcaption", {}, `${sample.label}: ${sample.title}`),
          ),
        );
        const previews = engine.previews[sample.painting_id] ?? [];
        previews.forEach((pick, idx) => {
          const rank = idx + 1;
          const key = this.cellKey(engine.engine_id, sample.painting_id, rank);
          const cell = this.cell(key);
          const select = el("select", { class: "rating", "data-cell": key }) as HTMLSelectElement;
          select.append(el("option", { value: "" }, "-"));
          for (const v of RATING_VALUES) select.append(el("option", { value: String(v) }, String(v)));
          select.value = cell.rating === null ? "" : String(cell.rating);
          select.addEventListener("change", () => {
            cell.rating = select.value === "" ? null : parseInt(select.value, 10);
            this.store.set({}); // recompute submit/missing state
          });
          const comment = el("input", {
            class: "comment",
            placeholder: "comment (optional)",
            value: cell.comment,
            oninput: (ev) => (cell.comment = (ev.target as HTMLInputElement).value),
          });
          row.append(
            el(
              "figure",
              { class: `painting pick${missing.has(key) ? " missing" : ""}`, "data-cell": key },
              el("img", { src: pick.image_url, alt: pick.title }),
              el("figcaption", {}, `#${rank} ${pick.title} — ${pick.artist}`),
              select,
              comment,
            ),
          );
        });
        block.append(row);
      }
      section.append(block);
    }
    const submit = el(
      "button",
      { id: "submit-ratings", onclick: () => void this.submitRatings() },
      "Submit ratings",
    ) as HTMLButtonElement;
    submit.disabled = missing.size > 0;
    section.append(
      el("p", { class: "fine" }, missing.size > 0 ? `${missing.size} picks still unrated` : "all picks rated"),
      submit,
    );
    return section;
  }
}

export function mountExpert(root: HTMLElement, makeClient: (token: string) => Client): ExpertApp {
  return new ExpertApp(root, makeClient);
}
