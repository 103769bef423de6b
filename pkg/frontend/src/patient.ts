// Patient session wizard. One step visible at a time; the step shown is
// always derived from the server's session snapshot (next_step), never from
// a client-side counter, so a reload resumes exactly where the server says.
//
// Local unsubmitted input is mutated in place on input events and the DOM is
// only rebuilt on server-state changes or errors; a failed submission
// therefore re-renders with everything the participant already entered.

import { ApiError, newIdempotencyKey } from "./api.js";
import type { AffectBody, Bootstrap, Client, Recommendation, SessionView } from "./api.js";
import { createStore } from "./store.js";
import { clear, el } from "./dom.js";

const SESSION_KEY = "artheal.session_id";

interface AffectForm {
  mood: string | null;
  panas: Record<string, number | null>;
  neutral: number | null;
  phq4: (number | null)[];
}

interface PatientState {
  bootstrap: Bootstrap | null;
  session: SessionView | null;
  error: string | null;
  busy: boolean;
}

interface FormModel {
  participantId: string;
  unit: string;
  stayDays: string;
  baseline: AffectForm;
  post: AffectForm;
  reflections: Record<number, string>;
  quality: Record<string, number | null>;
  stepKeys: Record<string, string>;
}

function emptyAffect(): AffectForm {
  return { mood: null, panas: {}, neutral: null, phq4: [null, null, null, null] };
}

const STEP_LABELS: [string, string][] = [
  ["baseline", "How you feel now"],
  ["preference", "Pick a painting"],
  ["reflection/1", "Painting 1"],
  ["reflection/2", "Painting 2"],
  ["reflection/3", "Painting 3"],
  ["post-affect", "How you feel after"],
  ["ratings", "Rate the session"],
];

export class PatientApp {
  client: Client;
  root: HTMLElement;
  store = createStore<PatientState>({ bootstrap: null, session: null, error: null, busy: false });
  form: FormModel = {
    participantId: "",
    unit: "",
    stayDays: "",
    baseline: emptyAffect(),
    post: emptyAffect(),
    reflections: {},
    quality: {},
    stepKeys: {},
  };

  constructor(root: HTMLElement, client: Client) {
    this.root = root;
    this.client = client;
    this.store.subscribe(() => this.render());
  }

  async start(): Promise<void> {
    const bootstrap = await this.client.bootstrap();
    this.store.set({ bootstrap });
    const sid = localStorage.getItem(SESSION_KEY);
    if (sid) {
      try {
        this.store.set({ session: await this.client.getSession(sid) });
      } catch {
        localStorage.removeItem(SESSION_KEY);
      }
    }
    this.render();
  }

  // One idempotency key per step scope, minted on the first attempt and
  // reused on retries, so a timeout + resend cannot double-apply.
  stepKey(scope: string): string {
    let key = this.form.stepKeys[scope];
    if (!key) {
      key = newIdempotencyKey();
      this.form.stepKeys[scope] = key;
    }
    return key;
  }

  private async submit(scope: string, call: (key: string) => Promise<SessionView>): Promise<void> {
    this.store.set({ busy: true, error: null });
    try {
      const view = await call(this.stepKey(scope));
      delete this.form.stepKeys[scope];
      localStorage.setItem(SESSION_KEY, view.session_id);
      this.store.set({ session: view, busy: false, error: null });
    } catch (err) {
      if (err instanceof ApiError) {
        // a transition conflict means our snapshot is stale; resync
        if (err.errorCode === "invalid_transition" && this.store.get().session) {
          const sid = this.store.get().session!.session_id;
          const fresh = await this.client.getSession(sid).catch(() => null);
          this.store.set({ session: fresh ?? this.store.get().session, busy: false, error: err.message });
          return;
        }
        this.store.set({ busy: false, error: err.message });
      } else {
        this.store.set({ busy: false, error: "network error, please try again" });
      }
    }
  }

  affectBody(form: AffectForm): AffectBody {
    const panas: Record<string, number> = {};
    for (const [item, value] of Object.entries(form.panas)) {
      if (value !== null) panas[item] = value;
    }
    return { mood: form.mood ?? "", panas, neutral_item: form.neutral ?? 0 };
  }

  render(): void {
    const { bootstrap, session, error, busy } = this.store.get();
    clear(this.root);
    const shell = el("div", { class: "wizard" });
    if (error) {
      shell.append(el("div", { class: "banner", role: "alert" }, error));
    }
    if (!bootstrap) {
      shell.append(el("p", {}, "Loading..."));
      this.root.append(shell);
      return;
    }
    shell.append(this.progress(session));
    if (!session) {
      shell.append(this.introStep());
    } else {
      switch (session.next_step) {
        case "baseline":
          shell.append(this.affectStep("baseline", "How do you feel right now?", true));
          break;
        case "preference":
          shell.append(this.preferenceStep(bootstrap));
          break;
        case "reflection/1":
        case "reflection/2":
        case "reflection/3":
          shell.append(this.reflectionStep(session));
          break;
        case "post-affect":
          shell.append(this.affectStep("post", "How do you feel after viewing?", false));
          break;
        case "ratings":
          shell.append(this.qualityStep(bootstrap));
          break;
        default:
          shell.append(this.doneStep(session));
      }
    }
    if (busy) shell.append(el("p", { class: "busy" }, "Sending..."));
    this.root.append(shell);
  }

  private progress(session: SessionView | null): HTMLElement {
    const nav = el("ol", { class: "progress" });
    const current = session ? session.next_step : null;
    let reached = session !== null;
    for (const [step, label] of STEP_LABELS) {
      const item = el("li", {}, label);
      if (session && step === current) {
        item.className = "current";
        reached = false;
      } else if (reached) {
        item.className = "done";
      }
      nav.append(item);
    }
    return nav;
  }

  private introStep(): HTMLElement {
    const pid = el("input", {
      id: "participant-id",
      value: this.form.participantId,
      oninput: (ev) => (this.form.participantId = (ev.target as HTMLInputElement).value),
    });
    const unit = el("input", {
      id: "unit",
      value: this.form.unit,
      oninput: (ev) => (this.form.unit = (ev.target as HTMLInputElement).value),
    });
    const stay = el("input", {
      id: "stay-days",
      value: this.form.stayDays,
      oninput: (ev) => (this.form.stayDays = (ev.target as HTMLInputElement).value),
    });
    const startBtn = el(
      "button",
      {
        id: "start",
        onclick: () => {
          const body: Record<string, unknown> = { participant_id: this.form.participantId.trim() };
          const demographics: Record<string, string> = {};
          if (this.form.unit.trim()) demographics.unit = this.form.unit.trim();
          if (this.form.stayDays.trim()) demographics.stay_days = this.form.stayDays.trim();
          if (Object.keys(demographics).length) body.demographics = demographics;
          void this.submit("create", (key) => this.client.createSession(body, key));
        },
      },
      "Begin session",
    );
    return el(
      "section",
      { class: "step step-intro" },
      el("h2", {}, "Welcome"),
      el("label", { for: "participant-id" }, "Participant id"),
      pid,
      el("label", { for: "unit" }, "Hospital unit (optional)"),
      unit,
      el("label", { for: "stay-days" }, "Days of stay (optional)"),
      stay,
      startBtn,
    );
  }

  private affectStep(which: "baseline" | "post", heading: string, withPhq4: boolean): HTMLElement {
    const inst = this.store.get().bootstrap!.instruments;
    const form = this.form[which];
    const section = el("section", { class: `step step-${which}` }, el("h2", {}, heading));

    const moods = el("div", { class: "mood-grid", role: "radiogroup" });
    const allMoods = [...inst.moods.positive, ...inst.moods.negative, inst.moods.neutral];
    for (const mood of allMoods) {
      const input = el("input", {
        type: "radio",
        name: `${which}-mood`,
        id: `${which}-mood-${mood}`,
        value: mood,
        onchange: () => (form.mood = mood),
      }) as HTMLInputElement;
      input.checked = form.mood === mood;
      moods.append(el("label", { class: "mood", for: `${which}-mood-${mood}` }, input, mood));
    }
    section.append(el("p", {}, "Pick the mood that fits best:"), moods);

    const scale = (id: string, lo: number, hi: number, value: number | null, onpick: (v: number) => void) => {
      const select = el("select", { id }) as HTMLSelectElement;
      select.append(el("option", { value: "" }, "-"));
      for (let v = lo; v <= hi; v++) select.append(el("option", { value: String(v) }, String(v)));
      select.value = value === null ? "" : String(value);
      select.addEventListener("change", () => {
        if (select.value !== "") onpick(parseInt(select.value, 10));
      });
      return select;
    };

    const panas = el("div", { class: "panas" });
    const [plo, phi] = inst.panas_range;
    for (const item of inst.panas_items) {
      panas.append(
        el(
          "div",
          { class: "panas-item" },
          el("label", { for: `${which}-panas-${item}` }, item),
          scale(`${which}-panas-${item}`, plo, phi, form.panas[item] ?? null, (v) => (form.panas[item] = v)),
        ),
      );
    }
    section.append(el("p", {}, `Right now I feel... (${plo} = very slightly, ${phi} = extremely)`), panas);

    const [nlo, nhi] = inst.neutral_range;
    section.append(
      el("label", { for: `${which}-neutral` }, "calm and neutral"),
      scale(`${which}-neutral`, nlo, nhi, form.neutral, (v) => (form.neutral = v)),
    );

    if (withPhq4) {
      const [qlo, qhi] = inst.phq4_range;
      const phq = el("div", { class: "phq4" });
      const prompts = [
        "Feeling nervous, anxious or on edge",
        "Not being able to stop or control worrying",
        "Little interest or pleasure in doing things",
        "Feeling down, depressed or hopeless",
      ];
      prompts.forEach((prompt, i) => {
        phq.append(
          el(
            "div",
            { class: "phq4-item" },
            el("label", { for: `phq4-${i}` }, prompt),
            scale(`phq4-${i}`, qlo, qhi, form.phq4[i] ?? null, (v) => (form.phq4[i] = v)),
          ),
        );
      });
      section.append(el("p", {}, "Over the last two weeks, how often... (0 = not at all, 3 = nearly every day)"), phq);
    }

    const sid = this.store.get().session!.session_id;
    section.append(
      el(
        "button",
        {
          id: `${which}-submit`,
          onclick: () => {
            const affect = this.affectBody(form);
            if (which === "baseline") {
              const phq4 = form.phq4.map((v) => v ?? -1);
              void this.submit("baseline", (key) => this.client.submitBaseline(sid, affect, phq4, key));
            } else {
              void this.submit("post-affect", (key) => this.client.submitPostAffect(sid, affect, key));
            }
          },
        },
        "Continue",
      ),
    );
    return section;
  }

  private preferenceStep(bootstrap: Bootstrap): HTMLElement {
    const sid = this.store.get().session!.session_id;
    const grid = el("div", { class: "sample-grid" });
    for (const sample of bootstrap.samples) {
      grid.append(
        el(
          "figure",
          { class: "painting sample" },
          el("img", { src: this.client.imageUrl(sample.painting_id), alt: sample.title }),
          el("figcaption", {}, `${sample.title} — ${sample.artist}`),
          el(
            "button",
            {
              class: "choose",
              "data-sample": sample.painting_id,
              onclick: () =>
                void this.submit("preference", (key) =>
                  this.client.submitPreference(sid, sample.painting_id, key),
                ),
            },
            "This one",
          ),
        ),
      );
    }
    return el(
      "section",
      { class: "step step-preference" },
      el("h2", {}, "Which painting speaks to you most?"),
      grid,
    );
  }

  private reflectionStep(session: SessionView): HTMLElement {
    const i = parseInt(session.next_step!.split("/")[1]!, 10);
    const rec: Recommendation = session.recommendations![i - 1]!;
    const textarea = el("textarea", {
      id: `reflection-${i}`,
      rows: "5",
      oninput: (ev) => (this.form.reflections[i] = (ev.target as HTMLTextAreaElement).value),
    }) as HTMLTextAreaElement;
    textarea.value = this.form.reflections[i] ?? "";
    return el(
      "section",
      { class: "step step-reflection" },
      el("h2", {}, `Painting ${i} of 3`),
      el(
        "figure",
        { class: "painting recommended" },
        el("img", { src: this.client.imageUrl(rec.painting_id), alt: rec.title }),
        el("figcaption", {}, `${rec.title} — ${rec.artist} (${rec.date})`),
      ),
      el("p", { class: "prompt" }, rec.prompt),
      textarea,
      el(
        "button",
        {
          id: `reflection-${i}-submit`,
          onclick: () =>
            void this.submit(`reflection/${i}`, (key) =>
              this.client.submitReflection(session.session_id, i, this.form.reflections[i] ?? "", key),
            ),
        },
        "Continue",
      ),
    );
  }

  private qualityStep(bootstrap: Bootstrap): HTMLElement {
    const inst = bootstrap.instruments;
    const sid = this.store.get().session!.session_id;
    const [lo, hi] = inst.quality_range;
    const section = el("section", { class: "step step-ratings" }, el("h2", {}, "Rate the session"));
    for (const name of inst.quality_variables) {
      const slider = el("input", {
        type: "range",
        id: `quality-${name}`,
        min: String(lo),
        max: String(hi),
        step: "1",
      }) as HTMLInputElement;
      slider.value = String(this.form.quality[name] ?? lo);
      this.form.quality[name] = this.form.quality[name] ?? lo;
      slider.addEventListener("input", () => (this.form.quality[name] = parseInt(slider.value, 10)));
      section.append(el("div", { class: "quality-item" }, el("label", { for: `quality-${name}` }, name), slider));
    }
    section.append(
      el(
        "button",
        {
          id: "ratings-submit",
          onclick: () => {
            const ratings: Record<string, number> = {};
            for (const name of inst.quality_variables) ratings[name] = this.form.quality[name] ?? lo;
            void this.submit("ratings", (key) => this.client.submitQuality(sid, ratings, key));
          },
        },
        "Finish",
      ),
    );
    return section;
  }

  private doneStep(session: SessionView): HTMLElement {
    localStorage.removeItem(SESSION_KEY);
    return el(
      "section",
      { class: "step step-done" },
      el("h2", {}, "Session complete"),
      el("p", {}, "Thank you for taking part. You can close this window."),
      el("p", { class: "fine" }, `Session ${session.session_id}, completion #${session.completion_index}`),
    );
  }
}

export function mountPatient(root: HTMLElement, client: Client): PatientApp {
  const app = new PatientApp(root, client);
  void app.start();
  return app;
}
