// DOM wiring for the examiner console. Everything shown is server state;
// the only inputs are the intake form and one button per possible word count.

import { ApiClient } from "./api.js";
import { buildTrackGeometry } from "./chart.js";
import { SessionController } from "./store.js";
import type { View } from "./store.js";

type Lang = "pt" | "en";

const STRINGS: Record<Lang, Record<string, string>> = {
  pt: {
    title: "Console do examinador",
    patientCode: "Código do paciente",
    age: "Idade",
    notes: "Observações",
    condition: "Condição",
    start: "Iniciar teste",
    resume: "Retomar sessão",
    sentence: "Frase",
    wordsPrompt: "Palavras repetidas corretamente",
    block: "Bloco",
    attempt: "Tentativa",
    trial: "Frase nº",
    phase: "Fase",
    level: "Nível",
    training: "treino",
    progress: "Progresso do bloco",
    srt: "LRF do bloco",
    export: "Exportar registro",
    complete: "Sessão concluída",
    failed: "Sessão interrompida",
    waiting: "Aguardando resposta do paciente...",
    language: "English",
  },
  en: {
    title: "Examiner console",
    patientCode: "Patient code",
    age: "Age",
    notes: "Notes",
    condition: "Condition",
    start: "Start test",
    resume: "Resume session",
    sentence: "Sentence",
    wordsPrompt: "Words repeated correctly",
    block: "Block",
    attempt: "Attempt",
    trial: "Sentence no.",
    phase: "Phase",
    level: "Level",
    training: "training",
    progress: "Block progress",
    srt: "Block SRT",
    export: "Export log",
    complete: "Session complete",
    failed: "Session failed",
    waiting: "Waiting for the patient's response...",
    language: "Português",
  },
};

let lang: Lang = "pt";
const t = (key: string): string => STRINGS[lang][key] ?? key;

const api = new ApiClient("");
const controller = new SessionController(api);

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: Array<Node | string>
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    node.setAttribute(k, v);
  }
  node.append(...children);
  return node;
}

function renderIntake(root: HTMLElement): void {
  const code = el("input", { id: "code", placeholder: "P001" });
  const age = el("input", { id: "age", type: "number", min: "0" });
  const notes = el("input", { id: "notes" });
  const condition = el("select", { id: "condition" });
  for (const name of ["SV0", "DV0", "SV90", "DV90"]) {
    condition.append(el("option", { value: name }, name));
  }
  const resume = el("input", { id: "resume", placeholder: "sess-..." });
  const start = el("button", { class: "primary" }, t("start"));
  start.onclick = () => {
    void controller
      .create({
        patient: {
          code: code.value || "anon",
          age: age.value ? Number(age.value) : null,
          notes: notes.value,
        },
        condition: condition.value,
      })
      .catch((err) => alert(String(err)));
  };
  const resumeBtn = el("button", {}, t("resume"));
  resumeBtn.onclick = () => {
    if (resume.value) {
      void controller.load(resume.value).catch((err) => alert(String(err)));
    }
  };
  root.append(
    el(
      "form",
      { class: "intake", onsubmit: "return false" },
      el("label", {}, t("patientCode"), code),
      el("label", {}, t("age"), age),
      el("label", {}, t("notes"), notes),
      el("label", {}, t("condition"), condition),
      start,
      el("span", { class: "sep" }, " "),
      el("label", {}, t("resume"), resume),
      resumeBtn,
    ),
  );
}

function renderChart(svg: SVGSVGElement, view: View): void {
  const state = view.state;
  if (state === null) return;
  const geometry = buildTrackGeometry(state, 720, 260);
  svg.setAttribute("viewBox", `0 0 ${geometry.width} ${geometry.height}`);
  const parts: string[] = [];
  for (const tick of geometry.yTicks) {
    parts.push(
      `<line x1="40" x2="${geometry.width - 8}" y1="${tick.y}" y2="${tick.y}" class="grid"/>`,
      `<text x="4" y="${tick.y + 4}" class="tick">${tick.label}</text>`,
    );
  }
  for (const line of geometry.srtLines) {
    parts.push(
      `<line x1="${line.fromX}" x2="${line.toX}" y1="${line.y}" y2="${line.y}" class="srt ${line.valid ? "" : "invalid"}"/>`,
      `<text x="${line.toX}" y="${line.y - 4}" class="srt-label">${line.srt.toFixed(1)}</text>`,
    );
  }
  for (const segment of geometry.segments) {
    const path = segment.points
      .map((p, i) => `${i === 0 ? "M" : "L"}${p.x.toFixed(1)},${p.y.toFixed(1)}`)
      .join(" ");
    parts.push(`<path d="${path}" class="track"/>`);
    for (const p of segment.points) {
      parts.push(
        `<circle cx="${p.x.toFixed(1)}" cy="${p.y.toFixed(1)}" r="3" class="pt ${p.isTraining ? "training" : ""}"/>`,
      );
    }
  }
  for (const marker of geometry.reversals) {
    parts.push(
      `<circle cx="${marker.x.toFixed(1)}" cy="${marker.y.toFixed(1)}" r="6" class="rev ${marker.kind}"/>`,
    );
  }
  svg.innerHTML = parts.join("");
}

function render(view: View): void {
  const root = document.getElementById("app");
  if (root === null) return;
  root.innerHTML = "";

  const header = el("div", { class: "header" }, el("h1", {}, t("title")));
  const langBtn = el("button", { class: "lang" }, t("language"));
  langBtn.onclick = () => {
    lang = lang === "pt" ? "en" : "pt";
    render(controller.getView());
  };
  header.append(langBtn);
  root.append(header);

  const state = view.state;
  if (state === null) {
    renderIntake(root);
    return;
  }

  const status = el(
    "div",
    { class: "status" },
    el("span", {}, `${t("block")} ${state.block}/${state.blocks}`),
    el("span", {}, `${t("attempt")} ${state.attempt}`),
    el("span", {}, `${t("phase")} ${state.phase}`),
    el(
      "span",
      {},
      `${t("progress")} ${state.scored_in_block}/${state.block_length}`,
    ),
    el("span", { class: "mono" }, state.session_id),
  );
  root.append(status);

  if (state.status === "running" && state.pending !== null) {
    const pending = state.pending;
    const panel = el(
      "div",
      { class: "trial" },
      el(
        "div",
        { class: "level" },
        `${t("level")}: ${pending.level.toFixed(1)} dB SPL (SNR ${pending.snr.toFixed(1)} dB)` +
          (pending.is_training ? ` [${t("training")}]` : ""),
      ),
      el("div", { class: "sentence" }, `${t("sentence")}: ${pending.text}`),
      el("div", { class: "prompt" }, t("wordsPrompt")),
    );
    const buttons = el("div", { class: "words" });
    for (let count = 0; count <= pending.words_total; count++) {
      const b = el("button", { class: "word" }, `${count}`);
      b.disabled = view.busy;
      b.onclick = () => void controller.scoreTrial(count);
      buttons.append(b);
    }
    panel.append(buttons);
    if (view.busy) {
      panel.append(el("div", { class: "busy" }, "..."));
    }
    root.append(panel);
  } else {
    const text = state.status === "failed"
      ? `${t("failed")}: ${state.fail_reason ?? ""}`
      : state.status === "complete"
        ? t("complete")
        : t("waiting");
    root.append(el("div", { class: "done" }, text));
  }

  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.classList.add("chart");
  renderChart(svg, view);
  root.append(svg);

  const srts = el("div", { class: "srts" });
  for (const result of state.block_srts) {
    srts.append(
      el(
        "span",
        { class: result.valid ? "srt-chip" : "srt-chip invalid" },
        `${t("srt")} ${result.block}: ` +
          (result.srt === null ? "-" : `${result.srt.toFixed(2)} dB SPL`),
      ),
    );
  }
  root.append(srts);

  const exportBtn = el("button", {}, t("export"));
  exportBtn.onclick = () => {
    void controller.exportLog().then((text) => {
      const blob = new Blob([text], { type: "application/x-ndjson" });
      const a = document.createElement("a");
      a.href = URL.createObjectURL(blob);
      a.download = `${state.session_id}.ndjson`;
      a.click();
    });
  };
  root.append(exportBtn);

  const notices = el("div", { class: "notices" });
  for (const notice of view.notices) {
    notices.append(el("div", { class: `notice ${notice.kind}` }, notice.text));
  }
  root.append(notices);
}

controller.subscribe(render);
