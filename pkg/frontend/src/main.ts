/** DOM wiring for the annotation client. */

import { ApiClient, EMOTIONS, type Emotion } from "./api.js";
import { AnnotatorApp } from "./app.js";

const api = new ApiClient();
const app = new AnnotatorApp(api);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const loginForm = el<HTMLFormElement>("login-form");
const assessorInput = el<HTMLInputElement>("assessor");
const loginPanel = el<HTMLElement>("login");
const taskPanel = el<HTMLElement>("task");
const donePanel = el<HTMLElement>("done");
const player = el<HTMLAudioElement>("player");
const progress = el<HTMLElement>("progress");
const phaseBadge = el<HTMLElement>("phase-badge");
const feedbackPanel = el<HTMLElement>("feedback");
const errorPanel = el<HTMLElement>("error");
const buttonsRow = el<HTMLElement>("buttons");
const summary = el<HTMLElement>("summary");

const buttons = new Map<Emotion, HTMLButtonElement>();
EMOTIONS.forEach((emotion, i) => {
  const btn = document.createElement("button");
  btn.type = "button";
  btn.className = "emotion";
  btn.textContent = `${i + 1}. ${emotion}`;
  btn.addEventListener("click", () => void answer(emotion));
  buttonsRow.appendChild(btn);
  buttons.set(emotion, btn);
});

document.addEventListener("keydown", (ev) => {
  const idx = Number(ev.key) - 1;
  if (idx >= 0 && idx < EMOTIONS.length && !taskPanel.hidden) {
    void answer(EMOTIONS[idx]);
  }
});

function setButtonsEnabled(enabled: boolean): void {
  for (const btn of buttons.values()) btn.disabled = !enabled;
}

function showError(message: string): void {
  errorPanel.textContent = message;
  errorPanel.hidden = message === "";
}

let playbackStarted = false;

function render(): void {
  const s = app.getState();
  loginPanel.hidden = s.phase !== "idle";
  taskPanel.hidden = s.phase !== "warmup" && s.phase !== "main";
  donePanel.hidden = s.phase !== "done";

  if (s.phase === "warmup") {
    phaseBadge.textContent = `warmup ${Math.min(s.warmupDone + 1, s.warmupSize)}/${s.warmupSize}`;
    progress.textContent = "practice round: you will be told the correct label";
  } else if (s.phase === "main") {
    phaseBadge.textContent = "main";
    progress.textContent = `${s.mainDone} of ${s.mainTotal} answered`;
  }

  const fb = s.lastFeedback;
  if (fb) {
    feedbackPanel.hidden = false;
    if (fb.correct === null) {
      feedbackPanel.textContent = `"${fb.utteranceId}" was already recorded — skipping ahead.`;
      feedbackPanel.className = "feedback neutral";
    } else if (fb.correct === fb.own) {
      feedbackPanel.textContent = `Correct: it was ${fb.correct}.`;
      feedbackPanel.className = "feedback good";
    } else {
      feedbackPanel.textContent = `You said ${fb.own}; the agreed label was ${fb.correct}.`;
      feedbackPanel.className = "feedback bad";
    }
  } else {
    feedbackPanel.hidden = true;
  }

  if (s.current && (s.phase === "warmup" || s.phase === "main")) {
    playbackStarted = false;
    player.src = app.markAudioRequested(s.current);
    setButtonsEnabled(false); // enabled once playback starts
  }

  if (s.phase === "done") void renderSummary();
}

player.addEventListener("play", () => {
  playbackStarted = true;
  setButtonsEnabled(app.canAnswer());
});

async function renderSummary(): Promise<void> {
  const s = app.getState();
  try {
    const stats = await api.stats();
    const own = stats.per_assessor_accuracy[s.assessor];
    const ownText =
      own === undefined ? "" : ` Your accuracy: ${(own * 100).toFixed(1)}%.`;
    summary.textContent =
      `All done — thank you! You answered ${s.mainDone} main clips ` +
      `(plus ${s.warmupSize} warmup).${ownText}`;
  } catch {
    summary.textContent = "All done — thank you!";
  }
}

async function answer(emotion: Emotion): Promise<void> {
  if (!playbackStarted || !app.canAnswer()) return;
  setButtonsEnabled(false);
  showError("");
  try {
    await app.answer(emotion);
    render();
  } catch (err) {
    showError(err instanceof Error ? err.message : String(err));
    setButtonsEnabled(app.canAnswer());
  }
}

loginForm.addEventListener("submit", (ev) => {
  ev.preventDefault();
  showError("");
  void app
    .start(assessorInput.value)
    .then(() => render())
    .catch((err: unknown) =>
      showError(err instanceof Error ? err.message : String(err)),
    );
});

render();
