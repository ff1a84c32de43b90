/** DOM-free session state machine.
 *
 * Drives one assessor through the warmup block and then the main pool,
 * tracking only what the rendering layer needs: the current utterance,
 * the phase, progress counters, and the feedback from the last answer.
 * All persistence lives server-side, so a page refresh simply re-POSTs
 * the session with the same assessor name and resumes where it left off.
 */

import { ApiClient, type Emotion, type NextInfo, type SessionInfo } from "./api.js";

export type Phase = "idle" | "warmup" | "main" | "done";

export interface Feedback {
  utteranceId: string;
  own: Emotion;
  correct: Emotion | null; // null when the server had already recorded it
}

export interface AppState {
  phase: Phase;
  assessor: string;
  session: string;
  warmupSize: number;
  warmupDone: number;
  mainTotal: number;
  mainDone: number;
  current: string | null;
  currentIsWarmup: boolean;
  lastFeedback: Feedback | null;
}

function phaseOf(next: NextInfo): Phase {
  if (next.done) return "done";
  return next.is_warmup ? "warmup" : "main";
}

export class AnnotatorApp {
  private state: AppState = {
    phase: "idle",
    assessor: "",
    session: "",
    warmupSize: 0,
    warmupDone: 0,
    mainTotal: 0,
    mainDone: 0,
    current: null,
    currentIsWarmup: false,
    lastFeedback: null,
  };

  /** ids whose audio the UI has requested; answers are only accepted
   * for utterances that were actually presented for listening. */
  private audioRequested = new Set<string>();
  private submitting = false;

  constructor(private api: ApiClient) {}

  getState(): Readonly<AppState> {
    return this.state;
  }

  async start(assessor: string): Promise<AppState> {
    const trimmed = assessor.trim();
    if (!trimmed) throw new Error("assessor name must not be empty");
    const info: SessionInfo = await this.api.startSession(trimmed);
    this.state = {
      ...this.state,
      assessor: info.assessor,
      session: info.session,
      warmupSize: info.warmup_size,
      warmupDone: info.warmup_size - info.warmup_remaining,
      mainTotal: info.main_total,
      mainDone: 0,
      lastFeedback: null,
    };
    return this.advance();
  }

  /** Fetch the next utterance and update the phase. */
  private async advance(): Promise<AppState> {
    const next = await this.api.next(this.state.session);
    this.state = {
      ...this.state,
      phase: phaseOf(next),
      current: next.utterance_id,
      currentIsWarmup: next.is_warmup,
      warmupDone: this.state.warmupSize - next.warmup_remaining,
    };
    return this.state;
  }

  /** The UI must call this when it loads the clip into the player. */
  markAudioRequested(utteranceId: string): string {
    this.audioRequested.add(utteranceId);
    return this.api.audioUrl(utteranceId);
  }

  canAnswer(): boolean {
    return (
      !this.submitting &&
      this.state.current !== null &&
      this.audioRequested.has(this.state.current)
    );
  }

  /** Submit an answer for the current utterance and advance.
   * Re-entrant calls while a submission is in flight are ignored, so a
   * double click produces a single POST.
   */
  async answer(emotion: Emotion): Promise<AppState> {
    if (!this.canAnswer()) return this.state;
    const uid = this.state.current as string;
    this.submitting = true;
    try {
      const result = await this.api.submitLabel(this.state.session, uid, emotion);
      const wasWarmup = this.state.currentIsWarmup;
      this.state = {
        ...this.state,
        warmupDone: this.state.warmupDone + (wasWarmup ? 1 : 0),
        mainDone: this.state.mainDone + (wasWarmup ? 0 : 1),
        lastFeedback: {
          utteranceId: uid,
          own: emotion,
          correct: result ? result.correct_label : null,
        },
      };
      return await this.advance();
    } finally {
      this.submitting = false;
    }
  }
}
