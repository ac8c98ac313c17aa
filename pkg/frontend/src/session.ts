/** DOM-free interactive session state machine.
 *
 * Keystrokes are coalesced through a trailing debounce so a burst of
 * typing produces a single feedback request. Every request carries a
 * sequence number; responses that arrive after a newer request has been
 * issued are dropped, so a slow prediction can never overwrite a newer
 * hypothesis.
 */

import { ApiClient, ValidationReport } from "./api.js";
import { debounce, Debounced } from "./debounce.js";

export type SessionPhase = "idle" | "ready" | "interacting" | "validated";

export interface SessionSnapshot {
  phase: SessionPhase;
  hypothesis: string;
  /** Characters at the start of the hypothesis already validated by the user. */
  validatedPrefixLength: number;
  sourcePreview: string;
  requestInFlight: boolean;
  report: ValidationReport | null;
}

export interface SessionOptions {
  debounceMs?: number;
  learn?: boolean;
  onChange?: (snapshot: SessionSnapshot) => void;
}

interface PendingCorrection {
  start: number; // caret position where typing began
  typed: string; // characters typed in this burst
  movedPointer: boolean;
}

export class InteractiveSession {
  private phase: SessionPhase = "idle";
  private sessionId = "";
  private sourcePreview = "";
  private hypothesis = "";
  private validatedPrefixLength = 0;
  private caret = 0;
  private pending: PendingCorrection | null = null;
  private report: ValidationReport | null = null;
  private sequence = 0;
  private applied = 0;
  private inFlight = 0;
  private readonly learn: boolean;
  private readonly onChange?: (snapshot: SessionSnapshot) => void;
  private readonly sendDebounced: Debounced<[]>;

  constructor(
    private readonly api: ApiClient,
    options: SessionOptions = {},
  ) {
    this.learn = options.learn ?? false;
    this.onChange = options.onChange;
    this.sendDebounced = debounce(() => {
      void this.sendPending();
    }, options.debounceMs ?? 400);
  }

  snapshot(): SessionSnapshot {
    return {
      phase: this.phase,
      hypothesis: this.hypothesis,
      validatedPrefixLength: this.validatedPrefixLength,
      sourcePreview: this.sourcePreview,
      requestInFlight: this.inFlight > 0,
      report: this.report,
    };
  }

  async open(taskId: string, sampleId: string): Promise<void> {
    await this.api.checkVersion();
    const session = await this.api.startSession(taskId, sampleId);
    this.sessionId = session.session_id;
    this.sourcePreview = session.source_preview;
    this.phase = "ready";
    this.emit();
  }

  /** Ask for the initial hypothesis (iteration one of the protocol). */
  async requestInitial(): Promise<string> {
    if (this.phase !== "ready") {
      throw new Error(`cannot predict in phase ${this.phase}`);
    }
    const seq = this.track();
    const prediction = await this.api.predict(this.sessionId);
    this.settle(seq, () => {
      this.hypothesis = prediction.hypothesis;
      this.validatedPrefixLength = 0;
      this.caret = 0;
      this.phase = "interacting";
    });
    return prediction.hypothesis;
  }

  /** The user placed the caret at `position` in the displayed hypothesis. */
  moveCaret(position: number): void {
    if (position < 0 || position > this.hypothesis.length) {
      throw new RangeError(`caret ${position} outside hypothesis`);
    }
    this.caret = position;
  }

  /** The user typed one character at the current caret. */
  keystroke(char: string): void {
    if (this.phase !== "interacting") {
      throw new Error(`cannot type in phase ${this.phase}`);
    }
    if (char.length !== 1) {
      throw new Error("keystroke expects a single character");
    }
    if (this.pending === null) {
      this.pending = {
        start: this.caret,
        typed: "",
        movedPointer: this.caret !== this.validatedPrefixLength,
      };
    }
    this.pending.typed += char;
    this.caret = this.pending.start + this.pending.typed.length;
    this.sendDebounced();
    this.emit();
  }

  /** Prefix the server must honour for the pending correction. */
  pendingPrefix(): string | null {
    if (this.pending === null) {
      return null;
    }
    return this.hypothesis.slice(0, this.pending.start) + this.pending.typed;
  }

  private async sendPending(): Promise<void> {
    const pending = this.pending;
    if (pending === null) {
      return;
    }
    this.pending = null;
    const prefix = this.hypothesis.slice(0, pending.start) + pending.typed;
    const seq = this.track();
    const prediction = await this.api.feedback(
      this.sessionId,
      prefix,
      pending.typed.length,
      pending.movedPointer,
    );
    this.settle(seq, () => {
      this.hypothesis = prediction.hypothesis;
      this.validatedPrefixLength = prefix.length;
      this.caret = prefix.length;
    });
  }

  /** Accept the hypothesis; flushes any pending correction first. */
  async validate(): Promise<ValidationReport> {
    if (this.sendDebounced.pending()) {
      this.sendDebounced.cancel();
      await this.sendPending();
    }
    const report = await this.api.validate(this.sessionId, this.learn);
    this.report = report;
    this.hypothesis = report.final_text;
    this.validatedPrefixLength = report.final_text.length;
    this.phase = "validated";
    this.emit();
    return report;
  }

  private track(): number {
    this.sequence += 1;
    this.inFlight += 1;
    this.emit();
    return this.sequence;
  }

  private settle(seq: number, apply: () => void): void {
    this.inFlight -= 1;
    if (seq > this.applied) {
      this.applied = seq;
      apply();
    }
    this.emit();
  }

  private emit(): void {
    this.onChange?.(this.snapshot());
  }
}
