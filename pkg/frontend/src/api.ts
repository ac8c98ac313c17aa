/** Typed wrapper over the prediction server's JSON schema.
 *
 * Every response carries `ok`; failures are `{ok: false, code, message}`
 * with HTTP 200, so errors are surfaced as `ApiError` with a stable code
 * rather than as transport failures.
 */

export const SUPPORTED_SCHEMA_VERSION = 1;

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface TaskInfo {
  id: string;
  name: string;
  modality: string;
}

export interface SessionInfo {
  session_id: string;
  source_preview: string;
}

export interface Prediction {
  hypothesis: string;
  spliced: boolean;
}

export interface ValidationReport {
  final_text: string;
  keystrokes: number;
  mouse_actions: number;
  iterations: number;
  ksmr: number;
}

export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

interface Envelope {
  ok: boolean;
  code?: string;
  message?: string;
  [key: string]: unknown;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, payload?: object): Promise<Envelope> {
    const init: RequestInit | undefined = payload
      ? {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify(payload),
        }
      : undefined;
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const body = (await response.json()) as Envelope;
    if (!body.ok) {
      throw new ApiError(body.code ?? "unknown", body.message ?? path);
    }
    return body;
  }

  /** Rejects when the server speaks a different schema version. */
  async checkVersion(): Promise<number> {
    const body = await this.request("/version");
    const version = body.schema_version as number;
    if (version !== SUPPORTED_SCHEMA_VERSION) {
      throw new ApiError(
        "unsupported_schema",
        `server schema ${version}, client supports ${SUPPORTED_SCHEMA_VERSION}`,
      );
    }
    return version;
  }

  async tasks(): Promise<TaskInfo[]> {
    const body = await this.request("/tasks");
    return body.tasks as TaskInfo[];
  }

  async startSession(taskId: string, sampleId: string): Promise<SessionInfo> {
    const body = await this.request("/session", { task_id: taskId, sample_id: sampleId });
    return { session_id: body.session_id as string, source_preview: body.source_preview as string };
  }

  async predict(sessionId: string): Promise<Prediction> {
    const body = await this.request("/predict", { session_id: sessionId });
    return { hypothesis: body.hypothesis as string, spliced: body.spliced as boolean };
  }

  async feedback(
    sessionId: string,
    prefix: string,
    typedLen: number,
    movedPointer: boolean,
  ): Promise<Prediction> {
    const body = await this.request("/feedback", {
      session_id: sessionId,
      prefix,
      typed_len: typedLen,
      moved_pointer: movedPointer,
    });
    return { hypothesis: body.hypothesis as string, spliced: body.spliced as boolean };
  }

  async validate(sessionId: string, learn: boolean): Promise<ValidationReport> {
    const body = await this.request("/validate", { session_id: sessionId, learn });
    return {
      final_text: body.final_text as string,
      keystrokes: body.keystrokes as number,
      mouse_actions: body.mouse_actions as number,
      iterations: body.iterations as number,
      ksmr: body.ksmr as number,
    };
  }

  mediaUrl(taskId: string, filename: string): string {
    return `${this.baseUrl}/media/${taskId}/${filename}`;
  }
}
