/**
 * Typed client for the multimind gateway JSON API.
 *
 * This is the only network surface of the frontend: every AI interaction is
 * an HTTP call to the gateway, never to a provider directly.
 */

import { z } from "zod";

const responseSchema = z.object({
  driver_id: z.string(),
  content: z.string(),
  latency_ms: z.number(),
  finish_reason: z.string(),
  token_usage: z
    .object({ prompt: z.number(), completion: z.number() })
    .optional(),
});

const errorSchema = z.object({
  driver_id: z.string(),
  kind: z.string(),
  message: z.string(),
  retryable: z.boolean(),
});

const candidateSchema = z.union([
  z.object({ response: responseSchema }),
  z.object({ error: errorSchema }),
]);

export const fanoutOutcomeSchema = z.object({
  mode: z.string(),
  winner: z.string().nullable(),
  results: z.record(z.string(), candidateSchema),
});

export const turnSchema = z.object({
  user_text: z.string(),
  candidates: fanoutOutcomeSchema,
  selected_driver: z.string().nullable(),
  timestamp: z.number(),
});

export const sessionSchema = z.object({
  session_id: z.string(),
  created_at: z.number(),
  turns: z.array(turnSchema),
});

const traceEntrySchema = z
  .object({
    iteration: z.number(),
    task_id: z.string(),
    wall_ms: z.number(),
  })
  .passthrough();

export const commentResultSchema = z.object({
  status: z.enum(["accepted", "needs_manual_review", "failed"]),
  comment: z.string().nullable(),
  feedback: z.string().nullable(),
  annotated_file: z.string().nullable(),
  iterations: z.number(),
  trace: z.array(traceEntrySchema),
});

const driverSchema = z
  .object({
    id: z.string(),
    provider: z.string(),
    model: z.string(),
  })
  .passthrough();

const structuredErrorSchema = z.object({
  kind: z.string(),
  message: z.string(),
});

export type FanoutOutcome = z.infer<typeof fanoutOutcomeSchema>;
export type SessionTurn = z.infer<typeof turnSchema>;
export type Session = z.infer<typeof sessionSchema>;
export type CommentResult = z.infer<typeof commentResultSchema>;
export type DriverInfo = z.infer<typeof driverSchema>;

export interface CodeSelection {
  filePath: string;
  languageId: string;
  startLine: number;
  endLine: number;
  text: string;
}

/** The gateway answered with a structured error body. */
export class GatewayApiError extends Error {
  constructor(
    readonly status: number,
    readonly kind: string,
    message: string,
  ) {
    super(message);
    this.name = "GatewayApiError";
  }
}

/** The gateway could not be reached at all. */
export class GatewayUnreachableError extends Error {
  constructor(cause: unknown) {
    super(`engine unreachable: ${cause instanceof Error ? cause.message : cause}`);
    this.name = "GatewayUnreachableError";
  }
}

export interface GatewayClientOptions {
  baseUrl: string;
  token?: string;
  fetchImpl?: typeof fetch;
}

export class GatewayClient {
  private readonly baseUrl: string;
  private readonly token?: string;
  private readonly fetchImpl: typeof fetch;

  constructor(options: GatewayClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, "");
    this.token = options.token;
    this.fetchImpl = options.fetchImpl ?? fetch;
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const headers: Record<string, string> = { "content-type": "application/json" };
    if (this.token) headers["authorization"] = `Bearer ${this.token}`;
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (cause) {
      throw new GatewayUnreachableError(cause);
    }
    const payload: unknown = await response.json().catch(() => ({}));
    if (!response.ok) {
      const parsed = structuredErrorSchema.safeParse(payload);
      if (parsed.success) {
        throw new GatewayApiError(response.status, parsed.data.kind, parsed.data.message);
      }
      throw new GatewayApiError(response.status, "unknown", `HTTP ${response.status}`);
    }
    return payload;
  }

  async health(): Promise<boolean> {
    const data = await this.request("GET", "/v1/health");
    return z.object({ status: z.string() }).parse(data).status === "ok";
  }

  async listDrivers(): Promise<DriverInfo[]> {
    const data = await this.request("GET", "/v1/drivers");
    return z.object({ drivers: z.array(driverSchema) }).parse(data).drivers;
  }

  async createSession(): Promise<string> {
    const data = await this.request("POST", "/v1/chat/sessions");
    return z.object({ session_id: z.string() }).parse(data).session_id;
  }

  async getSession(sessionId: string): Promise<Session> {
    const data = await this.request("GET", `/v1/chat/sessions/${sessionId}`);
    return sessionSchema.parse(data);
  }

  async postMessage(
    sessionId: string,
    text: string,
    targets?: string[],
  ): Promise<{ turnIndex: number; candidates: FanoutOutcome }> {
    const data = await this.request("POST", `/v1/chat/sessions/${sessionId}/messages`, {
      text,
      ...(targets ? { targets } : {}),
    });
    const parsed = z
      .object({ turn_index: z.number(), candidates: fanoutOutcomeSchema })
      .parse(data);
    return { turnIndex: parsed.turn_index, candidates: parsed.candidates };
  }

  async selectCandidate(
    sessionId: string,
    turnIndex: number,
    driverId: string,
  ): Promise<Session> {
    const data = await this.request("POST", `/v1/chat/sessions/${sessionId}/select`, {
      turn_index: turnIndex,
      driver_id: driverId,
    });
    return sessionSchema.parse(data);
  }

  async commentAction(
    selection: CodeSelection,
    options: { workflow?: string; maxIterations?: number } = {},
  ): Promise<CommentResult> {
    const data = await this.request("POST", "/v1/actions/comment", {
      selection: {
        file_path: selection.filePath,
        language_id: selection.languageId,
        start_line: selection.startLine,
        end_line: selection.endLine,
        text: selection.text,
      },
      apply: false,
      ...(options.workflow ? { workflow: options.workflow } : {}),
      ...(options.maxIterations ? { max_iterations: options.maxIterations } : {}),
    });
    return commentResultSchema.parse(data);
  }
}
