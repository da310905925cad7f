/**
 * Chat sidebar state machine: one session, a transcript of turns, one
 * candidate card per driver per turn.
 *
 * Invariants enforced here rather than in the rendering layer:
 * - send is disabled while a request is pending or before a session exists
 * - errored candidates are visible but can never be selected
 * - at most one selected candidate per turn
 * - a transport failure raises a banner but preserves the transcript
 */

import {
  FanoutOutcome,
  GatewayClient,
  GatewayUnreachableError,
  Session,
} from "./api.js";

export interface CandidateCard {
  driverId: string;
  content: string | null;
  latencyMs: number | null;
  error: string | null;
}

export interface RenderedTurn {
  userText: string;
  cards: CandidateCard[];
  selectedDriver: string | null;
}

export interface ChatViewState {
  sessionId: string | null;
  turns: RenderedTurn[];
  pending: boolean;
  banner: string | null;
}

export function cardsFromOutcome(outcome: FanoutOutcome): CandidateCard[] {
  return Object.entries(outcome.results).map(([driverId, entry]) => {
    if ("response" in entry) {
      return {
        driverId,
        content: entry.response.content,
        latencyMs: entry.response.latency_ms,
        error: null,
      };
    }
    return { driverId, content: null, latencyMs: null, error: entry.error.message };
  });
}

function turnsFromSession(session: Session): RenderedTurn[] {
  return session.turns.map((turn) => ({
    userText: turn.user_text,
    cards: cardsFromOutcome(turn.candidates),
    selectedDriver: turn.selected_driver,
  }));
}

export class ChatPanel {
  private state: ChatViewState = {
    sessionId: null,
    turns: [],
    pending: false,
    banner: null,
  };

  constructor(
    private readonly client: GatewayClient,
    private readonly targets?: string[],
  ) {}

  getState(): ChatViewState {
    return {
      ...this.state,
      turns: this.state.turns.map((t) => ({ ...t, cards: [...t.cards] })),
    };
  }

  get canSend(): boolean {
    return this.state.sessionId !== null && !this.state.pending;
  }

  /** Open the panel: create a fresh gateway session. */
  async open(): Promise<void> {
    this.state.sessionId = await this.client.createSession();
    this.state.turns = [];
    this.state.banner = null;
  }

  /** Rebuild the transcript from the gateway's record of a session. */
  async replay(sessionId: string): Promise<void> {
    const session = await this.client.getSession(sessionId);
    this.state = {
      sessionId: session.session_id,
      turns: turnsFromSession(session),
      pending: false,
      banner: null,
    };
  }

  async send(text: string): Promise<RenderedTurn> {
    if (this.state.sessionId === null) throw new Error("panel not opened");
    if (this.state.pending) throw new Error("a request is already pending");
    this.state.pending = true;
    this.state.banner = null;
    try {
      const { candidates } = await this.client.postMessage(
        this.state.sessionId,
        text,
        this.targets,
      );
      const turn: RenderedTurn = {
        userText: text,
        cards: cardsFromOutcome(candidates),
        selectedDriver: null,
      };
      this.state.turns.push(turn);
      return turn;
    } catch (err) {
      if (err instanceof GatewayUnreachableError) {
        this.state.banner = err.message;
      }
      throw err;
    } finally {
      this.state.pending = false;
    }
  }

  isSelectable(turnIndex: number, driverId: string): boolean {
    const card = this.state.turns[turnIndex]?.cards.find(
      (c) => c.driverId === driverId,
    );
    return card !== undefined && card.error === null;
  }

  /** Pick the winning candidate for a turn; the gateway records it and the
   * reply joins the conversation history for later turns. */
  async select(turnIndex: number, driverId: string): Promise<void> {
    if (this.state.sessionId === null) throw new Error("panel not opened");
    if (!this.isSelectable(turnIndex, driverId)) {
      throw new Error(`candidate ${driverId} is not selectable`);
    }
    const session = await this.client.selectCandidate(
      this.state.sessionId,
      turnIndex,
      driverId,
    );
    this.state.turns = turnsFromSession(session);
  }
}
