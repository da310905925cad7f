export { GatewayApiError, GatewayClient, GatewayUnreachableError } from "./api.js";
export type {
  CodeSelection,
  CommentResult,
  DriverInfo,
  FanoutOutcome,
  GatewayClientOptions,
  Session,
  SessionTurn,
} from "./api.js";
export { ChatPanel, cardsFromOutcome } from "./chatPanel.js";
export type { CandidateCard, ChatViewState, RenderedTurn } from "./chatPanel.js";
export { CommentCodeAction, insertComment } from "./commentAction.js";
export type { CommentPreview, EditorHost } from "./commentAction.js";
